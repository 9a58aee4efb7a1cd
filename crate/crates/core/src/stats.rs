//! Win counts, relative confidence bounds, Beta posterior draws and the
//! Bernoulli KL divergence.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("alpha must be a finite number greater than 0.5, got {0}")]
    InvalidAlpha(f64),
    #[error("time slot must be at least 1")]
    ZeroSlot,
    #[error("arm {arm} cannot be compared against itself")]
    SelfComparison { arm: usize },
    #[error("arm index {arm} out of range for {k} arms")]
    ArmOutOfRange { arm: usize, k: usize },
    #[error("KL divergence needs p in [0,1] and q in (0,1), got p={p}, q={q}")]
    KlDomain { p: f64, q: f64 },
}

/// Confidence-radius scale factor. Always finite and strictly above 0.5.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self, StatsError> {
        if value.is_finite() && value > 0.5 {
            Ok(Alpha(value))
        } else {
            Err(StatsError::InvalidAlpha(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha(0.51)
    }
}

/// `b[i][j]` = number of recorded comparisons in which arm `i` beat arm `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinCountMatrix {
    k: usize,
    b: Vec<u64>,
    total: u64,
}

impl WinCountMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, b: vec![0; k * k], total: 0 }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn wins(&self, i: usize, j: usize) -> u64 {
        self.b[i * self.k + j]
    }

    /// `N_ij = b[i][j] + b[j][i]`.
    #[inline]
    pub fn comparisons(&self, i: usize, j: usize) -> u64 {
        self.wins(i, j) + self.wins(j, i)
    }

    /// Number of outcomes recorded so far.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Empirical `p̂_ij`, or `None` before the pair has been compared.
    pub fn empirical_mean(&self, i: usize, j: usize) -> Option<f64> {
        let n = self.comparisons(i, j);
        (n > 0).then(|| self.wins(i, j) as f64 / n as f64)
    }

    pub fn record(&mut self, winner: usize, loser: usize) -> Result<(), StatsError> {
        for arm in [winner, loser] {
            if arm >= self.k {
                return Err(StatsError::ArmOutOfRange { arm, k: self.k });
            }
        }
        if winner == loser {
            return Err(StatsError::SelfComparison { arm: winner });
        }
        self.b[winner * self.k + loser] += 1;
        self.total += 1;
        Ok(())
    }

    /// Builds a matrix from explicit counts. Diagonal entries must be zero.
    pub fn from_rows(rows: &[Vec<u64>]) -> Option<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return None;
        }
        if (0..k).any(|i| rows[i][i] != 0) {
            return None;
        }
        let b: Vec<u64> = rows.iter().flatten().copied().collect();
        let total = b.iter().sum();
        Some(Self { k, b, total })
    }
}

/// Relative upper/lower confidence bounds for a single ordered pair.
///
/// `u = B_ij/N + sqrt(α ln t / N)`, `l = B_ij/N - sqrt(α ln t / N)` with
/// `N = B_ij + B_ji`. With `N = 0` the bounds are `(+∞, -∞)`.
/// Bounds are deliberately left unclamped.
#[inline]
pub fn pair_bounds(wins_for: u64, wins_against: u64, alpha: Alpha, ln_t: f64) -> (f64, f64) {
    let n = wins_for + wins_against;
    if n == 0 {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let n = n as f64;
    let mean = wins_for as f64 / n;
    let radius = (alpha.get() * ln_t / n).sqrt();
    (mean + radius, mean - radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBounds {
    k: usize,
    upper: Vec<f64>,
    lower: Vec<f64>,
    pub alpha: Alpha,
    pub t: u64,
}

impl ConfidenceBounds {
    pub fn compute(counts: &WinCountMatrix, alpha: Alpha, t: u64) -> Result<Self, StatsError> {
        if t == 0 {
            return Err(StatsError::ZeroSlot);
        }
        let k = counts.k();
        let ln_t = (t as f64).ln();
        let mut upper = vec![0.5; k * k];
        let mut lower = vec![0.5; k * k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let (u, l) = pair_bounds(counts.wins(i, j), counts.wins(j, i), alpha, ln_t);
                    upper[i * k + j] = u;
                    lower[i * k + j] = l;
                }
            }
        }
        Ok(Self { k, upper, lower, alpha, t })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.upper[i * self.k + j]
    }

    #[inline]
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.k + j]
    }
}

/// One draw from `Beta(wins_for + 1, wins_against + 1)` as `X / (X + Y)` with
/// `X ~ Gamma(wins_for + 1)`, `Y ~ Gamma(wins_against + 1)`.
pub fn beta_sample<R: Rng + ?Sized>(rng: &mut R, wins_for: u64, wins_against: u64) -> f64 {
    let x = gamma_draw(rng, wins_for as f64 + 1.0);
    let y = gamma_draw(rng, wins_against as f64 + 1.0);
    let s = x + y;
    if s > 0.0 {
        x / s
    } else {
        0.5
    }
}

#[inline]
fn gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    Gamma::new(shape, 1.0).expect("shape >= 1").sample(rng)
}

/// Bernoulli KL divergence `D(p || q)` in nats, with `0 log 0 = 0`.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&p) || !(q > 0.0 && q < 1.0) {
        return Err(StatsError::KlDomain { p, q });
    }
    Ok(kl_unchecked(p, q))
}

fn kl_unchecked(p: f64, q: f64) -> f64 {
    let a = if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    let b = if p < 1.0 { (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln() } else { 0.0 };
    (a + b).max(0.0)
}

const KL_CLAMP: f64 = 1e-12;

/// KL divergence with both arguments clamped to `[1e-12, 1 - 1e-12]`.
/// Used on posterior samples, which may round to exactly 0 or 1.
pub fn kl_bernoulli_clamped(p: f64, q: f64) -> f64 {
    kl_unchecked(p.clamp(KL_CLAMP, 1.0 - KL_CLAMP), q.clamp(KL_CLAMP, 1.0 - KL_CLAMP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const A051: f64 = 0.51;

    fn alpha(a: f64) -> Alpha {
        Alpha::new(a).unwrap()
    }

    #[test]
    fn alpha_must_exceed_half() {
        assert!(Alpha::new(0.5).is_err());
        assert!(Alpha::new(f64::NAN).is_err());
        assert!(Alpha::new(f64::INFINITY).is_err());
        assert_eq!(Alpha::new(0.51).unwrap().get(), 0.51);
    }

    #[test]
    fn record_increments_single_entry() {
        let mut b = WinCountMatrix::new(3);
        b.record(0, 1).unwrap();
        assert_eq!(b.wins(0, 1), 1);
        assert_eq!(b.total(), 1);
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (0, 1) {
                    assert_eq!(b.wins(i, j), 0);
                }
            }
        }
    }

    #[test]
    fn empirical_mean_after_mixed_outcomes() {
        let mut b = WinCountMatrix::new(2);
        for _ in 0..3 {
            b.record(0, 1).unwrap();
        }
        b.record(1, 0).unwrap();
        assert_eq!(b.comparisons(0, 1), 4);
        assert_eq!(b.empirical_mean(0, 1), Some(0.75));
        assert_eq!(b.empirical_mean(1, 1), None);
    }

    #[test]
    fn self_comparison_is_rejected() {
        let mut b = WinCountMatrix::new(2);
        assert_eq!(b.record(0, 0), Err(StatsError::SelfComparison { arm: 0 }));
        assert_eq!(b.record(0, 2), Err(StatsError::ArmOutOfRange { arm: 2, k: 2 }));
        assert_eq!(b.total(), 0);
    }

    #[test]
    fn bounds_worked_examples() {
        // Natural-log evaluation of the bound formula, computed offline.
        let (u, l) = pair_bounds(3, 1, alpha(A051), 100f64.ln());
        assert!((u - 1.516_263_139_341_494).abs() < 1e-12, "{u}");
        assert!((l + 0.016_263_139_341_494).abs() < 1e-12, "{l}");

        let (u, l) = pair_bounds(50, 50, alpha(A051), 1000f64.ln());
        assert!((u - 0.687_695_370_008_983).abs() < 1e-12);
        assert!((l - 0.312_304_629_991_017).abs() < 1e-12);

        assert_eq!(pair_bounds(0, 0, alpha(A051), 1f64.ln()), (f64::INFINITY, f64::NEG_INFINITY));
    }

    #[test]
    fn bound_matrix_diagonal_and_zero_slot() {
        let mut b = WinCountMatrix::new(3);
        b.record(0, 1).unwrap();
        let cb = ConfidenceBounds::compute(&b, alpha(A051), 10).unwrap();
        for i in 0..3 {
            assert_eq!(cb.upper(i, i), 0.5);
            assert_eq!(cb.lower(i, i), 0.5);
        }
        assert_eq!(cb.upper(0, 2), f64::INFINITY);
        assert!((cb.upper(0, 1) + cb.lower(1, 0) - 1.0).abs() < 1e-12);
        assert_eq!(ConfidenceBounds::compute(&b, alpha(A051), 0), Err(StatsError::ZeroSlot));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_bernoulli(0.5, 0.5).unwrap(), 0.0);
        assert!((kl_bernoulli(0.75, 0.5).unwrap() - 0.130_812_035_941_137).abs() < 1e-12);
        assert!((kl_bernoulli(1.0, 0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((kl_bernoulli(0.0, 0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(kl_bernoulli(0.3, 0.0).is_err());
        assert!(kl_bernoulli(0.3, 1.0).is_err());
        assert!(kl_bernoulli(1.1, 0.5).is_err());
    }

    #[test]
    fn clamped_kl_is_finite_at_the_edges() {
        let d = kl_bernoulli_clamped(1.0, 0.5);
        assert!(d.is_finite() && (d - std::f64::consts::LN_2).abs() < 1e-9);
        assert!(kl_bernoulli_clamped(0.0, 0.0).is_finite());
    }

    #[test]
    fn beta_sample_is_seed_deterministic() {
        let a = beta_sample(&mut ChaCha8Rng::seed_from_u64(9), 3, 1);
        let b = beta_sample(&mut ChaCha8Rng::seed_from_u64(9), 3, 1);
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn beta_sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let uniform: f64 = (0..n).map(|_| beta_sample(&mut rng, 0, 0)).sum::<f64>() / n as f64;
        assert!((uniform - 0.5).abs() < 0.005, "{uniform}");
        let skewed: f64 = (0..n).map(|_| beta_sample(&mut rng, 3, 1)).sum::<f64>() / n as f64;
        assert!((skewed - 4.0 / 6.0).abs() < 0.005, "{skewed}");
    }
}
