//! Pair-selection policies for Copeland dueling bandits.
//!
//! [`Variant::Dts`] runs double Thompson sampling: a first candidate is
//! voted in by posterior samples from the set of arms whose optimistic
//! Copeland score is maximal, then an opponent is drawn from a second,
//! independent set of samples among arms not confidently beating it.
//! [`Variant::DtsPlus`] breaks first-candidate ties by estimated regret,
//! [`Variant::PureDts`] drops both confidence-bound eliminations, and
//! [`Variant::Random`] picks both arms uniformly.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::stats::{beta_sample, kl_bernoulli_clamped, pair_bounds, Alpha, StatsError, WinCountMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Dts,
    DtsPlus,
    PureDts,
    Random,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dts, Variant::DtsPlus, Variant::PureDts, Variant::Random];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dts => "dts",
            Variant::DtsPlus => "dts_plus",
            Variant::PureDts => "pure_dts",
            Variant::Random => "random",
        }
    }

    /// Stable small integer, used to derive per-variant rng streams.
    pub fn stable_id(self) -> u64 {
        match self {
            Variant::Dts => 0,
            Variant::DtsPlus => 1,
            Variant::PureDts => 2,
            Variant::Random => 3,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown policy variant `{0}` (expected one of: dts, dts_plus, pure_dts, random)")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dts" => Ok(Variant::Dts),
            "dts_plus" | "dts+" | "dtsplus" => Ok(Variant::DtsPlus),
            "pure_dts" | "puredts" => Ok(Variant::PureDts),
            "random" => Ok(Variant::Random),
            _ => Err(UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub alpha: Alpha,
    pub variant: Variant,
}

impl PolicyConfig {
    pub fn new(variant: Variant, alpha: f64) -> Result<Self, StatsError> {
        Ok(Self { alpha: Alpha::new(alpha)?, variant })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("self-comparison of arm {0} carries no outcome")]
    OutcomeForSelfComparison(usize),
    #[error("comparison ({0},{1}) needs an outcome")]
    MissingOutcome(usize, usize),
    #[error("winner {winner} is not part of pair ({first},{second})")]
    WinnerNotInPair { winner: usize, first: usize, second: usize },
    #[error("arm index {arm} out of range for {k} arms")]
    ArmOutOfRange { arm: usize, k: usize },
}

/// A `K x K` matrix of phase-1 posterior samples.
///
/// Only the upper triangle is drawn; `θ_ji = 1 - θ_ij` and the diagonal is 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix {
    k: usize,
    values: Vec<f64>,
}

impl ThetaMatrix {
    /// Builds a sample matrix from the strict upper triangle, row by row.
    pub fn from_upper(k: usize, upper: &[f64]) -> Self {
        assert_eq!(upper.len(), k * (k - 1) / 2, "upper triangle has wrong length");
        let mut values = vec![0.5; k * k];
        let mut it = upper.iter();
        for i in 0..k {
            for j in (i + 1)..k {
                let v = *it.next().expect("length checked");
                values[i * k + j] = v;
                values[j * k + i] = 1.0 - v;
            }
        }
        Self { k, values }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }
}

/// Regret-based tie-breaking scores derived from one phase-1 sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TieBreakScore {
    /// Sampled normalized Copeland score of each arm.
    pub zeta_tilde: Vec<f64>,
    pub zeta_tilde_star: f64,
    /// Row-major `K x K` estimated pair losses `ζ̃* - (ζ̃_i + ζ̃_j) / 2`.
    pub r_tilde: Vec<f64>,
    /// Per-arm estimated regret of being the first candidate.
    pub regret_estimate: Vec<f64>,
}

impl TieBreakScore {
    pub fn from_theta(theta: &ThetaMatrix) -> Self {
        let k = theta.k();
        let beats: Vec<usize> = (0..k)
            .map(|i| (0..k).filter(|&j| j != i && theta.get(i, j) > 0.5).count())
            .collect();
        let best = *beats.iter().max().expect("k >= 2");
        let denom = (k - 1) as f64;
        let zeta_tilde: Vec<f64> = beats.iter().map(|&b| b as f64 / denom).collect();
        let zeta_tilde_star = best as f64 / denom;
        let mut r_tilde = vec![0.0; k * k];
        let mut regret_estimate = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                let r = zeta_tilde_star - 0.5 * (zeta_tilde[i] + zeta_tilde[j]);
                r_tilde[i * k + j] = r;
                let th = theta.get(i, j);
                if j != i && th != 0.5 {
                    regret_estimate[i] += r / kl_bernoulli_clamped(th, 0.5);
                }
            }
        }
        Self { zeta_tilde, zeta_tilde_star, r_tilde, regret_estimate }
    }
}

/// Everything a decision was based on. Only collected when tracing is on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionTrace {
    /// Optimistic Copeland scores; `None` when no bounds were computed.
    pub zeta_hat: Option<Vec<f64>>,
    pub candidates: Vec<usize>,
    /// Sample-based vote count of each candidate, aligned with `candidates`.
    pub votes: Vec<usize>,
    pub theta1: Option<ThetaMatrix>,
    pub tie_set: Vec<usize>,
    pub tie_break: Option<TieBreakScore>,
    /// Phase-2 samples `θ_{i,first}`; entry `first` is 1/2.
    pub theta2: Vec<f64>,
    pub eligible: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDecision {
    pub first: usize,
    pub second: usize,
    pub trace: Option<Box<DecisionTrace>>,
}

impl PairDecision {
    pub fn pair(&self) -> (usize, usize) {
        (self.first, self.second)
    }

    pub fn is_self_comparison(&self) -> bool {
        self.first == self.second
    }
}

/// Optimistic Copeland scores `ζ̂_i = |{j != i : u_ij > 1/2}| / (K-1)` and the
/// set of arms attaining the maximum.
pub fn phase1_candidates(counts: &WinCountMatrix, alpha: Alpha, t: u64) -> (Vec<usize>, Vec<f64>) {
    let mut hits = Vec::new();
    let mut candidates = Vec::new();
    candidates_into(counts, alpha, ln_slot(t), &mut hits, &mut candidates);
    let denom = (counts.k() - 1) as f64;
    (candidates, hits.iter().map(|&h| h as f64 / denom).collect())
}

fn ln_slot(t: u64) -> f64 {
    (t.max(1) as f64).ln()
}

fn candidates_into(
    counts: &WinCountMatrix,
    alpha: Alpha,
    ln_t: f64,
    hits: &mut Vec<usize>,
    candidates: &mut Vec<usize>,
) {
    let k = counts.k();
    hits.clear();
    for i in 0..k {
        let mut h = 0;
        for j in 0..k {
            if j != i {
                let (u, _) = pair_bounds(counts.wins(i, j), counts.wins(j, i), alpha, ln_t);
                if u > 0.5 {
                    h += 1;
                }
            }
        }
        hits.push(h);
    }
    let best = *hits.iter().max().expect("k >= 2");
    candidates.clear();
    candidates.extend((0..k).filter(|&i| hits[i] == best));
}

/// Draws `θ_ij ~ Beta(B_ij + 1, B_ji + 1)` for every `i < j`, row by row.
pub fn sample_theta1<R: Rng + ?Sized>(rng: &mut R, counts: &WinCountMatrix) -> ThetaMatrix {
    let k = counts.k();
    let mut values = vec![0.5; k * k];
    fill_theta1(rng, counts, &mut values);
    ThetaMatrix { k, values }
}

fn fill_theta1<R: Rng + ?Sized>(rng: &mut R, counts: &WinCountMatrix, values: &mut [f64]) {
    let k = counts.k();
    for i in 0..k {
        values[i * k + i] = 0.5;
        for j in (i + 1)..k {
            let v = beta_sample(rng, counts.wins(i, j), counts.wins(j, i));
            values[i * k + j] = v;
            values[j * k + i] = 1.0 - v;
        }
    }
}

/// Majority vote over `candidates`: returns each candidate's number of
/// sampled wins and the candidates attaining the maximum.
pub fn count_votes(theta: &ThetaMatrix, candidates: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut votes = Vec::new();
    let mut ties = Vec::new();
    votes_into(&theta.values, theta.k, candidates, &mut votes, &mut ties);
    (votes, ties)
}

fn votes_into(theta: &[f64], k: usize, candidates: &[usize], votes: &mut Vec<usize>, ties: &mut Vec<usize>) {
    votes.clear();
    for &i in candidates {
        let row = &theta[i * k..(i + 1) * k];
        votes.push(row.iter().enumerate().filter(|&(j, &v)| j != i && v > 0.5).count());
    }
    let best = votes.iter().copied().max().expect("candidate set is nonempty");
    ties.clear();
    ties.extend(candidates.iter().zip(votes.iter()).filter(|(_, &v)| v == best).map(|(&i, _)| i));
}

fn pick_uniform<R: Rng + ?Sized>(rng: &mut R, set: &[usize]) -> usize {
    match set.len() {
        0 => panic!("cannot pick from an empty set"),
        1 => set[0],
        n => set[rng.random_range(0..n)],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Vote {
    pub first: usize,
    pub theta: ThetaMatrix,
    pub votes: Vec<usize>,
    pub tie_set: Vec<usize>,
}

/// Samples the phase-1 matrix and votes a first candidate out of
/// `candidates`, breaking ties uniformly at random.
pub fn phase1_vote<R: Rng + ?Sized>(rng: &mut R, counts: &WinCountMatrix, candidates: &[usize]) -> Phase1Vote {
    let theta = sample_theta1(rng, counts);
    let (votes, tie_set) = count_votes(&theta, candidates);
    let first = pick_uniform(rng, &tie_set);
    Phase1Vote { first, theta, votes, tie_set }
}

/// Picks the arm in `tie_set` with the smallest estimated regret; remaining
/// exact ties are broken uniformly at random. With a single tied arm no
/// score is computed and no randomness is consumed.
pub fn dts_plus_tiebreak<R: Rng + ?Sized>(
    rng: &mut R,
    tie_set: &[usize],
    theta: &ThetaMatrix,
) -> (usize, Option<TieBreakScore>) {
    if tie_set.len() == 1 {
        return (tie_set[0], None);
    }
    let score = TieBreakScore::from_theta(theta);
    let best = tie_set
        .iter()
        .map(|&i| score.regret_estimate[i])
        .fold(f64::INFINITY, f64::min);
    let residual: Vec<usize> = tie_set
        .iter()
        .copied()
        .filter(|&i| score.regret_estimate[i] == best)
        .collect();
    (pick_uniform(rng, &residual), Some(score))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Choice {
    pub second: usize,
    pub theta: Vec<f64>,
    pub eligible: Vec<usize>,
}

/// Draws fresh `θ_{i,first} ~ Beta(B_{i,first} + 1, B_{first,i} + 1)` for all
/// `i != first` and returns the argmax over arms with `l_{i,first} <= 1/2`
/// (over all arms when `eliminate` is false).
pub fn phase2_select<R: Rng + ?Sized>(
    rng: &mut R,
    counts: &WinCountMatrix,
    first: usize,
    alpha: Alpha,
    t: u64,
    eliminate: bool,
) -> Phase2Choice {
    let mut theta = vec![0.0; counts.k()];
    let mut eligible = Vec::new();
    let mut ties = Vec::new();
    let second = phase2_into(rng, counts, first, alpha, ln_slot(t), eliminate, &mut theta, &mut eligible, &mut ties);
    Phase2Choice { second, theta, eligible }
}

#[allow(clippy::too_many_arguments)]
fn phase2_into<R: Rng + ?Sized>(
    rng: &mut R,
    counts: &WinCountMatrix,
    first: usize,
    alpha: Alpha,
    ln_t: f64,
    eliminate: bool,
    theta: &mut [f64],
    eligible: &mut Vec<usize>,
    ties: &mut Vec<usize>,
) -> usize {
    let k = counts.k();
    for (i, slot) in theta.iter_mut().enumerate().take(k) {
        *slot = if i == first {
            0.5
        } else {
            beta_sample(rng, counts.wins(i, first), counts.wins(first, i))
        };
    }
    eligible.clear();
    for i in 0..k {
        let keep = !eliminate || i == first || {
            let (_, l) = pair_bounds(counts.wins(i, first), counts.wins(first, i), alpha, ln_t);
            l <= 0.5
        };
        if keep {
            eligible.push(i);
        }
    }
    let best = eligible.iter().map(|&i| theta[i]).fold(f64::NEG_INFINITY, f64::max);
    ties.clear();
    ties.extend(eligible.iter().copied().filter(|&i| theta[i] == best));
    pick_uniform(rng, ties)
}

/// Reusable buffers so the per-slot hot path does not allocate.
#[derive(Debug, Clone, Default)]
struct Scratch {
    hits: Vec<usize>,
    candidates: Vec<usize>,
    theta1: Vec<f64>,
    votes: Vec<usize>,
    tie_set: Vec<usize>,
    theta2: Vec<f64>,
    eligible: Vec<usize>,
    ties2: Vec<usize>,
}

/// One learner: win counts, a 1-based slot counter and a private rng stream.
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    counts: WinCountMatrix,
    t: u64,
    rng: ChaCha8Rng,
    trace: bool,
    scratch: Scratch,
}

impl Policy {
    pub fn new(k: usize, config: PolicyConfig, seed: u64) -> Self {
        Self::with_rng(k, config, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(k: usize, config: PolicyConfig, rng: ChaCha8Rng) -> Self {
        assert!(k >= 2, "need at least two arms");
        Self {
            config,
            counts: WinCountMatrix::new(k),
            t: 1,
            rng,
            trace: false,
            scratch: Scratch::default(),
        }
    }

    /// Starts from existing counts at slot `t` (1-based).
    pub fn from_counts(counts: WinCountMatrix, t: u64, config: PolicyConfig, rng: ChaCha8Rng) -> Self {
        let mut p = Self::with_rng(counts.k(), config, rng);
        p.counts = counts;
        p.t = t.max(1);
        p
    }

    pub fn set_trace(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.counts.k()
    }

    pub fn counts(&self) -> &WinCountMatrix {
        &self.counts
    }

    /// The slot the next decision will be made in.
    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn select_pair(&mut self) -> PairDecision {
        match self.config.variant {
            Variant::Random => self.select_random(),
            Variant::Dts | Variant::DtsPlus | Variant::PureDts => self.select_thompson(),
        }
    }

    fn select_random(&mut self) -> PairDecision {
        let k = self.k();
        let first = self.rng.random_range(0..k);
        let second = self.rng.random_range(0..k);
        let trace = self.trace.then(Box::<DecisionTrace>::default);
        PairDecision { first, second, trace }
    }

    fn select_thompson(&mut self) -> PairDecision {
        let k = self.k();
        let variant = self.config.variant;
        let alpha = self.config.alpha;
        let ln_t = ln_slot(self.t);
        let eliminate = variant != Variant::PureDts;
        let s = &mut self.scratch;

        if eliminate {
            candidates_into(&self.counts, alpha, ln_t, &mut s.hits, &mut s.candidates);
        } else {
            s.candidates.clear();
            s.candidates.extend(0..k);
        }

        s.theta1.resize(k * k, 0.5);
        fill_theta1(&mut self.rng, &self.counts, &mut s.theta1);
        votes_into(&s.theta1, k, &s.candidates, &mut s.votes, &mut s.tie_set);

        let mut tie_break = None;
        let first = if variant == Variant::DtsPlus && s.tie_set.len() > 1 {
            let theta = ThetaMatrix { k, values: s.theta1.clone() };
            let (first, score) = dts_plus_tiebreak(&mut self.rng, &s.tie_set, &theta);
            tie_break = score;
            first
        } else {
            pick_uniform(&mut self.rng, &s.tie_set)
        };

        s.theta2.resize(k, 0.5);
        let second = phase2_into(
            &mut self.rng,
            &self.counts,
            first,
            alpha,
            ln_t,
            eliminate,
            &mut s.theta2,
            &mut s.eligible,
            &mut s.ties2,
        );

        let trace = self.trace.then(|| {
            let denom = (k - 1) as f64;
            Box::new(DecisionTrace {
                zeta_hat: eliminate.then(|| s.hits.iter().map(|&h| h as f64 / denom).collect()),
                candidates: s.candidates.clone(),
                votes: s.votes.clone(),
                theta1: Some(ThetaMatrix { k, values: s.theta1.clone() }),
                tie_set: s.tie_set.clone(),
                tie_break,
                theta2: s.theta2.clone(),
                eligible: s.eligible.clone(),
            })
        });
        PairDecision { first, second, trace }
    }

    /// Feeds back the outcome of `decision` and advances the slot counter.
    ///
    /// `winner` must be `None` exactly when the decision is a
    /// self-comparison; self-comparisons leave the counts untouched.
    pub fn update(&mut self, decision: &PairDecision, winner: Option<usize>) -> Result<(), PolicyError> {
        let (first, second) = decision.pair();
        let k = self.k();
        for arm in [first, second] {
            if arm >= k {
                return Err(PolicyError::ArmOutOfRange { arm, k });
            }
        }
        match (first == second, winner) {
            (true, Some(_)) => return Err(PolicyError::OutcomeForSelfComparison(first)),
            (false, None) => return Err(PolicyError::MissingOutcome(first, second)),
            (true, None) => {}
            (false, Some(w)) => {
                let loser = if w == first {
                    second
                } else if w == second {
                    first
                } else {
                    return Err(PolicyError::WinnerNotInPair { winner: w, first, second });
                };
                self.observe(w, loser).expect("validated pair");
            }
        }
        self.advance();
        Ok(())
    }

    /// Records one comparison outcome without advancing time.
    pub fn observe(&mut self, winner: usize, loser: usize) -> Result<(), StatsError> {
        self.counts.record(winner, loser)
    }

    /// Advances the slot counter by one.
    pub fn advance(&mut self) {
        self.t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefmat::builtin_dataset;

    fn alpha() -> Alpha {
        Alpha::new(0.51).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("dts+".parse::<Variant>().unwrap(), Variant::DtsPlus);
        assert!("rucb".parse::<Variant>().is_err());
    }

    #[test]
    fn empty_counts_keep_every_arm() {
        let (c, zeta_hat) = phase1_candidates(&WinCountMatrix::new(4), alpha(), 1);
        assert_eq!(c, vec![0, 1, 2, 3]);
        assert!(zeta_hat.iter().all(|&z| z == 1.0));
    }

    #[test]
    fn converged_cyclic_counts_single_out_arm_one() {
        let m = builtin_dataset("cyclic").unwrap();
        let rows: Vec<Vec<u64>> = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| if i == j { 0 } else { (10_000.0 * m.get(i, j)).round() as u64 })
                    .collect()
            })
            .collect();
        let counts = WinCountMatrix::from_rows(&rows).unwrap();
        let (c, zeta_hat) = phase1_candidates(&counts, alpha(), 40_000);
        assert_eq!(c, vec![0]);
        assert_eq!(zeta_hat, vec![1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn shared_maximum_puts_both_arms_in_candidate_set() {
        // Arm 0 beats arm 1 decisively and arm 1 beats arm 2 decisively,
        // arm 2 beats arm 0 decisively: every arm keeps exactly one optimistic win.
        let counts = WinCountMatrix::from_rows(&[vec![0, 500, 0], vec![0, 0, 500], vec![500, 0, 0]]).unwrap();
        let (c, zeta_hat) = phase1_candidates(&counts, alpha(), 1500);
        assert_eq!(zeta_hat, vec![0.5, 0.5, 0.5]);
        assert_eq!(c, vec![0, 1, 2]);
    }

    #[test]
    fn voting_by_hand() {
        let theta = ThetaMatrix::from_upper(3, &[0.7, 0.8, 0.9]);
        let (votes, ties) = count_votes(&theta, &[0, 1, 2]);
        assert_eq!(votes, vec![2, 1, 0]);
        assert_eq!(ties, vec![0]);

        let cyclic = ThetaMatrix::from_upper(3, &[0.6, 0.4, 0.7]);
        let (votes, ties) = count_votes(&cyclic, &[0, 1, 2]);
        assert_eq!(votes, vec![1, 1, 1]);
        assert_eq!(ties, vec![0, 1, 2]);
    }

    #[test]
    fn singleton_candidate_always_wins_the_vote() {
        let mut r = rng(1);
        for _ in 0..50 {
            let v = phase1_vote(&mut r, &WinCountMatrix::new(4), &[2]);
            assert_eq!(v.first, 2);
            assert_eq!(v.tie_set, vec![2]);
        }
    }

    #[test]
    fn three_way_tie_is_uniform() {
        let theta = ThetaMatrix::from_upper(3, &[0.6, 0.4, 0.7]);
        let (_, ties) = count_votes(&theta, &[0, 1, 2]);
        let mut r = rng(5);
        let mut hist = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            hist[pick_uniform(&mut r, &ties)] += 1;
        }
        for h in hist {
            assert!((h as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02, "{hist:?}");
        }
    }

    #[test]
    fn dts_plus_worked_example() {
        // θ_12=.7, θ_13=.8, θ_14=.3, θ_23=.9, θ_24=.8, θ_34=.6 (1-based).
        let theta = ThetaMatrix::from_upper(4, &[0.7, 0.8, 0.3, 0.9, 0.8, 0.6]);
        let score = TieBreakScore::from_theta(&theta);
        assert_eq!(score.zeta_tilde, vec![2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(score.zeta_tilde_star, 2.0 / 3.0);
        // Values from an independent scalar evaluation, computed offline.
        assert!((score.regret_estimate[0] - 2.890_234_196_271_213).abs() < 1e-9);
        assert!((score.regret_estimate[1] - 1.317_520_972_739_094).abs() < 1e-9);
        let (first, _) = dts_plus_tiebreak(&mut rng(0), &[0, 1], &theta);
        assert_eq!(first, 1);
    }

    #[test]
    fn dts_plus_degenerate_scores_fall_back_to_uniform() {
        // A 3-cycle: every sampled score equal, so every r̃ and R̃ is zero.
        let theta = ThetaMatrix::from_upper(3, &[0.6, 0.4, 0.7]);
        let score = TieBreakScore::from_theta(&theta);
        assert!(score.regret_estimate.iter().all(|&r| r == 0.0));
        let mut r = rng(8);
        let mut hist = [0usize; 3];
        for _ in 0..3000 {
            hist[dts_plus_tiebreak(&mut r, &[0, 1, 2], &theta).0] += 1;
        }
        assert!(hist.iter().all(|&h| h > 800), "{hist:?}");
    }

    #[test]
    fn dts_plus_single_tie_needs_no_score() {
        let theta = ThetaMatrix::from_upper(3, &[0.6, 0.4, 0.7]);
        assert_eq!(dts_plus_tiebreak(&mut rng(0), &[2], &theta), (2, None));
    }

    #[test]
    fn phase2_prefers_self_when_all_samples_lose() {
        // Arm 0 has beaten everyone often, so every θ_{i,0} is tiny.
        let counts = WinCountMatrix::from_rows(&[vec![0, 200, 200], vec![0, 0, 0], vec![0, 0, 0]]).unwrap();
        let mut r = rng(2);
        for _ in 0..100 {
            let choice = phase2_select(&mut r, &counts, 0, alpha(), 401, true);
            assert_eq!(choice.second, 0);
            assert_eq!(choice.theta[0], 0.5);
        }
    }

    /// Arm 4 (0-based) beats arm 1 so clearly that `l_{4,1} > 1/2`.
    fn dominated_first_counts() -> WinCountMatrix {
        let mut rows = vec![vec![0u64; 5]; 5];
        rows[4][1] = 950;
        rows[1][4] = 50;
        rows[0][1] = 50;
        rows[1][0] = 50;
        WinCountMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn confident_superior_is_eliminated() {
        let counts = dominated_first_counts();
        let t = 1100;
        let (_, l) = pair_bounds(950, 50, alpha(), (t as f64).ln());
        assert!(l > 0.5);
        let mut r = rng(3);
        for _ in 0..200 {
            let choice = phase2_select(&mut r, &counts, 1, alpha(), t, true);
            assert!(!choice.eligible.contains(&4));
            assert_ne!(choice.second, 4);
        }
    }

    #[test]
    fn pure_variant_keeps_confident_superior() {
        let counts = dominated_first_counts();
        let mut r = rng(3);
        let picked = (0..200)
            .filter(|_| phase2_select(&mut r, &counts, 1, alpha(), 1100, false).second == 4)
            .count();
        // θ_{4,1} concentrates near 0.95, far above every other sample's typical value.
        assert!(picked > 150, "{picked}");
    }

    #[test]
    fn same_seed_same_decision() {
        let cfg = PolicyConfig::new(Variant::Dts, 0.51).unwrap();
        let a = Policy::new(5, cfg, 42).select_pair();
        let b = Policy::new(5, cfg, 42).select_pair();
        assert_eq!(a.pair(), b.pair());
    }

    #[test]
    fn update_contract() {
        let cfg = PolicyConfig::new(Variant::Dts, 0.51).unwrap();
        let mut p = Policy::new(4, cfg, 0);
        let d = |first, second| PairDecision { first, second, trace: None };

        p.update(&d(0, 1), Some(0)).unwrap();
        assert_eq!(p.counts().wins(0, 1), 1);
        p.update(&d(0, 1), Some(1)).unwrap();
        assert_eq!(p.counts().wins(1, 0), 1);
        p.update(&d(2, 2), None).unwrap();
        assert_eq!(p.counts().total(), 2);
        assert_eq!(p.slot(), 4);

        assert_eq!(p.update(&d(2, 2), Some(2)), Err(PolicyError::OutcomeForSelfComparison(2)));
        assert_eq!(p.update(&d(0, 1), None), Err(PolicyError::MissingOutcome(0, 1)));
        assert!(matches!(p.update(&d(0, 1), Some(3)), Err(PolicyError::WinnerNotInPair { .. })));
        assert_eq!(p.slot(), 4);
    }

    #[test]
    fn random_variant_computes_no_bounds() {
        let cfg = PolicyConfig::new(Variant::Random, 0.51).unwrap();
        let mut p = Policy::new(4, cfg, 0);
        p.set_trace(true);
        let trace = p.select_pair().trace.unwrap();
        assert!(trace.zeta_hat.is_none());
        assert!(trace.theta1.is_none());
        assert!(trace.candidates.is_empty());
    }

    #[test]
    fn pure_variant_skips_candidate_elimination() {
        let cfg = PolicyConfig::new(Variant::PureDts, 0.51).unwrap();
        let counts = dominated_first_counts();
        let mut p = Policy::from_counts(counts, 1100, cfg, rng(0));
        p.set_trace(true);
        let trace = p.select_pair().trace.unwrap();
        assert!(trace.zeta_hat.is_none());
        assert_eq!(trace.candidates, vec![0, 1, 2, 3, 4]);
        assert_eq!(trace.eligible, vec![0, 1, 2, 3, 4]);
    }
}
