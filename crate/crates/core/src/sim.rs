//! Simulated comparison environment and the episode loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::policy::Policy;
use crate::prefmat::{CopelandSummary, PreferenceMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("arm {0} cannot be compared against itself")]
    SelfComparison(usize),
    #[error("arm index {arm} out of range for {k} arms")]
    ArmOutOfRange { arm: usize, k: usize },
    #[error("feedback batch period must be at least 1")]
    ZeroDelay,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("no step records")]
    EmptyRecords,
    #[error("invalid regret grid `{0}` (expected N, log:N, lin:N or a comma list of slots)")]
    BadGrid(String),
}

/// Hidden ground truth plus the outcome-noise rng.
#[derive(Debug, Clone)]
pub struct Environment {
    matrix: PreferenceMatrix,
    summary: CopelandSummary,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(matrix: PreferenceMatrix, seed: u64) -> Self {
        Self::with_rng(matrix, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(matrix: PreferenceMatrix, rng: ChaCha8Rng) -> Self {
        let summary = matrix.copeland();
        Self { matrix, summary, rng }
    }

    pub fn k(&self) -> usize {
        self.matrix.k()
    }

    pub fn summary(&self) -> &CopelandSummary {
        &self.summary
    }

    pub fn matrix(&self) -> &PreferenceMatrix {
        &self.matrix
    }

    /// Returns `i` with probability `p_ij`, otherwise `j`. Consumes exactly
    /// one uniform draw.
    pub fn compare(&mut self, i: usize, j: usize) -> Result<usize, SimError> {
        let k = self.k();
        for arm in [i, j] {
            if arm >= k {
                return Err(SimError::ArmOutOfRange { arm, k });
            }
        }
        if i == j {
            return Err(SimError::SelfComparison(i));
        }
        let u: f64 = self.rng.random();
        Ok(if u < self.matrix.get(i, j) { i } else { j })
    }
}

/// Anything that can be driven through an episode.
pub trait DuelingPolicy {
    fn select(&mut self) -> (usize, usize);
    /// Records one outcome. Never called for self-comparisons.
    fn observe(&mut self, winner: usize, loser: usize);
    /// Moves to the next slot.
    fn advance(&mut self);
}

impl DuelingPolicy for Policy {
    fn select(&mut self) -> (usize, usize) {
        self.select_pair().pair()
    }

    fn observe(&mut self, winner: usize, loser: usize) {
        Policy::observe(self, winner, loser).expect("simulator only reports real comparisons");
    }

    fn advance(&mut self) {
        Policy::advance(self);
    }
}

/// Feedback batching period in slots. `d = 1` is immediate feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelaySpec(u64);

impl DelaySpec {
    pub const IMMEDIATE: DelaySpec = DelaySpec(1);

    pub fn new(d: u64) -> Result<Self, SimError> {
        if d == 0 {
            Err(SimError::ZeroDelay)
        } else {
            Ok(DelaySpec(d))
        }
    }

    pub fn period(self) -> u64 {
        self.0
    }
}

impl Default for DelaySpec {
    fn default() -> Self {
        Self::IMMEDIATE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub first: usize,
    pub second: usize,
    /// Winner of the comparison; `None` for self-comparisons.
    pub outcome: Option<usize>,
    pub instant_regret: f64,
    pub cum_regret: f64,
}

/// Runs `horizon` slots, handing every step to `sink` as it happens.
///
/// Each slot the policy picks a pair from its current (possibly stale)
/// counts. Outcomes are buffered and flushed into the policy in arrival
/// order at the end of every slot divisible by the batch period. Outcomes
/// still buffered after the last slot are dropped. Returns the final
/// cumulative regret.
pub fn run_episode_with<P, F>(
    env: &mut Environment,
    policy: &mut P,
    horizon: u64,
    delay: DelaySpec,
    mut sink: F,
) -> Result<f64, SimError>
where
    P: DuelingPolicy + ?Sized,
    F: FnMut(&StepRecord),
{
    if horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    let d = delay.period();
    let mut pending: Vec<(usize, usize)> = Vec::with_capacity(d.min(1 << 16) as usize);
    let mut cum = 0.0;
    for t in 1..=horizon {
        let (first, second) = policy.select();
        let outcome = if first == second {
            None
        } else {
            let w = env.compare(first, second)?;
            pending.push(if w == first { (first, second) } else { (second, first) });
            Some(w)
        };
        let instant = env.summary.regret_increment(first, second).map_err(|e| SimError::ArmOutOfRange {
            arm: e.arm,
            k: e.k,
        })?;
        cum += instant;
        policy.advance();
        if t % d == 0 {
            for (w, l) in pending.drain(..) {
                policy.observe(w, l);
            }
        }
        sink(&StepRecord { t, first, second, outcome, instant_regret: instant, cum_regret: cum });
    }
    Ok(cum)
}

/// Collects the full step log of one episode.
pub fn run_episode<P: DuelingPolicy + ?Sized>(
    env: &mut Environment,
    policy: &mut P,
    horizon: u64,
    delay: DelaySpec,
) -> Result<Vec<StepRecord>, SimError> {
    let mut records = Vec::with_capacity(horizon.min(1 << 24) as usize);
    run_episode_with(env, policy, horizon, delay, |r| records.push(*r))?;
    Ok(records)
}

/// Where cumulative regret gets sampled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridSpec {
    /// `points` log-spaced slots from 100 (or 1 for short horizons) to `T`.
    Log { points: usize },
    /// `points` evenly spaced slots ending at `T`.
    Linear { points: usize },
    /// Explicit slots; anything above `T` is dropped.
    Explicit(Vec<u64>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Log { points: 50 }
    }
}

impl std::str::FromStr for GridSpec {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimError::BadGrid(s.to_string());
        let count = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(bad);
        let s = s.trim();
        if let Some(n) = s.strip_prefix("log:") {
            Ok(GridSpec::Log { points: count(n)? })
        } else if let Some(n) = s.strip_prefix("lin:") {
            Ok(GridSpec::Linear { points: count(n)? })
        } else if s.contains(',') {
            let slots = s
                .split(',')
                .map(|v| v.trim().parse::<u64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(GridSpec::Explicit(slots))
        } else {
            Ok(GridSpec::Log { points: count(s)? })
        }
    }
}

impl GridSpec {
    /// Sorted, deduplicated slots. Always starts at 0 and ends at `horizon`.
    pub fn slots(&self, horizon: u64) -> Vec<u64> {
        let mut out = vec![0];
        match self {
            GridSpec::Log { points } => {
                let lo: f64 = if horizon >= 100 { 100.0 } else { 1.0 };
                let hi = horizon as f64;
                let n = *points;
                for i in 0..n {
                    let frac = if n == 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
                    out.push((lo * (hi / lo).powf(frac)).round() as u64);
                }
            }
            GridSpec::Linear { points } => {
                let n = *points as u64;
                out.extend((1..=n).map(|i| (horizon * i) / n));
            }
            GridSpec::Explicit(slots) => out.extend(slots.iter().copied()),
        }
        out.push(horizon);
        out.retain(|&t| t <= horizon);
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Samples cumulative regret on the grid. Slot 0 maps to 0.
pub fn cumulative_regret(records: &[StepRecord], grid: &GridSpec) -> Result<Vec<(u64, f64)>, SimError> {
    let last = records.last().ok_or(SimError::EmptyRecords)?;
    let slots = grid.slots(last.t);
    let mut out = Vec::with_capacity(slots.len());
    for t in slots {
        let value = if t == 0 {
            0.0
        } else {
            // Records are one per slot starting at t = 1.
            records[(t - 1) as usize].cum_regret
        };
        out.push((t, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{PolicyConfig, Variant};
    use crate::prefmat::builtin_dataset;

    struct Fixed(usize, usize);

    impl DuelingPolicy for Fixed {
        fn select(&mut self) -> (usize, usize) {
            (self.0, self.1)
        }
        fn observe(&mut self, _: usize, _: usize) {}
        fn advance(&mut self) {}
    }

    fn cyclic_env(seed: u64) -> Environment {
        Environment::new(builtin_dataset("cyclic").unwrap(), seed)
    }

    #[test]
    fn certain_preference_always_wins() {
        let m = crate::prefmat::PreferenceMatrix::new("sure", &[vec![0.5, 1.0], vec![0.0, 0.5]]).unwrap();
        let mut env = Environment::new(m, 0);
        assert!((0..1000).all(|_| env.compare(0, 1).unwrap() == 0));
        assert!((0..1000).all(|_| env.compare(1, 0).unwrap() == 0));
    }

    #[test]
    fn comparison_frequency_tracks_matrix() {
        let mut env = cyclic_env(11);
        let n = 100_000;
        let wins = (0..n).filter(|_| env.compare(1, 2).unwrap() == 1).count();
        assert!((wins as f64 / n as f64 - 0.9).abs() < 0.005);
    }

    #[test]
    fn comparison_errors() {
        let mut env = cyclic_env(0);
        assert_eq!(env.compare(2, 2), Err(SimError::SelfComparison(2)));
        assert_eq!(env.compare(0, 9), Err(SimError::ArmOutOfRange { arm: 9, k: 4 }));
    }

    #[test]
    fn outcome_stream_is_seeded() {
        let a: Vec<usize> = {
            let mut e = cyclic_env(4);
            (0..100).map(|_| e.compare(0, 3).unwrap()).collect()
        };
        let mut e = cyclic_env(4);
        let b: Vec<usize> = (0..100).map(|_| e.compare(0, 3).unwrap()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn winner_against_itself_has_no_regret() {
        let recs = run_episode(&mut cyclic_env(0), &mut Fixed(0, 0), 500, DelaySpec::IMMEDIATE).unwrap();
        assert_eq!(recs.last().unwrap().cum_regret, 0.0);
        assert!(recs.iter().all(|r| r.outcome.is_none()));
    }

    #[test]
    fn self_comparisons_consume_no_environment_randomness() {
        let mut env = cyclic_env(21);
        run_episode(&mut env, &mut Fixed(2, 2), 100, DelaySpec::IMMEDIATE).unwrap();
        let after: Vec<usize> = (0..20).map(|_| env.compare(0, 1).unwrap()).collect();
        let mut fresh = cyclic_env(21);
        let expect: Vec<usize> = (0..20).map(|_| fresh.compare(0, 1).unwrap()).collect();
        assert_eq!(after, expect);
    }

    #[test]
    fn delay_one_matches_immediate_updates() {
        let cfg = PolicyConfig::new(Variant::Dts, 0.51).unwrap();
        let horizon = 2000;
        let batched = run_episode(&mut cyclic_env(5), &mut Policy::new(4, cfg, 6), horizon, DelaySpec::new(1).unwrap())
            .unwrap();

        let mut env = cyclic_env(5);
        let mut policy = Policy::new(4, cfg, 6);
        let summary = env.summary().clone();
        let mut cum = 0.0;
        let mut direct = Vec::new();
        for t in 1..=horizon {
            let d = policy.select_pair();
            let outcome = (!d.is_self_comparison()).then(|| env.compare(d.first, d.second).unwrap());
            policy.update(&d, outcome).unwrap();
            let r = summary.regret_increment(d.first, d.second).unwrap();
            cum += r;
            direct.push(StepRecord { t, first: d.first, second: d.second, outcome, instant_regret: r, cum_regret: cum });
        }
        assert_eq!(batched, direct);
    }

    /// Exposes counts after every slot so the batching can be observed.
    struct Probe {
        inner: Policy,
        totals: Vec<u64>,
    }

    impl DuelingPolicy for Probe {
        fn select(&mut self) -> (usize, usize) {
            self.totals.push(self.inner.counts().total());
            DuelingPolicy::select(&mut self.inner)
        }
        fn observe(&mut self, w: usize, l: usize) {
            DuelingPolicy::observe(&mut self.inner, w, l)
        }
        fn advance(&mut self) {
            DuelingPolicy::advance(&mut self.inner)
        }
    }

    #[test]
    fn batched_feedback_is_constant_between_flushes() {
        let cfg = PolicyConfig::new(Variant::Dts, 0.51).unwrap();
        let mut probe = Probe { inner: Policy::new(4, cfg, 1), totals: Vec::new() };
        let d = 7;
        let horizon = 100;
        let recs = run_episode(&mut cyclic_env(2), &mut probe, horizon, DelaySpec::new(d).unwrap()).unwrap();
        for (idx, &total) in probe.totals.iter().enumerate() {
            let t = idx as u64 + 1;
            // Counts seen at slot t include every real comparison up to the last flush.
            let flushed = ((t - 1) / d) * d;
            let expect = recs[..flushed as usize].iter().filter(|r| r.outcome.is_some()).count() as u64;
            assert_eq!(total, expect, "slot {t}");
        }
        let committed = (horizon / d) * d;
        let expect = recs[..committed as usize].iter().filter(|r| r.outcome.is_some()).count() as u64;
        assert_eq!(probe.inner.counts().total(), expect);
        assert_eq!(probe.inner.slot(), horizon + 1);
    }

    #[test]
    fn zero_delay_and_horizon_are_rejected() {
        assert_eq!(DelaySpec::new(0), Err(SimError::ZeroDelay));
        assert_eq!(
            run_episode(&mut cyclic_env(0), &mut Fixed(0, 0), 0, DelaySpec::IMMEDIATE),
            Err(SimError::ZeroHorizon)
        );
    }

    #[test]
    fn regret_series_arithmetic() {
        let recs = run_episode(&mut cyclic_env(0), &mut Fixed(1, 2), 300, DelaySpec::IMMEDIATE).unwrap();
        let series = cumulative_regret(&recs, &GridSpec::default()).unwrap();
        let &(t_last, v_last) = series.last().unwrap();
        assert_eq!(t_last, 300);
        assert!((v_last - 200.0).abs() < 1e-9);
        assert!(series.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));

        let zero = run_episode(&mut cyclic_env(0), &mut Fixed(0, 0), 50, DelaySpec::IMMEDIATE).unwrap();
        assert!(cumulative_regret(&zero, &GridSpec::default()).unwrap().iter().all(|&(_, v)| v == 0.0));
        assert_eq!(cumulative_regret(&[], &GridSpec::default()), Err(SimError::EmptyRecords));
    }

    #[test]
    fn grid_shapes() {
        let g = GridSpec::default().slots(100_000);
        assert_eq!(g.first(), Some(&0));
        assert_eq!(g[1], 100);
        assert_eq!(g.last(), Some(&100_000));
        assert_eq!(g.len(), 51);
        assert_eq!(GridSpec::Linear { points: 4 }.slots(100), vec![0, 25, 50, 75, 100]);
        assert_eq!(GridSpec::Explicit(vec![10, 5000, 20]).slots(1000), vec![0, 10, 20, 1000]);
        assert_eq!(GridSpec::Log { points: 3 }.slots(10), vec![0, 1, 3, 10]);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!("20".parse::<GridSpec>().unwrap(), GridSpec::Log { points: 20 });
        assert_eq!("lin:5".parse::<GridSpec>().unwrap(), GridSpec::Linear { points: 5 });
        assert_eq!("10,100".parse::<GridSpec>().unwrap(), GridSpec::Explicit(vec![10, 100]));
        assert!("log:0".parse::<GridSpec>().is_err());
        assert!("abc".parse::<GridSpec>().is_err());
    }
}
