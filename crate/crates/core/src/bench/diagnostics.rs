//! Empirical checks run on top of experiments: convergence to the winners,
//! winner diversity, delayed feedback, regret growth and the concentration
//! of the relative confidence bounds.

use std::fmt;

use rayon::prelude::*;

use super::{
    aggregate, env_rng, policy_rng, report, run_experiment, run_seed, stream_rng, with_pool, AggregateResult,
    BenchError, ExperimentConfig, RunOutcome, TailStats, SHUFFLE_STREAM,
};
use crate::policy::{Policy, PolicyConfig, Variant};
use crate::prefmat::{ArmPermutation, CopelandSummary, PreferenceMatrix};
use crate::sim::{DelaySpec, Environment, GridSpec, StepRecord};
use crate::stats::{pair_bounds, Alpha};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtLeast,
    AtMost,
    Below,
    Above,
}

impl Relation {
    fn holds(self, measured: f64, threshold: f64) -> bool {
        match self {
            Relation::AtLeast => measured >= threshold,
            Relation::AtMost => measured <= threshold,
            Relation::Below => measured < threshold,
            Relation::Above => measured > threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtLeast => ">=",
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::Above => ">",
        }
    }
}

/// One pass/fail line of a diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub threshold: f64,
    /// The threshold carries no information (e.g. a probability bound >= 1).
    pub vacuous: bool,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, measured: f64, relation: Relation, threshold: f64) -> Self {
        Self { name: name.into(), measured, relation, threshold, vacuous: false }
    }

    pub fn passed(&self) -> bool {
        self.relation.holds(self.measured, self.threshold)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.passed(), self.vacuous) {
            (true, true) => "PASS (vacuous)",
            (true, false) => "PASS",
            (false, _) => "FAIL",
        };
        write!(
            f,
            "[{status}] {}: measured {} {} {}",
            self.name,
            report::format_float(self.measured),
            self.relation.symbol(),
            report::format_float(self.threshold)
        )
    }
}

/// Self-comparison distribution over arms, per run and averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityProfile {
    /// Normalized histogram per run; `None` for runs without self-comparisons.
    pub per_run: Vec<Option<Vec<f64>>>,
    /// Mean of the per-run shares over runs that had any self-comparison.
    pub mean_share: Vec<f64>,
    /// `(arm, mean share)` for every Copeland winner.
    pub winner_shares: Vec<(usize, f64)>,
    /// No run compared any arm with itself.
    pub empty: bool,
}

impl DiversityProfile {
    pub fn from_histograms(hists: &[Vec<u64>], summary: &CopelandSummary) -> Self {
        let k = summary.k();
        let per_run: Vec<Option<Vec<f64>>> = hists
            .iter()
            .map(|h| {
                let total: u64 = h.iter().sum();
                (total > 0).then(|| h.iter().map(|&c| c as f64 / total as f64).collect())
            })
            .collect();
        let present = per_run.iter().flatten().count();
        let mut mean_share = vec![0.0; k];
        for shares in per_run.iter().flatten() {
            for (m, s) in mean_share.iter_mut().zip(shares) {
                *m += s;
            }
        }
        if present > 0 {
            for m in &mut mean_share {
                *m /= present as f64;
            }
        }
        let winner_shares = summary.winners.iter().map(|&w| (w, mean_share[w])).collect();
        Self { per_run, mean_share, winner_shares, empty: present == 0 }
    }
}

/// Builds the profile from full step logs (arms in the summary's labels).
pub fn diversity_profile(logs: &[Vec<StepRecord>], summary: &CopelandSummary) -> DiversityProfile {
    let hists: Vec<Vec<u64>> = logs
        .iter()
        .map(|log| {
            let mut h = vec![0u64; summary.k()];
            for r in log.iter().filter(|r| r.first == r.second) {
                h[r.first] += 1;
            }
            h
        })
        .collect();
    DiversityProfile::from_histograms(&hists, summary)
}

/// `[ln t / ln(α + 1/2) + 1] · t^(-2α / (α + 1/2))`, the bound on
/// `P(p_ij >= u_ij(t))` and on `P(p_ij <= l_ij(t))`.
pub fn concentration_bound(alpha: Alpha, t: u64) -> f64 {
    let a = alpha.get();
    let t = t as f64;
    (t.ln() / (a + 0.5).ln() + 1.0) * t.powf(-2.0 * a / (a + 0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationRow {
    pub t: u64,
    /// (run, ordered pair) observations with `N_ij > 0`.
    pub samples: u64,
    pub upper_violations: u64,
    pub lower_violations: u64,
    pub upper_freq: f64,
    pub lower_freq: f64,
    pub bound: f64,
}

impl ConcentrationRow {
    pub fn vacuous(&self) -> bool {
        self.bound >= 1.0
    }

    pub fn passed(&self) -> bool {
        let cap = self.bound.min(1.0);
        self.upper_freq <= cap && self.lower_freq <= cap
    }

    pub fn reports(&self) -> [CheckReport; 2] {
        let cap = self.bound.min(1.0);
        let mut up = CheckReport::new(format!("P(p >= u) at t={}", self.t), self.upper_freq, Relation::AtMost, cap);
        let mut lo = CheckReport::new(format!("P(p <= l) at t={}", self.t), self.lower_freq, Relation::AtMost, cap);
        up.vacuous = self.vacuous();
        lo.vacuous = self.vacuous();
        [up, lo]
    }
}

/// Runs D-TS (unshuffled) and, at the start of each checkpoint slot `t`,
/// counts how often the true `p_ij` falls outside `[l_ij(t), u_ij(t)]` over
/// all runs and ordered pairs already compared at least once.
pub fn concentration_check(
    matrix: &PreferenceMatrix,
    alpha: Alpha,
    checkpoints: &[u64],
    runs: usize,
    master_seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<ConcentrationRow>, BenchError> {
    if runs == 0 {
        return Err(BenchError::ZeroRuns);
    }
    if let Some(&bad) = checkpoints.iter().find(|&&t| t < 2) {
        return Err(BenchError::BadCheckpoint(bad));
    }
    let mut checkpoints = checkpoints.to_vec();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let Some(&last) = checkpoints.last() else {
        return Ok(Vec::new());
    };
    let k = matrix.k();
    let config = PolicyConfig { alpha, variant: Variant::Dts };

    let per_run: Vec<Vec<[u64; 3]>> = with_pool(jobs, || {
        (0..runs)
            .into_par_iter()
            .map(|run_id| {
                let seed = run_seed(master_seed, run_id as u64);
                let mut env = Environment::with_rng(matrix.clone(), env_rng(seed));
                let mut policy = Policy::with_rng(k, config, policy_rng(seed, Variant::Dts));
                let mut tallies = Vec::with_capacity(checkpoints.len());
                let mut next = 0;
                for t in 1..=last {
                    if next < checkpoints.len() && checkpoints[next] == t {
                        tallies.push(tally_violations(matrix, policy.counts(), alpha, t));
                        next += 1;
                    }
                    if t == last {
                        break;
                    }
                    let d = policy.select_pair();
                    let outcome = (!d.is_self_comparison())
                        .then(|| env.compare(d.first, d.second).expect("valid pair"));
                    policy.update(&d, outcome).expect("consistent outcome");
                }
                tallies
            })
            .collect()
    })?;

    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(idx, &t)| {
            let [samples, up, lo] = per_run.iter().fold([0u64; 3], |acc, run| {
                [acc[0] + run[idx][0], acc[1] + run[idx][1], acc[2] + run[idx][2]]
            });
            let freq = |v: u64| if samples == 0 { 0.0 } else { v as f64 / samples as f64 };
            ConcentrationRow {
                t,
                samples,
                upper_violations: up,
                lower_violations: lo,
                upper_freq: freq(up),
                lower_freq: freq(lo),
                bound: concentration_bound(alpha, t),
            }
        })
        .collect())
}

fn tally_violations(
    matrix: &PreferenceMatrix,
    counts: &crate::stats::WinCountMatrix,
    alpha: Alpha,
    t: u64,
) -> [u64; 3] {
    let ln_t = (t as f64).ln();
    let k = matrix.k();
    let mut out = [0u64; 3];
    for i in 0..k {
        for j in 0..k {
            if i == j || counts.comparisons(i, j) == 0 {
                continue;
            }
            let (u, l) = pair_bounds(counts.wins(i, j), counts.wins(j, i), alpha, ln_t);
            let p = matrix.get(i, j);
            out[0] += 1;
            out[1] += u64::from(p >= u);
            out[2] += u64::from(p <= l);
        }
    }
    out
}

fn dts_config(dataset: &str, horizon: u64, runs: usize, master_seed: u64, jobs: Option<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::builtin(dataset, &[Variant::Dts], horizon, runs);
    cfg.master_seed = master_seed;
    cfg.jobs = jobs;
    cfg
}

/// Mean share of the last 20% of slots in which D-TS compares a Copeland
/// winner with itself; must reach 0.95.
pub fn convergence_check(
    dataset: &str,
    horizon: u64,
    runs: usize,
    master_seed: u64,
    jobs: Option<usize>,
) -> Result<(CheckReport, AggregateResult), BenchError> {
    let res = run_experiment(&dts_config(dataset, horizon, runs, master_seed, jobs))?;
    let dts = res.variant(Variant::Dts).expect("dts requested");
    let measured = dts.mean_tail_self_fraction(&res.summary.winners);
    let report = CheckReport::new(
        format!("{dataset}: winner self-comparison share over last 20% of T={horizon}"),
        measured,
        Relation::AtLeast,
        0.95,
    );
    Ok((report, res))
}

/// Winner diversity: on `nccyclic9` every Copeland winner keeps a positive
/// share of self-comparisons; on `cyclic` at least 99% land on the
/// Condorcet winner.
pub fn diversity_check(
    horizon: u64,
    runs: usize,
    master_seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<CheckReport>, BenchError> {
    let mut reports = Vec::new();
    for (dataset, multi) in [("nccyclic9", true), ("cyclic", false)] {
        let res = run_experiment(&dts_config(dataset, horizon, runs, master_seed, jobs))?;
        let dts = res.variant(Variant::Dts).expect("dts requested");
        let hists: Vec<Vec<u64>> = dts.runs.iter().map(|r| r.self_comparisons.clone()).collect();
        let profile = DiversityProfile::from_histograms(&hists, &res.summary);
        for &(arm, share) in &profile.winner_shares {
            let (relation, threshold) = if multi { (Relation::Above, 0.0) } else { (Relation::AtLeast, 0.99) };
            reports.push(CheckReport::new(
                format!("{dataset}: self-comparison share of winner arm {}", arm + 1),
                share,
                relation,
                threshold,
            ));
        }
    }
    Ok(reports)
}

/// Delayed feedback: D-TS keeps per-slot regret over the last 20% of the
/// horizon below 0.01 for every batch period, and `d = 1` reproduces an
/// immediate-feedback run byte for byte.
pub fn delay_check(
    dataset: &str,
    delays: &[u64],
    horizon: u64,
    runs: usize,
    master_seed: u64,
    jobs: Option<usize>,
) -> Result<(Vec<CheckReport>, Vec<AggregateResult>), BenchError> {
    let mut reports = Vec::new();
    let mut results = Vec::new();
    for &d in delays {
        let mut cfg = dts_config(dataset, horizon, runs, master_seed, jobs);
        cfg.delay = DelaySpec::new(d)?;
        let res = run_experiment(&cfg)?;
        let dts = res.variant(Variant::Dts).expect("dts requested");
        reports.push(CheckReport::new(
            format!("{dataset} d={d}: per-slot regret over last 20% (mean final {})", report::format_float(dts.final_mean)),
            dts.mean_tail_regret_per_slot(),
            Relation::Below,
            0.01,
        ));
        if d == 1 {
            let immediate = run_experiment_immediate(&cfg)?;
            let identical = csv_bytes(&res)? == csv_bytes(&immediate)?;
            reports.push(CheckReport::new(
                format!("{dataset} d=1: CSV output identical to immediate feedback"),
                if identical { 1.0 } else { 0.0 },
                Relation::AtLeast,
                1.0,
            ));
        }
        results.push(res);
    }
    Ok((reports, results))
}

fn csv_bytes(res: &AggregateResult) -> Result<Vec<u8>, BenchError> {
    let mut buf = Vec::new();
    let to_err = |source| BenchError::Csv { path: "<memory>".into(), source };
    report::write_curves(res, &mut buf).map_err(to_err)?;
    report::write_summary(res, &mut buf).map_err(to_err)?;
    report::write_diversity(res, &mut buf).map_err(to_err)?;
    Ok(buf)
}

/// Mean-regret growth ratio `R(2T) / R(T)` for D-TS; must stay below 1.5.
pub fn growth_check(
    dataset: &str,
    t: u64,
    runs: usize,
    master_seed: u64,
    jobs: Option<usize>,
) -> Result<CheckReport, BenchError> {
    let mut cfg = dts_config(dataset, 2 * t, runs, master_seed, jobs);
    cfg.grid = GridSpec::Explicit(vec![t, 2 * t]);
    let res = run_experiment(&cfg)?;
    let dts = res.variant(Variant::Dts).expect("dts requested");
    let r_t = dts.mean_at(&res.grid, t).expect("grid holds T");
    let r_2t = dts.mean_at(&res.grid, 2 * t).expect("grid holds 2T");
    Ok(CheckReport::new(
        format!("{dataset}: R(2T)/R(T) at T={t} (R(T)={}, R(2T)={})", report::format_float(r_t), report::format_float(r_2t)),
        r_2t / r_t,
        Relation::Below,
        1.5,
    ))
}

/// Same runs as [`run_experiment`], but every outcome is fed back through
/// [`Policy::update`] in the slot it happens. Ignores `delay` and tracing.
pub fn run_experiment_immediate(config: &ExperimentConfig) -> Result<AggregateResult, BenchError> {
    if config.horizon == 0 {
        return Err(BenchError::ZeroHorizon);
    }
    if config.runs == 0 {
        return Err(BenchError::ZeroRuns);
    }
    let matrix = config.dataset.resolve()?;
    let mut variants = config.variants.clone();
    variants.sort_by_key(|v| v.name());
    variants.dedup();
    let grid = config.grid.slots(config.horizon);
    let per_run: Vec<Vec<RunOutcome>> = with_pool(config.jobs, || {
        (0..config.runs)
            .into_par_iter()
            .map(|run_id| {
                variants
                    .iter()
                    .map(|&v| immediate_run(config, &matrix, v, &grid, run_id))
                    .collect()
            })
            .collect()
    })?;
    let mut by_variant: Vec<Vec<RunOutcome>> = vec![Vec::new(); variants.len()];
    for run in per_run {
        for (slot, outcome) in by_variant.iter_mut().zip(run) {
            slot.push(outcome);
        }
    }
    Ok(AggregateResult {
        dataset: matrix.name().to_string(),
        summary: matrix.copeland(),
        horizon: config.horizon,
        runs: config.runs,
        delay: 1,
        grid: grid.clone(),
        variants: variants
            .iter()
            .zip(by_variant)
            .map(|(&v, runs)| aggregate(v, runs, grid.len()))
            .collect(),
    })
}

fn immediate_run(
    config: &ExperimentConfig,
    matrix: &PreferenceMatrix,
    variant: Variant,
    grid: &[u64],
    run_id: usize,
) -> RunOutcome {
    let seed = run_seed(config.master_seed, run_id as u64);
    let k = matrix.k();
    let (shuffled, perm) = if config.shuffle {
        matrix.shuffled(&mut stream_rng(seed, SHUFFLE_STREAM))
    } else {
        (matrix.clone(), ArmPermutation::identity(k))
    };
    let summary = shuffled.copeland();
    let mut env = Environment::with_rng(shuffled, env_rng(seed));
    let mut policy = Policy::with_rng(k, PolicyConfig { alpha: config.alpha, variant }, policy_rng(seed, variant));
    let tail_len = ((config.horizon as f64 * config.tail_fraction).round() as u64).clamp(1, config.horizon);
    let tail_start = config.horizon - tail_len + 1;
    let mut tail = TailStats { start: tail_start, slots: tail_len, self_pairs: vec![0; k], regret: 0.0 };
    let mut self_comparisons = vec![0u64; k];
    let mut curve: Vec<f64> = grid.iter().take_while(|&&g| g == 0).map(|_| 0.0).collect();
    let mut cum = 0.0;
    for t in 1..=config.horizon {
        let d = policy.select_pair();
        let outcome = (!d.is_self_comparison()).then(|| env.compare(d.first, d.second).expect("valid pair"));
        policy.update(&d, outcome).expect("consistent outcome");
        let r = summary.regret_increment(d.first, d.second).expect("valid pair");
        cum += r;
        if d.is_self_comparison() {
            self_comparisons[perm.inverse(d.first)] += 1;
            if t >= tail_start {
                tail.self_pairs[perm.inverse(d.first)] += 1;
            }
        }
        if t >= tail_start {
            tail.regret += r;
        }
        curve.extend(grid.iter().filter(|&&g| g == t).map(|_| cum));
    }
    RunOutcome {
        run_id,
        seed,
        permutation: perm.as_slice().to_vec(),
        curve,
        final_regret: cum,
        self_comparisons,
        tail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefmat::builtin_dataset;

    #[test]
    fn bound_values() {
        let one = Alpha::new(1.0).unwrap();
        // Scalar evaluations computed offline.
        assert!((concentration_bound(one, 10_000) - 1.100_775_737_542_517e-4).abs() < 1e-15);
        assert!((concentration_bound(one, 1000) - 1.803_662_076_180_272_5e-3).abs() < 1e-14);
        let low = Alpha::new(0.51).unwrap();
        assert!((concentration_bound(low, 1000) - 0.649_264_390_787_440_4).abs() < 1e-12);
        assert!(concentration_bound(low, 100) > 1.0);
    }

    #[test]
    fn checkpoint_one_is_rejected() {
        let m = builtin_dataset("cyclic").unwrap();
        let err = concentration_check(&m, Alpha::new(1.0).unwrap(), &[1, 100], 2, 0, Some(1)).unwrap_err();
        assert!(matches!(err, BenchError::BadCheckpoint(1)));
    }

    #[test]
    fn vacuous_rows_are_flagged() {
        let m = builtin_dataset("cyclic").unwrap();
        let rows = concentration_check(&m, Alpha::new(0.51).unwrap(), &[100], 5, 0, Some(1)).unwrap();
        assert!(rows[0].vacuous());
        assert!(rows[0].passed());
        assert!(rows[0].samples > 0);
        assert!(rows[0].reports().iter().all(|r| r.vacuous && r.to_string().contains("vacuous")));
    }

    #[test]
    fn empty_profile_when_no_self_comparisons() {
        let s = builtin_dataset("cyclic").unwrap().copeland();
        let p = DiversityProfile::from_histograms(&[vec![0; 4], vec![0; 4]], &s);
        assert!(p.empty);
        assert_eq!(p.mean_share, vec![0.0; 4]);
    }

    #[test]
    fn profile_shares_sum_to_one_per_run() {
        let s = builtin_dataset("nccyclic9").unwrap().copeland();
        let p = DiversityProfile::from_histograms(&[vec![3, 1, 0, 0, 0, 0, 0, 0, 0], vec![0, 0, 2, 2, 0, 0, 0, 0, 0]], &s);
        for shares in p.per_run.iter().flatten() {
            assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(p.mean_share[0], 0.375);
        assert_eq!(p.winner_shares, vec![(0, 0.375), (1, 0.125), (2, 0.25)]);
    }

    #[test]
    fn profile_from_step_logs() {
        let s = builtin_dataset("cyclic").unwrap().copeland();
        let rec = |first, second| StepRecord { t: 1, first, second, outcome: None, instant_regret: 0.0, cum_regret: 0.0 };
        let p = diversity_profile(&[vec![rec(0, 0), rec(0, 0), rec(1, 1), rec(0, 2)]], &s);
        assert_eq!(p.mean_share, vec![2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0]);
        assert_eq!(p.winner_shares, vec![(0, 2.0 / 3.0)]);
    }

    #[test]
    fn immediate_replay_matches_batched_with_period_one() {
        let mut cfg = ExperimentConfig::builtin("gap", &[Variant::Dts, Variant::DtsPlus], 3000, 3);
        cfg.master_seed = 99;
        cfg.jobs = Some(1);
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment_immediate(&cfg).unwrap());
    }
}
