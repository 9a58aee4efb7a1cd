//! Multi-run experiments: seeding, arm shuffling, parallel execution and
//! aggregation of regret curves.
//!
//! Every run derives its randomness from `run_seed(master_seed, run_index)`.
//! Within a run, ChaCha stream 0 drives the arm shuffle, stream 1 the
//! environment noise (shared by all variants, so they face the same coin
//! flips), and stream `2 + variant.stable_id()` the policy itself.
//! Results are reduced in run order, so the worker count never changes
//! the output.

mod diagnostics;
mod report;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::policy::{DecisionTrace, Policy, PolicyConfig, Variant};
use crate::prefmat::{resolve_dataset, ArmPermutation, CopelandSummary, PreferenceMatrix, ResolveError};
use crate::sim::{run_episode_with, DelaySpec, DuelingPolicy, Environment, GridSpec, SimError};
use crate::stats::Alpha;

pub use diagnostics::{
    concentration_bound, concentration_check, convergence_check, delay_check, diversity_check, diversity_profile,
    growth_check, run_experiment_immediate, CheckReport, ConcentrationRow, DiversityProfile, Relation,
};
pub use report::{
    emit_csv, emit_diversity, emit_summary, format_float, read_curves, read_summary, write_curves, write_diversity,
    write_summary, CurveRow, SummaryRow,
    CURVES_FILE, DIVERSITY_FILE, SUMMARY_FILE,
};

const SHUFFLE_STREAM: u64 = 0;
const ENV_STREAM: u64 = 1;
const POLICY_STREAM_BASE: u64 = 2;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Dataset(#[from] ResolveError),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("run count must be at least 1")]
    ZeroRuns,
    #[error("no policy variants selected")]
    NoVariants,
    #[error("checkpoint t={0} is invalid: the concentration bound needs t >= 2")]
    BadCheckpoint(u64),
    #[error("tail fraction must lie in (0, 1], got {0}")]
    BadTailFraction(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Where the preference matrix comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Builtin(String),
    File(PathBuf),
    Matrix(PreferenceMatrix),
}

impl DatasetSource {
    pub fn resolve(&self) -> Result<PreferenceMatrix, ResolveError> {
        match self {
            DatasetSource::Builtin(name) => resolve_dataset(name),
            DatasetSource::File(path) => Ok(crate::prefmat::load_matrix(path)?),
            DatasetSource::Matrix(m) => Ok(m.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub variants: Vec<Variant>,
    pub horizon: u64,
    pub runs: usize,
    pub alpha: Alpha,
    pub master_seed: u64,
    pub delay: DelaySpec,
    pub shuffle: bool,
    pub grid: GridSpec,
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
    /// Trailing share of the horizon summarized in [`TailStats`].
    pub tail_fraction: f64,
    /// When set, every (run, variant) writes a per-step CSV log here,
    /// including decision traces. Slow.
    pub trace_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource, variants: Vec<Variant>, horizon: u64, runs: usize) -> Self {
        Self {
            dataset,
            variants,
            horizon,
            runs,
            alpha: Alpha::default(),
            master_seed: 0,
            delay: DelaySpec::IMMEDIATE,
            shuffle: true,
            grid: GridSpec::default(),
            jobs: None,
            tail_fraction: 0.2,
            trace_dir: None,
        }
    }

    pub fn builtin(name: &str, variants: &[Variant], horizon: u64, runs: usize) -> Self {
        Self::new(DatasetSource::Builtin(name.to_string()), variants.to_vec(), horizon, runs)
    }
}

/// The paper-scale run count for `k` arms: 500 below 10 arms, 100 up to
/// 100 arms, 10 beyond.
pub fn protocol_runs(k: usize) -> usize {
    match k {
        0..=9 => 500,
        10..=100 => 100,
        _ => 10,
    }
}

/// Per-run seed. `splitmix64(master + run_index * φ)`, where φ is the odd
/// 64-bit golden-ratio constant; injective in `run_index` for a fixed master.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(run_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn policy_rng(seed: u64, variant: Variant) -> ChaCha8Rng {
    stream_rng(seed, POLICY_STREAM_BASE + variant.stable_id())
}

pub(crate) fn env_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, ENV_STREAM)
}

/// Statistics over the trailing slots of a run (arms in original labels).
#[derive(Debug, Clone, PartialEq)]
pub struct TailStats {
    pub start: u64,
    pub slots: u64,
    /// Slots in the tail where arm `i` was compared against itself.
    pub self_pairs: Vec<u64>,
    pub regret: f64,
}

impl TailStats {
    /// Share of tail slots spent comparing a member of `arms` against itself.
    pub fn self_fraction(&self, arms: &[usize]) -> f64 {
        let hits: u64 = arms.iter().map(|&a| self.self_pairs[a]).sum();
        hits as f64 / self.slots as f64
    }

    pub fn regret_per_slot(&self) -> f64 {
        self.regret / self.slots as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: usize,
    pub seed: u64,
    /// `permutation[i]` is the shuffled label of original arm `i`.
    pub permutation: Vec<usize>,
    /// Cumulative regret at each grid slot.
    pub curve: Vec<f64>,
    pub final_regret: f64,
    /// Self-comparison slots per original arm over the whole run.
    pub self_comparisons: Vec<u64>,
    pub tail: TailStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: Variant,
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
    pub final_mean: f64,
    pub final_std: f64,
    /// `final_std / final_mean`, or 0 when the mean is 0.
    pub std_over_mean: f64,
    pub runs: Vec<RunOutcome>,
}

impl VariantResult {
    pub fn final_regrets(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.final_regret).collect()
    }

    /// Mean over runs of the trailing self-comparison share on `arms`.
    pub fn mean_tail_self_fraction(&self, arms: &[usize]) -> f64 {
        mean(&self.runs.iter().map(|r| r.tail.self_fraction(arms)).collect::<Vec<_>>())
    }

    pub fn mean_tail_regret_per_slot(&self) -> f64 {
        mean(&self.runs.iter().map(|r| r.tail.regret_per_slot()).collect::<Vec<_>>())
    }

    pub fn mean_at(&self, grid: &[u64], t: u64) -> Option<f64> {
        grid.iter().position(|&g| g == t).map(|i| self.mean_curve[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub dataset: String,
    pub summary: CopelandSummary,
    pub horizon: u64,
    pub runs: usize,
    pub delay: u64,
    pub grid: Vec<u64>,
    /// Sorted by variant name.
    pub variants: Vec<VariantResult>,
}

impl AggregateResult {
    pub fn variant(&self, v: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); 0 for fewer than two values.
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub(crate) fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, BenchError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| BenchError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs every configured variant for `config.runs` independent runs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult, BenchError> {
    if config.horizon == 0 {
        return Err(BenchError::ZeroHorizon);
    }
    if config.runs == 0 {
        return Err(BenchError::ZeroRuns);
    }
    if config.variants.is_empty() {
        return Err(BenchError::NoVariants);
    }
    if !(config.tail_fraction > 0.0 && config.tail_fraction <= 1.0) {
        return Err(BenchError::BadTailFraction(config.tail_fraction));
    }
    let matrix = config.dataset.resolve()?;
    let mut variants = config.variants.clone();
    variants.sort_by_key(|v| v.name());
    variants.dedup();
    let grid = config.grid.slots(config.horizon);
    if let Some(dir) = &config.trace_dir {
        fs::create_dir_all(dir).map_err(|source| BenchError::Io { path: dir.clone(), source })?;
    }

    let per_run: Vec<Result<Vec<RunOutcome>, BenchError>> = with_pool(config.jobs, || {
        (0..config.runs)
            .into_par_iter()
            .map(|run_id| execute_run(config, &matrix, &variants, &grid, run_id))
            .collect()
    })?;
    let mut by_variant: Vec<Vec<RunOutcome>> = vec![Vec::with_capacity(config.runs); variants.len()];
    for run in per_run {
        for (slot, outcome) in by_variant.iter_mut().zip(run?) {
            slot.push(outcome);
        }
    }

    let results = variants
        .iter()
        .zip(by_variant)
        .map(|(&variant, runs)| aggregate(variant, runs, grid.len()))
        .collect();
    Ok(AggregateResult {
        dataset: matrix.name().to_string(),
        summary: matrix.copeland(),
        horizon: config.horizon,
        runs: config.runs,
        delay: config.delay.period(),
        grid,
        variants: results,
    })
}

fn aggregate(variant: Variant, runs: Vec<RunOutcome>, points: usize) -> VariantResult {
    let mut mean_curve = Vec::with_capacity(points);
    let mut std_curve = Vec::with_capacity(points);
    for g in 0..points {
        let column: Vec<f64> = runs.iter().map(|r| r.curve[g]).collect();
        mean_curve.push(mean(&column));
        std_curve.push(std_dev(&column));
    }
    let finals: Vec<f64> = runs.iter().map(|r| r.final_regret).collect();
    let final_mean = mean(&finals);
    let final_std = std_dev(&finals);
    let std_over_mean = if final_mean > 0.0 { final_std / final_mean } else { 0.0 };
    VariantResult { variant, mean_curve, std_curve, final_mean, final_std, std_over_mean, runs }
}

fn execute_run(
    config: &ExperimentConfig,
    matrix: &PreferenceMatrix,
    variants: &[Variant],
    grid: &[u64],
    run_id: usize,
) -> Result<Vec<RunOutcome>, BenchError> {
    let seed = run_seed(config.master_seed, run_id as u64);
    let k = matrix.k();
    let (shuffled, perm) = if config.shuffle {
        matrix.shuffled(&mut stream_rng(seed, SHUFFLE_STREAM))
    } else {
        (matrix.clone(), ArmPermutation::identity(k))
    };
    let tail_len = ((config.horizon as f64 * config.tail_fraction).round() as u64).clamp(1, config.horizon);
    let tail_start = config.horizon - tail_len + 1;

    variants
        .iter()
        .map(|&variant| {
            let mut env = Environment::with_rng(shuffled.clone(), env_rng(seed));
            let policy_cfg = PolicyConfig { alpha: config.alpha, variant };
            let mut policy = Policy::with_rng(k, policy_cfg, policy_rng(seed, variant));

            let mut curve = Vec::with_capacity(grid.len());
            let mut next_grid = 0;
            while next_grid < grid.len() && grid[next_grid] == 0 {
                curve.push(0.0);
                next_grid += 1;
            }
            let mut self_comparisons = vec![0u64; k];
            let mut tail = TailStats { start: tail_start, slots: tail_len, self_pairs: vec![0; k], regret: 0.0 };

            let mut step_log = match &config.trace_dir {
                Some(dir) => Some(StepLog::create(dir, variant, run_id)?),
                None => None,
            };
            let decision_log = match &config.trace_dir {
                Some(dir) => Some(create_log(dir, "decisions", variant, run_id, "t,candidates,tie_set,eligible")?),
                None => None,
            };
            let mut traced = Traced { policy: &mut policy, perm: &perm, log: decision_log, error: None };
            let mut io_error = None;

            let final_regret = run_episode_with(&mut env, &mut traced, config.horizon, config.delay, |rec| {
                let orig_first = perm.inverse(rec.first);
                if rec.first == rec.second {
                    self_comparisons[orig_first] += 1;
                    if rec.t >= tail_start {
                        tail.self_pairs[orig_first] += 1;
                    }
                }
                if rec.t >= tail_start {
                    tail.regret += rec.instant_regret;
                }
                while next_grid < grid.len() && grid[next_grid] == rec.t {
                    curve.push(rec.cum_regret);
                    next_grid += 1;
                }
                if let Some(log) = step_log.as_mut() {
                    if io_error.is_none() {
                        if let Err(e) = log.write(rec, &perm) {
                            io_error = Some(e);
                        }
                    }
                }
            })?;
            if let Some(e) = io_error.or(traced.error.take()) {
                return Err(e);
            }
            if let Some((path, mut out)) = traced.log.take() {
                out.flush().map_err(|source| BenchError::Io { path, source })?;
            }
            if let Some(log) = step_log {
                log.finish()?;
            }
            Ok(RunOutcome {
                run_id,
                seed,
                permutation: perm.as_slice().to_vec(),
                curve,
                final_regret,
                self_comparisons,
                tail,
            })
        })
        .collect()
}

/// Wraps a policy and, when tracing, logs every decision's candidate and
/// tie sets (arms in original labels).
struct Traced<'a> {
    policy: &'a mut Policy,
    perm: &'a ArmPermutation,
    log: Option<(PathBuf, BufWriter<File>)>,
    error: Option<BenchError>,
}

impl Traced<'_> {
    fn labels(&self, arms: &[usize]) -> String {
        let mut v: Vec<usize> = arms.iter().map(|&a| self.perm.inverse(a) + 1).collect();
        v.sort_unstable();
        v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
    }

    fn log_decision(&mut self, t: u64, trace: &DecisionTrace) {
        let line = format!(
            "{},{},{},{}\n",
            t,
            self.labels(&trace.candidates),
            self.labels(&trace.tie_set),
            self.labels(&trace.eligible)
        );
        if let (Some((path, out)), None) = (self.log.as_mut(), self.error.as_ref()) {
            if let Err(source) = out.write_all(line.as_bytes()) {
                self.error = Some(BenchError::Io { path: path.clone(), source });
            }
        }
    }
}

impl DuelingPolicy for Traced<'_> {
    fn select(&mut self) -> (usize, usize) {
        if self.log.is_none() {
            return DuelingPolicy::select(self.policy);
        }
        self.policy.set_trace(true);
        let t = self.policy.slot();
        let d = self.policy.select_pair();
        if let Some(trace) = &d.trace {
            self.log_decision(t, trace);
        }
        (d.first, d.second)
    }

    fn observe(&mut self, winner: usize, loser: usize) {
        DuelingPolicy::observe(self.policy, winner, loser);
    }

    fn advance(&mut self) {
        DuelingPolicy::advance(self.policy);
    }
}

fn create_log(dir: &std::path::Path, stem: &str, variant: Variant, run_id: usize, header: &str)
    -> Result<(PathBuf, BufWriter<File>), BenchError> {
    let path = dir.join(format!("{stem}_{}_run{:05}.csv", variant.name(), run_id));
    let file = File::create(&path).map_err(|source| BenchError::Io { path: path.clone(), source })?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{header}").map_err(|source| BenchError::Io { path: path.clone(), source })?;
    Ok((path, out))
}

struct StepLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl StepLog {
    fn create(dir: &std::path::Path, variant: Variant, run_id: usize) -> Result<Self, BenchError> {
        let (path, out) = create_log(dir, "steps", variant, run_id, "t,first,second,outcome,instant_regret,cum_regret")?;
        Ok(Self { path, out })
    }

    fn write(&mut self, rec: &crate::sim::StepRecord, perm: &ArmPermutation) -> Result<(), BenchError> {
        let label = |arm: usize| perm.inverse(arm) + 1;
        let outcome = rec.outcome.map(|w| label(w).to_string()).unwrap_or_default();
        writeln!(
            self.out,
            "{},{},{},{},{},{}",
            rec.t,
            label(rec.first),
            label(rec.second),
            outcome,
            format_float(rec.instant_regret),
            format_float(rec.cum_regret)
        )
        .map_err(|source| BenchError::Io { path: self.path.clone(), source })
    }

    fn finish(mut self) -> Result<(), BenchError> {
        self.out.flush().map_err(|source| BenchError::Io { path: self.path, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..10_000).map(|i| run_seed(42, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(run_seed(1, 0), run_seed(2, 0));
    }

    #[test]
    fn std_dev_uses_bessel_correction() {
        assert_eq!(std_dev(&[1.0]), 0.0);
        assert!((std_dev(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean(&[]), 0.0);
    }

    #[test]
    fn protocol_run_tiers() {
        assert_eq!(protocol_runs(5), 500);
        assert_eq!(protocol_runs(16), 100);
        assert_eq!(protocol_runs(500), 10);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::builtin("cyclic", &[Variant::Random], 0, 1);
        assert!(matches!(run_experiment(&cfg), Err(BenchError::ZeroHorizon)));
        cfg.horizon = 10;
        cfg.runs = 0;
        assert!(matches!(run_experiment(&cfg), Err(BenchError::ZeroRuns)));
        cfg.runs = 1;
        cfg.variants.clear();
        assert!(matches!(run_experiment(&cfg), Err(BenchError::NoVariants)));
        let cfg = ExperimentConfig::builtin("nosuch", &[Variant::Dts], 10, 1);
        assert!(matches!(run_experiment(&cfg), Err(BenchError::Dataset(_))));
    }

    #[test]
    fn small_experiment_shape() {
        let mut cfg = ExperimentConfig::builtin("cyclic", &[Variant::Random, Variant::Dts], 1000, 3);
        cfg.master_seed = 7;
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.variants.len(), 2);
        assert_eq!(res.variants[0].variant, Variant::Dts);
        for v in &res.variants {
            assert_eq!(v.runs.len(), 3);
            assert_eq!(v.mean_curve[0], 0.0);
            assert_eq!(v.mean_curve.len(), res.grid.len());
            for r in &v.runs {
                assert_eq!(*r.curve.last().unwrap(), r.final_regret);
                assert!(r.curve.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
