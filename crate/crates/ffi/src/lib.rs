//! C ABI over `dtsbench`.
//!
//! Every fallible function returns a [`DtsStatus`]; on failure the message
//! is kept per thread and read with [`dts_last_error_message`]. Matrices and
//! policies are opaque handles released with their `_free` function. Arms
//! are 0-based. Panics never cross the boundary: they surface as
//! `DTS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dtsbench::bench::{emit_csv, emit_diversity, emit_summary, BenchError};
use dtsbench::prefmat::{load_matrix, resolve_dataset, LoadError, ResolveError};
use dtsbench::{
    builtin_dataset, run_experiment, Alpha, DatasetSource, DelaySpec, ExperimentConfig, PairDecision, Policy,
    PolicyConfig, PreferenceMatrix, Variant,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownDataset = 3,
    Io = 4,
    Parse = 5,
    InvalidMatrix = 6,
    OutOfRange = 7,
    /// `dts_policy_update` without a pending `dts_policy_select`.
    NoPendingPair = 8,
    Runtime = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtsVariant {
    Dts = 0,
    DtsPlus = 1,
    PureDts = 2,
    Random = 3,
}

impl From<DtsVariant> for Variant {
    fn from(v: DtsVariant) -> Self {
        match v {
            DtsVariant::Dts => Variant::Dts,
            DtsVariant::DtsPlus => Variant::DtsPlus,
            DtsVariant::PureDts => Variant::PureDts,
            DtsVariant::Random => Variant::Random,
        }
    }
}

pub const DTS_VARIANT_MASK_DTS: u32 = 1 << 0;
pub const DTS_VARIANT_MASK_DTS_PLUS: u32 = 1 << 1;
pub const DTS_VARIANT_MASK_PURE_DTS: u32 = 1 << 2;
pub const DTS_VARIANT_MASK_RANDOM: u32 = 1 << 3;
pub const DTS_VARIANT_MASK_ALL: u32 = 0xF;

/// Pass to `dts_policy_update` when the selected pair was a self-comparison.
pub const DTS_NO_WINNER: i64 = -1;

/// Opaque preference matrix.
pub struct DtsMatrix(PreferenceMatrix);

/// Opaque D-TS policy plus its last selected pair.
pub struct DtsPolicy {
    policy: Policy,
    pending: Option<PairDecision>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DtsExperimentOptions {
    pub horizon: u64,
    pub runs: u64,
    pub alpha: f64,
    pub seed: u64,
    /// Feedback batch period; 1 means immediate feedback.
    pub delay: u64,
    pub shuffle: bool,
    /// Worker threads; 0 uses the available parallelism.
    pub jobs: u64,
    /// Bitwise OR of `DTS_VARIANT_MASK_*`.
    pub variants: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(DtsStatus, String);

impl Fail {
    fn new(status: DtsStatus, msg: impl ToString) -> Self {
        Fail(status, msg.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DtsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DtsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("panic: {msg}"));
            DtsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(DtsStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(DtsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::new(DtsStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn matrix_ref<'a>(m: *const DtsMatrix) -> Result<&'a PreferenceMatrix, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| Fail::new(DtsStatus::NullPointer, "matrix handle is NULL"))
}

unsafe fn policy_mut<'a>(p: *mut DtsPolicy) -> Result<&'a mut DtsPolicy, Fail> {
    p.as_mut().ok_or_else(|| Fail::new(DtsStatus::NullPointer, "policy handle is NULL"))
}

fn check_arm(arm: usize, k: usize) -> Result<(), Fail> {
    if arm < k {
        Ok(())
    } else {
        Err(Fail::new(DtsStatus::OutOfRange, format!("arm {arm} out of range for {k} arms")))
    }
}

fn load_fail(e: LoadError) -> Fail {
    let status = match &e {
        LoadError::Io { .. } => DtsStatus::Io,
        LoadError::Parse { .. } => DtsStatus::Parse,
        LoadError::Invalid { .. } => DtsStatus::InvalidMatrix,
    };
    Fail::new(status, e)
}

fn resolve_fail(e: ResolveError) -> Fail {
    match e {
        ResolveError::Dataset(e) => Fail::new(DtsStatus::UnknownDataset, e),
        ResolveError::Load(e) => load_fail(e),
    }
}

fn bench_fail(e: BenchError) -> Fail {
    match e {
        BenchError::Dataset(e) => resolve_fail(e),
        BenchError::Io { .. } | BenchError::Csv { .. } => Fail::new(DtsStatus::Io, e),
        BenchError::ZeroHorizon | BenchError::ZeroRuns | BenchError::NoVariants => {
            Fail::new(DtsStatus::InvalidArgument, e)
        }
        _ => Fail::new(DtsStatus::Runtime, e),
    }
}

fn boxed_matrix(out: &mut *mut DtsMatrix, m: PreferenceMatrix) {
    *out = Box::into_raw(Box::new(DtsMatrix(m)));
}

/// Message of the last failed call on this thread, or NULL after a
/// successful one. Valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn dts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of built-in datasets.
#[no_mangle]
pub extern "C" fn dts_dataset_count() -> usize {
    dtsbench::DATASET_NAMES.len()
}

/// Static name of built-in dataset `index`, or NULL when out of range.
#[no_mangle]
pub extern "C" fn dts_dataset_name(index: usize) -> *const c_char {
    const NAMES: [&str; 8] = [
        "cyclic\0",
        "strongborda\0",
        "arxiv\0",
        "gap\0",
        "ncstrongborda\0",
        "nccyclic9\0",
        "mslr5c\0",
        "mslr5nc\0",
    ];
    debug_assert!(NAMES.iter().zip(dtsbench::DATASET_NAMES).all(|(a, b)| a.trim_end_matches('\0') == b));
    NAMES.get(index).map_or(ptr::null(), |s| s.as_ptr().cast())
}

/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_builtin(name: *const c_char, out: *mut *mut DtsMatrix) -> DtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let name = str_arg(name, "name")?;
        let m = builtin_dataset(name).map_err(|e| Fail::new(DtsStatus::UnknownDataset, e))?;
        boxed_matrix(out, m);
        Ok(())
    })
}

/// Builds a matrix from `k * k` row-major probabilities.
///
/// # Safety
/// `data` must point to `k * k` readable doubles, `name` must be NULL or a
/// NUL-terminated string, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_from_rows(
    name: *const c_char,
    k: usize,
    data: *const f64,
    out: *mut *mut DtsMatrix,
) -> DtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if data.is_null() {
            return Err(Fail::new(DtsStatus::NullPointer, "data is NULL"));
        }
        let name = if name.is_null() { "matrix" } else { str_arg(name, "name")? };
        let len = k
            .checked_mul(k)
            .ok_or_else(|| Fail::new(DtsStatus::InvalidArgument, "k * k overflows"))?;
        let flat = std::slice::from_raw_parts(data, len);
        let rows: Vec<Vec<f64>> = flat.chunks(k.max(1)).map(<[f64]>::to_vec).collect();
        let m = PreferenceMatrix::new(name, &rows).map_err(|e| Fail::new(DtsStatus::InvalidMatrix, e))?;
        boxed_matrix(out, m);
        Ok(())
    })
}

/// Reads a `.json` or `.csv` matrix file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_load(path: *const c_char, out: *mut *mut DtsMatrix) -> DtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        boxed_matrix(out, load_matrix(path).map_err(load_fail)?);
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle from a `dts_matrix_*` constructor that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_free(m: *mut DtsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Arm count, or 0 for a NULL handle.
///
/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_k(m: *const DtsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.k())
}

/// # Safety
/// `m` must be a live matrix handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_get(m: *const DtsMatrix, i: usize, j: usize, out: *mut f64) -> DtsStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        let out = out_arg(out, "out")?;
        check_arm(i, m.k())?;
        check_arm(j, m.k())?;
        *out = m.get(i, j);
        Ok(())
    })
}

/// Writes the `k` Copeland scores to `zeta` and the top score to
/// `zeta_star`. Either output may be NULL.
///
/// # Safety
/// `m` must be a live matrix handle; `zeta`, when non-NULL, must hold `k`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_copeland(m: *const DtsMatrix, zeta: *mut f64, zeta_star: *mut f64) -> DtsStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        let s = m.copeland();
        if !zeta.is_null() {
            std::slice::from_raw_parts_mut(zeta, m.k()).copy_from_slice(&s.zeta);
        }
        if let Some(z) = zeta_star.as_mut() {
            *z = s.zeta_star;
        }
        Ok(())
    })
}

/// Writes 1 to `winners[i]` for every Copeland winner and 0 otherwise;
/// returns the winner count through `count` (may be NULL).
///
/// # Safety
/// `m` must be a live matrix handle and `winners` must hold `k` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_winners(m: *const DtsMatrix, winners: *mut u8, count: *mut usize) -> DtsStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        if winners.is_null() {
            return Err(Fail::new(DtsStatus::NullPointer, "winners is NULL"));
        }
        let s = m.copeland();
        let flags = std::slice::from_raw_parts_mut(winners, m.k());
        for (i, f) in flags.iter_mut().enumerate() {
            *f = u8::from(s.is_winner(i));
        }
        if let Some(c) = count.as_mut() {
            *c = s.winners.len();
        }
        Ok(())
    })
}

/// Regret of comparing `first` with `second`.
///
/// # Safety
/// `m` must be a live matrix handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dts_matrix_regret(
    m: *const DtsMatrix,
    first: usize,
    second: usize,
    out: *mut f64,
) -> DtsStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        let out = out_arg(out, "out")?;
        *out = m
            .copeland()
            .regret_increment(first, second)
            .map_err(|e| Fail::new(DtsStatus::OutOfRange, e))?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dts_policy_new(
    k: usize,
    variant: DtsVariant,
    alpha: f64,
    seed: u64,
    out: *mut *mut DtsPolicy,
) -> DtsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if k < 2 {
            return Err(Fail::new(DtsStatus::InvalidArgument, format!("need at least 2 arms, got {k}")));
        }
        let config = PolicyConfig::new(variant.into(), alpha).map_err(|e| Fail::new(DtsStatus::InvalidArgument, e))?;
        let policy = Policy::new(k, config, seed);
        *out = Box::into_raw(Box::new(DtsPolicy { policy, pending: None }));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a live policy handle.
#[no_mangle]
pub unsafe extern "C" fn dts_policy_free(p: *mut DtsPolicy) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Chooses the next pair. Each select must be followed by exactly one
/// `dts_policy_update`; selecting again replaces the pending pair.
///
/// # Safety
/// `p` must be a live policy handle; `first` and `second` writable.
#[no_mangle]
pub unsafe extern "C" fn dts_policy_select(p: *mut DtsPolicy, first: *mut usize, second: *mut usize) -> DtsStatus {
    guard(|| {
        let p = policy_mut(p)?;
        let first = out_arg(first, "first")?;
        let second = out_arg(second, "second")?;
        let d = p.policy.select_pair();
        *first = d.first;
        *second = d.second;
        p.pending = Some(d);
        Ok(())
    })
}

/// Reports the outcome of the pending pair and advances the slot counter.
/// `winner` is one of the two arms, or `DTS_NO_WINNER` for a
/// self-comparison.
///
/// # Safety
/// `p` must be a live policy handle.
#[no_mangle]
pub unsafe extern "C" fn dts_policy_update(p: *mut DtsPolicy, winner: i64) -> DtsStatus {
    guard(|| {
        let p = policy_mut(p)?;
        let d = p
            .pending
            .as_ref()
            .ok_or_else(|| Fail::new(DtsStatus::NoPendingPair, "no pair selected since the last update"))?;
        let winner = if winner < 0 { None } else { Some(winner as usize) };
        p.policy.update(d, winner).map_err(|e| Fail::new(DtsStatus::InvalidArgument, e))?;
        p.pending = None;
        Ok(())
    })
}

/// Current slot `t` (1 before the first update), or 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live policy handle.
#[no_mangle]
pub unsafe extern "C" fn dts_policy_slot(p: *const DtsPolicy) -> u64 {
    p.as_ref().map_or(0, |p| p.policy.slot())
}

/// Times arm `i` has beaten arm `j`.
///
/// # Safety
/// `p` must be a live policy handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dts_policy_wins(p: *const DtsPolicy, i: usize, j: usize, out: *mut u64) -> DtsStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| Fail::new(DtsStatus::NullPointer, "policy handle is NULL"))?;
        let out = out_arg(out, "out")?;
        check_arm(i, p.policy.k())?;
        check_arm(j, p.policy.k())?;
        *out = p.policy.counts().wins(i, j);
        Ok(())
    })
}

/// Defaults matching the command line: T = 10000, 100 runs, alpha 0.51,
/// seed 0, immediate feedback, shuffling on, all variants.
#[no_mangle]
pub extern "C" fn dts_experiment_default_options() -> DtsExperimentOptions {
    DtsExperimentOptions {
        horizon: 10_000,
        runs: 100,
        alpha: Alpha::default().get(),
        seed: 0,
        delay: 1,
        shuffle: true,
        jobs: 0,
        variants: DTS_VARIANT_MASK_ALL,
    }
}

/// Runs an experiment on a built-in dataset or matrix file and writes
/// curves.csv, summary.csv and diversity.csv into `out_dir`.
///
/// # Safety
/// `dataset` and `out_dir` must be NUL-terminated strings and `options`
/// must point to a readable options struct.
#[no_mangle]
pub unsafe extern "C" fn dts_run_experiment(
    dataset: *const c_char,
    options: *const DtsExperimentOptions,
    out_dir: *const c_char,
) -> DtsStatus {
    guard(|| {
        let name = str_arg(dataset, "dataset")?;
        let dir = Path::new(str_arg(out_dir, "out_dir")?);
        let opts = options.as_ref().ok_or_else(|| Fail::new(DtsStatus::NullPointer, "options is NULL"))?;
        let matrix = resolve_dataset(name).map_err(resolve_fail)?;
        let variants: Vec<Variant> = [
            (DTS_VARIANT_MASK_DTS, Variant::Dts),
            (DTS_VARIANT_MASK_DTS_PLUS, Variant::DtsPlus),
            (DTS_VARIANT_MASK_PURE_DTS, Variant::PureDts),
            (DTS_VARIANT_MASK_RANDOM, Variant::Random),
        ]
        .into_iter()
        .filter(|(bit, _)| opts.variants & bit != 0)
        .map(|(_, v)| v)
        .collect();
        let runs = usize::try_from(opts.runs).map_err(|_| Fail::new(DtsStatus::InvalidArgument, "runs too large"))?;
        let mut cfg = ExperimentConfig::new(DatasetSource::Matrix(matrix), variants, opts.horizon, runs);
        cfg.alpha = Alpha::new(opts.alpha).map_err(|e| Fail::new(DtsStatus::InvalidArgument, e))?;
        cfg.master_seed = opts.seed;
        cfg.delay = DelaySpec::new(opts.delay).map_err(|e| Fail::new(DtsStatus::InvalidArgument, e))?;
        cfg.shuffle = opts.shuffle;
        cfg.jobs = (opts.jobs > 0).then_some(opts.jobs as usize);
        let result = run_experiment(&cfg).map_err(bench_fail)?;
        emit_csv(&result, dir).map_err(bench_fail)?;
        emit_summary(&result, dir).map_err(bench_fail)?;
        emit_diversity(&result, dir).map_err(bench_fail)?;
        Ok(())
    })
}
