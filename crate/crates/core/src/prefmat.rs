//! Preference matrices, Copeland scores and regret accounting.
//!
//! Arms are indexed from 0 internally. Anything user-facing (CLI output,
//! CSV `arm` columns) prints them 1-based to match the usual table layout.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on `p_ij + p_ji = 1`.
pub const ANTISYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("preference matrix needs at least 2 arms, got {0}")]
    TooFewArms(usize),
    #[error("row {row} has {len} entries, expected {expected} (matrix must be square)")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("entry ({i},{j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("entry ({i},{j}) = {value} is outside [0, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("diagonal entry ({i},{i}) = {value}, must be exactly 0.5")]
    Diagonal { i: usize, value: f64 },
    #[error("p({i},{j}) + p({j},{i}) = {sum}, must equal 1 within {ANTISYMMETRY_TOL:e}")]
    Antisymmetry { i: usize, j: usize, sum: f64 },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown dataset `{name}`; available: {}", DATASET_NAMES.join(", "))]
    Unknown { name: String },
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid preference matrix in {path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: MatrixError,
    },
}

/// A validated `K x K` matrix of pairwise preference probabilities.
///
/// `p(i, j)` is the probability that arm `i` is preferred to arm `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    name: String,
    k: usize,
    p: Vec<f64>,
    ties: Vec<(usize, usize)>,
}

impl PreferenceMatrix {
    /// Validates `rows` and builds the matrix.
    ///
    /// Off-diagonal entries equal to exactly 1/2 are accepted; they are
    /// collected in [`PreferenceMatrix::ties`] so callers can warn about them.
    #[allow(clippy::needless_range_loop)]
    pub fn new(name: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let k = rows.len();
        if k < 2 {
            return Err(MatrixError::TooFewArms(k));
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(MatrixError::NotSquare { row, len: r.len(), expected: k });
            }
        }
        for (i, r) in rows.iter().enumerate() {
            for (j, &value) in r.iter().enumerate() {
                if !value.is_finite() {
                    return Err(MatrixError::NonFinite { i, j });
                }
                if !(0.0..=1.0).contains(&value) {
                    return Err(MatrixError::OutOfRange { i, j, value });
                }
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r[i] != 0.5 {
                return Err(MatrixError::Diagonal { i, value: r[i] });
            }
        }
        let mut ties = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let sum = rows[i][j] + rows[j][i];
                if (sum - 1.0).abs() > ANTISYMMETRY_TOL {
                    return Err(MatrixError::Antisymmetry { i, j, sum });
                }
                if rows[i][j] == 0.5 {
                    ties.push((i, j));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            k,
            p: rows.iter().flatten().copied().collect(),
            ties,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Number of arms.
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.k + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    /// Unordered pairs `(i, j)`, `i < j`, with `p_ij = 1/2` exactly.
    ///
    /// The simulator runs fine on such matrices, but the regret guarantees
    /// of the confidence-bound eliminations assume no exact ties.
    pub fn ties(&self) -> &[(usize, usize)] {
        &self.ties
    }

    pub fn copeland(&self) -> CopelandSummary {
        CopelandSummary::from_matrix(self)
    }

    /// Relabels arms: the result `q` satisfies `q[σ(i)][σ(j)] = p[i][j]`.
    pub fn permuted(&self, perm: &ArmPermutation) -> PreferenceMatrix {
        assert_eq!(perm.len(), self.k, "permutation size does not match arm count");
        let k = self.k;
        let mut q = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                q[perm.forward(i) * k + perm.forward(j)] = self.get(i, j);
            }
        }
        let mut ties: Vec<(usize, usize)> = self
            .ties
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (perm.forward(i), perm.forward(j));
                (a.min(b), a.max(b))
            })
            .collect();
        ties.sort_unstable();
        PreferenceMatrix { name: self.name.clone(), k, p: q, ties }
    }

    /// Applies a uniformly random relabeling drawn from `rng`.
    pub fn shuffled<R: Rng + ?Sized>(&self, rng: &mut R) -> (PreferenceMatrix, ArmPermutation) {
        let perm = ArmPermutation::random(self.k, rng);
        (self.permuted(&perm), perm)
    }

    pub fn to_json(&self) -> String {
        let file = MatrixFile { name: self.name.clone(), matrix: self.rows() };
        serde_json::to_string_pretty(&file).expect("matrix serializes")
    }

    /// One line per row, comma separated, shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.p.chunks(self.k) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for PreferenceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>5}", "")?;
        for j in 0..self.k {
            write!(f, " {:>7}", j + 1)?;
        }
        writeln!(f)?;
        for i in 0..self.k {
            write!(f, "{:>5}", i + 1)?;
            for j in 0..self.k {
                write!(f, " {:>7.3}", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Normalized Copeland scores of a preference matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CopelandSummary {
    /// Number of other arms each arm strictly beats.
    pub wins: Vec<usize>,
    /// `wins[i] / (K - 1)`.
    pub zeta: Vec<f64>,
    pub zeta_star: f64,
    /// Arms attaining `zeta_star`, ascending.
    pub winners: Vec<usize>,
    pub is_condorcet: bool,
}

impl CopelandSummary {
    pub fn from_matrix(m: &PreferenceMatrix) -> Self {
        let k = m.k();
        let wins: Vec<usize> = (0..k)
            .map(|i| (0..k).filter(|&j| j != i && m.get(i, j) > 0.5).count())
            .collect();
        Self::from_wins(wins)
    }

    /// Builds the summary from integer win counts (each at most `K - 1`).
    pub fn from_wins(wins: Vec<usize>) -> Self {
        let k = wins.len();
        assert!(k >= 2, "need at least two arms");
        let denom = (k - 1) as f64;
        let best = *wins.iter().max().expect("nonempty");
        let zeta = wins.iter().map(|&w| w as f64 / denom).collect();
        let winners = (0..k).filter(|&i| wins[i] == best).collect();
        CopelandSummary {
            zeta,
            zeta_star: best as f64 / denom,
            winners,
            is_condorcet: best == k - 1,
            wins,
        }
    }

    pub fn k(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_winner(&self, arm: usize) -> bool {
        self.winners.binary_search(&arm).is_ok()
    }

    /// Per-slot regret of displaying `(first, second)`:
    /// `ζ* - (ζ_first + ζ_second) / 2`.
    pub fn regret_increment(&self, first: usize, second: usize) -> Result<f64, ArmOutOfRange> {
        let k = self.k();
        for arm in [first, second] {
            if arm >= k {
                return Err(ArmOutOfRange { arm, k });
            }
        }
        Ok(self.regret_unchecked(first, second))
    }

    #[inline]
    pub(crate) fn regret_unchecked(&self, first: usize, second: usize) -> f64 {
        self.zeta_star - 0.5 * (self.zeta[first] + self.zeta[second])
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("arm index {arm} out of range for {k} arms")]
pub struct ArmOutOfRange {
    pub arm: usize,
    pub k: usize,
}

/// A relabeling of arms. `forward(i)` is the new label of original arm `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmPermutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl ArmPermutation {
    pub fn identity(k: usize) -> Self {
        let forward: Vec<usize> = (0..k).collect();
        Self { inverse: forward.clone(), forward }
    }

    /// Returns `None` unless `forward` is a bijection on `0..forward.len()`.
    pub fn from_forward(forward: Vec<usize>) -> Option<Self> {
        let k = forward.len();
        let mut inverse = vec![usize::MAX; k];
        for (i, &to) in forward.iter().enumerate() {
            if to >= k || inverse[to] != usize::MAX {
                return None;
            }
            inverse[to] = i;
        }
        Some(Self { forward, inverse })
    }

    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        let mut forward: Vec<usize> = (0..k).collect();
        forward.shuffle(rng);
        Self::from_forward(forward).expect("shuffle yields a permutation")
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// New label of original arm `i`.
    #[inline]
    pub fn forward(&self, i: usize) -> usize {
        self.forward[i]
    }

    /// Original label of permuted arm `j`.
    #[inline]
    pub fn inverse(&self, j: usize) -> usize {
        self.inverse[j]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.forward
    }
}

/// Built-in dataset identifiers, in registry order.
pub const DATASET_NAMES: [&str; 8] = [
    "cyclic",
    "strongborda",
    "arxiv",
    "gap",
    "ncstrongborda",
    "nccyclic9",
    "mslr5c",
    "mslr5nc",
];

/// Short human description of each built-in dataset.
pub fn dataset_description(name: &str) -> Option<&'static str> {
    Some(match name {
        "cyclic" => "4 arms, Condorcet winner plus a 3-cycle",
        "strongborda" => "5 arms, Condorcet winner distinct from a strong Borda winner",
        "arxiv" => "6 rankers from interleaving experiments",
        "gap" => "5 arms, non-Condorcet (table captioned \"Gap\")",
        "ncstrongborda" => "6 arms, non-Condorcet with a strong Borda winner",
        "nccyclic9" => "9 arms, three cyclic groups, three Copeland winners",
        "mslr5c" => "5 MSLR rankers, Condorcet",
        "mslr5nc" => "5 MSLR rankers, three Copeland winners",
        _ => return None,
    })
}

fn builtin_rows(name: &str) -> Option<Vec<Vec<f64>>> {
    let rows: &[&[f64]] = match name {
        "cyclic" => &[
            &[0.5, 0.6, 0.6, 0.6],
            &[0.4, 0.5, 0.9, 0.1],
            &[0.4, 0.1, 0.5, 0.9],
            &[0.4, 0.9, 0.1, 0.5],
        ],
        "strongborda" => &[
            &[0.5, 0.55, 0.55, 0.55, 0.55],
            &[0.45, 0.5, 0.95, 0.95, 0.95],
            &[0.45, 0.05, 0.5, 0.95, 0.95],
            &[0.45, 0.05, 0.05, 0.5, 0.95],
            &[0.45, 0.05, 0.05, 0.05, 0.5],
        ],
        "arxiv" => &[
            &[0.50, 0.55, 0.55, 0.54, 0.61, 0.61],
            &[0.45, 0.50, 0.55, 0.55, 0.58, 0.60],
            &[0.45, 0.45, 0.50, 0.54, 0.51, 0.56],
            &[0.46, 0.45, 0.46, 0.50, 0.54, 0.50],
            &[0.39, 0.42, 0.49, 0.46, 0.50, 0.51],
            &[0.39, 0.40, 0.44, 0.50, 0.49, 0.50],
        ],
        // The source labels this table like the non-Condorcet StrongBorda one;
        // the caption ("Gap") is taken as authoritative.
        "gap" => &[
            &[0.5, 0.8, 0.8, 0.51, 0.2],
            &[0.2, 0.5, 0.8, 0.2, 0.8],
            &[0.2, 0.2, 0.5, 0.8, 0.8],
            &[0.49, 0.8, 0.2, 0.5, 0.2],
            &[0.8, 0.2, 0.2, 0.8, 0.5],
        ],
        "ncstrongborda" => &[
            &[0.5, 0.05, 0.55, 0.55, 0.55, 0.55],
            &[0.95, 0.5, 0.95, 0.95, 0.45, 0.45],
            &[0.45, 0.05, 0.5, 0.95, 0.95, 0.95],
            &[0.45, 0.05, 0.05, 0.5, 0.95, 0.95],
            &[0.45, 0.55, 0.05, 0.05, 0.5, 0.95],
            &[0.45, 0.55, 0.05, 0.05, 0.05, 0.5],
        ],
        "nccyclic9" => &[
            &[0.5, 0.4, 0.6, 0.1, 0.6, 0.6, 0.6, 0.6, 0.6],
            &[0.6, 0.5, 0.4, 0.6, 0.1, 0.6, 0.6, 0.6, 0.6],
            &[0.4, 0.6, 0.5, 0.6, 0.6, 0.1, 0.6, 0.6, 0.6],
            &[0.9, 0.4, 0.4, 0.5, 0.1, 0.9, 0.6, 0.6, 0.4],
            &[0.4, 0.9, 0.4, 0.9, 0.5, 0.1, 0.4, 0.6, 0.6],
            &[0.4, 0.4, 0.9, 0.1, 0.9, 0.5, 0.6, 0.4, 0.6],
            &[0.4, 0.4, 0.4, 0.4, 0.6, 0.4, 0.5, 0.1, 0.9],
            &[0.4, 0.4, 0.4, 0.4, 0.4, 0.6, 0.9, 0.5, 0.1],
            &[0.4, 0.4, 0.4, 0.6, 0.4, 0.4, 0.1, 0.9, 0.5],
        ],
        "mslr5c" => &[
            &[0.500, 0.535, 0.613, 0.757, 0.765],
            &[0.465, 0.500, 0.580, 0.727, 0.738],
            &[0.387, 0.420, 0.500, 0.659, 0.669],
            &[0.243, 0.273, 0.341, 0.500, 0.510],
            &[0.235, 0.262, 0.331, 0.490, 0.500],
        ],
        "mslr5nc" => &[
            &[0.500, 0.484, 0.519, 0.529, 0.518],
            &[0.516, 0.500, 0.481, 0.530, 0.539],
            &[0.481, 0.519, 0.500, 0.504, 0.512],
            &[0.471, 0.470, 0.496, 0.500, 0.503],
            &[0.482, 0.461, 0.488, 0.497, 0.500],
        ],
        _ => return None,
    };
    Some(rows.iter().map(|r| r.to_vec()).collect())
}

/// Looks up a built-in dataset by its lowercase identifier.
pub fn builtin_dataset(name: &str) -> Result<PreferenceMatrix, DatasetError> {
    let rows = builtin_rows(name).ok_or_else(|| DatasetError::Unknown { name: name.to_string() })?;
    Ok(PreferenceMatrix::new(name, &rows).expect("built-in matrices are valid"))
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixFile {
    name: String,
    matrix: Vec<Vec<f64>>,
}

/// Reads a matrix from `path`.
///
/// Files ending in `.csv` hold `K` lines of `K` comma-separated values and
/// take their name from the file stem. Anything else is parsed as JSON
/// `{"name": ..., "matrix": [[...], ...]}`.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<PreferenceMatrix, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |message: String| LoadError::Parse { path: path.to_path_buf(), message };
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (name, rows) = if is_csv {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("matrix")
            .to_string();
        (name, parse_csv_rows(&text).map_err(parse_err)?)
    } else {
        let file: MatrixFile = serde_json::from_str(&text).map_err(|e| {
            parse_err(format!("{e} (line {}, column {})", e.line(), e.column()))
        })?;
        (file.name, file.matrix)
    };
    let k = rows.len();
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(parse_err(format!(
            "matrix is not square: {k} rows but row {} has {} columns",
            row + 1,
            r.len()
        )));
    }
    PreferenceMatrix::new(name, &rows).map_err(|source| LoadError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_csv_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, field)| {
                field.trim().parse::<f64>().map_err(|e| {
                    format!("line {}, column {}: `{}`: {e}", lineno + 1, col + 1, field.trim())
                })
            })
            .collect::<Result<Vec<f64>, String>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("file contains no rows".to_string());
    }
    Ok(rows)
}

/// Resolves a dataset argument: a built-in name, or a path to a matrix file.
pub fn resolve_dataset(name_or_path: &str) -> Result<PreferenceMatrix, ResolveError> {
    if DATASET_NAMES.contains(&name_or_path) {
        return Ok(builtin_dataset(name_or_path)?);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return Ok(load_matrix(path)?);
    }
    Err(DatasetError::Unknown { name: name_or_path.to_string() }.into())
}

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Load(#[from] LoadError),
}
