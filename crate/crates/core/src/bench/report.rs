//! CSV output. Floats use 12 significant digits; rows are sorted by
//! (dataset, variant, run_id, t).

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::diagnostics::DiversityProfile;
use super::{AggregateResult, BenchError};

pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIVERSITY_FILE: &str = "diversity.csv";

/// `%.12g`-style formatting: 12 significant digits, trailing zeros trimmed,
/// scientific notation outside `[1e-5, 1e12)`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |source| BenchError::Csv { path: path.to_path_buf(), source }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, File), BenchError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    Ok((path, file))
}

/// Per-run regret curves: `dataset,variant,run_id,seed,t,cum_regret`.
pub fn write_curves<W: Write>(result: &AggregateResult, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "variant", "run_id", "seed", "t", "cum_regret"])?;
    for v in &result.variants {
        for run in &v.runs {
            for (t, value) in result.grid.iter().zip(&run.curve) {
                w.write_record([
                    result.dataset.clone(),
                    v.variant.name().to_string(),
                    run.run_id.to_string(),
                    run.seed.to_string(),
                    t.to_string(),
                    format_float(*value),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Final-regret statistics: `dataset,variant,T,runs,mean_regret,std_regret,std_over_mean`.
pub fn write_summary<W: Write>(result: &AggregateResult, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "variant", "T", "runs", "mean_regret", "std_regret", "std_over_mean"])?;
    for v in &result.variants {
        w.write_record([
            result.dataset.clone(),
            v.variant.name().to_string(),
            result.horizon.to_string(),
            v.runs.len().to_string(),
            format_float(v.final_mean),
            format_float(v.final_std),
            format_float(v.std_over_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean self-comparison share per arm: `dataset,variant,arm,mean_share`.
/// Arms are 1-based. Variants that never compared an arm with itself are
/// left out.
pub fn write_diversity<W: Write>(result: &AggregateResult, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "variant", "arm", "mean_share"])?;
    for v in &result.variants {
        let hists: Vec<Vec<u64>> = v.runs.iter().map(|r| r.self_comparisons.clone()).collect();
        let profile = DiversityProfile::from_histograms(&hists, &result.summary);
        if profile.empty {
            continue;
        }
        for (arm, share) in profile.mean_share.iter().enumerate() {
            w.write_record([
                result.dataset.clone(),
                v.variant.name().to_string(),
                (arm + 1).to_string(),
                format_float(*share),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &AggregateResult, dir: &Path) -> Result<PathBuf, BenchError> {
    let (path, file) = create(dir, CURVES_FILE)?;
    write_curves(result, io::BufWriter::new(file)).map_err(csv_err(&path))?;
    Ok(path)
}

pub fn emit_summary(result: &AggregateResult, dir: &Path) -> Result<PathBuf, BenchError> {
    let (path, file) = create(dir, SUMMARY_FILE)?;
    write_summary(result, io::BufWriter::new(file)).map_err(csv_err(&path))?;
    Ok(path)
}

pub fn emit_diversity(result: &AggregateResult, dir: &Path) -> Result<PathBuf, BenchError> {
    let (path, file) = create(dir, DIVERSITY_FILE)?;
    write_diversity(result, io::BufWriter::new(file)).map_err(csv_err(&path))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CurveRow {
    pub dataset: String,
    pub variant: String,
    pub run_id: usize,
    pub seed: u64,
    pub t: u64,
    pub cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub variant: String,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub runs: usize,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub std_over_mean: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, BenchError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>, BenchError> {
    read_rows(path)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, BenchError> {
    read_rows(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(200.0), "200");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_float(2.0 / 3.0 * 1e5), "66666.6666667");
        assert_eq!(format_float(-0.125), "-0.125");
        assert_eq!(format_float(1.5e-7), "1.5e-7");
        assert_eq!(format_float(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_float(999999999999.9), "1e12");
    }

    #[test]
    fn formatted_values_keep_twelve_digits() {
        for &x in &[std::f64::consts::PI, 1234.5678901234567, 9.87654321e-3, 4.2e20] {
            let back: f64 = format_float(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-12, "{x} -> {back}");
        }
    }
}
