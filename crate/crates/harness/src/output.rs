//! CSV and JSON persistence of experiment records, and the regret-exponent
//! fit.

use std::io::Write;
use std::path::Path;

use flsvi_core::ExperimentRecord;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const CSV_COLUMNS: [&str; 7] = [
    "episode",
    "return",
    "inst_regret",
    "cum_regret",
    "mean_bonus",
    "subsample_distinct",
    "discarded",
];

/// C-style `%.12g`: 12 significant digits, trailing zeros dropped, exponent
/// form outside `[1e-4, 1e12)`.
pub fn format_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_g12).unwrap_or_default()
}

pub fn write_csv<W: Write>(record: &ExperimentRecord, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for e in &record.episodes {
        w.write_record([
            e.episode.to_string(),
            format_g12(e.episode_return),
            opt(e.inst_regret),
            opt(e.cum_regret),
            format_g12(e.mean_bonus),
            e.subsample_distinct.to_string(),
            u8::from(e.discarded).to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_csv_file(record: &ExperimentRecord, path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    write_csv(record, std::io::BufWriter::new(file))
}

/// Least-squares slope of `ln R_k` on `ln k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Fits `R_k ≈ c·k^p` over episodes `k > K/2` (integer division) with
/// `R_k > 0`. Needs at least three points; the standard error uses `n - 2`
/// degrees of freedom.
pub fn fit_exponent(cum_regret: &[f64]) -> Option<ExponentFit> {
    let half = cum_regret.len() / 2;
    let pts: Vec<(f64, f64)> = cum_regret
        .iter()
        .enumerate()
        .skip(half)
        .filter(|(_, &r)| r > 0.0)
        .map(|(i, &r)| (((i + 1) as f64).ln(), r.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Some(ExponentFit {
        exponent: slope,
        stderr,
        points: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub csv: Option<String>,
    pub final_cum_regret: Option<f64>,
    pub exponent: Option<ExponentFit>,
    pub discards: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub label: Option<String>,
    pub episodes: usize,
    pub runs: Vec<RunSummary>,
    pub mean_final_cum_regret: Option<f64>,
    pub std_final_cum_regret: Option<f64>,
}

impl ExperimentSummary {
    pub fn from_runs(config_hash: String, label: Option<String>, episodes: usize, runs: Vec<RunSummary>) -> Self {
        let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_cum_regret).collect();
        let (mean, std) = if finals.is_empty() {
            (None, None)
        } else {
            let n = finals.len() as f64;
            let m = finals.iter().sum::<f64>() / n;
            let v = finals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            (Some(m), Some(v.sqrt()))
        };
        Self {
            config_hash,
            label,
            episodes,
            runs,
            mean_final_cum_regret: mean,
            std_final_cum_regret: std,
        }
    }

    pub fn failed(&self) -> bool {
        self.runs.iter().any(|r| r.error.is_some())
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}
