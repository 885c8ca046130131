//! CSV histories and JSON metadata.

use std::fs;
use std::path::Path;

use serde::Serialize;

use erlq::{RunHistory, RunRecord};

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError};

/// Column set and order of every history CSV.
pub const HISTORY_COLUMNS: [&str; 16] = [
    "iter",
    "f",
    "f_estimate",
    "gap",
    "relative_gap",
    "k_err_sq",
    "sigma_err_sq",
    "eta1",
    "eta2",
    "phi",
    "s_hat",
    "grad_k_std",
    "grad_sigma_std",
    "rejected",
    "backtracks",
    "oracle_eval",
];

/// 17 significant digits, so every finite f64 round-trips.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn record_row(r: &RunRecord) -> Vec<String> {
    vec![
        r.iter.to_string(),
        opt(r.f),
        opt(r.f_estimate),
        opt(r.gap),
        opt(r.relative_gap),
        opt(r.k_err_sq),
        opt(r.sigma_err_sq),
        opt(r.eta1),
        opt(r.eta2),
        opt(r.phi),
        opt(r.s_hat),
        opt(r.grad_k_std),
        opt(r.grad_sigma_std),
        r.rejected.to_string(),
        r.backtracks.to_string(),
        r.oracle_eval.to_string(),
    ]
}

/// Rows kept for output: every `every`-th record plus the last one.
pub fn thin(history: &RunHistory, every: usize) -> Vec<&RunRecord> {
    let n = history.records.len();
    history
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.iter % every == 0 || *i + 1 == n)
        .map(|(_, r)| r)
        .collect()
}

pub fn history_csv(records: &[&RunRecord]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HISTORY_COLUMNS)?;
    for r in records {
        w.write_record(record_row(r))?;
    }
    w.flush()?;
    Ok(w.into_inner().expect("in-memory writer"))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn write_history(path: &Path, records: &[&RunRecord]) -> Result<(), CliError> {
    let bytes = history_csv(records).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    write_bytes(path, &bytes)
}

pub fn version_string() -> String {
    format!("erlq {}-g{}", env!("CARGO_PKG_VERSION"), env!("ERLQ_GIT_REV"))
}

fn now_rfc3339() -> String {
    use time::format_description::well_known::Rfc3339;
    time::OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "unknown".into())
}

/// Run metadata; `config` is the fully resolved configuration and parses
/// back to an identical [`ExperimentConfig`].
#[derive(Debug, Serialize)]
pub struct Meta {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub config: ExperimentConfig,
}

pub struct MetaClock {
    command: String,
    started_at: String,
}

impl MetaClock {
    pub fn start(command: &str) -> Self {
        MetaClock {
            command: command.into(),
            started_at: now_rfc3339(),
        }
    }

    pub fn finish(self, config: &ExperimentConfig, seed: u64) -> Meta {
        Meta {
            command: self.command,
            version: version_string(),
            config_hash: config.hash(),
            seed,
            started_at: self.started_at,
            finished_at: now_rfc3339(),
            config: config.clone(),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn thinning_keeps_last_row() {
        let mut h = RunHistory::default();
        for i in 0..=7 {
            h.push(RunRecord::new(i, DVector::zeros(1), DMatrix::zeros(1, 1)));
        }
        let iters: Vec<usize> = thin(&h, 3).iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 3, 6, 7]);
    }

    #[test]
    fn empty_options_are_empty_fields() {
        let r = RunRecord::new(2, DVector::zeros(1), DMatrix::zeros(1, 1));
        let text = String::from_utf8(history_csv(&[&r]).unwrap()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "2,,,,,,,,,,,,,0,0,false");
    }
}
