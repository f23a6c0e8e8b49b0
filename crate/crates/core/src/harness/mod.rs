//! Synthetic data, experiment orchestration and persistence.

mod data;
mod experiment;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use data::{generate_matching, generate_synthetic, Dataset, MATCHING_DESC_DIM, MATCHING_TAG, SYNTHETIC_TAG};
pub use experiment::{
    mean_half_width, run_experiment, summarize, ExperimentConfig, ExperimentReport, ExperimentResult, RepRow, ALL,
    LSSVM, RANDOM, RANDOM_ALL,
};

pub const CSV_HEADER: [&str; 8] = [
    "problem",
    "method",
    "train_runtime_s",
    "train_distortion",
    "test_runtime_s",
    "test_distortion",
    "hw_train",
    "hw_test",
];

/// Pretty JSON with object keys sorted.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn results_csv(results: &[ExperimentResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in results {
        w.write_record([
            r.problem.clone(),
            r.method.clone(),
            r.train_runtime_s.to_string(),
            r.train_distortion.to_string(),
            r.test_runtime_s.to_string(),
            r.test_distortion.to_string(),
            r.hw_train.to_string(),
            r.hw_test.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Table 1 layout: runtimes in seconds, distortions in percent.
pub fn results_table(results: &[ExperimentResult]) -> String {
    let mut out = format!(
        "{:<14} {:<11} {:>20} {:>18} {:>20} {:>18}\n",
        "problem", "method", "train time (s)", "train dist (%)", "test time (s)", "test dist (%)"
    );
    for r in results {
        out += &format!(
            "{:<14} {:<11} {:>20} {:>18} {:>20} {:>18}\n",
            r.problem,
            r.method,
            format!("{:.4} ± {:.4}", r.train_runtime_s, r.hw_train_runtime),
            format!("{:.2} ± {:.2}", 100.0 * r.train_distortion, 100.0 * r.hw_train),
            format!("{:.4} ± {:.4}", r.test_runtime_s, r.hw_test_runtime),
            format!("{:.2} ± {:.2}", 100.0 * r.test_distortion, 100.0 * r.hw_test),
        );
    }
    out
}
