//! Report formatting: CSV tables with a fixed header row and float
//! formatting at 9 significant digits, plus atomic file writes.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::eval::{EvalReport, SweepRow};

/// Format a float with 9 significant digits.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Write bytes atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = match dir {
        Some(d) => d.join(format!(".{file_name}.tmp")),
        None => Path::new(&format!(".{file_name}.tmp")).to_path_buf(),
    };
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialize a value to pretty JSON and write it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub const SWEEP_CSV_HEADER: &str = "num_steps,normality,median_round_trip_error,accuracy";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.num_steps,
            sig9(r.normality),
            sig9(r.median_round_trip_error),
            sig9(r.accuracy)
        ));
    }
    out
}

pub const ABLATION_CSV_HEADER: &str = "label,mode,lambda_mu,lambda_sigma,lambda_skew,\
accuracy_mean,accuracy_std,energy_mean,energy_std,normality";

pub fn ablation_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.label,
            r.mode,
            sig9(r.weights.mu),
            sig9(r.weights.sigma),
            sig9(r.weights.skew),
            sig9(r.accuracy_mean),
            sig9(r.accuracy_std),
            sig9(r.energy_mean),
            sig9(r.energy_std),
            sig9(r.normality)
        ));
    }
    out
}

pub const EVAL_CSV_HEADER: &str = "accuracy,train_points,test_points";

/// Report of a single train-then-evaluate run.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TrainEvalReport {
    pub accuracy: f64,
    pub train_points: usize,
    pub test_points: usize,
}

pub fn eval_csv(r: &TrainEvalReport) -> String {
    format!("{EVAL_CSV_HEADER}\n{},{},{}\n", sig9(r.accuracy), r.train_points, r.test_points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_has_nine_significant_digits() {
        assert_eq!(sig9(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(sig9(0.25), "2.50000000e-1");
    }

    #[test]
    fn sweep_csv_shape() {
        let rows = vec![SweepRow {
            num_steps: 31,
            normality: 0.1,
            median_round_trip_error: 0.01,
            accuracy: 0.9,
        }];
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("31,"));
    }

    #[test]
    fn write_atomic_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"hello");
        assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1);
    }
}
