//! One training run's results and their CSV form.
//!
//! Records are append-only: the runner writes one single-row CSV per cell
//! and never rewrites an existing file, which is what makes plans resumable.
//! Floats are serialized with Rust's shortest round-trip formatting, so
//! parsing a written record reproduces it bit for bit.

use std::fs;
use std::path::Path;

use deconv_core::{Error, Result};

pub const CSV_HEADER: [&str; 20] = [
    "architecture",
    "dataset",
    "mode",
    "epochs",
    "attempt",
    "seed",
    "status",
    "diagnostics",
    "final_test_accuracy",
    "train_accuracy_per_epoch",
    "test_accuracy_per_epoch",
    "train_seconds_per_epoch",
    "total_train_seconds",
    "eval_seconds",
    "precision",
    "threads",
    "augment",
    "channel_mean",
    "channel_std",
    "version",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Failed,
}

impl RunStatus {
    fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RunStatus::Ok),
            "failed" => Ok(RunStatus::Failed),
            other => Err(Error::InvalidConfig(format!("unknown run status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub architecture: String,
    pub dataset: String,
    pub mode: String,
    pub epochs: usize,
    pub attempt: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub diagnostics: String,
    /// Final test accuracy in percent.
    pub final_test_accuracy: f64,
    pub train_accuracy_per_epoch: Vec<f64>,
    pub test_accuracy_per_epoch: Vec<f64>,
    pub train_seconds_per_epoch: Vec<f64>,
    pub total_train_seconds: f64,
    /// Evaluation wall-clock, reported separately from training time.
    pub eval_seconds: f64,
    pub precision: String,
    pub threads: usize,
    pub augment: bool,
    pub channel_mean: [f64; 3],
    pub channel_std: [f64; 3],
    pub version: String,
}

impl RunRecord {
    pub fn cell_id(&self) -> String {
        format!("{}-e{}-a{}", self.mode, self.epochs, self.attempt)
    }

    fn to_row(&self) -> Vec<String> {
        vec![
            self.architecture.clone(),
            self.dataset.clone(),
            self.mode.clone(),
            self.epochs.to_string(),
            self.attempt.to_string(),
            self.seed.to_string(),
            self.status.as_str().to_string(),
            self.diagnostics.clone(),
            fmt_f64(self.final_test_accuracy),
            join_f64(&self.train_accuracy_per_epoch),
            join_f64(&self.test_accuracy_per_epoch),
            join_f64(&self.train_seconds_per_epoch),
            fmt_f64(self.total_train_seconds),
            fmt_f64(self.eval_seconds),
            self.precision.clone(),
            self.threads.to_string(),
            self.augment.to_string(),
            join_f64(&self.channel_mean),
            join_f64(&self.channel_std),
            self.version.clone(),
        ]
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != CSV_HEADER.len() {
            return Err(Error::InvalidConfig(format!(
                "record row has {} fields, expected {}",
                row.len(),
                CSV_HEADER.len()
            )));
        }
        let field = |i: usize| row.get(i).unwrap_or_default();
        Ok(RunRecord {
            architecture: field(0).to_string(),
            dataset: field(1).to_string(),
            mode: field(2).to_string(),
            epochs: parse_num(field(3), "epochs")?,
            attempt: parse_num(field(4), "attempt")?,
            seed: parse_num(field(5), "seed")?,
            status: RunStatus::parse(field(6))?,
            diagnostics: field(7).to_string(),
            final_test_accuracy: parse_f64(field(8), "final_test_accuracy")?,
            train_accuracy_per_epoch: split_f64(field(9))?,
            test_accuracy_per_epoch: split_f64(field(10))?,
            train_seconds_per_epoch: split_f64(field(11))?,
            total_train_seconds: parse_f64(field(12), "total_train_seconds")?,
            eval_seconds: parse_f64(field(13), "eval_seconds")?,
            precision: field(14).to_string(),
            threads: parse_num(field(15), "threads")?,
            augment: field(16) == "true",
            channel_mean: split_f64_3(field(17))?,
            channel_std: split_f64_3(field(18))?,
            version: field(19).to_string(),
        })
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn join_f64(vs: &[f64]) -> String {
    vs.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::InvalidConfig(format!("bad {what} value `{s}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidConfig(format!("bad {what} value `{s}`")))
}

fn split_f64(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|p| parse_f64(p, "list entry")).collect()
}

fn split_f64_3(s: &str) -> Result<[f64; 3]> {
    let v = split_f64(s)?;
    v.try_into()
        .map_err(|_| Error::InvalidConfig("expected 3 channel values".into()))
}

/// Serialize records to CSV bytes (header + one row per record), in the
/// given order.
pub fn to_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for r in records {
        w.write_record(r.to_row())
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn from_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::InvalidConfig("record CSV header mismatch".into()));
    }
    r.records()
        .map(|row| {
            let row = row.map_err(|e| Error::InvalidConfig(e.to_string()))?;
            RunRecord::from_row(&row)
        })
        .collect()
}

pub fn write_record_file(record: &RunRecord, path: &Path) -> Result<()> {
    fs::write(path, to_csv(std::slice::from_ref(record))?)?;
    Ok(())
}

pub fn read_record_file(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path)?;
    let mut records = from_csv(&text)?;
    match records.len() {
        1 => Ok(records.remove(0)),
        n => Err(Error::InvalidConfig(format!(
            "{}: expected 1 record, found {n}",
            path.display()
        ))),
    }
}

/// Minimal record for metric tests.
pub fn test_record(
    arch: &str,
    dataset: &str,
    mode: &str,
    epochs: usize,
    attempt: usize,
    total_train_seconds: f64,
) -> RunRecord {
    RunRecord {
        architecture: arch.to_string(),
        dataset: dataset.to_string(),
        mode: mode.to_string(),
        epochs,
        attempt,
        seed: 0,
        status: RunStatus::Ok,
        diagnostics: String::new(),
        final_test_accuracy: 50.0,
        train_accuracy_per_epoch: vec![50.0],
        test_accuracy_per_epoch: vec![50.0],
        train_seconds_per_epoch: vec![total_train_seconds],
        total_train_seconds,
        eval_seconds: 0.1,
        precision: "f32".to_string(),
        threads: 1,
        augment: true,
        channel_mean: [0.0; 3],
        channel_std: [1.0; 3],
        version: "test".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunRecord {
        RunRecord {
            architecture: "vgg-mini".into(),
            dataset: "cifar10".into(),
            mode: "deconv".into(),
            epochs: 1,
            attempt: 2,
            seed: 0xDEADBEEF,
            status: RunStatus::Ok,
            diagnostics: String::new(),
            final_test_accuracy: 37.9,
            train_accuracy_per_epoch: vec![21.300000000000004],
            test_accuracy_per_epoch: vec![37.9],
            train_seconds_per_epoch: vec![12.345678901234567],
            total_train_seconds: 12.345678901234567,
            eval_seconds: 0.5,
            precision: "f32".into(),
            threads: 2,
            augment: true,
            channel_mean: [0.1, 0.2, 0.30000000000000004],
            channel_std: [1.0, 0.9, 1.1],
            version: "0.1.0".into(),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let records = vec![sample(), test_record("a", "b", "batchnorm", 20, 0, 3.25)];
        let text = to_csv(&records).unwrap();
        let back = from_csv(&text).unwrap();
        assert_eq!(back, records);
        // Byte stability: re-emitting parsed records reproduces the text.
        assert_eq!(to_csv(&back).unwrap(), text);
    }

    #[test]
    fn record_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cell.csv");
        let r = sample();
        write_record_file(&r, &path).unwrap();
        assert_eq!(read_record_file(&path).unwrap(), r);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        assert!(from_csv("a,b,c\n1,2,3\n").is_err());
    }

    #[test]
    fn failed_record_keeps_diagnostics() {
        let mut r = sample();
        r.status = RunStatus::Failed;
        r.diagnostics = "non-finite loss at step 3".into();
        let text = to_csv(std::slice::from_ref(&r)).unwrap();
        let back = from_csv(&text).unwrap();
        assert_eq!(back[0].status, RunStatus::Failed);
        assert_eq!(back[0].diagnostics, "non-finite loss at step 3");
    }
}
