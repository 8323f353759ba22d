//! Report files: raw records, baseline comparison, and plot-ready series.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use deconv_core::{Error, Result};

use crate::metrics::{avg_sq_dev, classify_value, time_ratios, Classification, ThresholdMode};
use crate::record::{to_csv, RunRecord, RunStatus};

pub const BASELINE_HEADER: [&str; 10] = [
    "source",
    "arch_index",
    "arch",
    "dataset",
    "mode",
    "epochs",
    "original",
    "reproduced",
    "reported_class",
    "note",
];

/// One row of a baseline CSV: the original published accuracy for a cell,
/// optionally with the reference study's own reproduced average and its
/// reported classification.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub source: String,
    pub arch: String,
    pub dataset: String,
    pub mode: String,
    pub epochs: usize,
    pub original: f64,
    pub reproduced: Option<f64>,
    pub reported_class: Option<Classification>,
    pub note: String,
}

pub fn parse_baseline(text: &str) -> Result<Vec<BaselineRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    if headers.iter().ne(BASELINE_HEADER.iter().copied()) {
        return Err(Error::InvalidConfig(format!(
            "baseline CSV header mismatch: expected {BASELINE_HEADER:?}, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    r.records()
        .map(|row| {
            let row = row.map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let field = |i: usize| row.get(i).unwrap_or_default().to_string();
            let reproduced = match row.get(7).unwrap_or_default() {
                "" => None,
                s => Some(s.parse().map_err(|_| {
                    Error::InvalidConfig(format!("baseline: bad reproduced value `{s}`"))
                })?),
            };
            let reported_class = match row.get(8).unwrap_or_default() {
                "" => None,
                s => Some(Classification::parse(s)?),
            };
            Ok(BaselineRow {
                source: field(0),
                arch: field(2),
                dataset: field(3),
                mode: field(4),
                epochs: row
                    .get(5)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::InvalidConfig("baseline: bad epochs".into()))?,
                original: row
                    .get(6)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::InvalidConfig("baseline: bad original value".into()))?,
                reproduced,
                reported_class,
                note: field(9),
            })
        })
        .collect()
}

/// Files written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub raw: PathBuf,
    pub comparison: Option<PathBuf>,
    pub series: PathBuf,
}

/// Write (a) the raw per-cell record table, (b) a comparison table against a
/// baseline when one is supplied, and (c) plot-ready long-format series of
/// accuracy and training time. Output is deterministic: rows are sorted and
/// floats use shortest round-trip formatting.
pub fn emit_report(
    records: &[RunRecord],
    baseline: Option<&[BaselineRow]>,
    threshold_mode: ThresholdMode,
    out_dir: &Path,
) -> Result<ReportPaths> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("emit_report needs at least one record".into()));
    }
    fs::create_dir_all(out_dir)?;

    let mut sorted: Vec<RunRecord> = records.to_vec();
    sorted.sort_by(|a, b| {
        (&a.architecture, &a.dataset, &a.mode, a.epochs, a.attempt).cmp(&(
            &b.architecture,
            &b.dataset,
            &b.mode,
            b.epochs,
            b.attempt,
        ))
    });

    let raw = out_dir.join("raw_records.csv");
    fs::write(&raw, to_csv(&sorted)?)?;

    // Mean final accuracy and time per cell group.
    type Key = (String, String, String, usize); // arch, dataset, mode, epochs
    let mut groups: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for r in sorted.iter().filter(|r| r.status == RunStatus::Ok) {
        groups
            .entry((r.architecture.clone(), r.dataset.clone(), r.mode.clone(), r.epochs))
            .or_default()
            .push(r);
    }

    let comparison = match baseline {
        Some(rows) => {
            let mut out = String::from(
                "arch,dataset,mode,epochs,original,attempts,reproduced_mean,classification,avg_sq_dev,consistent\n",
            );
            for ((arch, dataset, mode, epochs), rs) in &groups {
                let Some(b) = rows.iter().find(|b| {
                    &b.arch == arch && &b.dataset == dataset && &b.mode == mode && b.epochs == *epochs
                }) else {
                    continue;
                };
                let attempts: Vec<f64> = rs.iter().map(|r| r.final_test_accuracy).collect();
                let mean = attempts.iter().sum::<f64>() / attempts.len() as f64;
                let class = classify_value(b.original, mean, threshold_mode)?;
                let (dev, consistent) = avg_sq_dev(b.original, &attempts)?;
                out.push_str(&format!(
                    "{arch},{dataset},{mode},{epochs},{},{},{mean},{},{dev},{consistent}\n",
                    b.original,
                    attempts.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";"),
                    class.as_str(),
                ));
            }
            let path = out_dir.join("comparison.csv");
            fs::write(&path, out)?;
            Some(path)
        }
        None => None,
    };

    // Plot-ready long format, plus time ratios when both modes are present.
    let mut series = String::from("series,arch,dataset,mode,epochs,value\n");
    for ((arch, dataset, mode, epochs), rs) in &groups {
        let acc = rs.iter().map(|r| r.final_test_accuracy).sum::<f64>() / rs.len() as f64;
        let secs = rs.iter().map(|r| r.total_train_seconds).sum::<f64>() / rs.len() as f64;
        series.push_str(&format!("accuracy,{arch},{dataset},{mode},{epochs},{acc}\n"));
        series.push_str(&format!("train_seconds,{arch},{dataset},{mode},{epochs},{secs}\n"));
    }
    let modes: std::collections::BTreeSet<&str> =
        sorted.iter().map(|r| r.mode.as_str()).collect();
    if modes.contains("batchnorm") && modes.contains("deconv") {
        for tr in time_ratios(&sorted)? {
            series.push_str(&format!(
                "time_ratio,{},{},deconv/batchnorm,{},{}\n",
                tr.architecture, tr.dataset, tr.epochs, tr.ratio
            ));
        }
    }
    let series_path = out_dir.join("series.csv");
    fs::write(&series_path, series)?;

    Ok(ReportPaths { raw, comparison, series: series_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::test_record;

    /// The baseline fixture bundled with the harness.
    pub fn bundled_accuracy_baseline() -> Vec<BaselineRow> {
        parse_baseline(include_str!("../fixtures/baseline_accuracy.csv")).unwrap()
    }

    #[test]
    fn bundled_baseline_parses_to_120_rows() {
        let rows = bundled_accuracy_baseline();
        assert_eq!(rows.len(), 120);
        assert!(rows.iter().all(|r| r.reproduced.is_some() && r.reported_class.is_some()));
        assert_eq!(rows.iter().filter(|r| r.dataset == "cifar10").count(), 60);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        assert!(parse_baseline("arch,original\nx,1\n").is_err());
    }

    #[test]
    fn report_without_baseline_has_no_comparison() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![test_record("vgg-mini", "cifar10", "batchnorm", 1, 0, 10.0)];
        let paths = emit_report(&records, None, ThresholdMode::Points, dir.path()).unwrap();
        assert!(paths.raw.exists());
        assert!(paths.comparison.is_none());
        assert!(paths.series.exists());
        let series = fs::read_to_string(&paths.series).unwrap();
        assert!(series.contains("accuracy,vgg-mini,cifar10,batchnorm,1,50"));
        assert!(!series.contains("time_ratio"));
    }

    #[test]
    fn report_is_byte_stable_across_reruns_and_input_orders() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut records = vec![
            test_record("vgg-mini", "cifar10", "batchnorm", 1, 0, 10.0),
            test_record("vgg-mini", "cifar10", "batchnorm", 1, 1, 11.0),
            test_record("vgg-mini", "cifar10", "deconv", 1, 0, 30.0),
            test_record("vgg-mini", "cifar10", "deconv", 1, 1, 31.5),
            test_record("resnet-mini", "cifar10", "batchnorm", 1, 0, 9.0),
            test_record("resnet-mini", "cifar10", "deconv", 1, 0, 28.0),
        ];
        let p1 = emit_report(&records, None, ThresholdMode::Points, dir1.path()).unwrap();
        records.reverse();
        let p2 = emit_report(&records, None, ThresholdMode::Points, dir2.path()).unwrap();
        assert_eq!(
            fs::read_to_string(&p1.raw).unwrap(),
            fs::read_to_string(&p2.raw).unwrap()
        );
        assert_eq!(
            fs::read_to_string(&p1.series).unwrap(),
            fs::read_to_string(&p2.series).unwrap()
        );
        let series = fs::read_to_string(&p1.series).unwrap();
        assert!(series.contains("time_ratio,vgg-mini,cifar10,deconv/batchnorm,1,"));
    }

    #[test]
    fn raw_table_round_trips_through_parse() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            test_record("vgg-mini", "cifar10", "deconv", 1, 1, 31.5),
            test_record("vgg-mini", "cifar10", "batchnorm", 1, 0, 10.0),
        ];
        let paths = emit_report(&records, None, ThresholdMode::Points, dir.path()).unwrap();
        let text = fs::read_to_string(&paths.raw).unwrap();
        let parsed = crate::record::from_csv(&text).unwrap();
        // Same multiset: emitted table is the sorted records.
        assert_eq!(parsed.len(), 2);
        assert!(records.iter().all(|r| parsed.contains(r)));
    }

    #[test]
    fn comparison_uses_the_attempt_mean() {
        let dir = tempfile::tempdir().unwrap();
        let mut r1 = test_record("VGG-16", "cifar10", "batchnorm", 1, 0, 10.0);
        r1.final_test_accuracy = 20.0;
        let mut r2 = test_record("VGG-16", "cifar10", "batchnorm", 1, 1, 10.0);
        r2.final_test_accuracy = 10.0;
        let baseline = vec![BaselineRow {
            source: "t".into(),
            arch: "VGG-16".into(),
            dataset: "cifar10".into(),
            mode: "batchnorm".into(),
            epochs: 1,
            original: 14.12,
            reproduced: None,
            reported_class: None,
            note: String::new(),
        }];
        let paths =
            emit_report(&[r1, r2], Some(&baseline), ThresholdMode::Points, dir.path()).unwrap();
        let text = fs::read_to_string(paths.comparison.unwrap()).unwrap();
        // mean 15 > 14.12 → better; avg_sq_dev = ((5.88)² + (4.12)²)/2 ≈ 25.8 → inconsistent
        assert!(text.contains("VGG-16,cifar10,batchnorm,1,14.12,20;10,15,better,"), "{text}");
        assert!(text.trim_end().ends_with("false"), "{text}");
    }
}
