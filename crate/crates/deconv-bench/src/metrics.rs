//! Reproduction-classification and consistency metrics.

use std::collections::BTreeMap;

use deconv_core::{Error, Result};

use crate::record::{RunRecord, RunStatus};

/// Reproducibility band in absolute percentage points. A reproduced value
/// more than this far below the original is a failed reproduction.
pub const THRESHOLD_POINTS: f64 = 10.0;
/// Relative-error variant of the same band.
pub const THRESHOLD_RELATIVE: f64 = 0.10;
/// Averaged squared deviation below which repeated attempts count as
/// consistent.
pub const CONSISTENCY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Better,
    WithinThreshold,
    Failed,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Better => "better",
            Classification::WithinThreshold => "within_threshold",
            Classification::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "better" => Ok(Classification::Better),
            "within_threshold" => Ok(Classification::WithinThreshold),
            "failed" => Ok(Classification::Failed),
            other => Err(Error::InvalidConfig(format!("unknown classification `{other}`"))),
        }
    }
}

/// How the reproducibility band is measured.
///
/// `Points` treats the threshold as 10 absolute percentage points, which is
/// the reading consistent with the reference tables' own color coding;
/// `Relative` treats it as 10% of the original value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    #[default]
    Points,
    Relative,
}

impl ThresholdMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "points" => Ok(ThresholdMode::Points),
            "relative" => Ok(ThresholdMode::Relative),
            other => Err(Error::InvalidConfig(format!("unknown threshold mode `{other}`"))),
        }
    }
}

/// Classify a reproduced accuracy against the original: strictly above is
/// `Better`; within the band below is `WithinThreshold`; further below is
/// `Failed`.
pub fn classify_value(original: f64, reproduced: f64, mode: ThresholdMode) -> Result<Classification> {
    for (name, v) in [("original", original), ("reproduced", reproduced)] {
        if !(0.0..=100.0).contains(&v) || !v.is_finite() {
            return Err(Error::InvalidConfig(format!("{name} accuracy {v} outside [0, 100]")));
        }
    }
    if reproduced > original {
        return Ok(Classification::Better);
    }
    let band = match mode {
        ThresholdMode::Points => THRESHOLD_POINTS,
        ThresholdMode::Relative => THRESHOLD_RELATIVE * original,
    };
    if original - reproduced <= band {
        Ok(Classification::WithinThreshold)
    } else {
        Ok(Classification::Failed)
    }
}

/// Mean of squared deviations of the attempts from the original value, and
/// whether that mean is below the consistency threshold.
pub fn avg_sq_dev(original: f64, attempts: &[f64]) -> Result<(f64, bool)> {
    if attempts.is_empty() {
        return Err(Error::InvalidConfig("avg_sq_dev needs at least one attempt".into()));
    }
    let value = attempts
        .iter()
        .map(|a| (a - original) * (a - original))
        .sum::<f64>()
        / attempts.len() as f64;
    Ok((value, value < CONSISTENCY_THRESHOLD))
}

/// Wall-clock ratio of the two modes for one (architecture, dataset, epochs)
/// group.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeRatio {
    pub architecture: String,
    pub dataset: String,
    pub epochs: usize,
    pub batchnorm_seconds: f64,
    pub deconv_seconds: f64,
    pub ratio: f64,
    /// Deconvolution has always been observed to cost more; a ratio at or
    /// below one is flagged rather than silently accepted.
    pub anomaly: bool,
}

/// Per-(architecture, dataset, epochs) deconv/batchnorm ratio of mean total
/// training seconds over successful attempts. Groups missing one of the two
/// modes are an error.
pub fn time_ratios(records: &[RunRecord]) -> Result<Vec<TimeRatio>> {
    type Key = (String, String, usize);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == RunStatus::Ok) {
        let entry = groups
            .entry((r.architecture.clone(), r.dataset.clone(), r.epochs))
            .or_default();
        match r.mode.as_str() {
            "batchnorm" => entry.0.push(r.total_train_seconds),
            "deconv" => entry.1.push(r.total_train_seconds),
            _ => {}
        }
    }
    let mut out = Vec::new();
    for ((architecture, dataset, epochs), (bn, nd)) in groups {
        if bn.is_empty() || nd.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "time ratio for {architecture}/{dataset}/e{epochs}: missing {} runs",
                if bn.is_empty() { "batchnorm" } else { "deconv" }
            )));
        }
        let bn_mean = bn.iter().sum::<f64>() / bn.len() as f64;
        let nd_mean = nd.iter().sum::<f64>() / nd.len() as f64;
        let ratio = nd_mean / bn_mean;
        out.push(TimeRatio {
            architecture,
            dataset,
            epochs,
            batchnorm_seconds: bn_mean,
            deconv_seconds: nd_mean,
            ratio,
            anomaly: ratio <= 1.0,
        });
    }
    Ok(out)
}
