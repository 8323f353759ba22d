//! Experiment plans and the flat key-value plan file format.
//!
//! A plan file is plain text, one `key = value` per line, `#` comments and
//! blank lines ignored. Every key has a default, so the empty file is a
//! valid plan. Unknown keys are rejected.
//!
//! ```text
//! architecture      = vgg-mini        # vgg-mini | resnet-mini
//! dataset           = cifar10         # cifar10 | cifar100 | synthetic
//! train_per_class   = 500
//! test_per_class    = 100
//! modes             = batchnorm,deconv
//! epochs            = 1               # comma list, e.g. 1,20,100
//! attempts          = 3
//! base_seed         = 42
//! learning_rate     = 0.1
//! batch_size        = 128
//! momentum          = 0.9
//! weight_decay      = 0.0005
//! augment           = true
//! block_size        = 64
//! sampling_stride   = 3
//! epsilon           = 0.00001
//! newton_iterations = 5
//! running_momentum  = 0.1
//! timed             = false
//! ```

use deconv_core::nn::{Architecture, NormMode};
use deconv_core::patching::DeconvConfig;
use deconv_core::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetChoice {
    Cifar10,
    Cifar100,
    /// Correlated-channel synthetic images at CIFAR shape; needs no files.
    Synthetic,
}

impl DatasetChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetChoice::Cifar10 => "cifar10",
            DatasetChoice::Cifar100 => "cifar100",
            DatasetChoice::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cifar10" => Ok(DatasetChoice::Cifar10),
            "cifar100" => Ok(DatasetChoice::Cifar100),
            "synthetic" => Ok(DatasetChoice::Synthetic),
            other => Err(Error::InvalidConfig(format!("unknown dataset `{other}`"))),
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            DatasetChoice::Cifar100 => 100,
            _ => 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub architecture: Architecture,
    pub dataset: DatasetChoice,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub modes: Vec<NormMode>,
    pub epoch_settings: Vec<usize>,
    pub attempts: usize,
    pub base_seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub augment: bool,
    pub deconv: DeconvConfig,
    pub timed: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            architecture: Architecture::VggMini,
            dataset: DatasetChoice::Cifar10,
            train_per_class: 500,
            test_per_class: 100,
            modes: vec![NormMode::BatchNorm, NormMode::Deconv],
            epoch_settings: vec![1],
            attempts: 3,
            base_seed: 42,
            learning_rate: 0.1,
            batch_size: 128,
            momentum: 0.9,
            weight_decay: 5e-4,
            augment: true,
            deconv: DeconvConfig::default(),
            timed: false,
        }
    }
}

/// One experiment cell: a (mode, epochs, attempt) triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub mode: NormMode,
    pub epochs: usize,
    pub attempt: usize,
}

impl Cell {
    /// Stable identity string, also the record file stem.
    pub fn id(&self) -> String {
        format!("{}-e{}-a{}", self.mode.as_str(), self.epochs, self.attempt)
    }
}

impl ExperimentPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let mut plan = ExperimentPlan::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("plan line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad_num = |what: &str| Error::InvalidConfig(format!("plan key `{key}`: bad {what} `{value}`"));
            match key {
                "architecture" => plan.architecture = Architecture::parse(value)?,
                "dataset" => plan.dataset = DatasetChoice::parse(value)?,
                "train_per_class" => plan.train_per_class = value.parse().map_err(|_| bad_num("integer"))?,
                "test_per_class" => plan.test_per_class = value.parse().map_err(|_| bad_num("integer"))?,
                "modes" => {
                    plan.modes = value
                        .split(',')
                        .map(|m| NormMode::parse(m.trim()))
                        .collect::<Result<Vec<_>>>()?;
                }
                "epochs" => {
                    plan.epoch_settings = value
                        .split(',')
                        .map(|e| e.trim().parse().map_err(|_| bad_num("integer list")))
                        .collect::<Result<Vec<_>>>()?;
                }
                "attempts" => plan.attempts = value.parse().map_err(|_| bad_num("integer"))?,
                "base_seed" => plan.base_seed = value.parse().map_err(|_| bad_num("integer"))?,
                "learning_rate" => plan.learning_rate = value.parse().map_err(|_| bad_num("number"))?,
                "batch_size" => plan.batch_size = value.parse().map_err(|_| bad_num("integer"))?,
                "momentum" => plan.momentum = value.parse().map_err(|_| bad_num("number"))?,
                "weight_decay" => plan.weight_decay = value.parse().map_err(|_| bad_num("number"))?,
                "augment" => plan.augment = parse_bool(value, key)?,
                "block_size" => plan.deconv.block_size = value.parse().map_err(|_| bad_num("integer"))?,
                "sampling_stride" => plan.deconv.sampling_stride = value.parse().map_err(|_| bad_num("integer"))?,
                "epsilon" => plan.deconv.epsilon = value.parse().map_err(|_| bad_num("number"))?,
                "newton_iterations" => plan.deconv.newton_iterations = value.parse().map_err(|_| bad_num("integer"))?,
                "running_momentum" => plan.deconv.running_momentum = value.parse().map_err(|_| bad_num("number"))?,
                "timed" => plan.timed = parse_bool(value, key)?,
                other => {
                    return Err(Error::InvalidConfig(format!("unknown plan key `{other}`")));
                }
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attempts == 0 {
            return Err(Error::InvalidConfig("attempts must be >= 1".into()));
        }
        if self.modes.is_empty() || self.epoch_settings.is_empty() {
            return Err(Error::InvalidConfig("modes and epochs must be nonempty".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        self.deconv.validate()
    }

    /// Enumerate cells in deterministic order: mode-major, then epochs, then
    /// attempt.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &epochs in &self.epoch_settings {
                for attempt in 0..self.attempts {
                    out.push(Cell { mode, epochs, attempt });
                }
            }
        }
        out
    }

    /// Cell seed: the base seed combined with a hash of the cell identity.
    pub fn cell_seed(&self, cell: &Cell) -> u64 {
        Rng::derive_seed(self.base_seed, &cell.id())
    }
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::InvalidConfig(format!("plan key `{key}`: bad bool `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plan_is_all_defaults() {
        let plan = ExperimentPlan::parse("").unwrap();
        assert_eq!(plan.batch_size, 128);
        assert_eq!(plan.learning_rate, 0.1);
        assert_eq!(plan.deconv.sampling_stride, 3);
        assert_eq!(plan.attempts, 3);
    }

    #[test]
    fn plan_round_trips_keys_and_comments() {
        let text = "
            # desk-scale trend plan
            architecture = resnet-mini
            dataset = synthetic
            modes = deconv
            epochs = 1,20
            attempts = 2
            base_seed = 7
            augment = false
            sampling_stride = 5
            timed = true
        ";
        let plan = ExperimentPlan::parse(text).unwrap();
        assert_eq!(plan.architecture, Architecture::ResNetMini);
        assert_eq!(plan.dataset, DatasetChoice::Synthetic);
        assert_eq!(plan.modes, vec![NormMode::Deconv]);
        assert_eq!(plan.epoch_settings, vec![1, 20]);
        assert_eq!(plan.attempts, 2);
        assert!(!plan.augment);
        assert!(plan.timed);
        assert_eq!(plan.deconv.sampling_stride, 5);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(ExperimentPlan::parse("learningrate = 0.1").is_err());
    }

    #[test]
    fn cell_enumeration_and_count() {
        let plan = ExperimentPlan::parse("modes = batchnorm,deconv\nepochs = 1\nattempts = 3").unwrap();
        let cells = plan.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0].id(), "batchnorm-e1-a0");
        assert_eq!(cells[5].id(), "deconv-e1-a2");
    }

    #[test]
    fn cell_seeds_are_distinct_and_reproducible() {
        let plan = ExperimentPlan::parse("epochs = 1,20,100").unwrap();
        let cells = plan.cells();
        let seeds: Vec<u64> = cells.iter().map(|c| plan.cell_seed(c)).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len(), "cell seeds collide");
        assert_eq!(seeds, cells.iter().map(|c| plan.cell_seed(c)).collect::<Vec<_>>());
    }
}
