//! Plan execution: one seeded training run per cell, timed, resumable.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use deconv_core::data::{
    batches, compute_channel_stats, correlated_images, load_cifar10, load_cifar100, normalize,
    subset, ChannelStats, Dataset,
};
use deconv_core::nn::{
    accuracy_percent, build_model, softmax_xent, LrSchedule, Mode, ModelSpec, Network, Sgd,
    TrainConfig,
};
use deconv_core::{Error, Precision, Result, Rng, Scalar};

use crate::plan::{Cell, DatasetChoice, ExperimentPlan};
use crate::record::{read_record_file, write_record_file, RunRecord, RunStatus};

/// Class-mean strength of the synthetic stand-in dataset.
const SYNTH_MEAN_SCALE: f64 = 0.4;
const EVAL_BATCH: usize = 250;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub precision: Precision,
    /// Worker threads the tensor kernels may use (informational; the global
    /// pool is configured by the caller). Recorded in the manifest.
    pub threads: usize,
    /// Force exclusive, sequential timing-grade execution. Cells always run
    /// sequentially in-process; the flag is recorded so reports can tell
    /// timing-grade records from opportunistic ones.
    pub timed: bool,
}

/// Execute every cell of the plan that does not already have an on-disk
/// record. Cells whose training diverges are recorded as failed and do not
/// stop the plan.
pub fn run_plan(plan: &ExperimentPlan, opts: &RunOptions) -> Result<Vec<RunRecord>> {
    match opts.precision {
        Precision::F32 => run_plan_t::<f32>(plan, opts),
        Precision::F64 => run_plan_t::<f64>(plan, opts),
    }
}

fn run_plan_t<T: Scalar>(plan: &ExperimentPlan, opts: &RunOptions) -> Result<Vec<RunRecord>> {
    plan.validate()?;
    let records_dir = opts.out_dir.join("records");
    std::fs::create_dir_all(&records_dir)?;

    let (train, test, stats) = prepare_data::<T>(plan, opts)?;
    let mut records = Vec::new();
    for cell in plan.cells() {
        let path = records_dir.join(format!("{}.csv", cell.id()));
        if path.exists() {
            let existing = read_record_file(&path)?;
            eprintln!("cell {}: record exists, skipping", cell.id());
            records.push(existing);
            continue;
        }
        let seed = plan.cell_seed(&cell);
        let record = run_cell::<T>(plan, &cell, seed, &train, &test, &stats, opts)?;
        eprintln!(
            "cell {}: {} final_test_acc={:.2}% train={:.1}s eval={:.1}s",
            cell.id(),
            match record.status {
                RunStatus::Ok => "ok",
                RunStatus::Failed => "FAILED",
            },
            record.final_test_accuracy,
            record.total_train_seconds,
            record.eval_seconds,
        );
        write_record_file(&record, &path)?;
        records.push(record);
    }
    Ok(records)
}

type Prepared<T> = (Dataset<T>, Dataset<T>, ChannelStats);

fn prepare_data<T: Scalar>(plan: &ExperimentPlan, opts: &RunOptions) -> Result<Prepared<T>> {
    let classes = plan.dataset.class_count();
    let (full_train, full_test) = match plan.dataset {
        DatasetChoice::Cifar10 => load_cifar10::<T>(&opts.data_dir)?,
        DatasetChoice::Cifar100 => load_cifar100::<T>(&opts.data_dir)?,
        DatasetChoice::Synthetic => {
            let mut train_rng = Rng::new(Rng::derive_seed(plan.base_seed, "synth-train"));
            let mut test_rng = Rng::new(Rng::derive_seed(plan.base_seed, "synth-test"));
            let train =
                correlated_images::<T>(classes * plan.train_per_class, classes, SYNTH_MEAN_SCALE, &mut train_rng)?;
            let test =
                correlated_images::<T>(classes * plan.test_per_class, classes, SYNTH_MEAN_SCALE, &mut test_rng)?;
            (train, test)
        }
    };
    let mut train = subset(
        &full_train,
        plan.train_per_class,
        &mut Rng::new(Rng::derive_seed(plan.base_seed, "subset-train")),
    )?;
    let mut test = subset(
        &full_test,
        plan.test_per_class,
        &mut Rng::new(Rng::derive_seed(plan.base_seed, "subset-test")),
    )?;
    let stats = compute_channel_stats(&train);
    normalize(&mut train, &stats);
    normalize(&mut test, &stats);
    Ok((train, test, stats))
}

fn run_cell<T: Scalar>(
    plan: &ExperimentPlan,
    cell: &Cell,
    seed: u64,
    train: &Dataset<T>,
    test: &Dataset<T>,
    stats: &ChannelStats,
    opts: &RunOptions,
) -> Result<RunRecord> {
    let mut record = RunRecord {
        architecture: plan.architecture.as_str().to_string(),
        dataset: plan.dataset.as_str().to_string(),
        mode: cell.mode.as_str().to_string(),
        epochs: cell.epochs,
        attempt: cell.attempt,
        seed,
        status: RunStatus::Ok,
        diagnostics: String::new(),
        final_test_accuracy: 0.0,
        train_accuracy_per_epoch: Vec::new(),
        test_accuracy_per_epoch: Vec::new(),
        train_seconds_per_epoch: Vec::new(),
        total_train_seconds: 0.0,
        eval_seconds: 0.0,
        precision: T::PRECISION.as_str().to_string(),
        threads: opts.threads,
        augment: plan.augment,
        channel_mean: stats.mean,
        channel_std: stats.std,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };

    let mut rng = Rng::new(seed);
    let spec = ModelSpec {
        architecture: plan.architecture,
        norm: cell.mode,
        class_count: train.class_count,
    };
    let mut net = build_model::<T>(&spec, &plan.deconv, &mut rng)?;
    let config = TrainConfig {
        learning_rate: plan.learning_rate,
        batch_size: plan.batch_size,
        epochs: cell.epochs,
        seed,
        momentum: plan.momentum,
        weight_decay: plan.weight_decay,
        lr_schedule: LrSchedule::CosineToZero,
        augment: plan.augment,
    };
    let steps_per_epoch = train.len().div_ceil(plan.batch_size);
    let total_steps = steps_per_epoch * cell.epochs;
    let mut opt = Sgd::new();
    let mut global_step = 0usize;

    for _epoch in 0..cell.epochs {
        let mut train_time = Duration::ZERO;
        let mut hits = 0.0;
        let mut seen = 0.0;
        for (x, labels) in batches(train, plan.batch_size, &mut rng, plan.augment)? {
            let lr = config.lr_at(global_step, total_steps);
            let started = Instant::now();
            let step = (|| -> Result<(T, deconv_core::Tensor<T>)> {
                let logits = net.forward(&x, Mode::Train)?;
                let (loss, grad) = softmax_xent(&logits, &labels)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        layer: format!("loss at step {global_step}"),
                    });
                }
                net.backward(&grad)?;
                opt.step(&mut net, &config, lr)?;
                Ok((loss, logits))
            })();
            train_time += started.elapsed();
            match step {
                Ok((_, logits)) => {
                    hits += accuracy_percent(&logits, &labels)? * labels.len() as f64;
                    seen += labels.len() as f64;
                }
                Err(
                    e @ (Error::Divergence { .. } | Error::NonFinite { .. } | Error::NotPositiveDefinite { .. }),
                ) => {
                    record.status = RunStatus::Failed;
                    record.diagnostics = e.to_string();
                    record.train_seconds_per_epoch.push(train_time.as_secs_f64());
                    record.total_train_seconds =
                        record.train_seconds_per_epoch.iter().sum::<f64>().max(1e-9);
                    return Ok(record);
                }
                Err(other) => return Err(other),
            }
            global_step += 1;
        }
        record.train_seconds_per_epoch.push(train_time.as_secs_f64());
        record.train_accuracy_per_epoch.push(hits / seen);

        let eval_started = Instant::now();
        let test_acc = evaluate(&mut net, test)?;
        record.eval_seconds += eval_started.elapsed().as_secs_f64();
        record.test_accuracy_per_epoch.push(test_acc);
    }

    record.total_train_seconds = record.train_seconds_per_epoch.iter().sum();
    record.final_test_accuracy = *record.test_accuracy_per_epoch.last().unwrap_or(&0.0);
    Ok(record)
}

fn evaluate<T: Scalar>(net: &mut Network<T>, ds: &Dataset<T>) -> Result<f64> {
    let mut rng = Rng::new(0); // order is irrelevant for accuracy
    let mut hits = 0.0;
    let mut seen = 0.0;
    for (x, labels) in batches(ds, EVAL_BATCH, &mut rng, false)? {
        let logits = net.forward(&x, Mode::Eval)?;
        hits += accuracy_percent(&logits, &labels)? * labels.len() as f64;
        seen += labels.len() as f64;
    }
    Ok(hits / seen)
}
