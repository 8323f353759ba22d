//! Runner and CLI behavior: cell enumeration, resume, determinism, exit
//! codes.

use std::path::Path;
use std::process::Command;

use deconv_bench::record::{read_record_file, RunStatus};
use deconv_bench::{run_plan, ExperimentPlan, RunOptions};
use deconv_core::Precision;

fn tiny_plan(extra: &str) -> ExperimentPlan {
    let base = "
        architecture = vgg-mini
        dataset = synthetic
        train_per_class = 8
        test_per_class = 4
        batch_size = 16
        epochs = 1
        attempts = 3
        base_seed = 42
        augment = false
    ";
    ExperimentPlan::parse(&format!("{base}\n{extra}")).unwrap()
}

fn opts(out: &Path, precision: Precision) -> RunOptions {
    RunOptions {
        data_dir: out.join("data"),
        out_dir: out.to_path_buf(),
        precision,
        threads: 0,
        timed: false,
    }
}

#[test]
fn two_modes_three_attempts_produce_six_records() {
    let dir = tempfile::tempdir().unwrap();
    let plan = tiny_plan("");
    let records = run_plan(&plan, &opts(dir.path(), Precision::F32)).unwrap();
    assert_eq!(records.len(), 6);
    for r in &records {
        assert_eq!(r.status, RunStatus::Ok);
        assert!((0.0..=100.0).contains(&r.final_test_accuracy));
        assert!(r.total_train_seconds > 0.0);
        assert_eq!(r.precision, "f32");
    }
    let files: Vec<_> = std::fs::read_dir(dir.path().join("records"))
        .unwrap()
        .collect::<std::io::Result<Vec<_>>>()
        .unwrap();
    assert_eq!(files.len(), 6);
}

#[test]
fn deleting_one_record_reruns_only_that_cell() {
    let dir = tempfile::tempdir().unwrap();
    let plan = tiny_plan("attempts = 1");
    let first = run_plan(&plan, &opts(dir.path(), Precision::F32)).unwrap();
    assert_eq!(first.len(), 2);

    let records_dir = dir.path().join("records");
    let victim = records_dir.join("deconv-e1-a0.csv");
    let keeper = records_dir.join("batchnorm-e1-a0.csv");
    let keeper_before = std::fs::read_to_string(&keeper).unwrap();
    let victim_before = std::fs::read_to_string(&victim).unwrap();
    let keeper_mtime = std::fs::metadata(&keeper).unwrap().modified().unwrap();
    std::fs::remove_file(&victim).unwrap();

    let second = run_plan(&plan, &opts(dir.path(), Precision::F32)).unwrap();
    assert_eq!(second.len(), 2);
    // The kept record was not rewritten; the deleted cell was re-executed and,
    // accuracy being deterministic, reproduced the same accuracy fields.
    assert_eq!(std::fs::metadata(&keeper).unwrap().modified().unwrap(), keeper_mtime);
    assert_eq!(std::fs::read_to_string(&keeper).unwrap(), keeper_before);
    let regenerated = read_record_file(&victim).unwrap();
    let original = deconv_bench::record::from_csv(&victim_before).unwrap().remove(0);
    assert_eq!(regenerated.final_test_accuracy, original.final_test_accuracy);
    assert_eq!(regenerated.train_accuracy_per_epoch, original.train_accuracy_per_epoch);
}

#[test]
fn same_plan_same_seeds_bit_identical_accuracies() {
    let run_once = |dir: &Path| {
        let plan = tiny_plan("attempts = 1\nmodes = batchnorm,deconv");
        run_plan(&plan, &opts(dir, Precision::F64)).unwrap()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = run_once(d1.path());
    let b = run_once(d2.path());
    for (ra, rb) in a.iter().zip(b.iter()) {
        assert_eq!(ra.final_test_accuracy.to_bits(), rb.final_test_accuracy.to_bits());
        assert_eq!(ra.train_accuracy_per_epoch, rb.train_accuracy_per_epoch);
        assert_eq!(ra.test_accuracy_per_epoch, rb.test_accuracy_per_epoch);
    }
}

#[test]
fn divergent_cell_is_recorded_failed_and_plan_continues() {
    let dir = tempfile::tempdir().unwrap();
    let plan = tiny_plan("attempts = 1\nmodes = batchnorm\nlearning_rate = 1000000000");
    let records = run_plan(&plan, &opts(dir.path(), Precision::F32)).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].status, RunStatus::Failed);
    assert!(!records[0].diagnostics.is_empty());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deconv-bench"))
}

#[test]
fn cli_usage_errors_exit_1() {
    let out = bin().args(["run", "--plan", "/nonexistent/plan.txt"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.txt");
    std::fs::write(&plan, "no_such_key = 1\n").unwrap();
    let out = bin().args(["run", "--plan"]).arg(&plan).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cli_verify_data_missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify-data", "--dataset", "cifar10", "--dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_failed_cell_exit_3_and_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.txt");
    std::fs::write(
        &plan_path,
        "architecture = vgg-mini\ndataset = synthetic\ntrain_per_class = 8\ntest_per_class = 4\n\
         batch_size = 16\nepochs = 1\nattempts = 1\nmodes = batchnorm\nlearning_rate = 1000000000\naugment = false\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--plan"])
        .arg(&plan_path)
        .arg("--out")
        .arg(&out_dir)
        .args(["--precision", "f32"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // Records written by the run feed the report subcommand.
    let report_out = dir.path().join("report");
    let out = bin()
        .args(["report", "--records"])
        .arg(out_dir.join("records"))
        .arg("--out")
        .arg(&report_out)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(report_out.join("raw_records.csv").exists());
    assert!(report_out.join("series.csv").exists());
}
