use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use driftsync_cli::commands::{cmd_run, cmd_sweep, cmd_verify, Axis};
use driftsync_cli::output::{sha256_file, RUN_LOG_HEADER, SWEEP_DETAIL_HEADER, SWEEP_HEADER};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn driftsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftsync"))
        .current_dir(root())
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("test.conf");
    fs::write(&p, text).unwrap();
    p
}

const MINIMAL: &str = "\
m = 1
rounds = 10
seed = 3
model = linear
stream.kind = rotating_hyperplane
stream.dim = 3
learner.loss = hinge
learner.learn_rate = 0.1
strategy.kind = none
";

const SMALL_DYNAMIC: &str = "\
m = 3
rounds = 200
seed = 4
model = kernel
kernel.bandwidth = 1.0
stream.kind = gaussian_xor
stream.cluster_sd = 0.3
learner.loss = hinge
learner.learn_rate = 0.3
learner.compression = truncate
learner.budget = 30
strategy.kind = dynamic
strategy.delta = 0.1
";

#[test]
fn reference_run_matches_golden_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ref");
    let o = driftsync(&["run", "--config", "configs/reference.conf", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        sha256_file(&out.join("run_log.csv")).unwrap(),
        "0aa251ed8fff167ebabdf0d92e2612b7118030275c072ada22155bf6362bf2b6"
    );
    assert_eq!(
        sha256_file(&out.join("summary.txt")).unwrap(),
        "657bb2e49c46bb0d3c9a5bcc2ce306eb4ce5e85b498f96bddc6f6b6df1ddd652"
    );
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("config configs/reference.conf\n"));
    assert!(manifest.contains("0aa251ed8fff167ebabdf0d92e2612b7118030275c072ada22155bf6362bf2b6  run_log.csv"));
}

#[test]
fn manifest_lists_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_DYNAMIC);
    let out = tmp.path().join("out");
    let res = cmd_run(&cfg, &out, None).unwrap();
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    for a in &res.artifacts[..res.artifacts.len() - 1] {
        let name = a.file_name().unwrap().to_str().unwrap();
        assert!(manifest.contains(&format!("{}  {name}", sha256_file(a).unwrap())));
    }
    let mut listed: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    listed.sort();
    assert_eq!(listed, ["manifest.txt", "run_log.csv", "summary.txt"]);
}

#[test]
fn minimal_config_communicates_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let res = cmd_run(&cfg, &tmp.path().join("out"), None).unwrap();
    assert_eq!(res.result.cum_bytes(), 0);
    let summary = fs::read_to_string(tmp.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("\ncum_bytes: 0\n"), "{summary}");
    assert!(summary.contains("PASS silent strategy communicates nothing"));
}

#[test]
fn run_log_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL_DYNAMIC}metrics_every = 7\n");
    let cfg = write_config(tmp.path(), &text);
    let res = cmd_run(&cfg, &tmp.path().join("out"), None).unwrap();

    let mut rdr = csv::Reader::from_path(tmp.path().join("out/run_log.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), RUN_LOG_HEADER.as_slice());
    let mut rows = 0;
    let mut window_bytes = 0u64;
    for (rec, point) in rdr.records().zip(&res.result.series) {
        let rec = rec.unwrap();
        rows += 1;
        assert_eq!(rec[0].parse::<u64>().unwrap(), point.t);
        assert_eq!(point.t % 7, 0);
        assert!(matches!(&rec[1], "0" | "1"));
        assert_eq!(rec[2].parse::<u64>().unwrap(), point.violations);
        window_bytes += rec[3].parse::<u64>().unwrap() + rec[4].parse::<u64>().unwrap();
        assert_eq!(rec[5].parse::<f64>().unwrap(), point.cum_loss);
        assert_eq!(rec[6].parse::<u64>().unwrap(), point.cum_error);
        assert_eq!(rec[7].parse::<f64>().unwrap(), point.mean_sv_count);
        match point.divergence_at_check {
            Some(d) => assert_eq!(rec[8].parse::<f64>().unwrap(), d),
            None => assert_eq!(&rec[8], ""),
        }
    }
    assert_eq!(rows, 200 / 7);
    let last = res.result.series.last().unwrap();
    assert_eq!(window_bytes, last.cum_bytes);
}

#[test]
fn sweep_tables_round_trip_in_value_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_DYNAMIC);
    let values = [1.0, 0.01, 0.1];
    let rows = cmd_sweep(&cfg, Axis::Delta, &values, &tmp.path().join("s"), None).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), values);

    let mut rdr = csv::Reader::from_path(tmp.path().join("s/sweep.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), SWEEP_HEADER.as_slice());
    for (rec, row) in rdr.records().zip(&rows) {
        let rec = rec.unwrap();
        assert_eq!(rec[0].parse::<f64>().unwrap(), row.value);
        assert_eq!(rec[1].parse::<f64>().unwrap(), row.cum_loss);
        assert_eq!(rec[2].parse::<u64>().unwrap(), row.cum_error);
        assert_eq!(rec[3].parse::<u64>().unwrap(), row.cum_bytes);
        assert_eq!(rec[4].parse::<u64>().unwrap(), row.violations);
        assert_eq!(rec[5].parse::<u64>().unwrap(), row.quiescence_round);
    }
    let mut rdr = csv::Reader::from_path(tmp.path().join("s/sweep_detail.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), SWEEP_DETAIL_HEADER.as_slice());
    assert_eq!(rdr.records().count(), 3);
    let manifest = fs::read_to_string(tmp.path().join("s/manifest.txt")).unwrap();
    assert!(manifest.contains("  sweep.csv\n") && manifest.contains("  sweep_detail.csv\n"));
}

#[test]
fn single_value_sweep_equals_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_DYNAMIC);
    let run = cmd_run(&cfg, &tmp.path().join("r"), None).unwrap().result;
    let rows = cmd_sweep(&cfg, Axis::Delta, &[0.1], &tmp.path().join("s"), None).unwrap();
    let row = &rows[0];
    assert_eq!(row.cum_loss, run.cum_loss());
    assert_eq!(row.cum_error, run.cum_error());
    assert_eq!(row.cum_bytes, run.cum_bytes());
    assert_eq!(row.violations, run.syncs());
    assert_eq!(row.quiescence_round, run.ledger.quiescence_round());
}

#[test]
fn delta_sweep_bytes_do_not_grow_with_delta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = root().join("configs/reference.conf");
    let rows = cmd_sweep(&cfg, Axis::Delta, &[0.01, 0.1, 1.0, 10.0], tmp.path(), None).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].cum_bytes <= w[0].cum_bytes, "{rows:?}");
    }
}

#[test]
fn tau_sweep_error_shrinks_with_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "\
m = 2
rounds = 300
seed = 8
model = kernel
stream.kind = gaussian_xor
stream.cluster_sd = 0.4
learner.loss = hinge
learner.learn_rate = 0.5
learner.reg = 0.1
learner.compression = truncate
learner.budget = 10
strategy.kind = periodic
strategy.period = 5
";
    let cfg = write_config(tmp.path(), text);
    let rows = cmd_sweep(&cfg, Axis::Tau, &[10.0, 20.0, 50.0], tmp.path(), None).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].mean_compression_error <= w[0].mean_compression_error, "{rows:?}");
    }
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("test.conf");
    fs::write(&cfg, SMALL_DYNAMIC).unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let o = Command::new(env!("CARGO_BIN_EXE_driftsync"))
            .env("DRIFTSYNC_THREADS", threads)
            .args(["sweep", "--config", cfg.to_str().unwrap(), "--axis", "delta"])
            .args(["--values", "0.5,0.05,0.2", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        tables.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn sweep_axis_must_match_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_DYNAMIC);
    let err = cmd_sweep(&cfg, Axis::Period, &[2.0], tmp.path(), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("strategy.kind = periodic"), "{err}");
    let err = cmd_sweep(&cfg, Axis::Tau, &[2.5], tmp.path(), None).unwrap_err();
    assert!(err.to_string().contains("positive integers"), "{err}");
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_DYNAMIC);
    let a = cmd_run(&cfg, &tmp.path().join("a"), None).unwrap().result;
    let b = cmd_run(&cfg, &tmp.path().join("b"), Some(4)).unwrap().result;
    let c = cmd_run(&cfg, &tmp.path().join("c"), Some(5)).unwrap().result;
    assert_eq!(a.round_loss, b.round_loss);
    assert_ne!(a.round_loss, c.round_loss);
    let summary = fs::read_to_string(tmp.path().join("c/summary.txt")).unwrap();
    assert!(summary.contains("\nseed = 5\n"));
}

#[test]
fn missing_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("learner.learn_rate = 0.1\n", ""));
    let o = driftsync(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'learner.learn_rate'"));
}

#[test]
fn malformed_line_exits_2_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{MINIMAL}m == 2\n"));
    let o = driftsync(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 10"));
}

#[test]
fn numeric_blowup_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "\
m = 2
rounds = 2000
seed = 1
model = linear
stream.kind = rotating_hyperplane
stream.dim = 4
learner.loss = squared
learner.learn_rate = 5
strategy.kind = continuous
";
    let cfg = write_config(tmp.path(), text);
    let o = driftsync(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("round") && stderr.contains("learner"), "{stderr}");
}

#[test]
fn missing_csv_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "\
m = 2
rounds = 10
seed = 1
model = linear
stream.kind = csv
stream.path = nowhere.csv
stream.label_column = 0
learner.loss = hinge
learner.learn_rate = 0.1
strategy.kind = none
";
    let cfg = write_config(tmp.path(), text);
    let o = driftsync(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn csv_stream_runs_from_config_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let mut data = String::from("label,a,b\n");
    for k in 0..40 {
        let a = (k as f64 * 0.37).sin();
        let b = (k as f64 * 0.91).cos();
        data.push_str(&format!("{},{a},{b}\n", if a + b > 0.0 { "yes" } else { "no" }));
    }
    fs::write(tmp.path().join("data.csv"), data).unwrap();
    let text = "\
m = 3
rounds = 100
seed = 1
model = kernel
stream.kind = csv
stream.path = data.csv
stream.label_column = 0
stream.positive_label = yes
stream.negative_label = no
learner.loss = hinge
learner.learn_rate = 0.5
strategy.kind = periodic
strategy.period = 2
";
    let cfg = write_config(tmp.path(), text);
    let res = cmd_run(&cfg, &tmp.path().join("o"), None).unwrap().result;
    assert!(res.shortened);
    assert_eq!(res.rounds, 13);
}

#[test]
fn verify_reference_config_passes() {
    let o = driftsync(&["verify", "--config", "configs/reference.conf"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")));
    assert!(stdout.contains("PASS loss bound"));
    assert!(stdout.contains("PASS dynamic communication bound"));
}

#[test]
fn verify_silent_strategy_is_vacuous_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let checks = cmd_verify(&cfg, None, false).unwrap();
    assert!(checks.iter().all(|c| c.holds()));
    assert!(checks.iter().any(|c| c.name.contains("silent strategy")));
}

#[test]
fn corrupted_ledger_fails_verification() {
    let o = driftsync(&["verify", "--config", "configs/reference.conf", "--corrupt-ledger"]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let fail = stdout.lines().find(|l| l.starts_with("FAIL ")).expect("a failing check");
    assert!(fail.contains("<="), "{fail}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("checks failed"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_DYNAMIC);
    for dir in ["x", "y"] {
        cmd_run(&cfg, &tmp.path().join(dir), None).unwrap();
    }
    for f in ["run_log.csv", "summary.txt", "manifest.txt"] {
        assert_eq!(
            fs::read(tmp.path().join("x").join(f)).unwrap(),
            fs::read(tmp.path().join("y").join(f)).unwrap(),
            "{f}"
        );
    }
}
