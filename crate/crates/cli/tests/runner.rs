use amp_cli::config::{DenoiserConfig, ModeKind};
use amp_cli::output::{self, QQ_HEADER, SCALING_HEADER, TRAJECTORY_HEADER};
use amp_cli::runner::{run_sweep, Execution};
use amp_cli::{parse_config, run_experiment, ExperimentConfig, RunError};

fn small(n: usize, trials: usize, iterations: usize) -> ExperimentConfig {
    parse_config(&format!(
        r#"
[problem]
n = {n}
delta = 0.5
sparsity_rate = 0.1
snr_db = 20.0

[denoiser]
kind = "bg-mmse"

[algorithm]
iterations = {iterations}

[experiment]
trials = {trials}
seed = 11
"#
    ))
    .unwrap()
}

#[test]
fn single_trial_report_has_one_row_per_iteration_plus_start() {
    let report = run_experiment(&small(50, 1, 5), Execution::Sequential).unwrap();
    assert_eq!(report.aggregate.len(), 6);
    assert_eq!(report.state_evolution.states.len(), 6);
    assert!(report.aggregate.mse_std.iter().all(|&s| s == 0.0));
    let csv = output::trajectory_csv(&report);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], TRAJECTORY_HEADER);
    assert!(lines[1].starts_with("0,"));
    assert!(lines[6].starts_with("5,"));
}

#[test]
fn first_row_is_the_signal_energy() {
    let report = run_experiment(&small(200, 3, 4), Execution::Sequential).unwrap();
    let e0 = report.aggregate.mse_mean[0];
    assert_eq!(report.aggregate.mse_std[0], 0.0);
    assert!((e0 - report.state_evolution.states[0].output_mse).abs() < 1e-15);
}

#[test]
fn output_files_have_the_documented_shape() {
    let mut c = small(300, 4, 30);
    c.experiment.record_input_error = vec![5];
    c.experiment.qq_quantiles = 50;
    let report = run_experiment(&c, Execution::Sequential).unwrap();
    let dir = tempfile::tempdir().unwrap();
    output::write_outputs(&report, dir.path(), true).unwrap();

    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 32);
    let qq = std::fs::read_to_string(dir.path().join("qq_t5.csv")).unwrap();
    let lines: Vec<&str> = qq.lines().collect();
    assert_eq!(lines[0], QQ_HEADER);
    assert_eq!(lines.len(), 1 + 50 + 1);
    assert!(lines[51].starts_with("# ks="));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["diverged"], 0);
    assert_eq!(json["seeds"]["master"], 11);
    let echo = parse_config(json["config_toml"].as_str().unwrap()).unwrap();
    assert_eq!(echo, c);
    assert!(dir.path().join("trajectory.svg").exists());
    assert!(dir.path().join("qq_t5.svg").exists());

    // rewriting is byte-identical apart from timings
    let again = dir.path().join("again");
    output::write_outputs(&report, &again, false).unwrap();
    assert_eq!(traj, std::fs::read_to_string(again.join("trajectory.csv")).unwrap());
}

#[test]
fn seventeen_significant_digits() {
    assert_eq!(output::fmt17(0.1), "1.0000000000000001e-1");
    let v = 0.123456789012345678f64;
    assert_eq!(output::fmt17(v).parse::<f64>().unwrap(), v);
}

#[test]
fn sweep_writes_one_scaling_row_per_size() {
    let mut c = small(100, 3, 30);
    c.experiment.sweep_n = vec![100, 200];
    let sweep = run_sweep(&c, Execution::Sequential).unwrap();
    assert_eq!(sweep.scaling.len(), 2);
    assert_eq!(sweep.scaling[1].n, 200);
    assert_eq!(sweep.scaling[0].iteration, 29);
    let r = &sweep.runs[0];
    let expect = r.aggregate.mse_std[29] * 10.0;
    assert_eq!(sweep.scaling[0].std_mse_sqrtn, expect);

    let dir = tempfile::tempdir().unwrap();
    output::write_sweep(&sweep, dir.path(), false).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], SCALING_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("100,3,"));
    assert!(dir.path().join("n200/trajectory.csv").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let mut c = small(400, 6, 12);
    c.experiment.record_input_error = vec![3];
    c.experiment.qq_quantiles = 40;
    let a = run_experiment(&c, Execution::Sequential).unwrap();
    let b = run_experiment(&c, Execution::Parallel { threads: 3 }).unwrap();
    assert_eq!(output::trajectory_csv(&a), output::trajectory_csv(&b));
    assert_eq!(a.trials, b.trials);
    assert_eq!(output::qq_csv(&a.qq[0]), output::qq_csv(&b.qq[0]));
}

#[test]
fn trials_share_signal_but_not_matrix() {
    let c = small(100, 2, 3);
    let report = run_experiment(&c, Execution::Sequential).unwrap();
    let t = &report.trajectories;
    assert_eq!(t[0].initial_mse, t[1].initial_mse);
    assert_ne!(t[0].records[0].output_mse, t[1].records[0].output_mse);
}

/// IST with no thresholding on an underdetermined Gaussian matrix is a
/// Landweber iteration with step 1 > 2/‖A‖², which blows up.
fn divergent() -> ExperimentConfig {
    let mut c = small(200, 4, 200);
    c.problem.delta = 0.1;
    c.denoiser = DenoiserConfig::SoftThreshold { alpha: 0.0 };
    c.algorithm.mode = ModeKind::Ist;
    c
}

#[test]
fn majority_divergence_fails_the_experiment() {
    match run_experiment(&divergent(), Execution::Sequential) {
        Err(RunError::TooManyDiverged { diverged, trials }) => {
            assert_eq!(trials, 4);
            assert!(diverged > 2);
        }
        other => panic!("expected divergence failure, got {:?}", other.map(|r| r.diverged)),
    }
}

#[test]
fn tau_sources_all_run() {
    use amp_cli::config::TauSourceKind;
    for source in [TauSourceKind::Estimate, TauSourceKind::Oracle, TauSourceKind::Se] {
        let mut c = small(300, 2, 10);
        c.algorithm.tau_source = source;
        let r = run_experiment(&c, Execution::Sequential).unwrap();
        let last = *r.aggregate.mse_mean.last().unwrap();
        assert!(last < 0.1 * r.aggregate.mse_mean[0], "{source:?}: {last}");
    }
}
