use std::path::PathBuf;
use std::process::Command;

use sdrsma::Error;
use sdrsma_sim::config::{CsiMode, ExperimentConfig, Scheme};
use sdrsma_sim::experiment::{evaluate_schemes, mean_and_halfwidth, run_experiment, trial_channels, CellResult, Sample};
use sdrsma_sim::output::{csv_text, CSV_HEADER};

const SMALL: &str = r#"
[channel]
user_antennas = [2, 2]
bs_antennas = 4
distances_m = [50.0, 120.0]
csi_error_var = 0.1
noise_dbm = -35.0

[sweep]
pt_dbm = [10.0, 25.0]
csi_modes = ["perfect", "imperfect"]
min_trials = 3
max_trials = 4
ci_halfwidth = 0.5
seed = 9
"#;

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml(SMALL).unwrap()
}

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sdrsma-sim-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn defaults_fill_in_the_sweep() {
    let cfg = small();
    assert_eq!(cfg.sweep.schemes, Scheme::ALL.to_vec());
    assert_eq!(cfg.sweep.tolerance, 1e-6);
    assert_eq!(cfg.sweep.max_iter, 500);
    assert_eq!(cfg.sweep.confidence, 0.99);
    assert_eq!(cfg.sweep.threads, 1);
    assert_eq!(cfg.weights(), vec![0.5, 0.5]);
}

#[test]
fn invalid_configs_are_rejected() {
    let unknown = SMALL.replace("seed = 9", "seed = 9\nlabel = \"x\"");
    assert!(matches!(ExperimentConfig::from_toml(&unknown), Err(Error::Config(_))));
    let overloaded = SMALL.replace("bs_antennas = 4", "bs_antennas = 5");
    assert!(matches!(ExperimentConfig::from_toml(&overloaded), Err(Error::Config(_))));
    let bad_weights = SMALL.replace("seed = 9", "seed = 9\nweights = [0.7, 0.7]");
    assert!(matches!(ExperimentConfig::from_toml(&bad_weights), Err(Error::Config(_))));
    let few = SMALL.replace("max_trials = 4", "max_trials = 2");
    assert!(matches!(ExperimentConfig::from_toml(&few), Err(Error::Config(_))));
}

#[test]
fn halfwidth_uses_student_t_quantiles() {
    // t quantiles from standard tables: 0.975 at 9 dof and 0.995 at 4 dof.
    let values: Vec<f64> = (1..=10).map(f64::from).collect();
    let (mean, hw) = mean_and_halfwidth(&values, 0.95);
    assert_eq!(mean, 5.5);
    let s = (82.5f64 / 9.0).sqrt();
    assert!((hw - 2.262157 * s / 10f64.sqrt()).abs() <= 1e-5);
    let (mean, hw) = mean_and_halfwidth(&[1.0, 2.0, 4.0, 8.0, 16.0], 0.99);
    assert!((mean - 6.2).abs() <= 1e-12);
    let s = (148.8f64 / 4.0).sqrt();
    assert!((hw - 4.604095 * s / 5f64.sqrt()).abs() <= 1e-5);
    assert!(mean_and_halfwidth(&[3.0], 0.99).1.is_infinite());
}

#[test]
fn winner_mode_prefers_frequent_then_smallest_label() {
    let make = |labels: &[&str]| CellResult {
        scheme: Scheme::SdRsmaExclusion,
        pt_dbm: 0.0,
        csi_mode: CsiMode::Perfect,
        samples: labels
            .iter()
            .map(|l| Sample {
                sum_rate: 1.0,
                winner: l.to_string(),
            })
            .collect(),
        mean: 1.0,
        ci_halfwidth: 0.0,
    };
    assert_eq!(make(&["2", "1+2", "2"]).winner_mode(), "2");
    assert_eq!(make(&["2", "1+2"]).winner_mode(), "1+2");
}

#[test]
fn csi_modes_share_the_fading_realization() {
    let cfg = small();
    let ch = trial_channels(&cfg, 3).unwrap();
    assert_eq!(ch, trial_channels(&cfg, 3).unwrap());
    assert_ne!(ch.user(0).h, trial_channels(&cfg, 4).unwrap().user(0).h);
    assert_ne!(ch.user(0).h, ch.user(0).h_est);
    let perfect = evaluate_schemes(&cfg, &ch, 25.0, CsiMode::Perfect, &Scheme::ALL).unwrap();
    let imperfect = evaluate_schemes(&cfg, &ch, 25.0, CsiMode::Imperfect, &Scheme::ALL).unwrap();
    assert!(perfect[0].sum_rate >= perfect[1].sum_rate);
    assert_eq!(perfect[2].winner, "none");
    for (p, i) in perfect.iter().zip(&imperfect) {
        assert!(i.sum_rate < p.sum_rate);
    }
}

#[test]
fn scheme_subsets_match_the_full_search() {
    let cfg = small();
    let ch = trial_channels(&cfg, 0).unwrap();
    let all = evaluate_schemes(&cfg, &ch, 10.0, CsiMode::Perfect, &Scheme::ALL).unwrap();
    let two = evaluate_schemes(&cfg, &ch, 10.0, CsiMode::Perfect, &[Scheme::SdRsmaFull, Scheme::BdBaseline]).unwrap();
    assert!((all[1].sum_rate - two[0].sum_rate).abs() <= 1e-9);
    assert!((all[2].sum_rate - two[1].sum_rate).abs() <= 1e-9);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut cfg = small();
    let one = run_experiment(&cfg).unwrap();
    cfg.sweep.threads = 3;
    let three = run_experiment(&cfg).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.cells.len(), 3 * 2 * 2);
    for c in &one.cells {
        assert!((3..=4).contains(&c.trials()));
    }
}

#[test]
fn loose_target_stops_at_the_minimum() {
    let mut cfg = small();
    cfg.sweep.ci_halfwidth = 1e6;
    cfg.sweep.schemes = vec![Scheme::BdBaseline];
    let r = run_experiment(&cfg).unwrap();
    assert!(r.cells.iter().all(|c| c.trials() == 3));
}

#[test]
fn csv_lists_every_cell() {
    let r = run_experiment(&small()).unwrap();
    let text = csv_text(&r).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert_eq!(lines.len(), 1 + 3 * 2 * 2);
    assert!(lines[1].starts_with("sd-rsma-exclusion,10,perfect,"));
    assert!(lines.last().unwrap().starts_with("bd-baseline,25,imperfect,"));
    assert!(lines.last().unwrap().ends_with(",none"));
}

#[test]
fn cli_writes_table_and_plot_data() {
    let dir = scratch_dir("cli");
    let cfg_path = dir.join("small.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sdrsma-sim"))
        .args(["--config", cfg_path.to_str().unwrap(), "--out", dir.to_str().unwrap()])
        .args(["--schemes", "sd-rsma-full,bd-baseline", "--pt-dbm", "-5,20", "--csi", "perfect"])
        .args(["--max-trials", "3", "--threads", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("sum_rates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(csv.contains("sd-rsma-full,-5,perfect,"));
    let plot: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("sum_rates.json")).unwrap()).unwrap();
    let points = &plot["series"]["bd-baseline"]["perfect"];
    assert_eq!(points.as_array().unwrap().len(), 2);
    assert_eq!(points[1]["pt_dbm"], 20.0);
    assert_eq!(points[0]["trials"], 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cli_reports_config_errors_as_json() {
    let dir = scratch_dir("bad");
    let cfg_path = dir.join("bad.toml");
    std::fs::write(&cfg_path, SMALL.replace("bs_antennas = 4", "bs_antennas = 6")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sdrsma-sim"))
        .args(["--config", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let line = String::from_utf8(out.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(record["level"], "error");
    assert_eq!(record["kind"], "Config");
    std::fs::remove_dir_all(&dir).ok();
}
