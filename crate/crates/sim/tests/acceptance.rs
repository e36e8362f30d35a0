//! End-to-end acceptance checks, one line per criterion.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use sdrsma::channel::{generate_channels, ChannelConfig, ChannelSet};
use sdrsma::decompositions::{ho_gsvd, left_pseudo_inverse};
use sdrsma::optimizer::{run_sca, RateTerm, ScaOptions, WsrInstance};
use sdrsma::oracle::{symbol_oracle, OracleOptions};
use sdrsma::precoder::{block_leakage, diagonalization_residuals, CommonGroup, PowerAllocation, PrecoderDesign, PrecoderSet};
use sdrsma::rates::{matched_sinrs, stream_sinrs, ReceiverCsi, SinrTable};
use sdrsma::rng::{complex_gaussian_matrix, stream_rng};
use sdrsma::CMat;
use sdrsma_sim::config::{CsiMode, ExperimentConfig, Scheme};
use sdrsma_sim::experiment::{mean_and_halfwidth, run_experiment, ExperimentResult};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reference(alpha: f64, mu2: f64, seed: u64) -> ChannelSet {
    let mut cfg = ChannelConfig::reference_correlated(alpha, seed);
    cfg.csi_error_var = mu2;
    generate_channels(&cfg).unwrap()
}

fn random_group(rng: &mut impl Rng, k: usize, allow_empty: bool) -> CommonGroup {
    let lo = if allow_empty { 0 } else { 1 };
    CommonGroup::from_mask(rng.random_range(lo..(1u64 << k)), k)
}

fn random_load(rng: &mut impl Rng, design: &PrecoderDesign, budget: f64) -> PrecoderSet {
    let mut p = PowerAllocation::zeros(design);
    for x in p.common.iter_mut().chain(p.private.iter_mut().flatten()) {
        *x = rng.random_range(0.01..1.0);
    }
    let used = p.constraint_power(&design.common_cost());
    let p = p.scaled(budget * rng.random_range(0.2..1.0) / used);
    design.load(&p, budget).unwrap()
}

fn diagonalization() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let alpha = if seed % 2 == 0 { 0.8 } else { 0.0 };
        let ch = reference(alpha, 0.0, seed);
        let design = PrecoderDesign::new(&ch, &CommonGroup::all(4), false).unwrap();
        for (_, r) in diagonalization_residuals(&design, &ch, false) {
            worst = worst.max(r);
        }
    }
    check(worst <= 1e-8, format!("worst normalized residual {worst:.2e} over 50 instances"))
}

fn off_diagonal(d: &CMat) -> f64 {
    let mut acc = 0.0;
    for r in 0..d.nrows() {
        for c in 0..d.ncols() {
            if r != c {
                acc += d[(r, c)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

fn ho_gsvd_suite() -> Outcome {
    let (mut recon, mut unit, mut diag) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let n = 1 + (seed % 6) as usize;
        let count = 1 + ((seed / 6) % 5) as usize;
        let mut rng = stream_rng(seed, 99);
        let mats: Vec<CMat> = (0..count)
            .map(|i| {
                let m = n + rng.random_range(0..3);
                complex_gaussian_matrix(&mut stream_rng(seed, i as u64), m, n, 1.0)
            })
            .collect();
        let f = ho_gsvd(&mats).unwrap();
        let vih = f.v_inv_h();
        for c in f.v.column_iter() {
            unit = unit.max((c.norm() - 1.0).abs());
        }
        for (i, a) in mats.iter().enumerate() {
            recon = recon.max((f.reconstruct(i) - a).norm() / a.norm());
            for c in f.u[i].column_iter() {
                unit = unit.max((c.norm() - 1.0).abs());
            }
            let d = left_pseudo_inverse(&f.u[i]).unwrap() * a * &vih;
            diag = diag.max(off_diagonal(&d) / (1.0 + d.norm()));
        }
    }
    check(
        recon <= 1e-8 && unit <= 1e-8 && diag <= 1e-8,
        format!("reconstruction {recon:.2e}, unit norm {unit:.2e}, off-diagonal {diag:.2e} over 100 seeds"),
    )
}

fn bd_leakage() -> Outcome {
    let mut rng = stream_rng(3, 0);
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let ch = reference(if seed % 2 == 0 { 0.8 } else { 0.0 }, 0.0, 100 + seed);
        let group = random_group(&mut rng, 4, true);
        let design = PrecoderDesign::new(&ch, &group, false).unwrap();
        let set = random_load(&mut rng, &design, 1000.0);
        worst = worst.max(block_leakage(&set, &ch, false));
    }
    check(worst <= 1e-8, format!("worst relative leakage {worst:.2e} over 50 instances"))
}

fn power_equivalence() -> Outcome {
    let mut rng = stream_rng(4, 0);
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let ch = reference(if seed % 2 == 0 { 0.8 } else { 0.0 }, 0.0, 200 + seed);
        let group = random_group(&mut rng, 4, true);
        let design = PrecoderDesign::new(&ch, &group, false).unwrap();
        let budget = rng.random_range(1.0..1e4);
        let set = random_load(&mut rng, &design, budget);
        let direct = set.transmit_power();
        let via_cost = set.constraint_power();
        worst = worst.max((direct - via_cost).abs() / direct);
    }
    check(worst <= 1e-8, format!("worst relative difference {worst:.2e} over 100 assemblies"))
}

fn worst_relative(a: &SinrTable, b: &SinrTable) -> f64 {
    a.labelled()
        .iter()
        .zip(b.labelled())
        .map(|((_, x), (_, y))| (x - y).abs() / x)
        .fold(0.0, f64::max)
}

fn oracle_agreement() -> Outcome {
    let mut rng = stream_rng(5, 0);
    let (mut matched, mut mismatched) = (0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let ch = reference(if seed % 2 == 0 { 0.8 } else { 0.0 }, 0.1, 300 + seed);
        let group = random_group(&mut rng, 4, false);
        let opts = OracleOptions {
            seed,
            ..Default::default()
        };
        let perfect = ch.with_perfect_csi();
        let design = PrecoderDesign::new(&perfect, &group, false).unwrap();
        let set = random_load(&mut rng, &design, 1000.0);
        let measured = symbol_oracle(&set, &perfect, &opts).unwrap();
        matched = matched.max(worst_relative(&matched_sinrs(&set, &perfect).unwrap(), &measured));

        let design = PrecoderDesign::new(&ch, &group, true).unwrap();
        let set = random_load(&mut rng, &design, 1000.0);
        let measured = symbol_oracle(&set, &ch, &opts).unwrap();
        let analytic = stream_sinrs(&set, &ch, ReceiverCsi::Estimated).unwrap();
        mismatched = mismatched.max(worst_relative(&analytic, &measured));
    }
    check(
        matched <= 0.05 && mismatched <= 0.05,
        format!("worst relative SINR gap: matched {matched:.4}, mismatched {mismatched:.4} (20 instances, 1e5 symbols)"),
    )
}

fn toy_terms(rng: &mut impl Rng, streams: usize) -> WsrInstance {
    let noise = 0.1;
    let mut g = |lo: f64, hi: f64| rng.random_range(lo..hi);
    match streams {
        1 => WsrInstance {
            common_streams: 0,
            private_sizes: vec![1],
            cost: vec![1.0],
            members: vec![],
            common_terms: vec![],
            private_terms: vec![vec![term(0, (0, g(0.5, 3.0)), vec![], noise)]],
            weights: vec![1.0],
            fractions: vec![0.0],
        },
        2 => WsrInstance {
            common_streams: 1,
            private_sizes: vec![1],
            cost: vec![g(1.0, 2.5), 1.0],
            members: vec![0],
            common_terms: vec![vec![term(0, (0, g(0.5, 3.0)), vec![(1, g(0.05, 1.0))], noise)]],
            private_terms: vec![vec![term(0, (1, g(0.5, 3.0)), vec![], noise)]],
            weights: vec![1.0],
            fractions: vec![1.0],
        },
        _ => {
            let w0 = g(0.2, 0.8);
            WsrInstance {
                common_streams: 1,
                private_sizes: vec![1, 1],
                cost: vec![g(1.0, 2.5), 1.0, 1.0],
                members: vec![0],
                common_terms: vec![vec![term(0, (0, g(0.5, 3.0)), vec![(1, g(0.05, 1.0))], noise)]],
                private_terms: vec![
                    vec![term(0, (1, g(0.5, 3.0)), vec![], noise)],
                    vec![term(1, (2, g(0.5, 3.0)), vec![(0, g(0.05, 1.0))], noise)],
                ],
                weights: vec![w0, 1.0 - w0],
                fractions: vec![1.0, 0.0],
            }
        }
    }
}

fn term(user: usize, signal: (usize, f64), interference: Vec<(usize, f64)>, noise: f64) -> RateTerm {
    RateTerm {
        user,
        signal,
        interference,
        noise,
    }
}

/// Best true WSR on a grid over `sum_i cost_i p_i <= budget`.
fn grid_optimum(inst: &WsrInstance, budget: f64, steps: usize) -> f64 {
    let n = inst.num_vars();
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let p: Vec<f64> = idx
            .iter()
            .zip(&inst.cost)
            .map(|(&i, c)| budget * i as f64 / (steps as f64 * c))
            .collect();
        if inst.constraint_power(&p) <= budget * (1.0 + 1e-12) {
            best = best.max(inst.true_wsr(&p));
        }
        let mut d = 0;
        loop {
            if d == n {
                return best;
            }
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn sca_behavior() -> Outcome {
    let opts = ScaOptions::default();
    let mut rng = stream_rng(6, 0);
    let (mut monotone, mut converged, mut max_iters) = (true, 0, 0);
    for seed in 0..50u64 {
        let cfg = if seed % 2 == 0 {
            ChannelConfig::reference_correlated(0.8, 400 + seed)
        } else {
            ChannelConfig::reference_far_near(400 + seed)
        };
        let ch = generate_channels(&cfg).unwrap();
        let group = random_group(&mut rng, 4, false);
        let design = PrecoderDesign::new(&ch, &group, false).unwrap();
        let inst = WsrInstance::from_design(&design, &ch, &[0.25; 4]).unwrap();
        if let Ok(out) = run_sca(&inst, 1000.0, &opts) {
            converged += 1;
            max_iters = max_iters.max(out.iterations());
            monotone &= out.trace.windows(2).all(|w| w[1].surrogate_opt >= w[0].surrogate_opt - 1e-9);
        }
    }
    let mut worst_ratio = f64::INFINITY;
    for t in 0..12 {
        let inst = toy_terms(&mut rng, 1 + t % 3);
        let budget = rng.random_range(0.5..5.0);
        let out = run_sca(&inst, budget, &opts).unwrap();
        let steps = if inst.num_vars() == 3 { 150 } else { 2000 };
        worst_ratio = worst_ratio.min(out.wsr / grid_optimum(&inst, budget, steps));
    }
    check(
        monotone && converged == 50 && worst_ratio >= 0.99,
        format!(
            "monotone {monotone}, converged {converged}/50 (max {max_iters} iterations), worst toy WSR / grid {worst_ratio:.5}"
        ),
    )
}

fn scenario(alpha: f64, distances: [f64; 4]) -> ExperimentConfig {
    let text = format!(
        r#"
[channel]
user_antennas = [4, 4, 4, 4]
bs_antennas = 16
distances_m = {distances:?}
alpha = {alpha:?}
csi_error_var = 0.1
noise_dbm = -35.0

[sweep]
pt_dbm = [30.0]
csi_modes = ["perfect", "imperfect"]
min_trials = 200
max_trials = 200
seed = 2024
"#
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

/// Lower end of the two-sided 95% interval of the paired difference.
fn paired_lower_bound(result: &ExperimentResult, a: Scheme, b: Scheme) -> f64 {
    let x = result.cell(a, 30.0, CsiMode::Perfect).unwrap().sum_rates();
    let y = result.cell(b, 30.0, CsiMode::Perfect).unwrap().sum_rates();
    let d: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
    let (mean, hw) = mean_and_halfwidth(&d, 0.95);
    mean - hw
}

fn mean(result: &ExperimentResult, s: Scheme, csi: CsiMode) -> f64 {
    result.cell(s, 30.0, csi).unwrap().mean
}

fn figure_ordering(a: &ExperimentResult, b: &ExperimentResult) -> Outcome {
    use Scheme::*;
    let p = CsiMode::Perfect;
    let (ae, af, ab) = (mean(a, SdRsmaExclusion, p), mean(a, SdRsmaFull, p), mean(a, BdBaseline, p));
    let (bf, bb) = (mean(b, SdRsmaFull, p), mean(b, BdBaseline, p));
    let a_gap = paired_lower_bound(a, SdRsmaExclusion, BdBaseline);
    let b_gap = paired_lower_bound(b, SdRsmaExclusion, BdBaseline);
    let pass = ae >= af && af >= ab && a_gap > 0.0 && (bf - bb).abs() <= 1.0 && b_gap > 0.0;
    check(
        pass,
        format!(
            "A: excl {ae:.3} >= full {af:.3} >= BD {ab:.3}, excl-BD 95% lower {a_gap:.3}; \
             B: |full-BD| {:.3}, excl-BD 95% lower {b_gap:.4} (200 trials, 30 dBm)",
            (bf - bb).abs()
        ),
    )
}

fn imperfect_below_perfect(a: &ExperimentResult, b: &ExperimentResult) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in [("A", a), ("B", b)] {
        for s in Scheme::ALL {
            let perfect = mean(r, s, CsiMode::Perfect);
            let imperfect = mean(r, s, CsiMode::Imperfect);
            pass &= imperfect <= perfect;
            parts.push(format!("{name}/{s} {imperfect:.2}<={perfect:.2}"));
        }
    }
    check(pass, parts.join(", "))
}

fn deterministic_csv() -> Outcome {
    let dir = std::env::temp_dir().join(format!("sdrsma-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        r#"
[channel]
user_antennas = [4, 4, 4, 4]
bs_antennas = 16
distances_m = [250.0, 250.0, 50.0, 50.0]
csi_error_var = 0.1
noise_dbm = -35.0

[sweep]
pt_dbm = [10.0, 30.0]
csi_modes = ["perfect", "imperfect"]
min_trials = 3
max_trials = 5
seed = 77
"#,
    )
    .unwrap();
    let run = |tag: &str| {
        let out = dir.join(tag);
        let status = Command::new(env!("CARGO_BIN_EXE_sdrsma-sim"))
            .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out.join("sum_rates.csv")).unwrap()
    };
    let first = run("first");
    let second = run("second");
    std::fs::remove_dir_all(&dir).ok();
    check(
        first == second && !first.is_empty(),
        format!("two single-threaded runs, {} bytes, identical: {}", first.len(), first == second),
    )
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |id, name, (o, t): (Outcome, Duration)| {
        println!("criterion {id} [{name}]: {} ({:.1} s) {}", if o.pass { "PASS" } else { "FAIL" }, t.as_secs_f64(), o.detail);
        results.push((id, name, o, t));
    };
    record(1, "common-message diagonalization", timed(diagonalization));
    record(2, "HO-GSVD invariants", timed(ho_gsvd_suite));
    record(3, "block-diagonal leakage", timed(bd_leakage));
    record(4, "power-constraint equivalence", timed(power_equivalence));
    record(5, "analytic vs symbol-level SINR", timed(oracle_agreement));
    record(6, "SCA behavior", timed(sca_behavior));

    let start = Instant::now();
    let a = run_experiment(&scenario(0.8, [50.0; 4])).unwrap();
    let b = run_experiment(&scenario(0.0, [250.0, 250.0, 50.0, 50.0])).unwrap();
    let sweep = start.elapsed();
    record(7, "scenario ordering", (figure_ordering(&a, &b), sweep));
    record(8, "imperfect CSI below perfect", (imperfect_below_perfect(&a, &b), Duration::ZERO));
    record(9, "byte-identical reruns", timed(deterministic_csv));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
