use std::collections::BTreeMap;

use rayon::prelude::*;
use sdrsma::channel::{dbm_to_linear, generate_channels, ChannelSet};
use sdrsma::optimizer::{optimize_group, subset_search, ScaOptions, SearchOptions};
use sdrsma::precoder::CommonGroup;
use sdrsma::rates::{evaluate_mismatched, ReceiverCsi};
use sdrsma::rng::derive_seed;
use sdrsma::{Error, Result};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{CsiMode, ExperimentConfig, Scheme};

/// Sum rate of one scheme in one trial, with the common group it used.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sum_rate: f64,
    pub winner: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub scheme: Scheme,
    pub pt_dbm: f64,
    pub csi_mode: CsiMode,
    /// One entry per trial, in trial order starting from trial 0.
    pub samples: Vec<Sample>,
    pub mean: f64,
    pub ci_halfwidth: f64,
}

impl CellResult {
    pub fn trials(&self) -> usize {
        self.samples.len()
    }

    pub fn sum_rates(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.sum_rate).collect()
    }

    /// Most frequent common group; ties go to the smallest label.
    pub fn winner_mode(&self) -> String {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.winner.as_str()).or_default() += 1;
        }
        let mut best: Option<(&str, usize)> = None;
        for (label, n) in counts {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((label, n));
            }
        }
        best.map(|(l, _)| l.to_string()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Ordered by scheme, then transmit power, then CSI mode, as configured.
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn cell(&self, scheme: Scheme, pt_dbm: f64, csi_mode: CsiMode) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.pt_dbm == pt_dbm && c.csi_mode == csi_mode)
    }
}

/// Sample mean and the Student-t confidence half-width.
pub fn mean_and_halfwidth(values: &[f64], confidence: f64) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::INFINITY);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + 0.5 * confidence);
    (mean, t * (var / n as f64).sqrt())
}

/// Channels of trial `index`, shared by every power level and CSI mode.
pub fn trial_channels(cfg: &ExperimentConfig, index: u64) -> Result<ChannelSet> {
    generate_channels(&cfg.channel.with_seed(derive_seed(cfg.sweep.seed, index)))
}

/// Sum rates of `schemes` for one channel realization at one power level.
pub fn evaluate_schemes(
    cfg: &ExperimentConfig,
    channels: &ChannelSet,
    pt_dbm: f64,
    csi: CsiMode,
    schemes: &[Scheme],
) -> Result<Vec<Sample>> {
    let budget = dbm_to_linear(pt_dbm);
    let weights = cfg.weights();
    let imperfect = csi == CsiMode::Imperfect;
    let channels = if imperfect {
        channels.clone()
    } else {
        channels.with_perfect_csi()
    };
    let sca = ScaOptions {
        tolerance: cfg.sweep.tolerance,
        max_iter: cfg.sweep.max_iter,
        ..Default::default()
    };
    let receiver: ReceiverCsi = cfg.sweep.receiver;
    let k = channels.num_users();

    if schemes.contains(&Scheme::SdRsmaExclusion) {
        let opts = SearchOptions {
            sca,
            baseline_competes: false,
            imperfect_csi: imperfect,
            receiver,
        };
        let search = subset_search(&channels, &weights, budget, &opts)?;
        return schemes
            .iter()
            .map(|s| {
                let (group, sr) = match s {
                    Scheme::SdRsmaExclusion => (search.winner.clone(), Some(search.report.sum_rate)),
                    Scheme::SdRsmaFull => {
                        let g = CommonGroup::all(k);
                        let sr = search.outcome(&g).and_then(|o| o.sum_rate());
                        (g, sr)
                    }
                    Scheme::BdBaseline => (CommonGroup::none(k), search.baseline_sum_rate()),
                };
                let sum_rate = sr.ok_or_else(|| Error::SolverFailure {
                    message: format!("group {} failed during the search", group.label()),
                    iterations: 0,
                    trace: Vec::new(),
                })?;
                Ok(Sample {
                    sum_rate,
                    winner: group.label(),
                })
            })
            .collect();
    }

    schemes
        .iter()
        .map(|s| {
            let group = match s {
                Scheme::SdRsmaFull => CommonGroup::all(k),
                _ => CommonGroup::none(k),
            };
            let sol = optimize_group(&channels, &group, &weights, budget, &sca, imperfect)?;
            let sum_rate = if imperfect {
                evaluate_mismatched(&sol.precoders, &channels, &weights, receiver)?.sum_rate
            } else {
                sol.report.sum_rate
            };
            Ok(Sample {
                sum_rate,
                winner: group.label(),
            })
        })
        .collect()
}

struct Cell {
    scheme: Scheme,
    pt_index: usize,
    csi: CsiMode,
    samples: Vec<Sample>,
    done: bool,
}

/// Runs every (scheme, power, CSI) cell until its confidence interval is
/// narrow enough, with at least `min_trials` and at most `max_trials` trials.
///
/// Trials are evaluated in parallel batches but consumed in trial order, so
/// the result does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_cells(cfg))
}

fn run_cells(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let s = &cfg.sweep;
    let mut cells = Vec::new();
    for &scheme in &s.schemes {
        for pt_index in 0..s.pt_dbm.len() {
            for &csi in &s.csi_modes {
                cells.push(Cell {
                    scheme,
                    pt_index,
                    csi,
                    samples: Vec::new(),
                    done: false,
                });
            }
        }
    }
    let batch = (4 * s.threads).max(1);
    let mut next_trial = 0usize;
    while cells.iter().any(|c| !c.done) {
        // (power, CSI) pairs with open cells, and which schemes they need.
        let mut work: BTreeMap<(usize, CsiMode), Vec<Scheme>> = BTreeMap::new();
        for c in cells.iter().filter(|c| !c.done) {
            work.entry((c.pt_index, c.csi)).or_default().push(c.scheme);
        }
        let work: Vec<((usize, CsiMode), Vec<Scheme>)> = work.into_iter().collect();
        let end = (next_trial + batch).min(s.max_trials);
        let results: Vec<Result<Vec<Vec<Sample>>>> = (next_trial..end)
            .into_par_iter()
            .map(|t| {
                let channels = trial_channels(cfg, t as u64)?;
                work.iter()
                    .map(|((p, csi), schemes)| evaluate_schemes(cfg, &channels, s.pt_dbm[*p], *csi, schemes))
                    .collect()
            })
            .collect();
        for (offset, trial) in results.into_iter().enumerate() {
            let trial = trial.map_err(|e| trial_error(next_trial + offset, e))?;
            for (((p, csi), schemes), samples) in work.iter().zip(trial) {
                for (scheme, sample) in schemes.iter().zip(samples) {
                    let cell = cells
                        .iter_mut()
                        .find(|c| c.scheme == *scheme && c.pt_index == *p && c.csi == *csi)
                        .expect("cell exists");
                    if cell.done {
                        continue;
                    }
                    cell.samples.push(sample);
                    cell.done = finished(&cell.samples, cfg);
                }
            }
        }
        next_trial = end;
    }
    Ok(ExperimentResult {
        cells: cells
            .into_iter()
            .map(|c| {
                let rates: Vec<f64> = c.samples.iter().map(|x| x.sum_rate).collect();
                let (mean, ci_halfwidth) = mean_and_halfwidth(&rates, s.confidence);
                CellResult {
                    scheme: c.scheme,
                    pt_dbm: s.pt_dbm[c.pt_index],
                    csi_mode: c.csi,
                    samples: c.samples,
                    mean,
                    ci_halfwidth,
                }
            })
            .collect(),
    })
}

fn finished(samples: &[Sample], cfg: &ExperimentConfig) -> bool {
    let n = samples.len();
    if n >= cfg.sweep.max_trials {
        return true;
    }
    if n < cfg.sweep.min_trials {
        return false;
    }
    let rates: Vec<f64> = samples.iter().map(|s| s.sum_rate).collect();
    mean_and_halfwidth(&rates, cfg.sweep.confidence).1 <= cfg.sweep.ci_halfwidth
}

fn trial_error(trial: usize, e: Error) -> Error {
    match e {
        Error::SolverFailure {
            message,
            iterations,
            trace,
        } => Error::SolverFailure {
            message: format!("trial {trial}: {message}"),
            iterations,
            trace,
        },
        other => other,
    }
}
