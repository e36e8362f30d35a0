use std::path::Path;

use super::barrier::{solve_inner, InnerOptions};
use super::instance::WsrInstance;
use crate::channel::ChannelSet;
use crate::precoder::{CommonGroup, PowerAllocation, PrecoderDesign, PrecoderSet};
use crate::rates::{matched_report, RateReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop once consecutive surrogate optima differ by at most this (bits/s/Hz).
    pub tolerance: f64,
    pub max_iter: usize,
    pub inner: InnerOptions,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iter: 500,
            inner: InnerOptions::default(),
        }
    }
}

/// One outer iteration: the accepted iterate and its objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub iteration: usize,
    pub powers: Vec<f64>,
    pub surrogate_opt: f64,
    pub true_wsr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub powers: PowerAllocation,
    pub wsr: f64,
    pub trace: Vec<ScaState>,
}

impl ScaOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Runs SCA from the all-zero allocation until the surrogate optimum settles.
///
/// An inner solution scoring below the current anchor is discarded in favor
/// of the anchor, so the true WSR never decreases along the trace.
pub fn run_sca(inst: &WsrInstance, budget: f64, opts: &ScaOptions) -> Result<ScaOutcome> {
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::Domain(format!("power budget {budget} must be finite and nonnegative")));
    }
    let n = inst.num_vars();
    let mut anchor = vec![0.0; n];
    let mut trace: Vec<ScaState> = Vec::new();
    let mut previous: Option<f64> = None;
    for iteration in 1..=opts.max_iter {
        let sol = solve_inner(inst, &anchor, budget, &opts.inner)?;
        let anchor_value = inst.true_wsr(&anchor);
        let (powers, value) = if sol.value >= anchor_value {
            (sol.powers, sol.value)
        } else {
            (anchor.clone(), anchor_value)
        };
        trace.push(ScaState {
            iteration,
            true_wsr: inst.true_wsr(&powers),
            surrogate_opt: value,
            powers: powers.clone(),
        });
        anchor = powers;
        let done = budget == 0.0 || previous.is_some_and(|p| (value - p).abs() <= opts.tolerance);
        if done {
            return Ok(ScaOutcome {
                powers: inst.to_allocation(&anchor),
                wsr: inst.true_wsr(&anchor),
                trace,
            });
        }
        previous = Some(value);
    }
    Err(Error::SolverFailure {
        message: format!("no convergence within {} iterations", opts.max_iter),
        iterations: opts.max_iter,
        trace: trace.iter().map(|s| s.surrogate_opt).collect(),
    })
}

/// Writes `iteration,surrogate_optimum,true_wsr` rows.
pub fn write_trace_csv(path: &Path, trace: &[ScaState]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "surrogate_optimum", "true_wsr"])?;
    for s in trace {
        w.write_record([s.iteration.to_string(), s.surrogate_opt.to_string(), s.true_wsr.to_string()])?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Optimized precoders for one common-message group.
#[derive(Debug, Clone)]
pub struct GroupSolution {
    pub precoders: PrecoderSet,
    pub outcome: ScaOutcome,
    /// True rates of the optimized design on the channels it was built from.
    pub report: RateReport,
}

/// Designs precoders for `group` from `channels` (estimates if `use_estimated`),
/// then optimizes their powers.
pub fn optimize_group(
    channels: &ChannelSet,
    group: &CommonGroup,
    weights: &[f64],
    budget: f64,
    opts: &ScaOptions,
    use_estimated: bool,
) -> Result<GroupSolution> {
    let design = PrecoderDesign::new(channels, group, use_estimated)?;
    let inst = WsrInstance::from_design(&design, channels, weights)?;
    let outcome = run_sca(&inst, budget, opts)?;
    let precoders = design.load(&outcome.powers, budget)?;
    let report = matched_report(&precoders, channels, weights)?;
    Ok(GroupSolution {
        precoders,
        outcome,
        report,
    })
}
