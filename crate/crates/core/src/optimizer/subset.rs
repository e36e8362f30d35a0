use super::sca::{optimize_group, GroupSolution, ScaOptions};
use crate::channel::ChannelSet;
use crate::precoder::{CommonGroup, PowerAllocation};
use crate::rates::{evaluate_mismatched, validate_weights, RateReport, ReceiverCsi};
use crate::{Error, Result};

/// Exhaustive search is refused above this many users.
pub const MAX_SEARCH_USERS: usize = 12;

/// Sum rates closer than this are treated as ties.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub sca: ScaOptions,
    /// Let the empty group (plain block diagonalization) compete for the win;
    /// it is always evaluated and tabulated.
    pub baseline_competes: bool,
    /// Design on the estimates and score on the true channels.
    pub imperfect_csi: bool,
    pub receiver: ReceiverCsi,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            sca: ScaOptions::default(),
            baseline_competes: false,
            imperfect_csi: false,
            receiver: ReceiverCsi::Estimated,
        }
    }
}

/// Result for one candidate group.
#[derive(Debug, Clone)]
pub enum SubsetOutcome {
    Solved {
        solution: Box<GroupSolution>,
        /// Rates on the true channels; equals the design report under perfect CSI.
        evaluated: RateReport,
    },
    Failed {
        message: String,
    },
}

impl SubsetOutcome {
    pub fn sum_rate(&self) -> Option<f64> {
        match self {
            SubsetOutcome::Solved { evaluated, .. } => Some(evaluated.sum_rate),
            SubsetOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubsetSearchResult {
    pub winner: CommonGroup,
    /// Every candidate in search order, the empty group first.
    pub table: Vec<(CommonGroup, SubsetOutcome)>,
    pub powers: PowerAllocation,
    pub report: RateReport,
}

impl SubsetSearchResult {
    pub fn outcome(&self, group: &CommonGroup) -> Option<&SubsetOutcome> {
        self.table.iter().find(|(g, _)| g == group).map(|(_, o)| o)
    }

    /// Sum rate of plain block diagonalization.
    pub fn baseline_sum_rate(&self) -> Option<f64> {
        self.table.first().and_then(|(_, o)| o.sum_rate())
    }

    pub fn winner_outcome(&self) -> &GroupSolution {
        self.table
            .iter()
            .find_map(|(g, o)| match o {
                SubsetOutcome::Solved { solution, .. } if *g == self.winner => Some(solution.as_ref()),
                _ => None,
            })
            .expect("winner was solved")
    }
}

/// All groups, empty first, in lexicographic order of their sorted member lists.
pub fn candidate_groups(num_users: usize) -> Vec<CommonGroup> {
    let mut groups: Vec<CommonGroup> = (0u64..(1u64 << num_users))
        .map(|mask| CommonGroup::from_mask(mask, num_users))
        .collect();
    groups.sort_by(|a, b| a.members().cmp(b.members()));
    groups
}

/// Optimizes every common-message group and keeps the nonempty one with the
/// highest sum rate; ties go to the lexicographically smallest member list.
pub fn subset_search(
    channels: &ChannelSet,
    weights: &[f64],
    budget: f64,
    opts: &SearchOptions,
) -> Result<SubsetSearchResult> {
    let k = channels.num_users();
    if k > MAX_SEARCH_USERS {
        return Err(Error::Config(format!(
            "subset search over {k} users exceeds the limit of {MAX_SEARCH_USERS}"
        )));
    }
    validate_weights(weights, k)?;
    let mut table = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for group in candidate_groups(k) {
        let outcome = match solve_candidate(channels, &group, weights, budget, opts) {
            Ok(o) => o,
            Err(e) => SubsetOutcome::Failed { message: e.to_string() },
        };
        let eligible = !group.is_empty() || opts.baseline_competes;
        if let (Some(sr), true) = (outcome.sum_rate(), eligible) {
            if best.is_none_or(|(_, b)| sr > b + TIE_TOL) {
                best = Some((table.len(), sr));
            }
        }
        table.push((group, outcome));
    }
    let (idx, _) = best.ok_or_else(|| Error::SolverFailure {
        message: "every candidate group failed".into(),
        iterations: 0,
        trace: Vec::new(),
    })?;
    let (winner, outcome) = &table[idx];
    let SubsetOutcome::Solved { solution, evaluated } = outcome else {
        unreachable!("best index refers to a solved group")
    };
    Ok(SubsetSearchResult {
        winner: winner.clone(),
        powers: solution.outcome.powers.clone(),
        report: evaluated.clone(),
        table,
    })
}

fn solve_candidate(
    channels: &ChannelSet,
    group: &CommonGroup,
    weights: &[f64],
    budget: f64,
    opts: &SearchOptions,
) -> Result<SubsetOutcome> {
    let solution = optimize_group(channels, group, weights, budget, &opts.sca, opts.imperfect_csi)?;
    let evaluated = if opts.imperfect_csi {
        evaluate_mismatched(&solution.precoders, channels, weights, opts.receiver)?
    } else {
        solution.report.clone()
    };
    Ok(SubsetOutcome::Solved {
        solution: Box::new(solution),
        evaluated,
    })
}
