//! Weighted-sum-rate power allocation by successive convex approximation.
//!
//! Each rate `log2(1 + S/(I + N))` is split into the concave
//! `log2(N + I + S)` and the convex `-log2(N + I)`; linearizing the latter at
//! the previous iterate gives a concave minorant that is tight there. The
//! inner problem maximizes the weighted sum of minorants, with the per-stream
//! minimum over common-message users handled through epigraph variables.

mod barrier;
mod instance;
mod sca;
mod subset;

pub use barrier::{solve_inner, InnerOptions, InnerSolution};
pub use instance::{
    private_term_index, surrogate_common_constant, surrogate_common_rate,
    surrogate_private_constant, surrogate_private_rate, RateTerm, WsrInstance,
};
pub use sca::{optimize_group, run_sca, write_trace_csv, GroupSolution, ScaOptions, ScaOutcome, ScaState};
pub use subset::{candidate_groups, subset_search, SearchOptions, SubsetOutcome, SubsetSearchResult, MAX_SEARCH_USERS};
