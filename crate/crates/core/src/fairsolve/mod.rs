//! Minimum-change fair assignment.
//!
//! Given soft cluster memberships `Y` and protected groups, find the hard
//! assignment closest to `Y` whose per-cluster group counts meet a
//! [`QuotaPlan`]. The problem is encoded as an integral min-cost flow.

mod assign;
mod flow;
mod quota;
mod tu;
mod types;

pub use assign::{
    assignment_cost, brute_force_assign, build_network, group_counts, solve_fair_assignment,
    solve_with_plan, FairNetwork, FairSolution, BRUTE_FORCE_CAP,
};
pub use flow::{solve_min_cost_flow, FlowArc, FlowNetwork, FlowSolution};
pub use quota::{controlled_rounding, plan_quotas, round_assignment, QuotaMode, QuotaPlan};
pub use tu::{combinations, constraint_matrix, determinant, incidence_matrix, verify_tu};
pub use types::{GroupMembership, HardAssignment, SoftAssignment};
