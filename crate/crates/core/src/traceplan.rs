//! Learning the empirical dual price and the target expenditure sequence
//! from a single trace in one pass over the ratio-sorted requests.

use crate::error::{Error, Result};
use crate::model::Trace;

/// Empirical dual and per-period targets, in original time order.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPlan {
    pub mu_tilde: f64,
    pub targets: Vec<f64>,
    /// `Σ λ_t`, accumulated in the order the learner visited the requests.
    pub sum_targets: f64,
}

impl TargetPlan {
    /// Either `μ̃ = 0` and `Σλ ≤ B + b̄`, or `|B - Σλ| ≤ b̄`.
    ///
    /// The two-sided bound is evaluated as `B - b̄ ≤ Σλ ≤ B + b̄` so that float
    /// rounding of the subtraction cannot produce a spurious violation.
    pub fn satisfies_trace_dual(&self, budget: f64, consumption_bound: f64) -> bool {
        let upper = budget + consumption_bound;
        let lower = budget - consumption_bound;
        let case_one = self.mu_tilde == 0.0 && self.sum_targets <= upper;
        let case_two = self.sum_targets <= upper && self.sum_targets >= lower;
        case_one || case_two
    }

    /// Overspending term `κ (Σλ - B)^+`.
    pub fn overspend_penalty(&self, budget: f64, rate_bound: f64) -> f64 {
        rate_bound * (self.sum_targets - budget).max(0.0)
    }
}

/// Plan learned with request `s` replaced by the zero request.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOutPlan {
    /// 1-based index of the excluded period.
    pub excluded_index: usize,
    pub mu_tilde_minus: f64,
    pub targets_minus: Vec<f64>,
}

/// One entry of the ratio-sorted view: (ratio, original index, b·x̄).
type SortedEntry = (f64, usize, f64);

/// Learn `(μ̃, λ)` from a trace in general position.
///
/// Requests with a positive breakpoint are sorted by increasing ratio (ties
/// by original index) and walked from the top, accepting each at full
/// consumption while the running total stays within budget. The first
/// request that would overflow is still given its full consumption as
/// target and its ratio becomes `μ̃`. If nothing overflows the budget never
/// binds and `μ̃ = 0`. Zero-reward requests never enter the walk: the best
/// response rejects them at every price, so their target is 0.
pub fn learn_plan(trace: &Trace, budget: f64) -> Result<TargetPlan> {
    if !trace.general_position() {
        let (first, second, ratio) =
            crate::model::find_ratio_tie(trace.requests()).expect("trace without general position has a ratio tie");
        return Err(Error::DegenerateTrace { first, second, ratio });
    }
    let sorted = sort_by_ratio(trace);
    let (plan, steps) = walk_sorted(&sorted, trace.len(), budget);
    debug_assert!(steps <= sorted.len());
    Ok(plan)
}

fn sort_by_ratio(trace: &Trace) -> Vec<SortedEntry> {
    let xbar = trace.action_cap();
    let mut sorted: Vec<SortedEntry> = trace
        .requests()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.has_breakpoint())
        .map(|(i, r)| (r.ratio(), i, r.consumption_at(xbar)))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    sorted
}

/// The linear pass over a ratio-sorted slice. Returns the plan and the
/// number of entries visited.
pub(crate) fn walk_sorted(sorted: &[SortedEntry], horizon: usize, budget: f64) -> (TargetPlan, usize) {
    let mut targets = vec![0.0; horizon];
    let mut spent = 0.0;
    let mut mu_tilde = 0.0;
    let mut steps = 0;
    for &(ratio, idx, cost) in sorted.iter().rev() {
        steps += 1;
        targets[idx] = cost;
        if spent + cost > budget {
            spent += cost;
            mu_tilde = ratio;
            break;
        }
        spent += cost;
    }
    (
        TargetPlan {
            mu_tilde,
            targets,
            sum_targets: spent,
        },
        steps,
    )
}

/// Learn the plan on the trace with period `s` (1-based) zeroed out.
pub fn learn_plan_leave_one_out(trace: &Trace, budget: f64, s: usize) -> Result<LeaveOneOutPlan> {
    if s == 0 || s > trace.len() {
        return Err(Error::IndexOutOfRange {
            index: s,
            len: trace.len(),
        });
    }
    let plan = learn_plan(&trace.with_zeroed(s - 1), budget)?;
    Ok(LeaveOneOutPlan {
        excluded_index: s,
        mu_tilde_minus: plan.mu_tilde,
        targets_minus: plan.targets,
    })
}
