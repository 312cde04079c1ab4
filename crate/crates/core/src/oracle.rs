//! Dual best-response machinery over a trace.
//!
//! For a request `(f, b)` and price `μ ≥ 0` the profit `(f_coeff - μ b_coeff) x`
//! is linear in `x`, so the maximizer is `0` or `x̄`. Among maximizers we keep
//! the one with the largest reward, which resolves a zero-profit tie to `x̄`
//! unless the reward coefficient itself is zero.

use crate::model::{Request, Trace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    pub action: f64,
    pub reward: f64,
    pub consumption: f64,
}

pub fn best_response(request: &Request, mu: f64, action_cap: f64) -> BestResponse {
    debug_assert!(mu >= 0.0, "dual price must be nonnegative, got {mu}");
    let accept = request.f_coeff != 0.0 && request.f_coeff - mu * request.b_coeff >= 0.0;
    let action = if accept { action_cap } else { 0.0 };
    BestResponse {
        action,
        reward: request.reward_at(action),
        consumption: request.consumption_at(action),
    }
}

/// `q(μ) = μ B + Σ_t max(f_t - μ b_t, 0) x̄`.
pub fn dual_objective(trace: &Trace, budget: f64, mu: f64) -> f64 {
    let xbar = trace.action_cap();
    mu * budget
        + trace
            .requests()
            .iter()
            .map(|r| (r.f_coeff - mu * r.b_coeff).max(0.0) * xbar)
            .sum::<f64>()
}

/// Sorted, strictly increasing critical prices of a trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Breakpoints {
    pub ratios: Vec<f64>,
}

impl Breakpoints {
    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

pub fn breakpoints(trace: &Trace) -> Breakpoints {
    breakpoints_of(trace.requests())
}

pub fn breakpoints_of(requests: &[Request]) -> Breakpoints {
    let mut ratios: Vec<f64> = requests
        .iter()
        .filter(|r| r.has_breakpoint())
        .map(Request::ratio)
        .collect();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    Breakpoints { ratios }
}

/// One-sided derivatives of `q` at `mu`. Requests with ratio exactly `mu`
/// are active on the left and inactive on the right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slopes {
    pub left: f64,
    pub right: f64,
}

pub fn dual_slopes(trace: &Trace, budget: f64, mu: f64) -> Slopes {
    let xbar = trace.action_cap();
    let mut above = 0.0;
    let mut at_or_above = 0.0;
    for r in trace.requests().iter().filter(|r| r.has_breakpoint()) {
        let ratio = r.ratio();
        if ratio > mu {
            above += r.b_coeff * xbar;
        }
        if ratio >= mu {
            at_or_above += r.b_coeff * xbar;
        }
    }
    Slopes {
        left: budget - at_or_above,
        right: budget - above,
    }
}

/// Result of the exhaustive dual search.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMinimizer {
    /// Smallest minimizer of `q` over `μ ≥ 0`.
    pub mu: f64,
    /// Every candidate price examined (0 followed by the breakpoints) with `q` there.
    pub candidates: Vec<(f64, f64)>,
}

/// Smallest minimizer of the empirical dual objective by enumeration.
///
/// `q` is convex piecewise linear with kinks only at the breakpoints, so the
/// minimizing set is an interval whose left end is 0 or a breakpoint. The
/// left end is the first candidate whose right slope is nonnegative. Slopes
/// are recomputed from scratch at each candidate, in original trace order.
pub fn brute_force_dual(trace: &Trace, budget: f64) -> DualMinimizer {
    let bps = breakpoints(trace);
    let mut candidates = Vec::with_capacity(bps.len() + 1);
    let mut mu = None;
    for cand in std::iter::once(0.0).chain(bps.ratios.iter().copied()) {
        candidates.push((cand, dual_objective(trace, budget, cand)));
        if mu.is_none() && dual_slopes(trace, budget, cand).right >= 0.0 {
            mu = Some(cand);
        }
    }
    // Above the last breakpoint the slope is B >= 0, so the search always
    // terminates by the final candidate.
    DualMinimizer {
        mu: mu.unwrap_or_else(|| *bps.ratios.last().unwrap_or(&0.0)),
        candidates,
    }
}
