//! Requests, instance parameters, validated traces and the request metric.

use crate::error::{Error, Result};

/// A request with linear reward `f(x) = f_coeff * x` and linear consumption
/// `b(x) = b_coeff * x` over the action interval `[0, x̄]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub f_coeff: f64,
    pub b_coeff: f64,
    allows_loss: bool,
}

impl Request {
    pub fn new(f_coeff: f64, b_coeff: f64) -> Self {
        Request {
            f_coeff,
            b_coeff,
            allows_loss: false,
        }
    }

    /// A request whose reward coefficient may be negative (a second-price
    /// auction the bidder would lose money on). Such requests are never
    /// selected by the best response, so the nonnegativity check is waived.
    pub fn with_loss(f_coeff: f64, b_coeff: f64) -> Self {
        Request {
            f_coeff,
            b_coeff,
            allows_loss: true,
        }
    }

    /// The request that neither rewards nor consumes anything.
    pub fn zero() -> Self {
        Request::new(0.0, 0.0)
    }

    pub fn allows_loss(&self) -> bool {
        self.allows_loss
    }

    /// Bang-per-buck `f_coeff / b_coeff`, with `0/0 := 0`.
    pub fn ratio(&self) -> f64 {
        if self.b_coeff == 0.0 {
            if self.f_coeff == 0.0 {
                0.0
            } else {
                self.f_coeff.signum() * f64::INFINITY
            }
        } else {
            self.f_coeff / self.b_coeff
        }
    }

    /// True when the request flips from accepted to rejected at a positive
    /// dual price, i.e. it contributes a breakpoint.
    pub fn has_breakpoint(&self) -> bool {
        self.f_coeff > 0.0 && self.b_coeff > 0.0
    }

    pub fn reward_at(&self, action: f64) -> f64 {
        self.f_coeff * action
    }

    pub fn consumption_at(&self, action: f64) -> f64 {
        self.b_coeff * action
    }
}

/// Horizon, budget and the regularity bounds of an instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceParams {
    pub horizon: usize,
    pub budget: f64,
    pub action_cap: f64,
    pub consumption_bound: f64,
    pub reward_bound: f64,
    pub rate_bound: f64,
}

impl InstanceParams {
    pub fn new(
        horizon: usize,
        budget: f64,
        action_cap: f64,
        consumption_bound: f64,
        reward_bound: f64,
        rate_bound: f64,
    ) -> Result<Self> {
        let p = InstanceParams {
            horizon,
            budget,
            action_cap,
            consumption_bound,
            reward_bound,
            rate_bound,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return bad(format!("budget must be finite and >= 0, got {}", self.budget));
        }
        for (name, v) in [
            ("action_cap", self.action_cap),
            ("consumption_bound", self.consumption_bound),
            ("reward_bound", self.reward_bound),
            ("rate_bound", self.rate_bound),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if self.reward_bound > self.rate_bound * self.consumption_bound {
            return bad(format!(
                "reward_bound {} exceeds rate_bound * consumption_bound = {}",
                self.reward_bound,
                self.rate_bound * self.consumption_bound
            ));
        }
        Ok(())
    }

    /// The budget can never bind: even spending `b̄` every period fits.
    pub fn budget_is_vacuous(&self) -> bool {
        self.budget > self.consumption_bound * self.horizon as f64
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    /// Check one request against these bounds. `index` is 1-based, for messages.
    pub fn check_request(&self, index: usize, r: &Request) -> Result<()> {
        let violation = |reason: String| Err(Error::BoundViolation { index, reason });
        if !r.f_coeff.is_finite() || !r.b_coeff.is_finite() {
            return violation("coefficients must be finite".into());
        }
        if r.b_coeff < 0.0 {
            return violation(format!("b_coeff {} < 0", r.b_coeff));
        }
        if r.f_coeff < 0.0 && !r.allows_loss {
            return violation(format!("f_coeff {} < 0", r.f_coeff));
        }
        if r.f_coeff > self.rate_bound * r.b_coeff {
            return violation(format!(
                "f_coeff {} > kappa * b_coeff = {}",
                r.f_coeff,
                self.rate_bound * r.b_coeff
            ));
        }
        if r.f_coeff * self.action_cap > self.reward_bound {
            return violation(format!(
                "f_coeff * xbar = {} > reward bound {}",
                r.f_coeff * self.action_cap,
                self.reward_bound
            ));
        }
        if r.b_coeff * self.action_cap > self.consumption_bound {
            return violation(format!(
                "b_coeff * xbar = {} > consumption bound {}",
                r.b_coeff * self.action_cap,
                self.consumption_bound
            ));
        }
        Ok(())
    }
}

/// A validated sequence of requests, one per period, in original time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    requests: Vec<Request>,
    action_cap: f64,
    general_position: bool,
}

impl Trace {
    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn into_requests(self) -> Vec<Request> {
        self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn action_cap(&self) -> f64 {
        self.action_cap
    }

    pub fn general_position(&self) -> bool {
        self.general_position
    }

    /// Build a trace from requests that are already known to be valid.
    /// General position is recomputed.
    pub(crate) fn from_valid(requests: Vec<Request>, action_cap: f64) -> Self {
        let general_position = find_ratio_tie(&requests).is_none();
        Trace {
            requests,
            action_cap,
            general_position,
        }
    }

    /// Copy of the trace with request `index` (0-based) replaced by the zero request.
    pub(crate) fn with_zeroed(&self, index: usize) -> Self {
        let mut requests = self.requests.clone();
        requests[index] = Request::zero();
        Trace::from_valid(requests, self.action_cap)
    }
}

/// Validate `requests` against `params` and compute the general-position flag.
pub fn validate_instance(params: &InstanceParams, requests: &[Request]) -> Result<Trace> {
    params.check()?;
    if requests.len() != params.horizon {
        return Err(Error::LengthMismatch {
            expected: params.horizon,
            actual: requests.len(),
        });
    }
    for (i, r) in requests.iter().enumerate() {
        params.check_request(i + 1, r)?;
    }
    Ok(Trace::from_valid(requests.to_vec(), params.action_cap))
}

/// First pair of requests (1-based indices, lower first) whose breakpoint
/// ratios coincide exactly, among requests with `f_coeff > 0` and `b_coeff > 0`.
///
/// Zero-reward requests are excluded: the best response never selects them,
/// so they cannot create a tie at any dual price.
pub fn find_ratio_tie(requests: &[Request]) -> Option<(usize, usize, f64)> {
    let mut keyed: Vec<(f64, usize)> = requests
        .iter()
        .enumerate()
        .filter(|(_, r)| r.has_breakpoint())
        .map(|(i, r)| (r.ratio(), i))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.windows(2).find(|w| w[0].0 == w[1].0).map(|w| {
        let (a, b) = (w[0].1.min(w[1].1), w[0].1.max(w[1].1));
        (a + 1, b + 1, w[0].0)
    })
}

/// `d(a, b) = sup_x |f_a(x) - f_b(x)| + sup_x |b_a(x) - b_b(x)|` over `[0, x̄]`.
/// Both suprema of linear functions vanishing at 0 are attained at `x̄`.
pub fn request_distance(a: &Request, b: &Request, action_cap: f64) -> f64 {
    action_cap * ((a.f_coeff - b.f_coeff).abs() + (a.b_coeff - b.b_coeff).abs())
}
