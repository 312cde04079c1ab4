//! Online pacing policies.
//!
//! [`DualFtrl`] runs dual Follow-The-Regularized-Leader in its lazy mirror
//! descent form: gradients accumulate in the mirror space and the iterate is
//! read by mapping back and clamping to `[0, κ]` (in one dimension the
//! Bregman projection onto an interval is the clamp). The static policy
//! prices every request at a fixed learned dual; the fixed-target baseline is
//! dual FTRL tracking the constant target `B/T`.

use crate::model::{InstanceParams, Request};
use crate::oracle::best_response;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegularizerKind {
    /// `h(μ) = μ²/2`
    #[default]
    Quadratic,
    /// `h(μ) = μ ln μ - μ`, with `h(0) = 0`
    ShiftedEntropy,
}

impl std::str::FromStr for RegularizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quadratic" => Ok(RegularizerKind::Quadratic),
            "entropy" | "shifted-entropy" | "shifted_entropy" => Ok(RegularizerKind::ShiftedEntropy),
            other => Err(format!("unknown regularizer `{other}` (expected quadratic or entropy)")),
        }
    }
}

/// A regularizer on `[0, κ]` with its strong-convexity constant, minimizer
/// and range `d_R = max{h(0) - h(μ₁), h(κ) - h(μ₁)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub sigma: f64,
    pub mu_init: f64,
    pub d_r: f64,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, kappa: f64) -> Self {
        let (sigma, mu_init) = match kind {
            RegularizerKind::Quadratic => (1.0, 0.0),
            // h'' = 1/μ is smallest at μ = κ
            RegularizerKind::ShiftedEntropy => (1.0 / kappa, kappa.min(1.0)),
        };
        let mut spec = RegularizerSpec {
            kind,
            sigma,
            mu_init,
            d_r: 0.0,
        };
        let h1 = spec.value(mu_init);
        spec.d_r = (spec.value(0.0) - h1).max(spec.value(kappa) - h1);
        spec
    }

    pub fn value(&self, mu: f64) -> f64 {
        match self.kind {
            RegularizerKind::Quadratic => 0.5 * mu * mu,
            RegularizerKind::ShiftedEntropy => {
                if mu == 0.0 {
                    0.0
                } else {
                    mu * mu.ln() - mu
                }
            }
        }
    }

    /// `∇h(μ)`.
    pub fn mirror(&self, mu: f64) -> f64 {
        match self.kind {
            RegularizerKind::Quadratic => mu,
            RegularizerKind::ShiftedEntropy => mu.ln(),
        }
    }

    /// `(∇h)⁻¹(θ)`. For the entropy map, `exp` underflows to 0 as `θ → -∞`.
    pub fn inverse_mirror(&self, theta: f64) -> f64 {
        match self.kind {
            RegularizerKind::Quadratic => theta,
            RegularizerKind::ShiftedEntropy => theta.exp(),
        }
    }

    /// Step size `√(d_R / T)`.
    pub fn default_eta(&self, horizon: usize) -> f64 {
        (self.d_r / horizon as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualState {
    /// Mirror point before projection.
    pub theta: f64,
    /// Current iterate, always in `[0, κ]`.
    pub mu: f64,
    /// `Σ_{r ≤ t} g_r`.
    pub cumulative_gradient: f64,
    /// Number of updates applied.
    pub step: usize,
    pub eta: f64,
}

/// What one FTRL step decided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Price used for this step's decision.
    pub mu: f64,
    /// Unconstrained best response `x'`.
    pub candidate: f64,
    /// Action taken after the budget guard.
    pub action: f64,
    pub gradient: f64,
}

/// Dual FTRL for one episode.
#[derive(Debug, Clone)]
pub struct DualFtrl {
    reg: RegularizerSpec,
    kappa: f64,
    action_cap: f64,
    state: DualState,
}

impl DualFtrl {
    pub fn new(reg: RegularizerSpec, eta: f64, kappa: f64, action_cap: f64) -> Self {
        assert!(eta > 0.0, "step size must be positive, got {eta}");
        DualFtrl {
            reg,
            kappa,
            action_cap,
            state: ftrl_init(&reg, eta),
        }
    }

    pub fn state(&self) -> &DualState {
        &self.state
    }

    pub fn regularizer(&self) -> &RegularizerSpec {
        &self.reg
    }

    pub fn step(&mut self, request: &Request, target: f64, budget_remaining: f64) -> StepOutcome {
        let mu = self.state.mu;
        let br = best_response(request, mu, self.action_cap);
        let action = if br.consumption <= budget_remaining {
            br.action
        } else {
            0.0
        };
        // the gradient uses the unconstrained response even when the guard fires
        let gradient = target - br.consumption;
        self.apply_gradient(gradient);
        StepOutcome {
            mu,
            candidate: br.action,
            action,
            gradient,
        }
    }

    fn apply_gradient(&mut self, gradient: f64) {
        let s = &mut self.state;
        s.theta -= s.eta * gradient;
        s.cumulative_gradient += gradient;
        s.step += 1;
        s.mu = self.reg.inverse_mirror(s.theta).clamp(0.0, self.kappa);
    }
}

/// Initial state: `μ₁ = argmin_{[0,κ]} h`, `θ₁ = ∇h(μ₁)`.
pub fn ftrl_init(reg: &RegularizerSpec, eta: f64) -> DualState {
    DualState {
        theta: reg.mirror(reg.mu_init),
        mu: reg.mu_init,
        cumulative_gradient: 0.0,
        step: 0,
        eta,
    }
}

/// One step of dual FTRL as a pure function of the previous state.
#[allow(clippy::too_many_arguments)]
pub fn ftrl_step(
    state: &DualState,
    reg: &RegularizerSpec,
    kappa: f64,
    action_cap: f64,
    request: &Request,
    target: f64,
    budget_remaining: f64,
) -> (f64, DualState) {
    let mut engine = DualFtrl {
        reg: *reg,
        kappa,
        action_cap,
        state: *state,
    };
    let out = engine.step(request, target, budget_remaining);
    (out.action, engine.state)
}

/// A pricing rule driving the shared episode loop.
pub trait DualPolicy {
    fn price(&self) -> f64;
    /// Feed back the period's target and the consumption of the unconstrained response.
    fn observe(&mut self, target: f64, candidate_consumption: f64);
}

impl DualPolicy for DualFtrl {
    fn price(&self) -> f64 {
        self.state.mu
    }

    fn observe(&mut self, target: f64, candidate_consumption: f64) {
        self.apply_gradient(target - candidate_consumption);
    }
}

/// Prices every request at a fixed dual.
#[derive(Debug, Clone, Copy)]
pub struct StaticDual(pub f64);

impl DualPolicy for StaticDual {
    fn price(&self) -> f64 {
        self.0
    }

    fn observe(&mut self, _target: f64, _candidate_consumption: f64) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based period.
    pub t: usize,
    pub mu: f64,
    pub action: f64,
    pub reward: f64,
    pub consumption: f64,
    pub target: f64,
    /// Budget left after this period.
    pub budget_remaining: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub total_consumption: f64,
    /// First period after which at most `b̄` budget remains, or `T`.
    pub stop_time: usize,
    /// Per-period records; `None` in lite mode.
    pub records: Option<Vec<StepRecord>>,
    /// `Σ_t μ_t (β_t - λ_t)` when a benchmark sequence was supplied.
    pub weighted_target_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeOptions<'a> {
    /// Drop per-step records and keep running aggregates only.
    pub lite: bool,
    /// Benchmark sequence `β_t` for the `Σ μ_t (β_t - λ_t)` diagnostic.
    pub benchmark: Option<&'a [f64]>,
}

/// Run `policy` over `stream`, tracking `targets`, with the budget guard:
/// the unconstrained response is taken only if it fits the remaining budget.
pub fn run_episode<P: DualPolicy>(
    stream: &[Request],
    targets: &[f64],
    params: &InstanceParams,
    policy: &mut P,
    options: EpisodeOptions<'_>,
) -> EpisodeResult {
    assert_eq!(stream.len(), targets.len(), "stream and targets must have equal length");
    if let Some(beta) = options.benchmark {
        assert_eq!(beta.len(), targets.len(), "benchmark length must match targets");
    }
    let horizon = stream.len();
    let mut total_reward = 0.0;
    let mut total_consumption = 0.0;
    let mut stop_time = None;
    let mut gap = 0.0;
    let mut records = (!options.lite).then(|| Vec::with_capacity(horizon));

    for (i, (request, &target)) in stream.iter().zip(targets).enumerate() {
        let mu = policy.price();
        let br = best_response(request, mu, params.action_cap);
        // guarding on the running total keeps Σ consumption ≤ B exact in floating point
        let (action, reward, consumption) = if total_consumption + br.consumption <= params.budget {
            (br.action, br.reward, br.consumption)
        } else {
            (0.0, 0.0, 0.0)
        };
        total_reward += reward;
        total_consumption += consumption;
        let remaining = params.budget - total_consumption;
        if let Some(beta) = options.benchmark {
            gap += mu * (beta[i] - target);
        }
        policy.observe(target, br.consumption);
        if stop_time.is_none() && remaining <= params.consumption_bound {
            stop_time = Some(i + 1);
        }
        if let Some(recs) = records.as_mut() {
            recs.push(StepRecord {
                t: i + 1,
                mu,
                action,
                reward,
                consumption,
                target,
                budget_remaining: remaining,
            });
        }
    }

    EpisodeResult {
        total_reward,
        total_consumption,
        stop_time: stop_time.unwrap_or(horizon),
        records,
        weighted_target_gap: options.benchmark.map(|_| gap),
    }
}

/// Dual FTRL tracking `targets`; `eta` defaults to `√(d_R/T)`.
pub fn run_dual_ftrl(
    stream: &[Request],
    targets: &[f64],
    params: &InstanceParams,
    reg: RegularizerKind,
    eta: Option<f64>,
    options: EpisodeOptions<'_>,
) -> EpisodeResult {
    let spec = RegularizerSpec::new(reg, params.rate_bound);
    let eta = eta.unwrap_or_else(|| spec.default_eta(stream.len().max(1)));
    let mut engine = DualFtrl::new(spec, eta, params.rate_bound, params.action_cap);
    run_episode(stream, targets, params, &mut engine, options)
}

/// The static learned-dual policy. `targets` only feed the records and the
/// gap diagnostic; pass the plan's targets (or zeros).
pub fn run_static_dual(
    stream: &[Request],
    mu_tilde: f64,
    targets: &[f64],
    params: &InstanceParams,
    options: EpisodeOptions<'_>,
) -> EpisodeResult {
    assert!(mu_tilde >= 0.0, "dual price must be nonnegative");
    run_episode(stream, targets, params, &mut StaticDual(mu_tilde), options)
}

/// Dual FTRL with the constant target `B/T`.
pub fn run_fixed_target(
    stream: &[Request],
    params: &InstanceParams,
    reg: RegularizerKind,
    eta: Option<f64>,
    options: EpisodeOptions<'_>,
) -> EpisodeResult {
    let targets = fixed_targets(params.budget, stream.len());
    run_dual_ftrl(stream, &targets, params, reg, eta, options)
}

pub fn fixed_targets(budget: f64, horizon: usize) -> Vec<f64> {
    vec![budget / horizon.max(1) as f64; horizon]
}

/// Observed iterate gaps of two FTRL runs on the same stream and the
/// coupling bound `(η/σ)(Σ_{t<s} |λ_t - λ'_t| + b̄)` for each `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub gaps: Vec<f64>,
    pub bounds: Vec<f64>,
}

impl CouplingReport {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }

    /// Periods (1-based) where the gap exceeds the bound by more than `tol`.
    pub fn violations(&self, tol: f64) -> Vec<usize> {
        self.gaps
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .filter(|(_, (g, b))| **g > **b + tol)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

pub fn coupling_gap(
    stream: &[Request],
    targets_a: &[f64],
    targets_b: &[f64],
    params: &InstanceParams,
    reg: RegularizerKind,
    eta: f64,
) -> CouplingReport {
    assert_eq!(targets_a.len(), stream.len());
    assert_eq!(targets_b.len(), stream.len());
    let spec = RegularizerSpec::new(reg, params.rate_bound);
    let mut a = DualFtrl::new(spec, eta, params.rate_bound, params.action_cap);
    let mut b = a.clone();
    let scale = eta / spec.sigma;
    let mut target_drift = 0.0;
    let mut gaps = Vec::with_capacity(stream.len());
    let mut bounds = Vec::with_capacity(stream.len());
    for (i, request) in stream.iter().enumerate() {
        gaps.push((a.state.mu - b.state.mu).abs());
        bounds.push(scale * (target_drift + params.consumption_bound));
        // iterates ignore the budget guard, so remaining budget is irrelevant here
        a.step(request, targets_a[i], f64::INFINITY);
        b.step(request, targets_b[i], f64::INFINITY);
        target_drift += (targets_a[i] - targets_b[i]).abs();
    }
    CouplingReport { gaps, bounds }
}
