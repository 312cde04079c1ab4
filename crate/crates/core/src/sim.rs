//! Environments and experiments: distribution families, seeded sampling,
//! the single-sample fragility scenario, general-position perturbation, the
//! second-price auction adapter, Monte Carlo orchestration and the uniform
//! concentration check.

use rand::Rng;
use rayon::prelude::*;

use crate::bench::{
    benchmark_sequence, fluid_value, regret_report, wasserstein, FiniteSupportDist, FluidSolution, RegretReport,
    TrialOutcome,
};
use crate::error::{Error, Result};
use crate::model::{find_ratio_tie, validate_instance, InstanceParams, Request, Trace};
use crate::oracle::best_response;
use crate::pacing::{
    fixed_targets, run_dual_ftrl, run_static_dual, EpisodeOptions, EpisodeResult, RegularizerKind, StepRecord,
};
use crate::rng::{substream, Domain, StreamRng};
use crate::traceplan::{learn_plan, TargetPlan};

/// One atom of a finite distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub request: Request,
    pub prob: f64,
}

/// A per-period request distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    PointMass(Request),
    /// `f ~ Unif[lo, hi]` with a fixed consumption coefficient.
    UniformF {
        lo: f64,
        hi: f64,
        b: f64,
    },
    Finite(Vec<Atom>),
}

impl DistSpec {
    pub fn family(&self) -> &'static str {
        match self {
            DistSpec::PointMass(_) => "point",
            DistSpec::UniformF { .. } => "uniform_f",
            DistSpec::Finite(_) => "finite",
        }
    }

    /// `period` is 1-based and used in error messages.
    pub fn validate(&self, params: &InstanceParams, period: usize) -> Result<()> {
        match self {
            DistSpec::PointMass(r) => params.check_request(period, r),
            DistSpec::UniformF { lo, hi, b } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::InvalidDistribution(format!(
                        "period {period}: uniform_f needs finite lo <= hi, got [{lo}, {hi}]"
                    )));
                }
                params.check_request(period, &Request::new(*lo, *b))?;
                params.check_request(period, &Request::new(*hi, *b))
            }
            DistSpec::Finite(atoms) => {
                FiniteSupportDist::new(atoms.clone(), period)?;
                atoms.iter().try_for_each(|a| params.check_request(period, &a.request))
            }
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Request {
        match self {
            DistSpec::PointMass(r) => *r,
            DistSpec::UniformF { lo, hi, b } => {
                let u: f64 = rng.random();
                Request::new((lo + (hi - lo) * u).min(*hi), *b)
            }
            DistSpec::Finite(atoms) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.prob;
                    if u < acc {
                        return a.request;
                    }
                }
                atoms.iter().rev().find(|a| a.prob > 0.0).unwrap_or(&atoms[0]).request
            }
        }
    }

    /// `E[b*(μ)]`, in closed form.
    pub fn expected_consumption(&self, mu: f64, action_cap: f64) -> f64 {
        match self {
            DistSpec::PointMass(r) => best_response(r, mu, action_cap).consumption,
            DistSpec::UniformF { lo, hi, b } => {
                if lo == hi {
                    return best_response(&Request::new(*lo, *b), mu, action_cap).consumption;
                }
                // f = 0 has probability zero, so acceptance is f ≥ μb
                let accept = ((hi - lo.max(mu * b)) / (hi - lo)).clamp(0.0, 1.0);
                accept * b * action_cap
            }
            DistSpec::Finite(atoms) => atoms
                .iter()
                .map(|a| a.prob * best_response(&a.request, mu, action_cap).consumption)
                .sum(),
        }
    }

    /// `lim_{ν↓μ} E[b*(ν)]`.
    pub fn expected_consumption_right(&self, mu: f64, action_cap: f64) -> f64 {
        let right = |r: &Request| {
            if r.f_coeff > 0.0 && r.f_coeff > mu * r.b_coeff {
                r.consumption_at(action_cap)
            } else {
                0.0
            }
        };
        match self {
            DistSpec::PointMass(r) => right(r),
            DistSpec::UniformF { lo, hi, b } if lo == hi => right(&Request::new(*lo, *b)),
            DistSpec::UniformF { .. } => self.expected_consumption(mu, action_cap),
            DistSpec::Finite(atoms) => atoms.iter().map(|a| a.prob * right(&a.request)).sum(),
        }
    }

    /// Positive prices where `E[b*(μ)]` can change slope or jump.
    pub fn support_breakpoints(&self) -> Vec<f64> {
        match self {
            DistSpec::PointMass(r) => r.has_breakpoint().then(|| r.ratio()).into_iter().collect(),
            DistSpec::UniformF { lo, hi, b } => {
                if *b > 0.0 {
                    [lo / b, hi / b].into_iter().filter(|&x| x > 0.0).collect()
                } else {
                    Vec::new()
                }
            }
            DistSpec::Finite(atoms) => atoms
                .iter()
                .filter(|a| a.request.has_breakpoint() && a.prob > 0.0)
                .map(|a| a.request.ratio())
                .collect(),
        }
    }

    /// The consumption coefficient, when it is the same almost surely.
    pub fn common_b(&self) -> Option<f64> {
        match self {
            DistSpec::PointMass(r) => Some(r.b_coeff),
            DistSpec::UniformF { b, .. } => Some(*b),
            DistSpec::Finite(atoms) => {
                let mut bs = atoms.iter().filter(|a| a.prob > 0.0).map(|a| a.request.b_coeff);
                let first = bs.next()?;
                bs.all(|b| b == first).then_some(first)
            }
        }
    }

    /// The atoms, when the distribution has finite support.
    pub fn finite_atoms(&self) -> Option<Vec<Atom>> {
        match self {
            DistSpec::PointMass(r) => Some(vec![Atom { request: *r, prob: 1.0 }]),
            DistSpec::UniformF { lo, hi, b } if lo == hi => Some(vec![Atom {
                request: Request::new(*lo, *b),
                prob: 1.0,
            }]),
            DistSpec::UniformF { .. } => None,
            DistSpec::Finite(atoms) => Some(atoms.clone()),
        }
    }

    fn sorted_by_f(atoms: &[Atom]) -> Vec<Atom> {
        let mut v: Vec<Atom> = atoms.iter().filter(|a| a.prob > 0.0).copied().collect();
        v.sort_by(|a, b| a.request.f_coeff.total_cmp(&b.request.f_coeff));
        v
    }

    /// Interior levels where the reward quantile function changes piece.
    pub(crate) fn quantile_cuts(&self) -> Vec<f64> {
        match self {
            DistSpec::Finite(atoms) => {
                let sorted = Self::sorted_by_f(atoms);
                let mut acc = 0.0;
                let mut cuts = Vec::with_capacity(sorted.len());
                for a in &sorted[..sorted.len().saturating_sub(1)] {
                    acc += a.prob;
                    cuts.push(acc.min(1.0));
                }
                cuts
            }
            _ => Vec::new(),
        }
    }

    /// `(a, s)` with `F⁻¹(u) = a + s u` on the quantile piece containing `u`.
    pub(crate) fn quantile_affine(&self, u: f64) -> (f64, f64) {
        match self {
            DistSpec::PointMass(r) => (r.f_coeff, 0.0),
            DistSpec::UniformF { lo, hi, .. } => (*lo, hi - lo),
            DistSpec::Finite(atoms) => {
                let sorted = Self::sorted_by_f(atoms);
                let mut acc = 0.0;
                for a in &sorted {
                    acc += a.prob;
                    if u < acc {
                        return (a.request.f_coeff, 0.0);
                    }
                }
                (sorted.last().map_or(0.0, |a| a.request.f_coeff), 0.0)
            }
        }
    }

    /// A finite-support version for FLUID and its `W₁` distance to `self`.
    /// Uniforms become `grid` equal-mass atoms at the midpoints of their quantile cells.
    pub fn to_finite(&self, grid: usize, action_cap: f64) -> (FiniteSupportDist, f64) {
        match self {
            DistSpec::UniformF { lo, hi, b } if lo != hi => {
                let n = grid.max(1);
                let atoms = (0..n)
                    .map(|k| Atom {
                        request: Request::new(lo + (hi - lo) * (k as f64 + 0.5) / n as f64, *b),
                        prob: 1.0 / n as f64,
                    })
                    .collect();
                let dist = FiniteSupportDist::new(atoms, 1).expect("midpoint grid is a distribution");
                (dist, action_cap * (hi - lo) / (4.0 * n as f64))
            }
            other => {
                let atoms = other.finite_atoms().expect("non-uniform families are finite");
                (FiniteSupportDist::new(atoms, 1).expect("validated distribution"), 0.0)
            }
        }
    }
}

/// Which policy an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    /// Dual FTRL tracking the learned targets.
    Ftrl,
    /// The learned dual price held fixed.
    Static,
    /// Dual FTRL tracking the constant target `B/T`.
    Fixed,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Ftrl, Algo::Static, Algo::Fixed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::Ftrl => "ftrl",
            Algo::Static => "static",
            Algo::Fixed => "fixed",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ftrl" => Ok(Algo::Ftrl),
            "static" => Ok(Algo::Static),
            "fixed" => Ok(Algo::Fixed),
            other => Err(format!("unknown algorithm `{other}` (expected ftrl, static or fixed)")),
        }
    }
}

/// Knobs of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub algos: Vec<Algo>,
    pub regularizer: RegularizerKind,
    /// `None` uses `√(d_R/T)`.
    pub eta: Option<f64>,
    /// Atoms per uniform distribution when discretizing for FLUID.
    pub fluid_grid: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            algos: Algo::ALL.to_vec(),
            regularizer: RegularizerKind::Quadratic,
            eta: None,
            fluid_grid: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: InstanceParams,
    pub true_dists: Vec<DistSpec>,
    pub sample_dists: Vec<DistSpec>,
    pub seed: u64,
    pub trials: usize,
    /// Scale `a` of the general-position perturbation; 0 disables it.
    pub perturbation_scale: f64,
    pub run: RunSettings,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.check()?;
        let t = self.params.horizon;
        for list in [&self.true_dists, &self.sample_dists] {
            if list.len() != t {
                return Err(Error::LengthMismatch {
                    expected: t,
                    actual: list.len(),
                });
            }
        }
        for (i, d) in self.true_dists.iter().chain(&self.sample_dists).enumerate() {
            d.validate(&self.params, i % t + 1)?;
        }
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be at least 1".into()));
        }
        if !(self.perturbation_scale >= 0.0 && self.perturbation_scale.is_finite()) {
            return Err(Error::InvalidPerturbation(self.perturbation_scale));
        }
        if let Some(eta) = self.run.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidParams(format!("eta must be positive, got {eta}")));
            }
        }
        if self.run.fluid_grid == 0 {
            return Err(Error::InvalidParams("fluid grid must be at least 1".into()));
        }
        Ok(())
    }
}

/// One second-price auction from the bidder's side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionEvent {
    pub value: f64,
    pub highest_competing_bid: f64,
}

/// Utility `(v - d) x` and payment `d x` over `x ∈ {0, 1}`; losing events
/// keep their negative reward coefficient.
pub fn auction_to_request(event: &AuctionEvent) -> Request {
    Request::with_loss(event.value - event.highest_competing_bid, event.highest_competing_bid)
}

/// The shaded bid `v / (1 + μ)`.
pub fn bid_from_multiplier(value: f64, mu: f64) -> f64 {
    value / (1.0 + mu)
}

/// Second-price outcome of a bid; ties go to the bidder.
pub fn auction_won(bid: f64, highest_competing_bid: f64) -> bool {
    bid >= highest_competing_bid
}

pub fn sample_requests(dists: &[DistSpec], rng: &mut StreamRng) -> Vec<Request> {
    dists.iter().map(|d| d.sample(rng)).collect()
}

/// One draw per period from the trace stream of `seed`.
pub fn sample_trace(dists: &[DistSpec], params: &InstanceParams, seed: u64) -> Result<Trace> {
    let mut rng = substream(seed, Domain::Trace, 0);
    validate_instance(params, &sample_requests(dists, &mut rng))
}

pub const PERTURBATION_ATTEMPTS: usize = 16;

/// Add `Unif[0, a]` noise to the reward coefficient of every request with
/// positive consumption until all ratios are distinct.
pub fn perturb_general_position(trace: &Trace, params: &InstanceParams, a: f64, rng: &mut StreamRng) -> Result<Trace> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidPerturbation(a));
    }
    for _ in 0..PERTURBATION_ATTEMPTS {
        let perturbed: Vec<Request> = trace
            .requests()
            .iter()
            .map(|r| {
                if r.b_coeff > 0.0 {
                    Request::new(r.f_coeff + rng.random_range(0.0..=a), r.b_coeff)
                } else {
                    *r
                }
            })
            .collect();
        if find_ratio_tie(&perturbed).is_none() {
            return validate_instance(params, &perturbed);
        }
    }
    Err(Error::PerturbationFailed {
        attempts: PERTURBATION_ATTEMPTS,
    })
}

/// The single-sample fragility construction: the sample distributions are
/// `Unif[1+ε, 1+2ε]` through `t = T/2 + 1` and `Unif[1-ε, 1]` afterwards,
/// the true distributions are `Unif[1-ε, 1]` throughout, `B = T/2`.
pub fn fragility_scenario(epsilon: f64, horizon: usize) -> Result<ScenarioConfig> {
    if horizon == 0 || !horizon.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!(
            "horizon must be even and positive, got {horizon}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let kappa = 2.0f64.max(1.0 + 2.0 * epsilon);
    let params = InstanceParams::new(horizon, horizon as f64 / 2.0, 1.0, 1.0, kappa, kappa)?;
    let high = DistSpec::UniformF {
        lo: 1.0 + epsilon,
        hi: 1.0 + 2.0 * epsilon,
        b: 1.0,
    };
    let low = DistSpec::UniformF {
        lo: 1.0 - epsilon,
        hi: 1.0,
        b: 1.0,
    };
    let split = horizon / 2 + 1;
    let sample_dists = (1..=horizon)
        .map(|t| if t <= split { high.clone() } else { low.clone() })
        .collect();
    Ok(ScenarioConfig {
        params,
        true_dists: vec![low; horizon],
        sample_dists,
        seed: 0,
        trials: 20,
        perturbation_scale: 0.0,
        run: RunSettings::default(),
    })
}

/// Runs of one algorithm across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoReport {
    pub algo: Algo,
    pub report: RegretReport,
    /// Per-period records of the first trial.
    pub first_trajectory: Vec<StepRecord>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub fluid: FluidSolution,
    /// `Σ_t W₁` between each true distribution and its FLUID discretization.
    pub discretization_distance: f64,
    /// `Σ_t W(P_t, P̃_t)`; NaN when some pair has no exact routine.
    pub total_wasserstein: f64,
    pub algos: Vec<AlgoReport>,
    /// The plan learned in the first trial.
    pub first_plan: TargetPlan,
}

struct TrialRun {
    outcomes: Vec<(TrialOutcome, Option<Vec<StepRecord>>)>,
    plan: TargetPlan,
}

/// Learn a plan from a trace drawn from the sample distributions, perturbing
/// it into general position when a scale is configured.
pub fn learn_trial_plan(config: &ScenarioConfig, trial: u64) -> Result<TargetPlan> {
    let mut rng = substream(config.seed, Domain::Trace, trial);
    let mut trace = validate_instance(&config.params, &sample_requests(&config.sample_dists, &mut rng))?;
    if config.perturbation_scale > 0.0 {
        let mut prng = substream(config.seed, Domain::Perturbation, trial);
        trace = perturb_general_position(&trace, &config.params, config.perturbation_scale, &mut prng)?;
    }
    learn_plan(&trace, config.params.budget)
}

fn run_trial(config: &ScenarioConfig, trial: u64) -> Result<TrialRun> {
    let params = &config.params;
    let plan = learn_trial_plan(config, trial)?;
    let beta = benchmark_sequence(&config.sample_dists, plan.mu_tilde, params.action_cap);
    let mut rng = substream(config.seed, Domain::Requests, trial);
    let stream = sample_requests(&config.true_dists, &mut rng);
    let options = EpisodeOptions {
        lite: trial != 0,
        benchmark: Some(&beta),
    };
    let fixed = fixed_targets(params.budget, params.horizon);
    let run = &config.run;
    let outcomes = run
        .algos
        .iter()
        .map(|algo| {
            let (res, targets): (EpisodeResult, &[f64]) = match algo {
                Algo::Ftrl => (
                    run_dual_ftrl(&stream, &plan.targets, params, run.regularizer, run.eta, options),
                    &plan.targets,
                ),
                Algo::Static => (
                    run_static_dual(&stream, plan.mu_tilde, &plan.targets, params, options),
                    &plan.targets,
                ),
                Algo::Fixed => (
                    run_dual_ftrl(&stream, &fixed, params, run.regularizer, run.eta, options),
                    &fixed,
                ),
            };
            let sum_targets: f64 = targets.iter().sum();
            let outcome = TrialOutcome {
                reward: res.total_reward,
                overspend: params.rate_bound * (sum_targets - params.budget).max(0.0),
                weighted_target_gap: res.weighted_target_gap.unwrap_or(0.0),
            };
            (outcome, res.records)
        })
        .collect();
    Ok(TrialRun { outcomes, plan })
}

fn total_wasserstein(config: &ScenarioConfig) -> f64 {
    let xbar = config.params.action_cap;
    let mut total = 0.0;
    let mut last: Option<(&DistSpec, &DistSpec, f64)> = None;
    for (p, q) in config.true_dists.iter().zip(&config.sample_dists) {
        let w = match last {
            Some((lp, lq, w)) if lp == p && lq == q => w,
            _ => match wasserstein(p, q, xbar) {
                Ok(w) => w,
                Err(_) => return f64::NAN,
            },
        };
        last = Some((p, q, w));
        total += w;
    }
    total
}

/// FLUID of the true distributions, with uniforms discretized on the configured grid.
pub fn scenario_fluid(config: &ScenarioConfig) -> Result<(FluidSolution, f64)> {
    let xbar = config.params.action_cap;
    let mut finite = Vec::with_capacity(config.true_dists.len());
    let mut distance = 0.0;
    let mut last: Option<(&DistSpec, FiniteSupportDist, f64)> = None;
    for d in &config.true_dists {
        let (fd, err) = match &last {
            Some((ld, fd, err)) if *ld == d => (fd.clone(), *err),
            _ => d.to_finite(config.run.fluid_grid, xbar),
        };
        distance += err;
        finite.push(fd.clone());
        last = Some((d, fd, err));
    }
    Ok((fluid_value(&finite, config.params.budget, xbar)?, distance))
}

/// Per trial: sample a trace, learn the plan, sample one request stream and
/// run every configured algorithm on that same stream. Trials run in
/// parallel; results are combined in trial order.
pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let (fluid, discretization_distance) = scenario_fluid(config)?;
    let total_w = total_wasserstein(config);

    let trials: Vec<TrialRun> = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(config, trial))
        .collect::<Result<Vec<_>>>()?;

    let mut trials = trials.into_iter();
    let first = trials.next().expect("at least one trial");
    let rest: Vec<TrialRun> = trials.collect();
    let algos = config
        .run
        .algos
        .iter()
        .enumerate()
        .map(|(k, &algo)| {
            let outcomes: Vec<TrialOutcome> = std::iter::once(&first).chain(&rest).map(|t| t.outcomes[k].0).collect();
            AlgoReport {
                algo,
                report: regret_report(&outcomes, fluid.value, total_w),
                first_trajectory: first.outcomes[k].1.clone().unwrap_or_default(),
                rewards: outcomes.iter().map(|o| o.reward).collect(),
            }
        })
        .collect();

    Ok(MonteCarloReport {
        fluid,
        discretization_distance,
        total_wasserstein: total_w,
        algos,
        first_plan: first.plan,
    })
}

/// `r(T) = 8 b̄ √(T ln T)`.
pub fn r_of_t(horizon: usize, consumption_bound: f64) -> f64 {
    let t = horizon as f64;
    8.0 * consumption_bound * (t * t.ln()).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub radius: f64,
    /// `sup_μ |Σ_t b̃*_t(μ) - Σ_t E[b̂*_t(μ)]|` per trial.
    pub sup_deviations: Vec<f64>,
    pub violations: usize,
    pub violation_rate: f64,
}

/// Distinct distributions with their multiplicities.
fn group_dists(dists: &[DistSpec]) -> Vec<(&DistSpec, f64)> {
    let mut groups: Vec<(&DistSpec, f64)> = Vec::new();
    for d in dists {
        match groups.iter_mut().find(|(g, _)| *g == d) {
            Some((_, n)) => *n += 1.0,
            None => groups.push((d, 1.0)),
        }
    }
    groups
}

/// The supremum over all prices of the gap between the trace's total
/// best-response consumption and its expectation.
///
/// Both sides are monotone in `μ`, the trace side is a step function and
/// the expectation is piecewise affine, so the supremum is attained at a
/// breakpoint either from the closed side or as a right limit.
pub fn sup_deviation(trace: &[Request], dists: &[DistSpec], action_cap: f64) -> f64 {
    let groups = group_dists(dists);
    let expected = |mu: f64| {
        groups
            .iter()
            .map(|(d, n)| n * d.expected_consumption(mu, action_cap))
            .sum::<f64>()
    };
    let expected_right = |mu: f64| {
        groups
            .iter()
            .map(|(d, n)| n * d.expected_consumption_right(mu, action_cap))
            .sum::<f64>()
    };

    let mut sorted: Vec<(f64, f64)> = trace
        .iter()
        .filter(|r| r.has_breakpoint())
        .map(|r| (r.ratio(), r.consumption_at(action_cap)))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // suffix[i] = consumption of sorted[i..]
    let mut suffix = vec![0.0; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        suffix[i] = suffix[i + 1] + sorted[i].1;
    }
    let at_or_above = |mu: f64| suffix[sorted.partition_point(|e| e.0 < mu)];
    let above = |mu: f64| suffix[sorted.partition_point(|e| e.0 <= mu)];

    let mut grid: Vec<f64> = std::iter::once(0.0)
        .chain(sorted.iter().map(|e| e.0))
        .chain(groups.iter().flat_map(|(d, _)| d.support_breakpoints()))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut sup = 0.0f64;
    for w in grid.windows(2) {
        sup = sup.max((at_or_above(0.5 * (w[0] + w[1])) - expected(0.5 * (w[0] + w[1]))).abs());
    }
    let top = grid.last().copied().unwrap_or(0.0);
    grid.push(top + 1.0);
    for &mu in &grid {
        sup = sup.max((at_or_above(mu) - expected(mu)).abs());
        sup = sup.max((above(mu) - expected_right(mu)).abs());
    }
    sup
}

/// Fraction of trials in which the sup-deviation exceeds `r(T)`.
pub fn concentration_check(
    dists: &[DistSpec],
    params: &InstanceParams,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    params.check()?;
    if dists.len() != params.horizon {
        return Err(Error::LengthMismatch {
            expected: params.horizon,
            actual: dists.len(),
        });
    }
    for (i, d) in dists.iter().enumerate() {
        d.validate(params, i + 1)?;
    }
    let radius = r_of_t(params.horizon, params.consumption_bound);
    let sup_deviations: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(seed, Domain::Trace, trial);
            sup_deviation(&sample_requests(dists, &mut rng), dists, params.action_cap)
        })
        .collect();
    let violations = sup_deviations.iter().filter(|&&d| d > radius).count();
    Ok(ConcentrationReport {
        radius,
        violation_rate: if trials == 0 {
            0.0
        } else {
            violations as f64 / trials as f64
        },
        sup_deviations,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::best_response;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn atom(f: f64, b: f64, prob: f64) -> Atom {
        Atom {
            request: Request::new(f, b),
            prob,
        }
    }

    fn unit_params(horizon: usize, budget: f64) -> InstanceParams {
        InstanceParams::new(horizon, budget, 1.0, 1.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn point_mass_trace_is_deterministic() {
        let dists = vec![DistSpec::PointMass(Request::new(1.0, 0.5)); 4];
        let t = sample_trace(&dists, &unit_params(4, 1.0), 3).unwrap();
        assert!(t.requests().iter().all(|r| *r == Request::new(1.0, 0.5)));
    }

    #[test]
    fn seeded_traces_repeat_and_respect_support() {
        let dists = vec![
            DistSpec::UniformF {
                lo: 1.0,
                hi: 2.0,
                b: 1.0
            };
            200
        ];
        let p = unit_params(200, 10.0);
        let a = sample_trace(&dists, &p, 11).unwrap();
        let b = sample_trace(&dists, &p, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.requests().iter().all(|r| (1.0..=2.0).contains(&r.f_coeff)));
        assert_ne!(a, sample_trace(&dists, &p, 12).unwrap());
    }

    #[test]
    fn perturbation_breaks_ties_with_small_changes() {
        let p = unit_params(4, 2.0);
        let reqs = vec![
            Request::new(1.0, 1.0),
            Request::new(0.5, 0.5),
            Request::new(1.0, 1.0),
            Request::new(0.0, 0.0),
        ];
        let trace = validate_instance(&p, &reqs).unwrap();
        assert!(!trace.general_position());
        let mut rng = substream(1, Domain::Perturbation, 0);
        let out = perturb_general_position(&trace, &p, 1e-9, &mut rng).unwrap();
        assert!(out.general_position());
        for (a, b) in out.requests().iter().zip(&reqs) {
            assert!(a.f_coeff >= b.f_coeff && a.f_coeff - b.f_coeff <= 1e-9);
            assert_eq!(a.b_coeff, b.b_coeff);
        }
        assert_eq!(out.requests()[3], Request::zero());
        assert_eq!(
            perturb_general_position(&trace, &p, 0.0, &mut rng).unwrap_err(),
            Error::InvalidPerturbation(0.0)
        );
    }

    #[test]
    fn auction_examples() {
        let win = auction_to_request(&AuctionEvent {
            value: 2.0,
            highest_competing_bid: 1.0,
        });
        assert_eq!((win.f_coeff, win.b_coeff), (1.0, 1.0));
        let lose = auction_to_request(&AuctionEvent {
            value: 1.0,
            highest_competing_bid: 2.0,
        });
        assert_eq!((lose.f_coeff, lose.b_coeff), (-1.0, 2.0));
        for mu in [0.0, 0.5, 3.0] {
            assert_eq!(best_response(&lose, mu, 1.0).action, 0.0);
        }
        let tie = auction_to_request(&AuctionEvent {
            value: 1.0,
            highest_competing_bid: 1.0,
        });
        assert_eq!(best_response(&tie, 0.0, 1.0).action, 0.0);

        assert_eq!(bid_from_multiplier(2.0, 0.5), 4.0 / 3.0);
        assert!(auction_won(bid_from_multiplier(2.0, 0.5), 1.0));
        assert_eq!(bid_from_multiplier(3.0, 0.0), 3.0);
        assert!(!auction_won(bid_from_multiplier(0.0, 0.2), 0.1));
    }

    #[test]
    fn shaded_bids_match_best_response() {
        let mut rng = substream(5, Domain::Verify, 0);
        for _ in 0..100_000 {
            let v: f64 = rng.random_range(0.0..2.0);
            let d: f64 = rng.random_range(0.0..2.0);
            let mu: f64 = rng.random_range(0.0..3.0);
            let req = auction_to_request(&AuctionEvent {
                value: v,
                highest_competing_bid: d,
            });
            let won = auction_won(bid_from_multiplier(v, mu), d);
            assert_eq!(won, best_response(&req, mu, 1.0).action == 1.0, "v={v} d={d} mu={mu}");
        }
    }

    #[test]
    fn fragility_construction() {
        let cfg = fragility_scenario(0.05, 1000).unwrap();
        let high = DistSpec::UniformF {
            lo: 1.05,
            hi: 1.1,
            b: 1.0,
        };
        let low = DistSpec::UniformF {
            lo: 0.95,
            hi: 1.0,
            b: 1.0,
        };
        assert!(cfg.sample_dists[..501].iter().all(|d| *d == high));
        assert!(cfg.sample_dists[501..].iter().all(|d| *d == low));
        assert!(cfg.true_dists.iter().all(|d| *d == low));
        assert_eq!(cfg.params.budget, 500.0);
        let w = total_wasserstein(&cfg);
        assert!((w - 501.0 * 0.1).abs() < 1e-9, "{w}");
        assert!(fragility_scenario(0.05, 999).is_err());
        assert!(fragility_scenario(1.0, 10).is_err());
    }

    #[test]
    fn static_dual_earns_nothing_under_fragility() {
        let mut cfg = fragility_scenario(0.05, 200).unwrap();
        cfg.trials = 3;
        let rep = run_monte_carlo(&cfg).unwrap();
        assert!(rep.first_plan.mu_tilde >= 1.05);
        let stat = rep.algos.iter().find(|a| a.algo == Algo::Static).unwrap();
        assert!(stat.rewards.iter().all(|&r| r == 0.0));
        let ftrl = rep.algos.iter().find(|a| a.algo == Algo::Ftrl).unwrap();
        assert!(ftrl.report.mean_reward > 0.5 * rep.fluid.value);
    }

    #[test]
    fn point_mass_monte_carlo_is_deterministic() {
        let p = unit_params(6, 3.0);
        let dists: Vec<DistSpec> = (0..6)
            .map(|i| DistSpec::PointMass(Request::new(0.1 * (i + 1) as f64, 1.0)))
            .collect();
        let cfg = ScenarioConfig {
            params: p,
            true_dists: dists.clone(),
            sample_dists: dists,
            seed: 4,
            trials: 1,
            perturbation_scale: 0.0,
            run: RunSettings::default(),
        };
        let a = run_monte_carlo(&cfg).unwrap();
        let b = run_monte_carlo(&cfg).unwrap();
        // a single trial has a NaN standard error, so compare renderings
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.total_wasserstein, 0.0);
        assert!(a.algos[0].report.std_error.is_nan());
        assert!((a.fluid.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible_across_thread_counts() {
        let mut cfg = fragility_scenario(0.1, 100).unwrap();
        cfg.trials = 8;
        cfg.seed = 77;
        let a = run_monte_carlo(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_monte_carlo(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn r_of_t_value() {
        assert!((r_of_t(100, 1.0) - 171.677_282).abs() < 1e-6);
        assert_eq!(r_of_t(1, 1.0), 0.0);
    }

    #[test]
    fn point_masses_never_deviate() {
        let dists = vec![DistSpec::PointMass(Request::new(1.0, 1.0)); 50];
        let rep = concentration_check(&dists, &unit_params(50, 10.0), 20, 1).unwrap();
        assert!(rep.sup_deviations.iter().all(|&d| d == 0.0));
        assert_eq!(rep.violation_rate, 0.0);
    }

    #[test]
    fn uniform_expectation_closed_form() {
        let d = DistSpec::UniformF {
            lo: 1.0,
            hi: 2.0,
            b: 0.5,
        };
        assert_eq!(d.expected_consumption(0.0, 1.0), 0.5);
        assert_eq!(d.expected_consumption(3.0, 1.0), 0.25);
        assert_eq!(d.expected_consumption(5.0, 1.0), 0.0);
        let f = DistSpec::Finite(vec![atom(1.0, 1.0, 0.25), atom(2.0, 1.0, 0.75)]);
        assert_eq!(f.expected_consumption(1.0, 2.0), 2.0);
        assert_eq!(f.expected_consumption_right(1.0, 2.0), 1.5);
    }

    #[test]
    fn midpoint_discretization_distance() {
        let d = DistSpec::UniformF {
            lo: 0.0,
            hi: 1.0,
            b: 1.0,
        };
        let (fd, err) = d.to_finite(10, 1.0);
        assert_eq!(fd.atoms().len(), 10);
        assert!((err - 0.025).abs() < 1e-15);
        let as_spec = DistSpec::Finite(fd.atoms().to_vec());
        assert!((wasserstein(&d, &as_spec, 1.0).unwrap() - err).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn breakpoint_grid_attains_the_supremum(
            raw in proptest::collection::vec((0u8..16, 1u8..5, 1u8..5), 1..4),
            horizon in 1usize..=10,
            seed in any::<u64>(),
        ) {
            // dyadic coefficients keep every breakpoint on the dense grid
            let total: f64 = raw.iter().map(|x| x.2 as f64).sum();
            let atoms: Vec<Atom> = raw.iter().map(|&(f, b, w)| {
                let b = b as f64 / 4.0;
                atom((f as f64 / 8.0).min(2.0 * b), b, w as f64 / total)
            }).collect();
            let dists = vec![DistSpec::Finite(atoms); horizon];
            let mut rng = substream(seed, Domain::Verify, 0);
            let trace = sample_requests(&dists, &mut rng);
            let fast = sup_deviation(&trace, &dists, 1.0);
            let step = 1.0 / 16384.0;
            let mut dense = 0.0f64;
            for k in 0..=100_000u32 {
                let mu = k as f64 * step;
                let emp: f64 = trace.iter().map(|r| best_response(r, mu, 1.0).consumption).sum();
                let exp: f64 = dists.iter().map(|d| d.expected_consumption(mu, 1.0)).sum();
                dense = dense.max((emp - exp).abs());
            }
            prop_assert!((fast - dense).abs() <= 1e-12, "{} vs {}", fast, dense);
        }
    }
}
