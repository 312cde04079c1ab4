//! Seeded property suites. Every instance is drawn from its own substream
//! keyed by `(seed, property, instance index)`, so a failure report names
//! everything needed to replay it.

use rand::Rng;
use rayon::prelude::*;

use crate::bench::{
    distributional_dual, fluid_breakpoints, fluid_value, hindsight_opt, mean_and_stderr, FiniteSupportDist,
};
use crate::model::{validate_instance, InstanceParams, Request, Trace};
use crate::oracle::{best_response, brute_force_dual};
use crate::pacing::{coupling_gap, DualFtrl, RegularizerKind, RegularizerSpec};
use crate::rng::{substream, Domain, StreamRng};
use crate::sim::{concentration_check, sample_requests, Atom, DistSpec};
use crate::traceplan::{learn_plan, learn_plan_leave_one_out};

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub instances: usize,
    pub checks: usize,
    pub failures: usize,
    /// Description of the first failure, with seed and instance index.
    pub first_failure: Option<String>,
    /// Free-form summary numbers (rates, margins).
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &'static str, instances: usize) -> Self {
        PropertyResult {
            name,
            instances,
            checks: 0,
            failures: 0,
            first_failure: None,
            detail: String::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    fn merge(mut self, other: Tally) -> Self {
        self.checks += other.checks;
        self.failures += other.failures;
        if self.first_failure.is_none() {
            self.first_failure = other.first_failure;
        }
        self
    }
}

/// Per-instance counts, combined in instance order.
#[derive(Debug, Default)]
struct Tally {
    checks: usize,
    failures: usize,
    first_failure: Option<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    fn combine(mut self, other: Tally) -> Tally {
        self.checks += other.checks;
        self.failures += other.failures;
        if self.first_failure.is_none() {
            self.first_failure = other.first_failure;
        }
        self
    }
}

fn run_instances(n: usize, f: impl Fn(usize) -> Tally + Sync + Send) -> Tally {
    (0..n)
        .into_par_iter()
        .map(f)
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::default(), Tally::combine)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prop {
    Oracle = 1,
    TraceDual,
    Monotonicity,
    Coupling,
    ChangeInTarget,
    LazyOmd,
    Concentration,
    Ordering,
}

fn instance_rng(seed: u64, prop: Prop, index: usize) -> StreamRng {
    substream(seed, Domain::Verify, ((prop as u64) << 40) | index as u64)
}

const KAPPA: f64 = 2.0;

fn random_request(rng: &mut StreamRng) -> Request {
    let b = if rng.random_bool(0.05) {
        0.0
    } else {
        rng.random::<f64>()
    };
    let f = if b == 0.0 || rng.random_bool(0.1) {
        0.0
    } else {
        rng.random::<f64>() * KAPPA * b
    };
    Request::new(f, b)
}

/// A random instance with `T ≤ max_t`, `x̄ = b̄ = 1`, `κ = 2`, and a budget
/// between zero and 1.2 times the total consumption.
fn random_instance(rng: &mut StreamRng, max_t: usize) -> (InstanceParams, Trace) {
    loop {
        let horizon = rng.random_range(1..=max_t);
        let reqs: Vec<Request> = (0..horizon).map(|_| random_request(rng)).collect();
        let total: f64 = reqs.iter().map(|r| r.b_coeff).sum();
        let budget = rng.random_range(0.0..=1.2) * total;
        let params = InstanceParams::new(horizon, budget, 1.0, 1.0, KAPPA, KAPPA).expect("valid parameters");
        let trace = validate_instance(&params, &reqs).expect("generated requests are valid");
        if trace.general_position() {
            return (params, trace);
        }
    }
}

/// Instance counts for one run of the suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSizes {
    pub plan_instances: usize,
    pub monotonicity_requests: usize,
    pub monotonicity_grid: usize,
    pub coupling_runs: usize,
    pub change_in_target_traces: usize,
    pub lazy_episodes: usize,
    pub concentration_trials: usize,
    pub concentration_horizon: usize,
    pub ordering_sequences: usize,
}

impl SuiteSizes {
    pub fn full() -> Self {
        SuiteSizes {
            plan_instances: 1000,
            monotonicity_requests: 1000,
            monotonicity_grid: 100,
            coupling_runs: 200,
            change_in_target_traces: 200,
            lazy_episodes: 100,
            concentration_trials: 1000,
            concentration_horizon: 500,
            ordering_sequences: 1000,
        }
    }

    /// Ten times fewer instances.
    pub fn quick() -> Self {
        let f = Self::full();
        SuiteSizes {
            plan_instances: f.plan_instances / 10,
            monotonicity_requests: f.monotonicity_requests / 10,
            coupling_runs: f.coupling_runs / 10,
            change_in_target_traces: f.change_in_target_traces / 10,
            lazy_episodes: f.lazy_episodes / 10,
            concentration_trials: f.concentration_trials / 10,
            ordering_sequences: f.ordering_sequences / 10,
            ..f
        }
    }
}

/// `learn_plan` agrees with the brute-force dual minimizer on `μ̃` and with
/// the best response on every target.
pub fn oracle_equivalence(seed: u64, instances: usize) -> PropertyResult {
    let tally = run_instances(instances, |i| {
        let mut rng = instance_rng(seed, Prop::Oracle, i);
        let (params, trace) = random_instance(&mut rng, 50);
        let mut t = Tally::default();
        let plan = learn_plan(&trace, params.budget).expect("general position");
        let brute = brute_force_dual(&trace, params.budget);
        t.check(plan.mu_tilde == brute.mu, || {
            format!(
                "seed={seed} instance={i}: mu_tilde {} != brute force {}",
                plan.mu_tilde, brute.mu
            )
        });
        for (k, (r, &lambda)) in trace.requests().iter().zip(&plan.targets).enumerate() {
            let expect = best_response(r, plan.mu_tilde, 1.0).consumption;
            t.check(lambda == expect, || {
                format!(
                    "seed={seed} instance={i} t={}: lambda {lambda} != best response {expect}",
                    k + 1
                )
            });
        }
        t
    });
    PropertyResult::new("oracle-equivalence", instances).merge(tally)
}

/// Either `μ̃ = 0` and `Σλ ≤ B + b̄`, or `|B - Σλ| ≤ b̄`.
pub fn trace_dual(seed: u64, instances: usize) -> PropertyResult {
    let tally = run_instances(instances, |i| {
        let mut rng = instance_rng(seed, Prop::TraceDual, i);
        let (params, trace) = random_instance(&mut rng, 50);
        let plan = learn_plan(&trace, params.budget).expect("general position");
        let mut t = Tally::default();
        t.check(
            plan.satisfies_trace_dual(params.budget, params.consumption_bound),
            || {
                format!(
                    "seed={seed} instance={i}: mu_tilde={} sum_lambda={} B={}",
                    plan.mu_tilde, plan.sum_targets, params.budget
                )
            },
        );
        t
    });
    PropertyResult::new("trace-dual", instances).merge(tally)
}

/// `κ (Σλ - B)^+ ≤ κ b̄` for learned plans, on the oracle and trace-dual instance sets.
pub fn r2_bound(seed: u64, instances: usize) -> PropertyResult {
    let tally = run_instances(instances, |i| {
        let mut t = Tally::default();
        for prop in [Prop::Oracle, Prop::TraceDual] {
            let mut rng = instance_rng(seed, prop, i);
            let (params, trace) = random_instance(&mut rng, 50);
            let plan = learn_plan(&trace, params.budget).expect("general position");
            let r2 = plan.overspend_penalty(params.budget, params.rate_bound);
            t.check(r2 <= params.rate_bound * params.consumption_bound, || {
                format!("seed={seed} instance={i} ({prop:?} set): R2={r2}")
            });
        }
        t
    });
    PropertyResult::new("r2-bound", 2 * instances).merge(tally)
}

/// `b*(μ)` is non-increasing on a uniform grid over `[0, κ + 1]`.
pub fn monotonicity(seed: u64, requests: usize, grid: usize) -> PropertyResult {
    let tally = run_instances(requests, |i| {
        let mut rng = instance_rng(seed, Prop::Monotonicity, i);
        let r = random_request(&mut rng);
        let xbar = rng.random_range(0.5..2.0);
        let mut t = Tally::default();
        let mut prev = f64::INFINITY;
        for k in 0..grid {
            let mu = (KAPPA + 1.0) * k as f64 / (grid.max(2) - 1) as f64;
            let b = best_response(&r, mu, xbar).consumption;
            t.check(b <= prev, || {
                format!("seed={seed} request={i}: b*({mu}) = {b} > {prev}")
            });
            prev = b;
        }
        t
    });
    PropertyResult::new("monotonicity", requests).merge(tally)
}

/// Iterates driven by two target sequences stay within `(η/σ)(Σ_{t<s}|Δλ_t| + b̄)`.
pub fn coupling(seed: u64, runs: usize) -> PropertyResult {
    let tally = run_instances(runs, |i| {
        let mut rng = instance_rng(seed, Prop::Coupling, i);
        let horizon = rng.random_range(10..=200);
        let stream: Vec<Request> = (0..horizon).map(|_| random_request(&mut rng)).collect();
        let params = InstanceParams::new(horizon, horizon as f64 * 0.3, 1.0, 1.0, KAPPA, KAPPA).expect("valid");
        let a: Vec<f64> = (0..horizon).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|&x| if rng.random_bool(0.2) { rng.random::<f64>() } else { x })
            .collect();
        let kind = if i % 2 == 0 {
            RegularizerKind::Quadratic
        } else {
            RegularizerKind::ShiftedEntropy
        };
        let eta = rng.random_range(0.01..=0.5);
        let rep = coupling_gap(&stream, &a, &b, &params, kind, eta);
        let mut t = Tally::default();
        for (s, (g, bound)) in rep.gaps.iter().zip(&rep.bounds).enumerate() {
            t.check(*g <= bound + 1e-12, || {
                format!("seed={seed} run={i} ({kind:?}) s={}: gap {g} > bound {bound}", s + 1)
            });
        }
        t
    });
    PropertyResult::new("coupling", runs).merge(tally)
}

/// Removing request `s` can only lower the dual and raise other targets, the
/// targets before `s` move by at most `3 b̄` in total, and request `s` is
/// treated the same at both duals.
pub fn change_in_target(seed: u64, traces: usize) -> (PropertyResult, PropertyResult) {
    let tallies: Vec<(Tally, Tally)> = (0..traces)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(seed, Prop::ChangeInTarget, i);
            let (params, trace) = random_instance(&mut rng, 40);
            let bbar = params.consumption_bound;
            let plan = learn_plan(&trace, params.budget).expect("general position");
            let (mut main, mut loo) = (Tally::default(), Tally::default());
            for s in 1..=trace.len() {
                let minus = learn_plan_leave_one_out(&trace, params.budget, s).expect("valid index");
                main.check(plan.mu_tilde >= minus.mu_tilde_minus, || {
                    format!(
                        "seed={seed} trace={i} s={s}: mu {} < mu^-s {}",
                        plan.mu_tilde, minus.mu_tilde_minus
                    )
                });
                for t in (1..=trace.len()).filter(|&t| t != s) {
                    let (l, lm) = (plan.targets[t - 1], minus.targets_minus[t - 1]);
                    main.check(l <= lm, || {
                        format!("seed={seed} trace={i} s={s} t={t}: lambda {l} > {lm}")
                    });
                }
                let drift: f64 = (0..s - 1)
                    .map(|k| (minus.targets_minus[k] - plan.targets[k]).abs())
                    .sum();
                main.check(drift <= 3.0 * bbar, || {
                    format!("seed={seed} trace={i} s={s}: drift {drift} > 3 b_bar")
                });
                let r = &trace.requests()[s - 1];
                let at = best_response(r, plan.mu_tilde, 1.0).consumption;
                let at_minus = best_response(r, minus.mu_tilde_minus, 1.0).consumption;
                loo.check(at == at_minus, || {
                    format!("seed={seed} trace={i} s={s}: b*_s(mu)={at} but b*_s(mu^-s)={at_minus}")
                });
            }
            (main, loo)
        })
        .collect();
    let (mut main, mut loo) = (Tally::default(), Tally::default());
    for (a, b) in tallies {
        main = main.combine(a);
        loo = loo.combine(b);
    }
    (
        PropertyResult::new("change-in-target", traces).merge(main),
        PropertyResult::new("leave-one-out", traces).merge(loo),
    )
}

/// The lazy quadratic iterate equals `clamp(-η Σ g, 0, κ)` at every step.
pub fn lazy_omd_equivalence(seed: u64, episodes: usize) -> PropertyResult {
    let tally = run_instances(episodes, |i| {
        let mut rng = instance_rng(seed, Prop::LazyOmd, i);
        let horizon = rng.random_range(1..=1000);
        let eta = rng.random_range(0.001..=0.5);
        let reg = RegularizerSpec::new(RegularizerKind::Quadratic, KAPPA);
        let mut engine = DualFtrl::new(reg, eta, KAPPA, 1.0);
        let mut grad_sum = 0.0;
        let mut t = Tally::default();
        for step in 1..=horizon {
            let r = random_request(&mut rng);
            let lambda = rng.random::<f64>();
            let out = engine.step(&r, lambda, f64::INFINITY);
            grad_sum += out.gradient;
            let direct = (-eta * grad_sum).clamp(0.0, KAPPA);
            let mu = engine.state().mu;
            t.check((mu - direct).abs() <= 1e-12, || {
                format!("seed={seed} episode={i} step={step}: lazy {mu} vs direct {direct}")
            });
        }
        t
    });
    PropertyResult::new("lazy-omd", episodes).merge(tally)
}

/// The i.i.d. five-atom distribution used by the concentration and ordering suites.
pub fn five_atom_dist() -> DistSpec {
    let atoms = [
        (0.2, 0.5, 0.2),
        (0.6, 1.0, 0.25),
        (0.9, 0.75, 0.2),
        (1.4, 1.0, 0.2),
        (0.2, 0.25, 0.15),
    ];
    DistSpec::Finite(
        atoms
            .iter()
            .map(|&(f, b, p)| Atom {
                request: Request::new(f, b),
                prob: p,
            })
            .collect(),
    )
}

/// The sup-deviation exceeds `r(T)` in at most 1% of trials.
pub fn concentration(seed: u64, trials: usize, horizon: usize) -> PropertyResult {
    let dists = vec![five_atom_dist(); horizon];
    let params = InstanceParams::new(horizon, 0.4 * horizon as f64, 1.0, 1.0, KAPPA, KAPPA).expect("valid");
    let stream_seed = substream(seed, Domain::Verify, (Prop::Concentration as u64) << 40).random::<u64>();
    let rep = concentration_check(&dists, &params, trials, stream_seed).expect("valid distributions");
    let mut res = PropertyResult::new("concentration", trials);
    let max_dev = rep.sup_deviations.iter().copied().fold(0.0, f64::max);
    res.check(rep.violation_rate <= 0.01, || {
        format!(
            "seed={seed}: violation rate {} exceeds 1% (r(T)={:.3}, max deviation {max_dev:.3})",
            rep.violation_rate, rep.radius
        )
    });
    res.detail = format!(
        "violation rate {:.4}, max deviation {max_dev:.3}, r(T) {:.3}",
        rep.violation_rate, rep.radius
    );
    res
}

/// Mean hindsight OPT is at most FLUID plus three standard errors, and FLUID
/// never exceeds the distributional dual at a probed price.
pub fn benchmark_ordering(seed: u64, sequences: usize) -> (PropertyResult, PropertyResult) {
    let horizon = 50;
    let mut rng = instance_rng(seed, Prop::Ordering, usize::MAX >> 24);
    // heterogeneous periods: each period is a random reweighting of the five atoms
    let base = five_atom_dist();
    let dists: Vec<DistSpec> = (0..horizon)
        .map(|_| match &base {
            DistSpec::Finite(atoms) => {
                let w: Vec<f64> = atoms.iter().map(|_| rng.random_range(0.1..1.0)).collect();
                let total: f64 = w.iter().sum();
                DistSpec::Finite(
                    atoms
                        .iter()
                        .zip(&w)
                        .map(|(a, w)| Atom {
                            request: a.request,
                            prob: w / total,
                        })
                        .collect(),
                )
            }
            _ => unreachable!("five-atom distribution is finite"),
        })
        .collect();
    let finite: Vec<FiniteSupportDist> = dists.iter().map(|d| d.to_finite(1, 1.0).0).collect();
    let budget = 0.4 * horizon as f64;
    let fluid = fluid_value(&finite, budget, 1.0).expect("valid distributions");

    let opts: Vec<f64> = (0..sequences)
        .into_par_iter()
        .map(|i| {
            let mut r = instance_rng(seed, Prop::Ordering, i);
            hindsight_opt(&sample_requests(&dists, &mut r), budget, 1.0)
        })
        .collect();
    let (mean, se) = mean_and_stderr(&opts);
    let mut ordering = PropertyResult::new("benchmark-ordering", sequences);
    ordering.check(mean <= fluid.value + 3.0 * se, || {
        format!("seed={seed}: mean OPT {mean} > FLUID {} + 3 x {se}", fluid.value)
    });
    ordering.detail = format!("mean OPT {mean:.4} (se {se:.4}), FLUID {:.4}", fluid.value);

    let mut duality = PropertyResult::new("weak-duality", 1);
    let mut probes: Vec<f64> = vec![0.0];
    let bps = fluid_breakpoints(&finite);
    probes.extend(bps.iter().copied());
    probes.extend(bps.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    probes.push(bps.last().copied().unwrap_or(0.0) + 1.0);
    for mu in probes {
        let d = distributional_dual(&finite, budget, mu, 1.0);
        duality.check(fluid.value <= d + 1e-9, || {
            format!("seed={seed}: FLUID {} > D({mu}) = {d}", fluid.value)
        });
    }
    (ordering, duality)
}

/// Every suite at the given sizes.
pub fn run_all(seed: u64, sizes: SuiteSizes) -> Vec<PropertyResult> {
    let (cit, loo) = change_in_target(seed, sizes.change_in_target_traces);
    let (ordering, duality) = benchmark_ordering(seed, sizes.ordering_sequences);
    vec![
        oracle_equivalence(seed, sizes.plan_instances),
        trace_dual(seed, sizes.plan_instances),
        monotonicity(seed, sizes.monotonicity_requests, sizes.monotonicity_grid),
        coupling(seed, sizes.coupling_runs),
        cit,
        loo,
        lazy_omd_equivalence(seed, sizes.lazy_episodes),
        concentration(seed, sizes.concentration_trials, sizes.concentration_horizon),
        ordering,
        duality,
        r2_bound(seed, sizes.plan_instances),
    ]
}
