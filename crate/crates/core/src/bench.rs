//! Exact benchmarks and diagnostics.
//!
//! FLUID has a single expected-budget constraint, so its dual is a convex
//! piecewise-linear function of one price with kinks at the atom ratios.
//! [`fluid_value`] minimizes that dual by slope enumeration and recovers the
//! primal by accepting all strictly profitable mass plus a share of the
//! boundary ratio. [`fluid_greedy`] solves the same LP directly as a
//! fractional knapsack over `(period, atom)` pairs and is the cross-check.

use crate::error::{Error, Result};
use crate::model::Request;
use crate::oracle::best_response;
use crate::sim::{Atom, DistSpec};

/// A finite-support request distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSupportDist {
    atoms: Vec<Atom>,
}

impl FiniteSupportDist {
    /// `period` is 1-based and only used in error messages.
    pub fn new(atoms: Vec<Atom>, period: usize) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySupport { period });
        }
        for a in &atoms {
            if !(a.prob.is_finite() && a.prob >= 0.0) {
                return Err(Error::NegativeProbability { period, prob: a.prob });
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "period {period}: probabilities sum to {total}, expected 1"
            )));
        }
        Ok(FiniteSupportDist { atoms })
    }

    pub fn point(request: Request) -> Self {
        FiniteSupportDist {
            atoms: vec![Atom { request, prob: 1.0 }],
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `E[max_x {f(x) - μ b(x)}]`.
    pub fn expected_profit(&self, mu: f64, action_cap: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * (a.request.f_coeff - mu * a.request.b_coeff).max(0.0) * action_cap)
            .sum()
    }

    /// `E[b*(μ)]`.
    pub fn expected_consumption(&self, mu: f64, action_cap: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * best_response(&a.request, mu, action_cap).consumption)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidSolution {
    pub value: f64,
    /// Smallest minimizer of the distributional dual.
    pub optimal_dual: f64,
    /// Expected consumption per period at the optimum, boundary share included.
    pub per_period_consumption: Vec<f64>,
    /// Share of the boundary-ratio mass accepted (1 when nothing is at the boundary).
    pub boundary_fraction: f64,
}

/// One `(period, atom)` pair of the fluid LP.
#[derive(Debug, Clone, Copy)]
struct Mass {
    period: usize,
    atom: usize,
    ratio: f64,
    consumption: f64,
    reward: f64,
}

/// Atoms that the best response accepts at some price, with their expected
/// reward and consumption at full action.
fn profitable_masses(dists: &[FiniteSupportDist], action_cap: f64) -> Vec<Mass> {
    let mut out = Vec::new();
    for (t, d) in dists.iter().enumerate() {
        for (k, a) in d.atoms.iter().enumerate() {
            let r = &a.request;
            if r.f_coeff > 0.0 && a.prob > 0.0 {
                out.push(Mass {
                    period: t,
                    atom: k,
                    ratio: r.ratio(),
                    consumption: a.prob * r.b_coeff * action_cap,
                    reward: a.prob * r.f_coeff * action_cap,
                });
            }
        }
    }
    out
}

fn sort_desc(masses: &mut [Mass]) {
    masses.sort_by(|a, b| {
        b.ratio
            .total_cmp(&a.ratio)
            .then(a.period.cmp(&b.period))
            .then(a.atom.cmp(&b.atom))
    });
}

/// `D(μ | {P_t}) = μ B + Σ_t E[max_x {f_t(x) - μ b_t(x)}]`.
pub fn distributional_dual(dists: &[FiniteSupportDist], budget: f64, mu: f64, action_cap: f64) -> f64 {
    mu * budget + dists.iter().map(|d| d.expected_profit(mu, action_cap)).sum::<f64>()
}

/// Per-period dual `D(μ | P_t, β_t) = μ β_t + E[max_x {f_t(x) - μ b_t(x)}]`.
pub fn period_dual(dist: &FiniteSupportDist, beta: f64, mu: f64, action_cap: f64) -> f64 {
    mu * beta + dist.expected_profit(mu, action_cap)
}

/// Breakpoints of the distributional dual: distinct finite positive atom ratios.
pub fn fluid_breakpoints(dists: &[FiniteSupportDist]) -> Vec<f64> {
    let mut r: Vec<f64> = dists
        .iter()
        .flat_map(|d| d.atoms.iter())
        .filter(|a| a.request.has_breakpoint() && a.prob > 0.0)
        .map(|a| a.request.ratio())
        .collect();
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

pub fn fluid_value(dists: &[FiniteSupportDist], budget: f64, action_cap: f64) -> Result<FluidSolution> {
    if budget < 0.0 || !budget.is_finite() {
        return Err(Error::InvalidParams(format!(
            "budget must be finite and >= 0, got {budget}"
        )));
    }
    let mut masses = profitable_masses(dists, action_cap);
    sort_desc(&mut masses);

    // Walk ratio groups from the top. The right slope of the dual just below
    // a group's ratio is B minus everything at or above it; the first group
    // that pushes the cumulative consumption past B is the boundary.
    let mut above = 0.0;
    let mut optimal_dual = 0.0;
    let mut boundary: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < masses.len() {
        let ratio = masses[i].ratio;
        let mut j = i;
        let mut group = 0.0;
        while j < masses.len() && masses[j].ratio == ratio {
            group += masses[j].consumption;
            j += 1;
        }
        if above + group > budget {
            optimal_dual = if ratio.is_finite() { ratio } else { 0.0 };
            boundary = Some((i, j));
            break;
        }
        above += group;
        i = j;
    }

    let mut per_period = vec![0.0; dists.len()];
    let mut value = 0.0;
    let accepted_end = boundary.map_or(masses.len(), |(start, _)| start);
    for m in &masses[..accepted_end] {
        per_period[m.period] += m.consumption;
        value += m.reward;
    }
    let mut boundary_fraction = 1.0;
    if let Some((start, end)) = boundary {
        let group_total: f64 = masses[start..end].iter().map(|m| m.consumption).sum();
        let mut left = (budget - above).max(0.0);
        boundary_fraction = if group_total > 0.0 { left / group_total } else { 1.0 };
        // fill the tie in (period, atom) order
        for m in &masses[start..end] {
            if left <= 0.0 {
                break;
            }
            let share = if m.consumption <= left {
                1.0
            } else {
                left / m.consumption
            };
            per_period[m.period] += share * m.consumption;
            value += share * m.reward;
            left -= share * m.consumption;
        }
    }

    Ok(FluidSolution {
        value,
        optimal_dual,
        per_period_consumption: per_period,
        boundary_fraction,
    })
}

/// FLUID as a direct fractional knapsack over all `(period, atom)` pairs.
pub fn fluid_greedy(dists: &[FiniteSupportDist], budget: f64, action_cap: f64) -> f64 {
    let mut masses = profitable_masses(dists, action_cap);
    sort_desc(&mut masses);
    let mut left = budget;
    let mut value = 0.0;
    for m in masses {
        if m.consumption <= left {
            left -= m.consumption;
            value += m.reward;
        } else {
            value += m.reward * (left / m.consumption);
            break;
        }
    }
    value
}

/// Hindsight optimum: the fractional knapsack over the realized requests.
pub fn hindsight_opt(requests: &[Request], budget: f64, action_cap: f64) -> f64 {
    let mut order: Vec<(f64, usize)> = requests
        .iter()
        .enumerate()
        .filter(|(_, r)| r.f_coeff > 0.0)
        .map(|(i, r)| (r.ratio(), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = budget;
    let mut value = 0.0;
    for (_, i) in order {
        let r = &requests[i];
        let cost = r.consumption_at(action_cap);
        if cost <= left {
            left -= cost;
            value += r.reward_at(action_cap);
        } else {
            value += r.reward_at(action_cap) * (left / cost);
            break;
        }
    }
    value
}

/// Benchmark sequence `β_t = E_{P̃_t}[b*(μ̃)]`.
pub fn benchmark_sequence(sample_dists: &[DistSpec], mu_tilde: f64, action_cap: f64) -> Vec<f64> {
    sample_dists
        .iter()
        .map(|d| d.expected_consumption(mu_tilde, action_cap))
        .collect()
}

/// Exact `W₁(P, Q)` under `d(γ, γ') = x̄ (|Δf| + |Δb|)`.
///
/// When each distribution has a deterministic consumption coefficient the
/// quantile coupling of the reward coefficients is optimal and the `b` part
/// is a constant shift. Otherwise both sides must be finite, and the
/// transport problem is solved exactly.
pub fn wasserstein(p: &DistSpec, q: &DistSpec, action_cap: f64) -> Result<f64> {
    if p == q {
        return Ok(0.0);
    }
    if let (Some(bp), Some(bq)) = (p.common_b(), q.common_b()) {
        return Ok(action_cap * (quantile_distance(p, q) + (bp - bq).abs()));
    }
    match (p.finite_atoms(), q.finite_atoms()) {
        (Some(a), Some(b)) => Ok(action_cap * transport_cost(&a, &b)),
        _ => Err(Error::UnsupportedFamilyPair(format!(
            "{} vs {}",
            p.family(),
            q.family()
        ))),
    }
}

/// `∫₀¹ |F_P⁻¹(u) - F_Q⁻¹(u)| du` over reward coefficients.
fn quantile_distance(p: &DistSpec, q: &DistSpec) -> f64 {
    let mut cuts = vec![0.0, 1.0];
    cuts.extend(p.quantile_cuts());
    cuts.extend(q.quantile_cuts());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        if u1 <= u0 {
            continue;
        }
        let mid = 0.5 * (u0 + u1);
        // both quantile functions are affine on the open segment
        let (ap, sp) = p.quantile_affine(mid);
        let (aq, sq) = q.quantile_affine(mid);
        let (a, s) = (ap - aq, sp - sq);
        total += abs_affine_integral(a, s, u0, u1);
    }
    total
}

/// `∫_{u0}^{u1} |a + s u| du`.
fn abs_affine_integral(a: f64, s: f64, u0: f64, u1: f64) -> f64 {
    let v0 = a + s * u0;
    let v1 = a + s * u1;
    if v0 * v1 >= 0.0 {
        0.5 * (v0.abs() + v1.abs()) * (u1 - u0)
    } else {
        let root = -a / s;
        0.5 * v0.abs() * (root - u0) + 0.5 * v1.abs() * (u1 - root)
    }
}

/// Exact optimal transport between two finite distributions by successive
/// shortest augmenting paths on the bipartite transport network.
fn transport_cost(p: &[Atom], q: &[Atom]) -> f64 {
    const EPS: f64 = 1e-15;
    let (n, m) = (p.len(), q.len());
    let cost = |i: usize, j: usize| {
        (p[i].request.f_coeff - q[j].request.f_coeff).abs() + (p[i].request.b_coeff - q[j].request.b_coeff).abs()
    };
    let mut supply: Vec<f64> = p.iter().map(|a| a.prob).collect();
    let mut demand: Vec<f64> = q.iter().map(|a| a.prob).collect();
    // flow[i][j] on the unbounded i -> j arcs; the residual reverse arc has capacity flow[i][j]
    let mut flow = vec![vec![0.0f64; m]; n];
    let mut total = 0.0;
    let max_rounds = 4 * (n + m) * (n + m) + 16;

    for _ in 0..max_rounds {
        // Bellman-Ford over sources (nodes 0..n) and sinks (n..n+m), seeded at
        // every source with remaining supply.
        let inf = f64::INFINITY;
        let mut dist = vec![inf; n + m];
        let mut pred = vec![usize::MAX; n + m];
        for i in 0..n {
            if supply[i] > EPS {
                dist[i] = 0.0;
            }
        }
        for _ in 0..(n + m) {
            let mut changed = false;
            for i in 0..n {
                if dist[i] == inf {
                    continue;
                }
                for j in 0..m {
                    let nd = dist[i] + cost(i, j);
                    if nd < dist[n + j] - 1e-15 {
                        dist[n + j] = nd;
                        pred[n + j] = i;
                        changed = true;
                    }
                }
            }
            for j in 0..m {
                if dist[n + j] == inf {
                    continue;
                }
                for i in 0..n {
                    if flow[i][j] > EPS {
                        let nd = dist[n + j] - cost(i, j);
                        if nd < dist[i] - 1e-15 {
                            dist[i] = nd;
                            pred[i] = n + j;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let target = (0..m)
            .filter(|&j| demand[j] > EPS && dist[n + j] < inf)
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]));
        let Some(sink) = target else { break };

        // trace the path back to a source and find the bottleneck
        let mut path = vec![n + sink];
        let mut node = n + sink;
        while pred[node] != usize::MAX && path.len() <= n + m {
            node = pred[node];
            path.push(node);
        }
        if pred[node] != usize::MAX {
            break;
        }
        path.reverse();
        let source = path[0];
        let mut bottleneck = supply[source].min(demand[sink]);
        for w in path.windows(2) {
            if w[0] >= n {
                // reverse arc sink w[0] -> source w[1]
                bottleneck = bottleneck.min(flow[w[1]][w[0] - n]);
            }
        }
        if bottleneck <= EPS {
            break;
        }
        for w in path.windows(2) {
            if w[0] < n {
                flow[w[0]][w[1] - n] += bottleneck;
                total += bottleneck * cost(w[0], w[1] - n);
            } else {
                flow[w[1]][w[0] - n] -= bottleneck;
                total -= bottleneck * cost(w[1], w[0] - n);
            }
        }
        supply[source] -= bottleneck;
        demand[sink] -= bottleneck;
    }
    total
}

/// Per-trial inputs to a regret report.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialOutcome {
    pub reward: f64,
    /// `κ (Σλ - B)^+` of the plan used in the trial.
    pub overspend: f64,
    /// `Σ_t μ_t (β_t - λ_t)` of the trial.
    pub weighted_target_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub fluid_value: f64,
    pub mean_reward: f64,
    /// Sample standard deviation over `√trials`; NaN for a single trial.
    pub std_error: f64,
    pub regret: f64,
    pub trials: usize,
    /// Largest `κ (Σλ - B)^+` over trials.
    pub r2: f64,
    /// Trial mean of `Σ_t μ_t (β_t - λ_t)`.
    pub r3_estimate: f64,
    pub total_wasserstein: f64,
}

/// Sum in a fixed pairwise order so parallel schedules cannot change the result.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Mean and standard error (sample sd / √n; NaN when n < 2).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn regret_report(outcomes: &[TrialOutcome], fluid_value: f64, total_wasserstein: f64) -> RegretReport {
    let rewards: Vec<f64> = outcomes.iter().map(|o| o.reward).collect();
    let gaps: Vec<f64> = outcomes.iter().map(|o| o.weighted_target_gap).collect();
    let (mean_reward, std_error) = mean_and_stderr(&rewards);
    RegretReport {
        fluid_value,
        mean_reward,
        std_error,
        regret: fluid_value - mean_reward,
        trials: outcomes.len(),
        r2: outcomes.iter().map(|o| o.overspend).fold(0.0, f64::max),
        r3_estimate: mean_and_stderr(&gaps).0,
        total_wasserstein,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(f: f64, b: f64) -> FiniteSupportDist {
        FiniteSupportDist::point(Request::new(f, b))
    }

    fn atom(f: f64, b: f64, prob: f64) -> Atom {
        Atom {
            request: Request::new(f, b),
            prob,
        }
    }

    #[test]
    fn fluid_point_mass_examples() {
        let d = vec![point(1.0, 1.0); 4];
        let sol = fluid_value(&d, 2.0, 1.0).unwrap();
        assert_eq!(sol.value, 2.0);
        assert_eq!(sol.optimal_dual, 1.0);
        assert_eq!(sol.per_period_consumption, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(sol.boundary_fraction, 0.5);

        let sol = fluid_value(&[point(3.0, 1.0), point(1.0, 1.0)], 1.0, 1.0).unwrap();
        assert_eq!(sol.value, 3.0);
        assert_eq!(sol.per_period_consumption, vec![1.0, 0.0]);
    }

    #[test]
    fn fluid_slack_budget_has_zero_dual() {
        let d = vec![point(1.0, 1.0), point(0.0, 1.0)];
        let sol = fluid_value(&d, 5.0, 1.0).unwrap();
        assert_eq!(sol.optimal_dual, 0.0);
        assert_eq!(sol.value, 1.0);
    }

    #[test]
    fn finite_dist_validation() {
        assert_eq!(
            FiniteSupportDist::new(vec![], 3).unwrap_err(),
            Error::EmptySupport { period: 3 }
        );
        assert!(matches!(
            FiniteSupportDist::new(vec![atom(1.0, 1.0, -0.5), atom(1.0, 1.0, 1.5)], 1),
            Err(Error::NegativeProbability { period: 1, .. })
        ));
        assert!(FiniteSupportDist::new(vec![atom(1.0, 1.0, 0.5)], 1).is_err());
    }

    #[test]
    fn hindsight_examples() {
        let reqs = [Request::new(3.0, 1.0), Request::new(2.0, 1.0), Request::new(1.0, 1.0)];
        assert_eq!(hindsight_opt(&reqs, 2.0, 1.0), 5.0);
        assert_eq!(hindsight_opt(&reqs, 10.0, 1.0), 6.0);
        assert_eq!(hindsight_opt(&reqs, 1.5, 1.0), 4.0);
    }

    /// Best value over every vertex of the knapsack polytope: a set taken in
    /// full plus at most one request filling the remaining budget.
    fn exhaustive_opt(reqs: &[Request], budget: f64, xbar: f64) -> f64 {
        let n = reqs.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let (mut cost, mut val) = (0.0, 0.0);
            for (i, r) in reqs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    cost += r.b_coeff * xbar;
                    val += r.f_coeff * xbar;
                }
            }
            if cost > budget + 1e-12 {
                continue;
            }
            best = best.max(val);
            for (i, r) in reqs.iter().enumerate() {
                if mask & (1 << i) == 0 && r.b_coeff > 0.0 {
                    let frac = ((budget - cost) / (r.b_coeff * xbar)).clamp(0.0, 1.0);
                    best = best.max(val + frac * r.f_coeff * xbar);
                }
            }
        }
        best
    }

    #[test]
    fn wasserstein_examples() {
        let u = DistSpec::UniformF {
            lo: 1.0,
            hi: 2.0,
            b: 1.0,
        };
        assert_eq!(wasserstein(&u, &u, 1.0).unwrap(), 0.0);
        let eps = 0.05;
        let hi = DistSpec::UniformF {
            lo: 1.0 + eps,
            hi: 1.0 + 2.0 * eps,
            b: 1.0,
        };
        let lo = DistSpec::UniformF {
            lo: 1.0 - eps,
            hi: 1.0,
            b: 1.0,
        };
        assert!((wasserstein(&hi, &lo, 1.0).unwrap() - 2.0 * eps).abs() < 1e-12);
        let a = DistSpec::PointMass(Request::new(0.3, 1.0));
        let b = DistSpec::PointMass(Request::new(1.1, 1.0));
        assert!((wasserstein(&a, &b, 1.0).unwrap() - 0.8).abs() < 1e-15);
        // point mass against uniform: mean absolute deviation
        let c = DistSpec::PointMass(Request::new(1.5, 1.0));
        assert!((wasserstein(&c, &u, 1.0).unwrap() - 0.25).abs() < 1e-15);
        // mixed consumption finite vs uniform has no exact routine
        let mixed = DistSpec::Finite(vec![atom(0.5, 1.0, 0.5), atom(0.5, 0.5, 0.5)]);
        assert!(matches!(
            wasserstein(&mixed, &u, 1.0),
            Err(Error::UnsupportedFamilyPair(_))
        ));
    }

    #[test]
    fn transport_handles_mixed_consumption() {
        // moving mass between (1,1) and (1,0.5): |Δb| = 0.5 on half the mass
        let p = DistSpec::Finite(vec![atom(1.0, 1.0, 0.5), atom(2.0, 1.0, 0.5)]);
        let q = DistSpec::Finite(vec![atom(1.0, 0.5, 0.5), atom(2.0, 1.0, 0.5)]);
        assert!((wasserstein(&p, &q, 2.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn regret_report_basics() {
        let out = vec![
            TrialOutcome {
                reward: 2.0,
                overspend: 0.5,
                weighted_target_gap: 1.0,
            },
            TrialOutcome {
                reward: 4.0,
                overspend: 0.0,
                weighted_target_gap: 3.0,
            },
        ];
        let rep = regret_report(&out, 10.0, 0.0);
        assert_eq!(rep.mean_reward, 3.0);
        assert_eq!(rep.regret, 7.0);
        assert_eq!(rep.r2, 0.5);
        assert_eq!(rep.r3_estimate, 2.0);
        assert!((rep.std_error - 1.0).abs() < 1e-15);
        let single = regret_report(&out[..1], 2.0, 0.0);
        assert!(single.std_error.is_nan());
        assert_eq!(single.regret, 0.0);
    }

    fn finite_dists() -> impl Strategy<Value = Vec<FiniteSupportDist>> {
        proptest::collection::vec(
            proptest::collection::vec((0.0..1.0f64, 0.05..1.0f64, 0.05..1.0f64), 1..5),
            1..8,
        )
        .prop_map(|periods| {
            periods
                .into_iter()
                .enumerate()
                .map(|(t, raw)| {
                    let total: f64 = raw.iter().map(|x| x.2).sum();
                    let atoms = raw
                        .iter()
                        .map(|&(u, b, w)| atom((u * 8.0).round() / 4.0 * b, b, w / total))
                        .collect();
                    FiniteSupportDist::new(atoms, t + 1).unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn hindsight_matches_exhaustive(raw in proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..8), bfrac in 0.0..1.2f64, xbar in 0.5..2.0f64) {
            let reqs: Vec<Request> = raw.iter().map(|&(u, b)| Request::new(u * 2.0 * b, b)).collect();
            let budget = bfrac * reqs.iter().map(|r| r.b_coeff * xbar).sum::<f64>();
            let fast = hindsight_opt(&reqs, budget, xbar);
            let slow = exhaustive_opt(&reqs, budget, xbar);
            prop_assert!((fast - slow).abs() <= 1e-9 * (1.0 + slow), "{} vs {}", fast, slow);
        }

        #[test]
        fn fluid_dual_recovery_matches_greedy(dists in finite_dists(), bfrac in 0.0..1.2f64) {
            let total: f64 = dists.iter().map(|d| d.expected_consumption(0.0, 1.0)).sum();
            let budget = bfrac * total;
            let sol = fluid_value(&dists, budget, 1.0).unwrap();
            let greedy = fluid_greedy(&dists, budget, 1.0);
            prop_assert!((sol.value - greedy).abs() <= 1e-9);
            prop_assert!(sol.per_period_consumption.iter().sum::<f64>() <= budget + 1e-9);
            // weak duality at every breakpoint and at zero; strong duality at the optimum
            for mu in std::iter::once(0.0).chain(fluid_breakpoints(&dists)) {
                prop_assert!(sol.value <= distributional_dual(&dists, budget, mu, 1.0) + 1e-9);
            }
            prop_assert!((distributional_dual(&dists, budget, sol.optimal_dual, 1.0) - sol.value).abs() <= 1e-9);
        }

        #[test]
        fn uniform_family_wasserstein_is_a_metric(
            a in (0.0..1.0f64, 0.0..1.0f64, 0.1..1.0f64),
            b in (0.0..1.0f64, 0.0..1.0f64, 0.1..1.0f64),
            c in (0.0..1.0f64, 0.0..1.0f64, 0.1..1.0f64),
        ) {
            let mk = |(x, w, bb): (f64, f64, f64)| DistSpec::UniformF { lo: x, hi: x + w, b: bb };
            let (p, q, r) = (mk(a), mk(b), mk(c));
            let pq = wasserstein(&p, &q, 1.0).unwrap();
            prop_assert!((pq - wasserstein(&q, &p, 1.0).unwrap()).abs() <= 1e-12);
            prop_assert!(pq <= wasserstein(&p, &r, 1.0).unwrap() + wasserstein(&r, &q, 1.0).unwrap() + 1e-12);
        }

        #[test]
        fn finite_family_wasserstein_is_a_metric(
            raw in proptest::collection::vec(proptest::collection::vec((0.0..2.0f64, 0.0..1.0f64, 0.1..1.0f64), 1..4), 3..=3),
        ) {
            let d: Vec<DistSpec> = raw.iter().map(|atoms| {
                let total: f64 = atoms.iter().map(|x| x.2).sum();
                DistSpec::Finite(atoms.iter().map(|&(f, b, w)| atom(f, b, w / total)).collect())
            }).collect();
            let w = |i: usize, j: usize| wasserstein(&d[i], &d[j], 1.0).unwrap();
            prop_assert!((w(0, 1) - w(1, 0)).abs() <= 1e-12);
            prop_assert!(w(0, 1) <= w(0, 2) + w(2, 1) + 1e-12);
        }

        #[test]
        fn transport_agrees_with_quantile_coupling(
            fs in proptest::collection::vec((0.0..2.0f64, 0.1..1.0f64), 1..5),
            gs in proptest::collection::vec((0.0..2.0f64, 0.1..1.0f64), 1..5),
            b in 0.1..1.0f64,
        ) {
            let mk = |v: &[(f64, f64)]| {
                let total: f64 = v.iter().map(|x| x.1).sum();
                v.iter().map(|&(f, w)| atom(f, b, w / total)).collect::<Vec<_>>()
            };
            let (p, q) = (mk(&fs), mk(&gs));
            let by_quantile = quantile_distance(&DistSpec::Finite(p.clone()), &DistSpec::Finite(q.clone()));
            let by_transport = transport_cost(&p, &q);
            prop_assert!((by_quantile - by_transport).abs() <= 1e-12, "{} vs {}", by_quantile, by_transport);
        }
    }
}
