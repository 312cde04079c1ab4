use pacekit::bench::{fluid_value, hindsight_opt, FiniteSupportDist};
use pacekit::config::{format_scenario, parse_scenario};
use pacekit::csvio::{read_targets, read_trace, write_targets, write_trace};
use pacekit::oracle::brute_force_dual;
use pacekit::pacing::{run_dual_ftrl, run_static_dual, EpisodeOptions, RegularizerKind};
use pacekit::sim::{fragility_scenario, run_monte_carlo, Algo};
use pacekit::traceplan::learn_plan;
use pacekit::{validate_instance, InstanceParams, Request};

#[test]
fn trace_file_to_plan_to_episode() {
    let reqs: Vec<Request> = (0..20)
        .map(|i| Request::new(0.5 + 0.5 * (i as f64).sin(), 0.5 + 0.02 * i as f64))
        .collect();
    let mut buf = Vec::new();
    write_trace(&mut buf, &reqs, Some(3)).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back, reqs);

    let params = InstanceParams::new(20, 5.0, 1.0, 1.0, 2.0, 2.0).unwrap();
    let trace = validate_instance(&params, &back).unwrap();
    let plan = learn_plan(&trace, params.budget).unwrap();
    assert_eq!(plan.mu_tilde, brute_force_dual(&trace, params.budget).mu);

    let mut tbuf = Vec::new();
    write_targets(&mut tbuf, &plan.targets, Some(3)).unwrap();
    assert_eq!(read_targets(tbuf.as_slice()).unwrap(), plan.targets);

    // replaying the trace itself: the static price accepts exactly the plan's requests until the budget runs out
    let stat = run_static_dual(&reqs, plan.mu_tilde, &plan.targets, &params, EpisodeOptions::default());
    let ftrl = run_dual_ftrl(
        &reqs,
        &plan.targets,
        &params,
        RegularizerKind::Quadratic,
        None,
        EpisodeOptions::default(),
    );
    let opt = hindsight_opt(&reqs, params.budget, 1.0);
    for res in [&stat, &ftrl] {
        assert!(res.total_consumption <= params.budget);
        assert!(res.total_reward <= opt + 1e-12);
    }
}

#[test]
fn fluid_dominates_hindsight_for_point_masses() {
    let reqs: Vec<Request> = (1..=8).map(|i| Request::new(0.2 * i as f64, 1.0)).collect();
    let dists: Vec<FiniteSupportDist> = reqs.iter().map(|r| FiniteSupportDist::point(*r)).collect();
    for budget in [0.0, 1.5, 4.0, 20.0] {
        let fluid = fluid_value(&dists, budget, 1.0).unwrap();
        assert!((fluid.value - hindsight_opt(&reqs, budget, 1.0)).abs() < 1e-12);
    }
}

#[test]
fn scenario_file_drives_an_experiment() {
    let mut cfg = fragility_scenario(0.05, 100).unwrap();
    cfg.trials = 4;
    cfg.seed = 11;
    let parsed = parse_scenario(&format_scenario(&cfg)).unwrap();
    let a = run_monte_carlo(&cfg).unwrap();
    let b = run_monte_carlo(&parsed).unwrap();
    assert_eq!(a, b);
    let names: Vec<&str> = a.algos.iter().map(|r| r.algo.as_str()).collect();
    assert_eq!(names, ["ftrl", "static", "fixed"]);
    let stat = a.algos.iter().find(|r| r.algo == Algo::Static).unwrap();
    assert!((stat.report.regret - a.fluid.value).abs() < 1e-12);
    assert_eq!(stat.first_trajectory.len(), 100);
}
