use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pacekit::bench::fluid_value;
use pacekit::config::{load_scenario, parse_dists_only};
use pacekit::csvio::{read_targets, read_trace, write_report, write_series, write_targets, write_trajectory};
use pacekit::pacing::{fixed_targets, run_dual_ftrl, run_static_dual, EpisodeOptions};
use pacekit::rng::{substream, Domain};
use pacekit::sim::{perturb_general_position, run_monte_carlo, Algo};
use pacekit::traceplan::learn_plan;
use pacekit::verify::{run_all, SuiteSizes};
use pacekit::{validate_instance, InstanceParams, Request};

use crate::{BoundArgs, Command};

pub enum CliError {
    /// One or more properties failed.
    Property(String),
    /// Bad arguments, unreadable or invalid input files.
    Input(String),
    /// Failure while computing or writing results.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Property(_) => 1,
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Property(m) | CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{context}: {e}"))
}

fn runtime<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

pub fn run(command: Command, verbose: bool) -> CliResult<()> {
    match command {
        Command::Plan {
            trace,
            bounds,
            perturb,
            seed,
            out,
        } => plan(&trace, &bounds, perturb, seed, &out),
        Command::Simulate {
            stream,
            bounds,
            algo,
            targets,
            mu,
            regularizer,
            eta,
            out,
        } => {
            let requests = load_requests(&stream)?;
            let params = instance_params(&bounds, &requests, 0.0)?;
            validate_instance(&params, &requests).map_err(input(stream.display()))?;
            if let Some(eta) = eta {
                if !(eta > 0.0 && eta.is_finite()) {
                    return Err(CliError::Input(format!("--eta must be positive, got {eta}")));
                }
            }
            let options = EpisodeOptions::default();
            let result = match algo {
                Algo::Ftrl => {
                    let path = targets.ok_or_else(|| CliError::Input("--algo ftrl needs --targets".into()))?;
                    let lambda = load_targets(&path, requests.len())?;
                    run_dual_ftrl(&requests, &lambda, &params, regularizer, eta, options)
                }
                Algo::Static => {
                    let mu = mu.ok_or_else(|| CliError::Input("--algo static needs --mu".into()))?;
                    if !(mu >= 0.0 && mu.is_finite()) {
                        return Err(CliError::Input(format!("--mu must be finite and >= 0, got {mu}")));
                    }
                    let lambda = match targets {
                        Some(path) => load_targets(&path, requests.len())?,
                        None => vec![0.0; requests.len()],
                    };
                    run_static_dual(&requests, mu, &lambda, &params, options)
                }
                Algo::Fixed => {
                    let lambda = fixed_targets(params.budget, requests.len());
                    run_dual_ftrl(&requests, &lambda, &params, regularizer, eta, options)
                }
            };
            let records = result.records.expect("full episode keeps records");
            write_file(&out, |w| write_trajectory(w, &records, None))?;
            println!("total_reward = {}", result.total_reward);
            println!("total_consumption = {}", result.total_consumption);
            println!("stop_time = {}", result.stop_time);
            if verbose {
                eprintln!("wrote {} rows to {}", records.len(), out.display());
            }
            Ok(())
        }
        Command::Bench {
            dists,
            budget,
            section,
            grid,
            out,
        } => {
            if grid == 0 {
                return Err(CliError::Input("--grid must be at least 1".into()));
            }
            if !matches!(section.as_str(), "true_dists" | "sample_dists") {
                return Err(CliError::Input(format!(
                    "--section must be true_dists or sample_dists, got {section}"
                )));
            }
            let text = std::fs::read_to_string(&dists).map_err(input(dists.display()))?;
            let (params, specs) = parse_dists_only(&text, &section).map_err(input(dists.display()))?;
            let budget = budget.unwrap_or(params.budget);
            let mut distance = 0.0;
            let finite: Vec<_> = specs
                .iter()
                .map(|d| {
                    let (fd, err) = d.to_finite(grid, params.action_cap);
                    distance += err;
                    fd
                })
                .collect();
            let sol = fluid_value(&finite, budget, params.action_cap).map_err(input("budget"))?;
            match &out {
                Some(path) => {
                    write_file(path, |w| write_series(w, "beta", &sol.per_period_consumption, None))?;
                    println!("fluid = {}", sol.value);
                    println!("optimal_dual = {}", sol.optimal_dual);
                    println!("discretization_distance = {distance}");
                }
                None => {
                    println!("# fluid = {}", sol.value);
                    println!("# optimal_dual = {}", sol.optimal_dual);
                    println!("# discretization_distance = {distance}");
                    let stdout = std::io::stdout();
                    write_series(stdout.lock(), "beta", &sol.per_period_consumption, None)
                        .map_err(runtime("stdout"))?;
                }
            }
            Ok(())
        }
        Command::Experiment {
            config,
            out,
            seed,
            trials,
        } => experiment(&config, &out, seed, trials, verbose),
        Command::Verify { seed, quick } => verify(seed, quick),
    }
}

fn load_requests(path: &Path) -> CliResult<Vec<Request>> {
    let file = File::open(path).map_err(input(path.display()))?;
    read_trace(file).map_err(input(path.display()))
}

fn load_targets(path: &Path, horizon: usize) -> CliResult<Vec<f64>> {
    let file = File::open(path).map_err(input(path.display()))?;
    let targets = read_targets(file).map_err(input(path.display()))?;
    if targets.len() != horizon {
        return Err(CliError::Input(format!(
            "{}: {} targets for a stream of {horizon} requests",
            path.display(),
            targets.len()
        )));
    }
    Ok(targets)
}

/// Fill unset bounds with the tightest values the requests allow once each
/// reward coefficient is raised by `f_slack`.
fn instance_params(b: &BoundArgs, requests: &[Request], f_slack: f64) -> CliResult<InstanceParams> {
    let positive_or_one = |x: f64| if x > 0.0 { x } else { 1.0 };
    let xbar = b.action_cap;
    let bbar = b
        .consumption_bound
        .unwrap_or_else(|| positive_or_one(requests.iter().map(|r| r.b_coeff * xbar).fold(0.0, f64::max)));
    let kappa = b.rate_bound.unwrap_or_else(|| {
        positive_or_one(
            requests
                .iter()
                .filter(|r| r.b_coeff > 0.0)
                .map(|r| (r.f_coeff + f_slack) / r.b_coeff)
                .fold(0.0, f64::max),
        )
    });
    let fbar = b.reward_bound.unwrap_or_else(|| {
        positive_or_one(
            requests
                .iter()
                .map(|r| (r.f_coeff + f_slack) * xbar)
                .fold(0.0, f64::max),
        )
        .min(kappa * bbar)
    });
    InstanceParams::new(requests.len().max(1), b.budget, xbar, bbar, fbar, kappa).map_err(input("instance bounds"))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> pacekit::Result<()>) -> CliResult<()> {
    let file = File::create(path).map_err(runtime(path.display()))?;
    let mut w = BufWriter::new(file);
    let result = body(&mut w)
        .map_err(runtime(path.display()))
        .and_then(|_| w.flush().map_err(runtime(path.display())));
    if result.is_err() {
        let _ = std::fs::remove_file(path);
    }
    result
}

fn plan(trace_path: &Path, bounds: &BoundArgs, perturb: Option<f64>, seed: u64, out: &Path) -> CliResult<()> {
    let requests = load_requests(trace_path)?;
    let params = instance_params(bounds, &requests, perturb.unwrap_or(0.0))?;
    let mut trace = validate_instance(&params, &requests).map_err(input(trace_path.display()))?;
    if let Some(a) = perturb {
        let mut rng = substream(seed, Domain::Perturbation, 0);
        trace = perturb_general_position(&trace, &params, a, &mut rng).map_err(input("--perturb"))?;
    }
    let plan = learn_plan(&trace, params.budget).map_err(|e| {
        CliError::Input(format!(
            "{}: {e} (rerun with --perturb to break ties)",
            trace_path.display()
        ))
    })?;
    write_file(out, |w| write_targets(w, &plan.targets, perturb.map(|_| seed)))?;
    println!("mu_tilde = {}", plan.mu_tilde);
    println!("sum_lambda = {}", plan.sum_targets);
    Ok(())
}

fn experiment(config: &Path, out: &Path, seed: Option<u64>, trials: Option<usize>, verbose: bool) -> CliResult<()> {
    let mut cfg = load_scenario(config).map_err(input(config.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(trials) = trials {
        if trials == 0 {
            return Err(CliError::Input("--trials must be at least 1".into()));
        }
        cfg.trials = trials;
    }
    let start = std::time::Instant::now();
    let report = run_monte_carlo(&cfg).map_err(runtime("experiment"))?;
    if verbose {
        eprintln!("{} trials in {:.2}s", cfg.trials, start.elapsed().as_secs_f64());
    }

    let existed = out.is_dir();
    std::fs::create_dir_all(out).map_err(runtime(out.display()))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let path = out.join("report.csv");
        written.push(path.clone());
        write_file(&path, |w| write_report(w, &report, cfg.seed))?;
        for a in &report.algos {
            let path = out.join(format!("trajectory_{}.csv", a.algo.as_str()));
            written.push(path.clone());
            write_file(&path, |w| write_trajectory(w, &a.first_trajectory, Some(cfg.seed)))?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        for path in &written {
            let _ = std::fs::remove_file(path);
        }
        if !existed {
            let _ = std::fs::remove_dir(out);
        }
        return Err(e);
    }

    println!("fluid = {}", report.fluid.value);
    for a in &report.algos {
        let r = &a.report;
        println!(
            "{:<6} mean_reward = {:.4}  stderr = {:.4}  regret = {:.4}",
            a.algo.as_str(),
            r.mean_reward,
            r.std_error,
            r.regret
        );
    }
    Ok(())
}

fn verify(seed: u64, quick: bool) -> CliResult<()> {
    let sizes = if quick { SuiteSizes::quick() } else { SuiteSizes::full() };
    let results = run_all(seed, sizes);
    println!(
        "{:<20} {:>6} {:>9} {:>9}  notes",
        "property", "result", "checks", "failures"
    );
    for r in &results {
        let verdict = if r.passed() { "pass" } else { "FAIL" };
        let note = r.first_failure.as_deref().unwrap_or(&r.detail);
        println!(
            "{:<20} {:>6} {:>9} {:>9}  {}",
            r.name, verdict, r.checks, r.failures, note
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(format!(
            "properties failed: {} (replay with --seed {seed})",
            failed.join(", ")
        )))
    }
}
