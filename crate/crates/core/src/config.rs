//! Scenario files.
//!
//! A scenario is a line-oriented key/value file with four sections:
//!
//! ```text
//! # comments start with '#'
//! [instance]
//! horizon = 4
//! budget = 2
//! action_cap = 1
//! consumption_bound = 1
//! reward_bound = 2
//! rate_bound = 2
//!
//! [true_dists]
//! 1..4 = type=uniform_f lo=0.95 hi=1.0 b=1.0
//!
//! [sample_dists]
//! 1..3 = type=uniform_f lo=1.05 hi=1.1 b=1.0
//! 4 = type=point f=0.5 b=1.0
//!
//! [run]
//! seed = 7
//! trials = 20
//! perturbation = 0
//! algos = ftrl,static,fixed
//! regularizer = quadratic
//! eta = auto
//! fluid_grid = 11
//! ```
//!
//! Distribution keys are a 1-based period `t` or an inclusive range `a..b`;
//! together they must cover `1..=horizon` exactly once. Finite distributions
//! are written `type=finite atoms=f:b:p,f:b:p,...`. The `[run]` section and
//! each of its keys are optional.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{InstanceParams, Request};
use crate::pacing::RegularizerKind;
use crate::sim::{Algo, Atom, DistSpec, RunSettings, ScenarioConfig};

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

#[derive(Default)]
struct Section {
    /// Line of the section header.
    line: usize,
    entries: Vec<(usize, String, String)>,
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !matches!(name.as_str(), "instance" | "true_dists" | "sample_dists" | "run") {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            if sections.contains_key(&name) {
                return Err(err(line, format!("duplicate section [{name}]")));
            }
            sections.insert(
                name.clone(),
                Section {
                    line,
                    entries: Vec::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let Some(name) = &current else {
            return Err(err(line, "entry outside of any section"));
        };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
        sections.get_mut(name).expect("current section exists").entries.push((
            line,
            key.trim().to_string(),
            value.trim().to_string(),
        ));
    }
    Ok(sections)
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| err(line, format!("cannot parse `{key}` value `{value}`")))
}

fn parse_instance(section: &Section) -> Result<InstanceParams> {
    let mut values: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (line, key, value) in &section.entries {
        let known = [
            "horizon",
            "budget",
            "action_cap",
            "consumption_bound",
            "reward_bound",
            "rate_bound",
        ];
        let Some(k) = known.iter().find(|k| **k == key.as_str()) else {
            return Err(err(*line, format!("unknown instance key `{key}`")));
        };
        if values.insert(k, (*line, value)).is_some() {
            return Err(err(*line, format!("duplicate key `{key}`")));
        }
    }
    let get = |key: &str| {
        values
            .get(key)
            .copied()
            .ok_or_else(|| err(section.line, format!("[instance] is missing `{key}`")))
    };
    let num = |key: &str| -> Result<f64> {
        let (line, v) = get(key)?;
        parse_num(line, key, v)
    };
    let (hline, h) = get("horizon")?;
    let horizon: usize = parse_num(hline, "horizon", h)?;
    InstanceParams::new(
        horizon,
        num("budget")?,
        num("action_cap")?,
        num("consumption_bound")?,
        num("reward_bound")?,
        num("rate_bound")?,
    )
    .map_err(|e| err(section.line, e.to_string()))
}

fn parse_range(line: usize, key: &str, horizon: usize) -> Result<(usize, usize)> {
    let (a, b) = match key.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (key, key),
    };
    let a: usize = parse_num(line, "period", a)?;
    let b: usize = parse_num(line, "period", b)?;
    if a == 0 || a > b || b > horizon {
        return Err(err(line, format!("period range `{key}` is not within 1..{horizon}")));
    }
    Ok((a, b))
}

/// Parse `type=... k=v ...` into a distribution.
pub fn parse_dist(line: usize, spec: &str) -> Result<DistSpec> {
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for token in spec.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key=value`, found `{token}`")))?;
        if fields.insert(k, v).is_some() {
            return Err(err(line, format!("duplicate field `{k}`")));
        }
    }
    let take = |fields: &mut BTreeMap<&str, &str>, k: &str| -> Result<f64> {
        let v = fields
            .remove(k)
            .ok_or_else(|| err(line, format!("distribution is missing `{k}`")))?;
        parse_num(line, k, v)
    };
    let kind = fields
        .remove("type")
        .ok_or_else(|| err(line, "distribution is missing `type`"))?;
    let dist = match kind {
        "point" => {
            let f = take(&mut fields, "f")?;
            let b = take(&mut fields, "b")?;
            DistSpec::PointMass(Request::new(f, b))
        }
        "uniform_f" => {
            let lo = take(&mut fields, "lo")?;
            let hi = take(&mut fields, "hi")?;
            let b = take(&mut fields, "b")?;
            DistSpec::UniformF { lo, hi, b }
        }
        "finite" => {
            let list = fields
                .remove("atoms")
                .ok_or_else(|| err(line, "finite distribution is missing `atoms`"))?;
            let atoms = list
                .split(',')
                .map(|a| {
                    let parts: Vec<&str> = a.split(':').collect();
                    if parts.len() != 3 {
                        return Err(err(line, format!("atom `{a}` is not f:b:p")));
                    }
                    Ok(Atom {
                        request: Request::new(parse_num(line, "f", parts[0])?, parse_num(line, "b", parts[1])?),
                        prob: parse_num(line, "p", parts[2])?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            DistSpec::Finite(atoms)
        }
        other => return Err(err(line, format!("unknown distribution type `{other}`"))),
    };
    if let Some(extra) = fields.keys().next() {
        return Err(err(line, format!("unexpected field `{extra}` for type {kind}")));
    }
    Ok(dist)
}

fn parse_dists(section: &Section, name: &str, params: &InstanceParams) -> Result<Vec<DistSpec>> {
    let horizon = params.horizon;
    let mut slots: Vec<Option<DistSpec>> = vec![None; horizon];
    for (line, key, value) in &section.entries {
        let (a, b) = parse_range(*line, key, horizon)?;
        let dist = parse_dist(*line, value)?;
        dist.validate(params, a).map_err(|e| err(*line, e.to_string()))?;
        for t in a..=b {
            if slots[t - 1].is_some() {
                return Err(err(*line, format!("period {t} is assigned twice in [{name}]")));
            }
            slots[t - 1] = Some(dist.clone());
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            d.ok_or_else(|| {
                err(
                    section.line,
                    format!("period {} has no distribution in [{name}]", i + 1),
                )
            })
        })
        .collect()
}

fn parse_run(section: Option<&Section>) -> Result<(u64, usize, f64, RunSettings)> {
    let (mut seed, mut trials, mut perturbation) = (0u64, 20usize, 0.0f64);
    let mut run = RunSettings::default();
    let Some(section) = section else {
        return Ok((seed, trials, perturbation, run));
    };
    for (line, key, value) in &section.entries {
        let line = *line;
        match key.as_str() {
            "seed" => seed = parse_num(line, key, value)?,
            "trials" => trials = parse_num(line, key, value)?,
            "perturbation" => perturbation = parse_num(line, key, value)?,
            "algos" => {
                run.algos = value
                    .split(',')
                    .map(|a| a.trim().parse::<Algo>().map_err(|e| err(line, e)))
                    .collect::<Result<Vec<_>>>()?;
                if run.algos.is_empty() {
                    return Err(err(line, "algos must list at least one algorithm"));
                }
            }
            "regularizer" => run.regularizer = value.parse::<RegularizerKind>().map_err(|e| err(line, e))?,
            "eta" => {
                run.eta = if value == "auto" {
                    None
                } else {
                    Some(parse_num(line, key, value)?)
                }
            }
            "fluid_grid" => run.fluid_grid = parse_num(line, key, value)?,
            other => return Err(err(line, format!("unknown run key `{other}`"))),
        }
    }
    Ok((seed, trials, perturbation, run))
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let sections = split_sections(text)?;
    let instance = sections
        .get("instance")
        .ok_or_else(|| err(0, "missing [instance] section"))?;
    let params = parse_instance(instance)?;
    let true_dists = parse_dists(
        sections
            .get("true_dists")
            .ok_or_else(|| err(0, "missing [true_dists] section"))?,
        "true_dists",
        &params,
    )?;
    let sample_dists = parse_dists(
        sections
            .get("sample_dists")
            .ok_or_else(|| err(0, "missing [sample_dists] section"))?,
        "sample_dists",
        &params,
    )?;
    let (seed, trials, perturbation_scale, run) = parse_run(sections.get("run"))?;
    let config = ScenarioConfig {
        params,
        true_dists,
        sample_dists,
        seed,
        trials,
        perturbation_scale,
        run,
    };
    let run_line = sections.get("run").map_or(0, |s| s.line);
    config.validate().map_err(|e| err(run_line, e.to_string()))?;
    Ok(config)
}

pub fn load_scenario(path: &std::path::Path) -> Result<ScenarioConfig> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// Parse only `[instance]` and one distribution section, as used by `bench`.
pub fn parse_dists_only(text: &str, section_name: &str) -> Result<(InstanceParams, Vec<DistSpec>)> {
    let sections = split_sections(text)?;
    let params = parse_instance(
        sections
            .get("instance")
            .ok_or_else(|| err(0, "missing [instance] section"))?,
    )?;
    let section = sections
        .get(section_name)
        .ok_or_else(|| err(0, format!("missing [{section_name}] section")))?;
    let dists = parse_dists(section, section_name, &params)?;
    Ok((params, dists))
}

pub fn format_dist(d: &DistSpec) -> String {
    match d {
        DistSpec::PointMass(r) => format!("type=point f={} b={}", r.f_coeff, r.b_coeff),
        DistSpec::UniformF { lo, hi, b } => format!("type=uniform_f lo={lo} hi={hi} b={b}"),
        DistSpec::Finite(atoms) => {
            let list: Vec<String> = atoms
                .iter()
                .map(|a| format!("{}:{}:{}", a.request.f_coeff, a.request.b_coeff, a.prob))
                .collect();
            format!("type=finite atoms={}", list.join(","))
        }
    }
}

fn write_dists(out: &mut String, dists: &[DistSpec]) {
    let mut start = 0;
    while start < dists.len() {
        let mut end = start;
        while end + 1 < dists.len() && dists[end + 1] == dists[start] {
            end += 1;
        }
        let key = if start == end {
            format!("{}", start + 1)
        } else {
            format!("{}..{}", start + 1, end + 1)
        };
        out.push_str(&format!("{key} = {}\n", format_dist(&dists[start])));
        start = end + 1;
    }
}

/// Render a scenario in the file format; `parse_scenario` reads it back unchanged.
pub fn format_scenario(c: &ScenarioConfig) -> String {
    let p = &c.params;
    let mut out = String::new();
    out.push_str("[instance]\n");
    out.push_str(&format!("horizon = {}\n", p.horizon));
    out.push_str(&format!("budget = {}\n", p.budget));
    out.push_str(&format!("action_cap = {}\n", p.action_cap));
    out.push_str(&format!("consumption_bound = {}\n", p.consumption_bound));
    out.push_str(&format!("reward_bound = {}\n", p.reward_bound));
    out.push_str(&format!("rate_bound = {}\n", p.rate_bound));
    out.push_str("\n[true_dists]\n");
    write_dists(&mut out, &c.true_dists);
    out.push_str("\n[sample_dists]\n");
    write_dists(&mut out, &c.sample_dists);
    out.push_str("\n[run]\n");
    out.push_str(&format!("seed = {}\n", c.seed));
    out.push_str(&format!("trials = {}\n", c.trials));
    out.push_str(&format!("perturbation = {}\n", c.perturbation_scale));
    let algos: Vec<&str> = c.run.algos.iter().map(|a| a.as_str()).collect();
    out.push_str(&format!("algos = {}\n", algos.join(",")));
    let reg = match c.run.regularizer {
        RegularizerKind::Quadratic => "quadratic",
        RegularizerKind::ShiftedEntropy => "entropy",
    };
    out.push_str(&format!("regularizer = {reg}\n"));
    match c.run.eta {
        Some(eta) => out.push_str(&format!("eta = {eta}\n")),
        None => out.push_str("eta = auto\n"),
    }
    out.push_str(&format!("fluid_grid = {}\n", c.run.fluid_grid));
    out
}
