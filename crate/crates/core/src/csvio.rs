//! CSV formats: traces (`t,f_coeff,b_coeff`), targets (`t,lambda`),
//! per-period series, episode trajectories and experiment reports. Every file written here starts with a provenance
//! comment `# pacekit <version> seed=<seed> gen=<generator>`; readers skip
//! `#` lines. Floats use Rust's shortest round-trip formatting, so a trace
//! written and read back is bit-identical.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::Request;
use crate::pacing::StepRecord;
use crate::sim::MonteCarloReport;

pub fn provenance_line(seed: Option<u64>) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!(
        "# pacekit {} seed={} gen={}",
        crate::VERSION,
        seed,
        crate::rng::GENERATOR_VERSION
    )
}

pub fn write_trace<W: Write>(mut out: W, requests: &[Request], seed: Option<u64>) -> Result<()> {
    writeln!(out, "{}", provenance_line(seed))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "f_coeff", "b_coeff"])?;
    for (i, r) in requests.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.f_coeff.to_string(), r.b_coeff.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Csv(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_field(field: &str, row: usize, name: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Csv(format!("row {row}: cannot parse {name} `{field}`")))
}

/// Read a trace file. Rows must be numbered `t = 1..T` in order.
pub fn read_trace<R: Read>(input: R) -> Result<Vec<Request>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["t", "f_coeff", "b_coeff"])?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        if rec.len() != 3 {
            return Err(Error::Csv(format!("row {row}: expected 3 fields, found {}", rec.len())));
        }
        let t: usize = rec[0]
            .parse()
            .map_err(|_| Error::Csv(format!("row {row}: cannot parse t `{}`", &rec[0])))?;
        if t != row {
            return Err(Error::Csv(format!("row {row}: expected t={row}, found t={t}")));
        }
        out.push(Request::new(
            parse_field(&rec[1], row, "f_coeff")?,
            parse_field(&rec[2], row, "b_coeff")?,
        ));
    }
    Ok(out)
}

pub fn write_targets<W: Write>(mut out: W, targets: &[f64], seed: Option<u64>) -> Result<()> {
    writeln!(out, "{}", provenance_line(seed))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "lambda"])?;
    for (i, l) in targets.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_targets<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["t", "lambda"])?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(parse_field(rec.get(1).unwrap_or(""), i + 1, "lambda")?);
    }
    Ok(out)
}

pub fn write_trajectory<W: Write>(mut out: W, records: &[StepRecord], seed: Option<u64>) -> Result<()> {
    writeln!(out, "{}", provenance_line(seed))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mu", "action", "reward", "consumption", "budget_remaining"])?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.mu.to_string(),
            r.action.to_string(),
            r.reward.to_string(),
            r.consumption.to_string(),
            r.budget_remaining.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A per-period series under the header `t,<name>`.
pub fn write_series<W: Write>(mut out: W, name: &str, values: &[f64], seed: Option<u64>) -> Result<()> {
    writeln!(out, "{}", provenance_line(seed))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", name])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub const REPORT_HEADER: [&str; 10] = [
    "algo",
    "fluid",
    "mean_reward",
    "stderr",
    "regret",
    "R2",
    "R3",
    "total_W",
    "trials",
    "seed",
];

/// One row per algorithm.
pub fn write_report<W: Write>(mut out: W, report: &MonteCarloReport, seed: u64) -> Result<()> {
    writeln!(out, "{}", provenance_line(Some(seed)))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for a in &report.algos {
        let r = &a.report;
        w.write_record([
            a.algo.as_str().to_string(),
            r.fluid_value.to_string(),
            r.mean_reward.to_string(),
            r.std_error.to_string(),
            r.regret.to_string(),
            r.r2.to_string(),
            r.r3_estimate.to_string(),
            r.total_wasserstein.to_string(),
            r.trials.to_string(),
            seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_with_comment_and_spaces() {
        let text = "# pacekit 0.1.0 seed=1 gen=x\nt,f_coeff,b_coeff\n1, 2.5, 1\n2,0,0.25\n";
        let reqs = read_trace(text.as_bytes()).unwrap();
        assert_eq!(reqs, vec![Request::new(2.5, 1.0), Request::new(0.0, 0.25)]);
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(read_trace("t,f,b\n1,1,1\n".as_bytes()).is_err());
        let err = read_trace("t,f_coeff,b_coeff\n1,1,1\n2,x,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        assert!(read_trace("t,f_coeff,b_coeff\n2,1,1\n".as_bytes()).is_err());
        assert!(read_trace("t,f_coeff,b_coeff\n1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn writes_provenance_and_header() {
        let mut buf = Vec::new();
        write_targets(&mut buf, &[1.0, 0.0], Some(9)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# pacekit "));
        assert_eq!(lines.next().unwrap(), "t,lambda");
        assert_eq!(read_targets(text.as_bytes()).unwrap(), vec![1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn trace_round_trip_is_bit_exact(raw in proptest::collection::vec((any::<f64>(), any::<f64>()), 0..40)) {
            let reqs: Vec<Request> = raw
                .iter()
                .filter(|(f, b)| f.is_finite() && b.is_finite())
                .map(|&(f, b)| Request::new(f, b))
                .collect();
            let mut buf = Vec::new();
            write_trace(&mut buf, &reqs, None).unwrap();
            let back = read_trace(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), reqs.len());
            for (a, b) in back.iter().zip(&reqs) {
                prop_assert_eq!(a.f_coeff.to_bits(), b.f_coeff.to_bits());
                prop_assert_eq!(a.b_coeff.to_bits(), b.b_coeff.to_bits());
            }
        }
    }
}
