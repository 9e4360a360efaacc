//! CSV rows for trial results.

use std::io::{Read, Write};

use online_spo::simulate::{Arm, Predictor, TrialRow};

use crate::CliError;

pub const HEADER: [&str; 14] = [
    "instance",
    "arm",
    "loss",
    "predictor",
    "T",
    "trial",
    "seed",
    "tau",
    "obj",
    "obj_hindsight",
    "rel_regret",
    "infeasibility",
    "dv_measured",
    "wall_ms",
];

/// Nine significant digits in exponent form; independent of locale.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Writes the header and one line per row. Returns the number of rows whose
/// relative regret was undefined.
pub fn write_rows<W: Write>(
    out: W,
    instance: &str,
    arms: &[Arm],
    rows: &[TrialRow],
    record_timing: bool,
) -> Result<usize, CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    let mut undefined = 0;
    for r in rows {
        let arm = &arms[r.arm];
        let m = &r.metrics;
        if m.rel_regret.is_none() {
            undefined += 1;
        }
        let loss = match arm.predictor {
            Predictor::Model(_) => arm.loss.name(),
            Predictor::Benchmark(_) => "",
        };
        w.write_record([
            instance.to_string(),
            arm.label(),
            loss.to_string(),
            arm.predictor.name().to_string(),
            r.horizon.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.metrics.tau.to_string(),
            fmt_num(m.obj),
            fmt_num(m.obj_hindsight),
            fmt_opt(m.rel_regret),
            fmt_opt(m.infeasibility),
            fmt_num(m.dv_measured),
            if record_timing { fmt_num(m.wall_ms) } else { String::new() },
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(undefined)
}

/// The columns of a result CSV that plotting needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub instance: String,
    pub arm: String,
    pub horizon: usize,
    pub rel_regret: Option<f64>,
    pub infeasibility: Option<f64>,
}

fn optional(field: &str, name: &str, line: u64) -> Result<Option<f64>, CliError> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| CliError::Csv {
        line,
        message: format!("bad {name} value `{field}`"),
    })
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>, CliError> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Csv {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (ci, ca, ct, cr, cf) = (col("instance")?, col("arm")?, col("T")?, col("rel_regret")?, col("infeasibility")?);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let horizon = field(ct).parse().map_err(|_| CliError::Csv {
            line,
            message: format!("bad T value `{}`", field(ct)),
        })?;
        rows.push(ResultRow {
            instance: field(ci).to_string(),
            arm: field(ca).to_string(),
            horizon,
            rel_regret: optional(field(cr), "rel_regret", line)?,
            infeasibility: optional(field(cf), "infeasibility", line)?,
        });
    }
    Ok(rows)
}
