//! Output formats: 17-significant-digit JSON and CSV for machines, a fixed-width
//! iteration table for people.

use std::io;

use pdilqr::sqp::{SolverTrace, TraceRecord};
use serde::Serialize;
use serde_json::ser::Formatter;

/// Every float with 17 significant digits, which round-trips any `f64`.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

struct Sig17Formatter;

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(sig17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with [`sig17`] floats and a trailing newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

/// `1.234568e+00` style: mantissa with `digits` decimals, signed two-digit exponent.
pub fn sci(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.digits$e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub const TABLE_HEADER: [&str; 5] = ["Iteration", "Objective", "‖c‖²", "m′ρ", "α"];

/// One header line and one line per record, columns right-aligned.
pub fn trace_table(trace: &SolverTrace) -> String {
    let mut out = format!(
        "{:>9}  {:>14}  {:>14}  {:>14}  {:>14}\n",
        TABLE_HEADER[0], TABLE_HEADER[1], TABLE_HEADER[2], TABLE_HEADER[3], TABLE_HEADER[4]
    );
    for r in &trace.records {
        out += &format!(
            "{:>9}  {:>14}  {:>14}  {:>14}  {:>14}\n",
            r.iteration,
            sci(r.objective, 6),
            sci(r.c_norm_sq, 6),
            sci(r.merit_derivative, 6),
            sci(r.alpha, 6)
        );
    }
    out
}

pub const CSV_COLUMNS: [&str; 10] = [
    "iteration",
    "objective",
    "c_norm_sq",
    "merit_derivative",
    "alpha",
    "rho",
    "max_mu",
    "linesearch_steps",
    "merit",
    "merit_trial",
];

fn csv_row(r: &TraceRecord) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(sig17).unwrap_or_default();
    vec![
        r.iteration.to_string(),
        sig17(r.objective),
        sig17(r.c_norm_sq),
        sig17(r.merit_derivative),
        sig17(r.alpha),
        sig17(r.rho),
        sig17(r.max_mu),
        r.linesearch_steps.to_string(),
        opt(r.merit),
        opt(r.merit_trial),
    ]
}

/// Trace columns in table order followed by the extras; missing values are empty cells.
pub fn trace_csv(trace: &SolverTrace) -> csv::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &trace.records {
        w.write_record(csv_row(r))?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv writes UTF-8"))
}
