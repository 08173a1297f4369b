//! CSV output.
//!
//! Every table has a header row, fields are quoted per RFC 4180, records end
//! in CRLF, and floats are written like C's `%.9g`.

use std::io::Write;

use crate::bounds::Bound;
use crate::error::Result;

/// `%.9g`: nine significant digits, trailing zeros dropped, exponent form
/// outside `1e-5 <= |v| < 1e9`.
pub fn fmt_float(v: f64) -> String {
    fmt_sig(v, 9)
}

fn fmt_sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_bound(b: Bound) -> String {
    match b {
        Bound::Finite(v) => fmt_float(v),
        Bound::Unbounded => "unbounded".into(),
    }
}

pub fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(out)
}

/// One `simulate` row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateRow {
    pub policy: String,
    pub n_devices: usize,
    pub antennas: usize,
    pub snr_db: f64,
    pub lambda_spec: String,
    pub omega_spec: String,
    pub horizon: usize,
    pub runs: usize,
    pub ewsaoi_mean: f64,
    pub ewsaoi_stderr: f64,
    pub upper_bound: Bound,
    pub lower_bound: f64,
    pub n_star: usize,
    pub wall_time_s: f64,
}

pub const SIMULATE_HEADER: [&str; 14] = [
    "policy",
    "N",
    "M",
    "snr_db",
    "lambda_spec",
    "omega_spec",
    "T",
    "runs",
    "ewsaoi_mean",
    "ewsaoi_stderr",
    "upper_bound",
    "lower_bound",
    "n_star",
    "wall_time_s",
];

pub fn write_simulate<W: Write>(rows: &[SimulateRow], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SIMULATE_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.n_devices.to_string(),
            r.antennas.to_string(),
            fmt_float(r.snr_db),
            r.lambda_spec.clone(),
            r.omega_spec.clone(),
            r.horizon.to_string(),
            r.runs.to_string(),
            fmt_float(r.ewsaoi_mean),
            fmt_float(r.ewsaoi_stderr),
            fmt_bound(r.upper_bound),
            fmt_float(r.lower_bound),
            r.n_star.to_string(),
            fmt_float(r.wall_time_s),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))
}

/// Writes a header and string records.
pub fn write_table<W: Write>(header: &[&str], rows: &[Vec<String>], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))
}

fn io(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(e.to_string())
}
