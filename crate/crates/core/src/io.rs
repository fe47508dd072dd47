//! Text formats shared by the library and the command-line tool.
//!
//! Measures are written as CSV (`state,mass`) or JSON
//! (`{"alpha": .., "entries": {"state": mass}}`). Library writers use the
//! shortest decimal that round-trips, so reading a file back gives the
//! same doubles.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gegenbauer::HypergroupIndex;
use crate::hypergroup::SparseMeasure;

/// How floating-point numbers are rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumberFormat {
    /// Ten digits after the leading one, trailing zeros removed.
    #[default]
    Short,
    /// Shortest representation that parses back to the same double.
    RoundTrip,
}

/// Renders `v` as plain decimal when its exponent lies in `[-5, 15]` and in
/// `1.5e-7` style otherwise.
pub fn format_number(v: f64, fmt: NumberFormat) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = match fmt {
        NumberFormat::Short => format!("{v:.10e}"),
        NumberFormat::RoundTrip => format!("{v:e}"),
    };
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    if !(-5..=15).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        return if tail.is_empty() {
            format!("{sign}{head}e{exp}")
        } else {
            format!("{sign}{head}.{tail}e{exp}")
        };
    }
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    format!("{sign}{body}")
}

/// Writes `state,mass` rows (with header) in increasing state order.
pub fn write_measure_csv<W: Write>(m: &SparseMeasure, w: W, fmt: NumberFormat) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["state", "mass"])?;
    for (s, v) in m.iter() {
        out.write_record([s.to_string(), format_number(v, fmt)])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct MeasureRecord {
    state: usize,
    mass: f64,
}

/// Reads a probability measure from `state,mass` CSV.
pub fn read_measure_csv<R: Read>(r: R) -> Result<SparseMeasure> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut pairs = Vec::new();
    for rec in rdr.deserialize() {
        let rec: MeasureRecord = rec?;
        pairs.push((rec.state, rec.mass));
    }
    SparseMeasure::from_pairs(pairs)
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasureJson {
    alpha: HypergroupIndex,
    entries: BTreeMap<usize, f64>,
}

/// `{"alpha": α, "entries": {"state": mass, ...}}`.
pub fn measure_to_json(idx: HypergroupIndex, m: &SparseMeasure) -> Result<String> {
    let doc = MeasureJson {
        alpha: idx,
        entries: m.iter().collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn measure_from_json(s: &str) -> Result<(HypergroupIndex, SparseMeasure)> {
    let doc: MeasureJson = serde_json::from_str(s)?;
    Ok((doc.alpha, SparseMeasure::from_pairs(doc.entries)?))
}

/// Parses the inline grammar `state:mass,state:mass,...`; masses must sum to
/// one within `1e-9` and are then rescaled to sum to one.
pub fn parse_mu_spec(spec: &str) -> Result<SparseMeasure> {
    let mut pairs = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (s, m) = part
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected state:mass, got {part:?}")))?;
        let state: usize = s
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad state {s:?} in {part:?}")))?;
        let mass: f64 = m
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad mass {m:?} in {part:?}")))?;
        pairs.push((state, mass));
    }
    if pairs.is_empty() {
        return Err(Error::Parse("empty measure specification".into()));
    }
    SparseMeasure::normalized_from_pairs(pairs, 1e-9)
}
