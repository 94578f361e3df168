//! Cross-checks effective-diffusivity estimates from different pipelines.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub source: Source,
    pub epsilon: f64,
    pub c: f64,
    pub d_eff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Analytic,
    Bloch,
    Dns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub bloch_analytic: f64,
    pub dns_bloch: f64,
    pub dns_analytic: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { bloch_analytic: 0.10, dns_bloch: 0.25, dns_analytic: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: Source,
    pub second: Source,
    /// `|first - second| / |second|`.
    pub relative_discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub epsilon: f64,
    pub c: f64,
    pub estimates: Vec<Estimate>,
    pub comparisons: Vec<Comparison>,
    pub pass: bool,
}

/// Collects the `estimates` arrays of scenario summaries.
pub fn estimates_from_summary(v: &Value) -> Result<Vec<Estimate>, CliError> {
    let Some(list) = v.get("estimates") else {
        return Ok(Vec::new());
    };
    serde_json::from_value(list.clone()).map_err(|e| CliError::Config(format!("malformed estimates: {e}")))
}

/// Pairwise report over at most one estimate per source. Estimates must
/// share epsilon and speed.
pub fn compare_report(estimates: &[Estimate], tol: &Tolerances) -> Result<Report, CliError> {
    let mut picked: Vec<Estimate> = Vec::new();
    for e in estimates {
        match picked.iter().find(|p| p.source == e.source) {
            Some(p) if p != e => {
                return Err(CliError::Config(format!("conflicting {:?} estimates", e.source)));
            }
            Some(_) => {}
            None => picked.push(*e),
        }
    }
    if picked.len() < 2 {
        return Err(CliError::Config("need estimates from at least two sources".into()));
    }
    let (eps, c) = (picked[0].epsilon, picked[0].c);
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if picked.iter().any(|p| !same(p.epsilon, eps) || !same(p.c, c)) {
        return Err(CliError::Config("estimates refer to different epsilon or speed".into()));
    }
    picked.sort_by_key(|p| p.source);
    let get = |s: Source| picked.iter().find(|p| p.source == s).map(|p| p.d_eff);
    let pairs = [
        (Source::Bloch, Source::Analytic, tol.bloch_analytic),
        (Source::Dns, Source::Bloch, tol.dns_bloch),
        (Source::Dns, Source::Analytic, tol.dns_analytic),
    ];
    let comparisons: Vec<Comparison> = pairs
        .iter()
        .filter_map(|&(a, b, t)| {
            let (x, y) = (get(a)?, get(b)?);
            let rel = (x - y).abs() / y.abs();
            Some(Comparison { first: a, second: b, relative_discrepancy: rel, tolerance: t, pass: rel <= t })
        })
        .collect();
    let pass = comparisons.iter().all(|c| c.pass);
    Ok(Report { epsilon: eps, c, estimates: picked, comparisons, pass })
}
