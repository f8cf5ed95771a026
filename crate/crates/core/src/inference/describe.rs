use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::{t_p, InferenceError};
use crate::covariates::AnalysisTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub variable: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub a: String,
    pub b: String,
    /// Rows where both variables are present.
    pub n: usize,
    /// `None` when either variable has no variance.
    pub r: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Descriptives {
    pub variables: Vec<VariableSummary>,
    /// Lower triangle in variable order, `a` listed after `b`.
    pub correlations: Vec<Correlation>,
}

impl Descriptives {
    pub fn correlation(&self, a: &str, b: &str) -> Option<&Correlation> {
        self.correlations
            .iter()
            .find(|c| (c.a == a && c.b == b) || (c.a == b && c.b == a))
    }
}

fn pearson(x: &[f64], y: &[f64]) -> (usize, Option<f64>) {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return (n, None);
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return (n, None);
    }
    (n, Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

fn correlation_p(r: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return Some(0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    Some(t_p(t, df))
}

/// Means, sample standard deviations and pairwise Pearson correlations
/// over the rows where the variables involved are present.
pub fn describe(table: &AnalysisTable, variables: &[&str]) -> Result<Descriptives, InferenceError> {
    if table.len() < 3 {
        return Err(InferenceError::TooFewRows { need: 3, got: table.len() });
    }
    let columns: Vec<&[f64]> = variables
        .iter()
        .map(|v| table.column(v).ok_or_else(|| InferenceError::UnknownVariable(v.to_string())))
        .collect::<Result<_, _>>()?;
    let mut out = Descriptives::default();
    for (name, col) in variables.iter().zip(&columns) {
        let present: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
        let n = present.len();
        let mean = present.iter().sum::<f64>() / n as f64;
        let ss: f64 = present.iter().map(|v| (v - mean).powi(2)).sum();
        out.variables.push(VariableSummary {
            variable: name.to_string(),
            n,
            mean: if n > 0 { mean } else { f64::NAN },
            sd: if n > 1 { (ss / (n - 1) as f64).sqrt() } else { f64::NAN },
        });
    }
    for i in 0..variables.len() {
        for j in 0..i {
            let (n, r) = pearson(columns[i], columns[j]);
            out.correlations.push(Correlation {
                a: variables[i].to_string(),
                b: variables[j].to_string(),
                n,
                r,
                p_value: r.and_then(|r| correlation_p(r, n)),
            });
        }
    }
    Ok(out)
}

/// Writes `variable,n,mean,sd` and `a,b,n,r,p_value` tables.
pub fn write_descriptives<W1: Write, W2: Write>(d: &Descriptives, summary: W1, correlations: W2) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(summary);
    for v in &d.variables {
        w.serialize(v)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(correlations);
    for c in &d.correlations {
        w.serialize(c)?;
    }
    w.flush()
}

pub fn read_descriptives<R1: Read, R2: Read>(summary: R1, correlations: R2) -> Result<Descriptives, InferenceError> {
    let mut out = Descriptives::default();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(summary);
    for row in r.deserialize() {
        out.variables.push(row?);
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(correlations);
    for row in r.deserialize() {
        out.correlations.push(row?);
    }
    Ok(out)
}
