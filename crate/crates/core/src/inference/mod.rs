//! Descriptive statistics and the regression battery: OLS with absorbed
//! fixed effects, binary logit and multinomial logit.

mod design;
mod describe;
mod linalg;
mod logit;
mod mnlogit;
mod newton;
mod ols;
mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariates::AnalysisTable;

pub use design::{Design, FactorBlock};
pub use describe::{describe, read_descriptives, write_descriptives, Correlation, Descriptives, VariableSummary};
pub use linalg::{cholesky, wald_statistic, Cholesky};
pub use logit::logit;
pub use mnlogit::{mnlogit, REFERENCE_CATEGORY};
pub use newton::{CONVERGENCE_LL, CONVERGENCE_SCORE, MAGNITUDE_GUARD, MAX_ITERATIONS};
pub use ols::{ols, ols_fit, OlsFit};
pub use render::{format_estimate, render_descriptives, render_models, stars, ModelColumn};

/// Name of the constant term in coefficient tables.
pub const INTERCEPT: &str = "Intercept";

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("unknown variable \"{0}\"")]
    UnknownVariable(String),
    #[error("dependent variable \"{0}\" is also listed as a covariate")]
    DvAmongCovariates(String),
    #[error("invalid subset expression: {0}")]
    BadSubset(String),
    #[error("subset {0} matches no rows")]
    EmptySubset(String),
    #[error("subsetting by field group needs a field-group table")]
    MissingFieldGroups,
    #[error("{need} rows needed, {got} available after listwise deletion")]
    TooFewRows { need: usize, got: usize },
    #[error("collinear columns: {}", .0.join(", "))]
    Collinear(Vec<String>),
    #[error("dependent variable \"{0}\" must be coded 0/1")]
    NotBinary(String),
    #[error("dependent variable \"{0}\" takes a single value")]
    OneClass(String),
    #[error("dependent variable \"{0}\" must hold category codes 1 to 4")]
    NotCategorical(String),
    #[error("reference category {REFERENCE_CATEGORY} is absent from \"{0}\"")]
    MissingReference(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed regression output: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Logit,
    Mnlogit,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Logit => "logit",
            ModelKind::Mnlogit => "mnlogit",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ols" => Ok(ModelKind::Ols),
            "logit" => Ok(ModelKind::Logit),
            "mnlogit" => Ok(ModelKind::Mnlogit),
            other => Err(format!("unknown model \"{other}\" (expected ols, logit or mnlogit)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FixedEffects {
    #[serde(rename = "none")]
    None,
    #[default]
    #[serde(rename = "field")]
    Field,
    #[serde(rename = "field+year")]
    FieldYear,
}

impl FixedEffects {
    pub fn as_str(self) -> &'static str {
        match self {
            FixedEffects::None => "none",
            FixedEffects::Field => "field",
            FixedEffects::FieldYear => "field+year",
        }
    }
}

impl fmt::Display for FixedEffects {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FixedEffects {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(FixedEffects::None),
            "field" => Ok(FixedEffects::Field),
            "field+year" => Ok(FixedEffects::FieldYear),
            other => Err(format!("unknown fixed effects \"{other}\" (expected none, field or field+year)")),
        }
    }
}

/// Mapping from field code to field group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldGroups {
    groups: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldGroupRecord {
    field: String,
    group: String,
}

impl FieldGroups {
    pub fn new(groups: BTreeMap<String, String>) -> Self {
        Self { groups }
    }

    pub fn group_of(&self, field: &str) -> Option<&str> {
        self.groups.get(field).map(String::as_str)
    }

    /// Distinct group names in sorted order.
    pub fn group_names(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.groups.values().map(String::as_str).collect();
        set.into_iter().collect()
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, csv::Error> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut groups = BTreeMap::new();
        for record in reader.deserialize() {
            let record: FieldGroupRecord = record?;
            groups.insert(record.field, record.group);
        }
        Ok(Self { groups })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for (field, group) in &self.groups {
            writer.serialize(FieldGroupRecord {
                field: field.clone(),
                group: group.clone(),
            })?;
        }
        writer.flush()
    }
}

/// Row filter: within a key, values are alternatives; across keys, all
/// conditions must hold. Written as `group=Sciences,year=2005`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subset {
    pub groups: Vec<String>,
    pub fields: Vec<String>,
    pub years: Vec<i32>,
}

impl Subset {
    pub fn group(name: &str) -> Self {
        Self {
            groups: vec![name.to_string()],
            ..Self::default()
        }
    }

    pub fn year(year: i32) -> Self {
        Self {
            years: vec![year],
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty() && self.fields.is_empty() && self.years.is_empty()
    }

    fn admits(&self, field: &str, year: i32, groups: Option<&FieldGroups>) -> bool {
        if !self.fields.is_empty() && !self.fields.iter().any(|f| f == field) {
            return false;
        }
        if !self.years.is_empty() && !self.years.contains(&year) {
            return false;
        }
        if !self.groups.is_empty() {
            let group = groups.and_then(|g| g.group_of(field));
            if !group.is_some_and(|g| self.groups.iter().any(|s| s == g)) {
                return false;
            }
        }
        true
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .groups
            .iter()
            .map(|g| format!("group={g}"))
            .chain(self.fields.iter().map(|v| format!("field={v}")))
            .chain(self.years.iter().map(|y| format!("year={y}")))
            .collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Subset {
    type Err = InferenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut subset = Subset::default();
        for clause in s.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let (key, value) = clause
                .split_once('=')
                .ok_or_else(|| InferenceError::BadSubset(format!("\"{clause}\" is not key=value")))?;
            let value = value.trim();
            if value.is_empty() {
                return Err(InferenceError::BadSubset(format!("\"{clause}\" has an empty value")));
            }
            match key.trim() {
                "group" => subset.groups.push(value.to_string()),
                "field" => subset.fields.push(value.to_string()),
                "year" => subset.years.push(
                    value
                        .parse()
                        .map_err(|_| InferenceError::BadSubset(format!("\"{value}\" is not a year")))?,
                ),
                other => {
                    return Err(InferenceError::BadSubset(format!(
                        "unknown key \"{other}\" (expected group, field or year)"
                    )))
                }
            }
        }
        if subset.is_empty() {
            return Err(InferenceError::BadSubset("empty expression".into()));
        }
        Ok(subset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: ModelKind,
    pub dv: String,
    pub covariates: Vec<String>,
    pub fixed_effects: FixedEffects,
    pub subset: Option<Subset>,
}

impl ModelSpec {
    pub fn new(model: ModelKind, dv: &str, covariates: &[&str], fixed_effects: FixedEffects) -> Self {
        Self {
            model,
            dv: dv.to_string(),
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
            fixed_effects,
            subset: None,
        }
    }

    pub fn with_subset(mut self, subset: Subset) -> Self {
        self.subset = Some(subset);
        self
    }

    pub fn validate(&self, table: &AnalysisTable) -> Result<(), InferenceError> {
        if self.covariates.iter().any(|c| c == &self.dv) {
            return Err(InferenceError::DvAmongCovariates(self.dv.clone()));
        }
        for name in std::iter::once(&self.dv).chain(&self.covariates) {
            if table.column(name).is_none() {
                return Err(InferenceError::UnknownVariable(name.clone()));
            }
        }
        Ok(())
    }
}

/// Rows entering estimation: those admitted by the subset with no missing
/// value in the dependent variable or any covariate.
pub fn select_rows(
    table: &AnalysisTable,
    spec: &ModelSpec,
    groups: Option<&FieldGroups>,
) -> Result<Vec<usize>, InferenceError> {
    spec.validate(table)?;
    if let Some(subset) = &spec.subset {
        if !subset.groups.is_empty() {
            let groups = groups.ok_or(InferenceError::MissingFieldGroups)?;
            let known = groups.group_names();
            if let Some(g) = subset.groups.iter().find(|g| !known.contains(&g.as_str())) {
                return Err(InferenceError::BadSubset(format!("unknown field group \"{g}\"")));
            }
        }
    }
    let columns: Vec<&[f64]> = std::iter::once(&spec.dv)
        .chain(&spec.covariates)
        .map(|name| table.column(name).expect("validated"))
        .collect();
    let admitted: Vec<usize> = (0..table.len())
        .filter(|&i| {
            spec.subset
                .as_ref()
                .is_none_or(|s| s.admits(&table.fields[i], table.years[i], groups))
        })
        .collect();
    if admitted.is_empty() {
        if let Some(subset) = &spec.subset {
            return Err(InferenceError::EmptySubset(subset.to_string()));
        }
    }
    Ok(admitted
        .into_iter()
        .filter(|&i| columns.iter().all(|c| c[i].is_finite()))
        .collect())
}

/// Fixed-effect factors over the selected rows, levels in sorted order.
pub(crate) fn factor_codes(table: &AnalysisTable, rows: &[usize], fe: FixedEffects) -> Vec<(String, Vec<String>, Vec<u32>)> {
    let mut out = Vec::new();
    if matches!(fe, FixedEffects::Field | FixedEffects::FieldYear) {
        let values: Vec<&str> = rows.iter().map(|&i| table.fields[i].as_str()).collect();
        let levels: Vec<&str> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let codes = values.iter().map(|v| levels.binary_search(v).expect("level") as u32).collect();
        out.push(("field".to_string(), levels.into_iter().map(str::to_string).collect(), codes));
    }
    if fe == FixedEffects::FieldYear {
        let values: Vec<i32> = rows.iter().map(|&i| table.years[i]).collect();
        let levels: Vec<i32> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let codes = values.iter().map(|v| levels.binary_search(v).expect("level") as u32).collect();
        out.push(("year".to_string(), levels.iter().map(i32::to_string).collect(), codes));
    }
    out
}

/// Indicator blocks with the first level of every factor as baseline.
pub(crate) fn indicator_blocks(table: &AnalysisTable, rows: &[usize], fe: FixedEffects) -> Vec<FactorBlock> {
    factor_codes(table, rows, fe)
        .into_iter()
        .map(|(name, levels, codes)| FactorBlock {
            name,
            levels: levels[1..].to_vec(),
            codes: codes.into_iter().map(|c| c.checked_sub(1)).collect(),
        })
        .collect()
}

/// Intercept plus covariates over `rows`, with optional indicator blocks.
pub(crate) fn build_design(
    table: &AnalysisTable,
    spec: &ModelSpec,
    rows: &[usize],
    fe: FixedEffects,
) -> Design {
    let mut names = vec![INTERCEPT.to_string()];
    let mut columns = vec![vec![1.0; rows.len()]];
    for name in &spec.covariates {
        let col = table.column(name).expect("validated");
        names.push(name.clone());
        columns.push(rows.iter().map(|&i| col[i]).collect());
    }
    Design::new(names, columns, indicator_blocks(table, rows, fe))
}

/// Fails with the offending column names when `X'X` is rank deficient.
pub(crate) fn check_rank(design: &Design) -> Result<(), InferenceError> {
    let p = design.cols();
    let gram = design.weighted_gram(&vec![1.0; design.rows()]);
    match cholesky(&gram, p) {
        Ok(_) => Ok(()),
        Err(deficient) => {
            let names = design.column_names();
            Err(InferenceError::Collinear(deficient.into_iter().map(|j| names[j].clone()).collect()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub term: String,
    /// Outcome category of a multinomial block.
    pub category: Option<u8>,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitStats {
    pub r2: Option<f64>,
    pub df_resid: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub aic: Option<f64>,
    pub wald: Option<f64>,
    pub wald_df: Option<usize>,
    pub wald_p: Option<f64>,
    /// Largest absolute score entry at the reported optimum.
    pub max_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub model: ModelKind,
    pub dv: String,
    pub fixed_effects: FixedEffects,
    pub subset: Option<String>,
    /// Rows entering estimation.
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Reason for non-convergence.
    pub note: Option<String>,
    /// Empty unless converged. Fixed-effect levels are not listed.
    pub coefficients: Vec<Coefficient>,
    pub fit: FitStats,
    /// Parameters spent on fixed effects.
    pub fe_parameters: usize,
}

pub const R2_DEFINITION: &str = "1 - SSR/TSS with TSS about the grand mean of the undemeaned dependent variable";
pub const WALD_DEFINITION: &str = "joint chi-square that every non-intercept coefficient, fixed-effect indicators included, is zero";

impl RegressionResult {
    pub fn coefficient(&self, term: &str, category: Option<u8>) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term && c.category == category)
    }

    /// Terms in first-appearance order.
    pub fn terms(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for c in &self.coefficients {
            if !seen.contains(&c.term.as_str()) {
                seen.push(c.term.as_str());
            }
        }
        seen
    }

    pub fn categories(&self) -> Vec<Option<u8>> {
        let mut seen = Vec::new();
        for c in &self.coefficients {
            if !seen.contains(&c.category) {
                seen.push(c.category);
            }
        }
        seen
    }

    /// Long format: `kind,term,category,value,std_error,p_value`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "term", "category", "value", "std_error", "p_value"])?;
        let meta = |w: &mut csv::Writer<W>, term: &str, value: &str| w.write_record(["meta", term, "", value, "", ""]);
        meta(&mut w, "model", self.model.as_str())?;
        meta(&mut w, "dv", &self.dv)?;
        meta(&mut w, "fixed_effects", self.fixed_effects.as_str())?;
        meta(&mut w, "subset", self.subset.as_deref().unwrap_or(""))?;
        meta(&mut w, "converged", if self.converged { "true" } else { "false" })?;
        meta(&mut w, "note", self.note.as_deref().unwrap_or(""))?;
        match self.model {
            ModelKind::Ols => meta(&mut w, "r2_definition", R2_DEFINITION)?,
            _ => meta(&mut w, "wald_definition", WALD_DEFINITION)?,
        }
        let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let fits: [(&str, String); 11] = [
            ("n", self.n.to_string()),
            ("iterations", self.iterations.to_string()),
            ("fe_parameters", self.fe_parameters.to_string()),
            ("r2", num(self.fit.r2)),
            ("df_resid", num(self.fit.df_resid)),
            ("log_likelihood", num(self.fit.log_likelihood)),
            ("aic", num(self.fit.aic)),
            ("wald", num(self.fit.wald)),
            ("wald_df", self.fit.wald_df.map(|d| d.to_string()).unwrap_or_default()),
            ("wald_p", num(self.fit.wald_p)),
            ("max_score", num(self.fit.max_score)),
        ];
        for (term, value) in fits {
            w.write_record(["fit", term, "", &value, "", ""])?;
        }
        for c in &self.coefficients {
            w.write_record([
                "coef",
                &c.term,
                &c.category.map(|k| k.to_string()).unwrap_or_default(),
                &c.estimate.to_string(),
                &c.std_error.to_string(),
                &c.p_value.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, InferenceError> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut fit: BTreeMap<String, String> = BTreeMap::new();
        let mut coefficients = Vec::new();
        let float = |s: &str| -> Result<f64, InferenceError> {
            s.parse().map_err(|_| InferenceError::Malformed(format!("bad number \"{s}\"")))
        };
        for record in reader.records() {
            let r = record?;
            if r.len() != 6 {
                return Err(InferenceError::Malformed(format!("expected 6 fields, found {}", r.len())));
            }
            match &r[0] {
                "meta" => {
                    meta.insert(r[1].to_string(), r[3].to_string());
                }
                "fit" => {
                    fit.insert(r[1].to_string(), r[3].to_string());
                }
                "coef" => coefficients.push(Coefficient {
                    term: r[1].to_string(),
                    category: match &r[2] {
                        "" => None,
                        k => Some(k.parse().map_err(|_| InferenceError::Malformed(format!("bad category \"{k}\"")))?),
                    },
                    estimate: float(&r[3])?,
                    std_error: float(&r[4])?,
                    p_value: float(&r[5])?,
                }),
                other => return Err(InferenceError::Malformed(format!("unknown row kind \"{other}\""))),
            }
        }
        let get = |map: &BTreeMap<String, String>, key: &str| -> Result<String, InferenceError> {
            map.get(key).cloned().ok_or_else(|| InferenceError::Malformed(format!("missing {key}")))
        };
        let opt_float = |key: &str| -> Result<Option<f64>, InferenceError> {
            match fit.get(key).map(String::as_str) {
                None | Some("") => Ok(None),
                Some(s) => float(s).map(Some),
            }
        };
        let count = |key: &str| -> Result<usize, InferenceError> {
            let s = get(&fit, key)?;
            s.parse().map_err(|_| InferenceError::Malformed(format!("bad {key} \"{s}\"")))
        };
        let nonempty = |s: String| (!s.is_empty()).then_some(s);
        Ok(Self {
            model: get(&meta, "model")?.parse().map_err(InferenceError::Malformed)?,
            dv: get(&meta, "dv")?,
            fixed_effects: get(&meta, "fixed_effects")?.parse().map_err(InferenceError::Malformed)?,
            subset: nonempty(get(&meta, "subset")?),
            n: count("n")?,
            converged: get(&meta, "converged")? == "true",
            iterations: count("iterations")?,
            note: nonempty(get(&meta, "note")?),
            coefficients,
            fit: FitStats {
                r2: opt_float("r2")?,
                df_resid: opt_float("df_resid")?,
                log_likelihood: opt_float("log_likelihood")?,
                aic: opt_float("aic")?,
                wald: opt_float("wald")?,
                wald_df: match fit.get("wald_df").map(String::as_str) {
                    None | Some("") => None,
                    Some(_) => Some(count("wald_df")?),
                },
                wald_p: opt_float("wald_p")?,
                max_score: opt_float("max_score")?,
            },
            fe_parameters: count("fe_parameters")?,
        })
    }
}

/// Fits `spec` with the estimator it names.
pub fn fit(
    table: &AnalysisTable,
    spec: &ModelSpec,
    groups: Option<&FieldGroups>,
) -> Result<RegressionResult, InferenceError> {
    match spec.model {
        ModelKind::Ols => ols(table, spec, groups),
        ModelKind::Logit => logit(table, spec, groups),
        ModelKind::Mnlogit => mnlogit(table, spec, groups),
    }
}

pub(crate) fn normal_p(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * normal.sf(z.abs())
}

pub(crate) fn chi2_p(stat: f64, df: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(df as f64).map(|d| d.sf(stat.max(0.0))).unwrap_or(f64::NAN)
}

pub(crate) fn t_p(t: f64, df: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    StudentsT::new(0.0, 1.0, df).map(|d| 2.0 * d.sf(t.abs())).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subset_expressions() {
        let s: Subset = "group=Arts & Humanities, year=2005,field=F3".parse().unwrap();
        assert_eq!(s.groups, ["Arts & Humanities"]);
        assert_eq!(s.years, [2005]);
        assert_eq!(s.fields, ["F3"]);
        assert_eq!(s.to_string().parse::<Subset>().unwrap(), s);
        assert!("colour=red".parse::<Subset>().is_err());
        assert!("year=abc".parse::<Subset>().is_err());
        assert!("".parse::<Subset>().is_err());
    }

    #[test]
    fn result_round_trips_through_csv() {
        let result = RegressionResult {
            model: ModelKind::Mnlogit,
            dv: "category".into(),
            fixed_effects: FixedEffects::Field,
            subset: Some("group=Sciences".into()),
            n: 120,
            converged: true,
            iterations: 7,
            note: None,
            coefficients: vec![
                Coefficient { term: INTERCEPT.into(), category: Some(1), estimate: 0.1, std_error: 0.2, p_value: 0.6 },
                Coefficient { term: "countries".into(), category: Some(3), estimate: -1.0 / 3.0, std_error: 1e-7, p_value: 1e-300 },
            ],
            fit: FitStats {
                log_likelihood: Some(-123.456),
                aic: Some(260.9),
                wald: Some(12.5),
                wald_df: Some(6),
                wald_p: Some(0.05),
                max_score: Some(1e-10),
                ..FitStats::default()
            },
            fe_parameters: 4,
        };
        let mut buf = Vec::new();
        result.write_csv(&mut buf).unwrap();
        let back = RegressionResult::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, result);
    }
}
