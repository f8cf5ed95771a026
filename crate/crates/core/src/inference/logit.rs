use super::design::{chunked, Design};
use super::linalg::wald_statistic;
use super::newton::{log1p_exp, maximize, Evaluation, Likelihood, Outcome, MAGNITUDE_GUARD};
use super::{
    build_design, check_rank, chi2_p, normal_p, select_rows, Coefficient, FieldGroups, FitStats, InferenceError,
    ModelSpec, RegressionResult,
};
use crate::covariates::AnalysisTable;

/// Fitted probabilities this close to 0 or 1 on every row of a fixed-effect
/// level mean the level is perfectly predicted.
pub(crate) const FITTED_TOLERANCE: f64 = 1e-6;

pub(crate) fn sum_rows(n: usize, term: impl Fn(usize) -> f64 + Sync) -> f64 {
    chunked(n, 0.0, |range| range.map(&term).sum::<f64>(), |acc, part| *acc += part)
}

/// Names the first coefficient whose effect per standard deviation of its
/// regressor exceeds the magnitude guard. `theta` holds `blocks` stacked copies of
/// the design's coefficients.
pub(crate) fn magnitude_violation(design: &Design, scales: &[f64], theta: &[f64]) -> Option<String> {
    let p = design.cols();
    let names = design.column_names();
    theta.iter().enumerate().find_map(|(j, b)| {
        let col = j % p;
        (b.abs() * scales[col] > MAGNITUDE_GUARD)
            .then(|| format!("coefficient on {} diverges (separation)", names[col]))
    })
}

struct LogitModel<'a> {
    design: &'a Design,
    y: Vec<f64>,
    scales: Vec<f64>,
    levels: Vec<(usize, Vec<usize>)>,
}

impl Likelihood for LogitModel<'_> {
    fn dim(&self) -> usize {
        self.design.cols()
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let eta = self.design.linear_predictor(theta);
        sum_rows(eta.len(), |i| self.y[i] * eta[i] - log1p_exp(eta[i]))
    }

    fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let eta = self.design.linear_predictor(theta);
        let n = eta.len();
        let mu: Vec<f64> = eta.iter().map(|&e| 1.0 / (1.0 + (-e).exp())).collect();
        let resid: Vec<f64> = (0..n).map(|i| self.y[i] - mu[i]).collect();
        let weights: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        Evaluation {
            log_likelihood: sum_rows(n, |i| self.y[i] * eta[i] - log1p_exp(eta[i])),
            score: self.design.transpose_times(&resid),
            information: self.design.weighted_gram(&weights),
        }
    }

    fn separation(&self, theta: &[f64]) -> Option<String> {
        if let Some(reason) = magnitude_violation(self.design, &self.scales, theta) {
            return Some(reason);
        }
        let eta = self.design.linear_predictor(theta);
        let names = self.design.column_names();
        self.levels.iter().find_map(|(col, rows)| {
            let mu = |i: usize| 1.0 / (1.0 + (-eta[i]).exp());
            let low = rows.iter().all(|&i| mu(i) < FITTED_TOLERANCE);
            let high = rows.iter().all(|&i| mu(i) > 1.0 - FITTED_TOLERANCE);
            (!rows.is_empty() && (low || high)).then(|| format!("{} is perfectly predicted (separation)", names[*col]))
        })
    }
}

/// Turns a Newton outcome over `blocks` stacked coefficient vectors into a
/// result; `categories[b]` labels block `b`.
pub(crate) fn assemble(
    spec: &ModelSpec,
    design: &Design,
    outcome: Outcome,
    categories: &[Option<u8>],
) -> RegressionResult {
    let p = design.cols();
    let total = p * categories.len();
    let names = design.column_names();
    let fe_parameters = (p - design.dense_len()) * categories.len();
    let mut result = RegressionResult {
        model: spec.model,
        dv: spec.dv.clone(),
        fixed_effects: spec.fixed_effects,
        subset: spec.subset.as_ref().map(|s| s.to_string()),
        n: design.rows(),
        converged: false,
        iterations: outcome.iterations,
        note: None,
        coefficients: Vec::new(),
        fit: FitStats {
            log_likelihood: Some(outcome.log_likelihood),
            max_score: Some(outcome.max_score),
            ..FitStats::default()
        },
        fe_parameters,
    };
    let chol = match outcome.status {
        Ok(chol) => chol,
        Err(reason) => {
            result.note = Some(reason);
            return result;
        }
    };
    let cov = chol.inverse();
    for (b, &category) in categories.iter().enumerate() {
        for (j, name) in names.iter().enumerate().take(design.dense_len()) {
            let k = b * p + j;
            let estimate = outcome.theta[k];
            let std_error = cov[k * total + k].sqrt();
            result.coefficients.push(Coefficient {
                term: name.clone(),
                category,
                estimate,
                std_error,
                p_value: normal_p(estimate / std_error),
            });
        }
    }
    // every parameter except each block's intercept
    let tested: Vec<usize> = (0..total).filter(|k| k % p != 0).collect();
    let wald = wald_statistic(&outcome.theta, &cov, total, &tested);
    result.converged = true;
    result.fit.aic = Some(2.0 * total as f64 - 2.0 * outcome.log_likelihood);
    result.fit.wald = wald;
    result.fit.wald_df = wald.map(|_| tested.len());
    result.fit.wald_p = wald.map(|w| chi2_p(w, tested.len()));
    result
}

/// Binary logit by iteratively reweighted least squares. Fixed effects
/// enter as indicator columns.
pub fn logit(
    table: &AnalysisTable,
    spec: &ModelSpec,
    groups: Option<&FieldGroups>,
) -> Result<RegressionResult, InferenceError> {
    let rows = select_rows(table, spec, groups)?;
    let dv = table.column(&spec.dv).expect("validated");
    let y: Vec<f64> = rows.iter().map(|&i| dv[i]).collect();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(InferenceError::NotBinary(spec.dv.clone()));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(InferenceError::OneClass(spec.dv.clone()));
    }
    let design = build_design(table, spec, &rows, spec.fixed_effects);
    if rows.len() <= design.cols() {
        return Err(InferenceError::TooFewRows { need: design.cols() + 1, got: rows.len() });
    }
    check_rank(&design)?;
    let model = LogitModel {
        scales: design.column_scales(),
        levels: design.factor_rows(),
        design: &design,
        y,
    };
    let outcome = maximize(&model);
    Ok(assemble(spec, &design, outcome, &[None]))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::inference::{FixedEffects, ModelKind, INTERCEPT};

    fn table(columns: &[(&str, Vec<f64>)], fields: Vec<String>) -> AnalysisTable {
        let n = columns[0].1.len();
        let cols: BTreeMap<String, Vec<f64>> = columns.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        AnalysisTable::from_columns((0..n).map(|i| format!("a{i:04}")).collect(), fields, vec![2000; n], cols).unwrap()
    }

    #[test]
    fn separable_data_is_flagged() {
        let x = vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let t = table(&[("x", x), ("y", y)], vec!["f".into(); 6]);
        let r = logit(&t, &ModelSpec::new(ModelKind::Logit, "y", &["x"], FixedEffects::None), None).unwrap();
        assert!(!r.converged);
        assert!(r.coefficients.is_empty());
        assert!(r.note.unwrap().contains("separation"));
    }

    #[test]
    fn perfectly_predicted_level_is_flagged() {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64).collect();
        let fields: Vec<String> = (0..n).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        // level c never has y = 1
        let y: Vec<f64> = (0..n).map(|i| if i % 3 == 2 { 0.0 } else { ((i / 3 + i / 7) % 2) as f64 }).collect();
        let t = table(&[("x", x), ("y", y)], fields);
        let r = logit(&t, &ModelSpec::new(ModelKind::Logit, "y", &["x"], FixedEffects::Field), None).unwrap();
        assert!(!r.converged, "{r:?}");
        assert!(r.coefficients.is_empty());
    }

    #[test]
    fn intercept_only_reproduces_log_odds() {
        let y: Vec<f64> = (0..40).map(|i| (i % 4 == 0) as u8 as f64).collect();
        let x: Vec<f64> = (0..40).map(|i| (i % 4) as f64).collect();
        let t = table(&[("x", x), ("y", y)], vec!["f".into(); 40]);
        let r = logit(&t, &ModelSpec::new(ModelKind::Logit, "y", &[], FixedEffects::None), None).unwrap();
        assert!(r.converged);
        let b = r.coefficient(INTERCEPT, None).unwrap().estimate;
        assert!((b - (10.0f64 / 30.0).ln()).abs() < 1e-9);
        assert!(r.fit.wald.is_none());
    }

    #[test]
    fn one_class_dv_is_rejected() {
        let t = table(&[("x", vec![1.0, 2.0, 3.0]), ("y", vec![1.0; 3])], vec!["f".into(); 3]);
        let err = logit(&t, &ModelSpec::new(ModelKind::Logit, "y", &["x"], FixedEffects::None), None).unwrap_err();
        assert!(matches!(err, InferenceError::OneClass(_)));
    }
}
