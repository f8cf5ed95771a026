use super::design::Design;
use super::logit::{assemble, magnitude_violation, sum_rows, FITTED_TOLERANCE};
use super::newton::{maximize, Evaluation, Likelihood};
use super::{build_design, check_rank, select_rows, FieldGroups, InferenceError, ModelSpec, RegressionResult};
use crate::covariates::AnalysisTable;

/// Outcome category every other category is contrasted with.
pub const REFERENCE_CATEGORY: u8 = 4;

struct MultinomialModel<'a> {
    design: &'a Design,
    /// Per row: block index of the outcome, or `None` for the reference.
    outcome: Vec<Option<usize>>,
    blocks: usize,
    scales: Vec<f64>,
    levels: Vec<(usize, Vec<usize>)>,
}

impl MultinomialModel<'_> {
    /// Linear predictors, block-major.
    fn predictors(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let p = self.design.cols();
        (0..self.blocks)
            .map(|b| self.design.linear_predictor(&theta[b * p..(b + 1) * p]))
            .collect()
    }

    /// Log of the normalizer `1 + sum_b exp(eta_b)` for row `i`.
    fn log_normalizer(eta: &[Vec<f64>], i: usize) -> f64 {
        let m = eta.iter().fold(0.0f64, |m, e| m.max(e[i]));
        let s = (-m).exp() + eta.iter().map(|e| (e[i] - m).exp()).sum::<f64>();
        m + s.ln()
    }

    fn probabilities(eta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = eta.first().map_or(0, Vec::len);
        let norms: Vec<f64> = (0..n).map(|i| Self::log_normalizer(eta, i)).collect();
        eta.iter()
            .map(|e| e.iter().zip(&norms).map(|(v, z)| (v - z).exp()).collect())
            .collect()
    }

    fn ll_from(&self, eta: &[Vec<f64>]) -> f64 {
        sum_rows(self.outcome.len(), |i| {
            let own = self.outcome[i].map_or(0.0, |b| eta[b][i]);
            own - Self::log_normalizer(eta, i)
        })
    }
}

impl Likelihood for MultinomialModel<'_> {
    fn dim(&self) -> usize {
        self.blocks * self.design.cols()
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.ll_from(&self.predictors(theta))
    }

    fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let p = self.design.cols();
        let dim = self.dim();
        let n = self.outcome.len();
        let eta = self.predictors(theta);
        let pi = Self::probabilities(&eta);
        let mut score = Vec::with_capacity(dim);
        for (b, pb) in pi.iter().enumerate() {
            let resid: Vec<f64> = (0..n)
                .map(|i| f64::from(u8::from(self.outcome[i] == Some(b))) - pb[i])
                .collect();
            score.extend(self.design.transpose_times(&resid));
        }
        let mut information = vec![0.0; dim * dim];
        for a in 0..self.blocks {
            for b in a..self.blocks {
                let weights: Vec<f64> = (0..n)
                    .map(|i| {
                        let cross = if a == b { pi[a][i] } else { 0.0 };
                        cross - pi[a][i] * pi[b][i]
                    })
                    .collect();
                let g = self.design.weighted_gram(&weights);
                for r in 0..p {
                    for c in 0..p {
                        let v = g[r * p + c];
                        information[(a * p + r) * dim + b * p + c] = v;
                        information[(b * p + c) * dim + a * p + r] = v;
                    }
                }
            }
        }
        Evaluation {
            log_likelihood: self.ll_from(&eta),
            score,
            information,
        }
    }

    fn separation(&self, theta: &[f64]) -> Option<String> {
        if let Some(reason) = magnitude_violation(self.design, &self.scales, theta) {
            return Some(reason);
        }
        let eta = self.predictors(theta);
        let pi = Self::probabilities(&eta);
        let names = self.design.column_names();
        self.levels.iter().find_map(|(col, rows)| {
            if rows.is_empty() {
                return None;
            }
            let reference_vanishes = rows
                .iter()
                .all(|&i| 1.0 - pi.iter().map(|p| p[i]).sum::<f64>() < FITTED_TOLERANCE);
            let block_vanishes = pi.iter().any(|p| rows.iter().all(|&i| p[i] < FITTED_TOLERANCE));
            (reference_vanishes || block_vanishes)
                .then(|| format!("{} is perfectly predicted (separation)", names[*col]))
        })
    }
}

/// Multinomial logit with category 4 as reference, fitted by Newton steps
/// over the stacked coefficient blocks of the other observed categories.
pub fn mnlogit(
    table: &AnalysisTable,
    spec: &ModelSpec,
    groups: Option<&FieldGroups>,
) -> Result<RegressionResult, InferenceError> {
    let rows = select_rows(table, spec, groups)?;
    let dv = table.column(&spec.dv).expect("validated");
    let mut codes = Vec::with_capacity(rows.len());
    for &i in &rows {
        let v = dv[i];
        if v.fract() != 0.0 || !(1.0..=4.0).contains(&v) {
            return Err(InferenceError::NotCategorical(spec.dv.clone()));
        }
        codes.push(v as u8);
    }
    if !codes.contains(&REFERENCE_CATEGORY) {
        return Err(InferenceError::MissingReference(spec.dv.clone()));
    }
    let mut observed: Vec<u8> = codes.iter().copied().filter(|&c| c != REFERENCE_CATEGORY).collect();
    observed.sort_unstable();
    observed.dedup();
    if observed.is_empty() {
        return Err(InferenceError::OneClass(spec.dv.clone()));
    }
    let design = build_design(table, spec, &rows, spec.fixed_effects);
    if rows.len() <= design.cols() {
        return Err(InferenceError::TooFewRows { need: design.cols() + 1, got: rows.len() });
    }
    check_rank(&design)?;
    let outcome = codes
        .iter()
        .map(|c| observed.iter().position(|o| o == c))
        .collect();
    let model = MultinomialModel {
        scales: design.column_scales(),
        levels: design.factor_rows(),
        blocks: observed.len(),
        outcome,
        design: &design,
    };
    let fitted = maximize(&model);
    let categories: Vec<Option<u8>> = observed.into_iter().map(Some).collect();
    Ok(assemble(spec, &design, fitted, &categories))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::inference::{FixedEffects, ModelKind, INTERCEPT};

    #[test]
    fn intercepts_are_share_log_odds() {
        let shares = [(1u8, 10usize), (2, 25), (3, 5), (4, 40)];
        let category: Vec<f64> = shares.iter().flat_map(|&(c, k)| vec![f64::from(c); k]).collect();
        let n = category.len();
        let mut cols = BTreeMap::new();
        cols.insert("category".to_string(), category);
        let t = AnalysisTable::from_columns(
            (0..n).map(|i| format!("a{i:03}")).collect(),
            vec!["f".into(); n],
            vec![2000; n],
            cols,
        )
        .unwrap();
        let r = mnlogit(&t, &ModelSpec::new(ModelKind::Mnlogit, "category", &[], FixedEffects::None), None).unwrap();
        assert!(r.converged);
        for &(c, k) in &shares[..3] {
            let b = r.coefficient(INTERCEPT, Some(c)).unwrap().estimate;
            assert!((b - (k as f64 / 40.0).ln()).abs() < 1e-9, "category {c}");
        }
    }

    #[test]
    fn missing_reference_is_rejected() {
        let mut cols = BTreeMap::new();
        cols.insert("category".to_string(), vec![1.0, 2.0, 3.0, 1.0]);
        let t = AnalysisTable::from_columns(
            (0..4).map(|i| i.to_string()).collect(),
            vec!["f".into(); 4],
            vec![1; 4],
            cols,
        )
        .unwrap();
        let err = mnlogit(&t, &ModelSpec::new(ModelKind::Mnlogit, "category", &[], FixedEffects::None), None).unwrap_err();
        assert!(matches!(err, InferenceError::MissingReference(_)));
    }
}
