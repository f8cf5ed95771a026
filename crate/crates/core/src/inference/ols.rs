use rayon::prelude::*;

use super::design::Design;
use super::linalg::cholesky;
use super::{
    factor_codes, select_rows, t_p, Coefficient, FieldGroups, FitStats, FixedEffects, InferenceError,
    ModelKind, ModelSpec, RegressionResult, INTERCEPT,
};
use crate::covariates::AnalysisTable;

const DEMEAN_TOLERANCE: f64 = 1e-13;
const DEMEAN_MAX_SWEEPS: usize = 100_000;

/// A fitted OLS model with the within-transformed regressors and residuals.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub result: RegressionResult,
    /// Rows of the table that entered estimation.
    pub rows: Vec<usize>,
    /// Regressors after absorbing fixed effects, in coefficient order.
    pub regressors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

pub fn ols(
    table: &AnalysisTable,
    spec: &ModelSpec,
    groups: Option<&FieldGroups>,
) -> Result<RegressionResult, InferenceError> {
    ols_fit(table, spec, groups).map(|f| f.result)
}

fn subtract_group_means(values: &mut [f64], codes: &[u32], levels: usize) {
    let mut sums = vec![0.0; levels];
    let mut counts = vec![0usize; levels];
    for (&v, &c) in values.iter().zip(codes) {
        sums[c as usize] += v;
        counts[c as usize] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        *s /= n as f64;
    }
    for (v, &c) in values.iter_mut().zip(codes) {
        *v -= sums[c as usize];
    }
}

/// Projects out one or two sets of group means. Two factors are handled by
/// alternating projections until a sweep moves no value by more than a
/// relative tolerance.
fn absorb(values: &mut [f64], factors: &[(String, Vec<String>, Vec<u32>)]) {
    match factors {
        [] => {}
        [(_, levels, codes)] => subtract_group_means(values, codes, levels.len()),
        _ => {
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            let mut previous = values.to_vec();
            for _ in 0..DEMEAN_MAX_SWEEPS {
                for (_, levels, codes) in factors {
                    subtract_group_means(values, codes, levels.len());
                }
                let moved = values
                    .iter()
                    .zip(&previous)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if moved <= DEMEAN_TOLERANCE * scale {
                    break;
                }
                previous.copy_from_slice(values);
            }
        }
    }
}

/// Degrees of freedom absorbed by the factors: the number of levels, less
/// one per connected component beyond the first factor.
fn absorbed_df(factors: &[(String, Vec<String>, Vec<u32>)]) -> usize {
    match factors {
        [] => 0,
        [(_, levels, _)] => levels.len(),
        [(_, l1, c1), (_, l2, c2)] => {
            let mut parent: Vec<usize> = (0..l1.len() + l2.len()).collect();
            fn find(parent: &mut [usize], mut x: usize) -> usize {
                while parent[x] != x {
                    parent[x] = parent[parent[x]];
                    x = parent[x];
                }
                x
            }
            for (&a, &b) in c1.iter().zip(c2) {
                let ra = find(&mut parent, a as usize);
                let rb = find(&mut parent, l1.len() + b as usize);
                if ra != rb {
                    parent[ra] = rb;
                }
            }
            let components = (0..parent.len()).filter(|&x| find(&mut parent, x) == x).count();
            l1.len() + l2.len() - components
        }
        _ => unreachable!("at most two absorbed factors"),
    }
}

pub fn ols_fit(
    table: &AnalysisTable,
    spec: &ModelSpec,
    groups: Option<&FieldGroups>,
) -> Result<OlsFit, InferenceError> {
    let rows = select_rows(table, spec, groups)?;
    let n = rows.len();
    let dv = table.column(&spec.dv).expect("validated");
    let y: Vec<f64> = rows.iter().map(|&i| dv[i]).collect();
    let factors = factor_codes(table, &rows, spec.fixed_effects);
    let absorbed = spec.fixed_effects != FixedEffects::None;

    let mut names: Vec<String> = Vec::new();
    let mut raw: Vec<Vec<f64>> = Vec::new();
    if !absorbed {
        names.push(INTERCEPT.to_string());
        raw.push(vec![1.0; n]);
    }
    for name in &spec.covariates {
        let col = table.column(name).expect("validated");
        names.push(name.clone());
        raw.push(rows.iter().map(|&i| col[i]).collect());
    }
    let k = raw.len();
    let fe_df = absorbed_df(&factors);
    let need = k + fe_df + 1;
    if n < need {
        return Err(InferenceError::TooFewRows { need, got: n });
    }

    let mut columns = raw.clone();
    columns.push(y.clone());
    columns.par_iter_mut().for_each(|c| absorb(c, &factors));
    let y_tilde = columns.pop().expect("dv column");
    let regressors = columns;

    let design = Design::new(names.clone(), regressors.clone(), Vec::new());
    let gram = design.weighted_gram(&vec![1.0; n]);
    let chol = match cholesky(&gram, k) {
        Ok(c) => c,
        Err(deficient) => {
            return Err(InferenceError::Collinear(deficient.into_iter().map(|j| names[j].clone()).collect()))
        }
    };
    let beta = chol.solve(&design.transpose_times(&y_tilde));
    let fitted = design.linear_predictor(&beta);
    let residuals: Vec<f64> = y_tilde.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let df_resid = (n - k - fe_df) as f64;
    let sigma2 = ssr / df_resid;
    let inv = chol.inverse();

    let mut coefficients = Vec::with_capacity(k + 1);
    if absorbed {
        let means: Vec<f64> = raw.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let estimate = y_mean - means.iter().zip(&beta).map(|(m, b)| m * b).sum::<f64>();
        let mut quad = 0.0;
        for a in 0..k {
            for b in 0..k {
                quad += means[a] * inv[a * k + b] * means[b];
            }
        }
        let std_error = (sigma2 / n as f64 + sigma2 * quad).sqrt();
        coefficients.push(Coefficient {
            term: INTERCEPT.to_string(),
            category: None,
            estimate,
            std_error,
            p_value: t_p(estimate / std_error, df_resid),
        });
    }
    for (j, name) in names.iter().enumerate() {
        let std_error = (sigma2 * inv[j * k + j]).sqrt();
        coefficients.push(Coefficient {
            term: name.clone(),
            category: None,
            estimate: beta[j],
            std_error,
            p_value: t_p(beta[j] / std_error, df_resid),
        });
    }

    let result = RegressionResult {
        model: ModelKind::Ols,
        dv: spec.dv.clone(),
        fixed_effects: spec.fixed_effects,
        subset: spec.subset.as_ref().map(|s| s.to_string()),
        n,
        converged: true,
        iterations: 1,
        note: None,
        coefficients,
        fit: FitStats {
            r2: Some(if tss > 0.0 { 1.0 - ssr / tss } else { f64::NAN }),
            df_resid: Some(df_resid),
            ..FitStats::default()
        },
        fe_parameters: fe_df.saturating_sub(1),
    };
    Ok(OlsFit {
        result,
        rows,
        regressors,
        residuals,
    })
}

/// Dummy-encoded fit used to cross-check the absorbed estimator.
#[cfg(test)]
pub(crate) fn dummy_fit(table: &AnalysisTable, spec: &ModelSpec) -> Vec<f64> {
    let rows = select_rows(table, spec, None).unwrap();
    let design = super::build_design(table, spec, &rows, spec.fixed_effects);
    let dv = table.column(&spec.dv).unwrap();
    let y: Vec<f64> = rows.iter().map(|&i| dv[i]).collect();
    let p = design.cols();
    let chol = cholesky(&design.weighted_gram(&vec![1.0; rows.len()]), p).unwrap();
    chol.solve(&design.transpose_times(&y))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn table(x: Vec<f64>, y: Vec<f64>, fields: Vec<&str>, years: Vec<i32>) -> AnalysisTable {
        let n = x.len();
        let mut cols = BTreeMap::new();
        cols.insert("x".to_string(), x);
        cols.insert("y".to_string(), y);
        AnalysisTable::from_columns(
            (0..n).map(|i| format!("a{i}")).collect(),
            fields.into_iter().map(str::to_string).collect(),
            years,
            cols,
        )
        .unwrap()
    }

    #[test]
    fn exact_linear_fit() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let t = table(x, y, vec!["f"; 10], vec![2000; 10]);
        let r = ols(&t, &ModelSpec::new(ModelKind::Ols, "y", &["x"], FixedEffects::None), None).unwrap();
        assert!((r.coefficient("x", None).unwrap().estimate - 2.0).abs() < 1e-12);
        assert!((r.coefficient(INTERCEPT, None).unwrap().estimate - 1.0).abs() < 1e-12);
        assert!((r.fit.r2.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absorbed_matches_dummies_with_singleton_group() {
        let x = vec![1.0, 2.0, 4.0, 3.0, 5.0, 7.0, 2.5, 9.0];
        let y = vec![2.0, 3.5, 6.0, 9.0, 13.0, 15.5, 1.0, 30.0];
        let fields = vec!["a", "a", "a", "b", "b", "b", "c", "b"];
        let years = vec![1, 2, 1, 2, 1, 2, 1, 1];
        let t = table(x, y, fields, years);
        for fe in [FixedEffects::Field, FixedEffects::FieldYear] {
            let spec = ModelSpec::new(ModelKind::Ols, "y", &["x"], fe);
            let r = ols(&t, &spec, None).unwrap();
            let dummies = dummy_fit(&t, &spec);
            assert!((r.coefficient("x", None).unwrap().estimate - dummies[1]).abs() < 1e-9, "{fe}");
        }
    }

    #[test]
    fn collinear_columns_are_named() {
        let x: Vec<f64> = (0..6).map(f64::from).collect();
        let mut t = table(x.clone(), vec![1.0, 0.0, 2.0, 5.0, 3.0, 1.0], vec!["f"; 6], vec![1; 6]);
        t.set_column("z", x.iter().map(|v| 3.0 * v).collect()).unwrap();
        let err = ols(&t, &ModelSpec::new(ModelKind::Ols, "y", &["x", "z"], FixedEffects::Field), None).unwrap_err();
        assert!(matches!(err, InferenceError::Collinear(ref c) if c == &["z".to_string()]), "{err}");
    }

    #[test]
    fn two_factor_df_counts_components() {
        let f = |levels: usize, codes: Vec<u32>| (String::new(), vec![String::new(); levels], codes);
        // one connected design
        assert_eq!(absorbed_df(&[f(2, vec![0, 0, 1]), f(2, vec![0, 1, 1])]), 3);
        // two disconnected blocks
        assert_eq!(absorbed_df(&[f(2, vec![0, 1]), f(2, vec![0, 1])]), 2);
    }
}
