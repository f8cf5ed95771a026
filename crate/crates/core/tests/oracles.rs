mod common;

use std::collections::HashMap;

use atypicality::inference::{
    describe, fit, logit, mnlogit, ols, ols_fit, FixedEffects, ModelKind, ModelSpec, RegressionResult, INTERCEPT,
};
use atypicality::pairs::{count_pairs, PairKey};
use atypicality::scores::{commonality_scores, k50_scores, K50Normalization};
use proptest::prelude::*;
use rand::Rng;

use common::{binary_toy, dummy_ols, grid_mle, indicators, normal, random_corpus, rng, table};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn pair_counts_match_group_by(seed in 0u64..1_000_000, articles in 1usize..40, journals in 1usize..8) {
        let corpus = random_corpus(seed, articles, journals, 7);
        let counts = count_pairs(&corpus);
        let mut naive: HashMap<(String, String), u64> = HashMap::new();
        for a in corpus.articles() {
            for i in 0..a.refs.len() {
                for j in i + 1..a.refs.len() {
                    let (x, y) = (a.refs[i].journal.clone(), a.refs[j].journal.clone());
                    let key = if x <= y { (x, y) } else { (y, x) };
                    *naive.entry(key).or_default() += 1;
                }
            }
        }
        let names = corpus.journals();
        let got: HashMap<(String, String), u64> = counts
            .iter()
            .map(|(k, n)| {
                let (x, y) = (names.name(k.a).to_string(), names.name(k.b).to_string());
                (if x <= y { (x, y) } else { (y, x) }, n)
            })
            .collect();
        prop_assert_eq!(got, naive);
        let mass: u64 = corpus.articles().iter().map(|a| (a.refs.len() * a.refs.len().saturating_sub(1) / 2) as u64).sum();
        prop_assert_eq!(counts.total_mass(), mass);
    }

    #[test]
    fn k50_matches_dense_matrix(seed in 0u64..1_000_000) {
        let corpus = random_corpus(seed, 30, 6, 8);
        let counts = count_pairs(&corpus);
        let n = corpus.journals().len();
        let mut m = vec![vec![0f64; n]; n];
        for (k, c) in counts.iter() {
            m[k.a as usize][k.b as usize] += c as f64;
            m[k.b as usize][k.a as usize] += c as f64;
        }
        let rows: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
        let total: f64 = rows.iter().sum();
        let k50 = k50_scores(&counts, K50Normalization::GeometricMarginals);
        let k50_e = k50_scores(&counts, K50Normalization::Expected);
        let common = commonality_scores(&counts);
        for (i, (k, c)) in counts.iter().enumerate() {
            let (a, b) = (k.a as usize, k.b as usize);
            let e = rows[a] * rows[b] / total;
            prop_assert!((k50[i] - (c as f64 - e) / (rows[a] * rows[b]).sqrt()).abs() < 1e-12);
            prop_assert!((k50_e[i] - (c as f64 - e) / e.sqrt()).abs() < 1e-12);
            prop_assert!((common[i] - c as f64 / e).abs() < 1e-9 * common[i].abs().max(1.0));
        }
        prop_assert_eq!(counts.get(PairKey::new(0, 0)) > 0, m[0][0] > 0.0);
    }
}

#[test]
fn absorbed_ols_equals_dummy_encoding_on_random_designs() {
    for case in 0..100u64 {
        let mut r = rng(1000 + case);
        let n = r.random_range(25..70);
        let n_fields = r.random_range(2..8);
        let two_way = case % 2 == 1;
        let fields: Vec<String> = (0..n)
            .map(|i| {
                // Field 0 keeps a single row in some designs.
                if i > 0 && r.random_bool(0.9) {
                    format!("f{}", r.random_range(1..n_fields))
                } else {
                    "f0".into()
                }
            })
            .collect();
        let years: Vec<i32> = (0..n).map(|_| 2000 + r.random_range(0..3)).collect();
        let x1: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let x2: Vec<f64> = (0..n).map(|_| r.random_range(0..5) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * x1[i] - 0.5 * x2[i] + (fields[i].len() as f64) + normal(&mut r))
            .collect();
        let t = table(fields.clone(), years.clone(), &[("y", y.clone()), ("x1", x1.clone()), ("x2", x2.clone())]);
        let fe = if two_way { FixedEffects::FieldYear } else { FixedEffects::Field };
        let result = ols(&t, &ModelSpec::new(ModelKind::Ols, "y", &["x1", "x2"], fe), None).unwrap();
        let mut columns = vec![vec![1.0; n], x1, x2];
        columns.extend(indicators(&fields));
        if two_way {
            let labels: Vec<String> = years.iter().map(|y| y.to_string()).collect();
            columns.extend(indicators(&labels));
        }
        let (beta, se, r2) = dummy_ols(&y, &columns);
        for (j, name) in ["x1", "x2"].iter().enumerate() {
            let c = result.coefficient(name, None).unwrap();
            assert!((c.estimate - beta[j + 1]).abs() < 1e-6, "case {case} {name}: {} vs {}", c.estimate, beta[j + 1]);
            assert!((c.std_error - se[j + 1]).abs() < 1e-6, "case {case} {name} se");
        }
        assert!((result.fit.r2.unwrap() - r2).abs() < 1e-8, "case {case} r2");
    }
}

#[test]
fn ols_residuals_are_orthogonal_to_regressors() {
    let mut r = rng(5);
    let n = 400;
    let fields: Vec<String> = (0..n).map(|_| format!("f{}", r.random_range(0..12))).collect();
    let years: Vec<i32> = (0..n).map(|_| 2001 + r.random_range(0..4)).collect();
    let x: Vec<f64> = (0..n).map(|_| normal(&mut r) * 10.0).collect();
    let z: Vec<f64> = (0..n).map(|_| r.random_range(1..9) as f64).collect();
    let y: Vec<f64> = (0..n).map(|i| 3.0 * x[i] + z[i] + normal(&mut r)).collect();
    let t = table(fields, years, &[("y", y), ("x", x), ("z", z)]);
    for fe in [FixedEffects::None, FixedEffects::Field, FixedEffects::FieldYear] {
        let f = ols_fit(&t, &ModelSpec::new(ModelKind::Ols, "y", &["x", "z"], fe), None).unwrap();
        let e_norm = f.residuals.iter().map(|v| v * v).sum::<f64>().sqrt();
        for col in &f.regressors {
            let dot: f64 = col.iter().zip(&f.residuals).map(|(a, b)| a * b).sum();
            let x_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(dot.abs() < 1e-8 * x_norm * e_norm, "{fe}: {dot}");
        }
    }
}

#[test]
fn logit_matches_grid_search() {
    for seed in 0..3 {
        let (y, x1, x2) = binary_toy(seed, 300);
        let years = vec![2000; y.len()];
        let t = table(vec!["f".into(); y.len()], years, &[("y", y.clone()), ("x1", x1.clone()), ("x2", x2.clone())]);
        let r = logit(&t, &ModelSpec::new(ModelKind::Logit, "y", &["x1", "x2"], FixedEffects::None), None).unwrap();
        assert!(r.converged);
        let grid = grid_mle(&y, &x1, &x2);
        for (name, g) in [(INTERCEPT, grid[0]), ("x1", grid[1]), ("x2", grid[2])] {
            let est = r.coefficient(name, None).unwrap().estimate;
            assert!((est - g).abs() < 1e-3, "seed {seed} {name}: {est} vs {g}");
        }
        assert!(r.fit.max_score.unwrap() < 1e-6);
        assert!(r.fit.wald.unwrap() >= 0.0);
    }
}

#[test]
fn two_category_mnlogit_equals_logit() {
    let (y, x1, x2) = binary_toy(9, 500);
    let mut r = rng(10);
    let fields: Vec<String> = (0..y.len()).map(|_| format!("f{}", r.random_range(0..4))).collect();
    let category: Vec<f64> = y.iter().map(|&v| if v == 1.0 { 1.0 } else { 4.0 }).collect();
    let t = table(
        fields,
        vec![2000; y.len()],
        &[("y", y), ("category", category), ("x1", x1), ("x2", x2)],
    );
    for fe in [FixedEffects::None, FixedEffects::Field] {
        let b = logit(&t, &ModelSpec::new(ModelKind::Logit, "y", &["x1", "x2"], fe), None).unwrap();
        let m = mnlogit(&t, &ModelSpec::new(ModelKind::Mnlogit, "category", &["x1", "x2"], fe), None).unwrap();
        for name in [INTERCEPT, "x1", "x2"] {
            let (cb, cm) = (b.coefficient(name, None).unwrap(), m.coefficient(name, Some(1)).unwrap());
            assert!((cb.estimate - cm.estimate).abs() < 1e-6, "{fe} {name}");
            assert!((cb.std_error - cm.std_error).abs() < 1e-6, "{fe} {name} se");
        }
        assert!((b.fit.log_likelihood.unwrap() - m.fit.log_likelihood.unwrap()).abs() < 1e-6);
        assert!((b.fit.wald.unwrap() - m.fit.wald.unwrap()).abs() < 1e-4);
    }
}

#[test]
fn covariate_free_mnlogit_reproduces_share_log_odds() {
    let counts = [(1.0, 70usize), (2.0, 130), (3.0, 260), (4.0, 180)];
    let category: Vec<f64> = counts.iter().flat_map(|&(c, n)| std::iter::repeat_n(c, n)).collect();
    let n = category.len();
    let t = table(vec!["f".into(); n], vec![2000; n], &[("category", category)]);
    let m = mnlogit(&t, &ModelSpec::new(ModelKind::Mnlogit, "category", &[], FixedEffects::None), None).unwrap();
    for &(c, k) in &counts[..3] {
        let expected = (k as f64 / 180.0).ln();
        let got = m.coefficient(INTERCEPT, Some(c as u8)).unwrap().estimate;
        assert!((got - expected).abs() < 1e-8, "category {c}");
    }
}

fn planted_multinomial(seed: u64, n: usize) -> atypicality::covariates::AnalysisTable {
    let mut r = rng(seed);
    let mut x = Vec::new();
    let mut noise = Vec::new();
    let mut category = Vec::new();
    let mut fields = Vec::new();
    for _ in 0..n {
        let xi = r.random_range(1..6) as f64;
        let eta = [-0.5 - 0.2 * xi, 0.2 - 0.3 * xi, 0.1 + 0.25 * xi];
        let denom = 1.0 + eta.iter().map(|e| e.exp()).sum::<f64>();
        let u: f64 = r.random();
        let mut acc = 0.0;
        let mut cat = 4.0;
        for (k, e) in eta.iter().enumerate() {
            acc += e.exp() / denom;
            if u < acc {
                cat = (k + 1) as f64;
                break;
            }
        }
        x.push(xi);
        noise.push(normal(&mut r));
        category.push(cat);
        fields.push(format!("f{}", r.random_range(0..5)));
    }
    table(fields, vec![2000; n], &[("category", category), ("x", x), ("noise", noise)])
}

fn score_is_small(r: &RegressionResult) {
    assert!(r.converged, "{:?}", r.note);
    assert!(r.fit.max_score.unwrap() < 1e-6, "max score {:?}", r.fit.max_score);
}

#[test]
fn mnlogit_recovers_planted_signs_and_reaches_the_optimum() {
    let t = planted_multinomial(3, 6000);
    let m = mnlogit(&t, &ModelSpec::new(ModelKind::Mnlogit, "category", &["x"], FixedEffects::Field), None).unwrap();
    score_is_small(&m);
    let c: Vec<f64> = (1..=3).map(|k| m.coefficient("x", Some(k)).unwrap().estimate).collect();
    assert!(c[0] < 0.0 && c[1] < 0.0 && c[2] > 0.0, "{c:?}");
    assert!(c[2] > c[0].max(c[1]));
}

#[test]
fn aic_improves_with_a_predictive_covariate() {
    let t = planted_multinomial(4, 4000);
    let base = mnlogit(&t, &ModelSpec::new(ModelKind::Mnlogit, "category", &["noise"], FixedEffects::None), None).unwrap();
    let full = fit(&t, &ModelSpec::new(ModelKind::Mnlogit, "category", &["noise", "x"], FixedEffects::None), None).unwrap();
    score_is_small(&base);
    score_is_small(&full);
    assert!(full.fit.aic.unwrap() <= base.fit.aic.unwrap());
    assert!(base.fit.wald.unwrap() >= 0.0 && full.fit.wald.unwrap() >= 0.0);
}

#[test]
fn listwise_deletion_counts_complete_rows() {
    let mut r = rng(8);
    let n = 300;
    let mut x: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let mut z: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let y: Vec<f64> = (0..n).map(|i| x[i] + z[i] + normal(&mut r)).collect();
    for i in (0..n).step_by(7) {
        x[i] = f64::NAN;
    }
    for i in (0..n).step_by(11) {
        z[i] = f64::NAN;
    }
    let complete = (0..n).filter(|&i| x[i].is_finite() && z[i].is_finite()).count();
    let t = table(vec!["f".into(); n], vec![2000; n], &[("y", y), ("x", x), ("z", z)]);
    let res = ols(&t, &ModelSpec::new(ModelKind::Ols, "y", &["x", "z"], FixedEffects::None), None).unwrap();
    assert_eq!(res.n, complete);
    let only_x = ols(&t, &ModelSpec::new(ModelKind::Ols, "y", &["x"], FixedEffects::None), None).unwrap();
    assert_eq!(only_x.n, (0..n).filter(|i| i % 7 != 0).count());
}

#[test]
fn correlations_match_the_covariance_formula() {
    let mut r = rng(12);
    let n = 100;
    let cols: Vec<(&str, Vec<f64>)> = ["a", "b", "c"]
        .iter()
        .map(|name| (*name, (0..n).map(|_| normal(&mut r) * 3.0 + 1.0).collect()))
        .collect();
    let t = table(vec!["f".into(); n], vec![2000; n], &cols);
    let d = describe(&t, &["a", "b", "c"]).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cov = |u: &[f64], v: &[f64]| {
        let (mu, mv) = (mean(u), mean(v));
        u.iter().zip(v).map(|(a, b)| (a - mu) * (b - mv)).sum::<f64>() / (u.len() - 1) as f64
    };
    for (i, (na, a)) in cols.iter().enumerate() {
        assert!((d.variables[i].sd - cov(a, a).sqrt()).abs() < 1e-12);
        for (nb, b) in &cols[..i] {
            let expected = cov(a, b) / (cov(a, a) * cov(b, b)).sqrt();
            let got = d.correlation(na, nb).unwrap().r.unwrap();
            assert!((got - expected).abs() < 1e-12, "{na},{nb}");
        }
    }
}
