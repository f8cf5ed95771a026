#![allow(dead_code)]

use std::collections::BTreeMap;

use atypicality::corpus::{Article, Corpus, ReferenceSlot};
use atypicality::covariates::AnalysisTable;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn article(id: usize, year: i32, refs: Vec<(String, i32)>) -> Article {
    Article {
        id: format!("A{id:05}"),
        year,
        journal: "V".into(),
        field: format!("F{}", id % 3),
        countries: vec!["US".into()],
        n_authors: 1,
        refs: refs
            .into_iter()
            .map(|(journal, year)| ReferenceSlot { journal, year })
            .collect(),
        citations: None,
    }
}

/// Random corpus over `journals` journals and a few citing and cited years.
pub fn random_corpus(seed: u64, articles: usize, journals: usize, max_refs: usize) -> Corpus {
    let mut r = rng(seed);
    let list = (0..articles)
        .map(|i| {
            let year = 2000 + r.random_range(0..3);
            let k = r.random_range(0..=max_refs);
            let refs = (0..k)
                .map(|_| (format!("J{}", r.random_range(0..journals)), 1995 + r.random_range(0..3)))
                .collect();
            article(i, year, refs)
        })
        .collect();
    Corpus::from_articles(list).unwrap()
}

/// A corpus whose every (citing year, cited year) stratum has at most
/// `max_stratum` slots.
pub fn micro_corpus(seed: u64, max_stratum: usize) -> Corpus {
    let mut r = rng(seed);
    let mut used: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    let mut list = Vec::new();
    let n_articles = r.random_range(3..=6);
    for i in 0..n_articles {
        let year = 2010 + r.random_range(0..2);
        let mut refs = Vec::new();
        for _ in 0..r.random_range(2..=4) {
            let cited = 2000 + r.random_range(0..3);
            let slot = used.entry((year, cited)).or_default();
            if *slot >= max_stratum {
                continue;
            }
            *slot += 1;
            refs.push((format!("J{}", r.random_range(0..4)), cited));
        }
        list.push(article(i, year, refs));
    }
    Corpus::from_articles(list).unwrap()
}

pub fn table(fields: Vec<String>, years: Vec<i32>, columns: &[(&str, Vec<f64>)]) -> AnalysisTable {
    let n = fields.len();
    AnalysisTable::from_columns(
        (0..n).map(|i| format!("r{i}")).collect(),
        fields,
        years,
        columns.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    )
    .unwrap()
}

pub fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn normal(r: &mut impl Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Coefficients and standard errors of the dummy-encoded design, through
/// the pseudo-inverse so that disconnected two-way designs still work.
pub fn dummy_ols(y: &[f64], columns: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = y.len();
    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let svd = xtx.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * max_sv).count();
    let inv = svd.pseudo_inverse(1e-10 * max_sv).unwrap();
    let beta = &inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let sigma2 = resid.norm_squared() / (n - rank) as f64;
    let se = (0..p).map(|j| (sigma2 * inv[(j, j)]).sqrt()).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    (beta.iter().copied().collect(), se, 1.0 - resid.norm_squared() / tss)
}

pub fn indicators(labels: &[String]) -> Vec<Vec<f64>> {
    let mut levels: Vec<&String> = labels.iter().collect();
    levels.sort();
    levels.dedup();
    levels[1..]
        .iter()
        .map(|l| labels.iter().map(|v| f64::from(u8::from(v == *l))).collect())
        .collect()
}

pub fn binary_toy(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let x1: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let x2: Vec<f64> = (0..n).map(|_| r.random_range(0..4) as f64).collect();
    let y = (0..n)
        .map(|i| f64::from(u8::from(r.random_bool(logistic(0.3 + 0.8 * x1[i] - 0.5 * x2[i])))))
        .collect();
    (y, x1, x2)
}

pub fn loglik(theta: [f64; 3], y: &[f64], x1: &[f64], x2: &[f64]) -> f64 {
    (0..y.len())
        .map(|i| {
            let eta = theta[0] + theta[1] * x1[i] + theta[2] * x2[i];
            let p = logistic(eta);
            if y[i] == 1.0 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Coarse-to-fine grid search over the three logit parameters.
pub fn grid_mle(y: &[f64], x1: &[f64], x2: &[f64]) -> [f64; 3] {
    let mut best = [0.0; 3];
    let mut step = 0.5;
    while step > 1e-5 {
        loop {
            let center = best;
            let mut best_ll = loglik(best, y, x1, x2);
            for a in -4..=4 {
                for b in -4..=4 {
                    for c in -4..=4 {
                        let cand = [
                            center[0] + a as f64 * step,
                            center[1] + b as f64 * step,
                            center[2] + c as f64 * step,
                        ];
                        let ll = loglik(cand, y, x1, x2);
                        if ll > best_ll {
                            best_ll = ll;
                            best = cand;
                        }
                    }
                }
            }
            if best == center {
                break;
            }
        }
        step /= 4.0;
    }
    best
}
