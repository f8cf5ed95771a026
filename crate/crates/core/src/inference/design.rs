//! Design matrices with dense columns plus one-hot factor blocks.
//!
//! Factor columns are never materialized; products with them are
//! accumulated from the level codes. Every reduction runs over fixed-size
//! row chunks whose partial results are summed in chunk order, so results
//! do not depend on the number of worker threads.

use rayon::prelude::*;

/// Rows per reduction chunk.
const CHUNK_ROWS: usize = 8192;

/// One categorical factor entered as indicator columns, first level dropped.
#[derive(Debug, Clone)]
pub struct FactorBlock {
    pub name: String,
    /// Names of the non-baseline levels, one column each.
    pub levels: Vec<String>,
    /// Per row: column within the block, or `None` for the baseline level.
    pub codes: Vec<Option<u32>>,
}

#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    dense_names: Vec<String>,
    /// Row-major `n x d`.
    dense: Vec<f64>,
    factors: Vec<FactorBlock>,
    offsets: Vec<usize>,
}

pub(crate) fn chunked<T, F, R>(n: usize, zero: T, map: F, reduce: R) -> T
where
    T: Send + Clone,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
    R: Fn(&mut T, T),
{
    let chunks: Vec<T> = (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| map(c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(n)))
        .collect();
    let mut acc = zero;
    for part in chunks {
        reduce(&mut acc, part);
    }
    acc
}

impl Design {
    /// `columns` are dense regressors (each of length `n`).
    pub fn new(dense_names: Vec<String>, columns: Vec<Vec<f64>>, factors: Vec<FactorBlock>) -> Self {
        let n = columns.first().map(Vec::len).or_else(|| factors.first().map(|f| f.codes.len())).unwrap_or(0);
        let d = columns.len();
        let mut dense = vec![0.0; n * d];
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n);
            for (i, &v) in col.iter().enumerate() {
                dense[i * d + j] = v;
            }
        }
        let mut offsets = Vec::with_capacity(factors.len());
        let mut next = d;
        for f in &factors {
            assert_eq!(f.codes.len(), n);
            offsets.push(next);
            next += f.levels.len();
        }
        Self {
            n,
            dense_names,
            dense,
            factors,
            offsets,
        }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn dense_len(&self) -> usize {
        self.dense_names.len()
    }

    /// Total parameter count.
    pub fn cols(&self) -> usize {
        self.dense_len() + self.factors.iter().map(|f| f.levels.len()).sum::<usize>()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = self.dense_names.clone();
        for f in &self.factors {
            names.extend(f.levels.iter().map(|l| format!("{}[{}]", f.name, l)));
        }
        names
    }

    pub fn is_factor_column(&self, j: usize) -> bool {
        j >= self.dense_len()
    }

    fn row(&self, i: usize) -> &[f64] {
        let d = self.dense_len();
        &self.dense[i * d..(i + 1) * d]
    }

    fn active_factor_columns(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.factors
            .iter()
            .zip(&self.offsets)
            .filter_map(move |(f, &off)| f.codes[i].map(|c| off + c as usize))
    }

    /// `X beta` for one coefficient vector.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.cols());
        (0..self.n)
            .into_par_iter()
            .with_min_len(1024)
            .map(|i| {
                let dense: f64 = self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
                dense + self.active_factor_columns(i).map(|j| beta[j]).sum::<f64>()
            })
            .collect()
    }

    /// `X' v`.
    pub fn transpose_times(&self, v: &[f64]) -> Vec<f64> {
        let p = self.cols();
        chunked(
            self.n,
            vec![0.0; p],
            |range| {
                let mut acc = vec![0.0; p];
                for i in range {
                    let w = v[i];
                    for (a, x) in acc.iter_mut().zip(self.row(i)) {
                        *a += x * w;
                    }
                    for j in self.active_factor_columns(i) {
                        acc[j] += w;
                    }
                }
                acc
            },
            |acc, part| acc.iter_mut().zip(part).for_each(|(a, b)| *a += b),
        )
    }

    /// `X' diag(w) X` as a full symmetric matrix.
    pub fn weighted_gram(&self, w: &[f64]) -> Vec<f64> {
        let p = self.cols();
        let d = self.dense_len();
        let mut g = chunked(
            self.n,
            vec![0.0; p * p],
            |range| {
                let mut acc = vec![0.0; p * p];
                let mut active = Vec::with_capacity(self.factors.len());
                for i in range {
                    let wi = w[i];
                    if wi == 0.0 {
                        continue;
                    }
                    let x = self.row(i);
                    for a in 0..d {
                        let xa = x[a] * wi;
                        if xa == 0.0 {
                            continue;
                        }
                        for b in a..d {
                            acc[a * p + b] += xa * x[b];
                        }
                    }
                    active.clear();
                    active.extend(self.active_factor_columns(i));
                    for &j in &active {
                        for a in 0..d {
                            acc[a * p + j] += x[a] * wi;
                        }
                    }
                    for (k, &j) in active.iter().enumerate() {
                        for &l in &active[k..] {
                            let (lo, hi) = if j <= l { (j, l) } else { (l, j) };
                            acc[lo * p + hi] += wi;
                        }
                    }
                }
                acc
            },
            |acc, part| acc.iter_mut().zip(part).for_each(|(a, b)| *a += b),
        );
        for a in 0..p {
            for b in (a + 1)..p {
                g[b * p + a] = g[a * p + b];
            }
        }
        g
    }

    /// Standard deviation of each dense column, 1 for constant and
    /// indicator columns. Used to judge whether a coefficient has diverged.
    pub fn column_scales(&self) -> Vec<f64> {
        let d = self.dense_len();
        let mut scales = vec![1.0; self.cols()];
        if self.n == 0 {
            return scales;
        }
        for (j, scale) in scales.iter_mut().enumerate().take(d) {
            let mean = (0..self.n).map(|i| self.dense[i * d + j]).sum::<f64>() / self.n as f64;
            let var = (0..self.n).map(|i| (self.dense[i * d + j] - mean).powi(2)).sum::<f64>() / self.n as f64;
            if var > 0.0 {
                *scale = var.sqrt();
            }
        }
        scales
    }

    /// Rows where each factor column is active, per factor column.
    pub fn factor_rows(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out = Vec::new();
        for (f, &off) in self.factors.iter().zip(&self.offsets) {
            let mut rows = vec![Vec::new(); f.levels.len()];
            for (i, code) in f.codes.iter().enumerate() {
                if let Some(c) = code {
                    rows[*c as usize].push(i);
                }
            }
            out.extend(rows.into_iter().enumerate().map(|(c, r)| (off + c, r)));
        }
        out
    }
}
