//! Small dense symmetric solvers. Matrices are row-major `p x p` slices.

/// Relative pivot tolerance: a column is deficient when its residual
/// diagonal after elimination falls below this fraction of its original one.
pub const PIVOT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Vec<f64>,
    p: usize,
}

/// Factors a symmetric positive definite matrix. On failure returns every
/// column that is (numerically) a combination of the preceding ones.
pub fn cholesky(a: &[f64], p: usize) -> Result<Cholesky, Vec<usize>> {
    assert_eq!(a.len(), p * p);
    let mut l = vec![0.0; p * p];
    let mut deficient = Vec::new();
    for j in 0..p {
        let original = a[j * p + j];
        let mut d = original;
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(original > 0.0 && d > PIVOT_TOLERANCE * original && d.is_finite()) {
            deficient.push(j);
            continue;
        }
        let ljj = d.sqrt();
        l[j * p + j] = ljj;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / ljj;
        }
    }
    if deficient.is_empty() {
        Ok(Cholesky { l, p })
    } else {
        Err(deficient)
    }
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.p;
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..p {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * p + k] * y[k];
            }
            y[i] = s / l[i * p + i];
        }
        for i in (0..p).rev() {
            let mut s = y[i];
            for k in (i + 1)..p {
                s -= l[k * p + i] * y[k];
            }
            y[i] = s / l[i * p + i];
        }
        y
    }

    pub fn inverse(&self) -> Vec<f64> {
        let p = self.p;
        let mut inv = vec![0.0; p * p];
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..p {
                inv[i * p + j] = col[i];
            }
        }
        // symmetrize rounding noise
        for i in 0..p {
            for j in (i + 1)..p {
                let m = 0.5 * (inv[i * p + j] + inv[j * p + i]);
                inv[i * p + j] = m;
                inv[j * p + i] = m;
            }
        }
        inv
    }
}

/// Quadratic form `b' A^{-1} b` for the leading principal block `idx` of `cov`,
/// i.e. the Wald statistic of the coefficients `idx` with covariance `cov`.
pub fn wald_statistic(beta: &[f64], cov: &[f64], p: usize, idx: &[usize]) -> Option<f64> {
    let m = idx.len();
    if m == 0 {
        return None;
    }
    let mut block = vec![0.0; m * m];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            block[a * m + b] = cov[i * p + j];
        }
    }
    let chol = cholesky(&block, m).ok()?;
    let sub: Vec<f64> = idx.iter().map(|&i| beta[i]).collect();
    let x = chol.solve(&sub);
    Some(sub.iter().zip(&x).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_inverts() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.5, 0.6, 1.5, 3.0];
        let c = cholesky(&a, 3).unwrap();
        let x = c.solve(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let row: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((row - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        let inv = c.inverse();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reports_dependent_columns() {
        // column 2 = column 0 + column 1
        let x = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 2.0], [2.0, 1.0, 3.0]];
        let mut a = [0.0; 9];
        for row in &x {
            for i in 0..3 {
                for j in 0..3 {
                    a[i * 3 + j] += row[i] * row[j];
                }
            }
        }
        assert_eq!(cholesky(&a, 3).unwrap_err(), [2]);
        let mut zero = a;
        zero[0] = 0.0;
        assert!(cholesky(&zero, 3).unwrap_err().contains(&0));
    }
}
