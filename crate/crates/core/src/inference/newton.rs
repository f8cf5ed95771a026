//! Damped Newton maximization shared by the logit estimators.

use super::linalg::{cholesky, Cholesky};

pub const MAX_ITERATIONS: usize = 100;
/// Converged when every score entry is below this in absolute value.
pub const CONVERGENCE_SCORE: f64 = 1e-8;
/// Or when a full step changes the log-likelihood by less than this fraction.
pub const CONVERGENCE_LL: f64 = 1e-10;
/// A coefficient times the standard deviation of its regressor beyond this
/// signals separation.
pub const MAGNITUDE_GUARD: f64 = 20.0;
const MAX_HALVINGS: usize = 40;
/// Log-likelihood decreases below this fraction are rounding noise.
const ROUNDING: f64 = 1e-12;

pub(crate) struct Evaluation {
    pub log_likelihood: f64,
    pub score: Vec<f64>,
    /// Negative Hessian, row-major.
    pub information: Vec<f64>,
}

pub(crate) trait Likelihood {
    fn dim(&self) -> usize;
    fn log_likelihood(&self, theta: &[f64]) -> f64;
    fn evaluate(&self, theta: &[f64]) -> Evaluation;
    /// Describes why the fit is diverging, if it is.
    fn separation(&self, theta: &[f64]) -> Option<String>;
}

pub(crate) struct Outcome {
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub max_score: f64,
    pub iterations: usize,
    /// `Ok` holds the factored information matrix at the optimum.
    pub status: Result<Cholesky, String>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn maximize<L: Likelihood>(model: &L) -> Outcome {
    let p = model.dim();
    let mut theta = vec![0.0; p];
    let mut eval = model.evaluate(&theta);
    let finish = |theta: Vec<f64>, eval: &Evaluation, iterations: usize, status: Result<(), String>| {
        let status = status.and_then(|_| {
            cholesky(&eval.information, p).map_err(|_| "information matrix is singular at the optimum".to_string())
        });
        Outcome {
            theta,
            log_likelihood: eval.log_likelihood,
            max_score: max_abs(&eval.score),
            iterations,
            status,
        }
    };
    for iteration in 1..=MAX_ITERATIONS {
        if max_abs(&eval.score) < CONVERGENCE_SCORE {
            return finish(theta, &eval, iteration - 1, Ok(()));
        }
        let Ok(chol) = cholesky(&eval.information, p) else {
            return finish(theta, &eval, iteration, Err("information matrix became singular".into()));
        };
        let step = chol.solve(&eval.score);
        let previous = eval.log_likelihood;
        let mut t = 1.0;
        let mut candidate;
        let mut halvings = 0;
        loop {
            candidate = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect::<Vec<f64>>();
            let ll = model.log_likelihood(&candidate);
            if ll.is_finite() && ll >= previous - ROUNDING * previous.abs().max(1.0) {
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                // no ascent direction left: the current point is the optimum
                // to working precision
                return finish(theta, &eval, iteration, Ok(()));
            }
            t *= 0.5;
        }
        theta = candidate;
        eval = model.evaluate(&theta);
        if let Some(reason) = model.separation(&theta) {
            return finish(theta, &eval, iteration, Err(reason));
        }
        let change = (eval.log_likelihood - previous).abs();
        if halvings == 0 && change <= CONVERGENCE_LL * previous.abs() {
            return finish(theta, &eval, iteration, Ok(()));
        }
    }
    if max_abs(&eval.score) < CONVERGENCE_SCORE {
        return finish(theta, &eval, MAX_ITERATIONS, Ok(()));
    }
    finish(theta, &eval, MAX_ITERATIONS, Err(format!("no convergence after {MAX_ITERATIONS} iterations")))
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
