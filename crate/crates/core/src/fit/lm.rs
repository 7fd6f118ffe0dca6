//! Levenberg-Marquardt least squares with Marquardt diagonal scaling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative RSS change and relative step size treated as stalled.
    pub tolerance: f64,
    /// Consecutive stalled iterations required to stop.
    pub patience: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-10,
            patience: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub jacobian: DMatrix<f64>,
    pub n_residuals: usize,
}

impl LmOutcome {
    /// `(JᵀJ)⁻¹`, the covariance per unit residual variance. Infinite entries when singular.
    pub fn unscaled_covariance(&self) -> DMatrix<f64> {
        let p = self.params.len();
        let jtj = self.jacobian.transpose() * &self.jacobian;
        // Scale to unit diagonal before inverting to keep the condition number honest.
        let d: Vec<f64> = (0..p).map(|i| jtj[(i, i)].sqrt()).collect();
        if d.iter().any(|v| !(*v > 0.0)) {
            return DMatrix::from_element(p, p, f64::INFINITY);
        }
        let scaled = DMatrix::from_fn(p, p, |i, j| jtj[(i, j)] / (d[i] * d[j]));
        match scaled.clone().cholesky() {
            Some(c) if rcond(&scaled) > 1e-14 => {
                let inv = c.inverse();
                DMatrix::from_fn(p, p, |i, j| inv[(i, j)] / (d[i] * d[j]))
            }
            _ => DMatrix::from_element(p, p, f64::INFINITY),
        }
    }

    /// Linearized covariance scaled by the residual variance `RSS/(m - p)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let dof = self.n_residuals as f64 - self.params.len() as f64;
        let s2 = if dof > 0.0 { self.rss / dof } else { f64::INFINITY };
        self.unscaled_covariance().map(|v| v * s2)
    }
}

fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Minimizes `Σ r_i(x)²`. `model` returns residuals and their Jacobian; `feasible`
/// rejects trial points outside the parameter domain.
pub fn minimize<M, F>(model: M, feasible: F, x0: DVector<f64>, opts: LmOptions) -> Result<LmOutcome>
where
    M: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
    F: Fn(&DVector<f64>) -> bool,
{
    if !feasible(&x0) {
        return Err(Error::DegenerateInit("initial parameters outside the feasible domain".into()));
    }
    let mut x = x0;
    let (mut r, mut j) = model(&x);
    let mut rss = r.norm_squared();
    if !rss.is_finite() {
        return Err(Error::DegenerateInit("non-finite residuals at the initial point".into()));
    }
    let mut lambda = 1e-3;
    let mut stalled = 0;
    for it in 1..=opts.max_iterations {
        if rss == 0.0 {
            return Ok(LmOutcome { n_residuals: r.len(), params: x, rss, iterations: it - 1, jacobian: j });
        }
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut a = jtj.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
        }
        let step = a.lu().solve(&(-&g));
        let mut small_step = false;
        let mut small_change = false;
        match step {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => {
                small_step = dx.norm() <= opts.tolerance * (x.norm() + opts.tolerance);
                let trial = &x + &dx;
                if feasible(&trial) {
                    let (rt, jt) = model(&trial);
                    let rss_t = rt.norm_squared();
                    if rss_t.is_finite() && rss_t <= rss {
                        small_change = (rss - rss_t) <= opts.tolerance * rss;
                        x = trial;
                        r = rt;
                        j = jt;
                        rss = rss_t;
                        lambda = (lambda / 3.0).max(1e-15);
                    } else {
                        lambda *= 4.0;
                    }
                } else {
                    lambda *= 4.0;
                }
            }
            _ => lambda *= 4.0,
        }
        if small_step || small_change {
            stalled += 1;
        } else {
            stalled = 0;
        }
        if stalled >= opts.patience || lambda > 1e20 {
            return Ok(LmOutcome { n_residuals: r.len(), params: x, rss, iterations: it, jacobian: j });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        rss,
        best: x.iter().copied().collect(),
    })
}
