//! Damped Gauss-Newton (Levenberg-Marquardt) minimisation.
//!
//! The solver works on any [`Objective`] that can report a cost, its gradient
//! and a positive semi-definite curvature matrix. Two adaptors cover the fits
//! in this crate:
//!
//! - [`LeastSquares`]: cost `½‖r(p)‖²`, curvature `JᵀJ`.
//! - [`PoissonLikelihood`]: cost is half the Poisson deviance of a model
//!   `μ(p)` against integer counts, curvature is the Fisher information
//!   `Σ ∂μ ∂μᵀ / μ`. Minimising it is maximum likelihood for counting data.
//!
//! Jacobians are central finite differences.

use crate::error::{Error, Result};
use crate::real::Real;

/// Cost, gradient and curvature (row-major `n × n`) at one parameter vector.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub cost: T,
    pub gradient: Vec<T>,
    pub curvature: Vec<T>,
}

pub trait Objective<T: Real> {
    fn dim(&self) -> usize;
    fn cost(&self, params: &[T]) -> Option<T>;
    fn evaluate(&self, params: &[T]) -> Option<Evaluation<T>>;
    /// Map a trial point back into the feasible set.
    fn project(&self, _params: &mut [T]) {}
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions<T> {
    pub max_iterations: usize,
    pub initial_damping: T,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub cost_tolerance: T,
    /// Stop when every relative parameter change falls below this.
    pub step_tolerance: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Self {
            max_iterations: 200,
            initial_damping: T::lit(1e-3),
            cost_tolerance: T::lit(1e-12).max(eps * T::lit(16.0)),
            step_tolerance: T::lit(1e-10).max(eps.sqrt()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport<T> {
    pub params: Vec<T>,
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
    /// Curvature at the returned parameters; its inverse is the covariance
    /// for likelihood fits (scale by the residual variance for least squares).
    pub curvature: Vec<T>,
}

impl<T: Real> LmReport<T> {
    pub fn covariance(&self) -> Option<Vec<T>> {
        invert_spd(&self.curvature, self.params.len())
    }
}

pub fn minimize<T: Real, O: Objective<T>>(
    objective: &O,
    initial: &[T],
    options: &LmOptions<T>,
) -> Result<LmReport<T>> {
    let n = objective.dim();
    if initial.len() != n {
        return Err(Error::arg(format!(
            "expected {n} initial parameters, got {}",
            initial.len()
        )));
    }
    let mut params = initial.to_vec();
    objective.project(&mut params);
    let mut current = objective.evaluate(&params).ok_or_else(|| Error::FitFailure {
        reason: "objective undefined at the initial point".into(),
        iterations: 0,
        last_cost: f64::NAN,
    })?;

    let max_damping = T::lit(1e16).min(T::max_value().sqrt());
    let mut damping = options.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        if current.gradient.iter().all(|g| g.abs() <= T::min_positive_value()) {
            converged = true;
            break;
        }
        loop {
            // Parameters already on a bound that the step pushes against are
            // held fixed and the system re-solved without them.
            let mut fixed = vec![false; n];
            let trial = loop {
                let step = match damped_step(&current, &fixed, damping) {
                    Some(step) => step,
                    None => break None,
                };
                let mut trial: Vec<T> = params.iter().zip(&step).map(|(p, s)| *p + *s).collect();
                objective.project(&mut trial);
                let mut changed = false;
                for i in 0..n {
                    if !fixed[i] && step[i] != T::zero() && trial[i] == params[i] {
                        fixed[i] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break Some(trial);
                }
            };
            let Some(trial) = trial else {
                damping *= T::lit(10.0);
                if damping > max_damping {
                    break 'outer;
                }
                continue;
            };
            let trial_cost = objective.cost(&trial);
            match trial_cost {
                Some(c) if c.is_finite() && c < current.cost => {
                    let decrease = current.cost - c;
                    let small_step = params.iter().zip(&trial).all(|(p, t)| {
                        (*t - *p).abs() <= options.step_tolerance * (p.abs() + options.step_tolerance)
                    });
                    let small_decrease =
                        decrease <= options.cost_tolerance * (current.cost.abs() + T::epsilon());
                    let evaluated = match objective.evaluate(&trial) {
                        Some(e) => e,
                        None => break 'outer,
                    };
                    params = trial;
                    current = evaluated;
                    damping = (damping / T::lit(3.0)).max(T::lit(1e-12));
                    if small_step || small_decrease {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    damping *= T::lit(4.0);
                    if damping > max_damping {
                        // No descent direction left at machine precision.
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(LmReport {
        params,
        cost: current.cost,
        iterations,
        converged,
        curvature: current.curvature,
    })
}

fn damped_step<T: Real>(current: &Evaluation<T>, fixed: &[bool], damping: T) -> Option<Vec<T>> {
    let n = fixed.len();
    let mut system = current.curvature.clone();
    let mut rhs: Vec<T> = current.gradient.iter().map(|g| -*g).collect();
    for i in 0..n {
        if fixed[i] {
            for j in 0..n {
                system[i * n + j] = T::zero();
                system[j * n + i] = T::zero();
            }
            system[i * n + i] = T::one();
            rhs[i] = T::zero();
        } else {
            let d = current.curvature[i * n + i].abs().max(T::epsilon());
            system[i * n + i] += damping * d;
        }
    }
    cholesky_solve(&system, n, &rhs)
}

/// Central-difference Jacobian of `f: Rⁿ → Rᵐ`, returned row-major `m × n`.
fn jacobian<T: Real, F>(f: &F, params: &[T], m: usize, scales: &[T]) -> Option<Vec<T>>
where
    F: Fn(&[T], &mut [T]) -> bool,
{
    let n = params.len();
    let mut jac = vec![T::zero(); m * n];
    let mut plus = vec![T::zero(); m];
    let mut minus = vec![T::zero(); m];
    let mut p = params.to_vec();
    let rel = T::epsilon().cbrt();
    for j in 0..n {
        let h = rel * params[j].abs().max(scales[j]);
        p[j] = params[j] + h;
        if !f(&p, &mut plus) {
            return None;
        }
        p[j] = params[j] - h;
        if !f(&p, &mut minus) {
            return None;
        }
        p[j] = params[j];
        let inv = T::one() / (h + h);
        for i in 0..m {
            jac[i * n + j] = (plus[i] - minus[i]) * inv;
        }
    }
    Some(jac)
}

fn clamp_into<T: Real>(params: &mut [T], lower: &[T], upper: &[T]) {
    for ((p, lo), hi) in params.iter_mut().zip(lower).zip(upper) {
        *p = p.max(*lo).min(*hi);
    }
}

/// `½‖r(p)‖²` for a residual function writing `m` residuals.
pub struct LeastSquares<T, F> {
    residuals: F,
    dim: usize,
    len: usize,
    scales: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real, F: Fn(&[T], &mut [T]) -> bool> LeastSquares<T, F> {
    pub fn new(dim: usize, len: usize, residuals: F) -> Self {
        Self {
            residuals,
            dim,
            len,
            scales: vec![T::one(); dim],
            lower: vec![T::neg_infinity(); dim],
            upper: vec![T::infinity(); dim],
        }
    }

    /// Typical parameter magnitudes, used to size finite-difference steps.
    pub fn with_scales(mut self, scales: Vec<T>) -> Self {
        self.scales = scales;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<T>, upper: Vec<T>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn residuals(&self, params: &[T]) -> Option<Vec<T>> {
        let mut r = vec![T::zero(); self.len];
        ((self.residuals)(params, &mut r) && r.iter().all(|v| v.is_finite())).then_some(r)
    }
}

impl<T: Real, F: Fn(&[T], &mut [T]) -> bool> Objective<T> for LeastSquares<T, F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cost(&self, params: &[T]) -> Option<T> {
        let r = self.residuals(params)?;
        Some(r.iter().fold(T::zero(), |acc, v| acc + *v * *v) * T::lit(0.5))
    }

    fn evaluate(&self, params: &[T]) -> Option<Evaluation<T>> {
        let (n, m) = (self.dim, self.len);
        let r = self.residuals(params)?;
        let jac = jacobian(&self.residuals, params, m, &self.scales)?;
        let mut gradient = vec![T::zero(); n];
        let mut curvature = vec![T::zero(); n * n];
        for i in 0..m {
            let row = &jac[i * n..(i + 1) * n];
            for a in 0..n {
                gradient[a] += row[a] * r[i];
                for b in a..n {
                    curvature[a * n + b] += row[a] * row[b];
                }
            }
        }
        symmetrize(&mut curvature, n);
        let cost = r.iter().fold(T::zero(), |acc, v| acc + *v * *v) * T::lit(0.5);
        Some(Evaluation {
            cost,
            gradient,
            curvature,
        })
    }

    fn project(&self, params: &mut [T]) {
        clamp_into(params, &self.lower, &self.upper);
    }
}

/// Half the Poisson deviance of model expectations `μ(p)` against counts.
pub struct PoissonLikelihood<'d, T, F> {
    model: F,
    counts: &'d [T],
    dim: usize,
    scales: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<'d, T: Real, F: Fn(&[T], &mut [T]) -> bool> PoissonLikelihood<'d, T, F> {
    pub fn new(dim: usize, counts: &'d [T], model: F) -> Self {
        Self {
            model,
            counts,
            dim,
            scales: vec![T::one(); dim],
            lower: vec![T::neg_infinity(); dim],
            upper: vec![T::infinity(); dim],
        }
    }

    pub fn with_scales(mut self, scales: Vec<T>) -> Self {
        self.scales = scales;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<T>, upper: Vec<T>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn expectations(&self, params: &[T]) -> Option<Vec<T>> {
        let mut mu = vec![T::zero(); self.counts.len()];
        ((self.model)(params, &mut mu) && mu.iter().all(|v| v.is_finite() && *v > T::zero()))
            .then_some(mu)
    }

    fn half_deviance(&self, mu: &[T]) -> T {
        mu.iter().zip(self.counts).fold(T::zero(), |acc, (m, n)| {
            let term = if *n > T::zero() {
                *m - *n + *n * (*n / *m).ln()
            } else {
                *m
            };
            acc + term
        })
    }
}

impl<T: Real, F: Fn(&[T], &mut [T]) -> bool> Objective<T> for PoissonLikelihood<'_, T, F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cost(&self, params: &[T]) -> Option<T> {
        let mu = self.expectations(params)?;
        Some(self.half_deviance(&mu))
    }

    fn evaluate(&self, params: &[T]) -> Option<Evaluation<T>> {
        let n = self.dim;
        let m = self.counts.len();
        let mu = self.expectations(params)?;
        let jac = jacobian(&self.model, params, m, &self.scales)?;
        let mut gradient = vec![T::zero(); n];
        let mut curvature = vec![T::zero(); n * n];
        for i in 0..m {
            let row = &jac[i * n..(i + 1) * n];
            let w = T::one() - self.counts[i] / mu[i];
            let inv_mu = T::one() / mu[i];
            for a in 0..n {
                gradient[a] += row[a] * w;
                for b in a..n {
                    curvature[a * n + b] += row[a] * row[b] * inv_mu;
                }
            }
        }
        symmetrize(&mut curvature, n);
        Some(Evaluation {
            cost: self.half_deviance(&mu),
            gradient,
            curvature,
        })
    }

    fn project(&self, params: &mut [T]) {
        clamp_into(params, &self.lower, &self.upper);
    }
}

fn symmetrize<T: Real>(a: &mut [T], n: usize) {
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i];
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > T::zero()) || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn solve_factored<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = l[i * n + k] * y[k];
            y[i] -= v;
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = l[k * n + i] * y[k];
            y[i] -= v;
        }
        y[i] /= l[i * n + i];
    }
    y
}

pub fn cholesky_solve<T: Real>(a: &[T], n: usize, b: &[T]) -> Option<Vec<T>> {
    let l = cholesky(a, n)?;
    Some(solve_factored(&l, n, b))
}

pub fn invert_spd<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let l = cholesky(a, n)?;
    let mut inv = vec![T::zero(); n * n];
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = T::zero());
        e[j] = T::one();
        let col = solve_factored(&l, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}

/// Ordinary least-squares line `y = intercept + slope·x`.
pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> Option<(T, T)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = T::from_usize(x.len())?;
    let mx = x.iter().fold(T::zero(), |a, v| a + *v) / n;
    let my = y.iter().fold(T::zero(), |a, v| a + *v) / n;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for (xi, yi) in x.iter().zip(y) {
        sxx += (*xi - mx) * (*xi - mx);
        sxy += (*xi - mx) * (*yi - my);
    }
    if sxx <= T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exponential_decay() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-t / 1.7).exp() + 0.2).collect();
        let problem = LeastSquares::new(3, t.len(), |p: &[f64], r: &mut [f64]| {
            for ((ri, ti), yi) in r.iter_mut().zip(&t).zip(&y) {
                *ri = p[0] * (-ti / p[1]).exp() + p[2] - yi;
            }
            true
        });
        let report = minimize(&problem, &[1.0, 0.5, 0.0], &LmOptions::default()).unwrap();
        assert!(report.converged);
        assert!((report.params[0] - 3.0).abs() < 1e-6);
        assert!((report.params[1] - 1.7).abs() < 1e-6);
        assert!((report.params[2] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn poisson_likelihood_mean_is_sample_mean() {
        // MLE of a constant Poisson rate is the sample mean.
        let counts: Vec<f64> = vec![3.0, 7.0, 4.0, 0.0, 5.0, 6.0];
        let problem = PoissonLikelihood::new(1, &counts, |p: &[f64], mu: &mut [f64]| {
            mu.iter_mut().for_each(|m| *m = p[0]);
            true
        })
        .with_bounds(vec![1e-9], vec![f64::INFINITY]);
        let report = minimize(&problem, &[1.0], &LmOptions::default()).unwrap();
        assert!((report.params[0] - 25.0 / 6.0).abs() < 1e-7);
        // Fisher information of the mean is n/λ.
        let var = report.covariance().unwrap()[0];
        assert!((var - (25.0 / 6.0) / 6.0).abs() < 1e-6);
    }

    #[test]
    fn cholesky_inverse_round_trips() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert_spd(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn single_precision_fit_converges() {
        let x: Vec<f32> = (0..20).map(|i| i as f32).collect();
        let problem = LeastSquares::new(2, x.len(), |p: &[f32], r: &mut [f32]| {
            for (ri, xi) in r.iter_mut().zip(&x) {
                *ri = p[0] + p[1] * xi - (1.5 + 0.25 * xi);
            }
            true
        });
        let report = minimize(&problem, &[0.0f32, 0.0], &LmOptions::default()).unwrap();
        assert!((report.params[0] - 1.5).abs() < 1e-3);
        assert!((report.params[1] - 0.25).abs() < 1e-4);
    }
}
