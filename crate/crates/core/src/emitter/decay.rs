//! Time-correlated single-photon counting: histogram simulation and
//! maximum-likelihood lifetime fits.
//!
//! Photon delays are `t₀ + Exp(τ) + N(0, σ_irf)`, folded into one laser
//! period. The fit integrates the same IRF-convolved, period-wrapped model
//! over each bin, so its only approximation is dropping photons from more
//! than one period *ahead*, which is below 1e-300 for any realistic offset.

use crate::error::{Error, Result};
use crate::optim::{invert_spd, linear_fit, minimize, LmOptions, LmReport, PoissonLikelihood};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{Read, Write};

/// Likelihood-ratio threshold for keeping the second component
/// (χ² with 2 degrees of freedom at the 1% level).
pub const LIKELIHOOD_RATIO_THRESHOLD: f64 = 9.21;
/// Minimum τ_slow/τ_fast for two resolved components.
pub const MIN_LIFETIME_RATIO: f64 = 1.2;
/// Minimum photon fraction of either component.
pub const MIN_COMPONENT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySimulation {
    /// Fast (biexciton) total decay rate (ns⁻¹).
    pub rate_fast: f64,
    /// Slow (exciton) total decay rate (ns⁻¹).
    pub rate_slow: f64,
    /// Photon fraction of the fast component.
    pub fast_fraction: f64,
    pub n_photons: u64,
    pub irf_sigma: f64,
    /// Delay of the IRF centre after the start of the period (ns).
    pub irf_offset: f64,
    pub bin_width: f64,
    /// Laser period (ns).
    pub period: f64,
}

impl Default for DecaySimulation {
    fn default() -> Self {
        Self {
            rate_fast: 1.0 / 2.1,
            rate_slow: 1.0 / 29.4,
            fast_fraction: 0.3,
            n_photons: 100_000,
            irf_sigma: 0.15,
            irf_offset: 5.0,
            bin_width: 0.05,
            period: 250.0,
        }
    }
}

impl DecaySimulation {
    pub fn with_lifetimes(tau_fast: f64, tau_slow: f64) -> Self {
        Self {
            rate_fast: 1.0 / tau_fast,
            rate_slow: 1.0 / tau_slow,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_fast > 0.0 && self.rate_slow > 0.0) || !self.rate_fast.is_finite() {
            return Err(Error::arg("decay rates must be positive and finite"));
        }
        if !(self.rate_fast > self.rate_slow) {
            return Err(Error::arg("the fast component must decay faster than the slow one"));
        }
        if !(0.0..=1.0).contains(&self.fast_fraction) {
            return Err(Error::arg("fast fraction must lie in [0, 1]"));
        }
        if self.n_photons == 0 {
            return Err(Error::arg("at least one photon is required"));
        }
        if !(self.irf_sigma >= 0.0) || !(self.irf_offset >= 0.0) {
            return Err(Error::arg("IRF width and offset must be non-negative"));
        }
        if !(self.bin_width > 0.0) || !(self.period > 0.0) {
            return Err(Error::arg("bin width and period must be positive"));
        }
        if self.bin_width >= self.period {
            return Err(Error::arg(format!(
                "bin width {} ns must be smaller than the period {} ns",
                self.bin_width, self.period
            )));
        }
        let bins = self.period / self.bin_width;
        if (bins - bins.round()).abs() > 1e-6 * bins {
            return Err(Error::arg("the period must be a whole number of bins"));
        }
        Ok(())
    }
}

/// Binned photon delays over one laser period.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayHistogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    irf_sigma: f64,
    irf_offset: f64,
    total_photons: u64,
}

impl DecayHistogram {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>, irf_sigma: f64, irf_offset: f64) -> Result<Self> {
        if bin_edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(Error::arg("histogram needs one more edge than bins"));
        }
        let width = bin_edges[1] - bin_edges[0];
        if !(width > 0.0)
            || bin_edges
                .windows(2)
                .any(|w| ((w[1] - w[0]) - width).abs() > 1e-6 * width)
        {
            return Err(Error::arg("histogram bins must be uniform and increasing"));
        }
        if !(irf_sigma >= 0.0) || !irf_offset.is_finite() {
            return Err(Error::arg("invalid IRF parameters"));
        }
        let total_photons = counts.iter().sum();
        Ok(Self {
            bin_edges,
            counts,
            irf_sigma,
            irf_offset,
            total_photons,
        })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn irf_sigma(&self) -> f64 {
        self.irf_sigma
    }

    pub fn irf_offset(&self) -> f64 {
        self.irf_offset
    }

    pub fn total_photons(&self) -> u64 {
        self.total_photons
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    /// Time spanned by the histogram (one laser period).
    pub fn span(&self) -> f64 {
        self.bin_edges[self.bin_edges.len() - 1] - self.bin_edges[0]
    }

    /// `t_ns,counts` with `t_ns` the left bin edge.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing histogram: {e}"));
        out.write_record(["t_ns", "counts"]).map_err(io)?;
        for (t, c) in self.bin_edges.iter().zip(&self.counts) {
            out.write_record([t.to_string(), c.to_string()]).map_err(io)?;
        }
        out.flush()
            .map_err(|e| Error::InvalidArgument(format!("writing histogram: {e}")))
    }

    /// Reads `t_ns,counts`; IRF metadata comes from the sidecar.
    pub fn from_csv<R: Read>(reader: R, irf_sigma: f64, irf_offset: f64) -> Result<Self> {
        let cols = crate::interferometry::read_columns(reader, &["t_ns", "counts"])?;
        let (t, c) = (&cols[0], &cols[1]);
        if t.len() < 2 {
            return Err(Error::arg("histogram needs at least 2 bins"));
        }
        let mut counts = Vec::with_capacity(c.len());
        for (i, v) in c.iter().enumerate() {
            if *v < 0.0 || v.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "line {}, column 2: counts must be non-negative integers",
                    i + 2
                )));
            }
            counts.push(*v as u64);
        }
        let width = t[1] - t[0];
        let mut edges = t.clone();
        edges.push(t[t.len() - 1] + width);
        Self::new(edges, counts, irf_sigma, irf_offset)
    }
}

pub fn simulate_decay_histogram<R: Rng + ?Sized>(
    sim: &DecaySimulation,
    rng: &mut R,
) -> Result<DecayHistogram> {
    sim.validate()?;
    let n_bins = (sim.period / sim.bin_width).round() as usize;
    let fast = Exp::new(sim.rate_fast).map_err(|e| Error::arg(e.to_string()))?;
    let slow = Exp::new(sim.rate_slow).map_err(|e| Error::arg(e.to_string()))?;
    let mut counts = vec![0u64; n_bins];
    for _ in 0..sim.n_photons {
        let pick: f64 = rng.random();
        let delay = if pick < sim.fast_fraction {
            fast.sample(rng)
        } else {
            slow.sample(rng)
        };
        let z: f64 = rng.sample(StandardNormal);
        let t = (sim.irf_offset + delay + sim.irf_sigma * z).rem_euclid(sim.period);
        let bin = ((t / sim.bin_width) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let edges = (0..=n_bins).map(|i| i as f64 * sim.bin_width).collect();
    DecayHistogram::new(edges, counts, sim.irf_sigma, sim.irf_offset)
}

/// `exp(x²)·erfc(x)` for `x ≥ 0`.
fn erfcx(x: f64) -> f64 {
    if x < 4.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    // Continued fraction erfc(x) = e^{−x²}/√π · 1/(x + ½/(x + 1/(x + 3/2/(x + …)))).
    let mut f = x;
    for m in (1..=60).rev() {
        f = x + 0.5 * m as f64 / f;
    }
    1.0 / (PI.sqrt() * f)
}

/// Period-folded, IRF-convolved single-exponential bin probabilities.
struct Component<'a> {
    edges: &'a [f64],
    t0: f64,
    sigma: f64,
    period: f64,
}

impl Component<'_> {
    /// `P(t₀ + Exp(τ) + N(0,σ) ≤ t)` split as `(Φ(u/σ), S)` with the CDF
    /// equal to `Φ − S`.
    fn parts(&self, t: f64, tau: f64) -> (f64, f64) {
        let u = t - self.t0;
        let s = self.sigma;
        if s == 0.0 {
            return if u > 0.0 { (1.0, (-u / tau).exp()) } else { (0.0, 0.0) };
        }
        let gauss = 0.5 * libm::erfc(-u / s * FRAC_1_SQRT_2);
        let w = (s / tau - u / s) * FRAC_1_SQRT_2;
        let tail = if w > 0.0 {
            0.5 * erfcx(w) * (-(u * u) / (2.0 * s * s)).exp()
        } else {
            0.5 * (-u / tau + s * s / (2.0 * tau * tau)).exp() * libm::erfc(w)
        };
        (gauss, tail)
    }

    fn gauss_mass(&self, a: f64, b: f64) -> f64 {
        let s = self.sigma;
        let (ua, ub) = (a - self.t0, b - self.t0);
        if s == 0.0 {
            return 0.0;
        }
        if ua > 0.0 {
            0.5 * (libm::erfc(ua / s * FRAC_1_SQRT_2) - libm::erfc(ub / s * FRAC_1_SQRT_2))
        } else {
            0.5 * (libm::erfc(-ub / s * FRAC_1_SQRT_2) - libm::erfc(-ua / s * FRAC_1_SQRT_2))
        }
    }

    /// Probability of each bin for lifetime `tau`, written into `out`.
    fn fill(&self, tau: f64, out: &mut [f64]) {
        let s = self.sigma;
        let log_q = -self.period / tau;
        // Photons from earlier pulses: q/(1−q)·e^{σ²/2τ²}·(e^{−(a−t₀)/τ} − e^{−(b−t₀)/τ}).
        let wrap_log = log_q - (-log_q.exp()).ln_1p() + s * s / (2.0 * tau * tau);
        let mut prev = self.parts(self.edges[0], tau).1;
        for (i, slot) in out.iter_mut().enumerate() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            let tail_b = self.parts(b, tau).1;
            let direct = if s == 0.0 {
                let ua = (a - self.t0).max(0.0);
                let ub = (b - self.t0).max(0.0);
                if ub > ua {
                    (-ua / tau).exp() * -(-(ub - ua) / tau).exp_m1()
                } else {
                    0.0
                }
            } else {
                self.gauss_mass(a, b) + (prev - tail_b)
            };
            let wrap = (wrap_log - (a - self.t0) / tau).exp() * -(-(b - a) / tau).exp_m1();
            *slot = (direct + wrap).max(0.0);
            prev = tail_b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub tau_fast: f64,
    pub tau_slow: f64,
    /// Photon fraction of the fast component.
    pub fast_fraction: f64,
    /// Background per bin.
    pub background: f64,
    pub tau_fast_sigma: f64,
    pub tau_slow_sigma: f64,
    pub fraction_sigma: f64,
    /// Fast lifetime below twice the IRF width.
    pub irf_limited: bool,
    /// Second component not supported; both lifetimes hold the single τ.
    pub single_exponential: bool,
    /// `2·(ln L_bi − ln L_single)`.
    pub likelihood_ratio: f64,
    /// Poisson deviance of the reported model.
    pub deviance: f64,
    pub iterations: usize,
}

struct Window<'a> {
    edges: &'a [f64],
    counts: Vec<f64>,
}

fn window<'a>(hist: &'a DecayHistogram, t_min: f64, t_max: f64) -> Result<Window<'a>> {
    if !(t_max > t_min) {
        return Err(Error::arg("fit window needs t_min < t_max"));
    }
    let edges = hist.bin_edges();
    let first = edges.iter().position(|e| *e >= t_min - 1e-9);
    let last = edges.iter().rposition(|e| *e <= t_max + 1e-9);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) if l > f => (f, l),
        _ => return Err(Error::arg("fit window lies outside the histogram")),
    };
    let counts: Vec<f64> = hist.counts()[first..last].iter().map(|c| *c as f64).collect();
    let occupied = counts.iter().filter(|c| **c > 0.0).count();
    if occupied < 20 {
        return Err(Error::arg(format!(
            "fit window holds {occupied} non-empty bins, at least 20 are needed"
        )));
    }
    Ok(Window {
        edges: &edges[first..=last],
        counts,
    })
}

/// Poisson maximum-likelihood fit of a two-component decay with background
/// over bins inside `[t_min, t_max]`.
pub fn fit_biexponential(hist: &DecayHistogram, fit_window: (f64, f64)) -> Result<LifetimeFit> {
    let win = window(hist, fit_window.0, fit_window.1)?;
    let comp = Component {
        edges: win.edges,
        t0: hist.irf_offset(),
        sigma: hist.irf_sigma(),
        period: hist.span(),
    };
    let n = win.counts.len();
    let bw = hist.bin_width();
    let total: f64 = win.counts.iter().sum();

    let tau_lo = (bw * 1e-2).ln();
    let tau_hi = (hist.span() * 10.0).ln();
    let n_hi = (total * 1e3 + 10.0).ln();
    let bg_hi = total.max(1.0);

    let model2 = |p: &[f64], mu: &mut [f64]| {
        let mut a = vec![0.0; n];
        comp.fill(p[1].exp(), &mut a);
        comp.fill(p[3].exp(), mu);
        let (n1, n2) = (p[0].exp(), p[2].exp());
        for (m, x) in mu.iter_mut().zip(&a) {
            *m = n1 * x + n2 * *m + p[4];
        }
        true
    };
    let model1 = |p: &[f64], mu: &mut [f64]| {
        comp.fill(p[1].exp(), mu);
        let n1 = p[0].exp();
        for m in mu.iter_mut() {
            *m = n1 * *m + p[2];
        }
        true
    };
    let bi = PoissonLikelihood::new(5, &win.counts, model2)
        .with_scales(vec![1.0, 1.0, 1.0, 1.0, 1.0])
        .with_bounds(
            vec![0.0, tau_lo, 0.0, tau_lo, 1e-9],
            vec![n_hi, tau_hi, n_hi, tau_hi, bg_hi],
        );
    let single = PoissonLikelihood::new(3, &win.counts, model1)
        .with_scales(vec![1.0, 1.0, 1.0])
        .with_bounds(vec![0.0, tau_lo, 1e-9], vec![n_hi, tau_hi, bg_hi]);

    let guess = initial_guess(win.edges, &win.counts, comp.t0, bw);
    let options = LmOptions {
        max_iterations: 300,
        ..LmOptions::default()
    };

    let mut best_single: Option<LmReport<f64>> = None;
    for tau in [guess.tau_slow, guess.tau_fast, guess.tau_mean] {
        let start = [total.max(1.0).ln(), tau.ln(), guess.background];
        if let Ok(r) = minimize(&single, &start, &options) {
            if best_single.as_ref().is_none_or(|b| r.cost < b.cost) {
                best_single = Some(r);
            }
        }
    }
    let mut best_bi: Option<LmReport<f64>> = None;
    for scale in [1.0, 1.0 / 3.0, 3.0] {
        let tau_f = (guess.tau_fast * scale).min(guess.tau_slow / 1.5);
        let start = [
            guess.n_fast.ln(),
            tau_f.ln(),
            guess.n_slow.ln(),
            guess.tau_slow.ln(),
            guess.background,
        ];
        if let Ok(r) = minimize(&bi, &start, &options) {
            if best_bi.as_ref().is_none_or(|b| r.cost < b.cost) {
                best_bi = Some(r);
            }
        }
    }
    let single = best_single.ok_or_else(|| Error::FitFailure {
        reason: "single-exponential fit failed from every start".into(),
        iterations: 0,
        last_cost: f64::NAN,
    })?;
    let irf_limit = 2.0 * hist.irf_sigma();

    let single_result = |likelihood_ratio: f64| {
        let p = &single.params;
        let tau = p[1].exp();
        let cov = invert_spd(&single.curvature, 3);
        let tau_sigma = cov.map(|c| tau * c[4].max(0.0).sqrt()).unwrap_or(f64::NAN);
        LifetimeFit {
            tau_fast: tau,
            tau_slow: tau,
            fast_fraction: 0.0,
            background: p[2],
            tau_fast_sigma: tau_sigma,
            tau_slow_sigma: tau_sigma,
            fraction_sigma: 0.0,
            irf_limited: tau < irf_limit,
            single_exponential: true,
            likelihood_ratio,
            deviance: 2.0 * single.cost,
            iterations: single.iterations,
        }
    };

    let Some(bi) = best_bi else {
        if !single.converged {
            return Err(Error::FitFailure {
                reason: "lifetime fit did not converge".into(),
                iterations: single.iterations,
                last_cost: single.cost,
            });
        }
        return Ok(single_result(0.0));
    };
    let mut p = bi.params.clone();
    // Order components by lifetime.
    if p[1] > p[3] {
        p.swap(0, 2);
        p.swap(1, 3);
    }
    let (n1, t1, n2, t2) = (p[0].exp(), p[1].exp(), p[2].exp(), p[3].exp());
    let fraction = n1 / (n1 + n2);
    let likelihood_ratio = 2.0 * (single.cost - bi.cost).max(0.0);
    let degenerate = likelihood_ratio < LIKELIHOOD_RATIO_THRESHOLD
        || t2 / t1 < MIN_LIFETIME_RATIO
        || !(MIN_COMPONENT_FRACTION..=1.0 - MIN_COMPONENT_FRACTION).contains(&fraction);
    if degenerate {
        return Ok(single_result(likelihood_ratio));
    }
    if !bi.converged {
        return Err(Error::FitFailure {
            reason: "biexponential lifetime fit did not converge".into(),
            iterations: bi.iterations,
            last_cost: bi.cost,
        });
    }
    let cov = invert_spd(&bi.curvature, 5);
    let swapped = bi.params[1] > bi.params[3];
    let idx = |i: usize| if swapped { [2, 3, 0, 1, 4][i] } else { i };
    let (tau_fast_sigma, tau_slow_sigma, fraction_sigma) = match cov {
        Some(c) => {
            let at = |i: usize, j: usize| c[idx(i) * 5 + idx(j)];
            let var_f = (fraction * (1.0 - fraction)).powi(2) * (at(0, 0) + at(2, 2) - 2.0 * at(0, 2));
            (
                t1 * at(1, 1).max(0.0).sqrt(),
                t2 * at(3, 3).max(0.0).sqrt(),
                var_f.max(0.0).sqrt(),
            )
        }
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    Ok(LifetimeFit {
        tau_fast: t1,
        tau_slow: t2,
        fast_fraction: fraction,
        background: p[4],
        tau_fast_sigma,
        tau_slow_sigma,
        fraction_sigma,
        irf_limited: t1 < irf_limit,
        single_exponential: false,
        likelihood_ratio,
        deviance: 2.0 * bi.cost,
        iterations: bi.iterations,
    })
}

struct Guess {
    tau_fast: f64,
    tau_slow: f64,
    tau_mean: f64,
    n_fast: f64,
    n_slow: f64,
    background: f64,
}

/// Deterministic starting point from log-linear regressions on the tail and
/// on the tail-subtracted early decay.
fn initial_guess(edges: &[f64], counts: &[f64], t0: f64, bw: f64) -> Guess {
    let n = counts.len();
    let mid = |i: usize| 0.5 * (edges[i] + edges[i + 1]);
    let total: f64 = counts.iter().sum();
    let peak = (0..n).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    let span = edges[n] - edges[peak];
    let background = {
        let k = (n / 20).max(1);
        let tail_mean = counts[n - k..].iter().sum::<f64>() / k as f64;
        (0.5 * tail_mean).max(1e-3)
    };

    let regress = |idx: &[usize], values: &dyn Fn(usize) -> f64| -> Option<(f64, f64)> {
        let (x, y): (Vec<f64>, Vec<f64>) = idx
            .iter()
            .filter(|i| values(**i) > 0.0)
            .map(|i| (mid(*i), values(*i).ln()))
            .unzip();
        if x.len() < 3 {
            return None;
        }
        let (ic, slope) = linear_fit(&x, &y)?;
        (slope < 0.0).then(|| {
            let tau = -1.0 / slope;
            (tau, tau / bw * (ic - t0 / tau).exp())
        })
    };

    let tail_start = peak + (n - peak) / 2;
    let tail: Vec<usize> = (tail_start..n).collect();
    let (tau_slow, n_slow) = regress(&tail, &|i| counts[i] - background)
        .map(|(t, a)| (t.clamp(bw, span.max(bw) * 10.0), a.clamp(1.0, total.max(1.0))))
        .unwrap_or((span.max(bw) / 3.0, 0.5 * total.max(2.0)));

    let slow_at = |i: usize| n_slow * bw / tau_slow * (-(mid(i) - t0) / tau_slow).exp();
    let excess = |i: usize| counts[i] - slow_at(i) - background;
    let first_excess = excess(peak);
    let early: Vec<usize> = (peak..n)
        .take_while(|i| excess(*i) > 0.1 * first_excess)
        .collect();
    let (mut tau_fast, n_fast) = regress(&early, &excess)
        .map(|(t, a)| (t.max(bw * 0.1), a.max(1.0)))
        .unwrap_or((tau_slow / 10.0, (0.3 * total).max(1.0)));
    if tau_fast >= tau_slow / 1.5 {
        tau_fast = tau_slow / 5.0;
    }
    Guess {
        tau_fast,
        tau_slow,
        tau_mean: (tau_fast * tau_slow).sqrt(),
        n_fast,
        n_slow,
        background,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    #[test]
    fn erfcx_matches_direct_evaluation_and_asymptotics() {
        for x in [0.0f64, 0.5, 2.0, 3.9, 4.0, 5.0, 6.0] {
            let direct = (x * x).exp() * libm::erfc(x);
            assert!((erfcx(x) / direct - 1.0).abs() < 1e-12, "{x}");
        }
        let x: f64 = 1e4;
        assert!((erfcx(x) * x * PI.sqrt() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bin_probabilities_sum_to_one() {
        let edges: Vec<f64> = (0..=5000).map(|i| i as f64 * 0.05).collect();
        for (sigma, tau) in [(0.0, 2.1), (0.15, 0.4), (0.15, 29.4), (0.3, 0.05), (0.15, 100.0)] {
            let c = Component { edges: &edges, t0: 5.0, sigma, period: 250.0 };
            let mut p = vec![0.0; 5000];
            c.fill(tau, &mut p);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "σ={sigma} τ={tau}: {sum}");
        }
    }

    #[test]
    fn probabilities_match_monte_carlo() {
        let sim = DecaySimulation { fast_fraction: 0.0, rate_slow: 1.0 / 3.0, rate_fast: 1.0, n_photons: 400_000, ..DecaySimulation::default() };
        let h = simulate_decay_histogram(&sim, &mut from_seed(5)).unwrap();
        let c = Component { edges: h.bin_edges(), t0: 5.0, sigma: 0.15, period: 250.0 };
        let mut p = vec![0.0; h.counts().len()];
        c.fill(3.0, &mut p);
        // Coarse 1 ns blocks, chi-square-like agreement.
        for block in 0..20 {
            let r = block * 20..(block + 1) * 20;
            let obs: f64 = h.counts()[r.clone()].iter().map(|v| *v as f64).sum();
            let exp: f64 = p[r].iter().sum::<f64>() * 400_000.0;
            assert!((obs - exp).abs() < 5.0 * exp.sqrt() + 1.0, "block {block}: {obs} vs {exp}");
        }
    }

    #[test]
    fn photons_are_conserved() {
        let sim = DecaySimulation { n_photons: 12_345, ..DecaySimulation::default() };
        let h = simulate_decay_histogram(&sim, &mut from_seed(1)).unwrap();
        assert_eq!(h.total_photons(), 12_345);
        assert_eq!(h.counts().iter().sum::<u64>(), 12_345);
        assert_eq!(h.counts().len(), 5000);
        let again = simulate_decay_histogram(&sim, &mut from_seed(1)).unwrap();
        assert_eq!(h, again);
    }

    #[test]
    fn invalid_simulations_are_rejected() {
        let bad = DecaySimulation { bin_width: 250.0, ..DecaySimulation::default() };
        assert!(simulate_decay_histogram(&bad, &mut from_seed(0)).is_err());
        let bad = DecaySimulation { rate_fast: 0.01, ..DecaySimulation::default() };
        assert!(bad.validate().is_err());
        let bad = DecaySimulation { n_photons: 0, ..DecaySimulation::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_component_log_slope() {
        let sim = DecaySimulation {
            fast_fraction: 0.0,
            irf_sigma: 0.0,
            n_photons: 1_000_000,
            rate_fast: 1.0,
            rate_slow: 1.0 / 2.1,
            ..DecaySimulation::default()
        };
        let h = simulate_decay_histogram(&sim, &mut from_seed(3)).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = h
            .bin_edges()
            .iter()
            .zip(h.counts())
            .filter(|(t, c)| **t >= 5.0 && **t < 5.0 + 3.0 * 2.1 && **c > 0)
            .map(|(t, c)| (*t + 0.025, (*c as f64).ln()))
            .unzip();
        let (_, slope) = linear_fit(&x, &y).unwrap();
        assert!((-slope * 2.1 - 1.0).abs() < 0.01, "{slope}");
    }

    #[test]
    fn csv_round_trip() {
        let h = simulate_decay_histogram(&DecaySimulation { n_photons: 1000, ..DecaySimulation::default() }, &mut from_seed(2)).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = DecayHistogram::from_csv(buf.as_slice(), 0.15, 5.0).unwrap();
        assert_eq!(back.counts(), h.counts());
        assert!((back.bin_width() - h.bin_width()).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_dot_recovered() {
        let sim = DecaySimulation::with_lifetimes(2.1, 29.4);
        let h = simulate_decay_histogram(&sim, &mut from_seed(10)).unwrap();
        let fit = fit_biexponential(&h, (0.0, 250.0)).unwrap();
        assert!(!fit.single_exponential);
        assert!((fit.tau_fast / 2.1 - 1.0).abs() < 0.05, "{fit:?}");
        assert!((fit.tau_slow / 29.4 - 1.0).abs() < 0.05, "{fit:?}");
        assert!((fit.fast_fraction - 0.3).abs() < 5.0 * fit.fraction_sigma + 0.01, "{fit:?}");
        assert!(fit.tau_fast_sigma > 0.0 && fit.tau_slow_sigma > 0.0);
        assert!(!fit.irf_limited);
    }

    #[test]
    fn coupled_dot_recovered_and_irf_flag() {
        let sim = DecaySimulation::with_lifetimes(0.4, 1.0);
        let h = simulate_decay_histogram(&sim, &mut from_seed(11)).unwrap();
        let fit = fit_biexponential(&h, (0.0, 40.0)).unwrap();
        assert!((fit.tau_fast / 0.4 - 1.0).abs() < 0.15, "{fit:?}");
        assert!((fit.tau_slow / 1.0 - 1.0).abs() < 0.15, "{fit:?}");
        assert!(!fit.irf_limited);

        let sim = DecaySimulation::with_lifetimes(0.1, 1.0);
        let h = simulate_decay_histogram(&sim, &mut from_seed(12)).unwrap();
        let fit = fit_biexponential(&h, (0.0, 40.0)).unwrap();
        assert!(fit.irf_limited, "{fit:?}");
    }

    #[test]
    fn pure_single_exponential_falls_back() {
        let sim = DecaySimulation { fast_fraction: 0.0, ..DecaySimulation::default() };
        let h = simulate_decay_histogram(&sim, &mut from_seed(4)).unwrap();
        let fit = fit_biexponential(&h, (0.0, 250.0)).unwrap();
        assert!(fit.single_exponential, "{fit:?}");
        assert!((fit.tau_slow / 29.4 - 1.0).abs() < 0.02);
    }

    #[test]
    fn window_preconditions() {
        let h = simulate_decay_histogram(&DecaySimulation { n_photons: 10, ..DecaySimulation::default() }, &mut from_seed(0)).unwrap();
        assert!(fit_biexponential(&h, (0.0, 250.0)).is_err());
        let h = simulate_decay_histogram(&DecaySimulation::default(), &mut from_seed(0)).unwrap();
        assert!(fit_biexponential(&h, (300.0, 400.0)).is_err());
        assert!(fit_biexponential(&h, (10.0, 5.0)).is_err());
    }
}
