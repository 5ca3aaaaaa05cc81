//! Binned intensity traces and the Poisson goodness-of-fit test.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF};

/// Slow multiplicative modulation of the emission rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftModel {
    #[default]
    None,
    /// `1 + slope·t`, clamped at zero.
    Linear { slope_per_s: f64 },
    /// `1 + amplitude·sin(2πt/period)`.
    Sinusoid { amplitude: f64, period_s: f64 },
    /// Blinking: the rate drops to `off_level` for the last `1 − duty` of each period.
    SquareWave { period_s: f64, duty: f64, off_level: f64 },
}

impl DriftModel {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            DriftModel::None => 1.0,
            DriftModel::Linear { slope_per_s } => (1.0 + slope_per_s * t).max(0.0),
            DriftModel::Sinusoid { amplitude, period_s } => {
                (1.0 + amplitude * (std::f64::consts::TAU * t / period_s).sin()).max(0.0)
            }
            DriftModel::SquareWave { period_s, duty, off_level } => {
                if (t / period_s).fract() < duty {
                    1.0
                } else {
                    off_level.max(0.0)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DriftModel::None => true,
            DriftModel::Linear { slope_per_s } => slope_per_s.is_finite(),
            DriftModel::Sinusoid { amplitude, period_s } => amplitude.is_finite() && period_s > 0.0,
            DriftModel::SquareWave { period_s, duty, off_level } => {
                period_s > 0.0 && (0.0..=1.0).contains(&duty) && off_level >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid drift model {self:?}")))
        }
    }
}

/// Poisson counts per bin at rate `enhancement × base_rate × drift(t)`,
/// sampled at bin centres.
pub fn intensity_trace<R: Rng + ?Sized>(
    enhancement: f64,
    base_rate: f64,
    duration_s: f64,
    bin_ms: f64,
    drift: DriftModel,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if !(enhancement >= 0.0 && enhancement.is_finite()) {
        return Err(Error::arg("enhancement must be finite and non-negative"));
    }
    if !(base_rate > 0.0 && duration_s > 0.0 && bin_ms > 0.0) {
        return Err(Error::arg("rate, duration and bin width must be positive"));
    }
    drift.validate()?;
    let bin_s = bin_ms * 1e-3;
    let n = (duration_s / bin_s).round() as usize;
    if n == 0 {
        return Err(Error::arg("duration is shorter than one bin"));
    }
    let mean = enhancement * base_rate * bin_s;
    (0..n)
        .map(|i| {
            let lambda = mean * drift.factor((i as f64 + 0.5) * bin_s);
            if lambda <= 0.0 {
                return Ok(0);
            }
            let d = Poisson::new(lambda).map_err(|e| Error::arg(e.to_string()))?;
            Ok(d.sample(rng) as u64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonTest {
    pub mean: f64,
    /// Sample variance over mean.
    pub fano: f64,
    pub chi2: f64,
    /// Merged cells − 2 (normalization and fitted mean).
    pub dof: usize,
    /// `None` when merging leaves no degrees of freedom.
    pub p_value: Option<f64>,
}

/// Minimum expected count per χ² cell.
const MIN_EXPECTED: f64 = 5.0;

/// Compares the count histogram with Poisson(mean).
pub fn poisson_goodness(trace: &[u64]) -> Result<PoissonTest> {
    if trace.len() < 100 {
        return Err(Error::arg(format!(
            "Poisson test needs at least 100 bins, got {}",
            trace.len()
        )));
    }
    if trace.iter().all(|c| *c == 0) {
        return Err(Error::Degenerate("trace contains only zero counts".into()));
    }
    let n = trace.len() as f64;
    let mean = trace.iter().map(|c| *c as f64).sum::<f64>() / n;
    let var = trace.iter().map(|c| (*c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let fano = var / mean;

    let max = *trace.iter().max().unwrap_or(&0) as usize;
    let mut observed = vec![0.0; max + 1];
    for c in trace {
        observed[*c as usize] += 1.0;
    }
    let dist = statrs::distribution::Poisson::new(mean)
        .map_err(|e| Error::Degenerate(format!("Poisson reference: {e}")))?;
    let mut expected: Vec<f64> = (0..=max).map(|k| n * dist.pmf(k as u64)).collect();
    // The last cell also carries the upper tail.
    // max > 0 here, since all-zero traces were rejected.
    expected[max] = n * dist.sf(max as u64 - 1);

    // Greedy left-to-right merge until each cell expects ≥ 5; a short
    // remainder joins the last full cell.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (ok, ek) in observed.iter().zip(&expected) {
        o += ok;
        e += ek;
        if e >= MIN_EXPECTED {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    let chi2: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len().saturating_sub(2);
    let p_value = if dof >= 1 {
        let reference = ChiSquared::new(dof as f64)
            .map_err(|e| Error::Degenerate(format!("χ² reference: {e}")))?;
        Some(reference.sf(chi2))
    } else {
        None
    };
    Ok(PoissonTest {
        mean,
        fano,
        chi2,
        dof,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    #[test]
    fn drift_free_trace_mean_and_fano() {
        let t = intensity_trace(1.0, 20_000.0, 100.0, 1.0, DriftModel::None, &mut from_seed(1)).unwrap();
        assert_eq!(t.len(), 100_000);
        let r = poisson_goodness(&t).unwrap();
        let se = (20.0f64 / 1e5).sqrt();
        assert!((r.mean - 20.0).abs() < 3.0 * se, "{r:?}");
        assert!((r.fano - 1.0).abs() < 0.05, "{r:?}");
        assert!(r.p_value.unwrap() > 1e-4);
    }

    #[test]
    fn blinking_is_detected() {
        let blink = DriftModel::SquareWave { period_s: 0.2, duty: 0.5, off_level: 0.2 };
        let t = intensity_trace(1.0, 20_000.0, 10.0, 1.0, blink, &mut from_seed(2)).unwrap();
        let r = poisson_goodness(&t).unwrap();
        assert!(r.fano > 1.5 && r.p_value.unwrap() < 0.01, "{r:?}");
    }

    #[test]
    fn constant_trace_has_zero_fano() {
        let r = poisson_goodness(&[7; 200]).unwrap();
        assert_eq!(r.fano, 0.0);
        assert_eq!(r.mean, 7.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(poisson_goodness(&[0; 200]), Err(Error::Degenerate(_))));
        assert!(poisson_goodness(&[1; 50]).is_err());
        assert!(intensity_trace(1.0, 0.0, 1.0, 1.0, DriftModel::None, &mut from_seed(0)).is_err());
    }

    #[test]
    fn p_values_are_calibrated() {
        let mut p: Vec<f64> = (0..200u64)
            .map(|s| {
                let t = intensity_trace(1.0, 20_000.0, 2.0, 1.0, DriftModel::None, &mut from_seed(s)).unwrap();
                poisson_goodness(&t).unwrap().p_value.unwrap()
            })
            .collect();
        p.sort_by(f64::total_cmp);
        let n = p.len() as f64;
        let ks = p
            .iter()
            .enumerate()
            .map(|(i, v)| ((i as f64 + 1.0) / n - v).abs().max((v - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.1, "{ks}");
    }

    #[test]
    fn deterministic_per_seed() {
        let d = DriftModel::Sinusoid { amplitude: 0.1, period_s: 1.0 };
        let a = intensity_trace(2.0, 1000.0, 3.0, 1.0, d, &mut from_seed(9)).unwrap();
        let b = intensity_trace(2.0, 1000.0, 3.0, 1.0, d, &mut from_seed(9)).unwrap();
        assert_eq!(a, b);
    }
}
