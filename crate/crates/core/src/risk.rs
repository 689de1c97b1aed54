//! Risk functionals over per-sample impact values.
//!
//! The tail convention follows `α ∈ (0, 1)`: CVaR_α averages the worst
//! `(1 − α)` fraction of the samples, so `α → 1` approaches the maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMeasure {
    #[default]
    Cvar,
    Var,
    WorstCase,
    Mean,
    /// Impact at the nominal parameter only.
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub measure: RiskMeasure,
    pub alpha: f64,
}

impl RiskConfig {
    pub fn cvar(alpha: f64) -> Self {
        RiskConfig { measure: RiskMeasure::Cvar, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.measure, RiskMeasure::Cvar | RiskMeasure::Var) {
            check_alpha(self.alpha)?;
        }
        Ok(())
    }

    /// Risk of `values`; `nominal` is required by [`RiskMeasure::Nominal`].
    pub fn evaluate(&self, values: &[f64], nominal: Option<f64>) -> Result<f64> {
        match self.measure {
            RiskMeasure::Cvar => Ok(cvar(values, self.alpha)?.value),
            RiskMeasure::Var => var(values, self.alpha),
            RiskMeasure::WorstCase => worst_case(values),
            RiskMeasure::Mean => mean(values),
            RiskMeasure::Nominal => {
                nominal.ok_or_else(|| Error::Config("nominal risk needs the nominal impact".into()))
            }
        }
    }
}

/// Impact values of one mask over an ensemble; all finite and nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSampleSet {
    pub values: Vec<f64>,
    pub sample_ids: Vec<usize>,
    pub mask: Vec<f64>,
}

impl ImpactSampleSet {
    /// Solver round-off below zero is clamped; anything else negative or
    /// non-finite is rejected.
    pub fn new(values: Vec<f64>, sample_ids: Vec<usize>, mask: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        if values.len() != sample_ids.len() {
            return Err(Error::Config("one sample id per impact value is required".into()));
        }
        let mut clean = Vec::with_capacity(values.len());
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < -1e-6 {
                return Err(Error::Config(format!("impact value {v} of sample {} is invalid", sample_ids[k])));
            }
            clean.push(v.max(0.0));
        }
        Ok(ImpactSampleSet { values: clean, sample_ids, mask })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie strictly inside (0, 1), got {alpha}")));
    }
    Ok(())
}

fn checked(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("risk of a non-finite impact is undefined".into()));
    }
    Ok(())
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Tail size `(1 − α) N`, snapped to the nearest integer within 1e-9.
fn tail_size(alpha: f64, n: usize) -> f64 {
    let k = (1.0 - alpha) * n as f64;
    let r = k.round();
    if (k - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvarResult {
    pub value: f64,
    /// Minimiser `v` of the Rockafellar–Uryasev objective.
    pub threshold: f64,
}

/// `min_v v + Σ[q_i − v]⁺ / ((1 − α) N)`.
///
/// The objective is convex and piecewise linear with kinks at the samples,
/// so the minimum is taken over the sorted samples in one pass.
pub fn cvar(values: &[f64], alpha: f64) -> Result<CvarResult> {
    checked(values)?;
    check_alpha(alpha)?;
    let s = sorted_desc(values);
    let denom = (1.0 - alpha) * s.len() as f64;
    let mut best = CvarResult { value: f64::INFINITY, threshold: s[0] };
    let mut prefix = 0.0;
    for (k, &v) in s.iter().enumerate() {
        // k samples strictly above v contribute (x_i − v).
        let obj = v + (prefix - k as f64 * v) / denom;
        if obj < best.value {
            best = CvarResult { value: obj, threshold: v };
        }
        prefix += v;
    }
    Ok(best)
}

/// Mean of the `(1 − α) N` largest samples, the last one weighted by the
/// fractional part of the tail size.
pub fn cvar_sorted(values: &[f64], alpha: f64) -> Result<f64> {
    checked(values)?;
    check_alpha(alpha)?;
    let s = sorted_desc(values);
    let k = tail_size(alpha, s.len());
    if k <= 1.0 {
        return Ok(s[0]);
    }
    let whole = k.floor() as usize;
    let frac = k - whole as f64;
    let mut sum: f64 = s[..whole].iter().sum();
    if frac > 0.0 {
        sum += frac * s[whole];
    }
    Ok(sum / k)
}

/// Upper `(1 − α)` quantile: the `k`-th largest sample for `k = (1 − α) N`,
/// linearly interpolated between neighbouring order statistics when `k` is
/// fractional, and the maximum when `k ≤ 1`.
pub fn var(values: &[f64], alpha: f64) -> Result<f64> {
    checked(values)?;
    check_alpha(alpha)?;
    let s = sorted_desc(values);
    let k = tail_size(alpha, s.len());
    if k <= 1.0 {
        return Ok(s[0]);
    }
    let lo = k.floor() as usize;
    let frac = k - lo as f64;
    let a = s[lo - 1];
    if frac == 0.0 {
        return Ok(a);
    }
    Ok(a + frac * (s[lo] - a))
}

pub fn worst_case(values: &[f64]) -> Result<f64> {
    checked(values)?;
    Ok(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn mean(values: &[f64]) -> Result<f64> {
    checked(values)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_to_ten() -> Vec<f64> {
        (1..=10).map(f64::from).collect()
    }

    #[test]
    fn cvar_of_one_to_ten() {
        let v = one_to_ten();
        assert_eq!(cvar(&v, 0.8).unwrap().value, 9.5);
        assert_eq!(cvar_sorted(&v, 0.8).unwrap(), 9.5);
        assert_eq!(var(&v, 0.8).unwrap(), 9.0);
    }

    #[test]
    fn constant_samples() {
        let v = vec![4.25; 7];
        for a in [0.1, 0.5, 0.93] {
            assert!((cvar(&v, a).unwrap().value - 4.25).abs() < 1e-12);
            assert_eq!(var(&v, a).unwrap(), 4.25);
        }
    }

    #[test]
    fn small_sets() {
        let v = [1.0, 2.0, 3.0];
        assert_eq!(worst_case(&v).unwrap(), 3.0);
        assert_eq!(mean(&v).unwrap(), 2.0);
        assert_eq!(cvar(&v, 0.99).unwrap().value, 3.0);
        assert_eq!(cvar_sorted(&v, 0.99).unwrap(), 3.0);
    }

    #[test]
    fn fractional_tail() {
        // k = 2.5: (10 + 9 + 0.5·8) / 2.5
        let v = one_to_ten();
        assert!((cvar_sorted(&v, 0.75).unwrap() - 9.2).abs() < 1e-12);
        assert!((cvar(&v, 0.75).unwrap().value - 9.2).abs() < 1e-12);
        assert!((var(&v, 0.75).unwrap() - 8.5).abs() < 1e-12);
    }

    #[test]
    fn empty_and_bad_alpha() {
        assert!(matches!(cvar(&[], 0.5), Err(Error::EmptySamples)));
        assert!(matches!(var(&[], 0.5), Err(Error::EmptySamples)));
        assert!(matches!(worst_case(&[]), Err(Error::EmptySamples)));
        assert!(cvar(&[1.0], 1.0).is_err());
        assert!(cvar(&[1.0], 0.0).is_err());
        assert!(cvar(&[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn sample_set_validation() {
        assert!(ImpactSampleSet::new(vec![1.0, -1e-9], vec![0, 1], vec![1.0]).unwrap().values[1] == 0.0);
        assert!(ImpactSampleSet::new(vec![-1.0], vec![0], vec![1.0]).is_err());
        assert!(matches!(ImpactSampleSet::new(vec![], vec![], vec![]), Err(Error::EmptySamples)));
    }

    #[test]
    fn nominal_measure_needs_value() {
        let cfg = RiskConfig { measure: RiskMeasure::Nominal, alpha: 0.5 };
        assert!(cfg.evaluate(&[1.0], None).is_err());
        assert_eq!(cfg.evaluate(&[1.0], Some(7.0)).unwrap(), 7.0);
    }
}
