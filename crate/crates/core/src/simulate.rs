//! Fixed-step time-domain replay of a closed loop under an explicit attack.
//!
//! `ẋ = A_cl x + B_cl a(t)`, `x(0) = 0`, integrated with classical RK4. The
//! running energies `∫‖y_p‖²` and `∫‖y_r‖²` are accumulated with the
//! trapezoidal rule on the integration grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::model::ClosedLoopSystem;
use crate::{Error, Result};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackShape {
    /// `a(t) = 1` for `t ≥ 0`.
    Step,
    Zero,
    /// Samples spaced `dt` apart starting at `t = 0`, linearly interpolated
    /// and zero after the last sample.
    Custom {
        dt: f64,
        samples: Vec<Vec<f64>>,
    },
}

/// Attack signal on all `n_u` channels; protected channels are silenced by the
/// mask carried in the system, not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSignal {
    pub shape: AttackShape,
    pub amplitude: Vec<f64>,
}

impl AttackSignal {
    pub fn step(n_u: usize) -> Self {
        AttackSignal { shape: AttackShape::Step, amplitude: vec![1.0; n_u] }
    }

    pub fn zero(n_u: usize) -> Self {
        AttackSignal { shape: AttackShape::Zero, amplitude: vec![0.0; n_u] }
    }

    pub fn custom(dt: f64, samples: Vec<Vec<f64>>) -> Result<Self> {
        let n_u = samples.first().map_or(0, Vec::len);
        let s = AttackSignal { shape: AttackShape::Custom { dt, samples }, amplitude: vec![1.0; n_u] };
        s.validate(n_u)?;
        Ok(s)
    }

    pub fn n_u(&self) -> usize {
        self.amplitude.len()
    }

    pub fn validate(&self, n_u: usize) -> Result<()> {
        if self.amplitude.len() != n_u {
            return Err(Error::Config(format!(
                "attack amplitude has {} channels, system has {n_u}",
                self.amplitude.len()
            )));
        }
        if self.amplitude.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("attack amplitude must be finite".into()));
        }
        if let AttackShape::Custom { dt, samples } = &self.shape {
            if !(*dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("custom attack spacing must be positive, got {dt}")));
            }
            if samples.is_empty() {
                return Err(Error::Config("custom attack needs at least one sample".into()));
            }
            for (k, s) in samples.iter().enumerate() {
                if s.len() != n_u {
                    return Err(Error::Config(format!("custom attack sample {k} has {} channels", s.len())));
                }
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config(format!("custom attack sample {k} is not finite")));
                }
            }
        }
        Ok(())
    }

    /// Channel values at time `t`.
    pub fn value(&self, t: f64) -> DVector<f64> {
        let n_u = self.n_u();
        let base = match &self.shape {
            AttackShape::Zero => return DVector::zeros(n_u),
            AttackShape::Step if t < 0.0 => return DVector::zeros(n_u),
            AttackShape::Step => DVector::from_element(n_u, 1.0),
            AttackShape::Custom { dt, samples } => {
                let pos = t / dt;
                if pos < 0.0 || pos > (samples.len() - 1) as f64 {
                    return DVector::zeros(n_u);
                }
                let k = (pos.floor() as usize).min(samples.len() - 1);
                let w = pos - k as f64;
                let lo = DVector::from_column_slice(&samples[k]);
                if w == 0.0 || k + 1 == samples.len() {
                    lo
                } else {
                    lo * (1.0 - w) + DVector::from_column_slice(&samples[k + 1]) * w
                }
            }
        };
        base.component_mul(&DVector::from_column_slice(&self.amplitude))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub dt: f64,
    pub horizon: f64,
    /// Detection threshold `ε_r` for the alarm time.
    pub threshold: f64,
    /// Keep every `stride`-th grid point in the stored trajectories; the final
    /// point is always kept. Energies use the full grid regardless.
    pub stride: usize,
    pub keep_states: bool,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings { dt: DEFAULT_DT, horizon: DEFAULT_HORIZON, threshold: 1.0, stride: 1, keep_states: true }
    }
}

impl SimulationSettings {
    pub fn new(dt: f64, horizon: f64) -> Self {
        SimulationSettings { dt, horizon, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.threshold.is_nan() {
            return Err(Error::Config("threshold is NaN".into()));
        }
        Ok(())
    }

    /// Step count and effective step so that `steps · dt = horizon` exactly.
    fn grid(&self) -> (usize, f64) {
        let steps = ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (steps, self.horizon / steps as f64)
    }
}

/// Trajectories are stored on the strided grid `t`; energies are cumulative
/// and non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub sample_id: Option<usize>,
    pub dt: f64,
    pub horizon: f64,
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub y_p: Vec<Vec<f64>>,
    pub y_r: Vec<Vec<f64>>,
    pub perf_energy: Vec<f64>,
    pub det_energy: Vec<f64>,
    /// First grid time with cumulative detection energy above the threshold.
    pub alarm_time: Option<f64>,
}

impl SimulationRun {
    pub fn final_perf_energy(&self) -> f64 {
        *self.perf_energy.last().unwrap()
    }

    pub fn final_det_energy(&self) -> f64 {
        *self.det_energy.last().unwrap()
    }
}

/// Trapezoidal `∫ s(t)² dt` over uniformly spaced samples.
pub fn energy(samples: &[f64], dt: f64) -> f64 {
    assert!(dt > 0.0, "dt must be positive");
    samples.windows(2).map(|w| 0.5 * dt * (w[0] * w[0] + w[1] * w[1])).sum()
}

pub fn simulate(sys: &ClosedLoopSystem, attack: &AttackSignal, settings: &SimulationSettings) -> Result<SimulationRun> {
    settings.validate()?;
    attack.validate(sys.n_u())?;
    if !linalg::is_hurwitz(&sys.a) {
        return Err(Error::Model("closed loop is not Hurwitz; simulation requires a stable system".into()));
    }
    let (steps, h) = settings.grid();
    let a = &sys.a;
    let b = sys.b_cl();
    let f = |x: &DVector<f64>, t: f64| -> DVector<f64> { a * x + &b * attack.value(t) };
    let sq = |c: &DMatrix<f64>, x: &DVector<f64>| (c * x).norm_squared();

    let capacity = steps / settings.stride + 2;
    let mut run = SimulationRun {
        sample_id: sys.sample_id,
        dt: h,
        horizon: settings.horizon,
        t: Vec::with_capacity(capacity),
        states: Vec::new(),
        y_p: Vec::with_capacity(capacity),
        y_r: Vec::with_capacity(capacity),
        perf_energy: Vec::with_capacity(capacity),
        det_energy: Vec::with_capacity(capacity),
        alarm_time: None,
    };
    let record = |run: &mut SimulationRun, t: f64, x: &DVector<f64>, ep: f64, er: f64| {
        run.t.push(t);
        if settings.keep_states {
            run.states.push(x.as_slice().to_vec());
        }
        run.y_p.push((&sys.c_p * x).as_slice().to_vec());
        run.y_r.push((&sys.c_r * x).as_slice().to_vec());
        run.perf_energy.push(ep);
        run.det_energy.push(er);
    };

    let mut x = DVector::zeros(sys.n());
    let (mut ep, mut er) = (0.0, 0.0);
    let (mut pp, mut pr) = (0.0, 0.0);
    record(&mut run, 0.0, &x, ep, er);
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(&x, t);
        let k2 = f(&(&x + &k1 * (0.5 * h)), t + 0.5 * h);
        let k3 = f(&(&x + &k2 * (0.5 * h)), t + 0.5 * h);
        let k4 = f(&(&x + &k3 * h), t + h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t1 = (k + 1) as f64 * h;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Simulation { time: t1 });
        }
        let (np, nr) = (sq(&sys.c_p, &x), sq(&sys.c_r, &x));
        ep += 0.5 * h * (pp + np);
        er += 0.5 * h * (pr + nr);
        (pp, pr) = (np, nr);
        if run.alarm_time.is_none() && er > settings.threshold {
            run.alarm_time = Some(t1);
        }
        if (k + 1) % settings.stride == 0 || k + 1 == steps {
            record(&mut run, t1, &x, ep, er);
        }
    }
    Ok(run)
}

/// Independent runs over an ensemble, in input order.
pub fn simulate_ensemble(
    systems: &[ClosedLoopSystem],
    attack: &AttackSignal,
    settings: &SimulationSettings,
) -> Result<Vec<SimulationRun>> {
    systems.par_iter().map(|s| simulate(s, attack, settings)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> ClosedLoopSystem {
        ClosedLoopSystem {
            a: DMatrix::from_element(1, 1, -1.0),
            b_attack: DMatrix::from_element(1, 1, 1.0),
            c_p: DMatrix::from_element(1, 1, 1.0),
            c_r: DMatrix::from_element(1, 1, 0.5),
            z: vec![1.0],
            delta: vec![],
            sample_id: None,
        }
    }

    #[test]
    fn scalar_step_energy_matches_closed_form() {
        let run = simulate(&scalar(), &AttackSignal::step(1), &SimulationSettings::new(1e-3, 20.0)).unwrap();
        let exact = 20.0 - 2.0 * (1.0 - (-20.0f64).exp()) + 0.5 * (1.0 - (-40.0f64).exp());
        assert!((run.final_perf_energy() - exact).abs() < 1e-6 * exact);
        assert!((run.final_det_energy() - 0.25 * exact).abs() < 1e-6 * exact);
        assert!((exact - 18.5).abs() < 0.005 * 18.5);
        assert!(run.perf_energy.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn zero_attack_stays_at_rest() {
        let run = simulate(&scalar(), &AttackSignal::zero(1), &SimulationSettings::default()).unwrap();
        assert_eq!(run.final_perf_energy(), 0.0);
        assert!(run.alarm_time.is_none());
        assert!(run.y_p.iter().all(|y| y[0] == 0.0));
    }

    #[test]
    fn masked_channel_is_silent() {
        let sys = scalar().with_mask(&[0.0]);
        let run = simulate(&sys, &AttackSignal::step(1), &SimulationSettings::default()).unwrap();
        assert_eq!(run.final_det_energy(), 0.0);
    }

    #[test]
    fn alarm_is_first_crossing() {
        let mut s = SimulationSettings::new(1e-3, 20.0);
        s.threshold = 1.0;
        let run = simulate(&scalar(), &AttackSignal::step(1), &s).unwrap();
        let t = run.alarm_time.unwrap();
        let i = run.t.iter().position(|&x| (x - t).abs() < 1e-12).unwrap();
        assert!(run.det_energy[i] > 1.0 && run.det_energy[i - 1] <= 1.0);
    }

    #[test]
    fn energy_rule() {
        let ones = vec![1.0; 1001];
        assert!((energy(&ones, 1e-3) - 1.0).abs() < 1e-3);
        let n = 100_000;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let s: Vec<f64> = (0..=n).map(|k| (k as f64 * h).sin()).collect();
        assert!((energy(&s, h) - std::f64::consts::PI).abs() < 1e-3 * std::f64::consts::PI);
        assert_eq!(energy(&[0.0; 10], 0.1), 0.0);
    }

    #[test]
    fn custom_signal_interpolates() {
        let sig = AttackSignal::custom(1.0, vec![vec![0.0], vec![2.0]]).unwrap();
        assert!((sig.value(0.25)[0] - 0.5).abs() < 1e-15);
        assert_eq!(sig.value(1.0)[0], 2.0);
        assert_eq!(sig.value(1.5)[0], 0.0);
        assert!(AttackSignal::custom(1.0, vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn unstable_loop_rejected() {
        let mut s = scalar();
        s.a[(0, 0)] = 1.0;
        assert!(matches!(simulate(&s, &AttackSignal::step(1), &SimulationSettings::default()), Err(Error::Model(_))));
    }
}
