//! Uncertain process, controller and detector models, uncertainty sampling
//! and closed-loop assembly under actuator attack.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Uncertain plant `ẋ = (A + ΔA(δ)) x + (B + ΔB(δ)) ũ`, `y = C x`, `y_p = C_j x`.
///
/// The perturbations are affine in the parameter offset `d`:
/// `ΔA(d) = Σ_k d_k a_delta[k]`, so `ΔA(0) = 0` holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessModel {
    #[serde(with = "crate::matrix_serde")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub b: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub c: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub c_perf: DMatrix<f64>,
    #[serde(default, with = "crate::matrix_serde::vec")]
    pub a_delta: Vec<DMatrix<f64>>,
    #[serde(default, with = "crate::matrix_serde::vec")]
    pub b_delta: Vec<DMatrix<f64>>,
}

impl ProcessModel {
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_m(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.a_delta.len().max(self.b_delta.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_x();
        expect_shape("A", &self.a, n, n)?;
        expect_shape("B", &self.b, n, self.n_u())?;
        expect_shape("C", &self.c, self.n_m(), n)?;
        expect_shape("C_j", &self.c_perf, self.c_perf.nrows(), n)?;
        for (k, m) in self.a_delta.iter().enumerate() {
            expect_shape(&format!("a_delta[{k}]"), m, n, n)?;
        }
        for (k, m) in self.b_delta.iter().enumerate() {
            expect_shape(&format!("b_delta[{k}]"), m, n, self.n_u())?;
        }
        if !self.b_delta.is_empty() && !self.a_delta.is_empty() && self.b_delta.len() != self.a_delta.len() {
            return Err(Error::Model(format!(
                "a_delta has {} parameters but b_delta has {}",
                self.a_delta.len(),
                self.b_delta.len()
            )));
        }
        Ok(())
    }

    /// `(ΔA(d), ΔB(d))` for a parameter offset `d`.
    pub fn perturbation(&self, d: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if d.len() != self.n_params() {
            return Err(Error::Model(format!(
                "uncertainty has {} parameters, model expects {}",
                d.len(),
                self.n_params()
            )));
        }
        let mut da = DMatrix::zeros(self.n_x(), self.n_x());
        for (m, &dk) in self.a_delta.iter().zip(d) {
            da += m * dk;
        }
        let mut db = DMatrix::zeros(self.n_x(), self.n_u());
        for (m, &dk) in self.b_delta.iter().zip(d) {
            db += m * dk;
        }
        Ok((da, db))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerModel {
    /// `ż = A_c z + B_c y`, `u = C_c z + D_c y`.
    Dynamic {
        #[serde(with = "crate::matrix_serde")]
        ac: DMatrix<f64>,
        #[serde(with = "crate::matrix_serde")]
        bc: DMatrix<f64>,
        #[serde(with = "crate::matrix_serde")]
        cc: DMatrix<f64>,
        #[serde(with = "crate::matrix_serde")]
        dc: DMatrix<f64>,
    },
    /// `u = -L x̂` where `x̂` is the detector's state estimate.
    ObserverFeedback {
        #[serde(with = "crate::matrix_serde")]
        l: DMatrix<f64>,
    },
}

/// Observer-based detector `x̂' = A x̂ + B u + K y_r`, `y_r = y - C x̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    #[serde(with = "crate::matrix_serde")]
    pub k: DMatrix<f64>,
    /// Alarm threshold `ε_r` on the residual energy.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[non_exhaustive]
pub enum Distribution {
    #[default]
    Uniform,
}

/// Closed box `Ω = [lower, upper]` over the uncertain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Parameter value the controller and detector were designed for.
    /// Empty means the origin.
    #[serde(default)]
    pub nominal: Vec<f64>,
    #[serde(default)]
    pub distribution: Distribution,
    #[serde(default)]
    pub seed: u64,
}

impl UncertaintySpec {
    pub fn interval(lower: f64, upper: f64, nominal: f64) -> Self {
        UncertaintySpec {
            lower: vec![lower],
            upper: vec![upper],
            nominal: vec![nominal],
            distribution: Distribution::Uniform,
            seed: 0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.lower.len()
    }

    pub fn nominal(&self) -> Vec<f64> {
        if self.nominal.is_empty() {
            vec![0.0; self.n_params()]
        } else {
            self.nominal.clone()
        }
    }

    pub fn contains(&self, delta: &[f64]) -> bool {
        delta.len() == self.n_params()
            && delta.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&d, (&lo, &hi))| lo <= d && d <= hi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Config("lower and upper bounds differ in length".into()));
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Config(format!("invalid bounds [{lo}, {hi}] for parameter {k}")));
            }
        }
        if !self.nominal.is_empty() && self.nominal.len() != self.n_params() {
            return Err(Error::Config("nominal point has the wrong number of parameters".into()));
        }
        Ok(())
    }
}

/// Draws `n` parameter vectors from the box using the spec's own seed.
pub fn sample_uncertainties(spec: &UncertaintySpec, n: usize) -> Result<Vec<Vec<f64>>> {
    sample_uncertainties_seeded(spec, n, spec.seed)
}

pub fn sample_uncertainties_seeded(spec: &UncertaintySpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| match spec.distribution {
            Distribution::Uniform => spec
                .lower
                .iter()
                .zip(&spec.upper)
                .map(|(&lo, &hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                .collect(),
        })
        .collect();
    Ok(samples)
}

/// Diagonal of the attack matrix `B_a`: 1 marks an attackable channel, 0 a
/// protected one. Relaxed masks carry values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionMask {
    pub z: Vec<f64>,
    /// Number of protections available (`n_w`).
    pub budget: usize,
}

impl ProtectionMask {
    pub fn unprotected(n_u: usize) -> Self {
        ProtectionMask { z: vec![1.0; n_u], budget: 0 }
    }

    pub fn protecting(n_u: usize, protected: &[usize]) -> Self {
        let mut z = vec![1.0; n_u];
        for &i in protected {
            z[i] = 0.0;
        }
        ProtectionMask { z, budget: protected.len() }
    }

    pub fn relaxed(z: Vec<f64>, budget: usize) -> Self {
        ProtectionMask { z, budget }
    }

    pub fn n_u(&self) -> usize {
        self.z.len()
    }

    pub fn is_binary(&self) -> bool {
        self.z.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn protected(&self) -> Vec<usize> {
        self.z.iter().enumerate().filter(|(_, &v)| v == 0.0).map(|(i, _)| i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget > self.n_u() {
            return Err(Error::Config(format!("budget {} exceeds {} actuators", self.budget, self.n_u())));
        }
        if self.is_binary() {
            let attackable: f64 = self.z.iter().sum();
            if attackable < (self.n_u() - self.budget) as f64 {
                return Err(Error::Config(format!(
                    "mask protects {} actuators but the budget is {}",
                    self.n_u() - attackable as usize,
                    self.budget
                )));
            }
        } else if self.z.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Config("relaxed mask entries must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Closed loop under attack: `ẋ = A_cl x + B_cl a`, `y_p = C_p x`, `y_r = C_r x`
/// with `B_cl = b_attack · diag(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopSystem {
    #[serde(with = "crate::matrix_serde")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub b_attack: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub c_p: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub c_r: DMatrix<f64>,
    pub z: Vec<f64>,
    pub delta: Vec<f64>,
    pub sample_id: Option<usize>,
}

impl ClosedLoopSystem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b_attack.ncols()
    }

    pub fn b_cl(&self) -> DMatrix<f64> {
        let mut b = self.b_attack.clone();
        for (j, &zj) in self.z.iter().enumerate() {
            b.column_mut(j).scale_mut(zj);
        }
        b
    }

    /// Attack input restricted to channels with a nonzero mask entry.
    pub fn active_b_cl(&self) -> DMatrix<f64> {
        let cols: Vec<usize> = (0..self.n_u()).filter(|&j| self.z[j] != 0.0).collect();
        let mut b = DMatrix::zeros(self.n(), cols.len());
        for (k, &j) in cols.iter().enumerate() {
            b.set_column(k, &(self.b_attack.column(j) * self.z[j]));
        }
        b
    }

    pub fn with_mask(&self, z: &[f64]) -> ClosedLoopSystem {
        assert_eq!(z.len(), self.n_u(), "mask length");
        ClosedLoopSystem { z: z.to_vec(), ..self.clone() }
    }
}

fn expect_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Model(format!("{name} is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_mask(mask: &ProtectionMask, n_u: usize) -> Result<()> {
    if mask.n_u() != n_u {
        return Err(Error::Model(format!("mask has {} entries for {n_u} actuators", mask.n_u())));
    }
    Ok(())
}

/// Assembles the closed loop for the parameter offset `d` (`ΔA(d)`, `ΔB(d)`).
///
/// The controller and detector always use the nominal matrices; only the
/// process carries the perturbation.
pub fn assemble_closed_loop(
    p: &ProcessModel,
    c: &ControllerModel,
    det: &DetectorModel,
    mask: &ProtectionMask,
    d: &[f64],
) -> Result<ClosedLoopSystem> {
    p.validate()?;
    check_mask(mask, p.n_u())?;
    let (nx, nu, nm) = (p.n_x(), p.n_u(), p.n_m());
    expect_shape("K", &det.k, nx, nm)?;
    let (da, db) = p.perturbation(d)?;
    let a_unc = &p.a + da;
    let b_unc = &p.b + db;
    let obs = &p.a - &det.k * &p.c;
    let np = p.c_perf.nrows();

    let (a_cl, n_ctrl) = match c {
        ControllerModel::Dynamic { ac, bc, cc, dc } => {
            let nz = ac.nrows();
            expect_shape("A_c", ac, nz, nz)?;
            expect_shape("B_c", bc, nz, nm)?;
            expect_shape("C_c", cc, nu, nz)?;
            expect_shape("D_c", dc, nu, nm)?;
            let a11 = &a_unc + &b_unc * dc * &p.c;
            let a12 = &b_unc * cc;
            let a21 = bc * &p.c;
            let a31 = (&p.b * dc + &det.k) * &p.c;
            let a32 = &p.b * cc;
            let a = linalg::block(
                &[nx, nz, nx],
                &[nx, nz, nx],
                &[
                    &[Some(&a11), Some(&a12), None],
                    &[Some(&a21), Some(ac), None],
                    &[Some(&a31), Some(&a32), Some(&obs)],
                ],
            );
            (a, nz)
        }
        ControllerModel::ObserverFeedback { l } => {
            expect_shape("L", l, nu, nx)?;
            let a12 = -(&b_unc * l);
            let a21 = &det.k * &p.c;
            let a22 = &obs - &p.b * l;
            let a = linalg::block(&[nx, nx], &[nx, nx], &[&[Some(&a_unc), Some(&a12)], &[Some(&a21), Some(&a22)]]);
            (a, 0)
        }
    };
    let n = 2 * nx + n_ctrl;
    let mut b_attack = DMatrix::zeros(n, nu);
    b_attack.view_mut((0, 0), (nx, nu)).copy_from(&b_unc);
    let mut c_p = DMatrix::zeros(np, n);
    c_p.view_mut((0, 0), (np, nx)).copy_from(&p.c_perf);
    let mut c_r = DMatrix::zeros(nm, n);
    c_r.view_mut((0, 0), (nm, nx)).copy_from(&p.c);
    c_r.view_mut((0, n - nx), (nm, nx)).copy_from(&(-&p.c));

    Ok(ClosedLoopSystem { a: a_cl, b_attack, c_p, c_r, z: mask.z.clone(), delta: d.to_vec(), sample_id: None })
}

/// A closed loop given directly as `A_cl(d) = A_0 + Σ d_k a_delta[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectClosedLoop {
    #[serde(with = "crate::matrix_serde")]
    pub a: DMatrix<f64>,
    #[serde(default, with = "crate::matrix_serde::vec")]
    pub a_delta: Vec<DMatrix<f64>>,
    #[serde(with = "crate::matrix_serde")]
    pub b_attack: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub c_p: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub c_r: DMatrix<f64>,
}

impl DirectClosedLoop {
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        expect_shape("A_cl", &self.a, n, n)?;
        expect_shape("B_cl", &self.b_attack, n, self.b_attack.ncols())?;
        expect_shape("C_p", &self.c_p, self.c_p.nrows(), n)?;
        expect_shape("C_r", &self.c_r, self.c_r.nrows(), n)?;
        for (k, m) in self.a_delta.iter().enumerate() {
            expect_shape(&format!("a_delta[{k}]"), m, n, n)?;
        }
        Ok(())
    }

    pub fn assemble(&self, mask: &ProtectionMask, d: &[f64]) -> Result<ClosedLoopSystem> {
        self.validate()?;
        check_mask(mask, self.b_attack.ncols())?;
        if d.len() != self.a_delta.len() {
            return Err(Error::Model(format!(
                "uncertainty has {} parameters, model expects {}",
                d.len(),
                self.a_delta.len()
            )));
        }
        let mut a = self.a.clone();
        for (m, &dk) in self.a_delta.iter().zip(d) {
            a += m * dk;
        }
        Ok(ClosedLoopSystem {
            a,
            b_attack: self.b_attack.clone(),
            c_p: self.c_p.clone(),
            c_r: self.c_r.clone(),
            z: mask.z.clone(),
            delta: d.to_vec(),
            sample_id: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPlant {
    pub process: ProcessModel,
    pub controller: ControllerModel,
    pub detector: DetectorModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum PlantModel {
    Structured(StructuredPlant),
    ClosedLoop(DirectClosedLoop),
}

/// A plant family together with the box its uncertain parameters live in.
///
/// Parameters are absolute; the models see the offset from the nominal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantEnsemble {
    pub name: String,
    pub model: PlantModel,
    pub uncertainty: UncertaintySpec,
}

impl PlantEnsemble {
    pub fn n_u(&self) -> usize {
        match &self.model {
            PlantModel::Structured(s) => s.process.n_u(),
            PlantModel::ClosedLoop(d) => d.b_attack.ncols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.uncertainty.validate()?;
        let n_params = match &self.model {
            PlantModel::Structured(s) => {
                s.process.validate()?;
                if s.detector.threshold <= 0.0 {
                    return Err(Error::Model("detector threshold must be positive".into()));
                }
                s.process.n_params()
            }
            PlantModel::ClosedLoop(d) => {
                d.validate()?;
                d.a_delta.len()
            }
        };
        if n_params != self.uncertainty.n_params() {
            return Err(Error::Model(format!(
                "model has {n_params} uncertain parameters, box has {}",
                self.uncertainty.n_params()
            )));
        }
        Ok(())
    }

    /// Closed loop at the absolute parameter value `delta`.
    pub fn system(&self, delta: &[f64], mask: &ProtectionMask) -> Result<ClosedLoopSystem> {
        let nominal = self.uncertainty.nominal();
        if delta.len() != nominal.len() {
            return Err(Error::Model("parameter vector has the wrong length".into()));
        }
        let offset: Vec<f64> = delta.iter().zip(&nominal).map(|(d, n)| d - n).collect();
        let mut sys = match &self.model {
            PlantModel::Structured(s) => assemble_closed_loop(&s.process, &s.controller, &s.detector, mask, &offset)?,
            PlantModel::ClosedLoop(d) => d.assemble(mask, &offset)?,
        };
        sys.delta = delta.to_vec();
        Ok(sys)
    }

    pub fn nominal_system(&self, mask: &ProtectionMask) -> Result<ClosedLoopSystem> {
        self.system(&self.uncertainty.nominal(), mask)
    }

    /// Unprotected closed loops for `n` sampled parameters.
    pub fn sample_systems(&self, n: usize, seed: u64) -> Result<Vec<ClosedLoopSystem>> {
        let mask = ProtectionMask::unprotected(self.n_u());
        sample_uncertainties_seeded(&self.uncertainty, n, seed)?
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut s = self.system(d, &mask)?;
                s.sample_id = Some(i);
                Ok(s)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCheck {
    pub sample_id: Option<usize>,
    pub spectral_abscissa: f64,
    pub stable: bool,
    pub controllable: bool,
    pub observable_perf: bool,
    pub observable_resid: bool,
}

impl SampleCheck {
    pub fn passed(&self) -> bool {
        self.stable && self.controllable && self.observable_perf && self.observable_resid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub samples: Vec<SampleCheck>,
}

impl AssumptionReport {
    pub fn all_stable(&self) -> bool {
        self.samples.iter().all(|s| s.stable)
    }

    pub fn passed(&self) -> bool {
        self.samples.iter().all(SampleCheck::passed)
    }
}

/// Stability, controllability and observability of every system.
pub fn check_assumptions(systems: &[ClosedLoopSystem]) -> AssumptionReport {
    let samples = systems
        .iter()
        .map(|s| {
            let sa = linalg::spectral_abscissa(&s.a);
            SampleCheck {
                sample_id: s.sample_id,
                spectral_abscissa: sa,
                stable: sa < 0.0,
                controllable: linalg::is_controllable(&s.a, &s.b_cl()),
                observable_perf: linalg::is_observable(&s.a, &s.c_p),
                observable_resid: linalg::is_observable(&s.a, &s.c_r),
            }
        })
        .collect();
    AssumptionReport { samples }
}
