//! Worst-case stealthy attack impact and its convex upper bound.
//!
//! For a closed loop `(A, B, C_p, C_r)` the impact is the largest performance
//! energy `‖y_p‖²` an attack can cause while keeping `‖y_r‖² ≤ ε_r` and
//! `‖a‖² ≤ ε_a`. It is certified by the dual LMI
//!
//! ```text
//! [ AᵀP + PA + C_pᵀC_p − γ₁C_rᵀC_r   PB   ]
//! [ BᵀP                             −γ₂I  ] ⪯ 0,   P ≻ 0
//! ```
//!
//! minimising `ε_r γ₁ + ε_a γ₂`. The relaxed variant works in `X = P⁻¹` and
//! bounds `−γ₁ X C_rᵀC_r X` by `−XUᵀ − UX + γ₁⁻¹ I` with `UᵀU = C_rᵀC_r`; the
//! result is affine in `B` and therefore in the protection mask.

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ClosedLoopSystem;
use crate::sdp::{self, AffMatrix, Affine, ConicProgram, SolveStatus, SolverSettings, SymVar, Var, STRICT_MARGIN};

/// Detection threshold `ε_r` and attack energy budget `ε_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactBudget {
    pub eps_r: f64,
    pub eps_a: f64,
}

impl ImpactBudget {
    pub fn new(eps_r: f64, eps_a: f64) -> Result<Self> {
        let b = ImpactBudget { eps_r, eps_a };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r > 0.0 && self.eps_r.is_finite() && self.eps_a > 0.0 && self.eps_a.is_finite()) {
            return Err(Error::Config(format!(
                "impact budget needs finite positive eps_r and eps_a, got ({}, {})",
                self.eps_r, self.eps_a
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactKind {
    Exact,
    #[default]
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactCertificate {
    /// `ε_r γ₁ + ε_a γ₂`.
    pub value: f64,
    pub gamma_r: f64,
    pub gamma_a: f64,
    /// `P` for exact certificates, `X` for relaxed ones. Absent when no
    /// attack channel is active.
    #[serde(with = "crate::matrix_serde::option", default)]
    pub certificate: Option<DMatrix<f64>>,
    pub kind: ImpactKind,
    pub status: SolveStatus,
    /// `γ₁` sits on its strictness floor.
    pub gamma_r_at_floor: bool,
    pub solve_time: f64,
    pub iterations: u32,
}

impl ImpactCertificate {
    fn trivial(kind: ImpactKind) -> Self {
        ImpactCertificate {
            value: 0.0,
            gamma_r: 0.0,
            gamma_a: 0.0,
            certificate: None,
            kind,
            status: SolveStatus::Optimal,
            gamma_r_at_floor: false,
            solve_time: 0.0,
            iterations: 0,
        }
    }
}

/// Square root `U` (n×n, upper triangular) with `UᵀU = C_rᵀC_r`.
///
/// Computed as the `R` factor of a QR decomposition of `C_r` with a
/// nonnegative diagonal, padded with zero rows; this is the Cholesky factor
/// whenever `C_rᵀC_r` is nonsingular.
pub fn factor_cr(c_r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c_r.ncols();
    let mut u = DMatrix::zeros(n, n);
    if c_r.nrows() == 0 || n == 0 {
        return u;
    }
    let r = c_r.clone().qr().r();
    for i in 0..r.nrows() {
        let sign = if r[(i, i)] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            u[(i, j)] = sign * r[(i, j)];
        }
    }
    u
}

fn check_budget_and_system(sys: &ClosedLoopSystem, budget: &ImpactBudget) -> Result<()> {
    budget.validate()?;
    let n = sys.n();
    if sys.a.ncols() != n || sys.b_attack.nrows() != n || sys.c_p.ncols() != n || sys.c_r.ncols() != n {
        return Err(Error::Model("closed-loop matrices have inconsistent dimensions".into()));
    }
    if sys.z.len() != sys.n_u() {
        return Err(Error::Model("mask length differs from the number of attack channels".into()));
    }
    Ok(())
}

fn gram(c: &DMatrix<f64>) -> DMatrix<f64> {
    c.transpose() * c
}

/// `AᵀP + PA + C_pᵀC_p − γ₁ C_rᵀC_r` with the `B` coupling, as a ⪯ 0 block.
fn exact_lmi(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c_p: &DMatrix<f64>,
    c_r: &DMatrix<f64>,
    p: &SymVar,
    g1: &Affine,
    g2: &Affine,
) -> AffMatrix {
    let n = a.nrows();
    let m = b.ncols();
    let pe = p.expr();
    let pa = pe.mul_right(a);
    let w = pa
        .add(&pa.transpose())
        .add(&AffMatrix::constant(&gram(c_p)))
        .add(&AffMatrix::from_fn(n, n, |i, j| g1.scale(-gram(c_r)[(i, j)])));
    let pb = pe.mul_right(b);
    let g2i = AffMatrix::scaled_identity(&g2.scale(-1.0), m);
    AffMatrix::block(&[n, m], &[n, m], &[&[Some(&w), Some(&pb)], &[Some(&pb.transpose()), Some(&g2i)]])
}

/// Relaxed block LMI (⪯ 0) in `X`, `γ₁`, `γ₂` for an attack matrix `b` that
/// may itself be affine in further variables.
pub(crate) fn relaxed_lmi(
    a: &DMatrix<f64>,
    b: &AffMatrix,
    c_p: &DMatrix<f64>,
    u: &DMatrix<f64>,
    x: &SymVar,
    g1: Var,
    g2: Var,
) -> AffMatrix {
    let n = a.nrows();
    let m = b.ncols();
    let np = c_p.nrows();
    let xe = x.expr();
    let ax = xe.mul_left(a);
    let ux = xe.mul_left(u);
    let w2 = ax.add(&ax.transpose()).sub(&ux).sub(&ux.transpose());
    let cpx = xe.mul_left(c_p);
    let eye_n = AffMatrix::constant(&DMatrix::identity(n, n));
    let minus_ip = AffMatrix::constant(&(-DMatrix::identity(np, np)));
    let g1i = AffMatrix::scaled_identity(&Affine::term(g1, -1.0), n);
    let g2i = AffMatrix::scaled_identity(&Affine::term(g2, -1.0), m);
    let bt = b.transpose();
    let xcpt = cpx.transpose();
    AffMatrix::block(
        &[np, n, n, m],
        &[np, n, n, m],
        &[
            &[Some(&minus_ip), None, Some(&cpx), None],
            &[None, Some(&g1i), Some(&eye_n), None],
            &[Some(&xcpt), Some(&eye_n), Some(&w2), Some(b)],
            &[None, None, Some(&bt), Some(&g2i)],
        ],
    )
}

fn status_error(status: SolveStatus, what: &str) -> Error {
    match status {
        SolveStatus::Infeasible => Error::ImpactUnbounded { status },
        _ => Error::Solver { status, detail: format!("{what} did not reach an optimum") },
    }
}

/// Exact impact `q` for the system's mask.
pub fn exact_impact(sys: &ClosedLoopSystem, budget: &ImpactBudget) -> Result<ImpactCertificate> {
    exact_impact_with(sys, budget, &SolverSettings::default())
}

pub fn exact_impact_with(
    sys: &ClosedLoopSystem,
    budget: &ImpactBudget,
    settings: &SolverSettings,
) -> Result<ImpactCertificate> {
    check_budget_and_system(sys, budget)?;
    let b = sys.active_b_cl();
    if b.ncols() == 0 {
        let mut cert = ImpactCertificate::trivial(ImpactKind::Exact);
        cert.certificate = linalg::lyapunov(&sys.a, &gram(&sys.c_p));
        return Ok(cert);
    }
    let mut prog = ConicProgram::new();
    let p = prog.sym_matrix("P", sys.n());
    let g1 = prog.scalar("gamma_r");
    let g2 = prog.scalar("gamma_a");
    prog.minimize(Affine::term(g1, budget.eps_r) + Affine::term(g2, budget.eps_a));
    prog.add_nsd(&exact_lmi(&sys.a, &b, &sys.c_p, &sys.c_r, &p, &Affine::var(g1), &Affine::var(g2)));
    prog.add_psd(&sdp::strictify(&p.expr(), STRICT_MARGIN));
    prog.add_ge(Affine::var(g1));
    prog.add_ge(Affine::var(g2));
    let out = prog.solve(settings);
    if !out.is_optimal() {
        return Err(status_error(out.status, "exact impact program"));
    }
    let (gr, ga) = (out.var(g1).unwrap(), out.var(g2).unwrap());
    Ok(ImpactCertificate {
        value: budget.eps_r * gr + budget.eps_a * ga,
        gamma_r: gr,
        gamma_a: ga,
        certificate: out.sym(&p),
        kind: ImpactKind::Exact,
        status: out.status,
        gamma_r_at_floor: false,
        solve_time: out.stats.solve_time,
        iterations: out.stats.iterations,
    })
}

/// Convex upper bound `q̃ ≥ q`.
pub fn relaxed_impact(sys: &ClosedLoopSystem, budget: &ImpactBudget) -> Result<ImpactCertificate> {
    relaxed_impact_with(sys, budget, &SolverSettings::default())
}

pub fn relaxed_impact_with(
    sys: &ClosedLoopSystem,
    budget: &ImpactBudget,
    settings: &SolverSettings,
) -> Result<ImpactCertificate> {
    check_budget_and_system(sys, budget)?;
    let b = sys.active_b_cl();
    if b.ncols() == 0 {
        return Ok(ImpactCertificate::trivial(ImpactKind::Relaxed));
    }
    let u = factor_cr(&sys.c_r);
    let mut prog = ConicProgram::new();
    let x = prog.sym_matrix("X", sys.n());
    let g1 = prog.scalar("gamma_r");
    let g2 = prog.scalar("gamma_a");
    prog.minimize(Affine::term(g1, budget.eps_r) + Affine::term(g2, budget.eps_a));
    prog.add_nsd(&relaxed_lmi(&sys.a, &AffMatrix::constant(&b), &sys.c_p, &u, &x, g1, g2));
    prog.add_psd(&sdp::strictify(&x.expr(), STRICT_MARGIN));
    prog.add_ge(sdp::strictify_scalar(&Affine::var(g1), STRICT_MARGIN));
    prog.add_ge(Affine::var(g2));
    let out = prog.solve(settings);
    if !out.is_optimal() {
        return Err(status_error(out.status, "relaxed impact program"));
    }
    let (gr, ga) = (out.var(g1).unwrap(), out.var(g2).unwrap());
    Ok(ImpactCertificate {
        value: budget.eps_r * gr + budget.eps_a * ga,
        gamma_r: gr,
        gamma_a: ga,
        certificate: out.sym(&x),
        kind: ImpactKind::Relaxed,
        status: out.status,
        gamma_r_at_floor: gr <= STRICT_MARGIN * (1.0 + 1e-3),
        solve_time: out.stats.solve_time,
        iterations: out.stats.iterations,
    })
}

pub fn impact_with(
    sys: &ClosedLoopSystem,
    budget: &ImpactBudget,
    kind: ImpactKind,
    settings: &SolverSettings,
) -> Result<ImpactCertificate> {
    match kind {
        ImpactKind::Exact => exact_impact_with(sys, budget, settings),
        ImpactKind::Relaxed => relaxed_impact_with(sys, budget, settings),
    }
}

/// Impacts of many systems, solved in parallel; fails on the first error.
pub fn impacts(
    systems: &[ClosedLoopSystem],
    budget: &ImpactBudget,
    kind: ImpactKind,
    settings: &SolverSettings,
) -> Result<Vec<ImpactCertificate>> {
    systems.par_iter().map(|s| impact_with(s, budget, kind, settings)).collect()
}

/// Largest eigenvalue of the exact LMI block evaluated at `(P, γ₁, γ₂)`.
///
/// Nonpositive values mean the triple certifies the bound `ε_rγ₁ + ε_aγ₂`.
pub fn exact_lmi_max_eigenvalue(sys: &ClosedLoopSystem, p: &DMatrix<f64>, gamma_r: f64, gamma_a: f64) -> f64 {
    let b = sys.active_b_cl();
    let n = sys.n();
    let m = b.ncols();
    let w = sys.a.transpose() * p + p * &sys.a + gram(&sys.c_p) - gram(&sys.c_r) * gamma_r;
    let pb = p * &b;
    let g2 = DMatrix::identity(m, m) * (-gamma_a);
    let pbt = pb.transpose();
    let blk = linalg::block(&[n, m], &[n, m], &[&[Some(&w), Some(&pb)], &[Some(&pbt), Some(&g2)]]);
    linalg::sym_max_eigenvalue(&blk)
}

/// Squared `H∞` gain from the active attack channels to `y_p`, by SDP.
pub fn hinf(sys: &ClosedLoopSystem) -> Result<f64> {
    hinf_with(sys, &SolverSettings::default())
}

pub fn hinf_with(sys: &ClosedLoopSystem, settings: &SolverSettings) -> Result<f64> {
    let b = sys.active_b_cl();
    if b.ncols() == 0 || sys.c_p.nrows() == 0 {
        return Ok(0.0);
    }
    let mut prog = ConicProgram::new();
    let p = prog.sym_matrix("P", sys.n());
    let g2 = prog.scalar("gamma_a");
    prog.minimize(Affine::var(g2));
    prog.add_nsd(&exact_lmi(&sys.a, &b, &sys.c_p, &sys.c_r, &p, &Affine::zero(), &Affine::var(g2)));
    prog.add_psd(&sdp::strictify(&p.expr(), STRICT_MARGIN));
    prog.add_ge(Affine::var(g2));
    let out = prog.solve(settings);
    if !out.is_optimal() {
        return Err(status_error(out.status, "H-infinity program"));
    }
    Ok(out.var(g2).unwrap())
}

/// Squared `H∞` gain by bisection on the Hamiltonian
/// `[[A, BBᵀ/γ], [−C_pᵀC_p, −Aᵀ]]`, which has no imaginary-axis eigenvalue
/// iff the squared gain is below `γ`. Relative accuracy `rel_tol`.
pub fn hinf_bisection(sys: &ClosedLoopSystem, rel_tol: f64) -> Result<f64> {
    let b = sys.active_b_cl();
    if b.ncols() == 0 || sys.c_p.nrows() == 0 {
        return Ok(0.0);
    }
    if !linalg::is_hurwitz(&sys.a) {
        return Err(Error::Model("H-infinity gain requires a stable closed loop".into()));
    }
    let n = sys.n();
    let bbt = &b * b.transpose();
    let ctc = gram(&sys.c_p);
    let at = -sys.a.transpose();
    let has_imag_eig = |g: f64| {
        let top = &bbt / g;
        let bottom = -&ctc;
        let h = linalg::block(&[n, n], &[n, n], &[&[Some(&sys.a), Some(&top)], &[Some(&bottom), Some(&at)]]);
        let scale = h.norm().max(1.0);
        linalg::eigenvalues(&h).iter().any(|l| l.re.abs() <= 1e-7 * scale)
    };
    // Lower bound from the static gain, upper bound by doubling.
    let g0 = linalg::freq_response(&sys.a, &b, &sys.c_p, 0.0).ok_or_else(|| Error::Model("singular A".into()))?;
    let mut lo = spectral_norm_sq(&g0);
    let mut hi = lo.max(1e-12) * 2.0;
    while has_imag_eig(hi) {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Model("H-infinity bisection failed to bracket the gain".into()));
        }
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if has_imag_eig(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn spectral_norm_sq(g: &DMatrix<Complex<f64>>) -> f64 {
    let s = g.singular_values();
    s.iter().copied().fold(0.0, f64::max).powi(2)
}

/// Largest generalised eigenvalue of `(G_pᴴG_p, G_rᴴG_r)` at frequency `ω`;
/// `None` if `G_r(jω)` loses column rank.
fn oog_at(sys: &ClosedLoopSystem, b: &DMatrix<f64>, omega: f64) -> Option<f64> {
    let gp = linalg::freq_response(&sys.a, b, &sys.c_p, omega)?;
    let gr = linalg::freq_response(&sys.a, b, &sys.c_r, omega)?;
    let grr = gr.adjoint() * &gr;
    let scale = grr.norm();
    let chol = grr.clone().cholesky()?;
    let l = chol.l();
    let min_diag = l.diagonal().iter().map(|d| d.re).fold(f64::INFINITY, f64::min);
    if min_diag.is_nan() || scale.is_nan() || min_diag * min_diag <= 1e-12 * scale {
        return None;
    }
    let linv = l.try_inverse()?;
    let m = &linv * gp.adjoint() * &gp * linv.adjoint();
    let m = (&m + m.adjoint()) * Complex::new(0.5, 0.0);
    Some(m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Output-to-output gain `sup_ω λ_max(G_pᴴG_p, G_rᴴG_r)`: the impact per unit
/// of detection energy when the attack energy is unconstrained.
///
/// Evaluated on a logarithmic grid with golden-section refinement of the best
/// point; fails with [`Error::ImpactUnbounded`] if `G_r` loses rank.
pub fn oog(sys: &ClosedLoopSystem) -> Result<f64> {
    let b = sys.active_b_cl();
    if b.ncols() == 0 || sys.c_p.nrows() == 0 {
        return Ok(0.0);
    }
    if !linalg::is_hurwitz(&sys.a) {
        return Err(Error::Model("output-to-output gain requires a stable closed loop".into()));
    }
    let unbounded = || Error::ImpactUnbounded { status: SolveStatus::Infeasible };
    let grid_pts = 1200;
    let mut best = (0.0, oog_at(sys, &b, 0.0).ok_or_else(unbounded)?);
    let mut omegas = Vec::with_capacity(grid_pts);
    for k in 0..grid_pts {
        omegas.push(10f64.powf(-4.0 + 10.0 * k as f64 / (grid_pts - 1) as f64));
    }
    let mut best_k = None;
    for (k, &w) in omegas.iter().enumerate() {
        let v = oog_at(sys, &b, w).ok_or_else(unbounded)?;
        if v > best.1 {
            best = (w, v);
            best_k = Some(k);
        }
    }
    if let Some(k) = best_k {
        if k > 0 && k + 1 < omegas.len() {
            let f = |w: f64| oog_at(sys, &b, w).unwrap_or(f64::INFINITY);
            let (mut lo, mut hi) = (omegas[k - 1].ln(), omegas[k + 1].ln());
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let m1 = hi - phi * (hi - lo);
                let m2 = lo + phi * (hi - lo);
                if f(m1.exp()) >= f(m2.exp()) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let w = (0.5 * (lo + hi)).exp();
            let v = f(w);
            if v > best.1 {
                best = (w, v);
            }
        }
    }
    Ok(best.1)
}
