//! Conic programs with linear objective, affine equalities, nonnegativity
//! and positive-semidefinite constraints, solved by an interior-point backend.

mod dump;
mod expr;
mod solve;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use dump::parse_dump;
pub use expr::{AffMatrix, Affine, SymVar, Var};

/// Default absolute/relative solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Margin used to encode strict inequalities (`P ≻ 0` as `P ⪰ ε I`).
pub const STRICT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: DEFAULT_TOL, max_iter: 200, verbose: false }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        SolverSettings { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u32,
    /// Seconds spent inside the solver.
    pub solve_time: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub dual_objective: f64,
    /// Solver stopped at its reduced-accuracy tolerances.
    pub reduced_accuracy: bool,
}

/// `x` is `Some` iff `status` is [`SolveStatus::Optimal`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    pub x: Option<Vec<f64>>,
    pub stats: SolveStats,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, a: &Affine) -> Option<f64> {
        self.x.as_deref().map(|x| a.eval(x))
    }

    pub fn var(&self, v: Var) -> Option<f64> {
        self.x.as_ref().map(|x| x[v.0])
    }

    pub fn sym(&self, s: &SymVar) -> Option<DMatrix<f64>> {
        self.x.as_deref().map(|x| s.value(x))
    }
}

/// Symmetric matrix of affine expressions, upper triangle stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymAffine {
    pub dim: usize,
    entries: Vec<Affine>,
}

impl SymAffine {
    /// Takes the symmetric part of `m`.
    pub fn from_matrix(m: &AffMatrix) -> SymAffine {
        assert_eq!(m.nrows(), m.ncols(), "PSD constraint must be square");
        let dim = m.nrows();
        let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
        for j in 0..dim {
            for i in 0..=j {
                let e =
                    if i == j { m.get(i, j).clone() } else { (m.get(i, j).clone() + m.get(j, i).clone()).scale(0.5) };
                entries.push(e.simplify());
            }
        }
        SymAffine { dim, entries }
    }

    pub(crate) fn from_entries(dim: usize, entries: Vec<Affine>) -> SymAffine {
        assert_eq!(entries.len(), dim * (dim + 1) / 2);
        SymAffine { dim, entries }
    }

    pub fn get(&self, i: usize, j: usize) -> &Affine {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.entries[j * (j + 1) / 2 + i]
    }

    /// Entries with their `(i, j)`, `i ≤ j`, in storage order.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, &Affine)> {
        (0..self.dim).flat_map(move |j| (0..=j).map(move |i| (i, j))).zip(&self.entries).map(|((i, j), a)| (i, j, a))
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j).eval(x))
    }
}

/// `minimize objective` subject to `eq = 0`, `ge ≥ 0`, `psd ⪰ 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    names: Vec<String>,
    objective: Affine,
    equalities: Vec<Affine>,
    nonnegatives: Vec<Affine>,
    psd: Vec<SymAffine>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_name(&self, v: Var) -> &str {
        &self.names[v.0]
    }

    pub fn scalar(&mut self, name: impl Into<String>) -> Var {
        self.names.push(name.into());
        Var(self.names.len() - 1)
    }

    pub fn sym_matrix(&mut self, name: &str, dim: usize) -> SymVar {
        let offset = self.names.len();
        for j in 0..dim {
            for i in 0..=j {
                self.names.push(format!("{name}[{i},{j}]"));
            }
        }
        SymVar { offset, dim }
    }

    pub fn minimize(&mut self, objective: Affine) {
        self.check(&objective);
        self.objective = objective.simplify();
    }

    pub fn objective(&self) -> &Affine {
        &self.objective
    }

    pub fn add_eq(&mut self, a: Affine) {
        self.check(&a);
        self.equalities.push(a.simplify());
    }

    /// `a ≥ 0`.
    pub fn add_ge(&mut self, a: Affine) {
        self.check(&a);
        self.nonnegatives.push(a.simplify());
    }

    /// `m ⪰ 0` (symmetric part of `m`).
    pub fn add_psd(&mut self, m: &AffMatrix) {
        let s = SymAffine::from_matrix(m);
        for (_, _, a) in s.upper() {
            self.check(a);
        }
        if s.dim == 1 {
            self.nonnegatives.push(s.get(0, 0).clone());
        } else if s.dim > 1 {
            self.psd.push(s);
        }
    }

    /// `m ⪯ 0`.
    pub fn add_nsd(&mut self, m: &AffMatrix) {
        self.add_psd(&m.scale(-1.0));
    }

    pub fn equalities(&self) -> &[Affine] {
        &self.equalities
    }

    pub fn nonnegatives(&self) -> &[Affine] {
        &self.nonnegatives
    }

    pub fn psd_constraints(&self) -> &[SymAffine] {
        &self.psd
    }

    pub fn solve(&self, settings: &SolverSettings) -> SolveOutcome {
        solve::solve(self, settings)
    }

    /// Plain-text sparse triplet dump; see [`parse_dump`].
    pub fn dump(&self) -> String {
        dump::write_dump(self)
    }

    pub(crate) fn from_parts(
        names: Vec<String>,
        objective: Affine,
        equalities: Vec<Affine>,
        nonnegatives: Vec<Affine>,
        psd: Vec<SymAffine>,
    ) -> Self {
        ConicProgram { names, objective, equalities, nonnegatives, psd }
    }

    fn check(&self, a: &Affine) {
        if let Some(m) = a.max_var() {
            assert!(m < self.n_vars(), "expression references unregistered variable {m}");
        }
    }
}

/// `m - ε I`, so that `strictify(m, ε) ⪰ 0` encodes `m ⪰ ε I`.
pub fn strictify(m: &AffMatrix, margin: f64) -> AffMatrix {
    strictify_range(m, 0, m.nrows(), margin)
}

/// Applies the margin to the diagonal block `start..start + len` only.
pub fn strictify_range(m: &AffMatrix, start: usize, len: usize, margin: f64) -> AffMatrix {
    assert!(margin > 0.0, "strictness margin must be positive");
    assert!(start + len <= m.nrows().min(m.ncols()), "strictify range out of bounds");
    let mut out = m.clone();
    for k in start..start + len {
        let e = out.get(k, k).clone() - Affine::constant(margin);
        out.set(k, k, e);
    }
    out
}

/// `a - ε`, so that `strictify_scalar(a, ε) ≥ 0` encodes `a ≥ ε`.
pub fn strictify_scalar(a: &Affine, margin: f64) -> Affine {
    assert!(margin > 0.0, "strictness margin must be positive");
    a.clone() - Affine::constant(margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_of_symmetric_part() {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let m = AffMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => Affine::var(t),
            (0, 1) => Affine::constant(2.0),
            _ => Affine::constant(1.0),
        });
        p.add_psd(&m);
        let s = &p.psd_constraints()[0];
        assert_eq!(s.get(1, 0).constant, 1.5);
    }

    #[test]
    #[should_panic(expected = "unregistered")]
    fn unregistered_variable_rejected() {
        let mut p = ConicProgram::new();
        p.add_ge(Affine::var(Var(3)));
    }

    #[test]
    fn strictify_shifts_only_requested_block() {
        let m = AffMatrix::constant(&DMatrix::identity(3, 3));
        let s = strictify_range(&m, 1, 2, 0.25).eval(&[]);
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(1, 1)], 0.75);
        assert_eq!(s[(2, 2)], 0.75);
        assert_eq!(strictify_scalar(&Affine::zero(), 1e-6).constant, -1e-6);
    }
}
