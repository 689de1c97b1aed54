//! Translation to the clarabel standard form `A x + s = b`, `s ∈ K`.

use std::f64::consts::SQRT_2;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolution, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{Affine, ConicProgram, SolveOutcome, SolveStats, SolveStatus, SolverSettings};

struct Rows {
    ri: Vec<usize>,
    ci: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Appends `s = scale · a(x)` as the row `-scale · aᵀ x + s = scale · c`.
    fn push(&mut self, a: &Affine, scale: f64) {
        let r = self.b.len();
        for &(v, c) in &a.terms {
            self.ri.push(r);
            self.ci.push(v.0);
            self.vals.push(-scale * c);
        }
        self.b.push(scale * a.constant);
    }
}

pub(super) fn solve(p: &ConicProgram, settings: &SolverSettings) -> SolveOutcome {
    let n = p.n_vars();
    let mut rows = Rows { ri: Vec::new(), ci: Vec::new(), vals: Vec::new(), b: Vec::new() };
    let mut cones = Vec::new();

    if !p.equalities().is_empty() {
        p.equalities().iter().for_each(|a| rows.push(a, 1.0));
        cones.push(SupportedConeT::ZeroConeT(p.equalities().len()));
    }
    if !p.nonnegatives().is_empty() {
        p.nonnegatives().iter().for_each(|a| rows.push(a, 1.0));
        cones.push(SupportedConeT::NonnegativeConeT(p.nonnegatives().len()));
    }
    for s in p.psd_constraints() {
        for (i, j, a) in s.upper() {
            rows.push(a, if i == j { 1.0 } else { SQRT_2 });
        }
        cones.push(SupportedConeT::PSDTriangleConeT(s.dim));
    }

    let m = rows.b.len();
    let a_mat = CscMatrix::new_from_triplets(m, n, rows.ri, rows.ci, rows.vals);
    let p_mat = CscMatrix::<f64>::zeros((n, n));
    let mut q = vec![0.0; n];
    for &(v, c) in &p.objective().terms {
        q[v.0] += c;
    }

    let tol = settings.tol;
    let base = DefaultSettings {
        tol_gap_abs: tol,
        tol_gap_rel: tol,
        tol_feas: tol,
        tol_infeas_abs: tol,
        tol_infeas_rel: tol,
        max_iter: settings.max_iter,
        verbose: settings.verbose,
        chordal_decomposition_enable: false,
        direct_solve_method: "faer".to_string(),
        ..DefaultSettings::default()
    };

    // Badly scaled impact programs stall with the default regularisation;
    // later attempts only run after a numerical failure.
    let mut last = None;
    for reg in REGULARIZATION_LADDER {
        let attempt = DefaultSettings { static_regularization_constant: reg, ..base.clone() };
        let mut solver = match DefaultSolver::new(&p_mat, &q, &a_mat, &rows.b, &cones, attempt) {
            Ok(s) => s,
            Err(_) => {
                return SolveOutcome {
                    status: SolveStatus::NumericalFailure,
                    objective: f64::NAN,
                    x: None,
                    stats: SolveStats::default(),
                }
            }
        };
        solver.solve();
        let outcome = outcome(p, &solver.solution);
        if outcome.status != SolveStatus::NumericalFailure {
            return outcome;
        }
        last = Some(outcome);
    }
    last.expect("regularisation ladder is nonempty")
}

const REGULARIZATION_LADDER: [f64; 3] = [1e-7, 1e-8, 1e-6];

fn outcome(p: &ConicProgram, sol: &DefaultSolution<f64>) -> SolveOutcome {
    let (status, reduced) = match sol.status {
        SolverStatus::Solved => (SolveStatus::Optimal, false),
        SolverStatus::AlmostSolved => (SolveStatus::Optimal, true),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => (SolveStatus::Infeasible, false),
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => (SolveStatus::Unbounded, false),
        _ => (SolveStatus::NumericalFailure, false),
    };
    let stats = SolveStats {
        iterations: sol.iterations,
        solve_time: sol.solve_time,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        dual_objective: sol.obj_val_dual + p.objective().constant,
        reduced_accuracy: reduced,
    };
    if status == SolveStatus::Optimal {
        SolveOutcome { status, objective: sol.obj_val + p.objective().constant, x: Some(sol.x.clone()), stats }
    } else {
        SolveOutcome { status, objective: f64::NAN, x: None, stats }
    }
}
