//! Small dense linear-algebra helpers shared by the model checks, the
//! impact certificates and the simulator.

use nalgebra::{Complex, DMatrix};

/// Relative rank tolerance for PBH tests.
pub const RANK_TOL: f64 = 1e-8;

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    spectral_abscissa(a) < 0.0
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

/// PBH test: `rank [λI - A, B] = n` for every eigenvalue `λ` of `A`.
pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    if b.ncols() == 0 || b.iter().all(|&x| x == 0.0) {
        return false;
    }
    let ac = to_complex(a);
    let bc = to_complex(b);
    for lambda in eigenvalues(a) {
        let mut pencil = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        let shifted = DMatrix::<Complex<f64>>::identity(n, n) * lambda - &ac;
        pencil.view_mut((0, 0), (n, n)).copy_from(&shifted);
        pencil.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        let sv = pencil.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if max == 0.0 || min <= RANK_TOL * max {
            return false;
        }
    }
    true
}

pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    is_controllable(&a.transpose(), &c.transpose())
}

/// Extreme eigenvalues of the symmetric part of `m`.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let s = (m + m.transpose()) * 0.5;
    let ev = s.symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn sym_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eig_range(m).1
}

pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eig_range(m).0
}

/// Assembles a dense matrix from a grid of equally shaped block rows.
///
/// `None` entries are zero blocks; every block row must fix its height and
/// every block column its width through at least one `Some` block.
pub fn block(rows: &[usize], cols: &[usize], blocks: &[&[Option<&DMatrix<f64>>]]) -> DMatrix<f64> {
    let n: usize = rows.iter().sum();
    let m: usize = cols.iter().sum();
    let mut out = DMatrix::zeros(n, m);
    let mut r0 = 0;
    for (bi, row) in blocks.iter().enumerate() {
        let mut c0 = 0;
        for (bj, blk) in row.iter().enumerate() {
            if let Some(b) = blk {
                assert_eq!((b.nrows(), b.ncols()), (rows[bi], cols[bj]), "block ({bi},{bj}) shape");
                out.view_mut((r0, c0), (rows[bi], cols[bj])).copy_from(b);
            }
            c0 += cols[bj];
        }
        r0 += rows[bi];
    }
    out
}

/// Solves `AᵀP + PA + Q = 0` by vectorisation; `None` if the operator is singular.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let p = op.lu().solve(&rhs)?;
    let p = DMatrix::from_column_slice(n, n, p.as_slice());
    Some((&p + p.transpose()) * 0.5)
}

/// Frequency response `C (jωI - A)^{-1} B`.
pub fn freq_response(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    omega: f64,
) -> Option<DMatrix<Complex<f64>>> {
    let n = a.nrows();
    let sys = DMatrix::<Complex<f64>>::identity(n, n) * Complex::new(0.0, omega) - to_complex(a);
    let x = sys.lu().solve(&to_complex(b))?;
    Some(to_complex(c) * x)
}
