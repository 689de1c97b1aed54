//! Affine expressions over scalar decision variables.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

/// Index of a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub usize);

/// `constant + Σ coef · var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn zero() -> Self {
        Affine::default()
    }

    pub fn constant(c: f64) -> Self {
        Affine { terms: Vec::new(), constant: c }
    }

    pub fn var(v: Var) -> Self {
        Affine { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Affine { terms: vec![(v, coef)], constant: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn scale(&self, s: f64) -> Affine {
        Affine { terms: self.terms.iter().map(|&(v, c)| (v, c * s)).collect(), constant: self.constant * s }
    }

    pub fn add_scaled(&mut self, other: &Affine, s: f64) {
        if s == 0.0 {
            return;
        }
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, c * s)));
        self.constant += other.constant * s;
    }

    /// Merges repeated variables and drops zero coefficients.
    pub fn simplify(mut self) -> Affine {
        self.terms.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(Var, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match merged.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        Affine { terms: merged, constant: self.constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    pub fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|(v, _)| v.0).max()
    }
}

impl From<f64> for Affine {
    fn from(c: f64) -> Self {
        Affine::constant(c)
    }
}

impl From<Var> for Affine {
    fn from(v: Var) -> Self {
        Affine::var(v)
    }
}

impl Add for Affine {
    type Output = Affine;
    fn add(mut self, rhs: Affine) -> Affine {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for Affine {
    type Output = Affine;
    fn sub(mut self, rhs: Affine) -> Affine {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Affine {
    type Output = Affine;
    fn mul(self, s: f64) -> Affine {
        self.scale(s)
    }
}

/// Symmetric matrix variable; one scalar per upper-triangular entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymVar {
    pub(crate) offset: usize,
    pub dim: usize,
}

impl SymVar {
    pub fn at(&self, i: usize, j: usize) -> Var {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        assert!(j < self.dim, "index ({i},{j}) out of range for dimension {}", self.dim);
        Var(self.offset + j * (j + 1) / 2 + i)
    }

    pub fn n_scalars(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| x[self.at(i, j).0])
    }

    pub fn expr(&self) -> AffMatrix {
        AffMatrix::from_fn(self.dim, self.dim, |i, j| Affine::var(self.at(i, j)))
    }
}

/// Dense matrix of affine expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Affine>,
}

impl AffMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        AffMatrix { rows, cols, data: vec![Affine::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Affine) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        AffMatrix { rows, cols, data }
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        AffMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Affine::constant(m[(i, j)]))
    }

    /// `a · I_n`.
    pub fn scaled_identity(a: &Affine, n: usize) -> Self {
        AffMatrix::from_fn(n, n, |i, j| if i == j { a.clone() } else { Affine::zero() })
    }

    /// Column vector of expressions.
    pub fn column(entries: Vec<Affine>) -> Self {
        AffMatrix { rows: entries.len(), cols: 1, data: entries }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Affine {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, a: Affine) {
        self.data[i * self.cols + j] = a;
    }

    pub fn transpose(&self) -> AffMatrix {
        AffMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn scale(&self, s: f64) -> AffMatrix {
        AffMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.scale(s)).collect() }
    }

    /// `m · self`.
    pub fn mul_left(&self, m: &DMatrix<f64>) -> AffMatrix {
        assert_eq!(m.ncols(), self.rows, "mul_left shape");
        AffMatrix::from_fn(m.nrows(), self.cols, |i, j| {
            let mut acc = Affine::zero();
            for k in 0..self.rows {
                acc.add_scaled(self.get(k, j), m[(i, k)]);
            }
            acc.simplify()
        })
    }

    /// `self · m`.
    pub fn mul_right(&self, m: &DMatrix<f64>) -> AffMatrix {
        assert_eq!(self.cols, m.nrows(), "mul_right shape");
        AffMatrix::from_fn(self.rows, m.ncols(), |i, j| {
            let mut acc = Affine::zero();
            for k in 0..self.cols {
                acc.add_scaled(self.get(i, k), m[(k, j)]);
            }
            acc.simplify()
        })
    }

    /// Scales column `j` by the affine scalar `s`; requires `self` constant.
    pub fn scale_columns_affine(m: &DMatrix<f64>, s: &[Affine]) -> AffMatrix {
        assert_eq!(m.ncols(), s.len(), "column scale shape");
        AffMatrix::from_fn(m.nrows(), m.ncols(), |i, j| s[j].scale(m[(i, j)]).simplify())
    }

    pub fn add(&self, other: &AffMatrix) -> AffMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add shape");
        AffMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| (a.clone() + b.clone()).simplify()).collect(),
        }
    }

    pub fn sub(&self, other: &AffMatrix) -> AffMatrix {
        self.add(&other.scale(-1.0))
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }

    /// Assembles a block matrix; `None` entries are zero blocks.
    pub fn block(rows: &[usize], cols: &[usize], blocks: &[&[Option<&AffMatrix>]]) -> AffMatrix {
        let mut out = AffMatrix::zeros(rows.iter().sum(), cols.iter().sum());
        let mut r0 = 0;
        for (bi, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (bj, blk) in row.iter().enumerate() {
                if let Some(b) = blk {
                    assert_eq!((b.rows, b.cols), (rows[bi], cols[bj]), "block ({bi},{bj}) shape");
                    for i in 0..b.rows {
                        for j in 0..b.cols {
                            out.set(r0 + i, c0 + j, b.get(i, j).clone());
                        }
                    }
                }
                c0 += cols[bj];
            }
            r0 += rows[bi];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplify_merges_and_drops() {
        let a = Affine { terms: vec![(Var(2), 1.0), (Var(0), 3.0), (Var(2), -1.0)], constant: 1.5 }.simplify();
        assert_eq!(a.terms, vec![(Var(0), 3.0)]);
        assert_eq!(a.eval(&[2.0, 0.0, 9.0]), 7.5);
    }

    #[test]
    fn sym_var_indexing_is_symmetric_and_dense() {
        let s = SymVar { offset: 4, dim: 3 };
        assert_eq!(s.at(0, 2), s.at(2, 0));
        let mut idx: Vec<usize> =
            (0..3).flat_map(|j| (0..=j).map(move |i| (i, j))).map(|(i, j)| s.at(i, j).0).collect();
        idx.sort();
        assert_eq!(idx, (4..10).collect::<Vec<_>>());
    }

    #[test]
    fn products_match_dense_evaluation() {
        let s = SymVar { offset: 0, dim: 2 };
        let x = [1.0, 2.0, 3.0];
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 4.0]);
        let xv = s.value(&x);
        assert_eq!(s.expr().mul_left(&m).eval(&x), &m * &xv);
        assert_eq!(s.expr().mul_right(&m).eval(&x), &xv * &m);
        assert_eq!(s.expr().transpose().eval(&x), xv);
    }
}
