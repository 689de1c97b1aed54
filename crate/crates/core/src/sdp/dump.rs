//! Plain-text sparse triplet dump of a [`ConicProgram`].
//!
//! ```text
//! CONICDUMP 1
//! VARS <n>
//! <index> <name>                     one line per variable
//! OBJ
//! <var> <coef> | c <constant>        objective terms
//! EQ <m>                             rows constrained to = 0
//! <row> <var> <coef> | <row> c <constant>
//! GE <m>                             rows constrained to ≥ 0
//! <row> <var> <coef> | <row> c <constant>
//! PSD <count>
//! BLOCK <dim>                        symmetric block constrained ⪰ 0
//! <i> <j> <var> <coef> | <i> <j> c <constant>     upper triangle, i ≤ j
//! END
//! ```
//!
//! Floats are written with round-trip precision.

use std::fmt::Write;

use super::{Affine, ConicProgram, SymAffine, Var};
use crate::error::{Error, Result};

pub(super) fn write_dump(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "CONICDUMP 1");
    let _ = writeln!(out, "VARS {}", p.n_vars());
    for k in 0..p.n_vars() {
        let _ = writeln!(out, "{k} {}", p.var_name(Var(k)));
    }
    let _ = writeln!(out, "OBJ");
    write_affine(&mut out, "", p.objective());
    for (tag, rows) in [("EQ", p.equalities()), ("GE", p.nonnegatives())] {
        let _ = writeln!(out, "{tag} {}", rows.len());
        for (r, a) in rows.iter().enumerate() {
            write_affine(&mut out, &format!("{r} "), a);
        }
    }
    let _ = writeln!(out, "PSD {}", p.psd_constraints().len());
    for s in p.psd_constraints() {
        let _ = writeln!(out, "BLOCK {}", s.dim);
        for (i, j, a) in s.upper() {
            write_affine(&mut out, &format!("{i} {j} "), a);
        }
    }
    let _ = writeln!(out, "END");
    out
}

fn write_affine(out: &mut String, prefix: &str, a: &Affine) {
    for &(v, c) in &a.terms {
        let _ = writeln!(out, "{prefix}{} {c:e}", v.0);
    }
    if a.constant != 0.0 {
        let _ = writeln!(out, "{prefix}c {:e}", a.constant);
    }
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((_, l)) if l.trim().is_empty() || l.starts_with('#') => continue,
                Some((k, l)) => return Ok((k + 1, l.trim())),
                None => return Err(Error::Dump { line: 0, msg: "unexpected end of input".into() }),
            }
        }
    }

    /// Next non-empty line if it does not start with an upper-case keyword.
    fn next_data(&mut self) -> Option<(usize, &'a str)> {
        while let Some(&(_, l)) = self.inner.peek() {
            if l.trim().is_empty() || l.starts_with('#') {
                self.inner.next();
                continue;
            }
            if l.trim_start().starts_with(|c: char| c.is_ascii_uppercase()) {
                return None;
            }
            let (k, l) = self.inner.next().unwrap();
            return Some((k + 1, l.trim()));
        }
        None
    }
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Dump { line, msg: msg.into() }
}

fn header(lines: &mut Lines, key: &str) -> Result<(usize, Option<usize>)> {
    let (k, l) = lines.next_line()?;
    let mut parts = l.split_whitespace();
    if parts.next() != Some(key) {
        return Err(err(k, format!("expected {key}")));
    }
    let count = match parts.next() {
        Some(s) => Some(s.parse().map_err(|_| err(k, "bad count"))?),
        None => None,
    };
    Ok((k, count))
}

fn num<T: std::str::FromStr>(k: usize, s: Option<&str>) -> Result<T> {
    s.ok_or_else(|| err(k, "missing field"))?.parse().map_err(|_| err(k, "malformed number"))
}

fn add_term(k: usize, a: &mut Affine, var: &str, coef: f64, n_vars: usize) -> Result<()> {
    if var == "c" {
        a.constant += coef;
    } else {
        let v: usize = num(k, Some(var))?;
        if v >= n_vars {
            return Err(err(k, format!("variable {v} out of range")));
        }
        a.terms.push((Var(v), coef));
    }
    Ok(())
}

/// Parses the output of [`ConicProgram::dump`].
pub fn parse_dump(text: &str) -> Result<ConicProgram> {
    let mut lines = Lines { inner: text.lines().enumerate().peekable() };
    header(&mut lines, "CONICDUMP")?;
    let (k, n) = header(&mut lines, "VARS")?;
    let n = n.ok_or_else(|| err(k, "missing variable count"))?;
    let mut names = Vec::with_capacity(n);
    for expected in 0..n {
        let (k, l) = lines.next_line()?;
        let (idx, name) = l.split_once(' ').ok_or_else(|| err(k, "expected '<index> <name>'"))?;
        if num::<usize>(k, Some(idx))? != expected {
            return Err(err(k, "variables out of order"));
        }
        names.push(name.to_string());
    }

    header(&mut lines, "OBJ")?;
    let mut objective = Affine::zero();
    while let Some((k, l)) = lines.next_data() {
        let mut f = l.split_whitespace();
        let var = f.next().ok_or_else(|| err(k, "empty term"))?;
        add_term(k, &mut objective, var, num(k, f.next())?, n)?;
    }

    let mut sections = Vec::new();
    for key in ["EQ", "GE"] {
        let (k, m) = header(&mut lines, key)?;
        let mut rows = vec![Affine::zero(); m.ok_or_else(|| err(k, "missing row count"))?];
        while let Some((k, l)) = lines.next_data() {
            let mut f = l.split_whitespace();
            let r: usize = num(k, f.next())?;
            let var = f.next().ok_or_else(|| err(k, "missing variable"))?;
            let coef = num(k, f.next())?;
            let row = rows.get_mut(r).ok_or_else(|| err(k, "row out of range"))?;
            add_term(k, row, var, coef, n)?;
        }
        sections.push(rows);
    }

    let (k, count) = header(&mut lines, "PSD")?;
    let count = count.ok_or_else(|| err(k, "missing block count"))?;
    let mut psd = Vec::with_capacity(count);
    for _ in 0..count {
        let (k, dim) = header(&mut lines, "BLOCK")?;
        let dim = dim.ok_or_else(|| err(k, "missing block dimension"))?;
        let mut entries = vec![Affine::zero(); dim * (dim + 1) / 2];
        while let Some((k, l)) = lines.next_data() {
            let mut f = l.split_whitespace();
            let i: usize = num(k, f.next())?;
            let j: usize = num(k, f.next())?;
            if i > j || j >= dim {
                return Err(err(k, "entry outside the upper triangle"));
            }
            let var = f.next().ok_or_else(|| err(k, "missing variable"))?;
            add_term(k, &mut entries[j * (j + 1) / 2 + i], var, num(k, f.next())?, n)?;
        }
        psd.push(SymAffine::from_entries(dim, entries));
    }
    header(&mut lines, "END")?;

    let ge = sections.pop().unwrap();
    let eq = sections.pop().unwrap();
    Ok(ConicProgram::from_parts(names, objective, eq, ge, psd))
}
