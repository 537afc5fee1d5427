//! Standard-form cone programs: `min c'x  s.t.  Ax + s = b,  s in K`.

use nalgebra::DMatrix;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One block of the cone `K`.
///
/// PSD blocks hold the scaled lower-triangle vectorization of a symmetric
/// matrix of the given side (column-major, off-diagonals times sqrt 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    NonNeg(usize),
    SecondOrder(usize),
    Psd(usize),
}

impl Cone {
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::SecondOrder(n) => n,
            Cone::Psd(s) => s * (s + 1) / 2,
        }
    }

    /// Barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Zero(_) => 0,
            Cone::NonNeg(n) => n,
            Cone::SecondOrder(_) => 1,
            Cone::Psd(s) => s,
        }
    }

    fn tag(&self) -> (char, usize) {
        match *self {
            Cone::Zero(n) => ('z', n),
            Cone::NonNeg(n) => ('l', n),
            Cone::SecondOrder(n) => ('q', n),
            Cone::Psd(s) => ('s', s),
        }
    }
}

/// Coordinate-format sparse matrix; duplicates are summed on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    /// Sorted by (column, row), no duplicates, no explicit zeros.
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= nrows || *c >= ncols) {
            return Err(Error::Construction(format!("entry ({r},{c}) outside {nrows}x{ncols}")));
        }
        if triplets.iter().any(|t| !t.2.is_finite()) {
            return Err(Error::Construction("non-finite matrix entry".into()));
        }
        triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2 != 0.0);
        Ok(Self { nrows, ncols, entries })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            d[(r, c)] = v;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    c: Vec<f64>,
    a: SparseMatrix,
    b: Vec<f64>,
    cones: Vec<Cone>,
}

impl ConeProgram {
    pub fn new(c: Vec<f64>, a: SparseMatrix, b: Vec<f64>, cones: Vec<Cone>) -> Result<Self> {
        let rows: usize = cones.iter().map(Cone::rows).sum();
        if rows != a.nrows() || b.len() != a.nrows() {
            return Err(Error::Construction(format!(
                "cone layout covers {rows} rows, A has {}, b has {}",
                a.nrows(),
                b.len()
            )));
        }
        if c.len() != a.ncols() {
            return Err(Error::Construction(format!("c has {} entries, A has {} columns", c.len(), a.ncols())));
        }
        if cones.iter().any(|k| k.rows() == 0) {
            return Err(Error::Construction("empty cone block".into()));
        }
        if cones.iter().any(|k| matches!(k, Cone::SecondOrder(n) if *n < 2)) {
            return Err(Error::Construction("second-order cone needs dimension >= 2".into()));
        }
        if c.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Construction("non-finite data".into()));
        }
        Ok(Self { c, a, b, cones })
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Text form for regression capture:
    ///
    /// ```text
    /// cone-program 1
    /// dims <rows> <vars>
    /// cones z:<n> l:<n> q:<n> s:<side> ...
    /// c <vars values>
    /// b <rows values>
    /// a <nnz>
    /// <row> <col> <value>     (nnz lines)
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::from("cone-program 1\n");
        writeln!(out, "dims {} {}", self.num_rows(), self.num_vars()).unwrap();
        let cones: Vec<String> = self.cones.iter().map(|k| {
            let (t, n) = k.tag();
            format!("{t}:{n}")
        }).collect();
        writeln!(out, "cones {}", cones.join(" ")).unwrap();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "c {}", join(&self.c)).unwrap();
        writeln!(out, "b {}", join(&self.b)).unwrap();
        writeln!(out, "a {}", self.a.entries.len()).unwrap();
        for &(r, c, v) in &self.a.entries {
            writeln!(out, "{r} {c} {v:e}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |m: String| Error::Parse(format!("cone program text: {m}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("cone-program 1") {
            return Err(perr("missing header".into()));
        }
        let mut tagged = |tag: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| perr(format!("missing {tag}")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(tag) {
                return Err(perr(format!("expected {tag}")));
            }
            Ok(it.map(str::to_owned).collect())
        };
        let int = |s: &str| s.parse::<usize>().map_err(|_| perr(format!("bad integer {s}")));
        let num = |s: &str| s.parse::<f64>().map_err(|_| perr(format!("bad number {s}")));
        let dims = tagged("dims")?;
        if dims.len() != 2 {
            return Err(perr("dims needs two values".into()));
        }
        let (m, n) = (int(&dims[0])?, int(&dims[1])?);
        let cones = tagged("cones")?
            .iter()
            .map(|t| {
                let (k, v) = t.split_once(':').ok_or_else(|| perr(format!("bad cone {t}")))?;
                let v = int(v)?;
                match k {
                    "z" => Ok(Cone::Zero(v)),
                    "l" => Ok(Cone::NonNeg(v)),
                    "q" => Ok(Cone::SecondOrder(v)),
                    "s" => Ok(Cone::Psd(v)),
                    _ => Err(perr(format!("unknown cone {k}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let c = tagged("c")?.iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let b = tagged("b")?.iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let nnz = tagged("a")?.first().map(|s| int(s)).ok_or_else(|| perr("missing nnz".into()))??;
        let mut trip = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let line = lines.next().ok_or_else(|| perr("truncated matrix".into()))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(format!("bad entry line {line}")));
            }
            trip.push((int(f[0])?, int(f[1])?, num(f[2])?));
        }
        ConeProgram::new(c, SparseMatrix::from_triplets(m, n, trip)?, b, cones)
    }
}
