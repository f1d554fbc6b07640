//! Matrices of polynomials, the numerical Smith normal form and inversion
//! through it.
//!
//! [`smith`] diagonalizes `A` by unimodular row and column operations. A
//! pair of entries `a` (pivot) and `b` is cleared either by division, when
//! the pivot divides `b`, or by the extended gcd step
//!
//! ```text
//! [ k     l   ] [a]   [d]
//! [ -b/d  a/d ] [b] = [0]
//! ```
//!
//! whose determinant is `(k a + l b) / d = 1`. The same step transposed
//! acts on columns.

use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcd::gcd_advanced;
use crate::linalg::{self, CMat};
use crate::poly::Poly;
use crate::C64;

/// Coefficients below this fraction of the matrix scale are dropped after
/// every elimination step.
const CHOP: f64 = 1e-13;

/// Multiple of the unit roundoff below which a coefficient produced by a
/// combination of entries counts as cancellation noise.
const NOISE: f64 = 1e3 * f64::EPSILON;

/// Widest root matching radius tried by the gcd step.
const MAX_GCD_RADIUS: f64 = 1e-3;

/// Allowed quotient remainders relative to `eps`.
const BEZOUT_SLACK: f64 = 1e2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    /// Row-major.
    entries: Vec<Poly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            entries: vec![Poly::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Poly::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Poly) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        PolyMatrix { rows, cols, entries }
    }

    /// Row-major entries; fails unless `entries.len() == rows * cols`.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Poly>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(PolyMatrix { rows, cols, entries })
    }

    /// Constant matrix.
    pub fn from_constant(m: &CMat) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| Poly::constant(m[(i, j)]))
    }

    pub fn diagonal(diag: &[Poly]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = d.clone();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Poly] {
        &self.entries
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Largest entry degree, `None` for the zero matrix.
    pub fn degree(&self) -> Option<usize> {
        self.entries.iter().filter_map(Poly::degree).max()
    }

    /// Degree of column `j` (largest entry degree), `None` if the column is zero.
    pub fn col_degree(&self, j: usize) -> Option<usize> {
        (0..self.rows).filter_map(|i| self[(i, j)].degree()).max()
    }

    /// Largest coefficient 2-norm over the entries.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(Poly::norm).fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn conj(&self) -> Self {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(Poly::conj).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|p| p.scale(c)).collect(),
        }
    }

    /// Matrix of coefficients of `s^k`.
    pub fn coeff_matrix(&self, k: usize) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| self[(i, j)].coeff(k))
    }

    pub fn eval(&self, s: C64) -> CMat {
        eval_matrix(self, s)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.entries.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for i in 0..self.rows {
                self.entries.swap(i * self.cols + a, i * self.cols + b);
            }
        }
    }

    /// `row_i <- row_i - f * row_k`.
    fn row_axpy(&mut self, i: usize, k: usize, f: &Poly, chop: f64) {
        let t = [Poly::one(), -f];
        for j in 0..self.cols {
            let v = combine(&t, &self[(i, j)], &self[(k, j)], chop);
            self[(i, j)] = v;
        }
    }

    /// `col_j <- col_j - col_k * f`.
    fn col_axpy(&mut self, j: usize, k: usize, f: &Poly, chop: f64) {
        let t = [Poly::one(), -f];
        for i in 0..self.rows {
            let v = combine(&t, &self[(i, j)], &self[(i, k)], chop);
            self[(i, j)] = v;
        }
    }

    /// Rows `(i, k) <- T (rows i, k)` for the 2x2 polynomial matrix `T`.
    fn row_combine(&mut self, i: usize, k: usize, t: &[Poly; 4], chop: f64) {
        let (top, bottom) = ([t[0].clone(), t[1].clone()], [t[2].clone(), t[3].clone()]);
        for j in 0..self.cols {
            let (x, y) = (self[(i, j)].clone(), self[(k, j)].clone());
            self[(i, j)] = combine(&top, &x, &y, chop);
            self[(k, j)] = combine(&bottom, &x, &y, chop);
        }
    }

    /// Columns `(j, k) <- (cols j, k) T^T`.
    fn col_combine(&mut self, j: usize, k: usize, t: &[Poly; 4], chop: f64) {
        let (left, right) = ([t[0].clone(), t[1].clone()], [t[2].clone(), t[3].clone()]);
        for i in 0..self.rows {
            let (x, y) = (self[(i, j)].clone(), self[(i, k)].clone());
            self[(i, j)] = combine(&left, &x, &y, chop);
            self[(i, k)] = combine(&right, &x, &y, chop);
        }
    }

    fn scale_row(&mut self, i: usize, c: C64) {
        for j in 0..self.cols {
            self[(i, j)] = self[(i, j)].scale(c);
        }
    }

    fn scale_col(&mut self, j: usize, c: C64) {
        for i in 0..self.rows {
            self[(i, j)] = self[(i, j)].scale(c);
        }
    }
}

/// `t[0] x + t[1] y`, dropping coefficients below `chop` or below the
/// rounding level of the two products. With `chop = 0` nothing is dropped.
fn combine(t: &[Poly; 2], x: &Poly, y: &Poly, chop: f64) -> Poly {
    let v = &(&t[0] * x) + &(&t[1] * y);
    if chop == 0.0 {
        return v;
    }
    let noise = NOISE * (t[0].norm() * x.norm() + t[1].norm() * y.norm());
    v.chop(chop.max(noise))
}

impl std::ops::Index<(usize, usize)> for PolyMatrix {
    type Output = Poly;
    fn index(&self, (i, j): (usize, usize)) -> &Poly {
        assert!(i < self.rows && j < self.cols);
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for PolyMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Poly {
        assert!(i < self.rows && j < self.cols);
        &mut self.entries[i * self.cols + j]
    }
}

impl Mul for &PolyMatrix {
    type Output = PolyMatrix;
    fn mul(self, rhs: &PolyMatrix) -> PolyMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        PolyMatrix::from_fn(self.rows, rhs.cols, |i, j| {
            let mut acc = Poly::zero();
            for k in 0..self.cols {
                acc = &acc + &(&self[(i, k)] * &rhs[(k, j)]);
            }
            acc
        })
    }
}

impl std::ops::Add for &PolyMatrix {
    type Output = PolyMatrix;
    fn add(self, rhs: &PolyMatrix) -> PolyMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Mul for PolyMatrix {
    type Output = PolyMatrix;
    fn mul(self, rhs: PolyMatrix) -> PolyMatrix {
        &self * &rhs
    }
}

impl fmt::Display for PolyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self[(i, j)].to_string()).collect();
            writeln!(f, "[ {} ]", row.join(" , "))?;
        }
        Ok(())
    }
}

/// Entrywise Horner evaluation.
pub fn eval_matrix(a: &PolyMatrix, s: C64) -> CMat {
    CMat::from_fn(a.rows, a.cols, |i, j| a[(i, j)].eval(s))
}

/// Determinant by evaluation at roots of unity and discrete Fourier
/// interpolation. The degree bound is the smaller of the row-wise and
/// column-wise sums of maximal degrees.
pub fn poly_det(a: &PolyMatrix) -> Poly {
    assert!(a.is_square(), "determinant of a non-square matrix");
    let n = a.rows;
    if n == 0 {
        return Poly::one();
    }
    let mut by_rows = 0usize;
    for i in 0..n {
        match (0..n).filter_map(|j| a[(i, j)].degree()).max() {
            Some(d) => by_rows += d,
            None => return Poly::zero(),
        }
    }
    let mut by_cols = 0usize;
    for j in 0..n {
        match a.col_degree(j) {
            Some(d) => by_cols += d,
            None => return Poly::zero(),
        }
    }
    let bound = by_rows.min(by_cols);
    let count = bound + 1;
    let nodes: Vec<C64> = (0..count)
        .map(|k| C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / count as f64))
        .collect();
    let values: Vec<C64> = nodes.iter().map(|&z| linalg::det(&a.eval(z))).collect();
    let mut coeffs = vec![C64::new(0.0, 0.0); count];
    for (k, c) in coeffs.iter_mut().enumerate() {
        for (j, v) in values.iter().enumerate() {
            // nodes[j]^-k
            *c += v * nodes[(j * k) % count].conj();
        }
        *c /= count as f64;
    }
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Poly::trimmed(coeffs, 1e-12 * scale)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmithForm {
    pub p: PolyMatrix,
    pub d: PolyMatrix,
    pub q: PolyMatrix,
    pub rank: usize,
}

impl SmithForm {
    /// Diagonal entries of `D`.
    pub fn invariant_factors(&self) -> Vec<Poly> {
        (0..self.d.rows.min(self.d.cols))
            .map(|i| self.d[(i, i)].clone())
            .collect()
    }

    /// Residual diagnostics against the input matrix.
    pub fn diagnostics(&self, a: &PolyMatrix) -> SmithDiagnostics {
        let paq = &(&self.p * a) * &self.q;
        let product_residual = paq.sub(&self.d).norm() / (1.0 + a.norm());
        let factors = self.invariant_factors();
        let mut divisibility_residual: f64 = 0.0;
        for w in factors.windows(2) {
            if w[0].is_zero() || w[1].is_zero() {
                continue;
            }
            if let Ok((_, r)) = w[1].div_rem(&w[0]) {
                divisibility_residual = divisibility_residual.max(r.norm() / w[1].norm());
            }
        }
        SmithDiagnostics {
            product_residual,
            det_p: poly_det(&self.p),
            det_q: poly_det(&self.q),
            divisibility_residual,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SmithDiagnostics {
    /// `|P A Q - D| / (1 + |A|)`, coefficientwise.
    pub product_residual: f64,
    pub det_p: Poly,
    pub det_q: Poly,
    /// Largest `|D_{i+1} mod D_i| / |D_{i+1}|`.
    pub divisibility_residual: f64,
}

impl fmt::Display for SmithDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "|PAQ - D| / (1+|A|) = {:.3e}", self.product_residual)?;
        writeln!(f, "det P = {}", self.det_p)?;
        writeln!(f, "det Q = {}", self.det_q)?;
        write!(f, "divisibility residual = {:.3e}", self.divisibility_residual)
    }
}

/// Working state of the reduction: `P A Q = W` holds throughout.
struct Reduction {
    w: PolyMatrix,
    p: PolyMatrix,
    q: PolyMatrix,
    zero: f64,
    chop: f64,
    eps: f64,
}

impl Reduction {
    fn is_zero(&self, x: &Poly) -> bool {
        x.norm() <= self.zero
    }

    /// Exact-quotient test: `b = f a + r` with `r` negligible.
    fn quotient(&self, a: &Poly, b: &Poly) -> Option<Poly> {
        if a.degree() == Some(0) {
            return Some(b.scale(a.coeff(0).inv()));
        }
        let (f, r) = b.div_rem(a).ok()?;
        (r.norm() <= self.eps * b.norm()).then_some(f)
    }

    /// The gcd step matrix `[k l; -b/d a/d]`. Entries produced by earlier
    /// eliminations carry rounding, so a common factor may hide beyond the
    /// matching radius `eps`; the radius is widened until the Bezout
    /// identity and both exact quotients hold.
    fn gcd_step(&self, a: &Poly, b: &Poly, at: (usize, usize)) -> Result<([Poly; 4], Poly)> {
        let wrap = |e: Error| Error::GcdFailure {
            row: at.0,
            col: at.1,
            source: Box::new(e),
        };
        let mut radius = self.eps;
        let mut last = None;
        while radius <= MAX_GCD_RADIUS {
            let g = gcd_advanced(a, b, radius).map_err(wrap)?;
            let (ad, ra) = a.div_rem(&g.d)?;
            let (bd, rb) = b.div_rem(&g.d)?;
            let bezout = &(&(&g.k * a) + &(&g.l * b)) - &g.d;
            let scale = 1.0 + g.k.norm() * a.norm() + g.l.norm() * b.norm();
            let ok = bezout.norm() <= self.eps * scale
                && ra.norm() <= BEZOUT_SLACK * self.eps * a.norm()
                && rb.norm() <= BEZOUT_SLACK * self.eps * b.norm();
            let step = ([g.k, g.l, -bd, ad], g.d);
            if ok {
                return Ok(step);
            }
            last = Some(step);
            radius *= 10.0;
        }
        Ok(last.expect("at least one radius tried"))
    }

    /// Moves the minimal-degree entry of the trailing block to `(t, t)`.
    /// Returns false when the block is zero.
    fn place_pivot(&mut self, t: usize) -> bool {
        let mut best: Option<(usize, f64, usize, usize)> = None;
        for i in t..self.w.rows {
            for j in t..self.w.cols {
                let e = &self.w[(i, j)];
                if self.is_zero(e) {
                    continue;
                }
                let key = (e.degree().unwrap_or(0), e.leading().norm());
                let better = match best {
                    None => true,
                    Some((d, lc, _, _)) => key.0 < d || (key.0 == d && key.1 > lc),
                };
                if better {
                    best = Some((key.0, key.1, i, j));
                }
            }
        }
        let Some((_, _, i, j)) = best else {
            return false;
        };
        self.w.swap_rows(t, i);
        self.p.swap_rows(t, i);
        self.w.swap_cols(t, j);
        self.q.swap_cols(t, j);
        true
    }

    /// Clears column `t` below the pivot. Returns true if anything changed.
    fn clear_column(&mut self, t: usize) -> Result<bool> {
        let mut changed = false;
        for i in t + 1..self.w.rows {
            let b = self.w[(i, t)].clone();
            if self.is_zero(&b) {
                self.w[(i, t)] = Poly::zero();
                continue;
            }
            changed = true;
            let a = self.w[(t, t)].clone();
            if let Some(f) = self.quotient(&a, &b) {
                self.w.row_axpy(i, t, &f, self.chop);
                self.p.row_axpy(i, t, &f, 0.0);
            } else {
                let (step, d) = self.gcd_step(&a, &b, (i, t))?;
                self.w.row_combine(t, i, &step, self.chop);
                self.p.row_combine(t, i, &step, 0.0);
                self.w[(t, t)] = d;
            }
            self.w[(i, t)] = Poly::zero();
        }
        Ok(changed)
    }

    /// Clears row `t` right of the pivot.
    fn clear_row(&mut self, t: usize) -> Result<bool> {
        let mut changed = false;
        for j in t + 1..self.w.cols {
            let b = self.w[(t, j)].clone();
            if self.is_zero(&b) {
                self.w[(t, j)] = Poly::zero();
                continue;
            }
            changed = true;
            let a = self.w[(t, t)].clone();
            if let Some(f) = self.quotient(&a, &b) {
                self.w.col_axpy(j, t, &f, self.chop);
                self.q.col_axpy(j, t, &f, 0.0);
            } else {
                let (step, d) = self.gcd_step(&a, &b, (t, j))?;
                self.w.col_combine(t, j, &step, self.chop);
                self.q.col_combine(t, j, &step, 0.0);
                self.w[(t, t)] = d;
            }
            self.w[(t, j)] = Poly::zero();
        }
        Ok(changed)
    }

    /// Diagonalizes the trailing block starting at stage `from`; returns the rank.
    fn diagonalize(&mut self, from: usize) -> Result<usize> {
        let steps = self.w.rows.min(self.w.cols);
        for t in from..steps {
            if !self.place_pivot(t) {
                return Ok(t);
            }
            // Each pass that refills the column lowers the pivot degree.
            let limit = 4 + self.w[(t, t)].degree().unwrap_or(0) * 2;
            for _ in 0..limit {
                let c = self.clear_column(t)?;
                let r = self.clear_row(t)?;
                if !c && !r {
                    break;
                }
                let refilled = (t + 1..self.w.rows).any(|i| !self.is_zero(&self.w[(i, t)]));
                if !refilled {
                    break;
                }
            }
        }
        Ok(steps)
    }

    fn divides(&self, a: &Poly, b: &Poly) -> bool {
        if b.is_zero() || a.degree() == Some(0) {
            return true;
        }
        match b.div_rem(a) {
            Ok((_, r)) => r.norm() <= 1e-6 * b.norm(),
            Err(_) => false,
        }
    }

    /// Restores `D_i | D_{i+1}` by adding column `i+1` to column `i` and
    /// reducing the resulting 2x2 block again.
    fn enforce_divisibility(&mut self, rank: usize) -> Result<()> {
        for _pass in 0..rank.max(1) {
            let mut clean = true;
            for i in 0..rank.saturating_sub(1) {
                let (a, b) = (self.w[(i, i)].clone(), self.w[(i + 1, i + 1)].clone());
                if self.divides(&a, &b) {
                    continue;
                }
                clean = false;
                let one = Poly::one();
                self.w.col_axpy(i, i + 1, &-&one, self.chop);
                self.q.col_axpy(i, i + 1, &-&one, 0.0);
                // Reduce the 2x2 block rows/cols (i, i+1) in place.
                let b = self.w[(i + 1, i)].clone();
                let a = self.w[(i, i)].clone();
                let (step, d) = self.gcd_step(&a, &b, (i + 1, i))?;
                self.w.row_combine(i, i + 1, &step, self.chop);
                self.p.row_combine(i, i + 1, &step, 0.0);
                self.w[(i, i)] = d;
                self.w[(i + 1, i)] = Poly::zero();
                let c = self.w[(i, i + 1)].clone();
                if !self.is_zero(&c) {
                    let f = self
                        .quotient(&self.w[(i, i)].clone(), &c)
                        .unwrap_or_else(|| c.scale(self.w[(i, i)].leading().inv()));
                    self.w.col_axpy(i + 1, i, &f, self.chop);
                    self.q.col_axpy(i + 1, i, &f, 0.0);
                }
                self.w[(i, i + 1)] = Poly::zero();
            }
            if clean {
                break;
            }
        }
        Ok(())
    }

    /// Makes every nonzero diagonal entry monic, splitting the scale
    /// evenly between `P` and `Q`.
    fn normalize(&mut self, rank: usize) {
        for i in 0..rank {
            let lc = self.w[(i, i)].leading();
            let half = lc.inv().sqrt();
            self.w[(i, i)] = self.w[(i, i)].monic();
            self.p.scale_row(i, half);
            self.q.scale_col(i, half);
        }
    }
}

/// Numerical Smith normal form `P A Q = D` with relative tolerance `eps`.
pub fn smith(a: &PolyMatrix, eps: f64) -> Result<SmithForm> {
    let scale = a.norm();
    if scale == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    let mut red = Reduction {
        w: a.clone(),
        p: PolyMatrix::identity(a.rows),
        q: PolyMatrix::identity(a.cols),
        zero: eps * scale,
        chop: CHOP * scale,
        eps,
    };
    let rank = red.diagonalize(0)?;
    red.enforce_divisibility(rank)?;
    red.normalize(rank);
    for i in 0..red.w.rows {
        for j in 0..red.w.cols {
            if i != j || i >= rank {
                red.w[(i, j)] = Poly::zero();
            }
        }
    }
    Ok(SmithForm {
        p: red.p,
        d: red.w,
        q: red.q,
        rank,
    })
}

/// Inverse `A^{-1} = num / den` from the Smith factors:
/// `A^{-1} = Q D^{-1} P = Q adj(D) P / det D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalPolyMatrix {
    pub num: PolyMatrix,
    /// Monic common denominator.
    pub den: Poly,
}

impl RationalPolyMatrix {
    pub fn eval(&self, s: C64) -> CMat {
        self.num.eval(s) / self.den.eval(s)
    }
}

pub fn inverse_via_smith(a: &PolyMatrix, eps: f64) -> Result<RationalPolyMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cannot invert a {}x{} matrix",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let sf = smith(a, eps)?;
    let factors = sf.invariant_factors();
    if sf.rank < n {
        return Err(Error::SingularMatrix(sf.rank));
    }
    let mut den = Poly::one();
    for f in &factors {
        den = &den * f;
    }
    let cofactors: Vec<Poly> = (0..n)
        .map(|i| {
            factors
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(Poly::one(), |acc, (_, f)| &acc * f)
        })
        .collect();
    let num = &(&sf.q * &PolyMatrix::diagonal(&cofactors)) * &sf.p;
    let den = den.monic();
    Ok(RationalPolyMatrix { num, den })
}
