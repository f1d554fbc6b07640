//! Controller-form state-space realization of `T(s) = N(s) D(s)^{-1}`.
//!
//! With column degrees `d_j` of `D`, `Lambda = diag(s^{d_j})` and `S(s)`
//! stacking `1, s, ..., s^{d_j - 1}` in column `j`, the denominator splits
//! as `D = D_h Lambda + D_l S`. Then
//!
//! ```text
//! F = Fbar + Gbar F_p,  G = Gbar G_p,  G_p = D_h^{-1},  F_p = -D_h^{-1} D_l
//! K = N_h D_h^{-1},     N - K D = H S
//! ```
//!
//! where `Fbar` is block diagonal with `d_j x d_j` upper shift blocks and
//! `Gbar` has the last unit vector of block `j` in column `j`. Columns with
//! `d_j = 0` contribute no block and a zero column of `Gbar`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::poly::Poly;
use crate::polymat::PolyMatrix;
use crate::tolerances::Tolerances;
use crate::C64;

/// Condition estimate beyond which a probe counts as a pole.
const PROBE_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferPair {
    /// `m x p` numerator.
    pub n: PolyMatrix,
    /// `p x p` denominator.
    pub d: PolyMatrix,
}

impl TransferPair {
    pub fn new(n: PolyMatrix, d: PolyMatrix) -> Result<Self> {
        if !d.is_square() || n.cols() != d.rows() {
            return Err(Error::DimensionMismatch(format!(
                "numerator {}x{} and denominator {}x{}",
                n.rows(),
                n.cols(),
                d.rows(),
                d.cols()
            )));
        }
        Ok(TransferPair { n, d })
    }

    pub fn m(&self) -> usize {
        self.n.rows()
    }

    pub fn p(&self) -> usize {
        self.d.rows()
    }

    /// `N(s) D(s)^{-1}`.
    pub fn eval(&self, s: C64) -> Result<CMat> {
        let d = self.d.eval(s);
        let n = self.n.eval(s);
        // X D = N  <=>  D^T X^T = N^T
        let (x, cond) = linalg::solve_refined(&d.transpose(), &n.transpose());
        match x {
            Some(x) if cond <= PROBE_CONDITION => Ok(x.transpose()),
            _ => Err(Error::ProbeSingular(s)),
        }
    }
}

/// Column degree data of a denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStructure {
    pub d: Vec<usize>,
    pub q: usize,
    /// Highest column degree coefficient matrix, `p x p`.
    pub d_h: CMat,
    /// Lower coefficients, `p x q`.
    pub d_l: CMat,
}

impl ColumnStructure {
    /// Offset of block `j` in the state vector.
    pub fn offset(&self, j: usize) -> usize {
        self.d[..j].iter().sum()
    }

    pub fn lambda(&self) -> PolyMatrix {
        let diag: Vec<Poly> = self
            .d
            .iter()
            .map(|&k| Poly::monomial(C64::new(1.0, 0.0), k))
            .collect();
        PolyMatrix::diagonal(&diag)
    }

    /// `q x p` matrix with `1, s, ..., s^{d_j-1}` down block `j` of column `j`.
    pub fn s_matrix(&self) -> PolyMatrix {
        let p = self.d.len();
        let mut s = PolyMatrix::zeros(self.q, p);
        for j in 0..p {
            let off = self.offset(j);
            for e in 0..self.d[j] {
                s[(off + e, j)] = Poly::monomial(C64::new(1.0, 0.0), e);
            }
        }
        s
    }
}

/// Column degrees `d_j`, `D_h` and `D_l` of a square denominator.
pub fn column_structure(d: &PolyMatrix) -> Result<ColumnStructure> {
    if !d.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "denominator must be square, got {}x{}",
            d.rows(),
            d.cols()
        )));
    }
    let p = d.rows();
    let mut degrees = Vec::with_capacity(p);
    for j in 0..p {
        match d.col_degree(j) {
            Some(k) => degrees.push(k),
            None => return Err(Error::SingularDh(0.0)),
        }
    }
    let q: usize = degrees.iter().sum();
    let d_h = CMat::from_fn(p, p, |i, j| d[(i, j)].coeff(degrees[j]));
    let mut d_l = CMat::zeros(p, q);
    let mut off = 0;
    for (j, &dj) in degrees.iter().enumerate() {
        for e in 0..dj {
            for i in 0..p {
                d_l[(i, off + e)] = d[(i, j)].coeff(e);
            }
        }
        off += dj;
    }
    Ok(ColumnStructure {
        d: degrees,
        q,
        d_h,
        d_l,
    })
}

/// State-space compensator `z' = F z + G y`, `u = H z + K y`.
/// Serialized as `{"q", "F", "G", "H", "K"}` with complex entries as
/// `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::io::CompensatorFile", into = "crate::io::CompensatorFile")]
pub struct Compensator {
    pub f: CMat,
    pub g: CMat,
    pub h: CMat,
    pub k: CMat,
}

impl Compensator {
    pub fn new(f: CMat, g: CMat, h: CMat, k: CMat) -> Result<Self> {
        let (q, m, p) = (f.nrows(), k.nrows(), k.ncols());
        if f.ncols() != q || g.shape() != (q, p) || h.shape() != (m, q) {
            return Err(Error::DimensionMismatch(format!(
                "compensator blocks F {:?}, G {:?}, H {:?}, K {:?}",
                f.shape(),
                g.shape(),
                h.shape(),
                k.shape()
            )));
        }
        Ok(Compensator { f, g, h, k })
    }

    /// Static feedback `u = K y`.
    pub fn static_gain(k: CMat) -> Self {
        let (m, p) = k.shape();
        Compensator {
            f: CMat::zeros(0, 0),
            g: CMat::zeros(0, p),
            h: CMat::zeros(m, 0),
            k,
        }
    }

    pub fn q(&self) -> usize {
        self.f.nrows()
    }

    pub fn m(&self) -> usize {
        self.k.nrows()
    }

    pub fn p(&self) -> usize {
        self.k.ncols()
    }

    /// `H (sI - F)^{-1} G + K`.
    pub fn transfer(&self, s: C64) -> Result<CMat> {
        let q = self.q();
        if q == 0 {
            return Ok(self.k.clone());
        }
        let shifted = CMat::identity(q, q) * s - &self.f;
        let (x, cond) = linalg::solve_refined(&shifted, &self.g);
        match x {
            Some(x) if cond <= PROBE_CONDITION => Ok(&self.h * x + &self.k),
            _ => Err(Error::PoleOfCompensator(s)),
        }
    }

    /// True when all entries are real up to `tol` relative.
    pub fn is_real(&self, tol: f64) -> bool {
        [&self.f, &self.g, &self.h, &self.k]
            .iter()
            .all(|m| m.iter().all(|z| z.im.abs() <= tol * (1.0 + z.norm())))
    }
}

/// Controller-form realization of order `q = sum d_j`.
pub fn realize(t: &TransferPair, tol: &Tolerances) -> Result<Compensator> {
    let (m, p) = (t.m(), t.p());
    let cs = column_structure(&t.d)?;
    for j in 0..p {
        if let Some(k) = t.n.col_degree(j) {
            if k > cs.d[j] {
                return Err(Error::NotProper(j));
            }
        }
    }
    // Scale-free singularity test: |det D_h| against the Hadamard bound.
    let det_h = linalg::det(&cs.d_h).norm();
    let hadamard: f64 = (0..p).map(|j| cs.d_h.column(j).norm()).product();
    if det_h <= tol.dh_singular * hadamard.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularDh(det_h));
    }
    let g_p = cs
        .d_h
        .clone()
        .try_inverse()
        .ok_or(Error::SingularDh(det_h))?;
    let f_p = -(&g_p * &cs.d_l);
    let q = cs.q;

    let mut f_bar = CMat::zeros(q, q);
    let mut g_bar = CMat::zeros(q, p);
    for j in 0..p {
        let (off, dj) = (cs.offset(j), cs.d[j]);
        for e in 0..dj.saturating_sub(1) {
            f_bar[(off + e, off + e + 1)] = C64::new(1.0, 0.0);
        }
        if dj > 0 {
            g_bar[(off + dj - 1, j)] = C64::new(1.0, 0.0);
        }
    }
    let f = &f_bar + &g_bar * &f_p;
    let g = &g_bar * &g_p;

    let n_h = CMat::from_fn(m, p, |i, j| t.n[(i, j)].coeff(cs.d[j]));
    let k = &n_h * &g_p;

    // N - K D = H S, matched column by column.
    let mut h = CMat::zeros(m, q);
    let scale = 1.0 + t.n.norm() + linalg::max_norm(&k) * t.d.norm();
    let mut leftover: f64 = 0.0;
    for j in 0..p {
        let off = cs.offset(j);
        let top = t.n.col_degree(j).unwrap_or(0).max(t.d.col_degree(j).unwrap_or(0));
        for e in 0..=top {
            for i in 0..m {
                let mut c = t.n[(i, j)].coeff(e);
                for r in 0..p {
                    c -= k[(i, r)] * t.d[(r, j)].coeff(e);
                }
                if e < cs.d[j] {
                    h[(i, off + e)] = c;
                } else {
                    leftover = leftover.max(c.norm());
                }
            }
        }
    }
    if leftover > tol.realization * scale {
        return Err(Error::InconsistentRealization(leftover / scale));
    }
    Compensator::new(f, g, h, k)
}

/// Largest entry of `N(z) D(z)^{-1} - (H (zI - F)^{-1} G + K)` over the probes.
pub fn check_realization(t: &TransferPair, comp: &Compensator, probes: &[C64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &z in probes {
        let lhs = t.eval(z)?;
        let rhs = comp.transfer(z).map_err(|_| Error::ProbeSingular(z))?;
        worst = worst.max(linalg::max_norm(&(lhs - rhs)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Poly {
        Poly::from_real(c)
    }

    fn probes() -> Vec<C64> {
        vec![
            C64::new(0.3, 1.1),
            C64::new(-1.7, 0.4),
            C64::new(2.2, -0.9),
            C64::new(0.05, -2.5),
            C64::new(-0.6, -0.6),
        ]
    }

    fn worked_denominator() -> PolyMatrix {
        // [[3s^2 + 1, 2s], [2s, s]]
        PolyMatrix::from_entries(2, 2, vec![p(&[1.0, 0.0, 3.0]), p(&[0.0, 2.0]), p(&[0.0, 2.0]), p(&[0.0, 1.0])])
            .unwrap()
    }

    #[test]
    fn worked_column_structure() {
        let d = worked_denominator();
        let cs = column_structure(&d).unwrap();
        assert_eq!(cs.d, vec![2, 1]);
        assert_eq!(cs.q, 3);
        let want = [[3.0, 2.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(cs.d_h[(i, j)], C64::new(want[i][j], 0.0));
            }
        }
        let rebuilt = &(&PolyMatrix::from_constant(&cs.d_h) * &cs.lambda())
            + &(&PolyMatrix::from_constant(&cs.d_l) * &cs.s_matrix());
        assert!(rebuilt.sub(&d).norm() < 1e-14);
    }

    #[test]
    fn static_transfer_gives_gain_only() {
        let k0 = PolyMatrix::from_entries(1, 2, vec![p(&[2.0]), p(&[-1.5])]).unwrap();
        let t = TransferPair::new(k0, PolyMatrix::identity(2)).unwrap();
        let c = realize(&t, &Tolerances::default()).unwrap();
        assert_eq!(c.q(), 0);
        assert_eq!(c.k[(0, 0)], C64::new(2.0, 0.0));
        assert_eq!(c.k[(0, 1)], C64::new(-1.5, 0.0));
        assert!(check_realization(&t, &c, &probes()).unwrap() < 1e-12);
    }

    #[test]
    fn worked_example_round_trip() {
        let d = worked_denominator();
        let n = PolyMatrix::from_entries(2, 2, vec![p(&[1.0, -1.0, 0.5]), p(&[2.0]), p(&[0.0, 1.0]), p(&[0.3, 4.0])])
            .unwrap();
        let t = TransferPair::new(n, d).unwrap();
        let c = realize(&t, &Tolerances::default()).unwrap();
        assert_eq!(c.q(), 3);
        assert!(check_realization(&t, &c, &probes()).unwrap() < 1e-10);
    }

    #[test]
    fn zero_degree_column() {
        // d = (1, 0)
        let d = PolyMatrix::from_entries(2, 2, vec![p(&[0.5, 1.0]), p(&[0.7]), p(&[]), p(&[1.0])]).unwrap();
        let n = PolyMatrix::from_entries(2, 2, vec![p(&[1.0, 2.0]), p(&[3.0]), p(&[-1.0]), p(&[0.25])]).unwrap();
        let t = TransferPair::new(n, d).unwrap();
        let c = realize(&t, &Tolerances::default()).unwrap();
        assert_eq!(c.q(), 1);
        assert!(check_realization(&t, &c, &probes()).unwrap() < 1e-12);
    }

    #[test]
    fn strictly_proper_has_zero_gain() {
        let d = PolyMatrix::diagonal(&[p(&[2.0, 1.0])]);
        let n = PolyMatrix::diagonal(&[p(&[3.0])]);
        let c = realize(&TransferPair::new(n, d).unwrap(), &Tolerances::default()).unwrap();
        assert!(c.k[(0, 0)].norm() < 1e-15);
        assert_eq!(c.f[(0, 0)], C64::new(-2.0, 0.0));
    }

    #[test]
    fn rejects_improper() {
        let d = PolyMatrix::diagonal(&[p(&[2.0, 1.0])]);
        let n = PolyMatrix::diagonal(&[p(&[0.0, 0.0, 1.0])]);
        let err = realize(&TransferPair::new(n, d).unwrap(), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::NotProper(0)));
    }

    #[test]
    fn rejects_singular_leading_matrix() {
        // Both columns have leading coefficients (1, 1).
        let d = PolyMatrix::from_entries(2, 2, vec![p(&[0.0, 1.0]), p(&[1.0, 1.0]), p(&[0.0, 1.0]), p(&[0.0, 1.0])])
            .unwrap();
        let n = PolyMatrix::zeros(1, 2);
        let err = realize(&TransferPair::new(n, d).unwrap(), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::SingularDh(_)));
    }

    #[test]
    fn corrupted_gain_is_detected() {
        let d = worked_denominator();
        let n = PolyMatrix::from_entries(1, 2, vec![p(&[1.0, 0.0, 2.0]), p(&[0.5, 1.0])]).unwrap();
        let t = TransferPair::new(n, d).unwrap();
        let mut c = realize(&t, &Tolerances::default()).unwrap();
        c.k[(0, 0)] += 0.1;
        assert!(check_realization(&t, &c, &probes()).unwrap() >= 0.05);
    }
}
