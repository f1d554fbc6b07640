//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::C64;

pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

/// Largest entry magnitude.
pub fn max_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves `a x = b` by LU with partial pivoting plus one step of iterative
/// refinement. Also returns the pivot ratio `max|u_ii| / min|u_ii|` as a
/// cheap condition estimate (infinite for an exactly singular matrix).
pub fn solve_refined(a: &CMat, b: &CMat) -> (Option<CMat>, f64) {
    let lu = a.clone().lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min == 0.0 { f64::INFINITY } else { max / min };
    let Some(mut x) = lu.solve(b) else {
        return (None, cond);
    };
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    (Some(x), cond)
}

/// Determinant and adjugate (`adj(W) = det(W) W^{-1}`) from one LU.
/// An exactly zero pivot is nudged to rounding level so the adjugate of a
/// singular matrix stays finite.
pub fn det_adjugate(w: &CMat) -> (C64, CMat) {
    let n = w.nrows();
    let scale = max_norm(w).max(f64::MIN_POSITIVE);
    let lu = w.clone().lu();
    let det = lu.determinant();
    if let Some(inv) = lu.try_inverse() {
        if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return (det, inv * det);
        }
    }
    let mut nudged = w.clone();
    for i in 0..n {
        nudged[(i, i)] += C64::new(f64::EPSILON * scale, 0.0);
    }
    let lu = nudged.lu();
    let det2 = lu.determinant();
    let inv = lu.try_inverse().unwrap_or_else(|| CMat::zeros(n, n));
    (det, inv * det2)
}

pub fn det(w: &CMat) -> C64 {
    w.clone().lu().determinant()
}
