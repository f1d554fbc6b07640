//! Closed-loop checks for a plant under dynamic output feedback.
//!
//! The closed loop of `x' = Ax + Bu, y = Cx` with `z' = Fz + Gy, u = Hz + Ky`
//! has state matrix `[[A + BKC, BH], [GC, F]]`. Its eigenvalues are found
//! from the characteristic polynomial, then polished by Aberth steps on
//! `det(zI - M)` itself; eigenvectors come from inverse iteration.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::plant::StateSpace;
use crate::poly::Poly;
use crate::realize::Compensator;
use crate::C64;

/// `|y^H x|` at or below this marks a defective eigenvalue.
pub const DEFECTIVE: f64 = 1e-14;

/// Two candidate matches closer than this are reported as competing.
pub const COMPETING_MATCH: f64 = 1e-3;

const POLISH_SWEEPS: usize = 50;
const INVERSE_ITERATIONS: usize = 3;
const BALANCE_SWEEPS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoop {
    pub m: CMat,
    pub n: usize,
    pub q: usize,
}

pub fn closed_loop(plant: &StateSpace, comp: &Compensator) -> Result<ClosedLoop> {
    let (n, m, p, q) = (plant.n(), plant.m(), plant.p(), comp.q());
    if comp.m() != m || comp.p() != p {
        return Err(Error::DimensionMismatch(format!(
            "plant has m={m}, p={p} but compensator gain is {}x{}",
            comp.m(),
            comp.p()
        )));
    }
    let a = linalg::to_complex(&plant.a);
    let b = linalg::to_complex(&plant.b);
    let c = linalg::to_complex(&plant.c);
    let mut big = CMat::zeros(n + q, n + q);
    big.view_mut((0, 0), (n, n))
        .copy_from(&(&a + &b * &comp.k * &c));
    if q > 0 {
        big.view_mut((0, n), (n, q)).copy_from(&(&b * &comp.h));
        big.view_mut((n, 0), (q, n)).copy_from(&(&comp.g * &c));
        big.view_mut((n, n), (q, q)).copy_from(&comp.f);
    }
    Ok(ClosedLoop { m: big, n, q })
}

/// Rescales the compensator state so that, in the closed loop, each
/// compensator row and column have comparable off-diagonal norms (Osborne
/// balancing over the compensator block only; plant coordinates stay
/// fixed). Scalings are powers of two, so no rounding is introduced and
/// the transfer function is unchanged. Controller form can leave `H` many orders
/// above `G`, which inflates the eigenvalue condition numbers.
pub fn balance_states(plant: &StateSpace, comp: &Compensator) -> Result<Compensator> {
    let cl = closed_loop(plant, comp)?;
    let (n, q) = (cl.n, cl.q);
    let mut big = cl.m;
    let mut scale = vec![1.0f64; q];
    for _ in 0..BALANCE_SWEEPS {
        let mut changed = false;
        for k in 0..q {
            let i = n + k;
            let diag = big[(i, i)].norm_sqr();
            let row = (big.row(i).norm_squared() - diag).max(0.0).sqrt();
            let col = (big.column(i).norm_squared() - diag).max(0.0).sqrt();
            if row == 0.0 || col == 0.0 {
                continue;
            }
            let f = 2f64.powi(((col / row).log2() / 2.0).round() as i32);
            if f != 1.0 {
                big.row_mut(i).scale_mut(f);
                big.column_mut(i).scale_mut(1.0 / f);
                scale[k] *= f;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let d = CMat::from_diagonal(&DVector::from_iterator(q, scale.iter().map(|&s| C64::new(s, 0.0))));
    let dinv = CMat::from_diagonal(&DVector::from_iterator(q, scale.iter().map(|&s| C64::new(1.0 / s, 0.0))));
    Compensator::new(&d * &comp.f * &dinv, &d * &comp.g, &comp.h * &dinv, comp.k.clone())
}

#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<C64>,
    /// Unit right eigenvectors, one per column.
    pub right: CMat,
    /// Unit left eigenvectors (`y^H M = lambda y^H`), one per column.
    pub left: CMat,
    /// Indices of eigenvalues whose polishing did not settle.
    pub unconverged: Vec<usize>,
}

/// Coefficients of `det(r w I - M) / r^n` in `w`, from samples on the unit circle.
fn characteristic_polynomial(m: &CMat, r: f64) -> Poly {
    let n = m.nrows();
    let nodes = n + 1;
    let samples: Vec<C64> = (0..nodes)
        .map(|k| {
            let z = C64::from_polar(r, std::f64::consts::TAU * k as f64 / nodes as f64);
            linalg::det(&(CMat::identity(n, n) * z - m))
        })
        .collect();
    let coeffs: Vec<C64> = (0..nodes)
        .map(|j| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, &f) in samples.iter().enumerate() {
                let w = C64::from_polar(1.0, -std::f64::consts::TAU * (j * k) as f64 / nodes as f64);
                acc += f * w;
            }
            acc / (nodes as f64 * r.powi(n as i32))
        })
        .collect();
    // Monic by construction. Trimming by relative size would drop the
    // leading term when the matrix has large entries.
    let mut coeffs = coeffs;
    coeffs[n] = C64::new(1.0, 0.0);
    Poly::trimmed(coeffs, 0.0)
}

/// `d/dz log det(zI - M) = trace((zI - M)^{-1})`, `None` on an exact hit.
fn log_derivative(m: &CMat, z: C64) -> Option<C64> {
    let n = m.nrows();
    let inv = (CMat::identity(n, n) * z - m).try_inverse()?;
    let t = inv.trace();
    (t.re.is_finite() && t.im.is_finite()).then_some(t)
}

/// Aberth iteration on the true determinant, started from `z`. A value
/// settles when its step reaches rounding level relative to `|M|`, or
/// stops shrinking once it is below `sqrt(eps)` of that scale.
fn polish(m: &CMat, z: &mut [C64]) -> Vec<usize> {
    let n = z.len();
    let scale = linalg::frobenius(m);
    let mut done = vec![false; n];
    let mut last = vec![f64::INFINITY; n];
    for _ in 0..POLISH_SWEEPS {
        if done.iter().all(|&d| d) {
            break;
        }
        for i in 0..n {
            if done[i] {
                continue;
            }
            let Some(ratio) = log_derivative(m, z[i]) else {
                done[i] = true;
                continue;
            };
            let mut sum = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    sum += (z[i] - z[j]).inv();
                }
            }
            let w = (ratio - sum).inv();
            if !w.re.is_finite() || !w.im.is_finite() {
                done[i] = true;
                continue;
            }
            z[i] -= w;
            let (step, size) = (w.norm(), 1.0 + z[i].norm() + scale);
            if step <= 4.0 * f64::EPSILON * size || (step >= last[i] && step <= f64::EPSILON.sqrt() * size) {
                done[i] = true;
            }
            last[i] = step;
        }
    }
    (0..n).filter(|&i| !done[i]).collect()
}

/// Unit null vector of `a - lambda I` by inverse iteration with a tiny
/// complex shift.
fn inverse_iteration(a: &CMat, lambda: C64) -> CMat {
    let n = a.nrows();
    let scale = 1.0 + linalg::max_norm(a);
    let mut x = CMat::from_fn(n, 1, |i, _| C64::new(1.0, 0.1 * (i as f64 + 1.0)));
    x /= C64::new(x.norm(), 0.0);
    for shift_scale in [64.0, 1e4, 1e8] {
        let shift = lambda + C64::new(1.0, 1.0) * (shift_scale * f64::EPSILON * scale);
        let lu = (a - CMat::identity(n, n) * shift).lu();
        let mut y = x.clone();
        let mut ok = true;
        for _ in 0..INVERSE_ITERATIONS {
            match lu.solve(&y) {
                Some(v) if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && v.norm() > 0.0 => {
                    y = &v / C64::new(v.norm(), 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return y;
        }
    }
    x
}

/// All eigenvalues with unit right and left eigenvectors.
pub fn eigen(m: &CMat) -> Result<Eigen> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigen needs a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let r = (linalg::frobenius(m) / (n as f64).sqrt()).max(1.0);
    let charpoly = characteristic_polynomial(m, r);
    let mut values: Vec<C64> = match charpoly.roots() {
        Ok(rs) => rs.roots,
        Err(Error::NoConvergence { best, .. }) => best,
        Err(e) => return Err(e),
    }
    .into_iter()
    .map(|w| w * r)
    .collect();
    let unconverged = polish(m, &mut values);
    let mh = m.adjoint();
    let mut right = CMat::zeros(n, n);
    let mut left = CMat::zeros(n, n);
    for (i, &lambda) in values.iter().enumerate() {
        right.set_column(i, &inverse_iteration(m, lambda).column(0));
        left.set_column(i, &inverse_iteration(&mh, lambda.conj()).column(0));
    }
    Ok(Eigen {
        values,
        right,
        left,
        unconverged,
    })
}

/// `1 / |y^H x|` for unit right and left eigenvectors of `lambda`.
pub fn condition_number(lambda: C64, x: &DVector<C64>, y: &DVector<C64>) -> Result<f64> {
    let dot = y.dotc(x).norm();
    if dot <= DEFECTIVE {
        return Err(Error::InfiniteCondition(lambda));
    }
    Ok(1.0 / dot)
}

/// `|det [[I_p, C(s0 I - A)^{-1} B], [H(s0 I - F)^{-1} G + K, I_m]]|`.
pub fn det_check(plant: &StateSpace, comp: &Compensator, s0: C64) -> Result<f64> {
    let (m, p) = (plant.m(), plant.p());
    let g = plant.transfer(s0)?;
    let t = comp.transfer(s0)?;
    let mut w = CMat::identity(p + m, p + m);
    w.view_mut((0, p), (p, m)).copy_from(&g);
    w.view_mut((p, 0), (m, p)).copy_from(&t);
    Ok(linalg::det(&w).norm())
}

/// Greedy assignment: repeatedly pair the closest remaining computed and
/// given values. Returns, for each given index, the computed index, plus
/// the number of steps where a runner-up was within `COMPETING_MATCH`.
pub fn greedy_match(computed: &[C64], given: &[C64]) -> (Vec<usize>, usize) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &c) in computed.iter().enumerate() {
        for (j, &g) in given.iter().enumerate() {
            pairs.push(((c - g).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used_c = vec![false; computed.len()];
    let mut assign = vec![usize::MAX; given.len()];
    let mut competing = 0;
    for (k, &(d, i, j)) in pairs.iter().enumerate() {
        if used_c[i] || assign[j] != usize::MAX {
            continue;
        }
        let rival = pairs[k + 1..]
            .iter()
            .find(|&&(_, i2, j2)| (i2 == i) != (j2 == j) && !used_c[i2] && assign[j2] == usize::MAX);
        if let Some(&(d2, _, _)) = rival {
            if d2 - d <= COMPETING_MATCH {
                competing += 1;
            }
        }
        used_c[i] = true;
        assign[j] = i;
    }
    (assign, competing)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// Computed closed-loop eigenvalue matched to each given pole.
    #[serde(with = "crate::io::cvec")]
    pub eigenvalues: Vec<C64>,
    /// `|lambda - pole| / (1 + |pole|)`.
    pub matched_pole_errors: Vec<f64>,
    pub condition_numbers: Vec<f64>,
    /// `det_check` at each given pole.
    pub det_residuals: Vec<f64>,
    pub max_pole_error: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn verify(plant: &StateSpace, comp: &Compensator, given_poles: &[C64]) -> Result<VerifyReport> {
    let cl = closed_loop(plant, comp)?;
    let size = cl.n + cl.q;
    if given_poles.len() != size {
        return Err(Error::PoleCount {
            expected: size,
            got: given_poles.len(),
        });
    }
    let eig = eigen(&cl.m)?;
    let mut warnings = Vec::new();
    for &i in &eig.unconverged {
        warnings.push(format!("eigenvalue {} did not settle", eig.values[i]));
    }
    let (assign, competing) = greedy_match(&eig.values, given_poles);
    if competing > 0 {
        warnings.push(format!("{competing} pole matches had a rival within {COMPETING_MATCH:e}"));
    }
    let mut eigenvalues = Vec::with_capacity(size);
    let mut errors = Vec::with_capacity(size);
    let mut conds = Vec::with_capacity(size);
    let mut dets = Vec::with_capacity(size);
    for (j, &pole) in given_poles.iter().enumerate() {
        let i = assign[j];
        let lambda = eig.values[i];
        eigenvalues.push(lambda);
        errors.push((lambda - pole).norm() / (1.0 + pole.norm()));
        let x = eig.right.column(i).into_owned();
        let y = eig.left.column(i).into_owned();
        conds.push(condition_number(lambda, &x, &y)?);
        dets.push(det_check(plant, comp, pole)?);
    }
    let max_pole_error = errors.iter().cloned().fold(0.0, f64::max);
    Ok(VerifyReport {
        eigenvalues,
        matched_pole_errors: errors,
        condition_numbers: conds,
        det_residuals: dets,
        max_pole_error,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sorted_re(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn diagonal_eigen() {
        let m = CMat::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]));
        let e = eigen(&m).unwrap();
        let vals = sorted_re(e.values.clone());
        for (k, v) in vals.iter().enumerate() {
            assert!((v - c(k as f64 + 1.0, 0.0)).norm() < 1e-13);
        }
        for i in 0..3 {
            let x = e.right.column(i).into_owned();
            let y = e.left.column(i).into_owned();
            assert!((condition_number(e.values[i], &x, &y).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn balancing_keeps_the_transfer_function() {
        let plant = StateSpace::from_rows(2, 1, 1, &[0.0, 1.0, -2.0, -3.0], &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        let comp = Compensator::new(
            CMat::from_element(1, 1, c(-5.0, 0.0)),
            CMat::from_element(1, 1, c(1e-3, 0.0)),
            CMat::from_element(1, 1, c(4e5, 0.0)),
            CMat::from_element(1, 1, c(-1.0, 0.0)),
        )
        .unwrap();
        let bal = balance_states(&plant, &comp).unwrap();
        let s0 = c(0.3, 1.7);
        assert!((bal.transfer(s0).unwrap() - comp.transfer(s0).unwrap()).norm() <= 1e-12 * 400.0);
        assert!(bal.h[(0, 0)].norm() < 1e3 && bal.g[(0, 0)].norm() > 1e-1);
        let before = verify(&plant, &comp, &eigen(&closed_loop(&plant, &comp).unwrap().m).unwrap().values).unwrap();
        let after = verify(&plant, &bal, &before.eigenvalues).unwrap();
        let worst = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        assert!(worst(&after.condition_numbers) < worst(&before.condition_numbers));
    }

    #[test]
    fn large_entries_keep_every_eigenvalue() {
        let d = [-3e4, 2e4, 5e3, -1.0, 0.5, 7.0];
        let mut m = CMat::from_diagonal(&DVector::from_iterator(6, d.iter().map(|&x| c(x, 0.0))));
        m[(0, 5)] = c(1e4, 0.0);
        let e = eigen(&m).unwrap();
        assert_eq!(e.values.len(), 6);
        for &x in &d {
            let best = e.values.iter().map(|v| (v - c(x, 0.0)).norm()).fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-9 * (1.0 + x.abs()), "{x}: {best:e}");
        }
    }

    #[test]
    fn nearly_defective_pair() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(2.000001, 0.0)]);
        let e = eigen(&m).unwrap();
        let vals = sorted_re(e.values.clone());
        assert!((vals[0] - c(2.0, 0.0)).norm() < 1e-9);
        assert!((vals[1] - c(2.000001, 0.0)).norm() < 1e-9);
        for i in 0..2 {
            let x = e.right.column(i).into_owned();
            let y = e.left.column(i).into_owned();
            assert!(condition_number(e.values[i], &x, &y).unwrap() > 1e5);
        }
    }

    #[test]
    fn phase_rotation_leaves_condition_unchanged() {
        let x = DVector::from_row_slice(&[c(0.6, 0.0), c(0.0, 0.8)]);
        let y = DVector::from_row_slice(&[c(0.0, 1.0), c(0.0, 0.0)]);
        let k0 = condition_number(c(1.0, 0.0), &x, &y).unwrap();
        let k1 = condition_number(c(1.0, 0.0), &(&x * C64::from_polar(1.0, 0.7)), &(&y * C64::from_polar(1.0, -2.1)))
            .unwrap();
        assert!((k0 - k1).abs() < 1e-12);
        let orth = DVector::from_row_slice(&[c(0.0, 0.0), c(1.0, 0.0)]);
        let e1 = DVector::from_row_slice(&[c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            condition_number(c(1.0, 0.0), &e1, &orth),
            Err(Error::InfiniteCondition(_))
        ));
    }

    fn scalar_plant() -> StateSpace {
        StateSpace::from_rows(1, 1, 1, &[1.0], &[1.0], &[1.0]).unwrap()
    }

    #[test]
    fn static_scalar_feedback() {
        let k = Compensator::static_gain(CMat::from_element(1, 1, c(-2.0, 0.0)));
        let r = verify(&scalar_plant(), &k, &[c(-1.0, 0.0)]).unwrap();
        assert!(r.max_pole_error <= 1e-14);
        assert!(r.det_residuals[0] <= 1e-14);
    }

    #[test]
    fn closed_loop_blocks() {
        let plant = StateSpace::new(
            RMat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
            RMat::from_row_slice(2, 1, &[0.0, 1.0]),
            RMat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let zero = Compensator::static_gain(CMat::zeros(1, 1));
        let cl = closed_loop(&plant, &zero).unwrap();
        assert_eq!(cl.m, linalg::to_complex(&plant.a));
        let comp = Compensator::new(
            CMat::from_element(1, 1, c(-5.0, 0.0)),
            CMat::from_element(1, 1, c(2.0, 0.0)),
            CMat::from_element(1, 1, c(3.0, 0.0)),
            CMat::from_element(1, 1, c(0.5, 0.0)),
        )
        .unwrap();
        let cl = closed_loop(&plant, &comp).unwrap();
        assert_eq!(cl.m.shape(), (3, 3));
        assert_eq!(cl.m[(1, 0)], c(-1.5, 0.0));
        assert_eq!(cl.m[(1, 2)], c(3.0, 0.0));
        assert_eq!(cl.m[(2, 0)], c(2.0, 0.0));
        assert_eq!(cl.m[(2, 2)], c(-5.0, 0.0));
        // det_check vanishes exactly at the closed-loop eigenvalues
        let e = eigen(&cl.m).unwrap();
        for &l in &e.values {
            assert!(det_check(&plant, &comp, l).unwrap() < 1e-10);
        }
        assert!(det_check(&plant, &comp, c(0.3, 0.9)).unwrap() > 1e-4);
    }

    #[test]
    fn decoupled_blocks_give_unit_determinant() {
        let plant = StateSpace::from_rows(1, 1, 1, &[-1.0], &[1.0], &[1.0]).unwrap();
        let zero = Compensator::static_gain(CMat::zeros(1, 1));
        assert!((det_check(&plant, &zero, c(0.4, 0.2)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_poles_are_reported_not_raised() {
        let k = Compensator::static_gain(CMat::from_element(1, 1, c(1.0, 0.0)));
        let r = verify(&scalar_plant(), &k, &[c(-4.0, 0.0)]).unwrap();
        assert!(r.max_pole_error > 0.5);
    }

    #[test]
    fn greedy_is_a_bijection() {
        let comp = [c(0.0, 0.0), c(1.0, 0.0), c(1.1, 0.0)];
        let given = [c(1.05, 0.0), c(0.1, 0.0), c(1.2, 0.0)];
        let (a, _) = greedy_match(&comp, &given);
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, vec![0, 1, 2]);
        assert_eq!(a[1], 0);
    }
}
