//! Univariate polynomials with complex coefficients.
//!
//! Coefficients are stored in ascending powers. Construction trims trailing
//! coefficients below `DROP_TOL` times the largest magnitude, so the degree
//! is stable under rounding noise. The zero polynomial has no coefficients
//! and reports `degree() == None`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Relative drop tolerance applied on construction.
pub const DROP_TOL: f64 = 1e-12;

/// Maximum number of Aberth sweeps.
pub const MAX_SWEEPS: usize = 200;

/// Separation below which two interpolation abscissae count as equal.
pub const NODE_SEPARATION: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<C64>", into = "Vec<C64>")]
pub struct Poly {
    coeffs: Vec<C64>,
}

impl From<Vec<C64>> for Poly {
    fn from(c: Vec<C64>) -> Self {
        Poly::new(c)
    }
}

impl From<Poly> for Vec<C64> {
    fn from(p: Poly) -> Self {
        p.coeffs
    }
}

/// Roots of a polynomial together with their absolute residuals.
#[derive(Clone, Debug)]
pub struct RootSet {
    pub roots: Vec<C64>,
    pub residuals: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<C64>) -> Self {
        let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        Self::trimmed(coeffs, DROP_TOL * max)
    }

    /// Keeps coefficients exactly as given apart from trailing values with
    /// magnitude `<= abs_tol` (and exact zeros).
    pub fn trimmed(mut coeffs: Vec<C64>, abs_tol: f64) -> Self {
        while let Some(c) = coeffs.last() {
            if c.norm() <= abs_tol || (c.re == 0.0 && c.im == 0.0) {
                coeffs.pop();
            } else {
                break;
            }
        }
        Poly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(C64::new(1.0, 0.0))
    }

    pub fn constant(c: C64) -> Self {
        Self::new(vec![c])
    }

    /// `c * s^k`
    pub fn monomial(c: C64, k: usize) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); k + 1];
        v[k] = c;
        Self::new(v)
    }

    /// The linear factor `s - r`.
    pub fn linear(r: C64) -> Self {
        Poly {
            coeffs: vec![-r, C64::new(1.0, 0.0)],
        }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> C64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Degree with the zero polynomial mapped to -1.
    pub fn deg_i(&self) -> isize {
        self.coeffs.len() as isize - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading(&self) -> C64 {
        self.coeffs.last().copied().unwrap_or_default()
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Horner evaluation.
    pub fn eval(&self, s: C64) -> C64 {
        self.coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, s: C64) -> (C64, C64) {
        let zero = C64::new(0.0, 0.0);
        let mut p = zero;
        let mut dp = zero;
        for &c in self.coeffs.iter().rev() {
            dp = dp * s + p;
            p = p * s + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn scale(&self, c: C64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&a| a * c).collect())
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let lc = self.leading();
        let mut coeffs: Vec<C64> = self.coeffs.iter().map(|&a| a / lc).collect();
        *coeffs.last_mut().unwrap() = C64::new(1.0, 0.0);
        Poly { coeffs }
    }

    pub fn conj(&self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Drops trailing coefficients with magnitude `<= abs_tol`.
    pub fn chop(&self, abs_tol: f64) -> Poly {
        Self::trimmed(self.coeffs.clone(), abs_tol)
    }

    /// Long division; returns `(quotient, remainder)` with
    /// `deg(remainder) < deg(divisor)`.
    pub fn div_rem(&self, divisor: &Poly) -> Result<(Poly, Poly)> {
        let dd = divisor.degree().ok_or(Error::ZeroPolynomial)?;
        let Some(nd) = self.degree() else {
            return Ok((Poly::zero(), Poly::zero()));
        };
        if nd < dd {
            return Ok((Poly::zero(), self.clone()));
        }
        let lc = divisor.leading();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![C64::new(0.0, 0.0); nd - dd + 1];
        for k in (0..=nd - dd).rev() {
            let q = rem[k + dd] / lc;
            quot[k] = q;
            for (i, &d) in divisor.coeffs.iter().enumerate() {
                rem[k + i] -= q * d;
            }
            rem[k + dd] = C64::new(0.0, 0.0);
        }
        rem.truncate(dd);
        Ok((Poly::new(quot), Poly::new(rem)))
    }

    /// All `degree` roots by Aberth–Ehrlich simultaneous iteration.
    pub fn roots(&self) -> Result<RootSet> {
        let n = self.degree().ok_or(Error::ZeroPolynomial)?;
        if n == 0 {
            return Ok(RootSet {
                roots: Vec::new(),
                residuals: Vec::new(),
            });
        }
        let lc = self.leading();
        let monic: Vec<C64> = self.coeffs.iter().map(|&c| c / lc).collect();
        let p = Poly { coeffs: monic };
        let dp = p.derivative();
        let abs_coeffs: Vec<f64> = p.coeffs.iter().map(|c| c.norm()).collect();

        let mut z = initial_guesses(&p.coeffs);
        let mut done = vec![false; n];
        let mut sweeps = 0;
        while sweeps < MAX_SWEEPS && done.iter().any(|d| !d) {
            sweeps += 1;
            for i in 0..n {
                if done[i] {
                    continue;
                }
                let zi = z[i];
                let pv = p.eval(zi);
                // backward-error floor: |p(z)| at rounding level cannot improve
                let floor = 4.0 * f64::EPSILON * horner_abs(&abs_coeffs, zi.norm());
                if pv.norm() <= floor {
                    done[i] = true;
                    continue;
                }
                let ratio = pv / dp.eval(zi);
                let mut sum = C64::new(0.0, 0.0);
                for (j, &zj) in z.iter().enumerate() {
                    if j != i {
                        sum += (zi - zj).inv();
                    }
                }
                let w = ratio / (C64::new(1.0, 0.0) - ratio * sum);
                if !w.re.is_finite() || !w.im.is_finite() {
                    continue;
                }
                z[i] = zi - w;
                if w.norm() < 1e-14 * (1.0 + z[i].norm()) {
                    done[i] = true;
                }
            }
        }

        let residuals: Vec<f64> = z.iter().map(|&r| self.eval(r).norm()).collect();
        if done.iter().all(|&d| d) {
            return Ok(RootSet {
                roots: z,
                residuals,
            });
        }
        // Stalled roots are accepted when their backward error is small;
        // Aberth converges only linearly on exact multiple roots.
        let scale = 1.0 + self.max_abs();
        let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
        if max_residual <= 1e-8 * scale {
            Ok(RootSet {
                roots: z,
                residuals,
            })
        } else {
            Err(Error::NoConvergence {
                sweeps,
                max_residual,
                best: z,
                residuals,
            })
        }
    }

    /// Monic polynomial with exactly the given roots.
    pub fn from_roots(roots: &[C64]) -> Poly {
        let mut coeffs = vec![C64::new(1.0, 0.0)];
        for &r in roots {
            coeffs.push(C64::new(0.0, 0.0));
            for k in (1..coeffs.len()).rev() {
                let prev = coeffs[k - 1];
                coeffs[k] = prev - r * coeffs[k];
            }
            coeffs[0] = -r * coeffs[0];
        }
        Poly { coeffs }
    }

    /// Unique polynomial of degree `< nodes.len()` through the given
    /// `(abscissa, value)` pairs, by divided differences.
    pub fn newton_interpolate(nodes: &[(C64, C64)]) -> Result<Poly> {
        let n = nodes.len();
        for i in 0..n {
            for j in i + 1..n {
                if (nodes[i].0 - nodes[j].0).norm() <= NODE_SEPARATION {
                    return Err(Error::DuplicateNode(i, j));
                }
            }
        }
        if n == 0 {
            return Ok(Poly::zero());
        }
        let xs: Vec<C64> = nodes.iter().map(|p| p.0).collect();
        let mut dd: Vec<C64> = nodes.iter().map(|p| p.1).collect();
        for level in 1..n {
            for i in (level..n).rev() {
                dd[i] = (dd[i] - dd[i - 1]) / (xs[i] - xs[i - level]);
            }
        }
        // nested expansion of the Newton form
        let mut coeffs = vec![dd[n - 1]];
        for k in (0..n - 1).rev() {
            coeffs.insert(0, C64::new(0.0, 0.0));
            for i in 0..coeffs.len() - 1 {
                let next = coeffs[i + 1];
                coeffs[i] -= xs[k] * next;
            }
            coeffs[0] += dd[k];
        }
        Ok(Poly::new(coeffs))
    }
}

fn horner_abs(abs_coeffs: &[f64], r: f64) -> f64 {
    abs_coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

/// Starting points on a circle centred at the root centroid, radius from
/// the coefficient bound `max_k |a_{n-k}|^{1/k}` of the shifted polynomial.
fn initial_guesses(monic: &[C64]) -> Vec<C64> {
    let n = monic.len() - 1;
    let center = -monic[n - 1] / n as f64;
    let shifted = taylor_shift(monic, center);
    let mut radius = 0.0f64;
    for k in 1..=n {
        let a = shifted[n - k].norm();
        if a > 0.0 {
            radius = radius.max(a.powf(1.0 / k as f64));
        }
    }
    if radius == 0.0 {
        radius = 1.0;
    }
    (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            center + C64::from_polar(radius, theta)
        })
        .collect()
}

/// Coefficients of `p(s + c)`.
fn taylor_shift(coeffs: &[C64], c: C64) -> Vec<C64> {
    let mut a = coeffs.to_vec();
    let n = a.len();
    for i in 0..n {
        for k in (i..n - 1).rev() {
            let next = a[k + 1];
            a[k] += c * next;
        }
    }
    a
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|&c| -c).collect(),
        }
    }
}

macro_rules! forward_binop {
    ($tr:ident, $m:ident) => {
        impl $tr for Poly {
            type Output = Poly;
            fn $m(self, rhs: Poly) -> Poly {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Poly> for Poly {
            type Output = Poly;
            fn $m(self, rhs: &Poly) -> Poly {
                (&self).$m(rhs)
            }
        }
        impl $tr<Poly> for &Poly {
            type Output = Poly;
            fn $m(self, rhs: Poly) -> Poly {
                self.$m(&rhs)
            }
        }
    };
}
forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        -&self
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(k, c)| match k {
                0 => format!("({c})"),
                1 => format!("({c})*s"),
                _ => format!("({c})*s^{k}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}
