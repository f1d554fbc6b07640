//! Greatest common divisors of polynomials known only approximately.
//!
//! Two algorithms are provided. [`gcd_naive`] runs the Euclidean remainder
//! sequence and declares a remainder zero once it falls below a tolerance.
//! [`gcd_advanced`] views each input as a set of approximate roots: roots of
//! `a` and `b` closer than `eps` are paired, the gcd is the monic polynomial
//! through the pair midpoints, and the Bezout cofactors `k`, `l` with
//! `k a + l b = d` follow by interpolation at the unpaired roots.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::C64;

#[derive(Clone, Debug)]
pub struct GcdResult {
    /// Monic numerical gcd.
    pub d: Poly,
    pub k: Poly,
    pub l: Poly,
    /// `(alpha, beta, |alpha - beta|)` for every paired root.
    pub matched_pairs: Vec<(C64, C64, f64)>,
    pub r: usize,
}

/// Euclidean remainder sequence. Remainder coefficients and whole
/// remainders with magnitude `<= tol * (1 + |a| + |b|)` are treated as zero.
pub fn gcd_naive(a: &Poly, b: &Poly, tol: f64) -> Poly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    let zero_tol = tol * (1.0 + a.norm() + b.norm());
    let (mut r0, mut r1) = if a.deg_i() >= b.deg_i() {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    };
    loop {
        if r1.norm() <= zero_tol {
            return r0.monic();
        }
        if r1.degree() == Some(0) {
            return Poly::one();
        }
        let (_, rem) = r0.div_rem(&r1).expect("divisor is nonzero");
        r0 = r1;
        r1 = rem.chop(zero_tol);
    }
}

/// Greedy bipartite pairing: candidate pairs with distance `<= eps` are
/// accepted in increasing-distance order, each root used at most once.
/// Returns `(index into alpha, index into beta, distance)`.
pub fn match_roots(alpha: &[C64], beta: &[C64], eps: f64) -> Vec<(usize, usize, f64)> {
    let mut cand: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &x) in alpha.iter().enumerate() {
        for (j, &y) in beta.iter().enumerate() {
            let dist = (x - y).norm();
            if dist <= eps {
                cand.push((i, j, dist));
            }
        }
    }
    cand.sort_by(|p, q| {
        p.2.partial_cmp(&q.2)
            .unwrap()
            .then(p.0.cmp(&q.0))
            .then(p.1.cmp(&q.1))
    });
    let mut used_a = vec![false; alpha.len()];
    let mut used_b = vec![false; beta.len()];
    let mut out = Vec::new();
    for (i, j, dist) in cand {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j, dist));
        }
    }
    out
}

/// A pairing is contested when some root within `eps` of a partner also has
/// a second candidate within `2 eps`, so a perturbation of `eps` could swap
/// partners. Returns the pair counts at `eps / 2` and `2 eps` in that case.
fn contested(alpha: &[C64], beta: &[C64], eps: f64) -> Option<(usize, usize)> {
    let near = |x: C64, ys: &[C64]| {
        let mut d: Vec<f64> = ys.iter().map(|&y| (x - y).norm()).collect();
        d.sort_by(|p, q| p.partial_cmp(q).unwrap());
        d.len() >= 2 && d[0] <= eps && d[1] <= 2.0 * eps
    };
    let clash = alpha.iter().any(|&x| near(x, beta)) || beta.iter().any(|&y| near(y, alpha));
    clash.then(|| {
        (
            match_roots(alpha, beta, 0.5 * eps).len(),
            match_roots(alpha, beta, 2.0 * eps).len(),
        )
    })
}

/// Root-matching gcd with interpolated Bezout cofactors.
pub fn gcd_advanced(a: &Poly, b: &Poly, eps: f64) -> Result<GcdResult> {
    if a.is_zero() || b.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let alpha = a.roots()?.roots;
    let beta = b.roots()?.roots;
    gcd_from_roots(a, b, &alpha, &beta, eps)
}

/// The root-matching step of [`gcd_advanced`] on precomputed roots.
pub fn gcd_from_roots(
    a: &Poly,
    b: &Poly,
    alpha: &[C64],
    beta: &[C64],
    eps: f64,
) -> Result<GcdResult> {
    let pairs = match_roots(alpha, beta, eps);
    if let Some((low, high)) = contested(alpha, beta, eps) {
        return Err(Error::MatchingAmbiguity {
            matched_low: low,
            matched_high: high,
        });
    }

    let mids: Vec<C64> = pairs
        .iter()
        .map(|&(i, j, _)| 0.5 * (alpha[i] + beta[j]))
        .collect();
    let d = Poly::from_roots(&mids);

    let mut paired_a = vec![false; alpha.len()];
    let mut paired_b = vec![false; beta.len()];
    for &(i, j, _) in &pairs {
        paired_a[i] = true;
        paired_b[j] = true;
    }
    let k_nodes: Vec<(C64, C64)> = beta
        .iter()
        .zip(&paired_b)
        .filter(|(_, &used)| !used)
        .map(|(&z, _)| (z, d.eval(z) / a.eval(z)))
        .collect();
    let l_nodes: Vec<(C64, C64)> = alpha
        .iter()
        .zip(&paired_a)
        .filter(|(_, &used)| !used)
        .map(|(&z, _)| (z, d.eval(z) / b.eval(z)))
        .collect();

    let (k, l) = if k_nodes.is_empty() && l_nodes.is_empty() {
        // a and b are both constant multiples of d
        (Poly::constant(a.leading().inv()), Poly::zero())
    } else {
        (
            Poly::newton_interpolate(&k_nodes)?,
            Poly::newton_interpolate(&l_nodes)?,
        )
    };

    Ok(GcdResult {
        r: pairs.len(),
        matched_pairs: pairs
            .iter()
            .map(|&(i, j, dist)| (alpha[i], beta[j], dist))
            .collect(),
        d,
        k,
        l,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Random,
    /// Leading coefficient of `b` is `1e-5` times that of `a`.
    Specific1,
    /// Equal leading coefficients, second-highest coefficients `1e-5` apart.
    Specific2,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Random => "random",
            Scenario::Specific1 => "specific1",
            Scenario::Specific2 => "specific2",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Scenario::Random),
            "specific1" => Ok(Scenario::Specific1),
            "specific2" => Ok(Scenario::Specific2),
            _ => Err(Error::Parse(format!("unknown scenario `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: Scenario,
    pub degree_inputs: usize,
    pub degree_gcd: usize,
    pub trials: usize,
    pub successes_naive: usize,
    pub successes_advanced: usize,
    pub eps: f64,
    pub seed: u64,
}

impl BenchReport {
    pub fn naive_percent(&self) -> f64 {
        100.0 * self.successes_naive as f64 / self.trials as f64
    }

    pub fn advanced_percent(&self) -> f64 {
        100.0 * self.successes_advanced as f64 / self.trials as f64
    }
}

/// One generated test pair with its planted common roots.
#[derive(Clone, Debug)]
pub struct Instance {
    pub a: Poly,
    pub b: Poly,
    pub common: Vec<C64>,
}

const ANNULUS: (f64, f64) = (0.3, 1.5);
const MIN_SEPARATION: f64 = 1e-2;
const SUCCESS_RADIUS: f64 = 1e-6;

fn annulus_point(rng: &mut impl Rng) -> C64 {
    let (r0, r1) = ANNULUS;
    let rad = rng.gen_range(r0 * r0..r1 * r1).sqrt();
    C64::from_polar(rad, rng.gen_range(0.0..std::f64::consts::TAU))
}

fn well_separated(pts: &[C64]) -> bool {
    pts.iter().enumerate().all(|(i, &x)| {
        pts[i + 1..]
            .iter()
            .all(|&y| (x - y).norm() >= MIN_SEPARATION)
    })
}

/// Draws an instance with `degree_gcd` planted common roots; both inputs
/// have degree `degree_inputs`.
pub fn planted_instance(
    scenario: Scenario,
    degree_inputs: usize,
    degree_gcd: usize,
    rng: &mut impl Rng,
) -> Instance {
    let extra = degree_inputs - degree_gcd;
    loop {
        let common: Vec<C64> = (0..degree_gcd).map(|_| annulus_point(rng)).collect();
        let extra_a: Vec<C64> = (0..extra).map(|_| annulus_point(rng)).collect();
        let mut extra_b: Vec<C64> = (0..extra).map(|_| annulus_point(rng)).collect();
        if scenario == Scenario::Specific2 {
            // b_{e-1} - a_{e-1} = sum(alpha) - sum(beta) = 1e-5 for monic inputs;
            // shift b's free roots so the common roots stay exact.
            let sa: C64 = extra_a.iter().sum();
            let sb: C64 = extra_b.iter().sum();
            let delta = (sa - 1e-5 - sb) / extra as f64;
            for z in &mut extra_b {
                *z += delta;
            }
        }
        let all: Vec<C64> = common
            .iter()
            .chain(&extra_a)
            .chain(&extra_b)
            .copied()
            .collect();
        if !well_separated(&all) {
            continue;
        }
        let a_roots: Vec<C64> = common.iter().chain(&extra_a).copied().collect();
        let b_roots: Vec<C64> = common.iter().chain(&extra_b).copied().collect();
        let a = Poly::from_roots(&a_roots);
        let mut b = Poly::from_roots(&b_roots);
        if scenario == Scenario::Specific1 {
            b = b.scale(C64::new(1e-5, 0.0));
        }
        return Instance { a, b, common };
    }
}

fn recovers(found: &[C64], planted: &[C64]) -> bool {
    found.len() == planted.len()
        && match_roots(found, planted, SUCCESS_RADIUS).len() == planted.len()
}

/// Success of both algorithms on one instance: `(naive, advanced)`.
pub fn score_instance(inst: &Instance, eps: f64) -> (bool, bool) {
    let naive = gcd_naive(&inst.a, &inst.b, eps);
    let naive_ok = naive.degree() == Some(inst.common.len())
        && match naive.roots() {
            Ok(rs) => recovers(&rs.roots, &inst.common),
            Err(_) => false,
        };
    let adv_ok = match gcd_advanced(&inst.a, &inst.b, eps) {
        Ok(g) => {
            let mids: Vec<C64> = g
                .matched_pairs
                .iter()
                .map(|&(x, y, _)| 0.5 * (x + y))
                .collect();
            g.r == inst.common.len() && recovers(&mids, &inst.common)
        }
        Err(_) => false,
    };
    (naive_ok, adv_ok)
}

/// Per-trial seed derived from the run seed and trial index.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs both algorithms on `trials` generated instances.
pub fn gcd_bench(
    scenario: Scenario,
    degree_inputs: usize,
    degree_gcd: usize,
    trials: usize,
    eps: f64,
    seed: u64,
) -> BenchReport {
    assert!(degree_gcd < degree_inputs, "gcd degree must be below input degree");
    assert!(trials >= 1);
    let (naive, adv) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, t));
            let inst = planted_instance(scenario, degree_inputs, degree_gcd, &mut rng);
            let (n, a) = score_instance(&inst, eps);
            (n as usize, a as usize)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    BenchReport {
        scenario,
        degree_inputs,
        degree_gcd,
        trials,
        successes_naive: naive,
        successes_advanced: adv,
        eps,
        seed,
    }
}
