//! Plant model `x' = Ax + Bu, y = Cx`, problem classification and the
//! generic number of feedback laws.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::C64;

/// Pivot-ratio condition estimate beyond which `sI - A` counts as singular.
pub const POLE_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
}

impl StateSpace {
    pub fn new(a: RMat, b: RMat, c: RMat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n}xm, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "C must be px{n}, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(StateSpace { a, b, c })
    }

    /// Builds a plant from row-major slices.
    pub fn from_rows(n: usize, m: usize, p: usize, a: &[f64], b: &[f64], c: &[f64]) -> Result<Self> {
        if a.len() != n * n || b.len() != n * m || c.len() != p * n {
            return Err(Error::DimensionMismatch(format!(
                "array lengths ({}, {}, {}) do not match n={n}, m={m}, p={p}",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        Self::new(
            RMat::from_row_slice(n, n, a),
            RMat::from_row_slice(n, m, b),
            RMat::from_row_slice(p, n, c),
        )
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Solves `(sI - A) X = B`; fails when `s` sits on an open-loop pole.
    pub fn resolvent_b(&self, s: C64) -> Result<CMat> {
        let n = self.n();
        let shifted = CMat::identity(n, n) * s - linalg::to_complex(&self.a);
        let (x, cond) = linalg::solve_refined(&shifted, &linalg::to_complex(&self.b));
        match x {
            Some(x) if cond <= POLE_CONDITION => Ok(x),
            _ => Err(Error::PoleOfPlant(s)),
        }
    }

    /// Plant transfer matrix `C (sI - A)^{-1} B` (p x m).
    pub fn transfer(&self, s: C64) -> Result<CMat> {
        Ok(linalg::to_complex(&self.c) * self.resolvent_b(s)?)
    }

    /// The input m-plane `[C(sI - A)^{-1}B ; I_m]`, an (m+p) x m matrix.
    pub fn sample_plane(&self, s: C64) -> Result<CMat> {
        let (m, p) = (self.m(), self.p());
        let g = self.transfer(s)?;
        let mut plane = CMat::zeros(p + m, m);
        plane.view_mut((0, 0), (p, m)).copy_from(&g);
        plane
            .view_mut((p, 0), (m, m))
            .copy_from(&CMat::identity(m, m));
        Ok(plane)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    Underdetermined { dof: usize },
    ZeroDimensional,
    Overdetermined { excess: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemClass {
    #[serde(flatten)]
    pub kind: ProblemKind,
    /// Generic number of complex feedback laws; absent when overdetermined.
    pub degree: Option<u128>,
}

impl fmt::Display for ProblemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ProblemKind::Underdetermined { dof } => write!(f, "underdetermined, dof {dof}")?,
            ProblemKind::ZeroDimensional => write!(f, "zero-dimensional")?,
            ProblemKind::Overdetermined { excess } => write!(f, "overdetermined, excess {excess}")?,
        }
        if let Some(d) = self.degree {
            write!(f, ", degree {d}")?;
        }
        Ok(())
    }
}

/// Dimension of the geometric problem, `mp + q(m+p)`.
pub fn problem_dimension(m: usize, p: usize, q: usize) -> usize {
    m * p + q * (m + p)
}

/// Compares the `n + q` poles to place with the problem dimension.
pub fn classify(n: usize, m: usize, p: usize, q: usize) -> ProblemClass {
    let dim = problem_dimension(m, p, q);
    let poles = n + q;
    let kind = match poles.cmp(&dim) {
        std::cmp::Ordering::Less => ProblemKind::Underdetermined { dof: dim - poles },
        std::cmp::Ordering::Equal => ProblemKind::ZeroDimensional,
        std::cmp::Ordering::Greater => ProblemKind::Overdetermined { excess: poles - dim },
    };
    let degree = match kind {
        ProblemKind::Overdetermined { .. } => None,
        _ => Some(feedback_degree(m, p, q)),
    };
    ProblemClass { kind, degree }
}

/// Least compensator order that is not overdetermined.
pub fn min_q(n: usize, m: usize, p: usize) -> usize {
    assert!(m + p >= 2);
    // n + q <= mp + q(m+p)  <=>  q (m+p-1) >= n - mp
    let deficit = n.saturating_sub(m * p);
    deficit.div_ceil(m + p - 1)
}

/// Generic number `d(m,p,q)` of complex feedback laws, counted as maximal
/// chains in the poset of p-brackets `a_1 < ... < a_p` with
/// `a_p - a_1 < m + p`, where each cover step raises one entry by one.
/// The chain runs from `[1..p]` to `[m+1..m+p]` lifted by `q(m+p)` spread
/// over the entries. Counts beyond `u128::MAX` saturate.
pub fn feedback_degree(m: usize, p: usize, q: usize) -> u128 {
    assert!(m >= 1 && p >= 1);
    let width = (m + p) as u32;
    let bottom: Vec<u32> = (1..=p as u32).collect();
    let lift = q * (m + p);
    let (base, extra) = (lift / p, lift % p);
    let top: Vec<u32> = (0..p)
        .map(|j| (m + 1 + j + base + usize::from(j >= p - extra)) as u32)
        .collect();
    let mut memo: HashMap<Vec<u32>, u128> = HashMap::new();
    count_chains(&bottom, &top, width, &mut memo)
}

fn count_chains(
    at: &[u32],
    top: &[u32],
    width: u32,
    memo: &mut HashMap<Vec<u32>, u128>,
) -> u128 {
    if at == top {
        return 1;
    }
    if let Some(&v) = memo.get(at) {
        return v;
    }
    let p = at.len();
    let mut total = 0u128;
    let mut next = at.to_vec();
    for j in 0..p {
        let v = at[j] + 1;
        if v > top[j] {
            continue;
        }
        if j + 1 < p && v >= at[j + 1] {
            continue;
        }
        next[j] = v;
        if next[p - 1] - next[0] < width {
            total = total.saturating_add(count_chains(&next, top, width, memo));
        }
        next[j] = at[j];
    }
    memo.insert(at.to_vec(), total);
    total
}
