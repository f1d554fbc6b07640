//! Pole placement as a polynomial system, solved by homotopy continuation.
//!
//! A compensator of order `q` is represented by the `(m+p) x p` polynomial
//! matrix `X(s) = [U(s); V(s)]` with transfer function `T = V U^{-1}`. In the
//! chart used here column `j` of `U` has a monic diagonal entry of degree
//! `d_j` and off-diagonal entries of degree below `d_j`; column `j` of `V`
//! has degree at most `d_j`, where the `d_j` sum to `q`. The free
//! coefficients are the unknowns, `mp + q(m+p)` of them.
//!
//! Placing a closed-loop pole at `s_i` means `det [X(s_i) | M_i] = 0` with
//! `M_i = [C (s_i I - A)^{-1} B ; I_m]`. Each equation is affine in every
//! column of `X`, so it has total degree `p` and the total-degree homotopy
//! tracks `p^N` paths.

mod tracker;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::plant::{classify, min_q, ProblemClass, ProblemKind, StateSpace};
use crate::poly::Poly;
use crate::polymat::PolyMatrix;
use crate::tolerances::Tolerances;
use crate::C64;

pub use tracker::{threads_from_env, track_all, track_path, track_until, PathResult, PathStatus, TrackerOptions};

/// Poles closer than this are rejected as duplicates.
pub const POLE_SEPARATION: f64 = 1e-8;

/// Interval from which padded poles are drawn.
pub const PAD_INTERVAL: (f64, f64) = (-1.0, -0.1);

/// Smallest accepted pivot of an orthonormalized plane.
const PLANE_RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    U,
    V,
}

/// Position of one unknown: coefficient of `s^power` in entry `(row, col)`
/// of the `U` or `V` block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub block: Block,
    pub row: usize,
    pub col: usize,
    pub power: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chart {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub col_degrees: Vec<usize>,
    /// Unknowns in order: the `U` block column by column (rows, then
    /// powers), followed by the `V` block in the same order.
    pub layout: Vec<Slot>,
}

impl Chart {
    pub fn var_count(&self) -> usize {
        self.layout.len()
    }

    /// `U(s)` and `V(s)` for the coordinates `x`.
    pub fn matrices(&self, x: &[C64]) -> (PolyMatrix, PolyMatrix) {
        let (m, p) = (self.m, self.p);
        let mut u: Vec<Vec<Vec<C64>>> = (0..p)
            .map(|r| {
                (0..p)
                    .map(|j| {
                        let mut c = vec![C64::new(0.0, 0.0); self.col_degrees[j] + 1];
                        if r == j {
                            c[self.col_degrees[j]] = C64::new(1.0, 0.0);
                        }
                        c
                    })
                    .collect()
            })
            .collect();
        let mut v: Vec<Vec<Vec<C64>>> = (0..m)
            .map(|_| {
                (0..p)
                    .map(|j| vec![C64::new(0.0, 0.0); self.col_degrees[j] + 1])
                    .collect()
            })
            .collect();
        for (slot, &val) in self.layout.iter().zip(x) {
            match slot.block {
                Block::U => u[slot.row][slot.col][slot.power] = val,
                Block::V => v[slot.row][slot.col][slot.power] = val,
            }
        }
        let to_matrix = |rows: usize, e: Vec<Vec<Vec<C64>>>| {
            PolyMatrix::from_entries(
                rows,
                p,
                e.into_iter().flatten().map(Poly::new).collect(),
            )
            .expect("shape fixed by the chart")
        };
        (to_matrix(p, u), to_matrix(m, v))
    }

    /// The numeric matrix `X(s)` for coordinates `x`.
    pub fn eval_x(&self, x: &[C64], s: C64) -> CMat {
        let p = self.p;
        let mut w = CMat::zeros(self.m + p, p);
        for j in 0..p {
            w[(j, j)] = s.powu(self.col_degrees[j] as u32);
        }
        for (slot, &val) in self.layout.iter().zip(x) {
            let row = match slot.block {
                Block::U => slot.row,
                Block::V => p + slot.row,
            };
            w[(row, slot.col)] += val * s.powu(slot.power as u32);
        }
        w
    }
}

/// Chart with `q` spread as evenly as possible over the `p` columns, the
/// first `q mod p` columns taking the larger degree.
pub fn make_chart(m: usize, p: usize, q: usize) -> Chart {
    let degrees = (0..p).map(|j| q / p + usize::from(j < q % p)).collect();
    chart_with_degrees(m, p, degrees)
}

/// Number of free coefficients of the off-diagonal entry `(r, j)` of `U`
/// in column Popov form: its degree stays below the pivot degree `d_r` of
/// its row and at most `d_j`, strictly below unless pivot `r` comes first
/// in the (degree descending, index) order.
fn off_diagonal_len(d: &[usize], r: usize, j: usize) -> usize {
    let (dr, dj) = (d[r], d[j]);
    let first = dr > dj || (dr == dj && r < j);
    if first {
        (dj + 1).min(dr)
    } else {
        dj.min(dr)
    }
}

/// Chart for a balanced column degree sequence (entries differ by at most
/// one).
pub fn chart_with_degrees(m: usize, p: usize, col_degrees: Vec<usize>) -> Chart {
    assert_eq!(col_degrees.len(), p);
    let (lo, hi) = (col_degrees.iter().min(), col_degrees.iter().max());
    assert!(
        hi.zip(lo).map_or(true, |(h, l)| h - l <= 1),
        "column degrees must be balanced"
    );
    let q = col_degrees.iter().sum();
    let mut layout = Vec::new();
    for (j, &d) in col_degrees.iter().enumerate() {
        for row in 0..p {
            let len = if row == j {
                d
            } else {
                off_diagonal_len(&col_degrees, row, j)
            };
            for power in 0..len {
                layout.push(Slot {
                    block: Block::U,
                    row,
                    col: j,
                    power,
                });
            }
        }
    }
    for (j, &d) in col_degrees.iter().enumerate() {
        for row in 0..m {
            for power in 0..=d {
                layout.push(Slot {
                    block: Block::V,
                    row,
                    col: j,
                    power,
                });
            }
        }
    }
    Chart {
        m,
        p,
        q,
        col_degrees,
        layout,
    }
}

/// Balanced column degree sequences of length `p` summing to `q`: every
/// placement of the `q mod p` larger degrees. Less balanced sequences give
/// charts of lower dimension, which generic solutions avoid.
pub fn degree_sequences(q: usize, p: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (q / p, q % p);
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << p) {
        if mask.count_ones() as usize == extra {
            out.push((0..p).map(|j| base + usize::from(mask >> j & 1 == 1)).collect());
        }
    }
    out.sort_by(|a: &Vec<usize>, b| b.cmp(a));
    out
}

/// Full interpolation point list: the user poles followed by padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddedPoles {
    pub poles: Vec<C64>,
    /// Number of trailing entries of `poles` that were appended.
    pub padded: usize,
    pub class: ProblemClass,
}

impl PaddedPoles {
    pub fn user_poles(&self) -> &[C64] {
        &self.poles[..self.poles.len() - self.padded]
    }
}

/// Appends padding points so the count reaches `mp + q(m+p)`. Points come
/// from `extra` first, then uniformly from [`PAD_INTERVAL`].
pub fn pad_poles(
    plant: &StateSpace,
    poles: &[C64],
    q: usize,
    extra: &[C64],
    rng: &mut impl Rng,
) -> Result<PaddedPoles> {
    let (n, m, p) = (plant.n(), plant.m(), plant.p());
    let class = classify(n, m, p, q);
    let need = match class.kind {
        ProblemKind::Overdetermined { excess } => {
            return Err(Error::OverdeterminedProblem {
                excess,
                suggested_q: min_q(n, m, p),
            })
        }
        ProblemKind::ZeroDimensional => 0,
        ProblemKind::Underdetermined { dof } => dof,
    };
    if poles.len() != n + q {
        return Err(Error::PoleCount {
            expected: n + q,
            got: poles.len(),
        });
    }
    let mut all = poles.to_vec();
    for k in 0..need {
        let s = match extra.get(k) {
            Some(&s) => s,
            None => C64::new(rng.gen_range(PAD_INTERVAL.0..PAD_INTERVAL.1), 0.0),
        };
        all.push(s);
    }
    Ok(PaddedPoles {
        poles: all,
        padded: need,
        class,
    })
}

/// Equations `det [X(s_i) | M_i] = 0` over a chart.
#[derive(Clone, Debug)]
pub struct IntersectionSystem {
    pub chart: Chart,
    pub poles: Vec<C64>,
    /// Orthonormal bases of the input planes, `(m+p) x m` each.
    pub planes: Vec<CMat>,
    /// Number of trailing poles that are padding points.
    pub padded: usize,
    /// Random unit constant of the start system.
    pub gamma: C64,
    pub seed: u64,
}

/// Orthonormal basis of the column span of `m` (thin QR).
fn orthonormal(m: &CMat) -> Result<CMat> {
    let qr = m.clone().qr();
    let r = qr.r();
    let scale = linalg::max_norm(m).max(f64::MIN_POSITIVE);
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)].norm() <= PLANE_RANK_TOL * scale {
            return Err(Error::DimensionMismatch(
                "input plane is rank deficient".into(),
            ));
        }
    }
    Ok(qr.q())
}

/// Plant-sampled planes at the user poles; random real planes at padding
/// points, since the plant planes of a fixed closed loop can only meet
/// `X` at its `n + q` eigenvalues.
pub fn build_system(
    plant: &StateSpace,
    padded: &PaddedPoles,
    chart: Chart,
    seed: u64,
) -> Result<IntersectionSystem> {
    let poles = &padded.poles;
    if poles.len() != chart.var_count() {
        return Err(Error::PoleCount {
            expected: chart.var_count(),
            got: poles.len(),
        });
    }
    for i in 0..poles.len() {
        for j in 0..i {
            if (poles[i] - poles[j]).norm() <= POLE_SEPARATION {
                return Err(Error::DuplicatePoles(j, i));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, p) = (plant.m(), plant.p());
    let user = poles.len() - padded.padded;
    let mut planes = Vec::with_capacity(poles.len());
    for (i, &s) in poles.iter().enumerate() {
        let raw = if i < user {
            plant.sample_plane(s)?
        } else {
            CMat::from_fn(m + p, m, |_, _| C64::new(rng.gen_range(-1.0..1.0), 0.0))
        };
        planes.push(orthonormal(&raw)?);
    }
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    Ok(IntersectionSystem {
        chart,
        poles: poles.clone(),
        planes,
        padded: padded.padded,
        gamma: C64::from_polar(1.0, theta),
        seed,
    })
}

impl IntersectionSystem {
    /// Same equations with the homotopy constant `gamma` drawn from `seed`.
    pub fn with_gamma_seed(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.gamma = C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
        self
    }

    pub fn var_count(&self) -> usize {
        self.chart.var_count()
    }

    /// Degree of every equation.
    pub fn equation_degree(&self) -> usize {
        self.chart.p
    }

    pub fn path_count(&self) -> u128 {
        (self.equation_degree() as u128).pow(self.var_count() as u32)
    }

    fn assemble(&self, i: usize, x: &[C64]) -> CMat {
        let (m, p) = (self.chart.m, self.chart.p);
        let mut w = CMat::zeros(m + p, m + p);
        w.view_mut((0, 0), (m + p, p))
            .copy_from(&self.chart.eval_x(x, self.poles[i]));
        w.view_mut((0, p), (m + p, m)).copy_from(&self.planes[i]);
        w
    }

    /// Equation values.
    pub fn eval(&self, x: &[C64]) -> Vec<C64> {
        (0..self.poles.len())
            .map(|i| linalg::det(&self.assemble(i, x)))
            .collect()
    }

    /// Equation values and Jacobian. The determinant is affine in each
    /// entry of `X`, so `dE_i / dx_k = s_i^e adj(W_i)[col, row]`.
    pub fn eval_jacobian(&self, x: &[C64]) -> (Vec<C64>, CMat) {
        let n = self.var_count();
        let p = self.chart.p;
        let mut values = Vec::with_capacity(n);
        let mut jac = CMat::zeros(n, n);
        for (i, &s) in self.poles.iter().enumerate() {
            let (det, adj) = linalg::det_adjugate(&self.assemble(i, x));
            values.push(det);
            for (k, slot) in self.chart.layout.iter().enumerate() {
                let row = match slot.block {
                    Block::U => slot.row,
                    Block::V => p + slot.row,
                };
                jac[(i, k)] = s.powu(slot.power as u32) * adj[(slot.col, row)];
            }
        }
        (values, jac)
    }

    /// `max_i |E_i(x)| / (1 + |x|)`.
    pub fn residual(&self, x: &[C64]) -> f64 {
        let scale = 1.0 + inf_norm(x);
        self.eval(x).iter().map(|e| e.norm()).fold(0.0, f64::max) / scale
    }
}

pub(crate) fn inf_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSolution {
    pub u: PolyMatrix,
    pub v: PolyMatrix,
    /// Chart coordinates.
    pub coords: Vec<C64>,
    pub col_degrees: Vec<usize>,
    pub is_real: bool,
    pub residual: f64,
    /// Number of path endpoints merged into this solution.
    pub multiplicity: usize,
}

/// True when every coordinate has imaginary part at most `tol (1 + |x_k|)`.
pub fn is_real_point(x: &[C64], tol: f64) -> bool {
    x.iter().all(|z| z.im.abs() <= tol * (1.0 + z.norm()))
}

/// Newton iterations on the target system; returns the refined point.
pub fn refine(system: &IntersectionSystem, x: &[C64], iterations: usize) -> Vec<C64> {
    let mut x = x.to_vec();
    for _ in 0..iterations {
        let (e, j) = system.eval_jacobian(&x);
        let rhs = CMat::from_iterator(e.len(), 1, e.iter().map(|v| -v));
        let (dx, _) = linalg::solve_refined(&j, &rhs);
        let Some(dx) = dx else { break };
        let step = dx.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (xi, di) in x.iter_mut().zip(dx.iter()) {
            *xi += di;
        }
        if step <= f64::EPSILON * (1.0 + inf_norm(&x)) {
            break;
        }
    }
    x
}

/// Merges converged endpoints, rebuilds `U` and `V`, flags real solutions
/// and sorts real first, then by residual.
pub fn solutions(
    system: &IntersectionSystem,
    results: &[PathResult],
    tol: &Tolerances,
) -> Vec<FeedbackSolution> {
    let mut clusters: Vec<(Vec<C64>, usize)> = Vec::new();
    for r in results.iter().filter(|r| r.status == PathStatus::Converged) {
        let x = &r.endpoint;
        let scale = 1.0 + inf_norm(x);
        match clusters.iter_mut().find(|(c, _)| {
            c.iter().zip(x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) <= tol.dedup * scale
        }) {
            Some(c) => c.1 += 1,
            None => clusters.push((x.clone(), 1)),
        }
    }
    let mut out: Vec<FeedbackSolution> = clusters
        .into_iter()
        .map(|(x, multiplicity)| {
            let mut coords = x;
            let is_real = is_real_point(&coords, tol.real);
            if is_real {
                let projected: Vec<C64> = coords.iter().map(|z| C64::new(z.re, 0.0)).collect();
                coords = refine(system, &projected, 3)
                    .into_iter()
                    .map(|z| C64::new(z.re, 0.0))
                    .collect();
                if system.residual(&coords) > system.residual(&projected) {
                    coords = projected;
                }
            }
            let (u, v) = system.chart.matrices(&coords);
            FeedbackSolution {
                u,
                v,
                residual: system.residual(&coords),
                coords,
                col_degrees: system.chart.col_degrees.clone(),
                is_real,
                multiplicity,
            }
        })
        .filter(|s| s.residual <= tol.residual)
        .collect();
    sort_solutions(&mut out);
    out
}

pub fn sort_solutions(sols: &mut [FeedbackSolution]) {
    sols.sort_by(|a, b| {
        b.is_real
            .cmp(&a.is_real)
            .then(a.residual.partial_cmp(&b.residual).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// `T(s) = V(s) U(s)^{-1}` at `s`.
pub fn transfer_at(sol: &FeedbackSolution, s: C64) -> Option<CMat> {
    let u = sol.u.eval(s);
    let v = sol.v.eval(s);
    let ut = u.transpose();
    let (y, _) = linalg::solve_refined(&ut, &v.transpose());
    y.map(|y| y.transpose())
}
