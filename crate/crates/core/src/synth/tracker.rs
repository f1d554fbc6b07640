//! Total-degree homotopy `H(x, t) = gamma (1 - t) G(x) + t E(x)` with start
//! system `G_k(x) = x_k^d - 1`, tracked by a fourth-order Runge-Kutta
//! tangent predictor and a Newton corrector with adaptive steps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{inf_norm, IntersectionSystem};
use crate::linalg::CMat;
use crate::C64;

/// Relative distance under which two converged endpoints collide.
const CROSSING_RADIUS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerOptions {
    pub initial_step: f64,
    pub max_step: f64,
    /// Paths whose step falls below this are abandoned.
    pub min_step: f64,
    /// Step growth factor after `expand_after` consecutive successes.
    pub expand: f64,
    pub expand_after: usize,
    /// Corrector iterations allowed per step.
    pub max_newton: usize,
    /// Relative Newton tolerance.
    pub corrector_tol: f64,
    pub at_infinity: f64,
    pub max_steps: usize,
    /// Newton iterations at `t = 1`.
    pub end_newton: usize,
    /// Paths failing within this distance of `t = 1` get a final Newton
    /// attempt on the target system.
    pub end_zone: f64,
    /// Largest residual of an accepted endpoint.
    pub accept: f64,
    /// Rounds of re-tracking paths whose endpoints collide.
    pub crossing_rounds: usize,
    /// Step reduction applied to colliding paths in each round.
    pub crossing_shrink: f64,
    /// Extra sweeps with a fresh random `gamma` when a sweep finds fewer
    /// distinct solutions than the generic count.
    pub restarts: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for TrackerOptions {
    fn default() -> Self {
        TrackerOptions {
            initial_step: 0.05,
            max_step: 0.1,
            min_step: 1e-14,
            expand: 1.5,
            expand_after: 3,
            max_newton: 4,
            corrector_tol: 1e-10,
            at_infinity: 1e8,
            max_steps: 100_000,
            end_newton: 100,
            end_zone: 1e-3,
            accept: 1e-8,
            crossing_rounds: 3,
            crossing_shrink: 0.25,
            restarts: 2,
            threads: None,
        }
    }
}

impl TrackerOptions {
    /// Applies `name=value` overrides, where `name` is a field name.
    pub fn set(&mut self, name: &str, value: f64) -> crate::Result<()> {
        let bad = || crate::Error::Parse(format!("bad tracker option {name}={value}"));
        if !value.is_finite() || value < 0.0 {
            return Err(bad());
        }
        match name {
            "initial_step" => self.initial_step = value,
            "max_step" => self.max_step = value,
            "min_step" => self.min_step = value,
            "expand" => self.expand = value,
            "expand_after" => self.expand_after = value as usize,
            "max_newton" => self.max_newton = value as usize,
            "corrector_tol" => self.corrector_tol = value,
            "at_infinity" => self.at_infinity = value,
            "max_steps" => self.max_steps = value as usize,
            "end_newton" => self.end_newton = value as usize,
            "end_zone" => self.end_zone = value,
            "accept" => self.accept = value,
            "crossing_rounds" => self.crossing_rounds = value as usize,
            "crossing_shrink" => self.crossing_shrink = value,
            "restarts" => self.restarts = value as usize,
            "threads" => self.threads = Some(value as usize),
            _ => return Err(crate::Error::Parse(format!("unknown tracker option {name}"))),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    Converged,
    AtInfinity,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub index: usize,
    pub endpoint: Vec<C64>,
    pub status: PathStatus,
    pub residual: f64,
    pub newton_iters_total: usize,
    pub t_reached: f64,
}

struct Homotopy<'a> {
    sys: &'a IntersectionSystem,
    degree: i32,
}

impl Homotopy<'_> {
    /// `H`, `dH/dx` and `dH/dt` at `(x, t)`.
    fn eval(&self, x: &[C64], t: f64) -> (CMat, CMat, CMat) {
        let n = x.len();
        let (e, je) = self.sys.eval_jacobian(x);
        let gamma = self.sys.gamma;
        let d = self.degree;
        let mut h = CMat::zeros(n, 1);
        let mut ht = CMat::zeros(n, 1);
        let mut hx = je * C64::new(t, 0.0);
        for k in 0..n {
            let g = x[k].powi(d) - 1.0;
            h[k] = gamma * (1.0 - t) * g + t * e[k];
            ht[k] = e[k] - gamma * g;
            hx[(k, k)] += gamma * (1.0 - t) * (d as f64) * x[k].powi(d - 1);
        }
        (h, hx, ht)
    }

    /// Tangent `dx/dt = -H_x^{-1} H_t`.
    fn tangent(&self, x: &[C64], t: f64) -> Option<Vec<C64>> {
        let (_, hx, ht) = self.eval(x, t);
        let lu = hx.lu();
        lu.solve(&(-ht)).map(|v| v.iter().copied().collect())
    }

    fn predict(&self, x: &[C64], t: f64, h: f64) -> Option<Vec<C64>> {
        let axpy = |a: &[C64], b: &[C64], c: f64| -> Vec<C64> {
            a.iter().zip(b).map(|(u, v)| u + v * c).collect()
        };
        let k1 = self.tangent(x, t)?;
        let k2 = self.tangent(&axpy(x, &k1, h / 2.0), t + h / 2.0)?;
        let k3 = self.tangent(&axpy(x, &k2, h / 2.0), t + h / 2.0)?;
        let k4 = self.tangent(&axpy(x, &k3, h), t + h)?;
        Some(
            (0..x.len())
                .map(|i| x[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0))
                .collect(),
        )
    }

    /// Newton at fixed `t`. Fails on divergence, on slow contraction or on
    /// exceeding the iteration budget.
    fn correct(&self, x: &mut [C64], t: f64, opts: &TrackerOptions, iters: &mut usize) -> bool {
        let mut prev = f64::INFINITY;
        for _ in 0..opts.max_newton {
            *iters += 1;
            let (h, hx, _) = self.eval(x, t);
            let Some(dx) = hx.lu().solve(&(-h)) else {
                return false;
            };
            let step = dx.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if !step.is_finite() || step > 0.5 * prev {
                return false;
            }
            for (xi, di) in x.iter_mut().zip(dx.iter()) {
                *xi += di;
            }
            if step <= opts.corrector_tol * (1.0 + inf_norm(x)) {
                return true;
            }
            prev = step;
        }
        false
    }
}

/// Start solution number `index`: digit `k` of `index` in base `d` selects
/// the root of unity for `x_k`.
fn start_point(index: usize, n: usize, d: usize) -> Vec<C64> {
    let mut rest = index;
    (0..n)
        .map(|_| {
            let digit = rest % d;
            rest /= d;
            C64::from_polar(1.0, std::f64::consts::TAU * digit as f64 / d as f64)
        })
        .collect()
}

/// Tracks the path from start solution `index`.
pub fn track_path(sys: &IntersectionSystem, index: usize, opts: &TrackerOptions) -> PathResult {
    let n = sys.var_count();
    let d = sys.equation_degree();
    let hom = Homotopy {
        sys,
        degree: d as i32,
    };
    let mut x = start_point(index, n, d);
    let mut t = 0.0;
    let mut h = opts.initial_step;
    let mut streak = 0;
    let mut iters = 0;
    let mut status = None;
    for _ in 0..opts.max_steps {
        if t >= 1.0 {
            break;
        }
        let step = h.min(1.0 - t);
        let t1 = if step >= 1.0 - t { 1.0 } else { t + step };
        let ok = match hom.predict(&x, t, t1 - t) {
            Some(mut y) => {
                let good = hom.correct(&mut y, t1, opts, &mut iters);
                if good {
                    x = y;
                }
                good
            }
            None => false,
        };
        if ok {
            t = t1;
            streak += 1;
            if streak >= opts.expand_after {
                h = (h * opts.expand).min(opts.max_step);
                streak = 0;
            }
        } else {
            h *= 0.5;
            streak = 0;
            if h < opts.min_step {
                status = Some(if inf_norm(&x) > opts.at_infinity.sqrt() {
                    PathStatus::AtInfinity
                } else {
                    PathStatus::Failed
                });
                break;
            }
        }
        if inf_norm(&x) > opts.at_infinity {
            status = Some(PathStatus::AtInfinity);
            break;
        }
    }
    if status.is_none() && t < 1.0 {
        status = Some(PathStatus::Failed);
    }
    // A path that stalls just short of t = 1 usually sits next to an
    // ill-conditioned endpoint; Newton on the target system finishes it.
    if status == Some(PathStatus::Failed) && t >= 1.0 - opts.end_zone {
        let y = super::refine(sys, &x, opts.end_newton);
        iters += opts.end_newton;
        if sys.residual(&y) <= opts.accept && inf_norm(&y) <= opts.at_infinity {
            status = None;
            x = y;
            t = 1.0;
        }
    }
    let residual;
    if let Some(s) = status {
        residual = sys.residual(&x);
        return PathResult {
            index,
            endpoint: x,
            status: s,
            residual,
            newton_iters_total: iters,
            t_reached: t,
        };
    }
    let x = super::refine(sys, &x, opts.end_newton);
    iters += opts.end_newton;
    residual = sys.residual(&x);
    let status = if !residual.is_finite() || inf_norm(&x) > opts.at_infinity {
        PathStatus::AtInfinity
    } else if residual <= opts.accept {
        PathStatus::Converged
    } else {
        PathStatus::Failed
    };
    PathResult {
        index,
        endpoint: x,
        status,
        residual,
        newton_iters_total: iters,
        t_reached: 1.0,
    }
}

fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(k) if k > 0 => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

/// Tracks every path of the total-degree homotopy. Results are ordered by
/// start index regardless of scheduling.
pub fn track_all(sys: &IntersectionSystem, opts: &TrackerOptions) -> Vec<PathResult> {
    let total = usize::try_from(sys.path_count()).expect("path count fits in memory");
    let mut results = track_indices(sys, opts, 0..total);
    retrack_crossings(sys, opts, &mut results);
    results
}

fn track_indices(
    sys: &IntersectionSystem,
    opts: &TrackerOptions,
    indices: impl IntoParallelIterator<Item = usize> + Send,
) -> Vec<PathResult> {
    run_in_pool(opts.threads, || {
        indices
            .into_par_iter()
            .map(|i| track_path(sys, i, opts))
            .collect()
    })
}

fn same_point(a: &[C64], b: &[C64], radius: f64) -> bool {
    let scale = 1.0 + inf_norm(a).max(inf_norm(b));
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).norm())
        .fold(0.0, f64::max)
        <= radius * scale
}

/// Indices (into `results`) of converged paths sharing an endpoint.
fn colliding(results: &[PathResult], radius: f64) -> Vec<usize> {
    let conv: Vec<usize> = (0..results.len())
        .filter(|&i| results[i].status == PathStatus::Converged)
        .collect();
    let mut hit = vec![false; results.len()];
    for (a, &i) in conv.iter().enumerate() {
        for &j in &conv[a + 1..] {
            if same_point(&results[i].endpoint, &results[j].endpoint, radius) {
                hit[i] = true;
                hit[j] = true;
            }
        }
    }
    (0..results.len()).filter(|&i| hit[i]).collect()
}

/// Distinct start solutions of a nonsingular system lead to distinct
/// endpoints, so a collision means some path jumped. Colliding paths,
/// and paths that ended as failures, are tracked again with smaller
/// steps; a rerun replaces the old result when it converges.
fn retrack_crossings(sys: &IntersectionSystem, opts: &TrackerOptions, results: &mut [PathResult]) {
    let mut tight = opts.clone();
    for _ in 0..opts.crossing_rounds {
        let mut redo = colliding(results, CROSSING_RADIUS);
        redo.extend((0..results.len()).filter(|&i| results[i].status == PathStatus::Failed));
        if redo.is_empty() {
            break;
        }
        tight.initial_step *= opts.crossing_shrink;
        tight.max_step *= opts.crossing_shrink;
        let ids: Vec<usize> = redo.iter().map(|&k| results[k].index).collect();
        let again = track_indices(sys, &tight, ids);
        for (k, r) in redo.into_iter().zip(again) {
            if r.status == PathStatus::Converged || results[k].status != PathStatus::Converged {
                results[k] = r;
            }
        }
    }
}

/// Tracks paths in fixed-size batches of consecutive start indices and
/// stops after the batch in which `limit` distinct converged endpoints
/// have been seen. Distinctness uses the relative radius `dedup`.
pub fn track_until(
    sys: &IntersectionSystem,
    opts: &TrackerOptions,
    limit: usize,
    dedup: f64,
) -> Vec<PathResult> {
    const BATCH: usize = 256;
    let total = usize::try_from(sys.path_count()).expect("path count fits in memory");
    let mut out: Vec<PathResult> = Vec::new();
    let mut distinct: Vec<Vec<C64>> = Vec::new();
    let mut start = 0;
    while start < total && distinct.len() < limit {
        let end = (start + BATCH).min(total);
        let batch: Vec<PathResult> = run_in_pool(opts.threads, || {
            (start..end)
                .into_par_iter()
                .map(|i| track_path(sys, i, opts))
                .collect()
        });
        for r in &batch {
            if r.status != PathStatus::Converged {
                continue;
            }
            let scale = 1.0 + inf_norm(&r.endpoint);
            let seen = distinct.iter().any(|c| {
                c.iter()
                    .zip(&r.endpoint)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
                    <= dedup * scale
            });
            if !seen {
                distinct.push(r.endpoint.clone());
            }
        }
        out.extend(batch);
        start = end;
    }
    retrack_crossings(sys, opts, &mut out);
    out
}

/// Number of worker threads requested through `POLEFEED_THREADS`.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("POLEFEED_THREADS").ok()?.trim().parse().ok()
}
