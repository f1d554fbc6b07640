//! End-to-end synthesis: pad poles, track the homotopy, extract feedback
//! laws, realize each one and verify the closed loop.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg;
use crate::plant::{self, ProblemClass, ProblemKind, StateSpace};
use crate::polymat::PolyMatrix;
use crate::realize::{self, Compensator, TransferPair};
use crate::synth::{self, FeedbackSolution, PathResult, PathStatus, TrackerOptions};
use crate::tolerances::Tolerances;
use crate::verify::{self, VerifyReport};
use crate::C64;

/// Probe points used to compare transfer functions found in different
/// charts.
const UNION_PROBES: [C64; 2] = [C64::new(0.37, 1.13), C64::new(-1.21, 0.53)];

/// Compensator order: a fixed value or the least order that is not
/// overdetermined. Serialized as an integer or the string `"auto"`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QChoice {
    Fixed(usize),
    #[default]
    Auto,
}

impl Serialize for QChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QChoice::Fixed(q) => s.serialize_u64(*q as u64),
            QChoice::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for QChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(q) => Ok(QChoice::Fixed(q)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl QChoice {
    pub fn resolve(self, plant: &StateSpace) -> usize {
        match self {
            QChoice::Fixed(q) => q,
            QChoice::Auto => plant::min_q(plant.n(), plant.m(), plant.p()),
        }
    }
}

impl std::str::FromStr for QChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(QChoice::Auto);
        }
        s.parse()
            .map(QChoice::Fixed)
            .map_err(|_| Error::Parse(format!("q must be an integer or \"auto\", got {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Relative paths resolve against the config file's directory.
    pub plant_path: PathBuf,
    #[serde(with = "io::cvec")]
    pub poles: Vec<C64>,
    #[serde(default)]
    pub q: QChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_solutions: Option<usize>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub tracker: BTreeMap<String, f64>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Padding points used before random ones are drawn.
    #[serde(default, with = "io::cvec")]
    pub extra_poles: Vec<C64>,
    /// Solve in every column-degree chart and merge the results.
    #[serde(default)]
    pub all_charts: bool,
}

impl RunConfig {
    pub fn new(plant_path: impl Into<PathBuf>, poles: Vec<C64>) -> Self {
        RunConfig {
            plant_path: plant_path.into(),
            poles,
            q: QChoice::Auto,
            seed: 0,
            max_solutions: None,
            tolerances: BTreeMap::new(),
            tracker: BTreeMap::new(),
            output_path: None,
            extra_poles: Vec::new(),
            all_charts: false,
        }
    }

    /// Reads a config and makes `plant_path` absolute relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if cfg.plant_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.plant_path = dir.join(&cfg.plant_path);
            }
        }
        Ok(cfg)
    }

    pub fn tolerances(&self) -> Result<Tolerances> {
        let mut tol = Tolerances::default();
        for (k, &v) in &self.tolerances {
            tol.set(k, v)?;
        }
        Ok(tol)
    }

    pub fn tracker_options(&self, tol: &Tolerances) -> Result<TrackerOptions> {
        let mut opts = TrackerOptions {
            corrector_tol: tol.corrector,
            at_infinity: tol.at_infinity,
            threads: synth::threads_from_env(),
            ..TrackerOptions::default()
        };
        for (k, &v) in &self.tracker {
            opts.set(k, v)?;
        }
        Ok(opts)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCounts {
    /// Extra sweeps run with a new `gamma`; `tracked` includes them.
    #[serde(default)]
    pub restarts: usize,
    pub tracked: usize,
    pub converged: usize,
    pub at_infinity: usize,
    pub failed: usize,
}

impl PathCounts {
    fn add(&mut self, results: &[PathResult]) {
        for r in results {
            self.tracked += 1;
            match r.status {
                PathStatus::Converged => self.converged += 1,
                PathStatus::AtInfinity => self.at_infinity += 1,
                PathStatus::Failed => self.failed += 1,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    #[serde(rename = "U")]
    pub u: PolyMatrix,
    #[serde(rename = "V")]
    pub v: PolyMatrix,
    pub compensator: Option<Compensator>,
    pub is_real: bool,
    pub residual: f64,
    pub multiplicity: usize,
    pub max_pole_error: Option<f64>,
    pub condition_numbers: Vec<f64>,
    pub verify: Option<VerifyReport>,
    /// Stage and message of a realization or verification failure.
    pub error: Option<String>,
}

impl SolutionRecord {
    pub fn transfer_pair(&self) -> Result<TransferPair> {
        TransferPair::new(self.v.clone(), self.u.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub q: usize,
    pub class: ProblemClass,
    pub feedback_degree: u128,
    /// User poles followed by padding points.
    #[serde(with = "io::cvec")]
    pub interpolation_points: Vec<C64>,
    pub padded: usize,
    pub solutions: Vec<SolutionRecord>,
    pub counts: PathCounts,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn user_poles(&self) -> &[C64] {
        &self.interpolation_points[..self.interpolation_points.len() - self.padded]
    }

    pub fn real_count(&self) -> usize {
        self.solutions.iter().filter(|s| s.is_real).count()
    }

    /// One line per solution plus a header.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "q={} {}; {} paths ({} converged, {} at infinity, {} failed); {} solutions, {} real\n",
            self.q,
            self.class,
            self.counts.tracked,
            self.counts.converged,
            self.counts.at_infinity,
            self.counts.failed,
            self.solutions.len(),
            self.real_count()
        );
        for (i, s) in self.solutions.iter().enumerate() {
            let err = s.max_pole_error.map_or("-".to_string(), |e| format!("{e:.2e}"));
            let cond = s
                .condition_numbers
                .iter()
                .cloned()
                .fold(None, |a: Option<f64>, c| Some(a.map_or(c, |a| a.max(c))))
                .map_or("-".to_string(), |c| format!("{c:.2e}"));
            out.push_str(&format!(
                "  #{i:<3} {:<7} residual {:.2e}  pole error {err}  max cond {cond}{}\n",
                if s.is_real { "real" } else { "complex" },
                s.residual,
                s.error.as_ref().map_or(String::new(), |e| format!("  [{e}]")),
            ));
        }
        out
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Seed of the random `gamma` for sweep `k`; sweep 0 uses the run seed.
fn sweep_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Merges solutions, from different charts or sweeps, whose transfer
/// functions agree at the probe points.
fn merge_across_charts(all: Vec<FeedbackSolution>, tol: &Tolerances) -> Vec<FeedbackSolution> {
    let mut kept: Vec<(FeedbackSolution, Vec<linalg::CMat>)> = Vec::new();
    for sol in all {
        let samples: Option<Vec<_>> = UNION_PROBES.iter().map(|&z| synth::transfer_at(&sol, z)).collect();
        let Some(samples) = samples else { continue };
        let twin = kept.iter_mut().find(|(_, other)| {
            other.iter().zip(&samples).all(|(a, b)| {
                linalg::max_norm(&(a - b)) <= tol.dedup * (1.0 + linalg::max_norm(a))
            })
        });
        match twin {
            Some((k, _)) => {
                k.multiplicity += sol.multiplicity;
                if sol.residual < k.residual {
                    let mult = k.multiplicity;
                    *k = FeedbackSolution {
                        multiplicity: mult,
                        ..sol
                    };
                }
            }
            None => kept.push((sol, samples)),
        }
    }
    kept.into_iter().map(|(s, _)| s).collect()
}

/// Realizes and verifies one feedback law against the user poles.
pub fn finish_solution(
    plant: &StateSpace,
    sol: &FeedbackSolution,
    poles: &[C64],
    tol: &Tolerances,
) -> SolutionRecord {
    let mut rec = SolutionRecord {
        u: sol.u.clone(),
        v: sol.v.clone(),
        compensator: None,
        is_real: sol.is_real,
        residual: sol.residual,
        multiplicity: sol.multiplicity,
        max_pole_error: None,
        condition_numbers: Vec::new(),
        verify: None,
        error: None,
    };
    let comp = match rec
        .transfer_pair()
        .and_then(|t| realize::realize(&t, tol))
        .and_then(|c| verify::balance_states(plant, &c))
    {
        Ok(c) => c,
        Err(e) => {
            rec.error = Some(format!("realize: {e}"));
            return rec;
        }
    };
    match verify::verify(plant, &comp, poles) {
        Ok(r) => {
            rec.max_pole_error = Some(r.max_pole_error);
            rec.condition_numbers = r.condition_numbers.clone();
            rec.verify = Some(r);
        }
        Err(e) => rec.error = Some(format!("verify: {e}")),
    }
    rec.compensator = Some(comp);
    rec
}

/// Runs the full pipeline on an already loaded plant.
pub fn synthesize(plant: &StateSpace, cfg: &RunConfig) -> Result<RunReport> {
    let total = Instant::now();
    let mut timings = BTreeMap::new();
    let tol = cfg.tolerances()?;
    let opts = cfg.tracker_options(&tol)?;
    let (n, m, p) = (plant.n(), plant.m(), plant.p());
    let q = cfg.q.resolve(plant);

    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let padded = synth::pad_poles(plant, &cfg.poles, q, &cfg.extra_poles, &mut rng)?;
    let charts = if cfg.all_charts {
        synth::degree_sequences(q, p)
            .into_iter()
            .map(|d| synth::chart_with_degrees(m, p, d))
            .collect()
    } else {
        vec![synth::make_chart(m, p, q)]
    };
    timings.insert("pad".to_string(), ms(t));

    let mut counts = PathCounts::default();
    let mut found = Vec::new();
    let (mut track_ms, mut extract_ms) = (0.0, 0.0);
    let degree = plant::feedback_degree(m, p, q);
    for chart in charts {
        let base = synth::build_system(plant, &padded, chart, cfg.seed)?;
        let mut in_chart = Vec::new();
        for sweep in 0..=opts.restarts {
            let sys = match sweep {
                0 => base.clone(),
                k => base.clone().with_gamma_seed(sweep_seed(cfg.seed, k)),
            };
            let t = Instant::now();
            let results = match cfg.max_solutions {
                Some(k) => synth::track_until(&sys, &opts, k, tol.dedup),
                None => synth::track_all(&sys, &opts),
            };
            track_ms += ms(t);
            counts.add(&results);
            counts.restarts += usize::from(sweep > 0);
            let t = Instant::now();
            in_chart.extend(synth::solutions(&sys, &results, &tol));
            if sweep > 0 {
                in_chart = merge_across_charts(in_chart, &tol);
            }
            extract_ms += ms(t);
            // Paths of a probability-one homotopy can still jump between
            // nearby solution branches; another gamma gives other paths.
            if cfg.max_solutions.is_some() || in_chart.len() as u128 >= degree {
                break;
            }
        }
        found.extend(in_chart);
    }
    let t = Instant::now();
    let mut found = if cfg.all_charts {
        merge_across_charts(found, &tol)
    } else {
        found
    };
    synth::sort_solutions(&mut found);
    if let Some(k) = cfg.max_solutions {
        found.truncate(k);
    }
    extract_ms += ms(t);
    timings.insert("track".to_string(), track_ms);
    timings.insert("extract".to_string(), extract_ms);

    let t = Instant::now();
    let solutions: Vec<SolutionRecord> = found
        .iter()
        .map(|s| finish_solution(plant, s, padded.user_poles(), &tol))
        .collect();
    timings.insert("realize_verify".to_string(), ms(t));
    timings.insert("total".to_string(), ms(total));

    Ok(RunReport {
        config: cfg.clone(),
        q,
        class: padded.class,
        feedback_degree: degree,
        interpolation_points: padded.poles.clone(),
        padded: padded.padded,
        solutions,
        counts,
        timings_ms: timings,
    })
    .map(|r| {
        debug_assert_eq!(r.user_poles().len(), n + q);
        r
    })
}

/// Loads the plant named by the config and synthesizes.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let plant = io::load_plant(&cfg.plant_path)?;
    synthesize(&plant, cfg)
}

/// Text and exit code for the classify subcommand.
pub fn classify_text(plant: &StateSpace, q: usize) -> (String, i32) {
    let (n, m, p) = (plant.n(), plant.m(), plant.p());
    let class = plant::classify(n, m, p, q);
    match class.kind {
        ProblemKind::Overdetermined { .. } => {
            (format!("{class}, suggest q={}", plant::min_q(n, m, p)), 2)
        }
        _ => (class.to_string(), 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_choice_serde() {
        let a: QChoice = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(a, QChoice::Auto);
        let f: QChoice = serde_json::from_str("3").unwrap();
        assert_eq!(f, QChoice::Fixed(3));
        assert_eq!(serde_json::to_string(&QChoice::Auto).unwrap(), "\"auto\"");
        assert!(serde_json::from_str::<QChoice>("\"sometimes\"").is_err());
        assert_eq!("auto".parse::<QChoice>().unwrap(), QChoice::Auto);
        assert!("x".parse::<QChoice>().is_err());
    }

    #[test]
    fn config_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"plant_path": "p.json", "poles": [[-1, 0], [-2, 0.5]]}"#).unwrap();
        assert_eq!(cfg.q, QChoice::Auto);
        assert_eq!(cfg.poles[1], C64::new(-2.0, 0.5));
        assert!(cfg.max_solutions.is_none());
        let mut bad = cfg.clone();
        bad.tolerances.insert("nope".into(), 1.0);
        assert!(bad.tolerances().is_err());
    }

    #[test]
    fn scalar_static_synthesis() {
        // x' = x + u, y = x; place the pole at -1: K = -2.
        let plant = StateSpace::from_rows(1, 1, 1, &[1.0], &[1.0], &[1.0]).unwrap();
        let mut cfg = RunConfig::new("unused", vec![C64::new(-1.0, 0.0)]);
        cfg.q = QChoice::Fixed(0);
        let report = synthesize(&plant, &cfg).unwrap();
        assert_eq!(report.solutions.len(), 1);
        let s = &report.solutions[0];
        assert!(s.is_real);
        let k = &s.compensator.as_ref().unwrap().k;
        assert!((k[(0, 0)] - C64::new(-2.0, 0.0)).norm() < 1e-10);
        assert!(s.max_pole_error.unwrap() < 1e-12);
    }

    #[test]
    fn overdetermined_is_refused() {
        let plant = StateSpace::from_rows(2, 1, 1, &[0.0, 1.0, -1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        let mut cfg = RunConfig::new("unused", vec![C64::new(-1.0, 0.0), C64::new(-2.0, 0.0)]);
        cfg.q = QChoice::Fixed(0);
        assert!(matches!(
            synthesize(&plant, &cfg),
            Err(Error::OverdeterminedProblem { excess: 1, suggested_q: 1 })
        ));
        let (text, code) = classify_text(&plant, 0);
        assert_eq!(code, 2);
        assert_eq!(text, "overdetermined, excess 1, suggest q=1");
    }
}
