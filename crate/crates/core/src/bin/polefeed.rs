//! Command line front end.
//!
//! Exit codes: 0 success, 1 no feedback law found, 2 overdetermined
//! problem, 64 bad input or usage, 65 inconsistent dimensions, 66 missing
//! or unreadable file, 70 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use polefeed::gcd::{self, Scenario};
use polefeed::pipeline::{self, QChoice, RunConfig};
use polefeed::realize::{self, TransferPair};
use polefeed::{io, polymat, verify, Error, Tolerances, C64};

#[derive(Parser)]
#[command(name = "polefeed", version, about = "Dynamic output feedback pole placement")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Random seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance override, `name=value`; repeatable.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    tol: Vec<String>,
    /// Write the machine-readable result here.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a plant for a compensator order.
    Classify {
        plant: PathBuf,
        #[arg(long, default_value = "0")]
        q: QChoice,
    },
    /// Compute all feedback laws for a run config.
    Synthesize {
        config: PathBuf,
        /// Compensator order or `auto`.
        #[arg(long)]
        q: Option<QChoice>,
        /// Also solve in every balanced column-degree chart.
        #[arg(long)]
        all_charts: bool,
        /// Stop after this many distinct solutions.
        #[arg(long)]
        max_solutions: Option<usize>,
        /// Tracker option override, `name=value`; repeatable.
        #[arg(long = "tracker", value_name = "NAME=VALUE")]
        tracker: Vec<String>,
    },
    /// Realize `N D^{-1}` from two polynomial matrix text files.
    Realize { num: PathBuf, den: PathBuf },
    /// Smith normal form of a polynomial matrix text file.
    Smith { matrix: PathBuf },
    /// Check a compensator against a list of poles.
    Verify {
        plant: PathBuf,
        compensator: PathBuf,
        /// Pole as `re` or `re,im`; repeatable.
        #[arg(long = "pole", value_name = "RE[,IM]", allow_hyphen_values = true, required = true)]
        poles: Vec<String>,
    },
    /// Naive versus root-matching gcd success rates.
    GcdBench {
        #[arg(long, default_value = "random")]
        scenario: Scenario,
        /// Degree of the inputs.
        #[arg(long, default_value_t = 15)]
        degree: usize,
        /// Degree of the planted gcd.
        #[arg(long, default_value_t = 8)]
        gcd_degree: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::OverdeterminedProblem { .. } => 2,
            Error::Parse(_) | Error::Json(_) => 64,
            Error::DimensionMismatch(_) | Error::PoleCount { .. } => 65,
            Error::Io(_) => 66,
            _ => 70,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<u8, Failure>;

fn parse_pair(s: &str, what: &str) -> Result<(String, f64), Error> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("{what} override must be name=value, got {s:?}")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what} {k}: bad value {v:?}")))?;
    Ok((k.trim().to_string(), v))
}

fn parse_pole(s: &str) -> Result<C64, Error> {
    let bad = || Error::Parse(format!("bad pole {s:?}"));
    let mut it = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad()));
    let re = it.next().ok_or_else(bad)??;
    let im = it.next().transpose()?.unwrap_or(0.0);
    if it.next().is_some() {
        return Err(bad());
    }
    Ok(C64::new(re, im))
}

fn tolerances(g: &Global) -> Result<Tolerances, Error> {
    let mut tol = Tolerances::default();
    for t in &g.tol {
        tol.apply_override(t)?;
    }
    Ok(tol)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn classify(g: &Global, plant: &Path, q: QChoice) -> CliResult {
    let plant = io::load_plant(plant)?;
    let q = q.resolve(&plant);
    let (text, code) = pipeline::classify_text(&plant, q);
    if !g.quiet {
        println!("{text}");
    }
    if let Some(path) = &g.json {
        let (n, m, p) = (plant.n(), plant.m(), plant.p());
        let class = polefeed::plant::classify(n, m, p, q);
        write_json(
            path,
            &json!({"q": q, "class": class, "min_q": polefeed::plant::min_q(n, m, p), "summary": text}),
        )?;
    }
    Ok(u8::try_from(code).unwrap_or(70))
}

fn synthesize(
    g: &Global,
    config: &Path,
    q: Option<QChoice>,
    all_charts: bool,
    max_solutions: Option<usize>,
    tracker: &[String],
) -> CliResult {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(q) = q {
        cfg.q = q;
    }
    cfg.all_charts |= all_charts;
    if max_solutions.is_some() {
        cfg.max_solutions = max_solutions;
    }
    for t in &g.tol {
        let (k, v) = parse_pair(t, "tolerance")?;
        cfg.tolerances.insert(k, v);
    }
    for t in tracker {
        let (k, v) = parse_pair(t, "tracker")?;
        cfg.tracker.insert(k, v);
    }
    cfg.tolerances()?;
    let plant = io::load_plant(&cfg.plant_path)?;
    if cfg.q == QChoice::Auto && !g.quiet {
        eprintln!("q = auto selects q = {}", cfg.q.resolve(&plant));
    }
    let report = pipeline::synthesize(&plant, &cfg)?;
    if !g.quiet {
        print!("{}", report.summary());
    }
    if let Some(path) = g.json.as_ref().or(cfg.output_path.as_ref()) {
        write_json(path, &report)?;
    }
    Ok(if report.solutions.is_empty() { 1 } else { 0 })
}

fn realize_cmd(g: &Global, num: &Path, den: &Path) -> CliResult {
    let tol = tolerances(g)?;
    let t = TransferPair::new(io::load_polymatrix(num)?, io::load_polymatrix(den)?)?;
    let comp = realize::realize(&t, &tol)?;
    let probes = [
        C64::new(0.31, 1.07),
        C64::new(-1.13, 0.41),
        C64::new(1.9, -0.77),
        C64::new(-0.05, -2.3),
        C64::new(0.66, 0.12),
    ];
    let text = io::compensator_to_json(&comp);
    match &g.json {
        Some(path) => std::fs::write(path, text + "\n").map_err(Error::from)?,
        None => println!("{text}"),
    }
    if !g.quiet {
        match realize::check_realization(&t, &comp, &probes) {
            Ok(r) => eprintln!("order {}, probe residual {r:.3e}", comp.q()),
            Err(e) => eprintln!("order {}, probe check skipped: {e}", comp.q()),
        }
    }
    Ok(0)
}

fn smith_cmd(g: &Global, matrix: &Path) -> CliResult {
    let tol = tolerances(g)?;
    let a = io::load_polymatrix(matrix)?;
    let sf = polymat::smith(&a, tol.smith)?;
    let diag = sf.diagnostics(&a);
    if !g.quiet {
        println!("rank {}", sf.rank);
        for (i, f) in sf.invariant_factors().iter().enumerate() {
            println!("d{} = {f}", i + 1);
        }
        print!("{diag}");
    }
    if let Some(path) = &g.json {
        write_json(
            path,
            &json!({
                "rank": sf.rank,
                "P": io::format_polymatrix(&sf.p),
                "D": io::format_polymatrix(&sf.d),
                "Q": io::format_polymatrix(&sf.q),
                "product_residual": diag.product_residual,
                "divisibility_residual": diag.divisibility_residual,
            }),
        )?;
    }
    Ok(0)
}

fn verify_cmd(g: &Global, plant: &Path, comp: &Path, poles: &[String]) -> CliResult {
    let plant = io::load_plant(plant)?;
    let comp = io::load_compensator(comp)?;
    let poles = poles
        .iter()
        .map(|s| parse_pole(s))
        .collect::<Result<Vec<_>, _>>()?;
    let report = verify::verify(&plant, &comp, &poles)?;
    if !g.quiet {
        for (j, pole) in poles.iter().enumerate() {
            println!(
                "pole {pole:>24}  eigenvalue {:>24.6}  error {:.2e}  cond {:.2e}  det {:.2e}",
                report.eigenvalues[j],
                report.matched_pole_errors[j],
                report.condition_numbers[j],
                report.det_residuals[j]
            );
        }
        println!("max pole error {:.3e}", report.max_pole_error);
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
    }
    if let Some(path) = &g.json {
        write_json(path, &report)?;
    }
    Ok(0)
}

fn gcd_bench_cmd(
    g: &Global,
    scenario: Scenario,
    degree: usize,
    gcd_degree: usize,
    trials: usize,
    eps: f64,
) -> CliResult {
    if gcd_degree >= degree || trials == 0 {
        return Err(Error::Parse("need gcd degree < degree and trials >= 1".into()).into());
    }
    let report = gcd::gcd_bench(scenario, degree, gcd_degree, trials, eps, g.seed.unwrap_or(2003));
    if !g.quiet {
        println!("scenario  (e,r)     trials  naive%   advanced%");
        println!(
            "{:<9} ({},{})  {:>6}  {:>6.1}   {:>6.1}",
            report.scenario.to_string(),
            degree,
            gcd_degree,
            trials,
            report.naive_percent(),
            report.advanced_percent()
        );
    }
    if let Some(path) = &g.json {
        write_json(path, &report)?;
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Classify { plant, q } => classify(g, plant, *q),
        Command::Synthesize {
            config,
            q,
            all_charts,
            max_solutions,
            tracker,
        } => synthesize(g, config, *q, *all_charts, *max_solutions, tracker),
        Command::Realize { num, den } => realize_cmd(g, num, den),
        Command::Smith { matrix } => smith_cmd(g, matrix),
        Command::Verify {
            plant,
            compensator,
            poles,
        } => verify_cmd(g, plant, compensator, poles),
        Command::GcdBench {
            scenario,
            degree,
            gcd_degree,
            trials,
            eps,
        } => gcd_bench_cmd(g, *scenario, *degree, *gcd_degree, *trials, *eps),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("polefeed: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
