use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use infoclock::acquisition;
use infoclock::closed_form::{coefficients, StrategyQuery};
use infoclock::config::RunConfig;
use infoclock::filtering::estimate_correlation;
use infoclock::info_econ::net_value;
use infoclock::io::{read_path_csv, write_numeric_csv};
use infoclock::montecarlo::{simulate, simulate_path, SimConfig, Strategy};
use infoclock::{classify, ClockSpec, Error, InformativeClock};
use serde_json::json;

const SEED_ENV: &str = "INFOCLOCK_SEED";

#[derive(Debug, Parser)]
#[command(name = "infoclock", version, about = "Portfolio choice with costly information about the drift")]
struct Cli {
    /// JSON config with optional market, utility and cost sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Clock: natural, linear:k=<float> or grid:<path.csv>.
    #[arg(long, global = true, default_value = "natural")]
    clock: String,
    /// Output file; stdout when absent. A JSON sidecar is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for simulations; INFOCLOCK_SEED is used when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Value, cost and net value of information for a clock or a sweep of linear clocks.
    Value(ValueArgs),
    /// Optimal acquisition schedule.
    Optimize,
    /// Monte Carlo evaluation of a strategy.
    Simulate(SimulateArgs),
    /// One simulated path with the filter.
    FilterDemo(FilterDemoArgs),
}

#[derive(Debug, Args)]
struct ValueArgs {
    /// Sweep linear clocks: k=<lo>:<hi>:<n>.
    #[arg(long)]
    sweep: Option<Sweep>,
    /// Default parameters and the sweep k=1:10:10, ignoring --config.
    #[arg(long)]
    defaults: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// optimal, zero, constant:k=<f> or scaled:factor=<f>.
    #[arg(long, default_value = "optimal")]
    strategy: String,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Compare the estimate with the closed-form value at 3 standard errors.
    #[arg(long)]
    check_closed_form: bool,
    /// Estimate the correlation profile from an observed path instead of simulating.
    #[arg(long, requires = "paths_csv")]
    estimate_rho: bool,
    /// Path CSV with columns t, Y, m.
    #[arg(long)]
    paths_csv: Option<PathBuf>,
    /// Rolling window, in steps, for --estimate-rho.
    #[arg(long, default_value_t = 256)]
    window: usize,
}

#[derive(Debug, Args)]
struct FilterDemoArgs {
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Which path of the seeded family to draw.
    #[arg(long, default_value_t = 0)]
    path_index: u64,
}

#[derive(Debug, Clone, Copy)]
struct Sweep {
    lo: f64,
    hi: f64,
    n: usize,
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected k=<lo>:<hi>:<n>, got '{s}'");
        let body = s.strip_prefix("k=").ok_or_else(bad)?;
        let parts: Vec<&str> = body.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        if n < 1 || !(lo >= 1.0 && hi >= lo) || (n == 1 && hi != lo) {
            return Err(format!("sweep needs 1 <= lo <= hi and n >= 1 (n = 1 only when lo = hi), got '{s}'"));
        }
        Ok(Sweep { lo, hi, n })
    }
}

impl Sweep {
    fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| if i == self.n - 1 { self.hi } else { self.lo + i as f64 * step }).collect()
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    IllPosed(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::IllPosed(_) => 3,
            Failure::Solver(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::IllPosed(m) | Failure::Solver(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::IllPosed(_) => Failure::IllPosed(msg),
            Error::NearSingular(_)
            | Error::NonFinite(_)
            | Error::NoSignChange { .. }
            | Error::NoBracket(_)
            | Error::Budget(_) => Failure::Solver(msg),
            _ => Failure::Config(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    Ok(match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::defaults(),
    })
}

fn build_clock(cli: &Cli, cfg: &RunConfig) -> Result<InformativeClock, Failure> {
    let spec: ClockSpec = cli.clock.parse().map_err(|e: Error| Failure::Config(format!("--clock: {e}")))?;
    Ok(spec.build(cfg.params.t0(), cfg.params.horizon)?)
}

fn master_seed(cli: &Cli) -> Result<u64, Failure> {
    if let Some(s) = cli.seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("{SEED_ENV}: expected an unsigned integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

/// Writes `body` to `--out` or stdout.
fn emit(out: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Outcome {
    match out {
        Some(path) => {
            let mut f = io::BufWriter::new(
                File::create(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
            );
            body(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Sidecar JSON next to `--out`; on stderr when writing to stdout.
fn emit_sidecar(out: Option<&Path>, value: &serde_json::Value) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Config(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(sidecar_path(path), text + "\n")?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn cmd_value(cli: &Cli, args: &ValueArgs) -> Outcome {
    let cfg = if args.defaults { RunConfig::defaults() } else { load_config(cli)? };
    classify(&cfg.params, &cfg.utility).into_result()?;
    let sweep = match (args.sweep, args.defaults) {
        (Some(s), _) => Some(s),
        (None, true) => Some(Sweep { lo: 1.0, hi: 10.0, n: 10 }),
        (None, false) => None,
    };
    let out = cli.out.as_deref();
    match sweep {
        Some(sweep) => {
            let mut rows = Vec::with_capacity(sweep.n);
            for k in sweep.values() {
                let clock = InformativeClock::linear(cfg.params.t0(), k, cfg.params.horizon)?;
                let v = net_value(&cfg.params, &cfg.utility, &cfg.cost, &clock)?;
                rows.push(vec![k, v.value, v.cost, v.net]);
            }
            emit(out, |w| write_numeric_csv(w, &["k", "value", "cost", "net"], &rows))?;
            emit_sidecar(
                out,
                &json!({ "command": "value", "config": cfg.echo(), "sweep": { "lo": sweep.lo, "hi": sweep.hi, "n": sweep.n } }),
            )
        }
        None => {
            let clock = build_clock(cli, &cfg)?;
            let v = net_value(&cfg.params, &cfg.utility, &cfg.cost, &clock)?;
            emit(out, |w| {
                write_numeric_csv(w, &["value", "cost", "net", "bound"], &[vec![v.value, v.cost, v.net, v.bound]])
            })?;
            emit_sidecar(out, &json!({ "command": "value", "config": cfg.echo(), "clock": cli.clock }))
        }
    }
}

fn cmd_optimize(cli: &Cli) -> Outcome {
    let cfg = load_config(cli)?;
    classify(&cfg.params, &cfg.utility).into_result()?;
    let sol = acquisition::solve(&cfg.params, &cfg.utility, &cfg.cost)?;
    let rows: Vec<Vec<f64>> = match sol.clock.form() {
        infoclock::clock::ClockForm::Grid(g) => {
            g.times().iter().zip(g.tau()).zip(g.tau_prime()).map(|((t, u), s)| vec![*t, *u, *s]).collect()
        }
        _ => return Err(Failure::Solver("solver returned a non-tabulated clock".into())),
    };
    let out = cli.out.as_deref();
    emit(out, |w| write_numeric_csv(w, &["t", "tau", "tau_prime"], &rows))?;
    let d = &sol.diagnostics;
    emit_sidecar(
        out,
        &json!({
            "command": "optimize",
            "config": cfg.echo(),
            "kind": acquisition::SOLUTION_KIND,
            "shoot_param": sol.shoot_param,
            "y_star": sol.y_star,
            "value": sol.value,
            "cost": sol.cost,
            "net": sol.net,
            "diagnostics": d,
            "y_star_consistency": d.dual_consistency.map(|c| if c <= 1e-6 { "PASS" } else { "FAIL" }),
        }),
    )
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Outcome {
    let out = cli.out.as_deref();
    if args.estimate_rho {
        let path = args.paths_csv.as_deref().expect("clap enforces --paths-csv");
        let obs = read_path_csv(path)?;
        let profile = estimate_correlation(&obs.t, &obs.y, &obs.m, args.window)?;
        let rows: Vec<Vec<f64>> = obs.t.iter().map(|&t| vec![t, profile.rho(t)]).collect();
        emit(out, |w| write_numeric_csv(w, &["t", "rho_hat"], &rows))?;
        return emit_sidecar(
            out,
            &json!({ "command": "simulate", "estimate_rho": true, "window": args.window, "paths_csv": path }),
        );
    }
    let cfg = load_config(cli)?;
    let clock = build_clock(cli, &cfg)?;
    let strategy: Strategy = args.strategy.parse().map_err(|e: Error| Failure::Config(format!("--strategy: {e}")))?;
    let sim = SimConfig::new(args.paths, args.steps, master_seed(cli)?, strategy).with_workers(args.workers);
    let rep = simulate(&cfg.params, &cfg.utility, &clock, &sim)?;
    let mut report = serde_json::to_value(rep).map_err(|e| Failure::Config(e.to_string()))?;
    report["strategy"] = json!(strategy.to_string());
    report["clock"] = json!(cli.clock);
    let mut failed_check = false;
    if args.check_closed_form {
        classify(&cfg.params, &cfg.utility).into_result()?;
        let q = StrategyQuery { t: 0.0, x: cfg.params.x0, z: cfg.params.mu0 };
        let v = coefficients(&cfg.params, &cfg.utility, &clock)?.value(&q)?;
        let z = (rep.mean_utility - v).abs() / rep.std_error;
        let pass = z <= 3.0;
        failed_check = !pass;
        report["closed_form"] = json!({ "value": v, "z_score": z, "verdict": if pass { "PASS" } else { "FAIL" } });
    }
    emit(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)?;
        Ok(())
    })?;
    if failed_check {
        return Err(Failure::Solver("Monte Carlo estimate is more than 3 standard errors from the closed form".into()));
    }
    Ok(())
}

fn cmd_filter_demo(cli: &Cli, args: &FilterDemoArgs) -> Outcome {
    let cfg = load_config(cli)?;
    let clock = build_clock(cli, &cfg)?;
    let seed = master_seed(cli)?;
    let rec = simulate_path(&cfg.params, &clock, args.steps, seed, args.path_index)?;
    let rows: Vec<Vec<f64>> =
        (0..rec.t.len()).map(|i| vec![rec.t[i], rec.y[i], rec.m[i], rec.z[i], rec.true_mu, rec.var[i]]).collect();
    let out = cli.out.as_deref();
    emit(out, |w| write_numeric_csv(w, &["t", "Y", "m", "Z", "true_mu", "var"], &rows))?;
    emit_sidecar(
        out,
        &json!({ "command": "filter-demo", "config": cfg.echo(), "clock": cli.clock, "seed": seed, "path_index": args.path_index, "steps": args.steps }),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Value(a) => cmd_value(&cli, a),
        Command::Optimize => cmd_optimize(&cli),
        Command::Simulate(a) => cmd_simulate(&cli, a),
        Command::FilterDemo(a) => cmd_filter_demo(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
