use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use noisy_grover::analysis::{
    discontinuity_points, epsilon_max, first_max_scan, fit_curve_damping, fit_log_drift, fit_threshold_law,
    geometric_grid, max_qubits, noiseless_first_maximum, params_for_ratio, solve_threshold, ThresholdConfig,
};
use noisy_grover::mc::{coefficient_histogram, estimate_success_curve, required_trajectories, McRun, DEFAULT_FLOOR};
use noisy_grover::output::{curve_table, encoded_table, write_csv, write_json, write_record, Provenance, Table};
use noisy_grover::steane::{run_encoded_with, DEFAULT_MAX_RESTARTS};
use noisy_grover::{Error, MemoryMode, NoiseParams};
use serde_json::{json, Value};

mod suite;

const MAX_N: usize = 12;

#[derive(Parser, Debug)]
#[command(name = "noisy-grover", version, about = "Grover search under depolarizing noise")]
struct Cli {
    /// Run the scaled-down acceptance battery and print a pass/fail table.
    #[arg(long = "paper-suite")]
    paper_suite: bool,

    /// Worker threads for `--paper-suite`.
    #[arg(long, global = false)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Noiseless success curves against the closed form, per n.
    NoiselessCheck {
        /// Qubit count or inclusive range `a..b`.
        #[arg(long, default_value = "2..7")]
        n: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Success curve P_S(t) and the exponential fit of its maxima.
    Damping {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Number of Grover iterations.
        #[arg(long = "T")]
        t_max: usize,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// First-maximum location over a geometric epsilon grid at fixed ratio C.
    FirstMax {
        #[arg(long)]
        n: String,
        #[arg(long = "C", default_value = "1")]
        ratio: String,
        #[command(flatten)]
        grid: GridArgs,
        /// Iterations per curve; defaults to the noiseless first maximum + 3.
        #[arg(long = "T")]
        t_max: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Mean squared coefficient of every basis state at chosen iterations.
    Coefficients {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Comma-separated iteration counts.
        #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
        t: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Threshold epsilon at which the first-maximum success equals P_th.
    Threshold {
        #[arg(long)]
        n: usize,
        #[arg(long = "C", default_value = "1")]
        ratio: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Thresholds over a range of n and the fitted allowed-error law.
    ThresholdLaw {
        #[arg(long)]
        n: String,
        #[arg(long = "C", default_value = "1")]
        ratio: String,
        #[command(flatten)]
        solver: SolverArgs,
        /// Hardware error rate for the maximum-qubit bound.
        #[arg(long, default_value_t = 1e-5)]
        hardware_epsilon: f64,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Steane-encoded versus bare two-qubit search over an epsilon grid.
    Encoded {
        #[arg(long = "C", default_value = "1")]
        ratio: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = DEFAULT_MAX_RESTARTS)]
        max_restarts: usize,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args, Debug, Clone)]
struct NoiseArgs {
    #[arg(long, conflicts_with = "inv_epsilon")]
    epsilon: Option<f64>,
    /// 1/epsilon.
    #[arg(long)]
    inv_epsilon: Option<f64>,
    #[arg(long, conflicts_with_all = ["inv_gamma", "ratio"])]
    gamma: Option<f64>,
    /// 1/gamma.
    #[arg(long, conflicts_with = "ratio")]
    inv_gamma: Option<f64>,
    /// Ratio C = epsilon/gamma; `inf` sets gamma = 0.
    #[arg(long = "C")]
    ratio: Option<String>,
    #[arg(long, value_enum, default_value_t = Memory::Additive)]
    memory: Memory,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Memory {
    Additive,
    IdleOnly,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Explicit comma-separated epsilon values; overrides the geometric grid.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-4)]
    eps_lo: f64,
    #[arg(long, default_value_t = 1e-2)]
    eps_hi: f64,
    #[arg(long, default_value_t = 20)]
    per_decade: usize,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.5)]
    p_th: f64,
    #[arg(long, default_value_t = 1e-6)]
    bracket_lo: f64,
    #[arg(long, default_value_t = 0.2)]
    bracket_hi: f64,
    #[arg(long, default_value_t = 0.02)]
    rel_tol: f64,
    /// Trajectory cap per evaluation, including escalation.
    #[arg(long, default_value_t = 100_000)]
    max_traj: u64,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Master seed; every stochastic run requires one.
    #[arg(long)]
    seed: u64,
    /// Trajectories per point; defaults to max(1e4, 10 max(1/eps, 1/gamma)).
    #[arg(long)]
    n_traj: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

/// Failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let (code, kind) = match &e {
            Error::Domain(_) => (2, "config"),
            Error::ThresholdOutOfRange { .. } => (3, "threshold-out-of-range"),
            Error::PreparationFailed { .. } => (4, "preparation-failure"),
            Error::Io(_) | Error::Json(_) => (1, "io"),
            _ => (1, "runtime"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Failure {
        Failure {
            code: 1,
            kind: "io",
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn parse_n_range(s: &str) -> CliResult<Vec<usize>> {
    let parse = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| Failure::config(format!("bad qubit count `{x}`")))
    };
    let ns: Vec<usize> = match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
            if a > b {
                return Err(Failure::config(format!("empty range `{s}`")));
            }
            (a..=b).collect()
        }
        None => vec![parse(s)?],
    };
    for &n in &ns {
        check_n(n)?;
    }
    Ok(ns)
}

fn check_n(n: usize) -> CliResult<()> {
    if !(2..=MAX_N).contains(&n) {
        return Err(Failure::config(format!("n = {n} outside [2, {MAX_N}]")));
    }
    Ok(())
}

fn parse_ratio(s: &str) -> CliResult<f64> {
    let r = match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => f64::INFINITY,
        x => x
            .parse::<f64>()
            .map_err(|_| Failure::config(format!("bad ratio `{s}`")))?,
    };
    if !(r > 0.0) {
        return Err(Failure::config("ratio C must be positive"));
    }
    Ok(r)
}

fn inverse(x: f64, name: &str) -> CliResult<f64> {
    if !(x >= 1.0) {
        return Err(Failure::config(format!("--inv-{name} must be at least 1")));
    }
    Ok(1.0 / x)
}

impl NoiseArgs {
    fn params(&self) -> CliResult<NoiseParams> {
        let eps = match (self.epsilon, self.inv_epsilon) {
            (Some(e), None) => e,
            (None, Some(i)) => inverse(i, "epsilon")?,
            _ => return Err(Failure::config("give --epsilon or --inv-epsilon")),
        };
        let p = match (self.gamma, self.inv_gamma, &self.ratio) {
            (Some(g), None, None) => NoiseParams::new(eps, g)?,
            (None, Some(i), None) => NoiseParams::new(eps, inverse(i, "gamma")?)?,
            (None, None, Some(c)) => params_for_ratio(eps, parse_ratio(c)?)?,
            _ => return Err(Failure::config("give one of --gamma, --inv-gamma or --C")),
        };
        Ok(p.with_memory(match self.memory {
            Memory::Additive => MemoryMode::Additive,
            Memory::IdleOnly => MemoryMode::IdleOnly,
        }))
    }
}

impl GridArgs {
    fn values(&self) -> CliResult<Vec<f64>> {
        let v = match &self.epsilons {
            Some(v) => v.clone(),
            None => geometric_grid(self.eps_lo, self.eps_hi, self.per_decade)?,
        };
        if v.is_empty() || v.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Failure::config("epsilon grid values must lie in [0, 1]"));
        }
        Ok(v)
    }

    fn record(&self, prov: &mut Provenance) {
        match &self.epsilons {
            Some(v) => prov.push("epsilons", join(v)),
            None => {
                prov.push("eps_lo", self.eps_lo);
                prov.push("eps_hi", self.eps_hi);
                prov.push("per_decade", self.per_decade);
            }
        }
    }
}

impl RunArgs {
    fn run(&self, params: &NoiseParams) -> McRun {
        let n = self
            .n_traj
            .unwrap_or_else(|| required_trajectories(params, DEFAULT_FLOOR));
        McRun::new(n, self.seed).workers(self.workers)
    }

    fn check(&self) -> CliResult<()> {
        if self.n_traj == Some(0) {
            return Err(Failure::config("--n-traj must be positive"));
        }
        if self.workers == Some(0) {
            return Err(Failure::config("--workers must be positive"));
        }
        Ok(())
    }
}

impl SolverArgs {
    fn config(&self) -> ThresholdConfig {
        ThresholdConfig {
            eps_lo: self.bracket_lo,
            eps_hi: self.bracket_hi,
            rel_tol: self.rel_tol,
            max_trajectories: self.max_traj,
            min_trajectories: ThresholdConfig::default().min_trajectories.min(self.max_traj),
            ..ThresholdConfig::default()
        }
    }

    fn record(&self, prov: &mut Provenance) {
        prov.push("p_th", self.p_th);
        prov.push("bracket_lo", self.bracket_lo);
        prov.push("bracket_hi", self.bracket_hi);
        prov.push("rel_tol", self.rel_tol);
        prov.push("max_traj", self.max_traj);
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn provenance(experiment: &str) -> Provenance {
    let args: Vec<String> = std::env::args().skip(1).collect();
    Provenance::new(experiment).with("command", args.join(" "))
}

fn noise_provenance(prov: &mut Provenance, p: &NoiseParams) {
    prov.push("epsilon", p.epsilon);
    prov.push("gamma", p.gamma);
    prov.push("C", p.ratio());
    prov.push("memory", format!("{:?}", p.memory).to_lowercase());
}

fn run_provenance(prov: &mut Provenance, run: &McRun) {
    prov.push("seed", run.master_seed);
    prov.push("n_traj", run.n_trajectories);
}

/// Writes the table to `--out` (or stdout) and the summary record next to it
/// as `<out>.fit.json` (or after the table on stdout).
fn emit(out: &OutputArgs, prov: &Provenance, table: &Table, summary: Option<&Value>) -> CliResult<()> {
    match &out.out {
        Some(path) => {
            let f = File::create(path)?;
            write_table(io::BufWriter::new(f), out.format, prov, table, summary)?;
            if let Some(s) = summary {
                let f = File::create(sidecar(path))?;
                write_record(io::BufWriter::new(f), prov, s)?;
            }
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_table(&mut lock, out.format, prov, table, summary)?;
            if let (Some(s), Format::Csv) = (summary, out.format) {
                write_record(&mut lock, prov, s)?;
            }
            lock.flush()?;
        }
    }
    Ok(())
}

fn write_table<W: Write>(w: W, format: Format, prov: &Provenance, table: &Table, summary: Option<&Value>) -> CliResult<()> {
    match format {
        Format::Csv => write_csv(w, prov, table)?,
        Format::Json => {
            let extra: Vec<(&str, Value)> = summary.map(|s| vec![("summary", s.clone())]).unwrap_or_default();
            write_json(w, prov, table, &extra)?
        }
    }
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".fit.json");
    path.with_file_name(name)
}

fn noiseless_check(n: &str, out: &OutputArgs) -> CliResult<()> {
    let ns = parse_n_range(n)?;
    let mut table = Table::new(&["n", "k_max", "max_abs_diff", "pass"]);
    let mut prov = provenance("noiseless-check");
    prov.push("n", join(&ns));
    for n in ns {
        let k0 = (std::f64::consts::PI * 2f64.powi(n as i32).sqrt() / 4.0).floor() as usize;
        let kmax = 2 * k0;
        let c = estimate_success_curve(n, &NoiseParams::noiseless(), kmax, &McRun::new(1, 0))?;
        let half = (1.0 / 2f64.powi(n as i32).sqrt()).asin();
        let worst = (0..=kmax)
            .map(|k| (c.p_success[k] - ((2 * k + 1) as f64 * half).sin().powi(2)).abs())
            .fold(0.0, f64::max);
        table.push(vec![json!(n), json!(kmax), json!(worst), json!(worst < 1e-9)]);
    }
    emit(out, &prov, &table, None)
}

fn damping(n: usize, noise: &NoiseArgs, t_max: usize, run: &RunArgs, out: &OutputArgs) -> CliResult<()> {
    check_n(n)?;
    run.check()?;
    let p = noise.params()?;
    let mc = run.run(&p);
    let curve = estimate_success_curve(n, &p, t_max, &mc)?;
    let mut prov = provenance("damping");
    prov.push("n", n);
    prov.push("T", t_max);
    noise_provenance(&mut prov, &p);
    run_provenance(&mut prov, &mc);
    let fit = match fit_curve_damping(&curve) {
        Ok(f) => serde_json::to_value(f).map_err(Error::from)?,
        Err(e) => json!({ "error": e.to_string() }),
    };
    let summary = json!({
        "damping_fit": fit,
        "lambda_model": noisy_grover::analysis::lambda_model(p.epsilon, p.gamma, n),
    });
    emit(out, &prov, &curve_table(&curve), Some(&summary))
}

fn first_max(n: &str, ratio: &str, grid: &GridArgs, t_max: Option<usize>, run: &RunArgs, out: &OutputArgs) -> CliResult<()> {
    run.check()?;
    let ns = parse_n_range(n)?;
    let c = parse_ratio(ratio)?;
    let eps = grid.values()?;
    let mut prov = provenance("first-max");
    prov.push("n", join(&ns));
    prov.push("C", c);
    grid.record(&mut prov);
    prov.push("seed", run.seed);
    if let Some(t) = t_max {
        prov.push("T", t);
    }
    let mut table = Table::new(&["n", "epsilon", "gamma", "t1", "p", "stderr", "n_traj"]);
    let mut fits = Vec::new();
    for n in ns {
        let t = match t_max {
            Some(t) => t,
            None => noiseless_first_maximum(n)? + 3,
        };
        let mut scan = Vec::new();
        for &e in &eps {
            let p = params_for_ratio(e, c)?;
            scan.extend(first_max_scan(n, c, &[e], t, &run.run(&p))?);
        }
        for s in &scan {
            table.push(vec![
                json!(n),
                json!(s.epsilon),
                json!(s.gamma),
                s.t1.map(|v| json!(v)).unwrap_or(Value::Null),
                json!(s.p_success),
                json!(s.std_err),
                json!(s.n_trajectories),
            ]);
        }
        let disc = discontinuity_points(&scan);
        let drift = fit_log_drift(&disc).ok();
        fits.push(json!({ "n": n, "discontinuities": disc, "drift_fit": drift }));
    }
    emit(out, &prov, &table, Some(&json!(fits)))
}

fn coefficients(n: usize, noise: &NoiseArgs, ts: &[usize], run: &RunArgs, out: &OutputArgs) -> CliResult<()> {
    check_n(n)?;
    run.check()?;
    let p = noise.params()?;
    let mc = run.run(&p);
    let hs = coefficient_histogram(n, &p, ts, &mc)?;
    let mut prov = provenance("coefficients");
    prov.push("n", n);
    prov.push("t", join(ts));
    noise_provenance(&mut prov, &p);
    run_provenance(&mut prov, &mc);
    let mut table = Table::new(&["t", "state", "weight", "mean", "stderr"]);
    for h in &hs {
        for (i, (m, s)) in h.mean.iter().zip(&h.std_err).enumerate() {
            table.push(vec![json!(h.t), json!(i), json!(i.count_ones()), json!(m), json!(s)]);
        }
    }
    let groups: Vec<Value> = hs
        .iter()
        .map(|h| json!({ "t": h.t, "weight_mean": h.weight_mean, "weight_std_err": h.weight_std_err }))
        .collect();
    emit(out, &prov, &table, Some(&json!({ "weight_groups": groups })))
}

fn threshold(n: usize, ratio: &str, solver: &SolverArgs, run: &RunArgs, out: &OutputArgs) -> CliResult<()> {
    check_n(n)?;
    run.check()?;
    let c = parse_ratio(ratio)?;
    let r = solve_threshold(n, c, solver.p_th, &solver.config(), run.seed, run.workers)?;
    let mut prov = provenance("threshold");
    prov.push("n", n);
    prov.push("C", c);
    solver.record(&mut prov);
    prov.push("seed", run.seed);
    let mut table = Table::new(&["epsilon", "p", "stderr", "t1", "n_traj"]);
    for e in &r.evaluations {
        table.push(vec![
            json!(e.epsilon),
            json!(e.p_success),
            json!(e.std_err),
            e.t1.map(|v| json!(v)).unwrap_or(Value::Null),
            json!(e.n_trajectories),
        ]);
    }
    let summary = json!({ "n": n, "C": c, "epsilon_th": r.epsilon_th, "lo": r.lo, "hi": r.hi });
    emit(out, &prov, &table, Some(&summary))
}

fn threshold_law(n: &str, ratio: &str, solver: &SolverArgs, hw: f64, run: &RunArgs, out: &OutputArgs) -> CliResult<()> {
    run.check()?;
    let ns = parse_n_range(n)?;
    let c = parse_ratio(ratio)?;
    let mut prov = provenance("threshold-law");
    prov.push("n", join(&ns));
    prov.push("C", c);
    solver.record(&mut prov);
    prov.push("seed", run.seed);
    prov.push("hardware_epsilon", hw);
    let mut table = Table::new(&["n", "epsilon_th", "lo", "hi", "evaluations"]);
    let mut pts = Vec::new();
    for &n in &ns {
        let r = solve_threshold(n, c, solver.p_th, &solver.config(), run.seed, run.workers)?;
        table.push(vec![json!(n), json!(r.epsilon_th), json!(r.lo), json!(r.hi), json!(r.evaluations.len())]);
        pts.push((n, r.epsilon_th));
    }
    let summary = match fit_threshold_law(c, &pts) {
        Ok(fit) => json!({
            "fit": fit,
            "epsilon_max": epsilon_max(fit.a, fit.b),
            "max_qubits": max_qubits(hw, fit.a, fit.b)?,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    emit(out, &prov, &table, Some(&summary))
}

fn encoded(ratio: &str, grid: &GridArgs, max_restarts: usize, run: &RunArgs, out: &OutputArgs) -> CliResult<()> {
    run.check()?;
    let c = parse_ratio(ratio)?;
    let eps = grid.values()?;
    let mut prov = provenance("encoded");
    prov.push("C", c);
    grid.record(&mut prov);
    prov.push("max_restarts", max_restarts);
    prov.push("seed", run.seed);
    let mut rows = Vec::new();
    for &e in &eps {
        let p = params_for_ratio(e, c)?;
        rows.push(run_encoded_with(&p, c, &run.run(&p), max_restarts)?);
    }
    let failures: Vec<Value> = rows
        .iter()
        .map(|r| json!({ "epsilon": r.epsilon, "prep_failures": r.prep_failures }))
        .collect();
    emit(out, &prov, &encoded_table(&rows), Some(&json!({ "preparation_failures": failures })))?;
    if let Some(r) = rows.iter().find(|r| r.prep_failure_fraction() > 0.5) {
        return Err(Failure {
            code: 4,
            kind: "preparation-failure",
            message: format!(
                "verified preparation exhausted its restarts in {} of {} trajectories at epsilon = {}",
                r.prep_failures, r.n_traj, r.epsilon
            ),
        });
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match (&cli.command, cli.paper_suite) {
        (None, true) => {
            if suite::run(cli.workers) {
                Ok(())
            } else {
                Err(Failure {
                    code: 1,
                    kind: "suite",
                    message: "suite reported failures".into(),
                })
            }
        }
        (Some(_), true) => Err(Failure::config("--paper-suite takes no subcommand")),
        (None, false) => Err(Failure::config("no subcommand given; see --help")),
        (Some(cmd), false) => match cmd {
            Command::NoiselessCheck { n, out } => noiseless_check(n, out),
            Command::Damping { n, noise, t_max, run, out } => damping(*n, noise, *t_max, run, out),
            Command::FirstMax { n, ratio, grid, t_max, run, out } => first_max(n, ratio, grid, *t_max, run, out),
            Command::Coefficients { n, noise, t, run, out } => coefficients(*n, noise, t, run, out),
            Command::Threshold { n, ratio, solver, run, out } => threshold(*n, ratio, solver, run, out),
            Command::ThresholdLaw { n, ratio, solver, hardware_epsilon, run, out } => {
                threshold_law(n, ratio, solver, *hardware_epsilon, run, out)
            }
            Command::Encoded { ratio, grid, max_restarts, run, out } => encoded(ratio, grid, *max_restarts, run, out),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let record = json!({ "error": f.kind, "message": f.message, "exit_code": f.code });
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}
