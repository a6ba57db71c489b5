mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hawkes_islands::bench::{self, TruthId};
use hawkes_islands::contrast::{build_gram, contrast_direct};
use hawkes_islands::families::FitContext;
use hawkes_islands::select::{self, method_pairing, strategy_for, Rule};
use hawkes_islands::spectral;
use hawkes_islands::{
    load_events, simulate, Candidate, DuplicatePolicy, Error, EventSequence, GroundTruth,
    MethodConfig, Model, Partition, PenaltySpec, SelectionReport, SimConfig, SimMethod,
    StepFunction, StrategyKind,
};
use serde_json::json;

use output::EstimatorJson;

#[derive(Parser)]
#[command(
    name = "hawkes-islands",
    version,
    about = "Hawkes process interaction estimation"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Hawkes process on [-A, T] and write its events.
    Simulate(SimulateArgs),
    /// Print the Gram system b, X on the regular partition of |Γ| cells.
    Gram(GramArgs),
    /// Fit the projection estimator on one model.
    Fit(FitArgs),
    /// Penalized model selection (methods 1-5 or a custom pairing).
    Select(SelectArgs),
    /// Hold-out model selection (methods 6-8).
    Holdout(HoldoutArgs),
    /// Monte Carlo benchmark from a scenario file.
    Bench(BenchArgs),
    /// Spectral second moment, its bound and the norm constants.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct EventArgs {
    /// Events file: one position per line, `#` comments.
    #[arg(long)]
    events: PathBuf,
    /// Kernel support A.
    #[arg(long = "A", default_value_t = 1000.0)]
    support: f64,
    /// Observation window `lo:hi`; overrides the file's `# window:` line.
    #[arg(long, value_parser = parse_pair)]
    window: Option<(f64, f64)>,
    /// Spread duplicated positions by this step instead of collapsing them.
    #[arg(long)]
    jitter: Option<f64>,
}

impl EventArgs {
    fn load(&self) -> hawkes_islands::Result<EventSequence> {
        let policy = match self.jitter {
            Some(eps) => DuplicatePolicy::Jitter(eps),
            None => DuplicatePolicy::Collapse,
        };
        Ok(load_events(&self.events, self.window, policy)?.events)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TruthArg {
    F1,
    F2,
    F3,
}

impl From<TruthArg> for TruthId {
    fn from(t: TruthArg) -> Self {
        match t {
            TruthArg::F1 => TruthId::F1,
            TruthArg::F2 => TruthId::F2,
            TruthArg::F3 => TruthId::F3,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMethodArg {
    Auto,
    Cluster,
    Thinning,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "f1")]
    truth: TruthArg,
    /// Multiplier c of the built-in kernel.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    nu: f64,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replicate stream of the seed.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Simulated time before -A (default 10 A).
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    sim_method: SimMethodArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct GramArgs {
    #[command(flatten)]
    input: EventArgs,
    #[arg(long, default_value_t = 15)]
    gamma_size: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: EventArgs,
    #[arg(long, default_value_t = 15)]
    gamma_size: usize,
    /// Model intervals `a:b,c:d` on the partition (default: every cell).
    #[arg(long, conflicts_with = "estimator")]
    intervals: Option<String>,
    /// Score a saved estimator JSON on these events instead of fitting.
    #[arg(long)]
    estimator: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Nested,
    Regular,
    Irregular,
    Islands,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Nested => StrategyKind::Nested,
            StrategyArg::Regular => StrategyKind::Regular,
            StrategyArg::Irregular => StrategyKind::Irregular,
            StrategyArg::Islands => StrategyKind::Islands,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Minimal,
    Angle,
    Theoretical,
    None,
}

#[derive(Args)]
struct SelectionArgs {
    /// |Γ| for Irregular and Islands.
    #[arg(long, default_value_t = 15)]
    gamma_size: usize,
    /// Largest partition for Regular (and 2^J bound for Nested).
    #[arg(long, default_value_t = 15)]
    regular_max: usize,
    /// Method id of the methods table; implies its strategy and rule.
    #[arg(long)]
    method: Option<u8>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Allow |Γ| above 26.
    #[arg(long)]
    force_large_gamma: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the criterion curve as CSV.
    #[arg(long)]
    curve_out: Option<PathBuf>,
    /// Write the whole selection report instead of the estimator.
    #[arg(long)]
    report: bool,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: EventArgs,
    #[command(flatten)]
    sel: SelectionArgs,
    #[arg(long, value_enum)]
    penalty: Option<PenaltyArg>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long = "Q")]
    q: Option<f64>,
    /// Sizes `lo:hi` used by the minimal-penalty regression.
    #[arg(long, value_parser = parse_usize_pair)]
    regression_range: Option<(usize, usize)>,
    /// Fit the minimal-penalty regression through the origin.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Args)]
struct HoldoutArgs {
    #[command(flatten)]
    input: EventArgs,
    #[command(flatten)]
    sel: SelectionArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "bench_out")]
    out: PathBuf,
    /// Override the replicate count.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "f1")]
    truth: TruthArg,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    nu: f64,
    /// Test function as `a:b` (value 1) or `a:b:v` pieces, comma separated.
    #[arg(long, default_value = "200:400")]
    g: String,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    /// Monte Carlo replicates for an empirical check (0 skips it).
    #[arg(long, default_value_t = 0)]
    reps: usize,
    #[arg(long = "T", default_value_t = 100_000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn parse_usize_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    let a: usize = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn parse_pieces(s: &str) -> hawkes_islands::Result<Vec<(f64, f64, f64)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let parts: Vec<&str> = p.split(':').collect();
            let num = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("bad number '{x}' in '{p}'")))
            };
            match parts[..] {
                [a, b] => Ok((num(a)?, num(b)?, 1.0)),
                [a, b, v] => Ok((num(a)?, num(b)?, num(v)?)),
                _ => Err(Error::Invalid(format!("expected a:b or a:b:v, got '{p}'"))),
            }
        })
        .collect()
}

/// Failure of a subcommand: exit code plus one JSON line on stderr.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Io { .. } => (2, "io"),
            Error::Parse { .. } => (2, "parse"),
            Error::Window { .. } | Error::SupportMismatch { .. } | Error::NotOnPartition(_) => {
                (2, "data")
            }
            Error::Numeric(_) => (3, "numeric"),
            Error::Invalid(_)
            | Error::Config(_)
            | Error::CapExceeded { .. }
            | Error::Unsupported(_)
            | Error::NonStationary(_) => (1, "usage"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn write_text(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| {
            Failure::from(Error::Io {
                path: path.display().to_string(),
                source,
            })
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure {
                    code: 2,
                    kind: "io",
                    message: e.to_string(),
                })
        }
    }
}

fn to_json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

fn degenerate_failure() -> Failure {
    Failure {
        code: 3,
        kind: "numeric",
        message: "normal equations of the chosen model are singular; minimal-norm solution written"
            .into(),
    }
}

fn run_simulate(a: &SimulateArgs) -> CmdResult {
    let truth = bench::builtin_truth(a.truth.into(), a.nu, a.scale)?;
    let method = match a.sim_method {
        SimMethodArg::Auto => SimMethod::Auto,
        SimMethodArg::Cluster => SimMethod::Cluster,
        SimMethodArg::Thinning => SimMethod::Thinning,
    };
    let mut cfg = SimConfig::new(a.horizon, truth.support(), a.seed)
        .with_stream(a.stream)
        .with_method(method);
    if let Some(b) = a.burn_in {
        cfg = cfg.with_burn_in(b);
    }
    let events = simulate(&truth, &cfg)?;
    let mut buf = Vec::new();
    events.write_to(&mut buf).expect("writing to memory");
    write_text(
        a.out.as_deref(),
        std::str::from_utf8(&buf).expect("ascii output"),
    )
}

fn run_gram(a: &GramArgs) -> CmdResult {
    let events = a.input.load()?;
    let partition = Partition::regular(a.input.support, a.gamma_size)?;
    let ctx = FitContext::full(&events, a.input.support)?;
    let gram = build_gram(&events, &partition, ctx.window, ctx.t_norm)?;
    let dim = gram.dim();
    let rows: Vec<&[f64]> = gram.x().chunks(dim).collect();
    let text = match a.format {
        Format::Json => to_json(&json!({
            "partition": partition.breaks(),
            "window": [ctx.window.0, ctx.window.1],
            "t_norm": ctx.t_norm,
            "window_events": gram.window_events(),
            "b": gram.b(),
            "x": rows,
        })),
        Format::Csv => {
            let mut s = String::from("row,b");
            for j in 0..dim {
                s += &format!(",x{j}");
            }
            s.push('\n');
            for (i, row) in rows.iter().enumerate() {
                s += &format!("{i},{}", gram.b()[i]);
                for v in row.iter() {
                    s += &format!(",{v}");
                }
                s.push('\n');
            }
            s
        }
    };
    write_text(a.out.as_deref(), &text)
}

fn run_fit(a: &FitArgs) -> CmdResult {
    let events = a.input.load()?;
    let support = a.input.support;
    if let Some(path) = &a.estimator {
        return rescore(&events, support, path, a.out.as_deref());
    }
    let partition = Partition::regular(support, a.gamma_size)?;
    let model = match &a.intervals {
        Some(spec) => Model::new(
            support,
            parse_pieces(spec)?
                .into_iter()
                .map(|(l, r, _)| (l, r))
                .collect(),
        )?,
        None => Model::full(&partition),
    };
    let ctx = FitContext::full(&events, support)?;
    let gram = build_gram(&events, &partition, ctx.window, ctx.t_norm)?;
    let est = gram.fit_model(&model)?;
    write_text(
        a.out.as_deref(),
        &to_json(&EstimatorJson::new(&est, 0.0, 0)),
    )?;
    if est.degenerate {
        return Err(degenerate_failure());
    }
    Ok(())
}

fn rescore(events: &EventSequence, support: f64, path: &Path, out: Option<&Path>) -> CmdResult {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut saved: EstimatorJson = serde_json::from_str(&text).map_err(|e| Failure {
        code: 2,
        kind: "parse",
        message: format!("{}: {e}", path.display()),
    })?;
    let (nu, h, _) = saved.to_parts(support)?;
    let ctx = FitContext::full(events, support)?;
    saved.contrast = contrast_direct(&Candidate::new(nu, h), events, ctx.window, ctx.t_norm)?;
    write_text(out, &to_json(&saved))
}

fn method_config(sel: &SelectionArgs) -> MethodConfig {
    MethodConfig {
        gamma_size: sel.gamma_size,
        regular_max: sel.regular_max,
        force_large_gamma: sel.force_large_gamma,
        ..MethodConfig::default()
    }
}

fn emit_report(sel: &SelectionArgs, report: &SelectionReport) -> CmdResult {
    let text = if sel.report {
        to_json(report)
    } else {
        to_json(&EstimatorJson::new(
            &report.chosen,
            report.penalty_constant,
            report.method.unwrap_or(0),
        ))
    };
    write_text(sel.out.as_deref(), &text)?;
    if let Some(path) = &sel.curve_out {
        let mut csv = String::from("dimension,contrast,penalty,penalized\n");
        for p in &report.curve {
            csv += &format!(
                "{},{:e},{:e},{:e}\n",
                p.dimension, p.contrast, p.penalty, p.penalized
            );
        }
        write_text(Some(path), &csv)?;
    }
    if report.nonstandard_pairing {
        log::warn!("strategy and penalty pairing is outside the methods table");
    }
    if report.chosen.degenerate {
        return Err(degenerate_failure());
    }
    Ok(())
}

fn run_select(a: &SelectArgs) -> CmdResult {
    let mut cfg = method_config(&a.sel);
    cfg.regression_range = a.regression_range;
    cfg.intercept = !a.no_intercept;
    let (kind, rule) = match (a.sel.method, a.sel.strategy) {
        (Some(id), s) => {
            let (k, r) = method_pairing(id, &cfg)?;
            (s.map_or(k, Into::into), r)
        }
        (None, Some(s)) => (s.into(), Rule::Penalized(PenaltySpec::None)),
        (None, None) => return Err(Failure::usage("give --method or --strategy")),
    };
    let rule = match a.penalty {
        None if a.sel.method.is_none() => {
            return Err(Failure::usage(
                "--strategy without --method needs --penalty",
            ))
        }
        None => rule,
        Some(PenaltyArg::Minimal) => Rule::Penalized(PenaltySpec::Minimal {
            range: cfg.regression_range,
            intercept: cfg.intercept,
        }),
        Some(PenaltyArg::Angle) => Rule::Penalized(PenaltySpec::Angle),
        Some(PenaltyArg::None) => Rule::Penalized(PenaltySpec::None),
        Some(PenaltyArg::Theoretical) => match (a.kappa, a.q) {
            (Some(kappa), Some(q)) => Rule::Penalized(PenaltySpec::Theoretical { kappa, q }),
            _ => {
                return Err(Failure::usage(
                    "the theoretical penalty needs --kappa and --Q",
                ))
            }
        },
    };
    let events = a.input.load()?;
    let support = a.input.support;
    let strategy = strategy_for(kind, support, &cfg)?;
    let mut report = match rule {
        Rule::Penalized(spec) => {
            select::penalized_select(&events, strategy, support, &spec, cfg.force_large_gamma)?
        }
        Rule::HoldOut => select::holdout_select(&events, strategy, support, cfg.force_large_gamma)?,
    };
    report.method = a.sel.method;
    emit_report(&a.sel, &report)
}

fn run_holdout(a: &HoldoutArgs) -> CmdResult {
    let cfg = method_config(&a.sel);
    let kind = match (a.sel.method, a.sel.strategy) {
        (_, Some(s)) => s.into(),
        (Some(id @ 6..=8), None) => method_pairing(id, &cfg)?.0,
        (Some(id), None) => {
            return Err(Failure::usage(format!(
                "method {id} is not a hold-out method"
            )))
        }
        (None, None) => StrategyKind::Islands,
    };
    let events = a.input.load()?;
    let support = a.input.support;
    let strategy = strategy_for(kind, support, &cfg)?;
    let mut report = select::holdout_select(&events, strategy, support, cfg.force_large_gamma)?;
    report.method = a.sel.method;
    emit_report(&a.sel, &report)
}

fn run_bench(a: &BenchArgs) -> CmdResult {
    let mut scenarios = bench::load_scenarios(&a.scenario)?;
    for s in &mut scenarios {
        if let Some(r) = a.reps {
            s.replicates = r;
        }
        if let Some(seed) = a.seed {
            s.seed = seed;
        }
        s.validate()?;
    }
    let mut reports = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        reports.push(bench::run_scenario(s)?);
    }
    bench::write_outputs(&reports, &a.out)?;
    let failures: usize = reports
        .iter()
        .flat_map(|r| r.methods.iter().map(|m| m.failures))
        .sum();
    if failures > 0 {
        log::warn!("{failures} method runs failed; see the report");
    }
    Ok(())
}

fn run_validate(a: &ValidateArgs) -> CmdResult {
    let truth: GroundTruth = bench::builtin_truth(a.truth.into(), a.nu, a.scale)?;
    let g = StepFunction::from_pieces(truth.support(), &parse_pieces(&a.g)?)?;
    let report = spectral::spectral_report(&g, &truth, a.rel_tol)?;
    let mc = if a.reps > 0 {
        let probes = ((a.horizon / truth.support()).floor() as usize).max(1);
        Some(spectral::second_moment_mc(
            &g, &truth, a.reps, a.horizon, probes, a.seed,
        )?)
    } else {
        None
    };
    write_text(
        None,
        &to_json(&json!({ "report": report, "monte_carlo": mc })),
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.render().to_string();
            let message = message.lines().next().unwrap_or("usage error").trim();
            eprintln!("{}", json!({ "error": "usage", "message": message }));
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string() }));
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Gram(a) => run_gram(a),
        Command::Fit(a) => run_fit(a),
        Command::Select(a) => run_select(a),
        Command::Holdout(a) => run_holdout(a),
        Command::Bench(a) => run_bench(a),
        Command::Validate(a) => run_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::from(f.code)
        }
    }
}
