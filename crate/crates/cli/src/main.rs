mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use paracont::catalog::{self, Engine, RunOutcome};
use paracont::log::TrajectoryLog;
use paracont::sweep::{self, Job};
use paracont::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "paracont", version, about = "Continuation controllers and online identifiers on bundled examples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an example and write its trajectory as CSV.
    Run(RunArgs),
    /// List the bundled examples.
    List,
    /// Draw columns of a trajectory CSV as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Example id (see `list`).
    #[arg(long)]
    example: Option<String>,
    /// `key = value` file; --set and the other flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set alpha=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output CSV. Seed ranges append `-seed<N>` to the file stem.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed or inclusive range `A..B`.
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads for seed ranges.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write an SVG plot next to each CSV.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Trajectory CSV written by `run`.
    csv: PathBuf,
    /// Columns to draw, comma separated.
    #[arg(long, short, value_delimiter = ',', required = true)]
    columns: Vec<String>,
    /// Horizontal axis column.
    #[arg(long, default_value = "t")]
    x: String,
    /// Output SVG; defaults to the CSV path with an `.svg` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_BREAKDOWN: u8 = 2;
const EXIT_STAGNATION: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ContinuationBreakdown { .. } | Error::RankDeficient { .. } => EXIT_BREAKDOWN,
        Error::Stagnation { .. } => EXIT_STAGNATION,
        Error::Divergence { .. } | Error::StepBudget { .. } | Error::Model(_) => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::UnknownExample { id, registered } => {
            format!("unknown example {id:?}; registered examples: {}", registered.join(", "))
        }
        other => other.to_string(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::List => cmd_list(),
        Command::Run(args) => cmd_run(args),
        Command::Plot(args) => cmd_plot(args),
    };
    ExitCode::from(code)
}

fn cmd_list() -> u8 {
    for spec in catalog::all() {
        println!("{:<22} {:<16} {}", spec.id, spec.engine.as_str(), spec.description);
    }
    0
}

fn resolve(args: &RunArgs) -> Result<RunConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            RunConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    for item in &args.set {
        let (k, v) = config::split_pair(item)?;
        cfg.set(&k, &v)?;
    }
    if let Some(e) = &args.example {
        cfg.example = Some(e.clone());
    }
    if let Some(s) = &args.seed {
        cfg.seeds = Some(config::parse_seeds(s)?);
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    cfg.plot |= args.plot;
    Ok(cfg)
}

/// `runs/a.csv` + seed 3 -> `runs/a-seed3.csv`.
fn seeded_path(base: &Path, seed: u64) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-seed{seed}.{ext}"),
        None => format!("{stem}-seed{seed}"),
    };
    base.with_file_name(name)
}

fn default_plot_columns(outcome: &RunOutcome) -> Vec<String> {
    let cols = outcome.log.columns();
    let prefix = match outcome.spec.engine {
        Engine::Affine | Engine::Nonaffine => "y",
        Engine::IdentLinear | Engine::IdentNonlinear => "theta",
    };
    let mut out: Vec<String> = cols
        .iter()
        .filter(|c| c.strip_prefix(prefix).is_some_and(|rest| rest.parse::<usize>().is_ok()))
        .cloned()
        .collect();
    out.push("lambda".into());
    out
}

fn write_outputs(outcome: &RunOutcome, path: &Path, plot: bool) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    outcome.log.save(path).map_err(|e| format!("{}: {e}", path.display()))?;
    info!("wrote {}", path.display());
    if plot && !outcome.log.is_empty() {
        let svg_path = path.with_extension("svg");
        let title = format!("{} (seed {})", outcome.spec.id, outcome.seed);
        let svg = plot::render(&outcome.log, "t", &default_plot_columns(outcome), &title).map_err(|e| e.to_string())?;
        std::fs::write(&svg_path, svg).map_err(|e| format!("{}: {e}", svg_path.display()))?;
        info!("wrote {}", svg_path.display());
    }
    Ok(())
}

fn summary(outcome: &RunOutcome) -> String {
    let Ok(r) = &outcome.report else {
        return String::new();
    };
    let mut parts = vec![format!("t = {:.3} s", r.t_final)];
    match r.t_switch {
        Some(t) => parts.push(format!("lambda reached 1 at t = {t:.3} s")),
        None => parts.push(format!("lambda = {:.4}", r.final_lambda)),
    }
    if let Some(y) = r.final_y_norm() {
        parts.push(format!("final |y|_inf = {y:.3e}"));
    }
    if let Some(th) = &r.final_theta {
        parts.push(format!("theta = {:?}", th.as_slice()));
    }
    if let Some(e) = r.final_error {
        parts.push(format!("error = {e:.3e}"));
    }
    parts.join(", ")
}

fn cmd_run(args: RunArgs) -> u8 {
    let cfg = match resolve(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let Some(id) = cfg.example.clone() else {
        eprintln!("error: no example given (use --example or `example =` in the config)");
        return EXIT_CONFIG;
    };
    // validate once before spending time on a batch
    let mut probe = match catalog::build(&id) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return exit_code(&e);
        }
    };
    for (k, v) in &cfg.overrides {
        if let Err(e) = probe.apply(k, v) {
            eprintln!("error: {}", describe(&e));
            return exit_code(&e);
        }
    }
    if args.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_CONFIG;
    }

    let seeds: Vec<u64> = cfg.seeds.clone().unwrap_or(0..=0).collect();
    let base = cfg.out.clone().unwrap_or_else(|| PathBuf::from(format!("{id}.csv")));
    let jobs: Vec<Job> = seeds
        .iter()
        .map(|&seed| Job {
            id: id.clone(),
            overrides: cfg.overrides.clone(),
            seed,
        })
        .collect();
    let results = match sweep::run_batch_limited(&jobs, args.jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return exit_code(&e);
        }
    };

    let mut code = 0;
    for (seed, result) in seeds.iter().zip(results) {
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {}", describe(&e));
                return exit_code(&e);
            }
        };
        let path = if seeds.len() > 1 { seeded_path(&base, *seed) } else { base.clone() };
        if let Err(e) = write_outputs(&outcome, &path, cfg.plot) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        match &outcome.report {
            Ok(_) => println!("{id} seed {seed}: ok, {}; wrote {}", summary(&outcome), path.display()),
            Err(e) => {
                eprintln!("{id} seed {seed}: {}; partial trajectory in {}", describe(e), path.display());
                if code == 0 {
                    code = exit_code(e);
                }
            }
        }
    }
    code
}

fn cmd_plot(args: PlotArgs) -> u8 {
    let log = match TrajectoryLog::load(&args.csv) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {}: {e}", args.csv.display());
            return EXIT_CONFIG;
        }
    };
    let title = args
        .csv
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trajectory")
        .to_string();
    let svg = match plot::render(&log, &args.x, &args.columns, &title) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.csv.display());
            return EXIT_CONFIG;
        }
    };
    let out = args.out.unwrap_or_else(|| args.csv.with_extension("svg"));
    if let Err(e) = std::fs::write(&out, svg) {
        eprintln!("error: {}: {e}", out.display());
        return EXIT_CONFIG;
    }
    println!("wrote {}", out.display());
    0
}
