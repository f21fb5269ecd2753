use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpsk_cli::config::{parse_table, apply_override, ConfigError, SweepConfig, SweepVariable};
use dpsk_cli::presets::{preset, PRESETS};
use dpsk_cli::sweep::{default_workers, describe, run_point, run_sweep, write_csv, PointOutcome};
use dpsk_keyrate::engine::{timing_feasibility, SPEED_OF_LIGHT};

#[derive(Parser)]
#[command(name = "dpsk", version, about = "Finite-size DPSK key rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate at a single parameter point.
    Point(RunArgs),
    /// Key rate over a grid, written as CSV.
    Sweep(RunArgs),
    /// Minimum pulse period imposed by the reference/signal timing.
    TimingCheck(TimingArgs),
    /// List presets, or print the resolved configs of one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Override a config key, e.g. `--set chi_db=12` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file (config runs) or directory (preset sweeps).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print the resolved parameters without solving.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Medium {
    /// Standard fiber, group velocity 2c/3.
    Fiber,
    FreeSpace,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long)]
    distance_km: f64,
    #[arg(long, value_enum, default_value = "fiber")]
    medium: Medium,
    /// Pulse period to check against the bound.
    #[arg(long)]
    period_s: Option<f64>,
}

enum Failure {
    Config(String),
    Partial(usize),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn load(args: &RunArgs) -> Result<Vec<SweepConfig>, Failure> {
    let mut configs = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let mut table = parse_table(&text)?;
            for o in &args.overrides {
                apply_override(&mut table, o)?;
            }
            vec![SweepConfig::from_table(table, &text)?]
        }
        (None, Some(name)) => preset(name)?.configs(&args.overrides)?,
        (None, None) => return Err(Failure::Config("one of --config or --preset is required".into())),
    };
    if let Some(seed) = args.seed {
        configs.iter_mut().for_each(|c| c.seed = seed);
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(Failure::Config("--workers must be positive".into()));
        }
        configs.iter_mut().for_each(|c| c.workers = Some(w));
    }
    Ok(configs)
}

fn open(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn point(args: &RunArgs) -> Result<(), Failure> {
    let config = load(args)?.remove(0);
    if args.dry_run {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let outcome = run_point(&config, &config.base);
    print!("{}", describe(&outcome));
    let var = config.sweep_variable.unwrap_or(SweepVariable::ChiDb);
    let row: Vec<(f64, PointOutcome)> = vec![(var.get(&config.base), outcome)];
    match &args.out {
        Some(path) => write_csv(open(path)?, var.name(), &row).map_err(|e| io_failure(path, e))?,
        None => {
            println!();
            write_csv(io::stdout().lock(), var.name(), &row).map_err(|e| Failure::Config(e.to_string()))?;
        }
    }
    if row[0].1.failed() {
        return Err(Failure::Partial(1));
    }
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<(), Failure> {
    let configs = load(args)?;
    for c in &configs {
        if c.sweep_variable.is_none() {
            return Err(Failure::Config("sweep needs `sweep_variable` and `grid`".into()));
        }
    }
    let from_preset = args.preset.is_some();
    let target = |c: &SweepConfig| -> Option<PathBuf> {
        let name = c.output_path.as_deref().map(PathBuf::from);
        match (&args.out, from_preset) {
            (Some(dir), true) => Some(dir.join(name.unwrap_or_default())),
            (Some(file), false) => Some(file.clone()),
            (None, _) => name,
        }
    };
    if args.dry_run {
        for c in &configs {
            if let Some(t) = target(c) {
                println!("# -> {}", t.display());
            }
            println!("{}", c.to_toml());
        }
        return Ok(());
    }
    let mut failures = 0;
    for c in &configs {
        let workers = c.workers.unwrap_or_else(|| default_workers(c.grid.len()));
        let rows = run_sweep(c, workers);
        failures += rows.iter().filter(|r| r.1.failed()).count();
        let var = c.sweep_variable.expect("checked above").name();
        match target(c) {
            Some(path) => {
                write_csv(open(&path)?, var, &rows).map_err(|e| io_failure(&path, e))?;
                eprintln!("wrote {}", path.display());
            }
            None => write_csv(io::stdout().lock(), var, &rows).map_err(|e| Failure::Config(e.to_string()))?,
        }
    }
    if failures > 0 {
        return Err(Failure::Partial(failures));
    }
    Ok(())
}

fn timing(args: &TimingArgs) -> Result<(), Failure> {
    let v = match args.medium {
        Medium::Fiber => 2.0 * SPEED_OF_LIGHT / 3.0,
        Medium::FreeSpace => SPEED_OF_LIGHT,
    };
    let period = args.period_s.unwrap_or(0.0);
    let r = timing_feasibility(args.distance_km * 1e3, v, period).map_err(|e| Failure::Config(e.to_string()))?;
    println!("distance        {} km", args.distance_km);
    println!("min period      {:e} s", r.min_period_s);
    if r.max_rate_hz.is_finite() {
        println!("max rate        {:e} Hz", r.max_rate_hz);
    } else {
        println!("max rate        unbounded (negligible constraint)");
    }
    if matches!(args.medium, Medium::FreeSpace) {
        println!("note            negligible constraint in free space");
    }
    if let Some(p) = args.period_s {
        println!("period {p:e} s   {}", if r.feasible { "feasible" } else { "infeasible" });
    }
    Ok(())
}

fn presets(name: Option<&str>) -> Result<(), Failure> {
    let mut text = String::new();
    match name {
        None => {
            for p in &PRESETS {
                text += &format!("{:6} {}\n", p.name, p.description);
            }
        }
        Some(name) => {
            for c in preset(name)?.configs(&[])? {
                text += &format!("{}\n", c.to_toml());
            }
        }
    }
    // a closed pipe (`dpsk presets | head`) is not an error
    let _ = io::stdout().lock().write_all(text.as_bytes());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Point(a) => point(a),
        Command::Sweep(a) => sweep(a),
        Command::TimingCheck(a) => timing(a),
        Command::Presets { name } => presets(name.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Partial(k)) => {
            eprintln!("{k} point(s) failed; their rate is reported as 0");
            ExitCode::from(2)
        }
    }
}
