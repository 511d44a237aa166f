use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qmep::assumptions::{AssumptionBundle, AssumptionSettings};
use qmep::entropic::PressureConstants;
use qmep::format::InstrumentFile;
use qmep::instrument::{validate_with, Process};
use qmep::operator::Tolerances;
use qmep::pathspace::{PathCache, DEFAULT_CAP};
use qmep_cli::config::{EpTask, HypotestTask, LdpTask, PressureTask, SampleTask, ScenarioConfig, ValidateTask};
use qmep_cli::disk::{configure_workers, DiskCache};
use qmep_cli::source::{RhoPolicy, Source};
use qmep_cli::tasks::{self, Artifact};
use qmep_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "qmep", version, about = "Entropy production and fluctuation statistics of repeated quantum measurements")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// RNG seed for sampling and randomized checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of words enumerated per length.
    #[arg(long, global = true)]
    cap: Option<usize>,
    /// Tolerance for unitality and invariance checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write every artifact into this directory instead of printing the main one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Invariant state: `auto` computes it, `explicit` takes `rho` from the file.
    #[arg(long, global = true, value_parser = parse_rho)]
    rho: Option<RhoPolicy>,
    /// Certificate bundle from `qmep assumptions`, supplying pressure constants.
    #[arg(long, global = true)]
    certificates: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instrument and report its spectral data.
    Validate {
        source: String,
        #[arg(long, default_value_t = 4)]
        or_horizon: usize,
    },
    /// Emit the canonical outcome reversal as an instrument file.
    Reverse { source: String },
    /// Entropy production lower bounds, optionally a Monte Carlo estimate.
    Ep {
        source: String,
        #[arg(long = "T", value_parser = parse_range)]
        t: (usize, usize),
        #[arg(long)]
        mc_t: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        mc_n: usize,
    },
    /// Rényi pressure brackets on an α grid.
    Pressure {
        source: String,
        /// Comma-separated α values; default grid otherwise.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alpha: Option<Vec<f64>>,
        #[arg(long = "T", value_parser = parse_range)]
        t: (usize, usize),
    },
    /// Rate function and finite-T large deviation probabilities.
    Ldp {
        source: String,
        /// Interval `a,b` for the event σ/T ∈ [a, b].
        #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
        interval: (f64, f64),
        #[arg(long = "T", value_parser = parse_range)]
        t: (usize, usize),
        /// Horizon of the pressure curve; defaults to the top of --T.
        #[arg(long = "pressure-T")]
        pressure_t: Option<usize>,
        #[arg(long, default_value_t = 201)]
        s_points: usize,
    },
    /// Chernoff, Stein and Hoeffding exponents for arrow-of-time tests.
    Hypotest {
        source: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long = "T", value_parser = parse_range)]
        t: (usize, usize),
        #[arg(long, default_value_t = 2.0)]
        s_max: f64,
        #[arg(long, default_value_t = 201)]
        s_points: usize,
    },
    /// Certify or refute the structural assumptions.
    Assumptions {
        source: String,
        #[arg(long, default_value_t = 6)]
        b_horizon: usize,
        #[arg(long, default_value_t = 2)]
        tau_max: usize,
        #[arg(long, default_value_t = 4)]
        word_len_max: usize,
    },
    /// Stream sampled trajectories as JSON lines.
    Sample {
        source: String,
        #[arg(long = "T")]
        t: usize,
        #[arg(long)]
        n: usize,
    },
    /// Run a scenario config file.
    Run {
        config: PathBuf,
    },
}

fn parse_rho(s: &str) -> std::result::Result<RhoPolicy, String> {
    match s {
        "auto" => Ok(RhoPolicy::Auto),
        "explicit" => Ok(RhoPolicy::Explicit),
        _ => Err(format!("expected `auto` or `explicit`, got `{s}`")),
    }
}

/// `a..b` or a single `T`, read as `T..T`.
fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    if a == 0 || a > b {
        return Err(format!("range `{s}` must satisfy 1 ≤ a ≤ b"));
    }
    Ok((a, b))
}

fn parse_interval(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    if !(a < b) {
        return Err(format!("interval `{s}` must satisfy a < b"));
    }
    Ok((a, b))
}

impl Common {
    fn tolerances(&self) -> Tolerances {
        let mut tol = Tolerances::default();
        if let Some(t) = self.tol {
            tol.unitality = t;
            tol.invariance = t;
        }
        tol
    }

    fn cap(&self) -> usize {
        self.cap.unwrap_or(DEFAULT_CAP)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn process(&self, source: &str) -> Result<Process> {
        let src: Source = source.parse()?;
        src.process(&self.tolerances(), self.rho.unwrap_or_default(), None)
    }

    fn constants(&self, cache: &PathCache) -> Result<PressureConstants> {
        match &self.certificates {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::NotFound {
                        CliError::usage(format!("certificate file {} does not exist", path.display()))
                    } else {
                        CliError::io(path, e)
                    }
                })?;
                let bundle: serde_json::Value = serde_json::from_str(&text)?;
                let consts = bundle.get("pressure_constants").cloned().unwrap_or(bundle);
                Ok(serde_json::from_value(consts)?)
            }
            None => {
                let settings = AssumptionSettings { seed: self.seed(), ..Default::default() };
                let bundle: AssumptionBundle = qmep::assumptions::certify_all(cache, &settings)?;
                Ok(bundle.pressure_constants)
            }
        }
    }

    /// Print the first artifact, or write all of them under `--out`.
    fn emit(&self, artifacts: &[Artifact]) -> Result<()> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                for a in artifacts {
                    a.write_to(dir)?;
                }
                Ok(())
            }
            None => {
                match artifacts.first() {
                    Some(a) => to_stdout(&a.bytes),
                    None => Ok(()),
                }
            }
        }
    }
}

/// A closed pipe downstream (`| head`) is not an error.
fn to_stdout(bytes: &[u8]) -> Result<()> {
    match std::io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn with_cache<T>(p: &Process, cap: usize, t_max: usize, f: impl FnOnce(&PathCache) -> Result<T>) -> Result<T> {
    let cache = PathCache::new(p, cap);
    let disk = DiskCache::from_env();
    if let Some(d) = &disk {
        d.preload(&cache, t_max)?;
    }
    let out = f(&cache)?;
    if let Some(d) = &disk {
        d.store(&cache)?;
    }
    Ok(out)
}

fn execute(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Validate { source, or_horizon } => {
            let src: Source = source.parse()?;
            let report = validate_with(&src.instrument()?, &c.tolerances());
            if !report.valid {
                c.emit(&[Artifact::json("validate.json", &serde_json::json!({ "validation": report }))?])?;
                return Err(CliError::Failed(format!("instrument is invalid: {}", report.failures.join("; "))));
            }
            let p = c.process(&source)?;
            let cache = PathCache::new(&p, c.cap());
            c.emit(&tasks::validate_task(&p, &cache, &ValidateTask { or_horizon }, &c.tolerances())?)
        }
        Command::Reverse { source } => {
            let p = c.process(&source)?;
            let q = match p.reversal() {
                Some(q) => q.clone(),
                None => qmep::reversal::canonical_or(&p)?.process,
            };
            let mut text = InstrumentFile::from_process(&q).to_json()?;
            text.push('\n');
            c.emit(&[Artifact { name: "reverse.json".into(), bytes: text.into_bytes() }])
        }
        Command::Ep { source, t, mc_t, mc_n } => {
            let p = c.process(&source)?;
            let task = EpTask { t_max: t.1, mc_t, mc_n };
            with_cache(&p, c.cap(), t.1, |cache| tasks::ep_task(&p, cache, &task, c.seed()))
                .and_then(|a| c.emit(&a))
        }
        Command::Pressure { source, alpha, t } => {
            let p = c.process(&source)?;
            let task = PressureTask { alphas: alpha, t_min: t.0, t_max: t.1 };
            with_cache(&p, c.cap(), t.1, |cache| {
                let consts = c.constants(cache)?;
                tasks::pressure_task(cache, &task, &consts)
            })
            .and_then(|a| c.emit(&a))
        }
        Command::Ldp { source, interval, t, pressure_t, s_points } => {
            let p = c.process(&source)?;
            let task = LdpTask { interval, t_min: t.0, t_max: t.1, pressure_t_max: pressure_t, s_grid: None, s_points };
            let horizon = t.1.max(pressure_t.unwrap_or(0));
            with_cache(&p, c.cap(), horizon, |cache| {
                let consts = c.constants(cache)?;
                tasks::ldp_task(cache, &task, &consts)
            })
            .and_then(|a| c.emit(&a))
        }
        Command::Hypotest { source, epsilon, t, s_max, s_points } => {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(CliError::usage("--epsilon must lie in (0, 1)"));
            }
            let p = c.process(&source)?;
            let task = HypotestTask { epsilon, t_min: t.0, t_max: t.1, s_max, s_points };
            with_cache(&p, c.cap(), t.1, |cache| {
                let consts = c.constants(cache)?;
                tasks::hypotest_task(cache, &task, &consts)
            })
            .and_then(|a| c.emit(&a))
        }
        Command::Assumptions { source, b_horizon, tau_max, word_len_max } => {
            let p = c.process(&source)?;
            let settings = AssumptionSettings { b_horizon, tau_max, word_len_max, seed: c.seed() };
            with_cache(&p, c.cap(), b_horizon, |cache| Ok(tasks::assumptions_task(cache, &settings)?.1))
                .and_then(|a| c.emit(&a))
        }
        Command::Sample { source, t, n } => {
            if t == 0 || n == 0 {
                return Err(CliError::usage("--T and --n must be positive"));
            }
            let p = c.process(&source)?;
            c.emit(&tasks::sample_task(&p, &SampleTask { t, n }, c.seed())?)
        }
        Command::Run { config } => {
            let mut cfg = ScenarioConfig::read(&config)?;
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            if let Some(cap) = c.cap {
                cfg.cap = cap;
            }
            if let Some(t) = c.tol {
                cfg.tolerances.unitality = t;
                cfg.tolerances.invariance = t;
            }
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("qmep-out"));
            let manifest = tasks::run(&cfg, config.parent().filter(|p| !p.as_os_str().is_empty()).or(Some(Path::new("."))), &out)?;
            let mut text = serde_json::to_string_pretty(&manifest)?;
            text.push('\n');
            to_stdout(text.as_bytes())?;
            let failed: Vec<&str> = manifest.failed().map(|t| t.name.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Failed(format!("tasks failed: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_workers();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
