use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gamn_core::channel;
use gamn_core::gamn::{self, mean_stderr, realization_seed, run_seed, GamnError, Variant};
use gamn_core::gradients::{check_gradients, GRADIENT_NAMES};
use thiserror::Error;

use crate::config::{check_n_values, check_powers, parse_variants, ConfigError, ExperimentConfig};

pub const OUT_DIR_ENV: &str = "GAMN_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] GamnError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("gradient check failed: {0}")]
    Tolerance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
            CliError::Tolerance(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gamn",
    version,
    about = "Joint RIS phase and precoder optimization experiments"
)]
pub struct Cli {
    /// Worker threads for realizations [default: available parallelism]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; falls back to `output.dir`, then $GAMN_OUT_DIR, then `.`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated variants, overriding `run.variants`
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Master seed, overriding `run.master_seed`
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Averaged convergence traces
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write every channel realization to `<out>/channels/`
        #[arg(long)]
        dump_channels: bool,
    },
    /// Final and best rate against transmit power
    SweepPower {
        #[command(flatten)]
        common: Common,
        /// Comma-separated powers in dBm, overriding `sweep.powers_dbm`
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        powers: Option<Vec<f64>>,
    },
    /// Final and best rate against the number of surface elements
    SweepN {
        #[command(flatten)]
        common: Common,
        /// Comma-separated element counts, overriding `sweep.n_values`
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
    },
    /// Finite-difference check of the four gradients
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Run { common, .. }
            | Command::SweepPower { common, .. }
            | Command::SweepN { common, .. }
            | Command::GradCheck { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::SweepPower { .. } => "sweep-power",
            Command::SweepN { .. } => "sweep-n",
            Command::GradCheck { .. } => "grad-check",
        }
    }
}

/// Loads the config and applies command-line overrides.
fn resolve(cmd: &Command) -> Result<ExperimentConfig, CliError> {
    let common = cmd.common();
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(names) = &common.variants {
        config.variants = parse_variants(names).map_err(|m| ConfigError {
            key: "--variants".into(),
            message: m,
        })?;
    }
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    match cmd {
        Command::SweepPower {
            powers: Some(p), ..
        } => {
            check_powers(p).map_err(|m| ConfigError {
                key: "--powers".into(),
                message: m,
            })?;
            config.sweep_powers_dbm = p.clone();
        }
        Command::SweepN {
            n_values: Some(n), ..
        } => {
            check_n_values(n).map_err(|m| ConfigError {
                key: "--n-values".into(),
                message: m,
            })?;
            config.sweep_n = n.clone();
        }
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Resolved config with the version and command as leading comments.
pub fn meta_text(config: &ExperimentConfig, command: &str) -> String {
    format!(
        "# gamn-cli {}\n# command: {command}\n{}",
        env!("CARGO_PKG_VERSION"),
        config.to_toml()
    )
}

/// Runs a parsed command line inside a pool of `--jobs` threads.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(ConfigError {
                key: "--jobs".into(),
                message: "must be >= 1".into(),
            }
            .into());
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(|e| CliError::Io {
        path: PathBuf::new(),
        source: io::Error::other(e),
    })?;
    pool.install(|| dispatch(&cli.command))
}

fn dispatch(cmd: &Command) -> Result<(), CliError> {
    let config = resolve(cmd)?;
    if let Command::GradCheck { tol, eps, .. } = cmd {
        return grad_check(&config, *tol, *eps);
    }
    let dir = output_dir(cmd.common().out.as_deref(), &config);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let (stem, body) = match cmd {
        Command::Run { dump_channels, .. } => {
            if *dump_channels {
                dump_channels_to(&config, &dir.join("channels"))?;
            }
            ("trace", trace_csv(&config)?)
        }
        Command::SweepPower { .. } => ("sweep_power", sweep_power_csv(&config)?),
        Command::SweepN { .. } => ("sweep_n", sweep_n_csv(&config)?),
        Command::GradCheck { .. } => unreachable!(),
    };
    let prefix = &config.prefix;
    write_file(&dir.join(format!("{prefix}_{stem}.csv")), &body)?;
    let meta = if stem == "trace" {
        format!("{prefix}_meta.txt")
    } else {
        format!("{prefix}_{stem}_meta.txt")
    };
    write_file(&dir.join(meta), &meta_text(&config, cmd.name()))
}

/// `variant,epoch,mean_wsr,stderr_wsr`, epochs counted from 0.
pub fn trace_csv(config: &ExperimentConfig) -> Result<String, CliError> {
    let setup = config.setup(config.power_dbm, config.n);
    let mut out = String::from("variant,epoch,mean_wsr,stderr_wsr\n");
    for &variant in &config.variants {
        let avg = gamn::average_runs(&setup, variant, config.n_realizations, config.master_seed)?;
        for (epoch, (mean, se)) in avg.mean.iter().zip(&avg.stderr).enumerate() {
            let _ = writeln!(
                out,
                "{},{epoch},{},{}",
                variant.name(),
                sci(*mean),
                sci(*se)
            );
        }
    }
    Ok(out)
}

/// Mean final rate, mean best rate and the standard error of the final rate.
fn point_summary(
    config: &ExperimentConfig,
    variant: Variant,
    power_dbm: f64,
    n: usize,
) -> Result<[f64; 3], CliError> {
    let setup = config.setup(power_dbm, n);
    let avg = gamn::average_runs(&setup, variant, config.n_realizations, config.master_seed)?;
    let (final_mean, final_se) = mean_stderr(&avg.final_wsr);
    let (best_mean, _) = mean_stderr(&avg.best_wsr);
    Ok([final_mean, best_mean, final_se])
}

/// `variant,power_dBm,final_wsr,best_wsr,stderr`.
pub fn sweep_power_csv(config: &ExperimentConfig) -> Result<String, CliError> {
    let mut out = String::from("variant,power_dBm,final_wsr,best_wsr,stderr\n");
    for &variant in &config.variants {
        for &p in &config.sweep_powers_dbm {
            let [f, b, se] = point_summary(config, variant, p, config.n)?;
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                variant.name(),
                sci(p),
                sci(f),
                sci(b),
                sci(se)
            );
        }
    }
    Ok(out)
}

/// `variant,N,final_wsr,best_wsr,stderr`; channels are redrawn for each N.
pub fn sweep_n_csv(config: &ExperimentConfig) -> Result<String, CliError> {
    let mut out = String::from("variant,N,final_wsr,best_wsr,stderr\n");
    for &variant in &config.variants {
        for &n in &config.sweep_n {
            let [f, b, se] = point_summary(config, variant, config.power_dbm, n)?;
            let _ = writeln!(
                out,
                "{},{n},{},{},{}",
                variant.name(),
                sci(f),
                sci(b),
                sci(se)
            );
        }
    }
    Ok(out)
}

fn dump_channels_to(config: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for i in 0..config.n_realizations as u64 {
        let seed = realization_seed(config.master_seed, i);
        let ch = channel::generate(
            seed,
            &config.geometry,
            &config.rician,
            config.n,
            config.m,
            config.k,
        )
        .map_err(GamnError::from)?;
        let path = dir.join(format!("{}_{i:05}.txt", config.prefix));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        channel::write_dump(&ch, &mut w).map_err(GamnError::from)?;
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

/// Checks the gradients on the first realization of the configured system.
/// Prints one `name error` line per gradient.
pub fn grad_check(config: &ExperimentConfig, tol: f64, eps: f64) -> Result<(), CliError> {
    if !(tol > 0.0) {
        return Err(ConfigError {
            key: "--tol".into(),
            message: format!("must be positive, got {tol}"),
        }
        .into());
    }
    if !(1e-8..=1e-3).contains(&eps) {
        return Err(ConfigError {
            key: "--eps".into(),
            message: format!("must lie in [1e-8, 1e-3], got {eps}"),
        }
        .into());
    }
    let seed = realization_seed(config.master_seed, 0);
    let ch = channel::generate(
        seed,
        &config.geometry,
        &config.rician,
        config.n,
        config.m,
        config.k,
    )
    .map_err(GamnError::from)?;
    let system = config.system_params(config.power_dbm);
    let errors = check_gradients(&ch, &system, &config.hyper, run_seed(seed), eps)?;
    let mut failed = Vec::new();
    for e in &errors {
        println!("{} {}", e.name, sci(e.max_rel_error));
        if !(e.max_rel_error < tol) {
            failed.push(format!("{} = {:e}", e.name, e.max_rel_error));
        }
    }
    debug_assert_eq!(errors.len(), GRADIENT_NAMES.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!(
            "{} exceed tolerance {tol:e}",
            failed.join(", ")
        )))
    }
}
