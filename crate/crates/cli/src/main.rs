use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rsma_core::montecarlo::{
    emit_cdf_csv, emit_csv, run_cdf, run_sweep_with, Axis, CdfSpec, SweepScheme, SweepSpec,
};
use rsma_core::pairing::DEFAULT_EPS;
use rsma_core::rate_region::sample_region;
use rsma_core::rsma::ScaOptions;
use rsma_core::Exec;

mod config;
mod solve;

use config::{override_with, Loaded};

#[derive(Parser)]
#[command(name = "rsma", version, about = "Uplink rate-splitting multiple access solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-user rate-region frontiers of every scheme as CSV.
    Region(RegionArgs),
    /// Optimal proportional rates of one scenario as a JSON bundle.
    Solve(SolveArgs),
    /// Monte Carlo sweep of mean sum-rates as CSV.
    Sweep(SweepArgs),
    /// Empirical sum-rate distribution over random drops as CSV.
    Cdf(CdfArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

#[derive(Args)]
struct RegionArgs {
    #[command(flatten)]
    common: Common,
    /// Points per frontier, endpoints included.
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecoverMode {
    /// Recover order and powers when the user count allows it.
    Auto,
    /// Always recover; fail when there are too many users.
    Always,
    Never,
}

#[derive(Args)]
pub struct ScaFlags {
    /// RNG seed of the multi-start SCA.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_starts: Option<usize>,
    /// Relative alpha improvement that ends an SCA start.
    #[arg(long)]
    sca_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Alpha an order must reach to be accepted.
    #[arg(long)]
    accept_alpha: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    /// Relative tolerance of the pairing bisection.
    #[arg(long)]
    eps: Option<f64>,
}

impl ScaFlags {
    fn resolve(&self, loaded: &Loaded) -> (ScaOptions, f64) {
        let mut o = loaded.config.sca.unwrap_or_default();
        if let Some(seed) = loaded.config.seed {
            o.seed = seed;
        }
        override_with(loaded, "", "seed", self.seed, &mut o.seed);
        override_with(loaded, "sca", "n_starts", self.n_starts, &mut o.n_starts);
        override_with(loaded, "sca", "tol", self.sca_tol, &mut o.tol);
        override_with(loaded, "sca", "max_iter", self.max_iter, &mut o.max_iter);
        override_with(loaded, "sca", "accept_alpha", self.accept_alpha, &mut o.accept_alpha);
        override_with(loaded, "sca", "alpha_max", self.alpha_max, &mut o.alpha_max);
        let mut eps = loaded.config.pairing_eps.unwrap_or(DEFAULT_EPS);
        override_with(loaded, "", "pairing_eps", self.eps, &mut eps);
        (o, eps)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated schemes, e.g. RSMA,RSMA-UP-SW,NOMA,FDMA,TDMA.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SweepScheme>>,
    #[arg(long, value_enum, default_value_t = RecoverMode::Auto)]
    recover_order: RecoverMode,
    #[command(flatten)]
    sca: ScaFlags,
    /// Include per-order SCA traces.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    axis: Option<Axis>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Users per drop (ignored on the k_users axis).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SweepScheme>>,
}

#[derive(Args)]
struct CdfArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SweepScheme>>,
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Writes the resolved spec next to a CSV output so the run can be replayed.
fn echo_spec<T: serde::Serialize>(out: Option<&Path>, spec: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(spec)?;
    match out {
        Some(p) => {
            let mut echo = p.as_os_str().to_owned();
            echo.push(".spec.json");
            std::fs::write(&echo, text + "\n").with_context(|| format!("writing {:?}", echo))?;
        }
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn cmd_region(args: &RegionArgs) -> Result<()> {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let s = loaded.scenario()?;
    if s.len() != 2 {
        bail!("region needs a two-user scenario, config has {} users", s.len());
    }
    let mut grid = loaded.config.grid_points.unwrap_or(101);
    override_with(&loaded, "", "grid_points", args.grid_points, &mut grid);
    let rows = sample_region(s, grid)?;
    let mut w = csv::Writer::from_writer(writer(args.common.out.as_deref())?);
    w.write_record(["r1_bits_per_s", "r2_bits_per_s", "scheme", "case"])?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.r1_bits_per_s),
            format!("{:e}", r.r2_bits_per_s),
            r.scheme.name().to_string(),
            r.case_tag,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<bool> {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let s = loaded.scenario()?;
    let (sca, eps) = args.sca.resolve(&loaded);
    let schemes = args.schemes.clone().unwrap_or_else(|| solve::default_schemes(s));
    let bundle = solve::solve_all(s, &schemes, &sca, eps, args.recover_order, args.verbose, args.common.exec())?;
    let mut w = writer(args.common.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &bundle)?;
    writeln!(w)?;
    w.flush()?;
    if !bundle.failed.is_empty() {
        eprintln!("error: failed schemes: {}", bundle.failed.join(", "));
    }
    Ok(bundle.failed.is_empty())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let mut spec = match (&loaded.config.sweep, args.axis) {
        (Some(spec), _) => spec.clone(),
        (None, Some(axis)) => SweepSpec::new(axis, Vec::new()),
        (None, None) => bail!("sweep needs --axis or a \"sweep\" section in the config"),
    };
    if let Some(seed) = loaded.config.seed.filter(|_| !loaded.has("sweep", "seed")) {
        spec.seed = seed;
    }
    override_with(&loaded, "sweep", "axis", args.axis, &mut spec.axis);
    override_with(&loaded, "sweep", "values", args.values.clone(), &mut spec.values);
    override_with(&loaded, "sweep", "trials", args.trials, &mut spec.trials);
    override_with(&loaded, "sweep", "seed", args.seed, &mut spec.seed);
    override_with(&loaded, "sweep", "k", args.k, &mut spec.k);
    override_with(&loaded, "sweep", "schemes", args.schemes.clone(), &mut spec.schemes);
    if spec.values.is_empty() {
        bail!("sweep has no values; pass --values or set sweep.values");
    }
    let rows = run_sweep_with(&spec, args.common.exec())?;
    emit_csv(&rows, writer(args.common.out.as_deref())?)?;
    echo_spec(args.common.out.as_deref(), &spec)
}

fn cmd_cdf(args: &CdfArgs) -> Result<()> {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let mut spec = loaded.config.cdf.clone().unwrap_or_else(|| CdfSpec::new(10, 200, 0));
    if let Some(seed) = loaded.config.seed.filter(|_| !loaded.has("cdf", "seed")) {
        spec.seed = seed;
    }
    override_with(&loaded, "cdf", "k", args.k, &mut spec.k);
    override_with(&loaded, "cdf", "trials", args.trials, &mut spec.trials);
    override_with(&loaded, "cdf", "seed", args.seed, &mut spec.seed);
    override_with(&loaded, "cdf", "schemes", args.schemes.clone(), &mut spec.schemes);
    let points = run_cdf(&spec, args.common.exec())?;
    emit_cdf_csv(&points, writer(args.common.out.as_deref())?)?;
    echo_spec(args.common.out.as_deref(), &spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Region(a) => cmd_region(a).map(|_| true),
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Cdf(a) => cmd_cdf(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
