//! Batch front end: simulate Morris–Lecar data, estimate its parameters,
//! check the predictor's hypotheses and scan the cost landscape.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 for
//! numerical failures.

mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use perifit::diagnostics::{diagnose, landscape_scan, write_scan_csv, ScanAxis};
use perifit::estimator::{minimize, write_trace, EstimationConfig, EstimationContext, ParameterMap};
use perifit::fundamental::{compute_phi_grid, ObserverGain};
use perifit::morris_lecar::{
    default_gain, generate_periodic_data, physical_from_theta, to_canonical, RatioMap, LAMBDA_NAMES, Z_NAMES,
};
use perifit::predictor::Predictor;
use perifit::signal::SampledSignal;
use serde::Serialize;

use config::{AxisConfig, RunConfig};

#[derive(Parser)]
#[command(name = "perifit", version, about = "Parameter estimation from periodic voltage data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the model and write one settled period as `t,y` CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output CSV; period metadata goes to `<out>.meta.json`.
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Fit the nonlinear parameters to a `t,y` CSV covering one period.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Result JSON.
        #[arg(long, default_value = "estimate.json")]
        out: PathBuf,
        /// Per-iteration CSV of cost, gradient norm and optimizer coordinates.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        dump_phi: Option<PathBuf>,
    },
    /// Check persistent excitation, monodromy stability and the gain certificate.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "diagnostics.json")]
        out: PathBuf,
        #[arg(long)]
        dump_phi: Option<PathBuf>,
    },
    /// Evaluate the cost on a grid over two optimizer coordinates.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "scan.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; every section is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for cost evaluations (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn setup(&self) -> Result<RunConfig> {
        if let Some(n) = self.workers {
            if n == 0 {
                anyhow::bail!(perifit::Error::Invalid("--workers must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the worker pool")?;
        }
        RunConfig::load(self.config.as_deref())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .find_map(|c| c.downcast_ref::<perifit::Error>())
        .is_some_and(|pe| pe.is_numerical());
    if numerical {
        3
    } else {
        2
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, out } => simulate(&common.setup()?, &out),
        Command::Estimate {
            common,
            data,
            out,
            trace,
            dump_phi,
        } => estimate(&common.setup()?, &data, &out, trace.as_deref(), dump_phi.as_deref()),
        Command::Diagnose {
            common,
            data,
            out,
            dump_phi,
        } => diagnostics(&common.setup()?, &data, &out, dump_phi.as_deref()),
        Command::Scan { common, data, out } => scan(&common.setup()?, &data, &out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationMeta {
    period: f64,
    anchor: f64,
    crossing_level: f64,
    period_spread: f64,
    samples: usize,
    sample_dt: f64,
    x0: f64,
    q0: f64,
    closure_error: f64,
    model: perifit::morris_lecar::MorrisLecarParams,
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = generate_periodic_data(&cfg.model, &cfg.simulate)?;
    data.signal
        .write_csv(create(out)?)
        .with_context(|| format!("writing {}", out.display()))?;
    let meta = SimulationMeta {
        period: data.period.period,
        anchor: data.period.anchor,
        crossing_level: data.period.level,
        period_spread: data.period.spread,
        samples: data.signal.len(),
        sample_dt: data.signal.dt(),
        x0: data.x0,
        q0: data.q0,
        closure_error: data.closure_error,
        model: cfg.model,
    };
    let meta_path = out.with_extension("meta.json");
    write_json(&meta_path, &meta)?;
    info!(
        "period {:.10}, {} samples -> {} (metadata {})",
        meta.period,
        meta.samples,
        out.display(),
        meta_path.display()
    );
    Ok(())
}

fn load_signal(cfg: &RunConfig, path: &Path) -> Result<SampledSignal> {
    let s = SampledSignal::load_csv(path).with_context(|| format!("reading data {}", path.display()))?;
    Ok(s.with_interpolant(cfg.signal.interpolation))
}

fn build_predictor(cfg: &RunConfig, signal: SampledSignal) -> Result<Predictor> {
    let system = to_canonical(cfg.model.reversal());
    let gain = match cfg.gain.l {
        Some(l) => ObserverGain::from_vector(&system, vec![l])?,
        None => default_gain(&system)?,
    };
    info!(
        "building the fundamental matrix: {} samples, period {:.6}, dt_int {}",
        signal.len(),
        signal.period(),
        cfg.phi.dt_int
    );
    Ok(Predictor::new(system, gain, signal, &cfg.phi, cfg.predictor.condition_limit)?)
}

fn dump_phi(predictor: &Predictor, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        predictor
            .phi()
            .write_csv(create(p)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport {
    lambda_names: [&'static str; 7],
    lambda_hat: Vec<f64>,
    z_names: [&'static str; 7],
    z_hat: Vec<f64>,
    theta_hat: Vec<f64>,
    g_l: Option<f64>,
    i_app: Option<f64>,
    x0_hat: Vec<f64>,
    final_cost: f64,
    iterations: usize,
    termination: perifit::estimator::Termination,
    gradient_norm: f64,
    predictor_error: Option<String>,
    monodromy_spectral_radius: f64,
    monodromy_condition: f64,
    lambda0: Vec<f64>,
    estimation: EstimationConfig,
}

fn estimate(cfg: &RunConfig, data: &Path, out: &Path, trace: Option<&Path>, phi_out: Option<&Path>) -> Result<()> {
    let signal = load_signal(cfg, data)?;
    let predictor = build_predictor(cfg, signal)?;
    dump_phi(&predictor, phi_out)?;
    let est_cfg = EstimationConfig {
        lambda0: cfg.lambda0()?,
        ..cfg.estimate.clone()
    };
    let ctx = EstimationContext::new(&predictor, &RatioMap, est_cfg.sample_stride);
    info!("estimating from lambda0 = {:?}", est_cfg.lambda0);
    let res = minimize(&est_cfg, &ctx)?;
    if let Some(p) = trace {
        write_trace(&res.trace, create(p)?).with_context(|| format!("writing {}", p.display()))?;
    }
    let physical = (res.theta_hat.len() == 2).then(|| physical_from_theta(&res.theta_hat, cfg.model.EL));
    let report = EstimateReport {
        lambda_names: LAMBDA_NAMES,
        lambda_hat: res.lambda_hat.clone(),
        z_names: Z_NAMES,
        z_hat: res.z_hat.clone(),
        theta_hat: res.theta_hat.clone(),
        g_l: physical.map(|p| p.0),
        i_app: physical.map(|p| p.1),
        x0_hat: res.x0_hat.clone(),
        final_cost: res.final_cost,
        iterations: res.iterations,
        termination: res.termination,
        gradient_norm: res.gradient_norm,
        predictor_error: res.predictor_error.clone(),
        monodromy_spectral_radius: predictor.spectral_radius(),
        monodromy_condition: predictor.monodromy_condition(),
        lambda0: est_cfg.lambda0.clone(),
        estimation: est_cfg,
    };
    write_json(out, &report)?;
    info!(
        "{:?} after {} iterations, cost {:.4e} -> {}",
        res.termination,
        res.iterations,
        res.final_cost,
        out.display()
    );
    for (name, v) in LAMBDA_NAMES.iter().zip(&res.lambda_hat) {
        info!("  {name:>4} = {v:.6}");
    }
    if let Some((g_l, i_app)) = physical {
        info!("    gL = {g_l:.6}");
        info!("     I = {i_app:.6}");
    }
    Ok(())
}

fn diagnostics(cfg: &RunConfig, data: &Path, out: &Path, phi_out: Option<&Path>) -> Result<()> {
    let signal = load_signal(cfg, data)?;
    let system = to_canonical(cfg.model.reversal());
    let gain = match cfg.gain.l {
        Some(l) => ObserverGain::from_vector(&system, vec![l])?,
        None => default_gain(&system)?,
    };
    // no predictor here: an unstable monodromy is a finding, not a failure
    let phi = compute_phi_grid(&system, &gain, &signal, &cfg.phi)?;
    if let Some(p) = phi_out {
        phi.write_csv(create(p)?).with_context(|| format!("writing {}", p.display()))?;
    }
    let report = diagnose(&system, &gain, &signal, &phi, cfg.diagnose.delta)?;
    write_json(out, &report)?;
    info!(
        "PE min eigenvalue {:.4e} (delta {:.3e}, {}), spectral radius {:.6}{}",
        report.pe_min_eig,
        report.pe_delta,
        if report.pe_delta_pass { "pass" } else { "FAIL" },
        report.monodromy_spectral_radius,
        if report.stability_warning { " WARNING" } else { "" }
    );
    Ok(())
}

fn axis(a: &AxisConfig, base: &[f64]) -> Result<ScanAxis> {
    if a.index >= base.len() {
        anyhow::bail!(perifit::Error::Invalid(format!("scan axis index {} out of range", a.index)));
    }
    Ok(match (a.lo, a.hi) {
        (Some(lo), Some(hi)) => ScanAxis {
            index: a.index,
            lo,
            hi,
            count: a.count,
        },
        _ => ScanAxis::relative(a.index, base[a.index], a.rel, a.count),
    })
}

fn scan(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let signal = load_signal(cfg, data)?;
    let predictor = build_predictor(cfg, signal)?;
    let lambda = if cfg.scan.base.is_empty() {
        cfg.lambda0()?
    } else {
        cfg.scan.base.clone()
    };
    let base = RatioMap.to_optimizer(&lambda)?;
    let (a1, a2) = (axis(&cfg.scan.axis1, &base)?, axis(&cfg.scan.axis2, &base)?);
    let ctx = EstimationContext::new(&predictor, &RatioMap, cfg.estimate.sample_stride);
    info!(
        "scanning {} x {} over ({}, {})",
        a1.count, a2.count, Z_NAMES[a1.index], Z_NAMES[a2.index]
    );
    let points = landscape_scan(&ctx, &base, a1, a2)?;
    write_scan_csv(&points, create(out)?).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
