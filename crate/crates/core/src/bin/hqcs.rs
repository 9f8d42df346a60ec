use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hqcs::cli::{run_pipeline, PathChoice, RunConfig, RunMode, DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_TCF_STEP};
use hqcs::error::HqcsError;
use hqcs::sampling::{SignSource, SumScope, WeightMode};
use hqcs::spectrum::{Direction, DEFAULT_GRID_POINTS};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Hqcs,
    OracleSos,
    OracleTcf,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightArg {
    ExactProbability,
    EmpiricalCounts,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DirectionArg {
    Emission,
    Absorption,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SignArg {
    Rule,
    Exact,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScopeArg {
    Support,
    PairedOnly,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PathArg {
    Auto,
    Dvr,
    Ladder,
}

/// Vibronic spectra by hybrid boson sampling and classical sampling.
#[derive(Debug, Parser)]
#[command(name = "hqcs", version)]
struct Args {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Per-mode quanta cutoff of the Fock space (default: from the model file, else 15).
    #[arg(long)]
    d_max: Option<usize>,
    /// Boson-sampling draws.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    omega_bs: u64,
    /// Classical-sampling loops.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    omega_cs: u64,
    /// Bias exponent k of the classical sampler.
    #[arg(long, default_value_t = 1.0)]
    bias: f64,
    #[arg(long, default_value_t = 60)]
    n_basis: usize,
    #[arg(long, default_value_t = 15)]
    n_states: usize,
    /// Gaussian broadening width, hartree.
    #[arg(long, default_value_t = 1e-3)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "exact-probability")]
    weight_mode: WeightArg,
    #[arg(long, default_value = "hqcs-out")]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "hqcs")]
    mode: ModeArg,
    /// Replace the Duschinsky rotation by one angle (radians) between modes 1 and 2.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Constant added to the output energy axis, cm⁻¹ (default: from the model file).
    #[arg(long, allow_hyphen_values = true)]
    shift_cm1: Option<f64>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    #[arg(long, value_enum, default_value = "rule")]
    sign_source: SignArg,
    #[arg(long, value_enum, default_value = "support")]
    scope: ScopeArg,
    /// Use the raw truncated probabilities instead of renormalizing them.
    #[arg(long)]
    no_renormalize: bool,
    #[arg(long, value_enum, default_value = "auto")]
    hamiltonian: PathArg,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
    /// Write raw rather than peak-normalized intensities.
    #[arg(long)]
    raw_intensity: bool,
    /// Time step of the correlation-function oracle, a.u.
    #[arg(long, default_value_t = DEFAULT_TCF_STEP)]
    tcf_step: f64,
    /// Worker threads (default: all cores).
    #[arg(long, env = "HQCS_THREADS")]
    threads: Option<usize>,
}

impl Args {
    fn config(&self) -> RunConfig {
        RunConfig {
            model: self.model.clone(),
            d_max: self.d_max,
            omega_bs: self.omega_bs,
            omega_cs: self.omega_cs,
            bias: self.bias,
            n_basis: self.n_basis,
            n_states: self.n_states,
            sigma: self.sigma,
            seed: self.seed,
            weight_mode: match self.weight_mode {
                WeightArg::ExactProbability => WeightMode::ExactProbability,
                WeightArg::EmpiricalCounts => WeightMode::EmpiricalCounts,
            },
            output: self.output.clone(),
            mode: match self.mode {
                ModeArg::Hqcs => RunMode::Hqcs,
                ModeArg::OracleSos => RunMode::OracleSos,
                ModeArg::OracleTcf => RunMode::OracleTcf,
                ModeArg::Both => RunMode::Both,
            },
            theta: self.theta,
            shift_cm1: self.shift_cm1,
            direction: self.direction.map(|d| match d {
                DirectionArg::Emission => Direction::Emission,
                DirectionArg::Absorption => Direction::Absorption,
            }),
            sign_source: match self.sign_source {
                SignArg::Rule => SignSource::Rule,
                SignArg::Exact => SignSource::Exact,
            },
            scope: match self.scope {
                ScopeArg::Support => SumScope::Support,
                ScopeArg::PairedOnly => SumScope::PairedOnly,
            },
            renormalize: !self.no_renormalize,
            path: match self.hamiltonian {
                PathArg::Auto => PathChoice::Auto,
                PathArg::Dvr => PathChoice::Dvr,
                PathArg::Ladder => PathChoice::Ladder,
            },
            grid_points: self.grid_points,
            normalize: !self.raw_intensity,
            tcf_step: self.tcf_step,
        }
    }
}

fn exit_code(err: &HqcsError) -> u8 {
    match err {
        HqcsError::Config(_) => 2,
        HqcsError::Parse { .. } => 3,
        HqcsError::Io(_) => 4,
        HqcsError::CutoffOverflow { .. } | HqcsError::TooManyModes { .. } => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot set up {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run_pipeline(&args.config()) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            if let Some(run) = &report.hqcs {
                eprintln!(
                    "completeness {:.4}  M_m {}  M_f {}  M_pair {}",
                    run.completeness,
                    run.pairs.m_m(),
                    run.pairs.m_f(),
                    run.pairs.m_pair()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
