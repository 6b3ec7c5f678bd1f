use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hubbard_learn::fock::MeasureMode;
use hubbard_learn::hamiltonian::InstanceDoc;
use hubbard_learn::harness::{
    generate_instance, run_learn, run_scaling, run_suite, workers_from_env, Coefficients, InstanceKind, RunConfig,
    Suite,
};
use hubbard_learn::protocol::AcquisitionMode;
use hubbard_learn::reshape::DEFAULT_CALIBRATION_CONSTANT;
use hubbard_learn::verify::{calibration_instances, calibration_sweep};
use hubbard_learn::{Error, Result};

/// Simulated Hamiltonian learning for Fermi-Hubbard models.
#[derive(Parser)]
#[command(name = "hubbard-learn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random or fixed-coefficient instance.
    Generate(GenerateArgs),
    /// Run the learning protocol on an instance and write a report.
    Learn(LearnArgs),
    /// Sweep epsilon and fit cost against 1/epsilon.
    Scaling(ScalingArgs),
    /// Run one verification suite.
    Verify(VerifyArgs),
    /// Measure the reshaping constant over the calibration instances.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Chain,
    Grid,
    Random,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Site count for chain and random kinds.
    #[arg(long, default_value_t = 5)]
    sites: usize,
    #[arg(long, default_value_t = 2)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    #[arg(long, default_value_t = 3)]
    max_degree: usize,
    #[arg(long, default_value_t = 0.5)]
    edge_probability: f64,
    /// Use this value for every hopping instead of drawing it.
    #[arg(long, allow_hyphen_values = true)]
    hopping: Option<f64>,
    /// Use this value for every interaction instead of drawing it.
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Shot,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Faithful,
    FastMarginal,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "shot")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "faithful")]
    measure_mode: MeasureArg,
    #[arg(long = "calib-c", default_value_t = DEFAULT_CALIBRATION_CONSTANT)]
    calib_c: f64,
    /// Allow shot mode above the desk-scale site guard.
    #[arg(long)]
    allow_large: bool,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            epsilon: self.epsilon,
            eta: self.eta,
            seed: self.seed,
            mode: match self.mode {
                ModeArg::Shot => AcquisitionMode::Shot,
                ModeArg::Exact => AcquisitionMode::Exact,
            },
            calibration_constant: self.calib_c,
            measure_mode: match self.measure_mode {
                MeasureArg::Faithful => MeasureMode::Faithful,
                MeasureArg::FastMarginal => MeasureMode::FastMarginal,
            },
            out: self.out.clone(),
            allow_large: self.allow_large,
        }
    }
}

#[derive(Args)]
struct LearnArgs {
    /// Instance document.
    instance: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ScalingArgs {
    instance: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Where to write the fit summary; standard error when absent.
    #[arg(long)]
    fit_out: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Signals,
    Reshaping,
    Coloring,
    Rpe,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0])]
    times: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(path: &Option<PathBuf>, text: &str) -> Result<()> {
    let mut w = output(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate(a) => {
            let kind = match a.kind {
                KindArg::Chain => InstanceKind::Chain { sites: a.sites },
                KindArg::Grid => InstanceKind::Grid {
                    rows: a.rows,
                    cols: a.cols,
                },
                KindArg::Random => InstanceKind::Random {
                    sites: a.sites,
                    max_degree: a.max_degree,
                    edge_probability: a.edge_probability,
                },
            };
            let coefficients = Coefficients {
                hopping: a.hopping,
                xi: a.xi,
            };
            let model = generate_instance(kind, coefficients, a.seed)?;
            emit(&a.out, &InstanceDoc::from_model(&model).to_json()?)?;
        }
        Command::Learn(a) => {
            let model = InstanceDoc::read(&a.instance)?.to_model()?;
            let cfg = a.run.config();
            let doc = run_learn(&model, &cfg)?;
            emit(&cfg.out, &doc.to_json()?)?;
            eprintln!(
                "learned {} targets, max error {:.3e}, all within epsilon: {}",
                doc.scores.len(),
                doc.max_error,
                doc.all_success
            );
        }
        Command::Scaling(a) => {
            let model = InstanceDoc::read(&a.instance)?.to_model()?;
            let cfg = a.run.config();
            let sweep = run_scaling(&model, &a.epsilons, a.trials, &cfg)?;
            sweep.write_csv(output(&cfg.out)?)?;
            let mut summary = serde_json::to_string_pretty(&sweep.summary(&cfg)?)?;
            summary.push('\n');
            match &a.fit_out {
                Some(_) => emit(&a.fit_out, &summary)?,
                None => eprint!("{summary}"),
            }
        }
        Command::Verify(a) => {
            let suite = match a.suite {
                SuiteArg::Signals => Suite::Signals,
                SuiteArg::Reshaping => Suite::Reshaping,
                SuiteArg::Coloring => Suite::Coloring,
                SuiteArg::Rpe => Suite::Rpe,
            };
            let report = run_suite(suite, a.seed)?;
            for c in &report.checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                println!("{status} {}: {:.6e} (required {})", c.property, c.measured, c.requirement);
            }
            let verdict = if report.passed() { "passed" } else { "failed" };
            println!("suite {} {verdict}", suite.name());
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Calibrate(a) => {
            let report = calibration_sweep(&calibration_instances(), &a.times)?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            emit(&a.out, &text)?;
            eprintln!("max ratio {:.4}, constant {:.4}", report.max_ratio, report.constant);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let setup = workers_from_env().and_then(|workers| match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string())),
        None => Ok(()),
    });
    match setup.and_then(|()| run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
