use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use kaondyn::observables::ObservableKind;
use kaondyn::params::PhysParams;
use kaondyn::run::{
    self, EvalMode, OutputFormat, RunError, RunSpec, StateSpec, Suite, TimeSeries,
};

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFICATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "kaondyn",
    about = "Neutral-kaon open-system dynamics: time series, figure datasets, verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ParamsArgs {
    /// Parameter file (key = value lines); defaults to built-in PDG values
    #[arg(long, env = "KAON_PARAMS")]
    params: Option<PathBuf>,
}

impl ParamsArgs {
    fn resolve(&self) -> Result<(PhysParams, String), RunError> {
        match &self.params {
            None => Ok((PhysParams::pdg_defaults(), "pdg-default".into())),
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Ok((run::parse_params_file(&text)?, path.display().to_string()))
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObservableArg {
    TotalNumber,
    Strangeness,
    NumberK0,
    NumberK0bar,
    NumberKs,
    NumberKl,
}

impl From<ObservableArg> for ObservableKind {
    fn from(o: ObservableArg) -> Self {
        match o {
            ObservableArg::TotalNumber => ObservableKind::TotalNumber,
            ObservableArg::Strangeness => ObservableKind::Strangeness,
            ObservableArg::NumberK0 => ObservableKind::NumberK0,
            ObservableArg::NumberK0bar => ObservableKind::NumberK0bar,
            ObservableArg::NumberKs => ObservableKind::NumberKS,
            ObservableArg::NumberKl => ObservableKind::NumberKL,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ClosedForm,
    Ode,
    Fock,
    Compare,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ClosedForm => EvalMode::ClosedForm,
            ModeArg::Ode => EvalMode::Ode,
            ModeArg::Fock => EvalMode::Fock,
            ModeArg::Compare => EvalMode::Compare,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Oracle,
    Invariants,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::Invariants => Suite::Invariants,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample one observable over a time grid
    Run {
        #[command(flatten)]
        params: ParamsArgs,
        #[arg(long, value_enum)]
        observable: ObservableArg,
        /// Initial state: "n,nbar" | "ns:<n>" | "nl:<n>" | "mixed:p1,p2,re_w,im_w"
        #[arg(long, default_value = "1,0")]
        state: String,
        #[arg(long, default_value_t = 0.0)]
        t_start: f64,
        #[arg(long, default_value_t = 9.0)]
        t_end: f64,
        #[arg(long, default_value_t = 901)]
        samples: usize,
        #[arg(long, value_enum, default_value = "closed-form")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Fock-space truncation (max total particle number)
        #[arg(long, default_value_t = 4)]
        cutoff: u32,
        /// Compare-mode bound on the max pairwise route deviation
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the four standard figure datasets into a directory
    Figures {
        #[command(flatten)]
        params: ParamsArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
    },
    /// Run the verification suites and print a JSON report
    Verify {
        #[command(flatten)]
        params: ParamsArgs,
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Replace every check's default tolerance
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_state(text: &str) -> Result<StateSpec, String> {
    let nums = |s: &str, expect: usize| -> Result<Vec<f64>, String> {
        let vals: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|_| format!("bad state component in {s:?}"))?;
        if vals.len() != expect {
            return Err(format!("state {text:?}: expected {expect} components"));
        }
        Ok(vals)
    };
    let count = |v: f64| -> Result<u32, String> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as u32)
        } else {
            Err(format!("state {text:?}: occupation numbers must be non-negative integers"))
        }
    };
    if let Some(rest) = text.strip_prefix("ns:") {
        let n = count(nums(rest, 1)?[0])?;
        Ok(StateSpec::Ks { n })
    } else if let Some(rest) = text.strip_prefix("nl:") {
        let n = count(nums(rest, 1)?[0])?;
        Ok(StateSpec::Kl { n })
    } else if let Some(rest) = text.strip_prefix("mixed:") {
        let v = nums(rest, 4)?;
        Ok(StateSpec::MixedSingle { p1: v[0], p2: v[1], w: Complex64::new(v[2], v[3]) })
    } else {
        let v = nums(text, 2)?;
        Ok(StateSpec::Flavor { n: count(v[0])?, n_bar: count(v[1])? })
    }
}

fn write_output(text: &str, out: Option<&PathBuf>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn classify(err: &RunError) -> u8 {
    match err {
        RunError::InvalidSpec(_) | RunError::ParamsFile(_) | RunError::Params(_) => EXIT_USAGE,
        RunError::Io(_) => EXIT_USAGE,
        RunError::Heisenberg(_) | RunError::Fock(_) | RunError::Observables(_) => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(classify(&err))
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, RunError> {
    match cli.command {
        Command::Run {
            params,
            observable,
            state,
            t_start,
            t_end,
            samples,
            mode,
            format,
            cutoff,
            tol,
            out,
        } => {
            let (params, params_source) = params.resolve()?;
            let state = parse_state(&state).map_err(RunError::InvalidSpec)?;
            let spec = RunSpec {
                params,
                params_source,
                observable: observable.into(),
                state,
                t_start,
                t_end,
                samples,
                mode: mode.into(),
                format: format.into(),
                cutoff,
                tol,
            };
            let series: TimeSeries = run::run(&spec)?;
            write_output(&series.render(spec.format), out.as_ref())?;
            if spec.mode == EvalMode::Compare {
                if let Some(dev) = series.max_compare_deviation() {
                    if dev > spec.tol {
                        eprintln!(
                            "compare: max deviation {dev:e} exceeds tolerance {:e}",
                            spec.tol
                        );
                        return Ok(ExitCode::from(EXIT_VERIFICATION));
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Figures { params, format, out } => {
            let (params, _) = params.resolve()?;
            let written = run::figures(&out, &params, format.into())?;
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { params, suite, tol, out } => {
            let (params, _) = params.resolve()?;
            let report = run::verify(&params, suite.into(), tol)?;
            let mut text = serde_json::to_string_pretty(&report).expect("serializable");
            text.push('\n');
            write_output(&text, out.as_ref())?;
            for check in &report.checks {
                eprintln!(
                    "{} [{}]: deviation {:e} vs tolerance {:e} -> {}",
                    check.name,
                    check.suite,
                    check.deviation,
                    check.tolerance,
                    if check.pass { "pass" } else { "FAIL" }
                );
            }
            if report.all_pass() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(EXIT_VERIFICATION))
            }
        }
    }
}
