//! `lenpi` command-line driver.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use lenpi::experiments::{
    default_grid_cells, run_comparison, run_length_scaling, run_oracle_table, run_plugin_table, ExperimentConfig,
    ExperimentReport, KChoice, COMPARISON_SIZES, SCALING_SIZES,
};
use lenpi::io::{labeled_csv_string, read_csv};
use lenpi::predictor::write_predictions_csv;
use lenpi::{
    make_grid, simulation_model, CondDensityModel, CoveragePI, Error, IntervalPredictor, KnnEstimator, LengthPI,
    SeededRng, SupportMode, DEFAULT_U,
};

#[derive(Parser)]
#[command(name = "lenpi", version, about = "Length-calibrated prediction intervals: experiments and predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Oracle intervals on the simulation model (N = M = T = 1000, 100 reps).
    Table1(StudyArgs),
    /// Plug-in intervals with k-NN estimates (n = 500, N = M = 100, T = 1000, 100 reps).
    Table2(StudyArgs),
    /// Length against coverage calibration over a range of N (d = 5, ell = 2, beta = 0.17).
    Compare(StudyArgs),
    /// Mean |length - ell| of oracle-density intervals as N grows.
    LengthScaling(StudyArgs),
    /// Draw a labeled sample from the simulation model.
    Simulate(SimulateArgs),
    /// Fit on CSV data and write prediction intervals for a test CSV.
    Predict(PredictArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// Feature dimension(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    d: Vec<usize>,
    /// Target expected length(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    ell: Vec<f64>,
    /// Target error rate of the coverage-calibrated intervals.
    #[arg(long)]
    beta: Option<f64>,
    /// Training sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Unlabeled or calibration sample size(s), comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    n_cal: Vec<usize>,
    /// Grid size (default max(1000, ceil(4 sqrt(N)) + 1) unless the study fixes it).
    #[arg(long = "M")]
    m: Option<usize>,
    /// Test sample size.
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Neighbour count or `auto`.
    #[arg(long, value_parser = parse_k)]
    k: Option<KChoice>,
    /// Perturbation scale.
    #[arg(long)]
    u: Option<f64>,
    #[arg(long = "s-mode", value_parser = parse_s_mode)]
    s_mode: Option<SupportMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Long-format CSV path; a `_summary.csv` (and `_plot.csv` for compare) is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Labeled training CSV (`x1..xd,y`).
    #[arg(long)]
    train: PathBuf,
    /// Calibration CSV: features only for `--ell`, labeled for `--beta`.
    #[arg(long)]
    calib: PathBuf,
    /// Test CSV; a `y` column adds the `covered` flag.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long, value_parser = parse_k, default_value = "auto")]
    k: KChoice,
    #[arg(long, default_value_t = DEFAULT_U)]
    u: f64,
    #[arg(long = "s-mode", value_parser = parse_s_mode, default_value = "practice")]
    s_mode: SupportMode,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_k(s: &str) -> Result<KChoice, String> {
    s.parse()
}

fn parse_s_mode(s: &str) -> Result<SupportMode, String> {
    s.parse()
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn config_error<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Config(msg.into()))
}

impl StudyArgs {
    fn config(&self, base: ExperimentConfig) -> ExperimentConfig {
        ExperimentConfig {
            n_train: self.n.unwrap_or(base.n_train),
            grid_cells: self.m.or(base.grid_cells),
            n_test: self.t.unwrap_or(base.n_test),
            reps: self.reps.unwrap_or(base.reps),
            k: self.k.unwrap_or(base.k),
            u: self.u.unwrap_or(base.u),
            s_mode: self.s_mode.unwrap_or(base.s_mode),
            seed: self.seed.unwrap_or(base.seed),
            ..base
        }
    }

    fn single_n(&self, default: usize) -> CliResult<usize> {
        match self.n_cal.as_slice() {
            [] => Ok(default),
            [n] => Ok(*n),
            _ => config_error("this study takes a single --N"),
        }
    }

    fn single_d(&self, default: usize) -> CliResult<usize> {
        match self.d.as_slice() {
            [] => Ok(default),
            [d] => Ok(*d),
            _ => config_error("this study takes a single --d"),
        }
    }

    fn single_ell(&self, default: f64) -> CliResult<f64> {
        match self.ell.as_slice() {
            [] => Ok(default),
            [l] => Ok(*l),
            _ => config_error("this study takes a single --ell"),
        }
    }

    fn list_or<T: Clone>(values: &[T], default: &[T]) -> Vec<T> {
        if values.is_empty() {
            default.to_vec()
        } else {
            values.to_vec()
        }
    }

    fn reject_beta(&self) -> CliResult<()> {
        if self.beta.is_some() {
            return config_error("--beta only applies to `compare`");
        }
        Ok(())
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn emit(report: &ExperimentReport, out: Option<&Path>, with_plot: bool) -> CliResult<()> {
    match out {
        Some(path) => {
            report.write_long_csv(path)?;
            let summary = sibling(path, "summary");
            report.write_summary_csv(&summary)?;
            eprintln!("wrote {} and {}", path.display(), summary.display());
            if with_plot {
                let plot = sibling(path, "plot");
                report.write_plot_csv(&plot)?;
                eprintln!("wrote {}", plot.display());
            }
            print!("{}", report.summary_csv());
        }
        None => print!("{}", report.long_csv()),
    }
    Ok(())
}

const TABLE_DS: [usize; 2] = [1, 5];
const TABLE_ELLS: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

fn run_study(command: &Command, args: &StudyArgs) -> CliResult<()> {
    let (report, plot) = match command {
        Command::Table1(_) => {
            args.reject_beta()?;
            let base = ExperimentConfig::oracle_table();
            let cfg = ExperimentConfig { n_cal: args.single_n(base.n_cal)?, ..args.config(base) };
            let ds = StudyArgs::list_or(&args.d, &TABLE_DS);
            let ells = StudyArgs::list_or(&args.ell, &TABLE_ELLS);
            (run_oracle_table(&ds, &ells, &cfg)?, false)
        }
        Command::Table2(_) => {
            args.reject_beta()?;
            let base = ExperimentConfig::plugin_table();
            let cfg = ExperimentConfig { n_cal: args.single_n(base.n_cal)?, ..args.config(base) };
            let ds = StudyArgs::list_or(&args.d, &TABLE_DS);
            let ells = StudyArgs::list_or(&args.ell, &TABLE_ELLS);
            (run_plugin_table(&ds, &ells, &cfg)?, false)
        }
        Command::Compare(_) => {
            let cfg = args.config(ExperimentConfig::comparison());
            let sizes = StudyArgs::list_or(&args.n_cal, &COMPARISON_SIZES);
            let beta = args.beta.unwrap_or(0.17);
            (run_comparison(args.single_d(5)?, args.single_ell(2.0)?, beta, &sizes, &cfg)?, true)
        }
        Command::LengthScaling(_) => {
            args.reject_beta()?;
            let cfg = args.config(ExperimentConfig::length_scaling());
            let sizes = StudyArgs::list_or(&args.n_cal, &SCALING_SIZES);
            let report = run_length_scaling(args.single_d(1)?, args.single_ell(1.0)?, &sizes, &cfg)?;
            let fit = report.loglog_slope("oracle-density", "abs_length_gap");
            eprintln!("log-log slope of mean |L - ell| against N: {:.4} (se {:.4})", fit.slope, fit.slope_se);
            (report, false)
        }
        Command::Simulate(_) | Command::Predict(_) => unreachable!(),
    };
    emit(&report, args.out.as_deref(), plot)
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.n == 0 {
        return config_error("--n must be positive");
    }
    let model = simulation_model(args.d)?;
    let data = model.sample(args.n, &mut SeededRng::new(args.seed, 0))?;
    let text = labeled_csv_string(&data);
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn predict(args: &PredictArgs) -> CliResult<()> {
    if args.ell.is_some() == args.beta.is_some() {
        return config_error("give exactly one of --ell and --beta");
    }
    let train = read_csv(&args.train)?.into_labeled()?;
    let calib = read_csv(&args.calib)?;
    let test = read_csv(&args.test)?;
    let d = train.dim();
    if calib.features.dim() != d || test.features.dim() != d {
        return config_error(format!("training data has {d} features; calibration and test files must match"));
    }
    let n_cal = calib.features.len();
    let k = args.k.resolve(train.len(), d)?;
    let s = args.s_mode.half_width(&train, n_cal)?;
    let density = CondDensityModel::new(Arc::new(KnnEstimator::new(train, k)?), s, args.u)?;
    let rng = SeededRng::new(args.seed, 0);
    let predictor: Box<dyn IntervalPredictor> = match (args.ell, args.beta) {
        (Some(ell), _) => {
            let grid = make_grid(s, args.m.unwrap_or_else(|| default_grid_cells(n_cal)))?;
            let (pi, g) = LengthPI::fit(density, &calib.features, &grid, ell, &mut rng.derive(0))?;
            if g.saturates(ell) {
                eprintln!("warning: ell = {ell} exceeds the support width 2s = {}; intervals cover [-s, s]", 2.0 * s);
            }
            eprintln!("k = {k}, s = {s}, lambda_hat = {}", pi.lambda_hat());
            Box::new(pi)
        }
        (None, Some(beta)) => {
            let calset = calib.into_labeled()?;
            let (pi, _) = CoveragePI::fit(density, &calset, beta, &mut rng.derive(0))?;
            eprintln!("k = {k}, s = {s}, t_beta = {}", pi.t_beta());
            Box::new(pi)
        }
        (None, None) => unreachable!(),
    };
    let mut zeta_rng = rng.derive(1);
    let intervals: Vec<_> = test.features.rows().map(|x| predictor.predict_interval(x, &mut zeta_rng)).collect();
    write_predictions_csv(&args.out, &test.features, &intervals, test.labels.as_deref())?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Table1(a) | Command::Table2(a) | Command::Compare(a) | Command::LengthScaling(a) => {
            run_study(&cli.command, a)
        }
        Command::Simulate(a) => simulate(a),
        Command::Predict(a) => predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
