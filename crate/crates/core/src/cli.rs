//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{analyze_and_pool, AnalysisMethod, PooledReport};
use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::freqvar::{boot_then_impute, vonhippel_pool};
use crate::impute::{impute_dataset, Strategy};
use crate::rng::SeedStream;
use crate::sim::{run_scenario, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "refmi", version, about = "Reference-based multiple imputation for trial endpoints")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write M completed copies of a trial CSV.
    Impute(ImputeArgs),
    /// Pool analyses of completed CSVs with Rubin's rules.
    Analyze(AnalyzeArgs),
    /// Bootstrap-then-impute with random-intercepts pooling.
    Bootstrap(BootstrapArgs),
    /// Run a Monte-Carlo scenario from a TOML or JSON config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Mar,
    J2r,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Mar => Strategy::Mar,
            StrategyArg::J2r => Strategy::J2r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisArg {
    DiffMeans,
    Ancova,
}

impl From<AnalysisArg> for AnalysisMethod {
    fn from(a: AnalysisArg) -> Self {
        match a {
            AnalysisArg::DiffMeans => AnalysisMethod::DiffMeans,
            AnalysisArg::Ancova => AnalysisMethod::Ancova,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolMethod {
    Rubin,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Trial CSV with header `id,arm,y0,...,yJ`.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "j2r")]
    pub strategy: StrategyArg,
    #[arg(short = 'M', long = "M", default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Condition every imputation on the MLE instead of posterior draws.
    #[arg(long)]
    pub improper: bool,
    /// Output directory (defaults to the input's directory).
    #[arg(short, long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Completed CSVs, one per imputation.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "rubin")]
    pub method: PoolMethod,
    #[arg(long, value_enum, default_value = "diff-means")]
    pub analysis: AnalysisArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write JSON here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "j2r")]
    pub strategy: StrategyArg,
    #[arg(short = 'B', long = "B", default_value_t = 200)]
    pub b: usize,
    #[arg(short = 'M', long = "M", default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "diff-means")]
    pub analysis: AnalysisArg,
    /// Also write the B x M grid of estimates as CSV.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(short = 'M', long = "M")]
    pub m: Option<usize>,
    #[arg(short = 'B', long = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Leave out wall-clock time so identical runs give identical files.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Path of completed imputation `k` (1-based) for `input`.
pub fn imputation_path(input: &Path, out_dir: Option<&Path>, k: usize) -> PathBuf {
    let stem = input.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| {
        input.parent().map(Path::to_path_buf).unwrap_or_default()
    });
    dir.join(format!("{stem}_imp{k}.csv"))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn impute(a: &ImputeArgs) -> Result<()> {
    let data = TrialDataset::load_csv(&a.input)?;
    let completed = impute_dataset(&data, a.strategy.into(), a.m, !a.improper, SeedStream::new(a.seed))?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    for (k, d) in completed.iter().enumerate() {
        let path = imputation_path(&a.input, a.out_dir.as_deref(), k + 1);
        d.save_csv(&path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let completed = a.inputs.iter().map(TrialDataset::load_csv).collect::<Result<Vec<_>>>()?;
    let pooled = match a.method {
        PoolMethod::Rubin => analyze_and_pool(&completed, a.analysis.into(), a.alpha)?,
    };
    emit(&to_json(&PooledReport::from(&pooled)), a.output.as_deref())
}

fn bootstrap(a: &BootstrapArgs) -> Result<()> {
    let data = TrialDataset::load_csv(&a.input)?;
    let grid = boot_then_impute(&data, a.strategy.into(), a.analysis.into(), a.b, a.m, SeedStream::new(a.seed))?;
    if let Some(p) = &a.grid_out {
        let f = fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        grid.write_csv(f)?;
    }
    let est = vonhippel_pool(&grid, a.alpha)?;
    emit(&to_json(&est), a.output.as_deref())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.strategy {
        cfg.strategy = s.into();
    }
    if let Some(m) = a.m {
        cfg.m = m;
    }
    if let Some(b) = a.b {
        cfg.b = b;
    }
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    let mut report = run_scenario(&cfg)?;
    if a.no_timing {
        report = report.without_timing();
    }
    emit(&report.to_json(), a.output.as_deref())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Impute(a) => impute(a),
        Command::Analyze(a) => analyze(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Simulate(a) => simulate(a),
    }
}

/// Parses `argv` and runs it. Returns the process exit status: 0 on
/// success, 1 for data or runtime errors, 2 for usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let status = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::Config(e.to_string())),
        },
        None => execute(&cli),
    };
    match status {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) { 2 } else { 1 }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imputation_file_names() {
        let p = imputation_path(Path::new("dir/trial.csv"), None, 3);
        assert_eq!(p, PathBuf::from("dir/trial_imp3.csv"));
        let q = imputation_path(Path::new("trial.csv"), Some(Path::new("out")), 1);
        assert_eq!(q, PathBuf::from("out/trial_imp1.csv"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["refmi", "impute"]), 2);
        assert_eq!(run(["refmi", "impute", "x.csv", "--strategy", "cir"]), 2);
        assert_eq!(run(["refmi", "frobnicate"]), 2);
    }

    #[test]
    fn missing_file_exits_one() {
        assert_eq!(run(["refmi", "analyze", "/nonexistent/a.csv", "/nonexistent/b.csv"]), 1);
    }
}
