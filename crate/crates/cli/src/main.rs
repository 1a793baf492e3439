//! `monoalign` command-line entry point.

mod commands;
mod manifest;
mod plot;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use monoalign::eval::ModelKind;
use monoalign::gbt::HyperGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "monoalign", version, about = "Monotone-constrained boosted trees, alignment audits and the preference experiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic dataset with known monotone effects, a split and a survey.
    Synth(SynthArgs),
    /// Fit a model, selecting hyperparameters by stratified k-fold CV.
    Train(TrainArgs),
    /// Partial dependence curves (CSV, JSON, SVG).
    Pdp(PdpArgs),
    /// Check a model for monotonicity violations on given features.
    Audit(AuditArgs),
    /// Prediction, ranking and SHAP distances between two models.
    Distance(DistanceArgs),
    /// Train-size by seed study with learning and distance curves.
    Sweep(SweepArgs),
    /// Render curve CSVs as SVG charts.
    Curves(CurvesArgs),
    /// Build the blinded preference experiment from a finished sweep.
    ExpPrepare(ExpPrepareArgs),
    /// Serve rater tasks over HTTP.
    ExpServe(ExpServeArgs),
    /// Fit the fixed-effects choice model to collected responses.
    ExpAnalyze(ExpAnalyzeArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.2)]
    pub label_noise: f64,
    #[arg(long, default_value_t = 0.02)]
    pub missing_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Simulated survey respondents.
    #[arg(long, default_value_t = 5)]
    pub respondents: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    /// 8 cells: lr {0.1, 0.3}, rounds {50, 100}, depth {2, 3}.
    Desk,
    /// 48 cells: lr {0.01, 0.1, 0.3, 0.5}, rounds {100, 300, 500}, depth {2, 3, 5, 10}.
    Full,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long, value_enum, default_value_t = GridPreset::Desk)]
    pub grid: GridPreset,
    /// Comma-separated learning rates, replacing the preset's.
    #[arg(long, value_delimiter = ',')]
    pub learning_rates: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub rounds: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub depths: Vec<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
}

impl GridArgs {
    pub fn resolve(&self) -> monoalign::Result<HyperGrid> {
        let mut g = match self.grid {
            GridPreset::Desk => HyperGrid::desk(),
            GridPreset::Full => HyperGrid::full(),
        };
        if !self.learning_rates.is_empty() {
            g.learning_rates = self.learning_rates.clone();
        }
        if !self.rounds.is_empty() {
            g.num_rounds = self.rounds.clone();
        }
        if !self.depths.is_empty() {
            g.max_depths = self.depths.clone();
        }
        if let Some(k) = self.folds {
            g.folds = k;
        }
        g.normalized()
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON.
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Survey CSV, constraint JSON, or `none`.
    #[arg(long, default_value = "none")]
    pub constraints: String,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Held-out CSV for AUC and average precision.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PdpArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Rows averaged over (usually the test set).
    #[command(flatten)]
    pub input: DataArgs,
    /// Dataset supplying the grid values; defaults to `--data`.
    #[arg(long)]
    pub full: Option<PathBuf>,
    /// Features to sweep; defaults to every ordinal feature.
    #[arg(long = "feature")]
    pub features: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long)]
    pub full: Option<PathBuf>,
    /// Features to audit; defaults to every feature with a known direction.
    #[arg(long = "feature")]
    pub features: Vec<String>,
    /// Expected directions (constraint JSON or survey CSV). Without it, the
    /// model's own training constraints are used.
    #[arg(long)]
    pub constraints: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DistanceArgs {
    /// Model A (constrained, by convention).
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[command(flatten)]
    pub input: DataArgs,
    /// Also write both attribution matrices as CSV.
    #[arg(long)]
    pub shap_csv: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Training pool CSV that subsamples are drawn from.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Survey CSV or constraint JSON.
    #[arg(long)]
    pub constraints: String,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800,1600")]
    pub sizes: Vec<usize>,
    /// Replicates per size.
    #[arg(long, default_value_t = 30)]
    pub seeds: usize,
    #[arg(long, value_delimiter = ',', default_value = "constrained,unconstrained")]
    pub modes: Vec<ModelKind>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CurvesArgs {
    /// Curve CSVs written by `sweep`.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Linear rather than logarithmic train-size axis.
    #[arg(long)]
    pub linear_x: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExpPrepareArgs {
    /// Finished sweep directory.
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Design JSON; flags below override its fields.
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[arg(long)]
    pub n_runs: Option<usize>,
    #[arg(long)]
    pub n_pairs: Option<usize>,
    #[arg(long)]
    pub patients_per_pair: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub raters: Vec<String>,
    #[arg(long)]
    pub patients_per_rater: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExpServeArgs {
    /// Directory written by `exp-prepare`.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Response log; defaults to `<bundle>/responses.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExpAnalyzeArgs {
    /// Export from `GET /export`.
    #[arg(long, conflicts_with = "log", required_unless_present = "log")]
    pub responses: Option<PathBuf>,
    /// Raw server log; requires `--bundle`.
    #[arg(long, requires = "bundle")]
    pub log: Option<PathBuf>,
    /// Bundle directory; fixes the pair order of the fixed effects.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory replacing the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::dispatch(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
