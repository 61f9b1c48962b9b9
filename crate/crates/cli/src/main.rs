use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

#[derive(Parser)]
#[command(
    name = "geodiag",
    version,
    about = "Geometric and baseline markers for frozen features"
)]
struct Cli {
    /// Worker threads for repetition and trial fan-out (results do not depend on it).
    #[arg(long, global = true, env = "GEODIAG_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature bundle.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Compute the marker catalogue of a bundle.
    Markers(MarkersArgs),
    /// Capacity geometry over repeated class draws.
    Capacity(CapacityArgs),
    /// Empirical critical dimension by random projection.
    Oracle(OracleArgs),
    /// Train and evaluate a linear probe.
    Probe(ProbeArgs),
    /// Correlate markers with OOD accuracy across runs.
    Correlate(CorrelateArgs),
    /// Compare two marker reports with the standard-error gap rule.
    Predict(PredictArgs),
}

#[derive(Subcommand)]
pub enum GenCommand {
    /// Uniformly sampled spheres around orthogonal unit centers.
    Spheres(SpheresArgs),
    /// In-distribution / out-of-distribution pair with tunable compression.
    Planted(PlantedArgs),
}

#[derive(Args)]
pub struct SpheresArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub radius: f64,
    #[arg(long)]
    pub ambient: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// All spheres share one set of axes.
    #[arg(long)]
    pub shared_frame: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PlantedArgs {
    #[arg(long)]
    pub compression: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub ambient: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub disc_modes: Option<usize>,
    #[arg(long)]
    pub id_classes: Option<usize>,
    #[arg(long)]
    pub id_points: Option<usize>,
    #[arg(long)]
    pub ood_classes: Option<usize>,
    #[arg(long)]
    pub ood_points: Option<usize>,
    /// Output directory; the bundles go to `<out>/id` and `<out>/ood`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum WhitenArg {
    Zca,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DichotomyArg {
    Default,
    OneVsRest,
    All,
}

#[derive(Args, Clone)]
pub struct GlueArgs {
    /// Random class draws.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Classes per draw.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Points per class per draw.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Gaussian directions per draw.
    #[arg(long, default_value_t = 200)]
    pub n_dirs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = WhitenArg::Zca)]
    pub whiten: WhitenArg,
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    #[arg(long, value_enum, default_value_t = DichotomyArg::Default)]
    pub dichotomies: DichotomyArg,
    #[arg(long, default_value_t = 1e-8)]
    pub qp_tol: f64,
}

#[derive(Args)]
pub struct MarkersArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Comma-separated subset of the catalogue (default: all).
    #[arg(long, value_delimiter = ',')]
    pub markers: Option<Vec<String>>,
    /// Compute baseline markers on each class draw and report standard errors.
    #[arg(long)]
    pub subsample: bool,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[command(flatten)]
    pub glue: GlueArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CapacityArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[command(flatten)]
    pub glue: GlueArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one CSV row per draw.
    #[arg(long)]
    pub rows_csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Classes forming the dichotomy: first `+1`, the rest `-1`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pair: Vec<usize>,
    /// Points per class (default: all rows of each class).
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 64)]
    pub nmax: usize,
    #[arg(long, default_value_t = 1)]
    pub nmin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = WhitenArg::Zca)]
    pub whiten: WhitenArg,
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    #[arg(long)]
    pub stop_at_crossing: bool,
    /// Directions for a mean-field estimate on the same manifolds, written to `--summary`.
    #[arg(long, default_value_t = 500)]
    pub n_dirs: usize,
    /// JSON summary with the empirical and mean-field critical dimensions.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// p-curve CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long, required_unless_present = "bundle")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    /// Single bundle split into train and test sides.
    #[arg(long, conflicts_with_all = ["train", "test"])]
    pub bundle: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub no_bias: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CorrelateArgs {
    /// Run records: `{run_id, markers: {name: {value, stderr?}}, ood_accuracies: {setting: acc}}`.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Decision markers.
    #[arg(long, value_delimiter = ',', default_values_t = ["d_eff".to_string(), "psi_eff".to_string()])]
    pub markers: Vec<String>,
    /// Direction overrides such as `nc1=lower` or `sparsity=higher`.
    #[arg(long = "direction", value_delimiter = ',')]
    pub directions: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let jobs = cli.jobs.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    let started = Instant::now();
    let ctx = commands::Context {
        argv: std::env::args().collect(),
        jobs: pool.current_num_threads(),
        started,
    };
    match pool.install(|| commands::run(cli.command, &ctx)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::CliError::Analysis(e)) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}
