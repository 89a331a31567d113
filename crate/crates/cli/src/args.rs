use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fracnet_core::mfdfa::DEFAULT_ALPHA;
use fracnet_core::{
    Aspect, DfaConfig, Error, HgnnConfig, ReduceAxis, ScaleGrid, TrainSchedule, Variant,
};

#[derive(Debug, Parser)]
#[command(
    name = "fracnet",
    version,
    about = "Multifractal features and gated neural classification of hazard-event series"
)]
pub struct Cli {
    /// Worker threads (0 = one per core). Never affects output bytes.
    #[arg(long, global = true, env = "FRACNET_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset as JSONL.
    Synth(SynthArgs),
    /// Compute the generalized Hurst curve of every record.
    Analyze(AnalyzeArgs),
    /// Split, analyse and train one classifier for an aspect.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// analyze, train and eval in one go.
    Pipeline(PipelineArgs),
}

fn parse_aspect(s: &str) -> Result<Aspect, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Fgn,
    WhiteNoise,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Class sizes proportional to the reference corpus for `--aspect`.
    Reference,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Fgn)]
    pub kind: Kind,
    /// One class per value (fGn).
    #[arg(long)]
    pub hurst: Vec<f64>,
    /// One class per value (cascade).
    #[arg(long)]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 13)]
    pub levels: u32,
    /// Series length (fGn: a power of two of at least 64).
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    /// Records per class.
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Imbalanced fGn classes, one per level, with Hurst exponents spread
    /// over [0.2, 0.8].
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Dataset size for `--preset`.
    #[arg(long, default_value_t = 500)]
    pub total: usize,
    /// Aspect whose level distinguishes the classes; the other aspects are
    /// set to level 1.
    #[arg(long, value_parser = parse_aspect, default_value = "severity")]
    pub aspect: Aspect,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Standard,
    Hmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    OverTokens,
    OverDims,
}

#[derive(Debug, Clone, Args)]
pub struct DfaArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Standard)]
    pub variant: VariantArg,
    /// Sigmoid scaling index for the hmf variant.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Polynomial order of the local trends.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    pub q_min: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub q_max: f64,
    #[arg(long, default_value_t = 0.25)]
    pub q_step: f64,
    /// Explicit comma-separated window lengths; overrides the geometric grid.
    #[arg(long, value_delimiter = ',')]
    pub scales: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub scale_count: usize,
    #[arg(long, default_value_t = 16)]
    pub scale_min: usize,
    /// How embedding matrices are reduced to a series.
    #[arg(long, value_enum, default_value_t = AxisArg::OverTokens)]
    pub axis: AxisArg,
}

impl DfaArgs {
    pub fn q_grid(&self) -> Result<Vec<f64>, Error> {
        let (lo, hi, step) = (self.q_min, self.q_max, self.q_step);
        if !(lo.is_finite() && hi.is_finite() && step > 0.0 && hi >= lo) {
            return Err(Error::Config(format!(
                "invalid q grid {lo}..{hi} step {step}"
            )));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| lo + step * i as f64).collect())
    }

    pub fn dfa_config(&self) -> Result<DfaConfig, Error> {
        let s_grid = if self.scales.is_empty() {
            ScaleGrid::Geometric {
                count: self.scale_count,
                min: self.scale_min,
            }
        } else {
            ScaleGrid::Explicit(self.scales.clone())
        };
        Ok(DfaConfig {
            q_grid: self.q_grid()?,
            s_grid,
            order: self.order,
            alpha: self.alpha,
            variant: match self.variant {
                VariantArg::Standard => Variant::Standard,
                VariantArg::Hmf => Variant::Hmf,
            },
        })
    }

    pub fn axis(&self) -> ReduceAxis {
        match self.axis {
            AxisArg::OverTokens => ReduceAxis::OverTokens,
            AxisArg::OverDims => ReduceAxis::OverDims,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Width of the fused features (even).
    #[arg(long, default_value_t = 64)]
    pub fusion_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub kernel_size: usize,
}

impl ModelArgs {
    pub fn config(&self, aspect: Aspect, seed: u64) -> HgnnConfig {
        HgnnConfig {
            fusion_dim: self.fusion_dim,
            kernel_size: self.kernel_size,
            num_classes: aspect.num_classes(),
            seed,
            ..HgnnConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
}

impl ScheduleArgs {
    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            ..TrainSchedule::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// CSV with one `q,h,r2` block per record.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub dfa: DfaArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_parser = parse_aspect, default_value = "severity")]
    pub aspect: Aspect,
    /// Seeds the split and, offset by the repetition index, the model.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent initialisations whose test reports are averaged.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[command(flatten)]
    pub dfa: DfaArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Test,
    Validation,
}

impl SplitArg {
    pub fn name(self) -> &'static str {
        match self {
            SplitArg::All => "all",
            SplitArg::Train => "train",
            SplitArg::Test => "test",
            SplitArg::Validation => "validation",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Subset to score, using the checkpoint's split seed.
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    /// Must match the checkpoint's aspect when given.
    #[arg(long, value_parser = parse_aspect)]
    pub aspect: Option<Aspect>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `model,aspect,split,P,R,F1` CSV path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub train: TrainArgs,
}
