//! Multifractal analysis of embedding-derived series and a gated neural
//! classifier over the resulting generalized Hurst exponents.

pub mod error;
pub mod hgnn;
pub mod ingest;
pub mod metrics;
pub mod mfdfa;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
pub use hgnn::{Checkpoint, HgnnConfig, HgnnParams, Sample, TrainSchedule};
pub use ingest::{Aspect, Dataset, HaeRecord, Labels, Payload, ReduceAxis, SplitAssignment};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use mfdfa::{DfaConfig, FractalSeries, ScaleGrid, Variant};
pub use series::TimeSeries;
pub use synth::{ClassSpec, GeneratorSpec};
