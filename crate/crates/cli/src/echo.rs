//! Effective run configurations, echoed into every artifact.

use std::fmt::Write as _;
use std::path::Path;

use fracnet_core::{Aspect, ClassSpec, DfaConfig, HgnnConfig, ReduceAxis, TrainSchedule};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub dfa: DfaConfig,
    pub axis: ReduceAxis,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthConfig {
    pub command: &'static str,
    pub classes: Vec<ClassSpec>,
    pub counts: Vec<usize>,
    pub aspect: Aspect,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeConfig {
    pub command: &'static str,
    pub input: String,
    pub analysis: AnalysisConfig,
}

/// Stored as checkpoint metadata so `eval` can rebuild features and splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub command: String,
    pub input: String,
    pub aspect: Aspect,
    pub seed: u64,
    pub repeat: usize,
    pub analysis: AnalysisConfig,
    pub model: HgnnConfig,
    pub schedule: TrainSchedule,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalConfig {
    pub command: &'static str,
    pub checkpoint: String,
    pub input: String,
    pub split: &'static str,
    pub trained_with: TrainConfig,
}

/// Output locations are left out so that runs writing to different places
/// still produce identical bytes.
pub fn path_string(p: &Path) -> String {
    p.display().to_string()
}

pub fn config_line<T: Serialize>(config: &T) -> String {
    let mut s = String::from("# config: ");
    s.push_str(&serde_json::to_string(config).expect("configs serialise"));
    s.push('\n');
    s
}

/// CSV body prefixed with a `# config:` comment line.
pub fn csv_with_config<T: Serialize>(config: &T, body: &str) -> String {
    let mut s = config_line(config);
    let _ = write!(s, "{body}");
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}
