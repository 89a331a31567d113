//! JSON checkpoint: config echo, tensor layout and the flat parameter vector.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::HgnnConfig;
use super::params::HgnnParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "fracnet-hgnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: HgnnConfig,
    /// Length of the fractal series the model was trained on.
    pub input_len: usize,
    /// Free-form run description (analysis settings, aspect, schedule).
    pub meta: serde_json::Value,
    /// Tensor names and lengths in the order of `params`.
    pub layout: Vec<(String, usize)>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: &HgnnParams, input_len: usize, meta: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: params.config.clone(),
            input_len,
            meta,
            layout: params
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (n, t.len()))
                .collect(),
            params: params.flatten(),
        }
    }

    pub fn to_params(&self) -> Result<HgnnParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut p = HgnnParams::zeros(&self.config)?;
        let layout: Vec<(String, usize)> = p
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.len()))
            .collect();
        if layout != self.layout {
            return Err(Error::invalid(
                "checkpoint layout does not match its config",
            ));
        }
        p.load_flat(&self.params)?;
        Ok(p)
    }

    pub fn save<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}
