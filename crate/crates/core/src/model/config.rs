use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reference subtracted from the key-frame inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputDelta {
    /// Root position and root rotation of the last context frame.
    LastFrame,
    None,
}

/// Baseline the network's residual is added to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputDelta {
    /// SLERP / linear-root interpolation between key-frames.
    Interp,
    /// The last context pose.
    LastFrame,
    /// Zero; the network predicts absolute values.
    None,
}

impl InputDelta {
    pub const ALL: [InputDelta; 2] = [InputDelta::LastFrame, InputDelta::None];

    pub fn name(self) -> &'static str {
        match self {
            InputDelta::LastFrame => "last-frame",
            InputDelta::None => "none",
        }
    }
}

impl OutputDelta {
    pub const ALL: [OutputDelta; 3] = [OutputDelta::Interp, OutputDelta::LastFrame, OutputDelta::None];

    pub fn name(self) -> &'static str {
        match self {
            OutputDelta::Interp => "interp",
            OutputDelta::LastFrame => "last-frame",
            OutputDelta::None => "none",
        }
    }
}

impl fmt::Display for InputDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for OutputDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputDelta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "last-frame" | "last" => Ok(InputDelta::LastFrame),
            "none" | "no" => Ok(InputDelta::None),
            _ => Err(Error::Config(format!("unknown input delta mode `{s}`"))),
        }
    }
}

impl FromStr for OutputDelta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interp" | "i" => Ok(OutputDelta::Interp),
            "last-frame" | "last" => Ok(OutputDelta::LastFrame),
            "none" | "no" => Ok(OutputDelta::None),
            _ => Err(Error::Config(format!("unknown output delta mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub width: usize,
    pub heads: usize,
    pub blocks: usize,
    pub encoder_mlp_layers: usize,
    pub decoder_mlp_layers: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub input_delta: InputDelta,
    pub output_delta: OutputDelta,
    pub max_frame_index: usize,
    pub joints: usize,
    /// One set of attention/MLP weights per level for both encoders.
    pub share_blocks: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            width: 1024,
            heads: 8,
            blocks: 6,
            encoder_mlp_layers: 3,
            decoder_mlp_layers: 2,
            embed_dim: 32,
            dropout: 0.2,
            input_delta: InputDelta::LastFrame,
            output_delta: OutputDelta::Interp,
            max_frame_index: 64,
            joints: 22,
            share_blocks: true,
        }
    }
}

impl ModelConfig {
    /// Small configuration for desk-scale runs and tests.
    pub fn tiny(joints: usize) -> Self {
        ModelConfig {
            width: 64,
            heads: 4,
            blocks: 2,
            dropout: 0.0,
            joints,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return bad(format!(
                "width {} must be a positive multiple of heads {}",
                self.width, self.heads
            ));
        }
        if self.blocks == 0 {
            return bad("at least one residual block is required".into());
        }
        if self.encoder_mlp_layers == 0 || self.decoder_mlp_layers == 0 {
            return bad("MLPs need at least one layer".into());
        }
        if self.embed_dim == 0 || self.max_frame_index == 0 || self.joints == 0 {
            return bad("embed_dim, max_frame_index and joints must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Pose channels per frame: position (3) and ortho6D (6) per joint.
    pub fn pose_channels(&self) -> usize {
        self.joints * 9
    }

    /// Decoder output: root position (3) then ortho6D per joint.
    pub fn output_channels(&self) -> usize {
        3 + 6 * self.joints
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ModelConfig = serde_json::from_str(&s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Attention scores per level: `(key self-attention + key-to-missing
/// cross-attention, joint attention over all frames)`.
pub fn attention_scores(n_keys: usize, n_missing: usize) -> (usize, usize) {
    let split = n_keys * n_keys + n_keys * n_missing;
    let joint = (n_keys + n_missing).pow(2);
    (split, joint)
}
