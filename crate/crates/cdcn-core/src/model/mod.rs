//! The dual-path component network: configuration, parameters, the graph
//! builder, and the checkpoint format.

pub mod checkpoint;
pub mod net;
pub mod params;

pub use checkpoint::{load_checkpoint, peek_config, save_checkpoint, LoadedCheckpoint, TrainBlob};
pub use net::{build_net, cdcn_forward, CdcnRestorer, ModelOutput, Net, NetNodes};
pub use params::{param_count, ModelParams, ParamSpec, Theta};

use crate::error::ModelError;

/// Which block variant the network is built with. `Full` is the shipped
/// design; the rest reproduce the published comparison variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// Dual path, cross-path channel attention from the concatenated
    /// features, multi-scale fusion.
    Full,
    /// Single-path network of equal depth, SR head only.
    NoDecomposition,
    /// Channel attention computed per path from its own features.
    NoCollab,
    /// Plain dual-path residual blocks, no concatenation or attention.
    PlainBlock,
    /// Cross-path fusion by concatenation + 1x1 convolution instead of
    /// attention.
    FuseConcat,
    /// Cross-path fusion by adding the other path through a 1x1 convolution.
    FuseAdd,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::Full,
        Ablation::NoDecomposition,
        Ablation::NoCollab,
        Ablation::PlainBlock,
        Ablation::FuseConcat,
        Ablation::FuseAdd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoDecomposition => "no_decomposition",
            Ablation::NoCollab => "no_collab",
            Ablation::PlainBlock => "plain_block",
            Ablation::FuseConcat => "fuse_concat",
            Ablation::FuseAdd => "fuse_add",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown ablation {s:?}")))
    }

    pub(crate) fn tag(&self) -> u8 {
        Self::ALL.iter().position(|a| a == self).unwrap() as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self, ModelError> {
        Self::ALL
            .get(tag as usize)
            .copied()
            .ok_or_else(|| ModelError::MalformedCheckpoint(format!("bad ablation tag {tag}")))
    }
}

/// Architecture hyperparameters. Defaults match the published base model
/// (5 residual groups of 10 blocks at 64 channels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub num_groups: usize,
    pub blocks_per_group: usize,
    pub channels: usize,
    pub scale: usize,
    pub leaky_slope: f64,
    pub ca_reduction: usize,
    pub ablation: Ablation,
}

impl ModelConfig {
    pub fn new(scale: usize) -> Self {
        Self {
            num_groups: 5,
            blocks_per_group: 10,
            channels: 64,
            scale,
            leaky_slope: 0.2,
            ca_reduction: 16,
            ablation: Ablation::Full,
        }
    }

    /// Small instance for tests and smoke runs.
    pub fn tiny(scale: usize, channels: usize, groups: usize, blocks: usize) -> Self {
        Self {
            num_groups: groups,
            blocks_per_group: blocks,
            channels,
            scale,
            leaky_slope: 0.2,
            ca_reduction: channels.min(4),
            ablation: Ablation::Full,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.num_groups < 1 || self.blocks_per_group < 1 {
            return bad("need at least one group and one block per group".into());
        }
        if self.channels < 4 {
            return bad(format!("channels {} < 4", self.channels));
        }
        if self.ca_reduction == 0 || !self.channels.is_multiple_of(self.ca_reduction) {
            return bad(format!(
                "channels {} not divisible by attention reduction {}",
                self.channels, self.ca_reduction
            ));
        }
        if !(2..=4).contains(&self.scale) {
            return Err(ModelError::UnsupportedScale(self.scale));
        }
        Ok(())
    }
}
