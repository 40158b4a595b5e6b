//! Degradation-driven training: labels are synthesized on the fly from the
//! degradation operators, and the three restoration heads are supervised
//! jointly with unweighted L1 terms.

pub mod adam;
pub mod loss;
pub mod runner;
pub mod sampler;

pub use adam::AdamState;
pub use loss::{loss_detail, loss_sr, loss_structure, total_loss, LossToggles};
pub use runner::{resume, train, train_step, StepLosses, TrainState, TrainSummary};
pub use sampler::{dihedral8, sample_patch, KernelMode, PatchSample};

use std::collections::BTreeMap;

use crate::degradation::training_width_range;
use crate::error::TrainError;
use crate::model::{Ablation, ModelConfig};

/// Training hyperparameters. Defaults are desk scale (20k iterations);
/// the published full-scale settings are 5e5 iterations with the learning
/// rate halved every 1e5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub scale: usize,
    /// LR-side patch length; the HR crop is `patch_size * scale`.
    pub patch_size: usize,
    pub batch_size: usize,
    pub total_iters: u64,
    pub lr_init: f64,
    pub lr_halve_every: u64,
    pub kernel_mode: KernelMode,
    /// Isotropic sigma range; a degenerate (w, w) range fixes the kernel.
    pub width_range: (f64, f64),
    pub loss_toggles: LossToggles,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl TrainConfig {
    pub fn desk_defaults(scale: usize) -> Result<Self, TrainError> {
        Ok(Self {
            scale,
            patch_size: 64,
            batch_size: 16,
            total_iters: 20_000,
            lr_init: 2e-4,
            lr_halve_every: 5_000,
            kernel_mode: KernelMode::Isotropic,
            width_range: training_width_range(scale)?,
            loss_toggles: LossToggles::ALL,
            seed: 0,
            checkpoint_every: 1_000,
        })
    }

    /// The published schedule; everything else as in [`Self::desk_defaults`].
    pub fn full_scale(scale: usize) -> Result<Self, TrainError> {
        Ok(Self {
            total_iters: 500_000,
            lr_halve_every: 100_000,
            checkpoint_every: 10_000,
            ..Self::desk_defaults(scale)?
        })
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !self.loss_toggles.any() {
            return Err(TrainError::NoLossTerms);
        }
        if self.scale != model.scale {
            return bad(format!(
                "train scale {} != model scale {}",
                self.scale, model.scale
            ));
        }
        if model.ablation == Ablation::NoDecomposition
            && (self.loss_toggles.structure || self.loss_toggles.detail)
        {
            return bad("single-path variant has no component heads to supervise".into());
        }
        if self.lr_init <= 0.0 {
            return bad(format!("lr_init {} must be positive", self.lr_init));
        }
        if self.lr_halve_every == 0 || self.batch_size == 0 {
            return bad("lr_halve_every and batch_size must be positive".into());
        }
        if self.patch_size < 4 {
            return bad(format!("patch_size {} too small", self.patch_size));
        }
        if self.width_range.0 <= 0.0 || self.width_range.1 < self.width_range.0 {
            return bad(format!("bad width_range {:?}", self.width_range));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        Ok(())
    }

    /// Echo form, also the config-file syntax.
    pub fn to_text(&self) -> String {
        format!(
            "scale = {}\npatch_size = {}\nbatch_size = {}\ntotal_iters = {}\n\
             lr_init = {}\nlr_halve_every = {}\nkernel_mode = {}\n\
             width_range = {},{}\nloss_toggles = {}\nseed = {}\ncheckpoint_every = {}\n",
            self.scale,
            self.patch_size,
            self.batch_size,
            self.total_iters,
            self.lr_init,
            self.lr_halve_every,
            self.kernel_mode.name(),
            self.width_range.0,
            self.width_range.1,
            self.loss_toggles,
            self.seed,
            self.checkpoint_every
        )
    }
}

/// Step decay: halves the initial rate every `lr_halve_every` iterations.
pub fn lr_schedule(iter: u64, cfg: &TrainConfig) -> f64 {
    cfg.lr_init * 0.5_f64.powi((iter / cfg.lr_halve_every) as i32)
}

/// Parses the flat `key = value` config format into training and model
/// configs. Unknown keys are rejected. `scale` is required; every other
/// key falls back to the desk-scale defaults.
pub fn parse_config(text: &str) -> Result<(TrainConfig, ModelConfig), TrainError> {
    let bad = |msg: String| TrainError::InvalidConfig(msg);
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    let scale: usize = map
        .remove("scale")
        .ok_or_else(|| bad("missing required key: scale".into()))?
        .parse()
        .map_err(|e| bad(format!("scale: {e}")))?;

    let mut train = TrainConfig::desk_defaults(scale)?;
    let mut model = ModelConfig::new(scale);

    macro_rules! take {
        ($key:literal, $slot:expr) => {
            if let Some(v) = map.remove($key) {
                $slot = v.parse().map_err(|e| bad(format!("{}: {e}", $key)))?;
            }
        };
    }
    take!("patch_size", train.patch_size);
    take!("batch_size", train.batch_size);
    take!("total_iters", train.total_iters);
    take!("lr_init", train.lr_init);
    take!("lr_halve_every", train.lr_halve_every);
    take!("seed", train.seed);
    take!("checkpoint_every", train.checkpoint_every);
    take!("num_groups", model.num_groups);
    take!("blocks_per_group", model.blocks_per_group);
    take!("channels", model.channels);
    take!("leaky_slope", model.leaky_slope);
    take!("ca_reduction", model.ca_reduction);
    if let Some(v) = map.remove("kernel_mode") {
        train.kernel_mode = KernelMode::parse(&v)?;
    }
    if let Some(v) = map.remove("width_range") {
        let (lo, hi) = v
            .split_once(',')
            .ok_or_else(|| bad("width_range wants low,high".into()))?;
        train.width_range = (
            lo.trim().parse().map_err(|e| bad(format!("width_range: {e}")))?,
            hi.trim().parse().map_err(|e| bad(format!("width_range: {e}")))?,
        );
    }
    if let Some(v) = map.remove("loss_toggles") {
        train.loss_toggles = LossToggles::parse(&v).map_err(bad)?;
    }
    if let Some(v) = map.remove("ablation") {
        model.ablation = Ablation::parse(&v)?;
    }
    if let Some(key) = map.keys().next() {
        return Err(bad(format!("unknown config key {key:?}")));
    }
    Ok((train, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_follows_the_published_decay() {
        let mut cfg = TrainConfig::full_scale(2).unwrap();
        cfg.lr_halve_every = 100_000;
        assert_eq!(lr_schedule(0, &cfg), 2e-4);
        assert_eq!(lr_schedule(99_999, &cfg), 2e-4);
        assert_eq!(lr_schedule(100_000, &cfg), 1e-4);
        assert!((lr_schedule(250_000, &cfg) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn schedule_is_nonincreasing_and_piecewise_constant() {
        let mut cfg = TrainConfig::desk_defaults(2).unwrap();
        cfg.lr_halve_every = 7;
        let mut prev = f64::INFINITY;
        let mut changes = 0;
        let mut last = lr_schedule(0, &cfg);
        for iter in 0..100 {
            let lr = lr_schedule(iter, &cfg);
            assert!(lr <= prev);
            if lr != last {
                changes += 1;
                last = lr;
            }
            prev = lr;
        }
        assert_eq!(changes, 99 / 7);
    }

    #[test]
    fn config_text_round_trips() {
        let mut cfg = TrainConfig::desk_defaults(3).unwrap();
        cfg.loss_toggles = LossToggles {
            structure: false,
            detail: true,
            sr: true,
        };
        cfg.total_iters = 123;
        let text = cfg.to_text();
        let (parsed, model) = parse_config(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(model, ModelConfig::new(3));
    }

    #[test]
    fn parser_rejects_unknown_keys_and_requires_scale() {
        assert!(matches!(
            parse_config("scale = 2\nbogus = 1\n"),
            Err(TrainError::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_config("patch_size = 64\n"),
            Err(TrainError::InvalidConfig(_))
        ));
    }

    #[test]
    fn model_keys_flow_through() {
        let (_, model) = parse_config(
            "scale = 4\nnum_groups = 2\nblocks_per_group = 3\nchannels = 16\nca_reduction = 4\nablation = plain_block\n",
        )
        .unwrap();
        assert_eq!(model.num_groups, 2);
        assert_eq!(model.blocks_per_group, 3);
        assert_eq!(model.channels, 16);
        assert_eq!(model.ca_reduction, 4);
        assert_eq!(model.ablation, Ablation::PlainBlock);
    }

    #[test]
    fn validation_rejects_single_path_with_component_losses() {
        let mut model = ModelConfig::tiny(2, 8, 1, 1);
        model.ablation = Ablation::NoDecomposition;
        let mut cfg = TrainConfig::desk_defaults(2).unwrap();
        assert!(cfg.validate(&model).is_err());
        cfg.loss_toggles = LossToggles::sr_only();
        assert!(cfg.validate(&model).is_ok());
    }
}
