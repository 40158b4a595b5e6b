//! Parameter store: every learnable tensor has a path-style name, a shape,
//! and a partition tag saying whether it belongs to the structure path, the
//! detail path, or the shared fusion/reconstruction trunk.

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{net::build_net, ModelConfig};
use crate::error::ModelError;

/// Parameter partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theta {
    /// Structure-path weights.
    Structure,
    /// Detail-path weights.
    Detail,
    /// Shared extraction, fusion and SR reconstruction weights.
    Fusion,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub theta: Theta,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The learned parameter set, aligned with the layout [`build_net`] emits
/// for its config.
#[derive(Debug, Clone)]
pub struct ModelParams {
    cfg: ModelConfig,
    values: Vec<ArrayD<f64>>,
}

impl ModelParams {
    /// Fan-in-scaled uniform init for convolution weights (LeakyReLU gain),
    /// zero biases. Deterministic in the seed.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let net = build_net(&cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain2 = 2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope);
        let values = net
            .layout
            .iter()
            .map(|spec| {
                if spec.shape.len() == 4 {
                    let fan_in: usize = spec.shape[1] * spec.shape[2] * spec.shape[3];
                    let bound = (3.0 * gain2 / fan_in as f64).sqrt();
                    ArrayD::from_shape_fn(IxDyn(&spec.shape), |_| rng.gen_range(-bound..bound))
                } else {
                    ArrayD::zeros(IxDyn(&spec.shape))
                }
            })
            .collect();
        Ok(Self { cfg, values })
    }

    pub fn from_values(cfg: ModelConfig, values: Vec<ArrayD<f64>>) -> Result<Self, ModelError> {
        cfg.validate()?;
        let net = build_net(&cfg)?;
        if values.len() != net.layout.len() {
            return Err(ModelError::CheckpointMismatch(format!(
                "{} tensors provided, layout has {}",
                values.len(),
                net.layout.len()
            )));
        }
        for (v, spec) in values.iter().zip(net.layout.iter()) {
            if v.shape() != spec.shape.as_slice() {
                return Err(ModelError::CheckpointMismatch(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    spec.name,
                    v.shape(),
                    spec.shape
                )));
            }
        }
        Ok(Self { cfg, values })
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn values(&self) -> &[ArrayD<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [ArrayD<f64>] {
        &mut self.values
    }

    pub fn layout(&self) -> Vec<ParamSpec> {
        build_net(&self.cfg).expect("config validated at construction").layout
    }

    pub fn total_scalars(&self) -> u64 {
        self.values.iter().map(|v| v.len() as u64).sum()
    }

    /// Rounds every scalar through f32, the checkpoint precision, so an
    /// in-memory state matches what a save/load round trip would produce.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.values {
            v.mapv_inplace(|x| f64::from(x as f32));
        }
    }
}

/// Total scalar parameter count for a config, without allocating weights.
pub fn param_count(cfg: &ModelConfig) -> Result<u64, ModelError> {
    cfg.validate()?;
    let net = build_net(cfg)?;
    Ok(net.layout.iter().map(|s| s.len() as u64).sum())
}

/// Scalar counts per partition (structure, detail, fusion).
pub fn partition_counts(cfg: &ModelConfig) -> Result<(u64, u64, u64), ModelError> {
    cfg.validate()?;
    let net = build_net(cfg)?;
    let mut counts = (0u64, 0u64, 0u64);
    for spec in &net.layout {
        let n = spec.len() as u64;
        match spec.theta {
            Theta::Structure => counts.0 += n,
            Theta::Detail => counts.1 += n,
            Theta::Fusion => counts.2 += n,
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ablation;

    fn g_b(groups: usize, blocks: usize) -> ModelConfig {
        ModelConfig {
            num_groups: groups,
            blocks_per_group: blocks,
            ..ModelConfig::new(4)
        }
    }

    /// Closed-form per-layer oracle for the block-dependent parameter mass:
    /// each collaboration block carries four 3x3 CxC convolutions plus two
    /// attention stacks (2C -> 2C/r -> C with biases); each group adds two
    /// 3x3 tail convolutions.
    fn block_and_tail_oracle(c: u64, r: u64, groups: u64, blocks: u64) -> u64 {
        let conv3 = c * c * 9 + c;
        let ca = (2 * c) * (2 * c / r) + 2 * c / r + (2 * c / r) * c + c;
        let mcb = 4 * conv3 + 2 * ca;
        groups * (blocks * mcb + 2 * conv3)
    }

    #[test]
    fn published_sizes_are_reproduced_within_tolerance() {
        let expectations = [
            (g_b(5, 5), 8.0e6),
            (g_b(4, 8), 9.0e6),
            (g_b(5, 10), 11.7e6),
            (g_b(8, 8), 14.1e6),
            (g_b(10, 10), 19.7e6),
        ];
        for (cfg, expected) in expectations {
            let count = param_count(&cfg).unwrap() as f64;
            let rel = (count - expected).abs() / expected;
            assert!(
                rel <= 0.08,
                "G{}B{}: {count} vs {expected} ({:.1}% off)",
                cfg.num_groups,
                cfg.blocks_per_group,
                rel * 100.0
            );
        }
    }

    #[test]
    fn marginal_costs_match_the_analytic_oracle() {
        let delta_g = param_count(&g_b(10, 10)).unwrap() - param_count(&g_b(5, 10)).unwrap();
        let oracle_g = block_and_tail_oracle(64, 16, 10, 10) - block_and_tail_oracle(64, 16, 5, 10);
        assert_eq!(delta_g, oracle_g);
        assert!((delta_g as f64 - 8.0e6).abs() / 8.0e6 <= 0.08);

        let delta_b = param_count(&g_b(8, 8)).unwrap() - param_count(&g_b(4, 8)).unwrap();
        let oracle_b = block_and_tail_oracle(64, 16, 8, 8) - block_and_tail_oracle(64, 16, 4, 8);
        assert_eq!(delta_b, oracle_b);
        assert!((delta_b as f64 - 5.1e6).abs() / 5.1e6 <= 0.08);
    }

    #[test]
    fn count_is_affine_in_blocks_and_groups() {
        let f = |g, b| param_count(&g_b(g, b)).unwrap() as i64;
        // Affine in blocks for fixed groups.
        assert_eq!(f(5, 7) - f(5, 6), f(5, 6) - f(5, 5));
        // Affine in groups for fixed blocks.
        assert_eq!(f(7, 8) - f(6, 8), f(6, 8) - f(5, 8));
    }

    #[test]
    fn partitions_are_total_and_sum_to_the_count() {
        for ablation in Ablation::ALL {
            let mut cfg = ModelConfig::tiny(2, 8, 2, 2);
            cfg.ablation = ablation;
            let (s, d, f) = partition_counts(&cfg).unwrap();
            assert_eq!(s + d + f, param_count(&cfg).unwrap(), "{}", ablation.name());
            if ablation == Ablation::NoDecomposition {
                assert_eq!(s + d, 0, "single path has no per-component weights");
            } else {
                assert!(s > 0 && d > 0 && f > 0);
            }
        }
    }

    #[test]
    fn init_is_deterministic_and_zero_biased() {
        let cfg = ModelConfig::tiny(2, 8, 1, 1);
        let a = ModelParams::init(cfg, 5).unwrap();
        let b = ModelParams::init(cfg, 5).unwrap();
        let c = ModelParams::init(cfg, 6).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x, y);
        }
        assert!(a.values().iter().zip(c.values()).any(|(x, y)| x != y));
        for (spec, v) in a.layout().iter().zip(a.values()) {
            if spec.shape.len() == 1 {
                assert!(v.iter().all(|x| *x == 0.0), "bias {} not zero", spec.name);
            }
        }
        assert_eq!(a.total_scalars(), param_count(&cfg).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ModelConfig::new(4);
        cfg.ca_reduction = 7;
        assert!(matches!(
            param_count(&cfg),
            Err(crate::error::ModelError::InvalidConfig(_))
        ));
        let mut cfg = ModelConfig::new(4);
        cfg.scale = 5;
        assert!(matches!(
            param_count(&cfg),
            Err(crate::error::ModelError::UnsupportedScale(5))
        ));
        let mut cfg = ModelConfig::new(2);
        cfg.num_groups = 0;
        assert!(param_count(&cfg).is_err());
    }
}
