//! The training loop: one logical controller owns the state; per-sample
//! gradient work fans out across threads and is reduced in batch order, so
//! runs are bit-reproducible for a fixed seed at any worker count.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::TrainError;
use crate::model::net::{cdcn_forward_full, image_to_tensor};
use crate::model::{
    build_net, load_checkpoint, save_checkpoint, ModelConfig, ModelParams, Net, TrainBlob,
};
use crate::nn::graph::{backward, NodeId, ParamGrads};
use crate::protocol::load_dataset;

use super::adam::AdamState;
use super::sampler::{sample_patch, PatchSample};
use super::{lr_schedule, TrainConfig};

/// Mutable training state: parameters, optimizer moments, iteration
/// counter, and the sampling RNG.
pub struct TrainState {
    pub params: ModelParams,
    pub opt: AdamState,
    pub iter: u64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(model_cfg: ModelConfig, train_cfg: &TrainConfig) -> Result<Self, TrainError> {
        train_cfg.validate(&model_cfg)?;
        let params = ModelParams::init(model_cfg, train_cfg.seed)?;
        let opt = AdamState::new(&params);
        // The sampler stream is decorrelated from the init stream.
        let rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(0x9E37_79B9));
        Ok(Self {
            params,
            opt,
            iter: 0,
            rng,
        })
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self, TrainError> {
        let loaded = load_checkpoint(path)?;
        let blob = loaded.train.ok_or_else(|| {
            TrainError::InvalidConfig(format!(
                "{}: checkpoint has no training state to resume from",
                path.display()
            ))
        })?;
        let mut rng = ChaCha8Rng::from_seed(blob.rng_seed);
        rng.set_word_pos(blob.rng_word_pos);
        let opt = AdamState::from_moments(blob.adam_m, blob.adam_v, blob.iter);
        Ok(Self {
            params: loaded.params,
            opt,
            iter: blob.iter,
            rng,
        })
    }

    /// Rounds parameters and moments through checkpoint precision so the
    /// live run continues from exactly what a resumed run would load.
    fn quantize_f32(&mut self) {
        self.params.quantize_f32();
        self.opt.quantize_f32();
    }

    fn save(&mut self, path: &Path) -> Result<(), TrainError> {
        self.quantize_f32();
        let blob = TrainBlob {
            iter: self.iter,
            rng_seed: self.rng.get_seed(),
            rng_word_pos: self.rng.get_word_pos(),
            adam_m: self.opt.m.clone(),
            adam_v: self.opt.v.clone(),
        };
        save_checkpoint(path, &self.params, Some(&blob))?;
        Ok(())
    }
}

/// Loss breakdown for one iteration; disabled or absent heads report their
/// L1 anyway (cost is negligible) but only enabled terms enter `total`.
#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub total: f64,
    pub structure: f64,
    pub detail: f64,
    pub sr: f64,
    pub lr: f64,
}

fn l1_with_seed(y: &Array3<f64>, target: &Array3<f64>) -> (f64, Array3<f64>) {
    debug_assert_eq!(y.dim(), target.dim());
    let n = y.len() as f64;
    let mut seed = Array3::zeros(y.dim());
    let mut acc = 0.0;
    ndarray::Zip::from(&mut seed)
        .and(y)
        .and(target)
        .for_each(|s, &a, &b| {
            let d = a - b;
            acc += d.abs();
            *s = if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        });
    (acc / n, seed)
}

struct SampleResult {
    structure: f64,
    detail: f64,
    sr: f64,
    grads: ParamGrads,
}

fn sample_pass(
    net: &Net,
    params: &ModelParams,
    sample: &PatchSample,
    cfg: &TrainConfig,
) -> SampleResult {
    let values = cdcn_forward_full(net, params, image_to_tensor(&sample.triple.lr));
    let mut seeds: Vec<(NodeId, Array3<f64>)> = Vec::new();

    let mut eval_head = |node: Option<NodeId>, target: &crate::image::Image, enabled: bool| {
        let Some(node) = node else { return 0.0 };
        let y = values[node].as_ref().expect("forward kept all values");
        let (loss, seed) = l1_with_seed(y, &image_to_tensor(target));
        if enabled {
            seeds.push((node, seed));
        }
        loss
    };

    let structure = eval_head(
        net.nodes.s_hat,
        &sample.triple.structure,
        cfg.loss_toggles.structure,
    );
    let detail = eval_head(
        net.nodes.d_hat,
        &sample.triple.detail,
        cfg.loss_toggles.detail,
    );
    let sr = eval_head(Some(net.nodes.sr), &sample.hr, cfg.loss_toggles.sr);

    let grads = backward(&net.graph, params.values(), &values, seeds);
    SampleResult {
        structure,
        detail,
        sr,
        grads,
    }
}

/// One optimizer step over a batch: forward, three-term L1, reverse-mode
/// gradients, moment update at the scheduled rate.
pub fn train_step(
    state: &mut TrainState,
    batch: &[PatchSample],
    cfg: &TrainConfig,
) -> Result<StepLosses, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::InvalidConfig("empty batch".into()));
    }
    let model_cfg = *state.params.cfg();
    cfg.validate(&model_cfg)?;
    let net = build_net(&model_cfg)?;
    let lr = lr_schedule(state.iter, cfg);

    let results: Vec<SampleResult> = {
        let params = &state.params;
        batch
            .par_iter()
            .map(|sample| sample_pass(&net, params, sample, cfg))
            .collect()
    };

    // Deterministic reduction in batch order.
    let scale = 1.0 / batch.len() as f64;
    let mut grads: ParamGrads = vec![None; state.params.values().len()];
    let (mut l_s, mut l_d, mut l_sr) = (0.0, 0.0, 0.0);
    for r in &results {
        l_s += r.structure * scale;
        l_d += r.detail * scale;
        l_sr += r.sr * scale;
    }
    for r in results {
        for (slot, g) in grads.iter_mut().zip(r.grads) {
            if let Some(g) = g {
                match slot {
                    Some(acc) => *acc += &g,
                    None => *slot = Some(g),
                }
            }
        }
    }
    for slot in grads.iter_mut().flatten() {
        slot.mapv_inplace(|v| v * scale);
    }

    let mut total = 0.0;
    if cfg.loss_toggles.structure {
        total += l_s;
    }
    if cfg.loss_toggles.detail {
        total += l_d;
    }
    if cfg.loss_toggles.sr {
        total += l_sr;
    }
    if !total.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            iter: state.iter + 1,
            value: total,
        });
    }

    state.opt.step(&mut state.params, &grads, lr);
    state.iter += 1;
    Ok(StepLosses {
        total,
        structure: l_s,
        detail: l_d,
        sr: l_sr,
        lr,
    })
}

#[derive(Debug)]
pub struct TrainSummary {
    pub first_loss: f64,
    pub final_loss: f64,
    pub iters_run: u64,
    pub loss_log: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

fn checkpoint_path(out_dir: &Path, iter: u64) -> PathBuf {
    out_dir.join(format!("ckpt_{iter:07}.cdcn"))
}

fn run_loop(
    mut state: TrainState,
    cfg: &TrainConfig,
    pool: &[crate::image::Image],
    out_dir: &Path,
) -> Result<TrainSummary, TrainError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| crate::error::IoError::new(out_dir, e))?;
    let log_path = out_dir.join("loss.log");
    let log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| crate::error::IoError::new(&log_path, e))?;
    let mut log = std::io::BufWriter::new(log_file);

    let mut checkpoints = Vec::new();
    let start = checkpoint_path(out_dir, state.iter);
    state.save(&start)?;
    checkpoints.push(start);

    let mut first_loss = None;
    let mut final_loss = 0.0;
    let mut last_saved = state.iter;
    while state.iter < cfg.total_iters {
        let batch: Vec<PatchSample> = (0..cfg.batch_size)
            .map(|_| sample_patch(pool, cfg, &mut state.rng))
            .collect::<Result<_, _>>()?;
        let losses = train_step(&mut state, &batch, cfg)?;
        writeln!(
            log,
            "{} {:.8e} {:.8e} {:.8e} {:.8e} {:.8e}",
            state.iter, losses.total, losses.structure, losses.detail, losses.sr, losses.lr
        )
        .map_err(|e| crate::error::IoError::new(&log_path, e))?;
        first_loss.get_or_insert(losses.total);
        final_loss = losses.total;

        if state.iter.is_multiple_of(cfg.checkpoint_every) {
            let path = checkpoint_path(out_dir, state.iter);
            state.save(&path)?;
            checkpoints.push(path);
            last_saved = state.iter;
        }
    }
    log.flush()
        .map_err(|e| crate::error::IoError::new(&log_path, e))?;
    if last_saved != state.iter {
        let path = checkpoint_path(out_dir, state.iter);
        state.save(&path)?;
        checkpoints.push(path);
    }
    Ok(TrainSummary {
        first_loss: first_loss.unwrap_or(0.0),
        final_loss,
        iters_run: state.iter,
        loss_log: log_path,
        checkpoints,
    })
}

/// Trains from scratch on every PNG under `data_dir`, writing checkpoints
/// and the per-iteration loss log into `out_dir`.
pub fn train(
    train_cfg: &TrainConfig,
    model_cfg: ModelConfig,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<TrainSummary, TrainError> {
    let state = TrainState::new(model_cfg, train_cfg)?;
    let pool: Vec<_> = load_dataset(data_dir)
        .map_err(|e| TrainError::InvalidConfig(format!("loading {}: {e}", data_dir.display())))?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    run_loop(state, train_cfg, &pool, out_dir)
}

/// Continues training from a checkpoint written by [`train`]; with the
/// original config this reproduces the uninterrupted loss sequence.
pub fn resume(
    checkpoint: &Path,
    train_cfg: &TrainConfig,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<TrainSummary, TrainError> {
    let state = TrainState::from_checkpoint(checkpoint)?;
    train_cfg.validate(state.params.cfg())?;
    let pool: Vec<_> = load_dataset(data_dir)
        .map_err(|e| TrainError::InvalidConfig(format!("loading {}: {e}", data_dir.display())))?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    run_loop(state, train_cfg, &pool, out_dir)
}

/// Gradient presence per partition for one batch, used by coverage tests.
pub fn gradient_partition_coverage(
    state: &TrainState,
    batch: &[PatchSample],
    cfg: &TrainConfig,
) -> Result<(bool, bool, bool), TrainError> {
    let model_cfg = *state.params.cfg();
    let net = build_net(&model_cfg)?;
    let mut grads: ParamGrads = vec![None; state.params.values().len()];
    for sample in batch {
        let r = sample_pass(&net, &state.params, sample, cfg);
        for (slot, g) in grads.iter_mut().zip(r.grads) {
            if let Some(g) = g {
                match slot {
                    Some(acc) => *acc += &g,
                    None => *slot = Some(g),
                }
            }
        }
    }
    let mut cover = (false, false, false);
    let nonzero = |g: &Option<ArrayD<f64>>| g.as_ref().is_some_and(|g| g.iter().any(|v| *v != 0.0));
    for (spec, g) in net.layout.iter().zip(&grads) {
        match spec.theta {
            crate::model::Theta::Structure => cover.0 |= nonzero(g),
            crate::model::Theta::Detail => cover.1 |= nonzero(g),
            crate::model::Theta::Fusion => cover.2 |= nonzero(g),
        }
    }
    Ok(cover)
}
