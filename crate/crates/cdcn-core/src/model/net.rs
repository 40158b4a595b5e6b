//! Network graph builder and forward evaluation.
//!
//! Dataflow: a 3x3 convolution lifts the LR image to C channels (F_in); a
//! decomposition module splits it into structure/detail feature paths; N
//! residual groups of M collaboration blocks refine the pair; an
//! asymmetric global residual re-injects F_in (structure) and the initial
//! detail feature; a multi-scale fusion module merges both paths; three
//! sub-pixel heads reconstruct the structure, detail and SR images.

use ndarray::Array3;

use super::params::{ModelParams, ParamSpec, Theta};
use super::{Ablation, ModelConfig};
use crate::error::{EvalError, ModelError};
use crate::image::Image;
use crate::nn::graph::{forward_full, forward_prune, Graph, NodeId, ParamId};
use crate::protocol::{EvalCase, Restorer};

/// Node handles into the built graph, for forward passes and tests that
/// inspect internal features.
#[derive(Debug, Clone)]
pub struct NetNodes {
    pub input: NodeId,
    /// Shallow feature F_in.
    pub f_in: NodeId,
    /// Initial structure / detail features out of the decomposition module.
    pub s0: NodeId,
    pub d0: Option<NodeId>,
    /// Feature pair after the global residual.
    pub trunk_s: NodeId,
    pub trunk_d: Option<NodeId>,
    /// Fused feature entering the SR head.
    pub f_out: NodeId,
    pub sr: NodeId,
    pub s_hat: Option<NodeId>,
    pub d_hat: Option<NodeId>,
}

pub struct Net {
    pub graph: Graph,
    pub nodes: NetNodes,
    pub layout: Vec<ParamSpec>,
}

struct Builder {
    cfg: ModelConfig,
    graph: Graph,
    layout: Vec<ParamSpec>,
}

impl Builder {
    fn param(&mut self, name: String, shape: Vec<usize>, theta: Theta) -> ParamId {
        self.layout.push(ParamSpec { name, shape, theta });
        self.layout.len() - 1
    }

    fn conv(
        &mut self,
        x: NodeId,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        theta: Theta,
    ) -> NodeId {
        let w = self.param(format!("{name}.w"), vec![out_c, in_c, k, k], theta);
        let b = self.param(format!("{name}.b"), vec![out_c], theta);
        self.graph.conv(x, w, b)
    }

    fn lrelu(&mut self, x: NodeId) -> NodeId {
        self.graph.leaky_relu(x, self.cfg.leaky_slope)
    }

    /// conv3x3 -> LeakyReLU -> conv3x3 (no residual).
    fn conv_pair(&mut self, x: NodeId, name: &str, theta: Theta) -> NodeId {
        let c = self.cfg.channels;
        let h = self.conv(x, &format!("{name}.0"), c, c, 3, theta);
        let h = self.lrelu(h);
        self.conv(h, &format!("{name}.1"), c, c, 3, theta)
    }

    /// conv-LeakyReLU-conv with a residual connection.
    fn extraction_block(&mut self, x: NodeId, name: &str, theta: Theta) -> NodeId {
        let h = self.conv_pair(x, name, theta);
        self.graph.add(x, h)
    }

    /// Squeeze (global pool) -> 1x1 reduce -> LeakyReLU -> 1x1 expand ->
    /// sigmoid, emitting a per-channel gate in (0, 1).
    fn channel_attention(
        &mut self,
        x: NodeId,
        name: &str,
        in_c: usize,
        out_c: usize,
        theta: Theta,
    ) -> NodeId {
        let mid = (in_c / self.cfg.ca_reduction).max(1);
        let pooled = self.graph.global_avg_pool(x);
        let h = self.conv(pooled, &format!("{name}.0"), in_c, mid, 1, theta);
        let h = self.lrelu(h);
        let h = self.conv(h, &format!("{name}.1"), mid, out_c, 1, theta);
        self.graph.sigmoid(h)
    }

    /// Mutual collaboration block and its comparison variants.
    fn mcb(&mut self, s_in: NodeId, d_in: NodeId, name: &str) -> (NodeId, NodeId) {
        let c = self.cfg.channels;
        let x_s = self.conv_pair(s_in, &format!("{name}.s"), Theta::Structure);
        let x_d = self.conv_pair(d_in, &format!("{name}.d"), Theta::Detail);
        let (delta_s, delta_d) = match self.cfg.ablation {
            Ablation::Full => {
                let x = self.graph.concat(vec![x_s, x_d]);
                let a_s =
                    self.channel_attention(x, &format!("{name}.ca_s"), 2 * c, c, Theta::Structure);
                let a_d =
                    self.channel_attention(x, &format!("{name}.ca_d"), 2 * c, c, Theta::Detail);
                (self.graph.mul_gate(x_s, a_s), self.graph.mul_gate(x_d, a_d))
            }
            Ablation::NoCollab => {
                let a_s =
                    self.channel_attention(x_s, &format!("{name}.ca_s"), c, c, Theta::Structure);
                let a_d = self.channel_attention(x_d, &format!("{name}.ca_d"), c, c, Theta::Detail);
                (self.graph.mul_gate(x_s, a_s), self.graph.mul_gate(x_d, a_d))
            }
            Ablation::PlainBlock => (x_s, x_d),
            Ablation::FuseConcat => {
                let x = self.graph.concat(vec![x_s, x_d]);
                let f_s = self.conv(x, &format!("{name}.fuse_s"), 2 * c, c, 1, Theta::Structure);
                let f_d = self.conv(x, &format!("{name}.fuse_d"), 2 * c, c, 1, Theta::Detail);
                (f_s, f_d)
            }
            Ablation::FuseAdd => {
                let from_d = self.conv(x_d, &format!("{name}.from_d"), c, c, 1, Theta::Structure);
                let from_s = self.conv(x_s, &format!("{name}.from_s"), c, c, 1, Theta::Detail);
                let f_s = self.graph.add(x_s, from_d);
                let f_d = self.graph.add(x_d, from_s);
                (f_s, f_d)
            }
            Ablation::NoDecomposition => unreachable!("single-path build"),
        };
        (
            self.graph.add(s_in, delta_s),
            self.graph.add(d_in, delta_d),
        )
    }

    /// Single-path block for the no-decomposition variant: same extraction
    /// depth, channel attention over its own features.
    fn single_block(&mut self, f_in: NodeId, name: &str) -> NodeId {
        let c = self.cfg.channels;
        let x = self.conv_pair(f_in, &format!("{name}.s"), Theta::Fusion);
        let a = self.channel_attention(x, &format!("{name}.ca"), c, c, Theta::Fusion);
        let gated = self.graph.mul_gate(x, a);
        self.graph.add(f_in, gated)
    }

    /// Multi-scale fusion: 3/5/7 extraction on F_s, F_d and their sum;
    /// per-size cross-input fusion; 1x1 reduction; six densely connected
    /// 3x3 layers; 1x1 compression; residual from F_s + F_d.
    fn msfm(&mut self, inputs: &[NodeId], f_hat: NodeId) -> NodeId {
        let c = self.cfg.channels;
        let n_in = inputs.len();
        let mut per_size = Vec::new();
        for k in [3usize, 5, 7] {
            let mut branch = Vec::new();
            for (i, &input) in inputs.iter().enumerate() {
                let e = self.conv(
                    input,
                    &format!("msfm.extract{i}.k{k}"),
                    c,
                    c,
                    k,
                    Theta::Fusion,
                );
                branch.push(self.lrelu(e));
            }
            let fused_in = if branch.len() == 1 {
                branch[0]
            } else {
                self.graph.concat(branch)
            };
            let fused = self.conv(
                fused_in,
                &format!("msfm.fuse.k{k}"),
                n_in * c,
                c,
                k,
                Theta::Fusion,
            );
            per_size.push(fused);
        }
        let stacked = self.graph.concat(per_size);
        let f_f = self.conv(stacked, "msfm.reduce", 3 * c, c, 1, Theta::Fusion);

        let mut dense = vec![f_f];
        for j in 0..6 {
            let input = if dense.len() == 1 {
                dense[0]
            } else {
                self.graph.concat(dense.clone())
            };
            let h = self.conv(
                input,
                &format!("msfm.dense{j}"),
                (j + 1) * c,
                c,
                3,
                Theta::Fusion,
            );
            dense.push(self.lrelu(h));
        }
        let all = self.graph.concat(dense);
        let enhanced = self.conv(all, "msfm.compress", 7 * c, c, 1, Theta::Fusion);
        self.graph.add(f_hat, enhanced)
    }

    /// Sub-pixel reconstruction head: x2 stages (or one x3 stage) of
    /// conv + pixel rearrangement, then a 3x3 projection to RGB.
    fn upsample_head(&mut self, f: NodeId, name: &str, theta: Theta) -> Result<NodeId, ModelError> {
        let c = self.cfg.channels;
        let mut h = f;
        match self.cfg.scale {
            2 => {
                let e = self.conv(h, &format!("{name}.up0"), c, 4 * c, 3, theta);
                h = self.graph.pixel_shuffle(e, 2);
            }
            3 => {
                let e = self.conv(h, &format!("{name}.up0"), c, 9 * c, 3, theta);
                h = self.graph.pixel_shuffle(e, 3);
            }
            4 => {
                for stage in 0..2 {
                    let e = self.conv(h, &format!("{name}.up{stage}"), c, 4 * c, 3, theta);
                    h = self.graph.pixel_shuffle(e, 2);
                }
            }
            other => return Err(ModelError::UnsupportedScale(other)),
        }
        Ok(self.conv(h, &format!("{name}.out"), c, 3, 3, theta))
    }
}

/// Builds the graph and the parameter layout for a config.
pub fn build_net(cfg: &ModelConfig) -> Result<Net, ModelError> {
    cfg.validate()?;
    let mut b = Builder {
        cfg: *cfg,
        graph: Graph::new(),
        layout: Vec::new(),
    };
    let c = cfg.channels;
    let input = b.graph.input();
    let f_in = b.conv(input, "shallow", 3, c, 3, Theta::Fusion);

    let nodes = if cfg.ablation == Ablation::NoDecomposition {
        let f0 = b.extraction_block(f_in, "cdm.s", Theta::Fusion);
        let mut f = f0;
        for n in 0..cfg.num_groups {
            let group_in = f;
            for m in 0..cfg.blocks_per_group {
                f = b.single_block(f, &format!("rg{n}.mcb{m}"));
            }
            let tail = b.conv(f, &format!("rg{n}.tail_s"), c, c, 3, Theta::Fusion);
            f = b.graph.add(group_in, tail);
        }
        let global = b.conv(f, "global_s", c, c, 3, Theta::Fusion);
        let trunk = b.graph.add(f_in, global);
        let f_out = b.msfm(&[trunk], trunk);
        let sr = b.upsample_head(f_out, "head.sr", Theta::Fusion)?;
        NetNodes {
            input,
            f_in,
            s0: f0,
            d0: None,
            trunk_s: trunk,
            trunk_d: None,
            f_out,
            sr,
            s_hat: None,
            d_hat: None,
        }
    } else {
        let s0 = b.extraction_block(f_in, "cdm.s", Theta::Structure);
        let d0 = b.extraction_block(f_in, "cdm.d", Theta::Detail);
        let (mut s, mut d) = (s0, d0);
        for n in 0..cfg.num_groups {
            let (group_s, group_d) = (s, d);
            for m in 0..cfg.blocks_per_group {
                (s, d) = b.mcb(s, d, &format!("rg{n}.mcb{m}"));
            }
            let tail_s = b.conv(s, &format!("rg{n}.tail_s"), c, c, 3, Theta::Structure);
            let tail_d = b.conv(d, &format!("rg{n}.tail_d"), c, c, 3, Theta::Detail);
            s = b.graph.add(group_s, tail_s);
            d = b.graph.add(group_d, tail_d);
        }
        // Asymmetric global residual: structure skips from the shallow
        // feature, detail from its initial decomposition feature.
        let global_s = b.conv(s, "global_s", c, c, 3, Theta::Structure);
        let global_d = b.conv(d, "global_d", c, c, 3, Theta::Detail);
        let trunk_s = b.graph.add(f_in, global_s);
        let trunk_d = b.graph.add(d0, global_d);

        let f_hat = b.graph.add(trunk_s, trunk_d);
        let f_out = b.msfm(&[trunk_s, trunk_d, f_hat], f_hat);

        let sr = b.upsample_head(f_out, "head.sr", Theta::Fusion)?;
        let s_hat = b.upsample_head(trunk_s, "head.s", Theta::Structure)?;
        let d_hat = b.upsample_head(trunk_d, "head.d", Theta::Detail)?;
        NetNodes {
            input,
            f_in,
            s0,
            d0: Some(d0),
            trunk_s,
            trunk_d: Some(trunk_d),
            f_out,
            sr,
            s_hat: Some(s_hat),
            d_hat: Some(d_hat),
        }
    };

    Ok(Net {
        graph: b.graph,
        nodes,
        layout: b.layout,
    })
}

/// Reconstruction results at HR size. The component estimates are absent
/// for the single-path variant.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub sr: Image,
    pub structure_hat: Option<Image>,
    pub detail_hat: Option<Image>,
}

pub fn image_to_tensor(img: &Image) -> Array3<f64> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.data();
    Array3::from_shape_fn((c, h, w), |(ci, y, x)| src[[y, x, ci]])
}

pub fn tensor_to_image(t: &Array3<f64>) -> Image {
    let (c, h, w) = t.dim();
    Image::new(Array3::from_shape_fn((h, w, c), |(y, x, ci)| t[[ci, y, x]]))
}

/// Full forward pass. Pure: identical inputs and parameters produce
/// bit-identical outputs, so concurrent calls over shared params are safe.
pub fn cdcn_forward(lr: &Image, params: &ModelParams) -> Result<ModelOutput, ModelError> {
    if lr.channels() != 3 {
        return Err(ModelError::ChannelMismatch {
            expected: 3,
            got: lr.channels(),
        });
    }
    let net = build_net(params.cfg())?;
    let mut keep = vec![net.nodes.sr];
    keep.extend(net.nodes.s_hat);
    keep.extend(net.nodes.d_hat);
    let values = forward_prune(
        &net.graph,
        params.values(),
        &[(net.nodes.input, image_to_tensor(lr))],
        &keep,
    );
    let take = |id: NodeId| tensor_to_image(values[id].as_ref().expect("kept output"));
    Ok(ModelOutput {
        sr: take(net.nodes.sr),
        structure_hat: net.nodes.s_hat.map(take),
        detail_hat: net.nodes.d_hat.map(take),
    })
}

/// Forward pass retaining every intermediate, for training and tests.
pub fn cdcn_forward_full(
    net: &Net,
    params: &ModelParams,
    lr_tensor: Array3<f64>,
) -> Vec<Option<Array3<f64>>> {
    forward_full(
        &net.graph,
        params.values(),
        &[(net.nodes.input, lr_tensor)],
    )
}

/// [`Restorer`] over a trained parameter set.
pub struct CdcnRestorer {
    params: ModelParams,
}

impl CdcnRestorer {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl Restorer for CdcnRestorer {
    fn restore(&self, case: &EvalCase) -> Result<Image, EvalError> {
        if case.scale != self.params.cfg().scale {
            return Err(ModelError::CheckpointMismatch(format!(
                "model trained for x{}, protocol asked for x{}",
                self.params.cfg().scale,
                case.scale
            ))
            .into());
        }
        Ok(cdcn_forward(case.lr, &self.params)?.sr)
    }

    fn restore_with_detail(&self, case: &EvalCase) -> Result<(Image, Image), EvalError> {
        if case.scale != self.params.cfg().scale {
            return Err(ModelError::CheckpointMismatch(format!(
                "model trained for x{}, protocol asked for x{}",
                self.params.cfg().scale,
                case.scale
            ))
            .into());
        }
        let out = cdcn_forward(case.lr, &self.params)?;
        let detail = out.detail_hat.ok_or(ModelError::NoDetailHead)?;
        Ok((out.sr, detail))
    }
}
