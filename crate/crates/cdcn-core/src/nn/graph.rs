//! Reverse-mode computation graph over (C, H, W) grids.
//!
//! A [`Graph`] is the wiring only; values live outside it, so one graph can
//! serve many forward passes over shared read-only parameters. Backward
//! walks the node list in reverse, accumulating gradients for every node
//! and every referenced parameter.

use ndarray::{Array3, ArrayD, Axis, Ix1, Ix4};

use super::tensor::{conv2d, conv2d_backward, pixel_shuffle, pixel_shuffle_backward};

pub type NodeId = usize;
pub type ParamId = usize;

#[derive(Debug, Clone)]
pub enum Op {
    Input,
    /// Same-padding stride-1 convolution; `w` is (out_c, in_c, k, k).
    Conv { x: NodeId, w: ParamId, b: ParamId },
    LeakyRelu { x: NodeId, slope: f64 },
    Sigmoid { x: NodeId },
    Add { a: NodeId, b: NodeId },
    /// Channel concatenation, in order.
    ConcatC { xs: Vec<NodeId> },
    /// Per-channel gating: `gate` is (C, 1, 1), broadcast over space.
    MulGate { x: NodeId, gate: NodeId },
    /// (C, H, W) -> (C, 1, 1) spatial mean.
    GlobalAvgPool { x: NodeId },
    /// (C*r*r, H, W) -> (C, rH, rW).
    PixelShuffle { x: NodeId, factor: usize },
}

#[derive(Debug, Default)]
pub struct Graph {
    pub ops: Vec<Op>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.ops.push(op);
        self.ops.len() - 1
    }

    pub fn input(&mut self) -> NodeId {
        self.push(Op::Input)
    }

    pub fn conv(&mut self, x: NodeId, w: ParamId, b: ParamId) -> NodeId {
        self.push(Op::Conv { x, w, b })
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        self.push(Op::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add { a, b })
    }

    pub fn concat(&mut self, xs: Vec<NodeId>) -> NodeId {
        self.push(Op::ConcatC { xs })
    }

    pub fn mul_gate(&mut self, x: NodeId, gate: NodeId) -> NodeId {
        self.push(Op::MulGate { x, gate })
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        self.push(Op::GlobalAvgPool { x })
    }

    pub fn pixel_shuffle(&mut self, x: NodeId, factor: usize) -> NodeId {
        self.push(Op::PixelShuffle { x, factor })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn inputs_of(op: &Op) -> Vec<NodeId> {
        match op {
            Op::Input => vec![],
            Op::Conv { x, .. }
            | Op::LeakyRelu { x, .. }
            | Op::Sigmoid { x }
            | Op::GlobalAvgPool { x }
            | Op::PixelShuffle { x, .. } => vec![*x],
            Op::Add { a, b } => vec![*a, *b],
            Op::MulGate { x, gate } => vec![*x, *gate],
            Op::ConcatC { xs } => xs.clone(),
        }
    }
}

fn eval_op(op: &Op, params: &[ArrayD<f64>], values: &[Option<Array3<f64>>]) -> Array3<f64> {
    let val = |id: NodeId| values[id].as_ref().expect("value computed before use");
    match op {
        Op::Input => unreachable!("inputs are seeded before execution"),
        Op::Conv { x, w, b } => {
            let w4 = params[*w].view().into_dimensionality::<Ix4>().unwrap();
            let b1 = params[*b].view().into_dimensionality::<Ix1>().unwrap();
            conv2d(&val(*x).view(), &w4, &b1)
        }
        Op::LeakyRelu { x, slope } => val(*x).mapv(|v| if v > 0.0 { v } else { slope * v }),
        Op::Sigmoid { x } => val(*x).mapv(|v| 1.0 / (1.0 + (-v).exp())),
        Op::Add { a, b } => val(*a) + val(*b),
        Op::ConcatC { xs } => {
            let views: Vec<_> = xs.iter().map(|&id| val(id).view()).collect();
            ndarray::concatenate(Axis(0), &views).expect("matching spatial dims")
        }
        Op::MulGate { x, gate } => {
            let x = val(*x);
            let g = val(*gate);
            debug_assert_eq!(g.dim().1, 1);
            debug_assert_eq!(g.dim().2, 1);
            let mut out = x.clone();
            for (mut plane, gc) in out.axis_iter_mut(Axis(0)).zip(g.axis_iter(Axis(0))) {
                let gv = gc[[0, 0]];
                plane.mapv_inplace(|v| v * gv);
            }
            out
        }
        Op::GlobalAvgPool { x } => {
            let x = val(*x);
            let (c, h, w) = x.dim();
            let mut out = Array3::zeros((c, 1, 1));
            for (ci, plane) in x.axis_iter(Axis(0)).enumerate() {
                out[[ci, 0, 0]] = plane.sum() / (h * w) as f64;
            }
            out
        }
        Op::PixelShuffle { x, factor } => pixel_shuffle(&val(*x).view(), *factor),
    }
}

/// Runs the graph keeping every intermediate value (training mode).
pub fn forward_full(
    graph: &Graph,
    params: &[ArrayD<f64>],
    inputs: &[(NodeId, Array3<f64>)],
) -> Vec<Option<Array3<f64>>> {
    let mut values: Vec<Option<Array3<f64>>> = vec![None; graph.len()];
    for (id, v) in inputs {
        values[*id] = Some(v.clone());
    }
    for (id, op) in graph.ops.iter().enumerate() {
        if matches!(op, Op::Input) {
            assert!(values[id].is_some(), "input node {id} not seeded");
            continue;
        }
        values[id] = Some(eval_op(op, params, &values));
    }
    values
}

/// Runs the graph dropping intermediates as soon as no later op needs them
/// (inference mode). Nodes listed in `keep` survive to the result.
pub fn forward_prune(
    graph: &Graph,
    params: &[ArrayD<f64>],
    inputs: &[(NodeId, Array3<f64>)],
    keep: &[NodeId],
) -> Vec<Option<Array3<f64>>> {
    let mut last_use = vec![0usize; graph.len()];
    for (id, op) in graph.ops.iter().enumerate() {
        for input in Graph::inputs_of(op) {
            last_use[input] = id;
        }
    }
    for &id in keep {
        last_use[id] = usize::MAX;
    }
    let mut values: Vec<Option<Array3<f64>>> = vec![None; graph.len()];
    for (id, v) in inputs {
        values[*id] = Some(v.clone());
    }
    for (id, op) in graph.ops.iter().enumerate() {
        if !matches!(op, Op::Input) {
            values[id] = Some(eval_op(op, params, &values));
        }
        for input in Graph::inputs_of(op) {
            if last_use[input] == id {
                values[input] = None;
            }
        }
        if last_use[id] < id {
            // Never consumed and not kept.
            if !keep.contains(&id) {
                values[id] = None;
            }
        }
    }
    values
}

/// Parameter gradients produced by [`backward`], aligned with the store.
pub type ParamGrads = Vec<Option<ArrayD<f64>>>;

/// Reverse pass: seeds are (node, dL/dnode) pairs; returns dL/dparam for
/// every parameter reached. `values` must come from [`forward_full`].
pub fn backward(
    graph: &Graph,
    params: &[ArrayD<f64>],
    values: &[Option<Array3<f64>>],
    seeds: Vec<(NodeId, Array3<f64>)>,
) -> ParamGrads {
    let mut node_grads: Vec<Option<Array3<f64>>> = vec![None; graph.len()];
    for (id, g) in seeds {
        accumulate3(&mut node_grads[id], g);
    }
    let mut param_grads: ParamGrads = vec![None; params.len()];
    let val = |id: NodeId| values[id].as_ref().expect("training values retained");

    for id in (0..graph.len()).rev() {
        let Some(dy) = node_grads[id].take() else {
            continue;
        };
        match &graph.ops[id] {
            Op::Input => {}
            Op::Conv { x, w, b } => {
                let w4 = params[*w].view().into_dimensionality::<Ix4>().unwrap();
                let (dx, dw, db) = conv2d_backward(&val(*x).view(), &w4, &dy.view());
                accumulate3(&mut node_grads[*x], dx);
                accumulate_d(&mut param_grads[*w], dw.into_dyn());
                accumulate_d(&mut param_grads[*b], db.into_dyn());
            }
            Op::LeakyRelu { x, slope } => {
                let mut dx = dy;
                ndarray::Zip::from(&mut dx).and(val(*x)).for_each(|g, &v| {
                    if v <= 0.0 {
                        *g *= slope;
                    }
                });
                accumulate3(&mut node_grads[*x], dx);
            }
            Op::Sigmoid { x } => {
                let y = val(id);
                let mut dx = dy;
                ndarray::Zip::from(&mut dx).and(y).for_each(|g, &yv| {
                    *g *= yv * (1.0 - yv);
                });
                accumulate3(&mut node_grads[*x], dx);
            }
            Op::Add { a, b } => {
                accumulate3(&mut node_grads[*a], dy.clone());
                accumulate3(&mut node_grads[*b], dy);
            }
            Op::ConcatC { xs } => {
                let mut offset = 0;
                for &xid in xs {
                    let c = val(xid).dim().0;
                    let slice = dy.slice(ndarray::s![offset..offset + c, .., ..]).to_owned();
                    accumulate3(&mut node_grads[xid], slice);
                    offset += c;
                }
            }
            Op::MulGate { x, gate } => {
                let xv = val(*x);
                let gv = val(*gate);
                let (c, _, _) = xv.dim();
                let mut dx = dy.clone();
                let mut dgate = Array3::zeros((c, 1, 1));
                for ci in 0..c {
                    let g = gv[[ci, 0, 0]];
                    let mut plane = dx.index_axis_mut(Axis(0), ci);
                    plane.mapv_inplace(|v| v * g);
                    dgate[[ci, 0, 0]] = dy
                        .index_axis(Axis(0), ci)
                        .iter()
                        .zip(xv.index_axis(Axis(0), ci).iter())
                        .map(|(a, b)| a * b)
                        .sum();
                }
                accumulate3(&mut node_grads[*x], dx);
                accumulate3(&mut node_grads[*gate], dgate);
            }
            Op::GlobalAvgPool { x } => {
                let (c, h, w) = val(*x).dim();
                let scale = 1.0 / (h * w) as f64;
                let mut dx = Array3::zeros((c, h, w));
                for ci in 0..c {
                    let g = dy[[ci, 0, 0]] * scale;
                    dx.index_axis_mut(Axis(0), ci).fill(g);
                }
                accumulate3(&mut node_grads[*x], dx);
            }
            Op::PixelShuffle { x, factor } => {
                accumulate3(
                    &mut node_grads[*x],
                    pixel_shuffle_backward(&dy.view(), *factor),
                );
            }
        }
    }
    param_grads
}

fn accumulate3(slot: &mut Option<Array3<f64>>, g: Array3<f64>) {
    match slot {
        Some(existing) => *existing += &g,
        None => *slot = Some(g),
    }
}

fn accumulate_d(slot: &mut Option<ArrayD<f64>>, g: ArrayD<f64>) {
    match slot {
        Some(existing) => *existing += &g,
        None => *slot = Some(g),
    }
}
