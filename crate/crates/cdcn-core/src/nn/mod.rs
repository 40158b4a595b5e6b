//! Minimal f64 CNN engine: dense convolution primitives plus a small
//! reverse-mode graph covering exactly the operations the network uses.

pub mod graph;
pub mod tensor;
