//! Adaptive-moment optimizer with bias correction. The second-moment decay
//! follows the published training settings (0.99 rather than the textbook
//! 0.999).

use ndarray::ArrayD;

use crate::model::ModelParams;
use crate::nn::graph::ParamGrads;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.99;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates, shape-aligned with the parameter store.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<ArrayD<f64>> = params
            .values()
            .iter()
            .map(|p| ArrayD::zeros(p.raw_dim()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn from_moments(m: Vec<ArrayD<f64>>, v: Vec<ArrayD<f64>>, t: u64) -> Self {
        Self { m, v, t }
    }

    /// One update. Parameters without a gradient this step keep decaying
    /// moments but see no spurious movement once those reach zero.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ParamGrads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (i, value) in params.values_mut().iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            match &grads[i] {
                Some(g) => {
                    ndarray::Zip::from(value)
                        .and(m)
                        .and(v)
                        .and(g)
                        .for_each(|p, m, v, &g| {
                            *m = BETA1 * *m + (1.0 - BETA1) * g;
                            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                            let m_hat = *m / bc1;
                            let v_hat = *v / bc2;
                            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                        });
                }
                None => {
                    ndarray::Zip::from(value).and(m).and(v).for_each(|p, m, v| {
                        *m *= BETA1;
                        *v *= BETA2;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                    });
                }
            }
        }
    }

    pub fn quantize_f32(&mut self) {
        for arr in self.m.iter_mut().chain(self.v.iter_mut()) {
            arr.mapv_inplace(|x| f64::from(x as f32));
        }
    }
}
