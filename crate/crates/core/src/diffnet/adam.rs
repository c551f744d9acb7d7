//! Adaptive-moment optimizer with bias correction.

use crate::error::{Error, Result};

use super::params::{EncoderParams, Grads};

/// Per-parameter first/second moment accumulators and step counter.
#[derive(Debug, Clone)]
pub struct OptimState {
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimState {
    pub fn new(params: &EncoderParams, learning_rate: f64) -> Self {
        let zeros = || {
            params
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One descent step; rejects NaN gradients and guards the updated
/// parameters against non-finite values.
pub fn adam_step(params: &mut EncoderParams, grads: &Grads, opt: &mut OptimState) -> Result<()> {
    if !grads.matches_shape(params) {
        return Err(Error::Usage("gradient shape mismatch".into()));
    }
    if !grads.all_finite() {
        return Err(Error::Training(format!(
            "non-finite gradient at optimizer step {}",
            opt.step + 1
        )));
    }
    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);

    for (li, layer) in params.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[li];
        let (mw, mb) = &mut opt.m[li];
        let (vw, vb) = &mut opt.v[li];
        let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..theta.len() {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= opt.learning_rate * m_hat / (v_hat.sqrt() + opt.epsilon);
            }
        };
        update(&mut layer.w, gw, mw, vw);
        update(&mut layer.b, gb, mb, vb);
    }

    if !params.all_finite() {
        return Err(Error::Training(format!(
            "non-finite parameter after optimizer step {}",
            opt.step
        )));
    }
    Ok(())
}
