//! RMSProp with momentum on the preconditioned step and L2 weight decay.

use super::{Parameters, TrainError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            alpha: 0.99,
            eps: 1e-8,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// Squared-gradient and momentum buffers, one per parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub square_avg: Vec<Vec<f64>>,
    pub momentum: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<P: Parameters + ?Sized>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Self {
            square_avg: zeros.clone(),
            momentum: zeros,
            step: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.square_avg.iter().chain(&self.momentum).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// One update of a single tensor:
/// s ← αs + (1−α)g², m ← μm + (g + λθ)/√(s+ε), θ ← θ − lr·m.
pub fn rmsprop_update(theta: &mut [f64], grad: &[f64], square_avg: &mut [f64], momentum: &mut [f64], opt: &RmsProp) {
    for (((t, &g), s), m) in theta.iter_mut().zip(grad).zip(square_avg.iter_mut()).zip(momentum.iter_mut()) {
        *s = opt.alpha * *s + (1.0 - opt.alpha) * g * g;
        *m = opt.momentum * *m + (g + opt.weight_decay * *t) / (*s + opt.eps).sqrt();
        *t -= opt.lr * *m;
    }
}

/// Apply one step to every tensor. Nothing is modified if shapes disagree
/// or any gradient is non-finite.
pub fn rmsprop_step<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    opt: &RmsProp,
) -> Result<(), TrainError> {
    let g = grads.slices();
    let mut p = params.slices_mut();
    if p.len() != g.len() || p.len() != state.square_avg.len() || p.len() != state.momentum.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} parameter tensors, {} gradient tensors, {} state buffers",
            p.len(),
            g.len(),
            state.square_avg.len()
        )));
    }
    for (i, (pt, gt)) in p.iter().zip(&g).enumerate() {
        if pt.len() != gt.len() || pt.len() != state.square_avg[i].len() || pt.len() != state.momentum[i].len() {
            return Err(TrainError::ShapeMismatch(format!("tensor {i}: {} params vs {} grads", pt.len(), gt.len())));
        }
        if gt.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(format!("gradient tensor {i}")));
        }
    }
    for (i, (pt, gt)) in p.iter_mut().zip(&g).enumerate() {
        rmsprop_update(pt, gt, &mut state.square_avg[i], &mut state.momentum[i], opt);
    }
    state.step += 1;
    Ok(())
}
