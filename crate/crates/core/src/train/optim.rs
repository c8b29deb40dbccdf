use crate::nn::{Params, Real};

/// `max(0, lr0 * (1 - f / anneal_frames))`.
pub fn learning_rate(frame: u64, lr0: f64, anneal_frames: f64) -> f64 {
    (lr0 * (1.0 - frame as f64 / anneal_frames)).max(0.0)
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut Params<T>, max_norm: f64) -> f64 {
    let norm = grads.norm().as_f64();
    if norm > max_norm {
        grads.scale(T::from_f64(max_norm / norm));
    }
    norm
}

/// RMSprop with the moving average of squared gradients; epsilon is added
/// inside the square root.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub alpha: f32,
    pub epsilon: f32,
    pub mean_square: Vec<Vec<f32>>,
}

impl RmsProp {
    pub fn new(params: &Params<f32>, alpha: f32, epsilon: f32) -> Self {
        RmsProp { alpha, epsilon, mean_square: params.blocks.iter().map(|b| vec![0.0; b.len()]).collect() }
    }

    pub fn step(&mut self, params: &mut Params<f32>, grads: &Params<f32>, lr: f32) {
        let (a, eps) = (self.alpha, self.epsilon);
        for ((p, g), ms) in params.blocks.iter_mut().zip(&grads.blocks).zip(self.mean_square.iter_mut()) {
            for ((p, g), m) in p.iter_mut().zip(g).zip(ms.iter_mut()) {
                *m = a * *m + (1.0 - a) * g * g;
                *p -= lr * g / (m.sqrt() + eps);
            }
        }
    }
}
