use crate::model::{Params, Real};

/// Linear warmup to `peak` at step `⌈warmup_ratio · total⌉`, then linear
/// decay to zero at `total`. Steps are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(peak: f64, warmup_ratio: f64, total_steps: usize) -> Self {
        let warmup_steps = ((warmup_ratio * total_steps as f64).ceil() as usize).min(total_steps);
        LrSchedule {
            peak,
            warmup_steps,
            total_steps,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        let (w, t) = (self.warmup_steps, self.total_steps);
        if step < w {
            self.peak * step as f64 / w as f64
        } else if step == w {
            self.peak
        } else if t > w {
            self.peak * t.saturating_sub(step) as f64 / (t - w) as f64
        } else {
            0.0
        }
    }
}

/// Adam with decoupled weight decay. Decay applies to matrices only, not to
/// biases and layer-norm vectors.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Params<T>,
    v: Params<T>,
    t: i32,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &Params<T>, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.t));
        let c2 = T::of(1.0 - self.beta2.powi(self.t));
        let (lr, eps, wd) = (T::of(lr), T::of(self.eps), T::of(self.weight_decay));
        let one = T::one();
        let tensors = params
            .entries_mut()
            .into_iter()
            .zip(grads.entries())
            .zip(self.m.entries_mut())
            .zip(self.v.entries_mut());
        for ((((_, shape, p), (_, _, g)), (_, _, m)), (_, _, v)) in tensors {
            let decay = if shape.len() == 2 { wd } else { T::zero() };
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                p[i] -= lr * (update + decay * p[i]);
            }
        }
    }
}

pub fn global_norm<T: Real>(grads: &Params<T>) -> f64 {
    grads
        .entries()
        .iter()
        .flat_map(|(_, _, d)| d.iter())
        .map(|v| {
            let x = v.to_f64().unwrap_or(f64::NAN);
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so the global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut Params<T>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let s = T::of(max_norm / norm);
        for (_, _, d) in grads.entries_mut() {
            for v in d {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn warmup_peaks_exactly_at_boundary() {
        let s = LrSchedule::new(1e-3, 0.1, 95);
        assert_eq!(s.warmup_steps, 10);
        assert_eq!(s.at(10), 1e-3);
        assert!(s.at(9) < 1e-3 && s.at(11) < 1e-3);
        assert_eq!(s.at(95), 0.0);
        assert!((s.at(5) - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_piecewise_linear() {
        let s = LrSchedule::new(2.0, 0.25, 40);
        let d: Vec<f64> = (1..=40).map(|t| s.at(t) - s.at(t - 1)).collect();
        for w in d[..10].windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
        for w in d[11..].windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
        assert!(d[..10].iter().all(|&x| x > 0.0) && d[10..].iter().all(|&x| x < 0.0));
    }

    #[test]
    fn zero_warmup_starts_decaying() {
        let s = LrSchedule::new(1.0, 0.0, 4);
        assert_eq!(s.warmup_steps, 0);
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(2), 0.5);
    }

    fn tiny() -> Params<f64> {
        let config = ModelConfig {
            vocab_size: 6,
            d_model: 4,
            n_layers: 1,
            n_heads: 1,
            d_head_score: 2,
            max_seq_len: 8,
            layout_buckets: 3,
            ..Default::default()
        };
        Params::init(&config, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))
    }

    #[test]
    fn first_adam_step_moves_by_lr_against_gradient() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.ba[0] = 3.0;
        g.ba[1] = -0.5;
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8, 0.0);
        opt.step(&mut p, &g, 0.01);
        assert!((p.ba[0] - (before.ba[0] - 0.01)).abs() < 1e-9);
        assert!((p.ba[1] - (before.ba[1] + 0.01)).abs() < 1e-9);
        assert_eq!(p.bb, before.bb);
    }

    #[test]
    fn weight_decay_skips_vectors() {
        let mut p = tiny();
        p.final_gain.fill(1.0);
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8, 0.5);
        opt.step(&mut p, &g, 0.1);
        assert_eq!(p.final_gain, before.final_gain);
        assert!((p.wa[[0, 0]] - before.wa[[0, 0]] * 0.95).abs() < 1e-12);
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let p = tiny();
        let mut g = p.zeros_like();
        g.ba[0] = 3.0;
        g.bb[0] = 4.0;
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
        assert!((g.ba[0] - 0.6).abs() < 1e-12);
        let norm = clip_global_norm(&mut g, 10.0);
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((g.ba[0] - 0.6).abs() < 1e-12);
    }
}
