use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Uniform};

use super::{ModelConfig, Real};

const EMBED_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gain: Array1<T>,
    pub ln1_bias: Array1<T>,
    pub wq: Array2<T>,
    pub bq: Array1<T>,
    pub wk: Array2<T>,
    pub bk: Array1<T>,
    pub wv: Array2<T>,
    pub bv: Array1<T>,
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln2_gain: Array1<T>,
    pub ln2_bias: Array1<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

/// Every trainable tensor. Weight matrices are stored `[fan_in, fan_out]`
/// and applied as `x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub token: Array2<T>,
    pub position: Array2<T>,
    pub segment: Array2<T>,
    /// Layout tables for x1, y1, x2, y2.
    pub layout: [Array2<T>; 4],
    pub layers: Vec<LayerParams<T>>,
    pub final_gain: Array1<T>,
    pub final_bias: Array1<T>,
    pub wa: Array2<T>,
    pub ba: Array1<T>,
    pub wb: Array2<T>,
    pub bb: Array1<T>,
}

fn uniform<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    let bound = 1.0 / (rows as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || T::of(dist.sample(rng)))
}

fn normal<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    let dist = Normal::new(0.0, EMBED_STD).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || T::of(dist.sample(rng)))
}

/// Sinusoidal table with per-entry RMS `EMBED_STD`: column pair `(2i, 2i+1)`
/// holds `sin, cos` of `row / 10000^(2i/cols)`.
fn sinusoid<T: Real>(rows: usize, cols: usize) -> Array2<T> {
    let scale = EMBED_STD * std::f64::consts::SQRT_2;
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let angle = r as f64 / 10000f64.powf((c - c % 2) as f64 / cols as f64);
        T::of(scale * if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

impl<T: Real> Params<T> {
    /// Seeded initialization: weights uniform in ±1/√fan_in, token and
    /// segment embeddings N(0, 0.02), position and layout tables sinusoidal,
    /// biases zero, layer-norm gains one.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        let d = config.d_model;
        let ff = config.d_ff();
        let out = config.n_link_types() * config.d_head_score;
        let zeros = |n| Array1::zeros(n);
        let ones = |n| Array1::ones(n);
        let token = normal(config.vocab_size, d, rng);
        let position = sinusoid(config.max_seq_len, d);
        let segment = normal(2, d, rng);
        let layout = std::array::from_fn(|_| sinusoid(config.layout_buckets, d));
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_gain: ones(d),
                ln1_bias: zeros(d),
                wq: uniform(d, d, rng),
                bq: zeros(d),
                wk: uniform(d, d, rng),
                bk: zeros(d),
                wv: uniform(d, d, rng),
                bv: zeros(d),
                wo: uniform(d, d, rng),
                bo: zeros(d),
                ln2_gain: ones(d),
                ln2_bias: zeros(d),
                w1: uniform(d, ff, rng),
                b1: zeros(ff),
                w2: uniform(ff, d, rng),
                b2: zeros(d),
            })
            .collect();
        Params {
            token,
            position,
            segment,
            layout,
            layers,
            final_gain: ones(d),
            final_bias: zeros(d),
            wa: uniform(d, out, rng),
            ba: zeros(out),
            wb: uniform(d, out, rng),
            bb: zeros(out),
        }
    }

    /// All-zero tensors with the shapes `config` implies.
    pub fn zeros(config: &ModelConfig) -> Self {
        let mut p = Self::init(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        p.fill(T::zero());
        p
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(T::zero());
        z
    }

    pub fn fill(&mut self, v: T) {
        for (_, _, data) in self.entries_mut() {
            data.fill(v);
        }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let mut out = Params::<U>::placeholder(self);
        for ((_, _, dst), (_, _, src)) in out.entries_mut().into_iter().zip(self.entries()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.to_f64().unwrap());
            }
        }
        out
    }

    fn placeholder<S: Real>(shape_of: &Params<S>) -> Self {
        let m = |a: &Array2<S>| Array2::zeros(a.raw_dim());
        let v = |a: &Array1<S>| Array1::zeros(a.raw_dim());
        Params {
            token: m(&shape_of.token),
            position: m(&shape_of.position),
            segment: m(&shape_of.segment),
            layout: std::array::from_fn(|i| m(&shape_of.layout[i])),
            layers: shape_of
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_gain: v(&l.ln1_gain),
                    ln1_bias: v(&l.ln1_bias),
                    wq: m(&l.wq),
                    bq: v(&l.bq),
                    wk: m(&l.wk),
                    bk: v(&l.bk),
                    wv: m(&l.wv),
                    bv: v(&l.bv),
                    wo: m(&l.wo),
                    bo: v(&l.bo),
                    ln2_gain: v(&l.ln2_gain),
                    ln2_bias: v(&l.ln2_bias),
                    w1: m(&l.w1),
                    b1: v(&l.b1),
                    w2: m(&l.w2),
                    b2: v(&l.b2),
                })
                .collect(),
            final_gain: v(&shape_of.final_gain),
            final_bias: v(&shape_of.final_bias),
            wa: m(&shape_of.wa),
            ba: v(&shape_of.ba),
            wb: m(&shape_of.wb),
            bb: v(&shape_of.bb),
        }
    }

    /// `(name, shape, data)` for every tensor in a fixed order.
    pub fn entries(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        fn m<T: Real>(name: String, a: &Array2<T>) -> (String, Vec<usize>, &[T]) {
            (name, a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v<T: Real>(name: String, a: &Array1<T>) -> (String, Vec<usize>, &[T]) {
            (name, a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        out.push(m("embed.token".into(), &self.token));
        out.push(m("embed.position".into(), &self.position));
        out.push(m("embed.segment".into(), &self.segment));
        for (name, t) in LAYOUT_NAMES.iter().zip(&self.layout) {
            out.push(m(format!("embed.{name}"), t));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("layers.{i}.{s}");
            out.push(v(p("ln1.gain"), &l.ln1_gain));
            out.push(v(p("ln1.bias"), &l.ln1_bias));
            out.push(m(p("attn.wq"), &l.wq));
            out.push(v(p("attn.bq"), &l.bq));
            out.push(m(p("attn.wk"), &l.wk));
            out.push(v(p("attn.bk"), &l.bk));
            out.push(m(p("attn.wv"), &l.wv));
            out.push(v(p("attn.bv"), &l.bv));
            out.push(m(p("attn.wo"), &l.wo));
            out.push(v(p("attn.bo"), &l.bo));
            out.push(v(p("ln2.gain"), &l.ln2_gain));
            out.push(v(p("ln2.bias"), &l.ln2_bias));
            out.push(m(p("ffn.w1"), &l.w1));
            out.push(v(p("ffn.b1"), &l.b1));
            out.push(m(p("ffn.w2"), &l.w2));
            out.push(v(p("ffn.b2"), &l.b2));
        }
        out.push(v("final_ln.gain".into(), &self.final_gain));
        out.push(v("final_ln.bias".into(), &self.final_bias));
        out.push(m("scorer.wa".into(), &self.wa));
        out.push(v("scorer.ba".into(), &self.ba));
        out.push(m("scorer.wb".into(), &self.wb));
        out.push(v("scorer.bb".into(), &self.bb));
        out
    }

    /// Mutable counterpart of [`Params::entries`], same order.
    pub fn entries_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [T])> {
        fn m<T: Real>(name: String, a: &mut Array2<T>) -> (String, Vec<usize>, &mut [T]) {
            let shape = a.shape().to_vec();
            (name, shape, a.as_slice_mut().expect("standard layout"))
        }
        fn v<T: Real>(name: String, a: &mut Array1<T>) -> (String, Vec<usize>, &mut [T]) {
            let shape = a.shape().to_vec();
            (name, shape, a.as_slice_mut().expect("standard layout"))
        }
        let mut out = Vec::new();
        out.push(m("embed.token".into(), &mut self.token));
        out.push(m("embed.position".into(), &mut self.position));
        out.push(m("embed.segment".into(), &mut self.segment));
        for (name, t) in LAYOUT_NAMES.iter().zip(self.layout.iter_mut()) {
            out.push(m(format!("embed.{name}"), t));
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = |s: &str| format!("layers.{i}.{s}");
            out.push(v(p("ln1.gain"), &mut l.ln1_gain));
            out.push(v(p("ln1.bias"), &mut l.ln1_bias));
            out.push(m(p("attn.wq"), &mut l.wq));
            out.push(v(p("attn.bq"), &mut l.bq));
            out.push(m(p("attn.wk"), &mut l.wk));
            out.push(v(p("attn.bk"), &mut l.bk));
            out.push(m(p("attn.wv"), &mut l.wv));
            out.push(v(p("attn.bv"), &mut l.bv));
            out.push(m(p("attn.wo"), &mut l.wo));
            out.push(v(p("attn.bo"), &mut l.bo));
            out.push(v(p("ln2.gain"), &mut l.ln2_gain));
            out.push(v(p("ln2.bias"), &mut l.ln2_bias));
            out.push(m(p("ffn.w1"), &mut l.w1));
            out.push(v(p("ffn.b1"), &mut l.b1));
            out.push(m(p("ffn.w2"), &mut l.w2));
            out.push(v(p("ffn.b2"), &mut l.b2));
        }
        out.push(v("final_ln.gain".into(), &mut self.final_gain));
        out.push(v("final_ln.bias".into(), &mut self.final_bias));
        out.push(m("scorer.wa".into(), &mut self.wa));
        out.push(v("scorer.ba".into(), &mut self.ba));
        out.push(m("scorer.wb".into(), &mut self.wb));
        out.push(v("scorer.bb".into(), &mut self.bb));
        out
    }

    pub fn n_values(&self) -> usize {
        self.entries().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        for ((_, _, dst), (_, _, src)) in self.entries_mut().into_iter().zip(other.entries()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }
}

const LAYOUT_NAMES: [&str; 4] = ["layout_x1", "layout_y1", "layout_x2", "layout_y2"];
