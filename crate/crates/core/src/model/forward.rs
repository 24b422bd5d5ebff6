use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use super::{LayerParams, ModelConfig, Params, Real, ScoreTensor};
use crate::linking::MaskTensor;
use crate::serialize::InputSample;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;
const ROTARY_BASE: f64 = 10000.0;

/// Self-attention mask: padding is hidden from everyone, and tokens of one
/// question never see another question's tokens. Context and special tokens
/// see everything unpadded.
pub fn attention_mask(sample: &InputSample) -> Array2<bool> {
    let len = sample.len();
    let mut block = vec![None; len];
    for (b, q) in sample.question_registry.iter().enumerate() {
        for slot in &mut block[q.head..=q.tail] {
            *slot = Some(b);
        }
    }
    let pad: Vec<bool> = sample.token_ids.iter().map(|&t| t == crate::serialize::PAD).collect();
    Array2::from_shape_fn((len, len), |(i, j)| {
        !pad[j] && (block[i].is_none() || block[j].is_none() || block[i] == block[j])
    })
}

/// Sum of token, position, segment and the four layout embeddings.
pub fn embed<T: Real>(params: &Params<T>, config: &ModelConfig, sample: &InputSample) -> Result<Array2<T>> {
    check_ranges(config, sample)?;
    let len = sample.len();
    let mut x = Array2::zeros((len, config.d_model));
    for (p, mut row) in x.outer_iter_mut().enumerate() {
        row.assign(&params.token.row(sample.token_ids[p] as usize));
        row += &params.position.row(sample.position_ids[p] as usize);
        row += &params.segment.row(sample.segment_ids[p] as usize);
        for (c, table) in params.layout.iter().enumerate() {
            row += &table.row(sample.layout[p][c] as usize);
        }
    }
    Ok(x)
}

fn check_ranges(config: &ModelConfig, sample: &InputSample) -> Result<()> {
    let err = |what: &str, v: usize, limit: usize| {
        Err(Error::Input(format!(
            "document `{}`: {what} {v} out of range (limit {limit})",
            sample.doc_id
        )))
    };
    if let Some(&t) = sample.token_ids.iter().find(|&&t| t as usize >= config.vocab_size) {
        return err("token id", t as usize, config.vocab_size);
    }
    if let Some(&p) = sample.position_ids.iter().find(|&&p| p as usize >= config.max_seq_len) {
        return err("position id", p as usize, config.max_seq_len);
    }
    if let Some(&s) = sample.segment_ids.iter().find(|&&s| s > 1) {
        return err("segment id", s as usize, 2);
    }
    for box_ in &sample.layout {
        if let Some(&b) = box_.iter().find(|&&b| b as usize >= config.layout_buckets) {
            return err("layout bucket", b as usize, config.layout_buckets);
        }
    }
    Ok(())
}

/// Runs the encoder stack on `hidden`, optionally with extra visual token
/// rows appended; returns the rows of `hidden` only.
pub fn encode<T: Real>(
    hidden: ArrayView2<'_, T>,
    mask: &Array2<bool>,
    params: &Params<T>,
    config: &ModelConfig,
    visual: Option<ArrayView2<'_, T>>,
) -> Array2<T> {
    let len = hidden.nrows();
    let (x, mask) = match visual {
        None => (hidden.to_owned(), mask.clone()),
        Some(v) => {
            let n = len + v.nrows();
            let x = concatenate![Axis(0), hidden, v];
            let full = Array2::from_shape_fn((n, n), |(i, j)| if i < len && j < len { mask[[i, j]] } else { true });
            (x, full)
        }
    };
    let enc = Encoder::run(x, &mask, params, config, None::<&mut rand_chacha::ChaCha8Rng>);
    enc.output.slice(s![..len, ..]).to_owned()
}

/// Pointer scores `[channels, L, L]` from encoded states.
pub fn score<T: Real>(
    h: ArrayView2<'_, T>,
    mask: &MaskTensor,
    params: &Params<T>,
    config: &ModelConfig,
    position_ids: &[u32],
) -> ScoreTensor<T> {
    Scorer::run(h, mask, params, config, position_ids).scores
}

fn add_bias<T: Real>(x: &mut Array2<T>, b: &Array1<T>) {
    for mut row in x.outer_iter_mut() {
        row += b;
    }
}

fn linear<T: Real>(x: &ArrayView2<'_, T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    let mut y = x.dot(w);
    add_bias(&mut y, b);
    y
}

/// Accumulates `dW += xᵀ·dy`, `db += Σ dy` and returns `dy·Wᵀ`.
fn linear_back<T: Real>(
    x: &ArrayView2<'_, T>,
    w: &Array2<T>,
    dy: &Array2<T>,
    dw: &mut Array2<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    ndarray::linalg::general_mat_mul(T::one(), &x.t(), dy, T::one(), dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

struct LnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

fn layer_norm<T: Real>(x: &Array2<T>, gain: &Array1<T>, bias: &Array1<T>) -> (Array2<T>, LnCache<T>) {
    let d = T::of(x.ncols() as f64);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.outer_iter_mut().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *is = T::one() / (var + T::of(LN_EPS)).sqrt();
        row *= *is;
    }
    let mut y = &xhat * gain;
    y += bias;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_back<T: Real>(
    dy: &Array2<T>,
    cache: &LnCache<T>,
    gain: &Array1<T>,
    dgain: &mut Array1<T>,
    dbias: &mut Array1<T>,
) -> Array2<T> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let d = T::of(dy.ncols() as f64);
    let mut dx = dy * gain;
    for ((mut row, xh), &is) in dx.outer_iter_mut().zip(cache.xhat.outer_iter()).zip(&cache.inv_std) {
        let mean = row.sum() / d;
        let proj = row.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / d;
        row.zip_mut_with(&xh, |g, &x| *g = (*g - mean - x * proj) * is);
    }
    dx
}

fn gelu_consts<T: Real>() -> (T, T) {
    (T::of((2.0 / std::f64::consts::PI).sqrt()), T::of(0.044715))
}

fn gelu<T: Real>(x: T) -> T {
    let (c, k) = gelu_consts::<T>();
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let (c, k) = gelu_consts::<T>();
    let half = T::of(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * k * x * x)
}

fn dropout_mask<T: Real, R: Rng>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Array2<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < rate { T::zero() } else { keep })
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    u: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    ctx: Array2<T>,
    drop_attn: Option<Array2<T>>,
    ln2: LnCache<T>,
    u2: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
    drop_ffn: Option<Array2<T>>,
}

struct Encoder<T> {
    layers: Vec<LayerCache<T>>,
    final_ln: LnCache<T>,
    output: Array2<T>,
}

/// Rows with no visible key fall back to attending to themselves.
fn with_self_fallback(mask: &Array2<bool>) -> Array2<bool> {
    let mut m = mask.clone();
    for (i, mut row) in m.outer_iter_mut().enumerate() {
        if !row.iter().any(|&b| b) {
            row[i] = true;
        }
    }
    m
}

fn masked_softmax<T: Real>(scores: &mut Array2<T>, mask: &Array2<bool>) {
    for (mut row, allowed) in scores.outer_iter_mut().zip(mask.outer_iter()) {
        let m = row
            .iter()
            .zip(allowed)
            .filter(|(_, &a)| a)
            .fold(T::neg_infinity(), |acc, (&v, _)| acc.max(v));
        let mut sum = T::zero();
        row.zip_mut_with(&allowed, |v, &a| {
            *v = if a { (*v - m).exp() } else { T::zero() };
            sum += *v;
        });
        row /= sum;
    }
}

impl<T: Real> Encoder<T> {
    fn run<R: Rng>(x: Array2<T>, mask: &Array2<bool>, params: &Params<T>, config: &ModelConfig, mut rng: Option<&mut R>) -> Self {
        let mask = with_self_fallback(mask);
        let n = x.nrows();
        let d = config.d_model;
        let dh = d / config.n_heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut x = x;
        let mut layers = Vec::with_capacity(params.layers.len());
        for lp in &params.layers {
            let input = x;
            let (u, ln1) = layer_norm(&input, &lp.ln1_gain, &lp.ln1_bias);
            let q = linear(&u.view(), &lp.wq, &lp.bq);
            let k = linear(&u.view(), &lp.wk, &lp.bk);
            let v = linear(&u.view(), &lp.wv, &lp.bv);
            let mut ctx = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(config.n_heads);
            for h in 0..config.n_heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut p = q.slice(cols).dot(&k.slice(cols).t());
                p *= scale;
                masked_softmax(&mut p, &mask);
                ctx.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
                probs.push(p);
            }
            let mut a = linear(&ctx.view(), &lp.wo, &lp.bo);
            let drop_attn = rng.as_deref_mut().filter(|_| config.dropout > 0.0).map(|r| dropout_mask(n, d, config.dropout, r));
            if let Some(m) = &drop_attn {
                a *= m;
            }
            let x1 = &input + &a;
            let (u2, ln2) = layer_norm(&x1, &lp.ln2_gain, &lp.ln2_bias);
            let pre = linear(&u2.view(), &lp.w1, &lp.b1);
            let act = pre.mapv(gelu);
            let mut f = linear(&act.view(), &lp.w2, &lp.b2);
            let drop_ffn = rng.as_deref_mut().filter(|_| config.dropout > 0.0).map(|r| dropout_mask(n, d, config.dropout, r));
            if let Some(m) = &drop_ffn {
                f *= m;
            }
            x = x1 + f;
            layers.push(LayerCache {
                ln1,
                u,
                q,
                k,
                v,
                probs,
                ctx,
                drop_attn,
                ln2,
                u2,
                pre,
                act,
                drop_ffn,
            });
        }
        let (output, final_ln) = if params.layers.is_empty() {
            // An empty stack is the identity.
            let ln = LnCache {
                xhat: Array2::zeros((0, 0)),
                inv_std: Array1::zeros(0),
            };
            (x, ln)
        } else {
            layer_norm(&x, &params.final_gain, &params.final_bias)
        };
        Encoder {
            layers,
            final_ln,
            output,
        }
    }

    fn backward(&self, d_out: Array2<T>, params: &Params<T>, config: &ModelConfig, grads: &mut Params<T>) -> Array2<T> {
        if params.layers.is_empty() {
            return d_out;
        }
        let mut dx = layer_norm_back(
            &d_out,
            &self.final_ln,
            &params.final_gain,
            &mut grads.final_gain,
            &mut grads.final_bias,
        );
        let dh = config.d_model / config.n_heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        for ((c, lp), gl) in self.layers.iter().zip(&params.layers).zip(grads.layers.iter_mut()).rev() {
            dx = layer_back(c, lp, gl, dx, config.n_heads, dh, scale);
        }
        dx
    }
}

fn layer_back<T: Real>(
    c: &LayerCache<T>,
    lp: &LayerParams<T>,
    gl: &mut LayerParams<T>,
    dx2: Array2<T>,
    n_heads: usize,
    dh: usize,
    scale: T,
) -> Array2<T> {
    // Feed-forward branch.
    let mut df = dx2.clone();
    if let Some(m) = &c.drop_ffn {
        df *= m;
    }
    let dact = linear_back(&c.act.view(), &lp.w2, &df, &mut gl.w2, &mut gl.b2);
    let mut dpre = dact;
    dpre.zip_mut_with(&c.pre, |g, &x| *g *= gelu_grad(x));
    let du2 = linear_back(&c.u2.view(), &lp.w1, &dpre, &mut gl.w1, &mut gl.b1);
    let mut dx1 = dx2;
    dx1 += &layer_norm_back(&du2, &c.ln2, &lp.ln2_gain, &mut gl.ln2_gain, &mut gl.ln2_bias);

    // Attention branch.
    let mut da = dx1.clone();
    if let Some(m) = &c.drop_attn {
        da *= m;
    }
    let dctx = linear_back(&c.ctx.view(), &lp.wo, &da, &mut gl.wo, &mut gl.bo);
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let p = &c.probs[h];
        let d_o = dctx.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&d_o));
        let mut ds = d_o.dot(&c.v.slice(cols).t());
        for (mut g, pr) in ds.outer_iter_mut().zip(p.outer_iter()) {
            let dot = g.iter().zip(pr).map(|(&a, &b)| a * b).sum::<T>();
            g.zip_mut_with(&pr, |v, &pp| *v = pp * (*v - dot) * scale);
        }
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    let u = c.u.view();
    let mut du = linear_back(&u, &lp.wq, &dq, &mut gl.wq, &mut gl.bq);
    du += &linear_back(&u, &lp.wk, &dk, &mut gl.wk, &mut gl.bk);
    du += &linear_back(&u, &lp.wv, &dv, &mut gl.wv, &mut gl.bv);
    dx1 + layer_norm_back(&du, &c.ln1, &lp.ln1_gain, &mut gl.ln1_gain, &mut gl.ln1_bias)
}

struct Scorer<T> {
    a: Array2<T>,
    b: Array2<T>,
    rotary: Option<(Array2<T>, Array2<T>)>,
    scores: Array3<T>,
}

fn rotary_tables<T: Real>(position_ids: &[u32], dim: usize) -> (Array2<T>, Array2<T>) {
    let half = dim / 2;
    let angle = |p: usize, m: usize| position_ids[p] as f64 * ROTARY_BASE.powf(-2.0 * m as f64 / dim as f64);
    let cos = Array2::from_shape_fn((position_ids.len(), half), |(p, m)| T::of(angle(p, m).cos()));
    let sin = Array2::from_shape_fn((position_ids.len(), half), |(p, m)| T::of(angle(p, m).sin()));
    (cos, sin)
}

/// Rotates each consecutive pair of every `dim`-wide block by the position
/// angle; `inverse` applies the transpose.
fn rotate<T: Real>(x: &mut ArrayViewMut2<'_, T>, cos: &Array2<T>, sin: &Array2<T>, dim: usize, inverse: bool) {
    let half = dim / 2;
    for (p, mut row) in x.outer_iter_mut().enumerate() {
        let row = row.as_slice_mut().expect("standard layout");
        for block in row.chunks_exact_mut(dim) {
            for m in 0..half {
                let (c, s) = (cos[[p, m]], if inverse { -sin[[p, m]] } else { sin[[p, m]] });
                let (x0, x1) = (block[2 * m], block[2 * m + 1]);
                block[2 * m] = x0 * c - x1 * s;
                block[2 * m + 1] = x0 * s + x1 * c;
            }
        }
    }
}

impl<T: Real> Scorer<T> {
    fn run(h: ArrayView2<'_, T>, mask: &MaskTensor, params: &Params<T>, config: &ModelConfig, position_ids: &[u32]) -> Self {
        let len = h.nrows();
        let dim = config.d_head_score;
        let channels = config.n_link_types();
        let mut a = linear(&h, &params.wa, &params.ba);
        let mut b = linear(&h, &params.wb, &params.bb);
        let rotary = config.use_sinusoidal.then(|| rotary_tables(position_ids, dim));
        if let Some((cos, sin)) = &rotary {
            rotate(&mut a.view_mut(), cos, sin, dim, false);
            rotate(&mut b.view_mut(), cos, sin, dim, false);
        }
        let mut scores = Array3::zeros((channels, len, len));
        let sentinel = T::sentinel();
        for k in 0..channels {
            let cols = s![.., k * dim..(k + 1) * dim];
            let mut zk = scores.index_axis_mut(Axis(0), k);
            ndarray::linalg::general_mat_mul(T::one(), &a.slice(cols), &b.slice(cols).t(), T::zero(), &mut zk);
            for ((i, j), z) in zk.indexed_iter_mut() {
                if !mask.get_channel(k, i, j) {
                    *z = sentinel;
                }
            }
        }
        Scorer { a, b, rotary, scores }
    }

    /// Returns the gradient with respect to the encoder output.
    fn backward(&self, h: &Array2<T>, dz: &Array3<T>, params: &Params<T>, config: &ModelConfig, grads: &mut Params<T>) -> Array2<T> {
        let dim = config.d_head_score;
        let mut da = Array2::zeros(self.a.raw_dim());
        let mut db = Array2::zeros(self.b.raw_dim());
        for (k, dzk) in dz.outer_iter().enumerate() {
            let cols = s![.., k * dim..(k + 1) * dim];
            da.slice_mut(cols).assign(&dzk.dot(&self.b.slice(cols)));
            db.slice_mut(cols).assign(&dzk.t().dot(&self.a.slice(cols)));
        }
        if let Some((cos, sin)) = &self.rotary {
            rotate(&mut da.view_mut(), cos, sin, dim, true);
            rotate(&mut db.view_mut(), cos, sin, dim, true);
        }
        let hv = h.view();
        let mut dh = linear_back(&hv, &params.wa, &da, &mut grads.wa, &mut grads.ba);
        dh += &linear_back(&hv, &params.wb, &db, &mut grads.wb, &mut grads.bb);
        dh
    }
}

/// Network parameters plus the configuration they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

/// Everything a backward pass needs from one forward pass.
pub struct Forward<T> {
    pub scores: ScoreTensor<T>,
    sample_tokens: Vec<(usize, usize, usize, [u16; 4])>,
    embed_drop: Option<Array2<T>>,
    encoder: Encoder<T>,
    scorer: Scorer<T>,
}

impl<T: Real> Forward<T> {
    /// Attention probabilities of one head, `[L, L]`.
    pub fn attention(&self, layer: usize, head: usize) -> ArrayView2<'_, T> {
        self.encoder.layers[layer].probs[head].view()
    }

    pub fn hidden(&self) -> ArrayView2<'_, T> {
        self.encoder.output.view()
    }
}

impl<T: Real> Model<T> {
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, rng);
        Ok(Model { config, params })
    }

    /// Full forward pass. Dropout is active only when `rng` is given.
    pub fn forward<R: Rng>(&self, sample: &InputSample, mask: &MaskTensor, mut rng: Option<&mut R>) -> Result<Forward<T>> {
        if mask.n_channels() != self.config.n_link_types() || mask.len() != sample.len() {
            return Err(Error::Input(format!(
                "mask shape [{}, {}] does not match [{}, {}]",
                mask.n_channels(),
                mask.len(),
                self.config.n_link_types(),
                sample.len()
            )));
        }
        let mut x = embed(&self.params, &self.config, sample)?;
        let embed_drop = rng
            .as_deref_mut()
            .filter(|_| self.config.dropout > 0.0)
            .map(|r| dropout_mask(x.nrows(), x.ncols(), self.config.dropout, r));
        if let Some(m) = &embed_drop {
            x *= m;
        }
        let encoder = Encoder::run(x, &attention_mask(sample), &self.params, &self.config, rng);
        let scorer = Scorer::run(encoder.output.view(), mask, &self.params, &self.config, &sample.position_ids);
        let sample_tokens = (0..sample.len())
            .map(|p| {
                (
                    sample.token_ids[p] as usize,
                    sample.position_ids[p] as usize,
                    sample.segment_ids[p] as usize,
                    sample.layout[p],
                )
            })
            .collect();
        Ok(Forward {
            scores: scorer.scores.clone(),
            sample_tokens,
            embed_drop,
            encoder,
            scorer,
        })
    }

    /// Inference scores without dropout.
    pub fn scores(&self, sample: &InputSample, mask: &MaskTensor) -> Result<ScoreTensor<T>> {
        Ok(self.forward(sample, mask, None::<&mut rand_chacha::ChaCha8Rng>)?.scores)
    }

    /// Accumulates the gradient of a scalar whose derivative with respect to
    /// the scores is `dz` into `grads`.
    pub fn backward(&self, fwd: &Forward<T>, dz: &Array3<T>, grads: &mut Params<T>) {
        let dh = fwd.scorer.backward(&fwd.encoder.output, dz, &self.params, &self.config, grads);
        let mut dx = fwd.encoder.backward(dh, &self.params, &self.config, grads);
        if let Some(m) = &fwd.embed_drop {
            dx *= m;
        }
        for (row, &(tok, pos, seg, layout)) in dx.outer_iter().zip(&fwd.sample_tokens) {
            let add = |table: &mut Array2<T>, r: usize| {
                let mut dst = table.row_mut(r);
                dst += &row;
            };
            add(&mut grads.token, tok);
            add(&mut grads.position, pos);
            add(&mut grads.segment, seg);
            for (c, table) in grads.layout.iter_mut().enumerate() {
                add(table, layout[c] as usize);
            }
        }
    }

    /// Circle loss of one sample; its gradient is added to `grads`.
    pub fn loss_and_grad<R: Rng>(
        &self,
        sample: &InputSample,
        gold: &crate::linking::LinkMatrix,
        mask: &MaskTensor,
        rng: Option<&mut R>,
        grads: &mut Params<T>,
    ) -> Result<T> {
        let fwd = self.forward(sample, mask, rng)?;
        let (loss, dz) = super::circle_loss_with_grad(fwd.scores.view(), gold, mask);
        self.backward(&fwd, &dz, grads);
        Ok(loss)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}
