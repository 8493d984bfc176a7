use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::params::ParamLayout;
use crate::scalar::{matmul, matmul_nt, matmul_tn_acc, Scalar};
use crate::sequence::Sequence;
use crate::ModelError;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu<T: Scalar>(x: T) -> T {
    let x3 = x * x * x;
    let t = (T::of(GELU_C) * (x + T::of(GELU_A) * x3)).tanh();
    T::of(0.5) * x * (T::one() + t)
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let t = (c * (x + a * x * x * x)).tanh();
    let half = T::of(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Decoder-only transformer over `[text] <BOI> [image] <BOM> [mask]`.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar = f32> {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub params: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOptions {
    /// Added to every position before the rotary embedding.
    pub position_offset: usize,
    /// Rows of the logits to compute; `None` means all.
    pub logit_rows: Option<Range<usize>>,
    pub keep_cache: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            position_offset: 0,
            logit_rows: None,
            keep_cache: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Forward<T> {
    /// `logit_rows.len() × vocab` row-major.
    pub logits: Vec<T>,
    pub logit_rows: Range<usize>,
    pub cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    x: Vec<T>,
    r1: Vec<T>,
    xn: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// heads × len × len, zero above the diagonal.
    probs: Vec<T>,
    o: Vec<T>,
    x1: Vec<T>,
    r2: Vec<T>,
    xn2: Vec<T>,
    g: Vec<T>,
    u: Vec<T>,
    h: Vec<T>,
}

/// Activations saved by the forward pass for backpropagation and inspection.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    len: usize,
    cos: Vec<T>,
    sin: Vec<T>,
    patches: Vec<T>,
    z1: Vec<T>,
    a1: Vec<T>,
    layers: Vec<LayerCache<T>>,
    xf: Vec<T>,
    rf: Vec<T>,
    xnf: Vec<T>,
}

impl<T> Cache<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Post-softmax attention of one layer, `heads × len × len`.
    pub fn attention(&self, layer: usize) -> &[T] {
        &self.layers[layer].probs
    }

    /// Rotated queries and keys of one layer, each `len × hidden`.
    pub fn rotated_qk(&self, layer: usize) -> (&[T], &[T]) {
        (&self.layers[layer].q, &self.layers[layer].k)
    }
}

fn rmsnorm<T: Scalar>(x: &[T], gain: &[T], rows: usize, d: usize, eps: f64) -> (Vec<T>, Vec<T>) {
    let mut y = vec![T::zero(); rows * d];
    let mut r = vec![T::zero(); rows];
    let inv_d = T::of(1.0 / d as f64);
    for t in 0..rows {
        let row = &x[t * d..(t + 1) * d];
        let ms = row.iter().fold(T::zero(), |s, &v| s + v * v) * inv_d;
        let rt = T::one() / (ms + T::of(eps)).sqrt();
        r[t] = rt;
        for ((o, &v), &g) in y[t * d..(t + 1) * d].iter_mut().zip(row).zip(gain) {
            *o = v * rt * g;
        }
    }
    (y, r)
}

/// Accumulates into `dx` and `dgain`.
fn rmsnorm_backward<T: Scalar>(x: &[T], r: &[T], gain: &[T], dy: &[T], dx: &mut [T], dgain: &mut [T], d: usize) {
    let inv_d = T::of(1.0 / d as f64);
    for (t, &rt) in r.iter().enumerate() {
        let xs = &x[t * d..(t + 1) * d];
        let dys = &dy[t * d..(t + 1) * d];
        let mut dot = T::zero();
        for j in 0..d {
            dot = dot + gain[j] * dys[j] * xs[j];
            dgain[j] = dgain[j] + dys[j] * xs[j] * rt;
        }
        let c = rt * rt * rt * inv_d * dot;
        for (j, o) in dx[t * d..(t + 1) * d].iter_mut().enumerate() {
            *o = *o + rt * gain[j] * dys[j] - xs[j] * c;
        }
    }
}

/// Rotates consecutive pairs inside each head; `inverse` applies the transpose.
fn rope<T: Scalar>(x: &mut [T], cos: &[T], sin: &[T], rows: usize, heads: usize, dh: usize, inverse: bool) {
    let half = dh / 2;
    let d = heads * dh;
    for t in 0..rows {
        for h in 0..heads {
            let base = t * d + h * dh;
            for i in 0..half {
                let (c, mut s) = (cos[t * half + i], sin[t * half + i]);
                if inverse {
                    s = -s;
                }
                let a = x[base + 2 * i];
                let b = x[base + 2 * i + 1];
                x[base + 2 * i] = a * c - b * s;
                x[base + 2 * i + 1] = a * s + b * c;
            }
        }
    }
}

fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl<T: Scalar> Model<T> {
    /// Random init: matrices ~ N(0, init_std²), norm gains 1, biases 0.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![T::zero(); layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| ModelError::Config(e.to_string()))?;
        for e in layout.entries() {
            let slot = &mut params[e.range()];
            if e.is_matrix() {
                for v in slot {
                    *v = T::of(normal.sample(&mut rng));
                }
            } else if e.name.ends_with("norm") {
                slot.fill(T::one());
            }
        }
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total() {
            return Err(ModelError::Config(format!(
                "parameter buffer has {} values, layout needs {}",
                params.len(),
                layout.total()
            )));
        }
        Ok(Self { config, layout, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn w(&self, offset: usize, len: usize) -> &[T] {
        &self.params[offset..offset + len]
    }

    pub fn forward(&self, seq: &Sequence) -> Result<Vec<T>, ModelError> {
        Ok(self.forward_with(seq, &ForwardOptions::default())?.logits)
    }

    pub fn forward_with(&self, seq: &Sequence, opts: &ForwardOptions) -> Result<Forward<T>, ModelError> {
        let cfg = &self.config;
        let (d, f, heads) = (cfg.hidden, cfg.ffn_hidden, cfg.heads);
        let dh = cfg.head_dim();
        let half = dh / 2;
        let vsize = cfg.vocab.size();
        let l = seq.len();
        let off = &self.layout.off;
        if l == 0 || seq.tokens.len() != l {
            return Err(ModelError::Input(format!("sequence length {l} with {} token slots", seq.tokens.len())));
        }
        if seq.patch_dim != cfg.patch_dim || seq.patches.len() != seq.layout.image.len() * cfg.patch_dim {
            return Err(ModelError::Input(format!(
                "expected {} patches of {} values, got {} values with patch_dim {}",
                seq.layout.image.len(),
                cfg.patch_dim,
                seq.patches.len(),
                seq.patch_dim
            )));
        }
        let rows = opts.logit_rows.clone().unwrap_or(0..l);
        if rows.end > l || rows.start > rows.end {
            return Err(ModelError::Input(format!("logit rows {rows:?} outside sequence of length {l}")));
        }

        // embeddings
        let mut x = vec![T::zero(); l * d];
        for t in 0..l {
            if seq.layout.image.contains(&t) {
                continue;
            }
            let id = seq.tokens[t] as usize;
            if id >= vsize {
                return Err(ModelError::Input(format!("token {id} at position {t} outside vocabulary of {vsize}")));
            }
            x[t * d..(t + 1) * d].copy_from_slice(self.w(off.tok_emb + id * d, d));
        }
        let n_img = seq.layout.image.len();
        let pd = cfg.patch_dim;
        let patches: Vec<T> = seq.patches.iter().map(|&v| T::of(v as f64)).collect();
        let mut z1 = Vec::new();
        let mut a1 = Vec::new();
        if n_img > 0 {
            z1 = self.w(off.adapt_b1, d).repeat(n_img);
            matmul(&patches, self.w(off.adapt_w1, pd * d), &mut z1, n_img, pd, d, T::one());
            a1 = z1.iter().map(|&v| gelu(v)).collect();
            let y = &mut x[seq.layout.image.start * d..seq.layout.image.end * d];
            for row in y.chunks_mut(d) {
                row.copy_from_slice(self.w(off.adapt_b2, d));
            }
            matmul(&a1, self.w(off.adapt_w2, d * d), y, n_img, d, d, T::one());
        }

        let mut cos = vec![T::zero(); l * half];
        let mut sin = vec![T::zero(); l * half];
        for t in 0..l {
            let pos = (t + opts.position_offset) as f64;
            for i in 0..half {
                let theta = cfg.rope_base.powf(-((2 * i) as f64) / dh as f64);
                let (s, c) = (pos * theta).sin_cos();
                cos[t * half + i] = T::of(c);
                sin[t * half + i] = T::of(s);
            }
        }

        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut layer_caches = Vec::with_capacity(if opts.keep_cache { cfg.layers } else { 0 });
        for (li, lo) in off.layers.iter().enumerate() {
            let x_in = if opts.keep_cache { x.clone() } else { Vec::new() };
            let (xn, r1) = rmsnorm(&x, self.w(lo.attn_norm, d), l, d, cfg.norm_eps);
            let mut q = vec![T::zero(); l * d];
            let mut k = vec![T::zero(); l * d];
            let mut v = vec![T::zero(); l * d];
            matmul(&xn, self.w(lo.wq, d * d), &mut q, l, d, d, T::zero());
            matmul(&xn, self.w(lo.wk, d * d), &mut k, l, d, d, T::zero());
            matmul(&xn, self.w(lo.wv, d * d), &mut v, l, d, d, T::zero());
            rope(&mut q, &cos, &sin, l, heads, dh, false);
            rope(&mut k, &cos, &sin, l, heads, dh, false);

            let mut probs = vec![T::zero(); heads * l * l];
            let mut o = vec![T::zero(); l * d];
            for h in 0..heads {
                let hc = h * dh;
                for i in 0..l {
                    let prow = &mut probs[(h * l + i) * l..(h * l + i) * l + i + 1];
                    let qi = &q[i * d + hc..i * d + hc + dh];
                    let mut mx = T::neg_infinity();
                    for (j, p) in prow.iter_mut().enumerate() {
                        let kj = &k[j * d + hc..j * d + hc + dh];
                        let s = qi.iter().zip(kj).fold(T::zero(), |a, (&x, &y)| a + x * y) * scale;
                        *p = s;
                        mx = mx.max(s);
                    }
                    let mut sum = T::zero();
                    for p in prow.iter_mut() {
                        *p = (*p - mx).exp();
                        sum = sum + *p;
                    }
                    let inv = T::one() / sum;
                    let oi = &mut o[i * d + hc..i * d + hc + dh];
                    for (j, p) in prow.iter_mut().enumerate() {
                        *p = *p * inv;
                        let vj = &v[j * d + hc..j * d + hc + dh];
                        for (a, &b) in oi.iter_mut().zip(vj) {
                            *a = *a + *p * b;
                        }
                    }
                }
            }
            matmul(&o, self.w(lo.wo, d * d), &mut x, l, d, d, T::one());
            let x1 = if opts.keep_cache { x.clone() } else { Vec::new() };

            let (xn2, r2) = rmsnorm(&x, self.w(lo.ffn_norm, d), l, d, cfg.norm_eps);
            let mut g = vec![T::zero(); l * f];
            let mut u = vec![T::zero(); l * f];
            matmul(&xn2, self.w(lo.w_gate, d * f), &mut g, l, d, f, T::zero());
            matmul(&xn2, self.w(lo.w_up, d * f), &mut u, l, d, f, T::zero());
            let hact: Vec<T> = g.iter().zip(&u).map(|(&gv, &uv)| gv * sigmoid(gv) * uv).collect();
            matmul(&hact, self.w(lo.w_down, f * d), &mut x, l, f, d, T::one());
            if !all_finite(&x) {
                return Err(ModelError::NonFinite { layer: li });
            }
            if opts.keep_cache {
                layer_caches.push(LayerCache {
                    x: x_in,
                    r1,
                    xn,
                    q,
                    k,
                    v,
                    probs,
                    o,
                    x1,
                    r2,
                    xn2,
                    g,
                    u,
                    h: hact,
                });
            }
        }

        let (xnf, rf) = rmsnorm(&x, self.w(off.final_norm, d), l, d, cfg.norm_eps);
        let m = rows.len();
        let mut logits = vec![T::zero(); m * vsize];
        matmul(&xnf[rows.start * d..rows.end * d], self.w(off.head, d * vsize), &mut logits, m, d, vsize, T::zero());
        if !all_finite(&logits) {
            return Err(ModelError::NonFinite { layer: cfg.layers });
        }
        let cache = opts.keep_cache.then(|| Cache {
            len: l,
            cos,
            sin,
            patches,
            z1,
            a1,
            layers: layer_caches,
            xf: x,
            rf,
            xnf,
        });
        Ok(Forward {
            logits,
            logit_rows: rows,
            cache,
        })
    }

    /// Backpropagates `dlogits` (shaped like `fwd.logits`) and adds the
    /// parameter gradient into `grads`.
    pub fn backward(&self, seq: &Sequence, fwd: &Forward<T>, dlogits: &[T], grads: &mut [T]) -> Result<(), ModelError> {
        let cache = fwd
            .cache
            .as_ref()
            .ok_or_else(|| ModelError::Input("backward needs a forward pass run with keep_cache".into()))?;
        let cfg = &self.config;
        let (d, f, heads) = (cfg.hidden, cfg.ffn_hidden, cfg.heads);
        let dh = cfg.head_dim();
        let vsize = cfg.vocab.size();
        let l = cache.len;
        let off = &self.layout.off;
        let rows = fwd.logit_rows.clone();
        let m = rows.len();
        if dlogits.len() != m * vsize || grads.len() != self.params.len() {
            return Err(ModelError::Input("gradient buffer shapes do not match the model".into()));
        }

        matmul_tn_acc(
            &cache.xnf[rows.start * d..rows.end * d],
            dlogits,
            &mut grads[off.head..off.head + d * vsize],
            m,
            d,
            vsize,
        );
        let mut dxnf = vec![T::zero(); l * d];
        matmul_nt(dlogits, self.w(off.head, d * vsize), &mut dxnf[rows.start * d..rows.end * d], m, vsize, d, T::zero());
        let mut dx = vec![T::zero(); l * d];
        rmsnorm_backward(
            &cache.xf,
            &cache.rf,
            self.w(off.final_norm, d),
            &dxnf,
            &mut dx,
            &mut grads[off.final_norm..off.final_norm + d],
            d,
        );

        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut dh_buf = vec![T::zero(); l * f];
        let mut dg = vec![T::zero(); l * f];
        let mut du = vec![T::zero(); l * f];
        let mut dxn = vec![T::zero(); l * d];
        let mut d_o = vec![T::zero(); l * d];
        for (lo, c) in off.layers.iter().zip(&cache.layers).rev() {
            // feed-forward
            matmul_tn_acc(&c.h, &dx, &mut grads[lo.w_down..lo.w_down + f * d], l, f, d);
            matmul_nt(&dx, self.w(lo.w_down, f * d), &mut dh_buf, l, d, f, T::zero());
            for i in 0..l * f {
                let s = sigmoid(c.g[i]);
                let silu = c.g[i] * s;
                du[i] = dh_buf[i] * silu;
                dg[i] = dh_buf[i] * c.u[i] * s * (T::one() + c.g[i] * (T::one() - s));
            }
            matmul_tn_acc(&c.xn2, &dg, &mut grads[lo.w_gate..lo.w_gate + d * f], l, d, f);
            matmul_tn_acc(&c.xn2, &du, &mut grads[lo.w_up..lo.w_up + d * f], l, d, f);
            matmul_nt(&dg, self.w(lo.w_gate, d * f), &mut dxn, l, f, d, T::zero());
            matmul_nt(&du, self.w(lo.w_up, d * f), &mut dxn, l, f, d, T::one());
            rmsnorm_backward(
                &c.x1,
                &c.r2,
                self.w(lo.ffn_norm, d),
                &dxn,
                &mut dx,
                &mut grads[lo.ffn_norm..lo.ffn_norm + d],
                d,
            );

            // attention
            matmul_tn_acc(&c.o, &dx, &mut grads[lo.wo..lo.wo + d * d], l, d, d);
            matmul_nt(&dx, self.w(lo.wo, d * d), &mut d_o, l, d, d, T::zero());
            let mut dq = vec![T::zero(); l * d];
            let mut dk = vec![T::zero(); l * d];
            let mut dv = vec![T::zero(); l * d];
            let mut dp = vec![T::zero(); l];
            for h in 0..heads {
                let hc = h * dh;
                for i in 0..l {
                    let prow = &c.probs[(h * l + i) * l..(h * l + i) * l + i + 1];
                    let doi = &d_o[i * d + hc..i * d + hc + dh];
                    let mut dot = T::zero();
                    for (j, &p) in prow.iter().enumerate() {
                        let vj = &c.v[j * d + hc..j * d + hc + dh];
                        let g = doi.iter().zip(vj).fold(T::zero(), |a, (&x, &y)| a + x * y);
                        dp[j] = g;
                        dot = dot + p * g;
                        for (a, &b) in dv[j * d + hc..j * d + hc + dh].iter_mut().zip(doi) {
                            *a = *a + p * b;
                        }
                    }
                    for (j, &p) in prow.iter().enumerate() {
                        let ds = p * (dp[j] - dot) * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        for cidx in 0..dh {
                            dq[i * d + hc + cidx] = dq[i * d + hc + cidx] + ds * c.k[j * d + hc + cidx];
                            dk[j * d + hc + cidx] = dk[j * d + hc + cidx] + ds * c.q[i * d + hc + cidx];
                        }
                    }
                }
            }
            rope(&mut dq, &cache.cos, &cache.sin, l, heads, dh, true);
            rope(&mut dk, &cache.cos, &cache.sin, l, heads, dh, true);
            matmul_tn_acc(&c.xn, &dq, &mut grads[lo.wq..lo.wq + d * d], l, d, d);
            matmul_tn_acc(&c.xn, &dk, &mut grads[lo.wk..lo.wk + d * d], l, d, d);
            matmul_tn_acc(&c.xn, &dv, &mut grads[lo.wv..lo.wv + d * d], l, d, d);
            matmul_nt(&dq, self.w(lo.wq, d * d), &mut dxn, l, d, d, T::zero());
            matmul_nt(&dk, self.w(lo.wk, d * d), &mut dxn, l, d, d, T::one());
            matmul_nt(&dv, self.w(lo.wv, d * d), &mut dxn, l, d, d, T::one());
            rmsnorm_backward(
                &c.x,
                &c.r1,
                self.w(lo.attn_norm, d),
                &dxn,
                &mut dx,
                &mut grads[lo.attn_norm..lo.attn_norm + d],
                d,
            );
        }

        // embeddings
        for t in 0..l {
            if seq.layout.image.contains(&t) {
                continue;
            }
            let id = seq.tokens[t] as usize;
            let g = &mut grads[off.tok_emb + id * d..off.tok_emb + (id + 1) * d];
            for (a, &b) in g.iter_mut().zip(&dx[t * d..(t + 1) * d]) {
                *a = *a + b;
            }
        }
        let n_img = seq.layout.image.len();
        if n_img > 0 {
            let pd = cfg.patch_dim;
            let dy = &dx[seq.layout.image.start * d..seq.layout.image.end * d];
            for row in dy.chunks(d) {
                for (a, &b) in grads[off.adapt_b2..off.adapt_b2 + d].iter_mut().zip(row) {
                    *a = *a + b;
                }
            }
            matmul_tn_acc(&cache.a1, dy, &mut grads[off.adapt_w2..off.adapt_w2 + d * d], n_img, d, d);
            let mut dz1 = vec![T::zero(); n_img * d];
            matmul_nt(dy, self.w(off.adapt_w2, d * d), &mut dz1, n_img, d, d, T::zero());
            for (g, &z) in dz1.iter_mut().zip(&cache.z1) {
                *g = *g * gelu_grad(z);
            }
            for row in dz1.chunks(d) {
                for (a, &b) in grads[off.adapt_b1..off.adapt_b1 + d].iter_mut().zip(row) {
                    *a = *a + b;
                }
            }
            matmul_tn_acc(&cache.patches, &dz1, &mut grads[off.adapt_w1..off.adapt_w1 + pd * d], n_img, pd, d);
        }
        Ok(())
    }

    /// Head-averaged post-softmax attention of `layer`, `len × len`.
    pub fn attention_probs(&self, seq: &Sequence, layer: usize) -> Result<Vec<T>, ModelError> {
        if layer >= self.config.layers {
            return Err(ModelError::Input(format!(
                "layer {layer} out of range for a {}-layer model",
                self.config.layers
            )));
        }
        let fwd = self.forward_with(
            seq,
            &ForwardOptions {
                keep_cache: true,
                logit_rows: Some(0..0),
                ..Default::default()
            },
        )?;
        let cache = fwd.cache.expect("cache requested");
        let l = seq.len();
        let heads = self.config.heads;
        let probs = cache.attention(layer);
        let inv = T::of(1.0 / heads as f64);
        let mut avg = vec![T::zero(); l * l];
        for h in 0..heads {
            for (a, &p) in avg.iter_mut().zip(&probs[h * l * l..(h + 1) * l * l]) {
                *a = *a + p;
            }
        }
        avg.iter_mut().for_each(|a| *a = *a * inv);
        Ok(avg)
    }

    /// Scaled pre-softmax attention scores `q_i·k_j/√d_h` of one layer and
    /// head, for every pair (including future keys).
    pub fn attention_scores(&self, seq: &Sequence, layer: usize, head: usize, position_offset: usize) -> Result<Vec<T>, ModelError> {
        if layer >= self.config.layers || head >= self.config.heads {
            return Err(ModelError::Input(format!("layer {layer} / head {head} out of range")));
        }
        let fwd = self.forward_with(
            seq,
            &ForwardOptions {
                position_offset,
                keep_cache: true,
                logit_rows: Some(0..0),
            },
        )?;
        let cache = fwd.cache.expect("cache requested");
        let (q, k) = cache.rotated_qk(layer);
        let (d, dh, l) = (self.config.hidden, self.config.head_dim(), seq.len());
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut s = vec![T::zero(); l * l];
        for i in 0..l {
            for j in 0..l {
                let qi = &q[i * d + head * dh..i * d + (head + 1) * dh];
                let kj = &k[j * d + head * dh..j * d + (head + 1) * dh];
                s[i * l + j] = qi.iter().zip(kj).fold(T::zero(), |a, (&x, &y)| a + x * y) * scale;
            }
        }
        Ok(s)
    }
}
