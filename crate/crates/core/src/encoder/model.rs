//! Parameter layout, forward pass and exact backward pass of the encoder.
//!
//! Layout per layer (pre-norm):
//!
//! ```text
//! x ─┬─ LN1 ─ MHA(mask) ─(+)─┬─ LN2 ─ W1 ─ GELU ─ W2 ─(+)─ x'
//!    └───────────────────────┘└─────────────────────────┘
//! ```
//!
//! Input is token embedding plus learned position embedding; output is the
//! mean over non-pad positions fed to a `d_model x 2` head. Logit 0 is FAKE.
//! All parameters live in one flat vector; [`Layout`] names the blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Batch, EncoderConfig};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// A named, contiguous slice of the parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub blocks: Vec<Block>,
    pub(crate) tok: usize,
    pub(crate) pos: usize,
    pub(crate) layers: Vec<LayerOffsets>,
    pub(crate) head_w: usize,
    pub(crate) head_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &EncoderConfig) -> Self {
        let (d, f) = (c.d_model, c.d_ff);
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, len: usize| {
            let at = offset;
            blocks.push(Block { name, offset: at, len });
            offset += len;
            at
        };
        let tok = push("token_embedding".into(), c.vocab_size * d);
        let pos = push("position_embedding".into(), c.max_len * d);
        let mut layers = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let mut p = |part: &str, len| push(format!("layer{l}.{part}"), len);
            layers.push(LayerOffsets {
                ln1_g: p("ln1.gain", d),
                ln1_b: p("ln1.bias", d),
                wq: p("attn.wq", d * d),
                bq: p("attn.bq", d),
                wk: p("attn.wk", d * d),
                bk: p("attn.bk", d),
                wv: p("attn.wv", d * d),
                bv: p("attn.bv", d),
                wo: p("attn.wo", d * d),
                bo: p("attn.bo", d),
                ln2_g: p("ln2.gain", d),
                ln2_b: p("ln2.bias", d),
                w1: p("ffn.w1", d * f),
                b1: p("ffn.b1", f),
                w2: p("ffn.w2", f * d),
                b2: p("ffn.b2", d),
            });
        }
        let head_w = push("head.weight".into(), d * 2);
        let head_b = push("head.bias".into(), 2);
        Layout {
            blocks,
            tok,
            pos,
            layers,
            head_w,
            head_b,
            total: offset,
        }
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Trainable parameter count:
/// `V·d + max_len·d + layers·(4d² + 2·d·d_ff + 9d + d_ff) + 2d + 2`.
///
/// Per layer: two layer norms (4d), four d×d projections with biases
/// (4d² + 4d), and the feed-forward pair (d·d_ff + d_ff + d_ff·d + d).
pub fn parameter_count(c: &EncoderConfig) -> usize {
    let (d, f) = (c.d_model, c.d_ff);
    c.vocab_size * d + c.max_len * d + c.layers * (4 * d * d + 2 * d * f + 9 * d + f) + 2 * d + 2
}

pub(crate) fn init_params(c: &EncoderConfig, layout: &Layout) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let normal = Normal::new(0.0, c.init_std).expect("init_std validated");
    let mut params = vec![0.0; layout.total];
    for block in &layout.blocks {
        let slice = &mut params[block.offset..block.offset + block.len];
        if block.name.ends_with(".gain") {
            slice.iter_mut().for_each(|v| *v = 1.0);
        } else if block.name.ends_with("bias") || block.name.contains(".b") {
            // biases start at zero
        } else {
            slice.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        }
    }
    params
}

/// `x[n×k] · w[k×m] + b`.
fn affine(x: &[f64], n: usize, k: usize, w: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        out.extend_from_slice(b);
        let row = &mut out[i * m..(i + 1) * m];
        for (p, &xv) in x[i * k..(i + 1) * k].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, &wv) in row.iter_mut().zip(&w[p * m..(p + 1) * m]) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Backward of [`affine`]: accumulates `dw += xᵀ dy`, `db += Σ dy` and
/// returns `dx = dy wᵀ`.
#[allow(clippy::too_many_arguments)]
fn affine_back(
    x: &[f64],
    n: usize,
    k: usize,
    w: &[f64],
    m: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; n * k];
    for i in 0..n {
        let dyr = &dy[i * m..(i + 1) * m];
        for (g, &d) in db.iter_mut().zip(dyr) {
            *g += d;
        }
        for p in 0..k {
            let xv = x[i * k + p];
            let wr = &w[p * m..(p + 1) * m];
            let dwr = &mut dw[p * m..(p + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                dwr[j] += xv * dyr[j];
                acc += dyr[j] * wr[j];
            }
            dx[i * k + p] = acc;
        }
    }
    dx
}

struct NormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], n: usize, d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, NormCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = g[j] * h + b[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

fn layer_norm_back(
    cache: &NormCache,
    n: usize,
    d: usize,
    g: &[f64],
    dy: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let dyr = &dy[i * d..(i + 1) * d];
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for j in 0..d {
            dx[i * d + j] = cache.rstd[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

struct LayerCache {
    h1: Vec<f64>,
    n1: NormCache,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// heads × L × L
    attn: Vec<f64>,
    ctx: Vec<f64>,
    h2: Vec<f64>,
    n2: NormCache,
    u: Vec<f64>,
    a: Vec<f64>,
}

struct ExampleCache {
    layers: Vec<LayerCache>,
    pooled: Vec<f64>,
    valid: usize,
}

/// Forward one padded sequence. Returns logits and the cache for backward.
fn forward_example(
    c: &EncoderConfig,
    lay: &Layout,
    p: &[f64],
    tokens: &[usize],
    mask: &[bool],
) -> ([f64; 2], ExampleCache) {
    let (d, f, h) = (c.d_model, c.d_ff, c.heads);
    let dk = d / h;
    let scale = 1.0 / (dk as f64).sqrt();
    let n = tokens.len();
    let mut x = vec![0.0; n * d];
    for (i, &t) in tokens.iter().enumerate() {
        let te = &p[lay.tok + t * d..lay.tok + (t + 1) * d];
        let pe = &p[lay.pos + i * d..lay.pos + (i + 1) * d];
        for j in 0..d {
            x[i * d + j] = te[j] + pe[j];
        }
    }
    let mut layers = Vec::with_capacity(c.layers);
    for o in &lay.layers {
        let blk = |off: usize, len: usize| &p[off..off + len];
        let (h1, n1) = layer_norm(&x, n, d, blk(o.ln1_g, d), blk(o.ln1_b, d));
        let q = affine(&h1, n, d, blk(o.wq, d * d), d, blk(o.bq, d));
        let k = affine(&h1, n, d, blk(o.wk, d * d), d, blk(o.bk, d));
        let v = affine(&h1, n, d, blk(o.wv, d * d), d, blk(o.bv, d));
        let mut attn = vec![0.0; h * n * n];
        let mut ctx = vec![0.0; n * d];
        for head in 0..h {
            let cols = head * dk..(head + 1) * dk;
            for i in 0..n {
                let row = &mut attn[(head * n + i) * n..(head * n + i + 1) * n];
                let qi = &q[i * d + cols.start..i * d + cols.end];
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    if mask[j] {
                        let kj = &k[j * d + cols.start..j * d + cols.end];
                        let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                        row[j] = s;
                        max = max.max(s);
                    }
                }
                let mut z = 0.0;
                for j in 0..n {
                    if mask[j] {
                        row[j] = (row[j] - max).exp();
                        z += row[j];
                    } else {
                        row[j] = 0.0;
                    }
                }
                row.iter_mut().for_each(|w| *w /= z);
                let ci = &mut ctx[i * d + cols.start..i * d + cols.end];
                for j in 0..n {
                    if row[j] != 0.0 {
                        let vj = &v[j * d + cols.start..j * d + cols.end];
                        for (cv, vv) in ci.iter_mut().zip(vj) {
                            *cv += row[j] * vv;
                        }
                    }
                }
            }
        }
        let attn_out = affine(&ctx, n, d, blk(o.wo, d * d), d, blk(o.bo, d));
        x.iter_mut().zip(&attn_out).for_each(|(a, b)| *a += b);
        let (h2, n2) = layer_norm(&x, n, d, blk(o.ln2_g, d), blk(o.ln2_b, d));
        let u = affine(&h2, n, d, blk(o.w1, d * f), f, blk(o.b1, f));
        let a: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
        let ff = affine(&a, n, f, blk(o.w2, f * d), d, blk(o.b2, d));
        x.iter_mut().zip(&ff).for_each(|(a, b)| *a += b);
        layers.push(LayerCache {
            h1,
            n1,
            q,
            k,
            v,
            attn,
            ctx,
            h2,
            n2,
            u,
            a,
        });
    }
    let valid = mask.iter().filter(|&&m| m).count();
    let mut pooled = vec![0.0; d];
    for i in (0..n).filter(|&i| mask[i]) {
        pooled.iter_mut().zip(&x[i * d..(i + 1) * d]).for_each(|(a, b)| *a += b);
    }
    pooled.iter_mut().for_each(|v| *v /= valid as f64);
    let logits_v = affine(
        &pooled,
        1,
        d,
        &p[lay.head_w..lay.head_w + 2 * d],
        2,
        &p[lay.head_b..lay.head_b + 2],
    );
    ([logits_v[0], logits_v[1]], ExampleCache { layers, pooled, valid })
}

/// Accumulate parameter gradients of `dlogits · logits` for one example.
#[allow(clippy::too_many_arguments)]
fn backward_example(
    c: &EncoderConfig,
    lay: &Layout,
    p: &[f64],
    tokens: &[usize],
    mask: &[bool],
    cache: &ExampleCache,
    dlogits: [f64; 2],
    grad: &mut [f64],
) {
    let (d, f, h) = (c.d_model, c.d_ff, c.heads);
    let dk = d / h;
    let scale = 1.0 / (dk as f64).sqrt();
    let n = tokens.len();

    let (gw, rest) = grad[lay.head_w..].split_at_mut(2 * d);
    let dpooled = affine_back(
        &cache.pooled,
        1,
        d,
        &p[lay.head_w..lay.head_w + 2 * d],
        2,
        &dlogits,
        gw,
        &mut rest[..2],
    );
    let mut dx = vec![0.0; n * d];
    for i in (0..n).filter(|&i| mask[i]) {
        for j in 0..d {
            dx[i * d + j] = dpooled[j] / cache.valid as f64;
        }
    }

    for (o, lc) in lay.layers.iter().zip(&cache.layers).rev() {
        let w = |off: usize, len: usize| &p[off..off + len];
        // feed-forward sublayer; the residual passes dx straight through
        let mut dw2 = vec![0.0; f * d];
        let mut db2 = vec![0.0; d];
        let da = affine_back(&lc.a, n, f, w(o.w2, f * d), d, &dx, &mut dw2, &mut db2);
        let du: Vec<f64> = da.iter().zip(&lc.u).map(|(g, &u)| g * gelu_grad(u)).collect();
        let mut dw1 = vec![0.0; d * f];
        let mut db1 = vec![0.0; f];
        let dh2 = affine_back(&lc.h2, n, d, w(o.w1, d * f), f, &du, &mut dw1, &mut db1);
        let mut dg2 = vec![0.0; d];
        let mut dbn2 = vec![0.0; d];
        let dxn = layer_norm_back(&lc.n2, n, d, w(o.ln2_g, d), &dh2, &mut dg2, &mut dbn2);
        dx.iter_mut().zip(&dxn).for_each(|(a, b)| *a += b);

        // attention sublayer
        let mut dwo = vec![0.0; d * d];
        let mut dbo = vec![0.0; d];
        let dctx = affine_back(&lc.ctx, n, d, w(o.wo, d * d), d, &dx, &mut dwo, &mut dbo);
        let mut dq = vec![0.0; n * d];
        let mut dkm = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let mut da_row = vec![0.0; n];
        for head in 0..h {
            let cs = head * dk;
            for i in 0..n {
                let arow = &lc.attn[(head * n + i) * n..(head * n + i + 1) * n];
                let dci = &dctx[i * d + cs..i * d + cs + dk];
                let mut dot = 0.0;
                for j in 0..n {
                    if arow[j] == 0.0 && !mask[j] {
                        da_row[j] = 0.0;
                        continue;
                    }
                    let vj = &lc.v[j * d + cs..j * d + cs + dk];
                    da_row[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                    dot += arow[j] * da_row[j];
                    let dvj = &mut dv[j * d + cs..j * d + cs + dk];
                    for (g, &dc) in dvj.iter_mut().zip(dci) {
                        *g += arow[j] * dc;
                    }
                }
                for j in 0..n {
                    if !mask[j] {
                        continue;
                    }
                    let ds = arow[j] * (da_row[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for t in 0..dk {
                        dq[i * d + cs + t] += ds * lc.k[j * d + cs + t];
                        dkm[j * d + cs + t] += ds * lc.q[i * d + cs + t];
                    }
                }
            }
        }
        let mut dh1 = vec![0.0; n * d];
        for (wo_off, bo_off, dy) in [(o.wq, o.bq, &dq), (o.wk, o.bk, &dkm), (o.wv, o.bv, &dv)] {
            let mut dwm = vec![0.0; d * d];
            let mut dbm = vec![0.0; d];
            let part = affine_back(&lc.h1, n, d, w(wo_off, d * d), d, dy, &mut dwm, &mut dbm);
            dh1.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
            add_into(&mut grad[wo_off..wo_off + d * d], &dwm);
            add_into(&mut grad[bo_off..bo_off + d], &dbm);
        }
        let mut dg1 = vec![0.0; d];
        let mut dbn1 = vec![0.0; d];
        let dxn = layer_norm_back(&lc.n1, n, d, w(o.ln1_g, d), &dh1, &mut dg1, &mut dbn1);
        dx.iter_mut().zip(&dxn).for_each(|(a, b)| *a += b);

        add_into(&mut grad[o.w2..o.w2 + f * d], &dw2);
        add_into(&mut grad[o.b2..o.b2 + d], &db2);
        add_into(&mut grad[o.w1..o.w1 + d * f], &dw1);
        add_into(&mut grad[o.b1..o.b1 + f], &db1);
        add_into(&mut grad[o.ln2_g..o.ln2_g + d], &dg2);
        add_into(&mut grad[o.ln2_b..o.ln2_b + d], &dbn2);
        add_into(&mut grad[o.wo..o.wo + d * d], &dwo);
        add_into(&mut grad[o.bo..o.bo + d], &dbo);
        add_into(&mut grad[o.ln1_g..o.ln1_g + d], &dg1);
        add_into(&mut grad[o.ln1_b..o.ln1_b + d], &dbn1);
    }

    for (i, &t) in tokens.iter().enumerate() {
        let dxi = &dx[i * d..(i + 1) * d];
        add_into(&mut grad[lay.tok + t * d..lay.tok + (t + 1) * d], dxi);
        add_into(&mut grad[lay.pos + i * d..lay.pos + (i + 1) * d], dxi);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Logits and attention maps for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub logits: Vec<[f64; 2]>,
    /// Flattened `layers × heads × B × L × L`.
    pub attention: Vec<f64>,
    pub layers: usize,
    pub heads: usize,
    pub batch: usize,
    pub len: usize,
}

impl ForwardOutput {
    /// Attention weights of query `i` in example `b`.
    pub fn attention_row(&self, layer: usize, head: usize, b: usize, i: usize) -> &[f64] {
        let l = self.len;
        let start = ((((layer * self.heads) + head) * self.batch + b) * l + i) * l;
        &self.attention[start..start + l]
    }
}

pub(crate) fn forward_batch(c: &EncoderConfig, lay: &Layout, p: &[f64], batch: &Batch) -> ForwardOutput {
    let (b, l, h) = (batch.size(), batch.len(), c.heads);
    let mut attention = vec![0.0; c.layers * h * b * l * l];
    let mut logits = Vec::with_capacity(b);
    for e in 0..b {
        let (lg, cache) = forward_example(c, lay, p, batch.tokens(e), batch.mask(e));
        logits.push(lg);
        for (layer, lc) in cache.layers.iter().enumerate() {
            for head in 0..h {
                let dst = (((layer * h) + head) * b + e) * l * l;
                attention[dst..dst + l * l].copy_from_slice(&lc.attn[head * l * l..(head + 1) * l * l]);
            }
        }
    }
    ForwardOutput {
        logits,
        attention,
        layers: c.layers,
        heads: h,
        batch: b,
        len: l,
    }
}

pub(crate) fn log_softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    [z[0] - lse, z[1] - lse]
}

fn target_index(label: crate::corpus::Label) -> usize {
    if label.is_fake() {
        0
    } else {
        1
    }
}

/// Mean cross-entropy of the batch.
pub(crate) fn batch_loss(c: &EncoderConfig, lay: &Layout, p: &[f64], batch: &Batch) -> f64 {
    let b = batch.size();
    (0..b)
        .map(|e| {
            let (lg, _) = forward_example(c, lay, p, batch.tokens(e), batch.mask(e));
            -log_softmax2(lg)[target_index(batch.labels()[e])]
        })
        .sum::<f64>()
        / b as f64
}

/// Mean cross-entropy and its exact gradient.
pub(crate) fn loss_and_grad(c: &EncoderConfig, lay: &Layout, p: &[f64], batch: &Batch) -> (f64, Vec<f64>) {
    let b = batch.size();
    let mut grad = vec![0.0; lay.total];
    let mut loss = 0.0;
    for e in 0..b {
        let (tokens, mask) = (batch.tokens(e), batch.mask(e));
        let (lg, cache) = forward_example(c, lay, p, tokens, mask);
        let ls = log_softmax2(lg);
        let t = target_index(batch.labels()[e]);
        loss -= ls[t];
        let mut dl = [ls[0].exp() / b as f64, ls[1].exp() / b as f64];
        dl[t] -= 1.0 / b as f64;
        backward_example(c, lay, p, tokens, mask, &cache, dl, &mut grad);
    }
    (loss / b as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_differences() {
        for u in [-3.0, -0.7, 0.0, 0.2, 1.5, 4.0] {
            let h = 1e-6;
            let num = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((num - gelu_grad(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn affine_back_matches_forward() {
        let x = [1.0, 2.0, -1.0, 0.5];
        let w = [0.3, -0.2, 0.1, 0.7, 0.4, -0.6];
        let b = [0.1, 0.2, 0.3];
        let y = affine(&x, 2, 2, &w, 3, &b);
        assert!((y[0] - (0.3 + 1.4 + 0.1)).abs() < 1e-15);
        let dy = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let mut dw = [0.0; 6];
        let mut db = [0.0; 3];
        let dx = affine_back(&x, 2, 2, &w, 3, &dy, &mut dw, &mut db);
        assert_eq!(dx, vec![0.3, 0.7, 0.1, -0.6]);
        assert_eq!(db, [1.0, 0.0, 1.0]);
        assert_eq!(dw, [1.0, 0.0, -1.0, 2.0, 0.0, 0.5]);
    }
}
