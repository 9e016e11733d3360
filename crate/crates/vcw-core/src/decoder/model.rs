//! Minimal decoder-only transformer with manual backpropagation.
//!
//! Pre-norm blocks (RMSNorm, rotary attention, GELU MLP) in 64-bit floats.
//! All parameters live in one flat vector so the optimizer and the
//! finite-difference gradient check can treat the model as a single point in
//! parameter space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rope::{rotate_in_place, FrequencyTable};

const RMS_EPS: f64 = 1e-6;

/// Parameter offsets into the flat weight vector.
#[derive(Debug, Clone)]
struct Layout {
    embed: usize,
    layers: Vec<LayerLayout>,
    final_norm: usize,
    head: usize,
    total: usize,
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    norm1: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    norm2: usize,
    w_up: usize,
    w_down: usize,
}

fn layout(config: &ModelConfig) -> Layout {
    let d = config.d_model;
    let rd = d * config.mlp_ratio;
    let mut off = 0usize;
    let embed = off;
    off += config.vocab_size * d;
    let mut layers = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        let norm1 = off;
        off += d;
        let wq = off;
        off += d * d;
        let wk = off;
        off += d * d;
        let wv = off;
        off += d * d;
        let wo = off;
        off += d * d;
        let norm2 = off;
        off += d;
        let w_up = off;
        off += d * rd;
        let w_down = off;
        off += rd * d;
        layers.push(LayerLayout {
            norm1,
            wq,
            wk,
            wv,
            wo,
            norm2,
            w_up,
            w_down,
        });
    }
    let final_norm = off;
    off += d;
    let head = off;
    off += d * config.vocab_size;
    Layout {
        embed,
        layers,
        final_norm,
        head,
        total: off,
    }
}

/// All decoder parameters plus the geometry they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

impl DecoderWeights {
    /// Random initialization: N(0, 0.02) projections with the residual output
    /// projections shrunk by 1/sqrt(2 * n_layers), unit norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let lay = layout(&config);
        let mut params = vec![0.0; lay.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let resid = Normal::new(0.0, 0.02 / (2.0 * config.n_layers as f64).sqrt()).unwrap();
        let d = config.d_model;
        let rd = d * config.mlp_ratio;
        for p in &mut params[lay.embed..lay.embed + config.vocab_size * d] {
            *p = normal.sample(&mut rng);
        }
        for l in &lay.layers {
            params[l.norm1..l.norm1 + d].fill(1.0);
            params[l.norm2..l.norm2 + d].fill(1.0);
            for p in &mut params[l.wq..l.wq + 3 * d * d] {
                *p = normal.sample(&mut rng);
            }
            for p in &mut params[l.wo..l.wo + d * d] {
                *p = resid.sample(&mut rng);
            }
            for p in &mut params[l.w_up..l.w_up + d * rd] {
                *p = normal.sample(&mut rng);
            }
            for p in &mut params[l.w_down..l.w_down + rd * d] {
                *p = resid.sample(&mut rng);
            }
        }
        params[lay.final_norm..lay.final_norm + d].fill(1.0);
        for p in &mut params[lay.head..lay.head + d * config.vocab_size] {
            *p = normal.sample(&mut rng);
        }
        Ok(Self { config, params })
    }

    /// Zeroes the output head; every position then emits uniform logits.
    pub fn zero_head(&mut self) {
        let lay = layout(&self.config);
        let len = self.config.d_model * self.config.vocab_size;
        self.params[lay.head..lay.head + len].fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }
}

// y += x (L x d_in) . w (d_in x d_out)
fn matmul(x: &[f64], w: &[f64], rows: usize, d_in: usize, d_out: usize, out: &mut [f64]) {
    for i in 0..rows {
        let xrow = &x[i * d_in..(i + 1) * d_in];
        let orow = &mut out[i * d_out..(i + 1) * d_out];
        for (k, &a) in xrow.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let wrow = &w[k * d_out..(k + 1) * d_out];
            for j in 0..d_out {
                orow[j] += a * wrow[j];
            }
        }
    }
}

// dw += x^T . dy
fn matmul_grad_w(x: &[f64], dy: &[f64], rows: usize, d_in: usize, d_out: usize, dw: &mut [f64]) {
    for i in 0..rows {
        let xrow = &x[i * d_in..(i + 1) * d_in];
        let dyrow = &dy[i * d_out..(i + 1) * d_out];
        for (k, &a) in xrow.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let dwrow = &mut dw[k * d_out..(k + 1) * d_out];
            for j in 0..d_out {
                dwrow[j] += a * dyrow[j];
            }
        }
    }
}

// dx += dy . w^T
fn matmul_grad_x(dy: &[f64], w: &[f64], rows: usize, d_in: usize, d_out: usize, dx: &mut [f64]) {
    for i in 0..rows {
        let dyrow = &dy[i * d_out..(i + 1) * d_out];
        let dxrow = &mut dx[i * d_in..(i + 1) * d_in];
        for k in 0..d_in {
            let wrow = &w[k * d_out..(k + 1) * d_out];
            let mut s = 0.0;
            for j in 0..d_out {
                s += dyrow[j] * wrow[j];
            }
            dxrow[k] += s;
        }
    }
}

fn rms_norm(x: &[f64], gain: &[f64], rows: usize, d: usize, out: &mut [f64], inv_rms: &mut [f64]) {
    for i in 0..rows {
        let xrow = &x[i * d..(i + 1) * d];
        let ms = xrow.iter().map(|v| v * v).sum::<f64>() / d as f64;
        let r = 1.0 / (ms + RMS_EPS).sqrt();
        inv_rms[i] = r;
        let orow = &mut out[i * d..(i + 1) * d];
        for j in 0..d {
            orow[j] = gain[j] * xrow[j] * r;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn rms_norm_backward(
    x: &[f64],
    gain: &[f64],
    inv_rms: &[f64],
    dy: &[f64],
    rows: usize,
    d: usize,
    dx: &mut [f64],
    dgain: &mut [f64],
) {
    for i in 0..rows {
        let xrow = &x[i * d..(i + 1) * d];
        let dyrow = &dy[i * d..(i + 1) * d];
        let r = inv_rms[i];
        let mut inner = 0.0;
        for j in 0..d {
            dgain[j] += dyrow[j] * xrow[j] * r;
            inner += dyrow[j] * gain[j] * xrow[j];
        }
        let scale = inner * r * r * r / d as f64;
        let dxrow = &mut dx[i * d..(i + 1) * d];
        for j in 0..d {
            dxrow[j] += gain[j] * dyrow[j] * r - xrow[j] * scale;
        }
    }
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

// Rotates each head slice of each row by its position, in place.
fn apply_rotary(x: &mut [f64], rows: usize, d: usize, head_dim: usize, table: &FrequencyTable) {
    for i in 0..rows {
        let row = &mut x[i * d..(i + 1) * d];
        for head in row.chunks_mut(head_dim) {
            rotate_in_place(head, i as u64, table).expect("head_dim matches table");
        }
    }
}

// Transpose of apply_rotary: rotation matrices are orthogonal, so the
// backward pass rotates by the negated angle.
fn apply_rotary_backward(
    dx: &mut [f64],
    rows: usize,
    d: usize,
    head_dim: usize,
    table: &FrequencyTable,
) {
    for i in 0..rows {
        let m = i as f64;
        let row = &mut dx[i * d..(i + 1) * d];
        for head in row.chunks_mut(head_dim) {
            for (p, &theta) in table.thetas().iter().enumerate() {
                let (sin, cos) = (m * theta).sin_cos();
                let a = head[2 * p];
                let b = head[2 * p + 1];
                head[2 * p] = a * cos + b * sin;
                head[2 * p + 1] = -a * sin + b * cos;
            }
        }
    }
}

struct LayerCache {
    x_in: Vec<f64>,
    n1: Vec<f64>,
    inv_rms1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// heads x rows x rows causal attention probabilities
    probs: Vec<f64>,
    attn: Vec<f64>,
    x_mid: Vec<f64>,
    n2: Vec<f64>,
    inv_rms2: Vec<f64>,
    up: Vec<f64>,
    hidden: Vec<f64>,
}

pub(crate) struct ForwardCache {
    rows: usize,
    layers: Vec<LayerCache>,
    x_final: Vec<f64>,
    nf: Vec<f64>,
    inv_rmsf: Vec<f64>,
    pub logits: Vec<f64>,
}

impl DecoderWeights {
    fn check_table(&self, table: &FrequencyTable) -> Result<()> {
        if table.head_dim() != self.config.head_dim() {
            return Err(Error::Argument(format!(
                "frequency table head_dim {} does not match model head_dim {}",
                table.head_dim(),
                self.config.head_dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(
        &self,
        tokens: &[u32],
        table: &FrequencyTable,
    ) -> Result<ForwardCache> {
        self.check_table(table)?;
        let rows = tokens.len();
        if rows == 0 {
            return Err(Error::Argument("empty token sequence".into()));
        }
        let cfg = &self.config;
        let d = cfg.d_model;
        let rd = d * cfg.mlp_ratio;
        let hd = cfg.head_dim();
        let heads = cfg.n_heads;
        let lay = layout(cfg);
        let p = &self.params;

        let mut x = vec![0.0; rows * d];
        for (i, &t) in tokens.iter().enumerate() {
            let t = t as usize;
            if t >= cfg.vocab_size {
                return Err(Error::Argument(format!(
                    "token {t} out of vocabulary (size {})",
                    cfg.vocab_size
                )));
            }
            x[i * d..(i + 1) * d].copy_from_slice(&p[lay.embed + t * d..lay.embed + (t + 1) * d]);
        }

        let scale = 1.0 / (hd as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in &lay.layers {
            let x_in = x.clone();
            let mut n1 = vec![0.0; rows * d];
            let mut inv_rms1 = vec![0.0; rows];
            rms_norm(
                &x_in,
                &p[l.norm1..l.norm1 + d],
                rows,
                d,
                &mut n1,
                &mut inv_rms1,
            );

            let mut q = vec![0.0; rows * d];
            let mut k = vec![0.0; rows * d];
            let mut v = vec![0.0; rows * d];
            matmul(&n1, &p[l.wq..l.wq + d * d], rows, d, d, &mut q);
            matmul(&n1, &p[l.wk..l.wk + d * d], rows, d, d, &mut k);
            matmul(&n1, &p[l.wv..l.wv + d * d], rows, d, d, &mut v);
            apply_rotary(&mut q, rows, d, hd, table);
            apply_rotary(&mut k, rows, d, hd, table);

            let mut probs = vec![0.0; heads * rows * rows];
            let mut attn = vec![0.0; rows * d];
            for h in 0..heads {
                let hoff = h * hd;
                for t in 0..rows {
                    let qrow = &q[t * d + hoff..t * d + hoff + hd];
                    let prow = &mut probs[(h * rows + t) * rows..(h * rows + t) * rows + rows];
                    let mut max = f64::NEG_INFINITY;
                    for u in 0..=t {
                        let krow = &k[u * d + hoff..u * d + hoff + hd];
                        let mut s = 0.0;
                        for j in 0..hd {
                            s += qrow[j] * krow[j];
                        }
                        let s = s * scale;
                        prow[u] = s;
                        if s > max {
                            max = s;
                        }
                    }
                    let mut sum = 0.0;
                    for u in 0..=t {
                        prow[u] = (prow[u] - max).exp();
                        sum += prow[u];
                    }
                    let inv = 1.0 / sum;
                    let orow = &mut attn[t * d + hoff..t * d + hoff + hd];
                    for u in 0..=t {
                        prow[u] *= inv;
                        let a = prow[u];
                        let vrow = &v[u * d + hoff..u * d + hoff + hd];
                        for j in 0..hd {
                            orow[j] += a * vrow[j];
                        }
                    }
                }
            }

            let mut x_mid = x_in.clone();
            matmul(&attn, &p[l.wo..l.wo + d * d], rows, d, d, &mut x_mid);

            let mut n2 = vec![0.0; rows * d];
            let mut inv_rms2 = vec![0.0; rows];
            rms_norm(
                &x_mid,
                &p[l.norm2..l.norm2 + d],
                rows,
                d,
                &mut n2,
                &mut inv_rms2,
            );

            let mut up = vec![0.0; rows * rd];
            matmul(&n2, &p[l.w_up..l.w_up + d * rd], rows, d, rd, &mut up);
            let hidden: Vec<f64> = up.iter().map(|&u| gelu(u)).collect();
            let mut x_out = x_mid.clone();
            matmul(
                &hidden,
                &p[l.w_down..l.w_down + rd * d],
                rows,
                rd,
                d,
                &mut x_out,
            );

            layers.push(LayerCache {
                x_in,
                n1,
                inv_rms1,
                q,
                k,
                v,
                probs,
                attn,
                x_mid,
                n2,
                inv_rms2,
                up,
                hidden,
            });
            x = x_out;
        }

        let mut nf = vec![0.0; rows * d];
        let mut inv_rmsf = vec![0.0; rows];
        rms_norm(
            &x,
            &p[lay.final_norm..lay.final_norm + d],
            rows,
            d,
            &mut nf,
            &mut inv_rmsf,
        );
        let mut logits = vec![0.0; rows * cfg.vocab_size];
        matmul(
            &nf,
            &p[lay.head..lay.head + d * cfg.vocab_size],
            rows,
            d,
            cfg.vocab_size,
            &mut logits,
        );
        Ok(ForwardCache {
            rows,
            layers,
            x_final: x,
            nf,
            inv_rmsf,
            logits,
        })
    }

    /// Per-position logits, shape `tokens.len() x vocab_size` flattened.
    pub fn forward(&self, tokens: &[u32], table: &FrequencyTable) -> Result<Vec<f64>> {
        Ok(self.forward_cached(tokens, table)?.logits)
    }

    /// Accumulates parameter gradients for `d loss / d logits` into `grads`.
    pub(crate) fn backward(
        &self,
        tokens: &[u32],
        cache: &ForwardCache,
        dlogits: &[f64],
        table: &FrequencyTable,
        grads: &mut [f64],
    ) {
        let cfg = &self.config;
        let rows = cache.rows;
        let d = cfg.d_model;
        let rd = d * cfg.mlp_ratio;
        let hd = cfg.head_dim();
        let heads = cfg.n_heads;
        let lay = layout(cfg);
        let p = &self.params;
        let scale = 1.0 / (hd as f64).sqrt();

        // head and final norm
        let mut dnf = vec![0.0; rows * d];
        matmul_grad_w(
            &cache.nf,
            dlogits,
            rows,
            d,
            cfg.vocab_size,
            &mut grads[lay.head..lay.head + d * cfg.vocab_size],
        );
        matmul_grad_x(
            dlogits,
            &p[lay.head..lay.head + d * cfg.vocab_size],
            rows,
            d,
            cfg.vocab_size,
            &mut dnf,
        );
        let mut dx = vec![0.0; rows * d];
        {
            let (dgain, _) = grads[lay.final_norm..].split_at_mut(d);
            rms_norm_backward(
                &cache.x_final,
                &p[lay.final_norm..lay.final_norm + d],
                &cache.inv_rmsf,
                &dnf,
                rows,
                d,
                &mut dx,
                dgain,
            );
        }

        for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // MLP
            let mut dhidden = vec![0.0; rows * rd];
            matmul_grad_w(
                &lc.hidden,
                &dx,
                rows,
                rd,
                d,
                &mut grads[l.w_down..l.w_down + rd * d],
            );
            matmul_grad_x(
                &dx,
                &p[l.w_down..l.w_down + rd * d],
                rows,
                rd,
                d,
                &mut dhidden,
            );
            let dup: Vec<f64> = dhidden
                .iter()
                .zip(&lc.up)
                .map(|(&g, &u)| g * gelu_grad(u))
                .collect();
            let mut dn2 = vec![0.0; rows * d];
            matmul_grad_w(
                &lc.n2,
                &dup,
                rows,
                d,
                rd,
                &mut grads[l.w_up..l.w_up + d * rd],
            );
            matmul_grad_x(&dup, &p[l.w_up..l.w_up + d * rd], rows, d, rd, &mut dn2);
            // dx currently holds d loss / d x_out; residual carries it to x_mid
            let mut dx_mid = dx;
            rms_norm_backward(
                &lc.x_mid,
                &p[l.norm2..l.norm2 + d],
                &lc.inv_rms2,
                &dn2,
                rows,
                d,
                &mut dx_mid,
                &mut grads[l.norm2..l.norm2 + d],
            );

            // attention output projection
            let mut dattn = vec![0.0; rows * d];
            matmul_grad_w(
                &lc.attn,
                &dx_mid,
                rows,
                d,
                d,
                &mut grads[l.wo..l.wo + d * d],
            );
            matmul_grad_x(&dx_mid, &p[l.wo..l.wo + d * d], rows, d, d, &mut dattn);

            // attention core
            let mut dq = vec![0.0; rows * d];
            let mut dk = vec![0.0; rows * d];
            let mut dv = vec![0.0; rows * d];
            let mut dscores = vec![0.0; rows];
            for h in 0..heads {
                let hoff = h * hd;
                for t in 0..rows {
                    let prow = &lc.probs[(h * rows + t) * rows..(h * rows + t) * rows + rows];
                    let dorow = &dattn[t * d + hoff..t * d + hoff + hd];
                    // dA and softmax backward
                    let mut dot = 0.0;
                    for u in 0..=t {
                        let vrow = &lc.v[u * d + hoff..u * d + hoff + hd];
                        let mut da = 0.0;
                        for j in 0..hd {
                            da += dorow[j] * vrow[j];
                        }
                        dscores[u] = da;
                        dot += da * prow[u];
                    }
                    for u in 0..=t {
                        let a = prow[u];
                        let ds = a * (dscores[u] - dot) * scale;
                        let dvrow = &mut dv[u * d + hoff..u * d + hoff + hd];
                        for j in 0..hd {
                            dvrow[j] += a * dorow[j];
                        }
                        if ds != 0.0 {
                            let qrow = &lc.q[t * d + hoff..t * d + hoff + hd];
                            let krow = &lc.k[u * d + hoff..u * d + hoff + hd];
                            let dqrow = &mut dq[t * d + hoff..t * d + hoff + hd];
                            for j in 0..hd {
                                dqrow[j] += ds * krow[j];
                            }
                            let dkrow = &mut dk[u * d + hoff..u * d + hoff + hd];
                            for j in 0..hd {
                                dkrow[j] += ds * qrow[j];
                            }
                        }
                    }
                }
            }
            apply_rotary_backward(&mut dq, rows, d, hd, table);
            apply_rotary_backward(&mut dk, rows, d, hd, table);

            let mut dn1 = vec![0.0; rows * d];
            matmul_grad_w(&lc.n1, &dq, rows, d, d, &mut grads[l.wq..l.wq + d * d]);
            matmul_grad_x(&dq, &p[l.wq..l.wq + d * d], rows, d, d, &mut dn1);
            matmul_grad_w(&lc.n1, &dk, rows, d, d, &mut grads[l.wk..l.wk + d * d]);
            matmul_grad_x(&dk, &p[l.wk..l.wk + d * d], rows, d, d, &mut dn1);
            matmul_grad_w(&lc.n1, &dv, rows, d, d, &mut grads[l.wv..l.wv + d * d]);
            matmul_grad_x(&dv, &p[l.wv..l.wv + d * d], rows, d, d, &mut dn1);

            let mut dx_in = dx_mid;
            rms_norm_backward(
                &lc.x_in,
                &p[l.norm1..l.norm1 + d],
                &lc.inv_rms1,
                &dn1,
                rows,
                d,
                &mut dx_in,
                &mut grads[l.norm1..l.norm1 + d],
            );
            dx = dx_in;
        }

        for (i, &t) in tokens.iter().enumerate() {
            let row = &dx[i * d..(i + 1) * d];
            let gr = &mut grads[lay.embed + t as usize * d..lay.embed + (t as usize + 1) * d];
            for j in 0..d {
                gr[j] += row[j];
            }
        }
    }
}

/// One training sequence; `targets[i]`, when present, is the expected next
/// token after position `i`.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub tokens: Vec<u32>,
    pub targets: Vec<Option<u32>>,
}

impl Sequence {
    /// Scores every position against the following token.
    pub fn next_token(tokens: Vec<u32>) -> Self {
        let mut targets: Vec<Option<u32>> = tokens.iter().skip(1).map(|&t| Some(t)).collect();
        targets.push(None);
        Self { tokens, targets }
    }
}

/// Mean cross-entropy over all scored positions, plus gradients for every
/// weight in the same flat layout as `weights.params`.
pub fn loss_and_gradients(
    weights: &DecoderWeights,
    batch: &[Sequence],
    table: &FrequencyTable,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let vocab = weights.config.vocab_size;
    let scored: usize = batch
        .iter()
        .map(|s| s.targets.iter().flatten().count())
        .sum();
    if scored == 0 {
        return Err(Error::Argument("batch has no scored positions".into()));
    }
    let inv = 1.0 / scored as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; weights.num_params()];
    for seq in batch {
        if seq.targets.len() != seq.tokens.len() {
            return Err(Error::Argument(
                "targets length must match tokens length".into(),
            ));
        }
        let cache = weights.forward_cached(&seq.tokens, table)?;
        let mut dlogits = vec![0.0; cache.logits.len()];
        for (i, target) in seq.targets.iter().enumerate() {
            let Some(target) = *target else { continue };
            if target as usize >= vocab {
                return Err(Error::Argument(format!(
                    "target token {target} out of vocabulary"
                )));
            }
            let row = &cache.logits[i * vocab..(i + 1) * vocab];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&l| (l - max).exp()).sum();
            let log_z = max + sum.ln();
            loss += (log_z - row[target as usize]) * inv;
            let drow = &mut dlogits[i * vocab..(i + 1) * vocab];
            for j in 0..vocab {
                drow[j] = (row[j] - log_z).exp() * inv;
            }
            drow[target as usize] -= inv;
        }
        weights.backward(&seq.tokens, &cache, &dlogits, table, &mut grads);
    }
    Ok((loss, grads))
}

/// Argmax over the last position's logits; ties go to the lowest token id.
pub fn greedy_next_token(
    weights: &DecoderWeights,
    tokens: &[u32],
    table: &FrequencyTable,
) -> Result<u32> {
    let logits = weights.forward(tokens, table)?;
    let vocab = weights.config.vocab_size;
    let last = &logits[(tokens.len() - 1) * vocab..];
    let mut best = 0usize;
    for j in 1..vocab {
        if last[j] > last[best] {
            best = j;
        }
    }
    Ok(best as u32)
}
