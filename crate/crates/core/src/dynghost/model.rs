//! Forward pass with cached intermediates and the matching hand-derived
//! backward pass.
//!
//! Tokens are stored row-major as `[T * M, D]` with row `t * M + i`, so the
//! per-frame flatten feeding the head is a contiguous `[T, M * D]` view.
//! Linear layers compute `y = x W + b` with `W: [in, out]`.

use crate::error::{GhostError, Result};
use crate::linalg::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use crate::patterns::PatternSet;

use super::config::{BlockKind, DynGhostConfig};
use super::params::{BlockSlots, ParamStore};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (k * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    let t = (k * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * GELU_C * x * x)
}

/// Largest f64 below one; keeps saturated logits strictly inside (0, 1).
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// `x W + b` for `x: [rows, din]`.
fn linear(x: &[f64], w: &[f64], b: &[f64], rows: usize, din: usize, dout: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * dout);
    for _ in 0..rows {
        y.extend_from_slice(b);
    }
    matmul_acc(x, w, &mut y, rows, din, dout);
    y
}

/// Accumulates `dW += x^T dy`, `db += sum(dy)` and returns `dy W^T`.
#[allow(clippy::too_many_arguments)]
fn linear_back(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    rows: usize,
    din: usize,
    dout: usize,
) -> Vec<f64> {
    matmul_tn_acc(x, dy, dw, rows, din, dout);
    for r in 0..rows {
        for (a, g) in db.iter_mut().zip(&dy[r * dout..(r + 1) * dout]) {
            *a += g;
        }
    }
    let mut dx = vec![0.0; rows * din];
    matmul_nt_acc(dy, w, &mut dx, rows, dout, din);
    dx
}

struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &[f64], rows: usize, d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = is;
        for c in 0..d {
            let h = (row[c] - mean) * is;
            xhat[r * d + c] = h;
            y[r * d + c] = g[c] * h + b[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_back(dy: &[f64], cache: &LnCache, rows: usize, d: usize, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d];
    let mut dh = vec![0.0; d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        for c in 0..d {
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
            dh[c] = dyr[c] * g[c];
        }
        let mean_dh = dh.iter().sum::<f64>() / d as f64;
        let mean_dhx = dh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for c in 0..d {
            dx[r * d + c] = cache.inv_std[r] * (dh[c] - mean_dh - xh[c] * mean_dhx);
        }
    }
    dx
}

/// Index sets attended jointly by one block.
#[derive(Clone, Copy)]
struct Groups {
    kind: BlockKind,
    frames: usize,
    patterns: usize,
}

impl Groups {
    fn count(&self) -> usize {
        match self.kind {
            BlockKind::Spatial => self.frames,
            BlockKind::Temporal => self.patterns,
        }
    }

    fn size(&self) -> usize {
        match self.kind {
            BlockKind::Spatial => self.patterns,
            BlockKind::Temporal => self.frames,
        }
    }

    fn row(&self, g: usize, a: usize) -> usize {
        match self.kind {
            BlockKind::Spatial => g * self.patterns + a,
            BlockKind::Temporal => a * self.patterns + g,
        }
    }
}

struct AttnCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `[group, head, a, b]`
    probs: Vec<f64>,
    ctx: Vec<f64>,
}

fn attention(q: Vec<f64>, k: Vec<f64>, v: Vec<f64>, groups: Groups, d: usize, heads: usize) -> AttnCache {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (ng, gs) = (groups.count(), groups.size());
    let rows = ng * gs;
    let mut probs = vec![0.0; ng * heads * gs * gs];
    let mut ctx = vec![0.0; rows * d];
    let mut s = vec![0.0; gs];
    for g in 0..ng {
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for a in 0..gs {
                let ra = groups.row(g, a);
                let qa = &q[ra * d + cols.start..ra * d + cols.end];
                let mut mx = f64::NEG_INFINITY;
                for (b, sv) in s.iter_mut().enumerate() {
                    let rb = groups.row(g, b);
                    *sv = scale * qa.iter().zip(&k[rb * d + cols.start..rb * d + cols.end]).map(|(x, y)| x * y).sum::<f64>();
                    mx = mx.max(*sv);
                }
                let mut z = 0.0;
                for sv in s.iter_mut() {
                    *sv = (*sv - mx).exp();
                    z += *sv;
                }
                let base = ((g * heads + h) * gs + a) * gs;
                for b in 0..gs {
                    let p = s[b] / z;
                    probs[base + b] = p;
                    let rb = groups.row(g, b);
                    for c in cols.clone() {
                        ctx[ra * d + c] += p * v[rb * d + c];
                    }
                }
            }
        }
    }
    AttnCache { q, k, v, probs, ctx }
}

/// Returns `(dq, dk, dv)` for upstream `dctx`.
fn attention_back(cache: &AttnCache, dctx: &[f64], groups: Groups, d: usize, heads: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (ng, gs) = (groups.count(), groups.size());
    let rows = ng * gs;
    let (mut dq, mut dk, mut dv) = (vec![0.0; rows * d], vec![0.0; rows * d], vec![0.0; rows * d]);
    let mut dp = vec![0.0; gs];
    for g in 0..ng {
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for a in 0..gs {
                let ra = groups.row(g, a);
                let base = ((g * heads + h) * gs + a) * gs;
                let p = &cache.probs[base..base + gs];
                let mut inner = 0.0;
                for b in 0..gs {
                    let rb = groups.row(g, b);
                    let mut acc = 0.0;
                    for c in cols.clone() {
                        acc += dctx[ra * d + c] * cache.v[rb * d + c];
                        dv[rb * d + c] += p[b] * dctx[ra * d + c];
                    }
                    dp[b] = acc;
                    inner += p[b] * acc;
                }
                for b in 0..gs {
                    let ds = p[b] * (dp[b] - inner) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let rb = groups.row(g, b);
                    for c in cols.clone() {
                        dq[ra * d + c] += ds * cache.k[rb * d + c];
                        dk[rb * d + c] += ds * cache.q[ra * d + c];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

struct BlockCache {
    groups: Groups,
    ln1: LnCache,
    u: Vec<f64>,
    attn: AttnCache,
    ln2: LnCache,
    w: Vec<f64>,
    hpre: Vec<f64>,
    hact: Vec<f64>,
}

fn block_forward(z: &[f64], groups: Groups, cfg: &DynGhostConfig, p: &[f64], s: &BlockSlots) -> (Vec<f64>, BlockCache) {
    let d = cfg.embed_dim;
    let hm = cfg.mlp_hidden;
    let rows = groups.count() * groups.size();
    let (u, ln1) = layer_norm(z, rows, d, &p[s.ln1_g.clone()], &p[s.ln1_b.clone()]);
    let q = linear(&u, &p[s.wq.clone()], &p[s.bq.clone()], rows, d, d);
    let k = linear(&u, &p[s.wk.clone()], &p[s.bk.clone()], rows, d, d);
    let v = linear(&u, &p[s.wv.clone()], &p[s.bv.clone()], rows, d, d);
    let attn = attention(q, k, v, groups, d, cfg.heads);
    let o = linear(&attn.ctx, &p[s.wo.clone()], &p[s.bo.clone()], rows, d, d);
    let z1: Vec<f64> = z.iter().zip(&o).map(|(a, b)| a + b).collect();
    let (w, ln2) = layer_norm(&z1, rows, d, &p[s.ln2_g.clone()], &p[s.ln2_b.clone()]);
    let hpre = linear(&w, &p[s.w1.clone()], &p[s.b1.clone()], rows, d, hm);
    let hact: Vec<f64> = hpre.iter().map(|&x| gelu(x)).collect();
    let m = linear(&hact, &p[s.w2.clone()], &p[s.b2.clone()], rows, hm, d);
    let z2: Vec<f64> = z1.iter().zip(&m).map(|(a, b)| a + b).collect();
    (
        z2,
        BlockCache {
            groups,
            ln1,
            u,
            attn,
            ln2,
            w,
            hpre,
            hact,
        },
    )
}

fn block_backward(dz2: &[f64], c: &BlockCache, cfg: &DynGhostConfig, p: &[f64], s: &BlockSlots, g: &mut [f64]) -> Vec<f64> {
    let d = cfg.embed_dim;
    let hm = cfg.mlp_hidden;
    let rows = c.groups.count() * c.groups.size();
    let dhact = {
        let (dw, db) = split2(g, &s.w2, &s.b2);
        linear_back(&c.hact, &p[s.w2.clone()], dz2, dw, db, rows, hm, d)
    };
    let dhpre: Vec<f64> = dhact.iter().zip(&c.hpre).map(|(a, &x)| a * gelu_grad(x)).collect();
    let dw = {
        let (dw1, db1) = split2(g, &s.w1, &s.b1);
        linear_back(&c.w, &p[s.w1.clone()], &dhpre, dw1, db1, rows, d, hm)
    };
    let dz1_ln = {
        let (dg, db) = split2(g, &s.ln2_g, &s.ln2_b);
        layer_norm_back(&dw, &c.ln2, rows, d, &p[s.ln2_g.clone()], dg, db)
    };
    let dz1: Vec<f64> = dz2.iter().zip(&dz1_ln).map(|(a, b)| a + b).collect();

    let dctx = {
        let (dwo, dbo) = split2(g, &s.wo, &s.bo);
        linear_back(&c.attn.ctx, &p[s.wo.clone()], &dz1, dwo, dbo, rows, d, d)
    };
    let (dq, dk, dv) = attention_back(&c.attn, &dctx, c.groups, d, cfg.heads);
    let mut du = {
        let (dwq, dbq) = split2(g, &s.wq, &s.bq);
        linear_back(&c.u, &p[s.wq.clone()], &dq, dwq, dbq, rows, d, d)
    };
    for (dm, (wr, br)) in [(&dk, (&s.wk, &s.bk)), (&dv, (&s.wv, &s.bv))] {
        let (dwm, dbm) = split2(g, wr, br);
        let part = linear_back(&c.u, &p[wr.clone()], dm, dwm, dbm, rows, d, d);
        du.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    let dz_ln = {
        let (dg, db) = split2(g, &s.ln1_g, &s.ln1_b);
        layer_norm_back(&du, &c.ln1, rows, d, &p[s.ln1_g.clone()], dg, db)
    };
    dz1.iter().zip(&dz_ln).map(|(a, b)| a + b).collect()
}

/// Two disjoint mutable views into the gradient vector; `a` precedes `b`.
fn split2<'g>(g: &'g mut [f64], a: &std::ops::Range<usize>, b: &std::ops::Range<usize>) -> (&'g mut [f64], &'g mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

fn check_inputs(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, buckets: &[f64], frames: usize) -> Result<()> {
    if ps.count() != cfg.patterns || ps.height() != cfg.height || ps.width() != cfg.width {
        return Err(GhostError::Dimension(format!(
            "patterns {}x{}x{} do not match model {}x{}x{}",
            ps.count(),
            ps.height(),
            ps.width(),
            cfg.patterns,
            cfg.height,
            cfg.width
        )));
    }
    if frames == 0 || frames > cfg.max_frames {
        return Err(GhostError::Dimension(format!("{frames} frames outside 1..={}", cfg.max_frames)));
    }
    if buckets.len() != frames * cfg.patterns {
        return Err(GhostError::Dimension(format!("{} buckets for {frames}x{}", buckets.len(), cfg.patterns)));
    }
    if params.model.blocks.len() != cfg.blocks.len() || params.get("embed.weight").map(|w| w.len()) != Some(cfg.pixels() * (cfg.embed_dim - 1)) {
        return Err(GhostError::Dimension("parameters were built for another config".into()));
    }
    Ok(())
}

/// Pattern embedding `H W_e + b_e`, shared by every frame: `[M, D - 1]`.
fn pattern_embedding(cfg: &DynGhostConfig, p: &[f64], ps: &PatternSet, slots: &super::params::ModelSlots) -> Vec<f64> {
    linear(ps.values(), &p[slots.embed_w.clone()], &p[slots.embed_b.clone()], cfg.patterns, cfg.pixels(), cfg.embed_dim - 1)
}

/// Token grid `[T, M, D]`: pattern embedding with the bucket in the last
/// channel, plus spatial and (optionally) temporal position rows.
pub fn embed_tokens(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, buckets: &[f64], frames: usize) -> Result<Vec<f64>> {
    check_inputs(cfg, params, ps, buckets, frames)?;
    Ok(embed_with(cfg, params, ps, buckets, frames))
}

fn embed_with(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, buckets: &[f64], frames: usize) -> Vec<f64> {
    let (m, d) = (cfg.patterns, cfg.embed_dim);
    let p = params.values();
    let slots = &params.model;
    let e = pattern_embedding(cfg, p, ps, slots);
    let pos_s = &p[slots.pos_spatial.clone()];
    let pos_t = &p[slots.pos_temporal.clone()];
    let mut z = vec![0.0; frames * m * d];
    for t in 0..frames {
        for i in 0..m {
            let row = &mut z[(t * m + i) * d..(t * m + i + 1) * d];
            row[..d - 1].copy_from_slice(&e[i * (d - 1)..(i + 1) * (d - 1)]);
            row[d - 1] = buckets[t * m + i];
            for c in 0..d {
                row[c] += pos_s[i * d + c];
                if cfg.temporal_pos_enc {
                    row[c] += pos_t[t * d + c];
                }
            }
        }
    }
    z
}

/// Output of one block applied to a token grid, with its attention maps
/// laid out `[group, head, query, key]`.
#[derive(Clone, Debug)]
pub struct BlockOutput {
    pub tokens: Vec<f64>,
    pub attention: Vec<f64>,
    pub group_size: usize,
}

/// Apply block `index` of the model to `tokens: [T, M, D]`.
pub fn attention_block(cfg: &DynGhostConfig, params: &ParamStore, index: usize, tokens: &[f64], frames: usize) -> Result<BlockOutput> {
    let kind = *cfg
        .blocks
        .get(index)
        .ok_or_else(|| GhostError::Dimension(format!("block {index} of {}", cfg.blocks.len())))?;
    if tokens.len() != frames * cfg.patterns * cfg.embed_dim {
        return Err(GhostError::Dimension(format!("{} token values for {frames} frames", tokens.len())));
    }
    let groups = Groups {
        kind,
        frames,
        patterns: cfg.patterns,
    };
    let (out, cache) = block_forward(tokens, groups, cfg, params.values(), &params.model.blocks[index]);
    Ok(BlockOutput {
        tokens: out,
        attention: cache.attn.probs,
        group_size: groups.size(),
    })
}

/// Per-frame head on `[T, M * D]` tokens: logits `[T, H * W]` before the sigmoid.
fn head_forward(cfg: &DynGhostConfig, p: &[f64], slots: &super::params::ModelSlots, z: &[f64], frames: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let flat = cfg.patterns * cfg.embed_dim;
    let hpre = linear(z, &p[slots.head_w1.clone()], &p[slots.head_b1.clone()], frames, flat, cfg.head_hidden);
    let h: Vec<f64> = hpre.iter().map(|&x| gelu(x)).collect();
    let logits = linear(&h, &p[slots.head_w2.clone()], &p[slots.head_b2.clone()], frames, cfg.head_hidden, cfg.pixels());
    (hpre, h, logits)
}

/// `sigmoid(head(tokens))` for a token grid, bypassing the blocks.
pub fn head(cfg: &DynGhostConfig, params: &ParamStore, tokens: &[f64], frames: usize) -> Result<Vec<f64>> {
    if tokens.len() != frames * cfg.patterns * cfg.embed_dim {
        return Err(GhostError::Dimension(format!("{} token values for {frames} frames", tokens.len())));
    }
    let (_, _, logits) = head_forward(cfg, params.values(), &params.model, tokens, frames);
    Ok(logits.into_iter().map(sigmoid).collect())
}

pub(crate) struct Cache {
    frames: usize,
    blocks: Vec<BlockCache>,
    z_final: Vec<f64>,
    hpre: Vec<f64>,
    h: Vec<f64>,
    out: Vec<f64>,
}

impl Cache {
    pub(crate) fn output(&self) -> &[f64] {
        &self.out
    }
}

pub(crate) fn forward_cached(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, buckets: &[f64], frames: usize) -> Result<Cache> {
    check_inputs(cfg, params, ps, buckets, frames)?;
    let p = params.values();
    let mut z = embed_with(cfg, params, ps, buckets, frames);
    let mut blocks = Vec::with_capacity(cfg.blocks.len());
    for (kind, slots) in cfg.blocks.iter().zip(&params.model.blocks) {
        let groups = Groups {
            kind: *kind,
            frames,
            patterns: cfg.patterns,
        };
        let (next, cache) = block_forward(&z, groups, cfg, p, slots);
        z = next;
        blocks.push(cache);
    }
    let (hpre, h, logits) = head_forward(cfg, p, &params.model, &z, frames);
    let out: Vec<f64> = logits.into_iter().map(sigmoid).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(GhostError::NonFinite { name: "forward output".into() });
    }
    Ok(Cache {
        frames,
        blocks,
        z_final: z,
        hpre,
        h,
        out,
    })
}

/// Predicted frames `[T, H * W]`, every value in `(0, 1)`.
pub fn forward(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, buckets: &[f64], frames: usize) -> Result<Vec<f64>> {
    forward_cached(cfg, params, ps, buckets, frames).map(|c| c.out)
}

/// Parameter gradient given `d_out = dL / d(prediction)`.
pub(crate) fn backward(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, cache: &Cache, d_out: &[f64]) -> Result<ParamStore> {
    let p = params.values();
    let slots = &params.model;
    let mut grads = params.zeros_like();
    let frames = cache.frames;
    let (m, d) = (cfg.patterns, cfg.embed_dim);
    let flat = m * d;
    {
        let g = grads.values_mut();
        let dlogits: Vec<f64> = d_out.iter().zip(&cache.out).map(|(dy, y)| dy * y * (1.0 - y)).collect();
        let dh = {
            let (dw, db) = split2(g, &slots.head_w2, &slots.head_b2);
            linear_back(&cache.h, &p[slots.head_w2.clone()], &dlogits, dw, db, frames, cfg.head_hidden, cfg.pixels())
        };
        let dhpre: Vec<f64> = dh.iter().zip(&cache.hpre).map(|(a, &x)| a * gelu_grad(x)).collect();
        let mut dz = {
            let (dw, db) = split2(g, &slots.head_w1, &slots.head_b1);
            linear_back(&cache.z_final, &p[slots.head_w1.clone()], &dhpre, dw, db, frames, flat, cfg.head_hidden)
        };
        for (bc, bs) in cache.blocks.iter().zip(&slots.blocks).rev() {
            dz = block_backward(&dz, bc, cfg, p, bs, g);
        }
        // Embedding.
        let mut de = vec![0.0; m * (d - 1)];
        for t in 0..frames {
            for i in 0..m {
                let row = &dz[(t * m + i) * d..(t * m + i + 1) * d];
                for c in 0..d {
                    g[slots.pos_spatial.start + i * d + c] += row[c];
                    if cfg.temporal_pos_enc {
                        g[slots.pos_temporal.start + t * d + c] += row[c];
                    }
                }
                for c in 0..d - 1 {
                    de[i * (d - 1) + c] += row[c];
                }
            }
        }
        let (dw, db) = split2(g, &slots.embed_w, &slots.embed_b);
        matmul_tn_acc(ps.values(), &de, dw, m, cfg.pixels(), d - 1);
        for i in 0..m {
            for c in 0..d - 1 {
                db[c] += de[i * (d - 1) + c];
            }
        }
    }
    grads.check_finite()?;
    Ok(grads)
}
