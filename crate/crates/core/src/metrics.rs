//! Reconstruction quality: pixel-mean MSE, windowed SSIM, temporal
//! consistency and an empirical SNR.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated only where the
//! window fits inside the frame, biased local statistics, `K1 = 0.01`,
//! `K2 = 0.03`, dynamic range 1.

use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::scene::SceneSequence;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_extents(a: &Image, b: &Image) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(GhostError::Dimension(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_extents(a, b)?;
    let n = a.len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n)
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Weighted local means and centered second moments of one window.
struct WindowStats {
    mx: f64,
    my: f64,
    vx: f64,
    vy: f64,
    cov: f64,
}

fn window_stats(a: &[f64], b: &[f64], width: usize, r0: usize, c0: usize, g: &[f64; SSIM_WINDOW]) -> WindowStats {
    let (mut mx, mut my) = (0.0, 0.0);
    for (i, gi) in g.iter().enumerate() {
        for (j, gj) in g.iter().enumerate() {
            let k = (r0 + i) * width + c0 + j;
            mx += gi * gj * a[k];
            my += gi * gj * b[k];
        }
    }
    // Centered second pass; avoids cancellation in E[x^2] - mu^2.
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (i, gi) in g.iter().enumerate() {
        for (j, gj) in g.iter().enumerate() {
            let w = gi * gj;
            let k = (r0 + i) * width + c0 + j;
            let (dx, dy) = (a[k] - mx, b[k] - my);
            vx += w * dx * dx;
            vy += w * dy * dy;
            cov += w * dx * dy;
        }
    }
    WindowStats { mx, my, vx, vy, cov }
}

fn check_ssim_inputs(a: &Image, b: &Image) -> Result<(usize, usize)> {
    same_extents(a, b)?;
    let (h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(GhostError::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    Ok((h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1))
}

fn constants() -> (f64, f64) {
    ((SSIM_K1).powi(2), (SSIM_K2).powi(2))
}

/// Local SSIM at every window position, row-major over valid positions.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Vec<f64>> {
    let (oh, ow) = check_ssim_inputs(a, b)?;
    let g = gaussian_taps();
    let (c1, c2) = constants();
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        for c in 0..ow {
            let s = window_stats(a.data(), b.data(), a.width(), r, c, &g);
            out.push(((2.0 * s.mx * s.my + c1) * (2.0 * s.cov + c2)) / ((s.mx * s.mx + s.my * s.my + c1) * (s.vx + s.vy + c2)));
        }
    }
    Ok(out)
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let map = ssim_map(a, b)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// SSIM and its gradient with respect to the first argument.
pub fn ssim_with_grad(pred: &Image, truth: &Image) -> Result<(f64, Vec<f64>)> {
    let (oh, ow) = check_ssim_inputs(pred, truth)?;
    let g = gaussian_taps();
    let (c1, c2) = constants();
    let width = pred.width();
    let (x, y) = (pred.data(), truth.data());
    let nw = (oh * ow) as f64;
    let mut grad = vec![0.0; x.len()];
    let mut total = 0.0;
    for r in 0..oh {
        for c in 0..ow {
            let s = window_stats(x, y, width, r, c, &g);
            let a1 = 2.0 * s.mx * s.my + c1;
            let a2 = 2.0 * s.cov + c2;
            let b1 = s.mx * s.mx + s.my * s.my + c1;
            let b2 = s.vx + s.vy + c2;
            let val = a1 * a2 / (b1 * b2);
            total += val;
            // With normalized weights, d(vx)/dx_k = 2 g_k (x_k - mx) and
            // d(cov)/dx_k = g_k (y_k - my); the mean enters only via a1, b1.
            let d_mx = val * (2.0 * s.my / a1 - 2.0 * s.mx / b1);
            let d_vx = -val / b2;
            let d_cov = 2.0 * val / a2;
            for (i, gi) in g.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    let k = (r + i) * width + c + j;
                    grad[k] += gi * gj * (d_mx + 2.0 * (x[k] - s.mx) * d_vx + (y[k] - s.my) * d_cov) / nw;
                }
            }
        }
    }
    Ok((total / nw, grad))
}

fn check_sequences(pred: &[Image], truth: &[Image]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(GhostError::Dimension(format!("{} vs {} frames", pred.len(), truth.len())));
    }
    if pred.len() < 2 {
        return Err(GhostError::Domain("temporal consistency needs at least two frames".into()));
    }
    for (p, t) in pred.iter().zip(truth) {
        same_extents(p, t)?;
    }
    Ok(())
}

pub fn temporal_consistency_frames(pred: &[Image], truth: &[Image]) -> Result<f64> {
    check_sequences(pred, truth)?;
    let pairs = pred.len() - 1;
    let mut total = 0.0;
    for t in 0..pairs {
        let n = pred[t].len() as f64;
        let mut s = 0.0;
        for k in 0..pred[t].len() {
            let dp = pred[t + 1].data()[k] - pred[t].data()[k];
            let dt = truth[t + 1].data()[k] - truth[t].data()[k];
            s += (dp - dt).powi(2);
        }
        total += s / n;
    }
    Ok(total / pairs as f64)
}

pub fn temporal_consistency(pred: &SceneSequence, truth: &SceneSequence) -> Result<f64> {
    temporal_consistency_frames(pred.frames(), truth.frames())
}

/// `10 log10(P_signal / P_noise)`; `+inf` when the two inputs coincide.
pub fn snr_db(signal: &[f64], noisy: &[f64]) -> Result<f64> {
    if signal.len() != noisy.len() {
        return Err(GhostError::Dimension(format!("{} vs {} entries", signal.len(), noisy.len())));
    }
    let n = signal.len() as f64;
    let ps = signal.iter().map(|v| v * v).sum::<f64>() / n;
    if !(ps > 0.0) {
        return Err(GhostError::Domain("signal power is zero".into()));
    }
    let pn = signal.iter().zip(noisy).map(|(s, y)| (y - s).powi(2)).sum::<f64>() / n;
    if pn == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (ps / pn).log10())
}

/// `(mean, population standard deviation)`
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frame_mse: Vec<f64>,
    pub frame_ssim: Vec<f64>,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub temporal_consistency: Option<f64>,
    pub wall_ms: f64,
}

impl MetricsReport {
    /// Per-frame scores of `pred` against `truth`; frames are scored as given.
    pub fn evaluate(pred: &[Image], truth: &[Image], wall_ms: f64) -> Result<Self> {
        if pred.len() != truth.len() || pred.is_empty() {
            return Err(GhostError::Dimension(format!("{} vs {} frames", pred.len(), truth.len())));
        }
        let frame_mse = pred.iter().zip(truth).map(|(p, t)| mse(p, t)).collect::<Result<Vec<_>>>()?;
        let frame_ssim = pred.iter().zip(truth).map(|(p, t)| ssim(p, t)).collect::<Result<Vec<_>>>()?;
        let (mse_mean, mse_std) = mean_std(&frame_mse);
        let (ssim_mean, ssim_std) = mean_std(&frame_ssim);
        let temporal_consistency = if pred.len() >= 2 {
            Some(temporal_consistency_frames(pred, truth)?)
        } else {
            None
        };
        Ok(MetricsReport {
            frame_mse,
            frame_ssim,
            mse_mean,
            mse_std,
            ssim_mean,
            ssim_std,
            temporal_consistency,
            wall_ms,
        })
    }
}
