use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::metrics::{ssim, ssim_map, ssim_with_grad, SSIM_WINDOW};

use super::config::LossWeights;

/// Weighted training loss and its components.
///
/// `ssim` is `1 - SSIM` averaged over frames. It is reported as 0 with
/// `ssim_defined = false` when frames are smaller than the SSIM window and
/// its weight is zero. `temporal_defined` is false for single-frame input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub ssim: f64,
    pub temporal: f64,
    pub ssim_defined: bool,
    pub temporal_defined: bool,
}

impl LossParts {
    pub fn combine(mse: f64, ssim: f64, temporal: f64, w: &LossWeights) -> f64 {
        w.mse * mse + w.ssim * ssim + w.temporal * temporal
    }

    pub(crate) fn mean(parts: &[LossParts]) -> LossParts {
        let n = parts.len() as f64;
        let avg = |f: fn(&LossParts) -> f64| parts.iter().map(f).sum::<f64>() / n;
        LossParts {
            total: avg(|p| p.total),
            mse: avg(|p| p.mse),
            ssim: avg(|p| p.ssim),
            temporal: avg(|p| p.temporal),
            ssim_defined: parts.iter().all(|p| p.ssim_defined),
            temporal_defined: parts.iter().all(|p| p.temporal_defined),
        }
    }
}

fn frames_of(v: &[f64], frames: usize, height: usize, width: usize) -> Result<Vec<Image>> {
    (0..frames)
        .map(|t| Image::from_vec(height, width, v[t * height * width..(t + 1) * height * width].to_vec()))
        .collect()
}

fn check(pred: &[f64], truth: &[f64], frames: usize, height: usize, width: usize) -> Result<()> {
    let n = frames * height * width;
    if frames == 0 || pred.len() != n || truth.len() != n {
        return Err(GhostError::Dimension(format!(
            "prediction {} and truth {} values for {frames}x{height}x{width}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Loss of flat `[T, H * W]` predictions and `dL / d(pred)`.
pub fn loss_with_grad(pred: &[f64], truth: &[f64], frames: usize, height: usize, width: usize, w: &LossWeights) -> Result<(LossParts, Vec<f64>)> {
    check(pred, truth, frames, height, width)?;
    let n = height * width;
    let tf = frames as f64;
    let mut grad = vec![0.0; pred.len()];

    let mut mse = 0.0;
    for (k, (p, t)) in pred.iter().zip(truth).enumerate() {
        let e = p - t;
        mse += e * e;
        grad[k] += w.mse * 2.0 * e / (tf * n as f64);
    }
    mse /= tf * n as f64;

    let fits = height >= SSIM_WINDOW && width >= SSIM_WINDOW;
    let (ssim_term, ssim_defined) = if fits {
        let pf = frames_of(pred, frames, height, width)?;
        let tfr = frames_of(truth, frames, height, width)?;
        let mut acc = 0.0;
        for t in 0..frames {
            if w.ssim > 0.0 {
                let (v, g) = ssim_with_grad(&pf[t], &tfr[t])?;
                acc += 1.0 - v;
                for (dst, gv) in grad[t * n..(t + 1) * n].iter_mut().zip(&g) {
                    *dst -= w.ssim * gv / tf;
                }
            } else {
                acc += 1.0 - ssim(&pf[t], &tfr[t])?;
            }
        }
        (acc / tf, true)
    } else if w.ssim > 0.0 {
        return Err(GhostError::Dimension(format!(
            "SSIM loss needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}"
        )));
    } else {
        (0.0, false)
    };

    let (temporal, temporal_defined) = if frames >= 2 {
        let pairs = (frames - 1) as f64;
        let mut acc = 0.0;
        for t in 0..frames - 1 {
            for k in 0..n {
                let e = (pred[(t + 1) * n + k] - pred[t * n + k]) - (truth[(t + 1) * n + k] - truth[t * n + k]);
                acc += e * e;
                let g = w.temporal * 2.0 * e / (pairs * n as f64);
                grad[(t + 1) * n + k] += g;
                grad[t * n + k] -= g;
            }
        }
        (acc / (pairs * n as f64), true)
    } else {
        (0.0, false)
    };

    let parts = LossParts {
        total: LossParts::combine(mse, ssim_term, temporal, w),
        mse,
        ssim: ssim_term,
        temporal,
        ssim_defined,
        temporal_defined,
    };
    Ok((parts, grad))
}

/// The weighted loss split into its smallest additive pieces (per pixel for
/// the squared-error terms, per window for SSIM). Their sum is the total.
pub fn loss_terms(pred: &[f64], truth: &[f64], frames: usize, height: usize, width: usize, w: &LossWeights) -> Result<Vec<f64>> {
    check(pred, truth, frames, height, width)?;
    let n = height * width;
    let tf = frames as f64;
    let mut terms: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| w.mse * (p - t).powi(2) / (tf * n as f64)).collect();
    if w.ssim > 0.0 {
        let pf = frames_of(pred, frames, height, width)?;
        let tfr = frames_of(truth, frames, height, width)?;
        for t in 0..frames {
            let map = ssim_map(&pf[t], &tfr[t])?;
            let nw = map.len() as f64;
            // 1 - mean(S) split evenly over windows.
            terms.extend(map.iter().map(|s| w.ssim * (1.0 - s) / (nw * tf)));
        }
    }
    if frames >= 2 && w.temporal > 0.0 {
        let pairs = (frames - 1) as f64;
        for t in 0..frames - 1 {
            for k in 0..n {
                let e = (pred[(t + 1) * n + k] - pred[t * n + k]) - (truth[(t + 1) * n + k] - truth[t * n + k]);
                terms.push(w.temporal * e * e / (pairs * n as f64));
            }
        }
    }
    Ok(terms)
}

pub fn loss_total(pred: &[f64], truth: &[f64], frames: usize, height: usize, width: usize, w: &LossWeights) -> Result<LossParts> {
    loss_with_grad(pred, truth, frames, height, width, w).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut r = RngStream::substream(seed, 0);
        (0..n).map(|_| r.next_f64()).collect()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let x = random(3 * 256, 1);
        let p = loss_total(&x, &x, 3, 16, 16, &LossWeights::default()).unwrap();
        assert_eq!(p.mse, 0.0);
        assert_eq!(p.temporal, 0.0);
        assert!(p.ssim.abs() < 1e-9 && p.total.abs() < 1e-9);
    }

    #[test]
    fn weights_combine() {
        let v = LossParts::combine(0.02, 0.1, 0.05, &LossWeights::default());
        assert!((v - 0.075).abs() < 1e-15);
    }

    #[test]
    fn constants_closed_form() {
        let pred = vec![0.3; 2 * 256];
        let truth = vec![0.7; 2 * 256];
        let p = loss_total(&pred, &truth, 2, 16, 16, &LossWeights::default()).unwrap();
        assert!((p.mse - 0.16).abs() < 1e-12);
        let expected = 1.0 - (2.0 * 0.21 + 1e-4) / (0.09 + 0.49 + 1e-4);
        assert!((p.ssim - expected).abs() < 1e-12);
        assert!((p.ssim - 0.2759).abs() < 1e-4);
        assert_eq!(p.temporal, 0.0);
    }

    #[test]
    fn terms_sum_to_total() {
        let x = random(3 * 256, 7);
        let y = random(3 * 256, 8);
        let w = LossWeights::default();
        let total = loss_total(&x, &y, 3, 16, 16, &w).unwrap().total;
        let terms: f64 = loss_terms(&x, &y, 3, 16, 16, &w).unwrap().iter().sum();
        assert!((total - terms).abs() < 1e-12);
    }

    #[test]
    fn single_frame_flags_temporal() {
        let x = random(256, 2);
        let y = random(256, 3);
        let p = loss_total(&x, &y, 1, 16, 16, &LossWeights::default()).unwrap();
        assert!(!p.temporal_defined);
        assert_eq!(p.temporal, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (t, h, w) = (3, 12, 12);
        let x = random(t * h * w, 4);
        let y = random(t * h * w, 5);
        let wts = LossWeights::default();
        let (_, g) = loss_with_grad(&x, &y, t, h, w, &wts).unwrap();
        let step = 1e-6;
        for k in [0, 50, 143, 200, 431] {
            let mut a = x.clone();
            a[k] += step;
            let mut b = x.clone();
            b[k] -= step;
            let fd = (loss_total(&a, &y, t, h, w, &wts).unwrap().total - loss_total(&b, &y, t, h, w, &wts).unwrap().total) / (2.0 * step);
            assert!((fd - g[k]).abs() < 1e-7 * (1.0 + fd.abs()), "{k}: {fd} {}", g[k]);
        }
    }

    #[test]
    fn small_frames_need_zero_ssim_weight() {
        let x = random(8, 6);
        let w = LossWeights::default();
        assert!(loss_total(&x, &x, 2, 2, 2, &w).is_err());
        let mse_only = LossWeights {
            mse: 1.0,
            ssim: 0.0,
            temporal: 0.0,
        };
        let p = loss_total(&x, &x, 2, 2, 2, &mse_only).unwrap();
        assert!(!p.ssim_defined);
    }
}
