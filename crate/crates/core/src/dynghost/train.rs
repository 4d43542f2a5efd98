use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::patterns::PatternSet;
use crate::rng::RngStream;

use super::config::DynGhostConfig;
use super::loss::{loss_total, loss_with_grad, LossParts};
use super::model::{backward, forward_cached};
use super::optim::{AdamWConfig, AdamWState};
use super::params::ParamStore;

/// One training sequence: normalized buckets `[T, M]` and truth `[T, H * W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub frames: usize,
    pub buckets: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 4,
            max_steps: None,
            optimizer: AdamWConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: ParamStore,
    /// Mean batch loss before each optimizer step.
    pub losses: Vec<LossParts>,
    pub steps: usize,
}

pub fn sample_loss(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, s: &Sample) -> Result<LossParts> {
    let cache = forward_cached(cfg, params, ps, &s.buckets, s.frames)?;
    loss_total(cache.output(), &s.truth, s.frames, cfg.height, cfg.width, &cfg.loss)
}

pub fn sample_loss_and_grad(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, s: &Sample) -> Result<(LossParts, ParamStore)> {
    let cache = forward_cached(cfg, params, ps, &s.buckets, s.frames)?;
    let (parts, d_out) = loss_with_grad(cache.output(), &s.truth, s.frames, cfg.height, cfg.width, &cfg.loss)?;
    let grads = backward(cfg, params, ps, &cache, &d_out)?;
    Ok((parts, grads))
}

/// Mean loss and gradient over a batch; per-item work runs in parallel and
/// is reduced in batch order.
pub fn batch_loss_and_grad(cfg: &DynGhostConfig, params: &ParamStore, ps: &PatternSet, batch: &[&Sample]) -> Result<(LossParts, ParamStore)> {
    if batch.is_empty() {
        return Err(GhostError::Domain("empty batch".into()));
    }
    let items: Vec<(LossParts, ParamStore)> = batch
        .par_iter()
        .map(|s| sample_loss_and_grad(cfg, params, ps, s))
        .collect::<Result<_>>()?;
    let mut grads = params.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    for (_, g) in &items {
        grads.add_scaled(g, scale);
    }
    let parts: Vec<LossParts> = items.iter().map(|(p, _)| *p).collect();
    Ok((LossParts::mean(&parts), grads))
}

/// Mini-batch AdamW. Each epoch visits the samples in an order shuffled by
/// `rng`; the final partial batch is kept.
pub fn train(cfg: &DynGhostConfig, ps: &PatternSet, samples: &[Sample], init: ParamStore, tcfg: &TrainConfig, rng: &mut RngStream) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(GhostError::Domain("training set is empty".into()));
    }
    if tcfg.batch_size == 0 {
        return Err(GhostError::Config("batch_size must be positive".into()));
    }
    let mut params = init;
    let mut opt = AdamWState::new(params.len(), tcfg.optimizer)?;
    let mut losses = Vec::new();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let limit = tcfg.max_steps.unwrap_or(usize::MAX);
    'epochs: for _ in 0..tcfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(tcfg.batch_size) {
            if losses.len() >= limit {
                break 'epochs;
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&k| &samples[k]).collect();
            let (parts, grads) = batch_loss_and_grad(cfg, &params, ps, &batch)?;
            opt.step(params.values_mut(), grads.values())?;
            params.check_finite()?;
            losses.push(parts);
        }
    }
    Ok(TrainReport {
        steps: losses.len(),
        params,
        losses,
    })
}
