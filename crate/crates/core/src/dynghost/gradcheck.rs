use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::patterns::PatternSet;
use crate::rng::RngStream;

use super::config::DynGhostConfig;
use super::params::ParamStore;
use super::train::{sample_loss_and_grad, Sample};

/// Denominator floor of the relative error.
pub const GRAD_FLOOR: f64 = 1e-8;
/// Gate on the maximum relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn loss(&self, params: &[f64]) -> Result<f64>;
    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Additive pieces of the loss. Differences are taken piecewise before
    /// summing so that the rounding of a large total does not swamp them.
    fn loss_terms(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.loss(params)?])
    }
    fn param_name(&self, index: usize) -> String {
        format!("param[{index}]")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradProbe {
    pub index: usize,
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub probes: Vec<GradProbe>,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self) -> bool {
        self.max_rel_err < GRAD_TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Central differences at `probe_count` distinct indices drawn from `rng`.
pub fn gradient_check(obj: &dyn Objective, params: &[f64], probe_count: usize, h: f64, rng: &mut RngStream) -> Result<GradCheckReport> {
    if !(1e-6..=1e-4).contains(&h) {
        return Err(GhostError::Domain(format!("finite-difference step {h} outside [1e-6, 1e-4]")));
    }
    if params.is_empty() {
        return Err(GhostError::Domain("no parameters to probe".into()));
    }
    let count = probe_count.min(params.len());
    let mut chosen = std::collections::BTreeSet::new();
    let mut order = Vec::with_capacity(count);
    while order.len() < count {
        let k = rng.next_below(params.len() as u64) as usize;
        if chosen.insert(k) {
            order.push(k);
        }
    }
    let (_, grad) = obj.loss_and_grad(params)?;
    let mut work = params.to_vec();
    let mut probes = Vec::with_capacity(count);
    for k in order {
        let orig = work[k];
        work[k] = orig + h;
        let up = obj.loss_terms(&work)?;
        work[k] = orig - h;
        let down = obj.loss_terms(&work)?;
        work[k] = orig;
        if up.len() != down.len() {
            return Err(GhostError::Dimension("loss term count changed under perturbation".into()));
        }
        let numeric = up.iter().zip(&down).map(|(a, b)| a - b).sum::<f64>() / (2.0 * h);
        probes.push(GradProbe {
            index: k,
            name: obj.param_name(k),
            analytic: grad[k],
            numeric,
            rel_err: relative_error(grad[k], numeric),
        });
    }
    let max_rel_err = probes.iter().map(|p| p.rel_err).fold(0.0, f64::max);
    let mean_rel_err = probes.iter().map(|p| p.rel_err).sum::<f64>() / probes.len() as f64;
    Ok(GradCheckReport {
        step: h,
        probes,
        max_rel_err,
        mean_rel_err,
    })
}

/// Total training loss of one sequence as a function of the model parameters.
pub struct ModelObjective<'a> {
    pub config: &'a DynGhostConfig,
    pub template: &'a ParamStore,
    pub patterns: &'a PatternSet,
    pub sample: &'a Sample,
}

impl ModelObjective<'_> {
    fn store(&self, params: &[f64]) -> ParamStore {
        let mut p = self.template.clone();
        p.values_mut().copy_from_slice(params);
        p
    }
}

impl Objective for ModelObjective<'_> {
    fn loss(&self, params: &[f64]) -> Result<f64> {
        let p = self.store(params);
        super::train::sample_loss(self.config, &p, self.patterns, self.sample).map(|l| l.total)
    }

    fn loss_terms(&self, params: &[f64]) -> Result<Vec<f64>> {
        let p = self.store(params);
        let cfg = self.config;
        let pred = super::model::forward(cfg, &p, self.patterns, &self.sample.buckets, self.sample.frames)?;
        super::loss::loss_terms(&pred, &self.sample.truth, self.sample.frames, cfg.height, cfg.width, &cfg.loss)
    }

    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.store(params);
        let (l, g) = sample_loss_and_grad(self.config, &p, self.patterns, self.sample)?;
        Ok((l.total, g.values().to_vec()))
    }

    fn param_name(&self, index: usize) -> String {
        let name = self.template.name_of(index).unwrap_or("?");
        let start = self.template.slots().iter().find(|s| s.name == name).map_or(0, |s| s.range.start);
        format!("{name}[{}]", index - start)
    }
}
