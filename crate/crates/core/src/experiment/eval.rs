use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{ExperimentConfig, Learner};
use super::dataset::{intensities, streams, SequenceRecord};
use crate::dynghost::{forward, train, DynGhostConfig, ParamStore, Sample, TrainConfig};
use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::metrics::{mean_std, mse, ssim, temporal_consistency_frames};
use crate::normalize::{Normalizer, NormalizerKind};
use crate::patterns::PatternSet;
use crate::recon::{dgi, fista, raw_buckets, FistaConfig, PseudoInverse};
use crate::rng::RngStream;

/// Ridge regression from one frame's normalized buckets to its pixels.
#[derive(Clone, Debug)]
pub struct LinearProbe {
    patterns: usize,
    pixels: usize,
    /// `[M + 1, N]`, last row is the intercept.
    weights: DMatrix<f64>,
}

impl LinearProbe {
    pub fn fit(inputs: &[Vec<f64>], targets: &[Vec<f64>], ridge: f64) -> Result<Self> {
        let Some(first) = inputs.first() else {
            return Err(GhostError::DegenerateFit("no training frames".into()));
        };
        let m = first.len();
        let n = targets[0].len();
        let rows = inputs.len();
        let x = DMatrix::from_fn(rows, m + 1, |r, c| if c == m { 1.0 } else { inputs[r][c] });
        let y = DMatrix::from_fn(rows, n, |r, c| targets[r][c]);
        let mut gram = x.transpose() * &x;
        for i in 0..m {
            gram[(i, i)] += ridge * rows as f64;
        }
        let rhs = x.transpose() * y;
        let weights = gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| GhostError::DegenerateFit("singular probe system; raise model.ridge".into()))?;
        Ok(LinearProbe {
            patterns: m,
            pixels: n,
            weights,
        })
    }

    pub fn predict(&self, buckets: &[f64]) -> Vec<f64> {
        (0..self.pixels)
            .map(|j| {
                let mut acc = self.weights[(self.patterns, j)];
                for (i, &b) in buckets.iter().enumerate() {
                    acc += b * self.weights[(i, j)];
                }
                acc.clamp(0.0, 1.0)
            })
            .collect()
    }
}

pub enum Reconstructor {
    Dgi,
    Pi(PseudoInverse),
    Fista(FistaConfig),
    Model {
        config: DynGhostConfig,
        params: ParamStore,
        normalizer: Normalizer,
    },
    Linear {
        probe: LinearProbe,
        normalizer: Normalizer,
    },
}

fn normalized(nz: &Normalizer, rec: &SequenceRecord) -> Result<Vec<f64>> {
    let clean: Vec<f64> = rec.buckets.values().iter().map(|v| v.max(0.0)).collect();
    nz.apply_all(&clean)
}

impl Reconstructor {
    /// Frames of one sequence and the per-frame wall time in ms.
    pub fn run(&self, ps: &PatternSet, rec: &SequenceRecord) -> Result<(Vec<Image>, f64)> {
        let (h, w) = (ps.height(), ps.width());
        let t = rec.buckets.frames();
        let m = rec.buckets.patterns();
        let start = Instant::now();
        let frames = match self {
            Reconstructor::Dgi | Reconstructor::Pi(_) | Reconstructor::Fista(_) => {
                let mu = intensities(&rec.buckets)?;
                let mut out = Vec::with_capacity(t);
                for f in 0..t {
                    let b = raw_buckets(ps, &mu[f * m..(f + 1) * m]);
                    let r = match self {
                        Reconstructor::Dgi => dgi(ps, &b)?,
                        Reconstructor::Pi(pinv) => pinv.solve(&b)?,
                        Reconstructor::Fista(cfg) => fista(ps, &b, cfg)?,
                        _ => unreachable!(),
                    };
                    out.push(r.image);
                }
                out
            }
            Reconstructor::Model {
                config,
                params,
                normalizer,
            } => {
                let input = normalized(normalizer, rec)?;
                let flat = forward(config, params, ps, &input, t)?;
                flat.chunks(h * w)
                    .map(|c| Image::from_vec(h, w, c.to_vec()))
                    .collect::<Result<Vec<_>>>()?
            }
            Reconstructor::Linear { probe, normalizer } => {
                let input = normalized(normalizer, rec)?;
                input
                    .chunks(m)
                    .map(|b| Image::from_vec(h, w, probe.predict(b)))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let ms = start.elapsed().as_secs_f64() * 1e3 / t as f64;
        Ok((frames, ms))
    }
}

/// Scores of one method over a set of sequences.
#[derive(Clone, Debug, Serialize)]
pub struct MethodScores {
    pub method: String,
    /// `[sequence][frame]`.
    pub mse: Vec<Vec<f64>>,
    pub ssim: Vec<Vec<f64>>,
    pub temporal_consistency: Vec<f64>,
    pub time_ms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mse_mean: f64,
    pub mse_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub temporal_consistency: Option<f64>,
    pub time_ms: f64,
}

impl MethodScores {
    pub fn frames(&self) -> usize {
        self.mse.first().map_or(0, Vec::len)
    }

    /// Mean and std across sequences at frame `t`.
    pub fn at_frame(&self, t: usize) -> (f64, f64, f64, f64) {
        let mse: Vec<f64> = self.mse.iter().map(|s| s[t]).collect();
        let ssim: Vec<f64> = self.ssim.iter().map(|s| s[t]).collect();
        let (a, b) = mean_std(&mse);
        let (c, d) = mean_std(&ssim);
        (a, b, c, d)
    }

    pub fn summary(&self) -> Summary {
        let all_mse: Vec<f64> = self.mse.iter().flatten().copied().collect();
        let all_ssim: Vec<f64> = self.ssim.iter().flatten().copied().collect();
        let (mse_mean, mse_std) = mean_std(&all_mse);
        let (ssim_mean, ssim_std) = mean_std(&all_ssim);
        Summary {
            mse_mean,
            mse_std,
            ssim_mean,
            ssim_std,
            temporal_consistency: (!self.temporal_consistency.is_empty())
                .then(|| mean_std(&self.temporal_consistency).0),
            time_ms: mean_std(&self.time_ms).0,
        }
    }
}

pub fn score(method: &str, rc: &Reconstructor, ps: &PatternSet, records: &[SequenceRecord], timing: bool) -> Result<MethodScores> {
    let mut out = MethodScores {
        method: method.to_string(),
        mse: Vec::new(),
        ssim: Vec::new(),
        temporal_consistency: Vec::new(),
        time_ms: Vec::new(),
    };
    for rec in records {
        let (pred, ms) = rc.run(ps, rec)?;
        let truth = rec.scene.frames();
        out.mse.push(pred.iter().zip(truth).map(|(p, t)| mse(p, t)).collect::<Result<_>>()?);
        out.ssim.push(pred.iter().zip(truth).map(|(p, t)| ssim(p, t)).collect::<Result<_>>()?);
        if truth.len() > 1 {
            out.temporal_consistency.push(temporal_consistency_frames(&pred, truth)?);
        }
        out.time_ms.push(if timing { ms } else { 0.0 });
    }
    Ok(out)
}

/// Fit a normalizer on every (non-negative) bucket value of `records`.
pub fn fit_normalizer(kind: NormalizerKind, records: &[SequenceRecord]) -> Result<Normalizer> {
    let all: Vec<f64> = records
        .iter()
        .flat_map(|r| r.buckets.values().iter().map(|v| v.max(0.0)))
        .collect();
    Normalizer::fit(kind, &all)
}

pub fn samples(nz: &Normalizer, records: &[SequenceRecord]) -> Result<Vec<Sample>> {
    records
        .iter()
        .map(|r| {
            Ok(Sample {
                frames: r.scene.len(),
                buckets: normalized(nz, r)?,
                truth: r.scene.to_tensor().into_data(),
            })
        })
        .collect()
}

/// Trained learner and its per-step training losses.
pub struct Fitted {
    pub reconstructor: Reconstructor,
    pub losses: Vec<f64>,
}

pub fn init_seed(cfg: &ExperimentConfig) -> u64 {
    RngStream::substream(cfg.seeds.master, streams::INIT).next_u64()
}

pub fn train_model(
    cfg: &ExperimentConfig,
    arch: &DynGhostConfig,
    tcfg: &TrainConfig,
    ps: &PatternSet,
    train_set: &[SequenceRecord],
    nz: Normalizer,
) -> Result<(ParamStore, Vec<crate::dynghost::LossParts>, usize, Normalizer)> {
    let data = samples(&nz, train_set)?;
    let init = ParamStore::init(arch, init_seed(cfg))?;
    let mut rng = RngStream::substream(cfg.seeds.master, streams::SHUFFLE);
    let report = train(arch, ps, &data, init, tcfg, &mut rng)?;
    Ok((report.params, report.losses, report.steps, nz))
}

/// Train the configured learner with `arch` on `train_set`.
pub fn fit_learner(
    cfg: &ExperimentConfig,
    learner: Learner,
    arch: &DynGhostConfig,
    ps: &PatternSet,
    train_set: &[SequenceRecord],
    kind: NormalizerKind,
) -> Result<Fitted> {
    let nz = fit_normalizer(kind, train_set)?;
    match learner {
        Learner::Dynghost => {
            let (params, losses, _, normalizer) = train_model(cfg, arch, &cfg.model.train, ps, train_set, nz)?;
            Ok(Fitted {
                reconstructor: Reconstructor::Model {
                    config: arch.clone(),
                    params,
                    normalizer,
                },
                losses: losses.iter().map(|l| l.total).collect(),
            })
        }
        Learner::LinearProbe => {
            let m = ps.count();
            let n = ps.pixels();
            let mut inputs = Vec::new();
            let mut targets = Vec::new();
            for rec in train_set {
                let b = normalized(&nz, rec)?;
                for (t, frame) in rec.scene.frames().iter().enumerate() {
                    inputs.push(b[t * m..(t + 1) * m].to_vec());
                    targets.push(frame.data()[..n].to_vec());
                }
            }
            let probe = LinearProbe::fit(&inputs, &targets, cfg.model.ridge)?;
            Ok(Fitted {
                reconstructor: Reconstructor::Linear { probe, normalizer: nz },
                losses: Vec::new(),
            })
        }
    }
}
