use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DetectorKind, ExperimentConfig, MethodKind};
use super::dataset::{measure, streams, Dataset, SequenceRecord, Split};
use super::eval::{fit_learner, fit_normalizer, init_seed, samples, score, train_model, MethodScores, Reconstructor, Summary};
use super::report::{ensure_dir, write_json, Cell, CsvTable};
use crate::dynghost::{gradient_check, load_checkpoint, save_checkpoint, GradCheckReport, ModelObjective, ParamStore};
use crate::error::{GhostError, Result};
use crate::measurement::{ideal_intensity, sigma_for_snr};
use crate::metrics::snr_db;
use crate::normalize::{Normalizer, NormalizerKind};
use crate::patterns::PatternSet;
use crate::qdetector::signal_to_dark_ratio;
use crate::rng::{sample_poisson, RngStream};

pub const NORMALIZER_FILE: &str = "normalizer.json";

/// Files a command wrote and whether its gate (if any) passed.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub gate: Option<(bool, String)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.gate.as_ref().is_none_or(|(ok, _)| *ok)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalizerRecord {
    config_hash: String,
    normalizer: Normalizer,
}

fn command_dir(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg.output_dir.join(name);
    ensure_dir(&dir)?;
    Ok(dir)
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let (_, ds) = Dataset::load(&cfg.dataset_dir())?;
    let r = &cfg.scene.recipe;
    if ds.patterns.count() != cfg.patterns.count || (ds.patterns.height(), ds.patterns.width()) != (r.height, r.width) {
        return Err(GhostError::Config(format!(
            "dataset at {} does not match the configured patterns",
            cfg.dataset_dir().display()
        )));
    }
    Ok(ds)
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = super::dataset::simulate(cfg)?;
    let dir = cfg.dataset_dir();
    ensure_dir(&dir)?;
    let manifest = ds.save(&dir, &cfg.hash())?;
    let config_path = dir.join("config.json");
    write_json(&config_path, cfg)?;
    Ok(Outcome {
        outputs: vec![manifest],
        gate: None,
    })
}

fn load_model(cfg: &ExperimentConfig) -> Result<Reconstructor> {
    let dir = cfg.checkpoint_dir();
    let (manifest, params) = load_checkpoint(&dir)?;
    let path = dir.join(NORMALIZER_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| GhostError::io(&path, e))?;
    let rec: NormalizerRecord = serde_json::from_str(&text).map_err(|e| GhostError::format(&path, e.to_string()))?;
    Ok(Reconstructor::Model {
        config: manifest.config,
        params,
        normalizer: rec.normalizer,
    })
}

/// Reconstructors for `methods`, with the pseudo-inverse setup time in ms.
fn build_methods(cfg: &ExperimentConfig, ps: &PatternSet, methods: &[MethodKind]) -> Result<(Vec<(MethodKind, Reconstructor)>, f64)> {
    let mut out = Vec::new();
    let mut setup_ms = 0.0;
    for &m in methods {
        let rc = match m {
            MethodKind::Dgi => Reconstructor::Dgi,
            MethodKind::Pi => {
                let start = Instant::now();
                let pinv = crate::recon::PseudoInverse::new(ps)?;
                setup_ms = start.elapsed().as_secs_f64() * 1e3;
                Reconstructor::Pi(pinv)
            }
            MethodKind::Fista => Reconstructor::Fista(cfg.reconstructors.fista),
            MethodKind::DynghostCheckpoint => load_model(cfg)?,
        };
        out.push((m, rc));
    }
    if !cfg.reconstructors.timing {
        setup_ms = 0.0;
    }
    Ok((out, setup_ms))
}

#[derive(Serialize)]
struct MethodSummary<'a> {
    method: &'a str,
    #[serde(flatten)]
    summary: Summary,
}

#[derive(Serialize)]
struct ReconstructReport<'a> {
    config_hash: String,
    detector: DetectorKind,
    sampling_ratio: f64,
    sequences: usize,
    pi_setup_ms: f64,
    methods: Vec<MethodSummary<'a>>,
}

pub fn reconstruct_table(scores: &[MethodScores]) -> CsvTable {
    let mut table = CsvTable::new(&["method", "frame", "mse", "ssim", "time_ms", "mse_std", "ssim_std"]);
    for s in scores {
        let time = s.summary().time_ms;
        for t in 0..s.frames() {
            let (mse, mse_sd, ssim, ssim_sd) = s.at_frame(t);
            table.push(vec![
                s.method.as_str().into(),
                t.into(),
                mse.into(),
                ssim.into(),
                time.into(),
                mse_sd.into(),
                ssim_sd.into(),
            ]);
        }
        let sum = s.summary();
        table.push(vec![
            s.method.as_str().into(),
            "summary".into(),
            sum.mse_mean.into(),
            sum.ssim_mean.into(),
            sum.time_ms.into(),
            sum.mse_std.into(),
            sum.ssim_std.into(),
        ]);
    }
    table
}

pub fn cmd_reconstruct(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = load_dataset(cfg)?;
    let (methods, pi_setup_ms) = build_methods(cfg, &ds.patterns, &cfg.reconstructors.methods)?;
    let mut scores = Vec::new();
    for (m, rc) in &methods {
        scores.push(score(m.as_str(), rc, &ds.patterns, &ds.eval, cfg.reconstructors.timing)?);
    }
    let dir = command_dir(cfg, "reconstruct")?;
    let hash = cfg.hash();
    let csv = dir.join("metrics.csv");
    reconstruct_table(&scores).write(&csv, &hash)?;
    let report = ReconstructReport {
        config_hash: hash,
        detector: ds.detector,
        sampling_ratio: crate::patterns::sampling_ratio(&ds.patterns),
        sequences: ds.eval.len(),
        pi_setup_ms,
        methods: scores
            .iter()
            .map(|s| MethodSummary {
                method: &s.method,
                summary: s.summary(),
            })
            .collect(),
    };
    let json = dir.join("report.json");
    write_json(&json, &report)?;
    Ok(Outcome {
        outputs: vec![csv, json],
        gate: None,
    })
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = load_dataset(cfg)?;
    let nz = fit_normalizer(cfg.normalization.kind, &ds.train)?;
    let arch = &cfg.model.architecture;
    let (params, losses, steps, nz) = train_model(cfg, arch, &cfg.model.train, &ds.patterns, &ds.train, nz)?;
    let hash = cfg.hash();
    let ckpt = cfg.checkpoint_dir();
    save_checkpoint(&ckpt, arch, &params, steps, &cfg.model.train.optimizer)?;
    write_json(
        &ckpt.join(NORMALIZER_FILE),
        &NormalizerRecord {
            config_hash: hash.clone(),
            normalizer: nz,
        },
    )?;
    let dir = command_dir(cfg, "train")?;
    let mut table = CsvTable::new(&["step", "total", "mse", "ssim", "temporal"]);
    for (k, l) in losses.iter().enumerate() {
        table.push(vec![(k + 1).into(), l.total.into(), l.mse.into(), l.ssim.into(), l.temporal.into()]);
    }
    let csv = dir.join("losses.csv");
    table.write(&csv, &hash)?;
    let model = Reconstructor::Model {
        config: arch.clone(),
        params,
        normalizer: nz,
    };
    let eval = score("dynghost", &model, &ds.patterns, &ds.eval, false)?;
    let json = dir.join("report.json");
    write_json(
        &json,
        &serde_json::json!({
            "config_hash": hash,
            "steps": steps,
            "final_loss": losses.last().map(|l| l.total),
            "eval": eval.summary(),
        }),
    )?;
    Ok(Outcome {
        outputs: vec![ckpt, csv, json],
        gate: None,
    })
}

pub fn run_gradcheck(cfg: &ExperimentConfig, ds: &Dataset) -> Result<GradCheckReport> {
    let arch = &cfg.model.architecture;
    let nz = fit_normalizer(cfg.normalization.kind, &ds.train)?;
    let sample = samples(&nz, &ds.train[..1])?.remove(0);
    let params = ParamStore::init(arch, init_seed(cfg))?;
    let obj = ModelObjective {
        config: arch,
        template: &params,
        patterns: &ds.patterns,
        sample: &sample,
    };
    let mut rng = RngStream::substream(cfg.seeds.master, streams::GRADCHECK);
    gradient_check(&obj, params.values(), cfg.model.gradcheck_probes, cfg.model.gradcheck_step, &mut rng)
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = load_dataset(cfg)?;
    let report = run_gradcheck(cfg, &ds)?;
    let dir = command_dir(cfg, "gradcheck")?;
    let hash = cfg.hash();
    let mut table = CsvTable::new(&["index", "parameter", "analytic", "numeric", "rel_err"]);
    for p in &report.probes {
        table.push(vec![p.index.into(), p.name.clone().into(), p.analytic.into(), p.numeric.into(), p.rel_err.into()]);
    }
    let csv = dir.join("probes.csv");
    table.write(&csv, &hash)?;
    let json = dir.join("report.json");
    write_json(
        &json,
        &serde_json::json!({
            "config_hash": hash,
            "step": report.step,
            "probes": report.probes.len(),
            "max_rel_err": report.max_rel_err,
            "mean_rel_err": report.mean_rel_err,
            "tolerance": crate::dynghost::GRAD_TOLERANCE,
            "passed": report.passes(),
        }),
    )?;
    let msg = format!(
        "gradient check max relative error {:.3e} (tolerance {:.0e})",
        report.max_rel_err,
        crate::dynghost::GRAD_TOLERANCE
    );
    Ok(Outcome {
        outputs: vec![csv, json],
        gate: Some((report.passes(), msg)),
    })
}

/// Re-measure the dataset's scenes with `detector`; stream `label` keeps
/// draws independent of the stored buckets.
fn remeasure(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    detector: DetectorKind,
    label: u64,
) -> Result<(Vec<SequenceRecord>, Vec<SequenceRecord>)> {
    let base = RngStream::substream(cfg.seeds.master, streams::COMPARE_NOISE).derive(label);
    let run = |split: Split| -> Result<Vec<SequenceRecord>> {
        let split_base = base.derive(split as u64);
        ds.split(split)
            .iter()
            .enumerate()
            .map(|(k, rec)| {
                let buckets = measure(cfg, detector, cfg.detector.snr_db, &ds.patterns, &rec.scene, &mut split_base.derive(k as u64))?;
                Ok(SequenceRecord {
                    scene: rec.scene.clone(),
                    buckets,
                })
            })
            .collect()
    };
    Ok((run(Split::Train)?, run(Split::Eval)?))
}

fn classical_methods(cfg: &ExperimentConfig) -> Vec<MethodKind> {
    cfg.reconstructors
        .methods
        .iter()
        .copied()
        .filter(|m| *m != MethodKind::DynghostCheckpoint)
        .collect()
}

pub fn cmd_detector_compare(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = load_dataset(cfg)?;
    let (methods, _) = build_methods(cfg, &ds.patterns, &classical_methods(cfg))?;
    let mut table = CsvTable::new(&["detector", "normalization", "model", "mse", "ssim", "t_cons", "signal_to_dark_ratio"]);
    for (j, &det) in cfg.detector.compare.iter().enumerate() {
        let (train_set, eval_set) = remeasure(cfg, &ds, det, j as u64)?;
        let sdr = match det.spec(cfg.detector.integration_time_s)? {
            Some(spec) => signal_to_dark_ratio(1.0, cfg.detector.n_bar, &spec),
            None => f64::INFINITY,
        };
        let mut push = |nz: &str, model: &str, s: &MethodScores| {
            let sum = s.summary();
            table.push(vec![
                det.as_str().into(),
                nz.into(),
                model.into(),
                sum.mse_mean.into(),
                sum.ssim_mean.into(),
                sum.temporal_consistency.unwrap_or(f64::NAN).into(),
                sdr.into(),
            ]);
        };
        for (m, rc) in &methods {
            let s = score(m.as_str(), rc, &ds.patterns, &eval_set, false)?;
            push("none", m.as_str(), &s);
        }
        for &kind in &cfg.normalization.compare {
            let fitted = fit_learner(cfg, cfg.model.learner, &cfg.model.architecture, &ds.patterns, &train_set, kind)?;
            let s = score(cfg.model.learner.as_str(), &fitted.reconstructor, &ds.patterns, &eval_set, false)?;
            push(kind.as_str(), cfg.model.learner.as_str(), &s);
        }
    }
    let dir = command_dir(cfg, "detector_compare")?;
    let csv = dir.join("results.csv");
    table.write(&csv, &cfg.hash())?;
    Ok(Outcome {
        outputs: vec![csv],
        gate: None,
    })
}

/// Sample variance of `nz` applied to Poisson(`lambda`) draws.
pub fn transformed_variance(nz: &Normalizer, lambda: f64, draws: usize, rng: &mut RngStream) -> Result<f64> {
    let values = (0..draws)
        .map(|_| sample_poisson(rng, lambda).and_then(|c| nz.apply(c as f64)))
        .collect::<Result<Vec<_>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

pub fn cmd_normalize_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = load_dataset(cfg)?;
    let (train_set, eval_set) = remeasure(cfg, &ds, DetectorKind::Snspd, 1 << 20)?;
    let lambda = cfg.normalization.variance_lambda;
    let mut table = CsvTable::new(&["strategy", "variance", "lambda", "mse", "ssim", "t_cons"]);
    for kind in NormalizerKind::ALL {
        let nz = fit_normalizer(kind, &train_set)?;
        let mut rng = RngStream::substream(cfg.seeds.master, streams::VARIANCE);
        let var = transformed_variance(&nz, lambda, cfg.normalization.variance_draws, &mut rng)?;
        let fitted = fit_learner(cfg, cfg.model.learner, &cfg.model.architecture, &ds.patterns, &train_set, kind)?;
        let s = score(kind.as_str(), &fitted.reconstructor, &ds.patterns, &eval_set, false)?.summary();
        table.push(vec![
            kind.as_str().into(),
            var.into(),
            lambda.into(),
            s.mse_mean.into(),
            s.ssim_mean.into(),
            s.temporal_consistency.unwrap_or(f64::NAN).into(),
        ]);
    }
    let dir = command_dir(cfg, "normalize_sweep")?;
    let csv = dir.join("results.csv");
    table.write(&csv, &cfg.hash())?;
    Ok(Outcome {
        outputs: vec![csv],
        gate: None,
    })
}

/// Realized SNR over all eval sequences at `snr`; replays each sequence's
/// noise stream to recover the pre-clip perturbation.
fn measured_snr(ds: &Dataset, snr: f64, base: &RngStream) -> Result<f64> {
    let mut signal = Vec::new();
    let mut noisy = Vec::new();
    for (k, rec) in ds.eval.iter().enumerate() {
        let mu = ideal_intensity(&ds.patterns, &rec.scene)?;
        let sigma = sigma_for_snr(&mu, snr)?;
        let mut rng = base.derive(k as u64);
        for &v in mu.data() {
            signal.push(v);
            noisy.push(v + sigma * rng.standard_normal());
        }
    }
    snr_db(&signal, &noisy)
}

pub fn cmd_snr_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = load_dataset(cfg)?;
    let (methods, _) = build_methods(cfg, &ds.patterns, &cfg.reconstructors.methods)?;
    let base = RngStream::substream(cfg.seeds.master, streams::SWEEP_NOISE);
    let mut table = CsvTable::new(&["method", "snr_db", "snr_db_measured", "mse", "ssim", "mse_std", "ssim_std"]);
    let mut rows: Vec<Vec<Vec<Cell>>> = methods.iter().map(|_| Vec::new()).collect();
    for &snr in &cfg.reconstructors.snr_grid {
        let noisy: Vec<SequenceRecord> = ds
            .eval
            .iter()
            .enumerate()
            .map(|(k, rec)| {
                // the same stream at every grid point: common random numbers
                let buckets = measure(cfg, DetectorKind::Classical, snr, &ds.patterns, &rec.scene, &mut base.derive(k as u64))?;
                Ok(SequenceRecord {
                    scene: rec.scene.clone(),
                    buckets,
                })
            })
            .collect::<Result<_>>()?;
        let measured = measured_snr(&ds, snr, &base)?;
        for (slot, (m, rc)) in methods.iter().enumerate() {
            let s = score(m.as_str(), rc, &ds.patterns, &noisy, false)?.summary();
            rows[slot].push(vec![
                m.as_str().into(),
                snr.into(),
                measured.into(),
                s.mse_mean.into(),
                s.ssim_mean.into(),
                s.mse_std.into(),
                s.ssim_std.into(),
            ]);
        }
    }
    for row in rows.into_iter().flatten() {
        table.push(row);
    }
    let dir = command_dir(cfg, "snr_sweep")?;
    let csv = dir.join("results.csv");
    table.write(&csv, &cfg.hash())?;
    Ok(Outcome {
        outputs: vec![csv],
        gate: None,
    })
}

pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ds = load_dataset(cfg)?;
    let mut table = CsvTable::new(&["variant", "mse", "ssim", "t_cons", "final_loss"]);
    for &variant in &cfg.model.variants {
        let arch = variant.apply(&cfg.model.architecture);
        let nz = fit_normalizer(cfg.normalization.kind, &ds.train)?;
        let (params, losses, _, nz) = train_model(cfg, &arch, &cfg.model.train, &ds.patterns, &ds.train, nz)?;
        let model = Reconstructor::Model {
            config: arch,
            params,
            normalizer: nz,
        };
        let s = score(variant.as_str(), &model, &ds.patterns, &ds.eval, false)?.summary();
        table.push(vec![
            variant.as_str().into(),
            s.mse_mean.into(),
            s.ssim_mean.into(),
            s.temporal_consistency.unwrap_or(f64::NAN).into(),
            losses.last().map_or(f64::NAN, |l| l.total).into(),
        ]);
    }
    let dir = command_dir(cfg, "ablate")?;
    let csv = dir.join("results.csv");
    table.write(&csv, &cfg.hash())?;
    Ok(Outcome {
        outputs: vec![csv],
        gate: None,
    })
}
