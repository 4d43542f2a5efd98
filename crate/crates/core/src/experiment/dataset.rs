//! On-disk toy datasets: one pattern set plus train and eval splits of
//! scene sequences with their bucket series.
//!
//! ```text
//! dataset/
//!   manifest.json
//!   patterns.gtf
//!   train/seq_0000/{scene.gtf, buckets.gtf, buckets.json}
//!   eval/seq_0000/...
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DetectorKind, ExperimentConfig};
use super::report::write_json;
use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::measurement::{classical_detect, ideal_intensity, sigma_for_snr, BucketMode, BucketProvenance, BucketSeries};
use crate::patterns::{generate_bernoulli, generate_speckle, sampling_ratio, PatternKind, PatternSet};
use crate::qdetector::{detect_counts, intensity_estimate};
use crate::rng::RngStream;
use crate::scene::{load_external_frames, random_scene, SceneSequence};
use crate::tensor::{load_tensor, save_tensor};

pub const MANIFEST: &str = "manifest.json";

pub(crate) mod streams {
    pub const PATTERNS: u64 = 1;
    pub const TRAIN_SCENES: u64 = 2;
    pub const EVAL_SCENES: u64 = 3;
    pub const TRAIN_NOISE: u64 = 4;
    pub const EVAL_NOISE: u64 = 5;
    pub const INIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const SWEEP_NOISE: u64 = 8;
    pub const COMPARE_NOISE: u64 = 9;
    pub const VARIANCE: u64 = 10;
    pub const GRADCHECK: u64 = 11;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }

    fn streams(&self) -> (u64, u64) {
        match self {
            Split::Train => (streams::TRAIN_SCENES, streams::TRAIN_NOISE),
            Split::Eval => (streams::EVAL_SCENES, streams::EVAL_NOISE),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub detector: DetectorKind,
    pub patterns: String,
    pub sampling_ratio: f64,
    pub train: Vec<String>,
    pub eval: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BucketSidecar {
    config_hash: String,
    provenance: BucketProvenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub scene: SceneSequence,
    pub buckets: BucketSeries,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub patterns: PatternSet,
    pub train: Vec<SequenceRecord>,
    pub eval: Vec<SequenceRecord>,
    pub detector: DetectorKind,
}

fn to_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Values are rounded to `f32` at creation so the stored dataset is
/// self-consistent.
pub fn make_patterns(cfg: &ExperimentConfig) -> Result<PatternSet> {
    let p = &cfg.patterns;
    let r = &cfg.scene.recipe;
    let rng = RngStream::substream(cfg.seeds.master, streams::PATTERNS);
    let ps = match p.kind {
        PatternKind::Speckle => generate_speckle(p.count, r.height, r.width, p.grain_px, &rng)?,
        PatternKind::Bernoulli => generate_bernoulli(p.count, r.height, r.width, p.fill, &rng)?,
    };
    let ps = if p.binarize { ps.binarize() } else { ps };
    PatternSet::from_values(p.count, r.height, r.width, ps.values().iter().map(|&v| to_f32(v)).collect())
}

fn quantize(seq: SceneSequence) -> Result<SceneSequence> {
    let frames = seq
        .frames()
        .iter()
        .map(|f| f.map(to_f32))
        .collect::<Vec<Image>>();
    SceneSequence::new(frames)
}

pub fn make_scenes(cfg: &ExperimentConfig, split: Split) -> Result<Vec<SceneSequence>> {
    if split == Split::Eval {
        if let Some(dir) = &cfg.scene.external_dir {
            let seq = load_external_frames(dir)?;
            let r = &cfg.scene.recipe;
            if seq.shape() != (r.height, r.width) || seq.len() != r.frames {
                return Err(GhostError::Dimension(format!(
                    "external sequence is {}x{:?}, config expects {}x({}, {})",
                    seq.len(),
                    seq.shape(),
                    r.frames,
                    r.height,
                    r.width
                )));
            }
            return Ok(vec![quantize(seq)?]);
        }
    }
    let count = match split {
        Split::Train => cfg.scene.train_sequences,
        Split::Eval => cfg.scene.eval_sequences,
    };
    let base = RngStream::substream(cfg.seeds.master, split.streams().0);
    (0..count as u64)
        .map(|k| random_scene(&cfg.scene.recipe, &mut base.derive(k)).and_then(quantize))
        .collect()
}

/// Bucket series of `scene` as seen by `detector`.
pub fn measure(
    cfg: &ExperimentConfig,
    detector: DetectorKind,
    snr_db: f64,
    ps: &PatternSet,
    scene: &SceneSequence,
    rng: &mut RngStream,
) -> Result<BucketSeries> {
    let mu = ideal_intensity(ps, scene)?;
    match detector {
        DetectorKind::Ideal => {
            let &[t, m] = mu.dims() else { unreachable!() };
            let provenance = BucketProvenance {
                mode: BucketMode::Analog,
                detector: "ideal".into(),
                seed: rng.master_seed(),
                stream: rng.stream_id(),
                n_bar: None,
                sigma: Some(0.0),
                detector_spec: None,
            };
            BucketSeries::new(t, m, mu.into_data(), provenance)
        }
        DetectorKind::Classical => {
            let sigma = sigma_for_snr(&mu, snr_db)?;
            classical_detect(&mu, sigma, rng)
        }
        counting => {
            let spec = counting
                .spec(cfg.detector.integration_time_s)?
                .expect("counting detector has a spec");
            detect_counts(&mu, cfg.detector.n_bar, &spec, rng)
        }
    }
}

/// Noise stream for sequence `k` of `split`.
pub fn noise_stream(cfg: &ExperimentConfig, split: Split, k: usize) -> RngStream {
    RngStream::substream(cfg.seeds.master, split.streams().1).derive(k as u64)
}

/// Simulate the configured dataset in memory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Dataset> {
    let patterns = make_patterns(cfg)?;
    let build = |split: Split| -> Result<Vec<SequenceRecord>> {
        make_scenes(cfg, split)?
            .into_iter()
            .enumerate()
            .map(|(k, scene)| {
                let mut rng = noise_stream(cfg, split, k);
                let buckets = measure(cfg, cfg.detector.kind, cfg.detector.snr_db, &patterns, &scene, &mut rng)?;
                Ok(SequenceRecord { scene, buckets })
            })
            .collect()
    };
    Ok(Dataset {
        train: build(Split::Train)?,
        eval: build(Split::Eval)?,
        patterns,
        detector: cfg.detector.kind,
    })
}

fn seq_dir(split: Split, k: usize) -> String {
    format!("{}/seq_{k:04}", split.as_str())
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[SequenceRecord] {
        match split {
            Split::Train => &self.train,
            Split::Eval => &self.eval,
        }
    }

    pub fn save(&self, dir: &Path, config_hash: &str) -> Result<PathBuf> {
        save_tensor(&self.patterns.to_tensor(), dir.join("patterns.gtf"))?;
        let mut names = [Vec::new(), Vec::new()];
        for (slot, split) in [Split::Train, Split::Eval].into_iter().enumerate() {
            for (k, rec) in self.split(split).iter().enumerate() {
                let name = seq_dir(split, k);
                let sub = dir.join(&name);
                save_tensor(&rec.scene.to_tensor(), sub.join("scene.gtf"))?;
                save_tensor(&rec.buckets.to_tensor(), sub.join("buckets.gtf"))?;
                let sidecar = BucketSidecar {
                    config_hash: config_hash.to_string(),
                    provenance: rec.buckets.provenance.clone(),
                };
                write_json(&sub.join("buckets.json"), &sidecar)?;
                names[slot].push(name);
            }
        }
        let [train, eval] = names;
        let manifest = DatasetManifest {
            config_hash: config_hash.to_string(),
            detector: self.detector,
            patterns: "patterns.gtf".into(),
            sampling_ratio: sampling_ratio(&self.patterns),
            train,
            eval,
        };
        let path = dir.join(MANIFEST);
        write_json(&path, &manifest)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<(DatasetManifest, Dataset)> {
        let path = dir.join(MANIFEST);
        if !path.is_file() {
            return Err(GhostError::NotFound(format!(
                "no dataset at {} (run `simulate` first)",
                dir.display()
            )));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| GhostError::io(&path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| GhostError::format(&path, e.to_string()))?;
        let patterns = PatternSet::from_tensor(&load_tensor(dir.join(&manifest.patterns))?)?;
        let read = |names: &[String]| -> Result<Vec<SequenceRecord>> {
            names
                .iter()
                .map(|name| {
                    let sub = dir.join(name);
                    let scene = SceneSequence::from_tensor(&load_tensor(sub.join("scene.gtf"))?)?;
                    let side_path = sub.join("buckets.json");
                    let side_text = std::fs::read_to_string(&side_path).map_err(|e| GhostError::io(&side_path, e))?;
                    let side: BucketSidecar =
                        serde_json::from_str(&side_text).map_err(|e| GhostError::format(&side_path, e.to_string()))?;
                    let buckets = BucketSeries::from_tensor(&load_tensor(sub.join("buckets.gtf"))?, side.provenance)?;
                    if buckets.frames() != scene.len() || buckets.patterns() != patterns.count() {
                        return Err(GhostError::format(
                            &sub,
                            format!(
                                "buckets are {}x{}, expected {}x{}",
                                buckets.frames(),
                                buckets.patterns(),
                                scene.len(),
                                patterns.count()
                            ),
                        ));
                    }
                    Ok(SequenceRecord { scene, buckets })
                })
                .collect()
        };
        let dataset = Dataset {
            train: read(&manifest.train)?,
            eval: read(&manifest.eval)?,
            patterns,
            detector: manifest.detector,
        };
        Ok((manifest, dataset))
    }
}

/// Per-entry intensity estimates `mu_hat` from a bucket series: analog values
/// as-is, counts calibrated through the detector's expected-count model.
pub fn intensities(b: &BucketSeries) -> Result<Vec<f64>> {
    match b.mode() {
        BucketMode::Analog => Ok(b.values().to_vec()),
        BucketMode::Counts => {
            let p = &b.provenance;
            let (Some(spec), Some(n_bar)) = (&p.detector_spec, p.n_bar) else {
                return Err(GhostError::Config("count buckets lack detector parameters".into()));
            };
            Ok(b.values().iter().map(|&c| intensity_estimate(c, n_bar, spec)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scene.train_sequences = 2;
        cfg.scene.eval_sequences = 1;
        cfg
    }

    #[test]
    fn save_load_round_trip() {
        let cfg = small();
        let ds = simulate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path(), &cfg.hash()).unwrap();
        let (manifest, back) = Dataset::load(dir.path()).unwrap();
        assert_eq!(manifest.train.len(), 2);
        assert_eq!(back.patterns, ds.patterns);
        assert_eq!(back.train[1].scene, ds.train[1].scene);
        for (a, b) in back.eval[0].buckets.values().iter().zip(ds.eval[0].buckets.values()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn splits_differ() {
        let ds = simulate(&small()).unwrap();
        assert_ne!(ds.train[0].scene, ds.eval[0].scene);
        assert_ne!(ds.train[0].scene, ds.train[1].scene);
    }

    #[test]
    fn missing_dataset_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(GhostError::NotFound(_))));
    }

    #[test]
    fn counts_calibrate_back_to_intensity() {
        let mut cfg = small();
        cfg.detector.kind = DetectorKind::Snspd;
        cfg.detector.n_bar = 2e4;
        let ds = simulate(&cfg).unwrap();
        let rec = &ds.train[0];
        let mu = ideal_intensity(&ds.patterns, &rec.scene).unwrap();
        let est = intensities(&rec.buckets).unwrap();
        for (a, b) in est.iter().zip(mu.data()) {
            assert!((a - b).abs() < 3e-2, "{a} vs {b}");
        }
    }
}
