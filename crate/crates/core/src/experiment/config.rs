use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynghost::{AdamWConfig, DynGhostConfig, TrainConfig, Variant};
use crate::error::{GhostError, Result};
use crate::normalize::NormalizerKind;
use crate::patterns::PatternKind;
use crate::qdetector::{preset, DetectorSpec, DEFAULT_INTEGRATION_TIME_S};
use crate::recon::{FistaConfig, Lambda};
use crate::scene::SceneRecipe;

/// Bucket detector used when simulating a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Noiseless analog buckets, `b = mu`.
    Ideal,
    Classical,
    Snspd,
    Spad,
    Sipm,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Ideal,
        DetectorKind::Classical,
        DetectorKind::Snspd,
        DetectorKind::Spad,
        DetectorKind::Sipm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::Ideal => "ideal",
            DetectorKind::Classical => "classical",
            DetectorKind::Snspd => "snspd",
            DetectorKind::Spad => "spad",
            DetectorKind::Sipm => "sipm",
        }
    }

    pub fn counts(&self) -> bool {
        matches!(self, DetectorKind::Snspd | DetectorKind::Spad | DetectorKind::Sipm)
    }

    /// Photon-counting parameters at integration time `dt`.
    pub fn spec(&self, dt: f64) -> Result<Option<DetectorSpec>> {
        if !self.counts() {
            return Ok(None);
        }
        Ok(Some(preset(self.as_str())?.with_integration_time(dt)))
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = GhostError;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GhostError::Config(format!("unknown detector {s:?}")))
    }
}

/// Reconstruction method names accepted in `reconstructors.methods`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Dgi,
    Pi,
    Fista,
    DynghostCheckpoint,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Dgi => "dgi",
            MethodKind::Pi => "pi",
            MethodKind::Fista => "fista",
            MethodKind::DynghostCheckpoint => "dynghost",
        }
    }
}

/// Learned reconstructor used by the comparison commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Dynghost,
    /// Ridge regression from normalized buckets to pixels, per frame.
    LinearProbe,
}

impl Learner {
    pub fn as_str(&self) -> &'static str {
        match self {
            Learner::Dynghost => "dynghost",
            Learner::LinearProbe => "linear_probe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub recipe: SceneRecipe,
    pub train_sequences: usize,
    pub eval_sequences: usize,
    /// Directory of PGM frames used as the single evaluation sequence.
    pub external_dir: Option<PathBuf>,
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            recipe: SceneRecipe::default(),
            train_sequences: 64,
            eval_sequences: 32,
            external_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternSection {
    pub kind: PatternKind,
    pub count: usize,
    pub grain_px: f64,
    pub fill: f64,
    pub binarize: bool,
}

impl Default for PatternSection {
    fn default() -> Self {
        PatternSection {
            kind: PatternKind::Speckle,
            count: 24,
            grain_px: 2.0,
            fill: 0.5,
            binarize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub kind: DetectorKind,
    pub snr_db: f64,
    pub n_bar: f64,
    pub integration_time_s: f64,
    /// Detectors compared by `detector-compare`.
    pub compare: Vec<DetectorKind>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            kind: DetectorKind::Classical,
            snr_db: 30.0,
            n_bar: 100.0,
            integration_time_s: DEFAULT_INTEGRATION_TIME_S,
            compare: vec![DetectorKind::Classical, DetectorKind::Snspd, DetectorKind::Spad, DetectorKind::Sipm],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationSection {
    /// Transform applied to learned-model inputs.
    pub kind: NormalizerKind,
    /// Normalizations tried by `detector-compare` for the learned model.
    pub compare: Vec<NormalizerKind>,
    /// Poisson mean at which `normalize-sweep` reports transformed variance.
    pub variance_lambda: f64,
    pub variance_draws: usize,
}

impl Default for NormalizationSection {
    fn default() -> Self {
        NormalizationSection {
            kind: NormalizerKind::Zscore,
            compare: vec![NormalizerKind::Anscombe],
            variance_lambda: 100.0,
            variance_draws: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub methods: Vec<MethodKind>,
    pub fista: FistaConfig,
    /// Checkpoint directory for `dynghost`; defaults to `<output_dir>/checkpoint`.
    pub checkpoint: Option<PathBuf>,
    /// When false every `time_ms` cell is written as 0 so reports are
    /// byte-reproducible.
    pub timing: bool,
    pub snr_grid: Vec<f64>,
}

impl Default for ReconSection {
    fn default() -> Self {
        ReconSection {
            methods: vec![MethodKind::Dgi, MethodKind::Pi, MethodKind::Fista],
            fista: FistaConfig {
                lambda: Lambda::Relative(1e-4),
                ..FistaConfig::default()
            },
            checkpoint: None,
            timing: true,
            snr_grid: vec![30.0, 20.0, 15.0, 10.0, 5.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub learner: Learner,
    pub architecture: DynGhostConfig,
    pub train: TrainConfig,
    pub variants: Vec<Variant>,
    pub gradcheck_probes: usize,
    pub gradcheck_step: f64,
    pub ridge: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            learner: Learner::Dynghost,
            architecture: DynGhostConfig::default(),
            train: TrainConfig {
                epochs: 50,
                optimizer: AdamWConfig::default(),
                ..TrainConfig::default()
            },
            variants: Variant::ALL.to_vec(),
            gradcheck_probes: 200,
            gradcheck_step: 1e-5,
            ridge: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    pub master: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        SeedSection { master: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneSection,
    pub patterns: PatternSection,
    pub detector: DetectorSection,
    pub normalization: NormalizationSection,
    pub reconstructors: ReconSection,
    pub model: ModelSection,
    pub seeds: SeedSection,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scene: SceneSection::default(),
            patterns: PatternSection::default(),
            detector: DetectorSection::default(),
            normalization: NormalizationSection::default(),
            reconstructors: ReconSection::default(),
            model: ModelSection::default(),
            seeds: SeedSection::default(),
            output_dir: PathBuf::from("ghostlab-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| GhostError::Config(format!("{}: {e}", origin.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GhostError::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GhostError::Config(msg));
        let r = &self.scene.recipe;
        if r.height == 0 || r.width == 0 || r.frames == 0 {
            return bad("scene extents must be positive".into());
        }
        if self.scene.train_sequences == 0 || self.scene.eval_sequences == 0 {
            return bad("train_sequences and eval_sequences must be positive".into());
        }
        let p = &self.patterns;
        if p.count == 0 {
            return bad("patterns.count must be positive".into());
        }
        if p.kind == PatternKind::Speckle && !(p.grain_px > 0.0) {
            return bad(format!("patterns.grain_px must be positive, got {}", p.grain_px));
        }
        if p.kind == PatternKind::Bernoulli && !(p.fill > 0.0 && p.fill < 1.0) {
            return bad(format!("patterns.fill must lie in (0, 1), got {}", p.fill));
        }
        let d = &self.detector;
        if !d.snr_db.is_finite() {
            return bad("detector.snr_db must be finite".into());
        }
        if !(d.n_bar > 0.0) || !d.n_bar.is_finite() {
            return bad(format!("detector.n_bar must be positive, got {}", d.n_bar));
        }
        if !(d.integration_time_s > 0.0) {
            return bad("detector.integration_time_s must be positive".into());
        }
        if d.compare.is_empty() {
            return bad("detector.compare must name at least one detector".into());
        }
        let n = &self.normalization;
        if !(n.variance_lambda > 0.0) || n.variance_draws < 2 {
            return bad("normalization variance probe needs lambda > 0 and at least 2 draws".into());
        }
        let rc = &self.reconstructors;
        rc.fista.validate()?;
        if rc.snr_grid.is_empty() || rc.snr_grid.iter().any(|s| !s.is_finite()) {
            return bad("reconstructors.snr_grid must be a non-empty list of finite values".into());
        }
        let m = &self.model;
        m.architecture.validate()?;
        m.train.optimizer.validate()?;
        if m.train.batch_size == 0 {
            return bad("model.train.batch_size must be positive".into());
        }
        let a = &m.architecture;
        if a.frames != r.frames || a.height != r.height || a.width != r.width || a.patterns != p.count {
            return bad(format!(
                "model.architecture ({}x{}x{}, M={}) disagrees with scene ({}x{}x{}) and patterns (M={})",
                a.frames, a.height, a.width, a.patterns, r.frames, r.height, r.width, p.count
            ));
        }
        if m.gradcheck_probes == 0 {
            return bad("model.gradcheck_probes must be positive".into());
        }
        if !(m.ridge >= 0.0) {
            return bad("model.ridge must be non-negative".into());
        }
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form, with
    /// `output_dir` blanked so relocated runs hash alike.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.output_dir.join("dataset")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.reconstructors
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.output_dir.join("checkpoint"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg = ExperimentConfig::from_json("{}", Path::new("x.json")).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"scene": {"sequences": 3}}"#, Path::new("x")).is_err());
        assert!(ExperimentConfig::from_json(r#"{"colour": 1}"#, Path::new("x")).is_err());
    }

    #[test]
    fn mismatched_model_shape_rejected() {
        let text = r#"{"patterns": {"count": 30}}"#;
        assert!(matches!(
            ExperimentConfig::from_json(text, Path::new("x")),
            Err(GhostError::Config(_))
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds.master = 8;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        let mut c = a.clone();
        c.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn sipm_spec_follows_integration_time() {
        let spec = DetectorKind::Sipm.spec(1e-3).unwrap().unwrap();
        assert!((spec.mean_dark_counts() - 100.0).abs() < 1e-9);
        assert!(DetectorKind::Classical.spec(1e-3).unwrap().is_none());
    }
}
