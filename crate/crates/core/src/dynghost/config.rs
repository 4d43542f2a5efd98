use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Attention across patterns within one frame.
    Spatial,
    /// Attention across frames at one pattern index.
    Temporal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub mse: f64,
    pub ssim: f64,
    pub temporal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mse: 1.0,
            ssim: 0.5,
            temporal: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynGhostConfig {
    pub frames: usize,
    pub patterns: usize,
    pub height: usize,
    pub width: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub blocks: Vec<BlockKind>,
    pub mlp_hidden: usize,
    pub head_hidden: usize,
    /// Rows of the temporal position table; sequences may be shorter.
    pub max_frames: usize,
    pub temporal_pos_enc: bool,
    pub loss: LossWeights,
    /// Standard deviation of the initial position tables.
    pub pos_init_std: f64,
}

impl Default for DynGhostConfig {
    fn default() -> Self {
        use BlockKind::*;
        DynGhostConfig {
            frames: 4,
            patterns: 24,
            height: 16,
            width: 16,
            embed_dim: 16,
            heads: 2,
            blocks: vec![Spatial, Temporal, Spatial, Temporal],
            mlp_hidden: 32,
            head_hidden: 256,
            max_frames: 8,
            temporal_pos_enc: true,
            loss: LossWeights::default(),
            pos_init_std: 0.1,
        }
    }
}

impl DynGhostConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(GhostError::Config(m));
        if self.embed_dim < 2 {
            return fail(format!("embed_dim must be at least 2, got {}", self.embed_dim));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return fail(format!("embed_dim {} not divisible by {} heads", self.embed_dim, self.heads));
        }
        for (name, v) in [
            ("frames", self.frames),
            ("patterns", self.patterns),
            ("height", self.height),
            ("width", self.width),
            ("mlp_hidden", self.mlp_hidden),
            ("head_hidden", self.head_hidden),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.max_frames < self.frames {
            return fail(format!("max_frames {} below frames {}", self.max_frames, self.frames));
        }
        let w = self.loss;
        if [w.mse, w.ssim, w.temporal].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return fail("loss weights must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn count_blocks(&self, kind: BlockKind) -> usize {
        self.blocks.iter().filter(|&&b| b == kind).count()
    }
}

/// Component ablations, one per row of the comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoTemporalAttention,
    NoTemporalPosEnc,
    MseOnly,
    NoTempConsistencyLoss,
    OneTemporalBlock,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoTemporalAttention,
        Variant::NoTemporalPosEnc,
        Variant::MseOnly,
        Variant::NoTempConsistencyLoss,
        Variant::OneTemporalBlock,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTemporalAttention => "no-temporal-attention",
            Variant::NoTemporalPosEnc => "no-temporal-pos-enc",
            Variant::MseOnly => "mse-only",
            Variant::NoTempConsistencyLoss => "no-temp-consistency-loss",
            Variant::OneTemporalBlock => "1-temporal-block",
        }
    }

    pub fn apply(&self, base: &DynGhostConfig) -> DynGhostConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoTemporalAttention => cfg.blocks.retain(|&b| b == BlockKind::Spatial),
            Variant::NoTemporalPosEnc => cfg.temporal_pos_enc = false,
            Variant::MseOnly => {
                cfg.loss = LossWeights {
                    mse: 1.0,
                    ssim: 0.0,
                    temporal: 0.0,
                }
            }
            Variant::NoTempConsistencyLoss => cfg.loss.temporal = 0.0,
            Variant::OneTemporalBlock => {
                let mut seen = false;
                cfg.blocks.retain(|&b| {
                    if b == BlockKind::Temporal {
                        let keep = !seen;
                        seen = true;
                        keep
                    } else {
                        true
                    }
                });
            }
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = GhostError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| GhostError::NotFound(format!("unknown ablation variant {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_defaults_are_valid() {
        let cfg = DynGhostConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.count_blocks(BlockKind::Spatial), 2);
        assert_eq!(cfg.count_blocks(BlockKind::Temporal), 2);
    }

    #[test]
    fn invalid_head_split() {
        let cfg = DynGhostConfig {
            heads: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let tiny = DynGhostConfig {
            embed_dim: 1,
            heads: 1,
            ..Default::default()
        };
        assert!(tiny.validate().is_err());
    }

    #[test]
    fn variants_reshape_config() {
        use BlockKind::*;
        let base = DynGhostConfig::default();
        assert_eq!(Variant::NoTemporalAttention.apply(&base).blocks, vec![Spatial, Spatial]);
        assert_eq!(Variant::OneTemporalBlock.apply(&base).blocks, vec![Spatial, Temporal, Spatial]);
        assert!(!Variant::NoTemporalPosEnc.apply(&base).temporal_pos_enc);
        assert_eq!(Variant::MseOnly.apply(&base).loss.ssim, 0.0);
        assert_eq!(Variant::NoTempConsistencyLoss.apply(&base).loss.temporal, 0.0);
        assert_eq!(Variant::Full.apply(&base), base);
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.as_str()).collect();
        assert_eq!(names.len(), 6);
        for n in names {
            assert_eq!(n.parse::<Variant>().unwrap().as_str(), n);
        }
    }
}
