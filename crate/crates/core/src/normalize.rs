//! Photon-count normalizers: identity, square root, `ln(1+n)`, min-max,
//! z-score, Anscombe `2 sqrt(n + 3/8)` and Freeman-Tukey `sqrt(n) + sqrt(n+1)`.
//!
//! Min-max and z-score are fitted once on a calibration batch and frozen.
//! Inverses are algebraic; the Anscombe inverse is the plain (biased) one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerKind {
    None,
    Sqrt,
    Log1p,
    Minmax,
    Zscore,
    Anscombe,
    FreemanTukey,
}

impl NormalizerKind {
    pub const ALL: [NormalizerKind; 7] = [
        NormalizerKind::None,
        NormalizerKind::Sqrt,
        NormalizerKind::Log1p,
        NormalizerKind::Minmax,
        NormalizerKind::Zscore,
        NormalizerKind::Anscombe,
        NormalizerKind::FreemanTukey,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NormalizerKind::None => "none",
            NormalizerKind::Sqrt => "sqrt",
            NormalizerKind::Log1p => "log1p",
            NormalizerKind::Minmax => "minmax",
            NormalizerKind::Zscore => "zscore",
            NormalizerKind::Anscombe => "anscombe",
            NormalizerKind::FreemanTukey => "freeman_tukey",
        }
    }

    pub fn is_data_dependent(&self) -> bool {
        matches!(self, NormalizerKind::Minmax | NormalizerKind::Zscore)
    }
}

impl fmt::Display for NormalizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizerKind {
    type Err = GhostError;

    fn from_str(s: &str) -> Result<Self> {
        NormalizerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GhostError::NotFound(format!("unknown normalizer {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitStats {
    MinMax { min: f64, max: f64 },
    ZScore { mean: f64, std: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub kind: NormalizerKind,
    pub stats: Option<FitStats>,
}

/// Result of [`Normalizer::invert`]; `clamped` marks inputs that mapped
/// below zero counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inverted {
    pub value: f64,
    pub clamped: bool,
}

const ANSCOMBE_OFFSET: f64 = 3.0 / 8.0;

impl Normalizer {
    /// Stateless normalizer; errors for kinds that need fitting.
    pub fn stateless(kind: NormalizerKind) -> Result<Self> {
        if kind.is_data_dependent() {
            return Err(GhostError::Config(format!("{kind} must be fitted on data")));
        }
        Ok(Normalizer { kind, stats: None })
    }

    pub fn fit(kind: NormalizerKind, counts: &[f64]) -> Result<Self> {
        if counts.is_empty() {
            return Err(GhostError::DegenerateFit("no calibration data".into()));
        }
        if counts.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(GhostError::Domain("counts must be finite and non-negative".into()));
        }
        let stats = match kind {
            NormalizerKind::Minmax => {
                let (min, max) = counts
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                if min == max {
                    return Err(GhostError::DegenerateFit(format!("min-max on constant data ({min})")));
                }
                Some(FitStats::MinMax { min, max })
            }
            NormalizerKind::Zscore => {
                let n = counts.len() as f64;
                let mean = counts.iter().sum::<f64>() / n;
                let var = counts.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                if var <= 0.0 {
                    return Err(GhostError::DegenerateFit("z-score on zero-variance data".into()));
                }
                Some(FitStats::ZScore { mean, std: var.sqrt() })
            }
            _ => None,
        };
        Ok(Normalizer { kind, stats })
    }

    pub fn apply(&self, n: f64) -> Result<f64> {
        if n < 0.0 || !n.is_finite() {
            return Err(GhostError::Domain(format!("count must be finite and non-negative, got {n}")));
        }
        Ok(match (self.kind, self.stats) {
            (NormalizerKind::None, _) => n,
            (NormalizerKind::Sqrt, _) => n.sqrt(),
            (NormalizerKind::Log1p, _) => n.ln_1p(),
            (NormalizerKind::Anscombe, _) => 2.0 * (n + ANSCOMBE_OFFSET).sqrt(),
            (NormalizerKind::FreemanTukey, _) => n.sqrt() + (n + 1.0).sqrt(),
            (NormalizerKind::Minmax, Some(FitStats::MinMax { min, max })) => (n - min) / (max - min),
            (NormalizerKind::Zscore, Some(FitStats::ZScore { mean, std })) => (n - mean) / std,
            (kind, _) => return Err(GhostError::Config(format!("{kind} normalizer has no fitted stats"))),
        })
    }

    pub fn apply_all(&self, counts: &[f64]) -> Result<Vec<f64>> {
        counts.iter().map(|&n| self.apply(n)).collect()
    }

    pub fn invert(&self, z: f64) -> Result<Inverted> {
        if !z.is_finite() {
            return Err(GhostError::Domain(format!("cannot invert non-finite value {z}")));
        }
        let raw = match (self.kind, self.stats) {
            (NormalizerKind::None, _) => z,
            (NormalizerKind::Sqrt, _) => {
                if z < 0.0 {
                    -1.0
                } else {
                    z * z
                }
            }
            (NormalizerKind::Log1p, _) => z.exp_m1(),
            (NormalizerKind::Anscombe, _) => {
                if z < 2.0 * ANSCOMBE_OFFSET.sqrt() {
                    -1.0
                } else {
                    (z / 2.0).powi(2) - ANSCOMBE_OFFSET
                }
            }
            (NormalizerKind::FreemanTukey, _) => {
                if z < 1.0 {
                    -1.0
                } else {
                    ((z * z - 1.0) / (2.0 * z)).powi(2)
                }
            }
            (NormalizerKind::Minmax, Some(FitStats::MinMax { min, max })) => z * (max - min) + min,
            (NormalizerKind::Zscore, Some(FitStats::ZScore { mean, std })) => z * std + mean,
            (kind, _) => return Err(GhostError::Config(format!("{kind} normalizer has no fitted stats"))),
        };
        Ok(if raw < 0.0 {
            Inverted {
                value: 0.0,
                clamped: true,
            }
        } else {
            Inverted {
                value: raw,
                clamped: false,
            }
        })
    }
}
