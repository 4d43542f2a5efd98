//! Per-frame classical reconstructors: differential ghost imaging,
//! Moore-Penrose pseudo-inverse and FISTA over a 2-D DCT basis.
//!
//! Every solver works with raw buckets `b = Psi x`, where row `i` of `Psi`
//! is pattern `i` flattened. Callers holding normalized intensities
//! `mu_i = <H_i, x> / R_i` convert with [`raw_buckets`].

mod dct;
mod dgi;
mod fista;
mod pinv;

pub use dct::{dct2, idct2, Dct2};
pub use dgi::dgi;
pub use fista::{fista, fista_with, soft_threshold, FistaConfig, FistaReport, Lambda};
pub use pinv::{pseudo_inverse, PseudoInverse};

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::patterns::PatternSet;

/// Reconstruction for reporting plus the unclamped solver output.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub image: Image,
    pub raw: Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalMethod {
    Dgi,
    Pi,
    Fista,
}

impl ClassicalMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassicalMethod::Dgi => "dgi",
            ClassicalMethod::Pi => "pi",
            ClassicalMethod::Fista => "fista",
        }
    }
}

/// `mu_i * R_i`, undoing the row-sum normalization of intensities.
pub fn raw_buckets(ps: &PatternSet, mu: &[f64]) -> Vec<f64> {
    mu.iter().zip(ps.row_sums()).map(|(m, r)| m * r).collect()
}
