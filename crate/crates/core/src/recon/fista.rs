use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::linalg::{matvec, matvec_t};
use crate::patterns::PatternSet;

use super::dct::Dct2;
use super::Reconstruction;

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    /// `0.01 * ||(Psi Phi)^T b||_inf`
    Auto,
    /// `f * ||(Psi Phi)^T b||_inf`
    Relative(f64),
    Fixed(f64),
}

pub const AUTO_LAMBDA_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FistaConfig {
    pub iterations: usize,
    pub lambda: Lambda,
    pub power_iterations: usize,
}

impl Default for FistaConfig {
    fn default() -> Self {
        FistaConfig {
            iterations: 200,
            lambda: Lambda::Auto,
            power_iterations: 100,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(GhostError::Config("FISTA needs at least one iteration".into()));
        }
        if self.power_iterations < 50 {
            return Err(GhostError::Config("Lipschitz estimate needs at least 50 power iterations".into()));
        }
        if let Lambda::Fixed(l) | Lambda::Relative(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(GhostError::Config(format!("lambda must be finite and non-negative, got {l}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FistaReport {
    pub reconstruction: Reconstruction,
    pub lambda: f64,
    pub lipschitz: f64,
    /// Objective `1/2 ||Psi x - b||^2 + lambda ||alpha||_1` after each iteration.
    pub objective: Vec<f64>,
    /// Squared data residual `||Psi x - b||^2` after each iteration.
    pub residual: Vec<f64>,
}

pub fn fista(ps: &PatternSet, b: &[f64], cfg: &FistaConfig) -> Result<Reconstruction> {
    fista_with(ps, b, cfg).map(|r| r.reconstruction)
}

struct Operator<'a> {
    ps: &'a PatternSet,
    dct: Dct2,
}

impl Operator<'_> {
    /// `Psi Phi alpha`
    fn forward(&self, alpha: &[f64]) -> Vec<f64> {
        let x = self.dct.inverse(alpha);
        matvec(self.ps.values(), &x, self.ps.count(), self.ps.pixels())
    }

    /// `(Psi Phi)^T r`
    fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        let x = matvec_t(self.ps.values(), r, self.ps.count(), self.ps.pixels());
        self.dct.forward(&x)
    }
}

fn lipschitz(op: &Operator<'_>, n: usize, iterations: usize) -> Result<f64> {
    // Deterministic start with energy in every coefficient.
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.1 * ((k as f64) * 0.7).sin()).collect();
    let mut est = 0.0;
    for _ in 0..iterations {
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nv == 0.0 || !nv.is_finite() {
            break;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        let w = op.adjoint(&op.forward(&v));
        est = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        v = w;
    }
    if est > 0.0 && est.is_finite() {
        Ok(est)
    } else {
        Err(GhostError::Domain("Lipschitz estimate failed: operator is zero".into()))
    }
}

pub fn fista_with(ps: &PatternSet, b: &[f64], cfg: &FistaConfig) -> Result<FistaReport> {
    cfg.validate()?;
    if b.len() != ps.count() {
        return Err(GhostError::Dimension(format!("{} buckets for {} patterns", b.len(), ps.count())));
    }
    let n = ps.pixels();
    let op = Operator {
        ps,
        dct: Dct2::new(ps.height(), ps.width()),
    };
    let lip = lipschitz(&op, n, cfg.power_iterations)?;
    let lambda = match cfg.lambda {
        Lambda::Fixed(l) => l,
        Lambda::Auto => AUTO_LAMBDA_FRACTION * op.adjoint(b).iter().fold(0.0, |m, v| f64::max(m, v.abs())),
        Lambda::Relative(f) => f * op.adjoint(b).iter().fold(0.0, |m, v| f64::max(m, v.abs())),
    };
    let step = 1.0 / lip;
    let tau = lambda * step;

    let mut alpha = vec![0.0; n];
    let mut y = alpha.clone();
    let mut t = 1.0f64;
    let mut objective = Vec::with_capacity(cfg.iterations);
    let mut residual = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let r: Vec<f64> = op.forward(&y).iter().zip(b).map(|(p, q)| p - q).collect();
        let g = op.adjoint(&r);
        let next: Vec<f64> = y.iter().zip(&g).map(|(yv, gv)| soft_threshold(yv - step * gv, tau)).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        for k in 0..n {
            y[k] = next[k] + mom * (next[k] - alpha[k]);
        }
        alpha = next;
        t = t_next;

        let res: f64 = op.forward(&alpha).iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
        residual.push(res);
        objective.push(0.5 * res + lambda * l1);
    }
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(GhostError::NonFinite { name: "fista".into() });
    }
    let raw = Image::from_vec(ps.height(), ps.width(), op.dct.inverse(&alpha))?;
    Ok(FistaReport {
        reconstruction: Reconstruction {
            image: raw.clamp01(),
            raw,
        },
        lambda,
        lipschitz: lip,
        objective,
        residual,
    })
}
