//! Photon-counting bucket detectors (SNSPD, SPAD, SiPM).
//!
//! Per entry, in this draw order from the supplied stream:
//!
//! 1. signal `n ~ Poisson(mu * n_bar * efficiency)`
//! 2. dark `d ~ Poisson(dark_count_rate * integration_time)`
//! 3. afterpulse `a ~ Binomial(n + d, afterpulse_prob)`
//! 4. crosstalk `c ~ Binomial(n + d + a, crosstalk_prob)`
//!
//! The raw total `n + d + a + c` is then capped by the non-paralyzable dead
//! time, `floor(integration_time / dead_time)` counts per window. Timing
//! jitter is carried in the spec but does not affect counts.

use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::measurement::{BucketMode, BucketProvenance, BucketSeries};
use crate::rng::{sample_binomial, sample_poisson, RngStream};
use crate::tensor::TensorF;

pub const DEFAULT_INTEGRATION_TIME_S: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub name: String,
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub dead_time_ns: f64,
    pub afterpulse_prob: f64,
    pub crosstalk_prob: f64,
    pub timing_jitter_ps: f64,
    pub integration_time_s: f64,
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        let prob = |v: f64| (0.0..1.0).contains(&v);
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(GhostError::Domain(format!("efficiency {} outside (0, 1]", self.efficiency)));
        }
        if !prob(self.afterpulse_prob) || !prob(self.crosstalk_prob) {
            return Err(GhostError::Domain("afterpulse and crosstalk probabilities must lie in [0, 1)".into()));
        }
        if !(self.dark_count_rate_hz >= 0.0) || !self.dark_count_rate_hz.is_finite() {
            return Err(GhostError::Domain("dark count rate must be non-negative".into()));
        }
        if !(self.integration_time_s > 0.0) || !self.integration_time_s.is_finite() {
            return Err(GhostError::Domain("integration time must be positive".into()));
        }
        if !(self.dead_time_ns >= 0.0) || !(self.timing_jitter_ps >= 0.0) {
            return Err(GhostError::Domain("dead time and jitter must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_integration_time(mut self, seconds: f64) -> Self {
        self.integration_time_s = seconds;
        self
    }

    /// Expected dark counts per integration window.
    pub fn mean_dark_counts(&self) -> f64 {
        self.dark_count_rate_hz * self.integration_time_s
    }

    /// Counts per window the dead time allows; `None` without dead time.
    pub fn dead_time_cap(&self) -> Option<u64> {
        if self.dead_time_ns <= 0.0 {
            return None;
        }
        let windows = self.integration_time_s * 1e9 / self.dead_time_ns;
        Some((windows * (1.0 + 1e-12)).floor() as u64)
    }
}

/// Detector parameters for `snspd`, `spad` or `sipm`.
pub fn preset(name: &str) -> Result<DetectorSpec> {
    let (efficiency, dcr, dead, after, cross, jitter) = match name.to_ascii_lowercase().as_str() {
        "snspd" => (0.95, 10.0, 40.0, 0.0, 0.0, 50.0),
        "spad" => (0.70, 1_000.0, 50.0, 0.01, 0.0, 300.0),
        "sipm" => (0.50, 100_000.0, 20.0, 0.02, 0.05, 100.0),
        other => return Err(GhostError::NotFound(format!("unknown detector preset {other:?}"))),
    };
    Ok(DetectorSpec {
        name: name.to_ascii_lowercase(),
        efficiency,
        dark_count_rate_hz: dcr,
        dead_time_ns: dead,
        afterpulse_prob: after,
        crosstalk_prob: cross,
        timing_jitter_ps: jitter,
        integration_time_s: DEFAULT_INTEGRATION_TIME_S,
    })
}

pub fn apply_dead_time(raw_count: u64, spec: &DetectorSpec) -> u64 {
    match spec.dead_time_cap() {
        Some(cap) => raw_count.min(cap),
        None => raw_count,
    }
}

/// One entry's count.
pub fn detect_one(mu: f64, n_bar: f64, spec: &DetectorSpec, rng: &mut RngStream) -> Result<u64> {
    let n = sample_poisson(rng, mu * n_bar * spec.efficiency)?;
    let d = sample_poisson(rng, spec.mean_dark_counts())?;
    let a = sample_binomial(rng, n + d, spec.afterpulse_prob)?;
    let c = sample_binomial(rng, n + d + a, spec.crosstalk_prob)?;
    Ok(apply_dead_time(n + d + a + c, spec))
}

/// Photon counts for a `[T, M]` intensity table.
pub fn detect_counts(mu: &TensorF, n_bar: f64, spec: &DetectorSpec, rng: &mut RngStream) -> Result<BucketSeries> {
    let &[t, m] = mu.dims() else {
        return Err(GhostError::Dimension(format!("intensity must be [T,M], got {:?}", mu.dims())));
    };
    if !(n_bar > 0.0) || !n_bar.is_finite() {
        return Err(GhostError::Domain(format!("mean photon number must be positive, got {n_bar}")));
    }
    if mu.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(GhostError::Domain("intensities must lie in [0, 1]".into()));
    }
    spec.validate()?;
    let provenance = BucketProvenance {
        mode: BucketMode::Counts,
        detector: spec.name.clone(),
        seed: rng.master_seed(),
        stream: rng.stream_id(),
        n_bar: Some(n_bar),
        sigma: None,
        detector_spec: Some(spec.clone()),
    };
    let values = mu
        .data()
        .iter()
        .map(|&v| detect_one(v, n_bar, spec, rng).map(|c| c as f64))
        .collect::<Result<Vec<_>>>()?;
    BucketSeries::new(t, m, values, provenance)
}

/// Expected signal counts over expected dark counts; `+inf` without dark
/// counts.
pub fn signal_to_dark_ratio(mu_mean: f64, n_bar: f64, spec: &DetectorSpec) -> f64 {
    let dark = spec.mean_dark_counts();
    if dark <= 0.0 {
        return f64::INFINITY;
    }
    mu_mean * n_bar * spec.efficiency / dark
}

/// Expected count before dead time for intensity `mu`.
pub fn expected_counts(mu: f64, n_bar: f64, spec: &DetectorSpec) -> f64 {
    let primary = mu * n_bar * spec.efficiency + spec.mean_dark_counts();
    primary * (1.0 + spec.afterpulse_prob) * (1.0 + spec.crosstalk_prob)
}

/// Invert [`expected_counts`]: intensity estimate from a count.
pub fn intensity_estimate(count: f64, n_bar: f64, spec: &DetectorSpec) -> f64 {
    let primary = count / ((1.0 + spec.afterpulse_prob) * (1.0 + spec.crosstalk_prob));
    (primary - spec.mean_dark_counts()) / (n_bar * spec.efficiency)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn presets_match_table() {
        let s = preset("snspd").unwrap();
        assert_eq!((s.efficiency, s.dark_count_rate_hz, s.dead_time_ns), (0.95, 10.0, 40.0));
        assert_eq!((s.afterpulse_prob, s.crosstalk_prob, s.timing_jitter_ps), (0.0, 0.0, 50.0));
        let p = preset("spad").unwrap();
        assert_eq!((p.efficiency, p.dark_count_rate_hz, p.dead_time_ns), (0.70, 1000.0, 50.0));
        assert_eq!((p.afterpulse_prob, p.crosstalk_prob, p.timing_jitter_ps), (0.01, 0.0, 300.0));
        let m = preset("sipm").unwrap();
        assert_eq!((m.efficiency, m.dark_count_rate_hz, m.dead_time_ns), (0.50, 100_000.0, 20.0));
        assert_eq!((m.afterpulse_prob, m.crosstalk_prob, m.timing_jitter_ps), (0.02, 0.05, 100.0));
        assert_eq!(m.integration_time_s, 1e-3);
        assert!(preset("pmt").is_err());
    }

    #[test]
    fn snspd_mean_counts() {
        // mean = 1 * 100 * 0.95 + 10 * 1e-3 = 95.01
        let mu = TensorF::from_vec(&[100, 1000], vec![1.0; 100_000]).unwrap();
        let b = detect_counts(&mu, 100.0, &preset("snspd").unwrap(), &mut RngStream::substream(1, 1)).unwrap();
        let (mean, _) = stats(b.values());
        assert!((mean - 95.01).abs() < 0.3, "mean {mean}");
    }

    #[test]
    fn zero_rates_give_zero() {
        let mut spec = preset("snspd").unwrap();
        spec.dark_count_rate_hz = 0.0;
        let mu = TensorF::zeros(&[4, 8]).unwrap();
        let b = detect_counts(&mu, 100.0, &spec, &mut RngStream::substream(1, 2)).unwrap();
        assert!(b.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sipm_dark_counts() {
        let spec = preset("sipm").unwrap();
        assert!((spec.mean_dark_counts() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn dead_time_cap() {
        let mut spec = preset("snspd").unwrap();
        assert_eq!(spec.dead_time_cap(), Some(25_000));
        assert_eq!(apply_dead_time(100, &spec), 100);
        assert_eq!(apply_dead_time(30_000, &spec), 25_000);
        spec.dead_time_ns = 0.0;
        assert_eq!(apply_dead_time(30_000, &spec), 30_000);
    }

    #[test]
    fn signal_to_dark() {
        let ratio = |n: &str| signal_to_dark_ratio(1.0, 100.0, &preset(n).unwrap());
        assert!((ratio("sipm") - 0.5).abs() < 1e-12);
        assert!((ratio("snspd") - 9500.0).abs() < 1e-9);
        assert!((ratio("spad") - 70.0).abs() < 1e-12);
        let mut s = preset("snspd").unwrap();
        s.dark_count_rate_hz = 0.0;
        assert_eq!(signal_to_dark_ratio(1.0, 100.0, &s), f64::INFINITY);
    }

    #[test]
    fn poisson_additivity_without_artefacts() {
        let mut spec = preset("spad").unwrap();
        spec.afterpulse_prob = 0.0;
        let mu = TensorF::from_vec(&[100, 1000], vec![0.4; 100_000]).unwrap();
        let b = detect_counts(&mu, 50.0, &spec, &mut RngStream::substream(3, 3)).unwrap();
        let (mean, var) = stats(b.values());
        let lambda = 0.4 * 50.0 * 0.7 + 1.0;
        let n = 1e5;
        assert!((mean - lambda).abs() < 5.0 * (lambda / n).sqrt(), "mean {mean}");
        // sd of the sample variance for Poisson ~ sqrt((2 lambda^2 + lambda) / n).
        assert!((var - lambda).abs() < 5.0 * ((2.0 * lambda * lambda + lambda) / n).sqrt(), "var {var}");
    }

    #[test]
    fn monotone_in_efficiency_and_budget() {
        let mu = TensorF::from_vec(&[10, 1000], vec![0.3; 10_000]).unwrap();
        let base = preset("spad").unwrap();
        let mean_of = |spec: &DetectorSpec, n_bar: f64| {
            let b = detect_counts(&mu, n_bar, spec, &mut RngStream::substream(8, 8)).unwrap();
            b.values().iter().sum::<f64>() / 1e4
        };
        let lo = mean_of(&base, 50.0);
        let mut better = base.clone();
        better.efficiency = 0.9;
        assert!(mean_of(&better, 50.0) >= lo);
        assert!(mean_of(&base, 80.0) >= lo);
    }

    #[test]
    fn deterministic_given_stream() {
        let mu = TensorF::from_vec(&[3, 5], (0..15).map(|i| i as f64 / 15.0).collect()).unwrap();
        let spec = preset("sipm").unwrap();
        let a = detect_counts(&mu, 100.0, &spec, &mut RngStream::substream(4, 4)).unwrap();
        let b = detect_counts(&mu, 100.0, &spec, &mut RngStream::substream(4, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.provenance.detector_spec.as_ref(), Some(&spec));
    }

    #[test]
    fn input_errors() {
        let spec = preset("snspd").unwrap();
        let bad = TensorF::from_vec(&[1, 1], vec![1.5]).unwrap();
        assert!(detect_counts(&bad, 100.0, &spec, &mut RngStream::substream(0, 0)).is_err());
        let ok = TensorF::from_vec(&[1, 1], vec![0.5]).unwrap();
        assert!(detect_counts(&ok, 0.0, &spec, &mut RngStream::substream(0, 0)).is_err());
    }

    #[test]
    fn intensity_estimate_inverts_expectation() {
        let spec = preset("sipm").unwrap();
        let e = expected_counts(0.37, 100.0, &spec);
        assert!((intensity_estimate(e, 100.0, &spec) - 0.37).abs() < 1e-12);
    }
}
