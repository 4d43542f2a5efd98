//! Ideal forward model and the analog (Gaussian) bucket detector.
//!
//! Intensities are normalized by the pattern total, `mu = <H_i, x> / R_i`,
//! so they lie in `[0, 1]` for scenes in `[0, 1]` and can be read as the
//! fraction of the photon budget reaching the detector.

use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::linalg::dot;
use crate::patterns::PatternSet;
use crate::qdetector::DetectorSpec;
use crate::rng::{sample_gaussian, RngStream};
use crate::scene::SceneSequence;
use crate::tensor::TensorF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketMode {
    Analog,
    Counts,
}

/// Sidecar metadata stored next to a bucket tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketProvenance {
    pub mode: BucketMode,
    pub detector: String,
    pub seed: u64,
    pub stream: u64,
    pub n_bar: Option<f64>,
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_spec: Option<DetectorSpec>,
}

/// `T x M` detector outputs with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketSeries {
    frames: usize,
    patterns: usize,
    values: Vec<f64>,
    pub provenance: BucketProvenance,
}

impl BucketSeries {
    pub fn new(frames: usize, patterns: usize, values: Vec<f64>, provenance: BucketProvenance) -> Result<Self> {
        if frames == 0 || patterns == 0 || values.len() != frames * patterns {
            return Err(GhostError::Dimension(format!(
                "{frames}x{patterns} bucket series with {} values",
                values.len()
            )));
        }
        match provenance.mode {
            BucketMode::Analog => {
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(GhostError::Domain("analog buckets must lie in [0, 1]".into()));
                }
            }
            BucketMode::Counts => {
                if values.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                    return Err(GhostError::Domain("counts must be non-negative integers".into()));
                }
            }
        }
        Ok(BucketSeries {
            frames,
            patterns,
            values,
            provenance,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn patterns(&self) -> usize {
        self.patterns
    }

    pub fn mode(&self) -> BucketMode {
        self.provenance.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Buckets of frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.patterns..(t + 1) * self.patterns]
    }

    pub fn to_tensor(&self) -> TensorF {
        TensorF::from_vec(&[self.frames, self.patterns], self.values.clone()).expect("positive extents")
    }

    pub fn from_tensor(t: &TensorF, provenance: BucketProvenance) -> Result<Self> {
        let &[frames, patterns] = t.dims() else {
            return Err(GhostError::Dimension(format!("bucket tensor must be [T,M], got {:?}", t.dims())));
        };
        BucketSeries::new(frames, patterns, t.data().to_vec(), provenance)
    }
}

/// `mu[t][i] = <H_i, x_t> / R_i` as a `[T, M]` tensor.
pub fn ideal_intensity(ps: &PatternSet, seq: &SceneSequence) -> Result<TensorF> {
    let (h, w) = seq.shape();
    if (h, w) != (ps.height(), ps.width()) {
        return Err(GhostError::Dimension(format!(
            "scene is {h}x{w}, patterns are {}x{}",
            ps.height(),
            ps.width()
        )));
    }
    let m = ps.count();
    let mut mu = Vec::with_capacity(seq.len() * m);
    for frame in seq.frames() {
        for i in 0..m {
            let v = dot(ps.pattern(i), frame.data()) / ps.row_sums()[i];
            mu.push(v.clamp(0.0, 1.0));
        }
    }
    TensorF::from_vec(&[seq.len(), m], mu)
}

fn check_intensity(mu: &TensorF) -> Result<(usize, usize)> {
    let &[t, m] = mu.dims() else {
        return Err(GhostError::Dimension(format!("intensity must be [T,M], got {:?}", mu.dims())));
    };
    Ok((t, m))
}

/// `b = clip(mu + eps, 0, 1)`, `eps ~ N(0, sigma^2)` i.i.d., row-major draws.
pub fn classical_detect(mu: &TensorF, sigma: f64, rng: &mut RngStream) -> Result<BucketSeries> {
    let (t, m) = check_intensity(mu)?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(GhostError::Domain(format!("sigma must be non-negative, got {sigma}")));
    }
    let provenance = BucketProvenance {
        mode: BucketMode::Analog,
        detector: "classical".into(),
        seed: rng.master_seed(),
        stream: rng.stream_id(),
        n_bar: None,
        sigma: Some(sigma),
        detector_spec: None,
    };
    let values = mu
        .data()
        .iter()
        .map(|&v| sample_gaussian(rng, v, sigma).map(|b| b.clamp(0.0, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    BucketSeries::new(t, m, values, provenance)
}

/// Noise level giving `10 log10(mean(mu^2) / sigma^2) = snr_db`.
pub fn sigma_for_snr(mu: &TensorF, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(GhostError::Domain(format!("SNR must be finite, got {snr_db}")));
    }
    let power = mu.data().iter().map(|v| v * v).sum::<f64>() / mu.len() as f64;
    if power <= 0.0 {
        return Err(GhostError::Domain("signal power is zero".into()));
    }
    Ok((power / 10f64.powf(snr_db / 10.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::patterns::{generate_speckle, sensing_matrix};
    use crate::scene::SceneSequence;

    fn toy_patterns() -> PatternSet {
        generate_speckle(12, 8, 8, 2.0, &RngStream::substream(1, 0)).unwrap()
    }

    fn seq_of(values: &[Vec<f64>]) -> SceneSequence {
        SceneSequence::new(values.iter().map(|v| Image::from_vec(8, 8, v.clone()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn ones_and_zeros() {
        let ps = toy_patterns();
        let mu = ideal_intensity(&ps, &seq_of(&[vec![1.0; 64], vec![0.0; 64]])).unwrap();
        assert!(mu.data()[..12].iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(mu.data()[12..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_pattern_reads_pixel() {
        let mut values = vec![0.0; 3 * 4];
        values[1] = 1.0;
        values[4 + 2] = 1.0;
        values[8 + 3] = 1.0;
        let ps = PatternSet::from_values(3, 2, 2, values).unwrap();
        let x = vec![0.1, 0.2, 0.3, 0.4];
        let seq = SceneSequence::new(vec![Image::from_vec(2, 2, x).unwrap()]).unwrap();
        let mu = ideal_intensity(&ps, &seq).unwrap();
        assert_eq!(mu.data(), &[0.2, 0.3, 0.4]);
    }

    #[test]
    fn extent_mismatch() {
        let ps = toy_patterns();
        let seq = SceneSequence::new(vec![Image::zeros(4, 4)]).unwrap();
        assert!(matches!(ideal_intensity(&ps, &seq), Err(GhostError::Dimension(_))));
    }

    #[test]
    fn linear_in_scene() {
        let ps = toy_patterns();
        let mut r = RngStream::substream(2, 2);
        let x1: Vec<f64> = (0..64).map(|_| r.next_f64()).collect();
        let x2: Vec<f64> = (0..64).map(|_| r.next_f64()).collect();
        let a = 0.3;
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + (1.0 - a) * q).collect();
        let m1 = ideal_intensity(&ps, &seq_of(&[x1])).unwrap();
        let m2 = ideal_intensity(&ps, &seq_of(&[x2])).unwrap();
        let mm = ideal_intensity(&ps, &seq_of(&[mix])).unwrap();
        for i in 0..12 {
            let want = a * m1.data()[i] + (1.0 - a) * m2.data()[i];
            assert!((mm.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sensing_matrix_cross_check() {
        let ps = toy_patterns();
        let mut r = RngStream::substream(3, 3);
        let x: Vec<f64> = (0..64).map(|_| r.next_f64()).collect();
        let mu = ideal_intensity(&ps, &seq_of(&[x.clone()])).unwrap();
        let a = sensing_matrix(&ps);
        for i in 0..12 {
            let b = dot(&a.data()[i * 64..(i + 1) * 64], &x) / ps.row_sums()[i];
            assert!((b - mu.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_detector_is_identity() {
        let mu = TensorF::from_vec(&[2, 2], vec![0.1, 0.5, 0.9, 1.0]).unwrap();
        let b = classical_detect(&mu, 0.0, &mut RngStream::substream(0, 0)).unwrap();
        assert_eq!(b.values(), mu.data());
        assert_eq!(b.mode(), BucketMode::Analog);
    }

    #[test]
    fn clip_at_one_and_idempotent() {
        let mu = TensorF::from_vec(&[1, 1000], vec![1.0; 1000]).unwrap();
        let b = classical_detect(&mu, 0.3, &mut RngStream::substream(0, 1)).unwrap();
        assert!(b.values().iter().all(|&v| v <= 1.0 && v >= 0.0));
        assert!(b.values().iter().any(|&v| v == 1.0));
        let again: Vec<f64> = b.values().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        assert_eq!(again, b.values());
    }

    #[test]
    fn interior_noise_level() {
        let mu = TensorF::from_vec(&[100, 1000], vec![0.5; 100_000]).unwrap();
        let b = classical_detect(&mu, 0.02, &mut RngStream::substream(4, 4)).unwrap();
        let n = b.values().len() as f64;
        let d: Vec<f64> = b.values().iter().map(|v| v - 0.5).collect();
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.019..=0.021).contains(&sd), "sd {sd}");
    }

    #[test]
    fn negative_sigma_rejected() {
        let mu = TensorF::from_vec(&[1, 1], vec![0.5]).unwrap();
        assert!(classical_detect(&mu, -0.1, &mut RngStream::substream(0, 0)).is_err());
    }

    #[test]
    fn sigma_for_snr_arithmetic() {
        // mean(mu^2) = 0.04 with every entry 0.2.
        let mu = TensorF::from_vec(&[2, 2], vec![0.2; 4]).unwrap();
        let s20 = sigma_for_snr(&mu, 20.0).unwrap();
        assert!((s20 * s20 - 4e-4).abs() < 1e-15);
        assert!((s20 - 0.02).abs() < 1e-12);
        assert!((sigma_for_snr(&mu, 0.0).unwrap() - 0.2).abs() < 1e-12);
        let grid = [-5.0, 0.0, 10.0, 30.0, 100.0];
        let sig: Vec<f64> = grid.iter().map(|&d| sigma_for_snr(&mu, d).unwrap()).collect();
        assert!(sig.windows(2).all(|w| w[1] < w[0]));
        let zero = TensorF::zeros(&[2, 2]).unwrap();
        assert!(sigma_for_snr(&zero, 10.0).is_err());
    }
}
