use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::patterns::PatternSet;

use super::Reconstruction;

/// Differential ghost imaging,
/// `x = <b H> - (<b> / <R>) <R H>` with `<.>` the mean over patterns,
/// then rescaled affinely onto `[0, 1]`.
pub fn dgi(ps: &PatternSet, b: &[f64]) -> Result<Reconstruction> {
    let m = ps.count();
    if b.is_empty() {
        return Err(GhostError::Domain("DGI needs at least one bucket".into()));
    }
    if b.len() != m {
        return Err(GhostError::Dimension(format!("{} buckets for {m} patterns", b.len())));
    }
    let n = ps.pixels();
    let rows = ps.row_sums();
    let mf = m as f64;
    let mean_b = b.iter().sum::<f64>() / mf;
    let mean_r = rows.iter().sum::<f64>() / mf;
    let ratio = mean_b / mean_r;
    let mut acc = vec![0.0; n];
    for i in 0..m {
        // b_i H_i - ratio * R_i H_i, accumulated in one pass.
        let weight = (b[i] - ratio * rows[i]) / mf;
        for (a, &h) in acc.iter_mut().zip(ps.pattern(i)) {
            *a += weight * h;
        }
    }
    let raw = Image::from_vec(ps.height(), ps.width(), acc)?;
    Ok(Reconstruction {
        image: raw.rescale01(),
        raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::generate_speckle;
    use crate::rng::RngStream;

    /// Literal evaluation of each average separately.
    fn dgi_brute(ps: &PatternSet, b: &[f64]) -> Vec<f64> {
        let m = ps.count() as f64;
        let n = ps.pixels();
        let mut bh = vec![0.0; n];
        let mut rh = vec![0.0; n];
        for i in 0..ps.count() {
            let r: f64 = ps.pattern(i).iter().sum();
            for j in 0..n {
                bh[j] += b[i] * ps.pattern(i)[j];
                rh[j] += r * ps.pattern(i)[j];
            }
        }
        let mean_b = b.iter().sum::<f64>() / m;
        let mean_r = (0..ps.count()).map(|i| ps.pattern(i).iter().sum::<f64>()).sum::<f64>() / m;
        (0..n).map(|j| bh[j] / m - mean_b / mean_r * rh[j] / m).collect()
    }

    #[test]
    fn single_measurement_is_zero() {
        let ps = generate_speckle(1, 6, 6, 2.0, &RngStream::substream(1, 1)).unwrap();
        let out = dgi(&ps, &[3.7]).unwrap();
        assert!(out.raw.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_brute_force() {
        let ps = generate_speckle(50, 8, 8, 1.5, &RngStream::substream(2, 2)).unwrap();
        let mut r = RngStream::substream(2, 3);
        let b: Vec<f64> = (0..50).map(|_| 10.0 * r.next_f64()).collect();
        let out = dgi(&ps, &b).unwrap();
        for (a, e) in out.raw.data().iter().zip(dgi_brute(&ps, &b)) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_patterns_recover_centered_scene() {
        let n = 16;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        let ps = PatternSet::from_values(n, 4, 4, values).unwrap();
        let mut r = RngStream::substream(4, 4);
        let x: Vec<f64> = (0..n).map(|_| r.next_f64()).collect();
        let out = dgi(&ps, &x).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        // raw = (x - mean) / M exactly.
        for (a, xv) in out.raw.data().iter().zip(&x) {
            assert!((a - (xv - mean) / n as f64).abs() < 1e-12);
        }
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            idx
        };
        assert_eq!(rank(out.image.data()), rank(&x));
    }

    #[test]
    fn bucket_scaling_keeps_ranking() {
        let ps = generate_speckle(30, 8, 8, 2.0, &RngStream::substream(5, 5)).unwrap();
        let mut r = RngStream::substream(5, 6);
        let b: Vec<f64> = (0..30).map(|_| r.next_f64()).collect();
        let scaled: Vec<f64> = b.iter().map(|v| 3.5 * v).collect();
        let a = dgi(&ps, &b).unwrap().image;
        let c = dgi(&ps, &scaled).unwrap().image;
        for (p, q) in a.data().iter().zip(c.data()) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn input_errors() {
        let ps = generate_speckle(3, 4, 4, 2.0, &RngStream::substream(1, 1)).unwrap();
        assert!(dgi(&ps, &[]).is_err());
        assert!(dgi(&ps, &[1.0, 2.0]).is_err());
    }
}
