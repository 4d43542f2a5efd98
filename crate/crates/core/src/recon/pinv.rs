use nalgebra::{DMatrix, DVector};

use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::patterns::PatternSet;

use super::Reconstruction;

/// Relative cutoff below which singular values are treated as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

/// Cached Moore-Penrose inverse of a pattern set's sensing matrix.
///
/// Built once from a thin SVD; each [`solve`](Self::solve) is then a
/// single `N x M` matrix-vector product.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    height: usize,
    width: usize,
    count: usize,
    pinv: DMatrix<f64>,
    rank: usize,
}

impl PseudoInverse {
    pub fn new(ps: &PatternSet) -> Result<Self> {
        let (m, n) = (ps.count(), ps.pixels());
        let a = DMatrix::from_row_slice(m, n, ps.values());
        let svd = a.svd(true, true);
        let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cutoff = SINGULAR_CUTOFF * sigma_max;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let pinv = svd
            .pseudo_inverse(cutoff)
            .map_err(|e| GhostError::Domain(format!("pseudo-inverse failed: {e}")))?;
        Ok(PseudoInverse {
            height: ps.height(),
            width: ps.width(),
            count: m,
            pinv,
            rank,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn solve_raw(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.count {
            return Err(GhostError::Dimension(format!("{} buckets for {} patterns", b.len(), self.count)));
        }
        let x = &self.pinv * DVector::from_column_slice(b);
        Ok(x.iter().copied().collect())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Reconstruction> {
        let raw = Image::from_vec(self.height, self.width, self.solve_raw(b)?)?;
        Ok(Reconstruction {
            image: raw.clamp01(),
            raw,
        })
    }
}

/// One-shot minimum-norm least-squares solve.
pub fn pseudo_inverse(ps: &PatternSet, b: &[f64]) -> Result<Reconstruction> {
    PseudoInverse::new(ps)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matvec, matvec_t};
    use crate::patterns::generate_bernoulli;
    use crate::rng::RngStream;

    /// Gaussian elimination with partial pivoting on a square system.
    fn lu_solve(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut m: Vec<Vec<f64>> = (0..n).map(|r| {
            let mut row = a[r * n..(r + 1) * n].to_vec();
            row.push(b[r]);
            row
        }).collect();
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
            m.swap(col, piv);
            for r in col + 1..n {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
            x[r] = (m[r][n] - s) / m[r][r];
        }
        x
    }

    fn random_scene(n: usize, seed: u64) -> Vec<f64> {
        let mut r = RngStream::substream(seed, 9);
        (0..n).map(|_| r.next_f64()).collect()
    }

    #[test]
    fn identity_system_is_exact() {
        let n = 16;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        let ps = PatternSet::from_values(n, 4, 4, values).unwrap();
        let x = random_scene(n, 1);
        let out = pseudo_inverse(&ps, &x).unwrap();
        for (a, b) in out.raw.data().iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn square_full_rank_matches_elimination() {
        let ps = generate_bernoulli(64, 8, 8, 0.5, &RngStream::substream(3, 3)).unwrap();
        let x = random_scene(64, 2);
        let b = matvec(ps.values(), &x, 64, 64);
        let pi = PseudoInverse::new(&ps).unwrap();
        assert_eq!(pi.rank(), 64);
        let got = pi.solve_raw(&b).unwrap();
        let oracle = lu_solve(ps.values(), &b, 64);
        for ((g, o), t) in got.iter().zip(&oracle).zip(&x) {
            assert!((g - t).abs() < 1e-8);
            assert!((g - o).abs() < 1e-8);
        }
    }

    #[test]
    fn underdetermined_is_consistent_and_normal() {
        let (m, n) = (24, 64);
        let ps = generate_bernoulli(m, 8, 8, 0.5, &RngStream::substream(4, 4)).unwrap();
        let x = random_scene(n, 5);
        let b = matvec(ps.values(), &x, m, n);
        let got = pseudo_inverse(&ps, &b).unwrap().raw;
        let fit = matvec(ps.values(), got.data(), m, n);
        let resid = fit.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(resid < 1e-8);
        // Normal equations.
        let lhs = matvec_t(ps.values(), &fit, m, n);
        let rhs = matvec_t(ps.values(), &b, m, n);
        let scale = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() <= 1e-8 * scale);
        }
        // Minimum norm: no larger than the true scene.
        let nrm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        assert!(nrm(got.data()) <= nrm(&x) + 1e-9);
    }

    #[test]
    fn bucket_count_mismatch() {
        let ps = generate_bernoulli(4, 4, 4, 0.5, &RngStream::substream(1, 1)).unwrap();
        assert!(pseudo_inverse(&ps, &[1.0; 3]).is_err());
    }
}
