//! Structured illumination patterns and the sensing matrix they form.
//!
//! Speckle patterns are synthetic: white Gaussian noise smoothed by a
//! separable Gaussian kernel of standard deviation `grain_px / 2`
//! (reflecting boundaries), then mapped affinely onto `[0, 1]` per pattern.

use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::rng::RngStream;
use crate::tensor::TensorF;

/// `M` illumination patterns of `H x W` pixels, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternSet {
    count: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
    row_sums: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Speckle,
    Bernoulli,
}

impl PatternSet {
    /// Build from row-major `[M, H, W]` values.
    pub fn from_values(count: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if count == 0 || height == 0 || width == 0 {
            return Err(GhostError::Dimension(format!(
                "pattern set extents {count}x{height}x{width}"
            )));
        }
        let n = height * width;
        if values.len() != count * n {
            return Err(GhostError::Dimension(format!(
                "{count} patterns of {height}x{width} need {} values, got {}",
                count * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(GhostError::Domain("pattern values must lie in [0, 1]".into()));
        }
        let row_sums: Vec<f64> = values.chunks_exact(n).map(|r| r.iter().sum()).collect();
        if let Some(i) = row_sums.iter().position(|&s| s <= 0.0) {
            return Err(GhostError::Domain(format!("pattern {i} is identically zero")));
        }
        Ok(PatternSet {
            count,
            height,
            width,
            values,
            row_sums,
        })
    }

    pub fn from_tensor(t: &TensorF) -> Result<Self> {
        let &[m, h, w] = t.dims() else {
            return Err(GhostError::Dimension(format!(
                "pattern tensor must be [M,H,W], got {:?}",
                t.dims()
            )));
        };
        PatternSet::from_values(m, h, w, t.data().to_vec())
    }

    pub fn to_tensor(&self) -> TensorF {
        TensorF::from_vec(&[self.count, self.height, self.width], self.values.clone())
            .expect("positive extents")
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Flattened pattern `i`.
    pub fn pattern(&self, i: usize) -> &[f64] {
        let n = self.pixels();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn pattern_image(&self, i: usize) -> Image {
        Image::from_vec(self.height, self.width, self.pattern(i).to_vec()).expect("positive extents")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `R_i`, the total of each pattern.
    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// Threshold every pattern at its own median: above becomes 1, else 0.
    /// Patterns that would become all-zero keep their maximum pixel lit.
    pub fn binarize(&self) -> PatternSet {
        let n = self.pixels();
        let mut values = Vec::with_capacity(self.values.len());
        for row in self.values.chunks_exact(n) {
            let mut sorted = row.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[n / 2];
            let mut bin: Vec<f64> = row.iter().map(|&v| if v > median { 1.0 } else { 0.0 }).collect();
            if bin.iter().all(|&v| v == 0.0) {
                let arg = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                bin[arg] = 1.0;
            }
            values.extend(bin);
        }
        PatternSet::from_values(self.count, self.height, self.width, values)
            .expect("binarized patterns keep a lit pixel")
    }
}

/// `M x (H*W)` matrix whose row `i` is pattern `i` flattened row-major.
pub fn sensing_matrix(ps: &PatternSet) -> TensorF {
    TensorF::from_vec(&[ps.count(), ps.pixels()], ps.values().to_vec()).expect("positive extents")
}

/// `beta = M / (H * W)`.
pub fn sampling_ratio(ps: &PatternSet) -> f64 {
    ps.count() as f64 / ps.pixels() as f64
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Symmetric reflection (`d c b a | a b c d | d c b a`) for any offset.
fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn blur_separable(src: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, &kv)| kv * src[r * w + reflect_index(c as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, &kv)| kv * tmp[reflect_index(r as isize + k as isize - radius, h) * w + c])
                .sum();
        }
    }
    out
}

/// The smoothed Gaussian field behind one speckle pattern, before the
/// affine map. Its per-pixel variance shrinks as `grain_px` grows.
pub fn speckle_field(height: usize, width: usize, grain_px: f64, rng: &mut RngStream) -> Vec<f64> {
    let noise: Vec<f64> = (0..height * width).map(|_| rng.standard_normal()).collect();
    blur_separable(&noise, height, width, &gaussian_kernel(grain_px / 2.0))
}

/// `count` speckle patterns; pattern `i` draws from `rng.derive(i)`.
pub fn generate_speckle(
    count: usize,
    height: usize,
    width: usize,
    grain_px: f64,
    rng: &RngStream,
) -> Result<PatternSet> {
    if count == 0 || height == 0 || width == 0 || height * width < 2 {
        return Err(GhostError::Dimension(format!(
            "degenerate pattern extents {count}x{height}x{width}"
        )));
    }
    if !(grain_px >= 1.0) || !grain_px.is_finite() {
        return Err(GhostError::Domain(format!("grain must be >= 1 px, got {grain_px}")));
    }
    let mut values = Vec::with_capacity(count * height * width);
    for i in 0..count {
        let mut sub = rng.derive(i as u64);
        loop {
            let field = speckle_field(height, width, grain_px, &mut sub);
            let (lo, hi) = field
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if hi > lo {
                values.extend(field.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)));
                break;
            }
        }
    }
    PatternSet::from_values(count, height, width, values)
}

/// I.i.d. `{0, 1}` patterns with `P(1) = p`; all-zero patterns are redrawn.
pub fn generate_bernoulli(
    count: usize,
    height: usize,
    width: usize,
    p: f64,
    rng: &RngStream,
) -> Result<PatternSet> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GhostError::Domain(format!("Bernoulli p must lie in (0, 1), got {p}")));
    }
    if count == 0 || height == 0 || width == 0 {
        return Err(GhostError::Dimension(format!(
            "degenerate pattern extents {count}x{height}x{width}"
        )));
    }
    let n = height * width;
    let mut values = Vec::with_capacity(count * n);
    for i in 0..count {
        let mut sub = rng.derive(i as u64);
        loop {
            let row: Vec<f64> = (0..n).map(|_| if sub.next_f64() < p { 1.0 } else { 0.0 }).collect();
            if row.iter().any(|&v| v > 0.0) {
                values.extend(row);
                break;
            }
        }
    }
    PatternSet::from_values(count, height, width, values)
}
