use crate::image::Image;
use crate::linalg::{matmul, matmul_acc, matmul_tn_acc};

/// Orthonormal type-II 2-D DCT for a fixed frame extent.
///
/// `forward(X) = C_h X C_w^T`, `inverse(Y) = C_h^T Y C_w`.
#[derive(Clone, Debug)]
pub struct Dct2 {
    height: usize,
    width: usize,
    c_h: Vec<f64>,
    c_w: Vec<f64>,
}

fn dct_matrix(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let alpha = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            c[k * n + i] = alpha * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    c
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

impl Dct2 {
    pub fn new(height: usize, width: usize) -> Self {
        Dct2 {
            height,
            width,
            c_h: dct_matrix(height),
            c_w: dct_matrix(width),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let tmp = matmul(&self.c_h, x, h, h, w);
        let mut out = vec![0.0; h * w];
        // tmp * C_w^T
        let cwt = transpose(&self.c_w, w, w);
        matmul_acc(&tmp, &cwt, &mut out, h, w, w);
        out
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut tmp = vec![0.0; h * w];
        matmul_tn_acc(&self.c_h, y, &mut tmp, h, h, w);
        matmul(&tmp, &self.c_w, h, w, w)
    }
}

pub fn dct2(img: &Image) -> Image {
    let (h, w) = img.shape();
    Image::from_vec(h, w, Dct2::new(h, w).forward(img.data())).expect("same extents")
}

pub fn idct2(coeffs: &Image) -> Image {
    let (h, w) = coeffs.shape();
    Image::from_vec(h, w, Dct2::new(h, w).inverse(coeffs.data())).expect("same extents")
}
