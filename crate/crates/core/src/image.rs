//! Single-channel `f64` image with binary PGM (P5) input and output.

use std::fs;
use std::path::Path;

use crate::error::{GhostError, Result};
use crate::tensor::{write_atomic, TensorF};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Image {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(GhostError::Dimension(format!("image extents {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(GhostError::Dimension(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Affine map onto `[0, 1]`; a constant image maps to all zeros.
    pub fn rescale01(&self) -> Image {
        let (lo, hi) = self.min_max();
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            return Image::zeros(self.height, self.width);
        }
        self.map(|v| (v - lo) / (hi - lo))
    }

    pub fn to_tensor(&self) -> TensorF {
        TensorF::from_vec(&[self.height, self.width], self.data.clone())
            .expect("image extents are positive")
    }

    /// Write as 8-bit P5, clamping to `[0, 1]` and scaling by 255.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(
            self.data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        write_atomic(path.as_ref(), &bytes)
    }

    /// Read a binary P5 PGM, scaling samples by `1 / maxval`.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| GhostError::io(path, e))?;
        parse_pgm(&bytes, path)
    }
}

fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(GhostError::format(path, "truncated PGM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(GhostError::format(path, format!("not a binary PGM (magic {:?})", tokens[0])));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| GhostError::format(path, format!("bad {what} {s:?}")))
    };
    let width = parse(&tokens[1], "width")?;
    let height = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(GhostError::format(path, "PGM extents or maxval out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let need = width * height * sample_bytes;
    if bytes.len() < pos + need {
        return Err(GhostError::format(path, "truncated PGM raster"));
    }
    let raster = &bytes[pos..pos + need];
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = if sample_bytes == 1 {
        raster.iter().map(|&b| (b as f64 * scale).min(1.0)).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 * scale).min(1.0))
            .collect()
    };
    Image::from_vec(height, width, data)
}
