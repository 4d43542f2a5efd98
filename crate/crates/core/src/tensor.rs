//! Row-major `f64` tensor and the portable GTF file format.
//!
//! A GTF file is one UTF-8 JSON header line,
//! `{"magic":"GTF1","dtype":"f32","dims":[...]}\n`, followed by exactly
//! `product(dims)` little-endian IEEE-754 `f32` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{GhostError, Result};

pub const GTF_MAGIC: &str = "GTF1";

#[derive(Clone, Debug, PartialEq)]
pub struct TensorF {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(GhostError::Dimension("tensor needs at least one dimension".into()));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(GhostError::Dimension(format!(
            "extent {pos} of {dims:?} is zero"
        )));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| GhostError::Dimension(format!("{dims:?} overflows")))
}

impl TensorF {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        Ok(TensorF {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        })
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != data.len() {
            return Err(GhostError::Dimension(format!(
                "dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(GhostError::NonFinite {
                name: format!("tensor element {i}"),
            });
        }
        Ok(TensorF {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same values, new dims with equal element count.
    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != self.data.len() {
            return Err(GhostError::Dimension(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        Ok(TensorF {
            dims: dims.to_vec(),
            data: self.data,
        })
    }

    pub fn zeros_like(&self) -> Self {
        TensorF {
            dims: self.dims.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Encoded GTF bytes.
    pub fn to_gtf_bytes(&self) -> Vec<u8> {
        let dims = self
            .dims
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let header = format!("{{\"magic\":\"{GTF_MAGIC}\",\"dtype\":\"f32\",\"dims\":[{dims}]}}\n");
        let mut out = Vec::with_capacity(header.len() + 4 * self.data.len());
        out.extend_from_slice(header.as_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Decode GTF bytes; `origin` is only used in error messages.
    pub fn from_gtf_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Header {
            magic: String,
            dtype: String,
            dims: Vec<usize>,
        }

        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| GhostError::format(origin, "missing header line"))?;
        let header: Header = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| GhostError::format(origin, format!("bad header: {e}")))?;
        if header.magic != GTF_MAGIC {
            return Err(GhostError::format(origin, format!("bad magic {:?}", header.magic)));
        }
        if header.dtype != "f32" {
            return Err(GhostError::format(origin, format!("unsupported dtype {:?}", header.dtype)));
        }
        let n = check_dims(&header.dims)
            .map_err(|e| GhostError::format(origin, format!("bad dims: {e}")))?;
        let payload = &bytes[newline + 1..];
        if payload.len() != 4 * n {
            return Err(GhostError::format(
                origin,
                format!(
                    "dims {:?} need {} payload bytes, found {}",
                    header.dims,
                    4 * n,
                    payload.len()
                ),
            ));
        }
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GhostError::format(origin, "payload holds non-finite values"));
        }
        Ok(TensorF {
            dims: header.dims,
            data,
        })
    }
}

pub fn save_tensor(t: &TensorF, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &t.to_gtf_bytes())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<TensorF> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GhostError::io(path, e))?;
    TensorF::from_gtf_bytes(&bytes, path)
}

/// Write through a sibling temporary file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| GhostError::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| GhostError::Config(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| GhostError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| GhostError::io(&tmp, e))?;
        f.sync_all().map_err(|e| GhostError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| GhostError::io(path, e))
}
