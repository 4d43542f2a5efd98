//! C ABI over the ghostlab toolkit.
//!
//! Every fallible function returns a [`GlStatus`]; on failure the message is
//! available from [`gl_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new`-style functions and released with the
//! matching `*_free`. Panics never cross the boundary; they surface as
//! `GL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ghostlab::experiment::{Command, ExperimentConfig};
use ghostlab::measurement::ideal_intensity;
use ghostlab::metrics::{mse, ssim};
use ghostlab::normalize::{Normalizer, NormalizerKind};
use ghostlab::patterns::{generate_bernoulli, generate_speckle, PatternSet};
use ghostlab::qdetector::{detect_counts, preset};
use ghostlab::recon::{dgi, fista, raw_buckets, FistaConfig, Lambda, PseudoInverse};
use ghostlab::scene::SceneSequence;
use ghostlab::{GhostError, Image, RngStream, TensorF};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Io = 4,
    Format = 5,
    NotFound = 6,
    NonFinite = 7,
    Config = 8,
    DegenerateFit = 9,
    GateFailed = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlNormalizer {
    None = 0,
    Sqrt = 1,
    Log1p = 2,
    Minmax = 3,
    Zscore = 4,
    Anscombe = 5,
    FreemanTukey = 6,
}

impl From<GlNormalizer> for NormalizerKind {
    fn from(k: GlNormalizer) -> Self {
        match k {
            GlNormalizer::None => NormalizerKind::None,
            GlNormalizer::Sqrt => NormalizerKind::Sqrt,
            GlNormalizer::Log1p => NormalizerKind::Log1p,
            GlNormalizer::Minmax => NormalizerKind::Minmax,
            GlNormalizer::Zscore => NormalizerKind::Zscore,
            GlNormalizer::Anscombe => NormalizerKind::Anscombe,
            GlNormalizer::FreemanTukey => NormalizerKind::FreemanTukey,
        }
    }
}

/// Illumination pattern set.
pub struct GlPatterns(PatternSet);

/// Pseudo-inverse of a pattern set, factorized once.
pub struct GlPseudoInverse {
    pinv: PseudoInverse,
    patterns: PatternSet,
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Small { need: usize, have: usize },
    Core(GhostError),
}

impl From<GhostError> for Fail {
    fn from(e: GhostError) -> Self {
        Fail::Core(e)
    }
}

type FfiResult<T> = Result<T, Fail>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &GhostError) -> GlStatus {
    match e {
        GhostError::Domain(_) => GlStatus::InvalidArgument,
        GhostError::Dimension(_) => GlStatus::Dimension,
        GhostError::Format { .. } => GlStatus::Format,
        GhostError::Io { .. } => GlStatus::Io,
        GhostError::DegenerateFit(_) => GlStatus::DegenerateFit,
        GhostError::NonFinite { .. } => GlStatus::NonFinite,
        GhostError::Config(_) => GlStatus::Config,
        GhostError::NotFound(_) => GlStatus::NotFound,
        GhostError::GateFailed(_) => GlStatus::GateFailed,
    }
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> GlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GlStatus::Ok,
        Ok(Err(fail)) => {
            let (status, msg) = match fail {
                Fail::Null(what) => (GlStatus::NullPointer, format!("{what} is null")),
                Fail::Arg(msg) => (GlStatus::InvalidArgument, msg),
                Fail::Small { need, have } => (
                    GlStatus::BufferTooSmall,
                    format!("output buffer holds {have} values, {need} needed"),
                ),
                Fail::Core(e) => (status_of(&e), e.to_string()),
            };
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GlStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &'static str) -> FfiResult<&'a [T]> {
    if ptr.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(Fail::Null(what)) };
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &'static str) -> FfiResult<&'a mut [T]> {
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &'static str) -> FfiResult<&'a T> {
    ptr.as_ref().ok_or(Fail::Null(what))
}

unsafe fn text<'a>(ptr: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> FfiResult<()> {
    if dst.len() < src.len() {
        return Err(Fail::Small {
            need: src.len(),
            have: dst.len(),
        });
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next ghostlab call on the same thread.
#[no_mangle]
pub extern "C" fn gl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// `count` speckle patterns of `height x width` with grain `grain_px`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn gl_patterns_speckle(
    count: usize,
    height: usize,
    width: usize,
    grain_px: f64,
    seed: u64,
    out: *mut *mut GlPatterns,
) -> GlStatus {
    guard(|| {
        let ps = generate_speckle(count, height, width, grain_px, &RngStream::substream(seed, 1))?;
        store(out, GlPatterns(ps))
    })
}

/// `count` Bernoulli(`fill`) patterns.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn gl_patterns_bernoulli(
    count: usize,
    height: usize,
    width: usize,
    fill: f64,
    seed: u64,
    out: *mut *mut GlPatterns,
) -> GlStatus {
    guard(|| {
        let ps = generate_bernoulli(count, height, width, fill, &RngStream::substream(seed, 1))?;
        store(out, GlPatterns(ps))
    })
}

/// Patterns from row-major `[count, height, width]` values.
///
/// # Safety
/// `values` must point to `count * height * width` doubles; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn gl_patterns_from_values(
    count: usize,
    height: usize,
    width: usize,
    values: *const f64,
    out: *mut *mut GlPatterns,
) -> GlStatus {
    guard(|| {
        let n = count
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Fail::Arg("pattern extents overflow".into()))?;
        let v = slice(values, n, "values")?;
        let ps = PatternSet::from_values(count, height, width, v.to_vec())?;
        store(out, GlPatterns(ps))
    })
}

/// # Safety
/// `patterns` must be a live handle; output pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gl_patterns_shape(
    patterns: *const GlPatterns,
    count: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> GlStatus {
    guard(|| {
        let ps = &handle(patterns, "patterns")?.0;
        for (ptr, v) in [(count, ps.count()), (height, ps.height()), (width, ps.width())] {
            if let Some(p) = ptr.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `patterns` must come from a `gl_patterns_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gl_patterns_free(patterns: *mut GlPatterns) {
    if !patterns.is_null() {
        drop(Box::from_raw(patterns));
    }
}

/// Normalized intensities `mu_i = <H_i, x> / R_i` of one `height x width`
/// frame.
///
/// # Safety
/// `frame` must hold `frame_len` doubles and `mu_out` `mu_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gl_intensity(
    patterns: *const GlPatterns,
    frame: *const f64,
    frame_len: usize,
    mu_out: *mut f64,
    mu_len: usize,
) -> GlStatus {
    guard(|| {
        let ps = &handle(patterns, "patterns")?.0;
        let x = slice(frame, frame_len, "frame")?;
        let img = Image::from_vec(ps.height(), ps.width(), x.to_vec())?;
        let mu = ideal_intensity(ps, &SceneSequence::new(vec![img])?)?;
        copy_out(mu.data(), slice_mut(mu_out, mu_len, "mu_out")?)
    })
}

fn frame_buckets(ps: &PatternSet, mu: &[f64]) -> FfiResult<Vec<f64>> {
    if mu.len() != ps.count() {
        return Err(Fail::Arg(format!("{} intensities for {} patterns", mu.len(), ps.count())));
    }
    Ok(raw_buckets(ps, mu))
}

/// Differential ghost imaging from intensities `mu` (one per pattern); the
/// image is rescaled to [0, 1].
///
/// # Safety
/// `mu` must hold `mu_len` doubles and `image_out` `image_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gl_reconstruct_dgi(
    patterns: *const GlPatterns,
    mu: *const f64,
    mu_len: usize,
    image_out: *mut f64,
    image_len: usize,
) -> GlStatus {
    guard(|| {
        let ps = &handle(patterns, "patterns")?.0;
        let b = frame_buckets(ps, slice(mu, mu_len, "mu")?)?;
        let r = dgi(ps, &b)?;
        copy_out(r.image.data(), slice_mut(image_out, image_len, "image_out")?)
    })
}

/// Sparse recovery in the DCT basis; `lambda_relative` scales the data
/// term's largest correlation, `iterations` defaults to 200 when 0.
///
/// # Safety
/// As for [`gl_reconstruct_dgi`].
#[no_mangle]
pub unsafe extern "C" fn gl_reconstruct_fista(
    patterns: *const GlPatterns,
    mu: *const f64,
    mu_len: usize,
    iterations: usize,
    lambda_relative: f64,
    image_out: *mut f64,
    image_len: usize,
) -> GlStatus {
    guard(|| {
        let ps = &handle(patterns, "patterns")?.0;
        let b = frame_buckets(ps, slice(mu, mu_len, "mu")?)?;
        let mut cfg = FistaConfig {
            lambda: Lambda::Relative(lambda_relative),
            ..FistaConfig::default()
        };
        if iterations > 0 {
            cfg.iterations = iterations;
        }
        let r = fista(ps, &b, &cfg)?;
        copy_out(r.image.data(), slice_mut(image_out, image_len, "image_out")?)
    })
}

/// Factorize the pseudo-inverse of `patterns` (which is copied).
///
/// # Safety
/// `patterns` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gl_pinv_new(patterns: *const GlPatterns, out: *mut *mut GlPseudoInverse) -> GlStatus {
    guard(|| {
        let ps = handle(patterns, "patterns")?.0.clone();
        let pinv = PseudoInverse::new(&ps)?;
        store(out, GlPseudoInverse { pinv, patterns: ps })
    })
}

/// Minimum-norm least-squares image, clamped to [0, 1].
///
/// # Safety
/// As for [`gl_reconstruct_dgi`].
#[no_mangle]
pub unsafe extern "C" fn gl_pinv_solve(
    pinv: *const GlPseudoInverse,
    mu: *const f64,
    mu_len: usize,
    image_out: *mut f64,
    image_len: usize,
) -> GlStatus {
    guard(|| {
        let h = handle(pinv, "pinv")?;
        let b = frame_buckets(&h.patterns, slice(mu, mu_len, "mu")?)?;
        let r = h.pinv.solve(&b)?;
        copy_out(r.image.data(), slice_mut(image_out, image_len, "image_out")?)
    })
}

/// # Safety
/// `pinv` must come from [`gl_pinv_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gl_pinv_free(pinv: *mut GlPseudoInverse) {
    if !pinv.is_null() {
        drop(Box::from_raw(pinv));
    }
}

unsafe fn image_pair(a: *const f64, b: *const f64, height: usize, width: usize) -> FfiResult<(Image, Image)> {
    let n = height
        .checked_mul(width)
        .ok_or_else(|| Fail::Arg("image extents overflow".into()))?;
    let a = Image::from_vec(height, width, slice(a, n, "a")?.to_vec())?;
    let b = Image::from_vec(height, width, slice(b, n, "b")?.to_vec())?;
    Ok((a, b))
}

/// # Safety
/// `a` and `b` must hold `height * width` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gl_mse(a: *const f64, b: *const f64, height: usize, width: usize, out: *mut f64) -> GlStatus {
    guard(|| {
        let (a, b) = image_pair(a, b, height, width)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = mse(&a, &b)?;
        Ok(())
    })
}

/// Mean SSIM over valid 11x11 Gaussian windows.
///
/// # Safety
/// As for [`gl_mse`].
#[no_mangle]
pub unsafe extern "C" fn gl_ssim(a: *const f64, b: *const f64, height: usize, width: usize, out: *mut f64) -> GlStatus {
    guard(|| {
        let (a, b) = image_pair(a, b, height, width)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = ssim(&a, &b)?;
        Ok(())
    })
}

/// Transform `len` counts in place of `out`; min-max and z-score are fitted
/// on the same input.
///
/// # Safety
/// `counts` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gl_normalize(kind: GlNormalizer, counts: *const f64, len: usize, out: *mut f64) -> GlStatus {
    guard(|| {
        let c = slice(counts, len, "counts")?;
        let nz = Normalizer::fit(kind.into(), c)?;
        copy_out(&nz.apply_all(c)?, slice_mut(out, len, "out")?)
    })
}

/// Photon counts for intensities `mu` on detector preset `detector`
/// ("snspd", "spad" or "sipm") at 1 ms integration.
///
/// # Safety
/// `mu` and `counts_out` must each hold `len` doubles; `detector` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gl_detect_counts(
    mu: *const f64,
    len: usize,
    n_bar: f64,
    detector: *const c_char,
    seed: u64,
    counts_out: *mut f64,
) -> GlStatus {
    guard(|| {
        let spec = preset(text(detector, "detector")?)?;
        let m = slice(mu, len, "mu")?;
        let t = TensorF::from_vec(&[1, len], m.to_vec())?;
        let b = detect_counts(&t, n_bar, &spec, &mut RngStream::substream(seed, 0))?;
        copy_out(b.values(), slice_mut(counts_out, len, "counts_out")?)
    })
}

/// Run one experiment command (`simulate`, `reconstruct`, ...) with a JSON
/// config. `output_dir` overrides the config's when non-NULL. A failed gate
/// returns `GL_STATUS_GATE_FAILED`.
///
/// # Safety
/// String arguments must be NUL-terminated or (for `output_dir`) NULL.
#[no_mangle]
pub unsafe extern "C" fn gl_run_command(
    config_json: *const c_char,
    command: *const c_char,
    output_dir: *const c_char,
) -> GlStatus {
    guard(|| {
        let mut cfg = ExperimentConfig::from_json(text(config_json, "config_json")?, Path::new("<ffi>"))?;
        if !output_dir.is_null() {
            cfg.output_dir = text(output_dir, "output_dir")?.into();
        }
        let cmd: Command = text(command, "command")?.parse()?;
        let outcome = cmd.run(&cfg)?;
        match outcome.gate {
            Some((false, msg)) => Err(Fail::Core(GhostError::GateFailed(msg))),
            _ => Ok(()),
        }
    })
}
