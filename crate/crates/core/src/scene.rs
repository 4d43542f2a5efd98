//! Dynamic ground-truth scenes: procedural sprites moved along one of six
//! trajectory families, or frames ingested from a directory of PGM files.
//!
//! Positions are `(x, y)` in continuous pixel coordinates, `x` along columns.
//! A sprite image carries its anchor at its own center; rendering places that
//! anchor at the trajectory position with bilinear sampling.
//!
//! The six motion kinds are linear, oscillatory, circular, accelerating,
//! random walk and bounce. Bounce reflects at the bounds; every other kind
//! clamps the position into the bounds after each step.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::image::Image;
use crate::rng::RngStream;

pub const MAX_SPEED: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpriteKind {
    Disc,
    Ring,
    Rect,
    Glyph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Linear,
    Oscillatory,
    Circular,
    Accelerating,
    RandomWalk,
    Bounce,
}

impl MotionKind {
    pub const ALL: [MotionKind; 6] = [
        MotionKind::Linear,
        MotionKind::Oscillatory,
        MotionKind::Circular,
        MotionKind::Accelerating,
        MotionKind::RandomWalk,
        MotionKind::Bounce,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Motion parameters. Kind-specific fields are ignored by other kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSpec {
    pub kind: MotionKind,
    /// Pixels per frame; peak speed for oscillatory, initial speed for
    /// accelerating, RMS step length for random walk.
    pub speed: f64,
    /// Heading in radians, measured from +x toward +y.
    pub direction: f64,
    /// Oscillation period in frames.
    pub period: f64,
    /// Angle swept per frame on a circular path.
    pub angular_step: f64,
    /// Speed gained per frame, px/frame^2.
    pub acceleration: f64,
    /// Seed for the random-walk steps.
    pub seed: u64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        MotionSpec {
            kind: MotionKind::Linear,
            speed: 1.0,
            direction: 0.0,
            period: 8.0,
            angular_step: std::f64::consts::FRAC_PI_4,
            acceleration: 1.0,
            seed: 0,
        }
    }
}

impl MotionSpec {
    pub fn new(kind: MotionKind, speed: f64, direction: f64) -> Self {
        MotionSpec {
            kind,
            speed,
            direction,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_SPEED).contains(&self.speed) {
            return Err(GhostError::Domain(format!(
                "speed must lie in [0, {MAX_SPEED}] px/frame, got {}",
                self.speed
            )));
        }
        if self.kind == MotionKind::Oscillatory && !(self.period > 0.0) {
            return Err(GhostError::Domain("oscillation period must be positive".into()));
        }
        if self.kind == MotionKind::Circular && !(self.angular_step > 0.0 && self.angular_step < std::f64::consts::PI) {
            return Err(GhostError::Domain("angular step must lie in (0, pi)".into()));
        }
        Ok(())
    }
}

/// Allowed region for trajectory positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    /// Every pixel center of an `height x width` frame.
    pub fn frame(height: usize, width: usize) -> Self {
        Bounds {
            x_min: 0.0,
            x_max: width as f64 - 1.0,
            y_min: 0.0,
            y_max: height as f64 - 1.0,
        }
    }

    /// Shrink by `margin` on every side, never past the center line.
    pub fn with_margin(self, margin: f64) -> Self {
        let mx = margin.min((self.x_max - self.x_min) / 2.0).max(0.0);
        let my = margin.min((self.y_max - self.y_min) / 2.0).max(0.0);
        Bounds {
            x_min: self.x_min + mx,
            x_max: self.x_max - mx,
            y_min: self.y_min + my,
            y_max: self.y_max - my,
        }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn clamp(&self, p: Position) -> Position {
        Position::new(p.x.clamp(self.x_min, self.x_max), p.y.clamp(self.y_min, self.y_max))
    }

    pub fn center(&self) -> Position {
        Position::new((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }
}

/// Ground-truth frames, all sharing one extent and valued in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSequence {
    frames: Vec<Image>,
    pub motion: Option<MotionSpec>,
    pub centers: Vec<Position>,
}

impl SceneSequence {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| GhostError::Dimension("a sequence needs at least one frame".into()))?;
        let shape = first.shape();
        for (t, f) in frames.iter().enumerate() {
            if f.shape() != shape {
                return Err(GhostError::Dimension(format!(
                    "frame {t} is {:?}, frame 0 is {shape:?}",
                    f.shape()
                )));
            }
            if f.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(GhostError::Domain(format!("frame {t} has pixels outside [0, 1]")));
            }
        }
        Ok(SceneSequence {
            frames,
            motion: None,
            centers: Vec::new(),
        })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.frames[0].shape()
    }

    /// Frames stacked as a `[T, H, W]` tensor.
    pub fn to_tensor(&self) -> crate::tensor::TensorF {
        let (h, w) = self.shape();
        let data = self.frames.iter().flat_map(|f| f.data().iter().copied()).collect();
        crate::tensor::TensorF::from_vec(&[self.len(), h, w], data).expect("positive extents")
    }

    pub fn from_tensor(t: &crate::tensor::TensorF) -> Result<Self> {
        let &[n, h, w] = t.dims() else {
            return Err(GhostError::Dimension(format!("scene tensor must be [T,H,W], got {:?}", t.dims())));
        };
        let frames = t
            .data()
            .chunks_exact(h * w)
            .take(n)
            .map(|c| Image::from_vec(h, w, c.iter().map(|v| v.clamp(0.0, 1.0)).collect()))
            .collect::<Result<Vec<_>>>()?;
        SceneSequence::new(frames)
    }
}

/// Draw a sprite centered on a `canvas` of `(height, width)` pixels.
///
/// `size_px` is the radius for discs and rings, the side for squares, and
/// the glyph height for glyphs. Glyphs are seven-segment digits picked from
/// `rng`; the other kinds do not consume randomness.
pub fn generate_sprite(
    kind: SpriteKind,
    size_px: f64,
    canvas: (usize, usize),
    rng: &mut RngStream,
) -> Result<Image> {
    let (h, w) = canvas;
    if !(size_px > 0.0) || !size_px.is_finite() {
        return Err(GhostError::Domain(format!("sprite size must be positive, got {size_px}")));
    }
    if h == 0 || w == 0 {
        return Err(GhostError::Dimension("empty sprite canvas".into()));
    }
    let extent = match kind {
        SpriteKind::Disc | SpriteKind::Ring => 2.0 * size_px + 1.0,
        SpriteKind::Rect | SpriteKind::Glyph => size_px.round(),
    };
    if extent > h.min(w) as f64 {
        return Err(GhostError::Domain(format!(
            "{kind:?} of size {size_px} does not fit a {h}x{w} frame"
        )));
    }
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut img = Image::zeros(h, w);
    match kind {
        SpriteKind::Disc => {
            for r in 0..h {
                for c in 0..w {
                    let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                    if d <= size_px {
                        img.set(r, c, 1.0);
                    }
                }
            }
        }
        SpriteKind::Ring => {
            let inner = (size_px * 0.55).min(size_px - 1.0).max(0.0);
            for r in 0..h {
                for c in 0..w {
                    let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                    if d <= size_px && d > inner {
                        img.set(r, c, 1.0);
                    }
                }
            }
        }
        SpriteKind::Rect => {
            let side = size_px.round() as usize;
            let r0 = (h - side) / 2;
            let c0 = (w - side) / 2;
            for r in r0..r0 + side {
                for c in c0..c0 + side {
                    img.set(r, c, 1.0);
                }
            }
        }
        SpriteKind::Glyph => draw_glyph(&mut img, size_px.round() as usize, rng.next_below(10) as usize),
    }
    Ok(img)
}

// Segments a..g in the usual seven-segment order.
const DIGIT_SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

fn draw_glyph(img: &mut Image, height: usize, digit: usize) {
    let (h, w) = img.shape();
    let gw = ((height as f64 * 0.6).round() as usize).max(3).min(w);
    let stroke = (height / 6).max(1);
    let r0 = (h - height) / 2;
    let c0 = (w - gw) / 2;
    let mid = r0 + (height - stroke) / 2;
    let bottom = r0 + height - stroke;
    let right = c0 + gw - stroke;
    let mut fill = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        for r in rows {
            for c in cols.clone() {
                img.set(r, c, 1.0);
            }
        }
    };
    let seg = DIGIT_SEGMENTS[digit];
    let upper = r0..mid + stroke;
    let lower = mid..r0 + height;
    if seg[0] {
        fill(r0..r0 + stroke, c0..c0 + gw);
    }
    if seg[1] {
        fill(upper.clone(), right..right + stroke);
    }
    if seg[2] {
        fill(lower.clone(), right..right + stroke);
    }
    if seg[3] {
        fill(bottom..bottom + stroke, c0..c0 + gw);
    }
    if seg[4] {
        fill(lower, c0..c0 + stroke);
    }
    if seg[5] {
        fill(upper, c0..c0 + stroke);
    }
    if seg[6] {
        fill(mid..mid + stroke, c0..c0 + gw);
    }
}

fn reflect_axis(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    if hi <= lo {
        *pos = lo;
        return;
    }
    while *pos > hi || *pos < lo {
        if *pos > hi {
            *pos = 2.0 * hi - *pos;
        } else {
            *pos = 2.0 * lo - *pos;
        }
        *vel = -*vel;
    }
}

/// `t_count` positions starting at `start`.
pub fn generate_trajectory(
    spec: &MotionSpec,
    t_count: usize,
    start: Position,
    bounds: Bounds,
) -> Result<Vec<Position>> {
    if t_count == 0 {
        return Err(GhostError::Domain("trajectory needs at least one frame".into()));
    }
    spec.validate()?;
    if !bounds.contains(&start) {
        return Err(GhostError::Domain(format!(
            "start ({}, {}) lies outside the bounds",
            start.x, start.y
        )));
    }
    let (dx, dy) = (spec.direction.cos(), spec.direction.sin());
    let mut out = Vec::with_capacity(t_count);
    out.push(start);
    match spec.kind {
        MotionKind::Linear => {
            let mut p = start;
            for _ in 1..t_count {
                p = bounds.clamp(Position::new(p.x + spec.speed * dx, p.y + spec.speed * dy));
                out.push(p);
            }
        }
        MotionKind::Bounce => {
            let (mut x, mut y) = (start.x, start.y);
            let (mut vx, mut vy) = (spec.speed * dx, spec.speed * dy);
            for _ in 1..t_count {
                x += vx;
                y += vy;
                reflect_axis(&mut x, &mut vx, bounds.x_min, bounds.x_max);
                reflect_axis(&mut y, &mut vy, bounds.y_min, bounds.y_max);
                out.push(Position::new(x, y));
            }
        }
        MotionKind::Oscillatory => {
            let omega = std::f64::consts::TAU / spec.period;
            let amplitude = spec.speed / omega;
            for t in 1..t_count {
                let s = amplitude * (omega * t as f64).sin();
                out.push(bounds.clamp(Position::new(start.x + s * dx, start.y + s * dy)));
            }
        }
        MotionKind::Circular => {
            // Chord length per frame equals the speed.
            let radius = spec.speed / (2.0 * (spec.angular_step / 2.0).sin());
            let phase = spec.direction - std::f64::consts::FRAC_PI_2;
            let cx = start.x - radius * phase.cos();
            let cy = start.y - radius * phase.sin();
            for t in 1..t_count {
                let a = phase + spec.angular_step * t as f64;
                out.push(bounds.clamp(Position::new(cx + radius * a.cos(), cy + radius * a.sin())));
            }
        }
        MotionKind::Accelerating => {
            let mut p = start;
            for t in 1..t_count {
                let step = spec.speed + spec.acceleration * (t - 1) as f64;
                p = bounds.clamp(Position::new(p.x + step * dx, p.y + step * dy));
                out.push(p);
            }
        }
        MotionKind::RandomWalk => {
            let mut rng = RngStream::substream(spec.seed, 0x5741_4c4b);
            let axis_sigma = spec.speed / std::f64::consts::SQRT_2;
            let mut p = start;
            for _ in 1..t_count {
                let sx = axis_sigma * rng.standard_normal();
                let sy = axis_sigma * rng.standard_normal();
                p = bounds.clamp(Position::new(p.x + sx, p.y + sy));
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Bilinear sample with zero outside the image.
fn sample_bilinear(img: &Image, y: f64, x: f64) -> f64 {
    let (h, w) = img.shape();
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            0.0
        } else {
            img.get(r as usize, c as usize)
        }
    };
    let mut v = 0.0;
    for (r, wr) in [(y0, 1.0 - fy), (y0 + 1.0, fy)] {
        if wr == 0.0 {
            continue;
        }
        for (c, wc) in [(x0, 1.0 - fx), (x0 + 1.0, fx)] {
            if wc == 0.0 {
                continue;
            }
            v += wr * wc * at(r, c);
        }
    }
    v
}

/// Composite `sprite` (anchored at its center) at each trajectory position.
pub fn render_sequence(
    sprite: &Image,
    trajectory: &[Position],
    height: usize,
    width: usize,
) -> Result<SceneSequence> {
    if trajectory.is_empty() {
        return Err(GhostError::Domain("trajectory is empty".into()));
    }
    if height == 0 || width == 0 {
        return Err(GhostError::Dimension("empty frame extents".into()));
    }
    let (sh, sw) = sprite.shape();
    let acy = (sh as f64 - 1.0) / 2.0;
    let acx = (sw as f64 - 1.0) / 2.0;
    let frames = trajectory
        .iter()
        .map(|p| {
            let mut f = Image::zeros(height, width);
            for r in 0..height {
                for c in 0..width {
                    let v = sample_bilinear(sprite, r as f64 - p.y + acy, c as f64 - p.x + acx);
                    f.set(r, c, v.clamp(0.0, 1.0));
                }
            }
            f
        })
        .collect();
    let mut seq = SceneSequence::new(frames)?;
    seq.centers = trajectory.to_vec();
    Ok(seq)
}

/// Read every file of `dir` in lexicographic order as one frame.
pub fn load_external_frames(dir: impl AsRef<Path>) -> Result<SceneSequence> {
    let dir = dir.as_ref();
    let mut paths = fs::read_dir(dir)
        .map_err(|e| GhostError::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| GhostError::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    if paths.is_empty() {
        return Err(GhostError::NotFound(format!("no frames in {}", dir.display())));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let img = Image::read_pgm(p)?;
        if let Some(first) = frames.first().map(Image::shape) {
            if img.shape() != first {
                return Err(GhostError::Dimension(format!(
                    "{} is {:?}, earlier frames are {first:?}",
                    p.display(),
                    img.shape()
                )));
            }
        }
        frames.push(img);
    }
    SceneSequence::new(frames)
}

/// Recipe for drawing random scenes; every choice comes from the stream
/// handed to [`random_scene`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneRecipe {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub sprite_kinds: Vec<SpriteKind>,
    /// Inclusive range for the sprite size in pixels.
    pub sprite_size: (f64, f64),
    pub motion_kinds: Vec<MotionKind>,
    /// Inclusive range for the speed in px/frame.
    pub speed: (f64, f64),
}

impl Default for SceneRecipe {
    fn default() -> Self {
        SceneRecipe {
            height: 16,
            width: 16,
            frames: 4,
            sprite_kinds: vec![SpriteKind::Disc, SpriteKind::Ring, SpriteKind::Rect, SpriteKind::Glyph],
            sprite_size: (3.0, 4.0),
            motion_kinds: MotionKind::ALL.to_vec(),
            speed: (1.0, 2.0),
        }
    }
}

fn sprite_half_extent(kind: SpriteKind, size: f64) -> f64 {
    match kind {
        SpriteKind::Disc | SpriteKind::Ring => size,
        SpriteKind::Rect => size.round() / 2.0,
        SpriteKind::Glyph => size.round() / 2.0,
    }
}

/// Draw one random sequence according to `recipe`.
pub fn random_scene(recipe: &SceneRecipe, rng: &mut RngStream) -> Result<SceneSequence> {
    if recipe.sprite_kinds.is_empty() || recipe.motion_kinds.is_empty() {
        return Err(GhostError::Config("scene recipe needs sprite and motion kinds".into()));
    }
    let uniform = |rng: &mut RngStream, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.next_f64();
    let kind = recipe.sprite_kinds[rng.next_below(recipe.sprite_kinds.len() as u64) as usize];
    let size = match kind {
        SpriteKind::Rect | SpriteKind::Glyph => {
            // Squares and glyphs need whole-pixel sizes; scale the radius
            // range to a comparable side length.
            (2.0 * uniform(rng, recipe.sprite_size)).round().max(3.0)
        }
        _ => uniform(rng, recipe.sprite_size),
    };
    let sprite = generate_sprite(kind, size, (recipe.height, recipe.width), rng)?;
    let motion_kind = recipe.motion_kinds[rng.next_below(recipe.motion_kinds.len() as u64) as usize];
    let mut motion = MotionSpec::new(
        motion_kind,
        uniform(rng, recipe.speed),
        rng.next_f64() * std::f64::consts::TAU,
    );
    motion.seed = rng.next_u64();
    let bounds = Bounds::frame(recipe.height, recipe.width).with_margin(sprite_half_extent(kind, size));
    let start = Position::new(
        uniform(rng, (bounds.x_min, bounds.x_max)),
        uniform(rng, (bounds.y_min, bounds.y_max)),
    );
    let traj = generate_trajectory(&motion, recipe.frames, start, bounds)?;
    let mut seq = render_sequence(&sprite, &traj, recipe.height, recipe.width)?;
    seq.motion = Some(motion);
    Ok(seq)
}
