//! Unfolding shapes into strokes, rasterization and blur.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{Axis, Point, Transform};
use crate::grammar::{validate, GroupSpec, Occupancy, Shape, ValidationError};
use crate::priors::BlurParams;
use crate::wreath_process::{LevelNoise, NoiseTree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("level {level}: continuous occupancy over a fiber that is not a single point")]
    UnsupportedContinuousFiber { level: usize },
    #[error("noise tree does not match the shape: {0}")]
    NoiseMismatch(String),
    #[error("invalid render configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stroke {
    Dot(Point),
    Polyline(Vec<Point>),
    Circle { center: Point, radius: f64 },
}

impl Stroke {
    fn transformed(&self, t: &Transform) -> Stroke {
        match self {
            Stroke::Dot(p) => Stroke::Dot(t.apply(*p)),
            Stroke::Polyline(pts) => Stroke::Polyline(pts.iter().map(|p| t.apply(*p)).collect()),
            Stroke::Circle { center, radius } => Stroke::Circle {
                center: t.apply(*center),
                radius: radius * t.length_scale(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrokeSet {
    pub strokes: Vec<Stroke>,
}

impl StrokeSet {
    pub fn len(&self) -> usize {
        self.strokes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }
}

/// Grayscale image, row-major, values in `[0, 1]` with 1 meaning ink.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Values are clipped to `[0, 1]`. Panics on a length mismatch.
    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "raster data length");
        Raster {
            width,
            height,
            data: data.into_iter().map(clip01).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = clip01(v);
    }

    pub fn ink_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Bounding box `(x0, y0, x1, y1)` of pixels above `threshold`.
    pub fn ink_bbox(&self, threshold: f64) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) > threshold {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    });
                }
            }
        }
        bbox
    }
}

fn clip01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// λ: pixels per model unit.
    pub unit_scale: f64,
    /// Stroke thickness in pixels.
    pub stroke_width: f64,
    pub supersample: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 128,
            height: 128,
            unit_scale: 20.0,
            stroke_width: 1.5,
            supersample: 2,
        }
    }
}

impl RenderConfig {
    pub fn with_scale(&self, unit_scale: f64) -> Self {
        RenderConfig {
            unit_scale,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidConfig(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if !(self.unit_scale > 0.0 && self.unit_scale.is_finite()) {
            return bad("unit scale must be positive");
        }
        if !(self.stroke_width > 0.0 && self.stroke_width.is_finite()) {
            return bad("stroke width must be positive");
        }
        if self.supersample == 0 {
            return bad("supersample must be at least 1");
        }
        Ok(())
    }
}

struct Unfolder<'a> {
    shape: &'a Shape,
    noise: Option<&'a NoiseTree>,
    out: Vec<Stroke>,
}

impl Unfolder<'_> {
    fn noise_level(&self, level: usize) -> Option<&LevelNoise> {
        self.noise
            .and_then(|n| n.levels.get(level))
            .filter(|l| !l.values.is_empty())
    }

    fn noisy_element(&self, level: usize, index: f64, path: usize) -> Transform {
        let group = self.shape.levels[level].group;
        let eps = self.noise_level(level).map_or(0.0, |l| l.entry(path)[0]);
        if eps == 0.0 {
            return group.element(index);
        }
        match group {
            GroupSpec::TransX => Transform::translation(Axis::X, index + eps),
            GroupSpec::TransY => Transform::translation(Axis::Y, index + eps),
            GroupSpec::Rot(n) => {
                Transform::rotation_continuous(2.0 * PI * index / f64::from(n) + eps)
            }
            GroupSpec::RotFull => Transform::rotation_continuous(index + eps),
            GroupSpec::Mirror | GroupSpec::Scale(_) => group.element(index),
        }
    }

    /// Emits the strokes of levels `0..top` placed by `t`; `prefix` is the
    /// path index accumulated above.
    fn emit(&mut self, top: usize, t: Transform, prefix: usize) {
        if top == 0 {
            self.out.push(Stroke::Dot(t.apply(Point::ORIGIN)));
            return;
        }
        let level = top - 1;
        let lvl = &self.shape.levels[level];
        if lvl.is_continuous() {
            let fiber = self.fiber_point(level, prefix);
            let stroke = self.continuous_stroke(level, fiber, prefix);
            self.out.push(stroke.transformed(&t));
            return;
        }
        let indices = lvl.indices();
        let count = indices.len();
        for (j, k) in indices.into_iter().enumerate() {
            let path = prefix * count + j;
            let g = self.noisy_element(level, k, path);
            self.emit(level, t.compose(&g), path);
        }
    }

    /// Position of the single point built by levels `0..level`.
    fn fiber_point(&mut self, level: usize, prefix: usize) -> Point {
        let start = self.out.len();
        self.emit(level, Transform::IDENTITY, prefix);
        let produced: Vec<Stroke> = self.out.drain(start..).collect();
        match produced.as_slice() {
            [Stroke::Dot(p)] => *p,
            _ => unreachable!("validated shapes have point fibers under continuous levels"),
        }
    }

    fn continuous_stroke(&self, level: usize, p: Point, path: usize) -> Stroke {
        let lvl = &self.shape.levels[level];
        let offsets = self.noise_level(level).map(|l| l.entry(path));
        match (&lvl.group, &lvl.occ) {
            (GroupSpec::RotFull, _) => {
                let r = p.norm();
                match offsets {
                    Some(eps) if r > 0.0 => noisy_circle(r, eps),
                    _ if r > 0.0 => Stroke::Circle {
                        center: Point::ORIGIN,
                        radius: r,
                    },
                    _ => Stroke::Dot(Point::ORIGIN),
                }
            }
            (g, Occupancy::Interval { lo, hi }) => {
                let axis = g.translation_axis().unwrap_or(Axis::X);
                let along = |s: f64| match axis {
                    Axis::X => Point::new(p.x + s, p.y),
                    Axis::Y => Point::new(p.x, p.y + s),
                };
                match offsets {
                    None => Stroke::Polyline(vec![along(*lo), along(*hi)]),
                    Some(eps) => {
                        let k = eps.len();
                        let scale = 1.0 / (k as f64).sqrt();
                        let pts = eps
                            .iter()
                            .enumerate()
                            .map(|(i, e)| {
                                let s = lo + (hi - lo) * i as f64 / (k - 1) as f64;
                                let q = along(s);
                                match axis {
                                    Axis::X => Point::new(q.x, q.y + e * scale),
                                    Axis::Y => Point::new(q.x + e * scale, q.y),
                                }
                            })
                            .collect();
                        Stroke::Polyline(pts)
                    }
                }
            }
            _ => Stroke::Dot(p),
        }
    }
}

/// Closed polyline through the radially jittered control points.
fn noisy_circle(r: f64, eps: &[f64]) -> Stroke {
    let k = eps.len();
    let mut pts: Vec<Point> = eps
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let a = 2.0 * PI * i as f64 / k as f64;
            let rr = r * (1.0 + e);
            Point::new(rr * a.cos(), rr * a.sin())
        })
        .collect();
    pts.push(pts[0]);
    Stroke::Polyline(pts)
}

/// Unfolds a shape from the origin, copying the accumulated figure once per
/// occupied element at every level. With noise, each copy's element is
/// perturbed by its own entry.
pub fn unfold(s: &Shape, noise: Option<&NoiseTree>) -> Result<StrokeSet, RenderError> {
    check_fibers(s)?;
    validate(s, usize::MAX)?;
    if let Some(n) = noise {
        check_noise_shape(s, n)?;
    }
    let mut u = Unfolder {
        shape: s,
        noise,
        out: Vec::new(),
    };
    u.emit(s.levels.len(), Transform::IDENTITY, 0);
    Ok(StrokeSet { strokes: u.out })
}

fn check_fibers(s: &Shape) -> Result<(), RenderError> {
    let mut point = true;
    for (i, l) in s.levels.iter().enumerate() {
        if l.is_continuous() {
            if !point {
                return Err(RenderError::UnsupportedContinuousFiber { level: i + 1 });
            }
            point = false;
        } else if l.copy_count() != 1 {
            point = false;
        }
    }
    Ok(())
}

fn check_noise_shape(s: &Shape, n: &NoiseTree) -> Result<(), RenderError> {
    if n.levels.len() != s.levels.len() {
        return Err(RenderError::NoiseMismatch(format!(
            "{} noise levels for {} shape levels",
            n.levels.len(),
            s.levels.len()
        )));
    }
    let mut paths = 1usize;
    for i in (0..s.levels.len()).rev() {
        let lvl = &s.levels[i];
        paths = paths.saturating_mul(lvl.copy_count());
        let ln = &n.levels[i];
        if ln.values.is_empty() {
            continue;
        }
        let width_ok = if lvl.is_continuous() {
            ln.width >= 2
        } else {
            ln.width == 1
        };
        if !width_ok || ln.values.len() != paths * ln.width {
            return Err(RenderError::NoiseMismatch(format!(
                "level {}: {} values, expected {} entries",
                i + 1,
                ln.values.len(),
                paths
            )));
        }
    }
    Ok(())
}

/// Snaps pixel coordinates to a fine dyadic grid so that geometrically equal
/// strokes computed along different routes cover the same samples.
fn quantize(v: f64) -> f64 {
    const Q: f64 = 65_536.0;
    (v * Q).round() / Q
}

#[derive(Clone, Copy)]
enum Prim {
    Disc { c: (f64, f64) },
    Segment { a: (f64, f64), b: (f64, f64) },
    Ring { c: (f64, f64), r: f64 },
}

impl Prim {
    fn bbox(&self, pad: f64) -> (f64, f64, f64, f64) {
        match *self {
            Prim::Disc { c } => (c.0 - pad, c.1 - pad, c.0 + pad, c.1 + pad),
            Prim::Segment { a, b } => (
                a.0.min(b.0) - pad,
                a.1.min(b.1) - pad,
                a.0.max(b.0) + pad,
                a.1.max(b.1) + pad,
            ),
            Prim::Ring { c, r } => (c.0 - r - pad, c.1 - r - pad, c.0 + r + pad, c.1 + r + pad),
        }
    }

    fn within(&self, q: (f64, f64), hw: f64) -> bool {
        let hw2 = hw * hw;
        match *self {
            Prim::Disc { c } => {
                let (dx, dy) = (q.0 - c.0, q.1 - c.1);
                dx * dx + dy * dy <= hw2
            }
            Prim::Segment { a, b } => segment_dist2(q, a, b) <= hw2,
            Prim::Ring { c, r } => {
                let d = (q.0 - c.0).hypot(q.1 - c.1);
                (d - r).abs() <= hw
            }
        }
    }
}

/// Squared distance from `q` to segment `ab`; symmetric in `a` and `b`.
fn segment_dist2(q: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (a, b) = if (a.0, a.1) <= (b.0, b.1) {
        (a, b)
    } else {
        (b, a)
    };
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let (px, py) = (q.0 - a.0, q.1 - a.1);
    if len2 == 0.0 {
        return px * px + py * py;
    }
    let t = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
    let (ex, ey) = (px - t * dx, py - t * dy);
    ex * ex + ey * ey
}

fn to_pixels(p: Point, cfg: &RenderConfig) -> (f64, f64) {
    (
        quantize(cfg.width as f64 / 2.0 + cfg.unit_scale * p.x),
        quantize(cfg.height as f64 / 2.0 - cfg.unit_scale * p.y),
    )
}

fn primitives(strokes: &StrokeSet, cfg: &RenderConfig) -> Vec<Prim> {
    let mut prims = Vec::new();
    for s in &strokes.strokes {
        match s {
            Stroke::Dot(p) => prims.push(Prim::Disc {
                c: to_pixels(*p, cfg),
            }),
            Stroke::Polyline(pts) => {
                if pts.len() == 1 {
                    prims.push(Prim::Disc {
                        c: to_pixels(pts[0], cfg),
                    });
                }
                for w in pts.windows(2) {
                    prims.push(Prim::Segment {
                        a: to_pixels(w[0], cfg),
                        b: to_pixels(w[1], cfg),
                    });
                }
            }
            Stroke::Circle { center, radius } => prims.push(Prim::Ring {
                c: to_pixels(*center, cfg),
                r: quantize(radius * cfg.unit_scale),
            }),
        }
    }
    prims
}

/// Draws strokes as a union of thick curves, sampled on a regular
/// `supersample × supersample` grid per pixel and box-filtered.
pub fn rasterize(strokes: &StrokeSet, cfg: &RenderConfig) -> Raster {
    let (w, h) = (cfg.width, cfg.height);
    let ss = cfg.supersample.max(1);
    let (sw, sh) = (w * ss, h * ss);
    let mut cover = vec![false; sw * sh];
    let hw = cfg.stroke_width / 2.0;
    let inv = 1.0 / ss as f64;
    for prim in primitives(strokes, cfg) {
        let (x0, y0, x1, y1) = prim.bbox(hw);
        if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
            continue;
        }
        // sample (i, j) sits at ((i + 0.5)/ss, (j + 0.5)/ss) in pixel units
        let lo_i = ((x0 * ss as f64 - 0.5).floor().max(0.0)) as usize;
        let lo_j = ((y0 * ss as f64 - 0.5).floor().max(0.0)) as usize;
        let hi_i = (x1 * ss as f64 - 0.5).ceil();
        let hi_j = (y1 * ss as f64 - 0.5).ceil();
        if hi_i < 0.0 || hi_j < 0.0 {
            continue;
        }
        let hi_i = (hi_i as usize).min(sw.saturating_sub(1));
        let hi_j = (hi_j as usize).min(sh.saturating_sub(1));
        for j in lo_j..=hi_j {
            let qy = (j as f64 + 0.5) * inv;
            let row = j * sw;
            for i in lo_i..=hi_i {
                if cover[row + i] {
                    continue;
                }
                let qx = (i as f64 + 0.5) * inv;
                if prim.within((qx, qy), hw) {
                    cover[row + i] = true;
                }
            }
        }
    }
    let norm = 1.0 / (ss * ss) as f64;
    let mut data = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut n = 0usize;
            for j in 0..ss {
                let row = (y * ss + j) * sw + x * ss;
                n += cover[row..row + ss].iter().filter(|c| **c).count();
            }
            data[y * w + x] = n as f64 * norm;
        }
    }
    Raster {
        width: w,
        height: h,
        data,
    }
}

/// Normalized Gaussian taps `-w..=w`.
pub fn gaussian_kernel(w_b: usize, sigma_b: f64) -> Vec<f64> {
    let taps: Vec<f64> = (-(w_b as i64)..=w_b as i64)
        .map(|i| {
            let x = i as f64 / sigma_b;
            (-0.5 * x * x).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable truncated Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &Raster, w_b: usize, sigma_b: f64) -> Raster {
    if w_b == 0 || sigma_b.is_nan() || sigma_b <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(w_b, sigma_b);
    let (w, h) = (img.width, img.height);
    let r = w_b as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let xx = (x as i64 + t as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (t, kv) in k.iter().enumerate() {
            let yy = (y as i64 + t as i64 - r).clamp(0, h as i64 - 1) as usize;
            let src = &tmp[yy * w..(yy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    Raster {
        width: w,
        height: h,
        data: out.into_iter().map(clip01).collect(),
    }
}

/// Unfold, rasterize, then blur.
pub fn render(
    s: &Shape,
    noise: Option<&NoiseTree>,
    blur: BlurParams,
    cfg: &RenderConfig,
) -> Result<Raster, RenderError> {
    cfg.validate()?;
    let strokes = unfold(s, noise)?;
    let raw = rasterize(&strokes, cfg);
    Ok(gaussian_blur(&raw, blur.w_b, blur.sigma_b))
}
