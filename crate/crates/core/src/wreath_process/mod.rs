//! The stochastic wreath process: per-copy perturbations of every
//! transformation in a shape's generative history.
//!
//! Level `i` of a [`NoiseTree`] holds one entry for each path through the
//! unfolding tree from the top level down to level `i`, i.e.
//! `∏_{m>=i} copies(m)` entries, so that every copy of every transformation
//! is perturbed independently. Entries are ordered with the top-level copy
//! index most significant. Discrete levels store one real per entry;
//! continuous levels store a short vector of control offsets per entry.

pub mod bessel;
pub mod von_mises;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::grammar::{GroupSpec, Level, Shape};

pub use bessel::{bessel_i0, i0e, log_i0};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("noise does not match shape: {0}")]
    ShapeMismatch(String),
    #[error("invalid noise configuration: {0}")]
    InvalidConfig(String),
}

/// How the two numbers of a `Γ(a, b)` hyperprior are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaParam {
    /// Mean `a / b`.
    ShapeRate,
    /// Mean `a · b`.
    ShapeScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Hyperprior of translation noise scales: `Γ(trans_shape, trans_rate)`.
    pub trans_shape: f64,
    pub trans_rate: f64,
    pub gamma_param: GammaParam,
    /// Order used in the `Γ(π/n, n²)` hyperprior of continuous rotations.
    pub rot_full_order: u32,
    /// Control offsets per noisy segment.
    pub segment_controls: usize,
    /// Radial control offsets per noisy circle.
    pub circle_controls: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            trans_shape: 1.0,
            trans_rate: 20.0,
            gamma_param: GammaParam::ShapeRate,
            rot_full_order: 8,
            segment_controls: 8,
            circle_controls: 16,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        let bad = |m: &str| Err(NoiseError::InvalidConfig(m.to_string()));
        if !(self.trans_shape > 0.0 && self.trans_rate > 0.0) {
            return bad("translation hyperprior parameters must be positive");
        }
        if self.rot_full_order < 2 {
            return bad("rot_full_order must be at least 2");
        }
        if self.segment_controls < 2 || self.circle_controls < 3 {
            return bad("need at least 2 segment and 3 circle control points");
        }
        Ok(())
    }

    /// `(shape, rate)` of the σ hyperprior for a noise kind.
    pub fn hyper_gamma(&self, kind: NoiseKind) -> Option<(f64, f64)> {
        let (a, b) = match kind {
            NoiseKind::Silent => return None,
            NoiseKind::Translation => (self.trans_shape, self.trans_rate),
            NoiseKind::Rotation(n) => {
                let n = f64::from(n);
                (PI / n, n * n)
            }
        };
        Some(match self.gamma_param {
            GammaParam::ShapeRate => (a, b),
            GammaParam::ShapeScale => (a, 1.0 / b),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    /// Mirror and scale levels carry no perturbation.
    Silent,
    /// Gaussian offsets in model units.
    Translation,
    /// Von Mises angle offsets; the order `n` selects the hyperprior.
    Rotation(u32),
}

/// Expected size and kind of one level's noise block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelLayout {
    pub kind: NoiseKind,
    pub entries: usize,
    pub width: usize,
}

pub fn level_kind(level: &Level, cfg: &NoiseConfig) -> NoiseKind {
    match level.group {
        GroupSpec::TransX | GroupSpec::TransY => NoiseKind::Translation,
        GroupSpec::Rot(n) => NoiseKind::Rotation(n),
        GroupSpec::RotFull => NoiseKind::Rotation(cfg.rot_full_order),
        GroupSpec::Mirror | GroupSpec::Scale(_) => NoiseKind::Silent,
    }
}

/// Per-level noise block sizes for a shape.
pub fn layout(s: &Shape, cfg: &NoiseConfig) -> Vec<LevelLayout> {
    let n = s.levels.len();
    let mut out = vec![
        LevelLayout {
            kind: NoiseKind::Silent,
            entries: 0,
            width: 1
        };
        n
    ];
    let mut paths = 1usize;
    for i in (0..n).rev() {
        let lvl = &s.levels[i];
        paths = paths.saturating_mul(lvl.copy_count());
        let kind = level_kind(lvl, cfg);
        let width = match (lvl.is_continuous(), lvl.group) {
            (false, _) => 1,
            (true, GroupSpec::RotFull) => cfg.circle_controls,
            (true, _) => cfg.segment_controls,
        };
        let entries = if kind == NoiseKind::Silent { 0 } else { paths };
        out[i] = LevelLayout {
            kind,
            entries,
            width,
        };
    }
    out
}

/// One σ per level; `None` on silent levels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseHyper {
    pub sigma: Vec<Option<f64>>,
}

impl NoiseHyper {
    pub fn noise_bearing(&self) -> usize {
        self.sigma.iter().filter(|s| s.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelNoise {
    pub kind: NoiseKind,
    pub width: usize,
    pub values: Vec<f64>,
}

impl LevelNoise {
    pub fn entries(&self) -> usize {
        self.values.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn entry(&self, j: usize) -> &[f64] {
        &self.values[j * self.width..(j + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseTree {
    pub levels: Vec<LevelNoise>,
}

impl NoiseTree {
    /// All-zero perturbations with the layout of `s`.
    pub fn zeros(s: &Shape, cfg: &NoiseConfig) -> Self {
        NoiseTree {
            levels: layout(s, cfg)
                .into_iter()
                .map(|l| LevelNoise {
                    kind: l.kind,
                    width: l.width,
                    values: vec![0.0; l.entries * l.width],
                })
                .collect(),
        }
    }

    /// Total number of scalar perturbations.
    pub fn dimension(&self) -> usize {
        self.levels.iter().map(|l| l.values.len()).sum()
    }

    pub fn check(&self, s: &Shape, cfg: &NoiseConfig) -> Result<(), NoiseError> {
        let expected = layout(s, cfg);
        if expected.len() != self.levels.len() {
            return Err(NoiseError::ShapeMismatch(format!(
                "{} noise levels for a {}-level shape",
                self.levels.len(),
                expected.len()
            )));
        }
        for (i, (e, l)) in expected.iter().zip(&self.levels).enumerate() {
            if e.kind != l.kind || e.width != l.width || e.entries * e.width != l.values.len() {
                return Err(NoiseError::ShapeMismatch(format!(
                    "level {}: expected {} entries of width {}, found {} values",
                    i + 1,
                    e.entries,
                    e.width,
                    l.values.len()
                )));
            }
            if let Some(v) = l.values.iter().find(|v| !v.is_finite()) {
                return Err(NoiseError::ShapeMismatch(format!(
                    "level {}: non-finite perturbation {v}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

fn check_hyper(s: &Shape, h: &NoiseHyper, cfg: &NoiseConfig) -> Result<(), NoiseError> {
    if h.sigma.len() != s.levels.len() {
        return Err(NoiseError::ShapeMismatch(format!(
            "{} noise scales for a {}-level shape",
            h.sigma.len(),
            s.levels.len()
        )));
    }
    for (i, (lvl, sigma)) in s.levels.iter().zip(&h.sigma).enumerate() {
        let silent = level_kind(lvl, cfg) == NoiseKind::Silent;
        match sigma {
            Some(v) if silent || !(*v > 0.0 && v.is_finite()) => {
                return Err(NoiseError::ShapeMismatch(format!(
                    "level {}: unexpected noise scale {v}",
                    i + 1
                )))
            }
            None if !silent => {
                return Err(NoiseError::ShapeMismatch(format!(
                    "level {}: missing noise scale",
                    i + 1
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Draws a noise scale from the hyperprior of `kind`. Silent kinds give
/// `None`.
pub fn sample_sigma<R: Rng + ?Sized>(
    kind: NoiseKind,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Option<f64> {
    let (shape, rate) = cfg.hyper_gamma(kind)?;
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    // A zero draw is possible in floating point for tiny shapes.
    Some(g.sample(rng).max(f64::MIN_POSITIVE))
}

pub fn log_prior_sigma(kind: NoiseKind, sigma: f64, cfg: &NoiseConfig) -> f64 {
    match cfg.hyper_gamma(kind) {
        None => 0.0,
        Some((a, b)) => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return f64::NEG_INFINITY;
            }
            a * b.ln() - ln_gamma(a) + (a - 1.0) * sigma.ln() - b * sigma
        }
    }
}

pub fn sample_hyper<R: Rng + ?Sized>(s: &Shape, cfg: &NoiseConfig, rng: &mut R) -> NoiseHyper {
    NoiseHyper {
        sigma: s
            .levels
            .iter()
            .map(|l| sample_sigma(level_kind(l, cfg), cfg, rng))
            .collect(),
    }
}

pub fn log_prior_hyper(s: &Shape, h: &NoiseHyper, cfg: &NoiseConfig) -> f64 {
    if check_hyper(s, h, cfg).is_err() {
        return f64::NEG_INFINITY;
    }
    s.levels
        .iter()
        .zip(&h.sigma)
        .map(|(l, sigma)| match sigma {
            Some(v) => log_prior_sigma(level_kind(l, cfg), *v, cfg),
            None => 0.0,
        })
        .sum()
}

/// One perturbation from the law of `kind` with scale `sigma`.
pub fn sample_entry<R: Rng + ?Sized>(kind: NoiseKind, sigma: f64, rng: &mut R) -> f64 {
    match kind {
        NoiseKind::Silent => 0.0,
        NoiseKind::Translation => Normal::new(0.0, sigma)
            .expect("finite positive sigma")
            .sample(rng),
        NoiseKind::Rotation(_) => von_mises::sample(1.0 / (sigma * sigma), rng),
    }
}

pub fn log_density_entry(kind: NoiseKind, sigma: f64, eps: f64) -> f64 {
    match kind {
        NoiseKind::Silent => 0.0,
        NoiseKind::Translation => {
            let z = eps / sigma;
            -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
        }
        NoiseKind::Rotation(_) => von_mises::log_density(eps, 1.0 / (sigma * sigma)),
    }
}

/// Draws a fresh block of perturbations for one level.
pub fn sample_level<R: Rng + ?Sized>(
    layout: LevelLayout,
    sigma: Option<f64>,
    rng: &mut R,
) -> LevelNoise {
    let values = match sigma {
        Some(sigma) if layout.kind != NoiseKind::Silent => (0..layout.entries * layout.width)
            .map(|_| sample_entry(layout.kind, sigma, rng))
            .collect(),
        _ => Vec::new(),
    };
    LevelNoise {
        kind: layout.kind,
        width: layout.width,
        values,
    }
}

pub fn sample_noise<R: Rng + ?Sized>(
    s: &Shape,
    hyper: &NoiseHyper,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<NoiseTree, NoiseError> {
    check_hyper(s, hyper, cfg)?;
    Ok(NoiseTree {
        levels: layout(s, cfg)
            .into_iter()
            .zip(&hyper.sigma)
            .map(|(l, sigma)| sample_level(l, *sigma, rng))
            .collect(),
    })
}

/// Log density of one level's block given its scale.
pub fn log_density_level(level: &LevelNoise, sigma: Option<f64>) -> f64 {
    let Some(sigma) = sigma else {
        return 0.0;
    };
    match level.kind {
        NoiseKind::Silent => 0.0,
        NoiseKind::Translation => {
            let norm = -sigma.ln() - 0.5 * (2.0 * PI).ln();
            let ss: f64 = level.values.iter().map(|e| e * e).sum();
            -0.5 * ss / (sigma * sigma) + norm * level.values.len() as f64
        }
        NoiseKind::Rotation(_) => {
            let kappa = 1.0 / (sigma * sigma);
            let norm = -(2.0 * PI).ln() - i0e(kappa).ln();
            let s2: f64 = level
                .values
                .iter()
                .map(|e| {
                    let s = (0.5 * e).sin();
                    s * s
                })
                .sum();
            -2.0 * kappa * s2 + norm * level.values.len() as f64
        }
    }
}

pub fn log_density_noise(
    s: &Shape,
    hyper: &NoiseHyper,
    noise: &NoiseTree,
    cfg: &NoiseConfig,
) -> Result<f64, NoiseError> {
    check_hyper(s, hyper, cfg)?;
    noise.check(s, cfg)?;
    Ok(noise
        .levels
        .iter()
        .zip(&hyper.sigma)
        .map(|(l, sigma)| log_density_level(l, *sigma))
        .sum())
}
