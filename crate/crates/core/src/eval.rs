//! Recoverability metrics, structural equivalence and synthetic datasets.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grammar::{canonicalize, validate, GroupSpec, Level, Occupancy, Shape};
use crate::io::{write_png, write_shape_file, IoError, RunManifest, ShapeFile};
use crate::likelihood::threshold_only;
use crate::priors::{
    sample_blur, sample_lambda, sample_shape_prior, BlurParams, PriorConfig, PriorError,
};
use crate::renderer::{render, Raster, RenderConfig, RenderError};
use crate::wreath_process::{sample_hyper, sample_noise, NoiseConfig, NoiseHyper, NoiseTree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("cannot summarize an empty batch")]
    EmptyBatch,
    #[error("dataset size must be positive")]
    EmptyDataset,
    #[error("no non-blank render after {0} draws")]
    Exhausted(usize),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Canvas used by the render clause of [`equivalent`].
pub fn equivalence_render_config() -> RenderConfig {
    RenderConfig {
        width: 512,
        height: 512,
        unit_scale: 50.0,
        stroke_width: 1.0,
        supersample: 2,
    }
}

fn structural_levels(s: &Shape) -> usize {
    s.levels
        .iter()
        .filter(|l| !matches!(l.group, GroupSpec::Scale(_)))
        .count()
}

fn binary_render(s: &Shape, cfg: &RenderConfig) -> Option<Vec<bool>> {
    if validate(s, usize::MAX).is_err() {
        return None;
    }
    let img = render(s, None, BlurParams::NONE, cfg).ok()?;
    Some(threshold_only(&img, 0.5).bits().to_vec())
}

/// Same canonical form, or the same non-blank high-resolution render with
/// the same number of non-scale levels.
pub fn equivalent(a: &Shape, b: &Shape) -> bool {
    let (ca, cb) = (canonicalize(a), canonicalize(b));
    if ca == cb {
        return true;
    }
    if structural_levels(&ca) != structural_levels(&cb) {
        return false;
    }
    let cfg = equivalence_render_config();
    match (binary_render(a, &cfg), binary_render(b, &cfg)) {
        (Some(x), Some(y)) => x.iter().any(|p| *p) && x == y,
        _ => false,
    }
}

/// Replaces every occupancy by a canonical choice so that only the group
/// structure is compared: finite groups become full, intervals the unit
/// interval, discrete translation and scale sets the single index 1.
pub fn strip_occupancy(s: &Shape) -> Shape {
    Shape::new(
        s.levels
            .iter()
            .map(|l| {
                let occ = match (&l.group, &l.occ) {
                    (GroupSpec::Rot(_) | GroupSpec::Mirror | GroupSpec::RotFull, _) => {
                        Occupancy::Full
                    }
                    (_, Occupancy::Interval { .. }) => Occupancy::Interval { lo: -0.5, hi: 0.5 },
                    (_, Occupancy::Full) => Occupancy::Full,
                    (_, Occupancy::Discrete(_)) => Occupancy::single(1.0),
                };
                Level::new(l.group, occ)
            })
            .collect(),
    )
}

/// Intersection over union of two binarized images; two blank images
/// count as identical.
pub fn raster_iou(a: &Raster, b: &Raster) -> f64 {
    assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (x, y) = (*x >= 0.5, *y >= 0.5);
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// IoU of noiseless renders of two shapes, each at its own scale on the
/// canvas of `cfg`. Shapes that cannot be rendered score 0.
pub fn render_iou(a: &Shape, lambda_a: f64, b: &Shape, lambda_b: f64, cfg: &RenderConfig) -> f64 {
    let ra = render(a, None, BlurParams::NONE, &cfg.with_scale(lambda_a));
    let rb = render(b, None, BlurParams::NONE, &cfg.with_scale(lambda_b));
    match (ra, rb) {
        (Ok(x), Ok(y)) => raster_iou(&x, &y),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub full_recoverability: bool,
    pub up_to_occupancy: bool,
    pub render_iou: f64,
}

/// A shape together with the scale it was rendered or inferred at.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledShape {
    pub shape: Shape,
    pub lambda: f64,
}

pub fn recoverability_scaled(
    inferred: &ScaledShape,
    truth: &ScaledShape,
    cfg: &RenderConfig,
) -> EvalResult {
    let full = equivalent(&inferred.shape, &truth.shape);
    let up = full
        || equivalent(
            &strip_occupancy(&inferred.shape),
            &strip_occupancy(&truth.shape),
        );
    EvalResult {
        full_recoverability: full,
        up_to_occupancy: up,
        render_iou: render_iou(
            &inferred.shape,
            inferred.lambda,
            &truth.shape,
            truth.lambda,
            cfg,
        ),
    }
}

/// Recoverability with both shapes drawn at the default scale and canvas.
pub fn recoverability(inferred: &Shape, truth: &Shape) -> EvalResult {
    let cfg = RenderConfig::default();
    let l = cfg.unit_scale;
    recoverability_scaled(
        &ScaledShape {
            shape: inferred.clone(),
            lambda: l,
        },
        &ScaledShape {
            shape: truth.clone(),
            lambda: l,
        },
        &cfg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSummary {
    pub items: usize,
    pub full: f64,
    pub up_to_occupancy: f64,
    pub mean_iou: f64,
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "items={}", self.items)?;
        writeln!(f, "full_recoverability={:.6}", self.full)?;
        writeln!(f, "up_to_occupancy={:.6}", self.up_to_occupancy)?;
        writeln!(f, "mean_render_iou={:.6}", self.mean_iou)
    }
}

pub fn summarize(results: &[EvalResult]) -> Result<BatchSummary, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let n = results.len() as f64;
    let count = |f: fn(&EvalResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(BatchSummary {
        items: results.len(),
        full: count(|r| r.full_recoverability),
        up_to_occupancy: count(|r| r.up_to_occupancy),
        mean_iou: results.iter().map(|r| r.render_iou).sum::<f64>() / n,
    })
}

/// Scores `(inferred, truth)` pairs.
pub fn batch_evaluate(
    pairs: &[(ScaledShape, ScaledShape)],
    cfg: &RenderConfig,
) -> Result<(Vec<EvalResult>, BatchSummary), EvalError> {
    let results: Vec<EvalResult> = pairs
        .iter()
        .map(|(inf, truth)| recoverability_scaled(inf, truth, cfg))
        .collect();
    let summary = summarize(&results)?;
    Ok((results, summary))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub prior: PriorConfig,
    pub noise: NoiseConfig,
    pub render: RenderConfig,
    /// Draw noise and blur; otherwise images are exact renders.
    pub noisy: bool,
    /// Redraw items whose binarized render touches the canvas border.
    pub require_margin: bool,
    pub max_attempts: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            prior: PriorConfig::default(),
            noise: NoiseConfig::default(),
            render: RenderConfig::default(),
            noisy: true,
            require_margin: false,
            max_attempts: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub seed: u64,
    pub shape: Shape,
    pub hyper: NoiseHyper,
    pub noise: Option<NoiseTree>,
    pub blur: BlurParams,
    pub lambda: f64,
    pub image: Raster,
    /// Number of prior draws before this one was kept.
    pub attempts: usize,
}

fn touches_border(img: &Raster) -> bool {
    let (w, h) = (img.width(), img.height());
    (0..w).any(|x| img.get(x, 0) >= 0.5 || img.get(x, h - 1) >= 0.5)
        || (0..h).any(|y| img.get(0, y) >= 0.5 || img.get(w - 1, y) >= 0.5)
}

/// Draws one item from the prior with its own generator.
pub fn make_item(seed: u64, cfg: &DatasetConfig) -> Result<DatasetItem, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=cfg.max_attempts {
        let shape = sample_shape_prior(&cfg.prior, &mut rng)?;
        let lambda = sample_lambda(&cfg.prior, &mut rng);
        let (hyper, noise, blur) = if cfg.noisy {
            let h = sample_hyper(&shape, &cfg.noise, &mut rng);
            let n = sample_noise(&shape, &h, &cfg.noise, &mut rng)
                .expect("hyperparameters drawn for this shape");
            let b = sample_blur(&cfg.prior, &mut rng);
            (h, Some(n), b)
        } else {
            (NoiseHyper::default(), None, BlurParams::NONE)
        };
        let image = render(&shape, noise.as_ref(), blur, &cfg.render.with_scale(lambda))?;
        let blank = !image.data().iter().any(|v| *v >= 0.5);
        if blank || (cfg.require_margin && touches_border(&image)) {
            continue;
        }
        return Ok(DatasetItem {
            seed,
            shape,
            hyper,
            noise,
            blur,
            lambda,
            image,
            attempts: attempt,
        });
    }
    Err(EvalError::Exhausted(cfg.max_attempts))
}

/// `n` items; item `i` uses seed `seed + i`.
pub fn make_dataset(
    n: usize,
    cfg: &DatasetConfig,
    seed: u64,
) -> Result<Vec<DatasetItem>, EvalError> {
    if n == 0 {
        return Err(EvalError::EmptyDataset);
    }
    (0..n as u64)
        .map(|i| make_item(seed.wrapping_add(i), cfg))
        .collect()
}

/// File stem of dataset item `i`.
pub fn item_stem(i: usize) -> String {
    format!("item_{i:04}")
}

/// Writes `item_%04d.png`, `item_%04d.wreath` and `manifest.txt` into
/// `dir`, which must exist.
pub fn write_dataset(
    dir: &Path,
    items: &[DatasetItem],
    manifest: &mut RunManifest,
) -> Result<(), IoError> {
    for (i, it) in items.iter().enumerate() {
        let stem = item_stem(i);
        write_png(&it.image, &dir.join(format!("{stem}.png")))?;
        let file = ShapeFile::new(it.shape.clone())
            .with("seed", it.seed)
            .with("lambda", format!("{:?}", it.lambda))
            .with("blur_w", it.blur.w_b)
            .with("blur_sigma", format!("{:?}", it.blur.sigma_b));
        write_shape_file(&file, &dir.join(format!("{stem}.wreath")))?;
        manifest.seeds.push(it.seed);
        manifest.outputs.push(format!("{stem}.png"));
        manifest.outputs.push(format!("{stem}.wreath"));
    }
    manifest.write(&dir.join("manifest.txt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{parse, regular_polygon_control};

    #[test]
    fn translations_merge() {
        let a = parse("[(Trans X,[1]); (Trans X,[2])]").unwrap();
        let b = parse("[(Trans X,[3])]").unwrap();
        assert!(equivalent(&a, &b));
    }

    #[test]
    fn square_matches_polygon_control_by_render() {
        let a = parse("[(Trans Y,[0.5]); (Trans X,[-0.5,0.5]); (Rot 4,[0..3])]").unwrap();
        let b = regular_polygon_control(4, 1.0, 0.5).unwrap();
        assert_ne!(canonicalize(&a), canonicalize(&b));
        assert!(equivalent(&a, &b));
        assert!(equivalent(&b, &a));
    }

    #[test]
    fn same_picture_different_depth_is_not_equivalent() {
        // mirroring a segment that is already symmetric draws nothing new
        let a = parse("[(Trans X,[1]); (Trans Y,[-0.5,0.5])]").unwrap();
        let b = parse("[(Trans X,[1]); (Trans Y,[-0.5,0.5]); (Mirror,full)]").unwrap();
        let cfg = equivalence_render_config();
        assert_eq!(binary_render(&a, &cfg), binary_render(&b, &cfg));
        assert!(!equivalent(&a, &b));
    }

    #[test]
    fn occupancy_only_difference() {
        let truth = parse("[(Trans Y,[0.5]); (Trans X,[-0.5,0.5]); (Rot 4,[0,1])]").unwrap();
        let inf = parse("[(Trans Y,[0.5]); (Trans X,[-0.5,0.5]); (Rot 4,[0,1,2])]").unwrap();
        let r = recoverability(&inf, &truth);
        assert!(!r.full_recoverability);
        assert!(r.up_to_occupancy);
        assert!(r.render_iou < 1.0 && r.render_iou > 0.5);
        let same = recoverability(&truth, &truth);
        assert!(same.full_recoverability && same.up_to_occupancy);
        assert_eq!(same.render_iou, 1.0);
    }

    #[test]
    fn unrelated_shapes() {
        let a = parse("[(Trans Y,[0.5]); (Trans X,[-0.5,0.5]); (Rot 4,full)]").unwrap();
        let b = parse("[(Trans X,[3]); (Rot 2π,full); (Trans Y,[-2,2])]").unwrap();
        let r = recoverability(&a, &b);
        assert!(!r.full_recoverability && !r.up_to_occupancy);
        assert!(r.render_iou < 0.2);
    }

    #[test]
    fn batch_rates() {
        let r = |f, u| EvalResult {
            full_recoverability: f,
            up_to_occupancy: u,
            render_iou: 0.5,
        };
        let s = summarize(&[
            r(true, true),
            r(false, true),
            r(false, true),
            r(false, false),
        ])
        .unwrap();
        assert_eq!((s.full, s.up_to_occupancy), (0.25, 0.75));
        assert_eq!(summarize(&[]), Err(EvalError::EmptyBatch));
    }

    #[test]
    fn dataset_items_have_ink_and_repeat() {
        let cfg = DatasetConfig {
            prior: PriorConfig {
                max_levels: 3,
                ..PriorConfig::default()
            },
            render: RenderConfig {
                width: 48,
                height: 48,
                ..RenderConfig::default()
            },
            ..DatasetConfig::default()
        };
        let a = make_dataset(6, &cfg, 40).unwrap();
        let b = make_dataset(6, &cfg, 40).unwrap();
        assert_eq!(a, b);
        for it in &a {
            assert!(it.image.data().iter().any(|v| *v >= 0.5));
        }
        assert_eq!(make_dataset(0, &cfg, 1), Err(EvalError::EmptyDataset));
    }
}
