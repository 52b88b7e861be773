//! Bernoulli pixel likelihood of a binary observation given a render.

use thiserror::Error;

use crate::renderer::Raster;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LikelihoodError {
    #[error("image sizes differ: observed {obs:?}, rendered {render:?}")]
    DimensionMismatch {
        obs: (usize, usize),
        render: (usize, usize),
    },
}

/// Binary image; `true` marks ink.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedImage {
    width: usize,
    height: usize,
    ink: Vec<bool>,
}

impl ObservedImage {
    pub fn from_bits(width: usize, height: usize, ink: Vec<bool>) -> Self {
        assert_eq!(ink.len(), width * height, "observation length");
        ObservedImage { width, height, ink }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.ink
    }

    pub fn ink_count(&self) -> usize {
        self.ink.iter().filter(|b| **b).count()
    }

    pub fn to_raster(&self) -> Raster {
        Raster::from_data(
            self.width,
            self.height,
            self.ink
                .iter()
                .map(|b| if *b { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

/// Thresholds at `threshold`; if most border pixels come out as ink the
/// image is taken to be light-on-dark and inverted.
pub fn binarize(img: &Raster, threshold: f64) -> ObservedImage {
    let (w, h) = (img.width(), img.height());
    let mut ink: Vec<bool> = img.data().iter().map(|v| *v >= threshold).collect();
    let mut border = 0usize;
    let mut border_ink = 0usize;
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                border += 1;
                if ink[y * w + x] {
                    border_ink += 1;
                }
            }
        }
    }
    if 2 * border_ink > border {
        for b in &mut ink {
            *b = !*b;
        }
    }
    ObservedImage {
        width: w,
        height: h,
        ink,
    }
}

/// Thresholds without polarity detection.
pub fn threshold_only(img: &Raster, threshold: f64) -> ObservedImage {
    ObservedImage {
        width: img.width(),
        height: img.height(),
        ink: img.data().iter().map(|v| *v >= threshold).collect(),
    }
}

/// Sums in fixed-size blocks, then pairwise over the block sums, so the
/// rounding pattern depends only on the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len().div_ceil(2 * BLOCK) * BLOCK;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `Σ I_D log Î + (1 − I_D) log(1 − Î)` with `Î` clamped to
/// `[p_min, 1 − p_min]`.
pub fn log_likelihood(
    obs: &ObservedImage,
    render: &Raster,
    p_min: f64,
) -> Result<f64, LikelihoodError> {
    if (obs.width, obs.height) != (render.width(), render.height()) {
        return Err(LikelihoodError::DimensionMismatch {
            obs: (obs.width, obs.height),
            render: (render.width(), render.height()),
        });
    }
    let terms: Vec<f64> = obs
        .ink
        .iter()
        .zip(render.data())
        .map(|(ink, r)| {
            let p = r.clamp(p_min, 1.0 - p_min);
            if *ink {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .collect();
    Ok(pairwise_sum(&terms))
}
