//! Proposal kernels. Each returns the proposed state together with
//! `log q(x | x') − log q(x' | x)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::carry::carry;
use super::{ChainConfig, ModelState, MoveKind, Target};
use crate::grammar::{validate, GroupSpec, Level, Occupancy, Shape};
use crate::priors::{
    log_levels_prob, log_prior_blur, max_blur_width, sample_blur, sample_lambda, sample_levels,
    shape_supported, BlurParams, FiberState, TRANSLATION_STEP,
};
use crate::wreath_process::von_mises::wrap_angle;
use crate::wreath_process::{
    layout, log_density_entry, log_density_level, log_prior_sigma, sample_entry, sample_level,
    sample_sigma, NoiseKind,
};

pub struct Proposal {
    pub state: ModelState,
    pub log_correction: f64,
    pub kind: MoveKind,
}

/// Metropolis–Hastings acceptance probability.
pub fn acceptance(current: &ModelState, proposed: &ModelState, log_correction: f64) -> f64 {
    let next = proposed.log_posterior();
    if next == f64::NEG_INFINITY || log_correction.is_nan() || log_correction == f64::NEG_INFINITY {
        return 0.0;
    }
    let a = next - current.log_posterior() + log_correction;
    if a.is_nan() {
        0.0
    } else if a >= 0.0 {
        1.0
    } else {
        a.exp()
    }
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return Some(i);
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0)
}

/// Move-family weights after switching off what the chain keeps fixed.
pub fn effective_weights(chain: &ChainConfig) -> [f64; 5] {
    let mut w = chain.move_weights.as_array();
    if chain.noiseless {
        w[MoveKind::Noise.index()] = 0.0;
    }
    if chain.freeze_blur {
        w[MoveKind::Blur.index()] = 0.0;
    }
    if chain.freeze_lambda {
        w[MoveKind::Lambda.index()] = 0.0;
    }
    if chain.locked_levels > 0 || chain.occupancy_only {
        w[MoveKind::ShapeTransdim.index()] = 0.0;
    }
    w
}

/// Draws a move family and proposes from it. `None` means the chosen
/// move has nothing to act on in this state, which counts as staying put.
pub fn propose<R: Rng + ?Sized>(
    target: &Target<'_>,
    chain: &ChainConfig,
    st: &ModelState,
    rng: &mut R,
) -> Option<Proposal> {
    let kind = MoveKind::ALL[pick_weighted(&effective_weights(chain), rng)?];
    let (state, log_correction) = match kind {
        MoveKind::Noise => noise_move(target, st, rng)?,
        MoveKind::Blur => blur_move(target, st, rng)?,
        MoveKind::Lambda => lambda_move(target, st, rng)?,
        MoveKind::ShapeWithin => within_move(target, chain, st, rng)?,
        MoveKind::ShapeTransdim => transdim_move(target, chain, st, rng)?,
    };
    Some(Proposal {
        state,
        log_correction,
        kind,
    })
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn noise_move<R: Rng + ?Sized>(
    target: &Target<'_>,
    st: &ModelState,
    rng: &mut R,
) -> Option<(ModelState, f64)> {
    let cfg = &target.model.noise;
    let bearing: Vec<usize> = (0..st.hyper.sigma.len())
        .filter(|m| st.hyper.sigma[*m].is_some() && !st.noise.levels[*m].values.is_empty())
        .collect();
    if bearing.is_empty() {
        return None;
    }
    let mut hyper = st.hyper.clone();
    let mut noise = st.noise.clone();
    let m = bearing[rng.random_range(0..bearing.len())];
    let kind = noise.levels[m].kind;
    let sigma = hyper.sigma[m].expect("noise-bearing level");
    let variant = pick_weighted(&[0.3, 0.3, 0.2, 0.15, 0.05], rng)?;
    let corr = match variant {
        0 | 1 => {
            let slot = rng.random_range(0..noise.levels[m].values.len());
            let old = noise.levels[m].values[slot];
            if variant == 0 {
                let new = sample_entry(kind, sigma, rng);
                noise.levels[m].values[slot] = new;
                log_density_entry(kind, sigma, old) - log_density_entry(kind, sigma, new)
            } else {
                let mut new = old + 0.5 * sigma * normal(rng);
                if matches!(kind, NoiseKind::Rotation(_)) {
                    new = wrap_angle(new);
                }
                noise.levels[m].values[slot] = new;
                0.0
            }
        }
        2 => {
            let new = sigma * (0.5 * normal(rng)).exp();
            hyper.sigma[m] = Some(new);
            new.ln() - sigma.ln()
        }
        3 => {
            let lay = layout(&st.shape, cfg)[m];
            let (c, h, n) = resample_level(lay, kind, sigma, &noise.levels[m], cfg, rng);
            hyper.sigma[m] = Some(h);
            noise.levels[m] = n;
            c
        }
        _ => {
            let lay = layout(&st.shape, cfg);
            let mut c = 0.0;
            for &m in &bearing {
                let kind = noise.levels[m].kind;
                let sigma = hyper.sigma[m].expect("noise-bearing level");
                let (dc, h, n) = resample_level(lay[m], kind, sigma, &noise.levels[m], cfg, rng);
                c += dc;
                hyper.sigma[m] = Some(h);
                noise.levels[m] = n;
            }
            c
        }
    };
    let next = target.state(st.shape.clone(), hyper, noise, st.blur, st.lambda);
    Some((next, corr))
}

/// Redraws one level's scale and block from the prior.
fn resample_level<R: Rng + ?Sized>(
    lay: crate::wreath_process::LevelLayout,
    kind: NoiseKind,
    sigma: f64,
    old: &crate::wreath_process::LevelNoise,
    cfg: &crate::wreath_process::NoiseConfig,
    rng: &mut R,
) -> (f64, f64, crate::wreath_process::LevelNoise) {
    let h = sample_sigma(kind, cfg, rng).expect("noise-bearing kind");
    let n = sample_level(lay, Some(h), rng);
    let back = log_prior_sigma(kind, sigma, cfg) + log_density_level(old, Some(sigma));
    let fwd = log_prior_sigma(kind, h, cfg) + log_density_level(&n, Some(h));
    (back - fwd, h, n)
}

fn blur_move<R: Rng + ?Sized>(
    target: &Target<'_>,
    st: &ModelState,
    rng: &mut R,
) -> Option<(ModelState, f64)> {
    let cfg = &target.model.prior;
    let old = st.blur;
    let (blur, corr) = match pick_weighted(&[0.5, 0.25, 0.25], rng)? {
        0 => {
            let b = sample_blur(cfg, rng);
            (b, log_prior_blur(old, cfg) - log_prior_blur(b, cfg))
        }
        1 => {
            let up = rng.random::<bool>();
            let w = if up {
                old.w_b + 1
            } else {
                old.w_b.checked_sub(1)?
            };
            if w > max_blur_width(cfg) {
                return None;
            }
            (BlurParams { w_b: w, ..old }, 0.0)
        }
        _ => {
            let s = old.sigma_b * (0.3 * normal(rng)).exp();
            (BlurParams { sigma_b: s, ..old }, s.ln() - old.sigma_b.ln())
        }
    };
    Some((target.with_blur(st, blur), corr))
}

fn lambda_move<R: Rng + ?Sized>(
    target: &Target<'_>,
    st: &ModelState,
    rng: &mut R,
) -> Option<(ModelState, f64)> {
    let cfg = &target.model.prior;
    // the prior is uniform, so both variants are symmetric inside its support
    let lambda = if rng.random::<bool>() {
        sample_lambda(cfg, rng)
    } else {
        st.lambda + 1.5 * normal(rng)
    };
    let (lo, hi) = cfg.lambda_range;
    if !(lo..=hi).contains(&lambda) {
        return None;
    }
    let next = target.state(
        st.shape.clone(),
        st.hyper.clone(),
        st.noise.clone(),
        st.blur,
        lambda,
    );
    Some((next, 0.0))
}

/// Carries noise onto `shape` and scores the result; returns the state and
/// the noise part of the correction.
fn finish_shape<R: Rng + ?Sized>(
    target: &Target<'_>,
    st: &ModelState,
    shape: Shape,
    rng: &mut R,
) -> (ModelState, f64) {
    if target.noiseless {
        let next = target.state(
            shape,
            st.hyper.clone(),
            st.noise.clone(),
            st.blur,
            st.lambda,
        );
        return (next, 0.0);
    }
    let c = carry(
        &st.shape,
        &st.hyper,
        &st.noise,
        &shape,
        &target.model.noise,
        rng,
    );
    let next = target.state(shape, c.hyper, c.noise, st.blur, st.lambda);
    (next, c.log_dropped - c.log_added)
}

fn with_index(v: &[f64], k: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    out.push(k);
    out.sort_by(f64::total_cmp);
    out
}

/// Raw single-level edits of `level`, before any validity filtering.
fn level_edits(level: &Level, chain: &ChainConfig, target: &Target<'_>) -> Vec<Level> {
    let cfg = &target.model.prior;
    let mut out = Vec::new();
    let g = level.group;
    match g {
        GroupSpec::Rot(_) | GroupSpec::Mirror => {
            let n = g.order().expect("finite group");
            let current: Vec<f64> = level.indices();
            for k in 0..n {
                let k = f64::from(k);
                let occ = if current.contains(&k) {
                    let rest: Vec<f64> = current.iter().copied().filter(|x| *x != k).collect();
                    if rest.is_empty() {
                        continue;
                    }
                    Occupancy::Discrete(rest)
                } else {
                    let set = with_index(&current, k);
                    if set.len() == n as usize {
                        Occupancy::Full
                    } else {
                        Occupancy::Discrete(set)
                    }
                };
                out.push(Level::new(g, occ));
            }
            match &level.occ {
                Occupancy::Full => {
                    for k in 0..n {
                        out.push(Level::new(g, Occupancy::single(f64::from(k))));
                    }
                }
                occ if occ.is_single() => out.push(Level::new(g, Occupancy::Full)),
                _ => {}
            }
            if let (GroupSpec::Rot(n), false) = (g, chain.occupancy_only) {
                let mut orders = cfg.rot_orders.clone();
                orders.sort_unstable();
                orders.dedup();
                if let Some(pos) = orders.iter().position(|o| *o == n) {
                    let neighbours = [pos.checked_sub(1), Some(pos + 1)];
                    for m in neighbours
                        .into_iter()
                        .flatten()
                        .filter_map(|p| orders.get(p))
                    {
                        let occ = match &level.occ {
                            Occupancy::Full => Some(Occupancy::Full),
                            Occupancy::Discrete(v)
                                if v.len() < *m as usize
                                    && v.iter().all(|x| *x < f64::from(*m)) =>
                            {
                                Some(Occupancy::Discrete(v.clone()))
                            }
                            _ => None,
                        };
                        if let Some(occ) = occ {
                            out.push(Level::new(GroupSpec::Rot(*m), occ));
                        }
                    }
                    if cfg.allow_rot_full && pos + 1 == orders.len() && level.occ == Occupancy::Full
                    {
                        out.push(Level::new(GroupSpec::RotFull, Occupancy::Full));
                    }
                }
            }
        }
        GroupSpec::RotFull => {
            if !chain.occupancy_only {
                if let Some(top) = cfg.rot_orders.iter().max() {
                    out.push(Level::new(GroupSpec::Rot(*top), Occupancy::Full));
                }
            }
        }
        GroupSpec::TransX | GroupSpec::TransY => {
            match &level.occ {
                Occupancy::Discrete(v) => {
                    let b = i64::from(cfg.b_max);
                    for t in -b..=b {
                        let t = t as f64;
                        let occ = if v.contains(&t) {
                            let rest: Vec<f64> = v.iter().copied().filter(|x| *x != t).collect();
                            if rest.is_empty() {
                                continue;
                            }
                            Occupancy::Discrete(rest)
                        } else {
                            Occupancy::Discrete(with_index(v, t))
                        };
                        out.push(Level::new(g, occ));
                    }
                    if v.len() == 1 {
                        out.push(Level::new(g, Occupancy::single(v[0] - TRANSLATION_STEP)));
                        out.push(Level::new(g, Occupancy::single(v[0] + TRANSLATION_STEP)));
                        if v[0] == 0.0 {
                            out.push(Level::new(g, Occupancy::Interval { lo: -0.5, hi: 0.5 }));
                        }
                    }
                }
                Occupancy::Interval { .. } => out.push(Level::new(g, Occupancy::single(0.0))),
                Occupancy::Full => {}
            }
            if !chain.occupancy_only {
                let flipped = if g == GroupSpec::TransX {
                    GroupSpec::TransY
                } else {
                    GroupSpec::TransX
                };
                out.push(Level::new(flipped, level.occ.clone()));
            }
        }
        GroupSpec::Scale(_) => {}
    }
    out
}

/// Edits of level `i` of `s` that give a different shape of positive
/// prior probability.
fn candidates(s: &Shape, i: usize, chain: &ChainConfig, target: &Target<'_>) -> Vec<Shape> {
    let cfg = &target.model.prior;
    level_edits(&s.levels[i], chain, target)
        .into_iter()
        .filter(|l| *l != s.levels[i])
        .map(|l| {
            let mut t = s.clone();
            t.levels[i] = l;
            t
        })
        .filter(|t| validate(t, cfg.max_levels).is_ok() && shape_supported(t, cfg))
        .collect()
}

fn level_pick_weights(n: usize, chain: &ChainConfig) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i < chain.locked_levels {
                0.0
            } else {
                chain.level_pick_decay.powi(i as i32)
            }
        })
        .collect()
}

fn within_move<R: Rng + ?Sized>(
    target: &Target<'_>,
    chain: &ChainConfig,
    st: &ModelState,
    rng: &mut R,
) -> Option<(ModelState, f64)> {
    let s = &st.shape;
    let i = pick_weighted(&level_pick_weights(s.len(), chain), rng)?;
    let fwd = candidates(s, i, chain, target);
    if fwd.is_empty() {
        return None;
    }
    let next = fwd[rng.random_range(0..fwd.len())].clone();
    let count_fwd = fwd.iter().filter(|c| **c == next).count();
    let rev = candidates(&next, i, chain, target);
    let count_rev = rev.iter().filter(|c| *c == s).count();
    if count_rev == 0 {
        return None;
    }
    let shape_corr =
        (count_rev as f64 / rev.len() as f64).ln() - (count_fwd as f64 / fwd.len() as f64).ln();
    let (state, noise_corr) = finish_shape(target, st, next, rng);
    Some((state, shape_corr + noise_corr))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log q(to | from)` of the cut-and-regrow move, summed over every cut
/// that could have produced `to`.
fn log_q_transdim(from: &Shape, to: &Shape, chain: &ChainConfig, target: &Target<'_>) -> f64 {
    let cfg = &target.model.prior;
    let n = from.len();
    let weights: Vec<f64> = (0..=n)
        .map(|i| chain.level_pick_decay.powi(i as i32))
        .collect();
    let z: f64 = weights.iter().sum();
    let mut terms = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        let kept = n - i;
        if kept > to.len() || kept > cfg.max_levels {
            continue;
        }
        let m = to.len() - kept;
        if m > cfg.max_levels - kept {
            continue;
        }
        if from.levels[i..] != to.levels[m..] {
            continue;
        }
        let p_fiber = log_levels_prob(&to.levels[..m], FiberState::ORIGIN, cfg);
        let choices = (cfg.max_levels - kept + 1) as f64;
        terms.push((w / z).ln() - choices.ln() + p_fiber);
    }
    log_sum_exp(&terms)
}

fn transdim_move<R: Rng + ?Sized>(
    target: &Target<'_>,
    chain: &ChainConfig,
    st: &ModelState,
    rng: &mut R,
) -> Option<(ModelState, f64)> {
    let cfg = &target.model.prior;
    let s = &st.shape;
    let n = s.len();
    let weights: Vec<f64> = (0..=n)
        .map(|i| chain.level_pick_decay.powi(i as i32))
        .collect();
    let i = pick_weighted(&weights, rng)?;
    let kept = n - i;
    let m = rng.random_range(0..=cfg.max_levels.checked_sub(kept)?);
    let mut levels = sample_levels(m, FiberState::ORIGIN, cfg, rng).ok()?;
    levels.extend_from_slice(&s.levels[i..]);
    let next = Shape::new(levels);
    if next.is_empty() || !shape_supported(&next, cfg) {
        return None;
    }
    let shape_corr =
        log_q_transdim(&next, s, chain, target) - log_q_transdim(s, &next, chain, target);
    let (state, noise_corr) = finish_shape(target, st, next, rng);
    Some((state, shape_corr + noise_corr))
}
