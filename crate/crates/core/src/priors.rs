//! Priors over shapes, blur parameters and the global scale λ.
//!
//! A shape is drawn by picking a level count `n` uniformly on
//! `1..=max_levels` and then `n` levels bottom-up. Each level picks a group
//! family uniformly and an occupancy mode (single / full / special). A level
//! that would break the continuous-fiber rule or push the total copy count
//! above `max_copies` is redrawn, so the level law is the raw law
//! conditioned on the state reached so far. [`log_prior_shape`] scores
//! exactly this procedure.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1};
use thiserror::Error;

use crate::grammar::{GroupSpec, Level, Occupancy, Shape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("invalid prior configuration: {0}")]
    InvalidConfig(String),
    #[error("gave up drawing a valid level after {0} attempts")]
    Exhausted(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub p_single: f64,
    pub p_full: f64,
    /// Largest bound `B` for index sets of translations.
    pub b_max: u32,
    pub max_levels: usize,
    /// Largest total number of fiber copies a shape may produce.
    pub max_copies: usize,
    /// Blur half-window scale in pixels.
    pub b_w: f64,
    /// Blur σ scale in pixels.
    pub b_sigma: f64,
    pub rot_orders: Vec<u32>,
    pub allow_rot_full: bool,
    pub lambda_range: (f64, f64),
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            p_single: 0.4,
            p_full: 0.4,
            b_max: 5,
            max_levels: 8,
            max_copies: 1024,
            b_w: 6.0,
            b_sigma: 2.0,
            rot_orders: vec![2, 3, 4, 5, 6, 8],
            allow_rot_full: true,
            lambda_range: (1.0, 50.0),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), PriorError> {
        let bad = |m: &str| Err(PriorError::InvalidConfig(m.to_string()));
        if !(self.p_single >= 0.0 && self.p_full >= 0.0 && self.p_single + self.p_full <= 1.0) {
            return bad("p_single and p_full must be probabilities with sum at most 1");
        }
        if self.b_max == 0 {
            return bad("b_max must be positive");
        }
        if self.max_levels == 0 {
            return bad("max_levels must be positive");
        }
        if self.max_copies == 0 {
            return bad("max_copies must be positive");
        }
        if !(self.b_w > 0.0 && self.b_sigma > 0.0) {
            return bad("blur scales must be positive");
        }
        if self.rot_orders.iter().any(|n| *n < 2) {
            return bad("rotation orders must be at least 2");
        }
        let mut sorted = self.rot_orders.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.rot_orders.len() {
            return bad("rotation orders must be distinct");
        }
        let (lo, hi) = self.lambda_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad("lambda range must satisfy 0 < lo < hi");
        }
        Ok(())
    }

    pub fn p_special(&self) -> f64 {
        (1.0 - self.p_single - self.p_full).max(0.0)
    }

    fn families(&self) -> Vec<Family> {
        let mut f = vec![Family::TransX, Family::TransY];
        if !self.rot_orders.is_empty() {
            f.push(Family::Rot);
        }
        if self.allow_rot_full {
            f.push(Family::RotFull);
        }
        f.push(Family::Mirror);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    TransX,
    TransY,
    Rot,
    RotFull,
    Mirror,
}

/// Step of the grid single translations are drawn from.
pub const TRANSLATION_STEP: f64 = 0.5;

/// What the levels below a position look like, as far as the level law
/// cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FiberState {
    /// The fiber is a single point.
    pub point: bool,
    /// Number of copies produced so far.
    pub copies: usize,
}

impl FiberState {
    pub const ORIGIN: FiberState = FiberState {
        point: true,
        copies: 1,
    };

    pub fn advance(self, level: &Level) -> FiberState {
        FiberState {
            point: self.point && level.is_single(),
            copies: self.copies.saturating_mul(level.copy_count()),
        }
    }
}

/// Whether `level` may follow `state` at all.
pub fn level_allowed(level: &Level, state: FiberState, cfg: &PriorConfig) -> bool {
    (!level.is_continuous() || state.point)
        && state.copies.saturating_mul(level.copy_count()) <= cfg.max_copies
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Mass of a non-empty subset of size `k` of a finite group of order `n`
/// under the special mode (each index with probability `1/n`, redrawn while
/// empty).
fn finite_special_mass(n: u32, k: usize) -> f64 {
    let q = 1.0 / f64::from(n);
    let empty = (1.0 - q).powi(n as i32);
    q.powi(k as i32) * (1.0 - q).powi((n as usize - k) as i32) / (1.0 - empty)
}

/// Mass of a given integer set under the translation special mode.
fn trans_special_mass(values: &[f64], cfg: &PriorConfig) -> f64 {
    if values.is_empty() || values.iter().any(|v| v.fract() != 0.0) {
        return 0.0;
    }
    let reach = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut total = 0.0;
    for b in 1..=cfg.b_max {
        if f64::from(b) < reach {
            continue;
        }
        let slots = 2 * b + 1;
        let each = 0.5f64.powi(slots as i32) / (1.0 - 0.5f64.powi(slots as i32));
        total += each / f64::from(cfg.b_max);
    }
    total
}

/// Mass of a single translation offset `v` under the single mode.
fn trans_single_mass(v: f64, cfg: &PriorConfig) -> f64 {
    let steps = v / TRANSLATION_STEP;
    if steps.fract() != 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for b in 1..=cfg.b_max {
        if f64::from(b) < v.abs() {
            continue;
        }
        let grid = (2.0 * f64::from(b) / TRANSLATION_STEP) as usize + 1;
        total += 1.0 / (grid as f64 * f64::from(cfg.b_max));
    }
    total
}

fn is_unit_interval(occ: &Occupancy) -> bool {
    matches!(occ, Occupancy::Interval { lo, hi } if *lo == -0.5 && *hi == 0.5)
}

/// Unconditioned mass of a level under the per-level draw.
pub fn raw_level_mass(level: &Level, cfg: &PriorConfig) -> f64 {
    let families = cfg.families();
    let pick = 1.0 / families.len() as f64;
    let (ps, pf, pz) = (cfg.p_single, cfg.p_full, cfg.p_special());
    let m = match (&level.group, &level.occ) {
        (GroupSpec::TransX | GroupSpec::TransY, occ) => match occ {
            Occupancy::Discrete(v) if v.len() == 1 => {
                ps * trans_single_mass(v[0], cfg) + pz * trans_special_mass(v, cfg)
            }
            Occupancy::Discrete(v) => {
                let sorted = v.windows(2).all(|w| w[0] < w[1]);
                if sorted {
                    pz * trans_special_mass(v, cfg)
                } else {
                    0.0
                }
            }
            occ if is_unit_interval(occ) => pf,
            _ => 0.0,
        },
        (GroupSpec::Rot(n), occ) => {
            if !cfg.rot_orders.contains(n) {
                return 0.0;
            }
            let per_order = 1.0 / cfg.rot_orders.len() as f64;
            let within = match occ {
                Occupancy::Full => pf + pz * finite_special_mass(*n, *n as usize),
                Occupancy::Discrete(v) if valid_finite(v, *n) => {
                    let single = if v.len() == 1 {
                        ps / f64::from(*n)
                    } else {
                        0.0
                    };
                    single + pz * finite_special_mass(*n, v.len())
                }
                _ => 0.0,
            };
            per_order * within
        }
        (GroupSpec::RotFull, Occupancy::Full) if cfg.allow_rot_full => 1.0,
        (GroupSpec::Mirror, occ) => match occ {
            Occupancy::Full => pf + pz * finite_special_mass(2, 2),
            Occupancy::Discrete(v) if v.len() == 1 && valid_finite(v, 2) => {
                ps / 2.0 + pz * finite_special_mass(2, 1)
            }
            _ => 0.0,
        },
        _ => 0.0,
    };
    pick * m
}

fn valid_finite(v: &[f64], n: u32) -> bool {
    !v.is_empty()
        && v.len() < n as usize
        && v.iter()
            .all(|x| x.fract() == 0.0 && *x >= 0.0 && *x < f64::from(n))
        && v.windows(2).all(|w| w[0] < w[1])
}

/// Distribution of `(continuous, copy_count)` of one raw level draw.
fn raw_copy_distribution(cfg: &PriorConfig) -> Vec<(bool, usize, f64)> {
    let families = cfg.families();
    let pick = 1.0 / families.len() as f64;
    let (ps, pf, pz) = (cfg.p_single, cfg.p_full, cfg.p_special());
    let mut out = Vec::new();
    for fam in families {
        match fam {
            Family::TransX | Family::TransY => {
                out.push((false, 1, pick * ps));
                out.push((true, 1, pick * pf));
                for b in 1..=cfg.b_max {
                    let slots = 2 * b + 1;
                    let norm = 1.0 - 0.5f64.powi(slots as i32);
                    for k in 1..=slots {
                        let p = binomial(u64::from(slots), u64::from(k))
                            * 0.5f64.powi(slots as i32)
                            / norm;
                        out.push((false, k as usize, pick * pz * p / f64::from(cfg.b_max)));
                    }
                }
            }
            Family::Rot => {
                let per = pick / cfg.rot_orders.len() as f64;
                for &n in &cfg.rot_orders {
                    out.push((false, 1, per * ps));
                    out.push((false, n as usize, per * pf));
                    for k in 1..=n as usize {
                        let p = binomial(u64::from(n), k as u64) * finite_special_mass(n, k);
                        out.push((false, k, per * pz * p));
                    }
                }
            }
            Family::RotFull => out.push((true, 1, pick)),
            Family::Mirror => {
                out.push((false, 1, pick * ps));
                out.push((false, 2, pick * pf));
                out.push((false, 1, pick * pz * 2.0 / 3.0));
                out.push((false, 2, pick * pz / 3.0));
            }
        }
    }
    out
}

/// Probability that a raw level draw is allowed in `state`.
pub fn level_normalizer(state: FiberState, cfg: &PriorConfig) -> f64 {
    raw_copy_distribution(cfg)
        .into_iter()
        .filter(|(cont, k, _)| {
            (!cont || state.point) && state.copies.saturating_mul(*k) <= cfg.max_copies
        })
        .map(|(_, _, p)| p)
        .sum()
}

/// Log probability of drawing `level` given the fiber below it.
pub fn log_level_prob(level: &Level, state: FiberState, cfg: &PriorConfig) -> f64 {
    if !level_allowed(level, state, cfg) {
        return f64::NEG_INFINITY;
    }
    let m = raw_level_mass(level, cfg);
    if m <= 0.0 {
        return f64::NEG_INFINITY;
    }
    m.ln() - level_normalizer(state, cfg).ln()
}

/// Log probability of the levels of `levels` drawn in order from `state`,
/// excluding the level-count factor.
pub fn log_levels_prob(levels: &[Level], mut state: FiberState, cfg: &PriorConfig) -> f64 {
    let mut total = 0.0;
    for l in levels {
        total += log_level_prob(l, state, cfg);
        if total == f64::NEG_INFINITY {
            return total;
        }
        state = state.advance(l);
    }
    total
}

pub fn log_prior_shape(s: &Shape, cfg: &PriorConfig) -> f64 {
    let n = s.levels.len();
    if n == 0 || n > cfg.max_levels {
        return f64::NEG_INFINITY;
    }
    -(cfg.max_levels as f64).ln() + log_levels_prob(&s.levels, FiberState::ORIGIN, cfg)
}

/// Whether `s` has positive prior probability, without computing it.
pub fn shape_supported(s: &Shape, cfg: &PriorConfig) -> bool {
    let n = s.levels.len();
    if n == 0 || n > cfg.max_levels {
        return false;
    }
    let mut state = FiberState::ORIGIN;
    for l in &s.levels {
        if !level_allowed(l, state, cfg) || raw_level_mass(l, cfg) <= 0.0 {
            return false;
        }
        state = state.advance(l);
    }
    true
}

fn draw_raw_level<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> Level {
    let families = cfg.families();
    let fam = families[rng.random_range(0..families.len())];
    let u: f64 = rng.random();
    let mode = if u < cfg.p_single {
        0
    } else if u < cfg.p_single + cfg.p_full {
        1
    } else {
        2
    };
    match fam {
        Family::TransX | Family::TransY => {
            let group = if fam == Family::TransX {
                GroupSpec::TransX
            } else {
                GroupSpec::TransY
            };
            let b = rng.random_range(1..=cfg.b_max) as i64;
            let occ = match mode {
                0 => {
                    let steps = (2.0 * b as f64 / TRANSLATION_STEP) as i64;
                    let k = rng.random_range(0..=steps);
                    Occupancy::single(-(b as f64) + k as f64 * TRANSLATION_STEP)
                }
                1 => Occupancy::Interval { lo: -0.5, hi: 0.5 },
                _ => loop {
                    let set: Vec<f64> = (-b..=b)
                        .filter(|_| rng.random::<bool>())
                        .map(|v| v as f64)
                        .collect();
                    if !set.is_empty() {
                        break Occupancy::Discrete(set);
                    }
                },
            };
            Level::new(group, occ)
        }
        Family::Rot => {
            let n = cfg.rot_orders[rng.random_range(0..cfg.rot_orders.len())];
            Level::new(GroupSpec::Rot(n), finite_occupancy(n, mode, rng))
        }
        Family::RotFull => Level::new(GroupSpec::RotFull, Occupancy::Full),
        Family::Mirror => Level::new(GroupSpec::Mirror, finite_occupancy(2, mode, rng)),
    }
}

fn finite_occupancy<R: Rng + ?Sized>(n: u32, mode: u8, rng: &mut R) -> Occupancy {
    match mode {
        0 => Occupancy::single(f64::from(rng.random_range(0..n))),
        1 => Occupancy::Full,
        _ => loop {
            let q = 1.0 / f64::from(n);
            let set: Vec<f64> = (0..n)
                .filter(|_| rng.random::<f64>() < q)
                .map(f64::from)
                .collect();
            if set.len() == n as usize {
                break Occupancy::Full;
            }
            if !set.is_empty() {
                break Occupancy::Discrete(set);
            }
        },
    }
}

const MAX_ATTEMPTS: usize = 1000;

/// Draws one level conditioned on being allowed after `state`.
pub fn sample_level<R: Rng + ?Sized>(
    state: FiberState,
    cfg: &PriorConfig,
    rng: &mut R,
) -> Result<Level, PriorError> {
    for _ in 0..MAX_ATTEMPTS {
        let l = draw_raw_level(cfg, rng);
        if level_allowed(&l, state, cfg) {
            return Ok(l);
        }
    }
    Err(PriorError::Exhausted(MAX_ATTEMPTS))
}

/// Draws `count` levels bottom-up starting from `state`.
pub fn sample_levels<R: Rng + ?Sized>(
    count: usize,
    mut state: FiberState,
    cfg: &PriorConfig,
    rng: &mut R,
) -> Result<Vec<Level>, PriorError> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let l = sample_level(state, cfg, rng)?;
        state = state.advance(&l);
        out.push(l);
    }
    Ok(out)
}

pub fn sample_shape_prior<R: Rng + ?Sized>(
    cfg: &PriorConfig,
    rng: &mut R,
) -> Result<Shape, PriorError> {
    cfg.validate()?;
    let n = rng.random_range(1..=cfg.max_levels);
    Ok(Shape::new(sample_levels(n, FiberState::ORIGIN, cfg, rng)?))
}

/// Blur half-window and σ, both in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurParams {
    pub w_b: usize,
    pub sigma_b: f64,
}

impl BlurParams {
    pub const NONE: BlurParams = BlurParams {
        w_b: 0,
        sigma_b: 1.0,
    };
}

pub fn sample_blur<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> BlurParams {
    let beta = Beta::new(1.0, 2.0).expect("valid beta parameters");
    let w: f64 = beta.sample(rng);
    let e: f64 = Exp1.sample(rng);
    BlurParams {
        w_b: (cfg.b_w * w).round() as usize,
        sigma_b: (cfg.b_sigma * e).max(f64::MIN_POSITIVE),
    }
}

/// CDF of `b_w · Beta(1, 2)`.
fn scaled_beta12_cdf(x: f64, b_w: f64) -> f64 {
    let u = (x / b_w).clamp(0.0, 1.0);
    1.0 - (1.0 - u) * (1.0 - u)
}

/// Log mass of the rounded half-window `w`.
pub fn log_prior_blur_width(w: usize, cfg: &PriorConfig) -> f64 {
    let lo = (w as f64 - 0.5).max(0.0);
    let hi = w as f64 + 0.5;
    let p = scaled_beta12_cdf(hi, cfg.b_w) - scaled_beta12_cdf(lo, cfg.b_w);
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub fn log_prior_blur_sigma(sigma: f64, cfg: &PriorConfig) -> f64 {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return f64::NEG_INFINITY;
    }
    -cfg.b_sigma.ln() - sigma / cfg.b_sigma
}

pub fn log_prior_blur(bp: BlurParams, cfg: &PriorConfig) -> f64 {
    log_prior_blur_width(bp.w_b, cfg) + log_prior_blur_sigma(bp.sigma_b, cfg)
}

/// Largest half-window with positive prior mass.
pub fn max_blur_width(cfg: &PriorConfig) -> usize {
    (cfg.b_w + 0.5).floor() as usize
}

pub fn sample_lambda<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> f64 {
    let (lo, hi) = cfg.lambda_range;
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn log_prior_lambda(lambda: f64, cfg: &PriorConfig) -> f64 {
    let (lo, hi) = cfg.lambda_range;
    if (lo..=hi).contains(&lambda) {
        -(hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn raw_level_distribution_sums_to_one() {
        let cfg = PriorConfig::default();
        let total: f64 = raw_copy_distribution(&cfg).iter().map(|x| x.2).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((level_normalizer(FiberState::ORIGIN, &cfg) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn support_examples() {
        let cfg = PriorConfig::default();
        assert_eq!(
            log_prior_shape(&parse("[(Rot 7,[0..6])]").unwrap(), &cfg),
            f64::NEG_INFINITY
        );
        assert_eq!(log_prior_shape(&Shape::empty(), &cfg), f64::NEG_INFINITY);
        assert_eq!(
            log_prior_shape(&parse("[(Scale 2.0,[1])]").unwrap(), &cfg),
            f64::NEG_INFINITY
        );
        assert_eq!(
            log_prior_shape(&parse("[(Trans X,[0.25,0.25])]").unwrap(), &cfg),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn mirror_full_factorization() {
        let cfg = PriorConfig::default();
        let s = parse("[(Mirror,full)]").unwrap();
        // full mode, plus the special mode selecting both elements
        let expected = (1.0 / 8.0f64).ln() + (1.0 / 5.0f64).ln() + (0.4 + 0.2 / 3.0f64).ln();
        assert!((log_prior_shape(&s, &cfg) - expected).abs() < 1e-12);
    }

    #[test]
    fn lambda_prior() {
        let cfg = PriorConfig::default();
        assert!((log_prior_lambda(25.0, &cfg) - (1.0 / 49.0f64).ln()).abs() < 1e-15);
        assert_eq!(log_prior_lambda(0.5, &cfg), f64::NEG_INFINITY);
    }

    #[test]
    fn blur_width_masses_sum_to_one() {
        let cfg = PriorConfig::default();
        let total: f64 = (0..=max_blur_width(&cfg))
            .map(|w| log_prior_blur_width(w, &cfg).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(
            log_prior_blur_width(max_blur_width(&cfg) + 1, &cfg),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn single_mode_only_gives_a_dot_like_shape() {
        let cfg = PriorConfig {
            p_single: 1.0,
            p_full: 0.0,
            allow_rot_full: false,
            ..PriorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let s = sample_shape_prior(&cfg, &mut rng).unwrap();
            assert!(s.levels.iter().all(|l| l.is_single()));
            assert_eq!(s.copy_count(), 1);
        }
    }

    #[test]
    fn samples_respect_limits() {
        let cfg = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let s = sample_shape_prior(&cfg, &mut rng).unwrap();
            s.validate().unwrap();
            assert!(s.copy_count() <= cfg.max_copies);
            assert!(log_prior_shape(&s, &cfg).is_finite(), "{s}");
        }
    }
}
