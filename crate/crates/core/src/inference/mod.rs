//! Reversible-jump MCMC over shape, noise, blur and scale.
//!
//! The target is `p(S) p(σ|S) p(N|S,σ) p(X) p(λ) p(I_D | render(S,N,X,λ))`.
//! Every proposal returns the log of `q(reverse)/q(forward)` including the
//! densities of auxiliary draws, so acceptance is plain Metropolis–Hastings
//! on the full posterior with unit Jacobian.

mod carry;
mod moves;

use std::collections::HashMap;
use std::fmt;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grammar::Shape;
use crate::likelihood::{log_likelihood, ObservedImage};
use crate::priors::{
    log_prior_blur, log_prior_lambda, log_prior_shape, sample_blur, sample_lambda,
    sample_shape_prior, BlurParams, PriorConfig, PriorError,
};
use crate::renderer::{gaussian_blur, rasterize, unfold, Raster, RenderConfig, RenderError};
use crate::wreath_process::{
    log_density_noise, log_prior_hyper, sample_hyper, sample_noise, NoiseConfig, NoiseHyper,
    NoiseTree,
};

pub use carry::{carry, Carried};
pub use moves::{acceptance, propose, Proposal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("initial state has zero posterior density")]
    ImpossibleStart,
    #[error(
        "iteration {iteration}: cached log posterior {cached} differs from recomputed {fresh}"
    )]
    CacheMismatch {
        iteration: usize,
        cached: f64,
        fresh: f64,
    },
}

/// Everything fixed during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub prior: PriorConfig,
    pub noise: NoiseConfig,
    /// Canvas and stroke settings; the scale is taken from the state.
    pub render: RenderConfig,
    /// Render probabilities are clamped to `[p_min, 1 − p_min]`.
    pub p_min: f64,
}

impl Default for Model {
    fn default() -> Self {
        Model {
            prior: PriorConfig::default(),
            noise: NoiseConfig::default(),
            render: RenderConfig::default(),
            p_min: 1e-4,
        }
    }
}

/// Relative frequencies of the five move families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveWeights {
    pub noise: f64,
    pub blur: f64,
    pub lambda: f64,
    pub shape_within: f64,
    pub shape_transdim: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        MoveWeights {
            noise: 0.40,
            blur: 0.10,
            lambda: 0.05,
            shape_within: 0.30,
            shape_transdim: 0.15,
        }
    }
}

impl MoveWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.noise,
            self.blur,
            self.lambda,
            self.shape_within,
            self.shape_transdim,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Noise,
    Blur,
    Lambda,
    ShapeWithin,
    ShapeTransdim,
}

impl MoveKind {
    pub const ALL: [MoveKind; 5] = [
        MoveKind::Noise,
        MoveKind::Blur,
        MoveKind::Lambda,
        MoveKind::ShapeWithin,
        MoveKind::ShapeTransdim,
    ];

    pub fn index(self) -> usize {
        match self {
            MoveKind::Noise => 0,
            MoveKind::Blur => 1,
            MoveKind::Lambda => 2,
            MoveKind::ShapeWithin => 3,
            MoveKind::ShapeTransdim => 4,
        }
    }
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MoveKind::Noise => "noise",
            MoveKind::Blur => "blur",
            MoveKind::Lambda => "lambda",
            MoveKind::ShapeWithin => "shape_within",
            MoveKind::ShapeTransdim => "shape_transdim",
        })
    }
}

/// Starting point of a chain; missing parts are drawn from the prior.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitState {
    pub shape: Option<Shape>,
    pub blur: Option<BlurParams>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub seed: u64,
    pub thin: usize,
    /// Iterations before samples and visit counts are recorded.
    pub burn_in: usize,
    pub move_weights: MoveWeights,
    /// Level `i` (0 = innermost) is picked with weight `γ^i`.
    pub level_pick_decay: f64,
    /// Treat the likelihood as constant; the chain then targets the prior.
    pub ignore_likelihood: bool,
    /// Drop noise and its scales from the model.
    pub noiseless: bool,
    pub freeze_blur: bool,
    pub freeze_lambda: bool,
    /// Number of innermost levels that structural moves must not touch.
    pub locked_levels: usize,
    /// Restrict within-model moves to occupancy changes.
    pub occupancy_only: bool,
    /// Store noise in thinned samples, not just in the MAP and ML states.
    pub record_noise: bool,
    /// Print progress to stderr every this many iterations (0 = quiet).
    pub progress_every: usize,
    /// Recompute the posterior from scratch after every step and compare.
    pub verify_cache: bool,
    pub init: InitState,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 10_000,
            seed: 0,
            thin: 10,
            burn_in: 0,
            move_weights: MoveWeights::default(),
            level_pick_decay: 0.5,
            ignore_likelihood: false,
            noiseless: false,
            freeze_blur: false,
            freeze_lambda: false,
            locked_levels: 0,
            occupancy_only: false,
            record_noise: false,
            progress_every: 0,
            verify_cache: false,
            init: InitState::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidConfig(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if !(self.level_pick_decay > 0.0 && self.level_pick_decay <= 1.0) {
            return bad("level_pick_decay must lie in (0, 1]");
        }
        let w = self.move_weights.as_array();
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return bad("move weights must be non-negative");
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return bad("at least one move weight must be positive");
        }
        Ok(())
    }
}

/// Prior terms of a state, kept separately and summed in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorParts {
    pub shape: f64,
    pub hyper: f64,
    pub noise: f64,
    pub blur: f64,
    pub lambda: f64,
}

impl PriorParts {
    pub fn total(&self) -> f64 {
        self.shape + self.hyper + self.noise + self.blur + self.lambda
    }
}

/// A chain state together with its cached render and scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub shape: Shape,
    pub hyper: NoiseHyper,
    pub noise: NoiseTree,
    pub blur: BlurParams,
    pub lambda: f64,
    raw: Option<Raster>,
    render: Option<Raster>,
    log_lik: f64,
    prior: PriorParts,
}

impl ModelState {
    pub fn log_likelihood(&self) -> f64 {
        self.log_lik
    }

    pub fn prior_parts(&self) -> PriorParts {
        self.prior
    }

    pub fn log_prior(&self) -> f64 {
        self.prior.total()
    }

    pub fn log_posterior(&self) -> f64 {
        let p = self.prior.total();
        if p == f64::NEG_INFINITY {
            p
        } else {
            p + self.log_lik
        }
    }

    /// Blurred render, absent when the likelihood is ignored or the prior
    /// rules the state out.
    pub fn render(&self) -> Option<&Raster> {
        self.render.as_ref()
    }
}

/// Scores states against one observation.
pub struct Target<'a> {
    pub model: &'a Model,
    pub obs: &'a ObservedImage,
    pub ignore_likelihood: bool,
    pub noiseless: bool,
}

impl<'a> Target<'a> {
    pub fn new(model: &'a Model, obs: &'a ObservedImage, chain: &ChainConfig) -> Self {
        Target {
            model,
            obs,
            ignore_likelihood: chain.ignore_likelihood,
            noiseless: chain.noiseless,
        }
    }

    fn render_config(&self, lambda: f64) -> RenderConfig {
        RenderConfig {
            width: self.obs.width(),
            height: self.obs.height(),
            unit_scale: lambda,
            ..self.model.render.clone()
        }
    }

    fn prior_parts(
        &self,
        shape: &Shape,
        hyper: &NoiseHyper,
        noise: &NoiseTree,
        blur: BlurParams,
        lambda: f64,
    ) -> PriorParts {
        let cfg = &self.model.prior;
        let s = log_prior_shape(shape, cfg);
        let (h, n) = if self.noiseless || s == f64::NEG_INFINITY {
            (0.0, 0.0)
        } else {
            let h = log_prior_hyper(shape, hyper, &self.model.noise);
            let n = log_density_noise(shape, hyper, noise, &self.model.noise)
                .unwrap_or(f64::NEG_INFINITY);
            (h, n)
        };
        PriorParts {
            shape: s,
            hyper: h,
            noise: n,
            blur: log_prior_blur(blur, cfg),
            lambda: log_prior_lambda(lambda, cfg),
        }
    }

    /// Scores a state from scratch.
    pub fn state(
        &self,
        shape: Shape,
        hyper: NoiseHyper,
        noise: NoiseTree,
        blur: BlurParams,
        lambda: f64,
    ) -> ModelState {
        let prior = self.prior_parts(&shape, &hyper, &noise, blur, lambda);
        let mut st = ModelState {
            shape,
            hyper,
            noise,
            blur,
            lambda,
            raw: None,
            render: None,
            log_lik: 0.0,
            prior,
        };
        if prior.total() == f64::NEG_INFINITY || self.ignore_likelihood {
            return st;
        }
        let noise = if self.noiseless {
            None
        } else {
            Some(&st.noise)
        };
        match unfold(&st.shape, noise) {
            Ok(strokes) => {
                let raw = rasterize(&strokes, &self.render_config(lambda));
                self.finish(&mut st, raw);
            }
            Err(_) => st.prior.shape = f64::NEG_INFINITY,
        }
        st
    }

    fn finish(&self, st: &mut ModelState, raw: Raster) {
        let img = gaussian_blur(&raw, st.blur.w_b, st.blur.sigma_b);
        st.log_lik = log_likelihood(self.obs, &img, self.model.p_min).unwrap_or(f64::NEG_INFINITY);
        st.raw = Some(raw);
        st.render = Some(img);
    }

    /// Same state with new blur parameters, reusing the unblurred raster.
    pub fn with_blur(&self, st: &ModelState, blur: BlurParams) -> ModelState {
        let mut next = ModelState {
            blur,
            raw: None,
            render: None,
            log_lik: 0.0,
            prior: PriorParts {
                blur: log_prior_blur(blur, &self.model.prior),
                ..st.prior
            },
            ..st.clone()
        };
        if next.prior.total() == f64::NEG_INFINITY || self.ignore_likelihood {
            return next;
        }
        match &st.raw {
            Some(raw) => self.finish(&mut next, raw.clone()),
            None => {
                return self.state(
                    next.shape.clone(),
                    next.hyper.clone(),
                    next.noise.clone(),
                    blur,
                    next.lambda,
                )
            }
        }
        next
    }

    /// Recomputes the log posterior of `st` without using its caches.
    pub fn log_posterior(&self, st: &ModelState) -> f64 {
        self.state(
            st.shape.clone(),
            st.hyper.clone(),
            st.noise.clone(),
            st.blur,
            st.lambda,
        )
        .log_posterior()
    }
}

/// Summary of one visited state.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub iteration: usize,
    pub shape: Shape,
    pub lambda: f64,
    pub blur: BlurParams,
    pub log_post: f64,
    pub log_lik: f64,
    pub hyper: Option<NoiseHyper>,
    pub noise: Option<NoiseTree>,
}

impl PosteriorSample {
    pub fn from_state(iteration: usize, st: &ModelState, with_noise: bool) -> Self {
        PosteriorSample {
            iteration,
            shape: st.shape.clone(),
            lambda: st.lambda,
            blur: st.blur,
            log_post: st.log_posterior(),
            log_lik: st.log_lik,
            hyper: with_noise.then(|| st.hyper.clone()),
            noise: with_noise.then(|| st.noise.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MoveStats {
    pub proposed: [u64; 5],
    pub accepted: [u64; 5],
}

impl MoveStats {
    pub fn acceptance_rate(&self, kind: MoveKind) -> f64 {
        let i = kind.index();
        if self.proposed[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.proposed[i] as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub samples: Vec<PosteriorSample>,
    /// Most visited shape after burn-in, at its best visited state. Noise
    /// is not kept.
    pub map: PosteriorSample,
    /// Highest joint posterior density seen.
    pub best: PosteriorSample,
    /// Highest likelihood state seen.
    pub ml: PosteriorSample,
    /// Visit counts of every shape after burn-in, in order of first visit.
    pub visits: Vec<ShapeVisit>,
    pub stats: MoveStats,
}

fn initial_state(
    target: &Target<'_>,
    chain: &ChainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ModelState, InferenceError> {
    let model = target.model;
    let shape = match &chain.init.shape {
        Some(s) => s.clone(),
        None => sample_shape_prior(&model.prior, rng)?,
    };
    let (hyper, noise) = if target.noiseless {
        (NoiseHyper::default(), NoiseTree::default())
    } else {
        let h = sample_hyper(&shape, &model.noise, rng);
        let n = sample_noise(&shape, &h, &model.noise, rng)
            .map_err(|e| InferenceError::InvalidConfig(e.to_string()))?;
        (h, n)
    };
    let blur = chain
        .init
        .blur
        .unwrap_or_else(|| sample_blur(&model.prior, rng));
    let lambda = chain
        .init
        .lambda
        .unwrap_or_else(|| sample_lambda(&model.prior, rng));
    let st = target.state(shape, hyper, noise, blur, lambda);
    if st.log_posterior() == f64::NEG_INFINITY {
        return Err(InferenceError::ImpossibleStart);
    }
    Ok(st)
}

/// Runs one chain. The output depends only on the inputs and the seed.
pub fn run_chain(
    obs: &ObservedImage,
    model: &Model,
    chain: &ChainConfig,
) -> Result<ChainResult, InferenceError> {
    chain.validate()?;
    model.prior.validate()?;
    model
        .noise
        .validate()
        .map_err(|e| InferenceError::InvalidConfig(e.to_string()))?;
    model.render.validate()?;
    let target = Target::new(model, obs, chain);
    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let mut state = initial_state(&target, chain, &mut rng)?;
    let keep = !chain.noiseless;
    let mut best = PosteriorSample::from_state(0, &state, keep);
    let mut ml = best.clone();
    let mut visits = Visits::default();
    let mut samples = Vec::with_capacity(chain.iterations / chain.thin + 1);
    let mut stats = MoveStats::default();

    for it in 1..=chain.iterations {
        if let Some(p) = propose(&target, chain, &state, &mut rng) {
            let i = p.kind.index();
            stats.proposed[i] += 1;
            let a = acceptance(&state, &p.state, p.log_correction);
            let u: f64 = rand::Rng::random(&mut rng);
            if u < a {
                stats.accepted[i] += 1;
                state = p.state;
            }
        }
        if chain.verify_cache {
            let fresh = target.log_posterior(&state);
            let cached = state.log_posterior();
            if fresh.to_bits() != cached.to_bits() {
                return Err(InferenceError::CacheMismatch {
                    iteration: it,
                    cached,
                    fresh,
                });
            }
        }
        if state.log_posterior() > best.log_post {
            best = PosteriorSample::from_state(it, &state, keep);
        }
        if state.log_lik > ml.log_lik {
            ml = PosteriorSample::from_state(it, &state, keep);
        }
        if it > chain.burn_in {
            visits.record(it, &state);
            if it % chain.thin == 0 {
                samples.push(PosteriorSample::from_state(
                    it,
                    &state,
                    keep && chain.record_noise,
                ));
            }
        }
        if chain.progress_every > 0 && it % chain.progress_every == 0 {
            eprintln!(
                "[seed {}] iter {it}/{}: log_post {:.3} log_lik {:.3} levels {} best {:.3}",
                chain.seed,
                chain.iterations,
                state.log_posterior(),
                state.log_lik,
                state.shape.len(),
                best.log_post
            );
        }
    }
    if visits.shapes.is_empty() {
        visits.record(chain.iterations, &state);
    }
    let map = most_visited(std::slice::from_ref(&visits.shapes)).clone();
    Ok(ChainResult {
        samples,
        map,
        best,
        ml,
        visits: visits.shapes,
        stats,
    })
}

/// How often a chain sat on one shape, with the best state seen there.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeVisit {
    pub count: u64,
    /// Highest posterior state with this shape, without noise.
    pub best: PosteriorSample,
}

#[derive(Default)]
struct Visits {
    index: HashMap<String, usize>,
    shapes: Vec<ShapeVisit>,
    current: Option<(Shape, usize)>,
}

impl Visits {
    fn record(&mut self, it: usize, st: &ModelState) {
        let slot = match &self.current {
            Some((s, slot)) if *s == st.shape => *slot,
            _ => {
                let key = st.shape.to_string();
                let slot = match self.index.get(&key) {
                    Some(i) => *i,
                    None => {
                        self.shapes.push(ShapeVisit {
                            count: 0,
                            best: PosteriorSample::from_state(it, st, false),
                        });
                        self.index.insert(key, self.shapes.len() - 1);
                        self.shapes.len() - 1
                    }
                };
                self.current = Some((st.shape.clone(), slot));
                slot
            }
        };
        let v = &mut self.shapes[slot];
        v.count += 1;
        if st.log_posterior() > v.best.log_post {
            v.best = PosteriorSample::from_state(it, st, false);
        }
    }
}

/// Best state of the shape with the most visits summed over `tables`.
/// Ties go to the shape seen first.
pub fn most_visited(tables: &[Vec<ShapeVisit>]) -> &PosteriorSample {
    let mut order: Vec<String> = Vec::new();
    let mut pooled: HashMap<String, (u64, &PosteriorSample)> = HashMap::new();
    for v in tables.iter().flatten() {
        let key = v.best.shape.to_string();
        match pooled.get_mut(&key) {
            Some((c, b)) => {
                *c += v.count;
                if v.best.log_post > b.log_post {
                    *b = &v.best;
                }
            }
            None => {
                order.push(key.clone());
                pooled.insert(key, (v.count, &v.best));
            }
        }
    }
    let mut top: Option<(u64, &PosteriorSample)> = None;
    for key in &order {
        let (c, b) = pooled[key];
        if top.is_none_or(|(tc, _)| c > tc) {
            top = Some((c, b));
        }
    }
    top.expect("at least one visit").1
}

/// Runs `n_chains` chains on separate threads with seeds `seed + k`.
pub fn run_chains(
    obs: &ObservedImage,
    model: &Model,
    chain: &ChainConfig,
    n_chains: usize,
) -> Vec<Result<ChainResult, InferenceError>> {
    thread::scope(|scope| {
        let handles: Vec<_> = (0..n_chains)
            .map(|k| {
                let cfg = ChainConfig {
                    seed: chain.seed.wrapping_add(k as u64),
                    ..chain.clone()
                };
                scope.spawn(move || run_chain(obs, model, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse;
    use crate::likelihood::binarize;
    use crate::renderer::render;

    fn square_obs(model: &Model) -> ObservedImage {
        let s = parse("[(Trans Y,[0.5,0.5]); (Trans X,[-0.5,0.5]); (Rot 4,[0..3])]").unwrap();
        let cfg = RenderConfig {
            width: 32,
            height: 32,
            unit_scale: 12.0,
            ..model.render.clone()
        };
        binarize(&render(&s, None, BlurParams::NONE, &cfg).unwrap(), 0.5)
    }

    fn small_model() -> Model {
        Model {
            prior: PriorConfig {
                max_levels: 3,
                ..PriorConfig::default()
            },
            render: RenderConfig {
                width: 32,
                height: 32,
                ..RenderConfig::default()
            },
            ..Model::default()
        }
    }

    #[test]
    fn seed_determinism() {
        let model = small_model();
        let obs = square_obs(&model);
        let chain = ChainConfig {
            iterations: 300,
            seed: 7,
            thin: 5,
            ..ChainConfig::default()
        };
        let a = run_chain(&obs, &model, &chain).unwrap();
        let b = run_chain(&obs, &model, &chain).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn caches_stay_coherent() {
        let model = small_model();
        let obs = square_obs(&model);
        let chain = ChainConfig {
            iterations: 400,
            seed: 11,
            verify_cache: true,
            ..ChainConfig::default()
        };
        let r = run_chain(&obs, &model, &chain).unwrap();
        assert!(r.stats.proposed.iter().sum::<u64>() > 0);
    }

    #[test]
    fn map_and_ml_are_maxima_of_the_visited_states() {
        let model = small_model();
        let obs = square_obs(&model);
        let chain = ChainConfig {
            iterations: 300,
            seed: 3,
            thin: 1,
            ..ChainConfig::default()
        };
        let r = run_chain(&obs, &model, &chain).unwrap();
        for s in &r.samples {
            assert!(s.log_post <= r.best.log_post);
            assert!(s.log_lik <= r.ml.log_lik);
        }
    }

    #[test]
    fn parallel_chains_use_offset_seeds() {
        let model = small_model();
        let obs = square_obs(&model);
        let chain = ChainConfig {
            iterations: 50,
            seed: 20,
            ..ChainConfig::default()
        };
        let many = run_chains(&obs, &model, &chain, 2);
        let second = run_chain(&obs, &model, &ChainConfig { seed: 21, ..chain }).unwrap();
        assert_eq!(many[1].as_ref().unwrap(), &second);
    }

    #[test]
    fn rejects_bad_config() {
        let model = small_model();
        let obs = square_obs(&model);
        let chain = ChainConfig {
            thin: 0,
            ..ChainConfig::default()
        };
        assert!(matches!(
            run_chain(&obs, &model, &chain),
            Err(InferenceError::InvalidConfig(_))
        ));
    }
}
