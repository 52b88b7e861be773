//! Invariants checked over shapes drawn from the prior.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wreathe::eval::{equivalent, recoverability, strip_occupancy};
use wreathe::grammar::{canonicalize, parse, Shape};
use wreathe::likelihood::{binarize, log_likelihood};
use wreathe::priors::{log_prior_shape, sample_blur, sample_shape_prior, BlurParams, PriorConfig};
use wreathe::renderer::{render, RenderConfig};
use wreathe::wreath_process::{log_density_noise, sample_hyper, sample_noise, NoiseConfig};

fn prior_shape(seed: u64) -> Shape {
    let cfg = PriorConfig {
        max_levels: 4,
        ..PriorConfig::default()
    };
    sample_shape_prior(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn small_canvas() -> RenderConfig {
    RenderConfig {
        width: 48,
        height: 48,
        unit_scale: 6.0,
        ..RenderConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prior_draws_have_finite_prior(seed in any::<u64>()) {
        let s = prior_shape(seed);
        let cfg = PriorConfig { max_levels: 4, ..PriorConfig::default() };
        prop_assert!(log_prior_shape(&s, &cfg).is_finite());
    }

    #[test]
    fn text_form_reparses(seed in any::<u64>()) {
        let s = prior_shape(seed);
        prop_assert_eq!(parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn canonicalize_is_idempotent(seed in any::<u64>()) {
        let c = canonicalize(&prior_shape(seed));
        prop_assert_eq!(canonicalize(&c), c);
    }

    #[test]
    fn noisy_renders_stay_in_unit_range(seed in any::<u64>()) {
        let s = prior_shape(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let ncfg = NoiseConfig::default();
        let h = sample_hyper(&s, &ncfg, &mut rng);
        let n = sample_noise(&s, &h, &ncfg, &mut rng).unwrap();
        prop_assert!(log_density_noise(&s, &h, &n, &ncfg).unwrap().is_finite());
        let blur = sample_blur(&PriorConfig::default(), &mut rng);
        let img = render(&s, Some(&n), blur, &small_canvas()).unwrap();
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let ll = log_likelihood(&binarize(&img, 0.5), &img, 1e-4).unwrap();
        prop_assert!(ll <= 0.0);
    }

    #[test]
    fn equivalence_is_reflexive_and_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let (sa, sb) = (prior_shape(a), prior_shape(b));
        prop_assert!(equivalent(&sa, &sa));
        prop_assert_eq!(equivalent(&sa, &sb), equivalent(&sb, &sa));
    }

    #[test]
    fn full_recovery_implies_recovery_up_to_occupancy(a in any::<u64>(), b in any::<u64>()) {
        let (sa, sb) = (prior_shape(a), prior_shape(b));
        let r = recoverability(&sa, &sb);
        prop_assert!(!r.full_recoverability || r.up_to_occupancy);
        prop_assert!((0.0..=1.0).contains(&r.render_iou));
    }

    #[test]
    fn stripping_occupancy_is_idempotent(seed in any::<u64>()) {
        let s = strip_occupancy(&prior_shape(seed));
        prop_assert_eq!(strip_occupancy(&s), s);
    }
}

#[test]
fn self_recovery_is_perfect_for_inked_shapes() {
    let cfg = RenderConfig::default();
    let mut checked = 0;
    for seed in 0..100 {
        let s = prior_shape(seed);
        let img = render(&s, None, BlurParams::NONE, &cfg).unwrap();
        if !img.data().iter().any(|v| *v >= 0.5) {
            continue;
        }
        let r = recoverability(&s, &s);
        assert!(r.full_recoverability && r.up_to_occupancy, "{s}");
        assert_eq!(r.render_iou, 1.0, "{s}");
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} inked shapes");
}
