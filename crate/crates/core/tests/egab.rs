use hypergrl::egab::{EgabConfig, EgabState};
use hypergrl::objective::sigmoid;
use proptest::prelude::*;

fn state(alpha_min: f64, alpha_max: f64) -> EgabState {
    let cfg = EgabConfig {
        alpha_min,
        alpha_max,
        ..EgabConfig::default()
    };
    EgabState::new(&cfg, 64).unwrap()
}

#[test]
fn target_alpha_examples() {
    let s = state(0.0, 2.0);
    assert_eq!(s.target_alpha(1.5).unwrap(), 1.0);
    let unit = state(0.0, 1.0);
    let hat = unit.target_alpha(0.0).unwrap();
    assert!((hat - sigmoid(5.0)).abs() < 1e-15);
    assert!((hat - 0.9933).abs() < 1e-4);
    assert!(s.target_alpha(1e6).unwrap() < 1e-12);
}

#[test]
fn ema_examples() {
    let mut s = state(0.0, 2.0);
    s.alpha = 1.0;
    s.ema_update(0.0);
    assert!((s.alpha - 0.9).abs() < 1e-15);
    s.ema_update(0.9);
    assert!((s.alpha - 0.9).abs() < 1e-15);
}

#[test]
fn ema_converges_geometrically() {
    let mut s = state(0.0, 2.0);
    s.alpha = 1.7;
    let hat = 0.3;
    for t in 1..=50 {
        s.ema_update(hat);
        let expected = 0.9f64.powi(t) * (1.7 - hat);
        assert!(((s.alpha - hat) - expected).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn epoch_update_directions() {
    let mut s = state(0.0, 2.0);
    let step = s.epoch_update(1.0).unwrap();
    assert!(step.h_proxy.abs() < 2e-6);
    assert!(step.alpha_hat.unwrap() > 1.9);
    assert!(s.alpha > 1.0);

    let mut at_target = state(0.0, 2.0);
    at_target.alpha = 0.2;
    let c = (-1.5f64).exp() - 1e-6;
    let step = at_target.epoch_update(c).unwrap();
    assert!((step.h_proxy - 1.5).abs() < 1e-12);
    assert!((step.alpha_hat.unwrap() - 1.0).abs() < 1e-9);
    assert!(at_target.alpha > 0.2);
}

#[test]
fn direction_relative_to_the_target_collapse() {
    let s = state(0.0, 2.0);
    let boundary = (-1.5f64).exp();
    let above = s.target_alpha(-(boundary + 0.05 + 1e-6).ln()).unwrap();
    let below = s.target_alpha(-(boundary - 0.05 + 1e-6).ln()).unwrap();
    assert!(above > s.midpoint() && below < s.midpoint());
}

proptest! {
    #[test]
    fn bounded_and_damped(alpha0 in 0.0f64..3.0, cs in prop::collection::vec(0.0f64..1.0, 1..60)) {
        let cfg = EgabConfig { alpha0, ..EgabConfig::default() };
        let mut s = EgabState::new(&cfg, 32).unwrap();
        let lo = alpha0.min(cfg.alpha_min);
        let hi = alpha0.max(cfg.alpha_max);
        for c in cs {
            let before = s.alpha;
            s.epoch_update(c).unwrap();
            prop_assert!(s.alpha >= lo - 1e-12 && s.alpha <= hi + 1e-12);
            if (cfg.alpha_min..=cfg.alpha_max).contains(&before) {
                prop_assert!((s.alpha - before).abs() <= cfg.gamma * (cfg.alpha_max - cfg.alpha_min) + 1e-12);
            }
        }
    }

    #[test]
    fn target_alpha_strictly_decreasing(h1 in -1.0f64..5.0, dh in 1e-3f64..2.0) {
        let s = state(0.0, 2.0);
        prop_assert!(s.target_alpha(h1).unwrap() > s.target_alpha(h1 + dh).unwrap());
    }

    #[test]
    fn disabled_state_is_constant(cs in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let cfg = EgabConfig { enabled: false, alpha0: 0.5, ..EgabConfig::default() };
        let mut s = EgabState::new(&cfg, 8).unwrap();
        for c in cs {
            prop_assert_eq!(s.epoch_update(c).unwrap().alpha, 0.5);
        }
    }
}
