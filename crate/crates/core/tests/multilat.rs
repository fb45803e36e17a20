mod common;

use grouptrack::channel::PathLossParams;
use grouptrack::geometry::Point;
use grouptrack::multilat::{
    bias_coefficient, build_system, estimate_position, regularize, var_distance_squared,
    var_k_tilde, AnchorObservation, MultilatError, Variant,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const ETA: f64 = 3.567;

fn exact(anchors: &[Point], blind: Point) -> Vec<AnchorObservation> {
    anchors
        .iter()
        .map(|&p| AnchorObservation {
            pos_tilde: p,
            d_tilde: p.distance(blind),
            sigma_a: 0.0,
            sigma_p: 0.0,
        })
        .collect()
}

/// Rejects nearly collinear layouts: the smaller eigenvalue of the anchor
/// scatter must be a fair share of the larger one.
fn well_spread(anchors: &[Point]) -> bool {
    let n = anchors.len() as f64;
    let c = anchors.iter().fold(Point::ORIGIN, |s, &p| s + p) / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in anchors {
        let q = *p - c;
        sxx += q.x * q.x;
        syy += q.y * q.y;
        sxy += q.x * q.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    tr > 0.0 && det / (tr * tr) > 0.01
}

fn layout() -> impl Strategy<Value = (Vec<Point>, Point)> {
    (
        prop::collection::vec((-300.0f64..300.0, -300.0f64..300.0), 3..9),
        (-200.0f64..200.0, -200.0f64..200.0),
        prop_oneof![
            Just((0.0, 0.0)),
            Just((25_000.0, 24_000.0)),
            (-5e3f64..5e3, -5e3f64..5e3)
        ],
    )
        .prop_map(|(pts, b, (ox, oy))| {
            let o = Point::new(ox, oy);
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| o + Point::new(x, y)).collect();
            (pts, o + Point::new(b.0, b.1))
        })
        .prop_filter("anchors must not be collinear", |(a, _)| well_spread(a))
}

fn close(w: Point, truth: Point, anchors: &[Point]) -> bool {
    let scale = anchors
        .iter()
        .map(|a| a.distance(truth))
        .fold(truth.norm(), f64::max);
    w.distance(truth) <= 1e-9 * scale
}

proptest! {
    #![proptest_config(common::config(256))]

    #[test]
    fn noiseless_systems_recover_truth((anchors, truth) in layout()) {
        let params = PathLossParams::default();
        for v in [Variant::Wlsr, Variant::Wlsrp] {
            let w = estimate_position(&exact(&anchors, truth), &params, v).unwrap().w_hat;
            prop_assert!(close(w, truth, &anchors), "{v:?}: {w:?} vs {truth:?}");
        }
    }

    #[test]
    fn reference_anchor_does_not_matter((anchors, truth) in layout(), shift in 0usize..8) {
        let params = PathLossParams::default();
        let mut rotated = anchors.clone();
        rotated.rotate_left(shift % anchors.len());
        for v in [Variant::Wlsr, Variant::Wlsrp] {
            let a = estimate_position(&exact(&anchors, truth), &params, v).unwrap().w_hat;
            let b = estimate_position(&exact(&rotated, truth), &params, v).unwrap().w_hat;
            prop_assert!(close(b, a, &anchors), "{v:?}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn wlsrp_reduces_to_wlsr_without_noise((anchors, truth) in layout()) {
        let params = PathLossParams::default();
        let obs = exact(&anchors, truth);
        let r = build_system(&obs, &params, Variant::Wlsr).unwrap();
        let p = build_system(&obs, &params, Variant::Wlsrp).unwrap();
        prop_assert!(p.c.iter().all(|&c| c == 0.0));
        prop_assert_eq!(regularize(&r.s), regularize(&p.s));
        prop_assert_eq!(
            estimate_position(&obs, &params, Variant::Wlsr).unwrap().w_hat,
            estimate_position(&obs, &params, Variant::Wlsrp).unwrap().w_hat
        );
    }

    #[test]
    fn covariance_is_symmetric_positive_definite(
        (anchors, truth) in layout(),
        sigma_p in 0.0f64..4.0,
        sigma_a in 0.0f64..12.0,
        scale in prop::collection::vec(0.5f64..2.0, 8),
    ) {
        let params = PathLossParams::default();
        let obs: Vec<AnchorObservation> = anchors
            .iter()
            .zip(&scale)
            .map(|(&p, s)| AnchorObservation {
                pos_tilde: p,
                d_tilde: (p.distance(truth) * s).max(0.1),
                sigma_a,
                sigma_p,
            })
            .collect();
        for v in [Variant::Wlsr, Variant::Wlsrp] {
            let s = regularize(&build_system(&obs, &params, v).unwrap().s);
            prop_assert_eq!(s.clone(), s.transpose());
            prop_assert!(s.cholesky().is_some(), "{v:?} not positive definite");
        }
    }
}

#[test]
fn two_anchors_are_not_enough() {
    let obs = exact(
        &[Point::new(0.0, 0.0), Point::new(10.0, 0.0)],
        Point::new(3.0, 4.0),
    );
    assert!(matches!(
        estimate_position(&obs, &PathLossParams::default(), Variant::Wlsr),
        Err(MultilatError::InsufficientAnchors(2))
    ));
}

#[test]
fn circle_around_truth_is_exact() {
    let truth = Point::new(12.0, -7.0);
    let anchors: Vec<Point> = (0..6)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / 6.0;
            truth + Point::new(100.0 * a.cos(), 100.0 * a.sin())
        })
        .collect();
    let w = estimate_position(
        &exact(&anchors, truth),
        &PathLossParams::default(),
        Variant::Wlsr,
    )
    .unwrap()
    .w_hat;
    assert!(w.distance(truth) < 1e-9);
}

fn variance(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

#[test]
fn squared_distance_variance_matches_monte_carlo() {
    let beta = std::f64::consts::LN_10 / (10.0 * ETA);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (d, sigma) in [(10.0, 3.0), (10.0, 1.0), (73.0, 3.0)] {
        let mc = variance((0..1_000_000).map(|_| {
            let n: f64 = rng.sample(StandardNormal);
            d * d * (2.0 * beta * sigma * n).exp()
        }));
        let closed = var_distance_squared(d, sigma, &PathLossParams::default());
        assert!(
            (closed / mc - 1.0).abs() < 0.02,
            "d={d} sigma={sigma}: {closed} vs {mc}"
        );
    }
}

#[test]
fn anchor_norm_variance_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (p, sigma) in [
        (Point::new(100.0, 0.0), 5.0),
        (Point::new(-30.0, 45.0), 10.0),
        (Point::new(3.0, 4.0), 1.0),
    ] {
        let mc = variance((0..1_000_000).map(|_| {
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            (p.x + sigma * nx).powi(2) + (p.y + sigma * ny).powi(2)
        }));
        let closed = var_k_tilde(p, sigma);
        assert!(
            (closed / mc - 1.0).abs() < 0.02,
            "{p:?} sigma={sigma}: {closed} vs {mc}"
        );
    }
}

/// Relative bias of `d~^2` measured by Monte-Carlo, against the printed
/// second-order coefficient and the exact log-normal one.
#[test]
fn squared_distance_bias_coefficients() {
    let params = PathLossParams::default();
    let beta = std::f64::consts::LN_10 / (10.0 * ETA);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 4_000_000;
    for sigma in [1.0, 3.0] {
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (2.0 * beta * sigma * z).exp()
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let se = (variance(draws.iter().copied()) / n as f64).sqrt();
        let measured = mean - 1.0;
        let printed = bias_coefficient(sigma, &params);
        let exact = (2.0 * (beta * sigma).powi(2)).exp_m1();
        println!(
            "sigma_p={sigma}: measured {measured:.6} (se {se:.1e}), printed {printed:.6} (residual {:+.2e}), exact {exact:.6} (residual {:+.2e})",
            measured - printed,
            measured - exact
        );
        assert!((measured - exact).abs() < 4.0 * se);
        assert!((measured - printed).abs() < 4.0 * se + (exact - printed).abs());
        // The two coefficients agree to third order in u^2 sigma^2.
        let g = 2.0 * (beta * sigma).powi(2);
        assert!((exact - printed).abs() <= g.powi(3) / 5.0);
    }
}
