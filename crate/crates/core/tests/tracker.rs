mod common;

use grouptrack::channel::{NoiseProfile, PathLossParams};
use grouptrack::energy::EnergyParams;
use grouptrack::geometry::Point;
use grouptrack::multilat::{EstimateMethod, PositionEstimate};
use grouptrack::tracker::{filter_estimate, select_mode, Algorithm, Mode, Tracker, TrackerConfig};
use proptest::prelude::*;

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(Algorithm::ALL.to_vec())
}

/// Random walkers in a 300 m square, one position list per instant.
fn world(max_nodes: usize, steps: usize) -> impl Strategy<Value = Vec<Vec<Point>>> {
    (1..max_nodes).prop_flat_map(move |n| {
        (
            prop::collection::vec((0.0f64..300.0, 0.0f64..300.0), n),
            prop::collection::vec(
                prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0), n),
                steps,
            ),
        )
            .prop_map(|(start, moves)| {
                let mut pos: Vec<Point> =
                    start.into_iter().map(|(x, y)| Point::new(x, y)).collect();
                let mut out = vec![pos.clone()];
                for m in moves {
                    for (p, d) in pos.iter_mut().zip(m) {
                        *p += Point::new(d.0, d.1);
                    }
                    out.push(pos.clone());
                }
                out
            })
    })
}

fn run(
    algorithm: Algorithm,
    frames: &[Vec<Point>],
    noise: NoiseProfile,
    seed: u64,
    threshold: usize,
) -> grouptrack::tracker::TrackerOutput {
    let cfg = TrackerConfig {
        algorithm,
        cluster_threshold: threshold,
        n_anchors: threshold.clamp(3, 6),
        ..TrackerConfig::default()
    };
    let profiles = vec![noise; frames[0].len()];
    let mut tracker = Tracker::new(
        cfg,
        PathLossParams::default(),
        EnergyParams::default(),
        &profiles,
        seed,
    )
    .with_audit(true);
    for (k, truth) in frames.iter().enumerate() {
        tracker.step(k as u32 * cfg.sampling_interval, truth);
    }
    tracker.finish()
}

proptest! {
    #![proptest_config(common::config(64))]

    #[test]
    fn modes_partition_cluster_sizes(cs in 1usize..200, ct in 1usize..50) {
        let mode = select_mode(cs, ct);
        let expected = if cs == 1 {
            Mode::Standalone
        } else if cs > ct {
            Mode::Multilateration
        } else {
            Mode::ClusterBased
        };
        prop_assert_eq!(mode, expected);
    }

    #[test]
    fn accepted_estimates_stay_near_anchors(
        est in (-600.0f64..600.0, -600.0f64..600.0),
        anchors in prop::collection::vec(((-200.0f64..200.0, -200.0f64..200.0), 0.0f64..300.0), 1..8),
    ) {
        let anchors: Vec<(Point, f64)> = anchors.into_iter().map(|((x, y), d)| (Point::new(x, y), d)).collect();
        let input = PositionEstimate { w_hat: Point::new(est.0, est.1), method: EstimateMethod::Wlsr };
        let out = filter_estimate(input, &anchors, 100.0);
        if out == input {
            prop_assert!(anchors.iter().all(|(p, _)| p.distance(out.w_hat) <= 200.0));
        } else {
            let nearest = anchors.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
            prop_assert_eq!(out, PositionEstimate { w_hat: nearest, method: EstimateMethod::NearestAnchor });
        }
    }

    #[test]
    fn audited_runs_keep_protocol_invariants(
        frames in world(30, 8),
        alg in algorithm(),
        threshold in 2usize..8,
        sigma_p in 0.0f64..3.0,
        sigma_a in 0.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let out = run(alg, &frames, NoiseProfile { sigma_a, sigma_p }, seed, threshold);
        prop_assert!(out.violations.is_empty(), "{:?}", out.violations);
        // Every node has an estimate at every instant.
        let n = frames[0].len();
        prop_assert_eq!(out.records.len(), n * frames.len());
        for (k, chunk) in out.records.chunks(n).enumerate() {
            let mut ids: Vec<usize> = chunk.iter().map(|r| r.node_id).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
            prop_assert!(chunk.iter().all(|r| r.t == chunk[0].t && r.position.is_finite()), "instant {}", k);
        }
    }

    #[test]
    fn runs_are_reproducible(frames in world(20, 5), alg in algorithm(), seed in any::<u64>()) {
        let noise = NoiseProfile { sigma_a: 5.0, sigma_p: 3.0 };
        prop_assert_eq!(run(alg, &frames, noise, seed, 4), run(alg, &frames, noise, seed, 4));
    }

    #[test]
    fn individual_tracking_spends_one_fix_per_instant(frames in world(20, 6), seed in any::<u64>()) {
        let out = run(Algorithm::Individual, &frames, NoiseProfile { sigma_a: 0.0, sigma_p: 0.0 }, seed, 10);
        let steps = frames.len() as u64;
        for l in &out.ledgers {
            prop_assert_eq!((l.gps_fixes, l.tx, l.rx), (steps, 0, 0));
        }
        for r in &out.records {
            prop_assert_eq!(r.position, frames[(r.t / 10) as usize][r.node_id]);
        }
    }
}

#[test]
fn noiseless_group_is_tracked_exactly() {
    // Twelve nodes within range of each other: one cluster above the
    // threshold, so members are located by multilateration.
    let frames: Vec<Vec<Point>> = (0..4)
        .map(|k| {
            (0..12)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / 12.0;
                    Point::new(40.0 * a.cos() + 3.0 * k as f64, 40.0 * a.sin())
                })
                .collect()
        })
        .collect();
    for (alg, method) in [
        (Algorithm::MultiModeWlsr, EstimateMethod::Wlsr),
        (Algorithm::MultiModeWlsrp, EstimateMethod::Wlsrp),
    ] {
        let out = run(
            alg,
            &frames,
            NoiseProfile {
                sigma_a: 0.0,
                sigma_p: 0.0,
            },
            9,
            10,
        );
        assert!(out.violations.is_empty(), "{:?}", out.violations);
        let later: Vec<_> = out.records.iter().filter(|r| r.t > 0).collect();
        assert!(later.iter().any(|r| r.method == method));
        for r in later {
            let truth = frames[(r.t / 10) as usize][r.node_id];
            assert!(
                r.position.distance(truth) < 1e-9 * 100.0,
                "{alg:?} node {} off by {}",
                r.node_id,
                r.position.distance(truth)
            );
        }
    }
}
