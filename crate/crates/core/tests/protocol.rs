mod common;

use std::collections::BTreeSet;

use grouptrack::geometry::Point;
use grouptrack::protocol::{form_clusters, merge_clusters, ClusterSet, ClusterView, NodeId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RANGE: f64 = 100.0;

fn points(max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0f64..400.0, 0.0f64..400.0), 1..max)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
}

fn form(pts: &[Point], seed: u64) -> Vec<ClusterView> {
    let nodes: Vec<(NodeId, Point)> = pts.iter().copied().enumerate().collect();
    let mut ranging = |a: NodeId, b: NodeId| pts[a].distance(pts[b]);
    form_clusters(
        &nodes,
        RANGE,
        &mut ranging,
        &mut ChaCha8Rng::seed_from_u64(seed),
        0,
    )
}

fn cluster(ch: NodeId, others: impl IntoIterator<Item = NodeId>) -> ClusterView {
    let mut c = ClusterView::singleton(ch, 0);
    c.members.extend(others);
    c
}

proptest! {
    #![proptest_config(common::config(128))]

    #[test]
    fn formation_partitions_nodes(pts in points(40), seed in any::<u64>()) {
        let clusters = form(&pts, seed);
        let mut seen = BTreeSet::new();
        for c in &clusters {
            prop_assert!(c.members.contains(&c.ch_id));
            for &m in &c.members {
                prop_assert!(seen.insert(m), "node {} in two clusters", m);
                prop_assert!(pts[m].distance(pts[c.ch_id]) <= RANGE);
            }
        }
        prop_assert_eq!(seen.len(), pts.len());
        // No two heads hear each other.
        for a in &clusters {
            for b in &clusters {
                if a.ch_id < b.ch_id {
                    prop_assert!(pts[a.ch_id].distance(pts[b.ch_id]) > RANGE);
                }
            }
        }
    }

    #[test]
    fn formation_is_reproducible(pts in points(30), seed in any::<u64>()) {
        prop_assert_eq!(form(&pts, seed), form(&pts, seed));
    }

    #[test]
    fn merge_keeps_every_member(split in 1usize..20, extra in 1usize..20, swap in any::<bool>()) {
        let a = cluster(0, 1..split);
        let b = cluster(split, split + 1..split + extra);
        let (x, y) = if swap { (&b, &a) } else { (&a, &b) };
        let m = merge_clusters(x, y);
        prop_assert_eq!(m.size(), a.size() + b.size());
        let winner = if a.size() >= b.size() { 0 } else { split };
        prop_assert_eq!(m.ch_id, winner);
        prop_assert_eq!(m, merge_clusters(y, x));
    }

    #[test]
    fn lifecycle_keeps_partition(
        pts in points(30),
        moves in prop::collection::vec(prop::collection::vec((-40.0f64..40.0, -40.0f64..40.0), 30), 1..8),
        outcomes in prop::collection::vec(prop::collection::vec(any::<bool>(), 30), 8),
        seed in any::<u64>(),
    ) {
        let n = pts.len();
        let mut pos = pts.clone();
        let mut set = ClusterSet::new(n);
        set.install(form(&pts, seed), 0);
        prop_assert!(set.check_invariants().is_ok());
        for (round, step) in moves.iter().enumerate() {
            let t = round as u32 + 1;
            for (p, d) in pos.iter_mut().zip(step) {
                *p += Point::new(d.0, d.1);
            }
            set.merge_in_range(&pos, RANGE, t);
            prop_assert!(set.check_invariants().is_ok());
            for (node, &received) in outcomes[round].iter().enumerate().take(n) {
                if set.membership(node).cluster != Some(node) {
                    set.record_outcome(node, received, t);
                }
            }
            let snapshot = pos.clone();
            let mut ranging = |a: NodeId, b: NodeId| snapshot[a].distance(snapshot[b]);
            for node in 0..n {
                if set.membership(node).cluster.is_none() {
                    set.place_orphan(node, &pos, RANGE, &mut ranging, t);
                }
            }
            if let Err(e) = set.check_invariants() {
                return Err(TestCaseError::fail(e));
            }
        }
    }
}
