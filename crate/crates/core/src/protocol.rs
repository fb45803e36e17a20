//! Cluster lifecycle: random-timer head election, RSSI-preferred
//! membership, merging of clusters whose heads meet, and departure after
//! repeated missed updates.
//!
//! "Can hear" is decided by true geometry (`distance <= comm_range`);
//! "which head to prefer" is decided by the RSSI-estimated distance, which
//! callers supply through a ranging closure so this module stays
//! independent of the channel model.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use rand::Rng;

use crate::geometry::Point;

pub type NodeId = usize;

/// Consecutive missed head updates after which a member leaves.
pub const MAX_MISSED_UPDATES: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterView {
    pub ch_id: NodeId,
    /// Always contains `ch_id`.
    pub members: BTreeSet<NodeId>,
    pub formation_time: u32,
}

impl ClusterView {
    pub fn singleton(ch_id: NodeId, t: u32) -> Self {
        Self {
            ch_id,
            members: BTreeSet::from([ch_id]),
            formation_time: t,
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MembershipState {
    pub node_id: NodeId,
    /// Head of the node's cluster, if any.
    pub cluster: Option<NodeId>,
    pub missed_updates: u8,
}

impl MembershipState {
    pub fn unassigned(node_id: NodeId) -> Self {
        Self {
            node_id,
            cluster: None,
            missed_updates: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Form,
    Merge,
    Leave,
    Join,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Form => "form",
            EventKind::Merge => "merge",
            EventKind::Leave => "leave",
            EventKind::Join => "join",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolEvent {
    pub t: u32,
    pub kind: EventKind,
    pub node_id: NodeId,
    pub ch_id: NodeId,
    pub cluster_size: usize,
}

/// Head election given explicit timer values: nodes fire in `(timer, id)`
/// order and a node becomes head unless it already hears a head.
pub fn elect_heads(nodes: &[(NodeId, Point)], timers: &[f64], comm_range: f64) -> Vec<NodeId> {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| {
        timers[a]
            .total_cmp(&timers[b])
            .then(nodes[a].0.cmp(&nodes[b].0))
    });
    let mut heads: Vec<usize> = Vec::new();
    for i in order {
        let hears_head = heads
            .iter()
            .any(|&h| nodes[h].1.distance(nodes[i].1) <= comm_range);
        if !hears_head {
            heads.push(i);
        }
    }
    heads.into_iter().map(|i| nodes[i].0).collect()
}

/// Among heads within range of `pos`, the one with the smallest
/// RSSI-estimated distance (ties to the lower id).
fn preferred_head<'a>(
    node: NodeId,
    pos: Point,
    heads: impl Iterator<Item = (NodeId, Point)> + 'a,
    comm_range: f64,
    ranging: &mut dyn FnMut(NodeId, NodeId) -> f64,
) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for (h, hp) in heads {
        if h == node || hp.distance(pos) > comm_range {
            continue;
        }
        let d = ranging(node, h);
        let better = match best {
            None => true,
            Some((bd, bh)) => d < bd || (d == bd && h < bh),
        };
        if better {
            best = Some((d, h));
        }
    }
    best.map(|(_, h)| h)
}

/// Forms clusters with explicit timers; see [`form_clusters`].
pub fn form_clusters_with_timers(
    nodes: &[(NodeId, Point)],
    timers: &[f64],
    comm_range: f64,
    ranging: &mut dyn FnMut(NodeId, NodeId) -> f64,
    t: u32,
) -> Vec<ClusterView> {
    let heads = elect_heads(nodes, timers, comm_range);
    let head_pos: BTreeMap<NodeId, Point> = nodes
        .iter()
        .filter(|(id, _)| heads.contains(id))
        .copied()
        .collect();
    let mut clusters: BTreeMap<NodeId, ClusterView> = heads
        .iter()
        .map(|&h| (h, ClusterView::singleton(h, t)))
        .collect();
    for &(id, pos) in nodes {
        if head_pos.contains_key(&id) {
            continue;
        }
        // Every non-head heard some head when its timer fired.
        let h = preferred_head(
            id,
            pos,
            head_pos.iter().map(|(&h, &p)| (h, p)),
            comm_range,
            ranging,
        )
        .expect("non-head node hears at least one head");
        clusters.get_mut(&h).unwrap().members.insert(id);
    }
    clusters.into_values().collect()
}

/// Random-timer cluster formation. Timers are uniform on `[0, 1)`, drawn in
/// the order nodes are given.
pub fn form_clusters<R: Rng + ?Sized>(
    nodes: &[(NodeId, Point)],
    comm_range: f64,
    ranging: &mut dyn FnMut(NodeId, NodeId) -> f64,
    rng: &mut R,
    t: u32,
) -> Vec<ClusterView> {
    let timers: Vec<f64> = nodes.iter().map(|_| rng.random::<f64>()).collect();
    form_clusters_with_timers(nodes, &timers, comm_range, ranging, t)
}

/// The bigger cluster absorbs the smaller; equal sizes go to the lower head id.
pub fn merge_clusters(a: &ClusterView, b: &ClusterView) -> ClusterView {
    let (winner, loser) = if a.size() > b.size() || (a.size() == b.size() && a.ch_id <= b.ch_id) {
        (a, b)
    } else {
        (b, a)
    };
    let mut merged = winner.clone();
    merged.members.extend(loser.members.iter().copied());
    merged
}

pub fn record_update_outcome(state: MembershipState, received: bool) -> MembershipState {
    if received {
        return MembershipState {
            missed_updates: 0,
            ..state
        };
    }
    let missed = state
        .missed_updates
        .saturating_add(1)
        .min(MAX_MISSED_UPDATES);
    if missed >= MAX_MISSED_UPDATES {
        MembershipState {
            cluster: None,
            missed_updates: 0,
            ..state
        }
    } else {
        MembershipState {
            missed_updates: missed,
            ..state
        }
    }
}

/// Head an orphan should join: the RSSI-nearest head in range, or `None`
/// when no head is in range and the node must start its own cluster.
pub fn reassign_orphan(
    node: NodeId,
    pos: Point,
    clusters: &[&ClusterView],
    positions: &[Point],
    comm_range: f64,
    ranging: &mut dyn FnMut(NodeId, NodeId) -> f64,
) -> Option<NodeId> {
    preferred_head(
        node,
        pos,
        clusters.iter().map(|c| (c.ch_id, positions[c.ch_id])),
        comm_range,
        ranging,
    )
}

/// All clusters of a population plus per-node membership.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    clusters: BTreeMap<NodeId, ClusterView>,
    membership: Vec<MembershipState>,
    events: Vec<ProtocolEvent>,
}

impl ClusterSet {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            clusters: BTreeMap::new(),
            membership: (0..n_nodes).map(MembershipState::unassigned).collect(),
            events: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> impl Iterator<Item = &ClusterView> {
        self.clusters.values()
    }

    pub fn cluster(&self, ch: NodeId) -> Option<&ClusterView> {
        self.clusters.get(&ch)
    }

    pub fn head_ids(&self) -> Vec<NodeId> {
        self.clusters.keys().copied().collect()
    }

    pub fn membership(&self, node: NodeId) -> MembershipState {
        self.membership[node]
    }

    pub fn events(&self) -> &[ProtocolEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<ProtocolEvent> {
        std::mem::take(&mut self.events)
    }

    /// Replaces all state with freshly formed clusters.
    pub fn install(&mut self, formed: Vec<ClusterView>, t: u32) {
        self.clusters.clear();
        for m in &mut self.membership {
            *m = MembershipState::unassigned(m.node_id);
        }
        for c in formed {
            for &m in &c.members {
                self.membership[m].cluster = Some(c.ch_id);
            }
            self.events.push(ProtocolEvent {
                t,
                kind: EventKind::Form,
                node_id: c.ch_id,
                ch_id: c.ch_id,
                cluster_size: c.size(),
            });
            self.clusters.insert(c.ch_id, c);
        }
    }

    /// Merges clusters while any two heads are within range. Larger
    /// clusters are visited first so chains resolve deterministically.
    pub fn merge_in_range(&mut self, positions: &[Point], comm_range: f64, t: u32) {
        loop {
            let mut heads: Vec<(usize, NodeId)> = self
                .clusters
                .values()
                .map(|c| (c.size(), c.ch_id))
                .collect();
            heads.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let pair = heads.iter().enumerate().find_map(|(i, &(_, a))| {
                heads[i + 1..]
                    .iter()
                    .find(|&&(_, b)| positions[a].distance(positions[b]) <= comm_range)
                    .map(|&(_, b)| (a, b))
            });
            let Some((a, b)) = pair else { break };
            let ca = self.clusters.remove(&a).unwrap();
            let cb = self.clusters.remove(&b).unwrap();
            let merged = merge_clusters(&ca, &cb);
            let absorbed = if merged.ch_id == a { b } else { a };
            for &m in &merged.members {
                self.membership[m].cluster = Some(merged.ch_id);
            }
            self.events.push(ProtocolEvent {
                t,
                kind: EventKind::Merge,
                node_id: absorbed,
                ch_id: merged.ch_id,
                cluster_size: merged.size(),
            });
            self.clusters.insert(merged.ch_id, merged);
        }
    }

    /// Applies an update outcome to a non-head member. Returns `true` when
    /// the node has left its cluster.
    pub fn record_outcome(&mut self, node: NodeId, received: bool, t: u32) -> bool {
        let before = self.membership[node];
        let after = record_update_outcome(before, received);
        self.membership[node] = after;
        match (before.cluster, after.cluster) {
            (Some(ch), None) => {
                let cluster = self
                    .clusters
                    .get_mut(&ch)
                    .expect("member of a live cluster");
                cluster.members.remove(&node);
                self.events.push(ProtocolEvent {
                    t,
                    kind: EventKind::Leave,
                    node_id: node,
                    ch_id: ch,
                    cluster_size: cluster.size(),
                });
                true
            }
            _ => false,
        }
    }

    /// Places an unassigned node: joins the RSSI-nearest head in range or
    /// becomes a singleton head. Returns the head it ended up with.
    pub fn place_orphan(
        &mut self,
        node: NodeId,
        positions: &[Point],
        comm_range: f64,
        ranging: &mut dyn FnMut(NodeId, NodeId) -> f64,
        t: u32,
    ) -> NodeId {
        debug_assert!(self.membership[node].cluster.is_none());
        let views: Vec<&ClusterView> = self.clusters.values().collect();
        let target = reassign_orphan(
            node,
            positions[node],
            &views,
            positions,
            comm_range,
            ranging,
        );
        let (ch, kind) = match target {
            Some(ch) => {
                self.clusters.get_mut(&ch).unwrap().members.insert(node);
                (ch, EventKind::Join)
            }
            None => {
                self.clusters.insert(node, ClusterView::singleton(node, t));
                (node, EventKind::Form)
            }
        };
        self.membership[node] = MembershipState {
            node_id: node,
            cluster: Some(ch),
            missed_updates: 0,
        };
        self.events.push(ProtocolEvent {
            t,
            kind,
            node_id: node,
            ch_id: ch,
            cluster_size: self.clusters[&ch].size(),
        });
        ch
    }

    /// Partition and head-containment check.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![false; self.membership.len()];
        for (ch, c) in &self.clusters {
            if *ch != c.ch_id || !c.members.contains(ch) {
                return Err(format!("cluster {ch} does not contain its head"));
            }
            for &m in &c.members {
                if m >= seen.len() {
                    return Err(format!("unknown node {m} in cluster {ch}"));
                }
                if std::mem::replace(&mut seen[m], true) {
                    return Err(format!("node {m} belongs to more than one cluster"));
                }
                if self.membership[m].cluster != Some(*ch) {
                    return Err(format!(
                        "membership of node {m} disagrees with cluster {ch}"
                    ));
                }
            }
        }
        if let Some(m) = seen.iter().position(|s| !s) {
            return Err(format!("node {m} belongs to no cluster"));
        }
        Ok(())
    }
}

/// Writes `t,event,node_id,ch_id,cluster_size`.
pub fn write_events_csv<W: Write>(mut out: W, events: &[ProtocolEvent]) -> io::Result<()> {
    writeln!(out, "t,event,node_id,ch_id,cluster_size")?;
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.t,
            e.kind.as_str(),
            e.node_id,
            e.ch_id,
            e.cluster_size
        )?;
    }
    Ok(())
}
