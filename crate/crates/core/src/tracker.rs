//! Position-update engine.
//!
//! At every sampling instant each cluster head counts the members it can
//! still reach and picks a mode:
//!
//! * more than `C_t` members: a random subset of `A` members fix via GPS and
//!   broadcast; everyone else multilaterates from RSSI ranges to the
//!   anchors it hears,
//! * 2..=`C_t` members: one energized member fixes via GPS and everyone
//!   adopts that fix,
//! * alone: the node uses its own GPS.
//!
//! Members that miss three updates leave, take a standalone fix and look
//! for a new cluster. The CBT and Individual baselines share the same
//! engine so every variant sees identical worlds and noise streams.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{sample_distance, sample_gps_fix, NoiseProfile, PathLossParams};
use crate::energy::{gps_energy, Activity, EnergyLedger, EnergyParams};
use crate::geometry::Point;
use crate::multilat::{
    estimate_position, AnchorObservation, EstimateMethod, PositionEstimate, Variant,
};
use crate::protocol::{form_clusters, ClusterSet, NodeId, ProtocolEvent};
use crate::seeds::{stream_rng, Stream};

/// Tracking algorithm under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    MultiModeWlsr,
    MultiModeWlsrp,
    Cbt,
    Individual,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::MultiModeWlsr,
        Algorithm::MultiModeWlsrp,
        Algorithm::Cbt,
        Algorithm::Individual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::MultiModeWlsr => "wlsr",
            Algorithm::MultiModeWlsrp => "wlsrp",
            Algorithm::Cbt => "cbt",
            Algorithm::Individual => "individual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    fn variant(self) -> Variant {
        match self {
            Algorithm::MultiModeWlsrp => Variant::Wlsrp,
            _ => Variant::Wlsr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// `C_t`: clusters larger than this multilaterate.
    pub cluster_threshold: usize,
    /// `A`: anchors drawn per multilateration instant.
    pub n_anchors: usize,
    /// Seconds between sampling instants.
    pub sampling_interval: u32,
    pub comm_range: f64,
    pub algorithm: Algorithm,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            cluster_threshold: 10,
            n_anchors: 6,
            sampling_interval: 10,
            comm_range: 100.0,
            algorithm: Algorithm::MultiModeWlsrp,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.cluster_threshold < 1 {
            return Err("cluster_threshold must be at least 1");
        }
        if self.n_anchors < 3 || self.n_anchors > self.cluster_threshold {
            return Err("n_anchors must lie in 3..=cluster_threshold");
        }
        if self.sampling_interval < 1 {
            return Err("sampling interval must be at least 1 s");
        }
        if !(self.comm_range > 0.0 && self.comm_range.is_finite()) {
            return Err("comm_range must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Multilateration,
    ClusterBased,
    Standalone,
}

pub fn select_mode(cluster_size: usize, threshold: usize) -> Mode {
    if cluster_size > threshold {
        Mode::Multilateration
    } else if cluster_size > 1 {
        Mode::ClusterBased
    } else {
        Mode::Standalone
    }
}

/// A position estimate stamped with when it was produced and how old the
/// underlying position information is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedEstimate {
    pub t: u32,
    pub estimate: PositionEstimate,
    /// Time of the GPS fix the estimate ultimately derives from.
    pub info_time: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrackState {
    pub node_id: NodeId,
    pub last: Option<TimedEstimate>,
    pub noise: NoiseProfile,
}

/// One row of the per-instant estimate log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub t: u32,
    pub node_id: NodeId,
    pub method: EstimateMethod,
    pub position: Point,
}

/// Replaces an estimate lying more than twice the communication range from
/// any anchor with the position of the anchor that has the smallest
/// RSSI-based distance. `anchors` holds `(position, rssi_distance)` pairs.
pub fn filter_estimate(
    estimate: PositionEstimate,
    anchors: &[(Point, f64)],
    comm_range: f64,
) -> PositionEstimate {
    let limit = 2.0 * comm_range;
    if anchors
        .iter()
        .all(|(p, _)| p.distance(estimate.w_hat) <= limit)
    {
        return estimate;
    }
    nearest_anchor(anchors).unwrap_or(estimate)
}

fn nearest_anchor(anchors: &[(Point, f64)]) -> Option<PositionEstimate> {
    anchors
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(p, _)| PositionEstimate {
            w_hat: p,
            method: EstimateMethod::NearestAnchor,
        })
}

/// Per-cluster bookkeeping recorded when auditing is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAudit {
    pub ch_id: NodeId,
    pub census: usize,
    pub mode: Mode,
    pub gps_fixes: u32,
}

/// The simulation state machine, advanced once per sampling instant.
pub struct Tracker {
    config: TrackerConfig,
    channel: PathLossParams,
    energy: EnergyParams,
    states: Vec<NodeTrackState>,
    ledgers: Vec<EnergyLedger>,
    clusters: ClusterSet,
    rng_channel: ChaCha8Rng,
    rng_protocol: ChaCha8Rng,
    rng_tracker: ChaCha8Rng,
    cbt_cursor: BTreeMap<NodeId, usize>,
    fixes_now: Vec<u32>,
    updated_now: Vec<bool>,
    records: Vec<EstimateRecord>,
    audit: bool,
    violations: Vec<String>,
}

impl Tracker {
    pub fn new(
        config: TrackerConfig,
        channel: PathLossParams,
        energy: EnergyParams,
        noise: &[NoiseProfile],
        seed: u64,
    ) -> Self {
        let n = noise.len();
        Self {
            config,
            channel,
            energy,
            states: noise
                .iter()
                .enumerate()
                .map(|(i, &noise)| NodeTrackState {
                    node_id: i,
                    last: None,
                    noise,
                })
                .collect(),
            ledgers: (0..n).map(EnergyLedger::new).collect(),
            clusters: ClusterSet::new(n),
            rng_channel: stream_rng(seed, Stream::Channel),
            rng_protocol: stream_rng(seed, Stream::Protocol),
            rng_tracker: stream_rng(seed, Stream::Tracker),
            cbt_cursor: BTreeMap::new(),
            fixes_now: vec![0; n],
            updated_now: vec![false; n],
            records: Vec::new(),
            audit: false,
            violations: Vec::new(),
        }
    }

    /// Checks protocol and GPS-budget invariants after every instant.
    pub fn with_audit(mut self, on: bool) -> Self {
        self.audit = on;
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn states(&self) -> &[NodeTrackState] {
        &self.states
    }

    pub fn ledgers(&self) -> &[EnergyLedger] {
        &self.ledgers
    }

    pub fn clusters(&self) -> &ClusterSet {
        &self.clusters
    }

    pub fn clusters_mut(&mut self) -> &mut ClusterSet {
        &mut self.clusters
    }

    pub fn records(&self) -> &[EstimateRecord] {
        &self.records
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    /// Books the flat miscellaneous energy and hands back the run's logs.
    pub fn finish(mut self) -> TrackerOutput {
        for l in &mut self.ledgers {
            l.finalize();
        }
        TrackerOutput {
            events: self.clusters.take_events(),
            records: self.records,
            ledgers: self.ledgers,
            violations: self.violations,
        }
    }

    fn set_estimate(&mut self, node: NodeId, t: u32, estimate: PositionEstimate, info_time: u32) {
        self.states[node].last = Some(TimedEstimate {
            t,
            estimate,
            info_time,
        });
        self.updated_now[node] = true;
    }

    fn gps_fix(&mut self, node: NodeId, truth: &[Point]) -> Point {
        self.ledgers[node].charge(Activity::GpsFix);
        self.fixes_now[node] += 1;
        sample_gps_fix(
            truth[node],
            self.states[node].noise.sigma_a,
            &mut self.rng_channel,
        )
    }

    fn range(&mut self, a: NodeId, b: NodeId, truth: &[Point]) -> f64 {
        // Collocated nodes still see a finite received power.
        let d = truth[a].distance(truth[b]).max(1e-3);
        let sigma_p = self.states[a].noise.sigma_p;
        sample_distance(d, sigma_p, &self.channel, &mut self.rng_channel)
            .expect("distance is positive")
    }

    fn hold(&mut self, node: NodeId, t: u32) {
        if let Some(last) = self.states[node].last {
            let held = PositionEstimate {
                w_hat: last.estimate.w_hat,
                method: EstimateMethod::Held,
            };
            self.set_estimate(node, t, held, last.info_time);
        }
    }

    /// GPS fix for a node acting on its own.
    pub fn standalone_update(&mut self, node: NodeId, t: u32, truth: &[Point]) -> PositionEstimate {
        let fix = self.gps_fix(node, truth);
        let est = PositionEstimate {
            w_hat: fix,
            method: EstimateMethod::Gps,
        };
        self.set_estimate(node, t, est, t);
        est
    }

    /// Every node fixes on its own; no radio traffic.
    pub fn individual_update(&mut self, node: NodeId, t: u32, truth: &[Point]) -> PositionEstimate {
        self.standalone_update(node, t, truth)
    }

    /// Anchors fix and broadcast; the remaining members multilaterate.
    /// `census` must be sorted and larger than `n_anchors`.
    pub fn multilateration_update(
        &mut self,
        census: &[NodeId],
        t: u32,
        truth: &[Point],
    ) -> BTreeMap<NodeId, PositionEstimate> {
        let range = self.config.comm_range;
        let mut picks: Vec<NodeId> =
            sample(&mut self.rng_tracker, census.len(), self.config.n_anchors)
                .into_iter()
                .map(|i| census[i])
                .collect();
        picks.sort_unstable();

        let mut out = BTreeMap::new();
        let mut anchor_fix: Vec<(NodeId, Point)> = Vec::with_capacity(picks.len());
        for &a in &picks {
            let fix = self.gps_fix(a, truth);
            self.ledgers[a].charge(Activity::Transmit);
            let est = PositionEstimate {
                w_hat: fix,
                method: EstimateMethod::Gps,
            };
            self.set_estimate(a, t, est, t);
            out.insert(a, est);
            anchor_fix.push((a, fix));
        }

        let variant = self.config.algorithm.variant();
        for &m in census {
            if picks.binary_search(&m).is_ok() {
                continue;
            }
            let mut obs: Vec<AnchorObservation> = Vec::new();
            let mut heard: Vec<(Point, f64)> = Vec::new();
            for &(a, fix) in &anchor_fix {
                if truth[a].distance(truth[m]) > range {
                    continue;
                }
                self.ledgers[m].charge(Activity::Receive);
                let d_tilde = self.range(m, a, truth);
                heard.push((fix, d_tilde));
                obs.push(AnchorObservation {
                    pos_tilde: fix,
                    d_tilde,
                    sigma_a: self.states[a].noise.sigma_a,
                    sigma_p: self.states[m].noise.sigma_p,
                });
            }
            let est = if obs.len() >= 3 {
                match estimate_position(&obs, &self.channel, variant) {
                    Ok(raw) => {
                        let kept = filter_estimate(raw, &heard, range);
                        if self.audit
                            && kept.method != EstimateMethod::NearestAnchor
                            && heard
                                .iter()
                                .any(|(p, _)| p.distance(kept.w_hat) > 2.0 * range)
                        {
                            self.violations
                                .push(format!("t={t}: node {m} kept an estimate beyond 2x range"));
                        }
                        Some(kept)
                    }
                    Err(_) => nearest_anchor(&heard),
                }
            } else {
                nearest_anchor(&heard)
            };
            match est {
                Some(e) => {
                    self.set_estimate(m, t, e, t);
                    out.insert(m, e);
                }
                None => self.hold(m, t),
            }
        }
        out
    }

    /// One energized member fixes; everyone adopts its position.
    pub fn cluster_based_update(
        &mut self,
        ch: NodeId,
        census: &[NodeId],
        t: u32,
        truth: &[Point],
    ) -> BTreeMap<NodeId, PositionEstimate> {
        let e_g = gps_energy(&self.energy);
        let candidates: Vec<NodeId> = census
            .iter()
            .copied()
            .filter(|&m| self.ledgers[m].remaining(&self.energy) >= e_g)
            .collect();
        let mut out = BTreeMap::new();
        if candidates.is_empty() {
            for &m in census {
                self.hold(m, t);
                if let Some(last) = self.states[m].last {
                    out.insert(m, last.estimate);
                }
            }
            return out;
        }
        let anchor = candidates[self.rng_tracker.random_range(0..candidates.len())];
        let fix = self.gps_fix(anchor, truth);
        self.ledgers[anchor].charge(Activity::Transmit);
        let own = PositionEstimate {
            w_hat: fix,
            method: EstimateMethod::Gps,
        };
        self.set_estimate(anchor, t, own, t);
        out.insert(anchor, own);

        let range = self.config.comm_range;
        let mut relayed = false;
        for &m in census {
            if m == anchor {
                continue;
            }
            if truth[m].distance(truth[anchor]) > range {
                // Out of the anchor's reach: the head forwards the fix.
                if !relayed {
                    self.ledgers[ch].charge(Activity::Transmit);
                    relayed = true;
                }
            }
            self.ledgers[m].charge(Activity::Receive);
            let est = PositionEstimate {
                w_hat: fix,
                method: EstimateMethod::Borrowed,
            };
            self.set_estimate(m, t, est, t);
            out.insert(m, est);
        }
        out
    }

    /// Cluster-based tracking baseline: one member per instant refreshes by
    /// GPS in round-robin order; every other member adopts the freshest
    /// estimate among the members it can hear.
    pub fn cbt_update(
        &mut self,
        ch: NodeId,
        census: &[NodeId],
        t: u32,
        truth: &[Point],
    ) -> BTreeMap<NodeId, PositionEstimate> {
        let mut out = BTreeMap::new();
        if census.len() == 1 {
            out.insert(census[0], self.standalone_update(census[0], t, truth));
            return out;
        }
        let cursor = self.cbt_cursor.entry(ch).or_insert(0);
        let refresher = census[*cursor % census.len()];
        *cursor += 1;

        let snapshot: Vec<Option<TimedEstimate>> =
            census.iter().map(|&m| self.states[m].last).collect();
        let fix = self.gps_fix(refresher, truth);
        self.ledgers[refresher].charge(Activity::Transmit);
        let own = PositionEstimate {
            w_hat: fix,
            method: EstimateMethod::Gps,
        };
        self.set_estimate(refresher, t, own, t);
        out.insert(refresher, own);

        let range = self.config.comm_range;
        for (i, &m) in census.iter().enumerate() {
            if m == refresher {
                continue;
            }
            let mut best: Option<(u32, NodeId, Point)> = None;
            let mut any_neighbor = false;
            for (j, &o) in census.iter().enumerate() {
                if o == m || truth[o].distance(truth[m]) > range {
                    continue;
                }
                any_neighbor = true;
                let info = if o == refresher {
                    Some((t, fix))
                } else {
                    snapshot[j].map(|e| (e.info_time, e.estimate.w_hat))
                };
                if let Some((ts, p)) = info {
                    let better = match best {
                        None => true,
                        Some((bt, bo, _)) => ts > bt || (ts == bt && o < bo),
                    };
                    if better {
                        best = Some((ts, o, p));
                    }
                }
            }
            if !any_neighbor {
                out.insert(m, self.standalone_update(m, t, truth));
                continue;
            }
            let own_time = snapshot[i].map(|e| e.info_time);
            match best {
                Some((ts, o, p)) if own_time.is_none_or(|own| ts > own) => {
                    if o == refresher {
                        self.ledgers[m].charge(Activity::Receive);
                    }
                    let est = PositionEstimate {
                        w_hat: p,
                        method: EstimateMethod::Borrowed,
                    };
                    self.set_estimate(m, t, est, ts);
                    out.insert(m, est);
                }
                _ => {
                    self.hold(m, t);
                    if let Some(last) = self.states[m].last {
                        out.insert(m, last.estimate);
                    }
                }
            }
        }
        out
    }

    /// Advances the tracker to sampling instant `t` given true positions.
    pub fn step(&mut self, t: u32, truth: &[Point]) {
        self.fixes_now.iter_mut().for_each(|f| *f = 0);
        self.updated_now.iter_mut().for_each(|u| *u = false);
        let mut audits: Vec<ClusterAudit> = Vec::new();
        let mut solo_fixes: Vec<NodeId> = Vec::new();

        if self.config.algorithm == Algorithm::Individual {
            for node in 0..self.states.len() {
                self.individual_update(node, t, truth);
                solo_fixes.push(node);
            }
        } else if self.clusters.is_empty() {
            // Initial round: everyone fixes, then clusters form.
            for node in 0..self.states.len() {
                self.standalone_update(node, t, truth);
                solo_fixes.push(node);
            }
            self.form(t, truth);
        } else {
            self.cooperative_round(t, truth, &mut audits, &mut solo_fixes);
        }

        for node in 0..self.states.len() {
            if !self.updated_now[node] {
                self.hold(node, t);
            }
            if let Some(last) = self.states[node].last {
                self.records.push(EstimateRecord {
                    t,
                    node_id: node,
                    method: last.estimate.method,
                    position: last.estimate.w_hat,
                });
            } else if self.audit {
                self.violations
                    .push(format!("t={t}: node {node} has no estimate"));
            }
        }
        if self.audit {
            self.audit_instant(t, &audits, &solo_fixes);
        }
    }

    fn form(&mut self, t: u32, truth: &[Point]) {
        let nodes: Vec<(NodeId, Point)> = truth.iter().copied().enumerate().collect();
        let range = self.config.comm_range;
        let channel = self.channel;
        let sigma: Vec<f64> = self.states.iter().map(|s| s.noise.sigma_p).collect();
        let rng_channel = &mut self.rng_channel;
        let mut ranging = |a: NodeId, b: NodeId| {
            let d = truth[a].distance(truth[b]).max(1e-3);
            sample_distance(d, sigma[a], &channel, rng_channel).expect("distance is positive")
        };
        let formed = form_clusters(&nodes, range, &mut ranging, &mut self.rng_protocol, t);
        self.clusters.install(formed, t);
    }

    fn cooperative_round(
        &mut self,
        t: u32,
        truth: &[Point],
        audits: &mut Vec<ClusterAudit>,
        solo_fixes: &mut Vec<NodeId>,
    ) {
        let range = self.config.comm_range;
        self.clusters.merge_in_range(truth, range, t);

        let mut orphans: Vec<NodeId> = Vec::new();
        for ch in self.clusters.head_ids() {
            let members: Vec<NodeId> = self
                .clusters
                .cluster(ch)
                .unwrap()
                .members
                .iter()
                .copied()
                .collect();
            let mut census = Vec::with_capacity(members.len());
            for &m in &members {
                if m == ch {
                    census.push(m);
                    continue;
                }
                let received = truth[m].distance(truth[ch]) <= range;
                if self.clusters.record_outcome(m, received, t) {
                    orphans.push(m);
                } else if received {
                    census.push(m);
                }
            }
            let mode = select_mode(census.len(), self.config.cluster_threshold);
            match (self.config.algorithm, mode) {
                (Algorithm::Cbt, _) => {
                    self.cbt_update(ch, &census, t, truth);
                }
                (_, Mode::Multilateration) => {
                    self.multilateration_update(&census, t, truth);
                }
                (_, Mode::ClusterBased) => {
                    self.cluster_based_update(ch, &census, t, truth);
                }
                (_, Mode::Standalone) => {
                    self.standalone_update(ch, t, truth);
                }
            }
            if self.audit {
                audits.push(ClusterAudit {
                    ch_id: ch,
                    census: census.len(),
                    mode,
                    gps_fixes: census.iter().map(|&m| self.fixes_now[m]).sum(),
                });
            }
        }

        for node in orphans {
            self.standalone_update(node, t, truth);
            solo_fixes.push(node);
            let channel = self.channel;
            let sigma_p = self.states[node].noise.sigma_p;
            let rng_channel = &mut self.rng_channel;
            let mut ranging = |a: NodeId, b: NodeId| {
                let d = truth[a].distance(truth[b]).max(1e-3);
                sample_distance(d, sigma_p, &channel, rng_channel).expect("distance is positive")
            };
            self.clusters
                .place_orphan(node, truth, range, &mut ranging, t);
        }
    }

    fn audit_instant(&mut self, t: u32, audits: &[ClusterAudit], solo_fixes: &[NodeId]) {
        if self.config.algorithm != Algorithm::Individual {
            if let Err(e) = self.clusters.check_invariants() {
                self.violations.push(format!("t={t}: {e}"));
            }
        }
        let total: u32 = self.fixes_now.iter().sum();
        let attributed: u32 =
            audits.iter().map(|a| a.gps_fixes).sum::<u32>() + solo_fixes.len() as u32;
        if total != attributed {
            self.violations.push(format!(
                "t={t}: {total} GPS fixes but {attributed} attributed"
            ));
        }
        if self.fixes_now.iter().any(|&f| f > 1) {
            self.violations
                .push(format!("t={t}: a node fixed more than once"));
        }
        for &n in solo_fixes {
            if self.fixes_now[n] != 1 {
                self.violations.push(format!(
                    "t={t}: standalone node {n} did not fix exactly once"
                ));
            }
        }
        let cbt = self.config.algorithm == Algorithm::Cbt;
        for a in audits {
            let ok = match (cbt, a.mode) {
                (true, _) if a.census == 1 => a.gps_fixes == 1,
                // A CBT member with no audible neighbor may fix on its own.
                (true, _) => a.gps_fixes >= 1 && a.gps_fixes as usize <= a.census,
                (false, Mode::Multilateration) => a.gps_fixes as usize == self.config.n_anchors,
                (false, Mode::ClusterBased) => a.gps_fixes <= 1,
                (false, Mode::Standalone) => a.gps_fixes == 1,
            };
            if !ok {
                self.violations.push(format!(
                    "t={t}: cluster {} in {:?} with {} members used {} GPS fixes",
                    a.ch_id, a.mode, a.census, a.gps_fixes
                ));
            }
        }
    }
}

/// Logs and ledgers of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerOutput {
    pub events: Vec<ProtocolEvent>,
    pub records: Vec<EstimateRecord>,
    pub ledgers: Vec<EnergyLedger>,
    pub violations: Vec<String>,
}
