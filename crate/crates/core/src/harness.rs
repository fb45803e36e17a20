//! Scenario runner and metrics.
//!
//! A run simulates the whole tracking period for one algorithm and one
//! sampling interval. Estimates exist only at sampling instants; they are
//! linearly interpolated to 1 s and compared with the ground-truth track.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelError, NoiseProfile, PathLossParams};
use crate::energy::{write_energy_report, EnergyParams};
use crate::geometry::Point;
use crate::movement::{generate_tracks, FlockingParams, MovementError, Trajectory, WorldConfig};
use crate::protocol::write_events_csv;
use crate::tracker::{Algorithm, EstimateRecord, Tracker, TrackerConfig, TrackerOutput};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot interpolate an empty track")]
    EmptyTrack,
    #[error("track lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no results to emit")]
    NoResults,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Movement(#[from] MovementError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioId {
    A,
    B,
    C,
    D,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [ScenarioId::A, ScenarioId::B, ScenarioId::C, ScenarioId::D];

    /// `(sigma_p dB, sigma_a_low m, sigma_a_high m)`.
    pub fn noise_levels(self) -> (f64, f64, f64) {
        match self {
            ScenarioId::A => (1.0, 1.0, 5.0),
            ScenarioId::B => (1.0, 5.0, 10.0),
            ScenarioId::C => (3.0, 1.0, 5.0),
            ScenarioId::D => (3.0, 5.0, 10.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::A => "a",
            ScenarioId::B => "b",
            ScenarioId::C => "c",
            ScenarioId::D => "d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.as_str() == s)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One reproducible experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    pub sigma_p: f64,
    pub sigma_a_low: f64,
    pub sigma_a_high: f64,
    /// Fraction of nodes with the low (good) GPS noise level.
    pub high_perf_fraction: f64,
    pub intervals: Vec<u32>,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub world: WorldConfig,
    pub flock: FlockingParams,
    pub channel: PathLossParams,
    pub energy: EnergyParams,
    /// `sampling_interval` and `algorithm` are overridden per run.
    pub tracker: TrackerConfig,
    /// Checks protocol invariants at every instant.
    pub audit: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::for_scenario(ScenarioId::A)
    }
}

impl ScenarioConfig {
    pub fn for_scenario(id: ScenarioId) -> Self {
        let (sigma_p, sigma_a_low, sigma_a_high) = id.noise_levels();
        Self {
            scenario: id,
            sigma_p,
            sigma_a_low,
            sigma_a_high,
            high_perf_fraction: 0.5,
            intervals: (1..=10).map(|k| 5 * k).collect(),
            algorithms: Algorithm::ALL.to_vec(),
            seed: 1,
            world: WorldConfig::default(),
            flock: FlockingParams::default(),
            channel: PathLossParams::default(),
            energy: EnergyParams::default(),
            tracker: TrackerConfig::default(),
            audit: false,
        }
    }

    /// Switches to another scenario's noise levels, keeping everything else.
    pub fn with_scenario(&self, id: ScenarioId) -> Self {
        let (sigma_p, sigma_a_low, sigma_a_high) = id.noise_levels();
        Self {
            scenario: id,
            sigma_p,
            sigma_a_low,
            sigma_a_high,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        for (name, v) in [
            ("sigma_p", self.sigma_p),
            ("sigma_a_low", self.sigma_a_low),
            ("sigma_a_high", self.sigma_a_high),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.high_perf_fraction) {
            return bad("high_perf_fraction must lie in [0, 1]");
        }
        if self.intervals.is_empty() || self.intervals.contains(&0) {
            return bad("intervals must be non-empty and positive");
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        self.world.validate()?;
        self.flock.validate()?;
        self.channel.validate()?;
        self.energy.validate().or_else(bad)?;
        self.tracker.validate().or_else(bad)?;
        Ok(())
    }

    /// Per-node noise: the first nodes get the high GPS noise, the last
    /// `high_perf_fraction` of them the low one.
    pub fn noise_profiles(&self) -> Vec<NoiseProfile> {
        let n = self.world.n_nodes;
        let n_good = (n as f64 * self.high_perf_fraction).round() as usize;
        (0..n)
            .map(|i| NoiseProfile {
                sigma_a: if i < n - n_good {
                    self.sigma_a_high
                } else {
                    self.sigma_a_low
                },
                sigma_p: self.sigma_p,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub scenario: ScenarioId,
    pub algorithm: Algorithm,
    pub sampling_interval: u32,
    pub mean_error: f64,
    pub mean_energy: f64,
    pub per_node_errors: Vec<f64>,
    /// Protocol invariant violations; always empty unless auditing.
    pub violations: Vec<String>,
}

/// Linear interpolation of `(t, position)` samples to every second in
/// `0..=end`, holding the first and last samples outside their span.
pub fn interpolate_track(sampled: &[(u32, Point)], end: u32) -> Result<Vec<Point>, HarnessError> {
    let (&first, &last) = match (sampled.first(), sampled.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(HarnessError::EmptyTrack),
    };
    let mut out = Vec::with_capacity(end as usize + 1);
    let mut seg = 0usize;
    for t in 0..=end {
        let p = if t <= first.0 {
            first.1
        } else if t >= last.0 {
            last.1
        } else {
            while sampled[seg + 1].0 < t {
                seg += 1;
            }
            let (t0, p0) = sampled[seg];
            let (t1, p1) = sampled[seg + 1];
            let f = f64::from(t - t0) / f64::from(t1 - t0);
            p0 + (p1 - p0) * f
        };
        out.push(p);
    }
    Ok(out)
}

/// Mean Euclidean distance between two aligned dense tracks.
pub fn node_tracking_error(estimated: &[Point], truth: &[Point]) -> Result<f64, HarnessError> {
    if estimated.len() != truth.len() {
        return Err(HarnessError::LengthMismatch(estimated.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(HarnessError::EmptyTrack);
    }
    let sum: f64 = estimated
        .iter()
        .zip(truth)
        .map(|(e, t)| e.distance(*t))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// Empirical CDF: sorted distinct values with the fraction of samples at
/// or below each.
pub fn error_cdf(per_node_errors: &[f64]) -> Vec<(f64, f64)> {
    let mut v = per_node_errors.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    out
}

/// Mean that is exact when all values are equal.
fn stable_mean(values: &[f64]) -> f64 {
    let Some(&base) = values.first() else {
        return 0.0;
    };
    base + values.iter().map(|v| v - base).sum::<f64>() / values.len() as f64
}

/// Sampling instants `0, T, 2T, ...` strictly before `duration`.
pub fn sampling_instants(duration: u32, interval: u32) -> impl Iterator<Item = u32> {
    (0..duration / interval).map(move |k| k * interval)
}

/// Runs one algorithm at one interval on pre-generated tracks.
pub fn simulate_run(
    cfg: &ScenarioConfig,
    tracks: &[Trajectory],
    algorithm: Algorithm,
    interval: u32,
) -> Result<(RunResult, TrackerOutput), HarnessError> {
    let tracker_cfg = TrackerConfig {
        sampling_interval: interval,
        algorithm,
        ..cfg.tracker
    };
    tracker_cfg
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let n = tracks.len();
    let noise = cfg.noise_profiles();
    let mut tracker =
        Tracker::new(tracker_cfg, cfg.channel, cfg.energy, &noise, cfg.seed).with_audit(cfg.audit);
    let mut truth = vec![Point::ORIGIN; n];
    let duration = cfg.world.duration;
    for t in sampling_instants(duration, interval) {
        for (slot, tr) in truth.iter_mut().zip(tracks) {
            *slot = tr.at(t);
        }
        tracker.step(t, &truth);
    }
    let output = tracker.finish();

    let mut samples: Vec<Vec<(u32, Point)>> = vec![Vec::new(); n];
    for r in &output.records {
        samples[r.node_id].push((r.t, r.position));
    }
    let per_node_errors = samples
        .iter()
        .zip(tracks)
        .map(|(s, tr)| {
            if s.is_empty() {
                // Zero-length run: the only truth sample is the start.
                return Ok(0.0);
            }
            let dense = interpolate_track(s, duration)?;
            node_tracking_error(&dense, &tr.positions[..=duration as usize])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let energies: Vec<f64> = output
        .ledgers
        .iter()
        .map(|l| l.consumed(&cfg.energy))
        .collect();
    let result = RunResult {
        scenario: cfg.scenario,
        algorithm,
        sampling_interval: interval,
        mean_error: stable_mean(&per_node_errors),
        mean_energy: stable_mean(&energies),
        per_node_errors,
        violations: output.violations.clone(),
    };
    Ok((result, output))
}

/// Runs every configured algorithm and interval on one world. Results are
/// sorted by algorithm, then interval.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<RunResult>, HarnessError> {
    cfg.validate()?;
    let tracks = generate_tracks(&cfg.world, &cfg.flock, cfg.seed)?;
    run_scenario_on(cfg, &tracks, None)
}

/// Like [`run_scenario`] on pre-generated tracks; writes per-run logs under
/// `log_dir` when given.
pub fn run_scenario_on(
    cfg: &ScenarioConfig,
    tracks: &[Trajectory],
    log_dir: Option<&Path>,
) -> Result<Vec<RunResult>, HarnessError> {
    cfg.validate()?;
    let jobs: Vec<(Algorithm, u32)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| cfg.intervals.iter().map(move |&i| (a, i)))
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|&(alg, interval)| {
            let (result, output) = simulate_run(cfg, tracks, alg, interval)?;
            if let Some(dir) = log_dir {
                write_run_logs(dir, &result, &output, &cfg.energy)?;
            }
            Ok(result)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    results.sort_by(|a, b| {
        (a.scenario, a.algorithm, a.sampling_interval).cmp(&(
            b.scenario,
            b.algorithm,
            b.sampling_interval,
        ))
    });
    Ok(results)
}

/// Writes the estimate log, energy report and protocol events of one run.
pub fn write_run_logs(
    dir: &Path,
    result: &RunResult,
    output: &TrackerOutput,
    energy: &EnergyParams,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let stem = format!(
        "{}_{}_{}s",
        result.scenario,
        result.algorithm.as_str(),
        result.sampling_interval
    );
    let mut est = BufWriter::new(File::create(dir.join(format!("{stem}_estimates.csv")))?);
    write_estimates_csv(&mut est, &output.records)?;
    est.flush()?;
    let mut en = BufWriter::new(File::create(dir.join(format!("{stem}_energy.csv")))?);
    write_energy_report(&mut en, &output.ledgers, energy)?;
    en.flush()?;
    let mut ev = BufWriter::new(File::create(dir.join(format!("{stem}_events.csv")))?);
    write_events_csv(&mut ev, &output.events)?;
    ev.flush()?;
    Ok(())
}

/// Writes `t,node_id,method,x_hat,y_hat`.
pub fn write_estimates_csv<W: Write>(mut out: W, records: &[EstimateRecord]) -> io::Result<()> {
    writeln!(out, "t,node_id,method,x_hat,y_hat")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6}",
            r.t,
            r.node_id,
            r.method.as_str(),
            r.position.x,
            r.position.y
        )?;
    }
    Ok(())
}

/// Writes `scenario,algorithm,interval_s,mean_error_m,mean_energy_J`.
pub fn write_results_csv<W: Write>(mut out: W, results: &[RunResult]) -> Result<(), HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::NoResults);
    }
    writeln!(
        out,
        "scenario,algorithm,interval_s,mean_error_m,mean_energy_J"
    )?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6}",
            r.scenario,
            r.algorithm.as_str(),
            r.sampling_interval,
            r.mean_error,
            r.mean_energy
        )?;
    }
    Ok(())
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Mean error against mean energy, one polyline per algorithm with points
/// ordered by sampling interval.
pub fn write_results_svg<W: Write>(mut out: W, results: &[RunResult]) -> Result<(), HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::NoResults);
    }
    let (w, h, m) = (640.0, 480.0, 60.0);
    let max_e = results
        .iter()
        .map(|r| r.mean_energy)
        .fold(0.0, f64::max)
        .max(1e-9);
    let max_err = results
        .iter()
        .map(|r| r.mean_error)
        .fold(0.0, f64::max)
        .max(1e-9);
    let sx = |e: f64| m + e / max_e * (w - 2.0 * m);
    let sy = |err: f64| h - m - err / max_err * (h - 2.0 * m);

    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<line x1="{m}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{y}" stroke="black"/>"#,
        y = h - m,
        x = w - m
    )?;
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">mean energy (J), max {:.1}</text>"#,
        w / 2.0,
        h - 20.0,
        max_e
    )?;
    writeln!(
        out,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">mean error (m), max {:.2}</text>"#,
        h / 2.0,
        h / 2.0,
        max_err
    )?;
    let mut algorithms: Vec<Algorithm> = results.iter().map(|r| r.algorithm).collect();
    algorithms.sort();
    algorithms.dedup();
    for (k, alg) in algorithms.iter().enumerate() {
        let mut pts: Vec<&RunResult> = results.iter().filter(|r| r.algorithm == *alg).collect();
        pts.sort_by_key(|r| (r.scenario, r.sampling_interval));
        let coords: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.mean_energy), sy(r.mean_error)))
            .collect();
        let color = COLORS[k % COLORS.len()];
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            alg.as_str()
        )?;
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            w - m - 80.0,
            m + 15.0 * k as f64,
            alg.as_str()
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}
