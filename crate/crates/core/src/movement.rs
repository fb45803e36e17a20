//! Ground-truth flock trajectories.
//!
//! Nodes start in one of the living areas, travel toward the foraging area
//! with Reynolds-style flocking (separation, alignment, cohesion plus a
//! goal-seeking term), and switch permanently to a reflected Gaussian random
//! walk once they enter the foraging disc. While foraging, the walk carries
//! a drift from the separation and cohesion rules so groups loosen and split
//! over time instead of dissolving at once. Everything runs at a fixed 1 s
//! step with explicit Euler integration.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{Disc, Point};
use crate::seeds::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MovementError {
    #[error("world must contain at least one node")]
    NoNodes,
    #[error("region {0} lies outside the simulation area")]
    RegionOutsideArea(&'static str),
    #[error("invalid world configuration: {0}")]
    InvalidWorld(&'static str),
    #[error("invalid flocking parameters: {0}")]
    InvalidFlocking(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    /// Side of the square area, meters.
    pub area_side: f64,
    pub n_nodes: usize,
    /// Seconds; trajectories hold `duration + 1` samples.
    pub duration: u32,
    pub living_areas: [Disc; 2],
    pub foraging_area: Disc,
    /// m/s, also the per-step displacement bound.
    pub max_speed: f64,
    pub target_spacing: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            area_side: 50_000.0,
            n_nodes: 40,
            duration: 43_200,
            living_areas: [
                Disc::new(Point::new(2_500.0, 2_500.0), 500.0),
                Disc::new(Point::new(47_500.0, 47_500.0), 500.0),
            ],
            foraging_area: Disc::new(Point::new(25_000.0, 25_000.0), 1_000.0),
            max_speed: 6.0,
            target_spacing: 20.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), MovementError> {
        if self.n_nodes == 0 {
            return Err(MovementError::NoNodes);
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(MovementError::InvalidWorld("area_side must be positive"));
        }
        if !(self.max_speed > 0.0 && self.max_speed.is_finite()) {
            return Err(MovementError::InvalidWorld("max_speed must be positive"));
        }
        if self.target_spacing.is_nan() || self.target_spacing <= 0.0 {
            return Err(MovementError::InvalidWorld(
                "target_spacing must be positive",
            ));
        }
        let inside = |d: &Disc| {
            (0.0..=self.area_side).contains(&d.center.x)
                && (0.0..=self.area_side).contains(&d.center.y)
                && d.radius > 0.0
        };
        if !self.living_areas.iter().all(inside) {
            return Err(MovementError::RegionOutsideArea("living area"));
        }
        if !inside(&self.foraging_area) {
            return Err(MovementError::RegionOutsideArea("foraging area"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlockingParams {
    /// Radius within which other nodes count as flockmates, meters.
    pub neighbor_radius: f64,
    pub w_separation: f64,
    pub w_alignment: f64,
    pub w_cohesion: f64,
    pub w_goal: f64,
    /// Spacing below which separation pushes nodes apart, meters.
    pub separation_distance: f64,
    /// Per-axis std of a random-walk step, meters.
    pub rw_step_sigma: f64,
}

impl Default for FlockingParams {
    fn default() -> Self {
        Self {
            neighbor_radius: 50.0,
            w_separation: 0.5,
            w_alignment: 0.3,
            w_cohesion: 0.03,
            w_goal: 0.2,
            separation_distance: 20.0,
            rw_step_sigma: 3.0,
        }
    }
}

impl FlockingParams {
    pub fn validate(&self) -> Result<(), MovementError> {
        let weights = [
            self.w_separation,
            self.w_alignment,
            self.w_cohesion,
            self.w_goal,
        ];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(MovementError::InvalidFlocking(
                "weights must be non-negative",
            ));
        }
        if self.neighbor_radius.is_nan() || self.neighbor_radius <= 0.0 {
            return Err(MovementError::InvalidFlocking(
                "neighbor_radius must be positive",
            ));
        }
        if !(self.separation_distance >= 0.0 && self.rw_step_sigma >= 0.0) {
            return Err(MovementError::InvalidFlocking(
                "distances must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Kinematic state of one flock member.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Kinematics {
    pub position: Point,
    pub velocity: Point,
}

/// A node's ground-truth path; sample `t` is the position at second `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub node_id: usize,
    pub positions: Vec<Point>,
}

impl Trajectory {
    pub fn at(&self, t: u32) -> Point {
        let i = (t as usize).min(self.positions.len() - 1);
        self.positions[i]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// One explicit-Euler flocking update with `dt = 1 s`.
///
/// Each rule yields a velocity correction; the weighted sum is added to the
/// current velocity, which is then clipped to `max_speed`.
pub fn flocking_step(
    states: &[Kinematics],
    params: &FlockingParams,
    goal: Option<Point>,
    max_speed: f64,
) -> Vec<Kinematics> {
    let r2 = params.neighbor_radius * params.neighbor_radius;
    states
        .iter()
        .enumerate()
        .map(|(i, me)| {
            let mut separation = Point::ORIGIN;
            let mut vel_sum = Point::ORIGIN;
            let mut pos_sum = Point::ORIGIN;
            let mut count = 0usize;
            for (j, other) in states.iter().enumerate() {
                if i == j {
                    continue;
                }
                let offset = me.position - other.position;
                let d2 = offset.norm_sq();
                if d2 > r2 {
                    continue;
                }
                count += 1;
                vel_sum += other.velocity;
                pos_sum += other.position;
                let d = d2.sqrt();
                if d > 0.0 && d < params.separation_distance {
                    separation += offset * ((params.separation_distance - d) / d);
                }
            }
            let mut dv = separation * params.w_separation;
            if count > 0 {
                let n = count as f64;
                dv += (vel_sum / n - me.velocity) * params.w_alignment;
                dv += (pos_sum / n - me.position) * params.w_cohesion;
            }
            if let Some(g) = goal {
                let desired = (g - me.position).normalized() * max_speed;
                dv += (desired - me.velocity) * params.w_goal;
            }
            let velocity = (me.velocity + dv).clamp_length(max_speed);
            Kinematics {
                position: me.position + velocity,
                velocity,
            }
        })
        .collect()
}

/// One reflected Gaussian random-walk step inside `region`.
pub fn random_walk_step<R: Rng + ?Sized>(
    position: Point,
    params: &FlockingParams,
    region: &Disc,
    max_speed: f64,
    rng: &mut R,
) -> Point {
    let zx: f64 = rng.sample(StandardNormal);
    let zy: f64 = rng.sample(StandardNormal);
    let step = Point::new(zx, zy) * params.rw_step_sigma;
    let moved = region.reflect(position + step.clamp_length(max_speed));
    position + (moved - position).clamp_length(max_speed)
}

/// One foraging step: a reflected Gaussian random walk whose mean is the
/// separation and cohesion drift from nearby foragers. No velocity is
/// carried between steps.
pub fn foraging_step<R: Rng + ?Sized>(
    positions: &[Point],
    params: &FlockingParams,
    region: &Disc,
    max_speed: f64,
    rng: &mut R,
) -> Vec<Point> {
    let still: Vec<Kinematics> = positions
        .iter()
        .map(|&position| Kinematics {
            position,
            velocity: Point::ORIGIN,
        })
        .collect();
    let drift = flocking_step(&still, params, None, max_speed);
    positions
        .iter()
        .zip(drift)
        .map(|(&p, d)| {
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            let step =
                (d.velocity + Point::new(zx, zy) * params.rw_step_sigma).clamp_length(max_speed);
            let moved = region.reflect(p + step);
            p + (moved - p).clamp_length(max_speed)
        })
        .collect()
}

fn sample_in_disc<R: Rng + ?Sized>(disc: &Disc, rng: &mut R) -> Point {
    let r = disc.radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    disc.center + Point::new(r * theta.cos(), r * theta.sin())
}

fn clamp_to_area(p: Point, side: f64) -> Point {
    Point::new(p.x.clamp(0.0, side), p.y.clamp(0.0, side))
}

/// Generates `n_nodes` trajectories of `duration + 1` one-second samples.
///
/// Node `i` starts in living area `i % 2`.
pub fn generate_tracks(
    world: &WorldConfig,
    flock: &FlockingParams,
    seed: u64,
) -> Result<Vec<Trajectory>, MovementError> {
    world.validate()?;
    flock.validate()?;
    let mut rng = stream_rng(seed, Stream::Movement);
    let n = world.n_nodes;
    let steps = world.duration as usize;

    let mut states: Vec<Kinematics> = (0..n)
        .map(|i| Kinematics {
            position: sample_in_disc(&world.living_areas[i % 2], &mut rng),
            velocity: Point::ORIGIN,
        })
        .collect();
    let mut foraging: Vec<bool> = states
        .iter()
        .map(|s| world.foraging_area.contains(s.position))
        .collect();
    let mut tracks: Vec<Trajectory> = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut positions = Vec::with_capacity(steps + 1);
            positions.push(s.position);
            Trajectory {
                node_id: i,
                positions,
            }
        })
        .collect();

    let goal = world.foraging_area.center;
    let mut journey_idx: Vec<usize> = Vec::with_capacity(n);
    let mut journey_states: Vec<Kinematics> = Vec::with_capacity(n);
    let mut forage_idx: Vec<usize> = Vec::with_capacity(n);
    let mut forage_pos: Vec<Point> = Vec::with_capacity(n);
    for _ in 0..steps {
        journey_idx.clear();
        journey_states.clear();
        for (i, s) in states.iter().enumerate() {
            if !foraging[i] {
                journey_idx.push(i);
                journey_states.push(*s);
            }
        }
        let advanced = flocking_step(&journey_states, flock, Some(goal), world.max_speed);
        for (&i, next) in journey_idx.iter().zip(advanced) {
            states[i] = next;
        }
        forage_idx.clear();
        forage_pos.clear();
        for (i, s) in states.iter().enumerate() {
            if foraging[i] {
                forage_idx.push(i);
                forage_pos.push(s.position);
            }
        }
        let walked = foraging_step(
            &forage_pos,
            flock,
            &world.foraging_area,
            world.max_speed,
            &mut rng,
        );
        for (&i, p) in forage_idx.iter().zip(walked) {
            states[i].velocity = p - states[i].position;
            states[i].position = p;
        }
        for (i, s) in states.iter_mut().enumerate() {
            s.position = clamp_to_area(s.position, world.area_side);
            if !foraging[i] && world.foraging_area.contains(s.position) {
                foraging[i] = true;
            }
            tracks[i].positions.push(s.position);
        }
    }
    Ok(tracks)
}

/// Number of connected components of the disc graph with the given range.
pub fn connectivity_components(points: &[Point], range: f64) -> usize {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if points[i].distance(points[j]) <= range {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Writes `t,node_id,x,y` rows ordered by time then node.
pub fn write_tracks_csv<W: Write>(mut out: W, tracks: &[Trajectory]) -> io::Result<()> {
    writeln!(out, "t,node_id,x,y")?;
    let len = tracks.iter().map(Trajectory::len).max().unwrap_or(0);
    for t in 0..len {
        for tr in tracks {
            if let Some(p) = tr.positions.get(t) {
                writeln!(out, "{},{},{:.6},{:.6}", t, tr.node_id, p.x, p.y)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn only(sep: f64, align: f64, coh: f64, goal: f64) -> FlockingParams {
        FlockingParams {
            w_separation: sep,
            w_alignment: align,
            w_cohesion: coh,
            w_goal: goal,
            ..FlockingParams::default()
        }
    }

    #[test]
    fn separation_pushes_apart() {
        let states = [
            Kinematics {
                position: Point::new(0.0, 0.0),
                velocity: Point::ORIGIN,
            },
            Kinematics {
                position: Point::new(5.0, 0.0),
                velocity: Point::ORIGIN,
            },
        ];
        let next = flocking_step(&states, &only(0.5, 0.0, 0.0, 0.0), None, 6.0);
        assert!(next[0].position.distance(next[1].position) > 5.0);
    }

    #[test]
    fn collocated_cohesion_is_still() {
        let states = vec![
            Kinematics {
                position: Point::new(3.0, 3.0),
                velocity: Point::ORIGIN
            };
            4
        ];
        let next = flocking_step(&states, &only(0.0, 0.0, 1.0, 0.0), None, 6.0);
        assert!(next.iter().all(|k| k.position == Point::new(3.0, 3.0)));
    }

    #[test]
    fn alignment_matches_neighbor_velocity() {
        let v = Point::new(2.0, 1.0);
        let mut states = vec![Kinematics {
            position: Point::ORIGIN,
            velocity: Point::ORIGIN,
        }];
        for k in 0..3 {
            states.push(Kinematics {
                position: Point::new(10.0 + k as f64, 5.0),
                velocity: v,
            });
        }
        let next = flocking_step(&states, &only(0.0, 1.0, 0.0, 0.0), None, 6.0);
        // w_alignment = 1 lands exactly on the neighbors' mean velocity.
        assert!((next[0].velocity - v).norm() < 1e-12);
        let half = flocking_step(&states, &only(0.0, 0.5, 0.0, 0.0), None, 6.0);
        assert!((half[0].velocity - v).norm() < v.norm());
    }

    #[test]
    fn speed_is_clipped() {
        let states = [Kinematics {
            position: Point::ORIGIN,
            velocity: Point::new(100.0, 0.0),
        }];
        let next = flocking_step(&states, &only(0.0, 0.0, 0.0, 0.0), None, 6.0);
        assert!((next[0].velocity.norm() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn random_walk_zero_sigma_stays_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let region = Disc::new(Point::new(0.0, 0.0), 100.0);
        let p = Point::new(10.0, -20.0);
        let params = FlockingParams {
            rw_step_sigma: 0.0,
            ..FlockingParams::default()
        };
        assert_eq!(random_walk_step(p, &params, &region, 6.0, &mut rng), p);
    }

    #[test]
    fn random_walk_reflects_into_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let region = Disc::new(Point::new(0.0, 0.0), 10.0);
        let params = FlockingParams {
            rw_step_sigma: 50.0,
            ..FlockingParams::default()
        };
        let mut p = Point::new(9.9, 0.0);
        for _ in 0..1000 {
            let q = random_walk_step(p, &params, &region, 6.0, &mut rng);
            assert!(region.contains(q));
            assert!(q.distance(p) <= 6.0 + 1e-9);
            p = q;
        }
    }

    #[test]
    fn zero_duration_starts_in_living_area() {
        let world = WorldConfig {
            duration: 0,
            ..WorldConfig::default()
        };
        let tracks = generate_tracks(&world, &FlockingParams::default(), 11).unwrap();
        assert_eq!(tracks.len(), 40);
        for tr in &tracks {
            assert_eq!(tr.len(), 1);
            assert!(world.living_areas[tr.node_id % 2].contains(tr.positions[0]));
        }
    }

    #[test]
    fn rejects_bad_worlds() {
        let world = WorldConfig {
            n_nodes: 0,
            ..WorldConfig::default()
        };
        assert_eq!(
            generate_tracks(&world, &FlockingParams::default(), 0),
            Err(MovementError::NoNodes)
        );
        let mut world = WorldConfig::default();
        world.foraging_area.center = Point::new(60_000.0, 10.0);
        assert!(matches!(
            generate_tracks(&world, &FlockingParams::default(), 0),
            Err(MovementError::RegionOutsideArea(_))
        ));
    }

    #[test]
    fn components_of_chain_and_islands() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(90.0, 0.0),
            Point::new(180.0, 0.0),
            Point::new(1000.0, 0.0),
        ];
        assert_eq!(connectivity_components(&pts, 100.0), 2);
        assert_eq!(connectivity_components(&pts, 50.0), 4);
    }

    #[test]
    fn csv_layout() {
        let tracks = vec![
            Trajectory {
                node_id: 0,
                positions: vec![Point::new(1.0, 2.0), Point::new(1.5, 2.0)],
            },
            Trajectory {
                node_id: 1,
                positions: vec![Point::new(3.0, 4.0), Point::new(3.0, 4.25)],
            },
        ];
        let mut buf = Vec::new();
        write_tracks_csv(&mut buf, &tracks).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,node_id,x,y");
        assert_eq!(lines[1], "0,0,1.000000,2.000000");
        assert_eq!(lines[4], "1,1,3.000000,4.250000");
    }
}
