//! Monte-Carlo checks of the closed-form noise moments used by the
//! multilateration weights, plus the bias-compensation comparison.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{sample_distance, sample_gps_fix, PathLossParams};
use crate::geometry::Point;
use crate::multilat::{
    estimate_position, var_distance_squared, var_k_tilde, AnchorObservation, Variant,
};
use crate::seeds::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Monte-Carlo samples per variance check.
    pub samples: usize,
    /// Localization trials for the bias comparison.
    pub bias_trials: usize,
    pub sigma_p_levels: Vec<f64>,
    pub sigma_a_levels: Vec<f64>,
    /// Relative tolerance of the variance checks.
    pub tolerance: f64,
    /// Multiplies the `u` constant seen by the solver only. Anything other
    /// than 1 is a deliberately broken solver.
    pub solver_u_scale: f64,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            bias_trials: 100_000,
            sigma_p_levels: vec![1.0, 3.0],
            sigma_a_levels: vec![1.0, 5.0, 10.0],
            tolerance: 0.02,
            solver_u_scale: 1.0,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub passed: bool,
}

impl OracleCheck {
    /// Relative-tolerance check; an expected zero demands an exact zero.
    fn relative(name: String, measured: f64, expected: f64, tolerance: f64) -> Self {
        let passed = if expected == 0.0 {
            measured == 0.0
        } else {
            ((measured - expected) / expected).abs() <= tolerance
        };
        Self {
            name,
            measured,
            expected,
            passed,
        }
    }
}

/// Anchor layouts with a blind node.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub anchors: Vec<Point>,
    pub truth: Point,
}

fn circle(center: Point, radius: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            center + Point::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}

/// Six anchors on a 100 m circle around the blind node. Both estimators are
/// unbiased here by symmetry.
pub fn centred_geometry() -> Geometry {
    Geometry {
        anchors: circle(Point::ORIGIN, 100.0, 6),
        truth: Point::ORIGIN,
    }
}

/// The fixed geometry of the bias comparison: the same circle with the blind
/// node off-centre, so ranging bias does not cancel by symmetry.
pub fn bias_geometry() -> Geometry {
    Geometry {
        truth: Point::new(40.0, -25.0),
        ..centred_geometry()
    }
}

/// Five six-anchor geometries spanning small and large link lengths and
/// both local and world-scale coordinates.
pub fn reference_geometries() -> Vec<Geometry> {
    let world = Point::new(25_000.0, 24_000.0);
    vec![
        bias_geometry(),
        Geometry {
            anchors: vec![
                Point::new(0.0, 0.0),
                Point::new(60.0, 0.0),
                Point::new(0.0, 60.0),
                Point::new(60.0, 60.0),
                Point::new(30.0, -20.0),
                Point::new(90.0, 30.0),
            ],
            truth: Point::new(25.0, 35.0),
        },
        Geometry {
            anchors: circle(world, 40.0, 6),
            truth: world + Point::new(5.0, 12.0),
        },
        Geometry {
            anchors: vec![
                Point::new(-80.0, 5.0),
                Point::new(-40.0, -6.0),
                Point::new(0.0, 8.0),
                Point::new(40.0, -4.0),
                Point::new(80.0, 6.0),
                Point::new(10.0, 30.0),
            ],
            truth: Point::new(15.0, 2.0),
        },
        Geometry {
            anchors: circle(Point::new(1_000.0, -3_000.0), 15.0, 6),
            truth: Point::new(1_003.0, -2_996.0),
        },
    ]
}

/// Sample variance, exactly zero when all samples are equal.
pub fn sample_variance(values: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let (mut n, mut s1, mut s2) = (0usize, 0.0, 0.0);
    for v in values {
        let k = *first.get_or_insert(v);
        let x = v - k;
        n += 1;
        s1 += x;
        s2 += x * x;
    }
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    ((s2 - s1 * s1 / nf) / (nf - 1.0)).max(0.0)
}

fn mc_var_distance_squared(
    d: f64,
    sigma_p: f64,
    params: &PathLossParams,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    sample_variance((0..n).map(|_| {
        let dt = sample_distance(d, sigma_p, params, rng).expect("positive link length");
        dt * dt
    }))
}

fn mc_var_k(p: Point, sigma_a: f64, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    sample_variance((0..n).map(|_| {
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let x = p.x + sigma_a * nx;
        let y = p.y + sigma_a * ny;
        x * x + y * y
    }))
}

/// `Var(d~^2)` and `Var(k~)` against Monte-Carlo on every reference
/// geometry. One `Var(d~^2)` check per link length and one `Var(k~)` check
/// per geometry (its first anchor) and noise level.
pub fn variance_oracles(opts: &OracleOptions, params: &PathLossParams) -> Vec<OracleCheck> {
    let mut rng = stream_rng(opts.seed, Stream::Oracle);
    let mut out = Vec::new();
    for (g, geom) in reference_geometries().iter().enumerate() {
        for &sp in &opts.sigma_p_levels {
            for (i, a) in geom.anchors.iter().enumerate() {
                let d = a.distance(geom.truth);
                let measured = mc_var_distance_squared(d, sp, params, opts.samples, &mut rng);
                out.push(OracleCheck::relative(
                    format!("var_d2 geometry {g} link {i} d={d:.1} sigma_p={sp}"),
                    measured,
                    var_distance_squared(d, sp, params),
                    opts.tolerance,
                ));
            }
        }
        for &sa in &opts.sigma_a_levels {
            let p = geom.anchors[0];
            let measured = mc_var_k(p, sa, opts.samples, &mut rng);
            out.push(OracleCheck::relative(
                format!(
                    "var_k geometry {g} anchor ({:.0},{:.0}) sigma_a={sa}",
                    p.x, p.y
                ),
                measured,
                var_k_tilde(p, sa),
                opts.tolerance,
            ));
        }
    }
    out
}

/// Mean estimate of both variants over repeated noisy localizations of
/// `geom.truth`. Both variants see the same noise in every trial.
pub fn mean_estimates(
    geom: &Geometry,
    sigma_p: f64,
    sigma_a: f64,
    trials: usize,
    channel: &PathLossParams,
    solver: &PathLossParams,
    rng: &mut ChaCha8Rng,
) -> (Point, Point) {
    let mut sums = [Point::ORIGIN; 2];
    let mut counts = [0usize; 2];
    let mut obs = Vec::with_capacity(geom.anchors.len());
    for _ in 0..trials {
        obs.clear();
        for a in &geom.anchors {
            obs.push(AnchorObservation {
                pos_tilde: sample_gps_fix(*a, sigma_a, rng),
                d_tilde: sample_distance(a.distance(geom.truth), sigma_p, channel, rng)
                    .expect("positive link length"),
                sigma_a,
                sigma_p,
            });
        }
        for (k, variant) in [Variant::Wlsr, Variant::Wlsrp].into_iter().enumerate() {
            if let Ok(e) = estimate_position(&obs, solver, variant) {
                sums[k] += e.w_hat;
                counts[k] += 1;
            }
        }
    }
    (
        sums[0] / counts[0].max(1) as f64,
        sums[1] / counts[1].max(1) as f64,
    )
}

/// Passes when the compensated estimator's mean lies closer to the truth
/// than the uncompensated one's. `measured` is the WLSRP bias and
/// `expected` the WLSR bias, both in meters.
pub fn bias_oracle(opts: &OracleOptions, params: &PathLossParams) -> OracleCheck {
    let mut rng = stream_rng(opts.seed ^ 0xB1A5, Stream::Oracle);
    let geom = bias_geometry();
    let solver = PathLossParams {
        eta: params.eta / opts.solver_u_scale,
        ..*params
    };
    let (wlsr, wlsrp) = mean_estimates(
        &geom,
        3.0,
        10.0,
        opts.bias_trials,
        params,
        &solver,
        &mut rng,
    );
    let bias_wlsr = wlsr.distance(geom.truth);
    let bias_wlsrp = wlsrp.distance(geom.truth);
    OracleCheck {
        name: "bias: |mean(wlsrp) - truth| < |mean(wlsr) - truth| (sigma_p=3, sigma_a=10)"
            .to_string(),
        measured: bias_wlsrp,
        expected: bias_wlsr,
        passed: bias_wlsrp < bias_wlsr,
    }
}

pub fn run_oracles(opts: &OracleOptions, params: &PathLossParams) -> Vec<OracleCheck> {
    let mut checks = variance_oracles(opts, params);
    checks.push(bias_oracle(opts, params));
    checks
}
