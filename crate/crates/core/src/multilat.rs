//! Closed-form weighted least-squares multilateration.
//!
//! Squaring the range equations and subtracting the first (reference)
//! anchor's equation gives a linear system `2 A w = b` in the unknown
//! position `w`:
//!
//! ```text
//! A[i] = (x_{i+1} - x_1, y_{i+1} - y_1)
//! b[i] = d_1^2 - d_{i+1}^2 + k_{i+1} - k_1,   k_i = x_i^2 + y_i^2
//! ```
//!
//! Both solvers compute `w = 1/2 (A' S^-1 A)^-1 A' S^-1 (b - c)` and differ
//! only in the covariance `S` of `b` and the bias vector `c`:
//!
//! * [`Variant::Wlsr`] models RSSI noise only and uses `c = 0`.
//! * [`Variant::Wlsrp`] also models anchor position noise and subtracts the
//!   expected bias that log-normal ranging and squared noisy coordinates
//!   introduce into `b`.
//!
//! Variances of the squared range estimates follow from log-normal moments:
//! with `d~ = d exp(beta n)`, `n ~ N(0, sigma_p)` and `u = sqrt(2) beta`,
//! `E[d~^2] = d^2 exp(u^2 sigma_p^2)` and
//! `Var(d~^2) = d^4 (exp(4 u^2 sigma_p^2) - exp(2 u^2 sigma_p^2))`.
//! For Gaussian coordinate noise, `Var(k~) = 4 sigma_a^2 (x^2 + y^2) + 4 sigma_a^4`.
//! True distances and coordinates are unknown at solve time, so the
//! observed `d~` and perturbed coordinates are plugged in.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::channel::PathLossParams;
use crate::geometry::{centroid, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MultilatError {
    #[error("multilateration needs at least 3 anchors, got {0}")]
    InsufficientAnchors(usize),
    #[error("anchor geometry is degenerate (collinear or coincident anchors)")]
    DegenerateGeometry,
    #[error("invalid anchor observation: {0}")]
    InvalidObservation(&'static str),
}

/// What one blind node knows about one anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorObservation {
    /// Perturbed anchor position (the anchor's GPS fix).
    pub pos_tilde: Point,
    /// RSSI-based distance estimate to the anchor.
    pub d_tilde: f64,
    pub sigma_a: f64,
    pub sigma_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Wlsr,
    Wlsrp,
}

/// How a position estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateMethod {
    Wlsr,
    Wlsrp,
    NearestAnchor,
    Gps,
    Borrowed,
    Held,
}

impl EstimateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateMethod::Wlsr => "wlsr",
            EstimateMethod::Wlsrp => "wlsrp",
            EstimateMethod::NearestAnchor => "nearest_anchor",
            EstimateMethod::Gps => "gps",
            EstimateMethod::Borrowed => "borrowed",
            EstimateMethod::Held => "held",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub w_hat: Point,
    pub method: EstimateMethod,
}

/// The multilateration system for one localization instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub variant: Variant,
    /// (N-1) x 2 anchor coordinate differences.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Covariance of `b`, unregularized.
    pub s: DMatrix<f64>,
    /// Bias of `b`; all zeros for WLSR.
    pub c: DVector<f64>,
    /// `x~_i^2 + y~_i^2` for every anchor.
    pub k_tilde: DVector<f64>,
}

/// `Var(d~^2)` for a link of length `d` under `sigma_p` dB shadowing.
pub fn var_distance_squared(d: f64, sigma_p: f64, params: &PathLossParams) -> f64 {
    let g = params.u().powi(2) * sigma_p * sigma_p;
    // d^4 (e^{4g} - e^{2g}) = d^4 e^{2g} (e^{2g} - 1)
    d.powi(4) * (2.0 * g).exp() * (2.0 * g).exp_m1()
}

/// `Var(k~)` for an anchor at `p` with coordinate noise `sigma_a`.
pub fn var_k_tilde(p: Point, sigma_a: f64) -> f64 {
    let s2 = sigma_a * sigma_a;
    4.0 * s2 * p.norm_sq() + 4.0 * s2 * s2
}

/// Relative bias coefficient of `d~^2`: `u^2 sigma_p^2 + u^4 sigma_p^4 / 2`.
pub fn bias_coefficient(sigma_p: f64, params: &PathLossParams) -> f64 {
    let g = params.u().powi(2) * sigma_p * sigma_p;
    g + 0.5 * g * g
}

fn check_anchors(anchors: &[AnchorObservation]) -> Result<(), MultilatError> {
    if anchors.len() < 3 {
        return Err(MultilatError::InsufficientAnchors(anchors.len()));
    }
    for a in anchors {
        if !(a.d_tilde > 0.0 && a.d_tilde.is_finite()) {
            return Err(MultilatError::InvalidObservation(
                "distance estimates must be positive",
            ));
        }
        if !(a.sigma_a >= 0.0 && a.sigma_p >= 0.0) {
            return Err(MultilatError::InvalidObservation(
                "noise levels must be non-negative",
            ));
        }
        if !a.pos_tilde.is_finite() {
            return Err(MultilatError::InvalidObservation(
                "anchor position must be finite",
            ));
        }
    }
    Ok(())
}

fn structured_covariance(diag_terms: &[f64]) -> DMatrix<f64> {
    // S[i][i] = t_1 + t_{i+1}, S[i][j] = t_1
    let n = diag_terms.len() - 1;
    let shared = diag_terms[0];
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            shared + diag_terms[i + 1]
        } else {
            shared
        }
    })
}

/// Covariance of `b` when only the ranges are noisy.
pub fn wlsr_covariance(
    anchors: &[AnchorObservation],
    params: &PathLossParams,
) -> Result<DMatrix<f64>, MultilatError> {
    check_anchors(anchors)?;
    let terms: Vec<f64> = anchors
        .iter()
        .map(|a| var_distance_squared(a.d_tilde, a.sigma_p, params))
        .collect();
    Ok(structured_covariance(&terms))
}

/// Covariance of `b` with both range and anchor-position noise.
///
/// `Var(k~)` depends on where the coordinate origin sits; anchor
/// coordinates are taken relative to the anchors' centroid so the weights
/// do not depend on the global frame.
pub fn wlsrp_covariance(
    anchors: &[AnchorObservation],
    params: &PathLossParams,
) -> Result<DMatrix<f64>, MultilatError> {
    check_anchors(anchors)?;
    let origin = centroid(anchors.iter().map(|a| a.pos_tilde)).unwrap_or(Point::ORIGIN);
    let terms: Vec<f64> = anchors
        .iter()
        .map(|a| {
            var_distance_squared(a.d_tilde, a.sigma_p, params)
                + var_k_tilde(a.pos_tilde - origin, a.sigma_a)
        })
        .collect();
    Ok(structured_covariance(&terms))
}

/// Builds `A`, `b`, `S`, `c` and `k~` with the first anchor as reference.
pub fn build_system(
    anchors: &[AnchorObservation],
    params: &PathLossParams,
    variant: Variant,
) -> Result<LinearSystem, MultilatError> {
    check_anchors(anchors)?;
    let n = anchors.len();
    let k_tilde = DVector::from_iterator(n, anchors.iter().map(|a| a.pos_tilde.norm_sq()));
    let r = anchors[0];
    let a = DMatrix::from_fn(n - 1, 2, |i, j| {
        let p = anchors[i + 1].pos_tilde;
        if j == 0 {
            p.x - r.pos_tilde.x
        } else {
            p.y - r.pos_tilde.y
        }
    });
    let d1_sq = r.d_tilde * r.d_tilde;
    let b = DVector::from_fn(n - 1, |i, _| {
        let di = anchors[i + 1].d_tilde;
        d1_sq - di * di + k_tilde[i + 1] - k_tilde[0]
    });
    let (s, c) = match variant {
        Variant::Wlsr => (wlsr_covariance(anchors, params)?, DVector::zeros(n - 1)),
        Variant::Wlsrp => {
            let kappa_1 = bias_coefficient(r.sigma_p, params);
            let c = DVector::from_fn(n - 1, |i, _| {
                let ai = anchors[i + 1];
                let kappa_i = bias_coefficient(ai.sigma_p, params);
                kappa_1 * d1_sq - kappa_i * ai.d_tilde * ai.d_tilde
                    + 2.0 * (ai.sigma_a * ai.sigma_a - r.sigma_a * r.sigma_a)
            });
            (wlsrp_covariance(anchors, params)?, c)
        }
    };
    Ok(LinearSystem {
        variant,
        a,
        b,
        s,
        c,
        k_tilde,
    })
}

/// Adds `1e-9 * trace(S) / n` (or `1e-9` for a zero trace) to the diagonal.
pub fn regularize(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows().max(1);
    let trace = s.trace();
    let eps = if trace > 0.0 {
        1e-9 * trace / n as f64
    } else {
        1e-9
    };
    let mut out = s.clone();
    for i in 0..s.nrows() {
        out[(i, i)] += eps;
    }
    out
}

/// Weighted least-squares solution of the system.
pub fn solve(system: &LinearSystem) -> Result<PositionEstimate, MultilatError> {
    let s = regularize(&system.s);
    let rhs = &system.b - &system.c;
    let (s_inv_a, s_inv_rhs) = match s.clone().cholesky() {
        Some(ch) => (ch.solve(&system.a), ch.solve(&rhs)),
        None => {
            let lu = s.lu();
            let sa = lu
                .solve(&system.a)
                .ok_or(MultilatError::DegenerateGeometry)?;
            let sr = lu.solve(&rhs).ok_or(MultilatError::DegenerateGeometry)?;
            (sa, sr)
        }
    };
    let normal: Matrix2<f64> = (system.a.transpose() * &s_inv_a)
        .fixed_view::<2, 2>(0, 0)
        .into();
    let proj = system.a.transpose() * &s_inv_rhs;
    let proj = Vector2::new(proj[0], proj[1]);

    let det = normal.determinant();
    let scale = normal[(0, 0)] * normal[(1, 1)];
    if !det.is_finite() || det <= 1e-10 * scale {
        return Err(MultilatError::DegenerateGeometry);
    }
    let inv = normal
        .try_inverse()
        .ok_or(MultilatError::DegenerateGeometry)?;
    let w = 0.5 * inv * proj;
    let w_hat = Point::new(w[0], w[1]);
    if !w_hat.is_finite() {
        return Err(MultilatError::DegenerateGeometry);
    }
    let method = match system.variant {
        Variant::Wlsr => EstimateMethod::Wlsr,
        Variant::Wlsrp => EstimateMethod::Wlsrp,
    };
    Ok(PositionEstimate { w_hat, method })
}

/// Build, weight and solve in one call.
pub fn estimate_position(
    anchors: &[AnchorObservation],
    params: &PathLossParams,
    variant: Variant,
) -> Result<PositionEstimate, MultilatError> {
    solve(&build_system(anchors, params, variant)?)
}
