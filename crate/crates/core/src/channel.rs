//! Perturbed GPS fixes and log-normal shadowed RSSI ranging.
//!
//! GPS fixes carry independent zero-mean Gaussian noise on each axis with a
//! per-node standard deviation. RSSI follows the log-distance path-loss
//! model with additive Gaussian shadowing in the dB domain; inverting the
//! model turns a received power into a (biased, log-normal) distance
//! estimate.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("invalid path-loss parameters: {0}")]
    InvalidParams(&'static str),
}

/// Log-distance path-loss model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    /// Reference distance, meters.
    pub d0: f64,
    /// Received power at `d0`, dBm.
    pub p0: f64,
    /// Path-loss exponent.
    pub eta: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            d0: 1.0,
            p0: -33.44,
            eta: 3.567,
        }
    }
}

impl PathLossParams {
    pub fn new(d0: f64, p0: f64, eta: f64) -> Result<Self, ChannelError> {
        let params = Self { d0, p0, eta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(ChannelError::InvalidParams("d0 must be positive"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ChannelError::InvalidParams("eta must be positive"));
        }
        if !self.p0.is_finite() {
            return Err(ChannelError::InvalidParams("p0 must be finite"));
        }
        Ok(())
    }

    /// `u = ln 10 / (5 sqrt(2) eta)`, the scale of the log-normal distance
    /// error. Always derived from `eta`.
    pub fn u(&self) -> f64 {
        std::f64::consts::LN_10 / (5.0 * std::f64::consts::SQRT_2 * self.eta)
    }

    /// Natural-log distance error per dB of shadowing: `d~ = d exp(beta n)`.
    pub fn beta(&self) -> f64 {
        std::f64::consts::LN_10 / (10.0 * self.eta)
    }
}

/// Per-node GPS and per-link RSSI noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseProfile {
    /// Anchor position noise std, meters (both axes).
    pub sigma_a: f64,
    /// RSSI shadowing std, dB.
    pub sigma_p: f64,
}

/// Noise-free received power at distance `d`, dBm.
pub fn rssi_expected(d: f64, params: &PathLossParams) -> Result<f64, ChannelError> {
    if d.is_nan() || d <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(d));
    }
    Ok(params.p0 - 10.0 * params.eta * (d / params.d0).log10())
}

/// One shadowed RSSI draw at distance `d`.
pub fn sample_rssi<R: Rng + ?Sized>(
    d: f64,
    sigma_p: f64,
    params: &PathLossParams,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    let mean = rssi_expected(d, params)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(mean + sigma_p * z)
}

/// Distance implied by a received power, meters. Exact inverse of
/// [`rssi_expected`].
pub fn invert_rssi(p_tilde: f64, params: &PathLossParams) -> f64 {
    params.d0 * 10f64.powf((params.p0 - p_tilde) / (10.0 * params.eta))
}

/// Convenience: RSSI-based distance estimate for a link of true length `d`.
pub fn sample_distance<R: Rng + ?Sized>(
    d: f64,
    sigma_p: f64,
    params: &PathLossParams,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    Ok(invert_rssi(sample_rssi(d, sigma_p, params, rng)?, params))
}

/// A GPS fix of `true_pos` with isotropic Gaussian error.
pub fn sample_gps_fix<R: Rng + ?Sized>(true_pos: Point, sigma_a: f64, rng: &mut R) -> Point {
    let nx: f64 = rng.sample(StandardNormal);
    let ny: f64 = rng.sample(StandardNormal);
    Point::new(true_pos.x + sigma_a * nx, true_pos.y + sigma_a * ny)
}

/// Closed-form mean of the RSSI distance estimate: `d exp(beta^2 sigma_p^2 / 2)`.
pub fn expected_distance_estimate(d: f64, sigma_p: f64, params: &PathLossParams) -> f64 {
    let b = params.beta() * sigma_p;
    d * (0.5 * b * b).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn expected_rssi_reference_values() {
        let p = PathLossParams::default();
        assert_eq!(rssi_expected(1.0, &p).unwrap(), -33.44);
        assert!(close(rssi_expected(10.0, &p).unwrap(), -69.11, 1e-9));
        assert!(close(rssi_expected(100.0, &p).unwrap(), -104.78, 1e-9));
    }

    #[test]
    fn nonpositive_distance_rejected() {
        let p = PathLossParams::default();
        assert!(matches!(
            rssi_expected(0.0, &p),
            Err(ChannelError::NonPositiveDistance(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_rssi(-1.0, 1.0, &p, &mut rng).is_err());
    }

    #[test]
    fn inversion_reference_values() {
        let p = PathLossParams::default();
        assert!(close(invert_rssi(-33.44, &p), 1.0, 1e-12));
        assert!(close(invert_rssi(-69.11, &p), 10.0, 1e-9));
        let d = 57.3;
        let back = invert_rssi(rssi_expected(d, &p).unwrap(), &p);
        assert!(((back - d) / d).abs() < 1e-9);
    }

    #[test]
    fn zero_sigma_is_noise_free() {
        let p = PathLossParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            sample_rssi(10.0, 0.0, &p, &mut rng).unwrap(),
            rssi_expected(10.0, &p).unwrap()
        );
        let q = Point::new(12.5, -3.0);
        assert_eq!(sample_gps_fix(q, 0.0, &mut rng), q);
    }

    #[test]
    fn u_tracks_eta() {
        let mut p = PathLossParams::default();
        let u1 = p.u();
        p.eta *= 2.0;
        assert!(close(p.u(), u1 / 2.0, 1e-15));
        assert!(close(p.u(), std::f64::consts::SQRT_2 * p.beta(), 1e-15));
        assert!(PathLossParams::new(1.0, -30.0, 0.0).is_err());
        assert!(PathLossParams::new(0.0, -30.0, 2.0).is_err());
    }
}
