//! Single-object motion, extent-transition, measurement-rate, and measurement
//! models shared by both filters and the simulator.
//!
//! The kinematic state is the length-5 vector [px, py, v, phi, omega]:
//! planar position, speed, heading and yaw rate. Headings are kept unwrapped
//! during filtering; wrap only for display.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::distributions::{GammaParams, InverseWishartParams, EXTENT_DIM};
use crate::error::{Error, Result};
use crate::linalg::rotation2;

/// Kinematic state or Gaussian mean [px, py, v, phi, omega].
pub type StateVector = SVector<f64, 5>;
/// 5x5 kinematic covariance.
pub type StateCov = SMatrix<f64, 5, 5>;

/// Index of the x position in a state vector.
pub const IDX_PX: usize = 0;
/// Index of the y position.
pub const IDX_PY: usize = 1;
/// Index of the speed.
pub const IDX_SPEED: usize = 2;
/// Index of the heading.
pub const IDX_HEADING: usize = 3;
/// Index of the yaw rate.
pub const IDX_YAW_RATE: usize = 4;

/// Position block of a state vector.
pub fn position_of(x: &StateVector) -> Vector2<f64> {
    Vector2::new(x[IDX_PX], x[IDX_PY])
}

/// Motion model configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    /// Sampling period (s).
    pub ts: f64,
    /// Velocity noise standard deviation (m/s).
    pub sigma_v: f64,
    /// Yaw-rate noise standard deviation (rad/s).
    pub sigma_omega: f64,
    /// Extent transition degrees of freedom; higher means a more certain
    /// extent evolution.
    pub n_e: f64,
    /// Measurement-rate forgetting factor, > 1.
    pub eta: f64,
    /// Extent dof forgetting time constant (s).
    pub tau_ext: f64,
}

impl MotionConfig {
    /// Time constant such that the one-step extent dof retention matches a
    /// Wishart transition with `n_e` degrees of freedom, evaluated at the
    /// birth dof `v0`.
    pub fn tau_ext_from_wishart_dof(ts: f64, n_e: f64, v0: f64) -> f64 {
        let retention = n_e / (n_e + v0 - 2.0 * EXTENT_DIM as f64 - 2.0);
        -ts / retention.ln()
    }
}

/// Converted-measurement model: range/bearing noise mapped into Cartesian
/// coordinates, plus the extent scaling of the measurement spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasModel {
    /// Range noise standard deviation (m).
    pub sigma_r: f64,
    /// Bearing noise standard deviation (rad).
    pub sigma_phi: f64,
    /// Extent scaling of the measurement spread, 0 < rho <= 1.
    pub rho: f64,
}

impl MeasModel {
    /// Observation matrix H = [I2 | 0].
    pub fn observation_matrix(&self) -> SMatrix<f64, 2, 5> {
        let mut h = SMatrix::<f64, 2, 5>::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        h
    }

    /// H x: the position block of a state.
    pub fn observe(&self, x: &StateVector) -> Vector2<f64> {
        position_of(x)
    }

    /// H P H': the position block of a covariance.
    pub fn project_cov(&self, p: &StateCov) -> Matrix2<f64> {
        p.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

/// Constant-turn-rate transition x + [Ts v cos phi, Ts v sin phi, 0, Ts w, 0].
pub fn predict_kinematics(x: &StateVector, cfg: &MotionConfig) -> StateVector {
    let mut out = *x;
    out[IDX_PX] += cfg.ts * x[IDX_SPEED] * x[IDX_HEADING].cos();
    out[IDX_PY] += cfg.ts * x[IDX_SPEED] * x[IDX_HEADING].sin();
    out[IDX_HEADING] += cfg.ts * x[IDX_YAW_RATE];
    out
}

/// Jacobian of [`predict_kinematics`] at `x`.
pub fn kinematics_jacobian(x: &StateVector, cfg: &MotionConfig) -> StateCov {
    let mut f = StateCov::identity();
    let (s, c) = x[IDX_HEADING].sin_cos();
    f[(IDX_PX, IDX_SPEED)] = cfg.ts * c;
    f[(IDX_PX, IDX_HEADING)] = -cfg.ts * x[IDX_SPEED] * s;
    f[(IDX_PY, IDX_SPEED)] = cfg.ts * s;
    f[(IDX_PY, IDX_HEADING)] = cfg.ts * x[IDX_SPEED] * c;
    f[(IDX_HEADING, IDX_YAW_RATE)] = cfg.ts;
    f
}

/// Process noise Q with variance only on speed and yaw rate.
pub fn process_noise(cfg: &MotionConfig) -> StateCov {
    let mut q = StateCov::zeros();
    q[(IDX_SPEED, IDX_SPEED)] = cfg.ts * cfg.ts * cfg.sigma_v * cfg.sigma_v;
    q[(IDX_YAW_RATE, IDX_YAW_RATE)] = cfg.ts * cfg.ts * cfg.sigma_omega * cfg.sigma_omega;
    q
}

/// Rotates an extent matrix by the turn angle omega * Ts.
pub fn rotate_extent(extent: &Matrix2<f64>, omega: f64, ts: f64) -> Matrix2<f64> {
    let m = rotation2(omega * ts);
    m * extent * m.transpose()
}

/// Predicts the inverse-Wishart extent density one step ahead: the dof decays
/// toward the existence floor with time constant `tau_ext`, and the scale is
/// rotated and rescaled so the predicted mean is exactly the rotated mean.
pub fn predict_extent(
    iw: &InverseWishartParams,
    x: &StateVector,
    cfg: &MotionConfig,
) -> InverseWishartParams {
    let floor = 2.0 * EXTENT_DIM as f64 + 2.0;
    let decay = (-cfg.ts / cfg.tau_ext).exp();
    let dof = floor + decay * (iw.dof - floor);
    let m = rotation2(x[IDX_YAW_RATE] * cfg.ts);
    let scale = ((dof - floor) / (iw.dof - floor)) * m * iw.scale * m.transpose();
    InverseWishartParams::new(dof, scale)
}

/// Rate forgetting: divides both gamma parameters by eta, preserving the mean
/// and scaling the variance by eta.
pub fn predict_rate(g: &GammaParams, cfg: &MotionConfig) -> GammaParams {
    GammaParams::new(g.alpha / cfg.eta, g.beta / cfg.eta)
}

/// Converts a polar measurement to Cartesian coordinates.
pub fn polar_to_cartesian(r: f64, phi: f64) -> Vector2<f64> {
    Vector2::new(r * phi.cos(), r * phi.sin())
}

/// First-order converted measurement noise covariance at position `p`:
/// R = J diag(sigma_r^2, sigma_phi^2) J' with J the polar-to-Cartesian
/// Jacobian. Models the non-constant across-range noise variance.
pub fn converted_noise_cov(p: &Vector2<f64>, mm: &MeasModel) -> Result<Matrix2<f64>> {
    let r = p.norm();
    if r < 1e-9 {
        return Err(Error::DegeneratePosition);
    }
    let phi = p[1].atan2(p[0]);
    let (s, c) = phi.sin_cos();
    let j = Matrix2::new(c, -r * s, s, r * c);
    let d = Matrix2::new(mm.sigma_r * mm.sigma_r, 0.0, 0.0, mm.sigma_phi * mm.sigma_phi);
    Ok(j * d * j.transpose())
}
