//! Conjugate-family parameter containers, moments, and closed-form evidence
//! terms shared by both filters.
//!
//! A single extended-object hypothesis carries a gamma density over its
//! measurement rate, a Gaussian over its kinematic state and an
//! inverse-Wishart over its 2x2 extent matrix. Everything evidence-related is
//! computed in the log domain; cells of ten or more measurements underflow
//! linear likelihoods.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    inv2, ln_det2, ln_gamma, ln_gamma2, sym_inv_sqrt2, sym_sqrt2, symmetrize2,
};
use crate::models::{converted_noise_cov, MeasModel, StateCov, StateVector};

/// Extent dimension. All models in this crate are planar.
pub const EXTENT_DIM: usize = 2;

/// Shape/rate parameters of a gamma density over the measurement rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    /// Shape, > 0.
    pub alpha: f64,
    /// Rate, > 0.
    pub beta: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Expected measurement rate alpha/beta.
    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Variance alpha/beta^2.
    pub fn variance(&self) -> f64 {
        self.alpha / (self.beta * self.beta)
    }
}

/// Mean and covariance of a Gaussian over the 5-dimensional kinematic state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: StateVector,
    pub cov: StateCov,
}

impl GaussianParams {
    pub fn new(mean: StateVector, cov: StateCov) -> Self {
        Self { mean, cov }
    }
}

/// Degrees of freedom and scale matrix of an inverse-Wishart density over the
/// 2x2 extent matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseWishartParams {
    /// Degrees of freedom; the mean exists for dof > 2d + 2.
    pub dof: f64,
    /// Symmetric positive-definite scale matrix.
    pub scale: Matrix2<f64>,
}

impl InverseWishartParams {
    pub fn new(dof: f64, scale: Matrix2<f64>) -> Self {
        Self { dof, scale }
    }

    /// Mean divisor dof - 2d - 2.
    fn mean_divisor(&self) -> f64 {
        self.dof - 2.0 * EXTENT_DIM as f64 - 2.0
    }

    /// Expected extent matrix scale / (dof - 2d - 2).
    pub fn mean(&self) -> Result<Matrix2<f64>> {
        let div = self.mean_divisor();
        if div <= 0.0 {
            return Err(Error::DofTooSmall {
                dof: self.dof,
                min: 2.0 * EXTENT_DIM as f64 + 2.0,
            });
        }
        Ok(self.scale / div)
    }
}

/// Full GGIW parameter set: rate, kinematics and extent of one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgiwParams {
    pub rate: GammaParams,
    pub kin: GaussianParams,
    pub ext: InverseWishartParams,
}

/// Probability of observing `n` detections from an object whose Poisson rate
/// carries the gamma prior `g`: the negative-binomial mass
/// Gamma(a+n)/(Gamma(a) n!) (b/(b+1))^a (1/(b+1))^n.
pub fn cell_count_evidence(g: &GammaParams, n: usize) -> f64 {
    ln_cell_count_evidence(g, n).exp()
}

/// Log of [`cell_count_evidence`].
pub fn ln_cell_count_evidence(g: &GammaParams, n: usize) -> f64 {
    let nf = n as f64;
    ln_gamma(g.alpha + nf) - ln_gamma(g.alpha) - ln_gamma(nf + 1.0) + g.alpha * g.beta.ln()
        - (g.alpha + nf) * (g.beta + 1.0).ln()
}

/// Sufficient statistics of one measurement cell: cardinality, centroid and
/// centered scatter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub count: usize,
    pub centroid: Vector2<f64>,
    pub scatter: Matrix2<f64>,
}

impl CellStats {
    pub fn from_points(points: &[Vector2<f64>]) -> Self {
        let n = points.len();
        assert!(n > 0, "cell must be non-empty");
        let centroid = points.iter().sum::<Vector2<f64>>() / n as f64;
        let mut scatter = Matrix2::zeros();
        for p in points {
            let d = p - centroid;
            scatter += d * d.transpose();
        }
        Self {
            count: n,
            centroid,
            scatter: symmetrize2(&scatter),
        }
    }
}

/// Per-cell conjugate update quantities of one GGIW component, reused by the
/// evidence computation and by both filter updates.
#[derive(Debug, Clone)]
pub struct GiwCellTerms {
    /// Cell cardinality.
    pub count: usize,
    /// Centroid innovation z_bar - Hm.
    pub innovation: Vector2<f64>,
    /// Innovation covariance S = HPH' + Rhat/|W|.
    pub innovation_cov: Matrix2<f64>,
    /// S^{-1}.
    pub innovation_cov_inv: Matrix2<f64>,
    /// Scale increment Nhat + Zhat added to the inverse-Wishart scale.
    pub scale_increment: Matrix2<f64>,
    /// Log Gaussian-inverse-Wishart evidence of the cell (spatial part only).
    pub ln_giw_evidence: f64,
}

/// Computes the conjugate update quantities and the spatial evidence of a
/// cell against one GGIW component.
///
/// The evidence is the ratio of posterior to prior normalization constants of
/// the conjugate update: the centroid is absorbed through the innovation pair
/// (eps, S), the spread through the whitened scatter and innovation outer
/// products Zhat and Nhat. Clutter normalization is applied by the filters,
/// not here.
pub fn giw_cell_terms(
    params: &GgiwParams,
    cell: &CellStats,
    mm: &MeasModel,
) -> Result<GiwCellTerms> {
    let d = EXTENT_DIM as f64;
    let n = cell.count as f64;
    let x_hat = params.ext.mean()?;
    let predicted_pos = mm.observe(&params.kin.mean);
    let r_hat = symmetrize2(&(mm.rho * x_hat + converted_noise_cov(&predicted_pos, mm)?));
    let hph = mm.project_cov(&params.kin.cov);
    let s = symmetrize2(&(hph + r_hat / n));
    let s_inv = inv2(&s, "cell innovation covariance")?;
    let eps = cell.centroid - predicted_pos;

    let x_sqrt = sym_sqrt2(&x_hat);
    let s_inv_sqrt = sym_inv_sqrt2(&s);
    let r_inv_sqrt = sym_inv_sqrt2(&r_hat);
    let n_hat = {
        let t = x_sqrt * s_inv_sqrt * eps;
        t * t.transpose()
    };
    let z_hat = {
        let t = x_sqrt * r_inv_sqrt;
        symmetrize2(&(t * cell.scatter * t.transpose()))
    };
    let scale_increment = symmetrize2(&(n_hat + z_hat));

    let v = params.ext.dof;
    let v_post = v + n;
    let scale_post = params.ext.scale + scale_increment;

    let ln_det_s = ln_det2(&s, "cell innovation covariance")?;
    let ln_det_rhat = ln_det2(&r_hat, "cell measurement spread")?;
    let ln_det_xhat = ln_det2(&x_hat, "extent mean")?;
    let ln_det_scale = ln_det2(&params.ext.scale, "extent scale")?;
    let ln_det_scale_post = ln_det2(&scale_post, "posterior extent scale")?;

    let ln_giw_evidence = -(n * d / 2.0) * std::f64::consts::PI.ln() - (d / 2.0) * n.ln()
        - 0.5 * ln_det_s
        - ((n - 1.0) / 2.0) * ln_det_rhat
        + (n / 2.0) * ln_det_xhat
        + ln_gamma2((v_post - d - 1.0) / 2.0)
        - ln_gamma2((v - d - 1.0) / 2.0)
        + ((v - d - 1.0) / 2.0) * ln_det_scale
        - ((v_post - d - 1.0) / 2.0) * ln_det_scale_post;

    Ok(GiwCellTerms {
        count: cell.count,
        innovation: eps,
        innovation_cov: s,
        innovation_cov_inv: s_inv,
        scale_increment,
        ln_giw_evidence,
    })
}

/// Log marginal likelihood of a measurement cell under one predicted GGIW
/// component: the count factor of [`cell_count_evidence`] times the
/// Gaussian-inverse-Wishart evidence of [`giw_cell_terms`].
pub fn cell_evidence(params: &GgiwParams, cell: &[Vector2<f64>], mm: &MeasModel) -> Result<f64> {
    assert!(!cell.is_empty(), "cell must be non-empty");
    let stats = CellStats::from_points(cell);
    let terms = giw_cell_terms(params, &stats, mm)?;
    Ok(ln_cell_count_evidence(&params.rate, cell.len()) + terms.ln_giw_evidence)
}

/// Log of the set-density form of the cell likelihood used inside the PHD
/// weight arithmetic; differs from [`cell_evidence`] by + ln(|W|!).
pub(crate) fn ln_cell_evidence_set(
    params: &GgiwParams,
    stats: &CellStats,
    mm: &MeasModel,
) -> Result<(f64, GiwCellTerms)> {
    let terms = giw_cell_terms(params, stats, mm)?;
    let ln_set_count = ln_cell_count_evidence(&params.rate, stats.count)
        + ln_gamma(stats.count as f64 + 1.0);
    Ok((ln_set_count + terms.ln_giw_evidence, terms))
}

/// Probability of zero detections under the gamma-Poisson rate model along
/// with the moment-matched gamma of the two-branch missed-detection mixture
/// {(a, b) with 1 - Pd, (a, b+1) with Pd (b/(b+1))^a}.
pub(crate) fn missed_detection_reduction(g: &GammaParams, p_detect: f64) -> (f64, GammaParams) {
    let zero_prob = (g.alpha * (g.beta.ln() - (g.beta + 1.0).ln())).exp();
    let w1 = 1.0 - p_detect;
    let w2 = p_detect * zero_prob;
    let q = w1 + w2;
    if q <= 0.0 {
        // Pd = 1 and zero-probability underflow: keep the (a, b+1) branch.
        return (0.0, GammaParams::new(g.alpha, g.beta + 1.0));
    }
    let (p1, p2) = (w1 / q, w2 / q);
    let m1 = g.alpha / g.beta;
    let m2 = g.alpha / (g.beta + 1.0);
    let mean = p1 * m1 + p2 * m2;
    let second = p1 * (g.alpha / (g.beta * g.beta) + m1 * m1)
        + p2 * (g.alpha / ((g.beta + 1.0) * (g.beta + 1.0)) + m2 * m2);
    let var = (second - mean * mean).max(1e-300);
    (q, GammaParams::new(mean * mean / var, mean / var))
}
