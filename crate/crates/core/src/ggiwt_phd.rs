//! PHD filter over sets of trajectories of extended objects: trajectory-state
//! components, prediction and update over whole state histories,
//! absorption-based reduction, trajectory extraction, and post-extraction
//! extent smoothing.
//!
//! A trajectory component stacks the kinematic means of every step of one
//! hypothesized object into a single Gaussian, so a measurement update at the
//! newest step smooths the whole history through the cross-covariances. The
//! extent is kept as a per-step inverse-Wishart sequence and smoothed
//! backward after extraction, which needs the predicted extent parameters of
//! every step to be stored alongside the filtered ones.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::distributions::{
    CellStats, GammaParams, GgiwParams, GiwCellTerms, InverseWishartParams,
};
use crate::error::Result;
use crate::ggiw_phd::FilterConfig;
use crate::linalg::{is_spd2, rotation2, symmetrize2};
use crate::models::{
    kinematics_jacobian, predict_extent, predict_kinematics, predict_rate, process_noise,
    MeasModel, MotionConfig, StateCov, StateVector, IDX_YAW_RATE,
};
use crate::partitioning::{default_eps_grid, generate_partitions, Partition};
use crate::update::{phd_update, PhdComponent};

/// State dimension of one trajectory step.
const STEP: usize = 5;

/// One weighted GGIW trajectory hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryComponent {
    pub weight: f64,
    /// Scan index at which the trajectory was born.
    pub birth_time: usize,
    /// Measurement-rate parameters, not tracked per step.
    pub rate: GammaParams,
    /// Stacked per-step kinematic means, length 5n.
    pub traj_mean: DVector<f64>,
    /// Stacked covariance, 5n x 5n.
    pub traj_cov: DMatrix<f64>,
    /// Per-step extent degrees of freedom.
    pub ext_dofs: Vec<f64>,
    /// Per-step extent scale matrices.
    pub ext_scales: Vec<Matrix2<f64>>,
    /// Per-step predicted extent parameters (dof, scale), recorded at
    /// prediction time and never rewritten; the birth prior stands in for the
    /// birth step. Required by the extent smoother.
    pub pred_ext: Vec<(f64, Matrix2<f64>)>,
}

impl TrajectoryComponent {
    /// Number of steps in the trajectory.
    pub fn len(&self) -> usize {
        self.ext_dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ext_dofs.is_empty()
    }

    /// Kinematic mean of step `i`.
    pub fn state_at(&self, i: usize) -> StateVector {
        StateVector::from_column_slice(&self.traj_mean.as_slice()[STEP * i..STEP * (i + 1)])
    }

    /// Marginal mean of the newest step.
    pub fn last_state_mean(&self) -> StateVector {
        self.state_at(self.len() - 1)
    }

    /// Marginal covariance of the newest step.
    pub fn last_state_cov(&self) -> StateCov {
        let base = STEP * (self.len() - 1);
        StateCov::from_fn(|r, c| self.traj_cov[(base + r, base + c)])
    }

    fn last_ext(&self) -> InverseWishartParams {
        InverseWishartParams::new(*self.ext_dofs.last().unwrap(), *self.ext_scales.last().unwrap())
    }
}

/// GGIWT mixture intensity at one scan.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryMixture {
    pub components: Vec<TrajectoryComponent>,
    /// Index of the next scan to be processed.
    pub time: usize,
    /// Label source for births; labels are not used by this filter but keep
    /// the update arithmetic shared with the labeled baseline.
    pub next_label: u64,
}

impl TrajectoryMixture {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }
}

/// One extracted trajectory: per-step kinematic means and extent matrices
/// from its birth scan onward.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedTrajectory {
    pub birth_time: usize,
    pub states: Vec<StateVector>,
    pub extents: Vec<Matrix2<f64>>,
    /// Expected measurement rate.
    pub rate: f64,
    pub alive: bool,
    /// Steps where extent smoothing fell back to the filtered value because
    /// the smoothed scale lost positive definiteness.
    pub extent_fallback_steps: Vec<usize>,
}

impl EstimatedTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl PhdComponent for TrajectoryComponent {
    fn weight(&self) -> f64 {
        self.weight
    }

    fn rate(&self) -> &GammaParams {
        &self.rate
    }

    fn last_ggiw(&self) -> GgiwParams {
        GgiwParams {
            rate: self.rate,
            kin: crate::distributions::GaussianParams::new(
                self.last_state_mean(),
                self.last_state_cov(),
            ),
            ext: self.last_ext(),
        }
    }

    fn with_missed_update(&self, new_weight: f64, new_rate: GammaParams) -> Self {
        let mut out = self.clone();
        out.weight = new_weight;
        out.rate = new_rate;
        out
    }

    fn with_detection_update(
        &self,
        terms: &GiwCellTerms,
        stats: &CellStats,
        new_weight: f64,
        cfg: &FilterConfig,
    ) -> Self {
        let n = self.len();
        let dim = STEP * n;
        let base = STEP * (n - 1);
        // gain K = P Hring' S^{-1}; Hring selects the newest position block,
        // so P Hring' is two stored columns of the trajectory covariance
        let mut gain = DMatrix::<f64>::zeros(dim, 2);
        for r in 0..dim {
            for c in 0..2 {
                gain[(r, c)] = self.traj_cov[(r, base)] * terms.innovation_cov_inv[(0, c)]
                    + self.traj_cov[(r, base + 1)] * terms.innovation_cov_inv[(1, c)];
            }
        }
        if let Some(l) = cfg.l_scan {
            // window truncation: steps older than the last l are frozen
            let keep_from = dim.saturating_sub(STEP * l);
            for r in 0..keep_from {
                gain[(r, 0)] = 0.0;
                gain[(r, 1)] = 0.0;
            }
        }
        let mean = &self.traj_mean + &gain * terms.innovation;
        let mut cov = &self.traj_cov - &gain * terms.innovation_cov * gain.transpose();
        for r in 0..dim {
            for c in (r + 1)..dim {
                let v = 0.5 * (cov[(r, c)] + cov[(c, r)]);
                cov[(r, c)] = v;
                cov[(c, r)] = v;
            }
        }
        let mut ext_dofs = self.ext_dofs.clone();
        let mut ext_scales = self.ext_scales.clone();
        *ext_dofs.last_mut().unwrap() += stats.count as f64;
        let last = ext_scales.last_mut().unwrap();
        *last = symmetrize2(&(*last + terms.scale_increment));
        Self {
            weight: new_weight,
            birth_time: self.birth_time,
            rate: GammaParams::new(self.rate.alpha + stats.count as f64, self.rate.beta + 1.0),
            traj_mean: mean,
            traj_cov: cov,
            ext_dofs,
            ext_scales,
            pred_ext: self.pred_ext.clone(),
        }
    }

    fn birth_from(
        posterior: GgiwParams,
        prior_ext: InverseWishartParams,
        birth_time: usize,
        _label: u64,
        weight: f64,
    ) -> Self {
        let mut traj_cov = DMatrix::<f64>::zeros(STEP, STEP);
        for r in 0..STEP {
            for c in 0..STEP {
                traj_cov[(r, c)] = posterior.kin.cov[(r, c)];
            }
        }
        Self {
            weight,
            birth_time,
            rate: posterior.rate,
            traj_mean: DVector::from_column_slice(posterior.kin.mean.as_slice()),
            traj_cov,
            ext_dofs: vec![posterior.ext.dof],
            ext_scales: vec![posterior.ext.scale],
            pred_ext: vec![(prior_ext.dof, prior_ext.scale)],
        }
    }
}

/// Prediction: every surviving trajectory is extended by one step. History
/// blocks are appended to, never rewritten.
pub fn predict(
    mix: &TrajectoryMixture,
    cfg: &FilterConfig,
    motion: &MotionConfig,
) -> TrajectoryMixture {
    let q = process_noise(motion);
    let mut components: Vec<TrajectoryComponent> = mix
        .components
        .iter()
        .map(|c| {
            let n = c.len();
            let dim = STEP * n;
            let last = c.last_state_mean();
            let f = kinematics_jacobian(&last, motion);
            let new_block = predict_kinematics(&last, motion);

            let mut mean = DVector::<f64>::zeros(dim + STEP);
            mean.rows_mut(0, dim).copy_from(&c.traj_mean);
            mean.rows_mut(dim, STEP)
                .copy_from(&DVector::from_column_slice(new_block.as_slice()));

            // cross terms only against the newest block: C F' where C is the
            // last block-column of the stored covariance
            let base = dim - STEP;
            let mut cov = DMatrix::<f64>::zeros(dim + STEP, dim + STEP);
            cov.view_mut((0, 0), (dim, dim)).copy_from(&c.traj_cov);
            for r in 0..dim {
                for nc in 0..STEP {
                    let mut acc = 0.0;
                    for k in 0..STEP {
                        acc += c.traj_cov[(r, base + k)] * f[(nc, k)];
                    }
                    cov[(r, dim + nc)] = acc;
                    cov[(dim + nc, r)] = acc;
                }
            }
            let p_last = c.last_state_cov();
            let new_diag = f * p_last * f.transpose() + q;
            for r in 0..STEP {
                for col in 0..STEP {
                    cov[(dim + r, dim + col)] = 0.5 * (new_diag[(r, col)] + new_diag[(col, r)]);
                }
            }

            let predicted_ext = predict_extent(&c.last_ext(), &last, motion);
            let mut ext_dofs = c.ext_dofs.clone();
            let mut ext_scales = c.ext_scales.clone();
            let mut pred_ext = c.pred_ext.clone();
            ext_dofs.push(predicted_ext.dof);
            ext_scales.push(predicted_ext.scale);
            pred_ext.push((predicted_ext.dof, predicted_ext.scale));

            TrajectoryComponent {
                weight: cfg.p_survival * c.weight,
                birth_time: c.birth_time,
                rate: predict_rate(&c.rate, motion),
                traj_mean: mean,
                traj_cov: cov,
                ext_dofs,
                ext_scales,
                pred_ext,
            }
        })
        .collect();
    let mut next_label = mix.next_label;
    for b in &cfg.persistent_birth {
        let label = next_label;
        next_label += 1;
        components.push(TrajectoryComponent::birth_from(
            b.params.clone(),
            b.params.ext,
            mix.time,
            label,
            b.weight,
        ));
    }
    TrajectoryMixture { components, time: mix.time, next_label }
}

/// Measurement update; same structure and weight arithmetic as the plain
/// filter, with detections smoothing the whole trajectory through the gain.
pub fn update(
    mix: &TrajectoryMixture,
    scan: &[Vector2<f64>],
    partitions: &[Partition],
    cfg: &FilterConfig,
    mm: &MeasModel,
) -> Result<TrajectoryMixture> {
    let mut next_label = mix.next_label;
    let components = phd_update(
        &mix.components,
        scan,
        partitions,
        cfg,
        mm,
        mix.time,
        &mut next_label,
    )?;
    Ok(TrajectoryMixture { components, time: mix.time + 1, next_label })
}

/// Pruning, absorption and capping.
///
/// Absorption replaces merging: the heaviest component of each group keeps
/// its entire parameter set unchanged and only collects the group weight.
/// Gating uses the newest-step marginal, so components of different lengths
/// may be absorbed together.
pub fn reduce(mix: &TrajectoryMixture, cfg: &FilterConfig) -> TrajectoryMixture {
    let mut alive: Vec<&TrajectoryComponent> = mix
        .components
        .iter()
        .filter(|c| c.weight > cfg.prune_threshold && c.rate.mean() > 1.0)
        .collect();
    let mut kept: Vec<TrajectoryComponent> = Vec::new();
    while !alive.is_empty() {
        let mut j = 0;
        for (i, c) in alive.iter().enumerate() {
            if c.weight > alive[j].weight {
                j = i;
            }
        }
        let pivot = alive[j];
        let pivot_mean = pivot.last_state_mean();
        let gate_inv = pivot
            .last_state_cov()
            .try_inverse()
            .unwrap_or_else(nalgebra::SMatrix::zeros);
        let (group, rest): (Vec<&TrajectoryComponent>, Vec<&TrajectoryComponent>) =
            alive.iter().partition(|c| {
                let d = c.last_state_mean() - pivot_mean;
                (d.transpose() * gate_inv * d)[(0, 0)] <= cfg.merge_threshold
            });
        let mut survivor = pivot.clone();
        survivor.weight = group.iter().map(|c| c.weight).sum();
        kept.push(survivor);
        alive = rest;
    }
    kept.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
    kept.truncate(cfg.cap);
    TrajectoryMixture { components: kept, time: mix.time, next_label: mix.next_label }
}

/// Extracts trajectories from components strictly above the extraction
/// threshold, without extent smoothing.
pub fn extract(mix: &TrajectoryMixture, cfg: &FilterConfig) -> Result<Vec<EstimatedTrajectory>> {
    mix.components
        .iter()
        .filter(|c| c.weight > cfg.extract_threshold)
        .map(|c| {
            let states: Vec<StateVector> = (0..c.len()).map(|i| c.state_at(i)).collect();
            let extents: Result<Vec<Matrix2<f64>>> = (0..c.len())
                .map(|i| InverseWishartParams::new(c.ext_dofs[i], c.ext_scales[i]).mean())
                .collect();
            Ok(EstimatedTrajectory {
                birth_time: c.birth_time,
                states,
                extents: extents?,
                rate: c.rate.mean(),
                alive: true,
                extent_fallback_steps: Vec::new(),
            })
        })
        .collect()
}

/// Backward extent smoothing over one trajectory component.
///
/// The final step keeps its filtered values. Walking backward, the smoothed
/// dof gain at each step is the smoothed-minus-predicted surplus of the next
/// step, and the scale correction is the next step's surplus rotated back by
/// that step's turn. Kinematic means pass through unchanged; they were
/// already smoothed in the update. A smoothed scale that loses positive
/// definiteness falls back to the filtered value and the step is flagged.
pub fn smooth_extents(
    comp: &TrajectoryComponent,
    motion: &MotionConfig,
) -> Result<EstimatedTrajectory> {
    let d = crate::distributions::EXTENT_DIM as f64;
    let floor = 2.0 * d + 2.0;
    let n = comp.len();
    let mut dofs = comp.ext_dofs.clone();
    let mut scales = comp.ext_scales.clone();
    let mut fallbacks = Vec::new();
    for k in (0..n.saturating_sub(1)).rev() {
        let (pred_dof, pred_scale) = comp.pred_ext[k + 1];
        let dv = dofs[k + 1] - pred_dof;
        debug_assert!(dv >= -1e-9, "smoothed dof fell below predicted: {dv}");
        let m = rotation2(comp.state_at(k)[IDX_YAW_RATE] * motion.ts);
        // m is orthogonal: m^{-1} = m'
        let correction = m.transpose() * (scales[k + 1] - pred_scale) * m;
        let dof = comp.ext_dofs[k] + dv;
        let scale = symmetrize2(&(comp.ext_scales[k] + correction));
        if dof > floor && is_spd2(&scale, 1e-9) {
            dofs[k] = dof;
            scales[k] = scale;
        } else {
            fallbacks.push(k);
            dofs[k] = comp.ext_dofs[k];
            scales[k] = comp.ext_scales[k];
        }
    }
    fallbacks.reverse();
    let states: Vec<StateVector> = (0..n).map(|i| comp.state_at(i)).collect();
    let extents: Result<Vec<Matrix2<f64>>> = (0..n)
        .map(|i| InverseWishartParams::new(dofs[i], scales[i]).mean())
        .collect();
    Ok(EstimatedTrajectory {
        birth_time: comp.birth_time,
        states,
        extents: extents?,
        rate: comp.rate.mean(),
        alive: true,
        extent_fallback_steps: fallbacks,
    })
}

/// Extraction followed by extent smoothing of every extracted component.
pub fn extract_smoothed(
    mix: &TrajectoryMixture,
    cfg: &FilterConfig,
    motion: &MotionConfig,
) -> Result<Vec<EstimatedTrajectory>> {
    mix.components
        .iter()
        .filter(|c| c.weight > cfg.extract_threshold)
        .map(|c| smooth_extents(c, motion))
        .collect()
}

/// One full filter recursion: predict, update, reduce, then extract both the
/// unsmoothed and the smoothed trajectory sets.
pub fn recursion_step(
    mix: &TrajectoryMixture,
    scan: &[Vector2<f64>],
    cfg: &FilterConfig,
    motion: &MotionConfig,
    mm: &MeasModel,
) -> Result<(TrajectoryMixture, Vec<EstimatedTrajectory>, Vec<EstimatedTrajectory>)> {
    let grid = default_eps_grid(mm, &cfg.birth.params.ext.mean()?);
    let partitions = generate_partitions(scan, &grid);
    let predicted = predict(mix, cfg, motion);
    let updated = update(&predicted, scan, &partitions, cfg, mm)?;
    let reduced = reduce(&updated, cfg);
    let unsmoothed = extract(&reduced, cfg)?;
    let smoothed = extract_smoothed(&reduced, cfg, motion)?;
    Ok((reduced, unsmoothed, smoothed))
}
