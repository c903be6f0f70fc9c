//! Baseline extended-object PHD filter over GGIW mixtures, with labeled
//! components for ad-hoc trajectory building.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::distributions::{
    CellStats, GammaParams, GgiwParams, GiwCellTerms, InverseWishartParams,
};
use crate::error::Result;
use crate::ggiwt_phd::EstimatedTrajectory;
use crate::models::{
    kinematics_jacobian, predict_extent, predict_kinematics, predict_rate, process_noise,
    rotate_extent, MeasModel, MotionConfig, StateVector, IDX_YAW_RATE,
};
use crate::partitioning::Partition;
use crate::update::{ggiw_conjugate_update, phd_update, PhdComponent};

/// One weighted GGIW hypothesis with a label that is stable across
/// prediction and update of the same underlying object hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct GgiwComponent {
    pub weight: f64,
    pub label: u64,
    pub params: GgiwParams,
}

/// GGIW mixture intensity at one scan.
#[derive(Debug, Clone, Default)]
pub struct GgiwMixture {
    pub components: Vec<GgiwComponent>,
    /// Index of the next scan to be processed.
    pub time: usize,
    /// Label source; labels are unique within a run and never reused.
    pub next_label: u64,
}

impl GgiwMixture {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Total mixture weight, the expected number of objects.
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }
}

/// Birth density template. The position prior should be diffuse over the
/// surveillance area; the update recenters it at each cell centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthTemplate {
    pub weight: f64,
    pub params: GgiwParams,
}

/// RFS and reduction parameters shared by both filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub p_survival: f64,
    pub p_detect: f64,
    /// Expected clutter count per scan.
    pub clutter_rate: f64,
    /// Clutter spatial density, 1/area.
    pub clutter_density: f64,
    /// Template for measurement-driven births in the update.
    pub birth: BirthTemplate,
    /// Components appended verbatim in every prediction, for scenarios with
    /// known birth sites. Empty by default.
    pub persistent_birth: Vec<BirthTemplate>,
    pub prune_threshold: f64,
    pub merge_threshold: f64,
    pub cap: usize,
    pub extract_threshold: f64,
    /// Trajectory-covariance window; `None` keeps the full trajectory exact.
    pub l_scan: Option<usize>,
}

/// One extracted object estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub label: u64,
    pub rate: f64,
    pub state: StateVector,
    pub extent: Matrix2<f64>,
}

impl PhdComponent for GgiwComponent {
    fn weight(&self) -> f64 {
        self.weight
    }

    fn rate(&self) -> &GammaParams {
        &self.params.rate
    }

    fn last_ggiw(&self) -> GgiwParams {
        self.params.clone()
    }

    fn with_missed_update(&self, new_weight: f64, new_rate: GammaParams) -> Self {
        let mut out = self.clone();
        out.weight = new_weight;
        out.params.rate = new_rate;
        out
    }

    fn with_detection_update(
        &self,
        terms: &GiwCellTerms,
        stats: &CellStats,
        new_weight: f64,
        _cfg: &FilterConfig,
    ) -> Self {
        Self {
            weight: new_weight,
            label: self.label,
            params: ggiw_conjugate_update(&self.params, terms, stats),
        }
    }

    fn birth_from(
        posterior: GgiwParams,
        _prior_ext: InverseWishartParams,
        _birth_time: usize,
        label: u64,
        weight: f64,
    ) -> Self {
        Self { weight, label, params: posterior }
    }
}

/// Prediction: survival-scaled components propagated through the motion
/// models, plus any persistent birth components.
pub fn predict(mix: &GgiwMixture, cfg: &FilterConfig, motion: &MotionConfig) -> GgiwMixture {
    let mut next_label = mix.next_label;
    let mut components: Vec<GgiwComponent> = mix
        .components
        .iter()
        .map(|c| {
            let f = kinematics_jacobian(&c.params.kin.mean, motion);
            let mean = predict_kinematics(&c.params.kin.mean, motion);
            let cov = f * c.params.kin.cov * f.transpose() + process_noise(motion);
            let cov = 0.5 * (cov + cov.transpose());
            GgiwComponent {
                weight: cfg.p_survival * c.weight,
                label: c.label,
                params: GgiwParams {
                    rate: predict_rate(&c.params.rate, motion),
                    kin: crate::distributions::GaussianParams::new(mean, cov),
                    ext: predict_extent(&c.params.ext, &c.params.kin.mean, motion),
                },
            }
        })
        .collect();
    for b in &cfg.persistent_birth {
        let label = next_label;
        next_label += 1;
        components.push(GgiwComponent {
            weight: b.weight,
            label,
            params: b.params.clone(),
        });
    }
    GgiwMixture { components, time: mix.time, next_label }
}

/// Measurement update over the given partitions.
pub fn update(
    mix: &GgiwMixture,
    scan: &[Vector2<f64>],
    partitions: &[Partition],
    cfg: &FilterConfig,
    mm: &MeasModel,
) -> Result<GgiwMixture> {
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
    Ok(GgiwMixture { components, time: mix.time + 1, next_label })
}

/// Pruning, merging and capping.
///
/// Components survive pruning with weight above the threshold and an expected
/// rate above one. Merge groups gather everything within the Mahalanobis gate
/// of the current heaviest component; merged parameters are the weighted
/// averages, and the merged component keeps the heaviest member's label.
pub fn reduce(mix: &GgiwMixture, cfg: &FilterConfig) -> GgiwMixture {
    let mut alive: Vec<&GgiwComponent> = mix
        .components
        .iter()
        .filter(|c| c.weight > cfg.prune_threshold && c.params.rate.mean() > 1.0)
        .collect();
    let mut merged: Vec<GgiwComponent> = Vec::new();
    while !alive.is_empty() {
        let mut j = 0;
        for (i, c) in alive.iter().enumerate() {
            if c.weight > alive[j].weight {
                j = i;
            }
        }
        let pivot = alive[j];
        let gate_inv = pivot
            .params
            .kin
            .cov
            .try_inverse()
            .unwrap_or_else(nalgebra::SMatrix::zeros);
        let (group, rest): (Vec<&GgiwComponent>, Vec<&GgiwComponent>) =
            alive.iter().partition(|c| {
                let d = c.params.kin.mean - pivot.params.kin.mean;
                (d.transpose() * gate_inv * d)[(0, 0)] <= cfg.merge_threshold
            });
        let w: f64 = group.iter().map(|c| c.weight).sum();
        let mut alpha = 0.0;
        let mut beta = 0.0;
        let mut mean = StateVector::zeros();
        let mut cov = crate::models::StateCov::zeros();
        let mut dof = 0.0;
        let mut scale = Matrix2::zeros();
        for c in &group {
            let f = c.weight / w;
            alpha += f * c.params.rate.alpha;
            beta += f * c.params.rate.beta;
            mean += f * c.params.kin.mean;
            cov += f * c.params.kin.cov;
            dof += f * c.params.ext.dof;
            scale += f * c.params.ext.scale;
        }
        merged.push(GgiwComponent {
            weight: w,
            label: pivot.label,
            params: GgiwParams {
                rate: GammaParams::new(alpha, beta),
                kin: crate::distributions::GaussianParams::new(mean, cov),
                ext: InverseWishartParams::new(dof, scale),
            },
        });
        alive = rest;
    }
    merged.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
    merged.truncate(cfg.cap);
    GgiwMixture { components: merged, time: mix.time, next_label: mix.next_label }
}

/// Extracts estimates from components strictly above the extraction
/// threshold.
pub fn extract(mix: &GgiwMixture, cfg: &FilterConfig) -> Result<Vec<Estimate>> {
    mix.components
        .iter()
        .filter(|c| c.weight > cfg.extract_threshold)
        .map(|c| {
            Ok(Estimate {
                label: c.label,
                rate: c.params.rate.mean(),
                state: c.params.kin.mean,
                extent: c.params.ext.mean()?,
            })
        })
        .collect()
}

/// Builds trajectories from per-scan extraction history by matching labels.
///
/// A label absent for one scan is bridged by prediction; absent longer, the
/// trajectory terminates and a reappearance starts a new one. This is the
/// baseline's failure mode: label switches split or mix trajectories.
pub fn build_labeled_trajectories(
    history: &[Vec<Estimate>],
    motion: &MotionConfig,
) -> Vec<EstimatedTrajectory> {
    use std::collections::BTreeMap;
    let mut per_label: BTreeMap<u64, Vec<(usize, &Estimate)>> = BTreeMap::new();
    for (k, estimates) in history.iter().enumerate() {
        for e in estimates {
            per_label.entry(e.label).or_default().push((k, e));
        }
    }
    let last_scan = history.len().saturating_sub(1);
    let mut out = Vec::new();
    for (_, appearances) in per_label {
        let mut segment: Option<EstimatedTrajectory> = None;
        let mut last_seen = 0usize;
        for (k, e) in appearances {
            match segment.as_mut() {
                Some(t) if k <= last_seen + 2 => {
                    if k == last_seen + 2 {
                        // bridge the single missing scan by prediction
                        let prev = *t.states.last().unwrap();
                        let bridged = predict_kinematics(&prev, motion);
                        let ext = rotate_extent(
                            t.extents.last().unwrap(),
                            prev[IDX_YAW_RATE],
                            motion.ts,
                        );
                        t.states.push(bridged);
                        t.extents.push(ext);
                    }
                    t.states.push(e.state);
                    t.extents.push(e.extent);
                    t.rate = e.rate;
                }
                _ => {
                    if let Some(done) = segment.take() {
                        out.push(done);
                    }
                    segment = Some(EstimatedTrajectory {
                        birth_time: k,
                        states: vec![e.state],
                        extents: vec![e.extent],
                        rate: e.rate,
                        alive: false,
                        extent_fallback_steps: Vec::new(),
                    });
                }
            }
            last_seen = k;
        }
        if let Some(mut done) = segment.take() {
            done.alive = done.birth_time + done.states.len() == last_scan + 1;
            out.push(done);
        }
    }
    out
}
