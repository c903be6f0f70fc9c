//! Ground-truth scenario generation, measurement synthesis and the Monte
//! Carlo harness.
//!
//! Both test scenarios carry two objects over scans 0..=60. Scenario 1 starts
//! them 40 m apart moving in parallel; constant-rate turns bring them across
//! each other's paths near scan 35. Scenario 2 starts them 6 m apart in
//! parallel and lets them diverge from scan 20 on. Exact coordinates are
//! frozen here for reproducibility.

use nalgebra::{Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{GammaParams, GaussianParams, GgiwParams, InverseWishartParams};
use crate::error::{Error, Result};
use crate::ggiw_phd::{self, BirthTemplate, Estimate, FilterConfig, GgiwMixture};
use crate::ggiwt_phd::{self, EstimatedTrajectory, TrajectoryMixture};
use crate::linalg::rotation2;
use crate::metrics::{
    rms_over_runs, trajectory_distance, MetricConfig, MetricReport, MetricTrajectory,
};
use crate::models::{
    converted_noise_cov, predict_kinematics, MeasModel, MotionConfig, StateCov, StateVector,
    IDX_HEADING, IDX_PX, IDX_PY, IDX_SPEED, IDX_YAW_RATE,
};
use crate::partitioning::{default_eps_grid, generate_partitions};

/// Axis-aligned surveillance area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl AreaBounds {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Scenario and simulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Scenario id, 1 or 2.
    pub scenario: u32,
    pub area: AreaBounds,
    /// Last scan index; objects live over scans 0..=last_scan.
    pub last_scan: usize,
    /// Expected clutter count per scan.
    pub clutter_rate: f64,
    /// Ground-truth measurements per object per scan.
    pub object_rate: f64,
    /// Ground-truth ellipse semi-axes (m), major first.
    pub semi_major: f64,
    pub semi_minor: f64,
}

impl ScenarioConfig {
    pub fn for_scenario(id: u32) -> Result<Self> {
        let area = match id {
            1 => AreaBounds { x_min: -79.0, x_max: 321.0, y_min: -200.0, y_max: 200.0 },
            2 => AreaBounds { x_min: -30.0, x_max: 370.0, y_min: -200.0, y_max: 200.0 },
            other => return Err(Error::UnknownScenario(other)),
        };
        Ok(Self {
            scenario: id,
            area,
            last_scan: 60,
            clutter_rate: 100.0,
            object_rate: 10.0,
            semi_major: 4.0,
            semi_minor: 2.0,
        })
    }
}

/// One simulated object: per-scan states and extents over its lifespan.
#[derive(Debug, Clone)]
pub struct GroundTruthObject {
    pub birth: usize,
    pub death: usize,
    pub states: Vec<StateVector>,
    pub extents: Vec<Matrix2<f64>>,
    pub rate: f64,
}

impl GroundTruthObject {
    pub fn step_at(&self, k: usize) -> Option<usize> {
        (k >= self.birth && k <= self.death).then(|| k - self.birth)
    }
}

fn extent_from_heading(heading: f64, semi_major: f64, semi_minor: f64) -> Matrix2<f64> {
    let r = rotation2(heading);
    let d = Matrix2::new(semi_major * semi_major, 0.0, 0.0, semi_minor * semi_minor);
    r * d * r.transpose()
}

fn propagate(
    start: StateVector,
    turn_rate: f64,
    turn_from: usize,
    cfg: &ScenarioConfig,
    motion: &MotionConfig,
) -> GroundTruthObject {
    let mut states = Vec::with_capacity(cfg.last_scan + 1);
    let mut extents = Vec::with_capacity(cfg.last_scan + 1);
    let mut x = start;
    for k in 0..=cfg.last_scan {
        x[IDX_YAW_RATE] = if k >= turn_from { turn_rate } else { 0.0 };
        states.push(x);
        extents.push(extent_from_heading(x[IDX_HEADING], cfg.semi_major, cfg.semi_minor));
        x = predict_kinematics(&x, motion);
    }
    GroundTruthObject {
        birth: 0,
        death: cfg.last_scan,
        states,
        extents,
        rate: cfg.object_rate,
    }
}

/// Generates the deterministic ground truth of a scenario.
pub fn generate_scenario(
    cfg: &ScenarioConfig,
    motion: &MotionConfig,
) -> Result<Vec<GroundTruthObject>> {
    match cfg.scenario {
        1 => {
            // born 40 m apart, parallel east, opposite turns from scan 20
            let w = 0.0366;
            let a = StateVector::from_column_slice(&[0.0, 20.0, 5.0, 0.0, 0.0]);
            let b = StateVector::from_column_slice(&[6.0, -20.0, 5.0, 0.0, 0.0]);
            Ok(vec![
                propagate(a, -w, 20, cfg, motion),
                propagate(b, w, 20, cfg, motion),
            ])
        }
        2 => {
            // born 6 m apart, parallel east, diverging turns from scan 19 so
            // the separation grows strictly over scans 20..=60
            let w = 0.02;
            let a = StateVector::from_column_slice(&[30.0, 3.0, 5.0, 0.0, 0.0]);
            let b = StateVector::from_column_slice(&[30.0, -3.0, 5.0, 0.0, 0.0]);
            Ok(vec![
                propagate(a, w, 19, cfg, motion),
                propagate(b, -w, 19, cfg, motion),
            ])
        }
        other => Err(Error::UnknownScenario(other)),
    }
}

fn sample_gaussian2(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    rng: &mut ChaCha8Rng,
) -> Vector2<f64> {
    // 2x2 Cholesky factor
    let l11 = cov[(0, 0)].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { cov[(1, 0)] / l11 } else { 0.0 };
    let l22 = (cov[(1, 1)] - l21 * l21).max(0.0).sqrt();
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    Vector2::new(mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2)
}

fn sample_poisson(rate: f64, rng: &mut ChaCha8Rng) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    let p = Poisson::new(rate).expect("positive rate");
    p.sample(rng) as usize
}

/// Generates one scan: per alive object a Poisson number of measurements
/// spread per the measurement model, plus uniform Poisson clutter, shuffled
/// together.
pub fn generate_scan(
    truth: &[GroundTruthObject],
    k: usize,
    cfg: &ScenarioConfig,
    mm: &MeasModel,
    rng: &mut ChaCha8Rng,
) -> Vec<Vector2<f64>> {
    let mut scan = Vec::new();
    for obj in truth {
        let Some(step) = obj.step_at(k) else { continue };
        let count = sample_poisson(obj.rate, rng);
        let pos = Vector2::new(obj.states[step][IDX_PX], obj.states[step][IDX_PY]);
        let spread = mm.rho * obj.extents[step]
            + converted_noise_cov(&pos, mm).expect("objects stay away from the sensor");
        for _ in 0..count {
            scan.push(sample_gaussian2(&pos, &spread, rng));
        }
    }
    let clutter = sample_poisson(cfg.clutter_rate, rng);
    for _ in 0..clutter {
        scan.push(Vector2::new(
            rng.random_range(cfg.area.x_min..cfg.area.x_max),
            rng.random_range(cfg.area.y_min..cfg.area.y_max),
        ));
    }
    scan.shuffle(rng);
    scan
}

/// Which filter produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    /// GGIW PHD with labeled components.
    Baseline,
    /// Trajectory filter with extent smoothing.
    Trajectory,
    /// Trajectory filter without extent smoothing.
    TrajectoryNoSmoothing,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Baseline => "baseline",
            FilterKind::Trajectory => "trajectory",
            FilterKind::TrajectoryNoSmoothing => "trajectory-no-smoothing",
        }
    }
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub filter: FilterConfig,
    pub motion: MotionConfig,
    pub meas: MeasModel,
    pub metric: MetricConfig,
}

impl ExperimentConfig {
    /// Parameter-table defaults wired to a scenario's geometry.
    pub fn for_scenario(id: u32) -> Result<Self> {
        let scenario = ScenarioConfig::for_scenario(id)?;
        let meas = MeasModel {
            sigma_r: 1.0,
            sigma_phi: 0.01 * std::f64::consts::PI / 180.0,
            rho: 0.75,
        };
        let birth_dof = 26.0;
        let motion = MotionConfig {
            ts: 1.0,
            sigma_v: 0.2,
            sigma_omega: 0.2 * std::f64::consts::PI / 180.0,
            n_e: 120.0,
            eta: 2.0,
            tau_ext: MotionConfig::tau_ext_from_wishart_dof(1.0, 120.0, birth_dof),
        };
        let filter = FilterConfig {
            p_survival: 0.99,
            p_detect: 0.99,
            clutter_rate: scenario.clutter_rate,
            clutter_density: 1.0 / scenario.area.area(),
            birth: default_birth_template(&scenario, birth_dof),
            persistent_birth: Vec::new(),
            prune_threshold: 1e-3,
            merge_threshold: 5.0,
            cap: 50,
            extract_threshold: 0.5,
            l_scan: None,
        };
        Ok(Self {
            scenario,
            filter,
            motion,
            meas,
            metric: MetricConfig::default(),
        })
    }
}

/// Birth density spanning the surveillance area: the position prior matches
/// a uniform distribution over the area so cell likelihoods compete fairly
/// with the clutter explanation.
pub fn default_birth_template(scenario: &ScenarioConfig, birth_dof: f64) -> BirthTemplate {
    let var_x = (scenario.area.x_max - scenario.area.x_min).powi(2) / 12.0;
    let var_y = (scenario.area.y_max - scenario.area.y_min).powi(2) / 12.0;
    let mut cov = StateCov::zeros();
    cov[(IDX_PX, IDX_PX)] = var_x;
    cov[(IDX_PY, IDX_PY)] = var_y;
    cov[(IDX_SPEED, IDX_SPEED)] = 100.0;
    cov[(IDX_HEADING, IDX_HEADING)] = std::f64::consts::PI * std::f64::consts::PI;
    cov[(IDX_YAW_RATE, IDX_YAW_RATE)] = 0.01;
    let extent_mean = 12.0;
    BirthTemplate {
        weight: 0.03,
        params: GgiwParams {
            rate: GammaParams::new(5.0, 0.5),
            kin: GaussianParams::new(StateVector::zeros(), cov),
            ext: InverseWishartParams::new(
                birth_dof,
                extent_mean * (birth_dof - 6.0) * Matrix2::identity(),
            ),
        },
    }
}

fn truth_metric_trajectories(truth: &[GroundTruthObject]) -> Vec<MetricTrajectory> {
    truth
        .iter()
        .map(|o| MetricTrajectory {
            birth_time: o.birth,
            positions: o
                .states
                .iter()
                .map(|s| Vector2::new(s[IDX_PX], s[IDX_PY]))
                .collect(),
            extents: o.extents.clone(),
        })
        .collect()
}

/// Per-filter outcome of one run.
#[derive(Debug, Clone)]
pub struct FilterRunOutput {
    pub kind: FilterKind,
    pub report: MetricReport,
    /// Trajectories extracted at the final scan.
    pub final_trajectories: Vec<EstimatedTrajectory>,
}

/// Runs every requested filter on one shared measurement stream.
pub fn run_once(
    cfg: &ExperimentConfig,
    filters: &[FilterKind],
    seed: u64,
) -> Result<Vec<FilterRunOutput>> {
    let truth = generate_scenario(&cfg.scenario, &cfg.motion)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scans: Vec<Vec<Vector2<f64>>> = (0..=cfg.scenario.last_scan)
        .map(|k| generate_scan(&truth, k, &cfg.scenario, &cfg.meas, &mut rng))
        .collect();
    let truth_traj = truth_metric_trajectories(&truth);
    let true_cardinality: Vec<f64> = (0..=cfg.scenario.last_scan)
        .map(|k| truth.iter().filter(|o| o.step_at(k).is_some()).count() as f64)
        .collect();

    let eps_grid = default_eps_grid(&cfg.meas, &cfg.filter.birth.params.ext.mean()?);

    let wants_baseline = filters.contains(&FilterKind::Baseline);
    let wants_smoothed = filters.contains(&FilterKind::Trajectory);
    let wants_unsmoothed = filters.contains(&FilterKind::TrajectoryNoSmoothing);

    let mut out = Vec::new();

    if wants_baseline {
        let mut mix = GgiwMixture::empty();
        let mut history: Vec<Vec<Estimate>> = Vec::new();
        let mut report = MetricReport {
            true_cardinality: true_cardinality.clone(),
            ..Default::default()
        };
        for (k, scan) in scans.iter().enumerate() {
            let partitions = generate_partitions(scan, &eps_grid);
            let predicted = ggiw_phd::predict(&mix, &cfg.filter, &cfg.motion);
            let updated = ggiw_phd::update(&predicted, scan, &partitions, &cfg.filter, &cfg.meas)?;
            mix = ggiw_phd::reduce(&updated, &cfg.filter);
            let estimates = ggiw_phd::extract(&mix, &cfg.filter)?;
            report.est_cardinality.push(estimates.len() as f64);
            history.push(estimates);
            let trajectories = ggiw_phd::build_labeled_trajectories(&history, &cfg.motion);
            let est: Vec<MetricTrajectory> = trajectories
                .iter()
                .filter(|t| t.alive)
                .map(MetricTrajectory::from)
                .collect();
            report
                .per_scan
                .push(trajectory_distance(&truth_traj, &est, k, &cfg.metric));
        }
        let final_trajectories: Vec<EstimatedTrajectory> =
            ggiw_phd::build_labeled_trajectories(&history, &cfg.motion);
        out.push(FilterRunOutput {
            kind: FilterKind::Baseline,
            report,
            final_trajectories,
        });
    }

    if wants_smoothed || wants_unsmoothed {
        let mut mix = TrajectoryMixture::empty();
        let mut smoothed_report = MetricReport {
            true_cardinality: true_cardinality.clone(),
            ..Default::default()
        };
        let mut unsmoothed_report = smoothed_report.clone();
        let mut final_smoothed = Vec::new();
        let mut final_unsmoothed = Vec::new();
        for (k, scan) in scans.iter().enumerate() {
            let partitions = generate_partitions(scan, &eps_grid);
            let predicted = ggiwt_phd::predict(&mix, &cfg.filter, &cfg.motion);
            let updated =
                ggiwt_phd::update(&predicted, scan, &partitions, &cfg.filter, &cfg.meas)?;
            mix = ggiwt_phd::reduce(&updated, &cfg.filter);
            let unsmoothed = ggiwt_phd::extract(&mix, &cfg.filter)?;
            let smoothed = ggiwt_phd::extract_smoothed(&mix, &cfg.filter, &cfg.motion)?;
            if wants_unsmoothed {
                let est: Vec<MetricTrajectory> =
                    unsmoothed.iter().map(MetricTrajectory::from).collect();
                unsmoothed_report.est_cardinality.push(unsmoothed.len() as f64);
                unsmoothed_report
                    .per_scan
                    .push(trajectory_distance(&truth_traj, &est, k, &cfg.metric));
            }
            if wants_smoothed {
                let est: Vec<MetricTrajectory> =
                    smoothed.iter().map(MetricTrajectory::from).collect();
                smoothed_report.est_cardinality.push(smoothed.len() as f64);
                smoothed_report
                    .per_scan
                    .push(trajectory_distance(&truth_traj, &est, k, &cfg.metric));
            }
            if k == cfg.scenario.last_scan {
                final_smoothed = smoothed;
                final_unsmoothed = unsmoothed;
            }
        }
        if wants_smoothed {
            out.push(FilterRunOutput {
                kind: FilterKind::Trajectory,
                report: smoothed_report,
                final_trajectories: final_smoothed,
            });
        }
        if wants_unsmoothed {
            out.push(FilterRunOutput {
                kind: FilterKind::TrajectoryNoSmoothing,
                report: unsmoothed_report,
                final_trajectories: final_unsmoothed,
            });
        }
    }
    // preserve the requested filter order
    out.sort_by_key(|o| filters.iter().position(|f| *f == o.kind).unwrap_or(usize::MAX));
    Ok(out)
}

/// Monte Carlo output: per-run reports, their RMS aggregate and the final
/// trajectories of every run, per filter.
#[derive(Debug, Clone)]
pub struct MonteCarloOutput {
    pub filters: Vec<FilterKind>,
    /// Indexed [filter][run].
    pub per_run: Vec<Vec<MetricReport>>,
    pub rms: Vec<MetricReport>,
    /// Indexed [filter][run].
    pub final_trajectories: Vec<Vec<Vec<EstimatedTrajectory>>>,
}

/// Runs the Monte Carlo experiment. Run r draws its measurement stream from
/// seed base_seed + r; all filters of a run consume identical scans. Runs
/// execute in parallel and aggregate in run order.
pub fn monte_carlo(
    cfg: &ExperimentConfig,
    filters: &[FilterKind],
    runs: usize,
    base_seed: u64,
) -> Result<MonteCarloOutput> {
    assert!(runs >= 1, "need at least one run");
    let results: Vec<Result<Vec<FilterRunOutput>>> = (0..runs)
        .into_par_iter()
        .map(|r| run_once(cfg, filters, base_seed.wrapping_add(r as u64)))
        .collect();
    let mut per_run: Vec<Vec<MetricReport>> = vec![Vec::with_capacity(runs); filters.len()];
    let mut final_trajectories: Vec<Vec<Vec<EstimatedTrajectory>>> =
        vec![Vec::with_capacity(runs); filters.len()];
    for run in results {
        let run = run?;
        for (fi, output) in run.into_iter().enumerate() {
            per_run[fi].push(output.report);
            final_trajectories[fi].push(output.final_trajectories);
        }
    }
    let rms: Result<Vec<MetricReport>> =
        per_run.iter().map(|reports| rms_over_runs(reports)).collect();
    Ok(MonteCarloOutput {
        filters: filters.to_vec(),
        per_run,
        rms: rms?,
        final_trajectories,
    })
}
