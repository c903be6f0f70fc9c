//! Trajectory evaluation: assignment-based distance between sets of
//! trajectories with a Gaussian-Wasserstein base distance, decomposed into
//! localization, missed, false and track-switch costs, plus RMS aggregation
//! over Monte Carlo runs.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{det2, is_spd2};

/// Metric parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Base-distance saturation (m).
    pub cutoff: f64,
    /// Cost exponent.
    pub order: f64,
    /// Cost per track switch; a full identity swap of two trajectories counts
    /// as one switch, a single reassignment as a half.
    pub switch_penalty: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { cutoff: 10.0, order: 2.0, switch_penalty: 2.0 }
    }
}

/// Trajectory view consumed by the metric: per-step positions and extents
/// from the birth scan onward.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrajectory {
    pub birth_time: usize,
    pub positions: Vec<Vector2<f64>>,
    pub extents: Vec<Matrix2<f64>>,
}

impl MetricTrajectory {
    /// Step index at scan `t`, if alive there.
    pub fn step_at(&self, t: usize) -> Option<usize> {
        if t >= self.birth_time && t < self.birth_time + self.positions.len() {
            Some(t - self.birth_time)
        } else {
            None
        }
    }
}

impl From<&crate::ggiwt_phd::EstimatedTrajectory> for MetricTrajectory {
    fn from(t: &crate::ggiwt_phd::EstimatedTrajectory) -> Self {
        Self {
            birth_time: t.birth_time,
            positions: t.states.iter().map(crate::models::position_of).collect(),
            extents: t.extents.clone(),
        }
    }
}

/// Gaussian-Wasserstein distance between two (position, extent) pairs:
/// d^2 = |m_a - m_b|^2 + tr(X_a + X_b - 2 (X_a^{1/2} X_b X_a^{1/2})^{1/2}).
pub fn gw_distance(
    mean_a: &Vector2<f64>,
    ext_a: &Matrix2<f64>,
    mean_b: &Vector2<f64>,
    ext_b: &Matrix2<f64>,
) -> Result<f64> {
    if !is_spd2(ext_a, 1e-9) || !is_spd2(ext_b, 1e-9) {
        return Err(Error::NonSpdInput("gw_distance"));
    }
    // for 2x2 SPD: tr((A^{1/2} B A^{1/2})^{1/2}) = sqrt(tr(AB) + 2 sqrt(det A det B))
    let tr_ab = (ext_a * ext_b).trace();
    let cross = (tr_ab + 2.0 * (det2(ext_a) * det2(ext_b)).max(0.0).sqrt()).max(0.0);
    let scale = ext_a.trace() + ext_b.trace();
    let mut trace_term = (scale - 2.0 * cross.sqrt()).max(0.0);
    // the subtraction cancels catastrophically for near-identical extents
    if trace_term < 1e-12 * scale {
        trace_term = 0.0;
    }
    Ok(((mean_a - mean_b).norm_squared() + trace_term).sqrt())
}

/// Decomposed metric value over one evaluation window. The identity
/// total^p = c_l^p + c_m^p + c_f^p + c_t^p holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostDecomposition {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_tracks: f64,
    pub track_switches: f64,
}

impl CostDecomposition {
    fn from_powers(p: f64, loc: f64, missed: f64, false_t: f64, switches: f64) -> Self {
        let root = |x: f64| x.max(0.0).powf(1.0 / p);
        Self {
            total: root(loc + missed + false_t + switches),
            localization: root(loc),
            missed: root(missed),
            false_tracks: root(false_t),
            track_switches: root(switches),
        }
    }
}

/// A partial matching truth -> estimate.
type Matching = Vec<Option<usize>>;

fn enumerate_matchings(n_truth: usize, n_est: usize) -> Vec<Matching> {
    let mut out = Vec::new();
    let mut current: Matching = vec![None; n_truth];
    let mut used = vec![false; n_est];
    fn rec(
        i: usize,
        n_truth: usize,
        n_est: usize,
        current: &mut Matching,
        used: &mut Vec<bool>,
        out: &mut Vec<Matching>,
    ) {
        if i == n_truth {
            out.push(current.clone());
            return;
        }
        current[i] = None;
        rec(i + 1, n_truth, n_est, current, used, out);
        for j in 0..n_est {
            if !used[j] {
                used[j] = true;
                current[i] = Some(j);
                rec(i + 1, n_truth, n_est, current, used, out);
                current[i] = None;
                used[j] = false;
            }
        }
    }
    rec(0, n_truth, n_est, &mut current, &mut used, &mut out);
    out
}

/// Number of partial matchings between sets of these sizes.
fn matching_count(n_truth: usize, n_est: usize) -> f64 {
    let mut total = 0.0;
    let mut term = 1.0f64; // C(a,k) C(b,k) k!
    for k in 0..=n_truth.min(n_est) {
        if k > 0 {
            term *= ((n_truth - k + 1) * (n_est - k + 1)) as f64 / k as f64 * k as f64;
            // simplifies to C(a,k) C(b,k) k! recurrence
        }
        total += term;
    }
    total
}

const MAX_DP_STATES: usize = 20_000;

/// Per-scan cost components of one matching.
struct ScanCost {
    localization: f64,
    missed: usize,
    false_tracks: usize,
}

fn scan_cost(
    matching: &Matching,
    t: usize,
    truth: &[MetricTrajectory],
    est: &[MetricTrajectory],
    base: &dyn Fn(usize, usize, usize) -> f64,
) -> ScanCost {
    let mut loc = 0.0;
    let mut covered_est = vec![false; est.len()];
    let mut missed = 0usize;
    for (i, tr) in truth.iter().enumerate() {
        if tr.step_at(t).is_none() {
            continue;
        }
        match matching[i] {
            Some(j) if est[j].step_at(t).is_some() => {
                loc += base(i, j, t);
                covered_est[j] = true;
            }
            _ => missed += 1,
        }
    }
    let false_tracks = est
        .iter()
        .enumerate()
        .filter(|(j, e)| e.step_at(t).is_some() && !covered_est[*j])
        .count();
    ScanCost { localization: loc, missed, false_tracks }
}

/// Switch units between consecutive matchings: 1 for a changed pairing, 1/2
/// for a pairing gained or lost, halved overall so that a clean two-track
/// identity swap counts as exactly one switch. Only truth trajectories alive
/// on both sides of the boundary are charged.
fn switch_units(
    prev: &Matching,
    next: &Matching,
    t_prev: usize,
    t_next: usize,
    truth: &[MetricTrajectory],
) -> f64 {
    let mut units = 0.0;
    for (i, tr) in truth.iter().enumerate() {
        if tr.step_at(t_prev).is_none() || tr.step_at(t_next).is_none() {
            continue;
        }
        units += match (prev[i], next[i]) {
            (Some(a), Some(b)) if a != b => 1.0,
            (Some(_), None) | (None, Some(_)) => 0.5,
            _ => 0.0,
        };
    }
    0.5 * units
}

/// Assignment-based distance between two sets of trajectories over the
/// window [0, window_end], minimizing saturated base costs, missed/false
/// costs and switch penalties over all assignment sequences.
///
/// Exact (dynamic program over per-scan matchings) whenever the matching
/// state space is small enough, which covers the simulated scenarios; larger
/// instances fall back to a greedy scan-by-scan assignment that upper-bounds
/// the metric.
pub fn trajectory_distance(
    truth: &[MetricTrajectory],
    est: &[MetricTrajectory],
    window_end: usize,
    cfg: &MetricConfig,
) -> CostDecomposition {
    let p = cfg.order;
    let cp = cfg.cutoff.powf(p);
    let base = |i: usize, j: usize, t: usize| -> f64 {
        let (si, sj) = (truth[i].step_at(t).unwrap(), est[j].step_at(t).unwrap());
        let g = gw_distance(
            &truth[i].positions[si],
            &truth[i].extents[si],
            &est[j].positions[sj],
            &est[j].extents[sj],
        )
        .unwrap_or(cfg.cutoff);
        g.min(cfg.cutoff).powf(p)
    };

    if matching_count(truth.len(), est.len()) <= MAX_DP_STATES as f64 {
        exact_dp(truth, est, window_end, cfg, cp, &base)
    } else {
        greedy_sequential(truth, est, window_end, cfg, cp, &base)
    }
}

fn exact_dp(
    truth: &[MetricTrajectory],
    est: &[MetricTrajectory],
    window_end: usize,
    cfg: &MetricConfig,
    cp: f64,
    base: &dyn Fn(usize, usize, usize) -> f64,
) -> CostDecomposition {
    let p = cfg.order;
    let states = enumerate_matchings(truth.len(), est.len());
    let n_states = states.len();
    let mut cost = vec![0.0f64; n_states];
    // scan costs at t = 0
    for (s, m) in states.iter().enumerate() {
        let sc = scan_cost(m, 0, truth, est, base);
        cost[s] = sc.localization + 0.5 * cp * (sc.missed + sc.false_tracks) as f64;
    }
    let mut backptr: Vec<Vec<usize>> = Vec::with_capacity(window_end);
    for t in 1..=window_end {
        let mut new_cost = vec![f64::INFINITY; n_states];
        let mut ptr = vec![0usize; n_states];
        let scan: Vec<ScanCost> = states
            .iter()
            .map(|m| scan_cost(m, t, truth, est, base))
            .collect();
        for (s, m) in states.iter().enumerate() {
            let own = scan[s].localization
                + 0.5 * cp * (scan[s].missed + scan[s].false_tracks) as f64;
            let mut best = f64::INFINITY;
            let mut best_prev = 0usize;
            for (s_prev, m_prev) in states.iter().enumerate() {
                let c = cost[s_prev]
                    + cfg.switch_penalty * switch_units(m_prev, m, t - 1, t, truth);
                if c < best {
                    best = c;
                    best_prev = s_prev;
                }
            }
            new_cost[s] = best + own;
            ptr[s] = best_prev;
        }
        cost = new_cost;
        backptr.push(ptr);
    }
    // best terminal state, then backtrack for the decomposition
    let mut s_best = 0usize;
    for s in 1..n_states {
        if cost[s] < cost[s_best] {
            s_best = s;
        }
    }
    let mut path = vec![0usize; window_end + 1];
    path[window_end] = s_best;
    for t in (1..=window_end).rev() {
        path[t - 1] = backptr[t - 1][path[t]];
    }
    let mut loc = 0.0;
    let mut missed = 0.0;
    let mut false_t = 0.0;
    let mut switches = 0.0;
    for (t, &s) in path.iter().enumerate() {
        let sc = scan_cost(&states[s], t, truth, est, base);
        loc += sc.localization;
        missed += 0.5 * cp * sc.missed as f64;
        false_t += 0.5 * cp * sc.false_tracks as f64;
        if t > 0 {
            switches += cfg.switch_penalty
                * switch_units(&states[path[t - 1]], &states[s], t - 1, t, truth);
        }
    }
    CostDecomposition::from_powers(p, loc, missed, false_t, switches)
}

/// Greedy fallback for large instances: each scan keeps the previous
/// matching where possible and reassigns by exhausting single-pair moves.
/// Costs are evaluated with the same terms as the exact program, so the
/// result is a valid upper bound of the metric.
fn greedy_sequential(
    truth: &[MetricTrajectory],
    est: &[MetricTrajectory],
    window_end: usize,
    cfg: &MetricConfig,
    cp: f64,
    base: &dyn Fn(usize, usize, usize) -> f64,
) -> CostDecomposition {
    let p = cfg.order;
    let mut prev: Matching = vec![None; truth.len()];
    let mut loc = 0.0;
    let mut missed = 0.0;
    let mut false_t = 0.0;
    let mut switches = 0.0;
    for t in 0..=window_end {
        // start from the previous matching, drop dead pairs
        let mut current: Matching = prev
            .iter()
            .enumerate()
            .map(|(i, m)| match m {
                Some(j)
                    if truth[i].step_at(t).is_some() && est[*j].step_at(t).is_some() =>
                {
                    Some(*j)
                }
                _ => None,
            })
            .collect();
        // improve by single reassignments until no move lowers the scan cost
        let eval = |m: &Matching| -> f64 {
            let sc = scan_cost(m, t, truth, est, base);
            let sw = if t > 0 {
                cfg.switch_penalty * switch_units(&prev, m, t - 1, t, truth)
            } else {
                0.0
            };
            sc.localization + 0.5 * cp * (sc.missed + sc.false_tracks) as f64 + sw
        };
        let mut best = eval(&current);
        loop {
            let mut improved = false;
            for i in 0..truth.len() {
                if truth[i].step_at(t).is_none() {
                    continue;
                }
                let original = current[i];
                let mut candidates: Vec<Option<usize>> = vec![None];
                for j in 0..est.len() {
                    if est[j].step_at(t).is_some() && !current.contains(&Some(j)) {
                        candidates.push(Some(j));
                    }
                }
                for cand in candidates {
                    if cand == original {
                        continue;
                    }
                    current[i] = cand;
                    let c = eval(&current);
                    if c < best - 1e-15 {
                        best = c;
                        improved = true;
                    } else {
                        current[i] = original;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        let sc = scan_cost(&current, t, truth, est, base);
        loc += sc.localization;
        missed += 0.5 * cp * sc.missed as f64;
        false_t += 0.5 * cp * sc.false_tracks as f64;
        if t > 0 {
            switches += cfg.switch_penalty * switch_units(&prev, &current, t - 1, t, truth);
        }
        prev = current;
    }
    CostDecomposition::from_powers(p, loc, missed, false_t, switches)
}

/// Per-scan metric values and cardinality of one run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_scan: Vec<CostDecomposition>,
    pub est_cardinality: Vec<f64>,
    pub true_cardinality: Vec<f64>,
}

/// Root-mean-square aggregation across runs, per scan and per cost
/// component; cardinalities aggregate as plain means.
pub fn rms_over_runs(runs: &[MetricReport]) -> Result<MetricReport> {
    let first = runs.first().ok_or(Error::LengthMismatch { expected: 1, got: 0 })?;
    let n_scans = first.per_scan.len();
    for r in runs {
        if r.per_scan.len() != n_scans {
            return Err(Error::LengthMismatch { expected: n_scans, got: r.per_scan.len() });
        }
    }
    let nf = runs.len() as f64;
    let rms = |f: &dyn Fn(&CostDecomposition) -> f64, k: usize| -> f64 {
        (runs.iter().map(|r| f(&r.per_scan[k]).powi(2)).sum::<f64>() / nf).sqrt()
    };
    let mut per_scan = Vec::with_capacity(n_scans);
    let mut est_cardinality = Vec::with_capacity(n_scans);
    let mut true_cardinality = Vec::with_capacity(n_scans);
    for k in 0..n_scans {
        per_scan.push(CostDecomposition {
            total: rms(&|c: &CostDecomposition| c.total, k),
            localization: rms(&|c: &CostDecomposition| c.localization, k),
            missed: rms(&|c: &CostDecomposition| c.missed, k),
            false_tracks: rms(&|c: &CostDecomposition| c.false_tracks, k),
            track_switches: rms(&|c: &CostDecomposition| c.track_switches, k),
        });
        est_cardinality.push(runs.iter().map(|r| r.est_cardinality[k]).sum::<f64>() / nf);
        true_cardinality.push(runs.iter().map(|r| r.true_cardinality[k]).sum::<f64>() / nf);
    }
    Ok(MetricReport { per_scan, est_cardinality, true_cardinality })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn straight(birth: usize, n: usize, y: f64) -> MetricTrajectory {
        MetricTrajectory {
            birth_time: birth,
            positions: (0..n).map(|k| Vector2::new(k as f64, y)).collect(),
            extents: vec![Matrix2::identity(); n],
        }
    }

    #[test]
    fn gw_identical_is_zero() {
        let m = Vector2::new(3.0, -1.0);
        let x = Matrix2::new(4.0, 1.0, 1.0, 2.0);
        assert_relative_eq!(gw_distance(&m, &x, &m, &x).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gw_pure_position_offset() {
        let x = Matrix2::identity();
        let d = gw_distance(&Vector2::new(0.0, 0.0), &x, &Vector2::new(3.0, 0.0), &x).unwrap();
        assert_relative_eq!(d, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gw_commuting_extents_analytic() {
        let m = Vector2::zeros();
        let d = gw_distance(&m, &(4.0 * Matrix2::identity()), &m, &Matrix2::identity()).unwrap();
        assert_relative_eq!(d, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gw_rejects_non_spd() {
        let m = Vector2::zeros();
        let bad = Matrix2::new(1.0, 2.0, 2.0, 1.0);
        assert!(gw_distance(&m, &bad, &m, &Matrix2::identity()).is_err());
    }

    #[test]
    fn perfect_estimate_costs_nothing() {
        let truth = vec![straight(0, 5, 0.0), straight(0, 5, 30.0)];
        let d = trajectory_distance(&truth, &truth, 4, &MetricConfig::default());
        assert_relative_eq!(d.total, 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.track_switches, 0.0);
    }

    #[test]
    fn empty_estimate_is_pure_missed_cost() {
        let truth = vec![straight(0, 5, 0.0)];
        let cfg = MetricConfig::default();
        let d = trajectory_distance(&truth, &[], 4, &cfg);
        // five scans of c^2/2 each
        let expect = (5.0 * cfg.cutoff.powi(2) / 2.0).sqrt();
        assert_relative_eq!(d.missed, expect, epsilon = 1e-12);
        assert_relative_eq!(d.total, expect, epsilon = 1e-12);
        assert_eq!(d.localization, 0.0);
        assert_eq!(d.false_tracks, 0.0);
        assert_eq!(d.track_switches, 0.0);
    }

    #[test]
    fn decomposition_identity_holds() {
        let truth = vec![straight(0, 6, 0.0), straight(2, 4, 8.0)];
        let est = vec![straight(0, 6, 1.0), straight(0, 6, 40.0)];
        let d = trajectory_distance(&truth, &est, 5, &MetricConfig::default());
        let sq = d.localization.powi(2)
            + d.missed.powi(2)
            + d.false_tracks.powi(2)
            + d.track_switches.powi(2);
        assert_relative_eq!(d.total.powi(2), sq, epsilon = 1e-9);
    }

    #[test]
    fn identity_swap_charges_one_switch() {
        // two parallel truths; estimates swap identities at t = 2
        let truth = vec![straight(0, 4, 0.0), straight(0, 4, 20.0)];
        let mut est_a = straight(0, 4, 0.0);
        let mut est_b = straight(0, 4, 20.0);
        for t in 2..4 {
            est_a.positions[t].y = 20.0;
            est_b.positions[t].y = 0.0;
        }
        let cfg = MetricConfig::default();
        let d = trajectory_distance(&truth, &[est_a, est_b], 3, &cfg);
        // optimal sequence follows the swap and pays exactly one switch
        assert_relative_eq!(
            d.track_switches.powi(2),
            cfg.switch_penalty,
            epsilon = 1e-12
        );
        assert_relative_eq!(d.localization, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rms_single_run_is_identity() {
        let report = MetricReport {
            per_scan: vec![CostDecomposition {
                total: 3.0,
                localization: 3.0,
                ..Default::default()
            }],
            est_cardinality: vec![2.0],
            true_cardinality: vec![2.0],
        };
        let agg = rms_over_runs(std::slice::from_ref(&report)).unwrap();
        assert_relative_eq!(agg.per_scan[0].total, 3.0);
    }

    #[test]
    fn rms_of_three_and_four() {
        let mk = |v: f64| MetricReport {
            per_scan: vec![CostDecomposition { total: v, ..Default::default() }],
            est_cardinality: vec![v],
            true_cardinality: vec![2.0],
        };
        let agg = rms_over_runs(&[mk(3.0), mk(4.0)]).unwrap();
        assert_relative_eq!(agg.per_scan[0].total, (25.0f64 / 2.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(agg.est_cardinality[0], 3.5);
    }

    #[test]
    fn rms_rejects_mismatched_lengths() {
        let a = MetricReport {
            per_scan: vec![CostDecomposition::default()],
            est_cardinality: vec![0.0],
            true_cardinality: vec![0.0],
        };
        let b = MetricReport {
            per_scan: vec![CostDecomposition::default(); 2],
            est_cardinality: vec![0.0; 2],
            true_cardinality: vec![0.0; 2],
        };
        assert!(rms_over_runs(&[a, b]).is_err());
        assert!(rms_over_runs(&[]).is_err());
    }

    #[test]
    fn rms_of_zeros_is_zero() {
        let z = MetricReport {
            per_scan: vec![CostDecomposition::default(); 3],
            est_cardinality: vec![0.0; 3],
            true_cardinality: vec![0.0; 3],
        };
        let agg = rms_over_runs(&[z.clone(), z]).unwrap();
        assert!(agg.per_scan.iter().all(|c| c.total == 0.0));
    }
}
