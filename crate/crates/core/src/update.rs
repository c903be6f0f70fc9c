//! Shared PHD measurement-update arithmetic.
//!
//! Both filters factor a scan's update into the same three branches: a
//! missed-detection copy of every predicted component, per-cell conjugate
//! updates of predicted components, and per-cell births. The weight
//! arithmetic depends only on each component's newest-step marginal, so one
//! orchestrator serves both mixture types through [`PhdComponent`]; this is
//! also what makes the two filters' posterior weights agree exactly on
//! identical inputs.
//!
//! All likelihoods are handled in the log domain. Per-component cell
//! likelihoods are normalized by the clutter intensity, which puts the
//! clutter-only explanation of a singleton cell at exactly 1.

use std::collections::BTreeMap;

use nalgebra::Vector2;

use crate::distributions::{
    ln_cell_evidence_set, missed_detection_reduction, CellStats, GammaParams, GgiwParams,
    GiwCellTerms, InverseWishartParams,
};
use crate::error::{Error, Result};
use crate::ggiw_phd::{BirthTemplate, FilterConfig};
use crate::linalg::{logsumexp, symmetrize2};
use crate::models::{MeasModel, IDX_PX, IDX_PY};
use crate::partitioning::Partition;

/// A mixture component a PHD update can operate on: exposes the newest-step
/// GGIW marginal and constructs updated copies of itself.
pub(crate) trait PhdComponent: Sized {
    fn weight(&self) -> f64;
    fn rate(&self) -> &GammaParams;
    /// GGIW marginal of the newest step (full state for plain components).
    fn last_ggiw(&self) -> GgiwParams;
    /// Missed-detection copy: new weight and reduced rate, all else predicted.
    fn with_missed_update(&self, new_weight: f64, new_rate: GammaParams) -> Self;
    /// Detection update against one cell.
    fn with_detection_update(
        &self,
        terms: &GiwCellTerms,
        stats: &CellStats,
        new_weight: f64,
        cfg: &FilterConfig,
    ) -> Self;
    /// New component born from a cell: conjugately updated birth parameters
    /// plus the pre-update extent prior of the birth step.
    fn birth_from(
        posterior: GgiwParams,
        prior_ext: InverseWishartParams,
        birth_time: usize,
        label: u64,
        weight: f64,
    ) -> Self;
}

/// Conjugate GGIW update of a full-state component against one cell.
pub(crate) fn ggiw_conjugate_update(
    params: &GgiwParams,
    terms: &GiwCellTerms,
    stats: &CellStats,
) -> GgiwParams {
    let n = stats.count as f64;
    let gain = params.kin.cov.fixed_view::<5, 2>(0, 0) * terms.innovation_cov_inv;
    let mean = params.kin.mean + gain * terms.innovation;
    let cov = params.kin.cov - gain * terms.innovation_cov * gain.transpose();
    let cov = 0.5 * (cov + cov.transpose());
    GgiwParams {
        rate: GammaParams::new(params.rate.alpha + n, params.rate.beta + 1.0),
        kin: crate::distributions::GaussianParams::new(mean, cov),
        ext: InverseWishartParams::new(
            params.ext.dof + n,
            symmetrize2(&(params.ext.scale + terms.scale_increment)),
        ),
    }
}

/// Recenters the birth template's position prior at a cell centroid.
pub(crate) fn birth_params_at(template: &BirthTemplate, centroid: &Vector2<f64>) -> GgiwParams {
    let mut params = template.params.clone();
    params.kin.mean[IDX_PX] = centroid[0];
    params.kin.mean[IDX_PY] = centroid[1];
    params
}

/// PHD measurement update over a set of partitions.
///
/// Output order is deterministic: missed copies in component order, then
/// detected components in (component, cell) order, then births in cell order.
/// Components identical across partitions differ only in weight, so their
/// weights are aggregated. Detected and birth components whose aggregated
/// weight does not exceed the pruning threshold are not materialized; the
/// subsequent reduction would remove them unchanged.
pub(crate) fn phd_update<C: PhdComponent>(
    predicted: &[C],
    scan: &[Vector2<f64>],
    partitions: &[Partition],
    cfg: &FilterConfig,
    mm: &MeasModel,
    birth_time: usize,
    next_label: &mut u64,
) -> Result<Vec<C>> {
    let mut out: Vec<C> = Vec::with_capacity(predicted.len());
    for comp in predicted {
        let (q, rate) = missed_detection_reduction(comp.rate(), cfg.p_detect);
        out.push(comp.with_missed_update(q * comp.weight(), rate));
    }
    if scan.is_empty() {
        return Ok(out);
    }
    if partitions.is_empty() {
        return Err(Error::NoPartitions);
    }

    // Unique cells across partitions; identical cells share all evidence work.
    let mut cell_ids: BTreeMap<&[usize], usize> = BTreeMap::new();
    let mut cells: Vec<CellStats> = Vec::new();
    let mut partition_cells: Vec<Vec<usize>> = Vec::with_capacity(partitions.len());
    for p in partitions {
        let mut ids = Vec::with_capacity(p.cells.len());
        for cell in &p.cells {
            let id = *cell_ids.entry(&cell.indices).or_insert_with(|| {
                let points: Vec<Vector2<f64>> =
                    cell.indices.iter().map(|&i| scan[i]).collect();
                cells.push(CellStats::from_points(&points));
                cells.len() - 1
            });
            ids.push(id);
        }
        partition_cells.push(ids);
    }

    let ln_clutter = (cfg.clutter_rate * cfg.clutter_density).ln();
    let ln_pd = cfg.p_detect.ln();

    // Clutter-normalized log likelihood of every (component, cell) pair.
    // Degenerate geometry (singular innovation, component at the sensor)
    // disqualifies the pairing instead of aborting the scan.
    let comp_params: Vec<GgiwParams> = predicted.iter().map(|c| c.last_ggiw()).collect();
    let ln_weights: Vec<f64> = predicted.iter().map(|c| c.weight().ln()).collect();
    let mut comp_cell: Vec<Vec<Option<(f64, GiwCellTerms)>>> =
        vec![Vec::with_capacity(cells.len()); predicted.len()];
    for (ci, params) in comp_params.iter().enumerate() {
        for stats in &cells {
            let entry = match ln_cell_evidence_set(params, stats, mm) {
                Ok((ev, terms)) => {
                    let lnl = ln_pd + ev - stats.count as f64 * ln_clutter;
                    lnl.is_finite().then_some((lnl, terms))
                }
                Err(_) => None,
            };
            comp_cell[ci].push(entry);
        }
    }

    // Birth hypothesis per cell: the template recentered at the centroid.
    let ln_birth_weight = cfg.birth.weight.ln();
    let mut birth_cell: Vec<Option<(f64, GiwCellTerms, GgiwParams)>> =
        Vec::with_capacity(cells.len());
    for stats in &cells {
        let entry = if cfg.birth.weight > 0.0 {
            let params = birth_params_at(&cfg.birth, &stats.centroid);
            match ln_cell_evidence_set(&params, stats, mm) {
                Ok((ev, terms)) => {
                    let lnl = ln_pd + ev - stats.count as f64 * ln_clutter;
                    lnl.is_finite().then_some((lnl, terms, params))
                }
                Err(_) => None,
            }
        } else {
            None
        };
        birth_cell.push(entry);
    }

    // Cell support d_W and partition weights.
    let mut ln_dw: Vec<Vec<f64>> = Vec::with_capacity(partitions.len());
    let mut ln_omega: Vec<f64> = Vec::with_capacity(partitions.len());
    for ids in &partition_cells {
        let mut acc = 0.0;
        let mut dws = Vec::with_capacity(ids.len());
        for &wi in ids {
            let mut support: Vec<f64> = Vec::with_capacity(predicted.len() + 2);
            if cells[wi].count == 1 {
                support.push(0.0); // clutter explanation of a singleton
            }
            for ci in 0..predicted.len() {
                if let Some((lnl, _)) = &comp_cell[ci][wi] {
                    support.push(ln_weights[ci] + lnl);
                }
            }
            if let Some((lnl, _, _)) = &birth_cell[wi] {
                support.push(ln_birth_weight + lnl);
            }
            let d = logsumexp(&support);
            dws.push(d);
            acc += d;
        }
        ln_dw.push(dws);
        ln_omega.push(acc);
    }
    let norm = logsumexp(&ln_omega);
    if !norm.is_finite() {
        // no partition carries support; the scan cannot be explained
        return Ok(out);
    }
    for w in ln_omega.iter_mut() {
        *w -= norm;
    }

    // Aggregate posterior weights across partitions.
    let mut agg_comp = vec![vec![0.0f64; cells.len()]; predicted.len()];
    let mut agg_birth = vec![0.0f64; cells.len()];
    for (pi, ids) in partition_cells.iter().enumerate() {
        for (k, &wi) in ids.iter().enumerate() {
            let base = ln_omega[pi] - ln_dw[pi][k];
            if !base.is_finite() {
                continue;
            }
            for ci in 0..predicted.len() {
                if let Some((lnl, _)) = &comp_cell[ci][wi] {
                    agg_comp[ci][wi] += (base + ln_weights[ci] + lnl).exp();
                }
            }
            if let Some((lnl, _, _)) = &birth_cell[wi] {
                agg_birth[wi] += (base + ln_birth_weight + lnl).exp();
            }
        }
    }

    for (ci, comp) in predicted.iter().enumerate() {
        for (wi, stats) in cells.iter().enumerate() {
            let w = agg_comp[ci][wi];
            if w > cfg.prune_threshold {
                let (_, terms) = comp_cell[ci][wi].as_ref().expect("weight implies terms");
                out.push(comp.with_detection_update(terms, stats, w, cfg));
            }
        }
    }
    for (wi, stats) in cells.iter().enumerate() {
        let w = agg_birth[wi];
        if w > cfg.prune_threshold {
            let (_, terms, params) = birth_cell[wi].as_ref().expect("weight implies terms");
            let posterior = ggiw_conjugate_update(params, terms, stats);
            let prior_ext = params.ext;
            let label = *next_label;
            *next_label += 1;
            out.push(C::birth_from(posterior, prior_ext, birth_time, label, w));
        }
    }
    Ok(out)
}
