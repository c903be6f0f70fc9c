//! Shared test oracles, independent of the library's computation paths.

#![allow(dead_code)]

use eotrack_core::distributions::{GammaParams, GaussianParams, GgiwParams, InverseWishartParams};
use eotrack_core::metrics::{MetricConfig, MetricTrajectory};
use eotrack_core::models::{MeasModel, StateCov, StateVector};
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};

/// Trapezoid quadrature of the Poisson pmf against the gamma prior over
/// gamma in (0, hi).
pub fn count_evidence_quadrature(g: &GammaParams, n: usize, hi: f64, steps: usize) -> f64 {
    let ln_gamma = statrs::function::gamma::ln_gamma;
    let h = hi / steps as f64;
    let nf = n as f64;
    let f = |gamma: f64| -> f64 {
        if gamma <= 0.0 {
            return 0.0;
        }
        let ln_poisson = -gamma + nf * gamma.ln() - ln_gamma(nf + 1.0);
        let ln_prior =
            g.alpha * g.beta.ln() + (g.alpha - 1.0) * gamma.ln() - g.beta * gamma - ln_gamma(g.alpha);
        (ln_poisson + ln_prior).exp()
    };
    let mut acc = 0.0;
    for i in 0..steps {
        let a = i as f64 * h;
        let b = a + h;
        acc += 0.5 * (f(a) + f(b)) * h;
    }
    acc
}

/// Converted measurement noise at `p`, matching the model definition.
pub fn noise_cov_at(p: &Vector2<f64>, mm: &MeasModel) -> Matrix2<f64> {
    let r = p.norm();
    let phi = p[1].atan2(p[0]);
    let (s, c) = phi.sin_cos();
    let j = Matrix2::new(c, -r * s, s, r * c);
    j * Matrix2::new(mm.sigma_r * mm.sigma_r, 0.0, 0.0, mm.sigma_phi * mm.sigma_phi)
        * j.transpose()
}

fn ln_gaussian2(z: &Vector2<f64>, mean: &Vector2<f64>, cov: &Matrix2<f64>) -> f64 {
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    let d = z - mean;
    let q = (d[0] * d[0] * cov[(1, 1)] - 2.0 * d[0] * d[1] * cov[(0, 1)]
        + d[1] * d[1] * cov[(0, 0)])
        / det;
    -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
}

fn chol5(p: &StateCov) -> StateCov {
    let mut l = StateCov::zeros();
    for i in 0..5 {
        for j in 0..=i {
            let mut s = p[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                l[(i, j)] = s.max(0.0).sqrt();
            } else if l[(j, j)] > 0.0 {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    l
}

fn sample_chi2(dof: f64, rng: &mut ChaCha8Rng) -> f64 {
    GammaDist::new(dof / 2.0, 2.0).unwrap().sample(rng)
}

/// Draws one extent matrix from the inverse-Wishart parameterization used by
/// the library (mean = scale / (dof - 2d - 2)) via a Bartlett-sampled Wishart
/// of the inverted scale.
pub fn sample_inverse_wishart(iw: &InverseWishartParams, rng: &mut ChaCha8Rng) -> Matrix2<f64> {
    let nu = iw.dof - 3.0; // standard IW dof
    let det = iw.scale[(0, 0)] * iw.scale[(1, 1)] - iw.scale[(0, 1)] * iw.scale[(1, 0)];
    let v_inv = Matrix2::new(
        iw.scale[(1, 1)] / det,
        -iw.scale[(0, 1)] / det,
        -iw.scale[(1, 0)] / det,
        iw.scale[(0, 0)] / det,
    );
    // 2x2 Cholesky of V^{-1}
    let c11 = v_inv[(0, 0)].sqrt();
    let c21 = v_inv[(1, 0)] / c11;
    let c22 = (v_inv[(1, 1)] - c21 * c21).max(1e-300).sqrt();
    let c = Matrix2::new(c11, 0.0, c21, c22);
    let a = Matrix2::new(
        sample_chi2(nu, rng).sqrt(),
        0.0,
        StandardNormal.sample(rng),
        sample_chi2(nu - 1.0, rng).sqrt(),
    );
    let t = c * a;
    let w = t * t.transpose();
    let det_w = w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)];
    Matrix2::new(
        w[(1, 1)] / det_w,
        -w[(0, 1)] / det_w,
        -w[(1, 0)] / det_w,
        w[(0, 0)] / det_w,
    )
}

/// Monte Carlo estimate of the log marginal likelihood of a cell: averages
/// the Poisson count probability times the product of single-measurement
/// Gaussian likelihoods over prior draws of (rate, state, extent).
pub fn mc_cell_evidence(
    params: &GgiwParams,
    cell: &[Vector2<f64>],
    mm: &MeasModel,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let ln_gamma = statrs::function::gamma::ln_gamma;
    let n = cell.len() as f64;
    let l = chol5(&params.kin.cov);
    let gamma_dist = GammaDist::new(params.rate.alpha, 1.0 / params.rate.beta).unwrap();
    let mut log_terms = Vec::with_capacity(samples);
    for _ in 0..samples {
        let rate: f64 = gamma_dist.sample(rng);
        let mut z = StateVector::zeros();
        for i in 0..5 {
            z[i] = StandardNormal.sample(rng);
        }
        let x_state = params.kin.mean + l * z;
        let extent = sample_inverse_wishart(&params.ext, rng);
        let pos = Vector2::new(x_state[0], x_state[1]);
        let spread = mm.rho * extent + noise_cov_at(&pos, mm);
        let mut ln_term = -rate + n * rate.ln() - ln_gamma(n + 1.0);
        for zm in cell {
            ln_term += ln_gaussian2(zm, &pos, &spread);
        }
        log_terms.push(ln_term);
    }
    let mx = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = log_terms.iter().map(|t| (t - mx).exp()).sum::<f64>() / samples as f64;
    mx + mean.ln()
}

/// Plain extended Kalman measurement update on a cell centroid with
/// measurement noise spread / |W|.
pub fn ekf_centroid_update(
    prior: &GaussianParams,
    centroid: &Vector2<f64>,
    spread: &Matrix2<f64>,
    count: usize,
) -> GaussianParams {
    let mut h = nalgebra::SMatrix::<f64, 2, 5>::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    let s = h * prior.cov * h.transpose() + spread / count as f64;
    let s_inv = s.try_inverse().unwrap();
    let k = prior.cov * h.transpose() * s_inv;
    let innovation = centroid - h * prior.mean;
    let mean = prior.mean + k * innovation;
    let cov = prior.cov - k * s * k.transpose();
    GaussianParams::new(mean, 0.5 * (cov + cov.transpose()))
}

// ---------------------------------------------------------------------------
// Independent exhaustive trajectory-metric oracle
// ---------------------------------------------------------------------------

/// All partial matchings truth -> est, generated by per-truth choice lists.
fn all_matchings(n_truth: usize, n_est: usize) -> Vec<Vec<Option<usize>>> {
    let mut out: Vec<Vec<Option<usize>>> = vec![Vec::new()];
    for _ in 0..n_truth {
        let mut next = Vec::new();
        for m in &out {
            for choice in std::iter::once(None).chain((0..n_est).map(Some)) {
                if let Some(j) = choice {
                    if m.contains(&Some(j)) {
                        continue;
                    }
                }
                let mut m2 = m.clone();
                m2.push(choice);
                next.push(m2);
            }
        }
        out = next;
    }
    out
}

fn oracle_gw(a_pos: &Vector2<f64>, a_ext: &Matrix2<f64>, b_pos: &Vector2<f64>, b_ext: &Matrix2<f64>) -> f64 {
    // spectral square roots, straightforwardly
    fn sqrtm(m: &Matrix2<f64>) -> Matrix2<f64> {
        let eig = nalgebra::SymmetricEigen::new(*m);
        let d = Matrix2::new(
            eig.eigenvalues[0].max(0.0).sqrt(),
            0.0,
            0.0,
            eig.eigenvalues[1].max(0.0).sqrt(),
        );
        eig.eigenvectors * d * eig.eigenvectors.transpose()
    }
    let sa = sqrtm(a_ext);
    let inner = sqrtm(&(sa * b_ext * sa));
    let tr = (a_ext + b_ext - 2.0 * inner).trace().max(0.0);
    ((a_pos - b_pos).norm_squared() + tr).sqrt()
}

/// Exhaustive minimum of the assignment-sequence objective by depth-first
/// search over all per-scan matchings, with sound cost pruning.
pub fn oracle_trajectory_distance(
    truth: &[MetricTrajectory],
    est: &[MetricTrajectory],
    window_end: usize,
    cfg: &MetricConfig,
) -> f64 {
    let p = cfg.order;
    let cp = cfg.cutoff.powf(p);
    let matchings = all_matchings(truth.len(), est.len());
    let scan_cost = |m: &Vec<Option<usize>>, t: usize| -> f64 {
        let mut cost = 0.0;
        let mut covered = vec![false; est.len()];
        for (i, tr) in truth.iter().enumerate() {
            if tr.step_at(t).is_none() {
                continue;
            }
            match m[i] {
                Some(j) if est[j].step_at(t).is_some() => {
                    let (si, sj) = (tr.step_at(t).unwrap(), est[j].step_at(t).unwrap());
                    let g = oracle_gw(
                        &tr.positions[si],
                        &tr.extents[si],
                        &est[j].positions[sj],
                        &est[j].extents[sj],
                    );
                    cost += g.min(cfg.cutoff).powf(p);
                    covered[j] = true;
                }
                _ => cost += 0.5 * cp,
            }
        }
        for (j, e) in est.iter().enumerate() {
            if e.step_at(t).is_some() && !covered[j] {
                cost += 0.5 * cp;
            }
        }
        cost
    };
    let switch_cost = |a: &Vec<Option<usize>>, b: &Vec<Option<usize>>, ta: usize, tb: usize| {
        let mut units = 0.0;
        for (i, tr) in truth.iter().enumerate() {
            if tr.step_at(ta).is_none() || tr.step_at(tb).is_none() {
                continue;
            }
            units += match (a[i], b[i]) {
                (Some(x), Some(y)) if x != y => 1.0,
                (Some(_), None) | (None, Some(_)) => 0.5,
                _ => 0.0,
            };
        }
        cfg.switch_penalty * 0.5 * units
    };
    // forward table of per-scan matchings costs for speed
    let per_scan: Vec<Vec<f64>> = (0..=window_end)
        .map(|t| matchings.iter().map(|m| scan_cost(m, t)).collect())
        .collect();

    let mut best = f64::INFINITY;
    struct Dfs<'a> {
        matchings: &'a [Vec<Option<usize>>],
        per_scan: &'a [Vec<f64>],
        window_end: usize,
    }
    fn rec(
        d: &Dfs,
        t: usize,
        prev: usize,
        acc: f64,
        best: &mut f64,
        switch: &dyn Fn(usize, usize, usize, usize) -> f64,
    ) {
        if acc >= *best {
            return;
        }
        if t > d.window_end {
            *best = acc;
            return;
        }
        for (s, _) in d.matchings.iter().enumerate() {
            let mut c = acc + d.per_scan[t][s];
            if t > 0 {
                c += switch(prev, s, t - 1, t);
            }
            rec(d, t + 1, s, c, best, switch);
        }
    }
    let dfs = Dfs { matchings: &matchings, per_scan: &per_scan, window_end };
    let switch =
        |a: usize, b: usize, ta: usize, tb: usize| switch_cost(&matchings[a], &matchings[b], ta, tb);
    rec(&dfs, 0, 0, 0.0, &mut best, &switch);
    best.powf(1.0 / p)
}

/// Random SPD 2x2 matrix with eigenvalues in [lo, hi].
pub fn random_spd2(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix2<f64> {
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (s, c) = theta.sin_cos();
    let u = Matrix2::new(c, -s, s, c);
    let d = Matrix2::new(rng.random_range(lo..hi), 0.0, 0.0, rng.random_range(lo..hi));
    u * d * u.transpose()
}

/// Random trajectory living inside the window [0, k_max].
pub fn random_metric_trajectory(rng: &mut ChaCha8Rng, k_max: usize) -> MetricTrajectory {
    let birth = rng.random_range(0..=k_max.min(2));
    let len = rng.random_range(1..=(k_max + 1 - birth));
    let x0: f64 = rng.random_range(-20.0..20.0);
    let y0: f64 = rng.random_range(-20.0..20.0);
    let vx: f64 = rng.random_range(-3.0..3.0);
    let vy: f64 = rng.random_range(-3.0..3.0);
    MetricTrajectory {
        birth_time: birth,
        positions: (0..len)
            .map(|i| Vector2::new(x0 + vx * i as f64, y0 + vy * i as f64))
            .collect(),
        extents: (0..len).map(|_| random_spd2(rng, 0.5, 9.0)).collect(),
    }
}
