//! Per-scan diagnostic of one run. Temporary development aid.

use eotrack_core::ggiwt_phd::{self, TrajectoryMixture};
use eotrack_core::ggiw_phd::{self, GgiwMixture};
use eotrack_core::partitioning::{default_eps_grid, generate_partitions};
use eotrack_core::sim::{generate_scan, generate_scenario, ExperimentConfig};
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let scenario: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(42);
    let cfg = ExperimentConfig::for_scenario(scenario).unwrap();
    let truth = generate_scenario(&cfg.scenario, &cfg.motion).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = default_eps_grid(&cfg.meas, &cfg.filter.birth.params.ext.mean().unwrap());
    println!("eps grid: {:?}", grid.iter().map(|e| (e * 10.0).round() / 10.0).collect::<Vec<_>>());

    let mut tmix = TrajectoryMixture::empty();
    let mut gmix = GgiwMixture::empty();
    for k in 0..=cfg.scenario.last_scan {
        let scan = generate_scan(&truth, k, &cfg.scenario, &cfg.meas, &mut rng);
        let partitions = generate_partitions(&scan, &grid);
        // trajectory filter
        let pred = ggiwt_phd::predict(&tmix, &cfg.filter, &cfg.motion);
        let upd = ggiwt_phd::update(&pred, &scan, &partitions, &cfg.filter, &cfg.meas).unwrap();
        tmix = ggiwt_phd::reduce(&upd, &cfg.filter);
        let ext = ggiwt_phd::extract(&tmix, &cfg.filter).unwrap();
        // baseline
        let gpred = ggiw_phd::predict(&gmix, &cfg.filter, &cfg.motion);
        let gupd = ggiw_phd::update(&gpred, &scan, &partitions, &cfg.filter, &cfg.meas).unwrap();
        gmix = ggiw_phd::reduce(&gupd, &cfg.filter);
        let gext = ggiw_phd::extract(&gmix, &cfg.filter).unwrap();

        let true_pos: Vec<String> = truth
            .iter()
            .filter_map(|o| o.step_at(k))
            .zip(truth.iter())
            .map(|(s, o)| format!("({:.0},{:.0})", o.states[s][0], o.states[s][1]))
            .collect();
        let t_info: Vec<String> = ext
            .iter()
            .map(|t| {
                let last = t.states.last().unwrap();
                format!("b{} ({:.0},{:.0})", t.birth_time, last[0], last[1])
            })
            .collect();
        let g_info: Vec<String> = gext
            .iter()
            .map(|e| format!("L{} ({:.0},{:.0})", e.label, e.state[0], e.state[1]))
            .collect();
        let top_w: Vec<String> = tmix
            .components
            .iter()
            .take(6)
            .map(|c| format!("{:.2}", c.weight))
            .collect();
        println!(
            "k={k:2} meas={:3} parts={:2} | T: n={:2} W={:5.2} ext={} [{}] | G: n={:2} W={:5.2} ext={} [{}] | truth {} | topw {}",
            scan.len(),
            partitions.len(),
            tmix.components.len(),
            tmix.total_weight(),
            ext.len(),
            t_info.join(" "),
            gmix.components.len(),
            gmix.total_weight(),
            gext.len(),
            g_info.join(" "),
            true_pos.join(" "),
            top_w.join(",")
        );
    }
    // measure position errors of extracted vs truth at the end
    let ext = ggiwt_phd::extract(&tmix, &cfg.filter).unwrap();
    for t in &ext {
        let last = t.states.last().unwrap();
        let best: f64 = truth
            .iter()
            .map(|o| {
                (Vector2::new(o.states[60][0], o.states[60][1])
                    - Vector2::new(last[0], last[1]))
                .norm()
            })
            .fold(f64::INFINITY, f64::min);
        println!(
            "final trajectory b{} len {} end ({:.1},{:.1}) dist-to-nearest-truth {:.1}",
            t.birth_time,
            t.states.len(),
            last[0],
            last[1],
            best
        );
    }
}
