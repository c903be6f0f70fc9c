//! Exploratory single-run probe of both scenarios. Temporary development aid.

use eotrack_core::sim::{monte_carlo, ExperimentConfig, FilterKind};
use std::time::Instant;

fn main() {
    let runs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2);
    for scenario in [1u32, 2] {
        let cfg = ExperimentConfig::for_scenario(scenario).unwrap();
        let filters = [
            FilterKind::Baseline,
            FilterKind::Trajectory,
            FilterKind::TrajectoryNoSmoothing,
        ];
        let t0 = Instant::now();
        let out = monte_carlo(&cfg, &filters, runs, 42).unwrap();
        let dt = t0.elapsed();
        println!("=== scenario {scenario}: {runs} runs in {:.1} s", dt.as_secs_f64());
        for (fi, kind) in out.filters.iter().enumerate() {
            let rms = &out.rms[fi];
            let n = rms.per_scan.len();
            let avg_total: f64 = rms.per_scan.iter().map(|c| c.total).sum::<f64>() / n as f64;
            let avg_switch: f64 =
                rms.per_scan.iter().map(|c| c.track_switches).sum::<f64>() / n as f64;
            let avg_loc: f64 =
                rms.per_scan.iter().map(|c| c.localization).sum::<f64>() / n as f64;
            let avg_missed: f64 = rms.per_scan.iter().map(|c| c.missed).sum::<f64>() / n as f64;
            let avg_false: f64 =
                rms.per_scan.iter().map(|c| c.false_tracks).sum::<f64>() / n as f64;
            let early_card: f64 = rms.est_cardinality[..21].iter().sum::<f64>() / 21.0;
            let late_card: f64 = rms.est_cardinality[21..].iter().sum::<f64>()
                / (rms.est_cardinality.len() - 21) as f64;
            println!(
                "  {:<24} total {:7.3}  loc {:7.3}  miss {:7.3}  false {:7.3}  switch {:7.3}  card<=20 {:.3}  card>20 {:.3}",
                kind.name(), avg_total, avg_loc, avg_missed, avg_false, avg_switch, early_card, late_card
            );
        }
        // per-scan curve of total RMS for the first two filters
        for (fi, kind) in out.filters.iter().enumerate() {
            let curve: Vec<String> = out.rms[fi]
                .per_scan
                .iter()
                .step_by(5)
                .map(|c| format!("{:.1}", c.total))
                .collect();
            println!("  {:<24} totals every 5 scans: {}", kind.name(), curve.join(" "));
        }
    }
}
