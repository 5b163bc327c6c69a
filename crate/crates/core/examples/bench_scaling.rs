//! Prints fit latency percentiles across feature dimensions.

use hatrack::bench::{log_log_slope, run, BenchConfig};

fn main() {
    let dims = [64usize, 128, 256, 512];
    let mut p50 = Vec::new();
    for &dim in &dims {
        let r = run(&BenchConfig {
            dim,
            frames: 40,
            ..BenchConfig::default()
        })
        .expect("bench run");
        println!("dim {dim:>4}: p50 {:.3} ms  p95 {:.3} ms  fps {:.1}", r.fit_p50_ms, r.fit_p95_ms, r.fps);
        p50.push(r.fit_p50_ms);
    }
    let xs: Vec<f64> = dims.iter().map(|&d| d as f64).collect();
    println!("log-log slope {:.3}", log_log_slope(&xs, &p50));
}
