//! Compares FLD, PCA and plain-cosine association on the hard synthetic
//! suite and prints per-seed IDF1 and ID switches.

use hatrack::eval::evaluate;
use hatrack::io::frame_inputs;
use hatrack::synth::{generate, SynthConfig};
use hatrack::tracker::{track_frames, ProjectionChoice, TrackerConfig};

fn main() {
    let mut synth = SynthConfig::default();
    let mut tracker = TrackerConfig::default();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        if synth.set(k, v).is_err() {
            tracker.set(k, v).expect("known key");
        }
    }
    let modes = [
        ("fld", ProjectionChoice::Fld),
        ("pca", ProjectionChoice::Pca),
        ("none", ProjectionChoice::None),
    ];
    let mut sums = [(0.0, 0usize); 3];
    for seed in 1..=10u64 {
        synth.seed = seed;
        let out = generate(&synth).unwrap();
        let frames = frame_inputs(&out.dets, &out.feats).unwrap();
        let mut line = format!("seed {seed:>2}");
        for (m, (name, kind)) in modes.iter().enumerate() {
            let cfg = TrackerConfig {
                projection_kind: *kind,
                ..tracker.clone()
            };
            let pred = track_frames(&cfg, &frames).unwrap();
            let r = evaluate(&pred, &out.gt, 0.5).unwrap();
            sums[m].0 += r.idf1;
            sums[m].1 += r.idsw;
            line += &format!("  {name} idf1={:.3} idsw={:>4} ids={:>3}", r.idf1, r.idsw, r.num_pred_ids);
        }
        println!("{line}");
    }
    for (m, (name, _)) in modes.iter().enumerate() {
        println!("{name}: mean idf1={:.4} total idsw={}", sums[m].0 / 10.0, sums[m].1);
    }
}
