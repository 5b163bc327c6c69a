use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hatrack::bench::{self, BenchConfig};
use hatrack::config::{parse_override, parse_pairs, ConfigError};
use hatrack::eval::evaluate;
use hatrack::fld::{self, FeatureQueue, ProjectionMatrix};
use hatrack::io::{self, FeatureBank, IoError};
use hatrack::synth::{self, SynthConfig};
use hatrack::tracker::{Tracker, TrackerConfig};

use crate::error::CliError;
use crate::manifest::Manifest;
use crate::{BenchArgs, ConfigArgs, EvalArgs, FeatureArgs, InspectArgs, SynthArgs, TrackArgs};

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

/// Applies the config file, then each `--set`, through `set`.
fn layered<F>(file: Option<&Path>, overrides: &[String], mut set: F) -> Result<(), CliError>
where
    F: FnMut(&str, &str) -> Result<(), ConfigError>,
{
    if let Some(path) = file {
        for (k, v) in parse_pairs(&read_text(path)?)? {
            set(&k, &v)?;
        }
    }
    for raw in overrides {
        let (k, v) = parse_override(raw)?;
        set(&k, &v)?;
    }
    Ok(())
}

pub fn tracker_config(args: &ConfigArgs) -> Result<TrackerConfig, CliError> {
    let mut cfg = TrackerConfig::default();
    layered(args.config.as_deref(), &args.set, |k, v| cfg.set(k, v))?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_features(args: &FeatureArgs) -> Result<(FeatureBank, PathBuf), CliError> {
    match (&args.feats, &args.feats_csv) {
        (Some(p), _) => Ok((io::read_features(p)?, p.clone())),
        (None, Some(p)) => Ok((io::read_features_csv(p)?, p.clone())),
        (None, None) => Err(CliError::Usage("one of --feats or --feats-csv is required".into())),
    }
}

struct SequenceStats {
    frames: usize,
    detections: usize,
    records: usize,
    tracks: usize,
}

fn track_one(dets: &Path, feats: &FeatureArgs, out: &Path, cfg: &TrackerConfig) -> Result<SequenceStats, CliError> {
    let mut manifest = Manifest::new("track");
    let start = Instant::now();
    let detections = io::read_detections(dets)?;
    let (bank, feats_path) = load_features(feats)?;
    let frames = io::frame_inputs(&detections, &bank)?;
    manifest.time("load", start);

    let start = Instant::now();
    let mut tracker = Tracker::new(cfg.clone())?;
    for f in &frames {
        tracker.step(f)?;
    }
    let records = tracker.finalize();
    manifest.time("track", start);

    let start = Instant::now();
    io::write_tracks(&records, out)?;
    manifest.time("write", start);

    let tracks = records.iter().map(|r| r.id).collect::<BTreeSet<_>>().len();
    manifest.set("input_dets", dets.display());
    manifest.set("input_feats", feats_path.display());
    manifest.set("output", out.display());
    manifest.set("seed", "none");
    manifest.extend("", cfg.entries());
    manifest.set("frames", frames.len());
    manifest.set("detections", detections.len());
    manifest.set("records", records.len());
    manifest.set("tracks", tracks);
    manifest.set("solver_calls", tracker.solver_calls());
    manifest.write(&out.with_extension("manifest"))?;
    Ok(SequenceStats {
        frames: frames.len(),
        detections: detections.len(),
        records: records.len(),
        tracks,
    })
}

pub fn track(args: &TrackArgs) -> Result<(), CliError> {
    let cfg = tracker_config(&args.config)?;
    if let Some(dir) = &args.dir {
        return track_dir(dir, &args.out, &cfg);
    }
    let dets = args
        .dets
        .as_ref()
        .ok_or_else(|| CliError::Usage("either --dets or --dir is required".into()))?;
    let stats = track_one(dets, &args.features, &args.out, &cfg)?;
    log::info!(
        "{} frames, {} detections, {} records, {} tracks",
        stats.frames,
        stats.detections,
        stats.records,
        stats.tracks
    );
    Ok(())
}

/// Sequences run concurrently, one tracker each; the summary is written
/// after all of them finish.
fn track_dir(dir: &Path, out: &Path, cfg: &TrackerConfig) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|source| IoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut sequences: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("det.txt").is_file())
        .collect();
    sequences.sort();
    if sequences.is_empty() {
        return Err(CliError::Usage(format!("no sequence with det.txt under {}", dir.display())));
    }
    create_dir(out)?;

    let results: Vec<(String, Result<SequenceStats, CliError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = sequences
            .iter()
            .map(|seq| {
                scope.spawn(move || {
                    let name = seq.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
                    let bin = seq.join("feats.bin");
                    let feats = if bin.is_file() {
                        FeatureArgs {
                            feats: Some(bin),
                            feats_csv: None,
                        }
                    } else {
                        FeatureArgs {
                            feats: None,
                            feats_csv: Some(seq.join("feats.csv")),
                        }
                    };
                    let result = track_one(&seq.join("det.txt"), &feats, &out.join(format!("{name}.txt")), cfg);
                    (name, result)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sequence worker panicked")).collect()
    });

    let mut summary = String::new();
    let mut first_error = None;
    for (name, result) in results {
        match result {
            Ok(s) => {
                let _ = writeln!(
                    summary,
                    "sequence={name} status=ok frames={} detections={} records={} tracks={}",
                    s.frames, s.detections, s.records, s.tracks
                );
            }
            Err(e) => {
                let _ = writeln!(summary, "sequence={name} status=error code={}", e.code());
                first_error.get_or_insert(e);
            }
        }
    }
    let path = out.join("summary.txt");
    fs::write(&path, summary).map_err(|source| IoError::Io { path, source })?;
    first_error.map_or(Ok(()), Err)
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = SynthConfig::default();
    layered(args.config.as_deref(), &args.set, |k, v| cfg.set(k, v))?;
    let start = Instant::now();
    let out = synth::generate(&cfg)?;
    let mut manifest = Manifest::new("synth");
    manifest.time("generate", start);

    let start = Instant::now();
    create_dir(&args.out)?;
    io::write_tracks(&out.gt, &args.out.join("gt.txt"))?;
    io::write_detections(&out.dets.rows, &args.out.join("det.txt"))?;
    io::write_features(&out.feats, &args.out.join("feats.bin"))?;
    manifest.time("write", start);
    manifest.set("output", args.out.display());
    manifest.extend("", cfg.entries());
    manifest.set("detections", out.dets.len());
    manifest.write(&args.out.join("synth.manifest"))?;
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let pred = io::read_gt(&args.pred)?;
    let gt = io::read_gt(&args.gt)?;
    let report = evaluate(&pred, &gt, args.iou)?;
    print!("{report}\n{}", report.to_key_value_block());
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.ids < 2 || args.dim < 2 || args.queue < 1 || args.frames < 1 {
        return Err(CliError::Usage(
            "bench needs --ids >= 2, --dim >= 2, --queue >= 1 and --frames >= 1".into(),
        ));
    }
    let report = bench::run(&BenchConfig {
        dim: args.dim,
        ids: args.ids,
        queue: args.queue,
        frames: args.frames,
        seed: args.seed,
    })?;
    for (k, v) in report.key_values() {
        println!("{k}={v}");
    }
    Ok(())
}

fn coords(proj: Option<&ProjectionMatrix>, f: &[f64]) -> [String; 2] {
    let Some(p) = proj else {
        return [String::new(), String::new()];
    };
    let y = p.project_one(f).unwrap_or_default();
    let at = |i: usize| y.get(i).map_or_else(|| "0".to_string(), |v| v.to_string());
    [at(0), at(1)]
}

/// Writes one row per history sample and per detection of `--frame`, with
/// coordinates on the top two principal axes of the history (original
/// space) and on the top two discriminant axes.
pub fn inspect(args: &InspectArgs) -> Result<(), CliError> {
    let cfg = tracker_config(&args.config)?;
    let detections = io::read_detections(&args.dets)?;
    let (bank, _) = load_features(&args.features)?;
    let frames = io::frame_inputs(&detections, &bank)?;
    let target = frames
        .iter()
        .find(|f| f.frame == args.frame)
        .ok_or_else(|| CliError::Usage(format!("frame {} has no detections", args.frame)))?;

    let mut tracker = Tracker::new(cfg.clone())?;
    let mut last = None;
    for f in frames.iter().take_while(|f| f.frame < args.frame) {
        tracker.step(f)?;
        last = Some(f.frame);
    }
    let gap = last.map_or(0, |l| u32::try_from(args.frame - l).unwrap_or(u32::MAX));
    let queues: Vec<FeatureQueue> = tracker
        .trajectories()
        .iter()
        .map(|t| {
            let mut q = t.queue.clone();
            q.advance(gap);
            q
        })
        .collect();
    let fisher = fld::fit_projection(&queues, cfg.lambda0, cfg.epsilon).ok();
    let principal = fld::fit_pca_projection(&queues, 2).ok();
    if fisher.is_none() {
        log::warn!("not enough history before frame {} for a discriminant projection", args.frame);
    }

    let report = tracker.step(target)?;
    let mut csv = String::from("kind,frame,track_id,det_index,orig_x,orig_y,fld_x,fld_y\n");
    for q in &queues {
        for e in q.entries() {
            let [ox, oy] = coords(principal.as_ref(), &e.feature);
            let [fx, fy] = coords(fisher.as_ref(), &e.feature);
            let frame = args.frame.saturating_sub(u64::from(e.age));
            let _ = writeln!(csv, "history,{frame},{},,{ox},{oy},{fx},{fy}", q.id());
        }
    }
    for (i, det) in target.detections.iter().enumerate() {
        let feature = det.feature.normalized().map_err(hatrack::tracker::TrackerError::from)?;
        let [ox, oy] = coords(principal.as_ref(), &feature);
        let [fx, fy] = coords(fisher.as_ref(), &feature);
        let id = report
            .matches
            .iter()
            .find(|(d, _)| *d == i)
            .map(|(_, id)| *id)
            .or_else(|| report.records.iter().find(|r| r.bbox == det.bbox && report.newborns.contains(&r.id)).map(|r| r.id));
        let id = id.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(csv, "detection,{},{id},{i},{ox},{oy},{fx},{fy}", args.frame);
    }
    fs::write(&args.out, csv).map_err(|source| IoError::Io {
        path: args.out.clone(),
        source,
    })?;
    Ok(())
}
