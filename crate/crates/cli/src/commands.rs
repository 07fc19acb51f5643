use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use depthtrack_core::eval::{
    average_precision, confusion_method2, error_series, precision, success_curve, Annotation, ConfusionMethod2,
    FrameErrors,
};
use depthtrack_core::features::to_grayscale;
use depthtrack_core::io::{
    load_annotations, load_scenario, load_sequence, read_tracks, render_synthetic, tracks_to_annotation,
    write_overlay, write_sequence, write_tracks, SyntheticScenario,
};
use depthtrack_core::session::{run_with, Variant};
use depthtrack_core::{BoundingBox, Error, Result, TrackerConfig, TrackerModel};
use rayon::prelude::*;

use crate::args::{BenchArgs, EvalArgs, SynthArgs, TrackArgs, VariantArg};

const SUCCESS_THRESHOLDS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

pub fn track(args: &TrackArgs) -> Result<()> {
    let variant = match args.variant {
        VariantArg::Kcf => Variant::Kcf,
        VariantArg::Rgbd => Variant::Rgbd,
        VariantArg::RgbdPf => Variant::RgbdPf,
    };
    let cfg = args.session_config();
    cfg.tracker.validate()?;
    cfg.occlusion.validate()?;
    cfg.pf.validate()?;

    let seq = load_sequence(&args.seq)?;
    if variant.needs_depth() && !seq.has_depth() {
        eprintln!("variant {variant} needs depth frames but sequence {} has none", seq.name);
        let missing = seq.entries.iter().find(|e| e.depth.is_none()).map_or(0, |e| e.index);
        return Err(Error::MissingDepth(missing as usize));
    }
    let init = match args.init {
        Some([x, y, w, h]) => BoundingBox::new(x, y, w, h),
        None => {
            let first = seq.entries[0].index;
            seq.gt
                .as_ref()
                .and_then(|gt| gt.get(first))
                .ok_or_else(|| Error::InvalidParameter(format!("no ground-truth box for first frame {first}")))?
        }
    };

    let started = Instant::now();
    let records = run_with(seq.frames(), &init, variant, &cfg, |frame, record| {
        if let Some(dir) = &args.overlays {
            let gt = seq.gt.as_ref().and_then(|g| g.get(frame.index as u64));
            write_overlay(frame, record.bbox.as_ref(), gt.as_ref(), dir)?;
        }
        Ok(())
    })?;
    write_tracks(&records, &args.out)?;
    let occluded = records.iter().filter(|r| r.occluded).count();
    eprintln!(
        "{}: {} frames with {variant} in {:.2} s ({occluded} occluded) -> {}",
        seq.name,
        records.len(),
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

struct SequenceReport {
    name: String,
    errors: Vec<FrameErrors>,
    skipped: usize,
    precision: Option<f64>,
    success: Vec<(f64, f64)>,
    method2: ConfusionMethod2,
}

fn evaluate(tracks_path: &Path, gt_path: &Path, args: &EvalArgs) -> Result<SequenceReport> {
    let tracks = tracks_to_annotation(&read_tracks(tracks_path)?)?;
    let gt: Annotation = load_annotations(gt_path)?;
    let (errors, skipped) = error_series(&gt, &tracks);
    Ok(SequenceReport {
        name: tracks_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        errors,
        skipped,
        precision: precision(&gt, &tracks, args.criterion),
        success: success_curve(&gt, &tracks, &SUCCESS_THRESHOLDS)?,
        method2: confusion_method2(&gt, &tracks, args.criterion),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |p| format!("{:.2}%", 100.0 * p))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    if args.tracks.len() != args.gt.len() {
        return Err(Error::InvalidParameter(format!(
            "{} --tracks files but {} --gt files",
            args.tracks.len(),
            args.gt.len()
        )));
    }
    // One sequence per worker; collect keeps input order.
    let reports: Vec<SequenceReport> = args
        .tracks
        .par_iter()
        .zip(args.gt.par_iter())
        .map(|(t, g)| evaluate(t, g, args))
        .collect::<Result<_>>()?;

    if let Some(path) = &args.out {
        let mut csv = String::from("sequence,frame,center_error,dx,dy,iou\n");
        for r in &reports {
            for e in &r.errors {
                let _ = writeln!(csv, "{},{},{},{},{},{}", r.name, e.frame, e.center_error, e.dx, e.dy, e.iou);
            }
        }
        write_file(path, &csv)?;
    }
    if let Some(path) = &args.success_out {
        let mut csv = String::from("sequence,threshold,success_rate\n");
        for r in &reports {
            for (t, s) in &r.success {
                let _ = writeln!(csv, "{},{t},{s}", r.name);
            }
        }
        write_file(path, &csv)?;
    }

    let mut out = String::new();
    for r in &reports {
        let n = r.errors.len().max(1) as f64;
        let mean_ce = r.errors.iter().map(|e| e.center_error).sum::<f64>() / n;
        let mean_iou = r.errors.iter().map(|e| e.iou).sum::<f64>() / n;
        let _ = writeln!(out, "== {}", r.name);
        let _ = writeln!(
            out,
            "frames with both boxes: {} (skipped {}), mean center error {:.2} px, mean IoU {:.3}",
            r.errors.len(),
            r.skipped,
            mean_ce,
            mean_iou
        );
        let _ = writeln!(out, "precision: {}", fmt_opt(r.precision));
        let row: Vec<String> = r.success.iter().map(|(t, s)| format!("{t:.1}:{s:.3}")).collect();
        let _ = writeln!(out, "success rate: {}", row.join(" "));
        let _ = writeln!(out, "method-2 confusion: {}", r.method2);
    }
    let precisions: Vec<Option<f64>> = reports.iter().map(|r| r.precision).collect();
    let _ = writeln!(out, "average precision: {}", fmt_opt(average_precision(&precisions)));
    print!("{out}");
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let seq = render_synthetic(&scenario)?;
    write_sequence(&seq, &args.out)?;
    eprintln!("wrote {} frames to {}", seq.frames.len(), args.out.display());
    Ok(())
}

/// Per-frame timing of detect + train on a square window of `window_cells` HOG cells.
pub fn bench(args: &BenchArgs) -> Result<()> {
    if args.window_cells < 4 || args.frames == 0 {
        return Err(Error::InvalidParameter("need at least 4 window cells and 1 frame".into()));
    }
    let config = TrackerConfig::default();
    let window_px = (args.window_cells * config.features.cell_size) as f64;
    let target = (window_px / config.padding).ceil() as usize;
    let scenario = SyntheticScenario {
        width: (window_px * 2.0) as usize,
        height: (window_px * 1.5) as usize,
        frames: args.warmup + args.frames + 1,
        target_x: window_px * 0.5,
        target_y: window_px * 0.25,
        target_w: target,
        target_h: target,
        target_vx: 1.0,
        ..SyntheticScenario::default()
    };
    let seq = render_synthetic(&scenario)?;
    let grays: Vec<_> = seq.frames.iter().map(|f| to_grayscale(&f.rgb)).collect();
    let mut prev = scenario.target_box(1);
    let mut model = TrackerModel::init_gray(grays[0].view(), &prev, config)?;
    let mut times = Vec::with_capacity(args.frames);
    for (i, gray) in grays[1..].iter().enumerate() {
        let t0 = Instant::now();
        let det = model.track_gray(gray.view(), &prev)?;
        let elapsed = t0.elapsed().as_secs_f64() * 1e3;
        prev = det.bbox;
        if i >= args.warmup {
            times.push(elapsed);
        }
    }
    times.sort_by(f64::total_cmp);
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let median = percentile(&times, 0.5);
    let p99 = percentile(&times, 0.99);
    let (fh, fw) = model.template.spatial();
    println!(
        "window {fw}x{fh} cells ({window_px}x{window_px} px), {} frames: mean {mean:.3} ms, median {median:.3} ms, p99 {p99:.3} ms, {:.1} FPS",
        times.len(),
        1e3 / mean
    );
    if median >= 5.0 {
        eprintln!("warning: median step time {median:.3} ms is above the 5 ms target");
    }
    Ok(())
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}
