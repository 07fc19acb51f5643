use std::path::Path;
use std::process::{Command, Output};

fn depthtrack(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthtrack"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, scenario: &str) {
    std::fs::write(dir.join("scene.txt"), scenario).unwrap();
    let out = depthtrack(&["synth", "--scenario", "scene.txt", "--out", "seq"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = depthtrack(&["track", "--variant", "kcf"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = depthtrack(&["track", "--variant", "mosse", "--seq", "x", "--init", "1,2,3,4"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = depthtrack(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_sequence_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = depthtrack(&["track", "--variant", "kcf", "--seq", "nowhere", "--init", "1,1,10,10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn depth_variants_need_depth_frames() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "frames = 4\n");
    std::fs::remove_dir_all(dir.path().join("seq/depth")).unwrap();
    let out = depthtrack(&["track", "--variant", "rgbd", "--seq", "seq", "--init-from-gt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));

    let out = depthtrack(&["track", "--variant", "kcf", "--seq", "seq", "--init-from-gt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn track_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "frames = 12\ntarget_vx = 2\n");
    let out = depthtrack(
        &["track", "--variant", "kcf", "--seq", "seq", "--init-from-gt", "--out", "tracks.csv", "--overlays", "ov"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tracks = std::fs::read_to_string(dir.path().join("tracks.csv")).unwrap();
    let mut lines = tracks.lines();
    assert_eq!(lines.next(), Some("frame,x,y,w,h,response,occluded,variant"));
    assert_eq!(lines.count(), 12);
    assert_eq!(std::fs::read_dir(dir.path().join("ov")).unwrap().count(), 12);

    let out = depthtrack(
        &[
            "eval", "--tracks", "tracks.csv", "--gt", "seq/gt.csv", "--out", "series.csv", "--success-out", "success.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("precision: 100.00%"), "{report}");
    assert!(report.contains("TN undetermined"), "{report}");
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 13);
    assert!(std::fs::read_to_string(dir.path().join("success.csv")).unwrap().lines().count() > 1);
}

#[test]
fn eval_needs_matching_track_and_gt_lists() {
    let dir = tempfile::tempdir().unwrap();
    let out = depthtrack(&["eval", "--tracks", "a.csv", "--tracks", "b.csv", "--gt", "g.csv"], dir.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn bench_reports_timings() {
    let dir = tempfile::tempdir().unwrap();
    let out = depthtrack(&["bench", "--window-cells", "16", "--frames", "5", "--warmup", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("median") && text.contains("FPS"), "{text}");
}
