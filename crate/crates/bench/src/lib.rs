//! Shared fixtures for the criterion benches.

use depthtrack_core::features::to_grayscale;
use depthtrack_core::geometry::BoundingBox;
use depthtrack_core::io::{render_synthetic, SyntheticScenario};
use depthtrack_core::TrackerConfig;
use ndarray::Array2;

/// Grayscale frames of a textured target whose padded window spans
/// `window_cells` HOG cells per side, plus the first-frame box.
pub fn window_fixture(window_cells: usize, frames: usize) -> (Vec<Array2<f64>>, BoundingBox) {
    let config = TrackerConfig::default();
    let window_px = (window_cells * config.features.cell_size) as f64;
    let target = (window_px / config.padding).ceil() as usize;
    let scenario = SyntheticScenario {
        width: (window_px * 2.0) as usize,
        height: (window_px * 1.5) as usize,
        frames,
        target_x: window_px * 0.5,
        target_y: window_px * 0.25,
        target_w: target,
        target_h: target,
        target_vx: 1.0,
        ..SyntheticScenario::default()
    };
    let seq = render_synthetic(&scenario).expect("valid fixture scenario");
    let grays = seq.frames.iter().map(|f| to_grayscale(&f.rgb)).collect();
    (grays, scenario.target_box(1))
}
