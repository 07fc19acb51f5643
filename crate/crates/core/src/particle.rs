//! Particle-filter localization layer for the RGB-D tracker.
//!
//! Particles carry a constant-velocity box state and are weighted by how well
//! the kernel-weighted color histogram under their box matches the first-frame
//! reference (Bhattacharyya distance through a Gaussian likelihood). The
//! weighted mean proposes the target position; the correlation filter's
//! response at that proposal decides whether to adopt it.

use image::RgbImage;
use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::depth::{center_depth_patch, occlusion_check, DepthPatch, OcclusionConfig, TrackStatus};
use crate::error::{Error, Result};
use crate::features::to_grayscale;
use crate::geometry::{BoundingBox, Frame};
use crate::kcf::{TrackerConfig, TrackerModel};

/// `{x, y, vx, vy, hx, hy, scale}`: top-left corner, velocity in px/frame, box
/// size and relative growth per frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParticleState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub hx: f64,
    pub hy: f64,
    pub scale: f64,
}

impl ParticleState {
    pub fn from_box(b: &BoundingBox) -> Self {
        Self {
            x: b.x,
            y: b.y,
            hx: b.w,
            hy: b.h,
            ..Self::default()
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.x, self.y, self.hx, self.hy)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.hx / 2.0, self.y + self.hy / 2.0)
    }
}

/// Diagonal process-noise variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    pub position: f64,
    pub velocity: f64,
    pub size: f64,
    pub scale: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            position: 4.0,
            velocity: 1.0,
            size: 2.0,
            scale: 1e-4,
        }
    }
}

impl ProcessNoise {
    pub fn zero() -> Self {
        Self {
            position: 0.0,
            velocity: 0.0,
            size: 0.0,
            scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfConfig {
    pub n_particles: usize,
    pub noise: ProcessNoise,
    /// Standard deviation of the likelihood in Bhattacharyya-distance units.
    pub likelihood_sigma: f64,
    /// Histogram bins per color channel.
    pub bins: usize,
    pub accept_high: f64,
    pub accept_low: f64,
    /// Replace the reference histogram whenever the proposal is adopted.
    pub refresh_reference: bool,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            n_particles: 200,
            noise: ProcessNoise::default(),
            likelihood_sigma: 0.2,
            bins: 16,
            accept_high: 0.6,
            accept_low: 0.3,
            refresh_reference: false,
        }
    }
}

impl PfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidParameter("need at least one particle".into()));
        }
        if !(0.0 < self.accept_low && self.accept_low < self.accept_high && self.accept_high < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "acceptance thresholds must satisfy 0 < low < high < 1, got {} and {}",
                self.accept_low, self.accept_high
            )));
        }
        if !(1..=256).contains(&self.bins) {
            return Err(Error::InvalidParameter(format!("bins must lie in 1..=256, got {}", self.bins)));
        }
        if !(self.likelihood_sigma > 0.0) {
            return Err(Error::InvalidParameter("likelihood sigma must be positive".into()));
        }
        let n = self.noise;
        if [n.position, n.velocity, n.size, n.scale].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("process noise variances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<ParticleState>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    fn normalize(&mut self) -> bool {
        let sum: f64 = self.weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            let u = 1.0 / self.weights.len() as f64;
            self.weights.iter_mut().for_each(|w| *w = u);
            return false;
        }
        self.weights.iter_mut().for_each(|w| *w /= sum);
        true
    }
}

fn normal(variance: f64) -> Normal<f64> {
    Normal::new(0.0, variance.max(0.0).sqrt()).expect("finite standard deviation")
}

/// `n_particles` copies of the box state with position jitter, zero velocity and
/// zero scale, all weighted equally.
pub fn init_particles<R: Rng + ?Sized>(bbox: &BoundingBox, cfg: &PfConfig, rng: &mut R) -> ParticleSet {
    let pos = normal(cfg.noise.position);
    let base = ParticleState::from_box(bbox);
    let particles = (0..cfg.n_particles)
        .map(|_| ParticleState {
            x: base.x + pos.sample(rng),
            y: base.y + pos.sample(rng),
            ..base
        })
        .collect();
    let n = cfg.n_particles.max(1);
    ParticleSet {
        particles,
        weights: vec![1.0 / n as f64; cfg.n_particles],
    }
}

/// Constant-velocity propagation with additive Gaussian process noise.
pub fn predict<R: Rng + ?Sized>(set: &mut ParticleSet, noise: &ProcessNoise, rng: &mut R) {
    let (pos, vel, size, scale) = (
        normal(noise.position),
        normal(noise.velocity),
        normal(noise.size),
        normal(noise.scale),
    );
    for p in &mut set.particles {
        p.x += p.vx + pos.sample(rng);
        p.y += p.vy + pos.sample(rng);
        p.vx += vel.sample(rng);
        p.vy += vel.sample(rng);
        p.hx = ((1.0 + p.scale) * p.hx + size.sample(rng)).max(1.0);
        p.hy = ((1.0 + p.scale) * p.hy + size.sample(rng)).max(1.0);
        p.scale += scale.sample(rng);
    }
}

/// One normalized histogram per RGB channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram {
    pub bins: usize,
    pub channels: [Vec<f64>; 3],
    /// False when no pixel carried weight (box off-frame or degenerate).
    pub valid: bool,
}

/// Pixel weight `1 - r²` inside the unit ellipse inscribed in the box, 0 outside.
pub fn kernel_weight(r: f64) -> f64 {
    if r < 1.0 {
        1.0 - r * r
    } else {
        0.0
    }
}

/// Kernel-weighted color histogram of the pixels under `bbox`.
pub fn color_histogram(rgb: &RgbImage, bbox: &BoundingBox, bins: usize) -> ColorHistogram {
    let mut channels = [vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]];
    let empty = |channels| ColorHistogram {
        bins,
        channels,
        valid: false,
    };
    if bbox.is_degenerate() || bins == 0 {
        return empty(channels);
    }
    let (w, h) = (rgb.width() as f64, rgb.height() as f64);
    let x0 = bbox.x.floor().max(0.0);
    let y0 = bbox.y.floor().max(0.0);
    let x1 = (bbox.x + bbox.w).ceil().min(w);
    let y1 = (bbox.y + bbox.h).ceil().min(h);
    if x0 >= x1 || y0 >= y1 {
        return empty(channels);
    }
    let (cx, cy) = bbox.center();
    let (rx, ry) = (bbox.w / 2.0, bbox.h / 2.0);
    let mut total = 0.0;
    for py in y0 as u32..y1 as u32 {
        let dy = (py as f64 + 0.5 - cy) / ry;
        for px in x0 as u32..x1 as u32 {
            let dx = (px as f64 + 0.5 - cx) / rx;
            let k = kernel_weight((dx * dx + dy * dy).sqrt());
            if k <= 0.0 {
                continue;
            }
            let pixel = rgb.get_pixel(px, py).0;
            for (c, hist) in channels.iter_mut().enumerate() {
                hist[pixel[c] as usize * bins / 256] += k;
            }
            total += k;
        }
    }
    if total <= 0.0 {
        return empty(channels);
    }
    for hist in &mut channels {
        hist.iter_mut().for_each(|v| *v /= total);
    }
    ColorHistogram {
        bins,
        channels,
        valid: true,
    }
}

/// Bhattacharyya coefficient averaged over the channels.
pub fn bhattacharyya_coefficient(p: &ColorHistogram, q: &ColorHistogram) -> Result<f64> {
    if p.bins != q.bins {
        return Err(Error::BinMismatch {
            left: p.bins,
            right: q.bins,
        });
    }
    let f: f64 = p
        .channels
        .iter()
        .zip(q.channels.iter())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum::<f64>())
        .sum();
    Ok(f / 3.0)
}

/// Bhattacharyya distance `sqrt(1 - f)`: 0 for identical histograms, 1 for disjoint ones.
pub fn similarity(p: &ColorHistogram, q: &ColorHistogram) -> Result<f64> {
    Ok((1.0 - bhattacharyya_coefficient(p, q)?).max(0.0).sqrt())
}

/// Gaussian likelihood of a distance.
pub fn likelihood(d: f64, sigma: f64) -> f64 {
    (-d * d / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt()
}

/// Multiplies each weight by its particle's likelihood and renormalizes.
/// Returns `false` when every likelihood vanished and the weights were reset
/// to uniform.
pub fn reweigh(set: &mut ParticleSet, rgb: &RgbImage, reference: &ColorHistogram, cfg: &PfConfig) -> Result<bool> {
    if !reference.valid {
        return Err(Error::InvalidParameter("reference histogram is empty".into()));
    }
    let likelihoods: Vec<f64> = set
        .particles
        .par_iter()
        .map(|p| {
            let hist = color_histogram(rgb, &p.bbox(), reference.bins);
            if !hist.valid {
                return Ok(0.0);
            }
            Ok(likelihood(similarity(&hist, reference)?, cfg.likelihood_sigma))
        })
        .collect::<Result<_>>()?;
    for (w, l) in set.weights.iter_mut().zip(likelihoods) {
        *w *= l;
    }
    Ok(set.normalize())
}

/// Systematic resampling: N evenly spaced pointers with one random offset.
pub fn resample<R: Rng + ?Sized>(set: &mut ParticleSet, rng: &mut R) {
    let n = set.len();
    if n == 0 {
        return;
    }
    let step = 1.0 / n as f64;
    let start = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = set.weights[0];
    let mut i = 0;
    for k in 0..n {
        let u = start + k as f64 * step;
        while u > cumulative && i < n - 1 {
            i += 1;
            cumulative += set.weights[i];
        }
        out.push(set.particles[i]);
    }
    set.particles = out;
    set.weights = vec![step; n];
}

/// Weighted mean of every state component.
pub fn estimate(set: &ParticleSet) -> ParticleState {
    let mut s = ParticleState::default();
    for (p, &w) in set.particles.iter().zip(&set.weights) {
        s.x += w * p.x;
        s.y += w * p.y;
        s.vx += w * p.vx;
        s.vy += w * p.vy;
        s.hx += w * p.hx;
        s.hy += w * p.hy;
        s.scale += w * p.scale;
    }
    s
}

/// Which position the fused tracker reports for a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateBranch {
    /// Strong response at the particle estimate: report it.
    AdoptEstimate,
    /// Some similarity but likely displaced: keep the correlation filter's estimate.
    RetainEstimate,
    /// Weak response, probably emerging from occlusion: keep the previous position.
    RetainPrevious,
    /// Depth says something is in front of the target: report nothing.
    Occluded,
}

pub fn decide(depth_occluded: bool, response: f64, cfg: &PfConfig) -> UpdateBranch {
    if depth_occluded {
        UpdateBranch::Occluded
    } else if response > cfg.accept_high {
        UpdateBranch::AdoptEstimate
    } else if response > cfg.accept_low {
        UpdateBranch::RetainEstimate
    } else {
        UpdateBranch::RetainPrevious
    }
}

#[derive(Debug, Clone)]
pub struct PfOutcome {
    pub bbox: Option<BoundingBox>,
    pub response: f64,
    pub status: TrackStatus,
    pub branch: UpdateBranch,
    pub estimate: ParticleState,
}

/// RGB-D correlation tracker with the particle filter proposing positions.
#[derive(Debug, Clone)]
pub struct PfRgbdTracker {
    pub model: TrackerModel,
    original: TrackerModel,
    pub particles: ParticleSet,
    pub pf: PfConfig,
    pub occlusion: OcclusionConfig,
    pub status: TrackStatus,
    reference: ColorHistogram,
    depth_reference: Option<DepthPatch>,
    prev_box: BoundingBox,
    rng: ChaCha8Rng,
    depth_warned: bool,
}

impl PfRgbdTracker {
    pub fn init(
        frame: &Frame,
        bbox: &BoundingBox,
        config: TrackerConfig,
        occlusion: OcclusionConfig,
        pf: PfConfig,
        seed: u64,
    ) -> Result<Self> {
        pf.validate()?;
        occlusion.validate()?;
        let model = TrackerModel::init(frame, bbox, config)?;
        let reference = color_histogram(&frame.rgb, bbox, pf.bins);
        if !reference.valid {
            return Err(Error::BoxOutsideFrame);
        }
        let depth_reference = match &frame.depth {
            Some(d) => Some(center_depth_patch(d.view(), bbox, &occlusion)?),
            None => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let particles = init_particles(bbox, &pf, &mut rng);
        Ok(Self {
            original: model.clone(),
            model,
            particles,
            pf,
            occlusion,
            status: TrackStatus::Tracking,
            reference,
            depth_reference,
            prev_box: *bbox,
            rng,
            depth_warned: false,
        })
    }

    fn depth_occluded(&self, frame: &Frame, at: &BoundingBox) -> Result<bool> {
        let (Some(depth), Some(reference)) = (&frame.depth, &self.depth_reference) else {
            return Ok(false);
        };
        match center_depth_patch(depth.view(), at, &self.occlusion) {
            Ok(curr) => Ok(occlusion_check(reference, &curr, &self.occlusion)?.occluded),
            Err(Error::BoxOutsideFrame) => Ok(false),
            Err(e) => Err(e),
        }
    }

    fn fixed_size_box(&self, s: &ParticleState) -> BoundingBox {
        let (cx, cy) = s.center();
        self.model.bbox_at(cx, cy)
    }

    pub fn track_frame(&mut self, frame: &Frame) -> Result<PfOutcome> {
        if frame.depth.is_none() && !self.depth_warned {
            eprintln!("warning: frame {} has no depth; occlusion branch disabled", frame.index);
            self.depth_warned = true;
        }
        let gray = to_grayscale(&frame.rgb);

        predict(&mut self.particles, &self.pf.noise, &mut self.rng);
        let frame_estimate = match self.status {
            TrackStatus::Tracking => {
                let (cx, cy) = self.prev_box.center();
                let det = self.model.detect_at(gray.view(), cx, cy)?;
                if self.depth_occluded(frame, &det.bbox)? {
                    return self.occluded(gray.view());
                }
                det.bbox
            }
            // Leave occlusion where the particles expect the target, or where it
            // was last seen. Particles are re-seeded around the latter.
            TrackStatus::Occluded => {
                let extrapolated = self.fixed_size_box(&estimate(&self.particles));
                if !self.depth_occluded(frame, &extrapolated)? {
                    extrapolated
                } else if !self.depth_occluded(frame, &self.prev_box)? {
                    self.particles = init_particles(&self.prev_box, &self.pf, &mut self.rng);
                    self.prev_box
                } else {
                    return self.occluded(gray.view());
                }
            }
        };

        reweigh(&mut self.particles, &frame.rgb, &self.reference, &self.pf)?;
        let est = estimate(&self.particles);
        resample(&mut self.particles, &mut self.rng);
        let proposal = self.fixed_size_box(&est);
        let response = self.response_at(gray.view(), &proposal)?;
        let branch = decide(false, response, &self.pf);
        let bbox = match branch {
            UpdateBranch::AdoptEstimate => proposal,
            UpdateBranch::RetainEstimate => frame_estimate,
            _ => self.prev_box,
        };
        if branch != UpdateBranch::RetainPrevious {
            let (cx, cy) = bbox.center();
            self.model.learn_at(gray.view(), cx, cy)?;
        }
        if branch == UpdateBranch::AdoptEstimate {
            if let Some(depth) = &frame.depth {
                if let Ok(patch) = center_depth_patch(depth.view(), &bbox, &self.occlusion) {
                    self.depth_reference = Some(patch);
                }
            }
            if self.pf.refresh_reference {
                let hist = color_histogram(&frame.rgb, &bbox, self.pf.bins);
                if hist.valid {
                    self.reference = hist;
                }
            }
        }
        self.prev_box = bbox;
        self.status = TrackStatus::Tracking;
        Ok(PfOutcome {
            bbox: Some(bbox),
            response,
            status: TrackStatus::Tracking,
            branch,
            estimate: est,
        })
    }

    fn occluded(&mut self, gray: ArrayView2<f64>) -> Result<PfOutcome> {
        let est = estimate(&self.particles);
        let response = self.response_at(gray, &self.fixed_size_box(&est))?;
        self.status = TrackStatus::Occluded;
        Ok(PfOutcome {
            bbox: None,
            response,
            status: TrackStatus::Occluded,
            branch: UpdateBranch::Occluded,
            estimate: est,
        })
    }

    /// Peak response of the first-frame model on the window around `bbox`.
    fn response_at(&self, gray: ArrayView2<f64>, bbox: &BoundingBox) -> Result<f64> {
        let (cx, cy) = bbox.center();
        Ok(self.original.detect_at(gray, cx, cy)?.peak_response)
    }
}
