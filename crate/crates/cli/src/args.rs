use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use depthtrack_core::depth::{EdgeWidth, OcclusionConfig, OcclusionRule};
use depthtrack_core::particle::{PfConfig, ProcessNoise};
use depthtrack_core::{FeatureConfig, FeatureKind, KernelKind, KernelParams, SessionConfig, TrackerConfig};

#[derive(Debug, Parser)]
#[command(name = "depthtrack", version, about = "Correlation-filter tracking with depth-aware occlusion handling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Track a target through a sequence and write tracks.csv
    Track(TrackArgs),
    /// Score track files against ground truth
    Eval(EvalArgs),
    /// Render a synthetic RGB-D sequence from a scenario file
    Synth(SynthArgs),
    /// Time the tracking step on a synthetic window
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Kcf,
    Rgbd,
    RgbdPf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long, value_enum, default_value = "kcf")]
    pub variant: VariantArg,
    /// Sequence directory (rgb/, depth/, gt.csv) or key=value spec file
    #[arg(long)]
    pub seq: PathBuf,
    /// Initial box as x,y,w,h
    #[arg(long, value_parser = parse_box, conflicts_with = "init_from_gt", required_unless_present = "init_from_gt")]
    pub init: Option<[f64; 4]>,
    /// Take the initial box from the sequence's ground truth
    #[arg(long)]
    pub init_from_gt: bool,
    #[arg(long, default_value = "tracks.csv")]
    pub out: PathBuf,
    /// Write annotated frames to this directory
    #[arg(long)]
    pub overlays: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tracker: TrackerFlags,
    #[command(flatten)]
    pub occlusion: OcclusionFlags,
    #[command(flatten)]
    pub pf: PfFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    Hog,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Linear,
    Polynomial,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Correlation filter")]
pub struct TrackerFlags {
    #[arg(long, default_value_t = 2.5)]
    pub padding: f64,
    #[arg(long, value_enum, default_value = "hog")]
    pub features: FeatureArg,
    #[arg(long, default_value_t = 4)]
    pub cell_size: usize,
    #[arg(long, default_value_t = 9)]
    pub orientations: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 0.5)]
    pub kernel_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub poly_offset: f64,
    #[arg(long, default_value_t = 2)]
    pub poly_degree: u32,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    /// Model interpolation factor per frame
    #[arg(long, default_value_t = 0.02)]
    pub interp: f64,
    /// Label bandwidth relative to sqrt(w*h) of the target, in cells
    #[arg(long, default_value_t = 0.1)]
    pub label_sigma: f64,
    /// Refine the response peak with a parabolic fit
    #[arg(long)]
    pub subpixel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    PeakFraction,
    MeanAbs,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Depth occlusion")]
pub struct OcclusionFlags {
    #[arg(long, default_value_t = 0.25)]
    pub center_fraction: f64,
    /// Edge region trimmed from depth differences, as a fraction of patch width
    #[arg(long, default_value_t = 0.2, conflicts_with = "edge_columns")]
    pub edge_fraction: f64,
    /// Edge region as a fixed number of columns
    #[arg(long)]
    pub edge_columns: Option<usize>,
    /// Depth difference (mm) that counts as a peak
    #[arg(long, default_value_t = 300.0)]
    pub depth_threshold: f64,
    #[arg(long, default_value_t = 0.3)]
    pub interior_ratio: f64,
    #[arg(long, value_enum, default_value = "peak-fraction")]
    pub occlusion_rule: RuleArg,
    #[arg(long, default_value_t = 0.5)]
    pub response_threshold: f64,
    /// Re-detection span per side, in target widths
    #[arg(long, default_value_t = 2.0)]
    pub search_span: f64,
    /// Re-detection stride in pixels (default: cell size)
    #[arg(long)]
    pub search_stride: Option<usize>,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Particle filter")]
pub struct PfFlags {
    #[arg(long, default_value_t = 200)]
    pub particles: usize,
    #[arg(long, default_value_t = 4.0)]
    pub pos_var: f64,
    #[arg(long, default_value_t = 1.0)]
    pub vel_var: f64,
    #[arg(long, default_value_t = 2.0)]
    pub size_var: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub scale_var: f64,
    #[arg(long, default_value_t = 0.2)]
    pub likelihood_sigma: f64,
    #[arg(long, default_value_t = 16)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.6)]
    pub accept_high: f64,
    #[arg(long, default_value_t = 0.3)]
    pub accept_low: f64,
    /// Refresh the reference histogram when a proposal is adopted
    #[arg(long)]
    pub refresh_reference: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Track file; repeat together with --gt for several sequences
    #[arg(long, required = true)]
    pub tracks: Vec<PathBuf>,
    /// Ground-truth annotation file, one per --tracks
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Correctness criterion: iou:<threshold> or center:<pixels>
    #[arg(long, default_value = "iou:0.5", value_parser = parse_criterion)]
    pub criterion: depthtrack_core::eval::Criterion,
    /// Per-frame error series CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Success rate per overlap threshold CSV
    #[arg(long)]
    pub success_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Window side in feature cells
    #[arg(long, default_value_t = 64)]
    pub window_cells: usize,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
}

fn parse_box(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?}")))
        .collect::<Result<_, _>>()?;
    <[f64; 4]>::try_from(v).map_err(|_| "expected x,y,w,h".to_string())
}

fn parse_criterion(s: &str) -> Result<depthtrack_core::eval::Criterion, String> {
    use depthtrack_core::eval::Criterion;
    let (kind, value) = s.split_once(':').ok_or("expected iou:<t> or center:<px>")?;
    let value: f64 = value.parse().map_err(|_| format!("bad threshold {value:?}"))?;
    match kind {
        "iou" => Ok(Criterion::Iou(value)),
        "center" => Ok(Criterion::CenterDistance(value)),
        other => Err(format!("unknown criterion {other:?}")),
    }
}

impl TrackArgs {
    pub fn session_config(&self) -> SessionConfig {
        let t = &self.tracker;
        let o = &self.occlusion;
        let p = &self.pf;
        SessionConfig {
            tracker: TrackerConfig {
                padding: t.padding,
                features: FeatureConfig {
                    kind: match t.features {
                        FeatureArg::Hog => FeatureKind::Hog {
                            orientations: t.orientations,
                        },
                        FeatureArg::Raw => FeatureKind::Raw,
                    },
                    cell_size: t.cell_size,
                },
                kernel: KernelParams {
                    kind: match t.kernel {
                        KernelArg::Gaussian => KernelKind::Gaussian,
                        KernelArg::Linear => KernelKind::Linear,
                        KernelArg::Polynomial => KernelKind::Polynomial,
                    },
                    sigma: t.kernel_sigma,
                    poly_offset: t.poly_offset,
                    poly_degree: t.poly_degree,
                },
                lambda: t.lambda,
                interp_factor: t.interp,
                label_sigma_factor: t.label_sigma,
                subpixel: t.subpixel,
            },
            occlusion: OcclusionConfig {
                center_fraction: o.center_fraction,
                edge: match o.edge_columns {
                    Some(c) => EdgeWidth::Columns(c),
                    None => EdgeWidth::Fraction(o.edge_fraction),
                },
                peak_threshold_mm: o.depth_threshold,
                interior_peak_ratio: o.interior_ratio,
                response_threshold: o.response_threshold,
                search_span: o.search_span,
                search_stride: o.search_stride,
                rule: match o.occlusion_rule {
                    RuleArg::PeakFraction => OcclusionRule::PeakFraction,
                    RuleArg::MeanAbs => OcclusionRule::MeanAbs,
                },
            },
            pf: PfConfig {
                n_particles: p.particles,
                noise: ProcessNoise {
                    position: p.pos_var,
                    velocity: p.vel_var,
                    size: p.size_var,
                    scale: p.scale_var,
                },
                likelihood_sigma: p.likelihood_sigma,
                bins: p.bins,
                accept_high: p.accept_high,
                accept_low: p.accept_low,
                refresh_reference: p.refresh_reference,
            },
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_defaults_match_library_defaults() {
        let cli = Cli::try_parse_from(["depthtrack", "track", "--seq", "s", "--init", "1,2,3,4"]).unwrap();
        let Command::Track(args) = cli.command else { panic!() };
        assert_eq!(args.init, Some([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(args.session_config(), SessionConfig::default());
    }

    #[test]
    fn init_is_required_once() {
        assert!(Cli::try_parse_from(["depthtrack", "track", "--seq", "s"]).is_err());
        assert!(Cli::try_parse_from(["depthtrack", "track", "--seq", "s", "--init", "1,2,3,4", "--init-from-gt"]).is_err());
        assert!(Cli::try_parse_from(["depthtrack", "track", "--seq", "s", "--init", "1,2,3"]).is_err());
    }

    #[test]
    fn criteria() {
        use depthtrack_core::eval::Criterion;
        assert_eq!(parse_criterion("center:20"), Ok(Criterion::CenterDistance(20.0)));
        assert_eq!(parse_criterion("iou:0.3"), Ok(Criterion::Iou(0.3)));
        assert!(parse_criterion("dice:0.3").is_err());
    }
}
