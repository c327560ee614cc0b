//! `jcsdrm`: segment RGB-D frames, score label maps, sweep thresholds,
//! render synthetic scenes and time the pipeline.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde_json::json;

use jcsdrm::exp_family::DirectionalFamily;
use jcsdrm::io::{
    load_frame, read_intrinsics, read_json, save_frame, write_intrinsics, write_label_png, Dataset,
};
use jcsdrm::metrics::{write_reports_csv, BatchSummary};
use jcsdrm::pipeline::{bench, evaluate_label_dirs, segment, sweep, write_bench_csv, PipelineConfig, SweepParam};
use jcsdrm::rgbd_features::RgbdFrame;
use jcsdrm::synth::{box_scene, frontal_plane, render, room_scene, SceneSpec};

#[derive(Parser, Debug)]
#[command(name = "jcsdrm", version, about = "Unsupervised RGB-D segmentation by joint color-spatial-directional clustering and region merging")]
struct Cli {
    /// Pipeline configuration JSON; missing fields take their defaults.
    #[arg(long, global = true, env = "JCSDRM_CONFIG")]
    config: Option<PathBuf>,
    /// Log only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment one frame or every frame of a dataset directory.
    Segment(SegmentArgs),
    /// Score label maps against ground truth.
    Evaluate(EvaluateArgs),
    /// Evaluate a dataset once per value of one parameter.
    Sweep(SweepArgs),
    /// Render a synthetic scene as a one-frame dataset.
    Synth(SynthArgs),
    /// Time the pipeline stages at several downsampling factors.
    Bench(BenchArgs),
}

/// Overrides of the loaded configuration.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Number of mixture components.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// EM stops when the mean negative log-likelihood changes less than this.
    #[arg(long)]
    nllh_tol: Option<f64>,
    /// Distribution of the surface normals.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Seed of the clustering initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Fit on every n-th pixel only.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    kmeans_iters: Option<usize>,
    /// Minimum concentration of a merge candidate.
    #[arg(long)]
    kappa_p: Option<f64>,
    /// Maximum boundary strength of a mergeable pair.
    #[arg(long)]
    th_b: Option<f64>,
    /// Maximum directional distance of a mergeable pair.
    #[arg(long)]
    th_d: Option<f64>,
    /// Minimum plane inlier ratio of a merged pair.
    #[arg(long)]
    th_r: Option<f64>,
    #[arg(long)]
    ransac_iters: Option<usize>,
    /// RANSAC inlier distance in meters.
    #[arg(long)]
    ransac_inlier_dist: Option<f64>,
    #[arg(long)]
    ransac_seed: Option<u64>,
    #[arg(long)]
    ransac_max_points: Option<usize>,
    /// Odd side length of the normal-estimation window.
    #[arg(long)]
    normal_window: Option<usize>,
    /// Regions smaller than this are absorbed by a neighbor.
    #[arg(long)]
    min_region_px: Option<usize>,
    /// Disable the 3×3 label mode filter.
    #[arg(long)]
    no_median_filter: bool,
    /// Downsampling factor: 1, 2, 4 or 8.
    #[arg(long)]
    scale: Option<usize>,
    /// Return the clustering regions without merging.
    #[arg(long)]
    skip_merge: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Fisher,
    Watson,
}

impl ConfigArgs {
    fn resolve(&self, file: Option<&Path>) -> anyhow::Result<PipelineConfig> {
        let mut cfg: PipelineConfig = match file {
            Some(p) => read_json(p).with_context(|| format!("loading configuration {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        let c = &mut cfg.cluster;
        set(&mut c.k, self.k);
        set(&mut c.max_iters, self.max_iters);
        set(&mut c.nllh_tol, self.nllh_tol);
        set(&mut c.seed, self.seed);
        set(&mut c.subsample, self.subsample);
        set(&mut c.kmeans_iters, self.kmeans_iters);
        if let Some(f) = self.family {
            c.family = match f {
                FamilyArg::Fisher => DirectionalFamily::Fisher,
                FamilyArg::Watson => DirectionalFamily::Watson,
            };
        }
        let m = &mut cfg.merge;
        set(&mut m.kappa_p, self.kappa_p);
        set(&mut m.th_b, self.th_b);
        set(&mut m.th_d, self.th_d);
        set(&mut m.th_r, self.th_r);
        set(&mut m.ransac.iters, self.ransac_iters);
        set(&mut m.ransac.inlier_dist_m, self.ransac_inlier_dist);
        set(&mut m.ransac.seed, self.ransac_seed);
        set(&mut m.ransac.max_points, self.ransac_max_points);
        set(&mut cfg.features.normal_window, self.normal_window);
        set(&mut cfg.min_region_px, self.min_region_px);
        set(&mut cfg.scale, self.scale);
        cfg.median_filter &= !self.no_median_filter;
        cfg.skip_merge |= self.skip_merge;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// One frame given by its files.
#[derive(Args, Debug)]
struct FrameArgs {
    /// 8-bit color PNG.
    #[arg(long, requires_all = ["depth", "intrinsics"])]
    color: Option<PathBuf>,
    /// 16-bit depth PNG.
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Intrinsics JSON: {"fx", "fy", "cx", "cy", "depth_scale"}.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Override the depth units per meter of the intrinsics file.
    #[arg(long)]
    depth_scale: Option<f64>,
}

impl FrameArgs {
    fn load(&self) -> anyhow::Result<Option<(String, RgbdFrame<f64>)>> {
        let (Some(color), Some(depth), Some(intr)) = (&self.color, &self.depth, &self.intrinsics) else {
            return Ok(None);
        };
        let mut k = read_intrinsics(intr)?;
        set(&mut k.depth_scale, self.depth_scale);
        k.validate()?;
        let frame = load_frame(color, depth, &k)?;
        let stem = color.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
        Ok(Some((stem.strip_suffix("_color").unwrap_or(stem).to_string(), frame)))
    }
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[command(flatten)]
    frame: FrameArgs,
    /// Dataset directory to segment instead of a single frame.
    #[arg(long, conflicts_with = "color")]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Output name of a single frame; defaults to the color file name.
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory of `{name}_{suffix}.png` label maps.
    #[arg(long)]
    test: PathBuf,
    /// Directory of `{name}_gt.png` label maps.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "final")]
    suffix: String,
    /// Boundary match tolerance in pixels.
    #[arg(long)]
    tol_px: Option<f64>,
    /// Per-image scores CSV; the mean and median go to stdout as JSON.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// One of k, kappa_p, th_b, th_d, th_r.
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Output CSV; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SceneArg {
    /// Floor and two walls.
    Room,
    /// The room with a colored cube on the floor.
    Box,
    /// A single plane facing the camera.
    Plane,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "box")]
    scene: SceneArg,
    /// Scene description JSON; replaces --scene and its size and noise flags.
    #[arg(long, conflicts_with = "scene")]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    /// Depth noise standard deviation in meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synth")]
    name: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Frame to time; a 640×480 synthetic box scene when absent.
    #[command(flatten)]
    frame: FrameArgs,
    /// Comma-separated downsampling factors.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    scales: Vec<usize>,
    /// Output CSV; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn segment_one(name: &str, frame: &RgbdFrame<f64>, cfg: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let seg = segment(frame, cfg).with_context(|| format!("segmenting {name}"))?;
    write_label_png(&out.join(format!("{name}_jcsd.png")), &seg.jcsd)?;
    write_label_png(&out.join(format!("{name}_final.png")), &seg.final_labels)?;
    let sidecar = json!({ "config": cfg, "summary": seg.summary, "merges": seg.trace.records });
    let path = out.join(format!("{name}_final.json"));
    fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    info!("{name}: {} -> {} regions", seg.summary.jcsd_regions, seg.summary.final_regions);
    Ok(())
}

fn run_segment(a: &SegmentArgs, config: Option<&Path>) -> anyhow::Result<()> {
    let cfg = a.config.resolve(config)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if let Some(dir) = &a.dataset {
        let ds = Dataset::open(dir)?;
        return ds.entries.par_iter().try_for_each(|e| {
            let frame = e.load(&ds.intrinsics).with_context(|| format!("loading {}", e.name))?;
            segment_one(&e.name, &frame, &cfg, &a.out)
        });
    }
    let Some((stem, frame)) = a.frame.load()? else {
        bail!(jcsdrm::Error::Input("give --color, --depth and --intrinsics, or --dataset".into()));
    };
    segment_one(a.name.as_deref().unwrap_or(&stem), &frame, &cfg, &a.out)
}

fn run_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let (rows, summary) = evaluate_label_dirs(&a.test, &a.gt, &a.suffix, a.tol_px)?;
    if let Some(p) = &a.csv {
        write_reports_csv(output(Some(p))?, &rows)?;
    }
    print_summary(&summary)
}

fn print_summary(summary: &BatchSummary) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(summary)?)?;
    Ok(())
}

fn run_sweep(a: &SweepArgs, config: Option<&Path>) -> anyhow::Result<()> {
    let cfg = a.config.resolve(config)?;
    let ds = Dataset::open(&a.dataset)?;
    let table = sweep(a.param, &a.values, &ds, &cfg)?;
    table.write_csv(output(a.out.as_deref())?)?;
    Ok(())
}

fn run_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SceneSpec::from_json(&text).with_context(|| format!("scene {}", p.display()))?
        }
        None => {
            let mut spec = match a.scene {
                SceneArg::Room => room_scene(a.width, a.height, a.noise, a.seed),
                SceneArg::Box => box_scene(a.width, a.height, a.noise, a.seed),
                SceneArg::Plane => frontal_plane(a.width, a.height, 2.0),
            };
            spec.depth_noise_m = a.noise;
            spec.seed = a.seed;
            spec
        }
    };
    let scene = render(&spec)?;
    write_intrinsics(&a.out, &scene.frame.intrinsics)?;
    save_frame(&a.out, &a.name, &scene.frame, Some(&scene.ground_truth))?;
    info!("wrote {} to {}", a.name, a.out.display());
    Ok(())
}

fn run_bench(a: &BenchArgs, config: Option<&Path>) -> anyhow::Result<()> {
    let cfg = a.config.resolve(config)?;
    let frame = match a.frame.load()? {
        Some((_, f)) => f,
        None => render(&box_scene(640, 480, 0.002, cfg.cluster.seed))?.frame,
    };
    let rows = bench(&frame, &a.scales, &cfg)?;
    write_bench_csv(output(a.out.as_deref())?, &rows)?;
    Ok(())
}

/// 0 on success, 2 for numerical failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .find_map(|e| e.downcast_ref::<jcsdrm::Error>())
        .is_some_and(jcsdrm::Error::is_numerical);
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Segment(a) => run_segment(a, config),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Sweep(a) => run_sweep(a, config),
        Command::Synth(a) => run_synth(a),
        Command::Bench(a) => run_bench(a, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
