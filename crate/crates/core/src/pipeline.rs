//! End-to-end segmentation: features, mixture clustering, region adjacency
//! graph and region merging, plus dataset evaluation, parameter sweeps and
//! timing benchmarks.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_family::DirectionalFamily;
use crate::io::{match_label_pairs, read_label_png, Dataset};
use crate::jcsd::{hard_assign, run_em, ClusterConfig};
use crate::linalg::Vec3;
use crate::merge::{run_region_merging, MergeConfig, MergeTrace};
use crate::metrics::{evaluate, BatchSummary, MetricReport, METRIC_NAMES};
use crate::rag::{build_rag, relabel_by_size, LabelMap, RagConfig, MIN_REGION_PX};
use crate::rgbd_features::{assemble_features, fill_invalid_labels, FeatureOptions, FrameFeatures, RgbdFrame};
use crate::scalar::Scalar;

/// Every setting of one segmentation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cluster: ClusterConfig,
    pub merge: MergeConfig,
    pub features: FeatureOptions,
    pub min_region_px: usize,
    /// Apply the 3×3 label mode filter before region extraction.
    pub median_filter: bool,
    /// Nearest-neighbor downsampling factor applied to the input (1, 2, 4, 8).
    pub scale: usize,
    /// Skip region merging and return the clustering regions.
    pub skip_merge: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterConfig::default(),
            merge: MergeConfig::default(),
            features: FeatureOptions::default(),
            min_region_px: MIN_REGION_PX,
            median_filter: true,
            scale: 1,
            skip_merge: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        self.merge.validate()?;
        if !matches!(self.scale, 1 | 2 | 4 | 8) {
            return Err(Error::InvalidParameter(format!("scale must be 1, 2, 4 or 8, got {}", self.scale)));
        }
        if self.min_region_px == 0 {
            return Err(Error::InvalidParameter("min_region_px must be positive".into()));
        }
        Ok(())
    }

    pub fn rag(&self) -> RagConfig {
        RagConfig {
            family: self.cluster.family,
            min_region_px: self.min_region_px,
            filter: self.median_filter,
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub features: f64,
    pub clustering: f64,
    pub rag: f64,
    pub merging: f64,
    pub total: f64,
}

/// Statistics of one output region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub label: u32,
    pub pixel_count: usize,
    pub pi: f64,
    pub mu: Vec3<f64>,
    pub kappa: f64,
}

/// Sidecar description of a segmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub width: usize,
    pub height: usize,
    pub family: DirectionalFamily,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub final_nllh: f64,
    pub jcsd_regions: usize,
    pub final_regions: usize,
    pub merges: usize,
    pub timings: Timings,
    pub regions: Vec<RegionSummary>,
}

/// Output of [`segment`].
#[derive(Clone, Debug)]
pub struct Segmentation<S> {
    /// Hard cluster label of every pixel (invalid pixels filled).
    pub clusters: LabelMap,
    /// Connected regions of the clustering, before merging.
    pub jcsd: LabelMap,
    /// Regions after merging.
    pub final_labels: LabelMap,
    pub trace: MergeTrace<S>,
    pub summary: SegmentationSummary,
}

fn count_labels(m: &LabelMap) -> usize {
    m.as_slice().iter().map(|&l| l as usize + 1).max().unwrap_or(0)
}

/// Runs the full pipeline on one frame at `cfg.scale`.
pub fn segment<S: Scalar>(frame: &RgbdFrame<S>, cfg: &PipelineConfig) -> Result<Segmentation<S>> {
    cfg.validate()?;
    let t_start = Instant::now();
    let scaled;
    let frame = if cfg.scale > 1 {
        scaled = frame.downsample(cfg.scale);
        &scaled
    } else {
        frame
    };

    let t = Instant::now();
    let feats = assemble_features(frame, &cfg.features)?;
    let t_features = t.elapsed().as_secs_f64();
    let mut seg = segment_features(&feats, cfg)?;
    seg.summary.timings.features = t_features;
    seg.summary.timings.total = t_start.elapsed().as_secs_f64();
    info!(
        "segmented {}x{}: {} clustering regions, {} after merging, {:.2}s",
        seg.summary.width, seg.summary.height, seg.summary.jcsd_regions, seg.summary.final_regions, seg.summary.timings.total
    );
    Ok(seg)
}

/// Clusters, builds the region graph and merges, starting from features
/// already assembled from a frame. `cfg.scale` is not applied and the
/// feature time is reported as zero.
pub fn segment_features<S: Scalar>(feats: &FrameFeatures<S>, cfg: &PipelineConfig) -> Result<Segmentation<S>> {
    cfg.validate()?;
    let t_start = Instant::now();
    let (width, height) = (feats.width(), feats.height());

    let t = Instant::now();
    let mixture = run_em(&feats.features, &cfg.cluster)?;
    let assign = hard_assign(&feats.features, &mixture.components)?;
    let mut clusters = LabelMap::filled(width, height, 0);
    for (&p, &l) in feats.pixel_index.iter().zip(&assign) {
        clusters.as_mut_slice()[p] = l as u32;
    }
    fill_invalid_labels(&mut clusters, &feats.valid)?;
    let t_clustering = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut graph = build_rag(&clusters, &feats.normals, &feats.gradient, &cfg.rag())?;
    let jcsd = graph.labels.clone();
    let t_rag = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (final_labels, trace) = if cfg.skip_merge {
        (relabel_by_size(&graph.labels), MergeTrace::default())
    } else {
        run_region_merging(&mut graph, &feats.points, &feats.gradient, &cfg.merge)?
    };
    let t_merging = t.elapsed().as_secs_f64();

    let mut regions: Vec<RegionSummary> = graph
        .nodes
        .values()
        .map(|n| RegionSummary {
            label: final_labels.as_slice()[n.pixels[0]],
            pixel_count: n.pixel_count,
            pi: n.pi.as_f64(),
            mu: n.mu.map(|v| v.as_f64()),
            kappa: n.kappa.as_f64(),
        })
        .collect();
    regions.sort_by_key(|r| r.label);
    let timings = Timings {
        features: 0.0,
        clustering: t_clustering,
        rag: t_rag,
        merging: t_merging,
        total: t_start.elapsed().as_secs_f64(),
    };
    let summary = SegmentationSummary {
        width,
        height,
        family: cfg.cluster.family,
        em_iterations: mixture.iterations,
        em_converged: mixture.converged,
        final_nllh: mixture.nllh_trace.last().map_or(f64::NAN, |v| v.as_f64()),
        jcsd_regions: count_labels(&jcsd),
        final_regions: count_labels(&final_labels),
        merges: trace.merge_count(),
        timings,
        regions,
    };
    Ok(Segmentation {
        clusters,
        jcsd,
        final_labels,
        trace,
        summary,
    })
}

/// Scores of one dataset image for the clustering and the merged maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub name: String,
    pub jcsd: MetricReport,
    pub final_report: MetricReport,
}

/// Segments and scores every dataset image with ground truth, in parallel
/// across images. The ground truth is downsampled with the input.
pub fn evaluate_dataset(dataset: &Dataset, cfg: &PipelineConfig) -> Result<Vec<ImageScores>> {
    let with_gt: Vec<_> = dataset.entries.iter().filter(|e| e.gt.is_some()).collect();
    if with_gt.is_empty() {
        return Err(Error::Input("dataset has no ground-truth label maps".into()));
    }
    with_gt
        .par_iter()
        .map(|e| {
            let frame = e.load(&dataset.intrinsics)?;
            let gt = read_label_png(e.gt.as_ref().expect("filtered"))?.downsample(cfg.scale);
            let seg = segment(&frame, cfg)?;
            Ok(ImageScores {
                name: e.name.clone(),
                jcsd: evaluate(&seg.jcsd, &gt, None)?,
                final_report: evaluate(&seg.final_labels, &gt, None)?,
            })
        })
        .collect()
}

/// Scores every `{name}_{suffix}.png` in `test_dir` against
/// `{name}_gt.png` in `gt_dir`, in parallel across pairs.
pub fn evaluate_label_dirs(
    test_dir: &Path,
    gt_dir: &Path,
    suffix: &str,
    tol_px: Option<f64>,
) -> Result<(Vec<(String, MetricReport)>, BatchSummary)> {
    let pairs = match_label_pairs(test_dir, gt_dir, suffix)?;
    let rows = pairs
        .par_iter()
        .map(|(name, test, gt)| {
            let report = evaluate(&read_label_png(test)?, &read_label_png(gt)?, tol_px)?;
            Ok((name.clone(), report))
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricReport> = rows.iter().map(|r| r.1).collect();
    let summary = BatchSummary::new(&reports)?;
    Ok((rows, summary))
}

/// Parameters a sensitivity sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    K,
    KappaP,
    ThB,
    ThD,
    ThR,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "k" => Self::K,
            "kappa_p" => Self::KappaP,
            "th_b" => Self::ThB,
            "th_d" => Self::ThD,
            "th_r" => Self::ThR,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown sweep parameter {s:?}; expected k, kappa_p, th_b, th_d or th_r"
                )))
            }
        })
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::K => "k",
            Self::KappaP => "kappa_p",
            Self::ThB => "th_b",
            Self::ThD => "th_d",
            Self::ThR => "th_r",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &PipelineConfig, value: f64) -> Result<PipelineConfig> {
        let mut cfg = base.clone();
        match self {
            Self::K => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidParameter(format!("k must be a positive integer, got {value}")));
                }
                cfg.cluster.k = value as usize;
            }
            Self::KappaP => cfg.merge.kappa_p = value,
            Self::ThB => cfg.merge.th_b = value,
            Self::ThD => cfg.merge.th_d = value,
            Self::ThR => cfg.merge.th_r = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mean merged-map scores for each swept value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub means: Vec<MetricReport>,
}

impl SweepTable {
    /// One row per metric, one column per value.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::Input(format!("writing CSV: {e}"));
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = std::iter::once(self.param.name().to_string())
            .chain(self.values.iter().map(|v| v.to_string()))
            .collect();
        w.write_record(&header).map_err(err)?;
        for (k, name) in METRIC_NAMES.iter().enumerate() {
            let row: Vec<String> = std::iter::once(name.to_string())
                .chain(self.means.iter().map(|m| m.as_array()[k].to_string()))
                .collect();
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| err(e.into()))
    }
}

/// Runs a full dataset evaluation per value; all other settings stay at `base`.
pub fn sweep(param: SweepParam, values: &[f64], dataset: &Dataset, base: &PipelineConfig) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    let mut means = Vec::with_capacity(values.len());
    for &v in values {
        let cfg = param.apply(base, v)?;
        let scores = evaluate_dataset(dataset, &cfg)?;
        let reports: Vec<MetricReport> = scores.iter().map(|s| s.final_report).collect();
        means.push(BatchSummary::new(&reports)?.mean);
        info!("{} = {v}: {:?}", param.name(), means.last().expect("pushed"));
    }
    Ok(SweepTable {
        param,
        values: values.to_vec(),
        means,
    })
}

/// Stage timings of one frame at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scale: usize,
    pub width: usize,
    pub height: usize,
    pub pixels: usize,
    pub timings: Timings,
}

/// Segments `frame` once per downsampling factor.
pub fn bench<S: Scalar>(frame: &RgbdFrame<S>, scales: &[usize], base: &PipelineConfig) -> Result<Vec<BenchRow>> {
    scales
        .iter()
        .map(|&s| {
            let cfg = PipelineConfig { scale: s, ..base.clone() };
            let seg = segment(frame, &cfg)?;
            Ok(BenchRow {
                scale: s,
                width: seg.summary.width,
                height: seg.summary.height,
                pixels: seg.summary.width * seg.summary.height,
                timings: seg.summary.timings,
            })
        })
        .collect()
}

/// Bench rows as CSV.
pub fn write_bench_csv<W: std::io::Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    let err = |e: csv::Error| Error::Input(format!("writing CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scale", "width", "height", "pixels", "features_s", "clustering_s", "rag_s", "merging_s", "total_s"])
        .map_err(err)?;
    for r in rows {
        let t = &r.timings;
        w.serialize((r.scale, r.width, r.height, r.pixels, t.features, t.clustering, t.rag, t.merging, t.total))
            .map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}
