//! Per-pixel features of an aligned RGB-D frame: CIELAB color, back-projected
//! 3D position, surface normal, and the RGB-D gradient map used for region
//! boundary strength.

mod color;
mod geometry;
mod gradient;

pub use color::{lab_image, srgb_to_cielab, srgb_to_linear, D65_WHITE};
pub use geometry::{
    backproject, depth_valid, estimate_normals, Intrinsics, DEPTH_JUMP_FRACTION, NORMAL_WINDOW,
};
pub use gradient::{normalize_min_max, rgbd_gradient, sobel_magnitude, GradientMap};

use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jcsd::FeatureVector;
use crate::linalg::Vec3;
use crate::scalar::Scalar;

/// Aligned 8-bit sRGB color and metric depth (0 or NaN where missing).
#[derive(Clone, Debug, PartialEq)]
pub struct RgbdFrame<S> {
    pub color: Grid<[u8; 3]>,
    pub depth: Grid<S>,
    pub intrinsics: Intrinsics,
}

impl<S: Scalar> RgbdFrame<S> {
    pub fn new(color: Grid<[u8; 3]>, depth: Grid<S>, intrinsics: Intrinsics) -> Result<Self> {
        color.check_shape(&depth)?;
        intrinsics.validate()?;
        Ok(Self {
            color,
            depth,
            intrinsics,
        })
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    /// Nearest-neighbor downsampling of color and depth by an integer factor.
    pub fn downsample(&self, factor: usize) -> Self {
        Self {
            color: self.color.downsample(factor),
            depth: self.depth.downsample(factor),
            intrinsics: self.intrinsics.downsampled(factor),
        }
    }
}

/// Options of the feature extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// Side length of the plane-fit window for normals.
    pub normal_window: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            normal_window: NORMAL_WINDOW,
        }
    }
}

/// Features of the valid pixels of a frame together with the per-pixel maps
/// they were built from.
#[derive(Clone, Debug)]
pub struct FrameFeatures<S> {
    pub features: Vec<FeatureVector<S>>,
    /// Linear pixel index of each feature.
    pub pixel_index: Vec<usize>,
    /// Pixels with both a valid depth and a valid normal.
    pub valid: Grid<bool>,
    pub points: Grid<Option<Vec3<S>>>,
    pub normals: Grid<Option<Vec3<S>>>,
    pub gradient: GradientMap<S>,
}

impl<S> FrameFeatures<S> {
    pub fn width(&self) -> usize {
        self.valid.width()
    }

    pub fn height(&self) -> usize {
        self.valid.height()
    }

    pub fn invalid_fraction(&self) -> f64 {
        let n = self.valid.len().max(1);
        1.0 - self.features.len() as f64 / n as f64
    }
}

/// Builds one feature vector per pixel with valid depth and normal.
pub fn assemble_features<S: Scalar>(frame: &RgbdFrame<S>, opts: &FeatureOptions) -> Result<FrameFeatures<S>> {
    let lab = lab_image::<S>(&frame.color);
    let points = backproject(&frame.depth, &frame.intrinsics);
    let normals = estimate_normals(&points, opts.normal_window)?;
    let gradient = rgbd_gradient(&frame.color, &frame.depth)?;
    let mut features = Vec::new();
    let mut pixel_index = Vec::new();
    let mut valid = Grid::filled(frame.width(), frame.height(), false);
    for i in 0..points.len() {
        if let (Some(p), Some(n)) = (points.as_slice()[i], normals.as_slice()[i]) {
            features.push(FeatureVector::new(lab.as_slice()[i], p, n)?);
            pixel_index.push(i);
            valid.as_mut_slice()[i] = true;
        }
    }
    let out = FrameFeatures {
        features,
        pixel_index,
        valid,
        points,
        normals,
        gradient,
    };
    if out.invalid_fraction() > 0.5 {
        warn!("{:.1}% of pixels have no usable depth or normal", 100.0 * out.invalid_fraction());
    }
    if out.features.is_empty() {
        return Err(Error::Input("frame has no pixel with valid depth".into()));
    }
    Ok(out)
}

/// Gives every invalid pixel the label of the nearest valid pixel along the
/// 4-connected lattice (breadth-first, ties to the first reached).
pub fn fill_invalid_labels(labels: &mut Grid<u32>, valid: &Grid<bool>) -> Result<()> {
    labels.check_shape(valid)?;
    let mut seen: Vec<bool> = valid.as_slice().to_vec();
    let mut queue: VecDeque<usize> = (0..seen.len()).filter(|&i| seen[i]).collect();
    while let Some(i) = queue.pop_front() {
        let l = labels.as_slice()[i];
        let nbrs: Vec<usize> = labels.neighbors4(i).collect();
        for j in nbrs {
            if !seen[j] {
                seen[j] = true;
                labels.as_mut_slice()[j] = l;
                queue.push_back(j);
            }
        }
    }
    Ok(())
}
