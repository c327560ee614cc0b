//! Unsupervised RGB-D segmentation by joint color-spatial-directional
//! mixture clustering followed by statistical region merging.

pub mod error;
pub mod exp_family;
pub mod grid;
pub mod io;
pub mod jcsd;
pub mod linalg;
pub mod merge;
pub mod metrics;
pub mod pipeline;
pub mod rag;
pub mod rgbd_features;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use grid::Grid;
pub use scalar::Scalar;

/// Double-precision aliases of the generic types.
pub mod f64_types {
    pub type FeatureVector = crate::jcsd::FeatureVector<f64>;
    pub type CombinedParams = crate::jcsd::CombinedParams<f64>;
    pub type ComponentParams = crate::jcsd::ComponentParams<f64>;
    pub type MixtureState = crate::jcsd::MixtureState<f64>;
    pub type DirectionalParams = crate::exp_family::DirectionalParams<f64>;
    pub type GaussianExpParams = crate::exp_family::GaussianExpParams<f64>;
    pub type FisherExpParams = crate::exp_family::FisherExpParams<f64>;
    pub type WatsonExpParams = crate::exp_family::WatsonExpParams<f64>;
    pub type RgbdFrame = crate::rgbd_features::RgbdFrame<f64>;
    pub type FrameFeatures = crate::rgbd_features::FrameFeatures<f64>;
    pub type GradientMap = crate::rgbd_features::GradientMap<f64>;
    pub type RegionNode = crate::rag::RegionNode<f64>;
    pub type RegionEdge = crate::rag::RegionEdge<f64>;
    pub type RegionGraph = crate::rag::RegionGraph<f64>;
    pub type MergeRecord = crate::merge::MergeRecord<f64>;
    pub type MergeTrace = crate::merge::MergeTrace<f64>;
    pub type PlaneFit = crate::merge::PlaneFit<f64>;
    pub type Segmentation = crate::pipeline::Segmentation<f64>;
}

pub use f64_types::*;
