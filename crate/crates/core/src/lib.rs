//! Seeded image augmentation with transform-category-aware policies,
//! subject-level data splitting, slice-weighted subject aggregation and
//! Grad-CAM++ saliency over exact gradients.
//!
//! Numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common instantiations. Images are always `u8`.

pub mod aggregator;
pub mod corpus;
pub mod earlystop;
pub mod error;
pub mod gradcampp;
pub mod gridsearch;
pub mod policies;
pub mod refnet;
pub mod rng;
pub mod scalar;
pub mod splitter;
pub mod stats;
pub mod tensor;
pub mod transforms;

pub use error::{Error, Result};
pub use policies::{augment, augment_recorded, sample_policy, PolicySpec, Variant};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::{FormatError, Image8, Tensor, VolumeGrid};
pub use transforms::{apply_transform, Category, TransformInstance, TransformKind};

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
pub type Heatmap32 = gradcampp::Heatmap<f32>;
pub type Heatmap64 = gradcampp::Heatmap<f64>;
pub type FeatureMapBundle32 = gradcampp::FeatureMapBundle<f32>;
pub type FeatureMapBundle64 = gradcampp::FeatureMapBundle<f64>;
pub type SlicePrediction64 = aggregator::SlicePrediction<f64>;
pub type SliceWeights64 = aggregator::SliceWeights<f64>;
pub type SubjectDecision64 = aggregator::SubjectDecision<f64>;
pub type RefNetParams32 = refnet::RefNetParams<f32>;
pub type RefNetParams64 = refnet::RefNetParams<f64>;
