//! Connection-aware assembly toolkit: assembly graphs, closed-form pose
//! alignment, connection extraction scoring, a vision-language model bridge,
//! and a compliant insertion simulator with search strategies.

pub mod extraction;
pub mod fixtures;
pub mod geometry;
pub mod graph;
pub mod pose;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod strategy;
pub mod vlm;

pub use scalar::Real;

pub type Transform = geometry::RigidTransform<f64>;
pub type Transform32 = geometry::RigidTransform<f32>;
pub type Feature = geometry::AttachmentFeature<f64>;
pub type Feature32 = geometry::AttachmentFeature<f32>;
pub type Pairs = pose::MatchedPairs<f64>;
pub type Pairs32 = pose::MatchedPairs<f32>;
