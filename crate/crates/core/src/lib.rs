//! Interaction-primitive annotation pipeline: keypoint extraction from
//! segmented multi-view renders, 3D lifting, semantic alignment through a
//! vision-language model, and benchmark generation.

pub mod aligner;
pub mod benchgen;
pub mod filtering;
pub mod keypoints;
pub mod lifting;
pub mod mask;
pub mod pipeline;
pub mod refine;
pub mod segmentation;
pub mod semantic;
pub mod synth;
pub mod view;
