//! Tooling around hierarchical multi-label persuasion-technique detection,
//! from taxonomy-aware scoring to paraphrase augmentation planning.

pub mod augmentation;
pub mod cli;
pub mod dataset;
pub mod ensembling;
pub mod error;
pub mod pipeline;
pub mod scoring;
pub mod services;
pub mod taxonomy;
pub mod thresholding;

pub use error::{Error, Result};
pub use taxonomy::{LabelHierarchy, LabelSet, TechniqueId};
