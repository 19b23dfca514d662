//! Toolkit for crafting and evaluating single-class universal perturbations
//! against small interpretable image classifiers.
//!
//! The crate trains compact convolutional models, produces attribution maps
//! (activation-weighted, gradient, and deletion-mask interpreters), optimizes
//! one perturbation field that flips a whole source category into a chosen
//! target while leaving other categories and their interpretations intact,
//! measures the result, and provides preprocessing and training defenses plus
//! a teacher-student transfer pipeline for the black-box setting.

pub mod data;
pub mod error;
pub mod graph;
pub mod image;
pub mod perturb;
pub mod rng;
pub mod synth;

pub use data::{batch_sample, CategoryLabel, LabeledDataset, Split};
pub use error::{Error, Result};
pub use image::{clip_to_valid, Image, ImageShape};
pub use perturb::{apply_perturbation, Perturbation};
pub use rng::RandomSource;
