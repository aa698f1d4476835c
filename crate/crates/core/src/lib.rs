//! Explainable retinal vascular biomarkers.
//!
//! The crate turns annotated vessel graphs into per-zone vascular parameters
//! (calibers, fractal dimension, tortuosity, bifurcation geometry) and runs an
//! interpretable classification pipeline on the resulting feature tables:
//! stepwise regression, nested cross-validated model selection scored by
//! weighted one-vs-rest ROC-AUC, and Shapley feature attribution.

pub mod numfmt;
pub mod rng;
pub mod vessel;
pub mod raster;
pub mod features;
pub mod params;
pub mod synth;
pub mod stats;
pub mod ml;
pub mod explain;
