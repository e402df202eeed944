//! Lossless coding and joint denoising of chain-coded image contours.
//!
//! A contour is a differential chain code over `{l, s, r}`. Clean contours
//! are coded with a PPM model built from a ternary context tree. Noisy
//! contours are denoised and coded in one step by a dynamic program that
//! trades a burst-error likelihood and a straightness prior against the
//! code length under the same model.

pub mod coder;
pub mod context;
pub mod contour;
pub mod dp;
pub mod error;
pub mod error_model;
pub mod geometry;
pub mod harness;
pub mod mask;
pub mod synth;
pub mod tst;

pub use coder::{decode, encode, measure_rate, Bitstream};
pub use context::{build_tree, estimate_rate, ppm_probability, ContextTree, SymbolDistribution};
pub use contour::{next_edge, realize, DccString, Direction, Edge, GridBounds, Point, RelSymbol};
pub use dp::{joint_denoise, lambda_search, separate_baseline, ObjectiveConfig, RateModel, Solution};
pub use error::{Error, Result};
pub use error_model::{BurstAnnotation, BurstCosts, IidParams, TransitionParams};
pub use geometry::{distortion, prior_cost, straightness};
pub use mask::{corrupt_mask, rasterize, trace_contours, GridMask};
pub use tst::{build_tst, truncate_history, TotalSuffixTree};
