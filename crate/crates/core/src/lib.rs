//! Training-free stereo polygon matching.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithmic
//! stage of the matcher:
//!
//! - [`geometry`]: polygon measures, overlap and distance measures,
//!   projective transforms and polyline simplification.
//! - [`vectorize`]: label images to simplified counter-clockwise polygons and
//!   ring graphs.
//! - [`epipolar`]: robust fundamental matrix and homography estimation from
//!   keypoint matches.
//! - [`pyramid`]: Gaussian pyramids, NCC template matching, the
//!   coarse-to-fine guided window search and the coarse candidate relation.
//! - [`assignment`]: exact minimum-cost bipartite assignment.
//! - [`local_match`]: node embeddings, geometric/texture correlation, the
//!   piecewise matching cost and the globally optimal polygon assignment.
//! - [`groundtruth`]: depth-based and similarity-based ground truth.
//! - [`metrics`]: ACR, SAS, MP and precision/recall/F1.
//! - [`synth`]: deterministic synthetic stereo scenes with exact truth.
//!
//! File formats, the command-line tool and the parallel pipeline driver live
//! in the `polymatch` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod assignment;
pub mod epipolar;
mod error;
pub mod geometry;
pub mod groundtruth;
pub mod image;
pub mod local_match;
pub mod metrics;
pub mod pyramid;
pub mod synth;
pub mod vectorize;

pub use error::{Error, Result};
pub use geometry::{Fundamental3x3, Homography3x3, Point2, Polygon};
pub use image::GrayImage;
