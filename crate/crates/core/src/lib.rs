//! Text-controllable infrared/visible image fusion.
//!
//! A text query is grounded to an interest map ([`association`]), the
//! two sources are weighted by local activity and texture richness
//! ([`salience`]), and the fused image is the closed-form minimizer of a
//! region-partitioned loss ([`fusion`]). [`assessment`] scores results with
//! conventional and text-aware metrics; [`dataset`] drives batch runs.
//!
//! The `parallel` feature (on by default) runs the data-parallel stages on
//! rayon. Results are bit-identical with it off.

pub mod assessment;
pub mod association;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod image;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod salience;

pub use error::{Error, Result};
pub use image::{ColorImage, FeatureStack, GrayImage, Grid, HeatMap, InstanceMap, InterestMask};
