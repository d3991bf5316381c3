//! Importance-sampling active learning (IS-AL) for parametric seismic fragility curves.
//!
//! The numerical core is generic over [`Scalar`] (`f32`/`f64`); the aliases at the bottom
//! of this file fix the double-precision types used by the study drivers and the CLI.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchlab;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod sampling;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use linalg::{Mat2, Vec2};
pub use model::{FragilityParams, LossBundle, ParamBounds, RegularizerConfig};
pub use scalar::Scalar;

pub type FragilityParams64 = FragilityParams<f64>;
pub type ParamBounds64 = ParamBounds<f64>;
pub type RegularizerConfig64 = RegularizerConfig<f64>;
pub type Mat2x64 = Mat2<f64>;
pub type Vec2x64 = Vec2<f64>;
pub type LabeledPoint64 = estimators::LabeledPoint<f64>;
pub type WeightedDataset64 = estimators::WeightedDataset<f64>;
pub type FitResult64 = estimators::FitResult<f64>;
pub type IsalTrajectory64 = estimators::IsalTrajectory<f64>;
pub type RsTrajectory64 = estimators::RsTrajectory<f64>;
pub type MarginalModel64 = sampling::MarginalModel<f64>;
pub type DrawRecord64 = sampling::DrawRecord<f64>;
pub type CovariancePack64 = inference::CovariancePack<f64>;
pub type Ellipsoid64 = inference::Ellipsoid<f64>;
