//! Deep dimension reduction.
//!
//! Learns a low-dimensional representation `R(X)` that maximises the
//! distance covariance with the response while being pushed towards a
//! standard Gaussian law by a particle flow driven by a logistic
//! density-ratio discriminator.
//!
//! ```
//! use ddr_core::datagen::{gen_regression1, standardize, Reg1Model};
//! use ddr_core::trainer::{ddr_train, TrainConfig};
//!
//! let raw = gen_regression1(Reg1Model::B, 512, 0.1, 7)?;
//! let (data, _scaler) = standardize(&raw)?;
//! let config = TrainConfig { outer_loops: 5, ..TrainConfig::regression() };
//! let model = ddr_train(&data, &config)?;
//! let features = model.embed(&data.x)?;
//! assert_eq!(features.shape(), (512, 1));
//! assert_eq!(model.training_log.len(), 5);
//! # Ok::<(), ddr_core::DdrError>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod bench;
pub mod datagen;
pub mod dependence;
pub mod divergence;
pub mod error;
pub mod flow;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod svg;
pub mod trainer;

pub use error::{DdrError, Result};
pub use matrix::Matrix;
