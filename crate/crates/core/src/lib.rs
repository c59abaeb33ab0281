//! Recursive polynomial regression with Erlang-shaped error weights.
//!
//! A design ([`DesignSpec`]) is compiled once into a [`FilterRealization`]: two
//! cascades of leaky integrators plus fixed output matrices. At runtime each
//! sample costs O(K) and yields derivative estimates with a live covariance.
//!
//! ```
//! use leaky_regression::{build_realization, optimal_delay, DesignSpec, Estimator, WeightSpec};
//!
//! let weight = WeightSpec::new(0, 0.8).unwrap();
//! let spec = DesignSpec::new(weight, 2, 2, 0.0, 1.0).unwrap();
//! let q = optimal_delay(&spec).unwrap().q_optimal;
//! let realization = build_realization(&spec.with_delay(q).unwrap()).unwrap();
//! let mut est = Estimator::new(realization, 0.0).unwrap();
//! for n in 0..300 {
//!     let frame = est.push(2.0 * n as f64).unwrap();
//!     if n == 299 {
//!         assert!((frame.estimates[1] - 2.0).abs() < 1e-6);
//!     }
//! }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod detect;
pub mod error;
pub mod estimator;
pub mod matrix;
pub mod network;
pub mod response;
pub mod scalar;
pub mod scenario;
pub mod variance;
pub mod weights;

pub use design::{build_realization, DesignSpec, FilterRealization, TransformSet};
pub use detect::{
    ChangeDetector, ChangeDetectorConfig, Detector, DetectorKind, DetectorOutput, EventKind,
    StatisticDetector,
};
pub use error::{Error, Result};
pub use estimator::{coefficients, new_estimator, EstimateFrame, Estimator, EstimatorState};
pub use matrix::Matrix;
pub use network::{build_network, NetworkMatrices, StateVector};
pub use response::{bandwidth, distortion, frequency_response, group_delay_dc, ResponseReport};
pub use scalar::Scalar;
pub use variance::{optimal_delay, vrf_by_parseval, vrf_matrix, VrfReport};
pub use weights::{erlang_sum, WeightSpec};

pub type WeightSpecF64 = WeightSpec<f64>;
pub type DesignSpecF64 = DesignSpec<f64>;
pub type RealizationF64 = FilterRealization<f64>;
pub type EstimatorF64 = Estimator<f64>;
pub type EstimateFrameF64 = EstimateFrame<f64>;
