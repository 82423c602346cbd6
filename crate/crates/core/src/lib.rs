//! Certified (interval bound propagation) training of two-layer ReLU
//! networks, with instrumentation for the neural-tangent style convergence
//! analysis: Gram matrices, weight drift, activation flips and loss bounds.
//!
//! ```no_run
//! use ibplab_core::{data::synthetic_dataset, init_network, train, TrainConfig};
//!
//! let ds = synthetic_dataset(16, 4, 0.3, 1).unwrap();
//! let params = init_network(1024, 4, 7).unwrap();
//! let out = train(&params, &ds, &TrainConfig::gd_flow(0.002, 500)).unwrap();
//! println!("{:?}", out.log.last().unwrap().point);
//! ```

pub mod data;
mod error;
pub mod ibp;
pub mod model;
pub mod numerics;
pub mod theory;
pub mod trainer;

pub use data::Dataset;
pub use error::{Error, Result};
pub use ibp::{certified_error, ibp_margins, robust_loss, robust_loss_gradient, PerturbationSpec};
pub use model::{init_network, NetworkParams};
pub use numerics::DenseMatrix;
pub use theory::{gram_matrix, GramSnapshot, TheoryReport, TrajectoryPoint};
pub use trainer::{
    certify_dataset, gram_subset, train, train_with_sink, CertificationReport, EpsilonSchedule,
    LogEntry, RunStatus, TrainConfig, TrainMode, TrainOutcome, TrajectoryLog,
};
