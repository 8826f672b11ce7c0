//! marginlab: gradient methods for linear classification on separable data,
//! with empirical certification of the risk, margin and norm guarantees they
//! satisfy.
//!
//! The crate is organized around five pieces:
//!
//! * [`loss`] — the exponential, logistic and polynomial-tail losses with
//!   their derivatives, inverses and smoothness constants, and the empirical
//!   risk over a dataset;
//! * [`data`] — separable datasets in the unit ball with a margin witness,
//!   generators (random, adversarial two-cluster), and margin profiles;
//! * [`optim`] — gradient flow (adaptive embedded Runge–Kutta), gradient
//!   descent and averaged SGD, all producing checkpointed trajectories, plus
//!   the scalar two-cluster recursion;
//! * [`bounds`] — closed-form bound evaluators and the certifier comparing
//!   them against measured trajectories with a per-method tolerance policy;
//! * [`experiment`] — generalization estimation, parameter sweeps, the
//!   lower-bound and recursion campaigns, and the risk-plateau check.

// Validations use negated comparisons like `!(x > 0.0)` on purpose: they
// reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod data;
mod error;
pub mod experiment;
mod linalg;
pub mod loss;
pub mod optim;
pub mod util;

pub use error::{Error, Result};

pub use bounds::{certify, certify_sgd_expectation, BoundQuery, BoundReport};
pub use data::{
    adversarial_dataset, figure1_dataset, generate_separable, margin_profile, misclassified_count,
    AdversarialMeta, Dataset, MarginProfile,
};
pub use experiment::{
    estimate_generalization, inittime_check, lowerbound_campaign, plateau_check, run_sweep,
    BoundRequest, DistributionSpec, GenErrorEstimate, InitTimeReport, PlateauReport, SampleLaw,
    SweepConfig,
};
pub use loss::{empirical_risk, risk_gradient, Loss};
pub use optim::{
    lowerbound_recursion, run_flow, run_gd, run_sgd, Checkpoint, FlowConfig, GdConfig,
    LowerBoundRow, LowerBoundTrace, Method, RunConfig, SgdConfig, Trajectory,
};
