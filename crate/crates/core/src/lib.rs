//! Iterate averaging (EMA and relatives), stochastic optimizers, and small
//! testbeds for gradient variance amplification: cliff-loss mean estimation,
//! continuous-time Ornstein-Uhlenbeck limits, and linear-control behavior cloning.

pub mod behavior_cloning;
pub mod error;
pub mod gva_metrics;
pub mod linear_control;
pub mod mean_cliff;
pub mod numerics;
pub mod optim;
pub mod stabilizers;

pub use error::{Error, Result};
pub use numerics::{Matrix, ParamVector, RngState, Vector};
