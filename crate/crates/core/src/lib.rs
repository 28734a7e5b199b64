//! Maximum-likelihood parameter inference in state-space models by Gaussian-process
//! optimisation of particle-filter log-likelihood estimates.

pub mod acquisition;
pub mod cli;
pub mod direct;
pub mod error;
pub mod gp;
pub mod gpo;
pub mod io;
pub mod kalman;
pub mod linalg;
pub mod normality;
pub mod particle;
pub mod rng;
pub mod simplex;
pub mod spsa;
pub mod ssm;

pub use error::{Error, Result};
