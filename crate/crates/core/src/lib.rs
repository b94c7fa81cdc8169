//! Transmit covariance optimization for MIMO B-MAC interference networks.
//!
//! A B-MAC network is a set of links between (possibly co-located) virtual
//! transmitters and receivers whose interference pattern after dirty paper
//! coding and successive interference cancellation is given by a binary
//! coupling matrix. The crate provides:
//!
//! - the network model and per-link rates ([`netmodel`]);
//! - stream decompositions, MMSE-SIC receivers, SINR duality and the
//!   covariance transformation between a network and its reverse ([`streams`],
//!   [`conversion`]);
//! - polite water-filling primitives and optimality checks ([`politewf`]);
//! - solvers for the max-min rate and minimum sum-power problems
//!   ([`sinr_algs`], [`itree`], [`pwf_solvers`]);
//! - encoding/decoding order search ([`ordering`]);
//! - a simulated distributed execution with per-node local CSI ([`distsim`]).
//!
//! Rates are in nats throughout.

pub mod conversion;
pub mod distsim;
pub mod error;
pub mod itree;
pub mod linalg;
pub mod netmodel;
pub mod ordering;
pub mod politewf;
pub mod pwf_solvers;
pub mod sinr_algs;
pub mod streams;

pub use error::{Error, Result};
