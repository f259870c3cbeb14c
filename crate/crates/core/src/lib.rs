//! Randomized sketching for overdetermined linear algebra.
//!
//! The crate builds a constant-factor subspace embedding with `O(d)` rows out
//! of two OSNAP stages, a stacked subsampled randomized Hadamard transform,
//! uniform row sampling and a packing-SDP row reweighting. On top of it sit
//! leverage score sampling for `(1 + ε)` embeddings, selection of a maximal set
//! of linearly independent rows, and preconditioned gradient-descent least
//! squares. Exact small-scale oracles live in [`linalg`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bench;
pub mod embed;
pub mod error;
pub mod leverage;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod sdp;
pub mod sketch;

pub use error::{Error, Result};
