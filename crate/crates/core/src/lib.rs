//! Sample-based structured prediction and planning for synthetic driving scenes.
//!
//! Every actor gets a discrete set of candidate futures from [`sampler`]. A
//! feature-linear unary energy and a pairwise collision energy define a joint
//! distribution over those candidates ([`energy`]), whose per-actor marginals
//! come from log-domain sum-product message passing ([`inference`]). The
//! planner picks the ego trajectory with the lowest route cost plus expected
//! collision cost under those marginals ([`planner`]), and [`learning`] fits
//! all weights with a cross-entropy prediction loss and a max-margin planning
//! loss, differentiating through the unrolled message passing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod learning;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod planner;
pub mod sampler;
pub mod scenario;
pub mod weights;

pub use error::{Error, Result};
