#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bags;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod ridge;
pub mod synth;
pub mod wlr;

pub use error::{LlpError, Result};
