#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod error;
pub mod harness;
pub mod iterate;
pub mod operators;
pub mod oracle;
pub mod params;
pub mod space;
pub mod subspace;
