// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjustment;
pub mod cli;
pub mod local_solvers;
pub mod oracle;
pub mod polytope;
pub mod protocol;
pub mod rates;
pub mod scenario;
