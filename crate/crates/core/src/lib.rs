// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bench;
pub mod cli;
pub mod config;
pub mod elliptic;
pub mod field;
pub mod geometry;
pub mod initial;
pub mod params;
pub mod simulator;
pub mod trajectory;
