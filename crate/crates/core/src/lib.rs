//! Simulator and protocol library for battery-free soil-moisture nodes whose
//! readings are collected by a gateway riding on farm vehicles.

// Validation is written as `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod gateway;
pub mod link;
pub mod node;
pub mod sensing;
pub mod sim;
