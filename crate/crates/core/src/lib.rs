//! Counterfactual explanations and adversarial examples for tabular
//! classifiers.

// NaN-rejecting comparisons such as `!(x > 0.0)` are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causal;
pub mod cli;
pub mod explain;
pub mod formal;
pub mod model;
pub mod scenarios;
pub mod solve;
pub mod space;
