//! Workflow DAG scheduling on heterogeneous compute nodes.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]
pub mod book;
pub mod model;
pub mod problem;
pub mod validate;
pub mod ingest;
pub mod heuristics;
pub mod exact;
pub mod env;
pub mod nn;
pub mod bench;
pub mod cli;
