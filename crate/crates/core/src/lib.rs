//! Planar multi-vehicle simulator for cooperative collision avoidance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod decision;
pub mod geom;
pub mod linalg;
pub mod path;
pub mod tracking;
pub mod v2v;
pub mod vehicle;
pub mod sim;
pub mod tuning;
