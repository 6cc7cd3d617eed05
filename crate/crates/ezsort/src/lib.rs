//! Std companion to `ezsort-core`: file formats, the on-disk session
//! store, the HTTP annotation service and the command line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod formats;
pub mod service;
pub mod store;
