//! Command-line tools and the operator service for the testbed.

pub mod commands;
pub mod files;
pub mod service;
pub mod session;
