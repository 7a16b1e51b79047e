//! Command-line pipeline and local design service for formcast.

pub mod commands;
pub mod pipeline;
pub mod service;
