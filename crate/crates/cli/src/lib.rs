//! Command-line front end of `repcov`: configuration files, sweeps and
//! output documents.

pub mod config;
pub mod output;
pub mod run;
