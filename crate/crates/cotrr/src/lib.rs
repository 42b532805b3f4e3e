//! File formats, backends and the run harness around [`cotrr_core`].
//!
//! The core crate holds the pure engine. This crate adds what needs an
//! operating system: reading embedding stores and manifests from disk,
//! loading and re-encoding images, the HTTP chat-completions client with
//! retry and an on-disk response cache, deterministic mock backends, the
//! end-to-end run loop and the `cotrr` command line.

pub mod backend;
pub mod cli;
pub mod config;
pub mod fixture;
pub mod images;
pub mod manifest;
pub mod report;
pub mod retrieve;
pub mod run;
pub mod store_io;

pub use cotrr_core as core;
