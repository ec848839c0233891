//! Fleet simulator, experiment harness and file formats on top of
//! [`amrfleet_core`].

pub mod io;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use amrfleet_core as core;
