//! File formats, transports, reports and experiment drivers on top of
//! [`privbid_core`].

pub use privbid_core as core;

pub mod clock;
pub mod experiment;
pub mod io;
pub mod manifest;
pub mod report;
pub mod transport;
