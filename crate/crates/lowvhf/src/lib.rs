//! File formats, configuration and the session runner behind the `lowvhf`
//! command.

pub mod config;
pub mod error;
pub mod frames;
pub mod iqfile;
pub mod pktlog;
pub mod report;
pub mod session;

pub use error::FormatError;
