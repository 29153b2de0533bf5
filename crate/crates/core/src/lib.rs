//! Sharing of collectively self-consumed PV production among buildings on a
//! 30-minute settlement grid.
//!
//! The crate covers the whole pipeline: meter ingestion ([`ingestion`]),
//! the three repartition policies ([`allocation`]), self-consumption rate
//! and savings ([`billing`]), a hash-chained record of what was settled
//! ([`audit`]) and the batch runner behind the `pvshare` CLI ([`runner`]).

pub mod allocation;
pub mod apportion;
pub mod audit;
pub mod billing;
pub mod ingestion;
pub mod model;
pub mod runner;
