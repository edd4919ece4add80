//! IO companion to `rehabloop-core`: the canonical constraint schema, the
//! newline-delimited JSON protocol, the streaming server, log replay, the
//! latency benchmark and configuration for the command-line tool.

pub mod bench;
pub mod config;
pub mod ingest;
pub mod mailbox;
pub mod protocol;
pub mod providers;
pub mod replay;
pub mod schema;
pub mod server;
pub mod simulate;
