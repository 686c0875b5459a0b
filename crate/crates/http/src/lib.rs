//! Behavioral test-suite engine and the in-memory Conduit reference server.

pub mod server;
pub mod suite;
