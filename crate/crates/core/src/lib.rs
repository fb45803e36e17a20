//! Energy-aware position tracking for groups of mobile nodes.
//!
//! Nodes move as a flock, form clusters over a short-range radio, and keep
//! position estimates current by switching between GPS sharing and
//! RSSI-based multilateration depending on cluster size.

pub mod channel;
pub mod config;
pub mod energy;
pub mod geometry;
pub mod harness;
pub mod movement;
pub mod multilat;
pub mod oracles;
pub mod protocol;
pub mod seeds;
pub mod tracker;
