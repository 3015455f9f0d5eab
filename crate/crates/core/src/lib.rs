//! Discrete-time simulation of atomic molecule capture for distributed
//! chemical programs.
//!
//! Nodes hold molecules of a shared multiset and race to grab combinations
//! that satisfy a reaction rule. Each node picks, per attempt, between an
//! optimistic and a pessimistic capture protocol based on how often recent
//! attempts succeeded.

pub mod adapt;
pub mod capture;
pub mod chemistry;
pub mod cli;
pub mod harness;
pub mod netsim;
