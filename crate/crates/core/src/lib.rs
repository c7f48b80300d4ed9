//! Verifying compiler and deterministic multi-device simulator for
//! local-first reactive programs.
//!
//! A program declares replicated source reactives, derived reactives,
//! interactions with pre- and postconditions, and invariants. The pipeline
//! parses and checks it ([`syntax`]), builds the data-flow graph
//! ([`graph`]), discharges preservation and confluence obligations by
//! bounded enumeration ([`verify`]) to obtain the conflict table, and runs
//! it on simulated devices with token-based coordination ([`runtime`],
//! [`sim`]).

pub mod cli;
pub mod crdt;
pub mod eval;
pub mod graph;
pub mod program;
pub mod runtime;
pub mod sim;
pub mod syntax;
pub mod verify;
