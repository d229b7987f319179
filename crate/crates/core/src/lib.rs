//! Oscillation analysis for bimolecular mass-action reaction networks.

pub mod dynamics;
pub mod exact;
pub mod export;
pub mod hopf;
pub mod lincheck;
pub mod massaction;
pub mod models;
pub mod netdsl;
pub mod network;
pub mod svg;
