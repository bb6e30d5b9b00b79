//! Analysis of chemical reaction networks with power-law kinetics.
//!
//! Structural indices and linkage classes come from [`network`]; kinetic
//! systems and their classification from [`kinetics`]; the deficiency-one
//! robustness criterion from [`acr`]; steady states and trajectories from
//! [`equilibria`]; power-law approximation of flux models from [`approx`].

pub mod acr;
pub mod approx;
pub mod checks;
pub mod equilibria;
pub mod fixtures;
pub mod format;
pub mod kinetics;
pub mod linalg;
pub mod network;
pub mod random;
pub mod report;
