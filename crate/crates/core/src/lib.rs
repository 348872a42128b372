//! Simulation of pulsed light on a time-multiplexed click detector and
//! reconstruction of normalized correlation functions `g^(n)` and `g^(n,m)`
//! from the click records.
//!
//! The pipeline is `sources` (photon-number statistics) -> `cascade`
//! (beamsplitter routing) -> `detection` (clicks, dead time) -> `tdc_io`
//! (timestamp files) -> `estimator` (subset-averaged coincidence ratios).

pub mod cascade;
pub mod detection;
pub mod estimator;
pub mod sources;
pub mod tdc_io;
pub mod cli;
pub mod report;
pub mod selftest;
