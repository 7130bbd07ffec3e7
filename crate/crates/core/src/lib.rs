//! Multiscale simulation and adaptive NMPC engine for fed-batch mAb
//! glycosylation control.
//!
//! The crate is organized around the layers of the process model:
//!
//! - [`network`]: reaction-network and parameter-pack ingestion
//! - [`cellculture`]: bioreactor-scale growth/metabolite balances
//! - [`nsd`]: intracellular nucleotide-sugar-donor synthesis
//! - [`golgi`]: plug-flow Golgi glycosylation model
//! - [`simulate`]: coupled time integration (full transient and QSS-reduced)
//! - [`nlp`]: SQP solver for the embedded optimization problems
//! - [`optimize`]: shrinking-horizon dynamic optimization of feed schedules
//! - [`estimate`]: online weighted-least-squares parameter estimation
//! - [`anmpc`]: the closed-loop controller and simulated plant

pub mod anmpc;
pub mod cellculture;
pub mod error;
pub mod estimate;
pub mod golgi;
pub mod integrate;
pub mod network;
pub mod nlp;
pub mod nsd;
pub mod optimize;
pub mod simulate;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
