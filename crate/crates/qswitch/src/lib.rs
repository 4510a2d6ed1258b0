//! Simulation of single-photon routing and entanglement generation in chains
//! of nodes linked by waveguides and gated by dispersive switch qubits.

pub mod emitter;
pub mod network;
pub mod ode;
pub mod pulse;
pub mod protocols;
pub mod analysis;
pub mod noise;
