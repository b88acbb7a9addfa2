//! Simulation kit stub.
