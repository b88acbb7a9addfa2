//! Take-off and merging coordination for eVTOL corridor traffic.
//!
//! The engine couples two layers. A tactical scheduler watches the corridor
//! upstream of a vertiport, scores candidate merge gaps for safety and
//! reachability, and picks a take-off time and a moving merge slot for each
//! departure. An operational layer then solves a free-final-time trajectory
//! optimization (direct collocation + SQP) that flies the vehicle from the
//! transition point into that slot while respecting airspace, envelope and
//! separation constraints. A discrete-event simulation kit and several
//! baseline strategies sit on top for benchmarking.

pub mod corridor;
pub mod dynamics;
pub mod geometry;
pub mod ocp;
pub mod simkit;
pub mod strategies;
pub mod tactical;

pub use corridor::{AgentId, CorridorState, CorridorVehicle, MergingPair, VehicleKind};
pub use dynamics::{ControlUV, PhysicalControl, PlaneState, VehicleParams};
pub use geometry::{Frame, PlanePoint, TmSection};
