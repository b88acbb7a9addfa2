//! Tactical layer stub.
