//! Strategies stub.
