//! Adversarial-state search for policy-value game agents on Go and NoGo.
//!
//! The crate perturbs positions from finished game records by appending one
//! or two meaningless moves, then checks whether a target agent's value or
//! policy output breaks on the perturbed state while a stronger examiner
//! agent still considers the two states equivalent.

pub mod agents;
pub mod game;
