//! Query-efficient black-box adversarial attacks on graph classifiers.

pub mod acquisition;
pub mod attack;
pub mod data;
pub mod graph;
pub mod harness;
pub mod surrogate;
pub mod victim;
pub mod wl;
