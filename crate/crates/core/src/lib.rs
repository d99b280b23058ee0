//! Learned dynamical decoupling for dynamic quantum circuits.

pub mod circuit;
pub mod device;
pub mod exec;
pub mod gadd;
pub mod qft;
pub mod rb;
pub mod rng;
pub mod dd;
pub mod sim;
