pub mod bus;
pub mod error;
pub mod group;
pub mod harness;
pub mod kem;
pub mod primitives;
pub mod protocol;
