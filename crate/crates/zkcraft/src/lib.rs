//! Localizes trace/constraint inconsistencies in R1CS circuits. The search
//! looks for a small constant edit whose execution still satisfies the
//! constraints but changes the public outputs, then certifies it with a proof
//! the edit can be extracted from.

pub mod circuit;
pub mod digest;
pub mod driver;
pub mod extract;
pub mod ff;
pub mod gen;
pub mod oracle;
pub mod slicer;
pub mod synth;
pub mod toy;
pub mod transcript;
pub mod viop;
pub mod vortex;
