//! Harmonic approximation of Hölder-class data on chord-arc curves in R³.

pub mod approximant;
pub mod cli;
pub mod curve;
pub mod extension;
pub mod geom;
pub mod modulus;
pub mod potential;
pub mod quad;
pub mod verify;

pub use curve::{DyadicCover, DyadicRegions, PolylineCurve, RegionLabel};
pub use geom::Point3;
pub use modulus::Modulus;
