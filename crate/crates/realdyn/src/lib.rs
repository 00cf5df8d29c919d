//! Computational machinery for one-dimensional real dynamics: periodic
//! orbits, puzzle partitions, first entry and return structures, principal,
//! good and enhanced nests, central cascades, real-geometry measurements,
//! Poincaré-disk pullback traces, and numerical construction of topological
//! conjugacies with quasisymmetric distortion measurement.

pub mod conjugacy;
pub mod disk;
pub mod enhanced;
pub mod expr;
pub mod fibonacci;
pub mod geometry;
pub mod interval;
pub mod map;
pub mod nests;
pub mod numerics;
pub mod orbit;
pub mod puzzle;
pub mod real;

pub use interval::RInterval;
pub use map::{CriticalPoint, MapDomain, MapError, MapSpec};
pub use real::{Precision, Real};

/// Any error produced by the toolkit.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error(transparent)]
    Map(#[from] map::MapError),
    #[error(transparent)]
    Orbit(#[from] orbit::OrbitError),
    #[error(transparent)]
    Puzzle(#[from] puzzle::PuzzleError),
    #[error(transparent)]
    Nest(#[from] nests::NestError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeomError),
    #[error(transparent)]
    Trace(#[from] disk::TraceError),
    #[error(transparent)]
    Conjugacy(#[from] conjugacy::ConjError),
}
