//! p-harmonic maps from the unit ball into spheres, and the quantitative
//! stratification toolkit built on top of them: normalized energies and their
//! monotonicity, symmetry defects of blow-ups, strata coverings, regularity
//! scales, Minkowski fits, and defect measures of concentrating sequences.

pub mod config;
pub mod defect;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod field_io;
pub mod lattice;
pub mod map;
pub mod minimizer;
pub mod numeric;
pub mod stratification;
pub mod symmetry;
pub mod target;

pub use error::{Error, Result};
pub use lattice::{Lattice, Region, ScalarField, VectorField};
pub use map::{AnalyticMap, DiscreteMap, JacobianSource, MapSampler};
pub use target::Target;
