//! Quantitative strata, coverings, regularity scales, Minkowski fits and the
//! singularity census.

pub mod census;
pub mod covering;
pub mod minkowski;
pub mod regularity;
pub mod strata;

pub use census::{singularity_census, CensusConfig, CensusReport, Cluster};
pub use covering::{build_covering, CoveringBall, CoveringTree};
pub use minkowski::{minkowski_fit, radii_ladder, tube_volumes, MinkowskiFit};
pub use regularity::{regularity_scale, RegularityConfig, RegularityProbe, RegularityScaleField};
pub use strata::{
    bad_scale_bound, check_bad_scales, classification_points, classify_point, classify_strata, count_bad_scales,
    BadScaleCheck, StrataConfig, StrataField, StrataLabel,
};
