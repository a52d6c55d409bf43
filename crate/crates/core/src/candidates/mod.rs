//! Triangulation candidates: Delaunay triangulation of the nuisance-space
//! projection, centroid and fringe allocation, and the Kronecker product
//! with a control-axis point set.

mod delaunay;
mod hull;
mod tricands;

pub use delaunay::{circumsphere, delaunay, simplex_volume, Triangulation};
pub use hull::{convex_hull, HullFacet};
pub use tricands::{
    tricands, tricands_plus, CandidateSet, CandidateTag, Tricands, DEFAULT_FRINGE_FRAC,
};
