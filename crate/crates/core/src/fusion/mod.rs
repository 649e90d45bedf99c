//! Position and velocity fusion from ranges and radial velocities.
//!
//! Every pair of receivers `(j, k)` forms a triangle with the anchor and
//! yields one position/velocity estimate. The nearest-neighbour rule then
//! picks the densest cluster of those estimates, and the placement score
//! predicts how the triangle geometry amplifies range errors.

mod placement;
mod select;
mod triangulate;

pub use placement::{optimize_placement, orthogonal_score, placement_score, PlacementMode, PlacementScore};
pub use select::{nn_select, NnSelection};
pub use triangulate::{
    triangulate_all, triangulate_position, triangulate_velocity, TriangleEstimate, DEFAULT_DET_THRESHOLD,
};
