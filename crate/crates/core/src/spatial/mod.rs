//! Spatial queries on triangle sets.

mod bvh;
mod distance;
mod grid;
mod winding;

pub use bvh::{Closest, TriangleIndex};
pub use distance::{canonical_triangle, point_segment_distance, point_triangle_distance};
pub use grid::{sample_udf_band, sample_udf_grid, sample_udf_grid_brute, ScalarGrid};
pub use winding::{interior_components, solid_angle, winding_number, winding_numbers};
pub(crate) use grid::grid_frame;
