//! Cage construction: level-set extraction, interior removal, offset growth
//! and simplification.

mod components;
mod generate;
mod marching_cubes;
mod qem;
mod tables;

pub use marching_cubes::marching_cubes;
pub use components::{
    component_faces, component_gap, component_gap_between, remove_internal_components,
    split_components,
};
pub use qem::{simplify_qem, Simplified};
pub use generate::{
    generate_cage, generate_offset_family, Cage, CageParams, CageProvenance, GrowthStep,
};
