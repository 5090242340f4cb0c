use cagekit::cage::{generate_cage, Cage, CageParams};
use cagekit::coords::{compute_harmonic_matrix, compute_mvc_matrix, map_signal, mvc_weights, HarmonicParams};
use cagekit::fixtures::{finned_box, two_spheres};
use cagekit::fixtures::shapes::{box_mesh, icosphere};
use cagekit::mesh::make_soup;
use cagekit::skin::{lbs_deform, BoneTransform, SkinWeights};
use cagekit::spatial::winding_number;
use cagekit::{TriangleMesh, Vec3};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn small_params() -> CageParams {
    CageParams {
        offset: 0.02,
        target_faces: 300,
        max_faces: 1200,
        grid_dims: [48; 3],
        require_enclosure: true,
    }
}

fn positions_matrix(mesh: &TriangleMesh) -> DMatrix<f64> {
    DMatrix::from_fn(mesh.vertex_count(), 3, |i, c| mesh.positions[i][c])
}

#[test]
fn generated_cage_encloses_and_reproduces_positions() {
    let (mesh, _) = finned_box();
    let cage = generate_cage(&mesh, &small_params()).unwrap();
    assert!(cage.topology().is_valid_cage());
    for p in &mesh.positions {
        assert!(winding_number(p, &cage.mesh) >= 0.5);
    }
    let coords = compute_mvc_matrix(&mesh, &cage).unwrap();
    let mapped = map_signal(&coords, &positions_matrix(&cage.mesh)).unwrap();
    let err = (mapped - positions_matrix(&mesh)).abs().max();
    assert!(err <= 1e-9 * mesh.bbox_diagonal(), "{err}");
}

#[test]
fn soup_gives_the_same_cage_and_rows() {
    let (mesh, _) = two_spheres(0.1);
    let soup = make_soup(&mesh, 0.0, 0.5, 11).unwrap();
    let params = small_params();
    let clean = generate_cage(&mesh, &params).unwrap();
    let souped = generate_cage(&soup, &params).unwrap();
    assert_eq!(clean.mesh, souped.mesh);
    let a = compute_mvc_matrix(&mesh, &clean).unwrap();
    let b = compute_mvc_matrix(&soup, &souped).unwrap();
    for (f, tri) in mesh.faces.iter().enumerate() {
        for (k, &v) in tri.iter().enumerate() {
            assert_eq!(a.entries.row(v), b.entries.row(3 * f + k));
        }
    }
}

#[test]
fn growth_merges_separated_spheres() {
    let (mesh, _) = two_spheres(0.1);
    let cage = generate_cage(&mesh, &small_params()).unwrap();
    let prov = cage.provenance.as_ref().unwrap();
    assert_eq!(cage.topology().component_count, 1);
    assert!(prov.effective_offset >= 0.05 - prov.growth.last().unwrap().grid_spacing);
    assert!(prov.growth.len() >= 2);
}

#[test]
fn harmonic_rows_are_a_partition_of_unity() {
    let cage = Cage::from_mesh(box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5), 2)).unwrap();
    let mesh = icosphere(1, 0.3);
    let params = HarmonicParams {
        grid_dims: [20; 3],
        ..HarmonicParams::default()
    };
    let coords = compute_harmonic_matrix(&mesh, &cage, &params).unwrap();
    for row in coords.entries.row_iter() {
        assert!((row.sum() - 1.0).abs() <= 1e-9);
        assert!(row.iter().all(|&x| x >= -1e-9));
    }
}

fn unit_direction(a: f64, b: f64) -> Vec3 {
    Vec3::new(a.cos() * b.sin(), a.sin() * b.sin(), b.cos())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mvc_interior_points_are_reproduced(a in 0.0..6.28f64, b in 0.0..3.14f64, r in 0.0..0.9f64) {
        let cage = icosphere(2, 1.0);
        let p = unit_direction(a, b) * r;
        let w = mvc_weights(&p, &cage).unwrap();
        let total: f64 = w.iter().sum();
        let recon: Vec3 = w.iter().zip(&cage.positions).map(|(l, v)| v * *l).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!((recon - p).norm() <= 1e-8 * cage.bbox_diagonal());
        prop_assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn lbs_commutes_with_rigid_motions(
        a in 0.0..6.28f64,
        b in 0.0..3.14f64,
        angle in -3.0..3.0f64,
        tx in -1.0..1.0f64,
        split in 0.1..0.9f64,
    ) {
        let mesh = icosphere(1, 0.5);
        let rows = DMatrix::from_fn(mesh.vertex_count(), 2, |i, c| {
            let s = (0.5 + mesh.positions[i].x).clamp(0.0, 1.0) * split;
            if c == 0 { s } else { 1.0 - s }
        });
        let weights = SkinWeights::new(rows).unwrap();
        let frame = [
            BoneTransform::about_pivot(&Vec3::z(), 0.4, &Vec3::new(0.1, 0.0, 0.0)),
            BoneTransform::identity(),
        ];
        let g = BoneTransform::about_pivot(&unit_direction(a, b), angle, &Vec3::new(tx, 0.2, -0.1));
        let moved: Vec<BoneTransform> = frame.iter().map(|t| g.compose(t)).collect();
        let lhs = lbs_deform(&mesh, &weights, &moved).unwrap();
        let rhs = lbs_deform(&mesh, &weights, &frame).unwrap();
        for (x, y) in lhs.positions.iter().zip(&rhs.positions) {
            prop_assert!((x - g.apply(y)).norm() <= 1e-10);
        }
    }
}

#[test]
fn identity_bones_leave_the_mesh_unchanged() {
    let mesh = icosphere(2, 0.7);
    let weights = SkinWeights::new(DMatrix::from_element(mesh.vertex_count(), 3, 1.0 / 3.0)).unwrap();
    let posed = lbs_deform(&mesh, &weights, &[BoneTransform::identity(); 3]).unwrap();
    assert_eq!(posed.positions, mesh.positions);
}
