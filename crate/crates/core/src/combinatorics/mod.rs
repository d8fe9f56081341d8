//! Proof-engine constructions: towers, the slicing and inflation bounds,
//! balanced convex approximation, determinant moments, and the ball
//! extraction pipeline built from them.

pub mod convex;
pub mod ellipsoid;
pub mod extract;
pub mod tower;

pub use convex::{convexify, det_moment, det_moment_with, grid_measure_points, ConvexApprox, DetMomentReport, Slab};
pub use ellipsoid::{mvee, mvee_centered, Ellipsoid};
pub use extract::{extract_ball, ExtractReport};
pub use tower::{
    build_tower, check_tower_inclusions, default_phi_raster, phi_image_measure, slicing_bound,
    PhiImageReport, TowerData, KAPPA_1, KAPPA_2,
};
