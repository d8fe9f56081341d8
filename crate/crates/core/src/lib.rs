//! Desk-scale numerical toolkit for the incidence geometry of a parabolic
//! Radon-like transform: the averaging operator and its bilinear incidence
//! functional on voxel sets, quasiextremality scores, the ball family on
//! the incidence manifold with its symmetry group, and the combinatorial
//! constructions (towers, slicing, convexification, determinant moments,
//! covering, ball extraction) that the verification suites exercise.

pub mod error;
pub mod geom;
pub mod grid;
pub mod rng;

pub mod balls;
pub mod combinatorics;
pub mod config;
pub mod generators;
pub mod lorentz;
pub mod suites;
pub mod symmetry;
pub mod transform;

pub use error::{Error, Result};
