//! Declarative experiment configuration: dimension, quadrature, seeds,
//! corpus generators, tolerances, and the frozen empirical constants the
//! suites assert against.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::QuadratureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Independent random voxel unions over [0,1]^d.
    RandomVoxels { cells: usize, fill: f64 },
    /// Unions of random axis-aligned boxes.
    RandomBoxes { count: usize },
    /// Envelope pair of a random ball with radii in [lo, hi].
    BallEnvelope { radius_lo: f64, radius_hi: f64, cells: usize },
    /// Ball envelope pushed through a random symmetry word.
    TransformedEnvelope { cells: usize },
    /// The sparse paraboloid-cluster family.
    ParaboloidCluster { n: usize, delta: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub quadrature: QuadratureSpec,
    pub seeds: Vec<u64>,
    pub generators: Vec<GeneratorSpec>,
    pub tolerances: BTreeMap<String, f64>,
    pub frozen_constants: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dimension == 2 || self.dimension == 3) {
            return Err(Error::ConfigInvalid(format!(
                "dimension must be 2 or 3, got {}",
                self.dimension
            )));
        }
        if !(self.quadrature.t_resolution > 0.0) {
            return Err(Error::ConfigInvalid("t_resolution must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::ConfigInvalid("at least one seed is required".into()));
        }
        for (name, value) in &self.tolerances {
            if !(*value > 0.0) {
                return Err(Error::ConfigInvalid(format!("tolerance {name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn seed(&self, index: usize) -> u64 {
        self.seeds[index % self.seeds.len()]
    }

    pub fn tolerance(&self, name: &str) -> Result<f64> {
        self.tolerances
            .get(name)
            .copied()
            .ok_or_else(|| Error::ConfigInvalid(format!("missing tolerance {name}")))
    }

    pub fn frozen(&self, name: &str) -> Result<f64> {
        self.frozen_constants
            .get(name)
            .copied()
            .ok_or_else(|| Error::ConfigInvalid(format!("missing frozen constant {name}")))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Frozen empirical baselines per dimension, established once by the
/// `calibrate` run and kept in sync with config/frozen.json.
pub fn frozen_defaults(dimension: usize) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    let ins = |m: &mut BTreeMap<String, f64>, k: &str, v: f64| {
        m.insert(k.to_string(), v);
    };
    match dimension {
        2 => {
            ins(&mut m, "c0", 0.87);
            ins(&mut m, "k_d", 1.10);
            ins(&mut m, "kappa1", 0.5);
            ins(&mut m, "kappa2", 0.5);
            ins(&mut m, "kappa3", 0.21);
            ins(&mut m, "cover_net_c", 1.0);
            ins(&mut m, "cover_net_cprime", 1.0);
            ins(&mut m, "slicing_c", 0.9);
            ins(&mut m, "detmoment_c1", 0.25);
            ins(&mut m, "detmoment_c2", 0.05);
            ins(&mut m, "trilinear_bound", 4.0);
            ins(&mut m, "envelope_pair_incidence", 6.0);
            ins(&mut m, "paraboloid_tube_scale", 2.0);
            ins(&mut m, "paraboloid_transform_floor", 1.0);
            ins(&mut m, "sparse_ratio_bound", 4.0);
        }
        _ => {
            ins(&mut m, "c0", 0.80);
            ins(&mut m, "k_d", 1.10);
            ins(&mut m, "kappa1", 0.5);
            ins(&mut m, "kappa2", 0.5);
            ins(&mut m, "kappa3", 0.05);
            ins(&mut m, "cover_net_c", 1.0);
            ins(&mut m, "cover_net_cprime", 1.25);
            ins(&mut m, "slicing_c", 0.5);
            ins(&mut m, "detmoment_c1", 0.25);
            ins(&mut m, "detmoment_c2", 0.05);
            ins(&mut m, "trilinear_bound", 4.0);
            ins(&mut m, "envelope_pair_incidence", 0.0);
            ins(&mut m, "paraboloid_tube_scale", 2.0);
            ins(&mut m, "paraboloid_transform_floor", 1.0);
            ins(&mut m, "sparse_ratio_bound", 4.0);
        }
    }
    m
}

fn tolerance_defaults(dimension: usize) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    // the d = 3 corpus rasters are coarser per axis, so their t-lattice
    // quadrature carries a larger declared error class
    m.insert("quadrature_rel".to_string(), if dimension == 2 { 0.02 } else { 0.08 });
    m.insert("mc_sigma".to_string(), 3.0);
    m.insert("epsilon_invariance".to_string(), 0.02);
    m.insert("monotonicity_noise".to_string(), 0.05);
    m.insert("coverage_min".to_string(), 0.999);
    m.insert("cov_max".to_string(), 0.15);
    m.insert("slope_stability".to_string(), 0.5);
    m
}

pub fn default_config(dimension: usize) -> ExperimentConfig {
    let generators = vec![
        GeneratorSpec::RandomVoxels { cells: if dimension == 2 { 40 } else { 14 }, fill: 0.35 },
        GeneratorSpec::RandomBoxes { count: 4 },
        GeneratorSpec::BallEnvelope {
            radius_lo: 0.5,
            radius_hi: 2.0,
            cells: if dimension == 2 { 32 } else { 12 },
        },
        GeneratorSpec::TransformedEnvelope { cells: if dimension == 2 { 32 } else { 12 } },
    ];
    ExperimentConfig {
        dimension,
        quadrature: QuadratureSpec::auto(1.0 / 64.0),
        seeds: vec![0xC0FFEE, 0xBEEF, 0xF00D],
        generators,
        tolerances: tolerance_defaults(dimension),
        frozen_constants: frozen_defaults(dimension),
    }
}
