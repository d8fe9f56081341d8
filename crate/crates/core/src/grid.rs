//! Voxel-grid representation of measurable subsets of R^n and of
//! nonnegative functions on R^n.
//!
//! Voxels are half-open boxes [lo, hi) per axis, so they partition space and
//! measures add exactly. Occupancy is stored row-major with the last axis
//! fastest. Sets and functions are immutable after construction; everything
//! here is pure and safe to call from concurrent workers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::SpacePoint;
use crate::rng::CounterRng;

/// Shared geometry of a voxel grid: origin, per-axis spacing, per-axis count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
}

impl GridGeometry {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let dim = origin.len();
        if dim == 0 {
            return Err(Error::InvalidGeometry("zero-dimensional grid".into()));
        }
        if spacing.len() != dim || shape.len() != dim {
            return Err(Error::InvalidGeometry(format!(
                "origin/spacing/shape lengths disagree: {}/{}/{}",
                dim,
                spacing.len(),
                shape.len()
            )));
        }
        if spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidGeometry("spacing entries must be positive finite".into()));
        }
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::InvalidGeometry("zero-size shape axis".into()));
        }
        Ok(GridGeometry { dim, origin, spacing, shape })
    }

    /// Uniform grid over the box [lo, hi] with `cells` voxels per axis.
    pub fn over_box(lo: &[f64], hi: &[f64], cells: &[usize]) -> Result<Self> {
        let spacing = lo
            .iter()
            .zip(hi)
            .zip(cells)
            .map(|((&l, &h), &c)| (h - l) / c as f64)
            .collect::<Vec<_>>();
        GridGeometry::new(lo.to_vec(), spacing, cells.to_vec())
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false // shapes are validated positive
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.dim];
        for i in (0..self.dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let strides = self.strides();
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    pub fn decode_index(&self, mut linear: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut idx = vec![0usize; self.dim];
        for i in 0..self.dim {
            idx[i] = linear / strides[i];
            linear %= strides[i];
        }
        idx
    }

    /// Center of the voxel with multi-index `idx`.
    pub fn voxel_center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + (i as f64 + 0.5) * self.spacing[a])
            .collect()
    }

    pub fn center_of_linear(&self, linear: usize) -> Vec<f64> {
        self.voxel_center(&self.decode_index(linear))
    }

    /// Voxel containing `p` under the half-open convention, or None when
    /// outside the bounding box.
    pub fn voxel_of(&self, p: &[f64]) -> Option<usize> {
        debug_assert_eq!(p.len(), self.dim);
        let mut linear = 0usize;
        let strides = self.strides();
        for a in 0..self.dim {
            let t = (p[a] - self.origin[a]) / self.spacing[a];
            if t < 0.0 {
                return None;
            }
            let k = t as usize; // floor for t >= 0
            if k >= self.shape[a] {
                return None;
            }
            linear += k * strides[a];
        }
        Some(linear)
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let hi = self
            .origin
            .iter()
            .zip(&self.spacing)
            .zip(&self.shape)
            .map(|((&o, &h), &s)| o + h * s as f64)
            .collect();
        (self.origin.clone(), hi)
    }
}

/// An axis-aligned voxel indicator set standing in for a measurable E in R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    geom: GridGeometry,
    occupancy: Vec<bool>,
    occupied: usize,
}

impl GridSet {
    pub fn empty(geom: GridGeometry) -> Self {
        let n = geom.len();
        GridSet { geom, occupancy: vec![false; n], occupied: 0 }
    }

    pub fn from_occupancy(geom: GridGeometry, occupancy: Vec<bool>) -> Result<Self> {
        if occupancy.len() != geom.len() {
            return Err(Error::InvalidGeometry(format!(
                "occupancy length {} does not match grid size {}",
                occupancy.len(),
                geom.len()
            )));
        }
        let occupied = occupancy.iter().filter(|&&b| b).count();
        Ok(GridSet { geom, occupancy, occupied })
    }

    /// Rasterize `predicate` over the grid: a voxel is occupied iff its
    /// center satisfies the predicate.
    pub fn rasterize<F: Fn(&[f64]) -> bool>(geom: GridGeometry, predicate: F) -> Self {
        let n = geom.len();
        let mut occupancy = vec![false; n];
        let mut occupied = 0;
        let mut idx = vec![0usize; geom.dim];
        for (linear, slot) in occupancy.iter_mut().enumerate() {
            let center = geom.voxel_center(&idx);
            if predicate(&center) {
                *slot = true;
                occupied += 1;
            }
            // increment multi-index, last axis fastest
            for a in (0..geom.dim).rev() {
                idx[a] += 1;
                if idx[a] < geom.shape[a] {
                    break;
                }
                idx[a] = 0;
            }
            let _ = linear;
        }
        GridSet { geom, occupancy, occupied }
    }

    /// Fully occupied grid.
    pub fn full(geom: GridGeometry) -> Self {
        let n = geom.len();
        GridSet { geom, occupancy: vec![true; n], occupied: n }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn dim(&self) -> usize {
        self.geom.dim
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    /// Lebesgue measure: occupied voxels times voxel volume.
    pub fn measure(&self) -> f64 {
        self.occupied as f64 * self.geom.voxel_volume()
    }

    /// Membership under the half-open voxel convention (lower-inclusive).
    pub fn contains(&self, p: &[f64]) -> bool {
        match self.geom.voxel_of(p) {
            Some(linear) => self.occupancy[linear],
            None => false,
        }
    }

    pub fn contains_point(&self, p: &SpacePoint) -> bool {
        self.contains(&p.coords)
    }

    /// Linear indices of occupied voxels, ascending.
    pub fn occupied_linear(&self) -> Vec<usize> {
        self.occupancy
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| if b { Some(i) } else { None })
            .collect()
    }

    /// Centers of occupied voxels in linear order.
    pub fn occupied_centers(&self) -> Vec<Vec<f64>> {
        self.occupied_linear().iter().map(|&l| self.geom.center_of_linear(l)).collect()
    }

    /// Same geometry, voxel kept iff occupied and its center satisfies `p`.
    pub fn restrict<F: Fn(&[f64]) -> bool>(&self, p: F) -> Self {
        let mut occupancy = self.occupancy.clone();
        let mut occupied = 0;
        let mut idx = vec![0usize; self.geom.dim];
        for slot in occupancy.iter_mut() {
            if *slot {
                let center = self.geom.voxel_center(&idx);
                if p(&center) {
                    occupied += 1;
                } else {
                    *slot = false;
                }
            }
            for a in (0..self.geom.dim).rev() {
                idx[a] += 1;
                if idx[a] < self.geom.shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        GridSet { geom: self.geom.clone(), occupancy, occupied }
    }

    /// Bounding box of the occupied voxels (lo, hi); None when empty.
    pub fn occupied_bbox(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.occupied == 0 {
            return None;
        }
        let d = self.geom.dim;
        let mut lo_idx = vec![usize::MAX; d];
        let mut hi_idx = vec![0usize; d];
        for linear in self.occupied_linear() {
            let idx = self.geom.decode_index(linear);
            for a in 0..d {
                lo_idx[a] = lo_idx[a].min(idx[a]);
                hi_idx[a] = hi_idx[a].max(idx[a]);
            }
        }
        let lo = (0..d)
            .map(|a| self.geom.origin[a] + lo_idx[a] as f64 * self.geom.spacing[a])
            .collect();
        let hi = (0..d)
            .map(|a| self.geom.origin[a] + (hi_idx[a] + 1) as f64 * self.geom.spacing[a])
            .collect();
        Some((lo, hi))
    }

    /// `n` points uniform on the occupied region; deterministic in `seed`.
    pub fn sample_uniform(&self, seed: u64, n: usize) -> Result<Vec<SpacePoint>> {
        if self.occupied == 0 {
            return Err(Error::EmptySet("sample_uniform on a set of measure 0".into()));
        }
        let occupied = self.occupied_linear();
        let mut rng = CounterRng::new(seed, 0);
        let d = self.geom.dim;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let linear = occupied[rng.next_index(occupied.len())];
            let idx = self.geom.decode_index(linear);
            let coords = (0..d)
                .map(|a| {
                    self.geom.origin[a] + (idx[a] as f64 + rng.next_f64()) * self.geom.spacing[a]
                })
                .collect();
            out.push(SpacePoint::new(coords));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.geom.dim,
            "origin": self.geom.origin,
            "spacing": self.geom.spacing,
            "shape": self.geom.shape,
            "occupancy_rle": rle_encode(&self.occupancy),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let raw: GridSetFile = serde_json::from_value(v.clone())?;
        let geom = GridGeometry::new(raw.origin, raw.spacing, raw.shape)?;
        if geom.dim != raw.dim {
            return Err(Error::InvalidGeometry(format!(
                "declared dim {} does not match origin length {}",
                raw.dim, geom.dim
            )));
        }
        let occupancy = rle_decode(&raw.occupancy_rle, geom.len())?;
        Self::from_occupancy(geom, occupancy)
    }
}

#[derive(Deserialize)]
struct GridSetFile {
    dim: usize,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    shape: Vec<usize>,
    occupancy_rle: Vec<usize>,
}

/// Alternating zero/one run counts, starting with the count of zeros.
pub fn rle_encode(bits: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false; // streams start with zeros
    let mut count = 0usize;
    for &b in bits {
        if b == current {
            count += 1;
        } else {
            runs.push(count);
            current = b;
            count = 1;
        }
    }
    runs.push(count);
    runs
}

pub fn rle_decode(runs: &[usize], expected_len: usize) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(expected_len);
    let mut value = false;
    for &run in runs {
        bits.extend(std::iter::repeat(value).take(run));
        value = !value;
    }
    if bits.len() != expected_len {
        return Err(Error::InvalidGeometry(format!(
            "occupancy_rle decodes to {} voxels, grid has {}",
            bits.len(),
            expected_len
        )));
    }
    Ok(bits)
}

/// Nonnegative grid function with the same geometry conventions as GridSet.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    geom: GridGeometry,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(geom: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.len() {
            return Err(Error::InvalidGeometry(format!(
                "values length {} does not match grid size {}",
                values.len(),
                geom.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidGeometry("grid function values must be finite and >= 0".into()));
        }
        Ok(GridFunction { geom, values })
    }

    pub fn zero(geom: GridGeometry) -> Self {
        let n = geom.len();
        GridFunction { geom, values: vec![0.0; n] }
    }

    /// Characteristic function of a set, scaled by `value`.
    pub fn indicator(set: &GridSet, value: f64) -> Self {
        let values = set.occupancy().iter().map(|&b| if b { value } else { 0.0 }).collect();
        GridFunction { geom: set.geometry().clone(), values }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, p: &[f64]) -> f64 {
        match self.geom.voxel_of(p) {
            Some(linear) => self.values[linear],
            None => 0.0,
        }
    }

    /// Support bounding box (voxels with value > 0), None when identically 0.
    pub fn support_bbox(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.geom.dim;
        let mut lo_idx = vec![usize::MAX; d];
        let mut hi_idx = vec![0usize; d];
        let mut any = false;
        for (linear, &v) in self.values.iter().enumerate() {
            if v > 0.0 {
                any = true;
                let idx = self.geom.decode_index(linear);
                for a in 0..d {
                    lo_idx[a] = lo_idx[a].min(idx[a]);
                    hi_idx[a] = hi_idx[a].max(idx[a]);
                }
            }
        }
        if !any {
            return None;
        }
        let lo = (0..d)
            .map(|a| self.geom.origin[a] + lo_idx[a] as f64 * self.geom.spacing[a])
            .collect();
        let hi = (0..d)
            .map(|a| self.geom.origin[a] + (hi_idx[a] + 1) as f64 * self.geom.spacing[a])
            .collect();
        Some((lo, hi))
    }

    /// L^p mass (sum of value^p times voxel volume)^(1/p).
    pub fn lp_norm(&self, p: f64) -> f64 {
        let vol = self.geom.voxel_volume();
        (self.values.iter().map(|v| v.powf(p)).sum::<f64>() * vol).powf(1.0 / p)
    }

    pub fn l1_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.geom.voxel_volume()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.geom.dim,
            "origin": self.geom.origin,
            "spacing": self.geom.spacing,
            "shape": self.geom.shape,
            "values": self.values,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let raw: GridFunctionFile = serde_json::from_value(v.clone())?;
        let geom = GridGeometry::new(raw.origin, raw.spacing, raw.shape)?;
        if geom.dim != raw.dim {
            return Err(Error::InvalidGeometry(format!(
                "declared dim {} does not match origin length {}",
                raw.dim, geom.dim
            )));
        }
        Self::new(geom, raw.values)
    }
}

#[derive(Deserialize)]
struct GridFunctionFile {
    dim: usize,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// The unit cube [0,1]^d tiled by `cells` voxels per axis, fully occupied.
pub fn unit_cube(dim: usize, cells: usize) -> GridSet {
    let geom = GridGeometry::over_box(&vec![0.0; dim], &vec![1.0; dim], &vec![cells; dim])
        .expect("unit cube geometry is valid");
    GridSet::full(geom)
}
