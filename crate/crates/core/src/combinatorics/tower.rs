//! Tower extraction (a base point with its first- and second-generation
//! incidence sets), the product map image measure, and the slicing bound.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{dot, SpacePoint, SquareMatrix};
use crate::grid::{GridGeometry, GridSet};
use crate::rng::CounterRng;
use crate::transform::{
    bilinear_transpose, forward_count, lattice_range, transpose_count, QuadratureSpec,
};

/// Tower thresholds: both superlevel prunings keep at least half the
/// relevant average, fixed by construction.
pub const KAPPA_1: f64 = 0.5;
pub const KAPPA_2: f64 = 0.5;

/// Base point with its first-generation set Omega_1 (in the s-lattice) and
/// per-s fibers stored in u = t - s coordinates.
#[derive(Debug, Clone)]
pub struct TowerData {
    pub base_point: SpacePoint,
    pub omega1: GridSet,
    /// (linear voxel index into omega1's grid, fiber). All fibers carry the
    /// same number of occupied voxels after trimming.
    pub fibers: Vec<(usize, GridSet)>,
    pub alpha: f64,
    pub alpha_star: f64,
}

impl TowerData {
    pub fn omega1_measure(&self) -> f64 {
        self.omega1.measure()
    }

    pub fn fiber_measure(&self) -> f64 {
        self.fibers.first().map(|(_, f)| f.measure()).unwrap_or(0.0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "base_point": self.base_point.coords,
            "omega1": self.omega1.to_json(),
            "fibers": self.fibers.iter().map(|(i, f)| serde_json::json!([i, f.to_json()])).collect::<Vec<_>>(),
            "alpha": self.alpha,
            "alpha_star": self.alpha_star,
        })
    }
}

/// The tower's second-generation point: base - (s,|s|^2) + (t,|t|^2) with
/// t = s + u. Build and verification both go through here so membership is
/// evaluated on bit-identical coordinates.
pub(crate) fn fiber_point(base: &[f64], s: &[f64], u: &[f64]) -> Vec<f64> {
    let d = base.len();
    let m = d - 1;
    let mut y = vec![0.0; d];
    let mut ssq = 0.0;
    for a in 0..m {
        y[a] = base[a] - s[a];
        ssq += s[a] * s[a];
    }
    y[m] = base[m] - ssq;
    let mut p = vec![0.0; d];
    let mut tsq = 0.0;
    for a in 0..m {
        let t = s[a] + u[a];
        p[a] = y[a] + t;
        tsq += t * t;
    }
    p[m] = y[m] + tsq;
    p
}

/// Lattice-aligned grid over [lo, hi]: cells centered on the absolute
/// lattice (k + 1/2) h.
fn lattice_grid(lo: &[f64], hi: &[f64], h: f64) -> Result<GridGeometry> {
    let dim = lo.len();
    let mut origin = vec![0.0; dim];
    let mut shape = vec![0usize; dim];
    for a in 0..dim {
        let (k_lo, k_hi) = lattice_range(lo[a], hi[a], h);
        origin[a] = k_lo as f64 * h;
        shape[a] = (k_hi - k_lo + 1).max(1) as usize;
    }
    GridGeometry::new(origin, vec![h; dim], shape)
}

/// Two-step tower from the best base point: prune E* to its superlevel set
/// under the transpose counts, take the maximizer of T(chi_{E*1}) over E as
/// the base, then collect the s-set and its t-fibers on the quadrature
/// lattice. Fibers are trimmed to a common measure.
pub fn build_tower(e: &GridSet, estar: &GridSet, q: &QuadratureSpec) -> Result<TowerData> {
    let d = e.dim();
    let m = d - 1;
    if estar.dim() != d {
        return Err(Error::InvalidGeometry("set dimensions disagree".into()));
    }
    if e.occupied_count() == 0 || estar.occupied_count() == 0 {
        return Err(Error::NoIncidences);
    }

    // transpose counts on E*, and the incidence total from the same lattice
    let star_occupied = estar.occupied_linear();
    let v: Vec<f64> = star_occupied
        .par_iter()
        .map(|&lin| transpose_count(e, &estar.geometry().center_of_linear(lin), q))
        .collect();
    let t_total: f64 = v.iter().sum::<f64>() * estar.geometry().voxel_volume();
    if t_total <= 0.0 {
        return Err(Error::NoIncidences);
    }
    let alpha = t_total / e.measure();
    let alpha_star = t_total / estar.measure();

    // E*_1 = {y in E* : transpose count >= alpha_star / 2}
    let mut star1_occ = vec![false; estar.geometry().len()];
    for (&lin, &count) in star_occupied.iter().zip(&v) {
        if count >= alpha_star / 2.0 {
            star1_occ[lin] = true;
        }
    }
    let estar1 = GridSet::from_occupancy(estar.geometry().clone(), star1_occ)?;
    if estar1.occupied_count() == 0 {
        return Err(Error::TowerFailed("superlevel pruning emptied E*".into()));
    }

    // base point: maximizer of T(chi_{E*1}) over E, lexicographically first
    let e_occupied = e.occupied_linear();
    let u1: Vec<f64> = e_occupied
        .par_iter()
        .map(|&lin| forward_count(&estar1, &e.geometry().center_of_linear(lin), q))
        .collect();
    let (mut best, mut best_at) = (f64::NEG_INFINITY, 0usize);
    for (i, &val) in u1.iter().enumerate() {
        if val > best {
            best = val;
            best_at = i;
        }
    }
    if best <= 0.0 {
        return Err(Error::TowerFailed("no base point sees the pruned E*".into()));
    }
    let base = e.geometry().center_of_linear(e_occupied[best_at]);

    // Omega_1: s-lattice points with base - (s, |s|^2) in E*_1
    let (s1lo, s1hi) = estar1.occupied_bbox().expect("nonempty");
    let h = q.t_resolution;
    let slo: Vec<f64> = (0..m).map(|a| base[a] - s1hi[a]).collect();
    let shi: Vec<f64> = (0..m).map(|a| base[a] - s1lo[a]).collect();
    let sgeom = lattice_grid(&slo, &shi, h)?;
    let omega1 = GridSet::rasterize(sgeom, |s| {
        let mut p = [0.0f64; 3];
        let mut tsq = 0.0;
        for a in 0..m {
            p[a] = base[a] - s[a];
            tsq += s[a] * s[a];
        }
        p[m] = base[m] - tsq;
        estar1.contains(&p[..d])
    });
    if omega1.occupied_count() == 0 {
        return Err(Error::TowerFailed(
            "quadrature too coarse: the s-lattice misses the pruned set".into(),
        ));
    }

    // fibers over t, stored in u = t - s lattice indices
    let (elo, ehi) = e.occupied_bbox().expect("nonempty");
    let s_indices = omega1.occupied_linear();
    let raw: Vec<Vec<Vec<i64>>> = s_indices
        .par_iter()
        .map(|&slin| {
            let s = omega1.geometry().center_of_linear(slin);
            let y: Vec<f64> = {
                let mut y = vec![0.0; d];
                let mut ssq = 0.0;
                for a in 0..m {
                    y[a] = base[a] - s[a];
                    ssq += s[a] * s[a];
                }
                y[m] = base[m] - ssq;
                y
            };
            // index offsets of s on the absolute lattice
            let s_k: Vec<i64> = (0..m).map(|a| ((s[a] / h) - 0.5).round() as i64).collect();
            let mut members = Vec::new();
            let ranges: Vec<(i64, i64)> =
                (0..m).map(|a| lattice_range(elo[a] - y[a], ehi[a] - y[a], h)).collect();
            if ranges.iter().any(|r| r.0 > r.1) {
                return members;
            }
            let mut k = ranges.iter().map(|r| r.0).collect::<Vec<i64>>();
            'outer: loop {
                let mut p = vec![0.0; d];
                let mut tsq = 0.0;
                for a in 0..m {
                    let t = (k[a] as f64 + 0.5) * h;
                    p[a] = y[a] + t;
                    tsq += t * t;
                }
                p[m] = y[m] + tsq;
                if e.contains(&p) {
                    members.push((0..m).map(|a| k[a] - s_k[a]).collect::<Vec<i64>>());
                }
                for a in (0..m).rev() {
                    k[a] += 1;
                    if k[a] <= ranges[a].1 {
                        continue 'outer;
                    }
                    k[a] = ranges[a].0;
                    if a == 0 {
                        break 'outer;
                    }
                }
            }
            members
        })
        .collect();

    if raw.iter().any(|f| f.is_empty()) {
        return Err(Error::TowerFailed("an s-fiber came out empty".into()));
    }

    // global u-index bounds for a common fiber geometry
    let mut u_lo = vec![i64::MAX; m];
    let mut u_hi = vec![i64::MIN; m];
    for fiber in &raw {
        for u in fiber {
            for a in 0..m {
                u_lo[a] = u_lo[a].min(u[a]);
                u_hi[a] = u_hi[a].max(u[a]);
            }
        }
    }
    let origin: Vec<f64> = (0..m).map(|a| (u_lo[a] as f64 - 0.5) * h).collect();
    let shape: Vec<usize> = (0..m).map(|a| (u_hi[a] - u_lo[a] + 1) as usize).collect();
    let fiber_geom = GridGeometry::new(origin, vec![h; m], shape)?;

    // Re-validate each member through the exact coordinates the stored
    // representation produces (grid centers, t = s + u), dropping the rare
    // knife-edge voxels the canonical lattice enumeration admitted.
    let validated: Vec<(usize, Vec<Vec<i64>>)> = s_indices
        .iter()
        .zip(raw)
        .map(|(&slin, members)| {
            let s = omega1.geometry().center_of_linear(slin);
            let kept: Vec<Vec<i64>> = members
                .into_iter()
                .filter(|uk| {
                    let idx: Vec<usize> = (0..m).map(|a| (uk[a] - u_lo[a]) as usize).collect();
                    let u = fiber_geom.voxel_center(&idx);
                    e.contains(&fiber_point(&base, &s, &u))
                })
                .collect();
            (slin, kept)
        })
        .collect();
    let min_count = validated.iter().map(|(_, f)| f.len()).min().unwrap_or(0);
    if min_count == 0 {
        return Err(Error::TowerFailed("an s-fiber came out empty".into()));
    }

    let mut fibers = Vec::with_capacity(validated.len());
    for (slin, members) in validated {
        let mut occ = vec![false; fiber_geom.len()];
        // trim to the common count, keeping the lexicographically first
        // members (enumeration order is already lexicographic)
        for u in members.iter().take(min_count) {
            let idx: Vec<usize> = (0..m).map(|a| (u[a] - u_lo[a]) as usize).collect();
            occ[fiber_geom.linear_index(&idx)] = true;
        }
        fibers.push((slin, GridSet::from_occupancy(fiber_geom.clone(), occ)?));
    }

    Ok(TowerData {
        base_point: SpacePoint::new(base),
        omega1,
        fibers,
        alpha,
        alpha_star,
    })
}

/// Spot-check of the two tower inclusions by direct membership of sampled
/// lattice points; returns the number of violations.
pub fn check_tower_inclusions(
    tower: &TowerData,
    e: &GridSet,
    estar: &GridSet,
    samples: usize,
    seed: u64,
) -> usize {
    let d = e.dim();
    let m = d - 1;
    let base = &tower.base_point.coords;
    let s_list = tower.omega1.occupied_linear();
    let mut rng = CounterRng::new(seed, 31);
    let mut violations = 0;
    for _ in 0..samples {
        let pick = rng.next_index(s_list.len());
        let s = tower.omega1.geometry().center_of_linear(s_list[pick]);
        let mut y = vec![0.0; d];
        let mut ssq = 0.0;
        for a in 0..m {
            y[a] = base[a] - s[a];
            ssq += s[a] * s[a];
        }
        y[m] = base[m] - ssq;
        if !estar.contains(&y) {
            violations += 1;
            continue;
        }
        let fiber = &tower.fibers.iter().find(|(lin, _)| *lin == s_list[pick]).unwrap().1;
        let u_list = fiber.occupied_linear();
        if u_list.is_empty() {
            continue;
        }
        let u = fiber.geometry().center_of_linear(u_list[rng.next_index(u_list.len())]);
        if !e.contains(&fiber_point(base, &s, &u)) {
            violations += 1;
        }
    }
    violations
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PhiImageReport {
    pub measure: f64,
    /// measure / (alpha_star^(d/(d-1)) alpha^(1/(d-1))).
    pub ratio: f64,
}

/// Accumulator for the image measure of (s, u) -> (u, s.u): the raster's
/// first m axes partition the u-plane into columns; per column the covered
/// last-coordinate set is kept as a list of intervals and merged at the
/// end. Thin image wedges therefore carry their true vertical extent
/// instead of whole voxels.
struct PhiAccumulator<'g> {
    raster: &'g GridGeometry,
    columns: Vec<Vec<(f64, f64)>>,
    column_strides: Vec<usize>,
}

impl<'g> PhiAccumulator<'g> {
    fn new(raster: &'g GridGeometry) -> Self {
        let m = raster.dim - 1;
        let mut column_strides = vec![1usize; m];
        for i in (0..m.saturating_sub(1)).rev() {
            column_strides[i] = column_strides[i + 1] * raster.shape[i + 1];
        }
        let count: usize = raster.shape[..m].iter().product();
        PhiAccumulator { raster, columns: vec![Vec::new(); count], column_strides }
    }

    /// Add the image of one domain cell [s +- h/2] x [u +- h/2]. For fixed
    /// u' the last coordinate sweeps the interval spanned by the
    /// s-corners; each raster column meeting the u-cell records the sweep
    /// at the midpoint of its overlap with the cell (a midpoint-rule
    /// section, unbiased to first order in the column width).
    fn add_cell(&mut self, s: &[f64], u: &[f64], s_h: &[f64], u_h: &[f64]) -> Result<()> {
        let m = s.len();
        let last = m;
        let raster = self.raster;
        let (rlo, rhi) = raster.bbox();

        // exact overflow test: s.u is multilinear, so its extremes over
        // the cell are attained at corner pairs
        let corners = 1usize << m;
        let (mut cell_vmin, mut cell_vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for cs in 0..corners {
            for cu in 0..corners {
                let v: f64 = (0..m)
                    .map(|a| {
                        let sa = s[a] + if (cs >> a) & 1 == 1 { 0.5 * s_h[a] } else { -0.5 * s_h[a] };
                        let ua = u[a] + if (cu >> a) & 1 == 1 { 0.5 * u_h[a] } else { -0.5 * u_h[a] };
                        sa * ua
                    })
                    .sum();
                cell_vmin = cell_vmin.min(v);
                cell_vmax = cell_vmax.max(v);
            }
        }
        for a in 0..m {
            if u[a] - 0.5 * u_h[a] < rlo[a] || u[a] + 0.5 * u_h[a] > rhi[a] {
                let mut p = u.to_vec();
                p.push(dot(s, u));
                return Err(Error::RasterOverflow(p));
            }
        }
        if cell_vmin < rlo[last] || cell_vmax > rhi[last] {
            let mut p = u.to_vec();
            p.push(if cell_vmin < rlo[last] { cell_vmin } else { cell_vmax });
            return Err(Error::RasterOverflow(p));
        }

        // a cell contributes to the columns whose centers it contains, so
        // every cell sharing a column evaluates its section at the same u
        // (a midpoint rule without sliver bias); a cell thinner than one
        // column falls back to the nearest center
        let mut col_lo = vec![0usize; m];
        let mut col_hi = vec![0usize; m];
        for a in 0..m {
            let f_lo = ((u[a] - 0.5 * u_h[a] - raster.origin[a]) / raster.spacing[a] - 0.5).ceil();
            let f_hi = ((u[a] + 0.5 * u_h[a] - raster.origin[a]) / raster.spacing[a] - 0.5).floor();
            if f_hi < f_lo {
                let near = ((u[a] - raster.origin[a]) / raster.spacing[a] - 0.5).round();
                col_lo[a] = (near.max(0.0) as usize).min(raster.shape[a] - 1);
                col_hi[a] = col_lo[a];
            } else {
                col_lo[a] = (f_lo.max(0.0)) as usize;
                col_hi[a] = (f_hi.max(0.0) as usize).min(raster.shape[a] - 1).max(col_lo[a]);
            }
        }

        let mut col = col_lo.clone();
        loop {
            let centers: Vec<f64> = (0..m)
                .map(|a| raster.origin[a] + (col[a] as f64 + 0.5) * raster.spacing[a])
                .collect();
            let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for cs in 0..corners {
                let v: f64 = (0..m)
                    .map(|a| {
                        (s[a] + if (cs >> a) & 1 == 1 { 0.5 * s_h[a] } else { -0.5 * s_h[a] })
                            * centers[a]
                    })
                    .sum();
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
            let idx: usize = (0..m).map(|a| col[a] * self.column_strides[a]).sum();
            self.columns[idx].push((vmin, vmax));

            let mut advanced = false;
            for a in (0..m).rev() {
                col[a] += 1;
                if col[a] <= col_hi[a] {
                    advanced = true;
                    break;
                }
                col[a] = col_lo[a];
            }
            if !advanced {
                break;
            }
        }
        Ok(())
    }

    /// Merge the per-column intervals and integrate.
    fn measure(mut self) -> f64 {
        let m = self.raster.dim - 1;
        let column_area: f64 = self.raster.spacing[..m].iter().product();
        let mut total = 0.0;
        for intervals in self.columns.iter_mut() {
            if intervals.is_empty() {
                continue;
            }
            intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite endpoints"));
            let mut covered = 0.0;
            let (mut lo, mut hi) = intervals[0];
            for &(a, b) in intervals.iter().skip(1) {
                if a > hi {
                    covered += hi - lo;
                    lo = a;
                    hi = b;
                } else {
                    hi = hi.max(b);
                }
            }
            covered += hi - lo;
            total += covered * column_area;
        }
        total
    }
}

/// Measure of the image of the tower's (s, u) domain under
/// (s, u) -> (u, s.u), with the ratio against the inflation-bound scale.
/// The raster discretizes the u-plane; the last axis only bounds the image.
pub fn phi_image_measure(tower: &TowerData, raster: &GridGeometry) -> Result<PhiImageReport> {
    let d = raster.dim;
    let s_h = tower.omega1.geometry().spacing.clone();
    let mut acc = PhiAccumulator::new(raster);
    for (slin, fiber) in &tower.fibers {
        let s = tower.omega1.geometry().center_of_linear(*slin);
        let u_h = fiber.geometry().spacing.clone();
        for ulin in fiber.occupied_linear() {
            let u = fiber.geometry().center_of_linear(ulin);
            acc.add_cell(&s, &u, &s_h, &u_h)?;
        }
    }
    let measure = acc.measure();
    let dd = d as f64;
    let scale = tower.alpha_star.powf(dd / (dd - 1.0)) * tower.alpha.powf(1.0 / (dd - 1.0));
    Ok(PhiImageReport { measure, ratio: if scale > 0.0 { measure / scale } else { 0.0 } })
}

/// A raster geometry that encloses the tower's product-map image.
pub fn default_phi_raster(tower: &TowerData, cells_per_axis: usize) -> Result<GridGeometry> {
    let m = tower.omega1.dim();
    let h = tower.omega1.geometry().spacing[0];
    let mut lo = vec![f64::INFINITY; m + 1];
    let mut hi = vec![f64::NEG_INFINITY; m + 1];
    for (slin, fiber) in &tower.fibers {
        let s = tower.omega1.geometry().center_of_linear(*slin);
        for ulin in fiber.occupied_linear() {
            let u = fiber.geometry().center_of_linear(ulin);
            for a in 0..m {
                lo[a] = lo[a].min(u[a]);
                hi[a] = hi[a].max(u[a]);
            }
            let v = dot(&s, &u);
            lo[m] = lo[m].min(v);
            hi[m] = hi[m].max(v);
        }
    }
    if lo.iter().any(|v| !v.is_finite()) {
        return Err(Error::TowerFailed("empty tower image".into()));
    }
    let smax = tower
        .omega1
        .occupied_centers()
        .iter()
        .map(|s| s.iter().map(|c| c.abs()).fold(0.0f64, f64::max))
        .fold(0.0f64, f64::max);
    let umax = hi[..m].iter().zip(&lo[..m]).map(|(a, b)| a.abs().max(b.abs())).fold(0.0f64, f64::max);
    for (a, slot) in lo.iter_mut().enumerate() {
        let margin = if a == m {
            ((smax + umax) * h + h * h) * m as f64 + h
        } else {
            h
        };
        *slot -= margin;
        hi[a] += margin;
    }
    GridGeometry::over_box(&lo, &hi, &vec![cells_per_axis; m + 1])
}

/// The slicing inequality data: omega lives in R^(2m) with coordinates
/// (s, u), its s-marginal must lie in A(unit ball), and the return is
/// (rasterized |Phi(omega)|, |det A|^(-1) * integral of |A u| over omega).
pub fn slicing_bound(
    omega: &GridSet,
    a: &SquareMatrix,
    raster: &GridGeometry,
) -> Result<(f64, f64)> {
    let dim = omega.dim();
    if dim % 2 != 0 {
        return Err(Error::InvalidGeometry("omega must live in R^(2(d-1))".into()));
    }
    let m = dim / 2;
    if a.n != m {
        return Err(Error::InvalidGeometry("A must act on the s-coordinates".into()));
    }
    if a.asymmetry() > 1e-9 {
        return Err(Error::InvalidGeometry("A must be symmetric".into()));
    }
    let a_inv = a.inverse()?;
    if omega.occupied_count() == 0 {
        return Ok((0.0, 0.0));
    }

    let centers = omega.occupied_centers();
    for c in &centers {
        let s = &c[..m];
        let pre = a_inv.apply(s);
        let r2: f64 = pre.iter().map(|v| v * v).sum();
        if r2 > 1.0 + 1e-9 {
            return Err(Error::HypothesisViolated(format!(
                "s-marginal point {s:?} lies outside A(unit ball): |A^-1 s| = {}",
                r2.sqrt()
            )));
        }
    }

    let (s_h, u_h) = omega.geometry().spacing.split_at(m);
    let mut acc = PhiAccumulator::new(raster);
    let vol = omega.geometry().voxel_volume();
    let mut rhs = 0.0;
    for c in &centers {
        let (s, u) = c.split_at(m);
        acc.add_cell(s, u, s_h, u_h)?;
        let au = a.apply(u);
        rhs += au.iter().map(|v| v * v).sum::<f64>().sqrt() * vol;
    }
    Ok((acc.measure(), rhs / a.det().abs()))
}

/// Consistency helper used by suites: the transpose total on the same
/// lattice the tower uses.
pub fn incidence_total(e: &GridSet, estar: &GridSet, q: &QuadratureSpec) -> Result<f64> {
    bilinear_transpose(e, estar, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balls::{envelope, unit_ball};
    use crate::grid::unit_cube;

    #[test]
    fn tower_rejects_disjoint_pair() {
        let e = unit_cube(2, 16);
        let estar = GridSet::rasterize(
            GridGeometry::over_box(&[0.0, 4.0], &[1.0, 5.0], &[16, 16]).unwrap(),
            |_| true,
        );
        let q = QuadratureSpec::auto(1.0 / 32.0);
        assert!(matches!(build_tower(&e, &estar, &q), Err(Error::NoIncidences)));
    }

    #[test]
    fn tower_on_unit_ball_envelope() {
        let b = unit_ball(2);
        let env = envelope(&b);
        let e = env.rasterize_e(48);
        let estar = env.rasterize_estar(48);
        let q = QuadratureSpec::auto(1.0 / 48.0);
        let tower = build_tower(&e, &estar, &q).unwrap();
        assert!(tower.alpha > 0.0 && tower.alpha_star > 0.0);
        assert!(
            tower.omega1_measure() >= KAPPA_1 * tower.alpha,
            "omega1 {} vs alpha {}",
            tower.omega1_measure(),
            tower.alpha
        );
        assert!(
            tower.fiber_measure() >= KAPPA_2 * tower.alpha_star * 0.999,
            "fiber {} vs alpha_star {}",
            tower.fiber_measure(),
            tower.alpha_star
        );
        // inclusion spot-check is exact on lattice points
        assert_eq!(check_tower_inclusions(&tower, &e, &estar, 1000, 3), 0);
        // all fibers share one measure after trimming
        for (_, f) in &tower.fibers {
            assert_eq!(f.occupied_count(), tower.fibers[0].1.occupied_count());
        }
    }

    #[test]
    fn phi_image_positive_and_stable() {
        let b = unit_ball(2);
        let env = envelope(&b);
        let e = env.rasterize_e(48);
        let estar = env.rasterize_estar(48);
        let q = QuadratureSpec::auto(1.0 / 48.0);
        let tower = build_tower(&e, &estar, &q).unwrap();
        let raster = default_phi_raster(&tower, 96).unwrap();
        let rep = phi_image_measure(&tower, &raster).unwrap();
        assert!(rep.measure > 0.0);
        let raster2 = default_phi_raster(&tower, 192).unwrap();
        let rep2 = phi_image_measure(&tower, &raster2).unwrap();
        assert!(
            (rep.measure - rep2.measure).abs() <= 0.05 * rep.measure.max(rep2.measure),
            "doubling the raster moved the measure too much: {} vs {}",
            rep.measure,
            rep2.measure
        );
    }

    #[test]
    fn empty_fibers_have_zero_image() {
        let sgeom = GridGeometry::over_box(&[-1.0], &[1.0], &[8]).unwrap();
        let tower = TowerData {
            base_point: crate::geom::SpacePoint::new(vec![0.0, 0.0]),
            omega1: GridSet::full(sgeom),
            fibers: Vec::new(),
            alpha: 1.0,
            alpha_star: 1.0,
        };
        let raster = GridGeometry::over_box(&[-1.0, -1.0], &[1.0, 1.0], &[16, 16]).unwrap();
        let rep = phi_image_measure(&tower, &raster).unwrap();
        assert_eq!(rep.measure, 0.0);
    }

    #[test]
    fn slicing_closed_form_square() {
        // omega = [0,1]^2, A = identity: Phi(omega) is the triangle
        // {0 <= v <= u <= 1} of area 1/2; the right side is also 1/2.
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[128, 128]).unwrap();
        let omega = GridSet::full(geom);
        let a = SquareMatrix::identity(1);
        let raster = GridGeometry::over_box(&[-0.05, -0.05], &[1.05, 1.05], &[220, 220]).unwrap();
        let (lhs, rhs) = slicing_bound(&omega, &a, &raster).unwrap();
        assert!((lhs - 0.5).abs() < 0.02 * 0.5, "lhs {lhs}");
        assert!((rhs - 0.5).abs() < 0.02 * 0.5, "rhs {rhs}");
    }

    #[test]
    fn slicing_rejects_marginal_outside_ball() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[2.0, 1.0], &[32, 16]).unwrap();
        let omega = GridSet::full(geom);
        let a = SquareMatrix::identity(1);
        let raster = GridGeometry::over_box(&[-0.1, -0.1], &[2.2, 4.2], &[64, 64]).unwrap();
        assert!(matches!(
            slicing_bound(&omega, &a, &raster),
            Err(Error::HypothesisViolated(_))
        ));
    }

    #[test]
    fn slicing_empty_is_zero_zero() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let omega = GridSet::empty(geom);
        let a = SquareMatrix::identity(1);
        let raster = GridGeometry::over_box(&[-1.0, -1.0], &[1.0, 1.0], &[16, 16]).unwrap();
        assert_eq!(slicing_bound(&omega, &a, &raster).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn slicing_transformation_law() {
        // A = 2 id with omega scaled accordingly: both sides follow the
        // change of variables, so their ratio is unchanged.
        let geom1 = GridGeometry::over_box(&[-0.7, -1.0], &[0.7, 1.0], &[64, 64]).unwrap();
        let omega1 = GridSet::rasterize(geom1, |c| c[0].abs() < 0.7 && c[1].abs() < 1.0);
        let a1 = SquareMatrix::identity(1);
        let raster1 = GridGeometry::over_box(&[-1.1, -1.1], &[1.1, 1.1], &[160, 160]).unwrap();
        let (l1, r1) = slicing_bound(&omega1, &a1, &raster1).unwrap();

        // the image of omega1 under (s, u) -> (A s, A^(-1) u)
        let geom2 = GridGeometry::over_box(&[-1.4, -0.5], &[1.4, 0.5], &[128, 64]).unwrap();
        let omega2 = GridSet::rasterize(geom2, |c| c[0].abs() < 1.4 && c[1].abs() < 0.5);
        let a2 = SquareMatrix::new(1, vec![2.0]).unwrap();
        let raster2 = GridGeometry::over_box(&[-0.55, -0.75], &[0.55, 0.75], &[160, 160]).unwrap();
        let (l2, r2) = slicing_bound(&omega2, &a2, &raster2).unwrap();

        let ratio1 = l1 / r1;
        let ratio2 = l2 / r2;
        assert!(
            (ratio1 - ratio2).abs() < 0.05 * ratio1,
            "ratios {ratio1} vs {ratio2}"
        );
    }
}
