//! Balanced convex approximation by a halving stopping-time over slab
//! intersections, and the determinant-moment lower bound check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::dot;
use crate::grid::GridSet;
use crate::rng::CounterRng;

/// A symmetric slab {x : |<x, direction>| <= half_width}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub direction: Vec<f64>,
    pub half_width: f64,
}

/// A balanced convex set given as an intersection of symmetric slabs,
/// possibly recentered by `center_offset` (the unbalanced case).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexApprox {
    pub center_offset: Vec<f64>,
    pub slabs: Vec<Slab>,
    pub measure: f64,
    /// The achieved exclusion factor: every tested balanced convex subset
    /// of half measure misses at least this fraction of |S|.
    pub exclusion_constant: f64,
}

impl ConvexApprox {
    /// Membership relative to the offset center.
    pub fn contains(&self, p: &[f64]) -> bool {
        let rel: Vec<f64> = p.iter().zip(&self.center_offset).map(|(a, b)| a - b).collect();
        self.slabs.iter().all(|s| dot(&rel, &s.direction).abs() <= s.half_width * (1.0 + 1e-12))
    }

    /// Vertices of the slab-intersection polytope (centered coordinates).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.slabs[0].direction.len();
        match n {
            1 => {
                let w = slab_measure_1d(&self.slabs) / 2.0;
                vec![vec![-w], vec![w]]
            }
            2 => clip_polygon(&self.slabs),
            _ => Vec::new(),
        }
    }
}

fn slab_measure_1d(slabs: &[Slab]) -> f64 {
    let w = slabs
        .iter()
        .map(|s| s.half_width / s.direction[0].abs().max(1e-300))
        .fold(f64::INFINITY, f64::min);
    2.0 * w
}

/// Clip of a large square by every slab half-plane.
fn clip_polygon(slabs: &[Slab]) -> Vec<Vec<f64>> {
    let r = slabs.iter().map(|s| s.half_width).fold(1.0f64, f64::max) * 4.0;
    let mut poly = vec![vec![-r, -r], vec![r, -r], vec![r, r], vec![-r, r]];
    for s in slabs {
        poly = crate::geom::clip_halfplane(&poly, &s.direction, s.half_width);
        let neg: Vec<f64> = s.direction.iter().map(|v| -v).collect();
        poly = crate::geom::clip_halfplane(&poly, &neg, s.half_width);
    }
    poly
}

use crate::geom::polygon_area;

/// Lebesgue measure of the slab intersection; n = 3 falls back to a
/// deterministic Monte Carlo estimate.
pub fn slab_intersection_measure(slabs: &[Slab]) -> f64 {
    let n = slabs[0].direction.len();
    match n {
        1 => slab_measure_1d(slabs),
        2 => polygon_area(&clip_polygon(slabs)),
        _ => {
            let r: f64 = slabs.iter().map(|s| s.half_width).fold(0.0f64, f64::max);
            let mut rng = CounterRng::new(0x51AB, 0);
            let samples = 200_000;
            let mut hit = 0usize;
            let mut p = vec![0.0; n];
            for _ in 0..samples {
                for c in p.iter_mut() {
                    *c = rng.next_range(-r, r);
                }
                if slabs.iter().all(|s| dot(&p, &s.direction).abs() <= s.half_width) {
                    hit += 1;
                }
            }
            (2.0 * r).powi(n as i32) * hit as f64 / samples as f64
        }
    }
}

fn measure_with_scaled_slab(slabs: &[Slab], k: usize, factor: f64) -> f64 {
    let mut scaled = slabs.to_vec();
    scaled[k].half_width *= factor;
    slab_intersection_measure(&scaled)
}

/// The candidate directions of the search family: the coordinate axis in
/// n = 1, eight evenly spaced directions in n = 2.
pub fn candidate_directions(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0]],
        2 => (0..8)
            .map(|k| {
                let th = k as f64 * std::f64::consts::PI / 8.0;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => Vec::new(),
    }
}

fn mass_inside(points: &[Vec<f64>], slabs: &[Slab]) -> usize {
    points
        .iter()
        .filter(|p| slabs.iter().all(|s| dot(p, &s.direction).abs() <= s.half_width * (1.0 + 1e-12)))
        .count()
}

/// Balanced convex approximation of a voxel set by the halving
/// stopping-time: while some half-measure slab shrink retains a
/// (1 - c0 2^(-eta m)) fraction of the captured mass, descend.
pub fn convexify(s: &GridSet, eta: f64, balanced: bool) -> Result<ConvexApprox> {
    let n = s.dim();
    if n > 2 {
        return Err(Error::DimensionUnsupported(n));
    }
    if s.measure() <= 0.0 {
        return Err(Error::EmptySet("convexify requires measure(S) > 0".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::ConfigInvalid(format!("convexify eta must lie in (0,1), got {eta}")));
    }

    let centers = s.occupied_centers();
    let center_offset: Vec<f64> = if balanced {
        vec![0.0; n]
    } else {
        (0..n).map(|a| centers.iter().map(|c| c[a]).sum::<f64>() / centers.len() as f64).collect()
    };
    let points: Vec<Vec<f64>> = centers
        .iter()
        .map(|c| c.iter().zip(&center_offset).map(|(a, b)| a - b).collect())
        .collect();

    // initial candidate: the bounding slab intersection over the full family
    let spacing = s.geometry().spacing.clone();
    let mut slabs: Vec<Slab> = candidate_directions(n)
        .into_iter()
        .map(|direction| {
            let proj_half: f64 =
                direction.iter().zip(&spacing).map(|(d, h)| d.abs() * h / 2.0).sum();
            let w = points.iter().map(|p| dot(p, &direction).abs()).fold(0.0f64, f64::max);
            Slab { direction, half_width: w + proj_half }
        })
        .collect();

    let voxel = s.geometry().voxel_volume();
    let s_measure = s.measure();
    let mut c_measure = slab_intersection_measure(&slabs);
    let mut m = ((c_measure / s_measure).log2().ceil()).max(0.0);
    // stopping-time constant small enough that the infinite halving product
    // stays above 8/9, as in the lemma's proof
    let c0 = (1.0 - (-eta).exp2()) * (9.0f64 / 8.0).ln() / 2.0;

    let mut captured = mass_inside(&points, &slabs);
    let mut guard = 0;
    loop {
        guard += 1;
        if guard > 200 || m < -5.0 {
            break;
        }
        let threshold = 1.0 - c0 * (-eta * m).exp2();
        let mut best: Option<(usize, f64, usize)> = None; // (slab index, factor, mass)
        for k in 0..slabs.len() {
            // bisect the shrink factor to half measure
            let target = c_measure / 2.0;
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if measure_with_scaled_slab(&slabs, k, mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let factor = 0.5 * (lo + hi);
            let mut trial = slabs.clone();
            trial[k].half_width *= factor;
            let mass = mass_inside(&points, &trial);
            if best.as_ref().map(|b| mass > b.2).unwrap_or(true) {
                best = Some((k, factor, mass));
            }
        }
        let (k, factor, mass) = best.expect("candidate family is nonempty");
        if (mass as f64) >= threshold * captured as f64 && captured > 0 {
            slabs[k].half_width *= factor;
            c_measure = slab_intersection_measure(&slabs);
            captured = mass;
            m -= 1.0;
        } else {
            break;
        }
    }

    let exclusion_constant =
        c0 * (-eta * m.max(0.0)).exp2() * (captured as f64 * voxel / s_measure);
    Ok(ConvexApprox { center_offset, slabs, measure: c_measure, exclusion_constant })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetMomentReport {
    pub estimate: f64,
    pub bound: f64,
    pub ok: bool,
    /// Whether the measure satisfied the slab-exclusion hypothesis on the
    /// spot-checked family.
    pub hypothesis_ok: bool,
    pub worst_direction: Option<Vec<f64>>,
    pub worst_exclusion: f64,
}

/// Frozen lower-bound constants for the determinant moment, per dimension
/// n (index 0 unused). Established by the calibrate run.
pub fn default_det_moment_constant(n: usize) -> f64 {
    match n {
        1 => 0.25,
        2 => 0.05,
        _ => 0.01,
    }
}

/// Monte Carlo check of the determinant-moment inequality: the n-fold
/// integral of |det(u_1..u_n)| against mu is at least c delta^n lambda^n
/// |C| when mu gives mass >= lambda outside every balanced convex subset
/// of measure <= delta |C|. Uses the frozen per-dimension constant.
pub fn det_moment(
    mu_points: &[(Vec<f64>, f64)],
    c: &ConvexApprox,
    delta: f64,
    lambda_val: f64,
    seed: u64,
    m_samples: usize,
) -> Result<DetMomentReport> {
    let n = mu_points.first().map(|(p, _)| p.len()).unwrap_or(0);
    det_moment_with(mu_points, c, delta, lambda_val, seed, m_samples, default_det_moment_constant(n))
}

#[allow(clippy::too_many_arguments)]
pub fn det_moment_with(
    mu_points: &[(Vec<f64>, f64)],
    c: &ConvexApprox,
    delta: f64,
    lambda_val: f64,
    seed: u64,
    m_samples: usize,
    bound_constant: f64,
) -> Result<DetMomentReport> {
    if mu_points.is_empty() {
        return Err(Error::EmptySet("det_moment requires a nonempty measure".into()));
    }
    let n = mu_points[0].0.len();
    if n > 3 {
        return Err(Error::UnsupportedDimension(n));
    }

    // hypothesis spot-check over the slab family of C
    let centered: Vec<(Vec<f64>, f64)> = mu_points
        .iter()
        .map(|(p, w)| {
            (p.iter().zip(&c.center_offset).map(|(a, b)| a - b).collect(), *w)
        })
        .collect();
    let mut hypothesis_ok = true;
    let mut worst_direction = None;
    let mut worst_exclusion = f64::INFINITY;
    for slab in &c.slabs {
        // width with |C'| = delta |C|, by bisection
        let (mut lo, mut hi) = (0.0f64, slab.half_width);
        let target = delta * c.measure;
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            let mut trial = c.slabs.clone();
            for t in trial.iter_mut() {
                if t.direction == slab.direction {
                    t.half_width = mid;
                }
            }
            if slab_intersection_measure(&trial) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = 0.5 * (lo + hi);
        let outside: f64 = centered
            .iter()
            .filter(|(p, _)| dot(p, &slab.direction).abs() > w)
            .map(|(_, wt)| wt)
            .sum();
        if outside < worst_exclusion {
            worst_exclusion = outside;
            worst_direction = Some(slab.direction.clone());
        }
        if outside < lambda_val * (1.0 - 1e-9) {
            hypothesis_ok = false;
        }
    }

    // Monte Carlo n-fold determinant moment
    let total: f64 = mu_points.iter().map(|(_, w)| w).sum();
    let mut cumulative = Vec::with_capacity(mu_points.len());
    let mut acc = 0.0;
    for (_, w) in mu_points {
        acc += w;
        cumulative.push(acc);
    }
    let mut rng = CounterRng::new(seed, 5);
    let mut sum = 0.0f64;
    for _ in 0..m_samples {
        let mut mat = vec![0.0; n * n];
        for row in 0..n {
            let u = rng.next_f64() * total;
            let idx = cumulative.partition_point(|&cv| cv < u).min(mu_points.len() - 1);
            for col in 0..n {
                mat[row * n + col] = centered[idx].0[col];
            }
        }
        sum += crate::geom::SquareMatrix::new(n, mat)?.det().abs();
    }
    let estimate = sum / m_samples as f64 * total.powi(n as i32);
    let bound = bound_constant * delta.powi(n as i32) * lambda_val.powi(n as i32) * c.measure;
    Ok(DetMomentReport {
        estimate,
        bound,
        ok: estimate >= bound,
        hypothesis_ok,
        worst_direction,
        worst_exclusion,
    })
}

/// The discrete measure carried by a voxel set: (center, voxel volume)
/// per occupied voxel.
pub fn grid_measure_points(s: &GridSet) -> Vec<(Vec<f64>, f64)> {
    let vol = s.geometry().voxel_volume();
    s.occupied_centers().into_iter().map(|c| (c, vol)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;

    fn interval_set(lo: f64, hi: f64, cells: usize) -> GridSet {
        let geom = GridGeometry::over_box(&[lo], &[hi], &[cells]).unwrap();
        GridSet::full(geom)
    }

    #[test]
    fn symmetric_interval_stays_small() {
        // S = [-1,1]: C within a factor 4 of |S| and exclusion >= c0/2
        let s = interval_set(-1.0, 1.0, 256);
        let c = convexify(&s, 0.5, true).unwrap();
        assert!(c.measure <= 4.0 * s.measure(), "measure {}", c.measure);
        assert!(c.measure >= s.measure() * 0.9);
        let c0 = (1.0 - 0.5f64.exp2().recip()) * (9.0f64 / 8.0).ln() / 2.0;
        assert!(c.exclusion_constant >= c0 / 2.0 * 0.9, "{}", c.exclusion_constant);
        // post-hoc against the exhaustive 1-d family: the half-measure
        // balanced subinterval [-a/2, a/2]
        let w = c.measure / 2.0;
        let pts = s.occupied_centers();
        let outside = pts.iter().filter(|p| p[0].abs() > w / 2.0).count() as f64
            * s.geometry().voxel_volume();
        assert!(outside >= c.exclusion_constant * s.measure() * 0.99);
    }

    #[test]
    fn two_far_clumps_pin_the_interval() {
        // S = [-8.5,-8] union [8,8.5]: halving the bounding interval loses
        // everything, so the stopping time halts immediately and C covers S.
        let geom = GridGeometry::over_box(&[-8.5], &[8.5], &[340]).unwrap();
        let s = GridSet::rasterize(geom, |c| c[0].abs() >= 8.0);
        assert!((s.measure() - 1.0).abs() < 0.02);
        let c = convexify(&s, 0.5, true).unwrap();
        assert!(c.measure >= s.measure());
        assert!(c.measure >= 16.0, "bounding interval should be kept, got {}", c.measure);
        // exclusion against every half-measure symmetric subinterval: the
        // outer mass is pinned at the ends
        let half = c.measure / 2.0;
        let pts = s.occupied_centers();
        let outside = pts.iter().filter(|p| p[0].abs() > half / 2.0).count() as f64
            * s.geometry().voxel_volume();
        assert!(outside >= s.measure() * 0.99);
    }

    #[test]
    fn balanced_disk_keeps_constant_factor() {
        let geom = GridGeometry::over_box(&[-1.0, -1.0], &[1.0, 1.0], &[96, 96]).unwrap();
        let s = GridSet::rasterize(geom, |c| c[0] * c[0] + c[1] * c[1] < 1.0);
        let c = convexify(&s, 0.5, true).unwrap();
        assert!(c.measure <= 4.0 * s.measure(), "|C| = {}, |S| = {}", c.measure, s.measure());
        assert!(c.measure >= 0.9 * s.measure());
    }

    #[test]
    fn unbalanced_offset_recenters() {
        let geom = GridGeometry::over_box(&[4.0], &[6.0], &[128]).unwrap();
        let s = GridSet::full(geom);
        let c = convexify(&s, 0.5, false).unwrap();
        assert!((c.center_offset[0] - 5.0).abs() < 0.02);
        assert!(c.measure <= 4.0 * s.measure());
    }

    #[test]
    fn polygon_area_of_square() {
        let slabs = vec![
            Slab { direction: vec![1.0, 0.0], half_width: 1.0 },
            Slab { direction: vec![0.0, 1.0], half_width: 2.0 },
        ];
        assert!((slab_intersection_measure(&slabs) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn det_moment_lebesgue_interval_is_one() {
        // n = 1, mu Lebesgue on [-1,1]: integral of |u| d mu = 1
        let s = interval_set(-1.0, 1.0, 2048);
        let mu = grid_measure_points(&s);
        let c = convexify(&s, 0.5, true).unwrap();
        let r = det_moment(&mu, &c, 0.25, 0.5, 9, 200_000).unwrap();
        // 3 sigma of the MC mean: sd(|u|) = sqrt(1/3 - 1/4) ~ 0.288 on the
        // normalized draw, scaled by total mass 2
        let sigma3 = 3.0 * 0.29 * 2.0 / (200_000f64).sqrt();
        assert!((r.estimate - 1.0).abs() < sigma3 + 0.01, "estimate {}", r.estimate);
        assert!(r.ok);
    }

    #[test]
    fn det_moment_flags_concentrated_measure() {
        // mu concentrated on a thin slab violates the exclusion hypothesis
        let geom = GridGeometry::over_box(&[-1.0, -1.0], &[1.0, 1.0], &[64, 64]).unwrap();
        let strip = GridSet::rasterize(geom.clone(), |c| c[1].abs() < 0.02);
        let mu = grid_measure_points(&strip);
        let disk = GridSet::rasterize(geom, |c| c[0] * c[0] + c[1] * c[1] < 1.0);
        let c = convexify(&disk, 0.5, true).unwrap();
        let r = det_moment(&mu, &c, 0.2, 0.5 * strip.measure(), 10, 20_000).unwrap();
        assert!(!r.hypothesis_ok);
    }

    #[test]
    fn det_moment_rejects_high_dimension() {
        let mu = vec![(vec![0.0; 4], 1.0)];
        let c = ConvexApprox {
            center_offset: vec![0.0; 4],
            slabs: vec![Slab { direction: vec![1.0, 0.0, 0.0, 0.0], half_width: 1.0 }],
            measure: 1.0,
            exclusion_constant: 0.1,
        };
        assert!(matches!(
            det_moment(&mu, &c, 0.5, 0.1, 1, 10),
            Err(Error::UnsupportedDimension(4))
        ));
    }

    #[test]
    fn convexify_rejects_unsupported_dimension() {
        let geom = GridGeometry::over_box(&[0.0; 3], &[1.0; 3], &[4, 4, 4]).unwrap();
        let s = GridSet::full(geom);
        assert!(matches!(convexify(&s, 0.5, true), Err(Error::DimensionUnsupported(3))));
    }

    #[test]
    fn convexify_rejects_empty() {
        let geom = GridGeometry::over_box(&[0.0], &[1.0], &[4]).unwrap();
        let s = GridSet::empty(geom);
        assert!(matches!(convexify(&s, 0.5, true), Err(Error::EmptySet(_))));
    }
}
