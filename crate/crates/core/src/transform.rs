//! The parabolic averaging operator, its localized variant, the bilinear
//! incidence functional on pairs of sets, quasiextremality scores, and the
//! trilinear / flatness diagnostics built on top of them.
//!
//! All quadratures are Riemann sums over an absolute t-lattice with step
//! `t_resolution`: t = (k + 1/2) * h componentwise, k integer. Points where
//! the integrand vanishes contribute exact zeros, so truncating the lattice
//! to the support box changes nothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridGeometry, GridSet};
use crate::rng::{draw_f64, draw_u64};

pub const QUADRATURE_REL_TOL: f64 = 0.02;
pub const MC_SIGMA: f64 = 3.0;

/// Truncation rule for the t-integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TBound {
    /// Derived from bounding boxes: for output point x the t-box is the
    /// Minkowski difference of x' with the integrand's primed support box,
    /// expanded by one t_resolution.
    Auto,
    /// Hard Euclidean radius |t| <= bound.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub t_resolution: f64,
    pub t_bound: TBound,
}

impl QuadratureSpec {
    pub fn auto(t_resolution: f64) -> Self {
        QuadratureSpec { t_resolution, t_bound: TBound::Auto }
    }
}

impl Serialize for QuadratureSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("QuadratureSpec", 2)?;
        st.serialize_field("t_resolution", &self.t_resolution)?;
        match self.t_bound {
            TBound::Auto => st.serialize_field("t_bound", "auto")?,
            TBound::Fixed(b) => st.serialize_field("t_bound", &b)?,
        }
        st.end()
    }
}

impl<'de> Deserialize<'de> for QuadratureSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            t_resolution: f64,
            #[serde(default)]
            t_bound: Option<serde_json::Value>,
        }
        let raw = Raw::deserialize(d)?;
        if !(raw.t_resolution > 0.0) {
            return Err(serde::de::Error::custom("t_resolution must be positive"));
        }
        let t_bound = match raw.t_bound {
            None => TBound::Auto,
            Some(serde_json::Value::String(s)) if s == "auto" => TBound::Auto,
            Some(serde_json::Value::Number(n)) => {
                let b = n.as_f64().ok_or_else(|| serde::de::Error::custom("bad t_bound"))?;
                if !(b > 0.0) {
                    return Err(serde::de::Error::custom("t_bound must be positive"));
                }
                TBound::Fixed(b)
            }
            Some(_) => return Err(serde::de::Error::custom("t_bound must be \"auto\" or a positive real")),
        };
        Ok(QuadratureSpec { t_resolution: raw.t_resolution, t_bound })
    }
}

/// Incidence score of an ordered pair of sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    /// The bilinear functional value.
    pub incidence: f64,
    /// incidence / |E|.
    pub alpha: f64,
    /// incidence / |E*|.
    pub alpha_star: f64,
    /// incidence / (|E| |E*|)^(d/(d+1)).
    pub epsilon: f64,
}

fn min_spacing(geom: &GridGeometry) -> f64 {
    geom.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn check_resolution(q: &QuadratureSpec, geom: &GridGeometry) -> Result<()> {
    let min = min_spacing(geom);
    if q.t_resolution > min {
        return Err(Error::ResolutionTooCoarse { t_resolution: q.t_resolution, min_spacing: min });
    }
    Ok(())
}

/// Inclusive lattice index range with t = (k + 1/2) h covering
/// [lo - h, hi + h].
#[inline]
pub(crate) fn lattice_range(lo: f64, hi: f64, h: f64) -> (i64, i64) {
    let k_lo = ((lo - h) / h - 0.5).ceil() as i64;
    let k_hi = ((hi + h) / h - 0.5).floor() as i64;
    (k_lo, k_hi)
}

/// Riemann sum of `eval((x' - t, x_d - |t|^2))` over the t-lattice for one
/// output point. `support` is the integrand's support box; it only prunes
/// lattice points whose integrand provably vanishes.
pub(crate) fn integrate_t<F: Fn(&[f64]) -> f64>(
    x: &[f64],
    support: (&[f64], &[f64]),
    q: &QuadratureSpec,
    localized: bool,
    eval: F,
) -> f64 {
    let d = x.len();
    let m = d - 1;
    let h = q.t_resolution;
    let (flo, fhi) = support;
    let x_d = x[d - 1];

    // |t|^2 window implied by the last-axis support.
    let rmax_sq = x_d - flo[d - 1];
    if rmax_sq < 0.0 {
        return 0.0;
    }
    let rmin_sq = x_d - fhi[d - 1];
    let cap_sq = match (localized, q.t_bound) {
        (true, TBound::Fixed(b)) => (b * b).min(1.0),
        (true, TBound::Auto) => 1.0,
        (false, TBound::Fixed(b)) => b * b,
        (false, TBound::Auto) => f64::INFINITY,
    };

    let mut acc = 0.0f64;
    match m {
        1 => {
            let (mut k_lo, mut k_hi) = lattice_range(x[0] - fhi[0], x[0] - flo[0], h);
            if let TBound::Fixed(b) = q.t_bound {
                let (c_lo, c_hi) = lattice_range(-b, b, h);
                k_lo = k_lo.max(c_lo);
                k_hi = k_hi.min(c_hi);
            }
            let mut p = [0.0f64; 2];
            for k in k_lo..=k_hi {
                let t = (k as f64 + 0.5) * h;
                let tsq = t * t;
                if tsq > rmax_sq || tsq < rmin_sq || tsq > cap_sq {
                    continue;
                }
                p[0] = x[0] - t;
                p[1] = x_d - tsq;
                acc += eval(&p);
            }
        }
        2 => {
            let mut ranges = [(0i64, 0i64); 2];
            for a in 0..2 {
                let (mut k_lo, mut k_hi) = lattice_range(x[a] - fhi[a], x[a] - flo[a], h);
                if let TBound::Fixed(b) = q.t_bound {
                    let (c_lo, c_hi) = lattice_range(-b, b, h);
                    k_lo = k_lo.max(c_lo);
                    k_hi = k_hi.min(c_hi);
                }
                ranges[a] = (k_lo, k_hi);
            }
            let mut p = [0.0f64; 3];
            for k0 in ranges[0].0..=ranges[0].1 {
                let t0 = (k0 as f64 + 0.5) * h;
                let t0sq = t0 * t0;
                if t0sq > rmax_sq || t0sq > cap_sq {
                    continue;
                }
                for k1 in ranges[1].0..=ranges[1].1 {
                    let t1 = (k1 as f64 + 0.5) * h;
                    let tsq = t0sq + t1 * t1;
                    if tsq > rmax_sq || tsq < rmin_sq || tsq > cap_sq {
                        continue;
                    }
                    p[0] = x[0] - t0;
                    p[1] = x[1] - t1;
                    p[2] = x_d - tsq;
                    acc += eval(&p);
                }
            }
        }
        _ => panic!("transform quadrature supports d in {{2, 3}}, got d = {d}"),
    }
    acc * h.powi(m as i32)
}

/// T f (or the localized T_0 f) sampled at the voxel centers of `out`.
pub fn apply_t(
    f: &GridFunction,
    out: &GridGeometry,
    q: &QuadratureSpec,
    localized: bool,
) -> Result<GridFunction> {
    check_resolution(q, f.geometry())?;
    if out.dim != f.geometry().dim {
        return Err(Error::InvalidGeometry(format!(
            "output dim {} does not match input dim {}",
            out.dim,
            f.geometry().dim
        )));
    }
    let support = match f.support_bbox() {
        Some(b) => b,
        None => return Ok(GridFunction::zero(out.clone())),
    };
    let n = out.len();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|linear| {
            let x = out.center_of_linear(linear);
            integrate_t(&x, (&support.0, &support.1), q, localized, |p| f.value_at(p))
        })
        .collect();
    GridFunction::new(out.clone(), values)
}

fn bilinear_impl(e: &GridSet, estar: &GridSet, q: &QuadratureSpec, localized: bool) -> Result<f64> {
    if e.dim() != estar.dim() {
        return Err(Error::InvalidGeometry("set dimensions disagree".into()));
    }
    if e.occupied_count() == 0 || estar.occupied_count() == 0 {
        return Ok(0.0);
    }
    check_resolution(q, estar.geometry())?;
    let support = estar.occupied_bbox().expect("nonempty set has a bbox");
    let occupied = e.occupied_linear();
    let cell = e.geometry().voxel_volume();
    let per_voxel: Vec<f64> = occupied
        .par_iter()
        .map(|&linear| {
            let x = e.geometry().center_of_linear(linear);
            integrate_t(&x, (&support.0, &support.1), q, localized, |p| {
                if estar.contains(p) {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect();
    Ok(per_voxel.iter().sum::<f64>() * cell)
}

/// The incidence functional: integral over E of T(chi_{E*}).
pub fn bilinear(e: &GridSet, estar: &GridSet, q: &QuadratureSpec) -> Result<f64> {
    bilinear_impl(e, estar, q, false)
}

/// Localized variant built on T_0 (|t| <= 1).
pub fn bilinear_t0(e: &GridSet, estar: &GridSet, q: &QuadratureSpec) -> Result<f64> {
    bilinear_impl(e, estar, q, true)
}

/// Measure of {t : (x' - t, x_d - |t|^2) in set}, the forward pullback
/// count at one point.
pub(crate) fn forward_count(set: &GridSet, x: &[f64], q: &QuadratureSpec) -> f64 {
    let support = match set.occupied_bbox() {
        Some(b) => b,
        None => return 0.0,
    };
    integrate_t(x, (&support.0, &support.1), q, false, |p| {
        if set.contains(p) {
            1.0
        } else {
            0.0
        }
    })
}

/// Localized variant of the forward pullback count (|t| <= 1).
pub(crate) fn forward_count_t0(set: &GridSet, x: &[f64], q: &QuadratureSpec) -> f64 {
    let support = match set.occupied_bbox() {
        Some(b) => b,
        None => return 0.0,
    };
    integrate_t(x, (&support.0, &support.1), q, true, |p| {
        if set.contains(p) {
            1.0
        } else {
            0.0
        }
    })
}

/// Measure of {t : y + (t, |t|^2) in set}, the transpose pullback count at
/// one point, evaluated on the same lattice via a full spatial reflection.
pub(crate) fn transpose_count(set: &GridSet, y: &[f64], q: &QuadratureSpec) -> f64 {
    let d = y.len();
    let (elo, ehi) = match set.occupied_bbox() {
        Some(b) => b,
        None => return 0.0,
    };
    let rlo: Vec<f64> = ehi.iter().map(|c| -c).collect();
    let rhi: Vec<f64> = elo.iter().map(|c| -c).collect();
    let xr: Vec<f64> = y.iter().map(|c| -c).collect();
    integrate_t(&xr, (&rlo, &rhi), q, false, |p| {
        // p = (-y' - t, -y_d - |t|^2); undo the reflection
        let mut orig = [0.0f64; 3];
        for a in 0..d {
            orig[a] = -p[a];
        }
        if set.contains(&orig[..d]) {
            1.0
        } else {
            0.0
        }
    })
}

/// Transpose-route evaluation: integral over E* of the pullback count
/// |{t : y + (t,|t|^2) in E}|. Agrees with `bilinear` up to quadrature
/// error; the pair brackets discretization error.
pub fn bilinear_transpose(e: &GridSet, estar: &GridSet, q: &QuadratureSpec) -> Result<f64> {
    if e.dim() != estar.dim() {
        return Err(Error::InvalidGeometry("set dimensions disagree".into()));
    }
    if e.occupied_count() == 0 || estar.occupied_count() == 0 {
        return Ok(0.0);
    }
    check_resolution(q, e.geometry())?;
    let occupied = estar.occupied_linear();
    let cell = estar.geometry().voxel_volume();
    let per_voxel: Vec<f64> = occupied
        .par_iter()
        .map(|&linear| {
            let y = estar.geometry().center_of_linear(linear);
            transpose_count(e, &y, q)
        })
        .collect();
    Ok(per_voxel.iter().sum::<f64>() * cell)
}

/// Unbiased Monte Carlo estimate of the bilinear functional with its
/// standard error. Deterministic in `seed`; shards consume disjoint counter
/// ranges and reduce in block order.
pub fn bilinear_mc(e: &GridSet, estar: &GridSet, seed: u64, n: usize) -> Result<(f64, f64)> {
    if e.measure() <= 0.0 {
        return Err(Error::EmptySet("bilinear_mc requires measure(E) > 0".into()));
    }
    if n == 0 {
        return Err(Error::EmptySet("bilinear_mc requires n >= 1".into()));
    }
    let (slo, shi) = match estar.occupied_bbox() {
        Some(b) => b,
        None => return Ok((0.0, 0.0)),
    };
    let d = e.dim();
    let m = d - 1;
    // The t-box for a sample at x is the Minkowski difference of x' with the
    // E* primed support box; its widths do not depend on x.
    let widths: Vec<f64> = (0..m).map(|a| shi[a] - slo[a]).collect();
    let box_vol: f64 = widths.iter().product();
    let occupied = e.occupied_linear();
    let egeom = e.geometry().clone();
    let scale = e.measure() * box_vol;

    let block = 1usize << 16;
    let blocks = n.div_ceil(block);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * block;
            let stop = (start + block).min(n);
            let mut acc = 0u64;
            let mut p = [0.0f64; 3];
            for k in start..stop {
                let k64 = k as u64;
                // sample x uniform in E
                let voxel = occupied[(draw_u64(seed, 0, k64) % occupied.len() as u64) as usize];
                let idx = egeom.decode_index(voxel);
                let mut x = [0.0f64; 3];
                for a in 0..d {
                    let jitter = draw_f64(seed, 1, k64 * d as u64 + a as u64);
                    x[a] = egeom.origin[a] + (idx[a] as f64 + jitter) * egeom.spacing[a];
                }
                // sample t uniform in the Minkowski box for this x
                let mut tsq = 0.0f64;
                for a in 0..m {
                    let u = draw_f64(seed, 2, k64 * m as u64 + a as u64);
                    let t = (x[a] - shi[a]) + u * widths[a];
                    p[a] = x[a] - t;
                    tsq += t * t;
                }
                p[d - 1] = x[d - 1] - tsq;
                if estar.contains(&p[..d]) {
                    acc += 1;
                }
            }
            acc
        })
        .sum();

    let p_hat = hits as f64 / n as f64;
    let estimate = scale * p_hat;
    let var = if n > 1 {
        p_hat * (1.0 - p_hat) * n as f64 / (n as f64 - 1.0)
    } else {
        0.0
    };
    let stderr = scale * (var / n as f64).sqrt();
    Ok((estimate, stderr))
}

/// Quasiextremality score of an ordered pair.
pub fn score(e: &GridSet, estar: &GridSet, q: &QuadratureSpec) -> Result<ScorePair> {
    let me = e.measure();
    let ms = estar.measure();
    if me <= 0.0 || ms <= 0.0 {
        return Err(Error::EmptySet("score requires both measures positive".into()));
    }
    let incidence = bilinear(e, estar, q)?;
    let d = e.dim() as f64;
    let exp = d / (d + 1.0);
    Ok(ScorePair {
        incidence,
        alpha: incidence / me,
        alpha_star: incidence / ms,
        epsilon: incidence / (me.powf(exp) * ms.powf(exp)),
    })
}

/// Localized-score variant used by the Lambda_0 diagnostics.
pub fn score_t0(e: &GridSet, estar: &GridSet, q: &QuadratureSpec) -> Result<ScorePair> {
    let me = e.measure();
    let ms = estar.measure();
    if me <= 0.0 || ms <= 0.0 {
        return Err(Error::EmptySet("score requires both measures positive".into()));
    }
    let incidence = bilinear_t0(e, estar, q)?;
    let d = e.dim() as f64;
    let exp = d / (d + 1.0);
    Ok(ScorePair {
        incidence,
        alpha: incidence / me,
        alpha_star: incidence / ms,
        epsilon: incidence / (me.powf(exp) * ms.powf(exp)),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrilinearReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub hypothesis_ok: bool,
    /// Worst superlevel violator when the hypothesis fails.
    pub worst_point: Option<Vec<f64>>,
    pub worst_value: f64,
}

/// Check of the tower-route trilinear bound: with T(chi_E')(x) >= beta' on
/// G, the quantity (T(E,G)/|E|)^(1/(d-1)) beta'^(d/(d-1)) is controlled by
/// |E'|.
pub fn trilinear_check(
    e: &GridSet,
    eprime: &GridSet,
    g: &GridSet,
    beta_prime: f64,
    q: &QuadratureSpec,
) -> Result<TrilinearReport> {
    if e.measure() <= 0.0 || eprime.measure() <= 0.0 || g.measure() <= 0.0 {
        return Err(Error::EmptySet("trilinear_check requires positive measures".into()));
    }
    let d = e.dim() as f64;
    let support = eprime.occupied_bbox().expect("nonempty");
    let occupied = g.occupied_linear();
    let values: Vec<f64> = occupied
        .par_iter()
        .map(|&linear| {
            let x = g.geometry().center_of_linear(linear);
            integrate_t(&x, (&support.0, &support.1), q, false, |p| {
                if eprime.contains(p) {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect();
    let (mut worst_value, mut worst_at) = (f64::INFINITY, 0usize);
    for (i, &v) in values.iter().enumerate() {
        if v < worst_value {
            worst_value = v;
            worst_at = i;
        }
    }
    let hypothesis_ok = worst_value >= beta_prime;
    let worst_point = if hypothesis_ok {
        None
    } else {
        Some(g.geometry().center_of_linear(occupied[worst_at]))
    };

    let t_eg = bilinear(e, g, q)?;
    let lhs = (t_eg / e.measure()).powf(1.0 / (d - 1.0)) * beta_prime.powf(d / (d - 1.0));
    let rhs = eprime.measure();
    Ok(TrilinearReport { lhs, rhs, ratio: lhs / rhs, hypothesis_ok, worst_point, worst_value })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatnessReport {
    /// <T f, f*> / (||f|| ||f*||) with the (d+1)/d norms.
    pub ratio: f64,
    pub eta: f64,
    /// Largest 2^l |F_l|^(d/(d+1)) / ||f*|| over the levels of f*.
    pub max_level_mass: f64,
}

/// Flatness-gain probe: requires every dyadic level of f* to satisfy
/// 2^l |F_l|^(d/(d+1)) <= eta ||f*||, then reports the normalized pairing
/// for downstream fitting of the gain exponent.
pub fn flatness_gain(
    f: &GridFunction,
    fstar: &GridFunction,
    eta: f64,
    q: &QuadratureSpec,
) -> Result<FlatnessReport> {
    let d = f.geometry().dim as f64;
    let p = (d + 1.0) / d;
    let norm_star = fstar.lp_norm(p);
    if norm_star == 0.0 {
        return Ok(FlatnessReport { ratio: 0.0, eta, max_level_mass: 0.0 });
    }
    let levels = crate::lorentz::dyadic_levels(fstar);
    let mut max_level_mass = 0.0f64;
    for &(l, measure) in &levels {
        let value = (l as f64).exp2() * measure.powf(d / (d + 1.0));
        max_level_mass = max_level_mass.max(value / norm_star);
        // boundary case 2^l |F_l|^(d/(d+1)) = eta ||f*|| is accepted
        if value > eta * norm_star * (1.0 + 1e-9) {
            return Err(Error::FlatnessViolated { level: l, value, bound: eta * norm_star });
        }
    }
    let norm_f = f.lp_norm(p);
    if norm_f == 0.0 {
        return Ok(FlatnessReport { ratio: 0.0, eta, max_level_mass });
    }
    let tf = apply_t(f, fstar.geometry(), q, false)?;
    let vol = fstar.geometry().voxel_volume();
    let pairing: f64 = tf
        .values()
        .iter()
        .zip(fstar.values())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * vol;
    Ok(FlatnessReport { ratio: pairing / (norm_f * norm_star), eta, max_level_mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::unit_cube;

    fn q(h: f64) -> QuadratureSpec {
        QuadratureSpec::auto(h)
    }

    #[test]
    fn apply_t_of_zero_is_zero() {
        let geom = GridGeometry::over_box(&[-1.0, -1.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let f = GridFunction::zero(geom.clone());
        let out = apply_t(&f, &geom, &q(0.05), false).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    /// Exact 1-d oracle for T(chi_R)(x) with R = [a0,b0] x [a1,b1] in d = 2:
    /// measure of {t : x0 - t in [a0,b0], x1 - t^2 in [a1,b1]}, computed by
    /// interval arithmetic.
    fn t_box_oracle(x: [f64; 2], r: [[f64; 2]; 2]) -> f64 {
        let box_t = [x[0] - r[0][1], x[0] - r[0][0]];
        // x1 - t^2 in [a1, b1]  <=>  t^2 in [x1 - b1, x1 - a1]
        let s_lo = x[1] - r[1][1];
        let s_hi = x[1] - r[1][0];
        if s_hi < 0.0 {
            return 0.0;
        }
        let r_hi = s_hi.sqrt();
        let r_lo = s_lo.max(0.0).sqrt();
        // annulus in t: [-r_hi, -r_lo] union [r_lo, r_hi]
        let seg = |lo: f64, hi: f64| -> f64 {
            let l = lo.max(box_t[0]);
            let h = hi.min(box_t[1]);
            (h - l).max(0.0)
        };
        seg(-r_hi, -r_lo) + seg(r_lo, r_hi)
    }

    #[test]
    fn apply_t_matches_interval_oracle_on_box() {
        // f = indicator of [-1,1] x [-1,0], x = (0,0): the t-set is [-1,1],
        // measure 2 by the oracle.
        assert!((t_box_oracle([0.0, 0.0], [[-1.0, 1.0], [-1.0, 0.0]]) - 2.0).abs() < 1e-15);

        let geom = GridGeometry::over_box(&[-1.0, -1.0], &[1.0, 0.0], &[256, 128]).unwrap();
        let f = GridFunction::indicator(&GridSet::full(geom), 1.0);
        let out_geom = GridGeometry::over_box(&[-0.05, -0.05], &[0.05, 0.05], &[1, 1]).unwrap();
        let out = apply_t(&f, &out_geom, &q(1.0 / 512.0), false).unwrap();
        let got = out.values()[0];
        // evaluated at the voxel center (0,0)
        assert!((got - 2.0).abs() < 0.02 * 2.0, "got {got}");

        // a couple of off-center probes against the oracle
        for &x in &[[0.3, -0.2], [-0.4, 0.7], [0.9, 0.4]] {
            let want = t_box_oracle(x, [[-1.0, 1.0], [-1.0, 0.0]]);
            let og = GridGeometry::over_box(&[x[0] - 0.01, x[1] - 0.01], &[x[0] + 0.01, x[1] + 0.01], &[1, 1])
                .unwrap();
            let got = apply_t(&f, &og, &q(1.0 / 512.0), false).unwrap().values()[0];
            assert!((got - want).abs() < 0.02 * want.max(0.3), "x={x:?} got {got} want {want}");
        }
    }

    #[test]
    fn apply_t_rejects_coarse_resolution() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[64, 64]).unwrap();
        let f = GridFunction::indicator(&GridSet::full(geom.clone()), 1.0);
        let r = apply_t(&f, &geom, &q(0.5), false);
        assert!(matches!(r, Err(Error::ResolutionTooCoarse { .. })));
    }

    #[test]
    fn apply_t_linearity() {
        let geom = GridGeometry::over_box(&[-1.0, -1.0], &[1.0, 1.0], &[32, 32]).unwrap();
        let fa = GridFunction::new(
            geom.clone(),
            (0..geom.len()).map(|i| (i % 5) as f64).collect(),
        )
        .unwrap();
        let fb = GridFunction::new(
            geom.clone(),
            (0..geom.len()).map(|i| ((i * 7) % 3) as f64).collect(),
        )
        .unwrap();
        let (a, b) = (2.0, 0.5);
        let combo = GridFunction::new(
            geom.clone(),
            fa.values().iter().zip(fb.values()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let out_geom = GridGeometry::over_box(&[-0.5, -0.5], &[0.5, 0.5], &[8, 8]).unwrap();
        let qq = q(1.0 / 64.0);
        let t_combo = apply_t(&combo, &out_geom, &qq, false).unwrap();
        let t_a = apply_t(&fa, &out_geom, &qq, false).unwrap();
        let t_b = apply_t(&fb, &out_geom, &qq, false).unwrap();
        for i in 0..t_combo.values().len() {
            let want = a * t_a.values()[i] + b * t_b.values()[i];
            let got = t_combo.values()[i];
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "voxel {i}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn bilinear_empty_is_zero() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let e = GridSet::empty(geom.clone());
        let estar = GridSet::full(geom);
        assert_eq!(bilinear(&e, &estar, &q(0.05)).unwrap(), 0.0);
    }

    #[test]
    fn bilinear_respects_downward_parabola() {
        // E in {x_d in [0,1]}, E* in {x_d in [2,3]}: incidences force
        // x*_d <= x_d, so the functional vanishes identically.
        let ge = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[16, 16]).unwrap();
        let gs = GridGeometry::over_box(&[0.0, 2.0], &[1.0, 3.0], &[16, 16]).unwrap();
        let e = GridSet::full(ge);
        let estar = GridSet::full(gs);
        assert_eq!(bilinear(&e, &estar, &q(1.0 / 32.0)).unwrap(), 0.0);
    }

    #[test]
    fn bilinear_mc_empty_estar_is_zero() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let e = GridSet::full(geom.clone());
        let estar = GridSet::empty(geom);
        assert_eq!(bilinear_mc(&e, &estar, 5, 1000).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn bilinear_mc_deterministic() {
        let cube = unit_cube(2, 16);
        let a = bilinear_mc(&cube, &cube, 11, 40_000).unwrap();
        let b = bilinear_mc(&cube, &cube, 11, 40_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bilinear_agrees_with_mc_oracle_on_cubes() {
        let cube = unit_cube(2, 64);
        let det = bilinear(&cube, &cube, &q(1.0 / 128.0)).unwrap();
        let (mc, se) = bilinear_mc(&cube, &cube, 3, 2_000_000).unwrap();
        assert!(
            (det - mc).abs() <= MC_SIGMA * se + QUADRATURE_REL_TOL * det,
            "quadrature {det} vs mc {mc} +- {se}"
        );
    }

    #[test]
    fn bilinear_matches_transpose_route() {
        let cube = unit_cube(2, 48);
        let shifted = GridSet::rasterize(
            GridGeometry::over_box(&[-0.6, -0.8], &[0.9, 0.4], &[48, 48]).unwrap(),
            |c| c[0] * c[0] + c[1] * c[1] < 0.5,
        );
        let qq = q(1.0 / 96.0);
        let fwd = bilinear(&cube, &shifted, &qq).unwrap();
        let bwd = bilinear_transpose(&cube, &shifted, &qq).unwrap();
        assert!(fwd > 0.0);
        assert!((fwd - bwd).abs() < 2.0 * QUADRATURE_REL_TOL * fwd, "{fwd} vs {bwd}");
    }

    #[test]
    fn score_disjoint_in_incidence_has_zero_epsilon() {
        let ge = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let gs = GridGeometry::over_box(&[0.0, 2.0], &[1.0, 3.0], &[8, 8]).unwrap();
        let s = score(&GridSet::full(ge), &GridSet::full(gs), &q(1.0 / 16.0)).unwrap();
        assert_eq!(s.epsilon, 0.0);
    }

    #[test]
    fn score_invariants_hold() {
        let cube = unit_cube(2, 32);
        let half = cube.restrict(|c| c[0] < 0.5);
        let s = score(&half, &cube, &q(1.0 / 64.0)).unwrap();
        assert!((s.alpha * half.measure() - s.incidence).abs() < 1e-12 * s.incidence);
        assert!((s.alpha_star * cube.measure() - s.incidence).abs() < 1e-12 * s.incidence);
        let d = 2.0f64;
        let want =
            s.incidence / (half.measure().powf(d / (d + 1.0)) * cube.measure().powf(d / (d + 1.0)));
        assert!((s.epsilon - want).abs() < 1e-12 * want);
    }

    #[test]
    fn score_rejects_empty() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let e = GridSet::empty(geom.clone());
        let f = GridSet::full(geom);
        assert!(matches!(score(&e, &f, &q(0.05)), Err(Error::EmptySet(_))));
    }

    #[test]
    fn trilinear_beta_zero_is_trivial() {
        let cube = unit_cube(2, 16);
        let r = trilinear_check(&cube, &cube, &cube, 0.0, &q(1.0 / 32.0)).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.hypothesis_ok);
    }

    #[test]
    fn trilinear_detects_violated_hypothesis() {
        // G includes points far above E', where T(chi_E') = 0 < beta'.
        let ge = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[16, 16]).unwrap();
        let gg = GridGeometry::over_box(&[0.0, 4.0], &[1.0, 5.0], &[8, 8]).unwrap();
        let eprime = GridSet::full(ge.clone());
        let e = GridSet::full(ge);
        let g = GridSet::full(gg);
        let r = trilinear_check(&e, &eprime, &g, 0.25, &q(1.0 / 32.0)).unwrap();
        assert!(!r.hypothesis_ok);
        assert!(r.worst_point.is_some());
        assert_eq!(r.worst_value, 0.0);
    }

    #[test]
    fn flatness_zero_fstar_is_zero() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let f = GridFunction::indicator(&GridSet::full(geom.clone()), 1.0);
        let z = GridFunction::zero(geom);
        let r = flatness_gain(&f, &z, 0.5, &q(1.0 / 16.0)).unwrap();
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn flatness_boundary_level_accepted() {
        // f* = chi_A: single level l = 0 with 2^0 |A|^(d/(d+1)) = ||f*||;
        // eta = 1 sits exactly on the hypothesis boundary.
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let f = GridFunction::indicator(&GridSet::full(geom.clone()), 1.0);
        let r = flatness_gain(&f, &f, 1.0, &q(1.0 / 16.0)).unwrap();
        assert!((r.max_level_mass - 1.0).abs() < 1e-12);
        assert!(r.ratio > 0.0);
    }

    #[test]
    fn flatness_violation_detected() {
        let geom = GridGeometry::over_box(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let f = GridFunction::indicator(&GridSet::full(geom.clone()), 1.0);
        assert!(matches!(
            flatness_gain(&f, &f, 0.5, &q(1.0 / 16.0)),
            Err(Error::FlatnessViolated { .. })
        ));
    }

    #[test]
    fn quadrature_spec_serde_roundtrip() {
        let a = QuadratureSpec::auto(0.01);
        let j = serde_json::to_value(a).unwrap();
        assert_eq!(j["t_bound"], "auto");
        let back: QuadratureSpec = serde_json::from_value(j).unwrap();
        assert_eq!(back, a);
        let f = QuadratureSpec { t_resolution: 0.5, t_bound: TBound::Fixed(2.0) };
        let back: QuadratureSpec = serde_json::from_value(serde_json::to_value(f).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
