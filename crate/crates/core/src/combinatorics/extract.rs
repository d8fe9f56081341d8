//! End-to-end ball extraction: three-step tower to pick a good base point,
//! convexification of its second-generation set, enclosing ellipsoid, and
//! dual-radius assembly into ball parameters.

use rayon::prelude::*;
use serde::Serialize;

use crate::balls::{envelope, make_ball, BallParams};
use crate::combinatorics::convex::convexify;
use crate::combinatorics::ellipsoid::mvee_centered;
use crate::error::{Error, Result};
use crate::geom::{IncidencePoint, SpacePoint};
use crate::grid::{GridGeometry, GridSet};
use crate::transform::{
    bilinear, forward_count, lattice_range, transpose_count, QuadratureSpec,
};

#[derive(Debug, Clone, Serialize)]
pub struct ExtractReport {
    /// |B_env| / |E|.
    pub b_env_ratio: f64,
    /// |B*_env| / |E*|.
    pub bstar_env_ratio: f64,
    /// Incidences retained inside the envelope pair, as a fraction of the
    /// pair's total.
    pub incidence_retention: f64,
    pub incidence_total: f64,
}

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

/// s-lattice set {s : anchor - (s, |s|^2) in target}.
fn jump_set(anchor: &[f64], target: &GridSet, h: f64) -> Result<GridSet> {
    let d = anchor.len();
    let m = d - 1;
    let (tlo, thi) = target
        .occupied_bbox()
        .ok_or_else(|| Error::ExtractionFailed("target set is empty".into()))?;
    let lo: Vec<f64> = (0..m).map(|a| anchor[a] - thi[a]).collect();
    let hi: Vec<f64> = (0..m).map(|a| anchor[a] - tlo[a]).collect();
    let geom = lattice_grid(&lo, &hi, h)?;
    Ok(GridSet::rasterize(geom, |s| {
        let mut p = [0.0f64; 3];
        let mut ssq = 0.0;
        for a in 0..m {
            p[a] = anchor[a] - s[a];
            ssq += s[a] * s[a];
        }
        p[m] = anchor[m] - ssq;
        target.contains(&p[..d])
    }))
}

/// Extract the dominating ball of a quasiextremal pair. Returns the ball
/// together with the envelope-size and incidence-retention diagnostics.
pub fn extract_ball(
    e: &GridSet,
    estar: &GridSet,
    q: &QuadratureSpec,
) -> Result<(BallParams, ExtractReport)> {
    let d = e.dim();
    let m = d - 1;
    let h = q.t_resolution;
    let t_total = bilinear(e, estar, q)?;
    if t_total <= 0.0 {
        return Err(Error::NoIncidences);
    }

    // base point in E*: maximizer of the transpose count
    let star_occ = estar.occupied_linear();
    let v: Vec<f64> = star_occ
        .par_iter()
        .map(|&lin| transpose_count(e, &estar.geometry().center_of_linear(lin), q))
        .collect();
    let (mut vbest, mut varg) = (f64::NEG_INFINITY, 0usize);
    for (i, &val) in v.iter().enumerate() {
        if val > vbest {
            vbest = val;
            varg = i;
        }
    }
    if vbest <= 0.0 {
        return Err(Error::NoIncidences);
    }
    let ystar = estar.geometry().center_of_linear(star_occ[varg]);

    // first generation: r with ystar + (r,|r|^2) in E; keep the r whose
    // second-generation s-set is largest
    let (elo, ehi) = e.occupied_bbox().expect("nonempty");
    let rlo: Vec<f64> = (0..m).map(|a| elo[a] - ystar[a]).collect();
    let rhi: Vec<f64> = (0..m).map(|a| ehi[a] - ystar[a]).collect();
    let rgeom = lattice_grid(&rlo, &rhi, h)?;
    let omega1 = GridSet::rasterize(rgeom, |r| {
        let mut p = [0.0f64; 3];
        let mut rsq = 0.0;
        for a in 0..m {
            p[a] = ystar[a] + r[a];
            rsq += r[a] * r[a];
        }
        p[m] = ystar[m] + rsq;
        e.contains(&p[..d])
    });
    let r_list = omega1.occupied_linear();
    if r_list.is_empty() {
        return Err(Error::ExtractionFailed("first tower generation is empty".into()));
    }
    let second_counts: Vec<f64> = r_list
        .par_iter()
        .map(|&lin| {
            let r = omega1.geometry().center_of_linear(lin);
            let mut x = vec![0.0; d];
            let mut rsq = 0.0;
            for a in 0..m {
                x[a] = ystar[a] + r[a];
                rsq += r[a] * r[a];
            }
            x[m] = ystar[m] + rsq;
            forward_count(estar, &x, q)
        })
        .collect();
    let (mut gbest, mut garg) = (f64::NEG_INFINITY, 0usize);
    for (i, &val) in second_counts.iter().enumerate() {
        if val > gbest {
            gbest = val;
            garg = i;
        }
    }
    if gbest <= 0.0 {
        return Err(Error::ExtractionFailed("no first-generation point reaches E*".into()));
    }
    let rbar = omega1.geometry().center_of_linear(r_list[garg]);
    let mut xbar = vec![0.0; d];
    let mut rsq = 0.0;
    for a in 0..m {
        xbar[a] = ystar[a] + rbar[a];
        rsq += rbar[a] * rbar[a];
    }
    xbar[m] = ystar[m] + rsq;

    // second generation s-set and its balanced convex approximation
    let s2 = jump_set(&xbar, estar, h)?;
    if s2.occupied_count() == 0 {
        return Err(Error::ExtractionFailed("second tower generation is empty".into()));
    }
    let conv = convexify(&s2, 0.5, false)?;
    let vertices = conv.vertices();
    if vertices.len() < 2 {
        return Err(Error::ExtractionFailed("convex approximation degenerated".into()));
    }
    let ell = mvee_centered(&vertices)?;
    if ell.semi_axes.iter().any(|&a| !(a > 1e-9)) {
        return Err(Error::ExtractionFailed("enclosing ellipsoid degenerated".into()));
    }

    // third generation scale: fiber t-measures through the s-set
    let mut fiber_measures: Vec<f64> = s2
        .occupied_linear()
        .par_iter()
        .map(|&lin| {
            let s = s2.geometry().center_of_linear(lin);
            let mut y = vec![0.0; d];
            let mut ssq = 0.0;
            for a in 0..m {
                y[a] = xbar[a] - s[a];
                ssq += s[a] * s[a];
            }
            y[m] = xbar[m] - ssq;
            transpose_count(e, &y, q)
        })
        .collect();
    fiber_measures.retain(|&c| c > 0.0);
    if fiber_measures.is_empty() {
        return Err(Error::ExtractionFailed("all third-generation fibers are empty".into()));
    }
    fiber_measures.sort_by(|a, b| a.partial_cmp(b).expect("finite counts"));
    let m_u = fiber_measures[fiber_measures.len() / 2];

    // radii: dual box directions from the ellipsoid's eigen-structure, the
    // u-scale from the fibers, rho from the duality product; the assembled
    // parameters carry a constant enlargement, as the construction permits
    let inflate = 1.4f64;
    let geo_mean = ell.semi_axes.iter().product::<f64>().powf(1.0 / m as f64);
    let scale_s = (conv.measure / (1u64 << m) as f64).powf(1.0 / m as f64);
    let scale_u = (m_u / (1u64 << m) as f64).powf(1.0 / m as f64);
    let rho = scale_s * scale_u * inflate * inflate;
    let r: Vec<f64> = ell.semi_axes.iter().map(|a| inflate * scale_u * geo_mean / a).collect();
    let r_star: Vec<f64> = r.iter().map(|rj| rho / rj).collect();

    let sbar = &conv.center_offset;
    let mut second = vec![0.0; d];
    let mut sbar_sq = 0.0;
    for a in 0..m {
        second[a] = xbar[a] - sbar[a];
        sbar_sq += sbar[a] * sbar[a];
    }
    second[m] = xbar[m] - sbar_sq;
    let center = IncidencePoint::new(SpacePoint::new(xbar), SpacePoint::new(second));
    let ball = make_ball(center, ell.axes.clone(), r, r_star)
        .map_err(|err| Error::ExtractionFailed(format!("assembled parameters invalid: {err}")))?;

    // diagnostics
    let env = envelope(&ball);
    let e_in = e.restrict(|c| env.contains_e(c));
    let star_in = estar.restrict(|c| env.contains_estar(c));
    let retained = if e_in.occupied_count() == 0 || star_in.occupied_count() == 0 {
        0.0
    } else {
        bilinear(&e_in, &star_in, q)?
    };
    let report = ExtractReport {
        b_env_ratio: env.e_measure() / e.measure(),
        bstar_env_ratio: env.estar_measure() / estar.measure(),
        incidence_retention: retained / t_total,
        incidence_total: t_total,
    };
    Ok((ball, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balls::unit_ball;

    #[test]
    fn round_trip_on_unit_ball_envelope() {
        let b = unit_ball(2);
        let env = envelope(&b);
        let e = env.rasterize_e(48);
        let estar = env.rasterize_estar(48);
        let q = QuadratureSpec::auto(1.0 / 48.0);
        let (found, report) = extract_ball(&e, &estar, &q).unwrap();
        assert!(
            report.b_env_ratio <= 8.0 && report.b_env_ratio >= 1.0 / 8.0,
            "envelope ratio {}",
            report.b_env_ratio
        );
        assert!(
            report.bstar_env_ratio <= 8.0 && report.bstar_env_ratio >= 1.0 / 8.0,
            "dual envelope ratio {}",
            report.bstar_env_ratio
        );
        assert!(
            report.incidence_retention >= 0.5,
            "retention {}",
            report.incidence_retention
        );
        assert!(found.rho() > 0.1 && found.rho() < 10.0, "rho {}", found.rho());
    }

    #[test]
    fn disjoint_pair_has_no_incidences() {
        let e = crate::grid::unit_cube(2, 8);
        let estar = GridSet::rasterize(
            GridGeometry::over_box(&[0.0, 4.0], &[1.0, 5.0], &[8, 8]).unwrap(),
            |_| true,
        );
        let q = QuadratureSpec::auto(1.0 / 16.0);
        assert!(matches!(extract_ball(&e, &estar, &q), Err(Error::NoIncidences)));
    }
}
