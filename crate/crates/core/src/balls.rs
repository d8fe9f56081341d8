//! The quasiextremal ball family: parameter validation, membership,
//! analytic envelopes with exact product-formula measures, the shrunk-slice
//! quantification, and the covering construction that splits a ball into
//! sub-balls of prescribed envelope measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{dist_sq, dot, norm_sq, orthonormality_defect, sub, IncidencePoint, SpacePoint, SquareMatrix};
use crate::grid::{GridGeometry, GridSet};
use crate::rng::CounterRng;
use crate::symmetry::{SymmetryElement, SymmetryWord, RESIDUAL_TOL};
use crate::transform::{score, QuadratureSpec, ScorePair};

/// Validation tolerance for the algebraic ball constraints.
pub const PARAM_TOL: f64 = 1e-12;

/// Parameters (center, frame, radii, dual radii, slab thickness) of one
/// ball on the incidence manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct BallParams {
    center: IncidencePoint,
    /// Orthonormal rows e_1 .. e_(d-1) of R^(d-1).
    basis: Vec<Vec<f64>>,
    r: Vec<f64>,
    r_star: Vec<f64>,
    rho: f64,
}

impl BallParams {
    pub fn center(&self) -> &IncidencePoint {
        &self.center
    }
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn r_star(&self) -> &[f64] {
        &self.r_star
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn dim(&self) -> usize {
        self.center.first.dim()
    }
}

/// Validates the duality constraint r_j r*_j = rho, basis orthonormality,
/// and that the center lies on the incidence manifold.
pub fn make_ball(
    center: IncidencePoint,
    basis: Vec<Vec<f64>>,
    r: Vec<f64>,
    r_star: Vec<f64>,
) -> Result<BallParams> {
    let d = center.first.dim();
    if d < 2 || center.second.dim() != d {
        return Err(Error::InvalidGeometry(format!(
            "ball center needs matching factors of dimension >= 2, got {} and {}",
            d,
            center.second.dim()
        )));
    }
    let m = d - 1;
    if basis.len() != m || basis.iter().any(|e| e.len() != m) || r.len() != m || r_star.len() != m {
        return Err(Error::InvalidGeometry(format!(
            "ball parameters must have length d-1 = {m}"
        )));
    }
    if r.iter().chain(&r_star).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidGeometry("radii must be positive finite".into()));
    }

    let rho = r[0] * r_star[0];
    for j in 0..m {
        let product = r[j] * r_star[j];
        if (product - rho).abs() > PARAM_TOL * rho.abs().max(1e-300) {
            return Err(Error::DualityViolated { index: j, product, rho });
        }
    }

    let deviation = orthonormality_defect(&basis);
    if deviation > PARAM_TOL {
        return Err(Error::BasisNotOrthonormal { deviation });
    }

    let residual = center.residual();
    let tolerance = PARAM_TOL * center.residual_scale();
    if residual > tolerance {
        return Err(Error::OffManifold { residual, tolerance });
    }

    Ok(BallParams { center, basis, r, r_star, rho })
}

impl BallParams {
    /// First-factor envelope conditions (box in the frame + parabolic slab).
    pub fn e_conditions(&self, x: &[f64]) -> bool {
        let m = self.dim() - 1;
        let xp = &x[..m];
        let xd = x[m];
        let cx = self.center.first.primed();
        let cs = self.center.second.primed();
        for j in 0..m {
            let w: f64 = (0..m).map(|i| (xp[i] - cx[i]) * self.basis[j][i]).sum();
            if w.abs() >= self.r[j] {
                return false;
            }
        }
        (xd - self.center.second.last() - dist_sq(xp, cs)).abs() < self.rho
    }

    /// Second-factor envelope conditions.
    pub fn estar_conditions(&self, y: &[f64]) -> bool {
        let m = self.dim() - 1;
        let yp = &y[..m];
        let yd = y[m];
        let cx = self.center.first.primed();
        let cs = self.center.second.primed();
        for j in 0..m {
            let w: f64 = (0..m).map(|i| (yp[i] - cs[i]) * self.basis[j][i]).sum();
            if w.abs() >= self.r_star[j] {
                return false;
            }
        }
        (yd - self.center.first.last() + dist_sq(yp, cx)).abs() < self.rho
    }

    /// Membership of an incidence pair: on-manifold plus all four strict
    /// inequality groups.
    pub fn membership(&self, z: &IncidencePoint) -> bool {
        let tol = RESIDUAL_TOL * z.residual_scale();
        z.is_incident(tol) && self.e_conditions(&z.first.coords) && self.estar_conditions(&z.second.coords)
    }

    /// A quadrature spec fine enough for this ball's envelopes: the t-step
    /// resolves the dual box and keeps the parabola's last-coordinate sweep
    /// per step well under the slab thickness.
    pub fn suggested_quadrature(&self) -> QuadratureSpec {
        let m = self.dim() - 1;
        let offset = dist_sq(self.center.first.primed(), self.center.second.primed()).sqrt();
        let reach: f64 =
            offset + self.r.iter().sum::<f64>() + self.r_star.iter().sum::<f64>();
        let min_rstar = self.r_star.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_r = self.r.iter().cloned().fold(f64::INFINITY, f64::min);
        let h_box = min_rstar.min(min_r) / 6.0;
        let h_curv = self.rho / (2.0 * reach + 1.0) / 4.0;
        // never coarser than the default envelope raster's thinnest axis
        let h_raster =
            2.0 * self.rho.min(min_r).min(min_rstar) / default_envelope_cells(self.dim()) as f64;
        let _ = m;
        QuadratureSpec::auto(h_box.min(h_curv).min(h_raster))
    }
}

/// Analytic envelope pair of a ball, with exact measures by Fubini (each x'
/// slice of the parabolic slab is an interval of length 2 rho).
#[derive(Debug, Clone)]
pub struct EnvelopePair {
    ball: BallParams,
}

/// Per-axis geometry of one envelope: bounding box plus the smallest
/// thickness of the cut along each axis (used for rasterization spacing).
#[derive(Debug, Clone)]
pub struct EnvelopeBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub thickness: Vec<f64>,
}

pub fn envelope(ball: &BallParams) -> EnvelopePair {
    EnvelopePair { ball: ball.clone() }
}

impl EnvelopePair {
    pub fn ball(&self) -> &BallParams {
        &self.ball
    }

    /// |E_env| = 2^d rho prod_j r_j.
    pub fn e_measure(&self) -> f64 {
        let d = self.ball.dim();
        (1u64 << d) as f64 * self.ball.rho * self.ball.r.iter().product::<f64>()
    }

    /// |E*_env| = 2^d rho prod_j r*_j.
    pub fn estar_measure(&self) -> f64 {
        let d = self.ball.dim();
        (1u64 << d) as f64 * self.ball.rho * self.ball.r_star.iter().product::<f64>()
    }

    pub fn contains_e(&self, x: &[f64]) -> bool {
        self.ball.e_conditions(x)
    }

    pub fn contains_estar(&self, y: &[f64]) -> bool {
        self.ball.estar_conditions(y)
    }

    fn factor_box(&self, starred: bool) -> EnvelopeBox {
        let d = self.ball.dim();
        let m = d - 1;
        let (radii, box_center, parab_center, parab_offset) = if starred {
            (
                &self.ball.r_star,
                self.ball.center.second.primed(),
                self.ball.center.first.primed(),
                self.ball.center.first.last(),
            )
        } else {
            (
                &self.ball.r,
                self.ball.center.first.primed(),
                self.ball.center.second.primed(),
                self.ball.center.second.last(),
            )
        };
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        let mut thickness = vec![0.0; d];
        for i in 0..m {
            let w: f64 = (0..m).map(|j| radii[j] * self.ball.basis[j][i].abs()).sum();
            lo[i] = box_center[i] - w;
            hi[i] = box_center[i] + w;
            // thinnest slab of the frame box measured along axis i
            thickness[i] = (0..m)
                .map(|j| 2.0 * radii[j] / self.ball.basis[j][i].abs().max(1e-12))
                .fold(f64::INFINITY, f64::min)
                .min(2.0 * w);
        }
        // interval arithmetic for |x' - parab_center|^2 over the box
        let (mut s_lo, mut s_hi) = (0.0f64, 0.0f64);
        for i in 0..m {
            let a = lo[i] - parab_center[i];
            let b = hi[i] - parab_center[i];
            let mx = a.abs().max(b.abs());
            let mn = if a <= 0.0 && b >= 0.0 { 0.0 } else { a.abs().min(b.abs()) };
            s_lo += mn * mn;
            s_hi += mx * mx;
        }
        let sign = if starred { -1.0 } else { 1.0 };
        // starred factor: |y_d - x_bar_d + |y'-x_bar'|^2| < rho
        // plain factor:   |x_d - y_bar_d - |x'-y_bar'|^2| < rho
        let (c_lo, c_hi) = if sign > 0.0 {
            (parab_offset + s_lo, parab_offset + s_hi)
        } else {
            (parab_offset - s_hi, parab_offset - s_lo)
        };
        lo[m] = c_lo - self.ball.rho;
        hi[m] = c_hi + self.ball.rho;
        thickness[m] = 2.0 * self.ball.rho;
        EnvelopeBox { lo, hi, thickness }
    }

    pub fn e_box(&self) -> EnvelopeBox {
        self.factor_box(false)
    }

    pub fn estar_box(&self) -> EnvelopeBox {
        self.factor_box(true)
    }

    fn rasterize(&self, b: &EnvelopeBox, starred: bool, base_cells: usize, cap: usize) -> GridSet {
        let d = self.ball.dim();
        let mut cells = vec![0usize; d];
        for a in 0..d {
            let extent = b.hi[a] - b.lo[a];
            let spacing = (b.thickness[a].min(extent)) / base_cells as f64;
            cells[a] = ((extent / spacing).ceil() as usize).clamp(base_cells, cap);
        }
        // total voxel budget: shrink all axes proportionally if exceeded
        let budget: usize = if d == 2 { 4_000_000 } else { 2_000_000 };
        let total: usize = cells.iter().product();
        if total > budget {
            let factor = (budget as f64 / total as f64).powf(1.0 / d as f64);
            for c in cells.iter_mut() {
                *c = ((*c as f64 * factor).floor() as usize).max(4);
            }
        }
        let geom = GridGeometry::over_box(&b.lo, &b.hi, &cells).expect("envelope box is valid");
        if starred {
            GridSet::rasterize(geom, |c| self.contains_estar(c))
        } else {
            GridSet::rasterize(geom, |c| self.contains_e(c))
        }
    }

    /// Rasterize E_env with per-axis spacing that resolves the box frame and
    /// the slab thickness with `base_cells` cells each.
    pub fn rasterize_e(&self, base_cells: usize) -> GridSet {
        let cap = if self.ball.dim() == 2 { 4096 } else { 320 };
        self.rasterize(&self.e_box(), false, base_cells, cap)
    }

    pub fn rasterize_estar(&self, base_cells: usize) -> GridSet {
        let cap = if self.ball.dim() == 2 { 4096 } else { 320 };
        self.rasterize(&self.estar_box(), true, base_cells, cap)
    }
}

/// Default per-axis rasterization density for envelope scoring.
pub fn default_envelope_cells(d: usize) -> usize {
    if d == 2 {
        48
    } else {
        20
    }
}

/// Exact value of T(chi_{E*_env}) at x: the |t|^2 terms of the parabolic
/// slab condition cancel, leaving a linear slab, so the t-set is a frame
/// box intersected with a slab and its volume has a closed form.
pub fn envelope_transform_at(ball: &BallParams, x: &[f64]) -> f64 {
    let d = ball.dim();
    let m = d - 1;
    let cx = ball.center.first.primed();
    let cs = ball.center.second.primed();
    let xp = &x[..m];
    // slab |L - 2<w, t>| < rho with w = x' - xbar', in frame coordinates
    // tau_j = <t - (x' - xbar*'), e_j>
    let w = sub(xp, cx);
    let l = x[m] - ball.center.first.last() + norm_sq(&w);
    let shift = sub(xp, cs);
    let c = l - 2.0 * dot(&w, &shift);
    let g: Vec<f64> = (0..m).map(|j| dot(&w, &ball.basis[j])).collect();
    box_slab_volume(&ball.r_star, &g, c, ball.rho)
}

/// Mirror formula for T^t(chi_{E_env}) at y, by the symmetric cancellation
/// in the first-factor slab condition.
pub fn envelope_transform_transpose_at(ball: &BallParams, y: &[f64]) -> f64 {
    let d = ball.dim();
    let m = d - 1;
    let cx = ball.center.first.primed();
    let cs = ball.center.second.primed();
    let yp = &y[..m];
    // x = y + (t,|t|^2) must satisfy |x_d - xbar*_d - |x' - xbar*'|^2| < rho;
    // the quadratic terms cancel, leaving |L + 2<w, t>| < rho with
    // w = y' - xbar*'.
    let w = sub(yp, cs);
    let l = y[m] - ball.center.second.last() - norm_sq(&w);
    let shift = sub(cx, yp); // tau_j = <t - (xbar' - y'), e_j>
    let c = l - 2.0 * dot(&w, &shift);
    let g: Vec<f64> = (0..m).map(|j| dot(&w, &ball.basis[j])).collect();
    box_slab_volume(&ball.r, &g, c, ball.rho)
}

/// Volume of {tau : |tau_j| < radii_j} intersect {|c - 2<g, tau>| < rho},
/// for boxes in dimension 1 or 2.
fn box_slab_volume(radii: &[f64], g: &[f64], c: f64, rho: f64) -> f64 {
    let m = radii.len();
    let gn = crate::geom::norm(g);
    let scale = 1.0 + c.abs() + rho;
    if 2.0 * gn * radii.iter().fold(0.0f64, |a, &r| a.max(r)) < 1e-14 * scale {
        // slab does not vary over the box
        return if c.abs() < rho { radii.iter().map(|r| 2.0 * r).product() } else { 0.0 };
    }
    match m {
        1 => {
            let (a, b) = ((c - rho) / (2.0 * g[0]), (c + rho) / (2.0 * g[0]));
            let (lo, hi) = (a.min(b), a.max(b));
            (hi.min(radii[0]) - lo.max(-radii[0])).max(0.0)
        }
        2 => {
            let poly = vec![
                vec![-radii[0], -radii[1]],
                vec![radii[0], -radii[1]],
                vec![radii[0], radii[1]],
                vec![-radii[0], radii[1]],
            ];
            // 2<g,tau> <= c + rho and -2<g,tau> <= rho - c
            let n1: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
            let n2: Vec<f64> = g.iter().map(|v| -2.0 * v).collect();
            let poly = crate::geom::clip_halfplane(&poly, &n1, c + rho);
            let poly = crate::geom::clip_halfplane(&poly, &n2, rho - c);
            crate::geom::polygon_area(&poly)
        }
        _ => unreachable!("desk scale has d - 1 <= 2"),
    }
}

/// Rasterize the envelope pair and score it; the epsilon field is the
/// empirical quasiextremality constant for this ball. The bilinear value
/// is the Riemann sum of the exact envelope transform over the rasterized
/// first factor (the generic lattice route is `verify_quasiextremal_grid`).
pub fn verify_quasiextremal(ball: &BallParams, q: &QuadratureSpec) -> Result<ScorePair> {
    verify_quasiextremal_with(ball, q, default_envelope_cells(ball.dim()))
}

pub fn verify_quasiextremal_with(
    ball: &BallParams,
    q: &QuadratureSpec,
    base_cells: usize,
) -> Result<ScorePair> {
    if !(q.t_resolution > 0.0) {
        return Err(Error::ConfigInvalid("t_resolution must be positive".into()));
    }
    let env = envelope(ball);
    let e = env.rasterize_e(base_cells);
    let estar = env.rasterize_estar(base_cells);
    let me = e.measure();
    let ms = estar.measure();
    if me <= 0.0 || ms <= 0.0 {
        return Err(Error::EmptySet("rasterized envelope came out empty".into()));
    }
    let vol = e.geometry().voxel_volume();
    let incidence: f64 = e
        .occupied_linear()
        .iter()
        .map(|&lin| envelope_transform_at(ball, &e.geometry().center_of_linear(lin)))
        .sum::<f64>()
        * vol;
    let d = ball.dim() as f64;
    let exp = d / (d + 1.0);
    Ok(ScorePair {
        incidence,
        alpha: incidence / me,
        alpha_star: incidence / ms,
        epsilon: incidence / (me.powf(exp) * ms.powf(exp)),
    })
}

/// The generic route: rasterize both envelopes and run the lattice
/// quadrature of the bilinear functional.
pub fn verify_quasiextremal_grid(
    ball: &BallParams,
    q: &QuadratureSpec,
    base_cells: usize,
) -> Result<ScorePair> {
    let env = envelope(ball);
    let e = env.rasterize_e(base_cells);
    let estar = env.rasterize_estar(base_cells);
    score(&e, &estar, q)
}

/// Measure of the second-factor slice through x: the set of y' for which
/// (x, (y', x_d - |y'-x'|^2)) lies in the ball. Requires x in the
/// eps-shrunk envelope. When every sweep point passes, the exact full-box
/// product is returned.
pub fn shrunk_slice_measure(
    ball: &BallParams,
    eps: f64,
    x: &SpacePoint,
    q: &QuadratureSpec,
) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::DeltaOutOfRange(eps));
    }
    let d = ball.dim();
    let m = d - 1;
    let xp = x.primed();
    let xd = x.last();
    let cx = ball.center.first.primed();
    let cs = ball.center.second.primed();

    // x must satisfy the eps-shrunk first-factor conditions
    for j in 0..m {
        let w: f64 = (0..m).map(|i| (xp[i] - cx[i]) * ball.basis[j][i]).sum();
        if w.abs() >= eps * ball.r[j] {
            return Err(Error::NotInShrunkSet(format!(
                "frame coordinate {j} is {} >= eps*r = {}",
                w.abs(),
                eps * ball.r[j]
            )));
        }
    }
    let slab = (xd - ball.center.second.last() - dist_sq(xp, cs)).abs();
    if slab >= eps * ball.rho {
        return Err(Error::NotInShrunkSet(format!(
            "slab residual {} >= eps*rho = {}",
            slab,
            eps * ball.rho
        )));
    }

    // sweep y' over the open dual box in frame coordinates
    let full_box: f64 = ball.r_star.iter().map(|rj| 2.0 * rj).product();
    let n_per_axis: Vec<usize> = (0..m)
        .map(|j| (((2.0 * ball.r_star[j]) / q.t_resolution).ceil() as usize).clamp(16, 192))
        .collect();
    let total: usize = n_per_axis.iter().product();
    let mut pass = 0usize;
    let mut idx = vec![0usize; m];
    for _ in 0..total {
        let mut yp = cs.to_vec();
        for j in 0..m {
            let frac = (idx[j] as f64 + 0.5) / n_per_axis[j] as f64;
            let coord = (2.0 * frac - 1.0) * ball.r_star[j];
            for i in 0..m {
                yp[i] += coord * ball.basis[j][i];
            }
        }
        let yd = xd - dist_sq(&yp, xp);
        if (yd - ball.center.first.last() + dist_sq(&yp, cx)).abs() < ball.rho {
            pass += 1;
        }
        for j in (0..m).rev() {
            idx[j] += 1;
            if idx[j] < n_per_axis[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    if pass == total {
        Ok(full_box)
    } else {
        Ok(full_box * pass as f64 / total as f64)
    }
}

/// One symmetry generator acting on ball parameters. The output is
/// re-validated; the transformed envelope measures scale by the element's
/// declared per-factor factors.
pub fn apply_ball(g: &SymmetryElement, b: &BallParams) -> Result<BallParams> {
    let d = b.dim();
    let m = d - 1;
    g.validate(d)?;
    let center = IncidencePoint::new(g.apply_first(&b.center.first), g.apply_second(&b.center.second));
    let (basis, r, r_star) = match g {
        SymmetryElement::Translation { .. } | SymmetryElement::Shear { .. } => {
            (b.basis.clone(), b.r.clone(), b.r_star.clone())
        }
        SymmetryElement::Rotation { matrix } => {
            let basis = b.basis.iter().map(|e| matrix.apply(e)).collect();
            (basis, b.r.clone(), b.r_star.clone())
        }
        SymmetryElement::ParabolicDilation { lambda } => {
            let r = b.r.iter().map(|v| lambda * v).collect();
            let r_star = b.r_star.iter().map(|v| lambda * v).collect();
            (b.basis.clone(), r, r_star)
        }
        SymmetryElement::ShearedLinear { matrix } => {
            // the frame must diagonalize A, otherwise the image is not a
            // box in any orthonormal frame
            let mut r = Vec::with_capacity(m);
            let mut r_star = Vec::with_capacity(m);
            let a_norm = matrix.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            for j in 0..m {
                let ae = matrix.apply(&b.basis[j]);
                let aj = dot(&ae, &b.basis[j]);
                let residual: f64 = (0..m)
                    .map(|i| (ae[i] - aj * b.basis[j][i]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if residual > 1e-9 * a_norm.max(1.0) {
                    return Err(Error::IncompatibleFrame(format!(
                        "linear action does not preserve frame direction {j} (residual {residual})"
                    )));
                }
                if aj.abs() < 1e-12 {
                    return Err(Error::NonInvertible("frame eigenvalue vanishes".into()));
                }
                r.push(aj.abs() * b.r[j]);
                r_star.push(b.r_star[j] / aj.abs());
            }
            (b.basis.clone(), r, r_star)
        }
    };
    make_ball(center, basis, r, r_star)
}

/// A whole word acting on ball parameters, first-to-last.
pub fn apply_ball_word(word: &SymmetryWord, b: &BallParams) -> Result<BallParams> {
    word.0.iter().try_fold(b.clone(), |acc, g| apply_ball(g, &acc))
}

/// The word mapping `b` to the unit ball (center at the origin, standard
/// frame, all radii and rho equal to 1).
pub fn normalization_word(b: &BallParams) -> Result<SymmetryWord> {
    let m = b.dim() - 1;
    let mut elements = Vec::new();
    // align the two primed center components
    let delta = sub(b.center.second.primed(), b.center.first.primed());
    let shear = SymmetryElement::Shear { delta };
    let moved = shear.apply_first(&b.center.first);
    elements.push(shear);
    // joint translation of the aligned center to the origin
    elements.push(SymmetryElement::Translation { v: moved.coords.iter().map(|c| -c).collect() });
    // rotate the frame onto the standard basis
    let mut rot = Vec::with_capacity(m * m);
    for e in &b.basis {
        rot.extend_from_slice(e);
    }
    elements.push(SymmetryElement::Rotation { matrix: SquareMatrix::new(m, rot)? });
    // scale rho to 1
    let lambda = b.rho.sqrt().recip();
    elements.push(SymmetryElement::ParabolicDilation { lambda });
    // equalize the radii: after dilation r_j -> r_j / sqrt(rho)
    let diag: Vec<f64> = b.r.iter().map(|rj| b.rho.sqrt() / rj).collect();
    elements.push(SymmetryElement::ShearedLinear { matrix: SquareMatrix::diagonal(&diag) });
    Ok(SymmetryWord(elements))
}

/// The unit ball at the origin in dimension d.
pub fn unit_ball(d: usize) -> BallParams {
    let m = d - 1;
    let center = IncidencePoint::new(
        SpacePoint::new(vec![0.0; d]),
        SpacePoint::new(vec![0.0; d]),
    );
    let basis = (0..m)
        .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    make_ball(center, basis, vec![1.0; m], vec![1.0; m]).expect("unit ball is valid")
}

/// Frozen covering-net spacing constants (eta' = c' * delta^(2/(d+1))),
/// calibrated once per dimension by the `calibrate` run.
pub fn default_net_constant(d: usize) -> f64 {
    if d == 2 {
        1.0
    } else {
        1.25
    }
}

/// Lemma-style covering: normalize to the unit ball, lay an eta'-net over
/// the (2d-1)-dimensional parameter box, emit sub-balls with radii eta and
/// rho = eta^2, and map back. Every sub-ball's envelope measure is exactly
/// delta times the parent's by the product formula.
pub fn cover(b: &BallParams, delta: f64) -> Result<Vec<BallParams>> {
    cover_with(b, delta, default_net_constant(b.dim()))
}

pub fn cover_with(b: &BallParams, delta: f64, net_constant: f64) -> Result<Vec<BallParams>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    if delta == 1.0 {
        return Ok(vec![b.clone()]);
    }
    let d = b.dim();
    let m = d - 1;
    let word = normalization_word(b)?;
    let back = word.inverse()?;
    let unit = unit_ball(d);

    let dd = d as f64;
    let eta = delta.powf(1.0 / (dd + 1.0));
    let eta_prime = net_constant * delta.powf(2.0 / (dd + 1.0));

    // parameter box of the unit ball: (x', x_d, x*')
    let mut lo = vec![-1.0; 2 * m + 1];
    let mut hi = vec![1.0; 2 * m + 1];
    lo[m] = -1.0;
    hi[m] = m as f64 + 1.0; // x_d <= |x'|^2 + rho
    let cells: Vec<usize> = (0..2 * m + 1)
        .map(|a| (((hi[a] - lo[a]) / eta_prime).ceil() as usize).max(1))
        .collect();

    let mut out = Vec::new();
    let mut idx = vec![0usize; 2 * m + 1];
    let total: usize = cells.iter().product();
    let std_basis: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..total {
        let p: Vec<f64> = (0..2 * m + 1)
            .map(|a| lo[a] + (idx[a] as f64 + 0.5) * (hi[a] - lo[a]) / cells[a] as f64)
            .collect();
        let x = SpacePoint::new(p[..=m].to_vec());
        let z = IncidencePoint::on_manifold(x, &p[m + 1..]);
        if unit.membership(&z) {
            let sub = make_ball(z, std_basis.clone(), vec![eta; m], vec![eta; m])?;
            out.push(apply_ball_word(&back, &sub)?);
        }
        for a in (0..2 * m + 1).rev() {
            idx[a] += 1;
            if idx[a] < cells[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(out)
}

/// Fraction of uniformly drawn points of `b` (in its manifold
/// parametrization) that fall inside at least one ball of `family`.
pub fn sampled_coverage(
    b: &BallParams,
    family: &[BallParams],
    samples: usize,
    seed: u64,
) -> f64 {
    let d = b.dim();
    let m = d - 1;
    let env = envelope(b);
    let ebox = env.e_box();
    let sbox = env.estar_box();
    let mut rng = CounterRng::new(seed, 23);
    let mut inside = 0usize;
    let mut covered = 0usize;
    while inside < samples {
        let x = SpacePoint::new((0..d).map(|a| rng.next_range(ebox.lo[a], ebox.hi[a])).collect());
        let sp: Vec<f64> = (0..m).map(|a| rng.next_range(sbox.lo[a], sbox.hi[a])).collect();
        let z = IncidencePoint::on_manifold(x, &sp);
        if !b.membership(&z) {
            continue;
        }
        inside += 1;
        if family.iter().any(|sub| sub.membership(&z)) {
            covered += 1;
        }
    }
    covered as f64 / inside as f64
}

/// Random ball with radii log-uniform in [1/8, 8] and center in [-4, 4]^d
/// (on-manifold), matching the verification corpus.
pub fn random_ball(d: usize, seed: u64, draw: u64) -> BallParams {
    let m = d - 1;
    let mut rng = CounterRng::new(seed, 40 + draw);
    let r: Vec<f64> = (0..m).map(|_| rng.next_log_uniform(0.125, 8.0)).collect();
    let rmax = r.iter().cloned().fold(0.0f64, f64::max);
    let rmin = r.iter().cloned().fold(f64::INFINITY, f64::min);
    // rho constrained so all dual radii stay in [1/8, 8]
    let rho = rng.next_log_uniform(rmax / 8.0, rmin * 8.0);
    let r_star: Vec<f64> = r.iter().map(|rj| rho / rj).collect();
    let basis = if m == 1 {
        vec![vec![if rng.next_f64() < 0.5 { 1.0 } else { -1.0 }]]
    } else {
        let rot = SquareMatrix::rotation2(rng.next_range(0.0, std::f64::consts::TAU));
        (0..m).map(|j| rot.row(j).to_vec()).collect()
    };
    let x = SpacePoint::new((0..d).map(|_| rng.next_range(-4.0, 4.0)).collect());
    let sp: Vec<f64> = (0..m).map(|_| rng.next_range(-4.0, 4.0)).collect();
    let center = IncidencePoint::on_manifold(x, &sp);
    make_ball(center, basis, r, r_star).expect("random parameters satisfy the constraints")
}

/// JSON schema with explicit field names for the CLI surface.
#[derive(Serialize, Deserialize)]
struct BallParamsFile {
    center_x: Vec<f64>,
    center_xstar: Vec<f64>,
    basis: Vec<f64>,
    r: Vec<f64>,
    r_star: Vec<f64>,
    rho: f64,
}

impl Serialize for BallParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = self.dim() - 1;
        let mut basis = Vec::with_capacity(m * m);
        for e in &self.basis {
            basis.extend_from_slice(e);
        }
        BallParamsFile {
            center_x: self.center.first.coords.clone(),
            center_xstar: self.center.second.coords.clone(),
            basis,
            r: self.r.clone(),
            r_star: self.r_star.clone(),
            rho: self.rho,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BallParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BallParamsFile::deserialize(d)?;
        let m = raw.r.len();
        if raw.basis.len() != m * m {
            return Err(serde::de::Error::custom(format!(
                "basis must be a row-major {m}x{m} array"
            )));
        }
        let basis = raw.basis.chunks(m).map(|c| c.to_vec()).collect();
        let ball = make_ball(
            IncidencePoint::new(SpacePoint::new(raw.center_x), SpacePoint::new(raw.center_xstar)),
            basis,
            raw.r,
            raw.r_star,
        )
        .map_err(|e| serde::de::Error::custom(e.to_string()))?;
        if (ball.rho - raw.rho).abs() > PARAM_TOL * raw.rho.abs().max(1.0) {
            return Err(serde::de::Error::custom(format!(
                "DualityViolated: declared rho {} disagrees with r_1 r*_1 = {}",
                raw.rho, ball.rho
            )));
        }
        Ok(ball)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_d2_unit() -> BallParams {
        unit_ball(2)
    }

    #[test]
    fn make_ball_computes_rho() {
        let center = IncidencePoint::new(
            SpacePoint::new(vec![0.0, 0.0]),
            SpacePoint::new(vec![0.0, 0.0]),
        );
        let b = make_ball(center, vec![vec![1.0]], vec![2.0], vec![0.5]).unwrap();
        assert_eq!(b.rho(), 1.0);
    }

    #[test]
    fn duality_violation_detected() {
        let center = IncidencePoint::new(
            SpacePoint::new(vec![0.0, 0.0, 0.0]),
            SpacePoint::new(vec![0.0, 0.0, 0.0]),
        );
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        // first pair gives rho = 1, second gives 2
        let e = make_ball(center, basis, vec![2.0, 1.0], vec![0.5, 2.0]);
        assert!(matches!(e, Err(Error::DualityViolated { index: 1, .. })));
    }

    #[test]
    fn off_manifold_center_rejected() {
        let center = IncidencePoint::new(
            SpacePoint::new(vec![0.0, 0.0]),
            SpacePoint::new(vec![0.0, 1.0]),
        );
        let e = make_ball(center, vec![vec![1.0]], vec![1.0], vec![1.0]);
        assert!(matches!(e, Err(Error::OffManifold { .. })));
    }

    #[test]
    fn skewed_basis_rejected() {
        let center = IncidencePoint::new(
            SpacePoint::new(vec![0.0, 0.0, 0.0]),
            SpacePoint::new(vec![0.0, 0.0, 0.0]),
        );
        let basis = vec![vec![1.0, 0.1], vec![0.0, 1.0]];
        let e = make_ball(center, basis, vec![1.0, 1.0], vec![1.0, 1.0]);
        assert!(matches!(e, Err(Error::BasisNotOrthonormal { .. })));
    }

    #[test]
    fn membership_center_and_violations() {
        let b = ball_d2_unit();
        assert!(b.membership(b.center()));
        // box violation: first frame coordinate at 2 r_1
        let z = IncidencePoint::on_manifold(SpacePoint::new(vec![2.0, 0.0]), &[0.0]);
        assert!(!b.membership(&z));
        // off-manifold by 10 rho
        let z = IncidencePoint::new(
            SpacePoint::new(vec![0.0, 0.0]),
            SpacePoint::new(vec![0.0, 10.0]),
        );
        assert!(!b.membership(&z));
    }

    #[test]
    fn envelope_measures_product_formula() {
        let b = ball_d2_unit();
        let env = envelope(&b);
        assert!((env.e_measure() - 4.0).abs() < 1e-12);
        assert!((env.estar_measure() - 4.0).abs() < 1e-12);

        let center = IncidencePoint::new(
            SpacePoint::new(vec![0.0; 3]),
            SpacePoint::new(vec![0.0; 3]),
        );
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let b3 = make_ball(center, basis, vec![2.0, 0.5], vec![0.5, 2.0]).unwrap();
        let env3 = envelope(&b3);
        assert!((env3.e_measure() - 8.0).abs() < 1e-12);
        assert!((env3.estar_measure() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn membership_implies_envelope_conditions() {
        let b = random_ball(3, 5, 1);
        let env = envelope(&b);
        let ebox = env.e_box();
        let sbox = env.estar_box();
        let mut rng = CounterRng::new(77, 0);
        let mut found = 0;
        for _ in 0..20_000 {
            let x = SpacePoint::new((0..3).map(|a| rng.next_range(ebox.lo[a], ebox.hi[a])).collect());
            let sp: Vec<f64> = (0..2).map(|a| rng.next_range(sbox.lo[a], sbox.hi[a])).collect();
            let z = IncidencePoint::on_manifold(x, &sp);
            if b.membership(&z) {
                found += 1;
                assert!(env.contains_e(&z.first.coords));
                assert!(env.contains_estar(&z.second.coords));
            }
        }
        assert!(found > 0, "sampler never hit the ball");
    }

    #[test]
    fn rasterized_envelope_measure_close_to_exact() {
        // rasterization error oracle: |raster - exact| <= 3 h S with S a
        // crude surface bound, on 5 random parameter draws
        for draw in 0..5 {
            let b = random_ball(2, 99, draw);
            let env = envelope(&b);
            let set = env.rasterize_e(64);
            let exact = env.e_measure();
            let h = set
                .geometry()
                .spacing
                .iter()
                .cloned()
                .fold(0.0f64, f64::max);
            let min_thickness = b.rho().min(b.r().iter().cloned().fold(f64::INFINITY, f64::min));
            let surface_bound = 2.0 * 2.0 * exact / min_thickness;
            let err = (set.measure() - exact).abs();
            assert!(
                err <= 3.0 * h * surface_bound,
                "draw {draw}: err {err} budget {}",
                3.0 * h * surface_bound
            );
        }
    }

    #[test]
    fn shrunk_slice_full_box_at_center() {
        let b = ball_d2_unit();
        let q = b.suggested_quadrature();
        let m = shrunk_slice_measure(&b, 0.1, &b.center().first, &q).unwrap();
        assert_eq!(m, 2.0); // prod 2 r*_j exactly
    }

    #[test]
    fn shrunk_slice_boundary_epsilon() {
        // eps = 1/(2(2d-1)): the residual bound (2d-1) eps rho = rho/2 < rho
        let d = 2;
        let b = ball_d2_unit();
        let eps = 1.0 / (2.0 * (2.0 * d as f64 - 1.0));
        let q = b.suggested_quadrature();
        // probe several x inside the eps-shrunk envelope
        let mut rng = CounterRng::new(3, 0);
        for _ in 0..50 {
            let xp = rng.next_range(-0.99 * eps, 0.99 * eps);
            let xd = xp * xp + rng.next_range(-0.99 * eps, 0.99 * eps);
            let x = SpacePoint::new(vec![xp, xd]);
            let m = shrunk_slice_measure(&b, eps, &x, &q).unwrap();
            assert_eq!(m, 2.0);
        }
    }

    #[test]
    fn shrunk_slice_rejects_outside_point() {
        let b = ball_d2_unit();
        let q = b.suggested_quadrature();
        let x = SpacePoint::new(vec![0.5, 0.0]); // frame coord 0.5 >= eps r = 0.1
        assert!(matches!(
            shrunk_slice_measure(&b, 0.1, &x, &q),
            Err(Error::NotInShrunkSet(_))
        ));
    }

    #[test]
    fn normalization_word_maps_to_unit() {
        for draw in 0..10 {
            for d in [2usize, 3] {
                let b = random_ball(d, 1234, draw);
                let w = normalization_word(&b).unwrap();
                let n = apply_ball_word(&w, &b).unwrap();
                assert!((n.rho() - 1.0).abs() < 1e-9, "rho {}", n.rho());
                for j in 0..d - 1 {
                    assert!((n.r()[j] - 1.0).abs() < 1e-9);
                    assert!((n.r_star()[j] - 1.0).abs() < 1e-9);
                }
                for c in n.center().first.coords.iter().chain(&n.center().second.coords) {
                    assert!(c.abs() < 1e-9, "center coordinate {c}");
                }
            }
        }
    }

    #[test]
    fn apply_ball_dilation_scales_radii() {
        let b = ball_d2_unit();
        let g = SymmetryElement::ParabolicDilation { lambda: 2.0 };
        let t = apply_ball(&g, &b).unwrap();
        assert_eq!(t.r()[0], 2.0);
        assert_eq!(t.r_star()[0], 2.0);
        assert_eq!(t.rho(), 4.0);
    }

    #[test]
    fn apply_ball_sheared_linear_diag() {
        let center = IncidencePoint::new(
            SpacePoint::new(vec![0.0; 3]),
            SpacePoint::new(vec![0.0; 3]),
        );
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let b = make_ball(center, basis, vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let g = SymmetryElement::ShearedLinear { matrix: SquareMatrix::diagonal(&[2.0, 2.0]) };
        let t = apply_ball(&g, &b).unwrap();
        assert_eq!(t.r(), &[2.0, 2.0]);
        assert_eq!(t.r_star(), &[0.5, 0.5]);
        assert_eq!(t.rho(), 1.0);
    }

    #[test]
    fn apply_ball_rejects_incompatible_frame() {
        let center = IncidencePoint::new(
            SpacePoint::new(vec![0.0; 3]),
            SpacePoint::new(vec![0.0; 3]),
        );
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let b = make_ball(center, basis, vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let g = SymmetryElement::ShearedLinear {
            matrix: SquareMatrix::new(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap(),
        };
        assert!(matches!(apply_ball(&g, &b), Err(Error::IncompatibleFrame(_))));
    }

    #[test]
    fn ball_image_is_transformed_membership() {
        // membership commutes with the group action
        let b = random_ball(2, 55, 0);
        let g = SymmetryWord(vec![
            SymmetryElement::Shear { delta: vec![0.7] },
            SymmetryElement::ParabolicDilation { lambda: 1.5 },
            SymmetryElement::Translation { v: vec![0.2, -0.4] },
        ]);
        let tb = apply_ball_word(&g, &b).unwrap();
        let env = envelope(&b);
        let ebox = env.e_box();
        let sbox = env.estar_box();
        let mut rng = CounterRng::new(8, 0);
        let mut hits = 0;
        for _ in 0..5000 {
            let x = SpacePoint::new((0..2).map(|a| rng.next_range(ebox.lo[a], ebox.hi[a])).collect());
            let sp = [rng.next_range(sbox.lo[0], sbox.hi[0])];
            let z = IncidencePoint::on_manifold(x, &sp);
            let inside = b.membership(&z);
            if inside {
                hits += 1;
            }
            let gz = IncidencePoint::new(g.apply_first(&z.first), g.apply_second(&z.second));
            assert_eq!(inside, tb.membership(&gz), "membership must commute with the action");
        }
        assert!(hits > 0);
    }

    #[test]
    fn cover_delta_one_is_the_ball() {
        let b = ball_d2_unit();
        let c = cover(&b, 1.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0], b);
    }

    #[test]
    fn cover_rejects_bad_delta() {
        let b = ball_d2_unit();
        assert!(matches!(cover(&b, 0.0), Err(Error::DeltaOutOfRange(_))));
        assert!(matches!(cover(&b, 1.5), Err(Error::DeltaOutOfRange(_))));
    }

    #[test]
    fn cover_children_have_exact_measure_fraction() {
        let b = random_ball(2, 7, 3);
        let delta = 1.0 / 8.0;
        let family = cover(&b, delta).unwrap();
        assert!(!family.is_empty());
        let parent = envelope(&b).e_measure();
        let parent_star = envelope(&b).estar_measure();
        for sub in family.iter().take(20) {
            let env = envelope(sub);
            assert!((env.e_measure() - delta * parent).abs() < 1e-9 * parent);
            assert!((env.estar_measure() - delta * parent_star).abs() < 1e-9 * parent_star);
        }
    }

    #[test]
    fn envelope_transform_closed_form_examples() {
        // at the center of the unit ball the slab condition vanishes along
        // the parabola, leaving the dual box of width 2 r* = 2
        let b = ball_d2_unit();
        assert_eq!(envelope_transform_at(&b, &[0.0, 0.0]), 2.0);
        assert_eq!(envelope_transform_transpose_at(&b, &[0.0, 0.0]), 2.0);
    }

    #[test]
    fn envelope_transform_matches_lattice_route() {
        for draw in [0u64, 2, 4] {
            let b = random_ball(2, 314, draw);
            let env = envelope(&b);
            let estar = env.rasterize_estar(96);
            let q = b.suggested_quadrature();
            let mut rng = CounterRng::new(13, draw);
            let ebox = env.e_box();
            let mut checked = 0;
            while checked < 5 {
                let x: Vec<f64> =
                    (0..2).map(|a| rng.next_range(ebox.lo[a], ebox.hi[a])).collect();
                if !env.contains_e(&x) {
                    continue;
                }
                checked += 1;
                let exact = envelope_transform_at(&b, &x);
                let lattice = crate::transform::forward_count(&estar, &x, &q);
                let scale = exact.max(lattice).max(0.05 * b.r_star()[0]);
                assert!(
                    (exact - lattice).abs() <= 0.08 * scale,
                    "draw {draw}: exact {exact} vs lattice {lattice}"
                );
            }
        }
    }

    #[test]
    fn fast_and_grid_scores_agree_on_unit_ball() {
        let b = ball_d2_unit();
        let q = b.suggested_quadrature();
        let fast = verify_quasiextremal_with(&b, &q, 48).unwrap();
        let grid = verify_quasiextremal_grid(&b, &q, 48).unwrap();
        assert!(
            (fast.epsilon - grid.epsilon).abs() <= 0.02 * grid.epsilon,
            "fast {} vs grid {}",
            fast.epsilon,
            grid.epsilon
        );
    }

    #[test]
    fn epsilon_invariant_under_parabolic_dilation() {
        // (r, r*, rho) -> (lambda r, lambda r*, lambda^2 rho) leaves the
        // continuum ratio fixed; discretization noise budgeted at 2%
        let b = random_ball(2, 4242, 1);
        let base = verify_quasiextremal(&b, &b.suggested_quadrature()).unwrap().epsilon;
        for lambda in [0.5, 2.0] {
            let g = crate::symmetry::SymmetryElement::ParabolicDilation { lambda };
            let tb = apply_ball(&g, &b).unwrap();
            let eps = verify_quasiextremal(&tb, &tb.suggested_quadrature()).unwrap().epsilon;
            assert!(
                (eps - base).abs() <= 0.02 * base,
                "lambda {lambda}: {eps} vs {base}"
            );
        }
    }

    #[test]
    fn epsilon_invariant_under_anisotropic_rescale_d3() {
        // (r_1, r*_1) -> (4 r_1, r*_1 / 4) at fixed rho, via the linear
        // action diagonal in the ball frame
        let center =
            IncidencePoint::on_manifold(SpacePoint::new(vec![0.2, -0.1, 0.4]), &[-0.3, 0.5]);
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let b = make_ball(center, basis, vec![1.0, 1.5], vec![1.2, 0.8]).unwrap();
        let base = verify_quasiextremal(&b, &b.suggested_quadrature()).unwrap().epsilon;
        let g = crate::symmetry::SymmetryElement::ShearedLinear {
            matrix: SquareMatrix::diagonal(&[4.0, 1.0]),
        };
        let tb = apply_ball(&g, &b).unwrap();
        assert_eq!(tb.r()[0], 4.0);
        assert!((tb.r_star()[0] - 0.3).abs() < 1e-12);
        assert!((tb.rho() - b.rho()).abs() < 1e-12);
        let eps = verify_quasiextremal(&tb, &tb.suggested_quadrature()).unwrap().epsilon;
        assert!((eps - base).abs() <= 0.02 * base, "{eps} vs {base}");
    }

    #[test]
    fn ball_json_roundtrip() {
        let b = random_ball(3, 21, 4);
        let j = serde_json::to_string(&b).unwrap();
        assert!(j.contains("center_x") && j.contains("r_star") && j.contains("rho"));
        let back: BallParams = serde_json::from_str(&j).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn ball_json_validation_error_names_constraint() {
        let bad = serde_json::json!({
            "center_x": [0.0, 0.0],
            "center_xstar": [0.0, 1.0],
            "basis": [1.0],
            "r": [1.0],
            "r_star": [1.0],
            "rho": 1.0,
        });
        let err = serde_json::from_value::<BallParams>(bad).unwrap_err().to_string();
        assert!(err.contains("OffManifold"), "{err}");
    }
}
