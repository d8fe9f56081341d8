//! The incidence-preserving symmetry group: joint translations, shears,
//! rotations of the primed coordinates, parabolic dilations, and the
//! invertible linear action in sheared coordinates.
//!
//! Elements store their exact pair of maps (g, g*): the two factors of
//! R^d x R^d transform differently, so nothing is silently symmetrized.
//! Words (ordered generator lists) are the serialized group elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{add, dot, norm_sq, scale, IncidencePoint, SpacePoint, SquareMatrix};
use crate::rng::CounterRng;

/// Residual tolerance: ~10^3 double-precision epsilons of headroom over the
/// longest generator words exercised in tests.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymmetryElement {
    /// Joint translation of both factors by v in R^d.
    Translation { v: Vec<f64> },
    /// Shear by Delta in R^(d-1); the two factors transform differently.
    Shear { delta: Vec<f64> },
    /// Orthogonal map of the primed coordinates, applied to both factors.
    Rotation { matrix: SquareMatrix },
    /// (x', x_d) -> (lambda x', lambda^2 x_d) on both factors.
    ParabolicDilation { lambda: f64 },
    /// Invertible A on the first factor in sheared coordinates, with
    /// (A^T)^(-1) on the second.
    ShearedLinear { matrix: SquareMatrix },
}

impl SymmetryElement {
    /// Map on the first factor.
    pub fn apply_first(&self, x: &SpacePoint) -> SpacePoint {
        let d = x.dim();
        let xp = x.primed();
        let xd = x.last();
        let coords = match self {
            SymmetryElement::Translation { v } => add(&x.coords, v),
            SymmetryElement::Shear { delta } => {
                let mut c = add(xp, delta);
                c.push(xd + 2.0 * dot(delta, xp) + norm_sq(delta));
                c
            }
            SymmetryElement::Rotation { matrix } => {
                let mut c = matrix.apply(xp);
                c.push(xd);
                c
            }
            SymmetryElement::ParabolicDilation { lambda } => {
                let mut c = scale(xp, *lambda);
                c.push(lambda * lambda * xd);
                c
            }
            SymmetryElement::ShearedLinear { matrix } => {
                let ax = matrix.apply(xp);
                let mut c = ax.clone();
                c.push(xd - norm_sq(xp) + norm_sq(&ax));
                c
            }
        };
        debug_assert_eq!(coords.len(), d);
        SpacePoint::new(coords)
    }

    /// Map on the second factor.
    pub fn apply_second(&self, y: &SpacePoint) -> SpacePoint {
        let yp = y.primed();
        let yd = y.last();
        let coords = match self {
            SymmetryElement::Translation { v } => add(&y.coords, v),
            SymmetryElement::Shear { delta } => {
                let mut c = yp.to_vec();
                c.push(yd + 2.0 * dot(delta, yp));
                c
            }
            SymmetryElement::Rotation { matrix } => {
                let mut c = matrix.apply(yp);
                c.push(yd);
                c
            }
            SymmetryElement::ParabolicDilation { lambda } => {
                let mut c = scale(yp, *lambda);
                c.push(lambda * lambda * yd);
                c
            }
            SymmetryElement::ShearedLinear { matrix } => {
                let b = matrix
                    .transpose()
                    .inverse()
                    .expect("validated invertible on construction");
                let by = b.apply(yp);
                let mut c = by.clone();
                c.push(yd + norm_sq(yp) - norm_sq(&by));
                c
            }
        };
        SpacePoint::new(coords)
    }

    /// Declared measure scaling (first factor, second factor) in R^d.
    pub fn measure_factors(&self, d: usize) -> (f64, f64) {
        match self {
            SymmetryElement::Translation { .. }
            | SymmetryElement::Shear { .. }
            | SymmetryElement::Rotation { .. } => (1.0, 1.0),
            SymmetryElement::ParabolicDilation { lambda } => {
                let f = lambda.powi(d as i32 + 1);
                (f, f)
            }
            SymmetryElement::ShearedLinear { matrix } => {
                let det = matrix.det().abs();
                (det, 1.0 / det)
            }
        }
    }

    pub fn inverse(&self) -> Result<SymmetryElement> {
        Ok(match self {
            SymmetryElement::Translation { v } => {
                SymmetryElement::Translation { v: scale(v, -1.0) }
            }
            SymmetryElement::Shear { delta } => {
                SymmetryElement::Shear { delta: scale(delta, -1.0) }
            }
            SymmetryElement::Rotation { matrix } => {
                SymmetryElement::Rotation { matrix: matrix.transpose() }
            }
            SymmetryElement::ParabolicDilation { lambda } => {
                SymmetryElement::ParabolicDilation { lambda: 1.0 / lambda }
            }
            SymmetryElement::ShearedLinear { matrix } => {
                SymmetryElement::ShearedLinear { matrix: matrix.inverse()? }
            }
        })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let m = d - 1;
        match self {
            SymmetryElement::Translation { v } if v.len() != d => Err(Error::InvalidGeometry(
                format!("translation vector has length {}, expected {d}", v.len()),
            )),
            SymmetryElement::Shear { delta } if delta.len() != m => Err(Error::InvalidGeometry(
                format!("shear vector has length {}, expected {m}", delta.len()),
            )),
            SymmetryElement::Rotation { matrix } => {
                if matrix.n != m {
                    return Err(Error::InvalidGeometry("rotation size mismatch".into()));
                }
                let gram = matrix.matmul(&matrix.transpose());
                let mut defect = 0.0f64;
                for i in 0..m {
                    for j in 0..m {
                        let want = if i == j { 1.0 } else { 0.0 };
                        defect = f64::max(defect, (gram.at(i, j) - want).abs());
                    }
                }
                if defect > 1e-9 {
                    return Err(Error::BasisNotOrthonormal { deviation: defect });
                }
                Ok(())
            }
            SymmetryElement::ParabolicDilation { lambda } if !(*lambda > 0.0) => Err(
                Error::InvalidGeometry(format!("dilation factor must be positive, got {lambda}")),
            ),
            SymmetryElement::ShearedLinear { matrix } => {
                if matrix.n != m {
                    return Err(Error::InvalidGeometry("linear action size mismatch".into()));
                }
                matrix.inverse().map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

/// An ordered generator word, applied first-to-last.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymmetryWord(pub Vec<SymmetryElement>);

impl SymmetryWord {
    pub fn identity() -> Self {
        SymmetryWord(Vec::new())
    }

    pub fn single(e: SymmetryElement) -> Self {
        SymmetryWord(vec![e])
    }

    pub fn apply_first(&self, x: &SpacePoint) -> SpacePoint {
        self.0.iter().fold(x.clone(), |p, e| e.apply_first(&p))
    }

    pub fn apply_second(&self, y: &SpacePoint) -> SpacePoint {
        self.0.iter().fold(y.clone(), |p, e| e.apply_second(&p))
    }

    pub fn measure_factors(&self, d: usize) -> (f64, f64) {
        self.0.iter().fold((1.0, 1.0), |(a, b), e| {
            let (fa, fb) = e.measure_factors(d);
            (a * fa, b * fb)
        })
    }

    pub fn inverse(&self) -> Result<SymmetryWord> {
        let mut out = Vec::with_capacity(self.0.len());
        for e in self.0.iter().rev() {
            out.push(e.inverse()?);
        }
        Ok(SymmetryWord(out))
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.0.iter().try_for_each(|e| e.validate(d))
    }
}

/// compose(g, h) acts as g after h.
pub fn compose(g: &SymmetryWord, h: &SymmetryWord) -> SymmetryWord {
    let mut elements = h.0.clone();
    elements.extend(g.0.iter().cloned());
    SymmetryWord(elements)
}

/// Transform an incidence pair, preserving the manifold.
pub fn apply_pair(word: &SymmetryWord, z: &IncidencePoint) -> Result<IncidencePoint> {
    let tol = RESIDUAL_TOL * z.residual_scale();
    let res = z.residual();
    if res > tol {
        return Err(Error::OffManifold { residual: res, tolerance: tol });
    }
    Ok(IncidencePoint::new(word.apply_first(&z.first), word.apply_second(&z.second)))
}

/// The sheared coordinate change on the first factor: x_d -> x_d - |x'|^2.
/// In these coordinates the manifold equation reads t* - t = 2 x'.x*'.
pub fn to_sheared_first(x: &SpacePoint) -> SpacePoint {
    let mut c = x.primed().to_vec();
    c.push(x.last() - norm_sq(x.primed()));
    SpacePoint::new(c)
}

/// The sheared coordinate change on the second factor: y_d -> y_d + |y'|^2.
pub fn to_sheared_second(y: &SpacePoint) -> SpacePoint {
    let mut c = y.primed().to_vec();
    c.push(y.last() + norm_sq(y.primed()));
    SpacePoint::new(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub samples: usize,
    pub max_residual: f64,
    /// Worst relative mismatch between the finite-difference Jacobian and
    /// the declared per-factor measure scaling.
    pub max_jacobian_error: f64,
}

/// Draw on-manifold points, apply the word, report the worst image residual
/// and a finite-difference check of the declared measure scalings.
pub fn check_invariance(
    word: &SymmetryWord,
    d: usize,
    samples: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    word.validate(d)?;
    let mut rng = CounterRng::new(seed, 17);
    let mut max_residual = 0.0f64;
    for _ in 0..samples {
        let x = SpacePoint::new((0..d).map(|_| rng.next_range(-2.0, 2.0)).collect());
        let second_primed: Vec<f64> = (0..d - 1).map(|_| rng.next_range(-2.0, 2.0)).collect();
        let z = IncidencePoint::on_manifold(x, &second_primed);
        let image = apply_pair(word, &z)?;
        max_residual = max_residual.max(image.residual() / image.residual_scale().max(1.0));
    }

    // Finite-difference Jacobian determinants at a few probe points.
    let (want_first, want_second) = word.measure_factors(d);
    let mut max_jacobian_error = 0.0f64;
    let h = 1e-5;
    for probe in 0..4u64 {
        let mut rng = CounterRng::new(seed ^ 0xABCD, probe);
        let base: Vec<f64> = (0..d).map(|_| rng.next_range(-1.0, 1.0)).collect();
        for (map, want) in [(true, want_first), (false, want_second)] {
            let f = |p: &[f64]| -> Vec<f64> {
                let sp = SpacePoint::new(p.to_vec());
                if map { word.apply_first(&sp) } else { word.apply_second(&sp) }.coords
            };
            let mut jac = vec![0.0; d * d];
            for j in 0..d {
                let mut hi = base.clone();
                let mut lo = base.clone();
                hi[j] += h;
                lo[j] -= h;
                let (fhi, flo) = (f(&hi), f(&lo));
                for i in 0..d {
                    jac[i * d + j] = (fhi[i] - flo[i]) / (2.0 * h);
                }
            }
            let det = SquareMatrix::new(d, jac)?.det().abs();
            max_jacobian_error = max_jacobian_error.max((det - want).abs() / want.max(1e-12));
        }
    }
    Ok(InvarianceReport { samples, max_residual, max_jacobian_error })
}
