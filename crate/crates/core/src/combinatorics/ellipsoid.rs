//! Minimum-volume enclosing ellipsoid of a finite point set (Khachiyan's
//! barycentric ascent on the lifted problem), for the 1- and 2-dimensional
//! point sets the extraction pipeline produces.

use crate::error::{Error, Result};
use crate::geom::SquareMatrix;

/// {x : (x - center)^T shape^(-1) (x - center) <= n}, with principal
/// semi-axes sqrt(n * eigenvalue) along the (row) eigenvectors.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    pub shape: SquareMatrix,
    pub semi_axes: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
}

impl Ellipsoid {
    pub fn contains(&self, p: &[f64], slack: f64) -> bool {
        let n = self.shape.n;
        let diff: Vec<f64> = (0..n).map(|i| p[i] - self.center[i]).collect();
        let inv = match self.shape.inverse() {
            Ok(m) => m,
            Err(_) => return false,
        };
        let q: f64 = (0..n)
            .map(|i| diff[i] * (0..n).map(|j| inv.at(i, j) * diff[j]).sum::<f64>())
            .sum();
        q <= n as f64 * (1.0 + slack)
    }

    pub fn volume(&self) -> f64 {
        let n = self.shape.n;
        let unit_ball = match n {
            1 => 2.0,
            2 => std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI / 3.0,
        };
        unit_ball * self.semi_axes.iter().product::<f64>()
    }
}

/// Relative convergence criterion for the ascent.
pub const MVEE_TOL: f64 = 1e-6;

pub fn mvee(points: &[Vec<f64>]) -> Result<Ellipsoid> {
    if points.is_empty() {
        return Err(Error::ExtractionFailed("MVEE of an empty point set".into()));
    }
    let n = points[0].len();
    if n == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let c = 0.5 * (lo + hi);
        let a = 0.5 * (hi - lo);
        if !(a > 0.0) {
            return Err(Error::ExtractionFailed("degenerate 1-d point set".into()));
        }
        return Ok(Ellipsoid {
            center: vec![c],
            shape: SquareMatrix::new(1, vec![a * a])?,
            semi_axes: vec![a],
            axes: vec![vec![1.0]],
        });
    }
    if n > 2 {
        return Err(Error::DimensionUnsupported(n));
    }

    let count = points.len();
    let lift = n + 1;
    let mut u = vec![1.0 / count as f64; count];
    let mut err = f64::INFINITY;
    let mut iterations = 0usize;
    while err > MVEE_TOL && iterations < 2000 {
        // X = sum u_i q_i q_i^T on the lifted points q = (p, 1)
        let mut x = vec![0.0; lift * lift];
        for (w, p) in u.iter().zip(points) {
            let q = [p[0], p[1], 1.0];
            for i in 0..lift {
                for j in 0..lift {
                    x[i * lift + j] += w * q[i] * q[j];
                }
            }
        }
        let xinv = SquareMatrix::new(lift, x)?
            .inverse()
            .map_err(|_| Error::ExtractionFailed("MVEE normal matrix is singular".into()))?;
        let mut max_h = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for (k, p) in points.iter().enumerate() {
            let q = [p[0], p[1], 1.0];
            let mut h = 0.0;
            for i in 0..lift {
                for j in 0..lift {
                    h += q[i] * xinv.at(i, j) * q[j];
                }
            }
            if h > max_h {
                max_h = h;
                arg = k;
            }
        }
        let step = (max_h - lift as f64) / (lift as f64 * (max_h - 1.0));
        err = (max_h / lift as f64 - 1.0).abs();
        if step <= 0.0 {
            break;
        }
        for w in u.iter_mut() {
            *w *= 1.0 - step;
        }
        u[arg] += step;
        iterations += 1;
    }

    let mut center = vec![0.0; n];
    for (w, p) in u.iter().zip(points) {
        for i in 0..n {
            center[i] += w * p[i];
        }
    }
    let mut s = vec![0.0; n * n];
    for (w, p) in u.iter().zip(points) {
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] += w * (p[i] - center[i]) * (p[j] - center[j]);
            }
        }
    }
    let shape = SquareMatrix::new(n, s)?;
    let (vals, vecs) = shape.symmetric_eigen()?;
    if vals.iter().any(|&v| !(v > 1e-18)) {
        return Err(Error::ExtractionFailed("degenerate MVEE shape matrix".into()));
    }
    let semi_axes = vals.iter().map(|v| (n as f64 * v).sqrt()).collect();
    Ok(Ellipsoid { center, shape, semi_axes, axes: vecs })
}

/// MVEE of a balanced set: the input is symmetrized so the center is the
/// origin up to rounding.
pub fn mvee_centered(points: &[Vec<f64>]) -> Result<Ellipsoid> {
    let mut sym = Vec::with_capacity(points.len() * 2);
    for p in points {
        sym.push(p.clone());
        sym.push(p.iter().map(|c| -c).collect());
    }
    let mut e = mvee(&sym)?;
    for c in e.center.iter_mut() {
        *c = 0.0;
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mvee() {
        let pts = vec![vec![-2.0], vec![0.5], vec![3.0]];
        let e = mvee(&pts).unwrap();
        assert!((e.center[0] - 0.5).abs() < 1e-12);
        assert!((e.semi_axes[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_cross_gives_unit_circle() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let e = mvee(&pts).unwrap();
        assert!(e.center.iter().all(|c| c.abs() < 1e-6));
        for a in &e.semi_axes {
            assert!((a - 1.0).abs() < 5e-3, "semi-axis {a}");
        }
        for p in &pts {
            assert!(e.contains(p, 1e-4));
        }
    }

    #[test]
    fn anisotropic_box_vertices() {
        // vertices of [-4,4] x [-0.25,0.25]: MVEE semi-axes track the
        // enclosing ellipse of the rectangle (sqrt(2) * half-extents)
        let pts = vec![
            vec![4.0, 0.25],
            vec![4.0, -0.25],
            vec![-4.0, 0.25],
            vec![-4.0, -0.25],
        ];
        let e = mvee_centered(&pts).unwrap();
        let want_major = 4.0 * std::f64::consts::SQRT_2;
        let want_minor = 0.25 * std::f64::consts::SQRT_2;
        assert!((e.semi_axes[0] - want_major).abs() < 0.02 * want_major, "{:?}", e.semi_axes);
        assert!((e.semi_axes[1] - want_minor).abs() < 0.02 * want_minor, "{:?}", e.semi_axes);
        for p in &pts {
            assert!(e.contains(p, 1e-3));
        }
    }

    #[test]
    fn rotated_points_rotate_the_axes() {
        let theta: f64 = 0.7;
        let (s, c) = theta.sin_cos();
        let base = [
            [3.0, 0.1],
            [3.0, -0.1],
            [-3.0, 0.1],
            [-3.0, -0.1],
            [0.0, 0.1],
            [0.0, -0.1],
        ];
        let pts: Vec<Vec<f64>> = base
            .iter()
            .map(|p| vec![c * p[0] - s * p[1], s * p[0] + c * p[1]])
            .collect();
        let e = mvee_centered(&pts).unwrap();
        let major = &e.axes[0];
        let align = (major[0] * c + major[1] * s).abs();
        assert!(align > 0.999, "major axis misaligned: {align}");
    }
}
