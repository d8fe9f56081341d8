//! Points of R^d, incidence pairs, and the small dense matrices used for
//! bases, rotations, and ellipsoid shapes. The ambient dimension is 2 or 3,
//! so all matrix work is on 1x1 .. 3x3 matrices with closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point x = (x', x_d) of R^d. The last coordinate is distinguished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacePoint {
    pub coords: Vec<f64>,
}

impl SpacePoint {
    pub fn new(coords: Vec<f64>) -> Self {
        SpacePoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The first d-1 coordinates x'.
    pub fn primed(&self) -> &[f64] {
        &self.coords[..self.coords.len() - 1]
    }

    /// The distinguished last coordinate x_d.
    pub fn last(&self) -> f64 {
        *self.coords.last().expect("point has dimension >= 1")
    }
}

/// A pair z = (x, x*) of points; on the incidence manifold when
/// x*_d = x_d - |x*' - x'|^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidencePoint {
    pub first: SpacePoint,
    pub second: SpacePoint,
}

impl IncidencePoint {
    pub fn new(first: SpacePoint, second: SpacePoint) -> Self {
        IncidencePoint { first, second }
    }

    /// Build the unique on-manifold pair over (x, x*'): solves for x*_d.
    pub fn on_manifold(first: SpacePoint, second_primed: &[f64]) -> Self {
        let last = first.last() - dist_sq(second_primed, first.primed());
        let mut coords = second_primed.to_vec();
        coords.push(last);
        IncidencePoint { first, second: SpacePoint::new(coords) }
    }

    /// The manifold residual |x*_d - x_d + |x*' - x'|^2|.
    pub fn residual(&self) -> f64 {
        (self.second.last() - self.first.last() + dist_sq(self.second.primed(), self.first.primed()))
            .abs()
    }

    /// Scale-aware tolerance for residual comparisons: machine-level slack
    /// proportional to the magnitudes entering the residual.
    pub fn residual_scale(&self) -> f64 {
        1.0 + self.first.last().abs()
            + self.second.last().abs()
            + dist_sq(self.second.primed(), self.first.primed())
    }

    pub fn is_incident(&self, tolerance: f64) -> bool {
        self.residual() <= tolerance
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

/// Dense n x n matrix, row-major, n in 1..=3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n || n == 0 {
            return Err(Error::InvalidGeometry(format!(
                "matrix needs {}x{} entries, got {}",
                n,
                n,
                data.len()
            )));
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        SquareMatrix { n, data }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::identity(n);
        for i in 0..n {
            m.data[i * n + i] = diag[i];
        }
        m
    }

    /// Rotation of R^2 by `theta` (the only nontrivial case at desk scale
    /// is d - 1 = 2).
    pub fn rotation2(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        SquareMatrix { n: 2, data: vec![c, -s, s, c] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                data[j * self.n + i] = self.at(i, j);
            }
        }
        SquareMatrix { n: self.n, data }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = (0..n).map(|k| self.at(i, k) * other.at(k, j)).sum();
            }
        }
        SquareMatrix { n, data }
    }

    pub fn det(&self) -> f64 {
        let d = &self.data;
        match self.n {
            1 => d[0],
            2 => d[0] * d[3] - d[1] * d[2],
            3 => {
                d[0] * (d[4] * d[8] - d[5] * d[7]) - d[1] * (d[3] * d[8] - d[5] * d[6])
                    + d[2] * (d[3] * d[7] - d[4] * d[6])
            }
            _ => unreachable!("desk scale matrices are at most 3x3"),
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        let scale = self.data.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        if det.abs() < 1e-12 * scale.powi(self.n as i32) {
            return Err(Error::NonInvertible(format!(
                "matrix determinant {det} below conditioning threshold"
            )));
        }
        let d = &self.data;
        let data = match self.n {
            1 => vec![1.0 / d[0]],
            2 => vec![d[3] / det, -d[1] / det, -d[2] / det, d[0] / det],
            3 => {
                let c = |i: usize, j: usize| -> f64 {
                    let rows: Vec<usize> = (0..3).filter(|&r| r != i).collect();
                    let cols: Vec<usize> = (0..3).filter(|&c| c != j).collect();
                    let minor = self.at(rows[0], cols[0]) * self.at(rows[1], cols[1])
                        - self.at(rows[0], cols[1]) * self.at(rows[1], cols[0]);
                    if (i + j) % 2 == 0 {
                        minor
                    } else {
                        -minor
                    }
                };
                // adjugate transpose / det
                let mut out = vec![0.0; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        out[j * 3 + i] = c(i, j) / det;
                    }
                }
                out
            }
            _ => unreachable!(),
        };
        Ok(SquareMatrix { n: self.n, data })
    }

    /// Max |A - A^T| entry.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        m
    }

    /// Eigen-decomposition of a symmetric matrix, n in {1, 2}: returns
    /// (eigenvalues, eigenvectors as rows), eigenvalues descending.
    pub fn symmetric_eigen(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        match self.n {
            1 => Ok((vec![self.data[0]], vec![vec![1.0]])),
            2 => {
                let (a, b, c) = (self.at(0, 0), 0.5 * (self.at(0, 1) + self.at(1, 0)), self.at(1, 1));
                let tr = a + c;
                let disc = ((a - c) * 0.5).hypot(b);
                let l1 = 0.5 * tr + disc;
                let l2 = 0.5 * tr - disc;
                let v1 = if b.abs() > 1e-14 * (a.abs() + c.abs() + 1.0) {
                    let v = vec![l1 - c, b];
                    let n = norm(&v);
                    vec![v[0] / n, v[1] / n]
                } else if a >= c {
                    vec![1.0, 0.0]
                } else {
                    vec![0.0, 1.0]
                };
                let v2 = vec![-v1[1], v1[0]];
                Ok((vec![l1, l2], vec![v1, v2]))
            }
            n => Err(Error::InvalidGeometry(format!(
                "symmetric eigendecomposition implemented for n <= 2, got {n}"
            ))),
        }
    }
}

/// Clip a convex polygon (CCW vertex list) by the half-plane
/// {x : <x, normal> <= offset}.
pub fn clip_halfplane(poly: &[Vec<f64>], normal: &[f64], offset: f64) -> Vec<Vec<f64>> {
    let m = poly.len();
    let mut next = Vec::with_capacity(m + 2);
    if m == 0 {
        return next;
    }
    for i in 0..m {
        let a = &poly[i];
        let b = &poly[(i + 1) % m];
        let fa = dot(a, normal) - offset;
        let fb = dot(b, normal) - offset;
        if fa <= 0.0 {
            next.push(a.clone());
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let t = fa / (fa - fb);
            next.push(vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    next
}

/// Shoelace area of a convex polygon.
pub fn polygon_area(poly: &[Vec<f64>]) -> f64 {
    let m = poly.len();
    if m < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..m {
        let a = &poly[i];
        let b = &poly[(i + 1) % m];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc.abs() / 2.0
}

/// Gram-matrix deviation from the identity for a set of row vectors.
pub fn orthonormality_defect(rows: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, ri) in rows.iter().enumerate() {
        for (j, rj) in rows.iter().enumerate() {
            let g = dot(ri, rj);
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_manifold_pairs_have_zero_residual() {
        let z = IncidencePoint::on_manifold(SpacePoint::new(vec![0.3, -1.2, 2.0]), &[1.5, 0.25]);
        assert!(z.residual() < 1e-14);
    }

    #[test]
    fn residual_detects_off_manifold() {
        let z = IncidencePoint::new(
            SpacePoint::new(vec![0.0, 0.0]),
            SpacePoint::new(vec![0.0, 1.0]),
        );
        assert!((z.residual() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_roundtrip_2x2() {
        let a = SquareMatrix::new(2, vec![2.0, 1.0, -1.0, 3.0]).unwrap();
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id.at(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_roundtrip_3x3() {
        let a = SquareMatrix::new(3, vec![2.0, 1.0, 0.5, -1.0, 3.0, 0.0, 0.25, 0.0, 1.5]).unwrap();
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id.at(i, j) - want).abs() < 1e-12, "entry {i},{j}");
            }
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = SquareMatrix::new(2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(a.inverse(), Err(Error::NonInvertible(_))));
    }

    #[test]
    fn eigen_2x2_diagonalizes() {
        let m = SquareMatrix::new(2, vec![3.0, 1.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = m.symmetric_eigen().unwrap();
        for (l, v) in vals.iter().zip(&vecs) {
            let mv = m.apply(v);
            for k in 0..2 {
                assert!((mv[k] - l * v[k]).abs() < 1e-12);
            }
        }
        assert!(vals[0] >= vals[1]);
        assert!(orthonormality_defect(&vecs) < 1e-12);
    }
}
