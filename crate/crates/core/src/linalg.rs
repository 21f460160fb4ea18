//! Symmetric 3x3 matrices and a cyclic Jacobi eigen solver.

use crate::math;

pub type Mat3 = [[f64; 3]; 3];

/// Symmetric 3x3 matrix stored as `(xx, xy, xz, yy, yz, zz)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat3(pub [f64; 6]);

/// Eigen-decomposition with eigenvalues in descending order. `vectors[i]` is
/// the unit eigenvector of `values[i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen3 {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

impl SymMat3 {
    pub const IDENTITY: SymMat3 = SymMat3([1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    pub const ZERO: SymMat3 = SymMat3([0.0; 6]);

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        SymMat3([a, 0.0, 0.0, b, 0.0, c])
    }

    pub fn scaled_identity(s: f64) -> Self {
        Self::diag(s, s, s)
    }

    pub fn to_mat(&self) -> Mat3 {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        [[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]
    }

    /// Symmetric part of an arbitrary matrix.
    pub fn from_mat(m: &Mat3) -> Self {
        SymMat3([
            m[0][0],
            0.5 * (m[0][1] + m[1][0]),
            0.5 * (m[0][2] + m[2][0]),
            m[1][1],
            0.5 * (m[1][2] + m[2][1]),
            m[2][2],
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        math::sqrt(xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz))
    }

    pub fn add(&self, o: &SymMat3) -> SymMat3 {
        let mut r = self.0;
        for (a, b) in r.iter_mut().zip(o.0.iter()) {
            *a += b;
        }
        SymMat3(r)
    }

    pub fn sub(&self, o: &SymMat3) -> SymMat3 {
        let mut r = self.0;
        for (a, b) in r.iter_mut().zip(o.0.iter()) {
            *a -= b;
        }
        SymMat3(r)
    }

    pub fn scale(&self, s: f64) -> SymMat3 {
        let mut r = self.0;
        r.iter_mut().for_each(|a| *a *= s);
        SymMat3(r)
    }

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.to_mat();
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// `A * self * A^T`, symmetrized.
    pub fn congruence(&self, a: &Mat3) -> SymMat3 {
        let s = self.to_mat();
        let as_ = mat_mul(a, &s);
        SymMat3::from_mat(&mat_mul(&as_, &transpose(a)))
    }

    /// `V diag(values) V^T` for an orthonormal set of vectors.
    pub fn from_eigen(values: [f64; 3], vectors: &[[f64; 3]; 3]) -> SymMat3 {
        let mut r = [0.0; 6];
        let idx = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        for (slot, &(i, j)) in idx.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += values[k] * vectors[k][i] * vectors[k][j];
            }
            r[slot] = acc;
        }
        SymMat3(r)
    }

    /// Apply a scalar function to the eigenvalues.
    pub fn map_eigenvalues<F: Fn(f64) -> f64>(&self, f: F) -> SymMat3 {
        let e = eigen_symmetric3(self);
        SymMat3::from_eigen([f(e.values[0]), f(e.values[1]), f(e.values[2])], &e.vectors)
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    r
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = a[j][i];
        }
    }
    r
}

pub fn determinant(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric
/// 3x3 matrix by cyclic Jacobi rotations.
pub fn eigen_symmetric3(m: &SymMat3) -> Eigen3 {
    let mut a = m.to_mat();
    let mut v: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = m.frobenius_norm();
    if scale > 0.0 && scale.is_finite() {
        for _sweep in 0..64 {
            let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            if off <= (1e-17 * scale) * (1e-17 * scale) {
                break;
            }
            for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (math::abs(theta) + math::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                // A' = J^T A J with J the rotation in the (p, q) plane
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap_or(core::cmp::Ordering::Equal));
    let mut values = [0.0; 3];
    let mut vectors = [[0.0; 3]; 3];
    for (slot, &k) in order.iter().enumerate() {
        values[slot] = a[k][k];
        vectors[slot] = [v[0][k], v[1][k], v[2][k]];
    }
    Eigen3 { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_sorted() {
        let e = eigen_symmetric3(&SymMat3::diag(3.0, 1.0, 2.0));
        assert_eq!(e.values, [3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0], [1.0, 0.0, 0.0]);
        assert_eq!(e.vectors[1], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_degenerate() {
        let e = eigen_symmetric3(&SymMat3::IDENTITY);
        assert_eq!(e.values, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_matrix() {
        let e = eigen_symmetric3(&SymMat3::ZERO);
        assert_eq!(e.values, [0.0; 3]);
    }

    #[test]
    fn residual_and_orthonormality() {
        let m = SymMat3([2.0, -1.0, 0.5, 3.0, 0.25, -4.0]);
        let e = eigen_symmetric3(&m);
        for i in 0..3 {
            let av = m.mul_vec(e.vectors[i]);
            for k in 0..3 {
                assert!((av[k] - e.values[i] * e.vectors[i][k]).abs() < 1e-12);
            }
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| e.vectors[i][k] * e.vectors[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
    }
}
