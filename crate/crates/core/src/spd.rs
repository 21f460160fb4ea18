//! Affine-invariant Riemannian geometry on 3x3 symmetric positive-definite
//! tensors: Hessian-to-tensor mapping, geodesic distance, matrix log/exp and
//! the Fréchet (Karcher) mean.
//!
//! All matrix functions go through the Jacobi eigen solver in [`crate::linalg`].

use alloc::vec::Vec;

use crate::linalg::{eigen_symmetric3, Mat3, SymMat3};
use crate::math;
use crate::par;
use crate::vesselness::TensorField;
use crate::volume::VolumeGeometry;
use crate::{Error, Result};

/// Eigenvalue floor applied when mapping Hessians to tensors.
pub const EPS_SPD: f64 = 1e-8;

/// A symmetric positive-definite 3x3 tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdTensor(SymMat3);

impl SpdTensor {
    /// Validates positive definiteness (all eigenvalues > 0).
    pub fn new(m: SymMat3) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NotSpd(f64::NAN));
        }
        let e = eigen_symmetric3(&m);
        if !(e.values[2] > 0.0) {
            return Err(Error::NotSpd(e.values[2]));
        }
        Ok(SpdTensor(m))
    }

    pub const IDENTITY: SpdTensor = SpdTensor(SymMat3::IDENTITY);

    pub fn scaled_identity(s: f64) -> Result<Self> {
        Self::new(SymMat3::scaled_identity(s))
    }

    pub fn matrix(&self) -> &SymMat3 {
        &self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigen_symmetric3(&self.0).values[2]
    }

    pub fn sqrt(&self) -> SymMat3 {
        self.0.map_eigenvalues(math::sqrt)
    }

    pub fn inv_sqrt(&self) -> SymMat3 {
        self.0.map_eigenvalues(|l| 1.0 / math::sqrt(l))
    }

    pub fn inverse(&self) -> SpdTensor {
        SpdTensor(self.0.map_eigenvalues(|l| 1.0 / l))
    }

    /// `A T A^T`; stays SPD for invertible `A`.
    pub fn congruence(&self, a: &Mat3) -> Result<SpdTensor> {
        SpdTensor::new(self.0.congruence(a))
    }
}

/// Negate and floor the Hessian eigenvalues: `lambda -> max(-lambda, EPS_SPD)`.
/// Bright tubes (strongly negative curvature across the axis) become the
/// dominant tensor directions.
pub fn hessian_to_spd(h: &SymMat3) -> SpdTensor {
    let e = eigen_symmetric3(h);
    let vals = e.values.map(|l| if -l > EPS_SPD { -l } else { EPS_SPD });
    SpdTensor(SymMat3::from_eigen(vals, &e.vectors))
}

/// Matrix logarithm of an SPD tensor.
pub fn spd_log(t: &SpdTensor) -> SymMat3 {
    t.0.map_eigenvalues(math::ln)
}

/// Matrix logarithm with validation for arbitrary symmetric input.
pub fn spd_log_checked(m: &SymMat3) -> Result<SymMat3> {
    SpdTensor::new(*m).map(|t| spd_log(&t))
}

/// Matrix exponential of a symmetric matrix.
pub fn spd_exp(s: &SymMat3) -> SpdTensor {
    SpdTensor(s.map_eigenvalues(math::exp))
}

/// `sqrt(sum log^2 lambda_i)` over the eigenvalues of `inv_sqrt_a * B * inv_sqrt_a`.
pub fn geodesic_distance_with(inv_sqrt_a: &SymMat3, b: &SpdTensor) -> f64 {
    let m = b.0.congruence(&inv_sqrt_a.to_mat());
    let e = eigen_symmetric3(&m);
    let mut acc = 0.0;
    for &l in &e.values {
        let lg = math::ln(if l > 0.0 { l } else { f64::MIN_POSITIVE });
        acc += lg * lg;
    }
    math::sqrt(acc)
}

/// Affine-invariant geodesic distance
/// `|| log(A^{-1/2} B A^{-1/2}) ||_F`.
pub fn geodesic_distance(a: &SpdTensor, b: &SpdTensor) -> f64 {
    geodesic_distance_with(&a.inv_sqrt(), b)
}

/// Result of the Fréchet mean iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrechetMean {
    pub mean: SpdTensor,
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius norm of the tangent-space mean at the returned iterate.
    pub residual: f64,
}

pub const DEFAULT_MEAN_TOL: f64 = 1e-10;
pub const DEFAULT_MEAN_MAX_ITER: usize = 100;

/// Fréchet mean under the affine-invariant metric by the fixed-point
/// iteration `M <- M^{1/2} exp(mean_i log(M^{-1/2} T_i M^{-1/2})) M^{1/2}`,
/// started at the arithmetic mean. Non-convergence is reported through
/// `converged = false` with the last iterate.
pub fn frechet_mean(tensors: &[SpdTensor], tol: f64, max_iter: usize) -> Result<FrechetMean> {
    if tensors.is_empty() {
        return Err(Error::Empty("frechet_mean needs at least one tensor"));
    }
    let n = tensors.len() as f64;
    let mut acc = SymMat3::ZERO;
    for t in tensors {
        acc = acc.add(&t.0);
    }
    let mut mean = SpdTensor::new(acc.scale(1.0 / n))?;
    let mut iterations = 0;
    loop {
        let inv_sqrt = mean.inv_sqrt();
        let tangent = tangent_mean(&inv_sqrt, tensors);
        let residual = tangent.frobenius_norm();
        if residual <= tol {
            return Ok(FrechetMean { mean, iterations, converged: true, residual });
        }
        if iterations >= max_iter {
            return Ok(FrechetMean { mean, iterations, converged: false, residual });
        }
        let sqrt = mean.sqrt();
        let step = spd_exp(&tangent);
        mean = SpdTensor(step.0.congruence(&sqrt.to_mat()));
        iterations += 1;
    }
}

fn tangent_mean(inv_sqrt: &SymMat3, tensors: &[SpdTensor]) -> SymMat3 {
    let w = inv_sqrt.to_mat();
    let mut acc = SymMat3::ZERO;
    for t in tensors {
        let m = t.0.congruence(&w);
        acc = acc.add(&m.map_eigenvalues(|l| math::ln(if l > 0.0 { l } else { f64::MIN_POSITIVE })));
    }
    acc.scale(1.0 / tensors.len() as f64)
}

/// `|| sum_i log(M^{-1/2} T_i M^{-1/2}) ||_F`, the first-order optimality
/// residual of a candidate mean.
pub fn mean_optimality_residual(mean: &SpdTensor, tensors: &[SpdTensor]) -> f64 {
    tangent_mean(&mean.inv_sqrt(), tensors).scale(tensors.len() as f64).frobenius_norm()
}

/// A field of SPD tensors on a voxel grid.
#[derive(Debug, Clone)]
pub struct SpdField {
    geometry: VolumeGeometry,
    tensors: Vec<SpdTensor>,
}

impl SpdField {
    pub fn from_hessians(field: &TensorField) -> Self {
        let data = field.data();
        let tensors = par::map_indices(data.len(), |i| hessian_to_spd(&data[i]));
        Self { geometry: *field.geometry(), tensors }
    }

    pub fn new(geometry: VolumeGeometry, tensors: Vec<SpdTensor>) -> Result<Self> {
        if tensors.len() != geometry.len() {
            return Err(Error::LengthMismatch { expected: geometry.len(), got: tensors.len() });
        }
        Ok(Self { geometry, tensors })
    }

    /// Every voxel holds the same tensor.
    pub fn uniform(geometry: VolumeGeometry, t: SpdTensor) -> Self {
        Self { tensors: alloc::vec![t; geometry.len()], geometry }
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn tensors(&self) -> &[SpdTensor] {
        &self.tensors
    }

    pub fn get(&self, i: usize) -> &SpdTensor {
        &self.tensors[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessian_mapping_floors() {
        let t = hessian_to_spd(&SymMat3::diag(-4.0, -1.0, 0.0));
        let m = t.matrix().0;
        assert!((m[0] - 4.0).abs() < 1e-12);
        assert!((m[3] - 1.0).abs() < 1e-12);
        assert!((m[5] - EPS_SPD).abs() < 1e-20);
        let id = hessian_to_spd(&SymMat3::IDENTITY);
        for (a, b) in id.matrix().0.iter().zip(SymMat3::scaled_identity(EPS_SPD).0.iter()) {
            assert!((a - b).abs() < 1e-20);
        }
    }

    #[test]
    fn distance_commuting_case() {
        let d = geodesic_distance(&SpdTensor::IDENTITY, &SpdTensor::scaled_identity(4.0).unwrap());
        assert!((d - 3f64.sqrt() * 4f64.ln()).abs() < 1e-12);
        assert!((d - 2.401).abs() < 1e-3);
        let t = SpdTensor::new(SymMat3([2.0, 0.3, 0.1, 1.5, -0.2, 0.9])).unwrap();
        assert!(geodesic_distance(&t, &t) < 1e-12);
    }

    #[test]
    fn mean_of_single_and_commuting_pair() {
        let t = SpdTensor::new(SymMat3([2.0, 0.3, 0.1, 1.5, -0.2, 0.9])).unwrap();
        let m = frechet_mean(&[t], DEFAULT_MEAN_TOL, DEFAULT_MEAN_MAX_ITER).unwrap();
        for (a, b) in m.mean.matrix().0.iter().zip(t.matrix().0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let m = frechet_mean(
            &[SpdTensor::IDENTITY, SpdTensor::scaled_identity(4.0).unwrap()],
            DEFAULT_MEAN_TOL,
            DEFAULT_MEAN_MAX_ITER,
        )
        .unwrap();
        assert!(m.converged);
        let two = SymMat3::scaled_identity(2.0);
        assert!(m.mean.matrix().sub(&two).frobenius_norm() < 1e-9);
    }

    #[test]
    fn empty_mean_is_error() {
        assert!(frechet_mean(&[], 1e-10, 10).is_err());
    }

    #[test]
    fn log_exp_identities() {
        assert!(spd_log(&SpdTensor::IDENTITY).frobenius_norm() < 1e-15);
        assert_eq!(*spd_exp(&SymMat3::ZERO).matrix(), SymMat3::IDENTITY);
        assert!(spd_log_checked(&SymMat3::diag(1.0, -1.0, 1.0)).is_err());
        assert!(SpdTensor::new(SymMat3::diag(1.0, 0.0, 1.0)).is_err());
    }
}
