//! Gaussian scale space, Hessian tensor fields and Sato's vesselness for
//! bright tubes on a dark background.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use crate::linalg::{eigen_symmetric3, Eigen3, SymMat3};
use crate::math;
use crate::par;
use crate::volume::{ScalarVolume, Volume, VolumeGeometry};
use crate::{Error, Result};

/// Per-voxel symmetric 3x3 tensors `(xx, xy, xz, yy, yz, zz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    geometry: VolumeGeometry,
    data: Vec<SymMat3>,
}

impl TensorField {
    pub fn new(geometry: VolumeGeometry, data: Vec<SymMat3>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::LengthMismatch { expected: geometry.len(), got: data.len() });
        }
        if let Some(i) = data.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[SymMat3] {
        &self.data
    }

    pub fn get(&self, index: usize) -> &SymMat3 {
        &self.data[index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselnessParams {
    pub gamma12: f64,
    pub gamma23: f64,
    /// Gaussian scales in mm.
    pub scales_mm: Vec<f64>,
}

impl Default for VesselnessParams {
    fn default() -> Self {
        Self { gamma12: 1.0, gamma23: 1.0, scales_mm: vec![0.5, 1.0, 1.5, 2.0] }
    }
}

impl VesselnessParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales_mm.is_empty() {
            return Err(Error::InvalidParameter("at least one scale is required".into()));
        }
        if self.scales_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("scales must be > 0: {:?}", self.scales_mm)));
        }
        if !(self.gamma12 >= 0.0) || !(self.gamma23 >= 0.0) {
            return Err(Error::InvalidParameter("gamma exponents must be >= 0".into()));
        }
        Ok(())
    }
}

/// Truncated (4 sigma) and renormalized 1D Gaussian kernel, `sigma` in voxels.
pub fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    if sigma_vox <= 0.0 {
        return vec![1.0];
    }
    let radius = math::ceil(4.0 * sigma_vox) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| {
            let x = i as f64 / sigma_vox;
            math::exp(-0.5 * x * x)
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn convolve_axis(data: &[f64], geometry: &VolumeGeometry, axis: usize, kernel: &[f64]) -> Vec<f64> {
    if kernel.len() == 1 {
        return data.to_vec();
    }
    let dims = geometry.dims();
    let radius = (kernel.len() / 2) as i64;
    let n = dims[axis] as i64;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    par::map_indices(data.len(), |i| {
        let c = geometry.coords(i);
        let pos = c[axis] as i64;
        let base = i - c[axis] * stride;
        let mut acc = 0.0;
        for (t, &w) in kernel.iter().enumerate() {
            let q = (pos + t as i64 - radius).clamp(0, n - 1) as usize;
            acc += w * data[base + q * stride];
        }
        acc
    })
}

fn smooth_f64(vol: &ScalarVolume, sigma_mm: f64) -> Vec<f64> {
    let g = *vol.geometry();
    let mut data: Vec<f64> = vol.data().iter().map(|&v| f64::from(v)).collect();
    if sigma_mm > 0.0 {
        for axis in 0..3 {
            let kernel = gaussian_kernel(sigma_mm / g.spacing()[axis]);
            data = convolve_axis(&data, &g, axis, &kernel);
        }
    }
    data
}

/// Separable Gaussian smoothing with clamp-to-edge boundaries. `sigma_mm = 0`
/// returns the input unchanged.
pub fn gaussian_smooth(vol: &ScalarVolume, sigma_mm: f64) -> Result<ScalarVolume> {
    if !(sigma_mm >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_mm must be >= 0, got {sigma_mm}")));
    }
    if sigma_mm == 0.0 {
        return Ok(vol.clone());
    }
    let data = smooth_f64(vol, sigma_mm);
    Volume::new(*vol.geometry(), data.into_iter().map(|v| v as f32).collect())
}

fn hessian_from_smoothed(data: &[f64], g: &VolumeGeometry) -> Vec<SymMat3> {
    let dims = g.dims();
    let s = g.spacing();
    par::map_indices(data.len(), |i| {
        let c = g.coords(i);
        let at = |dx: i64, dy: i64, dz: i64| -> f64 {
            let x = (c[0] as i64 + dx).clamp(0, dims[0] as i64 - 1) as usize;
            let y = (c[1] as i64 + dy).clamp(0, dims[1] as i64 - 1) as usize;
            let z = (c[2] as i64 + dz).clamp(0, dims[2] as i64 - 1) as usize;
            data[g.index(x, y, z)]
        };
        let center = data[i];
        let xx = (at(1, 0, 0) - 2.0 * center + at(-1, 0, 0)) / (s[0] * s[0]);
        let yy = (at(0, 1, 0) - 2.0 * center + at(0, -1, 0)) / (s[1] * s[1]);
        let zz = (at(0, 0, 1) - 2.0 * center + at(0, 0, -1)) / (s[2] * s[2]);
        let xy = (at(1, 1, 0) - at(1, -1, 0) - at(-1, 1, 0) + at(-1, -1, 0)) / (4.0 * s[0] * s[1]);
        let xz = (at(1, 0, 1) - at(1, 0, -1) - at(-1, 0, 1) + at(-1, 0, -1)) / (4.0 * s[0] * s[2]);
        let yz = (at(0, 1, 1) - at(0, 1, -1) - at(0, -1, 1) + at(0, -1, -1)) / (4.0 * s[1] * s[2]);
        SymMat3([xx, xy, xz, yy, yz, zz])
    })
}

/// Hessian of the `sigma_mm`-smoothed volume by central differences in world
/// units, clamp-to-edge at the boundary.
pub fn hessian_field(vol: &ScalarVolume, sigma_mm: f64) -> Result<TensorField> {
    if !(sigma_mm >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_mm must be >= 0, got {sigma_mm}")));
    }
    if vol.dims().iter().any(|&d| d < 3) {
        return Err(Error::InvalidGeometry("hessian needs at least 3 voxels per axis".into()));
    }
    let data = smooth_f64(vol, sigma_mm);
    TensorField::new(*vol.geometry(), hessian_from_smoothed(&data, vol.geometry()))
}

/// Sato's measure for eigenvalues `l1 >= l2 >= l3`. Ties in the ordering
/// count as satisfied, so an ideal cylinder (`l2 == l3`) responds.
pub fn sato_measure(l1: f64, l2: f64, l3: f64, gamma12: f64, gamma23: f64) -> f64 {
    const EPS: f64 = 1e-12;
    if l1 > 0.0 || l2 > l1 + EPS || l3 > l2 + EPS || l2 >= 0.0 || l3 >= 0.0 {
        return 0.0;
    }
    let ratio23 = (l2 / l3).clamp(0.0, 1.0);
    let ratio12 = (1.0 + l1 / math::abs(l2)).clamp(0.0, 1.0);
    math::abs(l3) * math::powf(ratio23, gamma23) * math::powf(ratio12, gamma12)
}

fn vesselness_of(t: &SymMat3, params: &VesselnessParams, scale: f64) -> f64 {
    let e = eigen_symmetric3(t);
    scale * sato_measure(e.values[0], e.values[1], e.values[2], params.gamma12, params.gamma23)
}

/// Single-field Sato response (no scale normalization).
pub fn sato_vesselness(field: &TensorField, params: &VesselnessParams) -> Result<ScalarVolume> {
    if !(params.gamma12 >= 0.0) || !(params.gamma23 >= 0.0) {
        return Err(Error::InvalidParameter("gamma exponents must be >= 0".into()));
    }
    let data = par::map_indices(field.data.len(), |i| vesselness_of(&field.data[i], params, 1.0) as f32);
    Volume::new(field.geometry, data)
}

/// Output of the multi-scale filter.
#[derive(Debug, Clone)]
pub struct MultiscaleVesselness {
    /// Voxelwise maximum of sigma^2-normalized responses.
    pub vesselness: ScalarVolume,
    /// Index into `scales_mm` of the winning scale (0 where all responses are 0).
    pub best_scale: Vec<u8>,
    /// Raw (unnormalized) Hessian at the winning scale.
    pub hessian: TensorField,
}

/// Multi-scale Sato filter: for each scale compute the Hessian of the
/// smoothed volume, normalize by sigma^2, and keep the voxelwise maximum.
pub fn multiscale_vesselness(vol: &ScalarVolume, params: &VesselnessParams) -> Result<MultiscaleVesselness> {
    params.validate()?;
    if vol.dims().iter().any(|&d| d < 3) {
        return Err(Error::InvalidGeometry("hessian needs at least 3 voxels per axis".into()));
    }
    let g = *vol.geometry();
    let n = g.len();
    let mut best = vec![0.0f64; n];
    let mut best_scale = vec![0u8; n];
    let mut hessian = vec![SymMat3::ZERO; n];
    for (si, &sigma) in params.scales_mm.iter().enumerate() {
        let smoothed = smooth_f64(vol, sigma);
        let h = hessian_from_smoothed(&smoothed, &g);
        let norm = sigma * sigma;
        let resp = par::map_indices(n, |i| vesselness_of(&h[i], params, norm));
        for i in 0..n {
            if si == 0 || resp[i] > best[i] {
                best[i] = resp[i];
                best_scale[i] = si as u8;
                hessian[i] = h[i];
            }
        }
    }
    Ok(MultiscaleVesselness {
        vesselness: Volume::new(g, best.iter().map(|&v| v as f32).collect())?,
        best_scale,
        hessian: TensorField::new(g, hessian)?,
    })
}
