//! Numerical helpers around a patch-based segmentation network: position
//! feature maps, the multi-class Dice loss and its gradient, sliding-window
//! tiling and fusion, and rigid / B-spline augmentation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::volume::{LabelVolume, ScalarVolume, Volume, VolumeGeometry, Voxel};
use crate::{Error, Result};

/// Smoothing term added to every Dice denominator.
pub const DICE_EPS: f64 = 1e-7;

/// A sub-volume of a parent grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubVolumeSpec {
    pub size: [usize; 3],
    pub stride: [usize; 3],
    pub origin: [usize; 3],
}

impl SubVolumeSpec {
    fn check_inside(&self, parent: [usize; 3]) -> Result<()> {
        for a in 0..3 {
            if self.size[a] == 0 || self.origin[a] + self.size[a] > parent[a] {
                return Err(Error::InvalidParameter(format!(
                    "sub-volume {:?} at {:?} does not fit in {:?}",
                    self.size, self.origin, parent
                )));
            }
        }
        Ok(())
    }
}

/// Map size for a sub-volume after four 2x poolings (`size / 16`, at least 1).
pub fn default_map_size(size: [usize; 3]) -> [usize; 3] {
    size.map(|s| (s / 16).max(1))
}

/// Three channels (x/W, y/H, z/D) of global voxel coordinates, resized to
/// `map_size` by trilinear interpolation (corner-aligned).
pub fn spatial_feature_map(parent: &VolumeGeometry, spec: &SubVolumeSpec, map_size: [usize; 3]) -> Result<[Vec<f64>; 3]> {
    let pd = parent.dims();
    spec.check_inside(pd)?;
    if map_size.contains(&0) {
        return Err(Error::InvalidParameter("map size must be >= 1".into()));
    }
    let n = map_size[0] * map_size[1] * map_size[2];
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    // source coordinate along an axis for output index u
    let src = |a: usize, u: usize| -> f64 {
        if map_size[a] == 1 {
            0.0
        } else {
            u as f64 * (spec.size[a] - 1) as f64 / (map_size[a] - 1) as f64
        }
    };
    for z in 0..map_size[2] {
        for y in 0..map_size[1] {
            for x in 0..map_size[0] {
                let i = x + map_size[0] * (y + map_size[1] * z);
                let u = [x, y, z];
                for a in 0..3 {
                    // the channel is linear in the source coordinate, so the
                    // trilinear blend of its two bracketing samples is exact
                    let s = src(a, u[a]);
                    let lo = math::floor(s);
                    let t = s - lo;
                    let v0 = (spec.origin[a] as f64 + lo) / pd[a] as f64;
                    let v1 = (spec.origin[a] as f64 + lo + 1.0) / pd[a] as f64;
                    out[a][i] = if t == 0.0 { v0 } else { (1.0 - t) * v0 + t * v1 };
                }
            }
        }
    }
    Ok(out)
}

/// Multi-class soft Dice loss
/// `D = -(1/K) sum_k 2 sum_i p_ik g_ik / (sum_i p_ik^2 + sum_i g_ik^2 + eps)`
/// and its gradient with respect to `pred`. Both inputs are voxel-major:
/// entry `i * k + c` is class `c` at voxel `i`.
pub fn dice_loss(pred: &[f64], gt: &[f64], k: usize) -> Result<(f64, Vec<f64>)> {
    if k == 0 || pred.len() != gt.len() || !pred.len().is_multiple_of(k) {
        return Err(Error::ShapeMismatch(format!(
            "pred {} / gt {} values with K = {}",
            pred.len(),
            gt.len(),
            k
        )));
    }
    if pred.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter("predictions must lie in [0, 1]".into()));
    }
    let mut spg = vec![0.0; k];
    let mut den = vec![DICE_EPS; k];
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        let c = i % k;
        spg[c] += p * g;
        den[c] += p * p + g * g;
    }
    let kf = k as f64;
    let loss = -(0..k).map(|c| 2.0 * spg[c] / den[c]).sum::<f64>() / kf;
    let grad = pred
        .iter()
        .zip(gt)
        .enumerate()
        .map(|(i, (&p, &g))| {
            let c = i % k;
            -(2.0 * g * den[c] - 4.0 * spg[c] * p) / (den[c] * den[c]) / kf
        })
        .collect();
    Ok((loss, grad))
}

fn axis_positions(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 0;
    loop {
        out.push(p);
        if p + size >= dim {
            break;
        }
        p += stride;
        if p + size > dim {
            out.push(dim - size);
            break;
        }
    }
    out
}

/// Window origins covering the parent: regular steps of `stride`, with the
/// last window on each axis moved flush to the far boundary.
pub fn sliding_window_positions(parent_dims: [usize; 3], spec: &SubVolumeSpec) -> Result<Vec<[usize; 3]>> {
    for a in 0..3 {
        if spec.stride[a] == 0 {
            return Err(Error::InvalidParameter("stride must be >= 1".into()));
        }
        if spec.size[a] == 0 || spec.size[a] > parent_dims[a] {
            return Err(Error::InvalidParameter(format!("window {:?} larger than {:?}", spec.size, parent_dims)));
        }
    }
    let px = axis_positions(parent_dims[0], spec.size[0], spec.stride[0]);
    let py = axis_positions(parent_dims[1], spec.size[1], spec.stride[1]);
    let pz = axis_positions(parent_dims[2], spec.size[2], spec.stride[2]);
    let mut out = Vec::with_capacity(px.len() * py.len() * pz.len());
    for &z in &pz {
        for &y in &py {
            for &x in &px {
                out.push([x, y, z]);
            }
        }
    }
    Ok(out)
}

/// Per-window probabilities (x-fastest within the window).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub origin: [usize; 3],
    pub size: [usize; 3],
    pub values: Vec<f64>,
}

/// Per-voxel mean over all covering windows. Windows are accumulated in a
/// canonical order, so the result does not depend on the input order.
pub fn fuse_predictions(parent: VolumeGeometry, windows: &[Window]) -> Result<Volume<f64>> {
    let pd = parent.dims();
    for w in windows {
        let spec = SubVolumeSpec { size: w.size, stride: [1; 3], origin: w.origin };
        spec.check_inside(pd)?;
        if w.values.len() != w.size[0] * w.size[1] * w.size[2] {
            return Err(Error::LengthMismatch { expected: w.size[0] * w.size[1] * w.size[2], got: w.values.len() });
        }
    }
    let mut order: Vec<&Window> = windows.iter().collect();
    order.sort_by(|a, b| {
        a.origin.cmp(&b.origin).then(a.size.cmp(&b.size)).then_with(|| {
            a.values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(core::cmp::Ordering::Equal)
        })
    });
    let mut sum = vec![0.0f64; parent.len()];
    let mut count = vec![0u32; parent.len()];
    for w in order {
        for z in 0..w.size[2] {
            for y in 0..w.size[1] {
                for x in 0..w.size[0] {
                    let v = w.values[x + w.size[0] * (y + w.size[1] * z)];
                    let i = parent.index(w.origin[0] + x, w.origin[1] + y, w.origin[2] + z);
                    sum[i] += v;
                    count[i] += 1;
                }
            }
        }
    }
    if let Some(i) = count.iter().position(|&c| c == 0) {
        return Err(Error::Uncovered(i));
    }
    let data = sum.iter().zip(&count).map(|(s, &c)| s / f64::from(c)).collect();
    Volume::new(parent, data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationParams {
    /// Translations are drawn uniformly from `[-t, t]` voxels per axis.
    pub translation_vox: [f64; 3],
    /// Rotations are drawn uniformly from `[-r, r]` degrees.
    pub rotation_deg: f64,
    /// Rotate about all three axes instead of only z.
    pub rotate_all_axes: bool,
    /// B-spline control points per axis.
    pub control_points: usize,
    /// Control displacements are drawn uniformly from `[-m, m]` voxels.
    pub max_displacement: f64,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self {
            translation_vox: [10.0; 3],
            rotation_deg: 15.0,
            rotate_all_axes: false,
            control_points: 3,
            max_displacement: 3.0,
        }
    }
}

impl AugmentationParams {
    pub fn validate(&self) -> Result<()> {
        if self.translation_vox.iter().any(|t| !(*t >= 0.0)) || !(self.rotation_deg >= 0.0) || !(self.max_displacement >= 0.0) {
            return Err(Error::InvalidParameter("augmentation ranges must be >= 0".into()));
        }
        if self.control_points < 2 {
            return Err(Error::InvalidParameter("need at least 2 control points per axis".into()));
        }
        Ok(())
    }
}

/// Rotation angles (degrees, applied about x, then y, then z, around the
/// volume center) followed by a translation (voxels).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation_deg: [f64; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    fn rotation(&self) -> [[f64; 3]; 3] {
        let rad = self.rotation_deg.map(|d| d * core::f64::consts::PI / 180.0);
        let (sx, cx) = (math::sin(rad[0]), math::cos(rad[0]));
        let (sy, cy) = (math::sin(rad[1]), math::cos(rad[1]));
        let (sz, cz) = (math::sin(rad[2]), math::cos(rad[2]));
        let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
        crate::linalg::mat_mul(&rz, &crate::linalg::mat_mul(&ry, &rx))
    }

    /// Source coordinate sampled for output voxel `p`.
    fn source_map(&self, dims: [usize; 3]) -> impl Fn([usize; 3]) -> [f64; 3] {
        let rt = crate::linalg::transpose(&self.rotation());
        let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
        let t = self.translation;
        move |p: [usize; 3]| {
            let d = [p[0] as f64 - c[0] - t[0], p[1] as f64 - c[1] - t[1], p[2] as f64 - c[2] - t[2]];
            let mut q = [0.0; 3];
            for a in 0..3 {
                q[a] = rt[a][0] * d[0] + rt[a][1] * d[1] + rt[a][2] * d[2] + c[a];
            }
            q
        }
    }
}

pub fn sample_rigid<R: Rng + ?Sized>(params: &AugmentationParams, rng: &mut R) -> RigidTransform {
    let mut uni = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    let rz = uni(params.rotation_deg);
    let (rx, ry) = if params.rotate_all_axes { (uni(params.rotation_deg), uni(params.rotation_deg)) } else { (0.0, 0.0) };
    let t = [uni(params.translation_vox[0]), uni(params.translation_vox[1]), uni(params.translation_vox[2])];
    RigidTransform { rotation_deg: [rx, ry, rz], translation: t }
}

fn min_value<T: Voxel + PartialOrd>(v: &Volume<T>) -> T {
    let mut m = v.data()[0];
    for &x in v.data() {
        if x < m {
            m = x;
        }
    }
    m
}

fn inside(q: [f64; 3], dims: [usize; 3]) -> bool {
    (0..3).all(|a| q[a] >= 0.0 && q[a] <= (dims[a] - 1) as f64)
}

/// Trilinear sample at continuous voxel coordinate `q`, `fill` outside.
pub fn sample_trilinear(vol: &ScalarVolume, q: [f64; 3], fill: f32) -> f32 {
    let d = vol.dims();
    if !inside(q, d) {
        return fill;
    }
    let base = q.map(math::floor);
    let t = [q[0] - base[0], q[1] - base[1], q[2] - base[2]];
    let b = base.map(|x| x as usize);
    let mut acc = 0.0f64;
    for corner in 0..8 {
        let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut w = 1.0;
        let mut c = [0usize; 3];
        for a in 0..3 {
            w *= if off[a] == 1 { t[a] } else { 1.0 - t[a] };
            c[a] = (b[a] + off[a]).min(d[a] - 1);
        }
        if w != 0.0 {
            acc += w * f64::from(vol.get(c[0], c[1], c[2]));
        }
    }
    acc as f32
}

fn sample_nearest(vol: &LabelVolume, q: [f64; 3], fill: u16) -> u16 {
    let d = vol.dims();
    if !inside(q, d) {
        return fill;
    }
    let r = q.map(|x| math::round(x) as usize);
    vol.get(r[0].min(d[0] - 1), r[1].min(d[1] - 1), r[2].min(d[2] - 1))
}

pub fn apply_rigid(vol: &ScalarVolume, t: &RigidTransform) -> ScalarVolume {
    let fill = min_value(vol);
    let map = t.source_map(vol.dims());
    ScalarVolume::from_fn(*vol.geometry(), |p| sample_trilinear(vol, map(p), fill))
}

pub fn apply_rigid_labels(vol: &LabelVolume, t: &RigidTransform) -> LabelVolume {
    let fill = min_value(vol);
    let map = t.source_map(vol.dims());
    LabelVolume::from_fn(*vol.geometry(), |p| sample_nearest(vol, map(p), fill))
}

/// Random rigid transform applied to a scalar volume.
pub fn augment_rigid<R: Rng + ?Sized>(
    vol: &ScalarVolume,
    params: &AugmentationParams,
    rng: &mut R,
) -> Result<(ScalarVolume, RigidTransform)> {
    params.validate()?;
    let t = sample_rigid(params, rng);
    Ok((apply_rigid(vol, &t), t))
}

/// Displacement control lattice of a cubic B-spline deformation.
#[derive(Debug, Clone, PartialEq)]
pub struct BsplineDeformation {
    pub control_points: usize,
    /// Control displacements (voxels), x-fastest over the lattice.
    pub control: Vec<[f64; 3]>,
}

/// Uniform cubic B-spline basis weights for local parameter `t` in [0, 1).
fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [s * s * s / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0, (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0]
}

impl BsplineDeformation {
    pub fn zero(control_points: usize) -> Self {
        Self { control_points, control: vec![[0.0; 3]; control_points.pow(3)] }
    }

    pub fn sample<R: Rng + ?Sized>(params: &AugmentationParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let n = params.control_points.pow(3);
        let m = params.max_displacement;
        let control = (0..n)
            .map(|_| {
                let mut v = [0.0; 3];
                for x in v.iter_mut() {
                    *x = if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
                }
                v
            })
            .collect();
        Ok(Self { control_points: params.control_points, control })
    }

    /// Dense displacement field over `dims` (voxels). The control lattice
    /// spans the grid corner to corner; indices beyond it are clamped, so
    /// every displacement is a convex combination of control values.
    pub fn dense_field(&self, dims: [usize; 3]) -> Vec<[f64; 3]> {
        let cp = self.control_points;
        let last = (cp - 1) as i64;
        let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        let axis = |p: usize, n: usize| -> (i64, [f64; 4]) {
            let u = if n > 1 { p as f64 / (n - 1) as f64 * (cp - 1) as f64 } else { 0.0 };
            let f = math::floor(u);
            (f as i64, bspline_weights(u - f))
        };
        for z in 0..dims[2] {
            let (fz, wz) = axis(z, dims[2]);
            for y in 0..dims[1] {
                let (fy, wy) = axis(y, dims[1]);
                for x in 0..dims[0] {
                    let (fx, wx) = axis(x, dims[0]);
                    let mut d = [0.0; 3];
                    for (k, &wk) in wz.iter().enumerate() {
                        let cz = (fz + k as i64 - 1).clamp(0, last) as usize;
                        for (j, &wj) in wy.iter().enumerate() {
                            let cy = (fy + j as i64 - 1).clamp(0, last) as usize;
                            for (i, &wi) in wx.iter().enumerate() {
                                let cx = (fx + i as i64 - 1).clamp(0, last) as usize;
                                let w = wi * wj * wk;
                                let c = self.control[cx + cp * (cy + cp * cz)];
                                for a in 0..3 {
                                    d[a] += w * c[a];
                                }
                            }
                        }
                    }
                    out.push(d);
                }
            }
        }
        out
    }
}

/// Warp a scalar volume: output voxel `p` samples the input at `p + u(p)`.
pub fn apply_bspline(vol: &ScalarVolume, def: &BsplineDeformation) -> ScalarVolume {
    let field = def.dense_field(vol.dims());
    let fill = min_value(vol);
    let g = *vol.geometry();
    ScalarVolume::from_fn(g, |p| {
        let u = field[g.index(p[0], p[1], p[2])];
        sample_trilinear(vol, [p[0] as f64 + u[0], p[1] as f64 + u[1], p[2] as f64 + u[2]], fill)
    })
}

pub fn apply_bspline_labels(vol: &LabelVolume, def: &BsplineDeformation) -> LabelVolume {
    let field = def.dense_field(vol.dims());
    let fill = min_value(vol);
    let g = *vol.geometry();
    LabelVolume::from_fn(g, |p| {
        let u = field[g.index(p[0], p[1], p[2])];
        sample_nearest(vol, [p[0] as f64 + u[0], p[1] as f64 + u[1], p[2] as f64 + u[2]], fill)
    })
}

/// Random elastic deformation of a scalar volume; returns the warped volume
/// and the dense displacement field.
pub fn augment_bspline<R: Rng + ?Sized>(
    vol: &ScalarVolume,
    params: &AugmentationParams,
    rng: &mut R,
) -> Result<(ScalarVolume, Vec<[f64; 3]>)> {
    let def = BsplineDeformation::sample(params, rng)?;
    Ok((apply_bspline(vol, &def), def.dense_field(vol.dims())))
}

/// Rigid then elastic.
pub fn augment_hybrid<R: Rng + ?Sized>(vol: &ScalarVolume, params: &AugmentationParams, rng: &mut R) -> Result<ScalarVolume> {
    let (r, _) = augment_rigid(vol, params, rng)?;
    let (e, _) = augment_bspline(&r, params, rng)?;
    Ok(e)
}
