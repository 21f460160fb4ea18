//! Voxel grids with physical geometry, plus the handful of grid operations
//! every other module leans on: bounding boxes, cropping, connected
//! components, exact Euclidean dilation and distance transforms.
//!
//! Layout is x-fastest: `index = x + nx * (y + ny * z)`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Grid dimensions, voxel spacing (mm) and world origin (mm) of voxel (0,0,0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeGeometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl VolumeGeometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGeometry(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGeometry(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Unit spacing, zero origin.
    pub fn with_dims(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Linear index of `coords + offset`, or `None` if it leaves the grid.
    #[inline]
    pub fn offset(&self, coords: [usize; 3], offset: [i64; 3]) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let v = coords[a] as i64 + offset[a];
            if v < 0 || v >= self.dims[a] as i64 {
                return None;
            }
            c[a] = v as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// World position (mm) of a continuous voxel coordinate.
    pub fn voxel_to_world(&self, v: [f64; 3]) -> [f64; 3] {
        [
            self.origin[0] + v[0] * self.spacing[0],
            self.origin[1] + v[1] * self.spacing[1],
            self.origin[2] + v[2] * self.spacing[2],
        ]
    }

    /// Continuous voxel coordinate of a world position (mm).
    pub fn world_to_voxel(&self, w: [f64; 3]) -> [f64; 3] {
        [
            (w[0] - self.origin[0]) / self.spacing[0],
            (w[1] - self.origin[1]) / self.spacing[1],
            (w[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    pub fn index_to_world(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        self.voxel_to_world([c[0] as f64, c[1] as f64, c[2] as f64])
    }

    /// Nearest voxel to a world point, clamped into the grid.
    pub fn nearest_voxel(&self, w: [f64; 3]) -> [usize; 3] {
        let v = self.world_to_voxel(w);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = math::round(v[a]);
            out[a] = if r < 0.0 { 0 } else { (r as usize).min(self.dims[a] - 1) };
        }
        out
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Area (mm^2) of the voxel face whose normal is `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        let s = self.spacing;
        match axis {
            0 => s[1] * s[2],
            1 => s[0] * s[2],
            _ => s[0] * s[1],
        }
    }

    /// Squared world distance between two voxels given as integer coordinate
    /// differences.
    #[inline]
    pub fn squared_distance(&self, d: [i64; 3]) -> f64 {
        let dx = d[0] as f64 * self.spacing[0];
        let dy = d[1] as f64 * self.spacing[1];
        let dz = d[2] as f64 * self.spacing[2];
        dx * dx + dy * dy + dz * dz
    }

    pub fn ensure_same(&self, other: &VolumeGeometry) -> Result<()> {
        if self.dims != other.dims || self.spacing != other.spacing || self.origin != other.origin {
            return Err(Error::GeometryMismatch);
        }
        Ok(())
    }
}

/// Element types that can live in a [`Volume`].
pub trait Voxel: Copy + Default + PartialEq + Send + Sync + 'static {
    fn is_valid(&self) -> bool {
        true
    }
}

impl Voxel for f32 {
    fn is_valid(&self) -> bool {
        self.is_finite()
    }
}

impl Voxel for f64 {
    fn is_valid(&self) -> bool {
        self.is_finite()
    }
}

impl Voxel for u8 {}
impl Voxel for u16 {}
impl Voxel for i16 {}
impl Voxel for u32 {}

/// A dense 3D grid of voxels with physical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    geometry: VolumeGeometry,
    data: Vec<T>,
}

/// CT-like intensities, probability maps, filter responses.
pub type ScalarVolume = Volume<f32>;
/// Masks and label maps.
pub type LabelVolume = Volume<u16>;

impl<T: Voxel> Volume<T> {
    pub fn new(geometry: VolumeGeometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::LengthMismatch { expected: geometry.len(), got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(geometry: VolumeGeometry, value: T) -> Self {
        Self { data: vec![value; geometry.len()], geometry }
    }

    pub fn from_fn<F: FnMut([usize; 3]) -> T>(geometry: VolumeGeometry, mut f: F) -> Self {
        let data = (0..geometry.len()).map(|i| f(geometry.coords(i))).collect();
        Self { geometry, data }
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.geometry.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: T) {
        let i = self.geometry.index(x, y, z);
        self.data[i] = v;
    }

    pub fn map<U: Voxel, F: FnMut(T) -> U>(&self, f: F) -> Volume<U> {
        Volume { geometry: self.geometry, data: self.data.iter().copied().map(f).collect() }
    }

    /// Replace the geometry, keeping the data. Dimensions must agree.
    pub fn with_geometry(mut self, geometry: VolumeGeometry) -> Result<Self> {
        if geometry.dims != self.geometry.dims {
            return Err(Error::GeometryMismatch);
        }
        self.geometry = geometry;
        Ok(self)
    }
}

impl LabelVolume {
    /// Binary mask from a predicate over voxel indices.
    pub fn mask_from<F: FnMut(usize) -> bool>(geometry: VolumeGeometry, mut f: F) -> Self {
        let data = (0..geometry.len()).map(|i| u16::from(f(i))).collect();
        Volume { geometry, data }
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn nonzero_indices(&self) -> Vec<usize> {
        self.data.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i).collect()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v != 0).collect()
    }

    /// 1 where `self` is nonzero, 0 elsewhere.
    pub fn binarized(&self) -> Self {
        self.map(|v| u16::from(v != 0))
    }
}

/// Voxel neighborhood used for adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    #[default]
    Six,
    TwentySix,
}

pub(crate) const FACE_OFFSETS: [[i64; 3]; 6] =
    [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

pub(crate) const ALL_OFFSETS: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut z = -1;
    while z <= 1 {
        let mut y = -1;
        while y <= 1 {
            let mut x = -1;
            while x <= 1 {
                if !(x == 0 && y == 0 && z == 0) {
                    out[n] = [x, y, z];
                    n += 1;
                }
                x += 1;
            }
            y += 1;
        }
        z += 1;
    }
    out
};

impl Connectivity {
    pub fn offsets(self) -> &'static [[i64; 3]] {
        match self {
            Connectivity::Six => &FACE_OFFSETS,
            Connectivity::TwentySix => &ALL_OFFSETS,
        }
    }

    /// Offsets with a positive lexicographic sign, so every unordered
    /// neighbor pair is visited once.
    pub fn forward_offsets(self) -> impl Iterator<Item = [i64; 3]> {
        self.offsets().iter().copied().filter(|o| {
            o[2] > 0 || (o[2] == 0 && (o[1] > 0 || (o[1] == 0 && o[0] > 0)))
        })
    }
}

/// Inclusive axis-aligned voxel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn size(&self) -> [usize; 3] {
        [
            self.max[0] - self.min[0] + 1,
            self.max[1] - self.min[1] + 1,
            self.max[2] - self.min[2] + 1,
        ]
    }
}

fn bounding_box_where<T: Voxel, F: Fn(T) -> bool>(vol: &Volume<T>, pred: F) -> Option<BoundingBox> {
    let mut bb: Option<BoundingBox> = None;
    for (i, &v) in vol.data.iter().enumerate() {
        if !pred(v) {
            continue;
        }
        let c = vol.geometry.coords(i);
        match bb.as_mut() {
            None => bb = Some(BoundingBox { min: c, max: c }),
            Some(b) => {
                for a in 0..3 {
                    b.min[a] = b.min[a].min(c[a]);
                    b.max[a] = b.max[a].max(c[a]);
                }
            }
        }
    }
    bb
}

/// Tightest box around all voxels carrying `label`.
pub fn bounding_box(mask: &LabelVolume, label: u16) -> Result<BoundingBox> {
    bounding_box_where(mask, |v| v == label).ok_or(Error::LabelAbsent(label))
}

/// Tightest box around all nonzero voxels.
pub fn bounding_box_nonzero(mask: &LabelVolume) -> Result<BoundingBox> {
    bounding_box_where(mask, |v| v != 0).ok_or(Error::Empty("mask has no foreground voxels"))
}

/// Copy the sub-volume `bbox` grown by `margin` voxels on every side,
/// clamped to the grid. The origin of the result is the world position of
/// its first voxel.
pub fn crop<T: Voxel>(vol: &Volume<T>, bbox: &BoundingBox, margin: usize) -> Result<Volume<T>> {
    let dims = vol.dims();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        if bbox.min[a] > bbox.max[a] || bbox.min[a] >= dims[a] {
            return Err(Error::EmptyIntersection);
        }
        lo[a] = bbox.min[a].saturating_sub(margin);
        hi[a] = bbox.max[a].saturating_add(margin).min(dims[a] - 1);
    }
    let new_dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let origin = vol.geometry.voxel_to_world([lo[0] as f64, lo[1] as f64, lo[2] as f64]);
    let geometry = VolumeGeometry::new(new_dims, vol.geometry.spacing, origin)?;
    let mut data = Vec::with_capacity(geometry.len());
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            let start = vol.geometry.index(lo[0], y, z);
            data.extend_from_slice(&vol.data[start..start + new_dims[0]]);
        }
    }
    Ok(Volume { geometry, data })
}

/// Paste `part` (whose origin lies on `target`'s lattice) back into a copy of
/// `target`.
pub fn paste<T: Voxel>(target: &Volume<T>, part: &Volume<T>) -> Result<Volume<T>> {
    if part.geometry.spacing != target.geometry.spacing {
        return Err(Error::GeometryMismatch);
    }
    let start = target.geometry.world_to_voxel(part.geometry.origin);
    let mut lo = [0usize; 3];
    for a in 0..3 {
        let r = math::round(start[a]);
        if math::abs(start[a] - r) > 1e-6 || r < 0.0 {
            return Err(Error::GeometryMismatch);
        }
        lo[a] = r as usize;
        if lo[a] + part.dims()[a] > target.dims()[a] {
            return Err(Error::GeometryMismatch);
        }
    }
    let mut out = target.clone();
    let pd = part.dims();
    for z in 0..pd[2] {
        for y in 0..pd[1] {
            let src = part.geometry.index(0, y, z);
            let dst = target.geometry.index(lo[0], lo[1] + y, lo[2] + z);
            out.data[dst..dst + pd[0]].copy_from_slice(&part.data[src..src + pd[0]]);
        }
    }
    Ok(out)
}

/// A labeled connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub size: usize,
    pub min_index: usize,
    pub voxels: Vec<usize>,
}

/// All connected components of the nonzero voxels, in discovery order
/// (ascending minimum linear index).
pub fn connected_components(mask: &LabelVolume, connectivity: Connectivity) -> Vec<Component> {
    let g = mask.geometry;
    let mut seen = vec![false; g.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if mask.data[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        while let Some(i) = queue.pop_front() {
            voxels.push(i);
            let c = g.coords(i);
            for &o in connectivity.offsets() {
                if let Some(j) = g.offset(c, o) {
                    if mask.data[j] != 0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(Component { size: voxels.len(), min_index: start, voxels });
    }
    out
}

/// Keep the `k` largest components, relabeled `1..=k` by descending size.
/// Equal sizes are ordered by smallest minimum linear index.
pub fn connected_components_top_k(
    mask: &LabelVolume,
    k: usize,
    connectivity: Connectivity,
) -> LabelVolume {
    let mut comps = connected_components(mask, connectivity);
    comps.sort_by(|a, b| b.size.cmp(&a.size).then(a.min_index.cmp(&b.min_index)));
    let mut out = LabelVolume::filled(mask.geometry, 0);
    for (rank, comp) in comps.iter().take(k).enumerate() {
        let label = u16::try_from(rank + 1).unwrap_or(u16::MAX);
        for &i in &comp.voxels {
            out.data[i] = label;
        }
    }
    out
}

/// Integer offsets whose world length is at most `radius_mm`.
pub fn ball_offsets(spacing: [f64; 3], radius_mm: f64) -> Vec<[i64; 3]> {
    let r2 = radius_mm * radius_mm;
    let ext = |s: f64| math::floor(radius_mm / s) as i64;
    let (ex, ey, ez) = (ext(spacing[0]), ext(spacing[1]), ext(spacing[2]));
    let mut out = Vec::new();
    for k in -ez..=ez {
        for j in -ey..=ey {
            for i in -ex..=ex {
                let dx = i as f64 * spacing[0];
                let dy = j as f64 * spacing[1];
                let dz = k as f64 * spacing[2];
                if dx * dx + dy * dy + dz * dz <= r2 {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Morphological dilation by an exact Euclidean ball of `radius_mm`,
/// respecting anisotropic spacing. Output is a binary mask.
///
/// Only voxels with a background face neighbor are stamped: the input voxel
/// nearest to any outside voxel always has one.
pub fn dilate_ball(mask: &LabelVolume, radius_mm: f64) -> Result<LabelVolume> {
    if !(radius_mm >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius_mm must be >= 0, got {radius_mm}")));
    }
    let g = mask.geometry;
    let mut out = mask.binarized();
    let ball = ball_offsets(g.spacing, radius_mm);
    for i in 0..g.len() {
        if mask.data[i] == 0 {
            continue;
        }
        let c = g.coords(i);
        let on_border = FACE_OFFSETS
            .iter()
            .any(|&o| matches!(g.offset(c, o), Some(j) if mask.data[j] == 0));
        if !on_border {
            continue;
        }
        for &o in &ball {
            if let Some(j) = g.offset(c, o) {
                out.data[j] = 1;
            }
        }
    }
    Ok(out)
}

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// site voxel, using the separable lower-envelope algorithm of Felzenszwalb
/// and Huttenlocher with per-axis spacing. When `outside_is_site` is set,
/// everything beyond the grid boundary counts as a site.
pub fn squared_distance_transform(
    geometry: &VolumeGeometry,
    is_site: &[bool],
    outside_is_site: bool,
) -> Vec<f64> {
    let dims = geometry.dims;
    let spacing = geometry.spacing;
    let mut f: Vec<f64> = is_site.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let maxn = dims.iter().copied().max().unwrap_or(1);
    let mut line = vec![0.0; maxn];
    let mut res = vec![0.0; maxn];
    let mut v = vec![0usize; maxn];
    let mut zb = vec![0.0; maxn + 1];
    for axis in 0..3 {
        let n = dims[axis];
        let s2 = spacing[axis] * spacing[axis];
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in 0..dims[o2] {
            for a in 0..dims[o1] {
                let mut c = [0usize; 3];
                c[o1] = a;
                c[o2] = b;
                let base = geometry.index(c[0], c[1], c[2]);
                for q in 0..n {
                    line[q] = f[base + q * stride];
                }
                lower_envelope(&line[..n], s2, &mut res[..n], &mut v, &mut zb);
                for q in 0..n {
                    let mut d = res[q];
                    if outside_is_site {
                        let left = (q + 1) as f64;
                        let right = (n - q) as f64;
                        d = d.min(left * left * s2).min(right * right * s2);
                    }
                    f[base + q * stride] = d;
                }
            }
        }
    }
    f
}

fn lower_envelope(f: &[f64], s2: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: usize = 0;
    let mut any = false;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if !any {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            any = true;
            continue;
        }
        loop {
            let p = v[k];
            let qf = q as f64;
            let pf = p as f64;
            let s = ((f[q] + s2 * qf * qf) - (f[p] + s2 * pf * pf)) / (2.0 * s2 * (qf - pf));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: the new parabola dominates everywhere
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !any {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for q in 0..n {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        out[q] = f[v[k]] + s2 * d * d;
    }
}
