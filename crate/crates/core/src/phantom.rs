//! Synthetic kidney phantoms: an ellipsoidal kidney, a recursive binary tree
//! of capsule-shaped vessels, optional spherical tumor, additive Gaussian
//! noise, and the matching ground truth (masks, tree, territories).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::math;
use crate::tree::{cluster_branches, detect_entries, Node, RawEdge, VesselTree};
use crate::vesselness::gaussian_smooth;
use crate::volume::{LabelVolume, ScalarVolume, VolumeGeometry};
use crate::voronoi::{partition, VoronoiPartition};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KidneySpec {
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeSpec {
    /// Generations; depth `d` yields `2^d - 1` segments.
    pub depth: usize,
    /// Angle between a child and its parent direction, drawn from `[min, max]` degrees.
    pub angle_deg: [f64; 2],
    pub root_radius_mm: f64,
    /// Radius factor per generation.
    pub radius_decay: f64,
    /// Segment length drawn from `[min, max]` mm.
    pub segment_length_mm: [f64; 2],
    pub root_start_mm: [f64; 3],
    pub root_direction: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensitySpec {
    pub background_hu: f64,
    pub kidney_hu: f64,
    pub vessel_hu: f64,
    pub tumor_hu: f64,
    pub noise_sigma: f64,
    /// Optional Gaussian blur (mm) applied before the noise.
    pub psf_sigma_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TumorSpec {
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub geometry: VolumeGeometry,
    pub kidney: KidneySpec,
    pub tree: TreeSpec,
    pub intensity: IntensitySpec,
    pub tumor: Option<TumorSpec>,
    pub seed: u64,
}

impl Default for PhantomSpec {
    /// 64^3 voxels of 1 mm. The root enters from the -x side and bifurcates
    /// just outside the kidney, so a depth-3 tree has two entries.
    fn default() -> Self {
        Self {
            geometry: VolumeGeometry::with_dims([64, 64, 64]).unwrap_or_else(|_| unreachable!()),
            kidney: KidneySpec { center_mm: [36.0, 32.0, 32.0], semi_axes_mm: [14.0, 22.0, 14.0] },
            tree: TreeSpec {
                depth: 3,
                angle_deg: [25.0, 45.0],
                root_radius_mm: 2.5,
                radius_decay: 0.79,
                segment_length_mm: [12.0, 16.0],
                root_start_mm: [4.0, 32.0, 32.0],
                root_direction: [1.0, 0.0, 0.0],
            },
            intensity: IntensitySpec {
                background_hu: 0.0,
                kidney_hu: 40.0,
                vessel_hu: 200.0,
                tumor_hu: 30.0,
                noise_sigma: 10.0,
                psf_sigma_mm: None,
            },
            tumor: None,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let t = &self.tree;
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if t.depth == 0 || t.depth > 16 {
            return bad("tree depth must be in 1..=16");
        }
        if !(t.root_radius_mm > 0.0) || !(t.radius_decay > 0.0 && t.radius_decay <= 1.0) {
            return bad("radii must be > 0 and decay in (0, 1]");
        }
        if !(0.0 <= t.angle_deg[0] && t.angle_deg[0] <= t.angle_deg[1] && t.angle_deg[1] <= 180.0) {
            return bad("angle range must satisfy 0 <= min <= max <= 180");
        }
        if !(0.0 < t.segment_length_mm[0] && t.segment_length_mm[0] <= t.segment_length_mm[1] && t.segment_length_mm[1].is_finite()) {
            return bad("segment length range must satisfy 0 < min <= max");
        }
        if norm(t.root_direction) == 0.0 || !norm(t.root_direction).is_finite() {
            return bad("root direction must be a finite nonzero vector");
        }
        if self.kidney.semi_axes_mm.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return bad("kidney semi-axes must be > 0");
        }
        let i = &self.intensity;
        if !(i.vessel_hu > i.background_hu) {
            return bad("vessel HU must exceed background HU");
        }
        if !(i.noise_sigma >= 0.0 && i.noise_sigma.is_finite()) {
            return bad("noise sigma must be >= 0");
        }
        if matches!(i.psf_sigma_mm, Some(s) if !(s > 0.0)) {
            return bad("PSF sigma must be > 0");
        }
        if matches!(self.tumor, Some(tm) if !(tm.radius_mm > 0.0)) {
            return bad("tumor radius must be > 0");
        }
        Ok(())
    }
}

/// One straight vessel segment; `parent` is the segment it branches from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_mm: [f64; 3],
    pub end_mm: [f64; 3],
    pub radius_mm: f64,
    pub generation: usize,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub ct: ScalarVolume,
    pub kidney_gt: LabelVolume,
    pub vessel_gt: LabelVolume,
    /// Ground-truth tree with entries detected against `kidney_gt`.
    pub tree_gt: VesselTree,
    /// Level-0 territories of `tree_gt` within `kidney_gt`.
    pub partition_gt: VoronoiPartition,
    pub tumor_gt: Option<LabelVolume>,
    /// Generator segments in creation order.
    pub segments: Vec<Segment>,
}

fn norm(v: [f64; 3]) -> f64 {
    math::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Two unit vectors orthogonal to `d` and to each other.
fn perpendicular_basis(d: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = normalize(cross(d, helper));
    (u, cross(d, u))
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let l2 = dot(ab, ab);
    let t = if l2 > 0.0 { (dot(ap, ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
    norm(d)
}

/// 26-connected digital line between two voxels, both included.
pub fn dda_line(g: &VolumeGeometry, a: [usize; 3], b: [usize; 3]) -> Vec<usize> {
    let d = [0, 1, 2].map(|k| b[k] as i64 - a[k] as i64);
    let steps = d.iter().map(|x| x.abs()).max().unwrap_or(0);
    if steps == 0 {
        return vec![g.index(a[0], a[1], a[2])];
    }
    (0..=steps)
        .map(|i| {
            let c = [0, 1, 2].map(|k| (a[k] as i64 + math::round(d[k] as f64 * i as f64 / steps as f64) as i64) as usize);
            g.index(c[0], c[1], c[2])
        })
        .collect()
}

/// Longest `t <= len` keeping `start + t * dir` inside `[lo, hi]` per axis (mm).
fn fit_length(start: [f64; 3], dir: [f64; 3], len: f64, lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let mut t = len;
    for a in 0..3 {
        if dir[a] > 0.0 {
            t = t.min((hi[a] - start[a]) / dir[a]);
        } else if dir[a] < 0.0 {
            t = t.min((lo[a] - start[a]) / dir[a]);
        }
    }
    t
}

fn snap(g: &VolumeGeometry, p: [f64; 3]) -> [f64; 3] {
    let v = g.nearest_voxel(p);
    g.voxel_to_world(v.map(|x| x as f64))
}

/// Segments of the recursive tree, parents before children. Segments are
/// shortened where needed so that each capsule stays one voxel clear of the
/// grid border; endpoints are snapped to voxel centers.
pub fn generate_segments(spec: &PhantomSpec) -> Result<Vec<Segment>> {
    spec.validate()?;
    let g = spec.geometry;
    let t = &spec.tree;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sp = g.spacing();
    let max_sp = sp.iter().copied().fold(0.0, f64::max);
    let bounds = |r: f64| {
        let lo = g.voxel_to_world([0, 1, 2].map(|a| math::ceil(r / sp[a]) + 1.0));
        let hi = g.voxel_to_world([0, 1, 2].map(|a| g.dims()[a] as f64 - 2.0 - math::ceil(r / sp[a])));
        (lo, hi)
    };
    let start = snap(&g, t.root_start_mm);
    let (lo, hi) = bounds(t.root_radius_mm);
    if (0..3).any(|a| start[a] < lo[a] - 1e-9 || start[a] > hi[a] + 1e-9) {
        return Err(Error::InvalidParameter("root start too close to the volume border".into()));
    }
    let mut segs: Vec<Segment> = Vec::with_capacity((1 << t.depth) - 1);
    // (start, direction, generation, parent)
    let mut stack = vec![(start, normalize(t.root_direction), 0usize, None::<usize>)];
    while let Some((s, dir, gen, parent)) = stack.pop() {
        let radius = t.root_radius_mm * math::powf(t.radius_decay, gen as f64);
        let len = rng.random_range(t.segment_length_mm[0]..=t.segment_length_mm[1]);
        let (lo, hi) = bounds(radius);
        let len = fit_length(s, dir, len, lo, hi);
        if !(len >= 2.0 * max_sp) {
            return Err(Error::InvalidParameter(format!("segment of generation {} does not fit in the volume", gen)));
        }
        let end = snap(&g, [s[0] + len * dir[0], s[1] + len * dir[1], s[2] + len * dir[2]]);
        if g.nearest_voxel(end) == g.nearest_voxel(s) {
            return Err(Error::InvalidParameter("degenerate segment".into()));
        }
        let id = segs.len();
        segs.push(Segment { start_mm: s, end_mm: end, radius_mm: radius, generation: gen, parent });
        if gen + 1 < t.depth {
            let (u, v) = perpendicular_basis(dir);
            let phi = rng.random_range(0.0..core::f64::consts::TAU);
            let w = [0, 1, 2].map(|a| math::cos(phi) * u[a] + math::sin(phi) * v[a]);
            let mut kids = [[0.0; 3]; 2];
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let th = rng.random_range(t.angle_deg[0]..=t.angle_deg[1]).to_radians();
                kids[k] = normalize([0, 1, 2].map(|a| math::cos(th) * dir[a] + sign * math::sin(th) * w[a]));
            }
            // second child pushed first so the first child is generated next
            stack.push((end, kids[1], gen + 1, Some(id)));
            stack.push((end, kids[0], gen + 1, Some(id)));
        }
    }
    Ok(segs)
}

/// Union of the capsules (segment plus radius) of all segments.
pub fn rasterize_capsules(g: &VolumeGeometry, segments: &[Segment]) -> LabelVolume {
    let mut m = LabelVolume::filled(*g, 0);
    let sp = g.spacing();
    let dims = g.dims();
    for s in segments {
        let a = g.world_to_voxel(s.start_mm);
        let b = g.world_to_voxel(s.end_mm);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for k in 0..3 {
            let pad = s.radius_mm / sp[k] + 1.0;
            lo[k] = math::floor(a[k].min(b[k]) - pad).max(0.0) as usize;
            hi[k] = (math::ceil(a[k].max(b[k]) + pad).max(0.0) as usize).min(dims[k] - 1);
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let p = g.voxel_to_world([x as f64, y as f64, z as f64]);
                    if point_segment_distance(p, s.start_mm, s.end_mm) <= s.radius_mm {
                        m.set(x, y, z, 1);
                    }
                }
            }
        }
    }
    m
}

/// Tree of the segments: node 0 is the root start, node `i + 1` the end of
/// segment `i`; edges are the digital lines between them.
pub fn segments_tree(g: &VolumeGeometry, segments: &[Segment]) -> Result<VesselTree> {
    if segments.is_empty() {
        return Err(Error::Empty("no segments"));
    }
    let vox = |p: [f64; 3]| g.nearest_voxel(p);
    let mut nodes = vec![Node::from_voxels(g, vec![{
        let v = vox(segments[0].start_mm);
        g.index(v[0], v[1], v[2])
    }])];
    let mut edges = Vec::with_capacity(segments.len());
    for (i, s) in segments.iter().enumerate() {
        let e = vox(s.end_mm);
        nodes.push(Node::from_voxels(g, vec![g.index(e[0], e[1], e[2])]));
        let a = s.parent.map_or(0, |p| p + 1);
        edges.push(RawEdge { a, b: i + 1, path: dda_line(g, vox(s.start_mm), e) });
    }
    VesselTree::from_parts(*g, nodes, edges, 0, &[])
}

fn ellipsoid_mask(g: &VolumeGeometry, k: &KidneySpec) -> LabelVolume {
    LabelVolume::mask_from(*g, |i| {
        let p = g.index_to_world(i);
        (0..3)
            .map(|a| {
                let u = (p[a] - k.center_mm[a]) / k.semi_axes_mm[a];
                u * u
            })
            .sum::<f64>()
            <= 1.0
    })
}

fn sphere_mask(g: &VolumeGeometry, t: &TumorSpec) -> LabelVolume {
    LabelVolume::mask_from(*g, |i| {
        let p = g.index_to_world(i);
        let d = [p[0] - t.center_mm[0], p[1] - t.center_mm[1], p[2] - t.center_mm[2]];
        dot(d, d) <= t.radius_mm * t.radius_mm
    })
}

/// Generate a phantom. The kidney mask excludes tumor voxels. Intensities
/// are painted background, kidney, tumor, vessel (later wins), then blurred
/// if requested, then noise is added.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    let g = spec.geometry;
    let segments = generate_segments(spec)?;
    let vessel_gt = rasterize_capsules(&g, &segments);
    let tumor_gt = spec.tumor.map(|t| sphere_mask(&g, &t));
    let mut kidney_gt = ellipsoid_mask(&g, &spec.kidney);
    if let Some(t) = &tumor_gt {
        for (k, &tv) in kidney_gt.data_mut().iter_mut().zip(t.data()) {
            if tv != 0 {
                *k = 0;
            }
        }
    }
    if kidney_gt.count_nonzero() == 0 {
        return Err(Error::Empty("kidney mask is empty"));
    }
    let hits = vessel_gt.data().iter().zip(kidney_gt.data()).any(|(&v, &k)| v != 0 && k != 0);
    if !hits {
        return Err(Error::TreeMissesKidney);
    }
    let bare = segments_tree(&g, &segments)?;
    let tree_gt = detect_entries(&bare, &kidney_gt)?;
    if tree_gt.entries().is_empty() {
        return Err(Error::TreeMissesKidney);
    }
    let clustering = cluster_branches(&tree_gt, 0)?;
    let partition_gt = partition(&kidney_gt, &tree_gt, &clustering)?;

    let it = &spec.intensity;
    let kd = kidney_gt.data();
    let vd = vessel_gt.data();
    let td = tumor_gt.as_ref().map(|t| t.data());
    let clean = ScalarVolume::new(
        g,
        (0..g.len())
            .map(|i| {
                let v = if vd[i] != 0 {
                    it.vessel_hu
                } else if td.is_some_and(|t| t[i] != 0) {
                    it.tumor_hu
                } else if kd[i] != 0 {
                    it.kidney_hu
                } else {
                    it.background_hu
                };
                v as f32
            })
            .collect(),
    )?;
    let mut ct = match it.psf_sigma_mm {
        Some(s) => gaussian_smooth(&clean, s)?,
        None => clean,
    };
    if it.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, it.noise_sigma).map_err(|_| Error::InvalidParameter("noise sigma".into()))?;
        for v in ct.data_mut() {
            *v = (f64::from(*v) + normal.sample(&mut rng)) as f32;
        }
    }
    Ok(Phantom { ct, kidney_gt, vessel_gt, tree_gt, partition_gt, tumor_gt, segments })
}
