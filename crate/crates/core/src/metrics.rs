//! Overlap and distance metrics between binary masks.

use alloc::vec::Vec;

use crate::math;
use crate::nearest::SiteIndex;
use crate::par;
use crate::volume::{LabelVolume, ALL_OFFSETS, FACE_OFFSETS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(gt: &LabelVolume, seg: &LabelVolume) -> Result<ConfusionCounts> {
    gt.geometry().ensure_same(seg.geometry())?;
    let mut c = ConfusionCounts::default();
    for (&a, &b) in gt.data().iter().zip(seg.data()) {
        match (a != 0, b != 0) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2 TP / (2 TP + FP + FN)`; 1 when both masks are empty.
pub fn dice(gt: &LabelVolume, seg: &LabelVolume) -> Result<f64> {
    let c = confusion(gt, seg)?;
    let den = 2 * c.tp + c.fp + c.fn_;
    Ok(if den == 0 { 1.0 } else { (2 * c.tp) as f64 / den as f64 })
}

/// `TP / (TP + FN)`.
pub fn sensitivity(gt: &LabelVolume, seg: &LabelVolume) -> Result<f64> {
    let c = confusion(gt, seg)?;
    if c.tp + c.fn_ == 0 {
        return Err(Error::Empty("ground truth mask is empty"));
    }
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

/// Mask voxels with at least one face neighbor outside the mask (the grid
/// border counts as outside).
pub fn surface(mask: &LabelVolume) -> LabelVolume {
    let g = *mask.geometry();
    let d = mask.data();
    LabelVolume::mask_from(g, |i| {
        d[i] != 0 && {
            let c = g.coords(i);
            FACE_OFFSETS.iter().any(|&o| g.offset(c, o).is_none_or(|j| d[j] == 0))
        }
    })
}

fn directed_sq(from: &LabelVolume, index: &SiteIndex) -> f64 {
    let g = *from.geometry();
    let pts = from.nonzero_indices();
    let d2 = par::map_indices(pts.len(), |k| index.nearest(g.coords(pts[k])).map_or(f64::INFINITY, |n| n.d2));
    d2.into_iter().fold(0.0, f64::max)
}

fn sites_of(mask: &LabelVolume) -> Vec<([usize; 3], u32)> {
    let g = mask.geometry();
    mask.nonzero_indices().into_iter().map(|i| (g.coords(i), 0)).collect()
}

/// Directed Hausdorff distance `max_a min_b |a - b|` in mm between the
/// nonzero voxels of two masks.
pub fn directed_hausdorff(a: &LabelVolume, b: &LabelVolume) -> Result<f64> {
    a.geometry().ensure_same(b.geometry())?;
    if a.count_nonzero() == 0 || b.count_nonzero() == 0 {
        return Err(Error::Empty("surface is empty"));
    }
    let index = SiteIndex::new(*b.geometry(), &sites_of(b));
    Ok(math::sqrt(directed_sq(a, &index)))
}

/// Symmetric Hausdorff distance (mm) between two surface masks.
pub fn hausdorff(gt_surface: &LabelVolume, seg_surface: &LabelVolume) -> Result<f64> {
    let h1 = directed_hausdorff(gt_surface, seg_surface)?;
    let h2 = directed_hausdorff(seg_surface, gt_surface)?;
    Ok(h1.max(h2))
}

/// Hausdorff distance between the surfaces of two masks.
pub fn hausdorff_masks(gt: &LabelVolume, seg: &LabelVolume) -> Result<f64> {
    hausdorff(&surface(gt), &surface(seg))
}

/// Chebyshev radius-1 dilation (the 26-neighborhood shell).
pub fn tube(skeleton: &LabelVolume) -> LabelVolume {
    let g = *skeleton.geometry();
    let mut out = skeleton.binarized();
    for i in skeleton.nonzero_indices() {
        let c = g.coords(i);
        for &o in ALL_OFFSETS.iter() {
            if let Some(j) = g.offset(c, o) {
                out.data_mut()[j] = 1;
            }
        }
    }
    out
}

fn count_inside(points: &LabelVolume, region: &LabelVolume) -> usize {
    points.data().iter().zip(region.data()).filter(|&(&p, &r)| p != 0 && r != 0).count()
}

/// Centerline overlap `2 |OV| / (|G| + |O|)` where `OV` are the output
/// skeleton voxels inside the radius-1 tube around the reference skeleton
/// `G` and lengths are voxel counts. This is not clamped; it can exceed 1
/// when the output skeleton is much longer than the reference.
pub fn centerline_overlap(gt_skeleton: &LabelVolume, out_skeleton: &LabelVolume) -> Result<f64> {
    gt_skeleton.geometry().ensure_same(out_skeleton.geometry())?;
    let ng = gt_skeleton.count_nonzero();
    let no = out_skeleton.count_nonzero();
    if ng + no == 0 {
        return Err(Error::Empty("both skeletons are empty"));
    }
    let ov = count_inside(out_skeleton, &tube(gt_skeleton));
    Ok(2.0 * ov as f64 / (ng + no) as f64)
}

/// Symmetric variant: `(|O in tube(G)| + |G in tube(O)|) / (|G| + |O|)`,
/// always within [0, 1].
pub fn centerline_overlap_symmetric(a: &LabelVolume, b: &LabelVolume) -> Result<f64> {
    a.geometry().ensure_same(b.geometry())?;
    let na = a.count_nonzero();
    let nb = b.count_nonzero();
    if na + nb == 0 {
        return Err(Error::Empty("both skeletons are empty"));
    }
    let ov = count_inside(b, &tube(a)) + count_inside(a, &tube(b));
    Ok(ov as f64 / (na + nb) as f64)
}
