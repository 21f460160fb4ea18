//! Vascular territories: each kidney voxel goes to the branch group whose
//! centerline voxels are nearest in world distance, plus per-region volume
//! and tumor-contact statistics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::nearest::SiteIndex;
use crate::par;
use crate::tree::{BranchClustering, VesselTree};
use crate::volume::{dilate_ball, LabelVolume, FACE_OFFSETS};
use crate::{Error, Result};

/// Region display colors, cycled by region id.
pub const PALETTE: [&str; 9] =
    ["Yellow", "Blue", "Light-green", "Orange", "Light-blue", "Fuchsia", "Green", "Gray", "Brown"];

/// Default tumor margin in mm.
pub const DEFAULT_MARGIN_MM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiPartition {
    /// Region id `1..=M` per kidney voxel, 0 elsewhere.
    pub labels: LabelVolume,
    /// `region_group[r - 1]` is the branch group of region `r`.
    pub region_group: Vec<usize>,
}

impl VoronoiPartition {
    pub fn region_count(&self) -> usize {
        self.region_group.len()
    }

    /// Label volume carrying group ids + 1 instead of region ids.
    pub fn group_labels(&self) -> LabelVolume {
        self.labels.map(|r| if r == 0 { 0 } else { (self.region_group[r as usize - 1] + 1) as u16 })
    }
}

/// Site voxels of every group as `(coords, group id)`, deduplicated per group.
pub fn group_sites(tree: &VesselTree, clustering: &BranchClustering) -> Result<Vec<([usize; 3], u32)>> {
    if clustering.group_of_branch.len() != tree.branches().len() {
        return Err(Error::ShapeMismatch("clustering does not match the tree's branches".into()));
    }
    let g = tree.geometry();
    let mut per_group: Vec<Vec<usize>> = vec![Vec::new(); clustering.group_count];
    for (b, &grp) in clustering.group_of_branch.iter().enumerate() {
        per_group[grp].extend(tree.branch_voxels(b));
    }
    let mut out = Vec::new();
    for (grp, mut v) in per_group.into_iter().enumerate() {
        if v.is_empty() {
            return Err(Error::Empty("branch group without centerline voxels"));
        }
        v.sort_unstable();
        v.dedup();
        out.extend(v.into_iter().map(|i| (g.coords(i), grp as u32)));
    }
    Ok(out)
}

/// Nearest-site partition of `kidney` for explicit sites. Ties go to the
/// smallest group id. Region ids follow group order, skipping groups that
/// receive no voxel.
pub fn partition_sites(kidney: &LabelVolume, sites: &[([usize; 3], u32)], group_count: usize) -> Result<VoronoiPartition> {
    let g = *kidney.geometry();
    if kidney.count_nonzero() == 0 {
        return Err(Error::Empty("kidney mask is empty"));
    }
    if sites.is_empty() {
        return Err(Error::Empty("no sites"));
    }
    if sites.iter().any(|(c, k)| (*k as usize) >= group_count || (0..3).any(|a| c[a] >= g.dims()[a])) {
        return Err(Error::InvalidParameter("site outside grid or group range".into()));
    }
    let index = SiteIndex::new(g, sites);
    let k = kidney.data();
    let assigned: Vec<u32> = par::map_indices(g.len(), |i| {
        if k[i] == 0 {
            u32::MAX
        } else {
            index.nearest(g.coords(i)).map_or(u32::MAX, |n| n.key)
        }
    });
    let mut used = vec![false; group_count];
    for &a in &assigned {
        if a != u32::MAX {
            used[a as usize] = true;
        }
    }
    let mut region_of_group = vec![0u16; group_count];
    let mut region_group = Vec::new();
    for (grp, &u) in used.iter().enumerate() {
        if u {
            region_group.push(grp);
            region_of_group[grp] = u16::try_from(region_group.len())
                .map_err(|_| Error::InvalidParameter(format!("more than {} regions", u16::MAX)))?;
        }
    }
    let labels = LabelVolume::new(
        g,
        assigned.iter().map(|&a| if a == u32::MAX { 0 } else { region_of_group[a as usize] }).collect(),
    )?;
    Ok(VoronoiPartition { labels, region_group })
}

/// Territories of the branch groups of `clustering` within `kidney`.
pub fn partition(kidney: &LabelVolume, tree: &VesselTree, clustering: &BranchClustering) -> Result<VoronoiPartition> {
    kidney.geometry().ensure_same(tree.geometry())?;
    let sites = group_sites(tree, clustering)?;
    partition_sites(kidney, &sites, clustering.group_count)
}

/// The same partition computed from ground-truth kidney and tree.
pub fn simulated_ground_truth_partition(
    gt_kidney: &LabelVolume,
    gt_tree: &VesselTree,
    clustering: &BranchClustering,
) -> Result<VoronoiPartition> {
    partition(gt_kidney, gt_tree, clustering)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionStats {
    pub region: usize,
    pub group: usize,
    pub color: &'static str,
    pub voxels: usize,
    pub volume_mm3: f64,
    /// Percent of the kidney volume.
    pub volume_ratio: f64,
    pub contact_area_mm2: f64,
    /// Percent of the total contact area (0 when nothing touches the tumor).
    pub area_ratio: f64,
}

/// Volume and tumor-contact statistics per region. Contact area counts the
/// faces between region voxels outside the tumor margin and voxels of the
/// tumor dilated by `margin_mm`, each weighted by its physical area.
pub fn region_stats(partition: &VoronoiPartition, tumor: Option<&LabelVolume>, margin_mm: f64) -> Result<Vec<RegionStats>> {
    let g = *partition.labels.geometry();
    let m = partition.region_count();
    let labels = partition.labels.data();
    let mut count = vec![0usize; m];
    for &l in labels {
        if l != 0 {
            count[l as usize - 1] += 1;
        }
    }
    let mut area = vec![0.0f64; m];
    if let Some(t) = tumor {
        g.ensure_same(t.geometry())?;
        let zone = dilate_ball(t, margin_mm)?;
        let z = zone.data();
        for i in 0..g.len() {
            if labels[i] == 0 || z[i] != 0 {
                continue;
            }
            let c = g.coords(i);
            for (k, &o) in FACE_OFFSETS.iter().enumerate() {
                if matches!(g.offset(c, o), Some(j) if z[j] != 0) {
                    area[labels[i] as usize - 1] += g.face_area(k / 2);
                }
            }
        }
    }
    let total: usize = count.iter().sum();
    let total_area: f64 = area.iter().sum();
    let vv = g.voxel_volume();
    Ok((0..m)
        .map(|r| RegionStats {
            region: r + 1,
            group: partition.region_group[r],
            color: PALETTE[r % PALETTE.len()],
            voxels: count[r],
            volume_mm3: count[r] as f64 * vv,
            volume_ratio: if total > 0 { 100.0 * count[r] as f64 / total as f64 } else { 0.0 },
            contact_area_mm2: area[r],
            area_ratio: if total_area > 0.0 { 100.0 * area[r] / total_area } else { 0.0 },
        })
        .collect())
}
