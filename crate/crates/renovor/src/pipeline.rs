//! Processing stages shared by the subcommands and the `pipeline` command.
//!
//! Vessel segmentation runs inside a VOI (the kidney bounding box plus a
//! margin); its result is pasted back into the input geometry so every
//! later stage shares one grid with the kidney mask.

use renovor_core::metrics;
use renovor_core::skeleton::skeletonize;
use renovor_core::spd::SpdField;
use renovor_core::tensorcut::{auto_seeds, tensor_cut_segment, SeedLabels};
use renovor_core::tree::{build_tree, cluster_branches, detect_entries, BranchClustering, VesselTree};
use renovor_core::vesselness::{multiscale_vesselness, MultiscaleVesselness};
use renovor_core::volume::{
    bounding_box_nonzero, connected_components_top_k, crop, paste, squared_distance_transform,
};
use renovor_core::voronoi::{partition, region_stats, VoronoiPartition};
use renovor_core::{Connectivity, LabelVolume, Result, ScalarVolume};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::stats::StatsReport;

/// The CT restricted to the kidney VOI, or the whole CT without a kidney.
pub fn voi(ct: &ScalarVolume, kidney: Option<&LabelVolume>, margin: usize) -> Result<ScalarVolume> {
    match kidney {
        Some(k) => {
            ct.geometry().ensure_same(k.geometry())?;
            crop(ct, &bounding_box_nonzero(k)?, margin)
        }
        None => Ok(ct.clone()),
    }
}

pub struct VesselnessStage {
    pub voi: ScalarVolume,
    pub filter: MultiscaleVesselness,
}

pub fn vesselness(ct: &ScalarVolume, kidney: Option<&LabelVolume>, cfg: &Config) -> Result<VesselnessStage> {
    let voi = voi(ct, kidney, cfg.tensorcut.voi_margin_voxels)?;
    let filter = multiscale_vesselness(&voi, &cfg.vesselness.params())?;
    Ok(VesselnessStage { voi, filter })
}

pub struct TensorCutStage {
    /// Hard seeds in the input geometry: 1 vessel, 2 background.
    pub seeds: LabelVolume,
    /// Binary vessel segmentation in the input geometry.
    pub vessels: LabelVolume,
}

/// Seeds come from `seed_volume` (cropped to the VOI) when given, otherwise
/// from the vesselness percentiles.
pub fn tensor_cut(
    ct: &ScalarVolume,
    stage: &VesselnessStage,
    seed_volume: Option<&LabelVolume>,
    cfg: &Config,
) -> std::result::Result<TensorCutStage, PipelineError> {
    let params = cfg.tensorcut.params(cfg.seed).map_err(PipelineError::Config)?;
    let voi = &stage.voi;
    let seeds = match seed_volume {
        Some(s) => {
            ct.geometry().ensure_same(s.geometry())?;
            SeedLabels::from_volume(&crop_to(s, voi)?)
        }
        None => auto_seeds(voi, &stage.filter.vesselness, &cfg.tensorcut.seed_params())?,
    };
    let field = SpdField::from_hessians(&stage.filter.hessian);
    let seg = tensor_cut_segment(voi, &field, &seeds, &params)?;
    let full = LabelVolume::filled(*ct.geometry(), 0);
    Ok(TensorCutStage {
        seeds: paste(&full, &seeds.to_volume(*voi.geometry()))?,
        vessels: paste(&full, &seg)?,
    })
}

/// Crop `vol` to the grid of `part` (which must lie on the same lattice).
fn crop_to<T: renovor_core::volume::Voxel>(
    vol: &renovor_core::Volume<T>,
    part: &ScalarVolume,
) -> Result<renovor_core::Volume<T>> {
    let g = part.geometry();
    let start = vol.geometry().nearest_voxel(g.origin());
    let d = g.dims();
    let bbox = renovor_core::BoundingBox { min: start, max: [start[0] + d[0] - 1, start[1] + d[1] - 1, start[2] + d[2] - 1] };
    let out = crop(vol, &bbox, 0)?;
    out.geometry().ensure_same(g)?;
    Ok(out)
}

pub struct TreeStage {
    pub skeleton: LabelVolume,
    pub tree: VesselTree,
}

/// Root hint: the configured point; else, among skeleton voxels outside the
/// kidney, the one deepest inside `vessels` (the trunk is the thickest
/// vessel), ties going to the farther from the kidney; else the skeleton
/// voxel farthest from the kidney centroid; else the first skeleton voxel.
pub fn root_hint(
    skeleton: &LabelVolume,
    vessels: &LabelVolume,
    kidney: Option<&LabelVolume>,
    cfg: &Config,
) -> Result<[f64; 3]> {
    if let Some(p) = cfg.tree.root_hint_mm {
        return Ok(p);
    }
    let g = *skeleton.geometry();
    g.ensure_same(vessels.geometry())?;
    let voxels = skeleton.nonzero_indices();
    let Some(&first) = voxels.first() else {
        return Err(renovor_core::Error::Empty("skeleton is empty"));
    };
    let Some(k) = kidney.filter(|k| k.count_nonzero() > 0) else {
        return Ok(g.index_to_world(first));
    };
    g.ensure_same(k.geometry())?;
    let outside = squared_distance_transform(&g, &k.to_bools(), false);
    let lumen: Vec<bool> = vessels.data().iter().map(|&v| v == 0).collect();
    let depth = squared_distance_transform(&g, &lumen, true);
    let inside = k.nonzero_indices();
    let mut c = [0.0; 3];
    for &i in &inside {
        let w = g.index_to_world(i);
        for a in 0..3 {
            c[a] += w[a] / inside.len() as f64;
        }
    }
    let to_centroid = |i: usize| {
        let w = g.index_to_world(i);
        (0..3).map(|a| (w[a] - c[a]) * (w[a] - c[a])).sum::<f64>()
    };
    let key = |i: usize| if outside[i] > 0.0 { (1, depth[i], outside[i], to_centroid(i)) } else { (0, 0.0, 0.0, to_centroid(i)) };
    let mut best = first;
    for &i in &voxels[1..] {
        if key(i).partial_cmp(&key(best)) == Some(std::cmp::Ordering::Greater) {
            best = i;
        }
    }
    Ok(g.index_to_world(best))
}

/// Largest 26-connected component, thinning, centerline graph and (with a
/// kidney) entry detection.
pub fn tree(vessels: &LabelVolume, kidney: Option<&LabelVolume>, cfg: &Config) -> Result<TreeStage> {
    let main = connected_components_top_k(vessels, 1, Connectivity::TwentySix).binarized();
    let skeleton = skeletonize(&main);
    let hint = root_hint(&skeleton, &main, kidney, cfg)?;
    let mut tree = build_tree(&skeleton, hint, &cfg.tree.params())?;
    if let Some(k) = kidney {
        tree = detect_entries(&tree, k)?;
    }
    Ok(TreeStage { skeleton, tree })
}

pub struct VoronoiStage {
    pub clustering: BranchClustering,
    pub partition: VoronoiPartition,
    pub stats: StatsReport,
}

/// Territories of the branch groups at the configured level. A tree without
/// entries gets them detected against `kidney` first.
pub fn territories(
    kidney: &LabelVolume,
    tree: &VesselTree,
    tumor: Option<&LabelVolume>,
    cfg: &Config,
) -> Result<VoronoiStage> {
    kidney.geometry().ensure_same(tree.geometry())?;
    let detected;
    let tree = if tree.entries().is_empty() {
        detected = detect_entries(tree, kidney)?;
        &detected
    } else {
        tree
    };
    let v = &cfg.voronoi;
    let clustering = cluster_branches(tree, v.level_offset)?;
    let partition = partition(kidney, tree, &clustering)?;
    let stats = region_stats(&partition, tumor, v.margin_mm)?;
    let stats = StatsReport::new(&stats, v.level_offset, v.margin_mm, tumor.is_some());
    Ok(VoronoiStage { clustering, partition, stats })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dsc: f64,
    pub se: f64,
    pub hd_mm: f64,
    pub co: f64,
}

/// Dice and sensitivity on the masks; Hausdorff on the masks or, with the
/// `top2` protocol, on their two largest components; centerline overlap on
/// the skeletons of both masks.
pub fn evaluate(gt: &LabelVolume, seg: &LabelVolume, top2: bool) -> Result<MetricsReport> {
    let (gt, seg) = (gt.binarized(), seg.binarized());
    let dsc = metrics::dice(&gt, &seg)?;
    let se = metrics::sensitivity(&gt, &seg)?;
    let hd_mm = if top2 {
        let keep = |m: &LabelVolume| connected_components_top_k(m, 2, Connectivity::Six).binarized();
        metrics::hausdorff_masks(&keep(&gt), &keep(&seg))?
    } else {
        metrics::hausdorff_masks(&gt, &seg)?
    };
    let co = metrics::centerline_overlap(&skeletonize(&gt), &skeletonize(&seg))?;
    Ok(MetricsReport { dsc, se, hd_mm, co })
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] renovor_core::Error),
}
