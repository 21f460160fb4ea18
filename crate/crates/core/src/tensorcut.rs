//! Binary tensor-cut segmentation.
//!
//! The energy of a labeling `L` (foreground = 1) is
//!
//! ```text
//! E(L) = sum_x  -ln Pr(I_x | L_x)                      intensity data
//!      + sum_mn  lambda_I exp(-dI^2 / 2 s_I^2) / dist [L_m != L_n]
//!      + omega ( sum_x  d(T_x, M_Lx)^2 / (2 disp^2)    tensor data
//!              + sum_mn lambda_T exp(-dT^2 / 2 s_T^2) / dist [L_m != L_n] )
//! ```
//!
//! with per-class Gaussian mixtures for `Pr(I|L)`, per-class Fréchet means
//! `M_L` of the seed tensors and affine-invariant distances `d`. Seeds are
//! hard constraints. The minimum is found exactly by one s-t cut.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::gmm::{fit_gmm, gmm_neg_log_likelihood, EmOptions, GmmModel};
use crate::linalg::SymMat3;
use crate::maxflow::{max_flow_min_cut, FlowNetwork, MinCut};
use crate::math;
use crate::par;
use crate::spd::{frechet_mean, geodesic_distance_with, SpdField, SpdTensor, DEFAULT_MEAN_MAX_ITER, DEFAULT_MEAN_TOL};
use crate::volume::{dilate_ball, Connectivity, LabelVolume, ScalarVolume};
use crate::vesselness::gaussian_smooth;
use crate::{Error, Result};

/// Terminal capacity used for hard seed constraints.
pub const HARD_CAPACITY: f64 = 1e9;

/// Seeds used for the tensor means / dispersion are thinned to at most this
/// many per class by a fixed stride.
pub const MAX_TENSOR_SAMPLES: usize = 2000;
/// Same for the intensity mixtures.
pub const MAX_INTENSITY_SAMPLES: usize = 20000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfEnergyParams {
    pub lambda_i: f64,
    pub lambda_t: f64,
    pub omega: f64,
    /// Intensity boundary scale (HU); `None` = mean absolute neighbor difference.
    pub sigma_i: Option<f64>,
    /// Tensor boundary scale; `None` = mean neighbor geodesic distance.
    pub sigma_t: Option<f64>,
    pub connectivity: Connectivity,
    /// Mixture components per class (reduced to the number of distinct samples).
    pub gmm_components: usize,
    pub em: EmOptions,
}

impl Default for MrfEnergyParams {
    fn default() -> Self {
        Self {
            lambda_i: 1.0,
            lambda_t: 1.0,
            omega: 0.5,
            sigma_i: None,
            sigma_t: None,
            connectivity: Connectivity::Six,
            gmm_components: 3,
            em: EmOptions::default(),
        }
    }
}

impl MrfEnergyParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.lambda_i) || !nonneg(self.lambda_t) || !nonneg(self.omega) {
            return Err(Error::InvalidParameter("lambda_i, lambda_t and omega must be finite and >= 0".into()));
        }
        for s in [self.sigma_i, self.sigma_t].into_iter().flatten() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("boundary sigma must be > 0, got {s}")));
            }
        }
        if self.gmm_components == 0 {
            return Err(Error::InvalidParameter("gmm_components must be >= 1".into()));
        }
        Ok(())
    }
}

/// Hard-constrained voxels (linear indices, sorted, disjoint).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeedLabels {
    foreground: Vec<usize>,
    background: Vec<usize>,
}

impl SeedLabels {
    pub fn new(mut foreground: Vec<usize>, mut background: Vec<usize>) -> Result<Self> {
        foreground.sort_unstable();
        foreground.dedup();
        background.sort_unstable();
        background.dedup();
        let (mut i, mut j) = (0, 0);
        while i < foreground.len() && j < background.len() {
            match foreground[i].cmp(&background[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    return Err(Error::InvalidParameter(format!("voxel {} seeded as both labels", foreground[i])))
                }
            }
        }
        Ok(Self { foreground, background })
    }

    /// Label 1 = foreground, 2 = background, anything else unseeded.
    pub fn from_volume(v: &LabelVolume) -> Self {
        let mut fg = Vec::new();
        let mut bg = Vec::new();
        for (i, &l) in v.data().iter().enumerate() {
            match l {
                1 => fg.push(i),
                2 => bg.push(i),
                _ => {}
            }
        }
        Self { foreground: fg, background: bg }
    }

    pub fn to_volume(&self, geometry: crate::VolumeGeometry) -> LabelVolume {
        let mut v = LabelVolume::filled(geometry, 0);
        let d = v.data_mut();
        for &i in &self.foreground {
            d[i] = 1;
        }
        for &i in &self.background {
            d[i] = 2;
        }
        v
    }

    pub fn foreground(&self) -> &[usize] {
        &self.foreground
    }

    pub fn background(&self) -> &[usize] {
        &self.background
    }

    pub fn is_empty(&self) -> bool {
        self.foreground.is_empty() && self.background.is_empty()
    }

    fn check_range(&self, n: usize) -> Result<()> {
        let max = self.foreground.last().into_iter().chain(self.background.last()).copied().max();
        match max {
            Some(m) if m >= n => Err(Error::InvalidParameter(format!("seed index {m} out of range"))),
            _ => Ok(()),
        }
    }
}

/// Automatic seeding from vesselness and intensity percentiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedParams {
    /// Foreground: vesselness at or above this percentile (and > 0).
    pub foreground_percentile: f64,
    /// Background: intensity strictly below this percentile...
    pub background_percentile: f64,
    /// ...and outside the vessel region (vesselness at or above this
    /// percentile, dilated by `exclusion_radius_mm`).
    pub exclusion_percentile: f64,
    pub exclusion_radius_mm: f64,
    /// Gaussian smoothing (mm) of the intensities ranked for background
    /// seeds; 0 ranks raw intensities.
    pub intensity_smoothing_mm: f64,
}

impl Default for SeedParams {
    fn default() -> Self {
        Self {
            foreground_percentile: 99.5,
            background_percentile: 50.0,
            exclusion_percentile: 95.0,
            exclusion_radius_mm: 3.0,
            intensity_smoothing_mm: 1.0,
        }
    }
}

/// Nearest-rank percentile (`p` in [0, 100]) of finite values.
pub fn percentile(values: &[f32], p: f64) -> f32 {
    if values.is_empty() {
        return f32::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f32::total_cmp);
    let n = v.len();
    let rank = math::ceil(p.clamp(0.0, 100.0) / 100.0 * n as f64) as usize;
    v[rank.clamp(1, n) - 1]
}

pub fn auto_seeds(vol: &ScalarVolume, vesselness: &ScalarVolume, params: &SeedParams) -> Result<SeedLabels> {
    vol.geometry().ensure_same(vesselness.geometry())?;
    for p in [params.foreground_percentile, params.background_percentile, params.exclusion_percentile] {
        if !(0.0..=100.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("percentile {p} outside [0, 100]")));
        }
    }
    if !(params.intensity_smoothing_mm >= 0.0) || !(params.exclusion_radius_mm >= 0.0) {
        return Err(Error::InvalidParameter("seed radii must be >= 0".into()));
    }
    // ranking a smoothed copy keeps the seeds' raw intensities from being a
    // truncated sample of the tissue noise
    let ranked = if params.intensity_smoothing_mm > 0.0 {
        gaussian_smooth(vol, params.intensity_smoothing_mm)?
    } else {
        vol.clone()
    };
    let v = vesselness.data();
    let fg_thr = percentile(v, params.foreground_percentile);
    let ex_thr = percentile(v, params.exclusion_percentile);
    let bg_thr = percentile(ranked.data(), params.background_percentile);
    let fg: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.0 && v[i] >= fg_thr).collect();
    let region = LabelVolume::mask_from(*vol.geometry(), |i| v[i] > 0.0 && v[i] >= ex_thr);
    let region = dilate_ball(&region, params.exclusion_radius_mm)?;
    let r = region.data();
    let bg: Vec<usize> = (0..v.len()).filter(|&i| r[i] == 0 && ranked.data()[i] < bg_thr).collect();
    if fg.is_empty() {
        return Err(Error::Empty("no foreground seeds (vesselness is zero everywhere)"));
    }
    if bg.is_empty() {
        return Err(Error::Empty("no background seeds"));
    }
    SeedLabels::new(fg, bg)
}

/// `d(T, M_label)^2 / (2 dispersion^2)` with `label` true for foreground.
pub fn tensor_neg_log_likelihood(
    foreground_mean: &SpdTensor,
    background_mean: &SpdTensor,
    dispersion: f64,
    t: &SpdTensor,
    label: bool,
) -> f64 {
    let m = if label { foreground_mean } else { background_mean };
    let d = geodesic_distance_with(&m.inv_sqrt(), t);
    d * d / (2.0 * dispersion * dispersion)
}

/// An undirected neighbor pair with its combined smoothness weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NLink {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseWeights {
    pub links: Vec<NLink>,
    pub sigma_i: f64,
    pub sigma_t: f64,
}

fn strided<T: Copy>(items: &[T], max: usize) -> Vec<T> {
    if items.len() <= max {
        return items.to_vec();
    }
    let stride = items.len().div_ceil(max);
    items.iter().step_by(stride).copied().collect()
}

/// Smoothness capacities for every neighbor pair. The tensor part is only
/// evaluated when `omega * lambda_t > 0`.
pub fn pairwise_weights(vol: &ScalarVolume, field: &SpdField, params: &MrfEnergyParams) -> Result<PairwiseWeights> {
    params.validate()?;
    let g = *vol.geometry();
    g.ensure_same(field.geometry())?;
    let offsets: Vec<[i64; 3]> = params.connectivity.forward_offsets().collect();
    let f = offsets.len();
    let dist: Vec<f64> = offsets.iter().map(|&o| math::sqrt(g.squared_distance(o))).collect();
    let use_tensor = params.omega * params.lambda_t > 0.0;
    let inv_sqrt: Vec<SymMat3> = if use_tensor {
        let t = field.tensors();
        par::map_indices(t.len(), |i| t[i].inv_sqrt())
    } else {
        Vec::new()
    };
    let data = vol.data();
    // per voxel and forward offset: (neighbor, |dI|, dT); neighbor = usize::MAX if absent
    let raw: Vec<Vec<(usize, f64, f64)>> = par::map_indices(g.len(), |i| {
        let c = g.coords(i);
        let mut out = Vec::with_capacity(f);
        for &o in &offsets {
            match g.offset(c, o) {
                Some(j) => {
                    let di = math::abs(f64::from(data[i]) - f64::from(data[j]));
                    let dt = if use_tensor { geodesic_distance_with(&inv_sqrt[i], field.get(j)) } else { 0.0 };
                    out.push((j, di, dt));
                }
                None => out.push((usize::MAX, 0.0, 0.0)),
            }
        }
        out
    });
    let mut count = 0usize;
    let (mut sum_i, mut sum_t) = (0.0, 0.0);
    for row in &raw {
        for &(j, di, dt) in row {
            if j != usize::MAX {
                count += 1;
                sum_i += di;
                sum_t += dt;
            }
        }
    }
    let auto = |sum: f64| if count > 0 && sum > 0.0 { sum / count as f64 } else { 1.0 };
    let sigma_i = params.sigma_i.unwrap_or_else(|| auto(sum_i));
    let sigma_t = params.sigma_t.unwrap_or_else(|| auto(sum_t));
    let mut links = Vec::with_capacity(count);
    for (i, row) in raw.iter().enumerate() {
        for (k, &(j, di, dt)) in row.iter().enumerate() {
            if j == usize::MAX {
                continue;
            }
            let mut w = params.lambda_i * math::exp(-di * di / (2.0 * sigma_i * sigma_i)) / dist[k];
            if use_tensor {
                w += params.omega * params.lambda_t * math::exp(-dt * dt / (2.0 * sigma_t * sigma_t)) / dist[k];
            }
            links.push(NLink { a: i, b: j, weight: w });
        }
    }
    Ok(PairwiseWeights { links, sigma_i, sigma_t })
}

/// Hard constraint of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hard {
    Free,
    Foreground,
    Background,
}

/// Fully evaluated energy: per-voxel label costs, smoothness links and hard
/// constraints, plus the fitted models that produced them.
#[derive(Debug, Clone)]
pub struct MrfModel {
    pub cost_foreground: Vec<f64>,
    pub cost_background: Vec<f64>,
    pub links: Vec<NLink>,
    pub hard: Vec<Hard>,
    pub foreground_gmm: GmmModel,
    pub background_gmm: GmmModel,
    pub foreground_mean: SpdTensor,
    pub background_mean: SpdTensor,
    pub dispersion: f64,
    pub sigma_i: f64,
    pub sigma_t: f64,
}

fn fit_class(samples: &[f64], k: usize, em: &EmOptions) -> Result<GmmModel> {
    let mut distinct = samples.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = k.min(distinct.len()).max(1);
    Ok(fit_gmm(samples, k, em)?.model)
}

/// Evaluate all energy terms for `vol` / `field` under `seeds`.
pub fn build_energy(vol: &ScalarVolume, field: &SpdField, seeds: &SeedLabels, params: &MrfEnergyParams) -> Result<MrfModel> {
    params.validate()?;
    let g = *vol.geometry();
    g.ensure_same(field.geometry())?;
    seeds.check_range(g.len())?;
    if seeds.foreground.is_empty() || seeds.background.is_empty() {
        return Err(Error::Empty("both foreground and background seeds are required"));
    }
    let data = vol.data();
    let fg_samples: Vec<f64> =
        strided(&seeds.foreground, MAX_INTENSITY_SAMPLES).iter().map(|&i| f64::from(data[i])).collect();
    let bg_samples: Vec<f64> =
        strided(&seeds.background, MAX_INTENSITY_SAMPLES).iter().map(|&i| f64::from(data[i])).collect();
    let foreground_gmm = fit_class(&fg_samples, params.gmm_components, &params.em)?;
    let background_gmm = fit_class(&bg_samples, params.gmm_components, &params.em)?;

    let fg_t: Vec<SpdTensor> = strided(&seeds.foreground, MAX_TENSOR_SAMPLES).iter().map(|&i| *field.get(i)).collect();
    let bg_t: Vec<SpdTensor> = strided(&seeds.background, MAX_TENSOR_SAMPLES).iter().map(|&i| *field.get(i)).collect();
    let foreground_mean = frechet_mean(&fg_t, DEFAULT_MEAN_TOL, DEFAULT_MEAN_MAX_ITER)?.mean;
    let background_mean = frechet_mean(&bg_t, DEFAULT_MEAN_TOL, DEFAULT_MEAN_MAX_ITER)?.mean;
    let fg_is = foreground_mean.inv_sqrt();
    let bg_is = background_mean.inv_sqrt();
    let mut spread = 0.0;
    for t in &fg_t {
        spread += geodesic_distance_with(&fg_is, t);
    }
    for t in &bg_t {
        spread += geodesic_distance_with(&bg_is, t);
    }
    let dispersion = spread / (fg_t.len() + bg_t.len()) as f64;
    let dispersion = if dispersion > 0.0 { dispersion } else { 1.0 };

    let use_tensor = params.omega > 0.0;
    let costs: Vec<(f64, f64)> = par::map_indices(g.len(), |i| {
        let x = f64::from(data[i]);
        let mut cf = gmm_neg_log_likelihood(&foreground_gmm, x);
        let mut cb = gmm_neg_log_likelihood(&background_gmm, x);
        if use_tensor {
            let t = field.get(i);
            let df = geodesic_distance_with(&fg_is, t);
            let db = geodesic_distance_with(&bg_is, t);
            let s = 2.0 * dispersion * dispersion;
            cf += params.omega * df * df / s;
            cb += params.omega * db * db / s;
        }
        (cf, cb)
    });
    let pw = pairwise_weights(vol, field, params)?;
    let mut hard = vec![Hard::Free; g.len()];
    for &i in &seeds.foreground {
        hard[i] = Hard::Foreground;
    }
    for &i in &seeds.background {
        hard[i] = Hard::Background;
    }
    Ok(MrfModel {
        cost_foreground: costs.iter().map(|c| c.0).collect(),
        cost_background: costs.iter().map(|c| c.1).collect(),
        links: pw.links,
        hard,
        foreground_gmm,
        background_gmm,
        foreground_mean,
        background_mean,
        dispersion,
        sigma_i: pw.sigma_i,
        sigma_t: pw.sigma_t,
    })
}

impl MrfModel {
    /// `E(L)`; infinite when a hard constraint is violated.
    pub fn energy(&self, labels: &[bool]) -> f64 {
        let mut e = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            match (self.hard[i], l) {
                (Hard::Foreground, false) | (Hard::Background, true) => return f64::INFINITY,
                _ => {}
            }
            e += if l { self.cost_foreground[i] } else { self.cost_background[i] };
        }
        for l in &self.links {
            if labels[l.a] != labels[l.b] {
                e += l.weight;
            }
        }
        e
    }

    /// Standard reduction to an s-t network: voxel `i` is node `i`, the
    /// source is `n` and the sink `n + 1`; source side means foreground.
    pub fn network(&self) -> Result<FlowNetwork> {
        let n = self.hard.len();
        let mut net = FlowNetwork::with_capacity(n + 2, n, n + 1, 2 * n + 2 * self.links.len())?;
        for i in 0..n {
            let (to_src, to_snk) = match self.hard[i] {
                Hard::Foreground => (HARD_CAPACITY, 0.0),
                Hard::Background => (0.0, HARD_CAPACITY),
                Hard::Free => {
                    let (cf, cb) = (self.cost_foreground[i], self.cost_background[i]);
                    let m = cf.min(cb);
                    (cb - m, cf - m)
                }
            };
            if to_src > 0.0 {
                net.add_arc(n, i, to_src)?;
            }
            if to_snk > 0.0 {
                net.add_arc(i, n + 1, to_snk)?;
            }
        }
        for l in &self.links {
            net.add_arc(l.a, l.b, l.weight)?;
            net.add_arc(l.b, l.a, l.weight)?;
        }
        Ok(net)
    }

    /// Minimum-energy labeling (true = foreground) and the underlying cut.
    pub fn solve(&self) -> Result<(Vec<bool>, MinCut)> {
        let n = self.hard.len();
        let cut = max_flow_min_cut(&self.network()?);
        Ok((cut.source_side[..n].to_vec(), cut))
    }
}

/// Segment `vol` into vessel (1) and background (0).
pub fn tensor_cut_segment(
    vol: &ScalarVolume,
    field: &SpdField,
    seeds: &SeedLabels,
    params: &MrfEnergyParams,
) -> Result<LabelVolume> {
    let g = *vol.geometry();
    seeds.check_range(g.len())?;
    if seeds.is_empty() {
        return Err(Error::Empty("seed set is empty"));
    }
    // nothing left to decide
    if seeds.foreground.len() + seeds.background.len() == g.len() {
        let mut out = LabelVolume::filled(g, 0);
        for &i in &seeds.foreground {
            out.data_mut()[i] = 1;
        }
        return Ok(out);
    }
    let model = build_energy(vol, field, seeds, params)?;
    let (labels, _) = model.solve()?;
    Ok(LabelVolume::mask_from(*vol.geometry(), |i| labels[i]))
}
