//! JSON run configuration. Every section has defaults, so `{}` is a valid
//! file; command-line flags are applied on top of the loaded values.

use std::path::{Path, PathBuf};

use renovor_core::gmm::EmOptions;
use renovor_core::phantom::{IntensitySpec, KidneySpec, PhantomSpec, TreeSpec, TumorSpec};
use renovor_core::tensorcut::{MrfEnergyParams, SeedParams};
use renovor_core::tree::TreeParams;
use renovor_core::vesselness::VesselnessParams;
use renovor_core::voronoi::DEFAULT_MARGIN_MM;
use renovor_core::{Connectivity, VolumeGeometry};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub ct: Option<PathBuf>,
    pub kidney: Option<PathBuf>,
    pub tumor: Option<PathBuf>,
    pub vessels: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub seg: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VesselnessConfig {
    pub scales_mm: Vec<f64>,
    pub gamma12: f64,
    pub gamma23: f64,
}

impl Default for VesselnessConfig {
    fn default() -> Self {
        let p = VesselnessParams::default();
        VesselnessConfig { scales_mm: p.scales_mm, gamma12: p.gamma12, gamma23: p.gamma23 }
    }
}

impl VesselnessConfig {
    pub fn params(&self) -> VesselnessParams {
        VesselnessParams { gamma12: self.gamma12, gamma23: self.gamma23, scales_mm: self.scales_mm.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub foreground_percentile: f64,
    pub background_percentile: f64,
    pub exclusion_percentile: f64,
    pub exclusion_radius_mm: f64,
    pub intensity_smoothing_mm: f64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        let p = SeedParams::default();
        SeedConfig {
            foreground_percentile: p.foreground_percentile,
            background_percentile: p.background_percentile,
            exclusion_percentile: p.exclusion_percentile,
            exclusion_radius_mm: p.exclusion_radius_mm,
            intensity_smoothing_mm: p.intensity_smoothing_mm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TensorCutConfig {
    pub lambda_i: f64,
    pub lambda_t: f64,
    pub omega: f64,
    pub sigma_i: Option<f64>,
    pub sigma_t: Option<f64>,
    /// 6 or 26.
    pub connectivity: u8,
    pub gmm_components: usize,
    pub em_tol: f64,
    pub em_max_iter: usize,
    /// Margin (voxels) around the kidney bounding box for the VOI.
    pub voi_margin_voxels: usize,
    pub seeds: SeedConfig,
}

impl Default for TensorCutConfig {
    fn default() -> Self {
        let p = MrfEnergyParams::default();
        TensorCutConfig {
            lambda_i: p.lambda_i,
            lambda_t: p.lambda_t,
            omega: p.omega,
            sigma_i: p.sigma_i,
            sigma_t: p.sigma_t,
            connectivity: 6,
            gmm_components: p.gmm_components,
            em_tol: p.em.tol,
            em_max_iter: p.em.max_iter,
            voi_margin_voxels: 3,
            seeds: SeedConfig::default(),
        }
    }
}

impl TensorCutConfig {
    pub fn params(&self, seed: u64) -> Result<MrfEnergyParams, String> {
        let connectivity = match self.connectivity {
            6 => Connectivity::Six,
            26 => Connectivity::TwentySix,
            c => return Err(format!("connectivity must be 6 or 26, got {c}")),
        };
        let p = MrfEnergyParams {
            lambda_i: self.lambda_i,
            lambda_t: self.lambda_t,
            omega: self.omega,
            sigma_i: self.sigma_i,
            sigma_t: self.sigma_t,
            connectivity,
            gmm_components: self.gmm_components,
            em: EmOptions { tol: self.em_tol, max_iter: self.em_max_iter, seed },
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn seed_params(&self) -> SeedParams {
        let s = &self.seeds;
        SeedParams {
            foreground_percentile: s.foreground_percentile,
            background_percentile: s.background_percentile,
            exclusion_percentile: s.exclusion_percentile,
            exclusion_radius_mm: s.exclusion_radius_mm,
            intensity_smoothing_mm: s.intensity_smoothing_mm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    /// World point (mm) next to the tree root. Without it the skeleton voxel
    /// farthest from the kidney centroid is used (first voxel without a kidney).
    pub root_hint_mm: Option<[f64; 3]>,
    pub min_terminal_length_mm: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { root_hint_mm: None, min_terminal_length_mm: TreeParams::default().min_terminal_length_mm }
    }
}

impl TreeConfig {
    pub fn params(&self) -> TreeParams {
        TreeParams { min_terminal_length_mm: self.min_terminal_length_mm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoronoiConfig {
    pub level_offset: i32,
    pub margin_mm: f64,
}

impl Default for VoronoiConfig {
    fn default() -> Self {
        VoronoiConfig { level_offset: 0, margin_mm: DEFAULT_MARGIN_MM }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TumorConfig {
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub kidney_center_mm: [f64; 3],
    pub kidney_semi_axes_mm: [f64; 3],
    pub depth: usize,
    pub angle_deg: [f64; 2],
    pub root_radius_mm: f64,
    pub radius_decay: f64,
    pub segment_length_mm: [f64; 2],
    pub root_start_mm: [f64; 3],
    pub root_direction: [f64; 3],
    pub background_hu: f64,
    pub kidney_hu: f64,
    pub vessel_hu: f64,
    pub tumor_hu: f64,
    pub noise_sigma: f64,
    pub psf_sigma_mm: Option<f64>,
    pub tumor: Option<TumorConfig>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        let s = PhantomSpec::default();
        PhantomConfig {
            dims: s.geometry.dims(),
            spacing: s.geometry.spacing(),
            origin: s.geometry.origin(),
            kidney_center_mm: s.kidney.center_mm,
            kidney_semi_axes_mm: s.kidney.semi_axes_mm,
            depth: s.tree.depth,
            angle_deg: s.tree.angle_deg,
            root_radius_mm: s.tree.root_radius_mm,
            radius_decay: s.tree.radius_decay,
            segment_length_mm: s.tree.segment_length_mm,
            root_start_mm: s.tree.root_start_mm,
            root_direction: s.tree.root_direction,
            background_hu: s.intensity.background_hu,
            kidney_hu: s.intensity.kidney_hu,
            vessel_hu: s.intensity.vessel_hu,
            tumor_hu: s.intensity.tumor_hu,
            noise_sigma: s.intensity.noise_sigma,
            psf_sigma_mm: s.intensity.psf_sigma_mm,
            tumor: None,
        }
    }
}

impl PhantomConfig {
    pub fn spec(&self, seed: u64) -> Result<PhantomSpec, String> {
        let geometry = VolumeGeometry::new(self.dims, self.spacing, self.origin).map_err(|e| e.to_string())?;
        Ok(PhantomSpec {
            geometry,
            kidney: KidneySpec { center_mm: self.kidney_center_mm, semi_axes_mm: self.kidney_semi_axes_mm },
            tree: TreeSpec {
                depth: self.depth,
                angle_deg: self.angle_deg,
                root_radius_mm: self.root_radius_mm,
                radius_decay: self.radius_decay,
                segment_length_mm: self.segment_length_mm,
                root_start_mm: self.root_start_mm,
                root_direction: self.root_direction,
            },
            intensity: IntensitySpec {
                background_hu: self.background_hu,
                kidney_hu: self.kidney_hu,
                vessel_hu: self.vessel_hu,
                tumor_hu: self.tumor_hu,
                noise_sigma: self.noise_sigma,
                psf_sigma_mm: self.psf_sigma_mm,
            },
            tumor: self.tumor.map(|t| TumorSpec { center_mm: t.center_mm, radius_mm: t.radius_mm }),
            seed,
        })
    }
}

/// Complete configuration shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub inputs: Inputs,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub vesselness: VesselnessConfig,
    pub tensorcut: TensorCutConfig,
    pub tree: TreeConfig,
    pub voronoi: VoronoiConfig,
    pub phantom: PhantomConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("invalid config {0}: {1}")]
    Parse(PathBuf, serde_json::Error),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.into(), e))?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(path.into(), e))
    }
}
