//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing or unreadable input, inconsistent data, failed stage).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use renovor_core::{LabelVolume, ScalarVolume};

use crate::config::{Config, TumorConfig};
use crate::metaimage::{ElementType, MetaImage};
use crate::output::{sha256_hex, InputRecord, Manifest, OutputSet};
use crate::pipeline::{self, PipelineError};
use crate::treejson::TreeJson;

#[derive(Debug, Parser)]
#[command(name = "renovor", version, about = "Renal artery segmentation and vascular territory estimation")]
pub struct Cli {
    /// Worker threads; results are identical for any value
    #[arg(long, global = true, env = "RENOVOR_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic CT with kidney, vessel, tree and territory ground truth
    Phantom {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        phantom: PhantomArgs,
    },
    /// Multi-scale vesselness of the kidney VOI
    Vesselness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        vesselness: VesselnessArgs,
    },
    /// Graph-cut vessel segmentation with intensity and tensor terms
    Tensorcut {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        vesselness: VesselnessArgs,
        #[command(flatten)]
        cut: CutArgs,
    },
    /// Centerline tree of a vessel mask
    Tree {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        tree: TreeArgs,
    },
    /// Vascular territories and their statistics
    Voronoi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        voronoi: VoronoiArgs,
    },
    /// Dice, sensitivity, Hausdorff distance and centerline overlap
    Metrics {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: InputArgs,
        /// Keep the two largest components of both masks before the Hausdorff distance
        #[arg(long, alias = "paper-protocol")]
        top2_hd: bool,
    },
    /// vesselness, tensorcut, tree and voronoi in one run
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        vesselness: VesselnessArgs,
        #[command(flatten)]
        cut: CutArgs,
        #[command(flatten)]
        tree: TreeArgs,
        #[command(flatten)]
        voronoi: VoronoiArgs,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Random seed (phantom generation, mixture fitting)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Inputs")]
pub struct InputArgs {
    /// CT volume (.mhd)
    #[arg(long)]
    pub ct: Option<PathBuf>,
    /// Kidney mask (.mhd)
    #[arg(long)]
    pub kidney: Option<PathBuf>,
    /// Tumor mask (.mhd)
    #[arg(long)]
    pub tumor: Option<PathBuf>,
    /// Vessel mask (.mhd)
    #[arg(long)]
    pub vessels: Option<PathBuf>,
    /// Seed labels (.mhd): 1 vessel, 2 background
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Vessel tree (.json)
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Reference mask for metrics (.mhd)
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Evaluated mask for metrics (.mhd)
    #[arg(long)]
    pub seg: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Vesselness")]
pub struct VesselnessArgs {
    /// Gaussian scales in mm, comma separated
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[arg(long)]
    pub gamma12: Option<f64>,
    #[arg(long)]
    pub gamma23: Option<f64>,
    /// Voxels added around the kidney bounding box
    #[arg(long)]
    pub voi_margin: Option<usize>,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Tensor cut")]
pub struct CutArgs {
    /// Weight of the tensor terms (0 = intensity only)
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub lambda_i: Option<f64>,
    #[arg(long)]
    pub lambda_t: Option<f64>,
    #[arg(long)]
    pub sigma_i: Option<f64>,
    #[arg(long)]
    pub sigma_t: Option<f64>,
    /// Neighborhood: 6 or 26
    #[arg(long)]
    pub connectivity: Option<u8>,
    #[arg(long)]
    pub gmm_components: Option<usize>,
    /// Vesselness percentile for vessel seeds
    #[arg(long)]
    pub fg_percentile: Option<f64>,
    /// Intensity percentile for background seeds
    #[arg(long)]
    pub bg_percentile: Option<f64>,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Tree")]
pub struct TreeArgs {
    /// World point (mm) near the tree root: x,y,z
    #[arg(long, value_parser = parse_list::<f64, 3>, allow_hyphen_values = true)]
    pub root_mm: Option<[f64; 3]>,
    /// Drop terminal branches shorter than this (mm)
    #[arg(long)]
    pub min_terminal_mm: Option<f64>,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Territories")]
pub struct VoronoiArgs {
    /// Clustering level relative to the entries (negative merges, positive splits)
    #[arg(long, allow_negative_numbers = true)]
    pub level_offset: Option<i32>,
    /// Tumor margin in mm for contact areas
    #[arg(long)]
    pub margin_mm: Option<f64>,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Phantom")]
pub struct PhantomArgs {
    /// Grid size nx,ny,nz
    #[arg(long, value_parser = parse_list::<usize, 3>)]
    pub dims: Option<[usize; 3]>,
    /// Voxel spacing in mm: sx,sy,sz
    #[arg(long, value_parser = parse_list::<f64, 3>)]
    pub spacing: Option<[f64; 3]>,
    /// Tree depth (generations)
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub background_hu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kidney_hu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub vessel_hu: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Spherical tumor: x,y,z,radius in mm
    #[arg(long, value_parser = parse_list::<f64, 4>, allow_hyphen_values = true)]
    pub tumor_sphere: Option<[f64; 4]>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Usage(m),
            PipelineError::Core(e) => CliError::Data(e.to_string()),
        }
    }
}

impl From<renovor_core::Error> for CliError {
    fn from(e: renovor_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Exactly `N` comma-separated values.
fn parse_list<T: std::str::FromStr + Copy + Default, const N: usize>(s: &str) -> Result<[T; N], String>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated values, got {}", parts.len()));
    }
    let mut out = [T::default(); N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

impl Common {
    fn config(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
            None => Config::default(),
        };
        if self.out_dir.is_some() {
            cfg.out_dir = self.out_dir.clone();
        }
        set(&mut cfg.seed, self.seed);
        Ok(cfg)
    }
}

impl InputArgs {
    fn apply(&self, cfg: &mut Config) {
        let i = &mut cfg.inputs;
        for (slot, v) in [
            (&mut i.ct, &self.ct),
            (&mut i.kidney, &self.kidney),
            (&mut i.tumor, &self.tumor),
            (&mut i.vessels, &self.vessels),
            (&mut i.seeds, &self.seeds),
            (&mut i.tree, &self.tree),
            (&mut i.gt, &self.gt),
            (&mut i.seg, &self.seg),
        ] {
            if v.is_some() {
                *slot = v.clone();
            }
        }
    }
}

impl VesselnessArgs {
    fn apply(&self, cfg: &mut Config) {
        set(&mut cfg.vesselness.scales_mm, self.scales.clone());
        set(&mut cfg.vesselness.gamma12, self.gamma12);
        set(&mut cfg.vesselness.gamma23, self.gamma23);
        set(&mut cfg.tensorcut.voi_margin_voxels, self.voi_margin);
    }
}

impl CutArgs {
    fn apply(&self, cfg: &mut Config) {
        let t = &mut cfg.tensorcut;
        set(&mut t.omega, self.omega);
        set(&mut t.lambda_i, self.lambda_i);
        set(&mut t.lambda_t, self.lambda_t);
        if self.sigma_i.is_some() {
            t.sigma_i = self.sigma_i;
        }
        if self.sigma_t.is_some() {
            t.sigma_t = self.sigma_t;
        }
        set(&mut t.connectivity, self.connectivity);
        set(&mut t.gmm_components, self.gmm_components);
        set(&mut t.seeds.foreground_percentile, self.fg_percentile);
        set(&mut t.seeds.background_percentile, self.bg_percentile);
    }
}

impl TreeArgs {
    fn apply(&self, cfg: &mut Config) {
        if self.root_mm.is_some() {
            cfg.tree.root_hint_mm = self.root_mm;
        }
        set(&mut cfg.tree.min_terminal_length_mm, self.min_terminal_mm);
    }
}

impl VoronoiArgs {
    fn apply(&self, cfg: &mut Config) {
        set(&mut cfg.voronoi.level_offset, self.level_offset);
        set(&mut cfg.voronoi.margin_mm, self.margin_mm);
    }
}

impl PhantomArgs {
    fn apply(&self, cfg: &mut Config) {
        let p = &mut cfg.phantom;
        set(&mut p.dims, self.dims);
        set(&mut p.spacing, self.spacing);
        set(&mut p.depth, self.depth);
        set(&mut p.background_hu, self.background_hu);
        set(&mut p.kidney_hu, self.kidney_hu);
        set(&mut p.vessel_hu, self.vessel_hu);
        set(&mut p.noise_sigma, self.noise_sigma);
        if let Some(t) = &self.tumor_sphere {
            p.tumor = Some(TumorConfig { center_mm: [t[0], t[1], t[2]], radius_mm: t[3] });
        }
    }
}

/// Inputs loaded up front, with their manifest records.
#[derive(Default)]
struct Loaded {
    records: Vec<InputRecord>,
}

impl Loaded {
    fn image(&mut self, role: &str, path: &Path) -> Result<MetaImage, CliError> {
        let img = MetaImage::load(path).map_err(|e| CliError::Data(format!("{role}: {e}")))?;
        let header = std::fs::read(path).map_err(|e| CliError::Data(format!("{role}: {e}")))?;
        self.records.push(InputRecord {
            role: role.into(),
            path: path.into(),
            sha256: sha256_hex(&[&header, &img.raw_bytes()]),
        });
        Ok(img)
    }

    fn scalar(&mut self, role: &str, path: &Path) -> Result<ScalarVolume, CliError> {
        self.image(role, path)?.to_scalar().map_err(|e| CliError::Data(format!("{role}: {e}")))
    }

    fn labels(&mut self, role: &str, path: &Path) -> Result<LabelVolume, CliError> {
        self.image(role, path)?.to_labels().map_err(|e| CliError::Data(format!("{role}: {e}")))
    }

    fn tree(&mut self, path: &Path) -> Result<renovor_core::tree::VesselTree, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("tree: cannot read {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Data(format!("tree: {e}")))?;
        let tree = TreeJson::parse(&text).map_err(|e| CliError::Data(format!("tree: {e}")))?;
        self.records.push(InputRecord { role: "tree".into(), path: path.into(), sha256: sha256_hex(&[&bytes]) });
        Ok(tree)
    }
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    v.as_deref().ok_or_else(|| CliError::Usage(format!("missing required input --{flag}")))
}

/// Check the label geometry against the CT when both are present.
fn same_grid(a: &renovor_core::VolumeGeometry, b: &renovor_core::VolumeGeometry, what: &str) -> Result<(), CliError> {
    a.ensure_same(b).map_err(|e| CliError::Data(format!("{what}: {e}")))
}

/// Result of a command: files to write and optional standard output.
pub struct Outcome {
    pub command: &'static str,
    pub config: Config,
    pub inputs: Vec<InputRecord>,
    pub outputs: OutputSet,
    pub stdout: Option<String>,
}

impl Outcome {
    pub fn manifest(&self) -> Manifest {
        let mut params = self.config.clone();
        params.out_dir = None;
        let params = serde_json::to_value(&params).unwrap_or_else(|_| unreachable!());
        Manifest::new(self.command, params, self.inputs.clone(), &self.outputs)
    }
}

fn labels_image(v: &LabelVolume) -> MetaImage {
    MetaImage::from_labels_compact(v)
}

fn float_image(v: &ScalarVolume) -> MetaImage {
    MetaImage::from_scalar(v, ElementType::Float).unwrap_or_else(|_| unreachable!())
}

fn cmd_phantom(cfg: Config) -> Result<Outcome, CliError> {
    let spec = cfg.phantom.spec(cfg.seed).map_err(CliError::Usage)?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let p = renovor_core::phantom::generate(&spec)?;
    let mut out = OutputSet::new();
    out.image("ct", &float_image(&p.ct));
    out.image("kidney_gt", &labels_image(&p.kidney_gt));
    out.image("vessel_gt", &labels_image(&p.vessel_gt));
    out.text("tree_gt.json", TreeJson::from(&p.tree_gt).to_string_pretty());
    out.image("partition_gt", &labels_image(&p.partition_gt.labels));
    if let Some(t) = &p.tumor_gt {
        out.image("tumor_gt", &labels_image(t));
    }
    Ok(Outcome { command: "phantom", config: cfg, inputs: vec![], outputs: out, stdout: None })
}

fn cmd_vesselness(cfg: Config) -> Result<Outcome, CliError> {
    cfg.vesselness.params().validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ct_path = required(&cfg.inputs.ct, "ct")?;
    let mut l = Loaded::default();
    let ct = l.scalar("ct", ct_path)?;
    let kidney = match &cfg.inputs.kidney {
        Some(p) => Some(l.labels("kidney", p)?),
        None => None,
    };
    if let Some(k) = &kidney {
        same_grid(ct.geometry(), k.geometry(), "kidney")?;
    }
    let stage = pipeline::vesselness(&ct, kidney.as_ref(), &cfg)?;
    let mut out = OutputSet::new();
    out.image("vesselness", &float_image(&stage.filter.vesselness));
    Ok(Outcome { command: "vesselness", config: cfg, inputs: l.records, outputs: out, stdout: None })
}

/// Shared by `tensorcut` and `pipeline`.
struct SegmentationInputs {
    ct: ScalarVolume,
    kidney: Option<LabelVolume>,
    seeds: Option<LabelVolume>,
}

fn load_segmentation_inputs(cfg: &Config, l: &mut Loaded) -> Result<SegmentationInputs, CliError> {
    let ct = l.scalar("ct", required(&cfg.inputs.ct, "ct")?)?;
    let kidney = match &cfg.inputs.kidney {
        Some(p) => Some(l.labels("kidney", p)?),
        None => None,
    };
    let seeds = match &cfg.inputs.seeds {
        Some(p) => Some(l.labels("seeds", p)?),
        None => None,
    };
    for (v, what) in [(&kidney, "kidney"), (&seeds, "seeds")] {
        if let Some(v) = v {
            same_grid(ct.geometry(), v.geometry(), what)?;
        }
    }
    Ok(SegmentationInputs { ct, kidney, seeds })
}

fn check_cut_params(cfg: &Config) -> Result<(), CliError> {
    cfg.vesselness.params().validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.tensorcut.params(cfg.seed).map_err(CliError::Usage)?;
    Ok(())
}

fn cmd_tensorcut(cfg: Config) -> Result<Outcome, CliError> {
    check_cut_params(&cfg)?;
    let mut l = Loaded::default();
    let inp = load_segmentation_inputs(&cfg, &mut l)?;
    let vs = pipeline::vesselness(&inp.ct, inp.kidney.as_ref(), &cfg)?;
    let cut = pipeline::tensor_cut(&inp.ct, &vs, inp.seeds.as_ref(), &cfg)?;
    let mut out = OutputSet::new();
    out.image("seeds", &labels_image(&cut.seeds));
    out.image("vessels", &labels_image(&cut.vessels));
    Ok(Outcome { command: "tensorcut", config: cfg, inputs: l.records, outputs: out, stdout: None })
}

fn cmd_tree(cfg: Config) -> Result<Outcome, CliError> {
    let mut l = Loaded::default();
    let vessels = l.labels("vessels", required(&cfg.inputs.vessels, "vessels")?)?;
    let kidney = match &cfg.inputs.kidney {
        Some(p) => Some(l.labels("kidney", p)?),
        None => None,
    };
    if let Some(k) = &kidney {
        same_grid(vessels.geometry(), k.geometry(), "kidney")?;
    }
    let t = pipeline::tree(&vessels, kidney.as_ref(), &cfg)?;
    let mut out = OutputSet::new();
    out.image("skeleton", &labels_image(&t.skeleton));
    out.text("tree.json", TreeJson::from(&t.tree).to_string_pretty());
    Ok(Outcome { command: "tree", config: cfg, inputs: l.records, outputs: out, stdout: None })
}

fn add_territories(out: &mut OutputSet, v: &pipeline::VoronoiStage) {
    out.image("partition", &labels_image(&v.partition.labels));
    out.image("territories", &labels_image(&v.partition.group_labels()));
    out.text("stats.json", v.stats.to_json());
    out.text("stats.csv", v.stats.to_csv());
}

fn check_margin(cfg: &Config) -> Result<(), CliError> {
    let m = cfg.voronoi.margin_mm;
    if !(m >= 0.0 && m.is_finite()) {
        return Err(CliError::Usage(format!("margin must be finite and >= 0, got {m}")));
    }
    Ok(())
}

fn cmd_voronoi(cfg: Config) -> Result<Outcome, CliError> {
    check_margin(&cfg)?;
    let kidney_path = required(&cfg.inputs.kidney, "kidney")?;
    let tree_path = required(&cfg.inputs.tree, "tree")?;
    let mut l = Loaded::default();
    let kidney = l.labels("kidney", kidney_path)?;
    let tree = l.tree(tree_path)?;
    let tumor = match &cfg.inputs.tumor {
        Some(p) => Some(l.labels("tumor", p)?),
        None => None,
    };
    same_grid(kidney.geometry(), tree.geometry(), "tree")?;
    if let Some(t) = &tumor {
        same_grid(kidney.geometry(), t.geometry(), "tumor")?;
    }
    let v = pipeline::territories(&kidney, &tree, tumor.as_ref(), &cfg)?;
    let mut out = OutputSet::new();
    add_territories(&mut out, &v);
    Ok(Outcome { command: "voronoi", config: cfg, inputs: l.records, outputs: out, stdout: None })
}

fn cmd_metrics(cfg: Config, top2_hd: bool) -> Result<Outcome, CliError> {
    let gt_path = required(&cfg.inputs.gt, "gt")?;
    let seg_path = required(&cfg.inputs.seg, "seg")?;
    let mut l = Loaded::default();
    let gt = l.labels("gt", gt_path)?;
    let seg = l.labels("seg", seg_path)?;
    same_grid(gt.geometry(), seg.geometry(), "seg")?;
    let m = pipeline::evaluate(&gt, &seg, top2_hd)?;
    let json = serde_json::to_string(&m).unwrap_or_else(|_| unreachable!());
    let mut out = OutputSet::new();
    out.text("metrics.json", format!("{json}\n"));
    Ok(Outcome { command: "metrics", config: cfg, inputs: l.records, outputs: out, stdout: Some(json) })
}

fn cmd_pipeline(cfg: Config) -> Result<Outcome, CliError> {
    check_cut_params(&cfg)?;
    check_margin(&cfg)?;
    required(&cfg.inputs.kidney, "kidney")?;
    let mut l = Loaded::default();
    let inp = load_segmentation_inputs(&cfg, &mut l)?;
    let tumor = match &cfg.inputs.tumor {
        Some(p) => Some(l.labels("tumor", p)?),
        None => None,
    };
    if let Some(t) = &tumor {
        same_grid(inp.ct.geometry(), t.geometry(), "tumor")?;
    }
    let kidney = inp.kidney.as_ref().unwrap_or_else(|| unreachable!());
    let vs = pipeline::vesselness(&inp.ct, Some(kidney), &cfg)?;
    let cut = pipeline::tensor_cut(&inp.ct, &vs, inp.seeds.as_ref(), &cfg)?;
    let t = pipeline::tree(&cut.vessels, Some(kidney), &cfg)?;
    let v = pipeline::territories(kidney, &t.tree, tumor.as_ref(), &cfg)?;
    let mut out = OutputSet::new();
    out.image("vesselness", &float_image(&vs.filter.vesselness));
    out.image("seeds", &labels_image(&cut.seeds));
    out.image("vessels", &labels_image(&cut.vessels));
    out.image("skeleton", &labels_image(&t.skeleton));
    out.text("tree.json", TreeJson::from(&t.tree).to_string_pretty());
    add_territories(&mut out, &v);
    Ok(Outcome { command: "pipeline", config: cfg, inputs: l.records, outputs: out, stdout: None })
}

/// Resolve the configuration and run a command without writing anything.
pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Phantom { common, phantom } => {
            let mut cfg = common.config()?;
            phantom.apply(&mut cfg);
            cmd_phantom(cfg)
        }
        Command::Vesselness { common, inputs, vesselness } => {
            let mut cfg = common.config()?;
            inputs.apply(&mut cfg);
            vesselness.apply(&mut cfg);
            cmd_vesselness(cfg)
        }
        Command::Tensorcut { common, inputs, vesselness, cut } => {
            let mut cfg = common.config()?;
            inputs.apply(&mut cfg);
            vesselness.apply(&mut cfg);
            cut.apply(&mut cfg);
            cmd_tensorcut(cfg)
        }
        Command::Tree { common, inputs, tree } => {
            let mut cfg = common.config()?;
            inputs.apply(&mut cfg);
            tree.apply(&mut cfg);
            cmd_tree(cfg)
        }
        Command::Voronoi { common, inputs, voronoi } => {
            let mut cfg = common.config()?;
            inputs.apply(&mut cfg);
            voronoi.apply(&mut cfg);
            cmd_voronoi(cfg)
        }
        Command::Metrics { common, inputs, top2_hd } => {
            let mut cfg = common.config()?;
            inputs.apply(&mut cfg);
            cmd_metrics(cfg, *top2_hd)
        }
        Command::Pipeline { common, inputs, vesselness, cut, tree, voronoi } => {
            let mut cfg = common.config()?;
            inputs.apply(&mut cfg);
            vesselness.apply(&mut cfg);
            cut.apply(&mut cfg);
            tree.apply(&mut cfg);
            voronoi.apply(&mut cfg);
            cmd_pipeline(cfg)
        }
    }
}

fn run_command(cli: &Cli) -> Result<Option<String>, CliError> {
    let job = || -> Result<Option<String>, CliError> {
        let outcome = execute(&cli.command)?;
        match &outcome.config.out_dir {
            Some(dir) => {
                outcome
                    .outputs
                    .write(dir, &outcome.manifest())
                    .map_err(|e| CliError::Data(format!("cannot write to {}: {e}", dir.display())))?;
            }
            None if outcome.command != "metrics" => {
                return Err(CliError::Usage("missing --out-dir".into()));
            }
            None => {}
        }
        Ok(outcome.stdout)
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Data(format!("cannot start thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_command(&cli) {
        Ok(stdout) => {
            if let Some(s) = stdout {
                println!("{s}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
