//! `nested-brdf` command line: rendering, dataset generation,
//! preprocessing, training, prediction and evaluation.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or input files
//! (bad parameter values, malformed params JSON, unknown views), 1 for
//! failures while doing the work. Diagnostics go to stderr as one JSON
//! object per line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brdf::{BrdfError, BrdfParams, PARAM_NAMES};
use crate::dataset::{self, Dataset, GenerateOptions, InputPair, Split, ViewSelection};
use crate::estimator::{self, Estimator, EvalReport, TrainConfig, Variant};
use crate::imageproc::{self, Point};
use crate::io::{self, FormatError};
use crate::render::{self, RadianceImage, RenderError, SceneConfig, ViewSpec};

/// Version written to and required in params files.
pub const PARAMS_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected input; exit code 2.
    #[error("{message}")]
    Invalid { field: Option<String>, message: String },
    #[error(transparent)]
    Estimator(#[from] estimator::EstimatorError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Image(#[from] imageproc::ImageError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError::Invalid { field: None, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid { .. } => 2,
            _ => 1,
        }
    }

    fn diagnostic(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Invalid { .. } => "invalid_input",
            CliError::Estimator(_) => "estimator",
            CliError::Dataset(_) => "dataset",
            CliError::Render(_) => "render",
            CliError::Format(_) => "format",
            CliError::Image(_) => "image",
            CliError::Io { .. } => "io",
        };
        let mut d = serde_json::json!({ "error": kind, "message": self.to_string(), "exit_code": self.exit_code() });
        if let CliError::Invalid { field: Some(f), .. } = self {
            d["field"] = f.clone().into();
        }
        d
    }
}

impl From<BrdfError> for CliError {
    fn from(e: BrdfError) -> Self {
        let field = match &e {
            BrdfError::OutOfRange { field, .. } => Some(field.to_string()),
            _ => None,
        };
        CliError::Invalid { field, message: e.to_string() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// On-disk material description: a version key plus the ten parameters
/// under their [`PARAM_NAMES`] names. `prediction` is filled by `predict`
/// and ignored when reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub version: u32,
    pub roughness: f64,
    pub anisotropy: f64,
    pub anisotropy_angle: f64,
    pub nd: f64,
    pub rgb0_r: f64,
    pub rgb0_g: f64,
    pub rgb0_b: f64,
    pub rgb90_r: f64,
    pub rgb90_g: f64,
    pub rgb90_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<serde_json::Value>,
}

impl ParamsFile {
    pub fn from_params(p: &BrdfParams) -> Self {
        let v = p.to_array();
        Self {
            version: PARAMS_FILE_VERSION,
            roughness: v[0],
            anisotropy: v[1],
            anisotropy_angle: v[2],
            nd: v[3],
            rgb0_r: v[4],
            rgb0_g: v[5],
            rgb0_b: v[6],
            rgb90_r: v[7],
            rgb90_g: v[8],
            rgb90_b: v[9],
            prediction: None,
        }
    }

    pub fn to_params(&self) -> Result<BrdfParams, CliError> {
        if self.version != PARAMS_FILE_VERSION {
            return Err(CliError::Invalid {
                field: Some("version".into()),
                message: format!("unsupported params file version {} (expected {PARAMS_FILE_VERSION})", self.version),
            });
        }
        Ok(BrdfParams::from_array([
            self.roughness,
            self.anisotropy,
            self.anisotropy_angle,
            self.nd,
            self.rgb0_r,
            self.rgb0_g,
            self.rgb0_b,
            self.rgb90_r,
            self.rgb90_g,
            self.rgb90_b,
        ])?)
    }

    pub fn read(path: &Path) -> Result<BrdfParams, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let file: ParamsFile = serde_json::from_str(&text).map_err(|e| {
            let msg = e.to_string();
            let field = ["version"]
                .into_iter()
                .chain(PARAM_NAMES)
                .find(|n| msg.contains(&format!("`{n}`")))
                .map(str::to_owned);
            CliError::Invalid { field, message: format!("{}: {msg}", path.display()) }
        })?;
        file.to_params().map_err(|e| match e {
            CliError::Invalid { field, message } => CliError::Invalid { field, message: format!("{}: {message}", path.display()) },
            other => other,
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "nested-brdf", version, about = "Anisotropic BRDF rendering and two-view material parameter estimation")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a material from a params JSON file.
    Render(RenderArgs),
    /// Generate a labeled synthetic dataset.
    GenDataset(GenDatasetArgs),
    /// Rectify (and whiten) one image of a sample.
    Preprocess(PreprocessArgs),
    /// Train the feature CNNs and nested estimators.
    Train(TrainArgs),
    /// Estimate material parameters from a two-view image pair.
    Predict(PredictArgs),
    /// Render predictions of held-out samples under all 14 views and report MSE.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// JSON scene configuration; defaults are used when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Output image edge length in pixels (overrides the scene file).
    #[arg(long)]
    pub size: Option<usize>,
}

impl SceneArgs {
    fn load(&self) -> Result<SceneConfig, CliError> {
        let mut scene = match &self.scene {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(io_err(p))?;
                serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))?
            }
            None => SceneConfig::default(),
        };
        if let Some(s) = self.size {
            scene.image_size = s;
        }
        scene.validate().map_err(|e| CliError::invalid(e.to_string()))?;
        Ok(scene)
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Params JSON file (version + ten named parameters).
    #[arg(long)]
    pub params: PathBuf,
    /// View name such as `cam30_light45`, `cam45_light45_rot90`, any
    /// `cam<E>_light<L>` elevation pair, or `all` for the 14 protocol views.
    #[arg(long, default_value = "all")]
    pub view: String,
    /// Directory for `<params stem>_<view>.pfm` and `.png`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ViewsArg {
    Training,
    All,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    /// Dataset root to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of materials.
    #[arg(long)]
    pub count: usize,
    /// Master seed; every random choice derives from it.
    #[arg(long)]
    pub seed: u64,
    /// Render only the two input views or all 14.
    #[arg(long, value_enum, default_value = "all")]
    pub views: ViewsArg,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// PFM render or PNG/JPEG photograph.
    #[arg(long)]
    pub image: PathBuf,
    /// Sample corners in pixels, `x,y` four times: far-left, far-right,
    /// near-right, near-left.
    #[arg(long, num_args = 4, value_name = "X,Y", allow_hyphen_values = true)]
    pub corners: Option<Vec<String>>,
    /// Protocol view of a synthetic render; its corners are projected from
    /// the scene instead of being supplied.
    #[arg(long, conflicts_with = "corners")]
    pub view: Option<String>,
    /// Directory for `<stem>_homog.pfm/.png` and `<stem>_white.pfm`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root written by `gen-dataset`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for weights and the training log.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs of each feature CNN (overrides the config file).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs of each nested block (overrides the config file).
    #[arg(long)]
    pub nested_epochs: Option<usize>,
    /// Minibatch size (overrides the config file).
    #[arg(long)]
    pub batch: Option<usize>,
    /// Comma-separated variants to train.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub weights: PathBuf,
    /// cnn0, cnnw, custom_weights, nested_rgb, nested_lab, nested_noise or random.
    #[arg(long, default_value = "nested_lab")]
    pub variant: String,
    /// The camera-30° and camera-90° images, in that order.
    #[arg(long, num_args = 2, required = true)]
    pub images: Vec<PathBuf>,
    /// Corners of the sample in the first image (photographs).
    #[arg(long, num_args = 4, value_name = "X,Y", allow_hyphen_values = true, requires = "corners1")]
    pub corners0: Option<Vec<String>>,
    /// Corners of the sample in the second image (photographs).
    #[arg(long, num_args = 4, value_name = "X,Y", allow_hyphen_values = true, requires = "corners0")]
    pub corners1: Option<Vec<String>>,
    /// Params JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the random baseline variant.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scene of synthetic renders (used when no corners are given).
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset root with all 14 views rendered.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    pub weights: PathBuf,
    /// JSON report to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated variants; every available one when omitted.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Evaluate only the first N samples of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Render(a) => cmd_render(a),
        Command::GenDataset(a) => cmd_gen_dataset(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn parse_view(name: &str) -> Result<ViewSpec, CliError> {
    name.parse().map_err(|e: RenderError| CliError::Invalid { field: Some("view".into()), message: e.to_string() })
}

fn parse_variant(name: &str) -> Result<Variant, CliError> {
    name.trim().parse().map_err(|e: estimator::EstimatorError| CliError::Invalid { field: Some("variant".into()), message: e.to_string() })
}

/// Parses four `x,y` pixel positions.
pub fn parse_corners(items: &[String]) -> Result<[Point; 4], CliError> {
    let bad = |s: &str| CliError::Invalid { field: Some("corners".into()), message: format!("corner `{s}` is not `x,y`") };
    if items.len() != 4 {
        return Err(CliError::Invalid { field: Some("corners".into()), message: format!("expected 4 corners, got {}", items.len()) });
    }
    let mut out = [[0.0; 2]; 4];
    for (dst, s) in out.iter_mut().zip(items) {
        let (x, y) = s.split_once(',').ok_or_else(|| bad(s))?;
        *dst = [x.trim().parse().map_err(|_| bad(s))?, y.trim().parse().map_err(|_| bad(s))?];
        if !dst.iter().all(|v: &f64| v.is_finite()) {
            return Err(bad(s));
        }
    }
    Ok(out)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

/// Writes `<stem>_<view>.pfm` and `.png` for the requested views.
pub fn cmd_render(a: &RenderArgs) -> Result<(), CliError> {
    let params = ParamsFile::read(&a.params)?;
    let scene = a.scene.load()?;
    let views = if a.view == "all" { render::canonical_views() } else { vec![parse_view(&a.view)?] };
    create_dir(&a.out)?;
    let stem = file_stem(&a.params);
    for view in &views {
        let img = render::render_view(&params, view, &scene)?;
        // Names like `cam22.5_light45` contain dots, so no `with_extension`.
        let base = format!("{stem}_{}", view.name());
        io::write_pfm(&a.out.join(format!("{base}.pfm")), &img)?;
        io::write_png(&a.out.join(format!("{base}.png")), &img, scene.exposure)?;
    }
    log::info!("rendered {} view(s) into {}", views.len(), a.out.display());
    Ok(())
}

pub fn cmd_gen_dataset(a: &GenDatasetArgs) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Invalid { field: Some("count".into()), message: "count must be at least 1".into() });
    }
    let views = match a.views {
        ViewsArg::Training => ViewSelection::Training,
        ViewsArg::All => ViewSelection::All,
    };
    let opts = GenerateOptions { count: a.count, master_seed: a.seed, views, scene: a.scene.load()? };
    create_dir(&a.out)?;
    let entries = dataset::generate_dataset(&opts, &a.out)?;
    let failed = entries.iter().filter(|e| e.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} samples failed; see manifest.jsonl", entries.len());
    }
    Ok(())
}

/// Loads an image into the exposure-normalized linear domain: PFM renders
/// are scaled by the scene exposure and clamped, photographs are only
/// linearized.
fn load_normalized(path: &Path, scene: &SceneConfig) -> Result<RadianceImage, CliError> {
    let img = io::read_image(path)?;
    let is_pfm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    Ok(if is_pfm { img.normalized(scene.exposure) } else { img })
}

fn rectify_input(path: &Path, corners: Option<&[Point; 4]>, view: &ViewSpec, scene: &SceneConfig) -> Result<RadianceImage, CliError> {
    let img = load_normalized(path, scene)?;
    let corners = match corners {
        Some(c) => *c,
        None => {
            if (img.width, img.height) != (scene.image_size, scene.image_size) {
                return Err(CliError::invalid(format!(
                    "{} is {}x{} but the scene renders {}x{}; supply corners for photographs",
                    path.display(),
                    img.width,
                    img.height,
                    scene.image_size,
                    scene.image_size
                )));
            }
            render::corner_projection(view, scene)
        }
    };
    Ok(imageproc::rectify(&img, &corners, scene.image_size)?)
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<(), CliError> {
    let scene = a.scene.load()?;
    let corners = a.corners.as_deref().map(parse_corners).transpose()?;
    let view = match (&a.view, &corners) {
        (Some(v), _) => parse_view(v)?,
        (None, Some(_)) => render::training_views()[0],
        (None, None) => return Err(CliError::invalid("either --corners or --view is required")),
    };
    let h = rectify_input(&a.image, corners.as_ref(), &view, &scene)?;
    let w = imageproc::whiten(&h)?;
    create_dir(&a.out)?;
    let stem = file_stem(&a.image);
    io::write_pfm(&a.out.join(format!("{stem}_homog.pfm")), &h)?;
    io::write_png(&a.out.join(format!("{stem}_homog.png")), &h, 1.0)?;
    io::write_pfm(&a.out.join(format!("{stem}_white.pfm")), &w)?;
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::load(p).map_err(|e| CliError::invalid(e.to_string()))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(e) = a.nested_epochs {
        config.nested_epochs = e;
    }
    if let Some(b) = a.batch {
        config.batch = b;
    }
    if let Some(vs) = &a.variants {
        config.variants = vs.iter().map(|v| parse_variant(v)).collect::<Result<_, _>>()?;
    }
    config.validate().map_err(|e| CliError::invalid(e.to_string()))?;
    let dataset = Dataset::open(&a.dataset)?;
    let (_, summary) = estimator::train_all(&dataset, &config, &a.out, None)?;
    for r in &summary.reports {
        log::info!("{}: loss {:.4} -> {:.4} (best epoch {})", r.name, r.initial.loss, r.final_train.loss, r.best_epoch);
    }
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<(), CliError> {
    let variant = parse_variant(&a.variant)?;
    let mut est = Estimator::load(&a.weights)?;
    if !est.available().contains(&variant) {
        return Err(CliError::Invalid { field: Some("variant".into()), message: format!("{} has no weights for {variant}", a.weights.display()) });
    }
    let size = est.cnn0.as_ref().or(est.cnnw.as_ref()).or(est.custom.as_ref()).map(|n| n.image_size());
    let mut scene = match &a.scene {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))?
        }
        None => SceneConfig::default(),
    };
    if let Some(s) = size {
        scene.image_size = s;
    }
    let corners = match (&a.corners0, &a.corners1) {
        (Some(c0), Some(c1)) => Some([parse_corners(c0)?, parse_corners(c1)?]),
        _ => None,
    };
    let views = render::training_views();
    let homographied = [0, 1].map(|i| rectify_input(&a.images[i], corners.as_ref().map(|c| &c[i]), &views[i], &scene));
    let [h0, h1] = homographied;
    let pair = InputPair::from_homographied([h0?, h1?])?;
    let prediction = est.predict_batch(variant, std::slice::from_ref(&pair), a.seed)?.remove(0);
    let mut file = ParamsFile::from_params(&prediction.params);
    file.prediction = Some(prediction_meta(&prediction, corners.is_some(), &a.images));
    write_json(&a.out, &file)
}

fn prediction_meta(p: &estimator::Prediction, photo: bool, images: &[PathBuf]) -> serde_json::Value {
    let bins: BTreeMap<&str, usize> = PARAM_NAMES.iter().copied().zip(p.bins.0).collect();
    let mut meta = serde_json::json!({
        "variant": p.variant.name(),
        "color_encoding": p.encoding,
        "bins": bins,
        "gamut_clamped": p.gamut_clamped,
        "inputs": images.iter().map(|i| i.display().to_string()).collect::<Vec<_>>(),
        "input_kind": if photo { "photograph" } else { "synthetic_render" },
    });
    if photo {
        meta["note"] = "photographs were sRGB-linearized only; exposure is not calibrated, so absolute reflectance may be off".into();
    }
    meta
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CliError::Invalid { field: Some("split".into()), message: format!("unknown split `{other}` (train, val, test)") }),
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let split = parse_split(&a.split)?;
    let mut est = Estimator::load(&a.weights)?;
    let available = est.available();
    let variants = match &a.variants {
        Some(vs) => vs.iter().map(|v| parse_variant(v)).collect::<Result<Vec<_>, _>>()?,
        None => available.clone(),
    };
    if let Some(v) = variants.iter().find(|v| !available.contains(v)) {
        return Err(CliError::Invalid { field: Some("variants".into()), message: format!("{} has no weights for {v}", a.weights.display()) });
    }
    let dataset = Dataset::open(&a.dataset)?;
    let report: EvalReport = estimator::evaluate_dataset(&mut est, &dataset, split, &variants, a.limit, a.seed)?;
    for s in &report.summary {
        log::info!("{:>14}: median {:.5}  q1 {:.5}  q3 {:.5}  ({} samples)", s.variant.name(), s.median, s.q1, s.q3, s.samples);
    }
    write_json(&a.out, &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_file_round_trip() {
        let p = dataset::sample_params(3);
        let f = ParamsFile::from_params(&p);
        let text = serde_json::to_string(&f).unwrap();
        let back: ParamsFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_params().unwrap(), p);
    }

    #[test]
    fn corners_parse() {
        let c = parse_corners(&["0,0".into(), "10, 0".into(), "10,10".into(), "0,10".into()]).unwrap();
        assert_eq!(c[1], [10.0, 0.0]);
        assert!(parse_corners(&["0;0".into(), "1,1".into(), "2,2".into(), "3,3".into()]).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
