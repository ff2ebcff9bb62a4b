//! Material sampling, regression-by-classification labels and on-disk
//! synthetic datasets.
//!
//! Every parameter is quantized into [`NUM_BINS`] uniform bins. The two
//! reflectance colors are binned per channel either in CIELAB
//! (`L ∈ [0, 100]`, `a, b ∈ [-128, 127]`) or directly in linear RGB.
//! Training targets are the one-hot bins blurred by a truncated discrete
//! Gaussian and renormalized.
//!
//! Directory layout written by [`generate_dataset`]:
//!
//! ```text
//! <out>/images/<id>_<view>.pfm                  linear radiance renders
//! <out>/preprocessed/<id>_<view>_homog.pfm      rectified, exposure-normalized
//! <out>/preprocessed/<id>_<view>_white.pfm      the above, whitened
//! <out>/labels/<id>.json                        bins in both color encodings
//! <out>/manifest.jsonl                          one ManifestEntry per line
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brdf::{BrdfParams, ParamRange};
use crate::imageproc::{self, lab_to_linear_rgb, linear_rgb_to_lab};
use crate::io::{self, FormatError};
use crate::render::{self, RadianceImage, RenderError, SceneConfig, ViewSpec};

pub const NUM_BINS: usize = 100;
pub const NUM_PARAMS: usize = 10;
pub const SMOOTHING_RADIUS: usize = 9;
pub const SMOOTHING_SIGMA: f64 = 3.0;
/// Upper bound of the noise standard deviation, in 8-bit units.
pub const MAX_NOISE_SIGMA_8BIT: f64 = 4.0;

pub const LAB_L_RANGE: ParamRange = ParamRange::closed(0.0, 100.0);
pub const LAB_AB_RANGE: ParamRange = ParamRange::closed(-128.0, 127.0);

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] imageproc::ImageError),
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid dataset request: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

/// How the six reflectance-color parameters are represented in label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColorEncoding {
    #[default]
    Lab,
    Rgb,
}

/// Label-space range of parameter `index`.
pub fn label_range(index: usize, encoding: ColorEncoding) -> ParamRange {
    match (index, encoding) {
        (0..=3, _) | (4..=9, ColorEncoding::Rgb) => BrdfParams::range(index),
        (4 | 7, ColorEncoding::Lab) => LAB_L_RANGE,
        (5 | 6 | 8 | 9, ColorEncoding::Lab) => LAB_AB_RANGE,
        _ => panic!("parameter index {index} out of 0..10"),
    }
}

/// Parameter values in label space.
pub fn encode_params(params: &BrdfParams, encoding: ColorEncoding) -> [f64; NUM_PARAMS] {
    let mut v = params.to_array();
    if encoding == ColorEncoding::Lab {
        let lab0 = linear_rgb_to_lab(params.rgb0());
        let lab90 = linear_rgb_to_lab(params.rgb90());
        v[4..7].copy_from_slice(&lab0);
        v[7..10].copy_from_slice(&lab90);
    }
    v
}

/// Label-space values back to material parameters; LAB colors are clamped
/// into the RGB gamut.
pub fn decode_params(v: &[f64; NUM_PARAMS], encoding: ColorEncoding) -> BrdfParams {
    let mut out = *v;
    if encoding == ColorEncoding::Lab {
        out[4..7].copy_from_slice(&lab_to_linear_rgb([v[4], v[5], v[6]]).0);
        out[7..10].copy_from_slice(&lab_to_linear_rgb([v[7], v[8], v[9]]).0);
    }
    for (i, x) in out.iter_mut().enumerate() {
        let r = BrdfParams::range(i);
        *x = if r.open_hi { x.clamp(r.lo, r.hi - 1e-9) } else { x.clamp(r.lo, r.hi) };
    }
    BrdfParams::from_array(out).expect("clamped values lie inside the parameter ranges")
}

pub fn bin_of(v: f64, range: ParamRange) -> usize {
    let t = ((v - range.lo) / range.width()).clamp(0.0, 1.0);
    ((t * NUM_BINS as f64).floor() as usize).min(NUM_BINS - 1)
}

pub fn bin_center(bin: usize, range: ParamRange) -> f64 {
    range.lo + (bin as f64 + 0.5) * range.width() / NUM_BINS as f64
}

/// Bin index of each of the ten parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamBins(pub [usize; NUM_PARAMS]);

impl ParamBins {
    pub fn new(bins: [usize; NUM_PARAMS]) -> Option<Self> {
        bins.iter().all(|&b| b < NUM_BINS).then_some(Self(bins))
    }
}

pub fn discretize_with(params: &BrdfParams, encoding: ColorEncoding) -> ParamBins {
    let v = encode_params(params, encoding);
    ParamBins(std::array::from_fn(|i| bin_of(v[i], label_range(i, encoding))))
}

/// LAB-encoded bins.
pub fn discretize(params: &BrdfParams) -> ParamBins {
    discretize_with(params, ColorEncoding::Lab)
}

pub fn undiscretize_with(bins: &ParamBins, encoding: ColorEncoding) -> BrdfParams {
    let v = std::array::from_fn(|i| bin_center(bins.0[i], label_range(i, encoding)));
    decode_params(&v, encoding)
}

pub fn undiscretize(bins: &ParamBins) -> BrdfParams {
    undiscretize_with(bins, ColorEncoding::Lab)
}

/// A 100-way target distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedLabel(pub Vec<f64>);

impl SmoothedLabel {
    pub fn one_hot(bin: usize) -> Self {
        let mut v = vec![0.0; NUM_BINS];
        v[bin] = 1.0;
        Self(v)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// One-hot `bin` convolved with a 19-tap Gaussian (σ = 3 bins), truncated at
/// the ends of the bin range and renormalized to sum to one.
pub fn smooth_label(bin: usize) -> SmoothedLabel {
    assert!(bin < NUM_BINS, "bin {bin} out of range");
    let mut v = vec![0.0; NUM_BINS];
    let r = SMOOTHING_RADIUS as isize;
    for d in -r..=r {
        let j = bin as isize + d;
        if (0..NUM_BINS as isize).contains(&j) {
            v[j as usize] = (-((d * d) as f64) / (2.0 * SMOOTHING_SIGMA * SMOOTHING_SIGMA)).exp();
        }
    }
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    SmoothedLabel(v)
}

pub fn smooth_labels(bins: &ParamBins) -> Vec<SmoothedLabel> {
    bins.0.iter().map(|&b| smooth_label(b)).collect()
}

/// SplitMix64 step; used to derive independent per-sample seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw over every parameter's declared range.
pub fn sample_params(seed: u64) -> BrdfParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roughness = rng.random_range(0.0..=100.0);
    let anisotropy = rng.random_range(0.0..=1.0);
    let angle = rng.random_range(0.0..360.0);
    let nd = rng.random_range(1.0..=10.0);
    let rgb0 = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
    let rgb90 = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
    BrdfParams::new(roughness, anisotropy, angle, nd, rgb0, rgb90).expect("sampled inside declared ranges")
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma` (normalized
/// units) and clamps to `[0, 1]`.
pub fn augment_noise_with_sigma(image: &RadianceImage, sigma: f64, rng: &mut impl Rng) -> RadianceImage {
    if sigma <= 0.0 {
        return image.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let data = image.data.iter().map(|&v| (v as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32).collect();
    RadianceImage { width: image.width, height: image.height, data }
}

/// Draws `σ ~ U[0, 4] / 255` and applies [`augment_noise_with_sigma`].
/// Returns the image and the drawn σ.
pub fn augment_noise_reporting(image: &RadianceImage, seed: u64) -> (RadianceImage, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = rng.random_range(0.0..=MAX_NOISE_SIGMA_8BIT) / 255.0;
    (augment_noise_with_sigma(image, sigma, &mut rng), sigma)
}

pub fn augment_noise(image: &RadianceImage, seed: u64) -> RadianceImage {
    augment_noise_reporting(image, seed).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// `(train, val, test)` sizes: `floor(2n/3)`, `floor(n/6)` and the remainder.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = 2 * n / 3;
    let val = n / 6;
    (train, val, n - train - val)
}

/// Seeded shuffle of sample indices followed by the fixed split sizes.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = split_counts(n);
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ViewSelection {
    /// Only the two network input views.
    #[default]
    Training,
    /// All 14 protocol views; the two input views are among them.
    All,
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub count: usize,
    pub master_seed: u64,
    pub views: ViewSelection,
    pub scene: SceneConfig,
}

/// Labels file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub params: BrdfParams,
    pub bins_lab: ParamBins,
    pub bins_rgb: ParamBins,
}

impl LabelRecord {
    pub fn new(id: String, params: BrdfParams) -> Self {
        Self { id, params, bins_lab: discretize(&params), bins_rgb: discretize_with(&params, ColorEncoding::Rgb) }
    }

    pub fn bins(&self, encoding: ColorEncoding) -> &ParamBins {
        match encoding {
            ColorEncoding::Lab => &self.bins_lab,
            ColorEncoding::Rgb => &self.bins_rgb,
        }
    }
}

/// One line of `manifest.jsonl`. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub params: BrdfParams,
    pub bins: ParamBins,
    pub split: Split,
    pub labels: String,
    /// Raw renders keyed by view name.
    pub images: BTreeMap<String, String>,
    /// Rectified input views, `[cam30, cam90]`.
    pub homographied: Vec<String>,
    /// Whitened input views, `[cam30, cam90]`.
    pub whitened: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Scene settings plus anything else a consumer needs to reproduce the set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub count: usize,
    pub master_seed: u64,
    pub views: ViewSelection,
    pub scene: SceneConfig,
}

/// Rectifies a rendered view onto the full frame after exposure
/// normalization.
pub fn homographied_view(raw: &RadianceImage, view: &ViewSpec, scene: &SceneConfig) -> Result<RadianceImage, imageproc::ImageError> {
    let corners = render::corner_projection(view, scene);
    imageproc::rectify(&raw.normalized(scene.exposure), &corners, scene.image_size)
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text).map_err(io_err(path))
}

fn generate_one(
    index: usize,
    seed: u64,
    split: Split,
    options: &GenerateOptions,
    out: &Path,
) -> Result<ManifestEntry, DatasetError> {
    let id = format!("{index:06}");
    let params = sample_params(seed);
    let scene = &options.scene;
    let views = match options.views {
        ViewSelection::Training => render::training_views().to_vec(),
        ViewSelection::All => render::canonical_views(),
    };
    let mut images = BTreeMap::new();
    let mut raw_inputs = Vec::new();
    for view in &views {
        let img = render::render_view(&params, view, scene)?;
        let rel = format!("images/{id}_{}.pfm", view.name());
        io::write_pfm(&out.join(&rel), &img)?;
        images.insert(view.name(), rel);
        if render::training_views().contains(view) {
            raw_inputs.push((*view, img));
        }
    }
    let mut homographied = Vec::new();
    let mut whitened = Vec::new();
    for (view, raw) in &raw_inputs {
        let h = homographied_view(raw, view, scene)?;
        let w = imageproc::whiten(&h)?;
        let hp = format!("preprocessed/{id}_{}_homog.pfm", view.name());
        let wp = format!("preprocessed/{id}_{}_white.pfm", view.name());
        io::write_pfm(&out.join(&hp), &h)?;
        io::write_pfm(&out.join(&wp), &w)?;
        homographied.push(hp);
        whitened.push(wp);
    }
    let labels = format!("labels/{id}.json");
    let record = LabelRecord::new(id.clone(), params);
    write_json_file(&out.join(&labels), &record)?;
    Ok(ManifestEntry { id, seed, params, bins: record.bins_lab, split, labels, images, homographied, whitened, error: None })
}

/// Renders, preprocesses, labels and indexes `options.count` random
/// materials under `out`. Output is byte-identical for a given master seed
/// regardless of thread count.
pub fn generate_dataset(options: &GenerateOptions, out: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    if options.count == 0 {
        return Err(DatasetError::Invalid("count must be at least 1".into()));
    }
    options.scene.validate()?;
    for sub in ["images", "preprocessed", "labels"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let splits = assign_splits(options.count, derive_seed(options.master_seed, u64::MAX));
    let entries: Vec<ManifestEntry> = (0..options.count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(options.master_seed, i as u64);
            generate_one(i, seed, splits[i], options, out).unwrap_or_else(|e| {
                log::error!("sample {i}: {e}");
                let params = sample_params(seed);
                ManifestEntry {
                    id: format!("{i:06}"),
                    seed,
                    params,
                    bins: discretize(&params),
                    split: splits[i],
                    labels: String::new(),
                    images: BTreeMap::new(),
                    homographied: Vec::new(),
                    whitened: Vec::new(),
                    error: Some(e.to_string()),
                }
            })
        })
        .collect();

    let info = DatasetInfo { count: options.count, master_seed: options.master_seed, views: options.views, scene: options.scene.clone() };
    write_json_file(&out.join("dataset.json"), &info)?;
    let manifest = out.join("manifest.jsonl");
    let mut f = fs::File::create(&manifest).map_err(io_err(&manifest))?;
    for e in &entries {
        writeln!(f, "{}", serde_json::to_string(e).expect("serializable")).map_err(io_err(&manifest))?;
    }
    Ok(entries)
}

/// A generated dataset opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub info: DatasetInfo,
    pub entries: Vec<ManifestEntry>,
}

/// The two rectified input views of one sample plus their whitened copies.
#[derive(Debug, Clone)]
pub struct InputPair {
    pub homographied: [RadianceImage; 2],
    pub whitened: [RadianceImage; 2],
}

impl InputPair {
    pub fn from_homographied(homographied: [RadianceImage; 2]) -> Result<Self, imageproc::ImageError> {
        let whitened = [imageproc::whiten(&homographied[0])?, imageproc::whiten(&homographied[1])?];
        Ok(Self { homographied, whitened })
    }
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self, DatasetError> {
        let info_path = root.join("dataset.json");
        let text = fs::read_to_string(&info_path).map_err(io_err(&info_path))?;
        let info: DatasetInfo = serde_json::from_str(&text)
            .map_err(|source| DatasetError::Json { path: info_path.display().to_string(), line: 0, source })?;
        let manifest = root.join("manifest.jsonl");
        let text = fs::read_to_string(&manifest).map_err(io_err(&manifest))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: ManifestEntry = serde_json::from_str(line)
                .map_err(|source| DatasetError::Json { path: manifest.display().to_string(), line: n + 1, source })?;
            entries.push(e);
        }
        Ok(Self { root: root.to_path_buf(), info, entries })
    }

    /// Usable (error-free) entries of one split.
    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split && e.error.is_none()).collect()
    }

    pub fn load_pair(&self, entry: &ManifestEntry) -> Result<InputPair, DatasetError> {
        let load = |rel: &String| io::read_pfm(&self.root.join(rel));
        if entry.homographied.len() != 2 || entry.whitened.len() != 2 {
            return Err(DatasetError::Invalid(format!("sample {} has no preprocessed input pair", entry.id)));
        }
        Ok(InputPair {
            homographied: [load(&entry.homographied[0])?, load(&entry.homographied[1])?],
            whitened: [load(&entry.whitened[0])?, load(&entry.whitened[1])?],
        })
    }

    pub fn load_view(&self, entry: &ManifestEntry, view: &str) -> Result<RadianceImage, DatasetError> {
        let rel = entry
            .images
            .get(view)
            .ok_or_else(|| DatasetError::Invalid(format!("sample {} has no render for view {view}", entry.id)))?;
        Ok(io::read_pfm(&self.root.join(rel))?)
    }

    pub fn load_labels(&self, entry: &ManifestEntry) -> Result<LabelRecord, DatasetError> {
        let path = self.root.join(&entry.labels);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|source| DatasetError::Json { path: path.display().to_string(), line: 0, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_bins() {
        for i in 0..NUM_PARAMS {
            for enc in [ColorEncoding::Lab, ColorEncoding::Rgb] {
                let r = label_range(i, enc);
                assert_eq!(bin_of(r.lo, r), 0);
                assert_eq!(bin_of(r.hi, r), 99);
            }
        }
        let r = BrdfParams::range(0);
        assert!((bin_center(38, r) - (r.lo + 38.5 * r.width() / 100.0)).abs() < 1e-12);
    }

    #[test]
    fn bin_round_trip_every_bin() {
        for enc in [ColorEncoding::Lab, ColorEncoding::Rgb] {
            for i in 0..NUM_PARAMS {
                let r = label_range(i, enc);
                for b in 0..NUM_BINS {
                    assert_eq!(bin_of(bin_center(b, r), r), b);
                }
            }
        }
        // full round trip through parameters for the encoding without gamut loss
        for b in 0..NUM_BINS {
            let bins = ParamBins([b; NUM_PARAMS]);
            assert_eq!(discretize_with(&undiscretize_with(&bins, ColorEncoding::Rgb), ColorEncoding::Rgb), bins);
        }
    }

    #[test]
    fn smoothed_label_shape() {
        let l = smooth_label(38);
        assert_eq!(l.argmax(), 38);
        let support: Vec<usize> = (0..NUM_BINS).filter(|&j| l.0[j] > 0.0).collect();
        assert_eq!(support.first(), Some(&29));
        assert_eq!(support.last(), Some(&47));
        assert_eq!(support.len(), 19);
        for d in 1..=9 {
            assert_eq!(l.0[38 + d], l.0[38 - d]);
            assert!(l.0[38 + d] < l.0[38 + d - 1]);
        }
        let edge = smooth_label(0);
        assert!((edge.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(edge.argmax(), 0);
        assert_eq!(edge.0.iter().filter(|&&x| x > 0.0).count(), 10);
    }

    #[test]
    fn splits_for_nine() {
        assert_eq!(split_counts(9), (6, 1, 2));
        let s = assign_splits(9, 7);
        assert_eq!(s.iter().filter(|&&x| x == Split::Train).count(), 6);
        assert_eq!(s.iter().filter(|&&x| x == Split::Val).count(), 1);
        assert_eq!(s.iter().filter(|&&x| x == Split::Test).count(), 2);
        assert_eq!(s, assign_splits(9, 7));
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        assert_eq!(sample_params(11), sample_params(11));
        assert_ne!(sample_params(11), sample_params(12));
        for s in 0..1000 {
            let p = sample_params(derive_seed(5, s));
            assert!(BrdfParams::from_array(p.to_array()).is_ok());
        }
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let img = RadianceImage::from_fn(8, 8, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment_noise_with_sigma(&img, 0.0, &mut rng), img);
        assert_ne!(augment_noise(&img, 1), augment_noise(&img, 2));
        assert_eq!(augment_noise(&img, 3), augment_noise(&img, 3));
    }

    #[test]
    fn decode_clamps_out_of_gamut_lab() {
        let v = [50.0, 0.5, 180.0, 5.0, 50.0, 127.0, -128.0, 100.0, -128.0, 127.0];
        let p = decode_params(&v, ColorEncoding::Lab);
        assert!(p.rgb0().iter().chain(p.rgb90().iter()).all(|c| (0.0..=1.0).contains(c)));
    }
}
