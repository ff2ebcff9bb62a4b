//! Direct-illumination renderer for a planar material sample.
//!
//! The scene is a square sample centered at the origin of the `z = 0` plane
//! with its normal along `+z`, lit by a single isotropic point light and seen
//! through a pinhole camera. The camera sits on the `-y` side of the sample,
//! the light on the `+y` side (or straight overhead), so at equal elevations
//! the mirror highlight lands in the middle of the sample.
//!
//! Every pixel is shaded independently at its center, which makes renders
//! bit-reproducible regardless of how rows are scheduled across threads.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brdf::{self, BrdfError, BrdfParams, Rgb, ShadingGeometry, Vec3};

/// Luminous efficacy of radiation used to turn lumens into watts (lm/W at 555 nm).
pub const LUMENS_PER_WATT: f64 = 683.0;

const CHECKER_ASSET: &str = include_str!("../assets/color_checker.json");

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Brdf(#[from] BrdfError),
    #[error("invalid view: {0}")]
    InvalidView(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

/// Camera and light placement for one view of the capture protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    /// Degrees above the sample plane, in `(0, 90]`.
    pub camera_elevation: f64,
    /// Rotation of the material frame in degrees; only set for the rotation series.
    pub material_rotation: Option<f64>,
    /// Degrees above the sample plane, in `(0, 90]`.
    pub light_elevation: f64,
    pub with_checker: bool,
}

impl ViewSpec {
    pub fn new(camera_elevation: f64, light_elevation: f64, with_checker: bool) -> Result<Self, RenderError> {
        let view = Self { camera_elevation, material_rotation: None, light_elevation, with_checker };
        view.validate()?;
        Ok(view)
    }

    pub fn with_rotation(mut self, degrees: f64) -> Self {
        self.material_rotation = Some(degrees);
        self
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.camera_elevation > 0.0 && self.camera_elevation <= 90.0) {
            return Err(RenderError::InvalidView(format!(
                "camera elevation {} is not in (0, 90]; the camera would be at or behind the sample plane",
                self.camera_elevation
            )));
        }
        if !(self.light_elevation > 0.0 && self.light_elevation <= 90.0) {
            return Err(RenderError::InvalidView(format!(
                "light elevation {} is not in (0, 90]",
                self.light_elevation
            )));
        }
        if let Some(r) = self.material_rotation {
            if !r.is_finite() {
                return Err(RenderError::InvalidView("material rotation is not finite".into()));
            }
        }
        Ok(())
    }

    /// Stable identifier such as `cam30_light45` or `cam45_light45_rot90`.
    pub fn name(&self) -> String {
        let mut s = format!("cam{}_light{}", fmt_deg(self.camera_elevation), fmt_deg(self.light_elevation));
        if let Some(r) = self.material_rotation {
            s.push_str(&format!("_rot{}", fmt_deg(r)));
        }
        s
    }

    fn rotation_radians(&self) -> f64 {
        self.material_rotation.unwrap_or(0.0).to_radians()
    }
}

fn fmt_deg(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl fmt::Display for ViewSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ViewSpec {
    type Err = RenderError;

    /// Parses the names produced by [`ViewSpec::name`]. The checker flag is
    /// set for light-45° views, matching the canonical protocol.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RenderError::InvalidView(format!("cannot parse view name `{s}` (expected camXX_lightYY[_rotZZ])"));
        let mut parts = s.split('_');
        let cam = parts.next().and_then(|p| p.strip_prefix("cam")).ok_or_else(bad)?;
        let light = parts.next().and_then(|p| p.strip_prefix("light")).ok_or_else(bad)?;
        let rot = match parts.next() {
            Some(p) => Some(p.strip_prefix("rot").ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?),
            None => None,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        let cam: f64 = cam.parse().map_err(|_| bad())?;
        let light: f64 = light.parse().map_err(|_| bad())?;
        let mut view = ViewSpec::new(cam, light, light == 45.0)?;
        view.material_rotation = rot;
        view.validate()?;
        Ok(view)
    }
}

/// The 14 views of the capture protocol, in a fixed order: the four material
/// rotations at camera 45°, then the five camera elevations under the 45°
/// light, then the same five elevations under the overhead light.
pub fn canonical_views() -> Vec<ViewSpec> {
    const CAMERAS: [f64; 5] = [15.0, 30.0, 45.0, 60.0, 90.0];
    let mut views = Vec::with_capacity(14);
    for rot in [0.0, 90.0, 180.0, 270.0] {
        views.push(ViewSpec { camera_elevation: 45.0, material_rotation: Some(rot), light_elevation: 45.0, with_checker: true });
    }
    for cam in CAMERAS {
        views.push(ViewSpec { camera_elevation: cam, material_rotation: None, light_elevation: 45.0, with_checker: true });
    }
    for cam in CAMERAS {
        views.push(ViewSpec { camera_elevation: cam, material_rotation: None, light_elevation: 90.0, with_checker: false });
    }
    views
}

/// The two network input views: camera at 30° and 90°, light at 45°, checker on.
pub fn training_views() -> [ViewSpec; 2] {
    [
        ViewSpec { camera_elevation: 30.0, material_rotation: None, light_elevation: 45.0, with_checker: true },
        ViewSpec { camera_elevation: 90.0, material_rotation: None, light_elevation: 45.0, with_checker: true },
    ]
}

#[derive(Debug, Deserialize)]
struct CheckerAsset {
    patches: Vec<CheckerPatch>,
}

#[derive(Debug, Deserialize)]
struct CheckerPatch {
    srgb8: [u8; 3],
}

/// Linear-RGB reflectances of the 24-patch color chart, row-major 6×4.
pub fn default_checker_patches() -> Vec<Rgb> {
    let asset: CheckerAsset = serde_json::from_str(CHECKER_ASSET).expect("bundled color checker asset parses");
    asset
        .patches
        .iter()
        .map(|p| p.srgb8.map(|c| crate::imageproc::srgb_decode(c as f64 / 255.0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Electrical power of the bulb in watts.
    pub light_power: f64,
    /// Lumens per watt of the bulb.
    pub light_efficacy: f64,
    /// Distance of the light from the sample center in meters.
    pub light_distance: f64,
    /// Edge length of the square sample in meters.
    pub sample_size: f64,
    /// Output width and height in pixels.
    pub image_size: usize,
    /// Vertical field of view of the pinhole camera in degrees.
    pub camera_fov: f64,
    /// Fraction of the frame height covered by the sample in the overhead view.
    pub frame_fill: f64,
    /// Multiplier applied to radiance before clamping to `[0, 1]` for display
    /// and network input.
    pub exposure: f64,
    pub checker_patches: Vec<Rgb>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            light_power: 1000.0,
            light_efficacy: 17.6,
            light_distance: 1.0,
            sample_size: 1.0,
            image_size: 64,
            camera_fov: 40.0,
            frame_fill: 0.8,
            exposure: 0.5,
            checker_patches: default_checker_patches(),
        }
    }
}

impl SceneConfig {
    pub fn with_image_size(mut self, size: usize) -> Self {
        self.image_size = size;
        self
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let positive = [
            ("light_power", self.light_power),
            ("light_efficacy", self.light_efficacy),
            ("light_distance", self.light_distance),
            ("sample_size", self.sample_size),
            ("exposure", self.exposure),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(RenderError::InvalidScene(format!("{name} must be positive, got {v}")));
            }
        }
        if self.image_size < 16 {
            return Err(RenderError::InvalidScene(format!("image_size must be at least 16, got {}", self.image_size)));
        }
        if !(self.camera_fov > 0.0 && self.camera_fov < 180.0) {
            return Err(RenderError::InvalidScene(format!("camera_fov {} not in (0, 180)", self.camera_fov)));
        }
        if !(self.frame_fill > 0.0 && self.frame_fill <= 1.0) {
            return Err(RenderError::InvalidScene(format!("frame_fill {} not in (0, 1]", self.frame_fill)));
        }
        if self.checker_patches.len() != 24 {
            return Err(RenderError::InvalidScene(format!("expected 24 checker patches, got {}", self.checker_patches.len())));
        }
        Ok(())
    }

    /// Radiant intensity of the point light in W/sr.
    pub fn light_intensity(&self) -> f64 {
        self.light_power * self.light_efficacy / LUMENS_PER_WATT / (4.0 * PI)
    }

    pub fn camera_distance(&self) -> f64 {
        let half_frame = 0.5 * self.sample_size / self.frame_fill;
        half_frame / (0.5 * self.camera_fov).to_radians().tan()
    }

    pub fn light_position(&self, view: &ViewSpec) -> Vec3 {
        let e = view.light_elevation.to_radians();
        Vec3::new(0.0, e.cos(), e.sin()) * self.light_distance
    }

    pub fn camera(&self, view: &ViewSpec) -> Camera {
        let e = view.camera_elevation.to_radians();
        let (s, c) = e.sin_cos();
        let position = Vec3::new(0.0, -c, s) * self.camera_distance();
        let forward = Vec3::new(0.0, c, -s);
        let up = Vec3::new(0.0, s, c);
        let right = forward.cross(&up);
        Camera { position, forward, up, right, tan_half_fov: (0.5 * self.camera_fov).to_radians().tan(), size: self.image_size }
    }
}

/// Pinhole camera looking at the sample center.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub right: Vec3,
    pub tan_half_fov: f64,
    pub size: usize,
}

impl Camera {
    /// World-space direction through continuous pixel coordinates (origin at
    /// the top-left corner, `+y` downward).
    pub fn ray_direction(&self, px: f64, py: f64) -> Vec3 {
        let n = self.size as f64;
        let sx = (px / n * 2.0 - 1.0) * self.tan_half_fov;
        let sy = (1.0 - py / n * 2.0) * self.tan_half_fov;
        (self.forward + self.right * sx + self.up * sy).normalize()
    }

    pub fn project(&self, p: &Vec3) -> [f64; 2] {
        let v = p - self.position;
        let z = v.dot(&self.forward);
        let sx = v.dot(&self.right) / z / self.tan_half_fov;
        let sy = v.dot(&self.up) / z / self.tan_half_fov;
        let n = self.size as f64;
        [(sx + 1.0) * 0.5 * n, (1.0 - sy) * 0.5 * n]
    }
}

/// Linear-RGB float image stored row-major from the top row, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RadianceImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&v);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// True when every value is finite and nonnegative.
    pub fn is_valid_radiance(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `exposure · L` clamped to `[0, 1]`; the display-referred linear domain
    /// the estimator works in.
    pub fn normalized(&self, exposure: f64) -> Self {
        let e = exposure as f32;
        self.map(|v| (v * e).clamp(0.0, 1.0))
    }

    pub fn mean_squared_error(&self, other: &Self) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height), "image sizes differ");
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
        sum / self.data.len() as f64
    }
}

enum Surface {
    Sample,
    Checker(usize),
    Background,
}

struct Layout {
    half: f64,
    checker_y0: f64,
    checker_y1: f64,
}

impl Layout {
    fn new(scene: &SceneConfig) -> Self {
        let half = 0.5 * scene.sample_size;
        let gap = 0.01 * scene.sample_size;
        let height = 0.1 * scene.sample_size;
        Self { half, checker_y1: -half - gap, checker_y0: -half - gap - height }
    }

    fn classify(&self, p: &Vec3, with_checker: bool) -> Surface {
        if p.x.abs() <= self.half && p.y.abs() <= self.half {
            return Surface::Sample;
        }
        if with_checker && p.x.abs() <= self.half && p.y >= self.checker_y0 && p.y <= self.checker_y1 {
            let col = (((p.x + self.half) / (2.0 * self.half)) * 6.0).floor().clamp(0.0, 5.0) as usize;
            let row = (((self.checker_y1 - p.y) / (self.checker_y1 - self.checker_y0)) * 4.0).floor().clamp(0.0, 3.0) as usize;
            return Surface::Checker(row * 6 + col);
        }
        Surface::Background
    }
}

/// Radiance reflected toward the camera at point `p` on the sample.
fn shade_sample(
    params: &BrdfParams,
    tangent_u: &Vec3,
    p: &Vec3,
    eye: &Vec3,
    light: &Vec3,
    intensity: f64,
) -> Result<Rgb, RenderError> {
    let to_light = light - p;
    let dist2 = to_light.norm_squared();
    let geom = ShadingGeometry::new(to_light, eye - p, Vec3::z(), *tangent_u)?;
    let f = brdf::eval_brdf(params, &geom)?;
    let irradiance = intensity * geom.cos_theta_i / dist2;
    Ok(f.map(|c| c * irradiance))
}

fn shade_checker(albedo: &Rgb, p: &Vec3, light: &Vec3, intensity: f64) -> Rgb {
    let to_light = light - p;
    let dist2 = to_light.norm_squared();
    let cos_i = (to_light.z / dist2.sqrt()).max(0.0);
    let irradiance = intensity * cos_i / dist2;
    albedo.map(|a| a / PI * irradiance)
}

/// Renders one view of a material sample into linear radiance.
pub fn render_view(params: &BrdfParams, view: &ViewSpec, scene: &SceneConfig) -> Result<RadianceImage, RenderError> {
    view.validate()?;
    scene.validate()?;
    let camera = scene.camera(view);
    let light = scene.light_position(view);
    let intensity = scene.light_intensity();
    let rot = view.rotation_radians();
    let tangent_u = Vec3::new(rot.cos(), rot.sin(), 0.0);
    let layout = Layout::new(scene);
    let n = scene.image_size;

    let rows: Vec<Result<Vec<f32>, RenderError>> = (0..n)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(n * 3);
            for x in 0..n {
                let dir = camera.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
                let rgb = if dir.z < 0.0 {
                    let t = -camera.position.z / dir.z;
                    let p = camera.position + dir * t;
                    match layout.classify(&p, view.with_checker) {
                        Surface::Sample => shade_sample(params, &tangent_u, &p, &camera.position, &light, intensity)?,
                        Surface::Checker(i) => shade_checker(&scene.checker_patches[i], &p, &light, intensity),
                        Surface::Background => [0.0; 3],
                    }
                } else {
                    [0.0; 3]
                };
                row.extend(rgb.iter().map(|&v| v as f32));
            }
            Ok(row)
        })
        .collect();

    let mut data = Vec::with_capacity(n * n * 3);
    for row in rows {
        data.extend(row?);
    }
    Ok(RadianceImage { width: n, height: n, data })
}

/// Image positions of the sample corners, ordered far-left, far-right,
/// near-right, near-left. This is the order that maps onto the top-left,
/// top-right, bottom-right and bottom-left corners of a fronto-parallel crop.
pub fn corner_projection(view: &ViewSpec, scene: &SceneConfig) -> [[f64; 2]; 4] {
    let camera = scene.camera(view);
    let h = 0.5 * scene.sample_size;
    [
        Vec3::new(-h, h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(-h, -h, 0.0),
    ]
    .map(|p| camera.project(&p))
}

/// Corners of a full `size × size` output frame in the order used by
/// [`corner_projection`].
pub fn square_corners(size: usize) -> [[f64; 2]; 4] {
    let s = size as f64;
    [[0.0, 0.0], [s, 0.0], [s, s], [0.0, s]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SceneConfig {
        SceneConfig::default().with_image_size(32)
    }

    #[test]
    fn view_names_round_trip() {
        for v in canonical_views() {
            let parsed: ViewSpec = v.name().parse().unwrap();
            assert_eq!(parsed.name(), v.name());
            assert_eq!(parsed.with_checker, v.with_checker);
        }
        assert!("cam0_light45".parse::<ViewSpec>().is_err());
        assert!("cam30".parse::<ViewSpec>().is_err());
        assert!("cam30_light45_x".parse::<ViewSpec>().is_err());
    }

    #[test]
    fn canonical_view_counts() {
        let views = canonical_views();
        assert_eq!(views.len(), 14);
        let names: std::collections::HashSet<_> = views.iter().map(|v| v.name()).collect();
        assert_eq!(names.len(), 14);
        assert_eq!(views.iter().filter(|v| v.light_elevation == 45.0).count(), 9);
        assert_eq!(views.iter().filter(|v| v.light_elevation == 90.0).count(), 5);
        assert!(views.iter().filter(|v| v.light_elevation == 45.0).all(|v| v.with_checker));
        for t in training_views() {
            assert!(views.contains(&t));
        }
    }

    #[test]
    fn checker_asset_is_linear_and_complete() {
        let patches = default_checker_patches();
        assert_eq!(patches.len(), 24);
        assert!(patches.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        // neutral ramp on the last row decreases
        for i in 18..23 {
            assert!(patches[i][1] > patches[i + 1][1]);
        }
    }

    #[test]
    fn camera_behind_plane_rejected() {
        let p = BrdfParams::new(50.0, 0.0, 0.0, 1.5, [0.5; 3], [0.5; 3]).unwrap();
        let view = ViewSpec { camera_elevation: -10.0, material_rotation: None, light_elevation: 45.0, with_checker: false };
        assert!(matches!(render_view(&p, &view, &scene()), Err(RenderError::InvalidView(_))));
    }

    #[test]
    fn small_image_rejected() {
        let p = BrdfParams::new(50.0, 0.0, 0.0, 1.5, [0.5; 3], [0.5; 3]).unwrap();
        let s = SceneConfig::default().with_image_size(8);
        assert!(matches!(render_view(&p, &training_views()[0], &s), Err(RenderError::InvalidScene(_))));
    }

    #[test]
    fn black_material_renders_black_sample() {
        let p = BrdfParams::new(30.0, 0.4, 10.0, 3.0, [0.0; 3], [0.0; 3]).unwrap();
        let mut view = training_views()[0];
        view.with_checker = false;
        let img = render_view(&p, &view, &scene()).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overhead_corners_form_square() {
        let view = ViewSpec::new(90.0, 45.0, false).unwrap();
        let c = corner_projection(&view, &scene());
        let eps = 1e-9;
        assert!((c[0][1] - c[1][1]).abs() < eps && (c[2][1] - c[3][1]).abs() < eps);
        assert!((c[0][0] - c[3][0]).abs() < eps && (c[1][0] - c[2][0]).abs() < eps);
        let w = c[1][0] - c[0][0];
        let h = c[3][1] - c[0][1];
        assert!((w - h).abs() < eps);
        assert!((w / 32.0 - 0.8).abs() < 1e-9);
    }

    #[test]
    fn oblique_corners_foreshorten_far_edge() {
        let view = ViewSpec::new(30.0, 45.0, false).unwrap();
        let c = corner_projection(&view, &scene());
        let far = c[1][0] - c[0][0];
        let near = c[2][0] - c[3][0];
        assert!(far < near, "far {far} near {near}");
        assert!(c[0][1] < c[3][1]);
    }

    #[test]
    fn radiance_is_valid_and_checker_visible() {
        let p = BrdfParams::new(60.0, 0.5, 30.0, 2.5, [0.7, 0.3, 0.2], [0.2, 0.6, 0.9]).unwrap();
        for view in canonical_views() {
            let img = render_view(&p, &view, &scene()).unwrap();
            assert!(img.is_valid_radiance(), "{}", view.name());
        }
        let view = ViewSpec::new(90.0, 45.0, true).unwrap();
        let with = render_view(&p, &view, &scene()).unwrap();
        let without = render_view(&p, &ViewSpec { with_checker: false, ..view }, &scene()).unwrap();
        assert_ne!(with, without);
    }
}
