//! Analytic anisotropic reflectance model.
//!
//! The model is a variant of the Ashikhmin-Shirley specular lobe without a
//! diffuse term. It carries a second reflectance color that dominates at
//! glancing view angles and falls back to a Lambert-like term once the
//! roughness approaches 100%.
//!
//! All functions here are pure; [`BrdfParams`] and [`ShadingGeometry`] are
//! validated at construction so evaluation never sees out-of-range input.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Rgb = [f64; 3];

/// Cosines below this value are clamped before they reach a denominator.
pub const GRAZING_EPS: f64 = 1e-6;

/// Rec. 709 luminance weights, applied to linear RGB.
pub const LUMINANCE_WEIGHTS: Rgb = [0.2126, 0.7152, 0.0722];

/// Below this luminance the hue normalization divides by the floor instead.
pub const MIN_HUE_LUMINANCE: f64 = 1e-6;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrdfError {
    #[error("parameter `{field}` = {value} is outside [{lo}, {hi}{close}", close = if *.open_hi { ")" } else { "]" })]
    OutOfRange {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
        open_hi: bool,
    },
    #[error("direction is grazing or below the surface (cos = {0})")]
    BelowHorizon(f64),
    #[error("incoming and outgoing directions are opposite; half vector is undefined")]
    DegenerateHalfVector,
    #[error("shading frame is degenerate: {0}")]
    DegenerateFrame(&'static str),
}

/// Declared range of one scalar material parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    /// `true` when `hi` itself is excluded (the anisotropy angle wraps).
    pub open_hi: bool,
}

impl ParamRange {
    pub const fn closed(lo: f64, hi: f64) -> Self {
        Self { lo, hi, open_hi: false }
    }

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v >= self.lo && if self.open_hi { v < self.hi } else { v <= self.hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub const ROUGHNESS_RANGE: ParamRange = ParamRange::closed(0.0, 100.0);
pub const ANISOTROPY_RANGE: ParamRange = ParamRange::closed(0.0, 1.0);
pub const ANISOTROPY_ANGLE_RANGE: ParamRange = ParamRange { lo: 0.0, hi: 360.0, open_hi: true };
pub const ND_RANGE: ParamRange = ParamRange::closed(1.0, 10.0);
pub const COLOR_RANGE: ParamRange = ParamRange::closed(0.0, 1.0);

/// Names of the ten estimated parameters in index order.
pub const PARAM_NAMES: [&str; 10] = [
    "roughness",
    "anisotropy",
    "anisotropy_angle",
    "nd",
    "rgb0_r",
    "rgb0_g",
    "rgb0_b",
    "rgb90_r",
    "rgb90_g",
    "rgb90_b",
];

/// The ten continuous material parameters.
///
/// `roughness` is in percent, `anisotropy` normalized to `[0, 1]`,
/// `anisotropy_angle` in degrees and the two reflectance colors are linear
/// RGB. The extinction coefficient of the complex IOR is always zero and is
/// not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrdfParams {
    roughness: f64,
    anisotropy: f64,
    anisotropy_angle: f64,
    nd: f64,
    rgb0: Rgb,
    rgb90: Rgb,
}

fn check(field: &'static str, v: f64, range: ParamRange) -> Result<f64, BrdfError> {
    if range.contains(v) {
        Ok(v)
    } else {
        Err(BrdfError::OutOfRange { field, value: v, lo: range.lo, hi: range.hi, open_hi: range.open_hi })
    }
}

impl BrdfParams {
    pub fn new(
        roughness: f64,
        anisotropy: f64,
        anisotropy_angle: f64,
        nd: f64,
        rgb0: Rgb,
        rgb90: Rgb,
    ) -> Result<Self, BrdfError> {
        check("roughness", roughness, ROUGHNESS_RANGE)?;
        check("anisotropy", anisotropy, ANISOTROPY_RANGE)?;
        check("anisotropy_angle", anisotropy_angle, ANISOTROPY_ANGLE_RANGE)?;
        check("nd", nd, ND_RANGE)?;
        for (i, name) in ["rgb0_r", "rgb0_g", "rgb0_b"].into_iter().enumerate() {
            check(name, rgb0[i], COLOR_RANGE)?;
        }
        for (i, name) in ["rgb90_r", "rgb90_g", "rgb90_b"].into_iter().enumerate() {
            check(name, rgb90[i], COLOR_RANGE)?;
        }
        Ok(Self { roughness, anisotropy, anisotropy_angle, nd, rgb0, rgb90 })
    }

    /// Builds parameters from the ten values in [`PARAM_NAMES`] order.
    pub fn from_array(v: [f64; 10]) -> Result<Self, BrdfError> {
        Self::new(v[0], v[1], v[2], v[3], [v[4], v[5], v[6]], [v[7], v[8], v[9]])
    }

    pub fn to_array(&self) -> [f64; 10] {
        let [r0, g0, b0] = self.rgb0;
        let [r9, g9, b9] = self.rgb90;
        [self.roughness, self.anisotropy, self.anisotropy_angle, self.nd, r0, g0, b0, r9, g9, b9]
    }

    /// Declared range of parameter `index` in its native units.
    pub fn range(index: usize) -> ParamRange {
        match index {
            0 => ROUGHNESS_RANGE,
            1 => ANISOTROPY_RANGE,
            2 => ANISOTROPY_ANGLE_RANGE,
            3 => ND_RANGE,
            4..=9 => COLOR_RANGE,
            _ => panic!("parameter index {index} out of 0..10"),
        }
    }

    pub fn roughness(&self) -> f64 {
        self.roughness
    }
    pub fn anisotropy(&self) -> f64 {
        self.anisotropy
    }
    pub fn anisotropy_angle(&self) -> f64 {
        self.anisotropy_angle
    }
    pub fn nd(&self) -> f64 {
        self.nd
    }
    pub fn rgb0(&self) -> Rgb {
        self.rgb0
    }
    pub fn rgb90(&self) -> Rgb {
        self.rgb90
    }
    /// Extinction coefficient of the complex IOR. Always zero.
    pub fn k(&self) -> f64 {
        0.0
    }

    /// Returns a copy with a different anisotropy angle, wrapped into `[0, 360)`.
    pub fn with_anisotropy_angle(&self, degrees: f64) -> Self {
        let mut out = *self;
        out.anisotropy_angle = degrees.rem_euclid(360.0);
        if out.anisotropy_angle >= 360.0 {
            out.anisotropy_angle = 0.0;
        }
        out
    }
}

impl<'de> Deserialize<'de> for BrdfParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            roughness: f64,
            anisotropy: f64,
            anisotropy_angle: f64,
            nd: f64,
            rgb0: Rgb,
            rgb90: Rgb,
        }
        let r = Raw::deserialize(d)?;
        BrdfParams::new(r.roughness, r.anisotropy, r.anisotropy_angle, r.nd, r.rgb0, r.rgb90)
            .map_err(serde::de::Error::custom)
    }
}

/// Directions and derived angles for one BRDF evaluation.
///
/// `phi` is the azimuth of the half vector measured from `tangent_u` toward
/// `tangent_v`. The anisotropy angle of the material is subtracted at
/// evaluation time, so one geometry can be shared by many materials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingGeometry {
    pub omega_i: Vec3,
    pub omega_o: Vec3,
    pub normal: Vec3,
    pub tangent_u: Vec3,
    pub tangent_v: Vec3,
    pub half: Vec3,
    pub cos_theta_i: f64,
    pub cos_theta_o: f64,
    pub phi: f64,
}

impl ShadingGeometry {
    /// Builds the geometry from light and view directions (both pointing away
    /// from the surface) and a surface frame. Directions are normalized, the
    /// tangent is re-orthogonalized against the normal, and
    /// `tangent_v = normal × tangent_u`.
    pub fn new(omega_i: Vec3, omega_o: Vec3, normal: Vec3, tangent_u: Vec3) -> Result<Self, BrdfError> {
        let unit = |v: Vec3, what: &'static str| {
            let n = v.norm();
            if n.is_finite() && n > 1e-300 {
                Ok(v / n)
            } else {
                Err(BrdfError::DegenerateFrame(what))
            }
        };
        let omega_i = unit(omega_i, "zero-length incoming direction")?;
        let omega_o = unit(omega_o, "zero-length outgoing direction")?;
        let normal = unit(normal, "zero-length normal")?;
        let tangent_u = unit(tangent_u - normal * normal.dot(&tangent_u), "tangent parallel to normal")?;
        let tangent_v = normal.cross(&tangent_u);

        let sum = omega_i + omega_o;
        let len = sum.norm();
        if len < 1e-12 {
            return Err(BrdfError::DegenerateHalfVector);
        }
        let half = sum / len;
        let phi = half.dot(&tangent_v).atan2(half.dot(&tangent_u));
        Ok(Self {
            omega_i,
            omega_o,
            normal,
            tangent_u,
            tangent_v,
            half,
            cos_theta_i: normal.dot(&omega_i),
            cos_theta_o: normal.dot(&omega_o),
            phi,
        })
    }

    /// Geometry in the canonical local frame (`normal = +z`, `tangent_u = +x`).
    pub fn local(omega_i: Vec3, omega_o: Vec3) -> Result<Self, BrdfError> {
        Self::new(omega_i, omega_o, Vec3::z(), Vec3::x())
    }

    /// Checks the unit-length, orthogonality and half-vector invariants.
    pub fn is_consistent(&self) -> bool {
        let unit = |v: &Vec3| (v.norm() - 1.0).abs() <= UNIT_TOL;
        let half = (self.omega_i + self.omega_o).normalize();
        unit(&self.omega_i)
            && unit(&self.omega_o)
            && unit(&self.normal)
            && self.tangent_u.dot(&self.tangent_v).abs() <= UNIT_TOL
            && self.tangent_u.dot(&self.normal).abs() <= UNIT_TOL
            && self.tangent_v.dot(&self.normal).abs() <= UNIT_TOL
            && (half - self.half).norm() <= UNIT_TOL
    }

    /// Half-vector azimuth relative to the material's anisotropy direction.
    pub fn phi_for(&self, anisotropy_angle_deg: f64) -> f64 {
        self.phi - anisotropy_angle_deg.to_radians()
    }
}

/// Lobe exponents `(n_u, n_v)`.
///
/// Evaluated exactly as printed: `n_u = (0.001 + 0.00999 R)^-3` and
/// `n_v = (n_u^(-1/3) + A^3)^-1`. Note that with `A = 0` this gives
/// `n_v = n_u^(1/3)`, not `n_u`.
pub fn lobe_exponents(params: &BrdfParams) -> (f64, f64) {
    let base = 0.001 + 0.00999 * params.roughness;
    let n_u = base.powi(-3);
    let n_v = 1.0 / (n_u.powf(-1.0 / 3.0) + params.anisotropy.powi(3));
    (n_u, n_v)
}

/// Fresnel reflectance for a complex IOR `nd + i k` with `k = 0`.
pub fn fresnel(params: &BrdfParams, cos_theta_i: f64) -> Result<f64, BrdfError> {
    if !(cos_theta_i > 0.0) {
        return Err(BrdfError::BelowHorizon(cos_theta_i));
    }
    let c = cos_theta_i.min(1.0);
    let nd = params.nd;
    let k2 = params.k() * params.k();
    let s = (k2 * c * c + (nd * c - 1.0).powi(2)) / (k2 * c * c + (nd * c + 1.0).powi(2));
    let p = (k2 + (nd - c).powi(2)) / (k2 + (nd + c).powi(2));
    Ok(0.5 * (s + p))
}

/// The `(h·k)` factor of the specular denominator, with `k` read as the
/// incident direction.
fn half_dot_k(geom: &ShadingGeometry) -> f64 {
    geom.half.dot(&geom.omega_i)
}

/// Specular lobe `rho_s`.
pub fn specular_lobe(params: &BrdfParams, geom: &ShadingGeometry) -> Result<f64, BrdfError> {
    if !(geom.cos_theta_i > 0.0) {
        return Err(BrdfError::BelowHorizon(geom.cos_theta_i));
    }
    if !(geom.cos_theta_o > 0.0) {
        return Err(BrdfError::BelowHorizon(geom.cos_theta_o));
    }
    let (n_u, n_v) = lobe_exponents(params);
    let phi = geom.phi_for(params.anisotropy_angle);
    let (sin_phi, cos_phi) = phi.sin_cos();
    let exponent = n_u * cos_phi * cos_phi + n_v * sin_phi * sin_phi;

    let n_dot_h = geom.normal.dot(&geom.half).clamp(0.0, 1.0);
    let h_dot_k = half_dot_k(geom).max(GRAZING_EPS);
    let max_cos = geom.cos_theta_i.max(geom.cos_theta_o).max(GRAZING_EPS);

    let prefactor = ((n_u + 1.0) + (n_v + 1.0)).sqrt() / (8.0 * PI);
    Ok(prefactor * n_dot_h.powf(exponent) / (h_dot_k * max_cos))
}

pub fn luminance(c: &Rgb) -> f64 {
    LUMINANCE_WEIGHTS[0] * c[0] + LUMINANCE_WEIGHTS[1] * c[1] + LUMINANCE_WEIGHTS[2] * c[2]
}

/// Blend of the two reflectance colors by `cos_theta_o`, rescaled to unit
/// luminance so only its hue survives.
pub fn hue_blend(params: &BrdfParams, cos_theta_o: f64) -> Rgb {
    let w0 = cos_theta_o;
    let w90 = 1.0 - cos_theta_o;
    let c: Rgb = std::array::from_fn(|ch| params.rgb90[ch] * w90 + params.rgb0[ch] * w0);
    let lum = luminance(&c).max(MIN_HUE_LUMINANCE);
    c.map(|v| v / lum)
}

/// Microfacet term: hue of the blended reflectance colors scaled by the
/// specular lobe and the Fresnel factor.
pub fn f_m(params: &BrdfParams, geom: &ShadingGeometry) -> Result<Rgb, BrdfError> {
    let rho_s = specular_lobe(params, geom)?;
    let f_r = fresnel(params, geom.cos_theta_i)?;
    let scale = rho_s * f_r;
    Ok(hue_blend(params, geom.cos_theta_o).map(|c| c * scale))
}

/// Weight of the microfacet term for roughness above 90%.
pub fn lambert_blend_alpha(roughness: f64) -> f64 {
    0.1 * (100.0 - roughness).abs()
}

/// Full BRDF value per linear-RGB channel.
pub fn eval_brdf(params: &BrdfParams, geom: &ShadingGeometry) -> Result<Rgb, BrdfError> {
    let fm = f_m(params, geom)?;
    if params.roughness <= 90.0 {
        return Ok(fm);
    }
    let alpha = lambert_blend_alpha(params.roughness);
    let cos_o = geom.cos_theta_o;
    Ok(std::array::from_fn(|ch| alpha * fm[ch] + (1.0 - alpha) * params.rgb0[ch] * cos_o))
}
