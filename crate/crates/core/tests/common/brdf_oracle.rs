//! Brute-force transcription. Directions point away from the surface, the
//! frame is `n = z`, `u = x`, `v = y`; angles in degrees where the model
//! uses degrees.

use std::f64::consts::PI;

use nested_brdf::brdf::{BrdfParams, Vec3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Material {
    pub r: f64,
    pub a: f64,
    pub angle_deg: f64,
    pub nd: f64,
    pub rgb0: [f64; 3],
    pub rgb90: [f64; 3],
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / l, v[1] / l, v[2] / l]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn exponents(m: &Material) -> (f64, f64) {
    let nu = 1.0 / (0.001 + 0.00999 * m.r).powi(3);
    let nv = 1.0 / (1.0 / nu.cbrt() + m.a * m.a * m.a);
    (nu, nv)
}

/// Unpolarized Fresnel reflectance with zero extinction.
pub fn fresnel(nd: f64, c: f64) -> f64 {
    let rs = ((nd * c - 1.0) / (nd * c + 1.0)).powi(2);
    let rp = ((nd - c) / (nd + c)).powi(2);
    (rs + rp) / 2.0
}

pub fn brdf(m: &Material, wi: [f64; 3], wo: [f64; 3]) -> [f64; 3] {
    let wi = normalize(wi);
    let wo = normalize(wo);
    let h = normalize([wi[0] + wo[0], wi[1] + wo[1], wi[2] + wo[2]]);
    let cos_i = wi[2];
    let cos_o = wo[2];
    let (nu, nv) = exponents(m);
    let phi = h[1].atan2(h[0]) - m.angle_deg.to_radians();
    let e = nu * phi.cos().powi(2) + nv * phi.sin().powi(2);
    let n_h = h[2].clamp(0.0, 1.0);
    let hk = dot(h, wi).max(1e-6);
    let rho_s = ((nu + 1.0) + (nv + 1.0)).sqrt() / (8.0 * PI) * n_h.powf(e) / (hk * cos_i.max(cos_o).max(1e-6));
    let fr = fresnel(m.nd, cos_i.min(1.0));

    let blend: Vec<f64> = (0..3).map(|c| m.rgb90[c] * (1.0 - cos_o) + m.rgb0[c] * cos_o).collect();
    let lum = (0.2126 * blend[0] + 0.7152 * blend[1] + 0.0722 * blend[2]).max(1e-6);
    let fm: Vec<f64> = blend.iter().map(|b| b / lum * rho_s * fr).collect();
    if m.r <= 90.0 {
        return [fm[0], fm[1], fm[2]];
    }
    let alpha = 0.1 * (100.0 - m.r).abs();
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = alpha * fm[c] + (1.0 - alpha) * m.rgb0[c] * cos_o;
    }
    out
}

pub fn random_params(rng: &mut ChaCha8Rng) -> BrdfParams {
    BrdfParams::new(
        rng.random_range(0.0..=100.0),
        rng.random_range(0.0..=1.0),
        rng.random_range(0.0..360.0),
        rng.random_range(1.0..=10.0),
        [rng.random(), rng.random(), rng.random()],
        [rng.random(), rng.random(), rng.random()],
    )
    .unwrap()
}

pub fn upper_hemisphere(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.random_range(0.02..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

pub fn as_material(p: &BrdfParams) -> Material {
    Material { r: p.roughness(), a: p.anisotropy(), angle_deg: p.anisotropy_angle(), nd: p.nd(), rgb0: p.rgb0(), rgb90: p.rgb90() }
}

pub fn rel_scalar_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

