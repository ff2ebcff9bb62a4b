use nested_brdf::brdf::Vec3;
use nested_brdf::render::{SceneConfig, ViewSpec};

/// Closed-form radiance of a roughness-100 sample: `rgb0 · cosθo ·
/// I cosθi / d²`, with the hit point found by an independent ray-plane
/// intersection.
pub fn lambert_oracle(rgb0: [f64; 3], view: &ViewSpec, scene: &SceneConfig) -> Vec<Option<[f64; 3]>> {
    let n = scene.image_size;
    let e = view.camera_elevation.to_radians();
    let dist = 0.5 * scene.sample_size / scene.frame_fill / (0.5 * scene.camera_fov).to_radians().tan();
    let eye = Vec3::new(0.0, -e.cos(), e.sin()) * dist;
    let fwd = -eye.normalize();
    let up = Vec3::new(0.0, e.sin(), e.cos());
    let right = fwd.cross(&up);
    let l = view.light_elevation.to_radians();
    let light = Vec3::new(0.0, l.cos(), l.sin()) * scene.light_distance;
    let intensity = scene.light_power * scene.light_efficacy / 683.0 / (4.0 * std::f64::consts::PI);
    let t = (0.5 * scene.camera_fov).to_radians().tan();
    let half = 0.5 * scene.sample_size;
    let mut out = Vec::new();
    for y in 0..n {
        for x in 0..n {
            let sx = ((x as f64 + 0.5) / n as f64 * 2.0 - 1.0) * t;
            let sy = (1.0 - (y as f64 + 0.5) / n as f64 * 2.0) * t;
            let d = (fwd + right * sx + up * sy).normalize();
            let p = eye + d * (-eye.z / d.z);
            // Skip pixels whose footprint straddles the sample edge.
            if d.z >= 0.0 || p.x.abs() > half * 0.98 || p.y.abs() > half * 0.98 {
                out.push(None);
                continue;
            }
            let to_l = light - p;
            let to_e = eye - p;
            let cos_i = to_l.z / to_l.norm();
            let cos_o = to_e.z / to_e.norm();
            let irr = intensity * cos_i / to_l.norm_squared();
            out.push(Some(rgb0.map(|c| c * cos_o * irr)));
        }
    }
    out
}
