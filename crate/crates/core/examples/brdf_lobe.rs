//! Prints how the specular lobe of an anisotropic material changes with the
//! azimuth of the viewer, for a few anisotropy angles.
//!
//! ```text
//! cargo run --example brdf_lobe
//! ```

use nested_brdf::brdf::{eval_brdf, fresnel, lobe_exponents, BrdfParams, ShadingGeometry, Vec3};

fn dir(theta_deg: f64, phi_deg: f64) -> Vec3 {
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    Vec3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = BrdfParams::new(20.0, 1.0, 0.0, 1.5, [0.9, 0.6, 0.3], [0.3, 0.5, 0.9])?;
    let (n_u, n_v) = lobe_exponents(&base);
    println!("roughness 20%, anisotropy 1: n_u = {n_u:.1}, n_v = {n_v:.3}");
    println!("fresnel at normal incidence (Nd 1.5): {:.4}\n", fresnel(&base, 1.0)?);

    // Light at 40° elevation; viewer on the mirror ring at 40°, sweeping the azimuth.
    let light = dir(40.0, 0.0);
    print!("{:>8}", "view az");
    let angles = [0.0, 45.0, 90.0];
    for a in angles {
        print!("{:>14}", format!("angle {a}°"));
    }
    println!();
    for az in (150..=210).step_by(10) {
        print!("{az:>8}");
        for a in angles {
            let p = base.with_anisotropy_angle(a);
            let geom = ShadingGeometry::local(light, dir(40.0, az as f64))?;
            let f = eval_brdf(&p, &geom)?;
            print!("{:>14.5}", f[1]);
        }
        println!();
    }

    let rough = BrdfParams::new(100.0, 0.0, 0.0, 1.5, [0.5, 0.5, 0.5], [0.5, 0.5, 0.5])?;
    let geom = ShadingGeometry::local(light, dir(30.0, 120.0))?;
    println!("\nroughness 100% reduces to rgb0·cosθo: {:.6} vs {:.6}", eval_brdf(&rough, &geom)?[0], 0.5 * 30f64.to_radians().cos());
    Ok(())
}
