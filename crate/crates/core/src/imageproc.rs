//! Input preprocessing: rectification of the planar sample by a homography,
//! per-image color whitening, and the sRGB / CIELAB conversions used to
//! encode reflectance colors.

use std::sync::LazyLock;

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::render::RadianceImage;

/// Floor on covariance eigenvalues before the inverse square root.
pub const WHITENING_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("degenerate corner configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("homography is singular")]
    Singular,
    #[error("image is empty")]
    Empty,
}

pub type Point = [f64; 2];

/// Planar projective transform normalized so that `m[(2, 2)] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, ImageError> {
        let s = m[(2, 2)];
        if !s.is_finite() || s.abs() < 1e-300 {
            return Err(ImageError::Singular);
        }
        let m = m / s;
        if m.determinant().abs() < 1e-12 || m.iter().any(|v| !v.is_finite()) {
            return Err(ImageError::Singular);
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn apply(&self, p: Point) -> Point {
        let v = self.m * Vector3::new(p[0], p[1], 1.0);
        [v.x / v.z, v.y / v.z]
    }

    pub fn inverse(&self) -> Self {
        let inv = self.m.try_inverse().expect("homography invariant guarantees invertibility");
        Self::from_matrix(inv).expect("inverse of an invertible homography is invertible")
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Self {
        Self::from_matrix(self.m * first.m).expect("product of invertible matrices is invertible")
    }
}

fn has_collinear_triple(pts: &[Point; 4]) -> bool {
    let scale = pts
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for i in 0..4 {
        for j in (i + 1)..4 {
            for k in (j + 1)..4 {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                if cross.abs() <= 1e-12 * scale * scale {
                    return true;
                }
            }
        }
    }
    false
}

/// Homography mapping each `src[i]` onto `dst[i]`, from the eight linear
/// equations of the four correspondences with `h33 = 1`.
pub fn homography_from_corners(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography, ImageError> {
    if has_collinear_triple(src) {
        return Err(ImageError::DegenerateConfiguration("three source points are collinear"));
    }
    if has_collinear_triple(dst) {
        return Err(ImageError::DegenerateConfiguration("three destination points are collinear"));
    }
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let (x, y, u, v) = (s[0], s[1], d[0], d[1]);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b).ok_or(ImageError::DegenerateConfiguration("correspondence system is singular"))?;
    Homography::from_matrix(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

/// Bilinear lookup at continuous coordinates (pixel centers at `i + 0.5`).
/// Positions outside the image rectangle return zero.
fn sample_bilinear(img: &RadianceImage, u: f64, v: f64) -> [f32; 3] {
    let (w, h) = (img.width as f64, img.height as f64);
    if !(u >= 0.0 && u <= w && v >= 0.0 && v <= h) {
        return [0.0; 3];
    }
    let fx = u - 0.5;
    let fy = v - 0.5;
    let x0f = fx.floor();
    let y0f = fy.floor();
    let tx = (fx - x0f) as f32;
    let ty = (fy - y0f) as f32;
    let clamp_x = |x: f64| x.clamp(0.0, w - 1.0) as usize;
    let clamp_y = |y: f64| y.clamp(0.0, h - 1.0) as usize;
    let (x0, x1) = (clamp_x(x0f), clamp_x(x0f + 1.0));
    let (y0, y1) = (clamp_y(y0f), clamp_y(y0f + 1.0));
    let p00 = img.get(x0, y0);
    let p10 = img.get(x1, y0);
    let p01 = img.get(x0, y1);
    let p11 = img.get(x1, y1);
    std::array::from_fn(|c| {
        let top = if tx == 0.0 { p00[c] } else { p00[c] * (1.0 - tx) + p10[c] * tx };
        let bottom = if tx == 0.0 { p01[c] } else { p01[c] * (1.0 - tx) + p11[c] * tx };
        if ty == 0.0 {
            top
        } else {
            top * (1.0 - ty) + bottom * ty
        }
    })
}

/// Resamples `image` into an `out_size × out_size` frame, where `h` maps
/// source pixel coordinates to output pixel coordinates.
pub fn warp(image: &RadianceImage, h: &Homography, out_size: usize) -> RadianceImage {
    let inv = h.inverse();
    RadianceImage::from_fn(out_size, out_size, |x, y| {
        let [u, v] = inv.apply([x as f64 + 0.5, y as f64 + 0.5]);
        sample_bilinear(image, u, v)
    })
}

/// Warps the quadrilateral `corners` (top-left, top-right, bottom-right,
/// bottom-left) of `image` onto a full square frame.
pub fn rectify(image: &RadianceImage, corners: &[Point; 4], out_size: usize) -> Result<RadianceImage, ImageError> {
    let h = homography_from_corners(corners, &crate::render::square_corners(out_size))?;
    Ok(warp(image, &h, out_size))
}

/// Per-image channel decorrelation `x ↦ W (x − μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteningTransform {
    pub mean: Vector3<f64>,
    pub matrix: Matrix3<f64>,
}

pub fn channel_statistics(image: &RadianceImage) -> (Vector3<f64>, Matrix3<f64>) {
    let n = image.pixel_count() as f64;
    let mut mean = Vector3::zeros();
    for p in image.pixels() {
        mean += Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
    }
    mean /= n;
    let mut cov = Matrix3::zeros();
    for p in image.pixels() {
        let d = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) - mean;
        cov += d * d.transpose();
    }
    (mean, cov / n)
}

/// Fits `W = Σ^(-1/2)` from the 3×3 channel covariance, with eigenvalues
/// floored at [`WHITENING_EPS`] so constant channels stay finite.
pub fn fit_whitening(image: &RadianceImage) -> Result<WhiteningTransform, ImageError> {
    if image.pixel_count() == 0 {
        return Err(ImageError::Empty);
    }
    let (mean, cov) = channel_statistics(image);
    let eig = SymmetricEigen::new(cov);
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.max(WHITENING_EPS).sqrt());
    let v = eig.eigenvectors;
    let matrix = v * Matrix3::from_diagonal(&inv_sqrt) * v.transpose();
    Ok(WhiteningTransform { mean, matrix: 0.5 * (matrix + matrix.transpose()) })
}

pub fn apply_whitening(image: &RadianceImage, t: &WhiteningTransform) -> RadianceImage {
    let mut out = RadianceImage::zeros(image.width, image.height);
    for (dst, p) in out.data.chunks_exact_mut(3).zip(image.pixels()) {
        let x = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) - t.mean;
        let y = t.matrix * x;
        dst.copy_from_slice(&[y.x as f32, y.y as f32, y.z as f32]);
    }
    out
}

pub fn whiten(image: &RadianceImage) -> Result<RadianceImage, ImageError> {
    Ok(apply_whitening(image, &fit_whitening(image)?))
}

pub type Lab = [f64; 3];

/// sRGB transfer curve, linear to encoded.
pub fn srgb_encode(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

/// sRGB transfer curve, encoded to linear.
pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

static RGB_TO_XYZ: LazyLock<Matrix3<f64>> = LazyLock::new(|| {
    Matrix3::new(
        0.4124564, 0.3575761, 0.1804375, //
        0.2126729, 0.7151522, 0.0721750, //
        0.0193339, 0.1191920, 0.9503041,
    )
});
static XYZ_TO_RGB: LazyLock<Matrix3<f64>> =
    LazyLock::new(|| RGB_TO_XYZ.try_inverse().expect("sRGB primaries matrix is invertible"));
/// D65 white as the image of linear `(1, 1, 1)`, so white maps to `a = b = 0` exactly.
static WHITE_XYZ: LazyLock<Vector3<f64>> = LazyLock::new(|| *RGB_TO_XYZ * Vector3::new(1.0, 1.0, 1.0));

const LAB_DELTA: f64 = 6.0 / 29.0;

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t * t * t
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

pub fn linear_rgb_to_lab(rgb: [f64; 3]) -> Lab {
    let xyz = *RGB_TO_XYZ * Vector3::from(rgb);
    let w = *WHITE_XYZ;
    let fx = lab_f(xyz.x / w.x);
    let fy = lab_f(xyz.y / w.y);
    let fz = lab_f(xyz.z / w.z);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`linear_rgb_to_lab`] without gamut clamping.
pub fn lab_to_linear_rgb_unclamped(lab: Lab) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let w = *WHITE_XYZ;
    let xyz = Vector3::new(w.x * lab_f_inv(fx), w.y * lab_f_inv(fy), w.z * lab_f_inv(fz));
    let rgb = *XYZ_TO_RGB * xyz;
    [rgb.x, rgb.y, rgb.z]
}

/// Inverse of [`linear_rgb_to_lab`]; the flag is `true` when the color was
/// outside the `[0, 1]³` gamut and had to be clamped.
pub fn lab_to_linear_rgb(lab: Lab) -> ([f64; 3], bool) {
    let raw = lab_to_linear_rgb_unclamped(lab);
    let clamped = raw.map(|c| c.clamp(0.0, 1.0));
    (clamped, raw.iter().zip(&clamped).any(|(a, b)| (a - b).abs() > 1e-12))
}

/// CIELAB (D65) of a gamma-encoded sRGB triple.
pub fn srgb_to_lab(rgb: [f64; 3]) -> Lab {
    linear_rgb_to_lab(rgb.map(srgb_decode))
}

/// Gamma-encoded sRGB of a CIELAB color, clamped into gamut. The flag reports
/// whether clamping happened.
pub fn lab_to_srgb(lab: Lab) -> ([f64; 3], bool) {
    let (lin, clamped) = lab_to_linear_rgb(lab);
    (lin.map(srgb_encode), clamped)
}
