use nalgebra::{Matrix3, SymmetricEigen, Vector3, Vector6, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric ellipse in plane coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseFit {
    pub centre: [f64; 2],
    /// Semi-axes, `a >= b > 0`.
    pub a: f64,
    pub b: f64,
    /// Angle of the major axis, in [0, π).
    pub rotation: f64,
    /// π a b.
    pub area: f64,
    /// RMS Sampson distance of the input points to the fitted conic (mm).
    pub residual: f64,
}

impl EllipseFit {
    /// Diameter of the circle with the same area, 2√(ab).
    pub fn equivalent_diameter(&self) -> f64 {
        2.0 * (self.a * self.b).sqrt()
    }
}

/// Direct least-squares ellipse fit constrained by 4AC − B² = 1, solved in
/// the numerically stable reduced form on centred, scaled points.
pub fn fit_ellipse(points: &[[f64; 2]]) -> Result<EllipseFit> {
    if points.len() < 6 {
        return Err(Error::TooFewPoints {
            needed: 6,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let scale = (points
        .iter()
        .map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::EllipseFit("points are coincident".into()));
    }
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p[0] - mx) / scale, (p[1] - my) / scale))
        .collect();

    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for &(x, y) in &pts {
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let s3_inv = s3
        .try_inverse()
        .ok_or_else(|| Error::EllipseFit("points are collinear".into()))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // premultiply by the inverse of the 3×3 constraint block
    let m = Matrix3::from_rows(&[
        m.row(2) / 2.0,
        -m.row(1),
        m.row(0) / 2.0,
    ]);

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in m.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-9 * (1.0 + lambda.re.abs()) {
            continue;
        }
        let Some(v) = null_vector(&(m - Matrix3::identity() * lambda.re)) else {
            continue;
        };
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond > 0.0 && best.is_none_or(|(c, _)| cond > c) {
            best = Some((cond, v));
        }
    }
    let (_, a1) = best.ok_or_else(|| Error::EllipseFit("no elliptical solution".into()))?;
    let a2 = t * a1;
    let conic = Vector6::new(a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);

    let mut fit = conic_to_geometry(&conic)?;
    let residual = sampson_rms(&conic, &pts) * scale;
    fit.centre = [mx + scale * fit.centre[0], my + scale * fit.centre[1]];
    fit.a *= scale;
    fit.b *= scale;
    fit.area = std::f64::consts::PI * fit.a * fit.b;
    fit.residual = residual;
    Ok(fit)
}

/// Unit vector spanning the null space of a rank-2 matrix: the largest
/// cross product of two of its rows.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let r: [Vector3<f64>; 3] = std::array::from_fn(|i| m.row(i).transpose());
    let c = [r[0].cross(&r[1]), r[0].cross(&r[2]), r[1].cross(&r[2])];
    let v = c.iter().max_by(|a, b| a.norm().total_cmp(&b.norm()))?;
    let norm = v.norm();
    (norm > 0.0 && norm.is_finite()).then(|| v / norm)
}

fn conic_to_geometry(k: &Vector6<f64>) -> Result<EllipseFit> {
    let (a, b, c, d, e, f) = (k[0], k[1], k[2], k[3], k[4], k[5]);
    let q = Matrix2::new(a, b / 2.0, b / 2.0, c);
    let centre = Matrix2::new(2.0 * a, b, b, 2.0 * c)
        .try_inverse()
        .map(|inv| inv * Vector2::new(-d, -e))
        .ok_or_else(|| Error::EllipseFit("singular conic".into()))?;
    let (x0, y0) = (centre[0], centre[1]);
    let f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f;
    let eig = SymmetricEigen::new(q);
    let mut axes = [0.0; 2];
    for k in 0..2 {
        let s = -f0 / eig.eigenvalues[k];
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::EllipseFit("conic is not a real ellipse".into()));
        }
        axes[k] = s.sqrt();
    }
    let major = if axes[0] >= axes[1] { 0 } else { 1 };
    let dir = eig.eigenvectors.column(major);
    let mut rotation = dir[1].atan2(dir[0]).rem_euclid(std::f64::consts::PI);
    if rotation >= std::f64::consts::PI {
        rotation = 0.0;
    }
    let (sa, sb) = (axes[major], axes[1 - major]);
    Ok(EllipseFit {
        centre: [x0, y0],
        a: sa,
        b: sb,
        rotation,
        area: std::f64::consts::PI * sa * sb,
        residual: 0.0,
    })
}

fn sampson_rms(k: &Vector6<f64>, pts: &[(f64, f64)]) -> f64 {
    let sum: f64 = pts
        .iter()
        .map(|&(x, y)| {
            let g = k[0] * x * x + k[1] * x * y + k[2] * y * y + k[3] * x + k[4] * y + k[5];
            let gx = 2.0 * k[0] * x + k[1] * y + k[3];
            let gy = k[1] * x + 2.0 * k[2] * y + k[4];
            let grad2 = gx * gx + gy * gy;
            if grad2 > 0.0 {
                g * g / grad2
            } else {
                0.0
            }
        })
        .sum();
    (sum / pts.len() as f64).sqrt()
}
