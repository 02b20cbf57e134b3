use nalgebra::Vector3;

use crate::volume::{Interpolation, Volume, VolumeKind, WorldPoint};

/// Orthonormal basis of the plane perpendicular to `t`.
///
/// The helper axis is the canonical axis of smallest |component| in `t`
/// (first one on ties); `v1 = a × t / |a × t|`, `v2 = v1 × t`.
pub fn plane_basis(t: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let abs = t.abs();
    let mut k = 0;
    for i in 1..3 {
        if abs[i] < abs[k] {
            k = i;
        }
    }
    let mut a = Vector3::zeros();
    a[k] = 1.0;
    let v1 = a.cross(t).normalize();
    let v2 = v1.cross(t);
    (v1, v2)
}

/// A square image resampled on a plane through the volume.
#[derive(Debug, Clone)]
pub struct PlanePatch {
    pub centre: WorldPoint,
    pub v1: Vector3<f64>,
    pub v2: Vector3<f64>,
    pub pixel_size: f64,
    /// Pixels per side.
    pub size: usize,
    /// Row-major: `pixels[j * size + i]`, `i` along `v1`.
    pub pixels: Vec<f64>,
    /// Fraction of pixels whose sample point fell outside the volume.
    pub out_of_bounds: f64,
}

impl PlanePatch {
    /// Index of the centre pixel.
    pub fn centre_index(&self) -> usize {
        (self.size - 1) / 2
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels[j * self.size + i]
    }

    /// Bilinear value at plane coordinates (mm from the centre along v1, v2),
    /// clamped to the patch.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let c = self.centre_index() as f64;
        let hi = (self.size - 1) as f64;
        let fi = (x / self.pixel_size + c).clamp(0.0, hi);
        let fj = (y / self.pixel_size + c).clamp(0.0, hi);
        let (i0, j0) = (fi.floor() as usize, fj.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(self.size - 1), (j0 + 1).min(self.size - 1));
        let (u, v) = (fi - i0 as f64, fj - j0 as f64);
        (1.0 - v) * ((1.0 - u) * self.get(i0, j0) + u * self.get(i1, j0))
            + v * ((1.0 - u) * self.get(i0, j1) + u * self.get(i1, j1))
    }

    /// World position of plane coordinates.
    pub fn to_world(&self, x: f64, y: f64) -> WorldPoint {
        self.centre + x * self.v1 + y * self.v2
    }
}

/// Pixels per side for a given extent, `floor(extent / pixel_size)`.
pub fn patch_size(pixel_size: f64, extent: f64) -> usize {
    ((extent / pixel_size) + 1e-9).floor().max(1.0) as usize
}

/// Sample `v` on the plane through `centre` perpendicular to `tangent`.
///
/// Out-of-volume pixels clamp to the bounding box and are counted in
/// `out_of_bounds`. Binary volumes are clamped to [0, 1] after interpolation.
pub fn resample_plane(
    v: &Volume,
    centre: &WorldPoint,
    tangent: &Vector3<f64>,
    pixel_size: f64,
    extent: f64,
    method: Interpolation,
) -> PlanePatch {
    let (v1, v2) = plane_basis(tangent);
    let size = patch_size(pixel_size, extent);
    let c = ((size - 1) / 2) as f64;
    let binary = v.kind() == VolumeKind::Binary;
    let mut pixels = Vec::with_capacity(size * size);
    let mut oob = 0usize;
    for j in 0..size {
        let y = (j as f64 - c) * pixel_size;
        for i in 0..size {
            let x = (i as f64 - c) * pixel_size;
            let p = centre + x * v1 + y * v2;
            let (mut val, inside) = v.sample_clamped(&p, method);
            if !inside {
                oob += 1;
            }
            if binary {
                val = val.clamp(0.0, 1.0);
            }
            pixels.push(val);
        }
    }
    PlanePatch {
        centre: *centre,
        v1,
        v2,
        pixel_size,
        size,
        pixels,
        out_of_bounds: oob as f64 / (size * size) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn z_tangent_basis() {
        let (v1, v2) = plane_basis(&Vector3::z());
        assert_eq!(v1, Vector3::new(0.0, -1.0, 0.0));
        assert_eq!(v2, Vector3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn x_tangent_avoids_x_axis() {
        let (v1, v2) = plane_basis(&Vector3::x());
        assert_eq!(v1.x, 0.0);
        assert_eq!(v2.x, 0.0);
        assert!((v1.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn default_patch_is_133_square() {
        assert_eq!(patch_size(0.3, 40.0), 133);
        let v = Volume::filled([4, 4, 4], [10.0; 3], [0.0; 3], 7.5, VolumeKind::Intensity).unwrap();
        let p = resample_plane(&v, &WorldPoint::new(15.0, 15.0, 15.0), &Vector3::z(), 0.3, 40.0, Interpolation::Tricubic);
        assert_eq!(p.size, 133);
        assert_eq!(p.centre_index(), 66);
        assert!(p.pixels.iter().all(|&x| (x - 7.5).abs() < 1e-12));
        assert_eq!(p.out_of_bounds, 0.0);
    }

    #[test]
    fn ball_cuts_a_disc() {
        // binary ball of radius 5 mm on a 0.5 mm grid
        let n = 41;
        let s = 0.5;
        let mut data = Vec::new();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let d = ((x as f64 - 20.0).powi(2) + (y as f64 - 20.0).powi(2) + (z as f64 - 20.0).powi(2)).sqrt() * s;
                    data.push(if d <= 5.0 { 1.0 } else { 0.0 });
                }
            }
        }
        let v = Volume::new([n, n, n], [s; 3], [0.0; 3], data, VolumeKind::Binary).unwrap();
        let centre = WorldPoint::new(10.0, 10.0, 10.0);
        for t in [Vector3::z(), Vector3::new(1.0, 1.0, 0.0).normalize(), Vector3::new(1.0, -2.0, 3.0).normalize()] {
            let p = resample_plane(&v, &centre, &t, 0.3, 18.0, Interpolation::Tricubic);
            let c = p.centre_index() as f64;
            for j in 0..p.size {
                for i in 0..p.size {
                    let r = ((i as f64 - c).powi(2) + (j as f64 - c).powi(2)).sqrt() * 0.3;
                    let fg = p.get(i, j) >= 0.5;
                    if r < 5.0 - 0.3 {
                        assert!(fg, "pixel at r={r} should be inside");
                    } else if r > 5.0 + 0.3 {
                        assert!(!fg, "pixel at r={r} should be outside");
                    }
                    assert!((0.0..=1.0).contains(&p.get(i, j)));
                }
            }
        }
    }

    #[test]
    fn out_of_bounds_is_counted() {
        let v = Volume::filled([10, 10, 10], [1.0; 3], [0.0; 3], 1.0, VolumeKind::Intensity).unwrap();
        let p = resample_plane(&v, &WorldPoint::new(0.0, 4.5, 4.5), &Vector3::y(), 0.5, 10.0, Interpolation::Trilinear);
        assert!(p.out_of_bounds > 0.4 && p.out_of_bounds < 0.6, "{}", p.out_of_bounds);
    }

    fn unit() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
            .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn basis_is_orthonormal(t in unit()) {
            let (v1, v2) = plane_basis(&t);
            prop_assert!((v1.norm() - 1.0).abs() < 1e-12);
            prop_assert!((v2.norm() - 1.0).abs() < 1e-12);
            prop_assert!(v1.dot(&v2).abs() < 1e-12);
            prop_assert!(v1.dot(&t).abs() < 1e-12);
            prop_assert!(v2.dot(&t).abs() < 1e-12);
        }

        #[test]
        fn flipped_tangent_spans_same_plane(t in unit()) {
            let (a1, a2) = plane_basis(&t);
            let (b1, b2) = plane_basis(&-t);
            let pa = a1 * a1.transpose() + a2 * a2.transpose();
            let pb = b1 * b1.transpose() + b2 * b2.transpose();
            prop_assert!((pa - pb).abs().max() < 1e-12);
        }
    }
}
