use serde::{Deserialize, Serialize};

use super::plane::PlanePatch;
use crate::error::{Error, Result};

/// Outcome of one ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayStatus {
    Hit,
    /// The binary profile never drops below 0.5.
    NoSegEdge,
    /// No usable local maximum or half-maximum crossing in the CT profile.
    NoHalfMax,
}

/// Lumen edge points in plane coordinates (mm), one per successful ray.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoundaryPointSet {
    pub points: Vec<[f64; 2]>,
    pub ray_status: Vec<RayStatus>,
}

impl BoundaryPointSet {
    pub fn hits(&self) -> usize {
        self.points.len()
    }
    pub fn hit_fraction(&self) -> f64 {
        if self.ray_status.is_empty() {
            0.0
        } else {
            self.hits() as f64 / self.ray_status.len() as f64
        }
    }
}

/// Smallest prominence of a usable maximum, as a fraction of the profile range.
pub const MIN_PROMINENCE: f64 = 0.1;

/// Height of the run `rc[a..=b]` above the higher of the two lowest points
/// reached on either side before climbing above it.
fn prominence(rc: &[f64], a: usize, b: usize, eps: f64) -> f64 {
    let h = rc[a];
    let mut left = h;
    for &v in rc[..a].iter().rev() {
        if v > h + eps {
            break;
        }
        left = left.min(v);
    }
    let mut right = h;
    for &v in &rc[b + 1..] {
        if v > h + eps {
            break;
        }
        right = right.min(v);
    }
    h - left.max(right)
}

/// Edge position along one ray, in (fractional) sample indices.
///
/// `s` is the first binary sample below 0.5. Local maxima of `rc` are runs
/// of equal samples (within a tolerance of 1e-6 of the profile range) whose
/// two flanking samples are both lower; the ray ends never qualify. Maxima
/// with a topographic prominence below [`MIN_PROMINENCE`] of the profile
/// range are interpolation ripple and are skipped. The candidate nearest `s`
/// wins, ties toward the centre. The edge is the first
/// crossing of the half level between the preceding minimum and that
/// maximum, refined linearly between the bracketing samples.
pub fn locate_edge(rb: &[f64], rc: &[f64]) -> std::result::Result<f64, RayStatus> {
    let n = rc.len().min(rb.len());
    let s = rb[..n].iter().position(|&b| b < 0.5).ok_or(RayStatus::NoSegEdge)?;
    let rc = &rc[..n];

    let (lo, hi) = rc
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let eps = 1e-6 * (hi - lo);

    let mut x_max: Option<usize> = None;
    let mut a = 0;
    while a < n {
        let mut b = a;
        while b + 1 < n && (rc[b + 1] - rc[b]).abs() <= eps {
            b += 1;
        }
        let left_lower = a > 0 && rc[a - 1] < rc[a] - eps;
        let right_lower = b + 1 < n && rc[b + 1] < rc[b] - eps;
        if left_lower && right_lower && prominence(rc, a, b, eps) >= MIN_PROMINENCE * (hi - lo) {
            let nearest = s.clamp(a, b);
            let better = match x_max {
                None => true,
                Some(x) => nearest.abs_diff(s) < x.abs_diff(s),
            };
            if better {
                x_max = Some(nearest);
            }
        }
        a = b + 1;
    }
    let x_max = x_max.ok_or(RayStatus::NoHalfMax)?;

    let mut x_min = 0;
    for k in 1..=x_max {
        if rc[k] < rc[x_min] {
            x_min = k;
        }
    }
    let half = 0.5 * (rc[x_max] + rc[x_min]);
    for k in x_min..x_max {
        if rc[k] == half {
            return Ok(k as f64);
        }
        if rc[k] < half && rc[k + 1] > half {
            return Ok(k as f64 + (half - rc[k]) / (rc[k + 1] - rc[k]));
        }
    }
    if rc[x_max] == half {
        return Ok(x_max as f64);
    }
    Err(RayStatus::NoHalfMax)
}

/// Cast `n_rays` rays from the patch centre and locate the lumen edge on each.
///
/// Rays run to the inscribed radius of the patch and are sampled every
/// `pixel_size / samples_per_pixel` mm by bilinear interpolation.
pub fn fwhm_esl(
    binary: &PlanePatch,
    ct: &PlanePatch,
    n_rays: usize,
    samples_per_pixel: usize,
) -> Result<BoundaryPointSet> {
    if binary.size != ct.size || binary.pixel_size != ct.pixel_size {
        return Err(Error::Config("binary and CT patches differ in geometry".into()));
    }
    if n_rays == 0 || samples_per_pixel == 0 {
        return Err(Error::Config("ray count and samples per pixel must be positive".into()));
    }
    let c = binary.centre_index();
    if binary.get(c, c) < 0.5 {
        return Err(Error::CentreOutsideLumen);
    }
    let step = binary.pixel_size / samples_per_pixel as f64;
    let n = c * samples_per_pixel + 1;
    let mut out = BoundaryPointSet {
        points: Vec::with_capacity(n_rays),
        ray_status: Vec::with_capacity(n_rays),
    };
    let mut rb = vec![0.0; n];
    let mut rc = vec![0.0; n];
    for k in 0..n_rays {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n_rays as f64;
        let (dy, dx) = theta.sin_cos();
        for i in 0..n {
            let r = i as f64 * step;
            rb[i] = binary.bilinear(r * dx, r * dy);
            rc[i] = ct.bilinear(r * dx, r * dy);
        }
        match locate_edge(&rb, &rc) {
            Ok(l) => {
                let r = l * step;
                out.points.push([r * dx, r * dy]);
                out.ray_status.push(RayStatus::Hit);
            }
            Err(status) => out.ray_status.push(status),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_ramp_profile() {
        let rb: Vec<f64> = (0..120).map(|i| if i < 50 { 1.0 } else { 0.0 }).collect();
        let rc: Vec<f64> = (0..120)
            .map(|i| match i {
                0..40 => -1000.0,
                40..=60 => -1000.0 + 40.0 * (i - 40) as f64,
                _ => -200.0 - 30.0 * (i - 60) as f64,
            })
            .collect();
        // by hand: s = 50, x_max = 60 (I_max = -200), x_min = 0 (I_min = -1000),
        // half = -600 reached at 40 + 400 / 40 = 50
        assert_eq!(locate_edge(&rb, &rc), Ok(50.0));
    }

    #[test]
    fn sharp_step_gives_midpoint() {
        let rb: Vec<f64> = (0..60).map(|i| if i <= 20 { 1.0 } else { 0.0 }).collect();
        let rc: Vec<f64> = (0..60)
            .map(|i| match i {
                0..=20 => -1000.0,
                21..=30 => 0.0,
                _ => -800.0,
            })
            .collect();
        assert_eq!(locate_edge(&rb, &rc), Ok(20.5));
    }

    #[test]
    fn failure_statuses() {
        let rc: Vec<f64> = (0..30).map(|i| i as f64).collect();
        assert_eq!(locate_edge(&[1.0; 30], &rc), Err(RayStatus::NoSegEdge));
        let mut rb = [1.0; 30];
        rb[10] = 0.0;
        // monotone CT profile: no interior maximum
        assert_eq!(locate_edge(&rb, &rc), Err(RayStatus::NoHalfMax));
    }

    #[test]
    fn nearest_maximum_wins_ties_toward_centre() {
        let rc = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let mut rb = [1.0; 7];
        rb[3] = 0.0;
        rb[4] = 0.0;
        rb[5] = 0.0;
        rb[6] = 0.0;
        // maxima at 1 and 5, both two away from s = 3
        assert_eq!(locate_edge(&rb, &rc), Ok(0.5));
    }

    /// Lumen at -1000, smooth rise to a wall at 0 centred on `edge`, smooth
    /// fall to -800 two units later.
    fn wall_profile(edge: f64, n: usize) -> Vec<f64> {
        let sig = |x: f64| 1.0 / (1.0 + (-x / 1.5).exp());
        (0..n)
            .map(|i| {
                let x = i as f64;
                -1000.0 + 1000.0 * sig(x - edge) - 800.0 * sig(x - edge - 12.0)
            })
            .collect()
    }

    #[test]
    fn ripple_maxima_are_ignored() {
        // a 2-unit bump inside the lumen sits closer to s than the wall peak
        let mut rc: Vec<f64> = (0..80)
            .map(|i| match i {
                0..30 => -1000.0,
                30..40 => -1000.0 + 100.0 * (i - 30) as f64,
                40..50 => 0.0,
                _ => -800.0,
            })
            .collect();
        rc[27] = -998.0;
        let rb: Vec<f64> = (0..80).map(|i| if i < 33 { 1.0 } else { 0.0 }).collect();
        assert_eq!(locate_edge(&rb, &rc), Ok(35.0));
    }

    proptest! {
        #[test]
        fn edge_moves_with_wall(edge in 30.0f64..60.0, delta in 0.0f64..15.0) {
            let n = 120;
            let rb_at = |e: f64| (0..n).map(|i| if (i as f64) < e { 1.0 } else { 0.0 }).collect::<Vec<_>>();
            let l0 = locate_edge(&rb_at(edge), &wall_profile(edge, n)).unwrap();
            let l1 = locate_edge(&rb_at(edge + delta), &wall_profile(edge + delta, n)).unwrap();
            prop_assert!(l1 >= l0 - 1e-9);
            prop_assert!((l1 - l0 - delta).abs() <= 1.0, "{l0} {l1} {delta}");
        }
    }
}
