//! Partial-volume rasterization of signed-distance bodies.

use nalgebra::{Point3, Vector3};

use super::shape::Body;
use crate::exec::Execution;

type P3 = Point3<f64>;

/// Deepest recursive split of a supersampling cell.
const MAX_DEPTH: u32 = 3;
/// Allowed departure of the distance field from its tangent plane over a
/// cell, relative to the cell's shortest side, before the cell is split.
const LINEAR_TOL: f64 = 0.02;
/// Bound on the gradient magnitude of the distance-like fields used here.
const LIPSCHITZ: f64 = 1.5;
const GRAD_STEP: f64 = 1e-4;

/// Fraction of the box `[0, l]` (over the axes listed in `active`) lying in
/// `{ y : m·y < d }`, with every active `m_i > 0`.
fn corner_volume(m: [f64; 3], l: [f64; 3], d: f64, active: &[usize]) -> f64 {
    let k = active.len() as i32;
    if k == 0 {
        return if d > 0.0 { 1.0 } else { 0.0 };
    }
    let mut acc = 0.0;
    for mask in 0u32..(1 << k) {
        let mut t = d;
        let mut sign = 1.0;
        for (bit, &i) in active.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                t -= m[i] * l[i];
                sign = -sign;
            }
        }
        if t > 0.0 {
            acc += sign * t.powi(k);
        }
    }
    let mut denom = [1.0, 1.0, 2.0, 6.0][k as usize];
    for &i in active {
        denom *= m[i] * l[i];
    }
    acc / denom
}

/// Fraction of the box `c ± h` where the linear field `v + g·(x − c)` is negative.
pub(crate) fn plane_box_fraction(g: [f64; 3], v: f64, h: [f64; 3]) -> f64 {
    let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    let l = [2.0 * h[0], 2.0 * h[1], 2.0 * h[2]];
    // shift to the box corner and flip axes so every slope is non-negative;
    // axes with negligible slope are evaluated at their midpoint
    let mut d = -v;
    let mut m = [0.0; 3];
    let mut active = Vec::with_capacity(3);
    for i in 0..3 {
        let a = g[i].abs();
        if a > 1e-5 * gn {
            d += a * h[i];
            m[i] = a;
            active.push(i);
        }
    }
    corner_volume(m, l, d, &active).clamp(0.0, 1.0)
}

/// Fraction of the box `c ± h` where `f < 0`.
pub(crate) fn cell_fraction<F: Fn(&P3) -> f64>(f: &F, c: P3, h: [f64; 3], depth: u32) -> f64 {
    let v = f(&c);
    let rdiag = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
    if v >= LIPSCHITZ * rdiag {
        return 0.0;
    }
    if v <= -LIPSCHITZ * rdiag {
        return 1.0;
    }
    let mut g = [0.0; 3];
    for (a, ga) in g.iter_mut().enumerate() {
        let mut e = Vector3::zeros();
        e[a] = GRAD_STEP;
        *ga = (f(&(c + e)) - f(&(c - e))) / (2.0 * GRAD_STEP);
    }
    if depth < MAX_DEPTH {
        let tol = LINEAR_TOL * 2.0 * h[0].min(h[1]).min(h[2]);
        let mut split = false;
        for corner in 0..8 {
            let o = Vector3::new(
                if corner & 1 != 0 { h[0] } else { -h[0] },
                if corner & 2 != 0 { h[1] } else { -h[1] },
                if corner & 4 != 0 { h[2] } else { -h[2] },
            );
            let lin = v + g[0] * o.x + g[1] * o.y + g[2] * o.z;
            if (f(&(c + o)) - lin).abs() > tol {
                split = true;
                break;
            }
        }
        if split {
            let hh = [0.5 * h[0], 0.5 * h[1], 0.5 * h[2]];
            let mut acc = 0.0;
            for corner in 0..8 {
                let o = Vector3::new(
                    if corner & 1 != 0 { hh[0] } else { -hh[0] },
                    if corner & 2 != 0 { hh[1] } else { -hh[1] },
                    if corner & 4 != 0 { hh[2] } else { -hh[2] },
                );
                acc += cell_fraction(f, c + o, hh, depth + 1);
            }
            return acc / 8.0;
        }
    }
    plane_box_fraction(g, v, h)
}

/// Lumen and outer-surface fill fractions of one voxel, averaged over an
/// `n`×`n`×`n` grid of sub-cells.
fn voxel_fractions(body: &Body, c: P3, spacing: [f64; 3], n: usize) -> (f64, f64) {
    let half = [0.5 * spacing[0], 0.5 * spacing[1], 0.5 * spacing[2]];
    let r = (half[0] * half[0] + half[1] * half[1] + half[2] * half[2]).sqrt() * LIPSCHITZ;
    let fo = body.outer_sdf(&c);
    if fo >= r {
        return (0.0, 0.0);
    }
    let fl = body.lumen_sdf(&c);
    if fl <= -r {
        return (1.0, 1.0);
    }
    let lumen_out = fl >= r;
    let outer_in = fo <= -r;
    let h = [half[0] / n as f64, half[1] / n as f64, half[2] / n as f64];
    let mut acc_l = 0.0;
    let mut acc_o = 0.0;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let sc = P3::new(
                    c.x - half[0] + (2 * i + 1) as f64 * h[0],
                    c.y - half[1] + (2 * j + 1) as f64 * h[1],
                    c.z - half[2] + (2 * k + 1) as f64 * h[2],
                );
                if !lumen_out {
                    acc_l += cell_fraction(&|p: &P3| body.lumen_sdf(p), sc, h, 0);
                }
                acc_o += if outer_in {
                    1.0
                } else {
                    cell_fraction(&|p: &P3| body.outer_sdf(p), sc, h, 0)
                };
            }
        }
    }
    let m = (n * n * n) as f64;
    let fl = acc_l / m;
    (fl, (acc_o / m).max(fl))
}

/// Fill fractions of one body over the voxel box `lo..hi` (inclusive lower,
/// exclusive upper), x-fastest.
pub(crate) struct BodyRaster {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub lumen: Vec<f64>,
    pub outer: Vec<f64>,
}

pub(crate) fn rasterize_body(
    body: &Body,
    lo: [usize; 3],
    hi: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    supersample: usize,
    exec: Execution,
) -> BodyRaster {
    let nx = hi[0] - lo[0];
    let ny = hi[1] - lo[1];
    let nz = hi[2] - lo[2];
    let slices = exec.map_range(nz, |dz| {
        let z = (lo[2] + dz) as f64 * spacing[2] + origin[2];
        let mut out = Vec::with_capacity(nx * ny);
        for dy in 0..ny {
            let y = (lo[1] + dy) as f64 * spacing[1] + origin[1];
            for dx in 0..nx {
                let x = (lo[0] + dx) as f64 * spacing[0] + origin[0];
                out.push(voxel_fractions(body, P3::new(x, y, z), spacing, supersample));
            }
        }
        out
    });
    let mut lumen = Vec::with_capacity(nx * ny * nz);
    let mut outer = Vec::with_capacity(nx * ny * nz);
    for s in slices {
        for (l, o) in s {
            lumen.push(l);
            outer.push(o);
        }
    }
    BodyRaster { lo, hi, lumen, outer }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Monte-Carlo-free oracle: fine midpoint grid over the box.
    fn grid_fraction(g: [f64; 3], v: f64, h: [f64; 3]) -> f64 {
        let n = 200;
        let mut inside = 0usize;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let o = [
                        -h[0] + (2 * i + 1) as f64 * h[0] / n as f64,
                        -h[1] + (2 * j + 1) as f64 * h[1] / n as f64,
                        -h[2] + (2 * k + 1) as f64 * h[2] / n as f64,
                    ];
                    if v + g[0] * o[0] + g[1] * o[1] + g[2] * o[2] < 0.0 {
                        inside += 1;
                    }
                }
            }
        }
        inside as f64 / (n * n * n) as f64
    }

    #[test]
    fn axis_aligned_plane_is_exact() {
        // plane x = 0.25 in a unit-half-width box: inside fraction 0.625
        let f = plane_box_fraction([1.0, 0.0, 0.0], -0.25, [1.0, 1.0, 1.0]);
        assert!((f - 0.625).abs() < 1e-12, "{f}");
        // diagonal plane through the centre halves the box
        let f = plane_box_fraction([1.0, 1.0, 0.0], 0.0, [0.5, 0.2, 0.3]);
        assert!((f - 0.5).abs() < 1e-12, "{f}");
        assert_eq!(plane_box_fraction([0.0, 0.0, 0.0], -1.0, [1.0; 3]), 1.0);
    }

    #[test]
    fn ball_volume_from_cells() {
        let r = 1.0;
        let f = |p: &P3| p.coords.norm() - r;
        let h = 0.1;
        let mut vol = 0.0;
        for k in -12..12 {
            for j in -12..12 {
                for i in -12..12 {
                    let c = P3::new(
                        (2 * i + 1) as f64 * h,
                        (2 * j + 1) as f64 * h,
                        (2 * k + 1) as f64 * h,
                    );
                    vol += cell_fraction(&f, c, [h; 3], 0) * (2.0 * h).powi(3);
                }
            }
        }
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((vol - exact).abs() / exact < 1e-3, "{vol}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn plane_fraction_matches_grid(
            gx in -1.0f64..1.0, gy in -1.0f64..1.0, gz in -1.0f64..1.0,
            v in -0.6f64..0.6,
            hx in 0.1f64..0.5, hy in 0.1f64..0.5, hz in 0.1f64..0.5,
        ) {
            let g = [gx, gy, gz];
            let h = [hx, hy, hz];
            let a = plane_box_fraction(g, v, h);
            let b = grid_fraction(g, v, h);
            prop_assert!((a - b).abs() < 0.01, "{a} {b}");
        }
    }
}
