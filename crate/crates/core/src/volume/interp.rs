use serde::{Deserialize, Serialize};

use super::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Trilinear,
    /// Separable Catmull–Rom over a 4×4×4 neighbourhood.
    #[default]
    Tricubic,
}

/// Catmull–Rom weights for taps at offsets -1, 0, 1, 2 given fraction `t`.
#[inline]
pub(crate) fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Interpolate at continuous voxel coordinates; out-of-range coordinates
/// clamp to the edge.
pub(crate) fn interpolate(v: &Volume, c: [f64; 3], method: Interpolation) -> f64 {
    let [nx, ny, nz] = v.dims;
    let c = [
        c[0].clamp(0.0, (nx - 1) as f64),
        c[1].clamp(0.0, (ny - 1) as f64),
        c[2].clamp(0.0, (nz - 1) as f64),
    ];
    let data = &v.data;
    let at = |x: usize, y: usize, z: usize| data[x + nx * (y + ny * z)];
    match method {
        Interpolation::Nearest => at(
            c[0].round() as usize,
            c[1].round() as usize,
            c[2].round() as usize,
        ),
        Interpolation::Trilinear => {
            let base = [c[0].floor(), c[1].floor(), c[2].floor()];
            let f = [c[0] - base[0], c[1] - base[1], c[2] - base[2]];
            let i0 = [base[0] as i64, base[1] as i64, base[2] as i64];
            let xs = [clamp_index(i0[0], nx), clamp_index(i0[0] + 1, nx)];
            let ys = [clamp_index(i0[1], ny), clamp_index(i0[1] + 1, ny)];
            let zs = [clamp_index(i0[2], nz), clamp_index(i0[2] + 1, nz)];
            let wx = [1.0 - f[0], f[0]];
            let wy = [1.0 - f[1], f[1]];
            let wz = [1.0 - f[2], f[2]];
            let mut acc = 0.0;
            for (kz, &z) in zs.iter().enumerate() {
                for (ky, &y) in ys.iter().enumerate() {
                    let w = wz[kz] * wy[ky];
                    if w == 0.0 {
                        continue;
                    }
                    acc += w * (wx[0] * at(xs[0], y, z) + wx[1] * at(xs[1], y, z));
                }
            }
            acc
        }
        Interpolation::Tricubic => {
            let base = [c[0].floor(), c[1].floor(), c[2].floor()];
            let i0 = [base[0] as i64, base[1] as i64, base[2] as i64];
            let wx = catmull_rom_weights(c[0] - base[0]);
            let wy = catmull_rom_weights(c[1] - base[1]);
            let wz = catmull_rom_weights(c[2] - base[2]);
            let xs: [usize; 4] = std::array::from_fn(|k| clamp_index(i0[0] + k as i64 - 1, nx));
            let ys: [usize; 4] = std::array::from_fn(|k| clamp_index(i0[1] + k as i64 - 1, ny));
            let mut acc = 0.0;
            for kz in 0..4 {
                if wz[kz] == 0.0 {
                    continue;
                }
                let z = clamp_index(i0[2] + kz as i64 - 1, nz);
                let mut plane = 0.0;
                for ky in 0..4 {
                    if wy[ky] == 0.0 {
                        continue;
                    }
                    let row = nx * (ys[ky] + ny * z);
                    let line = wx[0] * data[row + xs[0]]
                        + wx[1] * data[row + xs[1]]
                        + wx[2] * data[row + xs[2]]
                        + wx[3] * data[row + xs[3]];
                    plane += wy[ky] * line;
                }
                acc += wz[kz] * plane;
            }
            acc
        }
    }
}
