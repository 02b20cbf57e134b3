use crate::error::{Error, Result};
use crate::volume::{Volume, VoxelIndex};

/// Locate the centreline start on the trachea from a distance map.
///
/// Starting at the first axial slice holding foreground, step down while
/// the next slice's maximum distance is strictly larger, then return the
/// arg-max voxel of the stopping slice (lowest linear index on ties).
pub fn find_trachea_start(d: &Volume) -> Result<VoxelIndex> {
    let [nx, ny, nz] = d.dims();
    let slice = nx * ny;
    let data = d.data();
    let slice_max = |z: usize| {
        data[z * slice..(z + 1) * slice]
            .iter()
            .copied()
            .fold(0.0f64, f64::max)
    };
    let mut z = (0..nz)
        .find(|&z| slice_max(z) > 0.0)
        .ok_or(Error::EmptySegmentation)?;
    while z + 1 < nz && slice_max(z) < slice_max(z + 1) {
        z += 1;
    }
    let m = slice_max(z);
    let maxima: Vec<usize> = (0..slice)
        .filter(|&i| data[z * slice + i] == m)
        .collect();
    if maxima.len() > 1 && !in_plane_connected(&maxima, nx) {
        log::warn!(
            "slice {z} has {} disconnected distance maxima; taking the lowest index",
            maxima.len()
        );
    }
    let i = maxima[0];
    Ok([i % nx, i / nx, z])
}

fn in_plane_connected(idx: &[usize], nx: usize) -> bool {
    let pts: Vec<(i64, i64)> = idx.iter().map(|&i| ((i % nx) as i64, (i / nx) as i64)).collect();
    let mut seen = vec![false; pts.len()];
    seen[0] = true;
    let mut stack = vec![0];
    while let Some(a) = stack.pop() {
        for b in 0..pts.len() {
            if !seen[b] && (pts[a].0 - pts[b].0).abs() <= 1 && (pts[a].1 - pts[b].1).abs() <= 1 {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen.iter().all(|&s| s)
}
