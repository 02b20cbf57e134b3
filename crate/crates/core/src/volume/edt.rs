//! Separable exact Euclidean distance transform (lower envelope of
//! parabolas along each axis in turn), with per-axis spacing.

use super::Volume;
use crate::exec::Execution;

const FAR: f64 = f64::INFINITY;

/// Squared-distance transform of one line. `f` holds squared distances for
/// positions `0..n`; implicit zero-cost sites sit at `-1` and `n`.
fn transform_line(f: &[f64], spacing: f64, out: &mut [f64]) {
    let n = f.len();
    // sites in padded coordinates: position p maps to index p-1
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(n + 2);
    sites.push((-spacing, 0.0));
    for (i, &v) in f.iter().enumerate() {
        if v.is_finite() {
            sites.push((i as f64 * spacing, v));
        }
    }
    sites.push((n as f64 * spacing, 0.0));

    // lower envelope
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    v.push(0);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    let intersect = |a: (f64, f64), b: (f64, f64)| -> f64 {
        ((b.1 + b.0 * b.0) - (a.1 + a.0 * a.0)) / (2.0 * (b.0 - a.0))
    };
    for q in 1..sites.len() {
        let mut s = intersect(sites[*v.last().unwrap()], sites[q]);
        while s <= z[v.len() - 1] {
            v.pop();
            z.pop();
            s = intersect(sites[*v.last().unwrap()], sites[q]);
        }
        v.push(q);
        *z.last_mut().unwrap() = s;
        z.push(f64::INFINITY);
    }

    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let x = i as f64 * spacing;
        while z[k + 1] < x {
            k += 1;
        }
        let (p, fp) = sites[v[k]];
        *o = (x - p) * (x - p) + fp;
    }
}

pub(super) fn euclidean_distance(seg: &Volume, exec: Execution) -> Vec<f64> {
    let [nx, ny, nz] = seg.dims;
    let [sx, sy, sz] = seg.spacing;
    let mut d: Vec<f64> = seg
        .data
        .iter()
        .map(|&v| if v != 0.0 { FAR } else { 0.0 })
        .collect();

    // x lines are contiguous
    exec.for_each_chunk_mut(&mut d, nx, |_, row| {
        let f = row.to_vec();
        transform_line(&f, sx, row);
    });

    // y lines: one z-slab per task
    exec.for_each_chunk_mut(&mut d, nx * ny, |_, slab| {
        let mut f = vec![0.0; ny];
        let mut out = vec![0.0; ny];
        for x in 0..nx {
            for y in 0..ny {
                f[y] = slab[x + nx * y];
            }
            transform_line(&f, sy, &mut out);
            for y in 0..ny {
                slab[x + nx * y] = out[y];
            }
        }
    });

    // z lines: gather per (x, y) column, then scatter
    let plane = nx * ny;
    let columns: Vec<Vec<f64>> = exec.map_range(plane, |xy| {
        let f: Vec<f64> = (0..nz).map(|z| d[xy + plane * z]).collect();
        let mut out = vec![0.0; nz];
        transform_line(&f, sz, &mut out);
        out
    });
    for (xy, col) in columns.into_iter().enumerate() {
        for (z, v) in col.into_iter().enumerate() {
            d[xy + plane * z] = v;
        }
    }

    for (o, &s) in d.iter_mut().zip(&seg.data) {
        *o = if s != 0.0 { o.sqrt() } else { 0.0 };
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeKind;
    use proptest::prelude::*;

    /// Exhaustive nearest-background search, with a one-voxel background
    /// shell around the grid.
    fn brute_force(seg: &Volume) -> Vec<f64> {
        let [nx, ny, nz] = seg.dims();
        let s = seg.spacing();
        let mut bg = Vec::new();
        for z in -1..=nz as i64 {
            for y in -1..=ny as i64 {
                for x in -1..=nx as i64 {
                    let inside = x >= 0 && y >= 0 && z >= 0 && (x as usize) < nx && (y as usize) < ny && (z as usize) < nz;
                    if !inside || seg.get([x as usize, y as usize, z as usize]) == 0.0 {
                        bg.push([x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]]);
                    }
                }
            }
        }
        (0..seg.len())
            .map(|i| {
                if seg.data()[i] == 0.0 {
                    return 0.0;
                }
                let v = seg.voxel_of(i);
                let p = [v[0] as f64 * s[0], v[1] as f64 * s[1], v[2] as f64 * s[2]];
                bg.iter()
                    .map(|b| ((p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2) + (p[2] - b[2]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn single_voxel_is_one_face_away() {
        let mut data = vec![0.0; 27];
        data[13] = 1.0;
        let seg = Volume::new([3, 3, 3], [1.0; 3], [0.0; 3], data, VolumeKind::Binary).unwrap();
        let d = seg.distance_transform(Execution::Sequential).unwrap();
        assert_eq!(d.get([1, 1, 1]), 1.0);
        assert_eq!(d.data().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn full_block_matches_brute_force() {
        let seg = Volume::filled([5, 5, 5], [1.0; 3], [0.0; 3], 1.0, VolumeKind::Binary).unwrap();
        let d = seg.distance_transform(Execution::Parallel).unwrap();
        assert_eq!(d.get([2, 2, 2]), 3.0);
        assert_eq!(d.data(), &brute_force(&seg)[..]);
    }

    #[test]
    fn anisotropic_matches_brute_force() {
        let dims = [9, 8, 7];
        let mut data = vec![0.0; 9 * 8 * 7];
        let seg0 = Volume::filled(dims, [0.625, 0.625, 1.0], [0.0; 3], 0.0, VolumeKind::Binary).unwrap();
        for (i, v) in data.iter_mut().enumerate() {
            let [x, y, z] = seg0.voxel_of(i);
            let r2 = (x as f64 - 4.0).powi(2) * 0.39 + (y as f64 - 3.5).powi(2) * 0.39 + (z as f64 - 3.0).powi(2);
            *v = if r2 < 7.0 { 1.0 } else { 0.0 };
        }
        let seg = Volume::new(dims, [0.625, 0.625, 1.0], [0.0; 3], data, VolumeKind::Binary).unwrap();
        let d = seg.distance_transform(Execution::Sequential).unwrap();
        for (a, b) in d.data().iter().zip(brute_force(&seg)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn all_background_is_an_error() {
        let seg = Volume::filled([3, 3, 3], [1.0; 3], [0.0; 3], 0.0, VolumeKind::Binary).unwrap();
        assert!(seg.distance_transform(Execution::Sequential).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_volumes_match_brute_force(
            nx in 1usize..=16, ny in 1usize..=16, nz in 1usize..=16,
            seed in any::<u64>(),
            sp in (0.3f64..2.0, 0.3f64..2.0, 0.3f64..2.0),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = nx * ny * nz;
            let density: f64 = rng.random_range(0.3..0.95);
            let mut data: Vec<f64> = (0..n).map(|_| if rng.random_bool(density) { 1.0 } else { 0.0 }).collect();
            data[0] = 1.0;
            let seg = Volume::new([nx, ny, nz], [sp.0, sp.1, sp.2], [0.0; 3], data, VolumeKind::Binary).unwrap();
            let d = seg.distance_transform(Execution::Parallel).unwrap();
            for (a, b) in d.data().iter().zip(brute_force(&seg)) {
                prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
            }
        }
    }
}
