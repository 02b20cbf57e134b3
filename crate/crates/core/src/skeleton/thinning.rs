//! Topology-preserving sequential thinning to a one-voxel-wide curve tree.

use std::collections::{BTreeSet, HashSet};

use super::topology::{is_simple, label_components, slot_offset};
use super::SkeletonTree;
use crate::error::{Error, Result};
use crate::volume::{Volume, VolumeKind, VoxelIndex};

/// Directional sub-iterations: up, down, north, south, east, west.
const DIRECTIONS: [[i64; 3]; 6] = [
    [0, 0, -1],
    [0, 0, 1],
    [0, -1, 0],
    [0, 1, 0],
    [1, 0, 0],
    [-1, 0, 0],
];

/// Working grid: the foreground bounding box padded by one background voxel.
struct Grid {
    dims: [usize; 3],
    offset: [usize; 3],
    fg: Vec<bool>,
}

impl Grid {
    fn from_volume(seg: &Volume) -> Option<Grid> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &v) in seg.data().iter().enumerate() {
            if v != 0.0 {
                any = true;
                let p = seg.voxel_of(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        if !any {
            return None;
        }
        // local coordinate = global - lo + 1
        let gdims = [hi[0] - lo[0] + 3, hi[1] - lo[1] + 3, hi[2] - lo[2] + 3];
        let mut fg = vec![false; gdims[0] * gdims[1] * gdims[2]];
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    if seg.get([x, y, z]) != 0.0 {
                        let l = (x - lo[0] + 1) + gdims[0] * ((y - lo[1] + 1) + gdims[1] * (z - lo[2] + 1));
                        fg[l] = true;
                    }
                }
            }
        }
        Some(Grid {
            dims: gdims,
            offset: lo,
            fg,
        })
    }

    #[inline]
    fn local(&self, v: VoxelIndex) -> Option<usize> {
        let mut l = [0usize; 3];
        for a in 0..3 {
            let c = v[a] as i64 - self.offset[a] as i64 + 1;
            if c < 1 || c as usize >= self.dims[a] - 1 {
                return None;
            }
            l[a] = c as usize;
        }
        Some(l[0] + self.dims[0] * (l[1] + self.dims[1] * l[2]))
    }

    #[inline]
    fn global(&self, i: usize) -> VoxelIndex {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [x + self.offset[0] - 1, y + self.offset[1] - 1, z + self.offset[2] - 1]
    }

    #[inline]
    fn stride(&self, o: [i64; 3]) -> i64 {
        o[0] + self.dims[0] as i64 * (o[1] + self.dims[1] as i64 * o[2])
    }

    /// 27-bit neighbourhood mask. Foreground never touches the padding
    /// shell, so every neighbour index is in range.
    #[inline]
    fn mask(&self, i: usize, strides: &[i64; 27]) -> u32 {
        let mut m = 0u32;
        for (k, &s) in strides.iter().enumerate() {
            if k != 13 && self.fg[(i as i64 + s) as usize] {
                m |= 1 << k;
            }
        }
        m
    }
}

/// Thin a binary segmentation to a curve skeleton.
///
/// Border voxels are deleted in six directional sub-iterations whenever
/// they are simple and not anchors, until a full pass deletes nothing.
/// Anchors (trachea start and distal points) are never deleted, so the
/// result is the thinnest tree joining them, plus any loops or cavity
/// shells the topology forces.
pub fn thin_to_skeleton(seg: &Volume, anchors: &[VoxelIndex]) -> Result<SkeletonTree> {
    if seg.kind() != VolumeKind::Binary {
        return Err(Error::InvalidVolume("thinning needs a binary volume".into()));
    }
    for &a in anchors {
        if !(0..3).all(|k| a[k] < seg.dims()[k]) || seg.get(a) == 0.0 {
            return Err(Error::AnchorNotForeground(a));
        }
    }
    let Some(mut grid) = Grid::from_volume(seg) else {
        return Err(Error::EmptySegmentation);
    };
    if anchors.len() > 1 {
        let (labels, _) = label_components(&grid.fg, grid.dims, true);
        let first = labels[grid.local(anchors[0]).unwrap()];
        if anchors[1..]
            .iter()
            .any(|&a| labels[grid.local(a).unwrap()] != first)
        {
            return Err(Error::AnchorsDisconnected);
        }
    }

    let strides: [i64; 27] = std::array::from_fn(|k| grid.stride(slot_offset(k)));
    let dir_strides: Vec<i64> = DIRECTIONS.iter().map(|&d| grid.stride(d)).collect();
    let anchor_set: HashSet<usize> = anchors.iter().map(|&a| grid.local(a).unwrap()).collect();
    let mut alive: Vec<usize> = (0..grid.fg.len()).filter(|&i| grid.fg[i]).collect();

    loop {
        let mut deleted_any = false;
        for &ds in &dir_strides {
            let candidates: Vec<usize> = alive
                .iter()
                .copied()
                .filter(|&i| {
                    !anchor_set.contains(&i)
                        && !grid.fg[(i as i64 + ds) as usize]
                        && is_simple(grid.mask(i, &strides))
                })
                .collect();
            // sequential re-check keeps each deletion topology-preserving
            for i in candidates {
                if is_simple(grid.mask(i, &strides)) {
                    grid.fg[i] = false;
                    deleted_any = true;
                }
            }
            alive.retain(|&i| grid.fg[i]);
        }
        if !deleted_any {
            break;
        }
    }

    let voxels: BTreeSet<VoxelIndex> = alive.iter().map(|&i| grid.global(i)).collect();
    Ok(SkeletonTree::from_voxels(seg.dims(), voxels))
}
