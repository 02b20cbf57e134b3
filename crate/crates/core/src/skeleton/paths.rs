use std::collections::{HashMap, VecDeque};

use super::{SkeletonTree, VoxelPath};
use crate::error::{Error, Result};
use crate::volume::VoxelIndex;

/// Distal points further than this (voxel units) from the skeleton are rejected.
pub const SNAP_RADIUS_VOXELS: f64 = 2.0;

fn snap(tree: &SkeletonTree, v: VoxelIndex) -> Result<VoxelIndex> {
    if tree.contains(v) {
        return Ok(v);
    }
    let r = SNAP_RADIUS_VOXELS as i64;
    let mut best: Option<(i64, [usize; 3])> = None;
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let q = [v[0] as i64 + dx, v[1] as i64 + dy, v[2] as i64 + dz];
                if q.iter().any(|&c| c < 0) {
                    continue;
                }
                let q = [q[0] as usize, q[1] as usize, q[2] as usize];
                let d2 = dx * dx + dy * dy + dz * dz;
                if d2 as f64 > SNAP_RADIUS_VOXELS * SNAP_RADIUS_VOXELS || !tree.contains(q) {
                    continue;
                }
                // ties: lowest linear (z, y, x) order, which this loop visits first
                if best.is_none_or(|(bd, _)| d2 < bd) {
                    best = Some((d2, q));
                }
            }
        }
    }
    match best {
        Some((_, q)) => {
            log::debug!("snapped {v:?} to skeleton voxel {q:?}");
            Ok(q)
        }
        None => Err(Error::NotOnSkeleton(v)),
    }
}

/// Split a skeleton into one path per distal point.
///
/// A breadth-first search from the trachea start fixes a unique tree path
/// to every distal point. The carina is where those paths first diverge;
/// every path is cut to start there (the carina is element 0). Skeleton
/// voxels on no path (false branches, trachea) are dropped. With fewer than
/// two diverging paths there is no carina and paths run from the trachea
/// start, with a warning.
pub fn extract_paths(
    tree: &SkeletonTree,
    trachea_start: VoxelIndex,
    distal_points: &[VoxelIndex],
) -> Result<Vec<VoxelPath>> {
    let start = snap(tree, trachea_start)?;
    let distal: Vec<VoxelIndex> = distal_points
        .iter()
        .map(|&d| snap(tree, d))
        .collect::<Result<_>>()?;

    let mut parent: HashMap<VoxelIndex, VoxelIndex> = HashMap::new();
    parent.insert(start, start);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for n in tree.neighbours(v) {
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(n) {
                e.insert(v);
                queue.push_back(n);
            }
        }
    }

    let mut full: Vec<Vec<VoxelIndex>> = Vec::with_capacity(distal.len());
    for &d in &distal {
        if !parent.contains_key(&d) {
            return Err(Error::SkeletonDisconnected);
        }
        let mut path = vec![d];
        let mut v = d;
        while v != start {
            v = parent[&v];
            path.push(v);
        }
        path.reverse();
        full.push(path);
    }

    let carina = divergence_index(&full);
    if carina.is_none() && full.len() > 1 {
        log::warn!("no branch point between trachea start and distal points; paths start at the trachea");
    }
    Ok(full
        .into_iter()
        .map(|p| match carina {
            Some(c) => VoxelPath {
                voxels: p[c..].to_vec(),
                starts_at_carina: true,
            },
            None => VoxelPath {
                voxels: p,
                starts_at_carina: false,
            },
        })
        .collect())
}

/// Index of the last shared voxel when at least two paths continue along
/// different voxels after it.
fn divergence_index(paths: &[Vec<VoxelIndex>]) -> Option<usize> {
    if paths.len() < 2 {
        return None;
    }
    let shortest = paths.iter().map(Vec::len).min()?;
    let mut common = 0;
    while common < shortest && paths.iter().all(|p| p[common] == paths[0][common]) {
        common += 1;
    }
    // paths that continue past the common prefix must disagree on the next voxel
    let mut nexts = paths.iter().filter_map(|p| p.get(common));
    let first = nexts.next()?;
    if common == 0 || nexts.all(|n| n == first) {
        return None;
    }
    Some(common - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Y: stem up the z axis, two arms splaying in x.
    fn y_tree(spur: bool) -> (SkeletonTree, VoxelIndex, [VoxelIndex; 2]) {
        let mut v: Vec<VoxelIndex> = (0..6).map(|z| [10, 5, z]).collect();
        for k in 1..6 {
            v.push([10 - k, 5, 5 + k]);
            v.push([10 + k, 5, 5 + k]);
        }
        if spur {
            // three voxels off the stem, pointing in +y
            v.extend([[10, 6, 2], [10, 7, 2], [10, 8, 2]]);
        }
        (SkeletonTree::from_voxels([21, 11, 12], v), [10, 5, 0], [[5, 5, 10], [15, 5, 10]])
    }

    #[test]
    fn y_paths_start_at_branch_and_share_nothing_else() {
        let (tree, start, tips) = y_tree(false);
        let paths = extract_paths(&tree, start, &tips).unwrap();
        assert_eq!(paths.len(), 2);
        for p in &paths {
            assert_eq!(p.voxels[0], [10, 5, 5]);
            assert!(p.starts_at_carina);
        }
        let a: HashSet<_> = paths[0].voxels[1..].iter().collect();
        assert!(paths[1].voxels[1..].iter().all(|v| !a.contains(v)));
        assert_eq!(paths[0].voxels.last(), Some(&tips[0]));
    }

    #[test]
    fn spur_is_dropped() {
        let (tree, start, tips) = y_tree(true);
        assert_eq!(tree.endpoints().len(), 4);
        let paths = extract_paths(&tree, start, &tips).unwrap();
        for p in &paths {
            assert!(!p.voxels.iter().any(|v| v[1] > 5));
        }
        assert_eq!(paths[0].len(), 6);
        assert_eq!(paths[1].len(), 6);
    }

    #[test]
    fn snapping_and_errors() {
        let (tree, start, _) = y_tree(false);
        // one voxel off the left tip
        let paths = extract_paths(&tree, start, &[[5, 6, 10], [15, 5, 11]]).unwrap();
        assert_eq!(paths[0].voxels.last(), Some(&[5, 5, 10]));
        assert!(matches!(
            extract_paths(&tree, start, &[[5, 5, 14]]),
            Err(Error::NotOnSkeleton(_))
        ));
        let mut voxels: Vec<VoxelIndex> = tree.voxels().iter().copied().collect();
        voxels.extend([[0, 0, 0], [1, 0, 0]]);
        let tree2 = SkeletonTree::from_voxels(tree.dims(), voxels);
        assert!(matches!(
            extract_paths(&tree2, start, &[[0, 0, 0]]),
            Err(Error::SkeletonDisconnected)
        ));
    }

    #[test]
    fn single_distal_point_is_degenerate() {
        let (tree, start, tips) = y_tree(false);
        let paths = extract_paths(&tree, start, &tips[..1]).unwrap();
        assert!(!paths[0].starts_at_carina);
        assert_eq!(paths[0].voxels[0], start);
    }
}
