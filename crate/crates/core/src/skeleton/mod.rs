//! Centreline tree extraction: trachea start, thinning, per-airway paths.

mod paths;
mod thinning;
pub(crate) mod topology;
mod trachea;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::volume::VoxelIndex;

pub use paths::{extract_paths, SNAP_RADIUS_VOXELS};
pub use thinning::thin_to_skeleton;
pub use topology::label_components;
pub use trachea::find_trachea_start;

/// Neighbour offsets in lexicographic (dz, dy, dx) order.
pub(crate) const NEIGHBOURS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// A one-voxel-wide skeleton.
#[derive(Debug, Clone)]
pub struct SkeletonTree {
    dims: [usize; 3],
    voxels: BTreeSet<VoxelIndex>,
    endpoints: Vec<VoxelIndex>,
    branch_points: Vec<VoxelIndex>,
}

impl SkeletonTree {
    /// Build from a voxel set, classifying endpoints (one neighbour) and
    /// branch points (three or more neighbours).
    pub fn from_voxels(dims: [usize; 3], voxels: impl IntoIterator<Item = VoxelIndex>) -> Self {
        let mut tree = SkeletonTree {
            dims,
            voxels: voxels.into_iter().collect(),
            endpoints: Vec::new(),
            branch_points: Vec::new(),
        };
        let mut endpoints = Vec::new();
        let mut branch_points = Vec::new();
        for &v in &tree.voxels {
            match tree.neighbours(v).len() {
                1 => endpoints.push(v),
                n if n >= 3 => branch_points.push(v),
                _ => {}
            }
        }
        tree.endpoints = endpoints;
        tree.branch_points = branch_points;
        tree
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn voxels(&self) -> &BTreeSet<VoxelIndex> {
        &self.voxels
    }
    pub fn endpoints(&self) -> &[VoxelIndex] {
        &self.endpoints
    }
    pub fn branch_points(&self) -> &[VoxelIndex] {
        &self.branch_points
    }
    pub fn contains(&self, v: VoxelIndex) -> bool {
        self.voxels.contains(&v)
    }
    pub fn len(&self) -> usize {
        self.voxels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Skeleton neighbours of `v` in (dz, dy, dx) order.
    pub fn neighbours(&self, v: VoxelIndex) -> Vec<VoxelIndex> {
        NEIGHBOURS_26
            .iter()
            .filter_map(|o| {
                let q = [v[0] as i64 + o[0], v[1] as i64 + o[1], v[2] as i64 + o[2]];
                if q.iter().any(|&c| c < 0) {
                    return None;
                }
                let q = [q[0] as usize, q[1] as usize, q[2] as usize];
                self.voxels.contains(&q).then_some(q)
            })
            .collect()
    }

    /// Whether the skeleton is a single 26-connected component.
    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.voxels.iter().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for n in self.neighbours(v) {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == self.voxels.len()
    }
}

/// One airway's discrete centreline, carina first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelPath {
    pub voxels: Vec<VoxelIndex>,
    /// False when no branch point was found and the path starts at the
    /// trachea start instead of the carina.
    pub starts_at_carina: bool,
}

impl VoxelPath {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}
