#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use airtaper::skeleton::{extract_paths, label_components, thin_to_skeleton, SkeletonTree};
use airtaper::volume::{Volume, VolumeKind, VoxelIndex};
use rand::Rng;

pub fn binary(dims: [usize; 3], fg: &[bool]) -> Volume {
    let data = fg.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Volume::new(dims, [1.0; 3], [0.0; 3], data, VolumeKind::Binary).unwrap()
}

/// Random blobs, shells and speckle in a box of at most `max`³ voxels.
pub fn random_volume<R: Rng>(rng: &mut R, max: usize) -> (Vec<bool>, [usize; 3]) {
    let dims = [rng.random_range(4..=max), rng.random_range(4..=max), rng.random_range(4..=max)];
    let n = dims[0] * dims[1] * dims[2];
    let mut fg = vec![false; n];
    let at = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let centre = |rng: &mut R| [0, 1, 2].map(|k| rng.random_range(0.0..dims[k] as f64));
    for _ in 0..rng.random_range(1..5) {
        let c = centre(rng);
        let r_out: f64 = rng.random_range(1.5..6.0);
        // a hollow shell sometimes, to make cavities
        let r_in = if rng.random_bool(0.4) { r_out - rng.random_range(1.0..2.0) } else { -1.0 };
        let slab = rng.random_bool(0.3);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let d = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
                    let r = if slab {
                        d[0].abs().max(d[1].abs()).max(d[2].abs())
                    } else {
                        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
                    };
                    if r <= r_out && r > r_in {
                        fg[at(x, y, z)] = true;
                    }
                }
            }
        }
    }
    let flip = rng.random_range(0.0..0.04);
    for v in fg.iter_mut() {
        if rng.random_bool(flip) {
            *v = !*v;
        }
    }
    (fg, dims)
}

/// 26-connected foreground components and 6-connected background
/// components, with the space outside the box counted as background.
pub fn topology_counts(fg: &[bool], dims: [usize; 3]) -> (u32, u32) {
    let (_, n_fg) = label_components(fg, dims, true);
    let pd = [dims[0] + 2, dims[1] + 2, dims[2] + 2];
    let mut bg = vec![true; pd[0] * pd[1] * pd[2]];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                bg[(x + 1) + pd[0] * ((y + 1) + pd[1] * (z + 1))] = !fg[x + dims[0] * (y + dims[1] * z)];
            }
        }
    }
    let (_, n_bg) = label_components(&bg, pd, false);
    (n_fg, n_bg)
}

/// Thin and compare topology before and after; returns a description of
/// the first violation.
pub fn check_thinning(fg: &[bool], dims: [usize; 3]) -> Result<(), String> {
    let before = topology_counts(fg, dims);
    if before.0 == 0 {
        return Ok(());
    }
    let tree = thin_to_skeleton(&binary(dims, fg), &[]).map_err(|e| e.to_string())?;
    let mut out = vec![false; fg.len()];
    for v in tree.voxels() {
        let i = v[0] + dims[0] * (v[1] + dims[1] * v[2]);
        if !fg[i] {
            return Err(format!("skeleton voxel {v:?} outside the input"));
        }
        out[i] = true;
    }
    let after = topology_counts(&out, dims);
    if before != after {
        return Err(format!("(components, background components) {before:?} -> {after:?}"));
    }
    Ok(())
}

const OFFSETS: [[i64; 3]; 26] = {
    let mut o = [[0i64; 3]; 26];
    let mut k = 0;
    let mut i = 0;
    while i < 27 {
        if i != 13 {
            o[k] = [(i % 3) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i / 9) as i64 - 1];
            k += 1;
        }
        i += 1;
    }
    o
};

fn nbrs(v: VoxelIndex, dims: [usize; 3]) -> impl Iterator<Item = VoxelIndex> {
    OFFSETS.iter().filter_map(move |o| {
        let q = [v[0] as i64 + o[0], v[1] as i64 + o[1], v[2] as i64 + o[2]];
        (0..3)
            .all(|k| q[k] >= 0 && (q[k] as usize) < dims[k])
            .then(|| [q[0] as usize, q[1] as usize, q[2] as usize])
    })
}

/// A random voxel tree that is acyclic under 26-adjacency: every voxel
/// added touches exactly one voxel already in the tree.
pub fn random_tree<R: Rng>(rng: &mut R, dims: [usize; 3], target: usize) -> (Vec<VoxelIndex>, VoxelIndex) {
    let root = [dims[0] / 2, dims[1] / 2, 0];
    let mut set: HashSet<VoxelIndex> = HashSet::from([root]);
    let mut order = vec![root];
    let mut tips = vec![root];
    let mut tries = 0;
    while order.len() < target && tries < 200 * target {
        tries += 1;
        // mostly extend a recent tip, sometimes sprout from anywhere
        let from = if rng.random_bool(0.85) && !tips.is_empty() {
            tips[rng.random_range(0..tips.len())]
        } else {
            order[rng.random_range(0..order.len())]
        };
        let cand: Vec<VoxelIndex> = nbrs(from, dims)
            .filter(|&q| !set.contains(&q) && nbrs(q, dims).filter(|n| set.contains(n)).count() == 1)
            // the root stays a leaf
            .filter(|_| from != root || order.len() == 1)
            .collect();
        if cand.is_empty() {
            tips.retain(|&t| t != from);
            continue;
        }
        let q = cand[rng.random_range(0..cand.len())];
        set.insert(q);
        order.push(q);
        tips.retain(|&t| t != from);
        tips.push(q);
    }
    (order, root)
}

/// Hop distances from `src` over the tree, by plain BFS on the voxel set.
fn hops(set: &HashSet<VoxelIndex>, dims: [usize; 3], src: VoxelIndex) -> HashMap<VoxelIndex, usize> {
    let mut d = HashMap::from([(src, 0)]);
    let mut q = VecDeque::from([src]);
    while let Some(v) = q.pop_front() {
        for n in nbrs(v, dims) {
            if set.contains(&n) && !d.contains_key(&n) {
                d.insert(n, d[&v] + 1);
                q.push_back(n);
            }
        }
    }
    d
}

/// Extract paths to up to `n_marked` random leaves of a random tree and
/// check them against independent searches. Unmarked leaves are spurs.
pub fn check_random_tree<R: Rng>(rng: &mut R, n_marked: usize) -> Result<usize, String> {
    let dims = [40, 40, 40];
    let (voxels, root) = random_tree(rng, dims, 1500);
    let set: HashSet<VoxelIndex> = voxels.iter().copied().collect();
    let tree = SkeletonTree::from_voxels(dims, voxels.iter().copied());
    let mut leaves: Vec<VoxelIndex> = tree.endpoints().iter().copied().filter(|&v| v != root).collect();
    if leaves.len() < 2 {
        return Err("tree has too few leaves".into());
    }
    // random subset, kept in a random order
    for i in (1..leaves.len()).rev() {
        leaves.swap(i, rng.random_range(0..=i));
    }
    leaves.truncate(n_marked);
    let paths = extract_paths(&tree, root, &leaves).map_err(|e| e.to_string())?;
    if paths.len() != leaves.len() {
        return Err(format!("{} paths for {} distal points", paths.len(), leaves.len()));
    }

    // the unique route from the root to each leaf, from distances
    let from_root = hops(&set, dims, root);
    let route = |leaf: VoxelIndex| {
        let mut r = vec![leaf];
        let mut v = leaf;
        while v != root {
            v = nbrs(v, dims)
                .find(|n| set.contains(n) && from_root.get(n) == Some(&(from_root[&v] - 1)))
                .expect("tree is connected");
            r.push(v);
        }
        r.reverse();
        r
    };
    let routes: Vec<Vec<VoxelIndex>> = leaves.iter().map(|&l| route(l)).collect();
    let common = (0..)
        .take_while(|&i| routes.iter().all(|r| i < r.len() && r[i] == routes[0][i]))
        .count();
    let carina = routes[0][common - 1];
    let on_some_route: HashSet<VoxelIndex> = routes.iter().flatten().copied().collect();

    for ((p, leaf), r) in paths.iter().zip(&leaves).zip(&routes) {
        let v = &p.voxels;
        if v.first() != Some(&carina) || v.last() != Some(leaf) {
            return Err(format!("path to {leaf:?} runs {:?} .. {:?}", v.first(), v.last()));
        }
        let uniq: HashSet<_> = v.iter().collect();
        if uniq.len() != v.len() {
            return Err("path repeats a voxel".into());
        }
        for w in v.windows(2) {
            if (0..3).any(|k| w[0][k].abs_diff(w[1][k]) > 1) {
                return Err("path is not 26-connected".into());
            }
        }
        if v.iter().any(|x| !on_some_route.contains(x)) {
            return Err("path enters a spur".into());
        }
        // shortest in the tree, by a search from the carina
        let from_carina = hops(&set, dims, carina);
        if v.len() != from_carina[leaf] + 1 || v[..] != r[common - 1..] {
            return Err(format!("path to {leaf:?} is not the tree path"));
        }
    }
    Ok(leaves.len())
}
