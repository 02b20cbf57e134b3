//! Local 3×3×3 topology: simple-point test for (26, 6) digital topology
//! and connected-component labelling.

use std::collections::VecDeque;
use std::sync::OnceLock;

/// Offset of neighbourhood slot `k` (0..27, x fastest); slot 13 is the centre.
#[inline]
pub(crate) fn slot_offset(k: usize) -> [i64; 3] {
    [(k % 3) as i64 - 1, ((k / 3) % 3) as i64 - 1, (k / 9) as i64 - 1]
}

fn chebyshev(a: [i64; 3], b: [i64; 3]) -> i64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).max().unwrap()
}

fn manhattan(a: [i64; 3]) -> i64 {
    a.iter().map(|c| c.abs()).sum()
}

struct Tables {
    /// 26-adjacency between the 26 non-centre slots.
    adj26: Vec<Vec<usize>>,
    /// 6-adjacency between the 18-neighbourhood slots (non-centre).
    adj6: Vec<Vec<usize>>,
    n18: Vec<bool>,
    n6: Vec<bool>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut adj26 = vec![Vec::new(); 27];
        let mut adj6 = vec![Vec::new(); 27];
        let n18: Vec<bool> = (0..27)
            .map(|k| k != 13 && manhattan(slot_offset(k)) <= 2)
            .collect();
        let n6: Vec<bool> = (0..27).map(|k| manhattan(slot_offset(k)) == 1).collect();
        for a in 0..27 {
            for b in 0..27 {
                if a == b || a == 13 || b == 13 {
                    continue;
                }
                let (oa, ob) = (slot_offset(a), slot_offset(b));
                if chebyshev(oa, ob) == 1 {
                    adj26[a].push(b);
                }
                let d = [oa[0] - ob[0], oa[1] - ob[1], oa[2] - ob[2]];
                if n18[a] && n18[b] && manhattan(d) == 1 {
                    adj6[a].push(b);
                }
            }
        }
        Tables {
            adj26,
            adj6,
            n18,
            n6,
        }
    })
}

/// Number of 26-connected foreground components in the punctured 26-neighbourhood.
fn t26(mask: u32) -> usize {
    let t = tables();
    let mut seen = 0u32;
    let mut count = 0;
    let mut stack = Vec::with_capacity(26);
    for k in 0..27 {
        if k == 13 || mask & (1 << k) == 0 || seen & (1 << k) != 0 {
            continue;
        }
        count += 1;
        seen |= 1 << k;
        stack.push(k);
        while let Some(a) = stack.pop() {
            for &b in &t.adj26[a] {
                if mask & (1 << b) != 0 && seen & (1 << b) == 0 {
                    seen |= 1 << b;
                    stack.push(b);
                }
            }
        }
    }
    count
}

/// Number of 6-connected background components in the punctured
/// 18-neighbourhood that touch a 6-neighbour of the centre.
fn t6(mask: u32) -> usize {
    let t = tables();
    let mut seen = 0u32;
    let mut count = 0;
    let mut stack = Vec::with_capacity(18);
    for k in 0..27 {
        if !t.n6[k] || mask & (1 << k) != 0 || seen & (1 << k) != 0 {
            continue;
        }
        count += 1;
        seen |= 1 << k;
        stack.push(k);
        while let Some(a) = stack.pop() {
            for &b in &t.adj6[a] {
                if t.n18[b] && mask & (1 << b) == 0 && seen & (1 << b) == 0 {
                    seen |= 1 << b;
                    stack.push(b);
                }
            }
        }
    }
    count
}

/// A foreground voxel is simple when deleting it changes neither the
/// 26-connected foreground nor the 6-connected background topology.
/// `mask` bit k is set when neighbourhood slot k is foreground.
pub(crate) fn is_simple(mask: u32) -> bool {
    t26(mask) == 1 && t6(mask) == 1
}

/// Label 26-connected (or 6-connected) components of `fg` on a grid.
/// Labels start at 1 and are assigned in order of each component's lowest
/// linear index; background is 0.
pub fn label_components(fg: &[bool], dims: [usize; 3], full26: bool) -> (Vec<u32>, u32) {
    let [nx, ny, nz] = dims;
    let mut labels = vec![0u32; fg.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let x = (i % nx) as i64;
            let y = ((i / nx) % ny) as i64;
            let z = (i / (nx * ny)) as i64;
            for k in 0..27 {
                let o = slot_offset(k);
                if k == 13 || (!full26 && manhattan(o) != 1) {
                    continue;
                }
                let (qx, qy, qz) = (x + o[0], y + o[1], z + o[2]);
                if qx < 0 || qy < 0 || qz < 0 || qx >= nx as i64 || qy >= ny as i64 || qz >= nz as i64 {
                    continue;
                }
                let j = qx as usize + nx * (qy as usize + ny * qz as usize);
                if fg[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, next)
}
