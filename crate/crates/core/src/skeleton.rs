//! Topology-preserving thinning of binary masks to one-voxel-wide
//! centerlines (26-connected foreground, 6-connected background).
//!
//! Thinning is sequential: each pass runs six directional sub-iterations,
//! and within a sub-iteration border voxels are visited in increasing
//! distance-to-background order (ties by index), so the most central voxels
//! are the last to be considered. Curve endpoints are kept.

use alloc::vec::Vec;

use crate::volume::{squared_distance_transform, LabelVolume, FACE_OFFSETS};

/// Cell `(x, y, z)` of a 3x3x3 neighborhood, each coordinate in `-1..=1`.
const fn cell(x: i64, y: i64, z: i64) -> usize {
    ((x + 1) + 3 * (y + 1) + 9 * (z + 1)) as usize
}

const CENTER: usize = 13;

fn cell_coords(c: usize) -> [i64; 3] {
    [(c % 3) as i64 - 1, ((c / 3) % 3) as i64 - 1, (c / 9) as i64 - 1]
}

/// Neighborhood of a voxel as 27 occupancy flags; outside the grid is empty.
fn neighborhood(fg: &[bool], g: &crate::VolumeGeometry, c: [usize; 3]) -> [bool; 27] {
    let mut n = [false; 27];
    for (k, slot) in n.iter_mut().enumerate() {
        let o = cell_coords(k);
        if let Some(j) = g.offset(c, o) {
            *slot = fg[j];
        }
    }
    n
}

fn count_components(members: &[bool; 27], adjacent: impl Fn(usize, usize) -> bool, must_touch: Option<&[usize]>) -> usize {
    let mut seen = [false; 27];
    let mut count = 0;
    let mut stack = [0usize; 27];
    for s in 0..27 {
        if !members[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut top = 1;
        stack[0] = s;
        let mut touches = must_touch.is_none();
        while top > 0 {
            top -= 1;
            let u = stack[top];
            if let Some(t) = must_touch {
                touches |= t.contains(&u);
            }
            for v in 0..27 {
                if members[v] && !seen[v] && adjacent(u, v) {
                    seen[v] = true;
                    stack[top] = v;
                    top += 1;
                }
            }
        }
        if touches {
            count += 1;
        }
    }
    count
}

fn chebyshev(u: usize, v: usize) -> i64 {
    let a = cell_coords(u);
    let b = cell_coords(v);
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs()).max((a[2] - b[2]).abs())
}

fn manhattan(u: usize, v: usize) -> i64 {
    let a = cell_coords(u);
    let b = cell_coords(v);
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
}

const FACE_CELLS: [usize; 6] =
    [cell(-1, 0, 0), cell(1, 0, 0), cell(0, -1, 0), cell(0, 1, 0), cell(0, 0, -1), cell(0, 0, 1)];

/// Whether removing the center of `n` preserves topology: its foreground
/// 26-neighbors form exactly one 26-component, and the background voxels of
/// the 18-neighborhood form exactly one 6-component touching a face
/// neighbor of the center.
pub fn is_simple(n: &[bool; 27]) -> bool {
    let mut fg = *n;
    fg[CENTER] = false;
    if count_components(&fg, |u, v| chebyshev(u, v) == 1, None) != 1 {
        return false;
    }
    let mut bg = [false; 27];
    for (k, slot) in bg.iter_mut().enumerate() {
        let o = cell_coords(k);
        let nonzero = o.iter().filter(|&&x| x != 0).count();
        *slot = k != CENTER && nonzero < 3 && !n[k];
    }
    count_components(&bg, |u, v| manhattan(u, v) == 1, Some(&FACE_CELLS)) == 1
}

fn foreground_neighbors(n: &[bool; 27]) -> usize {
    n.iter().enumerate().filter(|&(k, &b)| b && k != CENTER).count()
}

/// One-voxel-wide skeleton of the nonzero voxels of `mask` (output values 0/1).
pub fn skeletonize(mask: &LabelVolume) -> LabelVolume {
    let g = *mask.geometry();
    let mut fg = mask.to_bools();
    if !fg.iter().any(|&b| b) {
        return LabelVolume::filled(g, 0);
    }
    let background: Vec<bool> = fg.iter().map(|&b| !b).collect();
    let depth = squared_distance_transform(&g, &background, true);
    loop {
        let mut changed = false;
        for dir in FACE_OFFSETS {
            let mut candidates: Vec<usize> = (0..g.len())
                .filter(|&i| fg[i] && g.offset(g.coords(i), dir).is_none_or(|j| !fg[j]))
                .collect();
            candidates.sort_by(|&a, &b| depth[a].total_cmp(&depth[b]).then(a.cmp(&b)));
            for i in candidates {
                let c = g.coords(i);
                if !g.offset(c, dir).is_none_or(|j| !fg[j]) {
                    continue;
                }
                let n = neighborhood(&fg, &g, c);
                if foreground_neighbors(&n) <= 1 {
                    continue;
                }
                if is_simple(&n) {
                    fg[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    LabelVolume::mask_from(g, |i| fg[i])
}
