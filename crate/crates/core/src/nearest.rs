//! Exact nearest-site queries on a voxel grid.
//!
//! Sites are voxels carrying a `u32` key. A query returns the smallest
//! squared world distance and, among sites at that distance, the smallest
//! key. Distances are computed with [`VolumeGeometry::squared_distance`], so
//! results agree bit-for-bit with a brute-force scan using the same formula.
//!
//! Sites are bucketed into cubic cells; a query visits rings of cells around
//! its own cell until no unvisited cell can hold a closer (or equally close)
//! site.

use alloc::vec;
use alloc::vec::Vec;

use crate::volume::VolumeGeometry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub key: u32,
    pub d2: f64,
    pub site: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct SiteIndex {
    geometry: VolumeGeometry,
    cell: usize,
    grid: [usize; 3],
    start: Vec<u32>,
    sites: Vec<([u32; 3], u32)>,
    min_spacing: f64,
}

const DEFAULT_CELL: usize = 4;

impl SiteIndex {
    pub fn new(geometry: VolumeGeometry, sites: &[([usize; 3], u32)]) -> Self {
        Self::with_cell_size(geometry, sites, DEFAULT_CELL)
    }

    pub fn with_cell_size(geometry: VolumeGeometry, sites: &[([usize; 3], u32)], cell: usize) -> Self {
        let cell = cell.max(1);
        let d = geometry.dims();
        let grid = [d[0].div_ceil(cell), d[1].div_ceil(cell), d[2].div_ceil(cell)];
        let ncell = grid[0] * grid[1] * grid[2];
        let cell_of = |c: &[usize; 3]| (c[0] / cell) + grid[0] * ((c[1] / cell) + grid[1] * (c[2] / cell));
        let mut count = vec![0u32; ncell + 1];
        for (c, _) in sites {
            count[cell_of(c) + 1] += 1;
        }
        for i in 0..ncell {
            count[i + 1] += count[i];
        }
        let start = count.clone();
        let mut fill = count;
        let mut packed = vec![([0u32; 3], 0u32); sites.len()];
        for (c, k) in sites {
            let slot = &mut fill[cell_of(c)];
            packed[*slot as usize] = ([c[0] as u32, c[1] as u32, c[2] as u32], *k);
            *slot += 1;
        }
        let s = geometry.spacing();
        Self { geometry, cell, grid, start, sites: packed, min_spacing: s[0].min(s[1]).min(s[2]) }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Nearest site to voxel `q` (ties: smallest key). `None` when empty.
    pub fn nearest(&self, q: [usize; 3]) -> Option<Nearest> {
        if self.sites.is_empty() {
            return None;
        }
        let cq = [q[0] / self.cell, q[1] / self.cell, q[2] / self.cell];
        let max_ring = (0..3).map(|a| cq[a].max(self.grid[a] - 1 - cq[a])).max().unwrap_or(0);
        let mut best: Option<Nearest> = None;
        for r in 0..=max_ring {
            if let Some(b) = best {
                // every voxel in ring r is at least ((r - 1) * cell + 1) voxels away along some axis
                let lb = ((r - 1) * self.cell + 1) as f64 * self.min_spacing;
                if lb * lb > b.d2 {
                    break;
                }
            }
            self.scan_ring(q, cq, r, &mut best);
        }
        best
    }

    fn scan_ring(&self, q: [usize; 3], cq: [usize; 3], r: usize, best: &mut Option<Nearest>) {
        let lo = |a: usize| cq[a].saturating_sub(r);
        let hi = |a: usize| (cq[a] + r).min(self.grid[a] - 1);
        for cz in lo(2)..=hi(2) {
            for cy in lo(1)..=hi(1) {
                for cx in lo(0)..=hi(0) {
                    let ring = cx.abs_diff(cq[0]).max(cy.abs_diff(cq[1])).max(cz.abs_diff(cq[2]));
                    if ring != r {
                        continue;
                    }
                    let id = cx + self.grid[0] * (cy + self.grid[1] * cz);
                    for &(s, key) in &self.sites[self.start[id] as usize..self.start[id + 1] as usize] {
                        let d = [
                            s[0] as i64 - q[0] as i64,
                            s[1] as i64 - q[1] as i64,
                            s[2] as i64 - q[2] as i64,
                        ];
                        let d2 = self.geometry.squared_distance(d);
                        let better = match best {
                            None => true,
                            Some(b) => d2 < b.d2 || (d2 == b.d2 && key < b.key),
                        };
                        if better {
                            *best = Some(Nearest { key, d2, site: [s[0] as usize, s[1] as usize, s[2] as usize] });
                        }
                    }
                }
            }
        }
    }
}
