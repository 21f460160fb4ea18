//! Vessel tree JSON: nodes with world positions, edges with voxel paths,
//! branches as edge lists, the root node and the entry nodes.
//!
//! Two keys go beyond the bare graph so a file is self-contained: a
//! `geometry` object (needed to turn `[i, j, k]` paths into a tree on a
//! grid) and per-node `voxels` (junction nodes may span several voxels).

use renovor_core::tree::{Node, RawEdge, VesselTree};
use renovor_core::VolumeGeometry;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryJson {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl From<&VolumeGeometry> for GeometryJson {
    fn from(g: &VolumeGeometry) -> Self {
        GeometryJson { dims: g.dims(), spacing: g.spacing(), origin: g.origin() }
    }
}

impl GeometryJson {
    pub fn to_geometry(&self) -> renovor_core::Result<VolumeGeometry> {
        VolumeGeometry::new(self.dims, self.spacing, self.origin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeJson {
    pub id: usize,
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub voxels: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeJson {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub path: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchJson {
    pub id: usize,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeJson {
    pub geometry: GeometryJson,
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
    pub branches: Vec<BranchJson>,
    pub root: usize,
    pub entries: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum TreeJsonError {
    #[error("invalid tree JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("inconsistent tree: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] renovor_core::Error),
}

impl From<&VesselTree> for TreeJson {
    fn from(t: &VesselTree) -> Self {
        let g = t.geometry();
        let nodes = t
            .nodes()
            .iter()
            .enumerate()
            .map(|(id, n)| NodeJson {
                id,
                x_mm: n.position[0],
                y_mm: n.position[1],
                z_mm: n.position[2],
                voxels: n.voxels.iter().map(|&v| g.coords(v)).collect(),
            })
            .collect();
        let edges = t
            .edges()
            .iter()
            .enumerate()
            .map(|(id, e)| EdgeJson { id, from: e.from, to: e.to, path: e.path.iter().map(|&v| g.coords(v)).collect() })
            .collect();
        let branches =
            t.branches().iter().enumerate().map(|(id, b)| BranchJson { id, edges: b.edges.clone() }).collect();
        TreeJson { geometry: g.into(), nodes, edges, branches, root: t.root(), entries: t.entries().to_vec() }
    }
}

impl TreeJson {
    /// Rebuild the tree. Ids must be dense and in list order; branches are
    /// recomputed from the edges and checked against the listed ones.
    pub fn to_tree(&self) -> Result<VesselTree, TreeJsonError> {
        let g = self.geometry.to_geometry()?;
        let d = g.dims();
        let index = |c: [usize; 3]| -> Result<usize, TreeJsonError> {
            if (0..3).any(|a| c[a] >= d[a]) {
                return Err(TreeJsonError::Invalid(format!("voxel {c:?} outside the grid")));
            }
            Ok(g.index(c[0], c[1], c[2]))
        };
        let dense = |ids: &mut dyn Iterator<Item = usize>, what: &str| -> Result<(), TreeJsonError> {
            if ids.enumerate().any(|(i, id)| i != id) {
                return Err(TreeJsonError::Invalid(format!("{what} ids must be 0..n in order")));
            }
            Ok(())
        };
        dense(&mut self.nodes.iter().map(|n| n.id), "node")?;
        dense(&mut self.edges.iter().map(|e| e.id), "edge")?;
        dense(&mut self.branches.iter().map(|b| b.id), "branch")?;

        let edges: Vec<RawEdge> = self
            .edges
            .iter()
            .map(|e| Ok(RawEdge { a: e.from, b: e.to, path: e.path.iter().map(|&c| index(c)).collect::<Result<_, _>>()? }))
            .collect::<Result<_, TreeJsonError>>()?;
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (id, n) in self.nodes.iter().enumerate() {
            let mut voxels: Vec<usize> = n.voxels.iter().map(|&c| index(c)).collect::<Result<_, _>>()?;
            if voxels.is_empty() {
                // fall back to path endpoints, then to the nearest voxel
                for e in &edges {
                    if e.a == id {
                        voxels.extend(e.path.first());
                    }
                    if e.b == id {
                        voxels.extend(e.path.last());
                    }
                }
                voxels.sort_unstable();
                voxels.dedup();
                if voxels.is_empty() {
                    let c = g.nearest_voxel([n.x_mm, n.y_mm, n.z_mm]);
                    voxels.push(g.index(c[0], c[1], c[2]));
                }
            }
            let mut node = Node::from_voxels(&g, voxels);
            node.position = [n.x_mm, n.y_mm, n.z_mm];
            nodes.push(node);
        }
        let tree = VesselTree::from_parts(g, nodes, edges, self.root, &self.entries)?;
        if tree.branches().len() != self.branches.len() {
            return Err(TreeJsonError::Invalid(format!(
                "{} branches listed, edges define {}",
                self.branches.len(),
                tree.branches().len()
            )));
        }
        Ok(tree)
    }

    pub fn to_string_pretty(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_else(|_| unreachable!())
    }

    pub fn parse(text: &str) -> Result<VesselTree, TreeJsonError> {
        serde_json::from_str::<TreeJson>(text)?.to_tree()
    }
}
