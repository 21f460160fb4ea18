//! Vessel trees from centerline skeletons: graph extraction, loop breaking,
//! kidney-entry detection and bifurcation-level branch clustering.
//!
//! A [`VesselTree`] is rooted and canonical: nodes and edges are numbered in
//! depth-first preorder from the root (children in construction order), and
//! every edge points downstream with its voxel path ordered the same way.
//! Branches are maximal edge chains between *boundary* nodes: the root,
//! entries and every node whose degree is not 2.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::volume::{connected_components, Connectivity, LabelVolume, VolumeGeometry, ALL_OFFSETS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Skeleton voxels merged into this node (a junction may span several).
    pub voxels: Vec<usize>,
    /// World position in mm (centroid of the voxels).
    pub position: [f64; 3],
}

impl Node {
    pub fn from_voxels(geometry: &VolumeGeometry, voxels: Vec<usize>) -> Self {
        let mut p = [0.0; 3];
        for &v in &voxels {
            let w = geometry.index_to_world(v);
            for a in 0..3 {
                p[a] += w[a];
            }
        }
        let n = voxels.len().max(1) as f64;
        Node { voxels, position: [p[0] / n, p[1] / n, p[2] / n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Voxel indices from `from` to `to`, 26-connected, no repeats.
    pub path: Vec<usize>,
    pub length_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    /// Edge ids in downstream order.
    pub edges: Vec<usize>,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselTree {
    geometry: VolumeGeometry,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    branches: Vec<Branch>,
    root: usize,
    entries: Vec<usize>,
    parent_edge: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

/// An undirected edge used while assembling a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEdge {
    pub a: usize,
    pub b: usize,
    /// Path from a voxel of `a` to a voxel of `b`.
    pub path: Vec<usize>,
}

fn path_length(g: &VolumeGeometry, path: &[usize]) -> f64 {
    path.windows(2)
        .map(|w| {
            let a = g.coords(w[0]);
            let b = g.coords(w[1]);
            let d = [b[0] as i64 - a[0] as i64, b[1] as i64 - a[1] as i64, b[2] as i64 - a[2] as i64];
            math::sqrt(g.squared_distance(d))
        })
        .sum()
}

fn chebyshev_adjacent(g: &VolumeGeometry, a: usize, b: usize) -> bool {
    let ca = g.coords(a);
    let cb = g.coords(b);
    a != b && (0..3).all(|k| ca[k].abs_diff(cb[k]) <= 1)
}

impl VesselTree {
    /// Assemble a tree from undirected edges. Fails unless the edges form a
    /// spanning tree of the nodes. `entries` are ids into `nodes`.
    pub fn from_parts(
        geometry: VolumeGeometry,
        nodes: Vec<Node>,
        edges: Vec<RawEdge>,
        root: usize,
        entries: &[usize],
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Empty("tree has no nodes"));
        }
        if root >= n || entries.iter().any(|&e| e >= n) {
            return Err(Error::InvalidParameter("root or entry id out of range".into()));
        }
        if edges.len() + 1 != n {
            return Err(Error::InvalidParameter(format!("{} nodes need {} edges, got {}", n, n - 1, edges.len())));
        }
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::InvalidParameter(format!("bad edge {}-{}", e.a, e.b)));
            }
            if e.path.is_empty() || e.path.iter().any(|&v| v >= geometry.len()) {
                return Err(Error::InvalidParameter("edge path empty or outside the grid".into()));
            }
            if e.path.windows(2).any(|w| !chebyshev_adjacent(&geometry, w[0], w[1])) {
                return Err(Error::InvalidParameter("edge path is not 26-connected".into()));
            }
            let mut sorted = e.path.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter("edge path repeats a voxel".into()));
            }
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            adj[e.a].push((id, e.b));
            adj[e.b].push((id, e.a));
        }
        // iterative preorder DFS
        let mut new_node = vec![usize::MAX; n];
        let mut order_nodes: Vec<usize> = Vec::with_capacity(n);
        let mut order_edges: Vec<(usize, usize, usize)> = Vec::with_capacity(n - 1); // (raw id, parent, child)
        let mut stack: Vec<(usize, Option<(usize, usize)>)> = vec![(root, None)];
        while let Some((v, via)) = stack.pop() {
            if new_node[v] != usize::MAX {
                return Err(Error::InvalidParameter("edges contain a cycle".into()));
            }
            new_node[v] = order_nodes.len();
            order_nodes.push(v);
            if let Some((eid, p)) = via {
                order_edges.push((eid, p, v));
            }
            let parent_edge = via.map(|x| x.0);
            for &(eid, w) in adj[v].iter().rev() {
                if Some(eid) != parent_edge {
                    stack.push((w, Some((eid, v))));
                }
            }
        }
        if order_nodes.len() != n {
            return Err(Error::InvalidParameter("edges do not connect all nodes".into()));
        }
        let mut raw_nodes: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
        let new_nodes: Vec<Node> = order_nodes.iter().map(|&v| raw_nodes[v].take().unwrap_or_else(|| unreachable!())).collect();
        let mut raw_edges: Vec<Option<RawEdge>> = edges.into_iter().map(Some).collect();
        let mut new_edges = Vec::with_capacity(n - 1);
        for &(eid, p, c) in &order_edges {
            let e = raw_edges[eid].take().unwrap_or_else(|| unreachable!());
            let mut path = e.path;
            if e.a != p {
                path.reverse();
            }
            let length_mm = path_length(&geometry, &path);
            new_edges.push(Edge { from: new_node[p], to: new_node[c], path, length_mm });
        }
        let mut entries: Vec<usize> = entries.iter().map(|&e| new_node[e]).collect();
        entries.sort_unstable();
        entries.dedup();
        Ok(Self::finish(geometry, new_nodes, new_edges, 0, entries))
    }

    fn finish(geometry: VolumeGeometry, nodes: Vec<Node>, edges: Vec<Edge>, root: usize, entries: Vec<usize>) -> Self {
        let n = nodes.len();
        let mut parent_edge = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            parent_edge[e.to] = Some(id);
            children[e.from].push(id);
        }
        let boundary: Vec<bool> = (0..n)
            .map(|v| {
                let degree = children[v].len() + usize::from(parent_edge[v].is_some());
                v == root || degree != 2 || entries.binary_search(&v).is_ok()
            })
            .collect();
        let mut branches = Vec::new();
        for (id, e) in edges.iter().enumerate() {
            if !boundary[e.from] {
                continue;
            }
            let mut chain = vec![id];
            let mut cur = e.to;
            while !boundary[cur] {
                let next = children[cur][0];
                chain.push(next);
                cur = edges[next].to;
            }
            branches.push(Branch { edges: chain, from: e.from, to: cur });
        }
        VesselTree { geometry, nodes, edges, branches, root, entries, parent_edge, children }
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    /// Ids of edges leaving `node` downstream.
    pub fn child_edges(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn parent_edge(&self, node: usize) -> Option<usize> {
        self.parent_edge[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.children[node].len() + usize::from(self.parent_edge[node].is_some())
    }

    /// Voxels of a branch in downstream order, shared edge endpoints once.
    pub fn branch_voxels(&self, branch: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &e in &self.branches[branch].edges {
            let p = &self.edges[e].path;
            let skip = usize::from(out.last() == p.first() && !out.is_empty());
            out.extend_from_slice(&p[skip..]);
        }
        out
    }

    pub fn branch_length_mm(&self, branch: usize) -> f64 {
        self.branches[branch].edges.iter().map(|&e| self.edges[e].length_mm).sum()
    }

    /// Edge paths as separate centerlines.
    pub fn centerlines(&self) -> Vec<Vec<usize>> {
        self.edges.iter().map(|e| e.path.clone()).collect()
    }

    /// Binary mask of every path and node voxel.
    pub fn voxel_mask(&self) -> LabelVolume {
        let mut m = LabelVolume::filled(self.geometry, 0);
        let d = m.data_mut();
        for e in &self.edges {
            for &v in &e.path {
                d[v] = 1;
            }
        }
        for n in &self.nodes {
            for &v in &n.voxels {
                d[v] = 1;
            }
        }
        m
    }

    /// Rebuild with different entries (node ids of this tree).
    pub fn with_entries(&self, entries: &[usize]) -> Result<Self> {
        if entries.iter().any(|&e| e >= self.nodes.len()) {
            return Err(Error::InvalidParameter("entry id out of range".into()));
        }
        let mut e = entries.to_vec();
        e.sort_unstable();
        e.dedup();
        Ok(Self::finish(self.geometry, self.nodes.clone(), self.edges.clone(), self.root, e))
    }

    fn raw_parts(&self) -> (Vec<Node>, Vec<RawEdge>) {
        let edges = self.edges.iter().map(|e| RawEdge { a: e.from, b: e.to, path: e.path.clone() }).collect();
        (self.nodes.clone(), edges)
    }
}

/// Options for [`build_tree`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// Terminal branches shorter than this (mm), hanging off a junction,
    /// are removed once after loop breaking. 0 disables pruning.
    pub min_terminal_length_mm: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { min_terminal_length_mm: 4.0 }
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
}

/// Centerline graph of a skeleton mask rooted at the skeleton voxel nearest
/// `root_hint` (world mm); a chain voxel chosen this way becomes a node.
/// Only the skeleton component holding the root is kept. Voxels with a number of 26-neighbors other than 2 become nodes
/// (touching junction voxels merge into one node); loops are broken by
/// dropping the longest edge of each cycle (minimum spanning tree on edge
/// length).
pub fn build_tree(skeleton: &LabelVolume, root_hint: [f64; 3], params: &TreeParams) -> Result<VesselTree> {
    let g = *skeleton.geometry();
    let on = skeleton.to_bools();
    let voxels: Vec<usize> = (0..g.len()).filter(|&i| on[i]).collect();
    if voxels.is_empty() {
        return Err(Error::Empty("skeleton is empty"));
    }
    let neighbors = |i: usize| -> Vec<usize> {
        let c = g.coords(i);
        ALL_OFFSETS.iter().filter_map(|&o| g.offset(c, o)).filter(|&j| on[j]).collect()
    };
    let mut degree = vec![0u8; g.len()];
    for &v in &voxels {
        degree[v] = neighbors(v).len() as u8;
    }
    // the skeleton voxel nearest the hint roots the tree, even mid-chain
    let dist2 = |p: [f64; 3]| (0..3).map(|a| (p[a] - root_hint[a]) * (p[a] - root_hint[a])).sum::<f64>();
    let mut root_voxel = voxels[0];
    for &v in &voxels[1..] {
        if dist2(g.index_to_world(v)) < dist2(g.index_to_world(root_voxel)) {
            root_voxel = v;
        }
    }
    const NO_NODE: u32 = u32::MAX;
    let mut node_of = vec![NO_NODE; g.len()];
    let mut node_voxels: Vec<Vec<usize>> = Vec::new();
    for &v in &voxels {
        if node_of[v] != NO_NODE || (degree[v] == 2 && v != root_voxel) {
            continue;
        }
        let id = node_voxels.len() as u32;
        let mut members = vec![v];
        node_of[v] = id;
        if degree[v] >= 3 {
            let mut q = VecDeque::from([v]);
            while let Some(u) = q.pop_front() {
                for w in neighbors(u) {
                    if degree[w] >= 3 && node_of[w] == NO_NODE {
                        node_of[w] = id;
                        members.push(w);
                        q.push_back(w);
                    }
                }
            }
        }
        members.sort_unstable();
        node_voxels.push(members);
    }
    // closed loops have no node voxel: anchor them at their smallest voxel
    for comp in connected_components(skeleton, Connectivity::TwentySix) {
        if comp.voxels.iter().all(|&v| node_of[v] == NO_NODE) {
            node_of[comp.min_index] = node_voxels.len() as u32;
            node_voxels.push(vec![comp.min_index]);
        }
    }

    // trace edges
    let mut raw: Vec<RawEdge> = Vec::new();
    let mut chain_seen = vec![false; g.len()];
    let mut direct: Vec<(usize, usize)> = Vec::new();
    for (n, members) in node_voxels.iter().enumerate() {
        for &v in members {
            for w in neighbors(v) {
                let m = node_of[w];
                if m == n as u32 {
                    continue;
                }
                if m != NO_NODE {
                    let key = (v.min(w), v.max(w));
                    if !direct.contains(&key) {
                        direct.push(key);
                        raw.push(RawEdge { a: n, b: m as usize, path: vec![v, w] });
                    }
                    continue;
                }
                if chain_seen[w] {
                    continue;
                }
                let mut path = vec![v, w];
                let (mut prev, mut cur) = (v, w);
                let end = loop {
                    chain_seen[cur] = true;
                    let next = neighbors(cur).into_iter().find(|&x| x != prev);
                    match next {
                        Some(x) if node_of[x] != NO_NODE => {
                            path.push(x);
                            break node_of[x] as usize;
                        }
                        Some(x) if !chain_seen[x] => {
                            path.push(x);
                            prev = cur;
                            cur = x;
                        }
                        // a chain can only close on itself through a node
                        _ => break usize::MAX,
                    }
                };
                if end != usize::MAX {
                    raw.push(RawEdge { a: n, b: end, path });
                }
            }
        }
    }

    let nodes: Vec<Node> = node_voxels.into_iter().map(|v| Node::from_voxels(&g, v)).collect();
    let root = node_of[root_voxel] as usize;

    // minimum spanning forest by (length, id); self-loops never join
    let lengths: Vec<f64> = raw.iter().map(|e| path_length(&g, &e.path)).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| lengths[a].total_cmp(&lengths[b]).then(a.cmp(&b)));
    let mut dsu = Dsu((0..nodes.len()).collect());
    let mut keep = vec![false; raw.len()];
    for &e in &order {
        let (ra, rb) = (dsu.find(raw[e].a), dsu.find(raw[e].b));
        if ra != rb {
            dsu.0[ra] = rb;
            keep[e] = true;
        }
    }
    // restrict to the root's component
    let root_set = dsu.find(root);
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut kept_nodes = Vec::new();
    for (i, n) in nodes.into_iter().enumerate() {
        if dsu.find(i) == root_set {
            remap[i] = kept_nodes.len();
            kept_nodes.push(n);
        }
    }
    let kept_edges: Vec<RawEdge> = raw
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .filter(|(e, _)| remap[e.a] != usize::MAX)
        .map(|(e, _)| RawEdge { a: remap[e.a], b: remap[e.b], path: e.path })
        .collect();
    let tree = VesselTree::from_parts(g, kept_nodes, kept_edges, remap[root], &[])?;
    if params.min_terminal_length_mm > 0.0 {
        prune_terminal(&tree, params.min_terminal_length_mm)
    } else {
        Ok(tree)
    }
}

/// Drop leaf branches shorter than `min_len` that start at a junction.
fn prune_terminal(tree: &VesselTree, min_len: f64) -> Result<VesselTree> {
    let mut drop_node = vec![false; tree.nodes.len()];
    let mut drop_edge = vec![false; tree.edges.len()];
    let mut any = false;
    for (b, br) in tree.branches.iter().enumerate() {
        let leaf = tree.children[br.to].is_empty() && br.to != tree.root;
        if leaf && tree.degree(br.from) >= 3 && tree.branch_length_mm(b) < min_len {
            any = true;
            for &e in &br.edges {
                drop_edge[e] = true;
                drop_node[tree.edges[e].to] = true;
            }
        }
    }
    if !any {
        return Ok(tree.clone());
    }
    let (nodes, edges) = tree.raw_parts();
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut kept_nodes = Vec::new();
    for (i, n) in nodes.into_iter().enumerate() {
        if !drop_node[i] {
            remap[i] = kept_nodes.len();
            kept_nodes.push(n);
        }
    }
    let kept_edges = edges
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !drop_edge[*i])
        .map(|(_, e)| RawEdge { a: remap[e.a], b: remap[e.b], path: e.path })
        .collect();
    let entries: Vec<usize> = tree.entries.iter().filter(|&&e| !drop_node[e]).map(|&e| remap[e]).collect();
    VesselTree::from_parts(tree.geometry, kept_nodes, kept_edges, remap[tree.root], &entries)
}

/// Mark where the tree enters `kidney`: along every root-to-leaf path, the
/// first centerline voxel inside the mask. An entry strictly inside an edge
/// splits that edge with a new node. A tree that never enters the mask gets
/// no entries.
pub fn detect_entries(tree: &VesselTree, kidney: &LabelVolume) -> Result<VesselTree> {
    tree.geometry.ensure_same(kidney.geometry())?;
    let inside = |v: usize| kidney.data()[v] != 0;
    let (mut nodes, mut edges) = tree.raw_parts();
    let mut entries = Vec::new();
    if tree.nodes[tree.root].voxels.iter().any(|&v| inside(v)) {
        return VesselTree::from_parts(tree.geometry, nodes, edges, tree.root, &[tree.root]);
    }
    let mut stack = vec![tree.root];
    let mut splits: Vec<(usize, usize)> = Vec::new(); // (edge, path position)
    while let Some(n) = stack.pop() {
        for &e in tree.children[n].iter().rev() {
            let edge = &tree.edges[e];
            let last = edge.path.len() - 1;
            if let Some(k) = (1..last).find(|&k| inside(edge.path[k])) {
                splits.push((e, k));
            } else if inside(edge.path[last]) || tree.nodes[edge.to].voxels.iter().any(|&v| inside(v)) {
                entries.push(edge.to);
            } else {
                stack.push(edge.to);
            }
        }
    }
    for (e, k) in splits {
        let path = edges[e].path.clone();
        let id = nodes.len();
        nodes.push(Node::from_voxels(&tree.geometry, vec![path[k]]));
        let to = edges[e].b;
        edges[e] = RawEdge { a: edges[e].a, b: id, path: path[..=k].to_vec() };
        edges.push(RawEdge { a: id, b: to, path: path[k..].to_vec() });
        entries.push(id);
    }
    VesselTree::from_parts(tree.geometry, nodes, edges, tree.root, &entries)
}

/// Branch-to-group assignment at one clustering level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchClustering {
    pub level_offset: i32,
    /// Group id of every branch.
    pub group_of_branch: Vec<usize>,
    pub group_count: usize,
}

impl BranchClustering {
    /// Branch ids of each group.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.group_count];
        for (b, &g) in self.group_of_branch.iter().enumerate() {
            out[g].push(b);
        }
        out
    }
}

/// A group is the downstream closure of its root branches; `anchor` is the
/// node it hangs from.
#[derive(Debug, Clone)]
struct Group {
    roots: Vec<usize>,
    anchor: usize,
}

struct BranchTopology {
    children: Vec<Vec<usize>>,
    starting_at: Vec<Vec<usize>>,
    ending_at: Vec<Option<usize>>,
    node_depth: Vec<f64>,
    node_parent: Vec<Option<usize>>,
}

impl BranchTopology {
    fn new(tree: &VesselTree) -> Self {
        let n = tree.nodes.len();
        let mut starting_at = vec![Vec::new(); n];
        let mut ending_at = vec![None; n];
        for (b, br) in tree.branches.iter().enumerate() {
            starting_at[br.from].push(b);
            ending_at[br.to] = Some(b);
        }
        let children = tree.branches.iter().map(|br| starting_at[br.to].clone()).collect();
        let mut node_depth = vec![0.0; n];
        let mut node_parent = vec![None; n];
        // edges are in preorder, so parents come first
        for e in &tree.edges {
            node_depth[e.to] = node_depth[e.from] + e.length_mm;
            node_parent[e.to] = Some(e.from);
        }
        Self { children, starting_at, ending_at, node_depth, node_parent }
    }

    fn is_ancestor_or_self(&self, a: usize, mut x: usize) -> bool {
        loop {
            if x == a {
                return true;
            }
            match self.node_parent[x] {
                Some(p) => x = p,
                None => return false,
            }
        }
    }

    fn path_distance(&self, a: usize, b: usize) -> f64 {
        let mut x = a;
        while !self.is_ancestor_or_self(x, b) {
            x = self.node_parent[x].unwrap_or(x);
        }
        self.node_depth[a] + self.node_depth[b] - 2.0 * self.node_depth[x]
    }

    fn members(&self, roots: &[usize], out: &mut [bool]) {
        let mut stack: Vec<usize> = roots.to_vec();
        while let Some(b) = stack.pop() {
            out[b] = true;
            stack.extend_from_slice(&self.children[b]);
        }
    }
}

fn bifurcation_ancestors(tree: &VesselTree, topo: &BranchTopology, node: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut x = node;
    while let Some(p) = topo.node_parent[x] {
        if tree.children[p].len() >= 2 {
            out.push(p);
        }
        x = p;
    }
    if out.last() != Some(&tree.root) {
        out.push(tree.root);
    }
    out
}

/// Among `candidates` (group ids into `groups`), the group nearest to branch
/// `b`: downstream groups by path length first, otherwise any group by path
/// length; ties go to the smaller id.
fn nearest_group(topo: &BranchTopology, tree: &VesselTree, groups: &[Group], candidates: &[usize], b: usize) -> usize {
    let end = tree.branches[b].to;
    let pick = |downstream_only: bool| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for &gid in candidates {
            let a = groups[gid].anchor;
            let down = topo.is_ancestor_or_self(end, a);
            if downstream_only && !down {
                continue;
            }
            let d = topo.path_distance(end, a);
            if best.is_none_or(|(bd, bg)| d < bd || (d == bd && gid < bg)) {
                best = Some((d, gid));
            }
        }
        best.map(|x| x.1)
    };
    pick(true).or_else(|| pick(false)).unwrap_or(candidates[0])
}

/// Assignment of all branches given groups whose member sets are disjoint.
/// `parent_of` restricts each ungrouped branch to the subgroups of its
/// group at the previous level.
fn assign(
    tree: &VesselTree,
    topo: &BranchTopology,
    groups: &[Group],
    restrict: Option<(&[usize], &[usize])>, // (previous assignment, parent group of each group)
) -> Vec<usize> {
    let nb = tree.branches.len();
    let mut out = vec![usize::MAX; nb];
    for (gid, g) in groups.iter().enumerate() {
        let mut m = vec![false; nb];
        topo.members(&g.roots, &mut m);
        for b in 0..nb {
            if m[b] {
                out[b] = gid;
            }
        }
    }
    let all: Vec<usize> = (0..groups.len()).collect();
    for b in 0..nb {
        if out[b] != usize::MAX {
            continue;
        }
        let candidates: Vec<usize> = match restrict {
            Some((prev, parent)) => (0..groups.len()).filter(|&g| parent[g] == prev[b]).collect(),
            None => all.clone(),
        };
        out[b] = nearest_group(topo, tree, groups, if candidates.is_empty() { &all } else { &candidates }, b);
    }
    out
}

fn entry_group(tree: &VesselTree, topo: &BranchTopology, entry: usize) -> Group {
    let roots = if topo.starting_at[entry].is_empty() {
        topo.ending_at[entry].into_iter().collect()
    } else {
        topo.starting_at[entry].clone()
    };
    let _ = tree;
    Group { roots, anchor: entry }
}

/// Split a group at its first downstream bifurcation; a group with no
/// bifurcation below it is returned unchanged.
fn split_group(tree: &VesselTree, topo: &BranchTopology, g: &Group) -> Vec<Group> {
    if g.roots.len() >= 2 {
        return g.roots.iter().map(|&r| Group { roots: vec![r], anchor: tree.branches[r].from }).collect();
    }
    let mut cur = g.roots[0];
    loop {
        let ch = &topo.children[cur];
        match ch.len() {
            0 => return vec![g.clone()],
            1 => cur = ch[0],
            _ => return ch.iter().map(|&r| Group { roots: vec![r], anchor: tree.branches[r].from }).collect(),
        }
    }
}

/// Group branches by kidney entry, then move the grouping level up
/// (`level_offset < 0`, merging entries that share their k-th upstream
/// bifurcation) or down (`> 0`, splitting each group at its first
/// downstream bifurcation, k times). Levels saturate at the root and at the
/// leaves. Branches outside every group join the nearest downstream group
/// (path length), or the nearest group overall if none lies downstream.
///
/// Group ids are consistent across levels: the groups of any level are
/// contiguous id ranges of the next finer level, so coarser partitions are
/// always unions of finer ones, tie-breaks included. A tree without entries
/// yields a single group.
pub fn cluster_branches(tree: &VesselTree, level_offset: i32) -> Result<BranchClustering> {
    let nb = tree.branches.len();
    if nb == 0 {
        return Err(Error::Empty("tree has no branches"));
    }
    let topo = BranchTopology::new(tree);
    if tree.entries.is_empty() {
        return Ok(BranchClustering { level_offset, group_of_branch: vec![0; nb], group_count: 1 });
    }
    let preorder = |n: usize| n; // node ids are preorder ranks
    // entries sorted by their full chain of upstream bifurcations, coarsest first
    let chains: Vec<Vec<usize>> = tree.entries.iter().map(|&e| bifurcation_ancestors(tree, &topo, e)).collect();
    let depth = chains.iter().map(Vec::len).max().unwrap_or(1);
    let key_at = |chain: &Vec<usize>, k: usize| chain[k.min(chain.len()) - 1];
    let mut order: Vec<usize> = (0..tree.entries.len()).collect();
    order.sort_by(|&a, &b| {
        for k in (1..=depth).rev() {
            let c = preorder(key_at(&chains[a], k)).cmp(&preorder(key_at(&chains[b], k)));
            if c != core::cmp::Ordering::Equal {
                return c;
            }
        }
        tree.entries[a].cmp(&tree.entries[b])
    });
    let level0: Vec<Group> = order.iter().map(|&i| entry_group(tree, &topo, tree.entries[i])).collect();
    let base = assign(tree, &topo, &level0, None);

    if level_offset <= 0 {
        let k = level_offset.unsigned_abs() as usize;
        if k == 0 {
            return Ok(BranchClustering { level_offset, group_of_branch: base, group_count: level0.len() });
        }
        let mut coarse_of_entry = vec![0usize; order.len()];
        let mut next = 0;
        let mut last_key = None;
        for (slot, &i) in order.iter().enumerate() {
            let key = key_at(&chains[i], k);
            if last_key != Some(key) {
                if last_key.is_some() {
                    next += 1;
                }
                last_key = Some(key);
            }
            coarse_of_entry[slot] = next;
        }
        let group_of_branch = base.iter().map(|&g| coarse_of_entry[g]).collect();
        return Ok(BranchClustering { level_offset, group_of_branch, group_count: next + 1 });
    }

    let mut groups = level0;
    let mut current = base;
    for _ in 0..level_offset {
        let mut finer = Vec::new();
        let mut parent = Vec::new();
        for (gid, g) in groups.iter().enumerate() {
            for s in split_group(tree, &topo, g) {
                finer.push(s);
                parent.push(gid);
            }
        }
        if finer.len() == groups.len() {
            break;
        }
        current = assign(tree, &topo, &finer, Some((&current, &parent)));
        groups = finer;
    }
    Ok(BranchClustering { level_offset, group_of_branch: current, group_count: groups.len() })
}
