//! Exact s-t maximum flow / minimum cut with the Boykov-Kolmogorov
//! augmenting-path algorithm (search trees grown from both terminals and
//! reused between augmentations).
//!
//! Arcs touching a terminal are folded into per-node terminal capacities.
//! Everything is processed in arc insertion order, so results are
//! deterministic for a fixed network.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

/// Directed network with a designated source and sink.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    nodes: usize,
    source: usize,
    sink: usize,
    arcs: Vec<Arc>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= nodes || sink >= nodes || source == sink {
            return Err(Error::InvalidParameter(format!(
                "source {source} and sink {sink} must be distinct nodes below {nodes}"
            )));
        }
        Ok(Self { nodes, source, sink, arcs: Vec::new() })
    }

    pub fn with_capacity(nodes: usize, source: usize, sink: usize, arcs: usize) -> Result<Self> {
        let mut n = Self::new(nodes, source, sink)?;
        n.arcs.reserve(arcs);
        Ok(n)
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) -> Result<()> {
        if from >= self.nodes || to >= self.nodes {
            return Err(Error::InvalidParameter(format!("arc {from}->{to} out of range")));
        }
        if !(capacity >= 0.0) || !capacity.is_finite() {
            return Err(Error::InvalidParameter(format!("capacity must be finite and >= 0, got {capacity}")));
        }
        self.arcs.push(Arc { from, to, capacity });
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Total capacity of arcs leaving the node set marked `true`.
    pub fn cut_weight(&self, source_side: &[bool]) -> f64 {
        self.arcs
            .iter()
            .filter(|a| source_side[a.from] && !source_side[a.to])
            .map(|a| a.capacity)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// `true` for nodes on the source side (reachable from the source in the
    /// final residual graph). Includes the source itself.
    pub source_side: Vec<bool>,
}

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;

const FREE: u8 = 0;
const SRC: u8 = 1;
const SNK: u8 = 2;

struct Solver {
    first: Vec<u32>,
    head: Vec<u32>,
    sister: Vec<u32>,
    rcap: Vec<f64>,
    tr: Vec<f64>,
    tree: Vec<u8>,
    parent: Vec<u32>,
    ts: Vec<u64>,
    dist: Vec<u32>,
    active: VecDeque<u32>,
    is_active: Vec<bool>,
    orphans: VecDeque<u32>,
    time: u64,
    flow: f64,
}

impl Solver {
    fn build(net: &FlowNetwork) -> Self {
        let n = net.nodes;
        let mut tr = vec![0.0; n];
        let mut flow = 0.0;
        let mut degree = vec![0u32; n + 1];
        let mut inner: Vec<&Arc> = Vec::new();
        for a in &net.arcs {
            let (f, t) = (a.from, a.to);
            if f == t || t == net.source || f == net.sink {
                continue;
            }
            if f == net.source && t == net.sink {
                flow += a.capacity;
            } else if f != net.source && t != net.sink {
                degree[f] += 1;
                degree[t] += 1;
                inner.push(a);
            }
        }
        // CSR offsets
        let mut first = vec![0u32; n + 1];
        for v in 0..n {
            first[v + 1] = first[v] + degree[v];
        }
        let m = first[n] as usize;
        let mut fill = first.clone();
        let mut head = vec![0u32; m];
        let mut sister = vec![0u32; m];
        let mut rcap = vec![0.0; m];
        for a in inner {
            let ia = fill[a.from] as usize;
            fill[a.from] += 1;
            let ib = fill[a.to] as usize;
            fill[a.to] += 1;
            head[ia] = a.to as u32;
            head[ib] = a.from as u32;
            sister[ia] = ib as u32;
            sister[ib] = ia as u32;
            rcap[ia] = a.capacity;
        }
        // flow along s->v->t is pushed immediately; tr keeps the remainder
        // (positive: source capacity, negative: sink capacity)
        let mut s_cap = vec![0.0; n];
        let mut t_cap = vec![0.0; n];
        for a in &net.arcs {
            if a.from == net.source && a.to != net.sink && a.to != net.source {
                s_cap[a.to] += a.capacity;
            } else if a.to == net.sink && a.from != net.source && a.from != net.sink {
                t_cap[a.from] += a.capacity;
            }
        }
        for v in 0..n {
            let both = s_cap[v].min(t_cap[v]);
            flow += both;
            tr[v] = (s_cap[v] - both) - (t_cap[v] - both);
        }
        let mut s = Solver {
            first,
            head,
            sister,
            rcap,
            tr,
            tree: vec![FREE; n],
            parent: vec![NONE; n],
            ts: vec![0; n],
            dist: vec![0; n],
            active: VecDeque::new(),
            is_active: vec![false; n],
            orphans: VecDeque::new(),
            time: 0,
            flow,
        };
        for v in 0..n {
            if v == net.source || v == net.sink {
                continue;
            }
            if s.tr[v] > 0.0 {
                s.tree[v] = SRC;
            } else if s.tr[v] < 0.0 {
                s.tree[v] = SNK;
            } else {
                continue;
            }
            s.parent[v] = TERMINAL;
            s.dist[v] = 1;
            s.activate(v as u32);
        }
        s
    }

    fn activate(&mut self, v: u32) {
        if !self.is_active[v as usize] {
            self.is_active[v as usize] = true;
            self.active.push_back(v);
        }
    }

    /// Grow both trees until they touch. Returns the arc from the source-tree
    /// node to the sink-tree node.
    fn grow(&mut self) -> Option<u32> {
        while let Some(&v) = self.active.front() {
            let vi = v as usize;
            if self.tree[vi] == FREE {
                self.active.pop_front();
                self.is_active[vi] = false;
                continue;
            }
            let tv = self.tree[vi];
            for a in self.first[vi]..self.first[vi + 1] {
                let ai = a as usize;
                let w = self.head[ai] as usize;
                let cap = if tv == SRC { self.rcap[ai] } else { self.rcap[self.sister[ai] as usize] };
                if cap <= 0.0 {
                    continue;
                }
                if self.tree[w] == FREE {
                    self.tree[w] = tv;
                    self.parent[w] = self.sister[ai];
                    self.ts[w] = self.ts[vi];
                    self.dist[w] = self.dist[vi] + 1;
                    self.activate(w as u32);
                } else if self.tree[w] != tv {
                    return Some(if tv == SRC { a } else { self.sister[ai] });
                } else if self.ts[w] <= self.ts[vi] && self.dist[w] > self.dist[vi] {
                    self.parent[w] = self.sister[ai];
                    self.ts[w] = self.ts[vi];
                    self.dist[w] = self.dist[vi] + 1;
                }
            }
            self.active.pop_front();
            self.is_active[vi] = false;
        }
        None
    }

    fn augment(&mut self, mid: u32) {
        let mid = mid as usize;
        let s_end = self.head[self.sister[mid] as usize] as usize;
        let t_end = self.head[mid] as usize;
        let mut bottleneck = self.rcap[mid];
        let mut u = s_end;
        loop {
            let p = self.parent[u];
            if p == TERMINAL {
                bottleneck = bottleneck.min(self.tr[u]);
                break;
            }
            bottleneck = bottleneck.min(self.rcap[self.sister[p as usize] as usize]);
            u = self.head[p as usize] as usize;
        }
        let mut u = t_end;
        loop {
            let p = self.parent[u];
            if p == TERMINAL {
                bottleneck = bottleneck.min(-self.tr[u]);
                break;
            }
            bottleneck = bottleneck.min(self.rcap[p as usize]);
            u = self.head[p as usize] as usize;
        }

        self.rcap[mid] -= bottleneck;
        self.rcap[self.sister[mid] as usize] += bottleneck;
        let mut u = s_end;
        loop {
            let p = self.parent[u];
            if p == TERMINAL {
                self.tr[u] -= bottleneck;
                if self.tr[u] <= 0.0 {
                    self.tr[u] = 0.0;
                    self.make_orphan(u);
                }
                break;
            }
            let pi = p as usize;
            let sp = self.sister[pi] as usize;
            self.rcap[sp] -= bottleneck;
            self.rcap[pi] += bottleneck;
            if self.rcap[sp] <= 0.0 {
                self.rcap[sp] = 0.0;
                self.make_orphan(u);
            }
            u = self.head[pi] as usize;
        }
        let mut u = t_end;
        loop {
            let p = self.parent[u];
            if p == TERMINAL {
                self.tr[u] += bottleneck;
                if self.tr[u] >= 0.0 {
                    self.tr[u] = 0.0;
                    self.make_orphan(u);
                }
                break;
            }
            let pi = p as usize;
            self.rcap[pi] -= bottleneck;
            self.rcap[self.sister[pi] as usize] += bottleneck;
            if self.rcap[pi] <= 0.0 {
                self.rcap[pi] = 0.0;
                self.make_orphan(u);
            }
            u = self.head[pi] as usize;
        }
        self.flow += bottleneck;
    }

    fn make_orphan(&mut self, u: usize) {
        self.parent[u] = ORPHAN;
        self.orphans.push_back(u as u32);
    }

    fn adopt(&mut self) {
        while let Some(v) = self.orphans.pop_front() {
            let vi = v as usize;
            let tv = self.tree[vi];
            let mut best_arc = NONE;
            let mut best_d = u32::MAX;
            for a in self.first[vi]..self.first[vi + 1] {
                let ai = a as usize;
                let w = self.head[ai] as usize;
                if self.tree[w] != tv || self.parent[w] == NONE {
                    continue;
                }
                let cap = if tv == SRC { self.rcap[self.sister[ai] as usize] } else { self.rcap[ai] };
                if cap <= 0.0 {
                    continue;
                }
                // does w still hang off a terminal?
                let mut j = w;
                let mut d: u32 = 0;
                let valid = loop {
                    if self.ts[j] == self.time {
                        d += self.dist[j];
                        break true;
                    }
                    let p = self.parent[j];
                    d += 1;
                    if p == TERMINAL {
                        self.ts[j] = self.time;
                        self.dist[j] = 1;
                        break true;
                    }
                    if p == ORPHAN {
                        break false;
                    }
                    j = self.head[p as usize] as usize;
                };
                if valid {
                    if d < best_d {
                        best_d = d;
                        best_arc = a;
                    }
                    let mut j = w;
                    let mut dd = d;
                    while self.ts[j] != self.time {
                        self.ts[j] = self.time;
                        self.dist[j] = dd;
                        dd = dd.saturating_sub(1);
                        j = self.head[self.parent[j] as usize] as usize;
                    }
                }
            }
            if best_arc != NONE {
                self.parent[vi] = best_arc;
                self.ts[vi] = self.time;
                self.dist[vi] = best_d + 1;
                continue;
            }
            for a in self.first[vi]..self.first[vi + 1] {
                let ai = a as usize;
                let w = self.head[ai] as usize;
                if self.tree[w] != tv || self.parent[w] == NONE {
                    continue;
                }
                let cap = if tv == SRC { self.rcap[self.sister[ai] as usize] } else { self.rcap[ai] };
                if cap > 0.0 {
                    self.activate(w as u32);
                }
                let p = self.parent[w];
                if p != TERMINAL && p != ORPHAN && self.head[p as usize] as usize == vi {
                    self.make_orphan(w);
                }
            }
            self.tree[vi] = FREE;
            self.parent[vi] = NONE;
        }
    }

    fn run(&mut self) {
        while let Some(mid) = self.grow() {
            self.time += 1;
            self.augment(mid);
            self.adopt();
        }
    }
}

/// Maximum flow value and a minimum cut (source side = nodes reachable from
/// the source in the residual graph).
pub fn max_flow_min_cut(net: &FlowNetwork) -> MinCut {
    let mut s = Solver::build(net);
    s.run();
    let mut source_side: Vec<bool> = s.tree.iter().map(|&t| t == SRC).collect();
    source_side[net.source] = true;
    source_side[net.sink] = false;
    MinCut { flow: s.flow, source_side }
}
