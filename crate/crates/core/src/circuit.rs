//! LV circuit topology: cable segments, customer connection points (CCPs)
//! and the fuses / link boxes that select which segments are energised.
//!
//! A [`Circuit`] is always validated: under its switch states the enabled
//! segments reachable from the source form a tree, and every CCP hangs off
//! that tree. Construction goes through [`Circuit::from_doc`], which takes the
//! plain serialisable [`CircuitDoc`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Maximum number of switches accepted by [`Circuit::enumerate_topology_options`].
pub const MAX_ENUMERATED_SWITCHES: usize = 16;

/// Default nominal phase-to-neutral voltage.
pub const DEFAULT_NOMINAL_VOLTAGE: f64 = 230.0;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CableSegment {
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    /// Resistance per metre (ohm/m).
    pub r_per_m: f64,
    /// Reactance per metre (ohm/m).
    pub x_per_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Single,
    Multi,
}

/// Customer connection point: where a property's service cable meets the feeder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ccp {
    pub node: NodeId,
    pub households: u32,
    pub kind: PropertyKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchKind {
    Fuse,
    LinkBox,
}

/// Switch position. `Closed` orders before `Open`, which fixes the
/// enumeration order of topology options.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchState {
    Closed,
    Open,
}

/// A fuse or link box sitting on an existing cable segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchableElement {
    pub kind: SwitchKind,
    pub from: NodeId,
    pub to: NodeId,
    pub state: SwitchState,
}

fn default_nominal_voltage() -> f64 {
    DEFAULT_NOMINAL_VOLTAGE
}

/// Canonical, serialisable circuit description (the on-disk JSON shape).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDoc {
    #[serde(default = "default_nominal_voltage")]
    pub nominal_voltage: f64,
    pub source: NodeId,
    pub nodes: Vec<NodeId>,
    pub segments: Vec<CableSegment>,
    pub ccps: Vec<Ccp>,
    #[serde(default)]
    pub switches: Vec<SwitchableElement>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CircuitError {
    #[error("duplicate node \"{0}\"")]
    DuplicateNode(NodeId),
    #[error("unknown node \"{node}\" referenced by {context}")]
    UnknownNode { node: NodeId, context: String },
    #[error("segment {index} ({from}-{to}) is a self-loop")]
    SelfLoop {
        index: usize,
        from: NodeId,
        to: NodeId,
    },
    #[error("duplicate edge {from}-{to} (segment {index})")]
    DuplicateEdge {
        index: usize,
        from: NodeId,
        to: NodeId,
    },
    #[error("segment {index} ({from}-{to}): {reason}")]
    InvalidSegment {
        index: usize,
        from: NodeId,
        to: NodeId,
        reason: String,
    },
    #[error("ccp at \"{node}\": {reason}")]
    InvalidCcp { node: NodeId, reason: String },
    #[error("duplicate ccp at node \"{0}\"")]
    DuplicateCcp(NodeId),
    #[error("switch {index} ({from}-{to}) does not sit on any segment")]
    SwitchWithoutSegment {
        index: usize,
        from: NodeId,
        to: NodeId,
    },
    #[error("more than one switch on segment {from}-{to}")]
    DuplicateSwitch { from: NodeId, to: NodeId },
    #[error("cycle: enabled segment {from}-{to} closes a loop")]
    Cycle { from: NodeId, to: NodeId },
    #[error("ccp at \"{0}\" is disconnected from the source")]
    UnreachableCcp(NodeId),
    #[error("node \"{0}\" is not reachable from the source")]
    UnreachableNode(NodeId),
    #[error("nominal voltage must be finite and positive, got {0}")]
    InvalidNominalVoltage(f64),
    #[error("switch state assignment has {got} entries, circuit has {expected} switches")]
    SwitchStateCount { expected: usize, got: usize },
    #[error("too many switches to enumerate: {count} > {max}")]
    TooManySwitches { count: usize, max: usize },
}

/// Enabled-segment tree rooted at the source, in node-index space.
#[derive(Clone, Debug)]
pub struct Tree {
    parent: Vec<Option<usize>>,
    parent_segment: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Tree {
    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Index of the segment joining `node` to its parent.
    pub fn parent_segment(&self, node: usize) -> Option<usize> {
        self.parent_segment[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Reachable nodes in breadth-first order; the first entry is the source.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_reachable(&self, node: usize) -> bool {
        self.parent[node].is_some() || self.order.first() == Some(&node)
    }
}

/// A validated radial LV circuit.
#[derive(Clone, Debug)]
pub struct Circuit {
    doc: CircuitDoc,
    index: BTreeMap<NodeId, usize>,
    source: usize,
    segment_ends: Vec<(usize, usize)>,
    enabled: Vec<bool>,
    ccp_at: Vec<Option<usize>>,
    ccp_nodes: Vec<usize>,
    tree: Tree,
    distance: Vec<f64>,
    upstream_households: Vec<u32>,
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Circuit {
    /// Validates a circuit description.
    pub fn from_doc(doc: CircuitDoc) -> Result<Self, CircuitError> {
        if !(doc.nominal_voltage.is_finite() && doc.nominal_voltage > 0.0) {
            return Err(CircuitError::InvalidNominalVoltage(doc.nominal_voltage));
        }
        let mut index = BTreeMap::new();
        for (i, id) in doc.nodes.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(CircuitError::DuplicateNode(id.clone()));
            }
        }
        let lookup = |id: &NodeId, context: String| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| CircuitError::UnknownNode {
                    node: id.clone(),
                    context,
                })
        };
        let source = lookup(&doc.source, "source".to_string())?;

        let mut segment_ends = Vec::with_capacity(doc.segments.len());
        let mut edge_index = BTreeMap::new();
        for (i, seg) in doc.segments.iter().enumerate() {
            let a = lookup(&seg.from, format!("segment {i}"))?;
            let b = lookup(&seg.to, format!("segment {i}"))?;
            let invalid = |reason: &str| CircuitError::InvalidSegment {
                index: i,
                from: seg.from.clone(),
                to: seg.to.clone(),
                reason: reason.to_string(),
            };
            if a == b {
                return Err(CircuitError::SelfLoop {
                    index: i,
                    from: seg.from.clone(),
                    to: seg.to.clone(),
                });
            }
            if !(seg.length_m.is_finite() && seg.length_m > 0.0) {
                return Err(invalid("length_m must be finite and positive"));
            }
            if !(seg.r_per_m.is_finite() && seg.r_per_m >= 0.0) {
                return Err(invalid("r_per_m must be finite and non-negative"));
            }
            if !(seg.x_per_m.is_finite() && seg.x_per_m >= 0.0) {
                return Err(invalid("x_per_m must be finite and non-negative"));
            }
            if edge_index.insert(edge_key(a, b), i).is_some() {
                return Err(CircuitError::DuplicateEdge {
                    index: i,
                    from: seg.from.clone(),
                    to: seg.to.clone(),
                });
            }
            segment_ends.push((a, b));
        }

        let mut ccp_at = vec![None; doc.nodes.len()];
        let mut ccp_nodes = Vec::with_capacity(doc.ccps.len());
        for (i, ccp) in doc.ccps.iter().enumerate() {
            let n = lookup(&ccp.node, format!("ccp {i}"))?;
            let invalid = |reason: &str| CircuitError::InvalidCcp {
                node: ccp.node.clone(),
                reason: reason.to_string(),
            };
            match ccp.kind {
                PropertyKind::Single if ccp.households != 1 => {
                    return Err(invalid("single property must have exactly 1 household"))
                }
                PropertyKind::Multi if ccp.households < 2 => {
                    return Err(invalid("multi property must have at least 2 households"))
                }
                _ => {}
            }
            if ccp_at[n].is_some() {
                return Err(CircuitError::DuplicateCcp(ccp.node.clone()));
            }
            ccp_at[n] = Some(i);
            ccp_nodes.push(n);
        }

        let mut enabled = vec![true; doc.segments.len()];
        let mut switched = vec![false; doc.segments.len()];
        for (i, sw) in doc.switches.iter().enumerate() {
            let a = lookup(&sw.from, format!("switch {i}"))?;
            let b = lookup(&sw.to, format!("switch {i}"))?;
            let seg = *edge_index.get(&edge_key(a, b)).ok_or_else(|| {
                CircuitError::SwitchWithoutSegment {
                    index: i,
                    from: sw.from.clone(),
                    to: sw.to.clone(),
                }
            })?;
            if switched[seg] {
                return Err(CircuitError::DuplicateSwitch {
                    from: sw.from.clone(),
                    to: sw.to.clone(),
                });
            }
            switched[seg] = true;
            enabled[seg] = sw.state == SwitchState::Closed;
        }

        let n = doc.nodes.len();
        let mut dsu = DisjointSet((0..n).collect());
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (i, &(a, b)) in segment_ends.iter().enumerate() {
            if !enabled[i] {
                continue;
            }
            if !dsu.union(a, b) {
                return Err(CircuitError::Cycle {
                    from: doc.segments[i].from.clone(),
                    to: doc.segments[i].to.clone(),
                });
            }
            adjacency[a].push((b, i));
            adjacency[b].push((a, i));
        }

        let mut parent = vec![None; n];
        let mut parent_segment = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        seen[source] = true;
        order.push(source);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, seg) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    parent_segment[v] = Some(seg);
                    children[u].push(v);
                    order.push(v);
                }
            }
        }
        for &c in &ccp_nodes {
            if !seen[c] {
                return Err(CircuitError::UnreachableCcp(doc.nodes[c].clone()));
            }
        }

        let mut distance = vec![f64::NAN; n];
        let mut upstream_households = vec![0u32; n];
        let households_at = |node: usize| ccp_at[node].map_or(0, |c| doc.ccps[c].households);
        for &u in &order {
            match (parent[u], parent_segment[u]) {
                (Some(p), Some(seg)) => {
                    distance[u] = distance[p] + doc.segments[seg].length_m;
                    upstream_households[u] = upstream_households[p] + households_at(u);
                }
                _ => {
                    distance[u] = 0.0;
                    upstream_households[u] = households_at(u);
                }
            }
        }

        Ok(Circuit {
            tree: Tree {
                parent,
                parent_segment,
                children,
                order,
            },
            doc,
            index,
            source,
            segment_ends,
            enabled,
            ccp_at,
            ccp_nodes,
            distance,
            upstream_households,
        })
    }

    pub fn doc(&self) -> &CircuitDoc {
        &self.doc
    }

    pub fn into_doc(self) -> CircuitDoc {
        self.doc
    }

    pub fn nominal_voltage(&self) -> f64 {
        self.doc.nominal_voltage
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn node_count(&self) -> usize {
        self.doc.nodes.len()
    }

    pub fn node_id(&self, node: usize) -> &NodeId {
        &self.doc.nodes[node]
    }

    pub fn node_index(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn segments(&self) -> &[CableSegment] {
        &self.doc.segments
    }

    /// Node indices of a segment's `(from, to)` ends.
    pub fn segment_ends(&self, segment: usize) -> (usize, usize) {
        self.segment_ends[segment]
    }

    pub fn is_segment_enabled(&self, segment: usize) -> bool {
        self.enabled[segment]
    }

    pub fn ccps(&self) -> &[Ccp] {
        &self.doc.ccps
    }

    /// Node index of each CCP, parallel to [`Circuit::ccps`].
    pub fn ccp_nodes(&self) -> &[usize] {
        &self.ccp_nodes
    }

    pub fn ccp_at(&self, node: usize) -> Option<usize> {
        self.ccp_at[node]
    }

    pub fn switches(&self) -> &[SwitchableElement] {
        &self.doc.switches
    }

    pub fn switch_states(&self) -> Vec<SwitchState> {
        self.doc.switches.iter().map(|s| s.state).collect()
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn total_households(&self) -> u32 {
        self.doc.ccps.iter().map(|c| c.households).sum()
    }

    /// The circuit with the given switch states applied, if it is still radial
    /// and every CCP stays connected.
    pub fn effective_topology(&self, states: &[SwitchState]) -> Result<Circuit, CircuitError> {
        if states.len() != self.doc.switches.len() {
            return Err(CircuitError::SwitchStateCount {
                expected: self.doc.switches.len(),
                got: states.len(),
            });
        }
        let mut doc = self.doc.clone();
        for (sw, &state) in doc.switches.iter_mut().zip(states) {
            sw.state = state;
        }
        Circuit::from_doc(doc)
    }

    /// Every switch-state assignment that yields a valid radial topology.
    ///
    /// Assignments come out in lexicographic order over switch position in the
    /// circuit's switch list, with `Closed < Open`.
    pub fn enumerate_topology_options(&self) -> Result<Vec<Vec<SwitchState>>, CircuitError> {
        let k = self.doc.switches.len();
        if k > MAX_ENUMERATED_SWITCHES {
            return Err(CircuitError::TooManySwitches {
                count: k,
                max: MAX_ENUMERATED_SWITCHES,
            });
        }
        let mut options = Vec::new();
        for mask in 0u32..(1u32 << k) {
            let states: Vec<SwitchState> = (0..k)
                .map(|i| {
                    if mask & (1 << (k - 1 - i)) != 0 {
                        SwitchState::Open
                    } else {
                        SwitchState::Closed
                    }
                })
                .collect();
            if self.effective_topology(&states).is_ok() {
                options.push(states);
            }
        }
        Ok(options)
    }

    fn reachable_index(&self, id: &NodeId) -> Result<usize, CircuitError> {
        let node = self
            .node_index(id)
            .ok_or_else(|| CircuitError::UnknownNode {
                node: id.clone(),
                context: "query".to_string(),
            })?;
        if self.tree.is_reachable(node) {
            Ok(node)
        } else {
            Err(CircuitError::UnreachableNode(id.clone()))
        }
    }

    /// Cable length along the tree path from the source.
    pub fn path_distance(&self, id: &NodeId) -> Result<f64, CircuitError> {
        self.reachable_index(id).map(|n| self.distance[n])
    }

    /// Households at CCPs on the source-to-node path, including the node itself.
    /// Side branches are not counted.
    pub fn households_upstream(&self, id: &NodeId) -> Result<u32, CircuitError> {
        self.reachable_index(id)
            .map(|n| self.upstream_households[n])
    }

    /// [`Circuit::path_distance`] by node index; NaN for unreachable nodes.
    pub fn distance_of(&self, node: usize) -> f64 {
        self.distance[node]
    }

    /// [`Circuit::households_upstream`] by node index.
    pub fn households_upstream_of(&self, node: usize) -> u32 {
        self.upstream_households[node]
    }

    /// Lowest common ancestor of two reachable nodes.
    pub fn common_ancestor(&self, a: usize, b: usize) -> usize {
        let mut on_path = vec![false; self.node_count()];
        let mut x = Some(a);
        while let Some(n) = x {
            on_path[n] = true;
            x = self.tree.parent(n);
        }
        let mut y = b;
        while !on_path[y] {
            y = self
                .tree
                .parent(y)
                .expect("nodes share the source as ancestor");
        }
        y
    }

    /// Cable length of the tree path between two reachable nodes.
    pub fn tree_distance(&self, a: usize, b: usize) -> f64 {
        let lca = self.common_ancestor(a, b);
        (self.distance[a] - self.distance[lca]) + (self.distance[b] - self.distance[lca])
    }
}
