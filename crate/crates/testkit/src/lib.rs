//! Reference computations for checking `lvvc-core`.
//!
//! Each routine here solves the same problem as a core module by a different
//! method (dense nodal solve, Newton–Raphson, Dijkstra, naive loops, finite
//! differences) and reads only the raw circuit description, never the core's
//! tree or sweep internals.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use lvvc_core::circuit::{CableSegment, Ccp, Circuit, CircuitDoc, NodeId, PropertyKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Segment indices that carry current: no switch, or a closed one.
fn enabled_segments(doc: &CircuitDoc) -> Vec<usize> {
    use lvvc_core::circuit::SwitchState;
    (0..doc.segments.len())
        .filter(|&i| {
            let s = &doc.segments[i];
            !doc.switches.iter().any(|sw| {
                sw.state == SwitchState::Open
                    && ((sw.from == s.from && sw.to == s.to)
                        || (sw.from == s.to && sw.to == s.from))
            })
        })
        .collect()
}

fn node_map(doc: &CircuitDoc) -> HashMap<&NodeId, usize> {
    doc.nodes.iter().enumerate().map(|(i, n)| (n, i)).collect()
}

fn adjacency(doc: &CircuitDoc) -> Vec<Vec<(usize, f64)>> {
    let idx = node_map(doc);
    let mut adj = vec![Vec::new(); doc.nodes.len()];
    for i in enabled_segments(doc) {
        let s = &doc.segments[i];
        let (a, b) = (idx[&s.from], idx[&s.to]);
        adj[a].push((b, s.length_m));
        adj[b].push((a, s.length_m));
    }
    adj
}

/// Dijkstra shortest cable distance from `from` to every node (infinite when
/// unreachable).
pub fn dijkstra(doc: &CircuitDoc, from: &NodeId) -> Vec<f64> {
    let idx = node_map(doc);
    let adj = adjacency(doc);
    let mut dist = vec![f64::INFINITY; doc.nodes.len()];
    let start = idx[from];
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((OrdF64(0.0), start)));
    while let Some(Reverse((OrdF64(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((OrdF64(nd), v)));
            }
        }
    }
    dist
}

#[derive(Clone, Copy)]
struct OrdF64(f64);
impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Households on the source-to-`node` path found by depth-first search.
pub fn brute_force_households_upstream(doc: &CircuitDoc, node: &NodeId) -> Option<u32> {
    let idx = node_map(doc);
    let adj = adjacency(doc);
    let target = idx[node];
    let mut path = vec![idx[&doc.source]];
    let mut visited = vec![false; doc.nodes.len()];
    visited[path[0]] = true;
    fn dfs(
        adj: &[Vec<(usize, f64)>],
        target: usize,
        path: &mut Vec<usize>,
        visited: &mut [bool],
    ) -> bool {
        let u = *path.last().unwrap();
        if u == target {
            return true;
        }
        for &(v, _) in &adj[u] {
            if !visited[v] {
                visited[v] = true;
                path.push(v);
                if dfs(adj, target, path, visited) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    if !dfs(&adj, target, &mut path, &mut visited) {
        return None;
    }
    Some(
        path.iter()
            .map(|&n| {
                doc.ccps
                    .iter()
                    .filter(|c| c.node == doc.nodes[n])
                    .map(|c| c.households)
                    .sum::<u32>()
            })
            .sum(),
    )
}

/// Gaussian elimination with partial pivoting on a dense system.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Equivalent resistance from the source to a common return, by nodal
/// analysis: every segment is a resistor `sqrt(R² + X²)`, every CCP with `H`
/// households ties its node to the return through `load_ohm / H`, and 1 A is
/// injected at the source. Only nodes connected to the source take part.
pub fn nodal_thevenin(doc: &CircuitDoc, load_ohm: f64) -> f64 {
    let idx = node_map(doc);
    let reach = dijkstra(doc, &doc.source);
    let live: Vec<usize> = (0..doc.nodes.len())
        .filter(|&i| reach[i].is_finite())
        .collect();
    let pos: HashMap<usize, usize> = live.iter().enumerate().map(|(k, &n)| (n, k)).collect();
    let n = live.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in enabled_segments(doc) {
        let s = &doc.segments[i];
        let (Some(&a), Some(&b)) = (pos.get(&idx[&s.from]), pos.get(&idx[&s.to])) else {
            continue;
        };
        let z = ((s.r_per_m * s.length_m).powi(2) + (s.x_per_m * s.length_m).powi(2)).sqrt();
        let y = 1.0 / z;
        g[a][a] += y;
        g[b][b] += y;
        g[a][b] -= y;
        g[b][a] -= y;
    }
    for c in &doc.ccps {
        let k = pos[&idx[&c.node]];
        g[k][k] += f64::from(c.households) / load_ohm;
    }
    let mut inj = vec![0.0; n];
    let src = pos[&idx[&doc.source]];
    inj[src] = 1.0;
    solve_dense(g, inj)[src]
}

/// Per-phase voltage magnitudes (pu) at every node from a polar
/// Newton–Raphson solve of the bus-admittance equations. `loads_kw[ccp]`
/// gives the per-phase load of each CCP in document order. Nodes not
/// connected to the source get 0.
pub fn newton_power_flow(
    doc: &CircuitDoc,
    loads_kw: &[[f64; 3]],
    source_pu: f64,
    power_factor: f64,
) -> Vec<[f64; 3]> {
    let idx = node_map(doc);
    let reach = dijkstra(doc, &doc.source);
    let live: Vec<usize> = (0..doc.nodes.len())
        .filter(|&i| reach[i].is_finite())
        .collect();
    let pos: HashMap<usize, usize> = live.iter().enumerate().map(|(k, &n)| (n, k)).collect();
    let n = live.len();
    let slack = pos[&idx[&doc.source]];

    // Per-unit on V_base = nominal, S_base = 1 kVA.
    let z_base = doc.nominal_voltage * doc.nominal_voltage / 1000.0;
    let mut gm = vec![vec![0.0; n]; n];
    let mut bm = vec![vec![0.0; n]; n];
    for i in enabled_segments(doc) {
        let s = &doc.segments[i];
        let (Some(&a), Some(&b)) = (pos.get(&idx[&s.from]), pos.get(&idx[&s.to])) else {
            continue;
        };
        let r = s.r_per_m * s.length_m / z_base;
        let x = s.x_per_m * s.length_m / z_base;
        let d = r * r + x * x;
        let (g, b_) = (r / d, -x / d);
        gm[a][a] += g;
        gm[b][b] += g;
        gm[a][b] -= g;
        gm[b][a] -= g;
        bm[a][a] += b_;
        bm[b][b] += b_;
        bm[a][b] -= b_;
        bm[b][a] -= b_;
    }

    let q_ratio = (1.0 - power_factor * power_factor).sqrt() / power_factor;
    let mut out = vec![[0.0; 3]; doc.nodes.len()];
    for phase in 0..3 {
        let mut p_spec = vec![0.0; n];
        let mut q_spec = vec![0.0; n];
        for (c, ccp) in doc.ccps.iter().enumerate() {
            let k = pos[&idx[&ccp.node]];
            p_spec[k] -= loads_kw[c][phase];
            q_spec[k] -= loads_kw[c][phase] * q_ratio;
        }
        let mut vm: Vec<f64> = vec![source_pu; n];
        let mut va = vec![0.0f64; n];
        let unknown: Vec<usize> = (0..n).filter(|&k| k != slack).collect();
        let m = unknown.len();
        for _ in 0..50 {
            let mut p = vec![0.0; n];
            let mut q = vec![0.0; n];
            for i in 0..n {
                for k in 0..n {
                    let t = va[i] - va[k];
                    p[i] += vm[i] * vm[k] * (gm[i][k] * t.cos() + bm[i][k] * t.sin());
                    q[i] += vm[i] * vm[k] * (gm[i][k] * t.sin() - bm[i][k] * t.cos());
                }
            }
            let mut f = vec![0.0; 2 * m];
            for (r, &i) in unknown.iter().enumerate() {
                f[r] = p_spec[i] - p[i];
                f[m + r] = q_spec[i] - q[i];
            }
            if f.iter().all(|v| v.abs() < 1e-13) {
                break;
            }
            let mut jac = vec![vec![0.0; 2 * m]; 2 * m];
            for (r, &i) in unknown.iter().enumerate() {
                for (c, &k) in unknown.iter().enumerate() {
                    let t = va[i] - va[k];
                    if i == k {
                        jac[r][c] = -q[i] - bm[i][i] * vm[i] * vm[i];
                        jac[r][m + c] = p[i] / vm[i] + gm[i][i] * vm[i];
                        jac[m + r][c] = p[i] - gm[i][i] * vm[i] * vm[i];
                        jac[m + r][m + c] = q[i] / vm[i] - bm[i][i] * vm[i];
                    } else {
                        jac[r][c] = vm[i] * vm[k] * (gm[i][k] * t.sin() - bm[i][k] * t.cos());
                        jac[r][m + c] = vm[i] * (gm[i][k] * t.cos() + bm[i][k] * t.sin());
                        jac[m + r][c] = -vm[i] * vm[k] * (gm[i][k] * t.cos() + bm[i][k] * t.sin());
                        jac[m + r][m + c] = vm[i] * (gm[i][k] * t.sin() - bm[i][k] * t.cos());
                    }
                }
            }
            let dx = solve_dense(jac, f);
            for (r, &i) in unknown.iter().enumerate() {
                va[i] += dx[r];
                vm[i] += dx[m + r];
            }
        }
        for (k, &node) in live.iter().enumerate() {
            out[node][phase] = vm[k];
        }
    }
    out
}

/// Quantile by sorting and indexing at rank `p·(n−1)`, blending the two
/// neighbouring order statistics.
pub fn sorted_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] * (1.0 - (h - lo as f64)) + v[hi] * (h - lo as f64)
}

fn naive_selu(x: f64) -> f64 {
    let lambda = 1.0507009873554805;
    let alpha = 1.6732632423543772;
    if x > 0.0 {
        lambda * x
    } else {
        lambda * alpha * (x.exp() - 1.0)
    }
}

/// Forward pass written with explicit index loops over `model.layers`.
pub fn naive_forward(model: &lvvc_core::dlnn::MlpModel, input: &[f64]) -> f64 {
    let mut x = input.to_vec();
    let last = model.layers.len() - 1;
    for (l, layer) in model.layers.iter().enumerate() {
        let mut y = vec![0.0; layer.outputs];
        for j in 0..layer.outputs {
            let mut z = layer.biases[j];
            for i in 0..layer.inputs {
                z += layer.weights[j * layer.inputs + i] * x[i];
            }
            let linear_output =
                l == last && model.output_activation == lvvc_core::dlnn::OutputActivation::Linear;
            y[j] = if linear_output { z } else { naive_selu(z) };
        }
        x = y;
    }
    x[0]
}

/// Central finite-difference gradient of `f` at `params`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], eps: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + eps;
            let up = f(&p);
            p[i] = orig - eps;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// A random radial circuit with `nodes` nodes (source included), each node
/// attached to a uniformly chosen earlier node, and a single-household CCP on
/// every non-source node.
pub fn random_radial_doc(seed: u64, nodes: usize) -> CircuitDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<NodeId> = (0..nodes).map(|i| NodeId::new(format!("N{i}"))).collect();
    let segments = (1..nodes)
        .map(|i| CableSegment {
            from: names[rng.random_range(0..i)].clone(),
            to: names[i].clone(),
            length_m: rng.random_range(5.0..80.0),
            r_per_m: rng.random_range(0.0002..0.0012),
            x_per_m: rng.random_range(0.00005..0.0003),
        })
        .collect();
    let ccps = names[1..]
        .iter()
        .map(|n| Ccp {
            node: n.clone(),
            households: 1,
            kind: PropertyKind::Single,
        })
        .collect();
    CircuitDoc {
        nominal_voltage: 230.0,
        source: names[0].clone(),
        nodes: names,
        segments,
        ccps,
        switches: Vec::new(),
    }
}

/// Random per-phase loads in `[0, max_kw)` for every CCP of `doc`.
pub fn random_loads(seed: u64, ccps: usize, max_kw: f64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..ccps)
        .map(|_| [0; 3].map(|_| rng.random_range(0.0..max_kw)))
        .collect()
}

/// Validates a document, panicking with the error on failure.
pub fn circuit(doc: CircuitDoc) -> Circuit {
    Circuit::from_doc(doc).unwrap_or_else(|e| panic!("invalid test circuit: {e}"))
}
