//! Encoding and decoding orders at shared physical nodes, the coupling
//! matrices they induce, and the search for good orders.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::linalg;
use crate::netmodel::{Coupling, NetworkSpec};
use crate::politewf::check_structure;
use crate::pwf_solvers::{algorithm_pr1, Pr1Init, PwfOptions};
use crate::sinr_algs::{algorithm_a, algorithm_b, SolverOptions, SolverResult};

/// Whether a group shares a transmitter (dirty paper coding) or a receiver
/// (successive interference cancellation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Tx,
    Rx,
}

/// Per-node link orders: `encode[node]` lists the links of transmitter
/// `node`, first-encoded first; `decode[node]` lists the links of receiver
/// `node`, first-decoded first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderSpec {
    pub encode: BTreeMap<usize, Vec<usize>>,
    pub decode: BTreeMap<usize, Vec<usize>>,
}

fn links_by_node(nodes: impl Iterator<Item = usize>) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (l, n) in nodes.enumerate() {
        m.entry(n).or_default().push(l);
    }
    m
}

impl OrderSpec {
    /// Every node encodes and decodes its links in index order.
    pub fn by_index(net: &NetworkSpec) -> Self {
        Self {
            encode: links_by_node((0..net.links()).map(|l| net.tx_node(l))),
            decode: links_by_node((0..net.links()).map(|l| net.rx_node(l))),
        }
    }

    /// Starts from index order and overrides the nodes named by each list;
    /// a list's node is the common node of its links.
    pub fn from_lists(net: &NetworkSpec, encode: &[Vec<usize>], decode: &[Vec<usize>]) -> Result<Self> {
        let mut spec = Self::by_index(net);
        for (lists, kind) in [(encode, NodeKind::Tx), (decode, NodeKind::Rx)] {
            for list in lists {
                let first = *list.first().ok_or_else(|| Error::Config("empty order list".into()))?;
                if first >= net.links() {
                    return Err(Error::Config(format!("link {first} out of range")));
                }
                let node = node_of(net, kind, first);
                spec.slot_mut(kind).insert(node, list.clone());
            }
        }
        spec.validate(net)?;
        Ok(spec)
    }

    pub fn slot(&self, kind: NodeKind) -> &BTreeMap<usize, Vec<usize>> {
        match kind {
            NodeKind::Tx => &self.encode,
            NodeKind::Rx => &self.decode,
        }
    }

    pub fn slot_mut(&mut self, kind: NodeKind) -> &mut BTreeMap<usize, Vec<usize>> {
        match kind {
            NodeKind::Tx => &mut self.encode,
            NodeKind::Rx => &mut self.decode,
        }
    }

    /// Checks that each node's list is a permutation of exactly its links.
    pub fn validate(&self, net: &NetworkSpec) -> Result<()> {
        let want = Self::by_index(net);
        for kind in [NodeKind::Tx, NodeKind::Rx] {
            let have = self.slot(kind);
            let need = want.slot(kind);
            if have.len() != need.len() {
                return Err(Error::InvalidInput(format!("{kind:?} order covers the wrong set of nodes")));
            }
            for (node, links) in need {
                let got = have
                    .get(node)
                    .ok_or_else(|| Error::InvalidInput(format!("{kind:?} node {node} has no order")))?;
                let a: BTreeSet<_> = got.iter().collect();
                let b: BTreeSet<_> = links.iter().collect();
                if got.len() != links.len() || a != b {
                    return Err(Error::InvalidInput(format!(
                        "{kind:?} node {node} order {got:?} is not a permutation of {links:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Compact text form, e.g. `enc[0:1>0] dec[0:2>0>1]`.
    pub fn label(&self) -> String {
        let part = |m: &BTreeMap<usize, Vec<usize>>| {
            m.iter()
                .filter(|(_, v)| v.len() > 1)
                .map(|(n, v)| format!("{n}:{}", v.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(">")))
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!("enc[{}] dec[{}]", part(&self.encode), part(&self.decode))
    }
}

fn node_of(net: &NetworkSpec, kind: NodeKind, l: usize) -> usize {
    match kind {
        NodeKind::Tx => net.tx_node(l),
        NodeKind::Rx => net.rx_node(l),
    }
}

/// Coupling induced by `order`: at a shared node the link handled later is
/// free of interference from links handled earlier; every other pair of
/// links interferes.
pub fn order_to_coupling(net: &NetworkSpec, order: &OrderSpec) -> Result<Coupling> {
    order.validate(net)?;
    let mut phi = Coupling::full(net.links());
    for kind in [NodeKind::Tx, NodeKind::Rx] {
        for links in order.slot(kind).values() {
            for (j, &later) in links.iter().enumerate() {
                for &earlier in &links[..j] {
                    phi.set(later, earlier, false);
                }
            }
        }
    }
    Ok(phi)
}

/// Why a coupling matrix cannot be realized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CouplingViolation {
    /// `Φ[l][k] = 0` although links `l` and `k` share no node.
    NoSharedNode { l: usize, k: usize },
    /// The cancellations required at a node form a cycle.
    Cycle { kind: NodeKind, node: usize, links: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CouplingVerdict {
    Valid(OrderSpec),
    Invalid(CouplingViolation),
}

/// Decides whether `phi` is realizable by some encoding order at each
/// transmitter and decoding order at each receiver, where a link may cancel
/// interference only from links handled earlier at a node it shares.
pub fn validate_coupling(phi: &Coupling, net: &NetworkSpec) -> Result<CouplingVerdict> {
    let n = net.links();
    if phi.len() != n {
        return Err(Error::Dimension(format!("coupling is {}x{}, network has {n} links", phi.len(), phi.len())));
    }
    // Each zero entry (l, k) needs k before l at a node shared by both.
    let mut forced: Vec<(NodeKind, usize, usize)> = Vec::new();
    let mut choice: Vec<(usize, usize)> = Vec::new();
    for l in 0..n {
        for k in 0..n {
            if l == k || phi.get(l, k) {
                continue;
            }
            let tx = net.tx_node(l) == net.tx_node(k);
            let rx = net.rx_node(l) == net.rx_node(k);
            match (tx, rx) {
                (false, false) => return Ok(CouplingVerdict::Invalid(CouplingViolation::NoSharedNode { l, k })),
                (true, false) => forced.push((NodeKind::Tx, k, l)),
                (false, true) => forced.push((NodeKind::Rx, k, l)),
                (true, true) => choice.push((k, l)),
            }
        }
    }
    let mut first_cycle = None;
    for mask in 0u64..(1u64 << choice.len().min(20)) {
        let mut edges = forced.clone();
        for (bit, &(a, b)) in choice.iter().enumerate() {
            edges.push((if mask >> bit & 1 == 1 { NodeKind::Rx } else { NodeKind::Tx }, a, b));
        }
        match orders_from_edges(net, &edges) {
            Ok(spec) => return Ok(CouplingVerdict::Valid(spec)),
            Err(v) => {
                first_cycle.get_or_insert(v);
            }
        }
    }
    Ok(CouplingVerdict::Invalid(first_cycle.expect("at least one assignment tried")))
}

fn orders_from_edges(net: &NetworkSpec, edges: &[(NodeKind, usize, usize)]) -> std::result::Result<OrderSpec, CouplingViolation> {
    let mut spec = OrderSpec::by_index(net);
    for kind in [NodeKind::Tx, NodeKind::Rx] {
        let nodes: Vec<(usize, Vec<usize>)> = spec.slot(kind).iter().map(|(a, b)| (*a, b.clone())).collect();
        for (node, links) in nodes {
            let local: Vec<(usize, usize)> = edges
                .iter()
                .filter(|(kd, a, _)| *kd == kind && node_of(net, kind, *a) == node)
                .map(|&(_, a, b)| (a, b))
                .collect();
            match topo_sort(&links, &local) {
                Some(order) => {
                    spec.slot_mut(kind).insert(node, order);
                }
                None => {
                    let mut stuck: Vec<usize> = links
                        .iter()
                        .copied()
                        .filter(|x| local.iter().any(|&(a, b)| a == *x || b == *x))
                        .collect();
                    stuck.sort_unstable();
                    return Err(CouplingViolation::Cycle { kind, node, links: stuck });
                }
            }
        }
    }
    Ok(spec)
}

/// Kahn's algorithm with smallest-index tie-breaking; `None` on a cycle.
fn topo_sort(items: &[usize], before: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indeg: BTreeMap<usize, usize> = items.iter().map(|&i| (i, 0)).collect();
    for &(_, b) in before {
        *indeg.get_mut(&b)? += 1;
    }
    let mut ready: BTreeSet<usize> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&i, _)| i).collect();
    let mut out = Vec::with_capacity(items.len());
    while let Some(&x) = ready.iter().next() {
        ready.remove(&x);
        out.push(x);
        for &(a, b) in before {
            if a == x {
                let d = indeg.get_mut(&b)?;
                *d -= 1;
                if *d == 0 {
                    ready.insert(b);
                }
            }
        }
    }
    (out.len() == items.len()).then_some(out)
}

/// A set of co-located links whose interference relations with the rest of
/// the network do not depend on their internal order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoGroup {
    pub kind: NodeKind,
    pub node: usize,
    pub links: Vec<usize>,
}

fn uniform_outside(phi: &Coupling, set: &[usize], kind: NodeKind) -> bool {
    let n = phi.len();
    let inside: BTreeSet<usize> = set.iter().copied().collect();
    (0..n).filter(|x| !inside.contains(x)).all(|x| {
        let val = |l: usize| match kind {
            NodeKind::Tx => phi.get(x, l),
            NodeKind::Rx => phi.get(l, x),
        };
        set.iter().all(|&l| val(l) == val(set[0]))
    })
}

/// Maximal pseudo-BC (transmitter) and pseudo-MAC (receiver) groups: link
/// sets of size ≥ 2 at one node whose coupling columns (BC) or rows (MAC)
/// agree outside the set.
pub fn pseudo_groups(phi: &Coupling, net: &NetworkSpec) -> Vec<PseudoGroup> {
    let spec = OrderSpec::by_index(net);
    let mut out = Vec::new();
    for kind in [NodeKind::Tx, NodeKind::Rx] {
        for (&node, links) in spec.slot(kind) {
            let m = links.len();
            if !(2..=16).contains(&m) {
                continue;
            }
            let mut subsets: Vec<Vec<usize>> = (1u32..(1 << m))
                .filter(|s| s.count_ones() >= 2)
                .map(|s| (0..m).filter(|&j| s >> j & 1 == 1).map(|j| links[j]).collect())
                .filter(|set: &Vec<usize>| uniform_outside(phi, set, kind))
                .collect();
            subsets.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
            let mut taken: BTreeSet<usize> = BTreeSet::new();
            for set in subsets {
                if set.iter().all(|l| !taken.contains(l)) {
                    taken.extend(set.iter().copied());
                    out.push(PseudoGroup { kind, node, links: set });
                }
            }
        }
    }
    out
}

/// Maximum-eigenmode-beamforming order: at each transmitter, links are
/// encoded by increasing dominant singular value of the direct channel; at
/// each receiver, decoded by decreasing dominant singular value. Ties keep
/// index order.
pub fn meb_order(net: &NetworkSpec) -> OrderSpec {
    let smax: Vec<f64> = (0..net.links())
        .map(|l| linalg::thin_svd(net.channel(l, l)).s.first().copied().unwrap_or(0.0))
        .collect();
    let mut spec = OrderSpec::by_index(net);
    for links in spec.encode.values_mut() {
        links.sort_by(|&a, &b| smax[a].total_cmp(&smax[b]));
    }
    for links in spec.decode.values_mut() {
        links.sort_by(|&a, &b| smax[b].total_cmp(&smax[a]));
    }
    spec
}

/// Reorders each group's links within the positions they occupy in the
/// node's order, following `key` ascending (ties by link index).
pub(crate) fn reorder_group(order: &mut OrderSpec, group: &PseudoGroup, key: impl Fn(usize) -> f64) {
    let Some(list) = order.slot_mut(group.kind).get_mut(&group.node) else {
        return;
    };
    let positions: Vec<usize> = (0..list.len()).filter(|&i| group.links.contains(&list[i])).collect();
    let mut sorted = group.links.clone();
    sorted.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    for (pos, l) in positions.into_iter().zip(sorted) {
        list[pos] = l;
    }
}

/// Solver used inside Algorithm O.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderSolver {
    /// Algorithm A at this total power; larger `C` is better.
    A { total_power: f64 },
    /// Algorithm B; lower sum power is better.
    B,
    /// Algorithm PR1; lower sum power is better.
    Pr1,
}

impl OrderSolver {
    fn solve(&self, net: &NetworkSpec, phi: &Coupling, targets: &[f64], tol: f64) -> Result<SolverResult> {
        match *self {
            OrderSolver::A { total_power } => {
                algorithm_a(net, phi, targets, total_power, &SolverOptions::default().with_tol(tol))
            }
            OrderSolver::B => algorithm_b(net, phi, targets, &SolverOptions::default().with_tol(tol)),
            OrderSolver::Pr1 => {
                algorithm_pr1(net, phi, targets, &Pr1Init::default(), &PwfOptions::default().with_tol(tol))
                    .map(|r| r.result)
            }
        }
    }

    /// Objective oriented so that smaller is better.
    fn cost(&self, r: &SolverResult) -> f64 {
        match self {
            OrderSolver::A { .. } => -r.objective,
            _ => r.sum_power,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrderOptions {
    /// Nodes whose order is never changed.
    pub frozen: BTreeSet<(NodeKind, usize)>,
    pub max_rounds: usize,
    /// Number of recent orders remembered for cycle detection.
    pub window: usize,
    /// Convergence tolerance passed to the inner solver.
    pub tol: f64,
}

impl Default for OrderOptions {
    fn default() -> Self {
        Self { frozen: BTreeSet::new(), max_rounds: 50, window: 10, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct OrderOutcome {
    /// Best order visited.
    pub order: OrderSpec,
    pub result: SolverResult,
    /// Every order solved, with its result objective, in visiting order.
    pub visited: Vec<(OrderSpec, f64)>,
    /// The order update reached a fixed point rather than a cycle or the
    /// round limit.
    pub stable: bool,
}

/// Improves the encoding and decoding orders by sorting every pseudo BC by
/// descending polite water-filling level (encode) and every pseudo MAC by
/// ascending level (decode), re-solving after each change.
///
/// Stops at a fixed point, on revisiting one of the last `window` orders, or
/// after `max_rounds`, and returns the best order visited.
pub fn algorithm_o(
    net: &NetworkSpec,
    targets: &[f64],
    solver: OrderSolver,
    initial: OrderSpec,
    opts: &OrderOptions,
) -> Result<OrderOutcome> {
    initial.validate(net)?;
    let mut order = initial;
    let mut recent: Vec<OrderSpec> = Vec::new();
    let mut visited = Vec::new();
    let mut best: Option<(OrderSpec, SolverResult, f64)> = None;
    let mut stable = false;
    for round in 0..opts.max_rounds {
        let phi = order_to_coupling(net, &order)?;
        let result = match solver.solve(net, &phi, targets, opts.tol) {
            Ok(r) => r,
            // A later order can be infeasible for B or PR1; keep the best so far.
            Err(Error::Infeasible(_)) if round > 0 => break,
            Err(e) => return Err(e),
        };
        let cost = solver.cost(&result);
        visited.push((order.clone(), result.objective));
        let levels = check_structure(net, &phi, &result.covs_f)?.levels();
        if best.as_ref().is_none_or(|b| cost < b.2) {
            best = Some((order.clone(), result, cost));
        }
        let mut next = order.clone();
        for group in pseudo_groups(&phi, net) {
            if opts.frozen.contains(&(group.kind, group.node)) {
                continue;
            }
            match group.kind {
                NodeKind::Tx => reorder_group(&mut next, &group, |l| -levels[l]),
                NodeKind::Rx => reorder_group(&mut next, &group, |l| levels[l]),
            }
        }
        if next == order {
            stable = true;
            break;
        }
        recent.push(order);
        if recent.len() > opts.window {
            recent.remove(0);
        }
        if recent.contains(&next) {
            break;
        }
        order = next;
    }
    let (order, result, _) = best.ok_or_else(|| Error::InvalidInput("no rounds allowed".into()))?;
    Ok(OrderOutcome { order, result, visited, stable })
}

/// Every combination of per-node orders, in a deterministic sequence.
/// Intended for small networks.
pub fn exhaustive_orders(net: &NetworkSpec) -> Vec<OrderSpec> {
    let base = OrderSpec::by_index(net);
    let mut slots: Vec<(NodeKind, usize, Vec<usize>)> = Vec::new();
    for (kind, map) in [(NodeKind::Tx, &base.encode), (NodeKind::Rx, &base.decode)] {
        for (&node, links) in map {
            if links.len() > 1 {
                slots.push((kind, node, links.clone()));
            }
        }
    }
    let mut out = vec![base];
    for (kind, node, links) in slots {
        let perms = permutations(&links);
        out = out
            .into_iter()
            .flat_map(|spec| {
                perms.iter().map(move |p| {
                    let mut s = spec.clone();
                    s.slot_mut(kind).insert(node, p.clone());
                    s
                })
            })
            .collect();
    }
    out
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}
