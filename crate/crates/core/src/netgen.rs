//! Directed follower networks: preferential growth followed by triadic closure.
//!
//! An edge `u -> v` means `u` follows `v`; `v` is a friend of `u` and content
//! flows from `v` to `u`.

use std::io::{BufRead, Write};

use log::debug;
use thiserror::Error;

use crate::sampling::RandomSource;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network parameter: {0}")]
    InvalidParameter(String),
    #[error("triadic closure stalled at clustering {achieved:.4} below target {target}")]
    GenerationFailure { achieved: f64, target: f64 },
    #[error("malformed edge list at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Clustering is re-measured after this many closure edges.
pub const CLUSTERING_CHECK_INTERVAL: usize = 10;

/// Consecutive failed closure attempts before checking whether any candidate
/// edge is left at all.
const STALL_LIMIT: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    out_edges: Vec<Vec<u32>>,
    in_edges: Vec<Vec<u32>>,
    seed_nodes: usize,
}

impl Network {
    pub fn empty(n: usize) -> Self {
        Self {
            out_edges: vec![Vec::new(); n],
            in_edges: vec![Vec::new(); n],
            seed_nodes: 0,
        }
    }

    /// Build from an explicit edge list. Self-loops and duplicates are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        let mut net = Self::empty(n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(NetworkError::InvalidParameter(format!(
                    "edge {u}->{v} out of range for {n} nodes"
                )));
            }
            if !net.add_edge(u, v) {
                return Err(NetworkError::InvalidParameter(format!(
                    "self-loop or duplicate edge {u}->{v}"
                )));
            }
        }
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.out_edges.len()
    }

    /// Number of nodes in the initial clique. These may have out-degree below `m`.
    pub fn seed_nodes(&self) -> usize {
        self.seed_nodes
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    /// Agents that `u` follows.
    pub fn friends(&self, u: usize) -> &[u32] {
        &self.out_edges[u]
    }

    /// Agents that follow `u`.
    pub fn followers(&self, u: usize) -> &[u32] {
        &self.in_edges[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out_edges[u].contains(&(v as u32))
    }

    /// Insert `u -> v`, returning false for self-loops and existing edges.
    pub fn add_edge(&mut self, u: usize, v: usize) -> bool {
        if u == v || self.has_edge(u, v) {
            return false;
        }
        self.out_edges[u].push(v as u32);
        self.in_edges[v].push(u as u32);
        true
    }

    /// All edges as `(follower, friend)` in insertion order per follower.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v as usize)))
    }

    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "source,target")?;
        for (u, v) in self.edges() {
            writeln!(w, "{u},{v}")?;
        }
        w.flush()
    }

    /// Read a `source,target` edge list. The agent count is one past the
    /// largest id unless `n` is given.
    pub fn read_edge_list<R: BufRead>(r: R, n: Option<usize>) -> Result<Self, NetworkError> {
        let mut edges = Vec::new();
        let mut lines = r.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).transpose()?;
        if header.as_deref().map(str::trim) != Some("source,target") {
            return Err(NetworkError::Parse {
                line: 1,
                reason: "expected header `source,target`".into(),
            });
        }
        for (i, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| NetworkError::Parse { line: i + 1, reason };
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| parse_err("expected two comma-separated ids".into()))?;
            let u = a.trim().parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
            let v = b.trim().parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
            edges.push((u, v));
        }
        let inferred = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        let n = n.unwrap_or(inferred);
        if n < inferred {
            return Err(NetworkError::InvalidParameter(format!(
                "edge list references node {} but n = {n}",
                inferred - 1
            )));
        }
        Self::from_edges(n, &edges)
    }

    /// Sorted, deduplicated neighbour lists of the undirected projection.
    fn undirected_neighbours(&self) -> Vec<Vec<u32>> {
        (0..self.n())
            .map(|u| {
                let mut nb: Vec<u32> = self.out_edges[u]
                    .iter()
                    .chain(self.in_edges[u].iter())
                    .copied()
                    .collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect()
    }
}

/// Grow a network by directed preferential attachment.
///
/// The first `m` nodes form a clique with every ordered pair present. Each
/// later node adds `m` edges to distinct existing nodes, each drawn with
/// probability proportional to in-degree + 1.
pub fn grow_preferential(n: usize, m: usize, rng: &mut RandomSource) -> Result<Network, NetworkError> {
    if m < 1 || n < m {
        return Err(NetworkError::InvalidParameter(format!(
            "need n >= m >= 1, got n = {n}, m = {m}"
        )));
    }
    let mut net = Network::empty(n);
    net.seed_nodes = m;
    // One ticket per node plus one per incoming edge: a uniform ticket is
    // then an (in-degree + 1)-weighted node.
    let mut tickets: Vec<u32> = Vec::with_capacity(n + n * m);
    for u in 0..m {
        for v in 0..m {
            if u != v {
                net.add_edge(u, v);
            }
        }
    }
    for v in 0..m {
        tickets.extend(std::iter::repeat_n(v as u32, net.in_edges[v].len() + 1));
    }
    let mut targets = Vec::with_capacity(m);
    for u in m..n {
        targets.clear();
        // Rejecting repeats against fixed weights is sequential sampling
        // without replacement.
        while targets.len() < m {
            let t = tickets[rng.index(tickets.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            net.add_edge(u, t as usize);
            tickets.push(t);
        }
        tickets.push(u as u32);
    }
    Ok(net)
}

/// Average local clustering coefficient of the undirected projection.
/// Nodes with fewer than two neighbours count as zero.
pub fn undirected_clustering(net: &Network) -> f64 {
    let n = net.n();
    if n == 0 {
        return 0.0;
    }
    let nbrs = net.undirected_neighbours();
    let mut mark = vec![false; n];
    let mut total = 0.0;
    for nb in &nbrs {
        let k = nb.len();
        if k < 2 {
            continue;
        }
        for &a in nb {
            mark[a as usize] = true;
        }
        // Each closed pair {a, b} is seen from both a and b.
        let mut closed = 0usize;
        for &a in nb {
            closed += nbrs[a as usize].iter().filter(|&&b| mark[b as usize]).count();
        }
        for &a in nb {
            mark[a as usize] = false;
        }
        total += closed as f64 / (k * (k - 1)) as f64;
    }
    total / n as f64
}

/// Add friend-of-friend edges `u -> w` (for `u -> v -> w`) until the
/// undirected clustering reaches `target_cc`.
pub fn add_triadic_closure(
    mut net: Network,
    target_cc: f64,
    rng: &mut RandomSource,
) -> Result<Network, NetworkError> {
    if !(target_cc > 0.0 && target_cc < 1.0) {
        return Err(NetworkError::InvalidParameter(format!(
            "clustering target {target_cc} must lie in (0, 1)"
        )));
    }
    let mut cc = undirected_clustering(&net);
    if cc >= target_cc {
        return Ok(net);
    }
    // Closure never gives a friendless node a friend, so this set is fixed.
    let active: Vec<usize> = (0..net.n()).filter(|&u| !net.friends(u).is_empty()).collect();
    if active.is_empty() {
        return Err(NetworkError::GenerationFailure { achieved: cc, target: target_cc });
    }
    let mut since_check = 0usize;
    let mut stalled = 0usize;
    let mut added = 0usize;
    loop {
        let u = active[rng.index(active.len())];
        let friends = net.friends(u);
        let v = friends[rng.index(friends.len())] as usize;
        let fof = net.friends(v);
        let closed = if fof.is_empty() {
            false
        } else {
            let w = fof[rng.index(fof.len())] as usize;
            w != u && net.add_edge(u, w)
        };
        if closed {
            added += 1;
            since_check += 1;
            stalled = 0;
            if since_check == CLUSTERING_CHECK_INTERVAL {
                since_check = 0;
                cc = undirected_clustering(&net);
                if cc >= target_cc {
                    break;
                }
            }
        } else {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                stalled = 0;
                cc = undirected_clustering(&net);
                if cc >= target_cc {
                    break;
                }
                if !has_closure_candidate(&net) {
                    return Err(NetworkError::GenerationFailure { achieved: cc, target: target_cc });
                }
            }
        }
    }
    debug!("triadic closure added {added} edges, clustering {cc:.4}");
    Ok(net)
}

fn has_closure_candidate(net: &Network) -> bool {
    (0..net.n()).any(|u| {
        net.friends(u).iter().any(|&v| {
            net.friends(v as usize)
                .iter()
                .any(|&w| w as usize != u && !net.has_edge(u, w as usize))
        })
    })
}

/// Preferential growth then closure to `target_cc`, all from one seed.
pub fn generate(n: usize, m: usize, target_cc: f64, seed: u64) -> Result<Network, NetworkError> {
    let mut rng = RandomSource::new(seed);
    let net = grow_preferential(n, m, &mut rng)?;
    add_triadic_closure(net, target_cc, &mut rng)
}
