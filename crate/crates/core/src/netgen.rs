//! Two-group random networks with homophily and differential activity.
//!
//! Nodes are either infected (group A) or uninfected (group B). Each unordered
//! pair receives an edge independently with a probability that depends only on
//! the groups of its endpoints. The three block probabilities are solved from
//! the population moments: overall mean degree, the ratio of group mean
//! degrees, and the ratio of A-A to A-B edge probabilities.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Error, PartialEq)]
pub enum NetgenError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible network spec: {name} = {value} violates {bound}")]
    Infeasible {
        name: &'static str,
        value: f64,
        bound: &'static str,
    },
    #[error("malformed network file at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_nodes: usize,
    pub n_infected: usize,
    pub mean_degree: f64,
    /// Ratio of the infected-infected to the infected-uninfected edge probability.
    pub homophily_ratio: f64,
    /// Mean degree of infected nodes over mean degree of uninfected nodes.
    pub differential_activity: f64,
    pub rng_seed: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            n_nodes: 1000,
            n_infected: 200,
            mean_degree: 7.0,
            homophily_ratio: 5.0,
            differential_activity: 1.0,
            rng_seed: 0,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), NetgenError> {
        if self.n_infected >= self.n_nodes {
            return Err(NetgenError::InvalidSpec(format!(
                "n_infected ({}) must be < n_nodes ({})",
                self.n_infected, self.n_nodes
            )));
        }
        for (name, v) in [
            ("mean_degree", self.mean_degree),
            ("homophily_ratio", self.homophily_ratio),
            ("differential_activity", self.differential_activity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(NetgenError::InvalidSpec(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Target mean degrees `(d_A, d_B)` implied by the overall mean and the
    /// differential activity.
    pub fn group_mean_degrees(&self) -> (f64, f64) {
        let n = self.n_nodes as f64;
        let n_a = self.n_infected as f64;
        let n_b = n - n_a;
        let d_b = n * self.mean_degree / (n_a * self.differential_activity + n_b);
        (self.differential_activity * d_b, d_b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockProbabilities {
    pub p_aa: f64,
    pub p_ab: f64,
    pub p_bb: f64,
}

impl BlockProbabilities {
    /// Expected degree of an infected and of an uninfected node.
    pub fn expected_degrees(&self, n_nodes: usize, n_infected: usize) -> (f64, f64) {
        let n_a = n_infected as f64;
        let n_b = (n_nodes - n_infected) as f64;
        let d_a = self.p_aa * (n_a - 1.0) + self.p_ab * n_b;
        let d_b = self.p_ab * n_a + self.p_bb * (n_b - 1.0);
        (d_a, d_b)
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), NetgenError> {
    if value < 0.0 {
        return Err(NetgenError::Infeasible { name, value, bound: "probability >= 0" });
    }
    if value > 1.0 {
        return Err(NetgenError::Infeasible { name, value, bound: "probability <= 1" });
    }
    Ok(())
}

// Slack for round-off when a moment equation is satisfied exactly.
const FEASIBILITY_EPS: f64 = 1e-12;

/// Solves the block edge probabilities reproducing the spec's moments.
pub fn solve_block_probabilities(spec: &NetworkSpec) -> Result<BlockProbabilities, NetgenError> {
    spec.validate()?;
    let n_a = spec.n_infected as f64;
    let n_b = (spec.n_nodes - spec.n_infected) as f64;
    let (d_a, d_b) = spec.group_mean_degrees();

    // d_A = h * p_ab * (n_A - 1) + p_ab * n_B
    let denom_a = spec.homophily_ratio * (n_a - 1.0) + n_b;
    let p_ab = d_a / denom_a;
    let p_aa = spec.homophily_ratio * p_ab;

    // d_B = p_ab * n_A + p_bb * (n_B - 1)
    let residual = d_b - p_ab * n_a;
    let p_bb = if n_b > 1.0 {
        residual / (n_b - 1.0)
    } else {
        if residual.abs() > FEASIBILITY_EPS * d_b.max(1.0) {
            return Err(NetgenError::Infeasible {
                name: "p_ab",
                value: p_ab,
                bound: "uninfected mean degree reachable with a single uninfected node",
            });
        }
        // No uninfected pairs exist; the value never enters the degree equations.
        p_ab
    };

    let snap = |p: f64| if (p - 1.0).abs() < FEASIBILITY_EPS { 1.0 } else if p.abs() < FEASIBILITY_EPS { p.max(0.0) } else { p };
    let probs = BlockProbabilities { p_aa: snap(p_aa), p_ab: snap(p_ab), p_bb: snap(p_bb) };
    check_probability("p_aa", probs.p_aa)?;
    check_probability("p_ab", probs.p_ab)?;
    check_probability("p_bb", probs.p_bb)?;
    Ok(probs)
}

/// Undirected simple graph with a binary infection label per node.
///
/// Neighbor lists are kept sorted so that a network read back from disk is
/// indistinguishable from the generated one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    infected: Vec<bool>,
    adjacency: Vec<Vec<usize>>,
}

impl Network {
    /// Builds a network from an edge list. Duplicate edges are merged;
    /// self-loops and out-of-range ids are rejected.
    pub fn from_edges(
        infected: Vec<bool>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, NetgenError> {
        let n = infected.len();
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(NetgenError::InvalidSpec(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                return Err(NetgenError::InvalidSpec(format!("self-loop at node {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Network { infected, adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.infected.len()
    }

    pub fn n_infected(&self) -> usize {
        self.infected.iter().filter(|&&x| x).count()
    }

    pub fn is_infected(&self, node: usize) -> bool {
        self.infected[node]
    }

    pub fn infected(&self) -> &[bool] {
        &self.infected
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Writes the edge-list text format: a `N n_infected` header, a line of
    /// infected ids, then one `u v` line per edge.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n_nodes(), self.n_infected())?;
        let ids: Vec<String> = (0..self.n_nodes())
            .filter(|&i| self.infected[i])
            .map(|i| i.to_string())
            .collect();
        writeln!(out, "{}", ids.join(" "))?;
        let mut buf = String::new();
        for (u, v) in self.edges() {
            buf.clear();
            let _ = writeln!(buf, "{u} {v}");
            out.write_all(buf.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, NetgenError> {
        let mut lines = input.lines().enumerate();
        let mut next_line = |what: &str| -> Result<(usize, String), NetgenError> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(NetgenError::Parse { line: i + 1, message: e.to_string() }),
                None => Err(NetgenError::Parse { line: 0, message: format!("missing {what}") }),
            }
        };
        let parse = |line: usize, tok: &str| -> Result<usize, NetgenError> {
            tok.parse::<usize>().map_err(|e| NetgenError::Parse { line, message: format!("{tok:?}: {e}") })
        };

        let (ln, header) = next_line("header")?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 2 {
            return Err(NetgenError::Parse { line: ln, message: "expected `N n_infected`".into() });
        }
        let n = parse(ln, head[0])?;
        let n_infected = parse(ln, head[1])?;

        let (ln, ids) = next_line("infected id line")?;
        let mut infected = vec![false; n];
        for tok in ids.split_whitespace() {
            let id = parse(ln, tok)?;
            if id >= n {
                return Err(NetgenError::Parse { line: ln, message: format!("infected id {id} out of range") });
            }
            infected[id] = true;
        }
        let count = infected.iter().filter(|&&x| x).count();
        if count != n_infected {
            return Err(NetgenError::Parse {
                line: ln,
                message: format!("header declares {n_infected} infected nodes, found {count}"),
            });
        }

        let mut edges = Vec::new();
        for (i, l) in lines {
            let l = l.map_err(|e| NetgenError::Parse { line: i + 1, message: e.to_string() })?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            match toks.as_slice() {
                [] => continue,
                [u, v] => edges.push((parse(i + 1, u)?, parse(i + 1, v)?)),
                _ => return Err(NetgenError::Parse { line: i + 1, message: "expected `u v`".into() }),
            }
        }
        Network::from_edges(infected, edges)
    }
}

/// Visits the selected indices of `0..count` when each is kept
/// independently with probability `p`, using geometric skips.
fn bernoulli_indices(count: u64, p: f64, rng: &mut SimRng, mut visit: impl FnMut(u64)) {
    if count == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..count).for_each(visit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut idx: u64 = 0;
    loop {
        // 1 - U lies in (0, 1]; the skip counts failures before the next success.
        let u: f64 = 1.0 - rng.gen::<f64>();
        let skip = (u.ln() / log_q).floor();
        if !skip.is_finite() || skip >= (count - idx) as f64 {
            return;
        }
        idx += skip as u64;
        visit(idx);
        idx += 1;
        if idx >= count {
            return;
        }
    }
}

/// Maps a linear index over the strict lower triangle of an `m × m` matrix
/// (row-major: (1,0), (2,0), (2,1), ...) to its `(row, col)` pair.
fn triangle_pair(k: u64) -> (usize, usize) {
    let mut row = ((((8 * k + 1) as f64).sqrt() + 1.0) / 2.0).floor() as u64;
    // Guard against floating error near perfect squares.
    while row * (row - 1) / 2 > k {
        row -= 1;
    }
    while (row + 1) * row / 2 <= k {
        row += 1;
    }
    let col = k - row * (row - 1) / 2;
    (row as usize, col as usize)
}

/// Draws a network. Infection labels are assigned to a uniformly random
/// subset of `n_infected` nodes; edges are independent within each block.
pub fn generate_network(spec: &NetworkSpec) -> Result<Network, NetgenError> {
    let probs = solve_block_probabilities(spec)?;
    let mut rng = rng_from_seed(spec.rng_seed);
    let n = spec.n_nodes;

    let mut infected = vec![false; n];
    for i in index::sample(&mut rng, n, spec.n_infected) {
        infected[i] = true;
    }
    let group_a: Vec<usize> = (0..n).filter(|&i| infected[i]).collect();
    let group_b: Vec<usize> = (0..n).filter(|&i| !infected[i]).collect();

    let mut edges = Vec::new();
    let triangle = |m: usize| (m as u64) * (m as u64).saturating_sub(1) / 2;

    bernoulli_indices(triangle(group_a.len()), probs.p_aa, &mut rng, |k| {
        let (r, c) = triangle_pair(k);
        edges.push((group_a[r], group_a[c]));
    });
    let n_b = group_b.len() as u64;
    bernoulli_indices(group_a.len() as u64 * n_b, probs.p_ab, &mut rng, |k| {
        edges.push((group_a[(k / n_b) as usize], group_b[(k % n_b) as usize]));
    });
    bernoulli_indices(triangle(group_b.len()), probs.p_bb, &mut rng, |k| {
        let (r, c) = triangle_pair(k);
        edges.push((group_b[r], group_b[c]));
    });

    Network::from_edges(infected, edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStats {
    pub mean_degree: f64,
    pub mean_degree_infected: Option<f64>,
    pub mean_degree_uninfected: Option<f64>,
    /// `None` when a group is empty or the uninfected mean degree is zero.
    pub differential_activity: Option<f64>,
    pub edges_aa: usize,
    pub edges_ab: usize,
    pub edges_bb: usize,
    pub isolates: usize,
}

pub fn network_summary(net: &Network) -> NetworkStats {
    let n = net.n_nodes();
    let (mut sum_a, mut cnt_a, mut sum_b, mut cnt_b) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..n {
        if net.is_infected(i) {
            sum_a += net.degree(i);
            cnt_a += 1;
        } else {
            sum_b += net.degree(i);
            cnt_b += 1;
        }
    }
    let (mut edges_aa, mut edges_ab, mut edges_bb) = (0, 0, 0);
    for (u, v) in net.edges() {
        match (net.is_infected(u), net.is_infected(v)) {
            (true, true) => edges_aa += 1,
            (false, false) => edges_bb += 1,
            _ => edges_ab += 1,
        }
    }
    let mean = |s: usize, c: usize| (c > 0).then(|| s as f64 / c as f64);
    let mean_a = mean(sum_a, cnt_a);
    let mean_b = mean(sum_b, cnt_b);
    let differential_activity = match (mean_a, mean_b) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    NetworkStats {
        mean_degree: if n == 0 { 0.0 } else { (sum_a + sum_b) as f64 / n as f64 },
        mean_degree_infected: mean_a,
        mean_degree_uninfected: mean_b,
        differential_activity,
        edges_aa,
        edges_ab,
        edges_bb,
        isolates: (0..n).filter(|&i| net.degree(i) == 0).count(),
    }
}
