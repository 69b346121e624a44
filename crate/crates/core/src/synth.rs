//! Synthetic urban trajectories: shortest-path walks on a thinned lattice
//! with Gaussian measurement noise.
//!
//! Lattice vertex `(row, col)` of an `n x n` graph sits at
//! `(col / (n - 1), row / (n - 1))`, so the full lattice spans the unit
//! square.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Trajectory, TrajectoryPoint, TrajectorySet};

/// Interpolated points per unit edge.
pub const POINTS_PER_EDGE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub thin_p: f64,
    pub m: usize,
    pub noise_std: f64,
    pub k_pois: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("lattice side must be at least 2, got {}", self.n)));
        }
        if !(0.0..1.0).contains(&self.thin_p) {
            return Err(Error::invalid(format!("thin_p must lie in [0, 1), got {}", self.thin_p)));
        }
        if self.m == 0 {
            return Err(Error::invalid("at least one trajectory is required"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid(format!("noise_std must be non-negative, got {}", self.noise_std)));
        }
        if self.k_pois == 0 || self.k_pois > self.n * self.n {
            return Err(Error::invalid(format!("k_pois must lie in 1..={}, got {}", self.n * self.n, self.k_pois)));
        }
        Ok(())
    }

    /// Named presets: two-POI corridor scenes.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "data1" => Ok(Self { n: 12, thin_p: 0.35, m: 120, noise_std: 0.01, k_pois: 2, seed: 1 }),
            "data2" => Ok(Self { n: 12, thin_p: 0.45, m: 150, noise_std: 0.012, k_pois: 2, seed: 2 }),
            other => Err(Error::invalid(format!("unknown preset {other:?}; expected data1 or data2"))),
        }
    }
}

/// Undirected lattice subgraph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGraph {
    n: usize,
    adj: Vec<Vec<usize>>,
}

impl LatticeGraph {
    pub fn full(n: usize) -> Self {
        let mut adj = vec![Vec::new(); n * n];
        for (a, b) in lattice_edges(n) {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Self { n, adj }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn vertex_count(&self) -> usize {
        self.n * self.n
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Edges as `(a, b)` with `a < b`, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = (0..self.vertex_count())
            .flat_map(|a| self.adj[a].iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Position of vertex `v` in the unit square.
    pub fn position(&self, v: usize) -> (f64, f64) {
        let scale = (self.n - 1) as f64;
        ((v % self.n) as f64 / scale, (v / self.n) as f64 / scale)
    }

    /// Hop distances from `src`; `usize::MAX` when unreachable.
    pub fn bfs(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertex_count()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs(0).iter().all(|&d| d != usize::MAX)
    }

    fn remove_edge(&mut self, a: usize, b: usize) {
        self.adj[a].retain(|&x| x != b);
        self.adj[b].retain(|&x| x != a);
    }

    fn insert_edge(&mut self, a: usize, b: usize) {
        for (u, w) in [(a, b), (b, a)] {
            if let Err(pos) = self.adj[u].binary_search(&w) {
                self.adj[u].insert(pos, w);
            }
        }
    }

    fn reaches(&self, a: usize, b: usize) -> bool {
        self.bfs(a)[b] != usize::MAX
    }
}

fn lattice_edges(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(2 * n * (n - 1));
    for r in 0..n {
        for c in 0..n {
            let v = r * n + c;
            if c + 1 < n {
                edges.push((v, v + 1));
            }
            if r + 1 < n {
                edges.push((v, v + n));
            }
        }
    }
    edges
}

/// `n x n` lattice with each edge, visited in a seeded random order,
/// removed with probability `thin_p` unless it is a bridge of the current
/// graph.
pub fn generate_graph(n: usize, thin_p: f64, seed: u64) -> Result<LatticeGraph> {
    if n < 2 {
        return Err(Error::invalid(format!("lattice side must be at least 2, got {n}")));
    }
    if !(0.0..1.0).contains(&thin_p) {
        return Err(Error::invalid(format!("thin_p must lie in [0, 1), got {thin_p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = LatticeGraph::full(n);
    let mut order = lattice_edges(n);
    order.shuffle(&mut rng);
    for (a, b) in order {
        if !rng.gen_bool(thin_p) {
            continue;
        }
        graph.remove_edge(a, b);
        if !graph.reaches(a, b) {
            graph.insert_edge(a, b);
        }
    }
    Ok(graph)
}

/// `k` distinct lattice vertices drawn uniformly without replacement,
/// returned as unit-square positions.
pub fn place_pois(k: usize, seed: u64, graph: &LatticeGraph) -> Result<Vec<(f64, f64)>> {
    let total = graph.vertex_count();
    if k == 0 || k > total {
        return Err(Error::invalid(format!("k must lie in 1..={total}, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, total, k).into_iter().map(|v| graph.position(v)).collect())
}

/// Shortest path from `from` to `to`, choosing uniformly among the
/// neighbors that stay on some shortest path at each step.
pub fn random_shortest_path<R: Rng>(graph: &LatticeGraph, from: usize, to: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = graph.bfs(to);
    if dist[from] == usize::MAX {
        return Err(Error::invalid("graph is disconnected"));
    }
    let mut path = vec![from];
    let mut cur = from;
    while cur != to {
        let next: Vec<usize> = graph.neighbors(cur).iter().copied().filter(|&w| dist[w] + 1 == dist[cur]).collect();
        cur = *next.choose(rng).expect("a shortest-path successor exists");
        path.push(cur);
    }
    Ok(path)
}

/// `m` origin-destination walks. Each path is interpolated at
/// [`POINTS_PER_EDGE`] points per edge and perturbed with isotropic noise;
/// uid is the trajectory index and t the point index.
pub fn sample_trajectories(graph: &LatticeGraph, m: usize, noise_std: f64, seed: u64) -> Result<TrajectorySet> {
    if !graph.is_connected() {
        return Err(Error::invalid("graph is disconnected"));
    }
    if m == 0 {
        return Err(Error::invalid("at least one trajectory is required"));
    }
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(format!("noise_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = graph.vertex_count();
    let mut trajectories = Vec::with_capacity(m);
    for idx in 0..m {
        let origin = rng.gen_range(0..nv);
        let dest = loop {
            let d = rng.gen_range(0..nv);
            if d != origin {
                break d;
            }
        };
        let path = random_shortest_path(graph, origin, dest, &mut rng)?;
        let mut points = Vec::with_capacity(path.len() * POINTS_PER_EDGE);
        let mut emit = |x: f64, y: f64, rng: &mut ChaCha8Rng| {
            let (nx, ny) = if noise_std > 0.0 { (noise.sample(rng), noise.sample(rng)) } else { (0.0, 0.0) };
            points.push(TrajectoryPoint { t: points.len() as f64, x: x + nx, y: y + ny });
        };
        for pair in path.windows(2) {
            let (x0, y0) = graph.position(pair[0]);
            let (x1, y1) = graph.position(pair[1]);
            for k in 0..POINTS_PER_EDGE {
                let s = k as f64 / POINTS_PER_EDGE as f64;
                emit(x0 + s * (x1 - x0), y0 + s * (y1 - y0), &mut rng);
            }
        }
        let (xe, ye) = graph.position(dest);
        emit(xe, ye, &mut rng);
        trajectories.push(Trajectory { uid: idx.to_string(), points });
    }
    TrajectorySet::new(trajectories)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub data: TrajectorySet,
    pub pois: Vec<(f64, f64)>,
    pub graph: LatticeGraph,
}

/// Graph, POIs and trajectories from one config; each stage draws from its
/// own seed stream.
pub fn build_dataset(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let graph = generate_graph(config.n, config.thin_p, config.seed)?;
    let pois = place_pois(config.k_pois, config.seed.wrapping_add(1), &graph)?;
    let data = sample_trajectories(&graph, config.m, config.noise_std, config.seed.wrapping_add(2))?;
    Ok(SynthDataset { data, pois, graph })
}
