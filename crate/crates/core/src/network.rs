//! Directed neighbor graphs with self-arcs, strong-connectivity checks,
//! flocking matrices, and time-indexed graph schedules including agent
//! dropout. Vertices are 0-based internally; configuration files use
//! 1-based labels.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Directed graph on vertices 0..m with an arc j -> i whenever j is a
/// neighbor of i. `in_neighbors[i]` is the neighbor set N_i, which by
/// convention always contains i itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    m: usize,
    in_neighbors: Vec<BTreeSet<usize>>,
}

impl Digraph {
    /// Build from neighbor sets; every N_i must contain i.
    pub fn from_neighbor_sets(neighbors: Vec<BTreeSet<usize>>) -> Result<Self> {
        let m = neighbors.len();
        if m == 0 {
            return Err(Error::Config("graph must have at least one vertex".into()));
        }
        for (i, set) in neighbors.iter().enumerate() {
            if !set.contains(&i) {
                return Err(Error::Config(format!(
                    "vertex {} is missing its self-arc",
                    i + 1
                )));
            }
            if let Some(&v) = set.iter().find(|&&v| v >= m) {
                return Err(Error::Config(format!(
                    "vertex {} lists out-of-range neighbor {}",
                    i + 1,
                    v + 1
                )));
            }
        }
        Ok(Digraph {
            m,
            in_neighbors: neighbors,
        })
    }

    pub fn complete(m: usize) -> Self {
        let all: BTreeSet<usize> = (0..m).collect();
        Digraph {
            m,
            in_neighbors: vec![all; m],
        }
    }

    pub fn self_loops_only(m: usize) -> Self {
        Digraph {
            m,
            in_neighbors: (0..m).map(|i| BTreeSet::from([i])).collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.m
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.in_neighbors[i]
    }

    /// Subgraph induced on `keep` (sorted, deduplicated), relabelled to
    /// contiguous 0..keep.len().
    pub fn induced(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::Config("cannot drop every vertex".into()));
        }
        let pos = |v: usize| keep.iter().position(|&k| k == v);
        let mut neighbors = Vec::with_capacity(keep.len());
        for &v in keep {
            if v >= self.m {
                return Err(Error::Config(format!("vertex {} out of range", v + 1)));
            }
            let set: BTreeSet<usize> = self.in_neighbors[v]
                .iter()
                .filter_map(|&u| pos(u))
                .collect();
            neighbors.push(set);
        }
        Digraph::from_neighbor_sets(neighbors)
    }
}

/// True iff every vertex can reach every other. Forward and backward
/// traversals from vertex 0 over the arc set.
pub fn is_strongly_connected(g: &Digraph) -> bool {
    let m = g.vertex_count();
    // arcs j -> i: out-edges of j are {i : j in N_i}
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); m];
    for i in 0..m {
        for &j in g.neighbors(i) {
            out[j].push(i);
        }
    }
    let reach = |edges: &dyn Fn(usize) -> Vec<usize>| -> usize {
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in edges(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    };
    let fwd = reach(&|u| out[u].clone());
    let bwd = reach(&|u| g.neighbors(u).iter().copied().collect());
    fwd == m && bwd == m
}

/// Flocking matrix F = D^{-1} A' of a self-arced digraph: row i carries
/// 1/|N_i| in column s for each s in N_i. Row-stochastic by construction.
pub fn flocking_matrix(g: &Digraph) -> DMatrix<f64> {
    let m = g.vertex_count();
    let mut f = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let deg = g.neighbors(i).len() as f64;
        for &s in g.neighbors(i) {
            f[(i, s)] = 1.0 / deg;
        }
    }
    f
}

/// What to do when a served graph fails strong connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConnectivityPolicy {
    /// Refuse to serve the graph (the convergence certificate is void).
    #[default]
    Error,
    /// Serve it anyway; callers run outside the certified regime.
    Warn,
}

/// Time-indexed source of neighbor graphs.
#[derive(Debug, Clone)]
pub enum ScheduleMode {
    Static(Digraph),
    /// (switch time, graph) pairs; a graph listed at time s is active on
    /// [s, next switch). The first entry must be at time 0.
    Piecewise(Vec<(f64, Digraph)>),
    /// Seeded random strongly connected graph, redrawn every `dwell`
    /// seconds; deterministic in (seed, floor(t / dwell)).
    Generator {
        m: usize,
        density: f64,
        seed: u64,
        dwell: f64,
    },
}

#[derive(Debug, Clone)]
pub struct GraphSchedule {
    mode: ScheduleMode,
    /// (time, vertex) pairs; from `time` onward the vertex and all its
    /// incident arcs disappear. Vertices are 0-based.
    dropouts: Vec<(f64, usize)>,
    policy: ConnectivityPolicy,
}

impl GraphSchedule {
    pub fn new(mode: ScheduleMode, dropouts: Vec<(f64, usize)>, policy: ConnectivityPolicy) -> Result<Self> {
        let m = match &mode {
            ScheduleMode::Static(g) => g.vertex_count(),
            ScheduleMode::Piecewise(pieces) => {
                if pieces.is_empty() {
                    return Err(Error::Config("piecewise schedule needs at least one piece".into()));
                }
                if pieces[0].0 != 0.0 {
                    return Err(Error::Config("first piecewise graph must start at t = 0".into()));
                }
                if pieces.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Config("piecewise switch times must increase".into()));
                }
                let m = pieces[0].1.vertex_count();
                if pieces.iter().any(|(_, g)| g.vertex_count() != m) {
                    return Err(Error::Config("piecewise graphs must share the vertex set".into()));
                }
                m
            }
            ScheduleMode::Generator { m, density, dwell, .. } => {
                if *m < 2 {
                    return Err(Error::Config("generator schedule needs m >= 2".into()));
                }
                if !(0.0..=1.0).contains(density) {
                    return Err(Error::Config("generator density must lie in [0, 1]".into()));
                }
                if *dwell <= 0.0 {
                    return Err(Error::Config("generator dwell must be positive".into()));
                }
                *m
            }
        };
        for &(time, v) in &dropouts {
            if v >= m {
                return Err(Error::Config(format!("dropout vertex {} out of range", v + 1)));
            }
            if !(time > 0.0) {
                return Err(Error::Config("dropout times must be positive".into()));
            }
        }
        let mut dropouts = dropouts;
        dropouts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(GraphSchedule {
            mode,
            dropouts,
            policy,
        })
    }

    pub fn static_graph(g: Digraph) -> Result<Self> {
        GraphSchedule::new(ScheduleMode::Static(g), Vec::new(), ConnectivityPolicy::Error)
    }

    pub fn vertex_count(&self) -> usize {
        match &self.mode {
            ScheduleMode::Static(g) => g.vertex_count(),
            ScheduleMode::Piecewise(pieces) => pieces[0].1.vertex_count(),
            ScheduleMode::Generator { m, .. } => *m,
        }
    }

    pub fn dropouts(&self) -> &[(f64, usize)] {
        &self.dropouts
    }

    pub fn policy(&self) -> ConnectivityPolicy {
        self.policy
    }

    /// Vertices still present at time t (original labels, ascending).
    /// Dropout at time s takes effect for all t >= s; once dropped, a
    /// vertex never reappears.
    pub fn members_at(&self, t: f64) -> Vec<usize> {
        let dropped: BTreeSet<usize> = self
            .dropouts
            .iter()
            .filter(|(time, _)| *time <= t)
            .map(|&(_, v)| v)
            .collect();
        (0..self.vertex_count()).filter(|v| !dropped.contains(v)).collect()
    }

    fn base_graph_at(&self, t: f64) -> Digraph {
        match &self.mode {
            ScheduleMode::Static(g) => g.clone(),
            ScheduleMode::Piecewise(pieces) => {
                // active piece: last switch time <= t
                let idx = pieces
                    .iter()
                    .rposition(|(s, _)| *s <= t)
                    .unwrap_or(0);
                pieces[idx].1.clone()
            }
            ScheduleMode::Generator { m, density, seed, dwell } => {
                let index = (t / dwell).floor().max(0.0) as u64;
                random_strongly_connected(*m, *density, seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
            }
        }
    }

    /// The graph active at time t, restricted to surviving vertices and
    /// relabelled to 0..members.len(). Strong-connectivity violations are
    /// reported per policy.
    pub fn graph_at(&self, t: f64) -> Result<Digraph> {
        if t < 0.0 {
            return Err(Error::Config("schedule queried at negative time".into()));
        }
        let members = self.members_at(t);
        let g = self.base_graph_at(t).induced(&members)?;
        if !is_strongly_connected(&g) {
            match self.policy {
                ConnectivityPolicy::Error => {
                    return Err(Error::Assumption(format!(
                        "graph at t = {t} is not strongly connected"
                    )))
                }
                ConnectivityPolicy::Warn => {
                    eprintln!("warning: graph at t = {t} is not strongly connected");
                }
            }
        }
        Ok(g)
    }
}

/// Random self-arced strongly connected digraph: a random Hamiltonian
/// cycle skeleton plus each remaining arc with probability `density`.
/// Deterministic for a fixed seed.
pub fn random_strongly_connected(m: usize, density: f64, seed: u64) -> Digraph {
    assert!(m >= 2, "need at least two vertices");
    assert!((0.0..=1.0).contains(&density));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // random cycle over a shuffled vertex order
    let mut order: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut neighbors: Vec<BTreeSet<usize>> = (0..m).map(|i| BTreeSet::from([i])).collect();
    for w in 0..m {
        let from = order[w];
        let to = order[(w + 1) % m];
        neighbors[to].insert(from);
    }
    for i in 0..m {
        for j in 0..m {
            if i != j && rng.gen_range(0.0..1.0) < density {
                neighbors[i].insert(j);
            }
        }
    }
    Digraph {
        m,
        in_neighbors: neighbors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sets(v: &[&[usize]]) -> Vec<BTreeSet<usize>> {
        v.iter().map(|s| s.iter().copied().collect()).collect()
    }

    /// N_1 = {1,2}, N_2 = {1,2,3}, N_3 = {2,3} in 1-based labels.
    fn three_agent_graph() -> Digraph {
        Digraph::from_neighbor_sets(sets(&[&[0, 1], &[0, 1, 2], &[1, 2]])).unwrap()
    }

    #[test]
    fn requires_self_arcs() {
        assert!(Digraph::from_neighbor_sets(sets(&[&[1], &[1]])).is_err());
    }

    #[test]
    fn complete_graph_is_strongly_connected() {
        assert!(is_strongly_connected(&Digraph::complete(3)));
    }

    #[test]
    fn chain_with_self_arcs_is_not_strongly_connected() {
        let g = Digraph::from_neighbor_sets(sets(&[&[0], &[0, 1], &[1, 2]])).unwrap();
        assert!(!is_strongly_connected(&g));
    }

    #[test]
    fn three_agent_example_is_strongly_connected() {
        assert!(is_strongly_connected(&three_agent_graph()));
    }

    #[test]
    fn flocking_matrix_of_three_agent_graph() {
        let f = flocking_matrix(&three_agent_graph());
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.5, 0.5, 0.0,
                1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0,
                0.0, 0.5, 0.5,
            ],
        );
        assert_relative_eq!(f, expected, epsilon = 1e-15);
    }

    #[test]
    fn flocking_matrix_edge_cases() {
        assert_relative_eq!(
            flocking_matrix(&Digraph::self_loops_only(4)),
            DMatrix::identity(4, 4),
            epsilon = 1e-15
        );
        let f = flocking_matrix(&Digraph::complete(5));
        assert!(f.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn flocking_matrices_are_row_stochastic_with_positive_diagonal() {
        for seed in 0..20 {
            let g = random_strongly_connected(4, 0.4, seed);
            let f = flocking_matrix(&g);
            for i in 0..4 {
                assert!(f[(i, i)] > 0.0);
                assert_relative_eq!(f.row(i).sum(), 1.0, epsilon = 1e-12);
                assert!(f.row(i).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn static_schedule_serves_its_graph() {
        let s = GraphSchedule::static_graph(three_agent_graph()).unwrap();
        assert_eq!(s.graph_at(0.0).unwrap(), three_agent_graph());
        assert_eq!(s.graph_at(123.4).unwrap(), three_agent_graph());
    }

    #[test]
    fn piecewise_switch_is_right_inclusive() {
        let a = Digraph::complete(3);
        let b = three_agent_graph();
        let s = GraphSchedule::new(
            ScheduleMode::Piecewise(vec![(0.0, a.clone()), (10.0, b.clone())]),
            Vec::new(),
            ConnectivityPolicy::Error,
        )
        .unwrap();
        assert_eq!(s.graph_at(9.99).unwrap(), a);
        assert_eq!(s.graph_at(10.0).unwrap(), b);
    }

    /// Constant self-arced four-vertex graph with arcs in both directions
    /// between every pair except (1,4).
    fn four_agent_resilient_graph() -> Digraph {
        Digraph::from_neighbor_sets(sets(&[
            &[0, 1, 2],
            &[0, 1, 2, 3],
            &[0, 1, 2, 3],
            &[1, 2, 3],
        ]))
        .unwrap()
    }

    #[test]
    fn dropout_leaves_connected_residual_graph() {
        let s = GraphSchedule::new(
            ScheduleMode::Static(four_agent_resilient_graph()),
            vec![(50.0, 1)],
            ConnectivityPolicy::Error,
        )
        .unwrap();
        let before = s.graph_at(49.0).unwrap();
        assert_eq!(before.vertex_count(), 4);
        let after = s.graph_at(60.0).unwrap();
        assert_eq!(after.vertex_count(), 3);
        assert!(is_strongly_connected(&after));
        assert_eq!(s.members_at(60.0), vec![0, 2, 3]);
    }

    #[test]
    fn dropout_is_monotone() {
        let s = GraphSchedule::new(
            ScheduleMode::Static(four_agent_resilient_graph()),
            vec![(5.0, 0), (50.0, 1)],
            ConnectivityPolicy::Error,
        )
        .unwrap();
        assert_eq!(s.members_at(4.9).len(), 4);
        assert_eq!(s.members_at(5.0).len(), 3);
        assert_eq!(s.members_at(49.0).len(), 3);
        assert_eq!(s.members_at(50.0).len(), 2);
        assert_eq!(s.members_at(1e9).len(), 2);
    }

    #[test]
    fn disconnection_is_an_error_by_default() {
        // dropping vertex 1 from a 3-cycle 1 -> 2 -> 3 -> 1 disconnects it
        let cycle = Digraph::from_neighbor_sets(sets(&[&[0, 2], &[0, 1], &[1, 2]])).unwrap();
        assert!(is_strongly_connected(&cycle));
        let s = GraphSchedule::new(
            ScheduleMode::Static(cycle.clone()),
            vec![(1.0, 0)],
            ConnectivityPolicy::Error,
        )
        .unwrap();
        assert!(matches!(s.graph_at(2.0), Err(Error::Assumption(_))));
        let warn = GraphSchedule::new(
            ScheduleMode::Static(cycle),
            vec![(1.0, 0)],
            ConnectivityPolicy::Warn,
        )
        .unwrap();
        assert!(warn.graph_at(2.0).is_ok());
    }

    #[test]
    fn generator_density_extremes() {
        let full = random_strongly_connected(5, 1.0, 42);
        for i in 0..5 {
            assert_eq!(full.neighbors(i).len(), 5);
        }
        let sparse = random_strongly_connected(5, 0.0, 42);
        assert!(is_strongly_connected(&sparse));
        // cycle skeleton plus self-arcs: every in-neighbor set has 2 labels
        for i in 0..5 {
            assert_eq!(sparse.neighbors(i).len(), 2);
        }
    }

    #[test]
    fn generator_is_deterministic_and_always_connected() {
        for seed in 0..30 {
            let a = random_strongly_connected(6, 0.3, seed);
            let b = random_strongly_connected(6, 0.3, seed);
            assert_eq!(a, b);
            assert!(is_strongly_connected(&a));
        }
    }

    #[test]
    fn generator_schedule_is_deterministic_in_time() {
        let s = GraphSchedule::new(
            ScheduleMode::Generator {
                m: 4,
                density: 0.5,
                seed: 9,
                dwell: 0.25,
            },
            Vec::new(),
            ConnectivityPolicy::Error,
        )
        .unwrap();
        assert_eq!(s.graph_at(0.1).unwrap(), s.graph_at(0.2).unwrap());
        assert_eq!(s.graph_at(1.3).unwrap(), s.graph_at(1.3).unwrap());
    }
}
