//! Built-in scenario data: the three-channel oscillator benchmark, its
//! bundled observer matrices, and the four-agent resilience setup.

use std::collections::BTreeSet;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::design::{AgentDesign, SystemModel};
use crate::error::Result;
use crate::network::Digraph;

/// Three-channel, four-state unstable benchmark system: two integrator
/// states coupled through a 0.4 gain and a lightly damped unstable
/// oscillator. Jointly observable, no single channel observable.
pub fn paper_system() -> SystemModel {
    let a = dmatrix![
        0.0, 0.4, 0.0, 0.0;
        0.0, 0.0, 0.0, 0.0;
        0.0, 0.0, 0.0, 2.0;
        0.0, 0.0, -2.0, 0.2
    ];
    let c = vec![
        dmatrix![1.0, 0.0, 0.0, 0.0],
        dmatrix![0.0, 1.0, 0.0, 0.0],
        dmatrix![0.0, 0.0, 1.0, 1.0],
    ];
    SystemModel::new(a, c).expect("benchmark system is valid")
}

/// The benchmark L_i (orthonormal rows).
pub fn paper_l() -> Vec<DMatrix<f64>> {
    let s = 2f64.sqrt() / 2.0;
    vec![
        dmatrix![0.0, 1.0, 0.0, 0.0; 1.0, 0.0, 0.0, 0.0],
        dmatrix![0.0, 1.0, 0.0, 0.0],
        dmatrix![0.0, 0.0, -s, s; 0.0, 0.0, s, s],
    ]
}

/// The benchmark output-injection gains (rate ~2 for every agent; the
/// third is printed to two decimals and achieves 1.9954).
pub fn paper_k() -> Vec<DMatrix<f64>> {
    vec![dmatrix![-20.0; -6.0], dmatrix![-2.0], dmatrix![-0.85; -3.68]]
}

/// Benchmark agents assembled from the bundled matrices.
pub fn paper_designs(model: &SystemModel) -> Result<Vec<AgentDesign>> {
    paper_l()
        .into_iter()
        .zip(paper_k())
        .enumerate()
        .map(|(i, (l, k))| AgentDesign::from_parts(model, i, l, k, None))
        .collect()
}

/// Static benchmark neighbor graph: N_1 = {1,2}, N_2 = {1,2,3},
/// N_3 = {2,3}.
pub fn paper_graph() -> Digraph {
    let sets: Vec<BTreeSet<usize>> = vec![
        BTreeSet::from([0, 1]),
        BTreeSet::from([0, 1, 2]),
        BTreeSet::from([1, 2]),
    ];
    Digraph::from_neighbor_sets(sets).expect("benchmark graph is valid")
}

/// Benchmark initial data.
pub fn paper_initial() -> (DVector<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let x0 = dvector![3.0, 2.0, 4.0, 1.0];
    let w0 = vec![dvector![2.0, 4.0], dvector![3.0], dvector![1.0, 2.0]];
    let xhat0 = vec![dvector![-4.0, -4.0, -4.0, -4.0]; 3];
    (x0, w0, xhat0)
}

/// Four-channel variant for the dropout scenario: the benchmark plus a
/// fourth channel that is observable on its own, so the system stays
/// jointly observable after any single channel is removed.
pub fn resilience_system() -> SystemModel {
    let base = paper_system();
    let mut c = base.channels().to_vec();
    c.push(dmatrix![1.0, 0.0, 1.0, 0.0]);
    SystemModel::new(base.a().clone(), c).expect("resilience system is valid")
}

/// Constant self-arced four-vertex graph with arcs in both directions
/// between every pair except (1,4); stays strongly connected after the
/// removal of any one vertex.
pub fn resilience_graph() -> Digraph {
    let sets: Vec<BTreeSet<usize>> = vec![
        BTreeSet::from([0, 1, 2]),
        BTreeSet::from([0, 1, 2, 3]),
        BTreeSet::from([0, 1, 2, 3]),
        BTreeSet::from([1, 2, 3]),
    ];
    Digraph::from_neighbor_sets(sets).expect("resilience graph is valid")
}
