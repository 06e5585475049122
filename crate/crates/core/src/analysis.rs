//! Certification machinery: the mixed matrix norm on block matrices,
//! the contraction coefficient of projected averaging products, the
//! iteration/rate formulas, and the per-window transition matrices
//! Omega_j / Theta_j of the stacked estimate-error recursion.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::AgentDesign;
use crate::error::{Error, Result};
use crate::network::{flocking_matrix, GraphSchedule};
use crate::numerics::{mat_exp, spectral_norm};

/// Block matrix with a fixed block grid; blocks may be rectangular as
/// long as each grid row/column has a consistent dimension.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    data: DMatrix<f64>,
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(dims.len() + 1);
    let mut acc = 0;
    for &d in dims {
        off.push(acc);
        acc += d;
    }
    off.push(acc);
    off
}

impl BlockMatrix {
    pub fn zeros(row_dims: Vec<usize>, col_dims: Vec<usize>) -> Self {
        let row_offsets = offsets(&row_dims);
        let col_offsets = offsets(&col_dims);
        let data = DMatrix::zeros(*row_offsets.last().unwrap(), *col_offsets.last().unwrap());
        BlockMatrix {
            row_dims,
            col_dims,
            row_offsets,
            col_offsets,
            data,
        }
    }

    /// Uniform m x m grid of n x n blocks backed by `data`.
    pub fn from_dense_uniform(m: usize, n: usize, data: DMatrix<f64>) -> Self {
        assert_eq!(data.nrows(), m * n);
        assert_eq!(data.ncols(), m * n);
        let dims = vec![n; m];
        BlockMatrix {
            row_offsets: offsets(&dims),
            col_offsets: offsets(&dims),
            row_dims: dims.clone(),
            col_dims: dims,
            data,
        }
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        let total: usize = dims.iter().sum();
        let mut b = BlockMatrix::zeros(dims.clone(), dims);
        b.data = DMatrix::identity(total, total);
        b
    }

    /// Block-diagonal from per-block (possibly rectangular) matrices.
    pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> Self {
        let row_dims: Vec<usize> = blocks.iter().map(|b| b.nrows()).collect();
        let col_dims: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
        let mut out = BlockMatrix::zeros(row_dims, col_dims);
        for (i, b) in blocks.iter().enumerate() {
            out.set_block(i, i, b);
        }
        out
    }

    /// F (x) I_n for an m x m weight matrix F: block (i, j) is F_ij I_n.
    pub fn kron_with_identity(f: &DMatrix<f64>, n: usize) -> Self {
        let m = f.nrows();
        assert_eq!(m, f.ncols());
        let mut out = BlockMatrix::zeros(vec![n; m], vec![n; m]);
        for i in 0..m {
            for j in 0..m {
                let w = f[(i, j)];
                if w != 0.0 {
                    let mut block = DMatrix::<f64>::zeros(n, n);
                    block.fill_diagonal(w);
                    out.set_block(i, j, &block);
                }
            }
        }
        out
    }

    pub fn block_rows(&self) -> usize {
        self.row_dims.len()
    }

    pub fn block_cols(&self) -> usize {
        self.col_dims.len()
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.data
            .view(
                (self.row_offsets[i], self.col_offsets[j]),
                (self.row_dims[i], self.col_dims[j]),
            )
            .clone_owned()
    }

    pub fn set_block(&mut self, i: usize, j: usize, block: &DMatrix<f64>) {
        assert_eq!(block.nrows(), self.row_dims[i]);
        assert_eq!(block.ncols(), self.col_dims[j]);
        self.data
            .view_mut(
                (self.row_offsets[i], self.col_offsets[j]),
                (self.row_dims[i], self.col_dims[j]),
            )
            .copy_from(block);
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn mul(&self, other: &BlockMatrix) -> BlockMatrix {
        assert_eq!(self.col_dims, other.row_dims, "block grids incompatible");
        BlockMatrix {
            row_dims: self.row_dims.clone(),
            col_dims: other.col_dims.clone(),
            row_offsets: self.row_offsets.clone(),
            col_offsets: other.col_offsets.clone(),
            data: &self.data * &other.data,
        }
    }

    pub fn add(&self, other: &BlockMatrix) -> BlockMatrix {
        assert_eq!(self.row_dims, other.row_dims);
        assert_eq!(self.col_dims, other.col_dims);
        BlockMatrix {
            row_dims: self.row_dims.clone(),
            col_dims: self.col_dims.clone(),
            row_offsets: self.row_offsets.clone(),
            col_offsets: self.col_offsets.clone(),
            data: &self.data + &other.data,
        }
    }

    pub fn scale(&self, factor: f64) -> BlockMatrix {
        BlockMatrix {
            row_dims: self.row_dims.clone(),
            col_dims: self.col_dims.clone(),
            row_offsets: self.row_offsets.clone(),
            col_offsets: self.col_offsets.clone(),
            data: &self.data * factor,
        }
    }
}

/// Mixed matrix norm: the induced infinity norm of the m x m matrix of
/// block spectral norms, i.e. the largest block-row sum of |M_ij|_2.
/// Sub-multiplicative on compatible block grids.
pub fn mixed_norm(m: &BlockMatrix) -> f64 {
    (0..m.block_rows())
        .map(|i| {
            (0..m.block_cols())
                .map(|j| spectral_norm(&m.block(i, j)))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionMethod {
    /// Enumerate the whole sequence class; the resulting certificate is
    /// exact.
    Exact,
    /// Random subsample of the class: rho is a lower bound and gamma an
    /// uncertified estimate.
    Sampled { budget: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct ContractionCert {
    pub rho: f64,
    pub gamma: f64,
    pub exact: bool,
    pub sequences_checked: usize,
    /// Length of the projection products in the class.
    pub sequence_length: usize,
    pub warnings: Vec<String>,
}

/// Default cap on the enumeration size m^((m-1)^2).
pub const ENUMERATION_CAP: usize = 10_000_000;

/// Length of the products in the contraction class. The standard
/// length (m-1)^2 is used for m >= 3; for m <= 2 no product of that
/// length can contain every projection, so the length is extended to m
/// and the certificate carries a warning.
pub fn contraction_sequence_length(m: usize) -> usize {
    let base = (m - 1) * (m - 1);
    if m <= 2 {
        base.max(m)
    } else {
        base
    }
}

fn gamma_from_rho(m: usize, rho: f64) -> f64 {
    let denom = (m as f64).powi(((m - 1) * (m - 1)) as i32);
    1.0 - (m as f64 - 1.0) * (1.0 - rho) / denom
}

/// Maximum spectral norm over products P_{j_1} ... P_{j_len} in which
/// every projection occurs at least once, and the contraction
/// coefficient gamma derived from it. The projections must be symmetric
/// idempotent with trivially intersecting kernels.
pub fn contraction_coefficient(
    projections: &[DMatrix<f64>],
    method: ContractionMethod,
    cap: usize,
) -> Result<ContractionCert> {
    let m = projections.len();
    if m < 2 {
        return Err(Error::Assumption(
            "contraction certificate needs at least two agents".into(),
        ));
    }
    let n = projections[0].nrows();
    for (i, p) in projections.iter().enumerate() {
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::Config(format!("projection {} has wrong shape", i + 1)));
        }
        let scale = spectral_norm(p).max(1.0);
        if spectral_norm(&(p - p.transpose())) > 1e-9 * scale {
            return Err(Error::Config(format!("projection {} is not symmetric", i + 1)));
        }
        if spectral_norm(&(p * p - p)) > 1e-9 * scale {
            return Err(Error::Config(format!("projection {} is not idempotent", i + 1)));
        }
    }
    // the ranges of the P_i are the per-agent unobservable subspaces;
    // their intersection is zero (joint observability) iff the stacked
    // complements I - P_i have rank n, since ran P = ker(I - P)
    let mut stacked = DMatrix::<f64>::zeros(m * n, n);
    let identity = DMatrix::<f64>::identity(n, n);
    for (i, p) in projections.iter().enumerate() {
        stacked.view_mut((i * n, 0), (n, n)).copy_from(&(&identity - p));
    }
    if crate::numerics::rank_default(&stacked)? != n {
        return Err(Error::Assumption(
            "the agents' unobservable subspaces intersect non-trivially".into(),
        ));
    }

    let len = contraction_sequence_length(m);
    let mut warnings = Vec::new();
    if m <= 2 {
        warnings.push(format!(
            "product length extended from {} to {} so every projection can occur",
            (m - 1) * (m - 1),
            len
        ));
    }

    let full_mask: u32 = (1u32 << m) - 1;
    let (rho, checked, exact) = match method {
        ContractionMethod::Exact => {
            let total = (m as f64).powi(len as i32);
            if total > cap as f64 {
                return Err(Error::Config(format!(
                    "exact enumeration of {total:.3e} sequences exceeds the cap {cap}; use sampling"
                )));
            }
            // depth-first enumeration with shared prefix products,
            // parallel over the first index
            let (rho, count) = (0..m)
                .into_par_iter()
                .map(|first| {
                    let mut best = 0.0f64;
                    let mut count = 0usize;
                    let mut stack: Vec<(DMatrix<f64>, u32, usize)> =
                        vec![(projections[first].clone(), 1 << first, 1)];
                    while let Some((prefix, mask, depth)) = stack.pop() {
                        if depth == len {
                            if mask == full_mask {
                                count += 1;
                                best = best.max(spectral_norm(&prefix));
                            }
                            continue;
                        }
                        // a sequence can still become valid only if the
                        // missing labels fit in the remaining slots
                        let missing = (full_mask & !mask).count_ones() as usize;
                        if missing > len - depth {
                            continue;
                        }
                        for j in 0..m {
                            stack.push((&prefix * &projections[j], mask | (1 << j), depth + 1));
                        }
                    }
                    (best, count)
                })
                .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
            (rho, count, true)
        }
        ContractionMethod::Sampled { budget, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut best = 0.0f64;
            let mut count = 0usize;
            while count < budget {
                let seq: Vec<usize> = (0..len).map(|_| rng.gen_range(0..m)).collect();
                let mask = seq.iter().fold(0u32, |acc, &j| acc | (1 << j));
                if mask != full_mask {
                    continue;
                }
                let mut prod = projections[seq[0]].clone();
                for &j in &seq[1..] {
                    prod *= &projections[j];
                }
                best = best.max(spectral_norm(&prod));
                count += 1;
            }
            (best, count, false)
        }
    };

    if exact && rho >= 1.0 - 1e-12 {
        return Err(Error::Assumption(format!(
            "contraction failed: rho = {rho} is not below one"
        )));
    }
    let gamma = gamma_from_rho(m, rho);
    if !exact {
        warnings.push("gamma estimated from a sampled lower bound on rho; uncertified".into());
    }
    Ok(ContractionCert {
        rho,
        gamma,
        exact,
        sequences_checked: checked,
        sequence_length: len,
        warnings,
    })
}

/// Divisor used for the integer quotient r: one more than the
/// contraction product length.
pub fn quotient_divisor(m: usize) -> usize {
    contraction_sequence_length(m) + 1
}

/// Smallest q making the per-window contraction beat the inter-window
/// growth: the least integer strictly greater than
/// (1 + zeta T / ln(1/gamma)) ((m-1)^2 + 1), floored at one.
pub fn min_iterations(zeta: f64, t_period: f64, gamma: f64, m: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Assumption(format!(
            "need 0 < gamma < 1 for iteration selection, got {gamma}"
        )));
    }
    if t_period <= 0.0 {
        return Err(Error::Config("event period must be positive".into()));
    }
    let bound = (1.0 + zeta * t_period / (1.0 / gamma).ln()) * quotient_divisor(m) as f64;
    let q = (bound.floor() as i64) + 1;
    Ok(q.max(1) as usize)
}

/// Observer-rate threshold: a configured omega must strictly exceed
/// (r/T) ln(1/gamma) - zeta.
pub fn min_observer_rate(r: usize, t_period: f64, gamma: f64, zeta: f64) -> f64 {
    (r as f64 / t_period) * (1.0 / gamma).ln() - zeta
}

/// Certified exponential rate lambda = (r/T) ln(1/gamma) - zeta.
/// Fails when the result is non-positive (q too small).
pub fn certified_rate(r: usize, t_period: f64, gamma: f64, zeta: f64) -> Result<f64> {
    let lambda = min_observer_rate(r, t_period, gamma, zeta);
    if lambda <= 0.0 {
        return Err(Error::Assumption(format!(
            "certified rate is non-positive ({lambda:.3e}); increase q"
        )));
    }
    Ok(lambda)
}

/// Sample instants of the compute window before event j: tau_k =
/// t_j - (1 - (k-1)/q) tau for k = 1..q.
pub fn window_times(j: usize, t_period: f64, tau: f64, q: usize) -> Vec<f64> {
    let t_j = j as f64 * t_period;
    (0..q)
        .map(|k| (t_j - tau) + tau * k as f64 / q as f64)
        .collect()
}

/// Block-diagonal projection P, one block per design.
pub fn block_projection(designs: &[&AgentDesign]) -> BlockMatrix {
    let blocks: Vec<DMatrix<f64>> = designs.iter().map(|d| d.p.clone()).collect();
    BlockMatrix::block_diagonal(&blocks)
}

/// Block-diagonal estimator gain Q; block columns have per-agent widths.
pub fn block_q(designs: &[&AgentDesign]) -> BlockMatrix {
    let blocks: Vec<DMatrix<f64>> = designs.iter().map(|d| d.q.clone()).collect();
    BlockMatrix::block_diagonal(&blocks)
}

fn block_exp(a: &DMatrix<f64>, t: f64, m: usize) -> Result<BlockMatrix> {
    let e = mat_exp(a, t)?;
    Ok(BlockMatrix::block_diagonal(&vec![e; m]))
}

/// The q projected-averaging factors P (F_j(k) (x) I) of the window
/// before event j, ordered k = 1..q.
fn window_factors(
    designs: &[&AgentDesign],
    schedule: &GraphSchedule,
    j: usize,
    t_period: f64,
    tau: f64,
    q: usize,
) -> Result<Vec<BlockMatrix>> {
    let n = designs[0].p.nrows();
    let p = block_projection(designs);
    window_times(j, t_period, tau, q)
        .iter()
        .map(|&t| {
            let g = schedule.graph_at(t)?;
            if g.vertex_count() != designs.len() {
                return Err(Error::Config(format!(
                    "schedule serves {} vertices at t = {t} but {} designs were given",
                    g.vertex_count(),
                    designs.len()
                )));
            }
            let f = flocking_matrix(&g);
            Ok(p.mul(&BlockMatrix::kron_with_identity(&f, n)))
        })
        .collect()
}

/// Event-to-event transition matrix of the stacked estimate error:
/// Omega_j = e^{Abar tau} P(F_j(q) (x) I) ... P(F_j(1) (x) I) e^{Abar (T - tau)}.
pub fn build_omega(
    a: &DMatrix<f64>,
    designs: &[&AgentDesign],
    schedule: &GraphSchedule,
    j: usize,
    t_period: f64,
    tau: f64,
    q: usize,
) -> Result<BlockMatrix> {
    let m = designs.len();
    let factors = window_factors(designs, schedule, j, t_period, tau, q)?;
    let mut prod = BlockMatrix::identity(vec![a.nrows(); m]);
    // product ordered k = q down to 1
    for f in factors.iter().rev() {
        prod = prod.mul(f);
    }
    Ok(block_exp(a, tau, m)?
        .mul(&prod)
        .mul(&block_exp(a, t_period - tau, m)?))
}

/// Feedthrough of the frozen observer errors into the post-event
/// estimate error:
/// Theta_j = e^{Abar tau} (sum_{s=2..q} P(F_j(q) (x) I) ... P(F_j(s) (x) I) + I) Q.
pub fn build_theta(
    a: &DMatrix<f64>,
    designs: &[&AgentDesign],
    schedule: &GraphSchedule,
    j: usize,
    t_period: f64,
    tau: f64,
    q: usize,
) -> Result<BlockMatrix> {
    let m = designs.len();
    let n = a.nrows();
    let factors = window_factors(designs, schedule, j, t_period, tau, q)?;
    let identity = BlockMatrix::identity(vec![n; m]);
    // suffix products M_s = G_q ... G_s accumulated from s = q down to 2
    let mut acc = identity.clone();
    let mut suffix = identity;
    for s in (1..q).rev() {
        // after this step suffix = G_q ... G_{s+1}
        suffix = suffix.mul(&factors[s]);
        acc = acc.add(&suffix);
    }
    Ok(block_exp(a, tau, m)?.mul(&acc).mul(&block_q(designs)))
}
