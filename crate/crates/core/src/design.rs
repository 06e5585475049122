//! Per-agent observer synthesis from (A, {C_i}): observability
//! decomposition, reduced pairs, output-injection gain placement, and
//! validation of the standing assumptions (no zero channel, joint
//! observability).
//!
//! Conventions: L_i has full row rank with ker L_i equal to the
//! unobservable subspace of (C_i, A); the reduced pair satisfies
//! L_i A = Abar_i L_i and C_i = Cbar_i L_i; the local observer is
//! wdot_i = (Abar_i + K_i Cbar_i) w_i - K_i y_i, so the gain enters the
//! closed loop as Abar_i + K_i Cbar_i.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics;

/// Relative residual tolerance for the decomposition identities.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// The plant: n-dimensional state, m measurement channels.
#[derive(Debug, Clone)]
pub struct SystemModel {
    a: DMatrix<f64>,
    c: Vec<DMatrix<f64>>,
}

impl SystemModel {
    /// Validates C_i != 0 for every channel and joint observability of
    /// the stacked pair; construction fails otherwise.
    pub fn new(a: DMatrix<f64>, c: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::Config(format!(
                "state matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !numerics::is_finite(&a) {
            return Err(Error::Config("state matrix has non-finite entries".into()));
        }
        if c.is_empty() {
            return Err(Error::Config("need at least one measurement channel".into()));
        }
        let n = a.nrows();
        for (i, ci) in c.iter().enumerate() {
            if ci.ncols() != n || ci.nrows() == 0 {
                return Err(Error::Config(format!(
                    "channel {} has shape {}x{}, expected s_i x {}",
                    i + 1,
                    ci.nrows(),
                    ci.ncols(),
                    n
                )));
            }
            if !numerics::is_finite(ci) {
                return Err(Error::Config(format!("channel {} has non-finite entries", i + 1)));
            }
            if ci.iter().all(|&v| v == 0.0) {
                return Err(Error::Assumption(format!("channel {} zero", i + 1)));
            }
        }
        let model = SystemModel { a, c };
        let report = check_joint_observability(&model)?;
        if !report.jointly_observable {
            return Err(Error::Assumption(format!(
                "system is not jointly observable: stacked observability rank {} < {}",
                report.joint_rank, report.state_dim
            )));
        }
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn channel_count(&self) -> usize {
        self.c.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn channels(&self) -> &[DMatrix<f64>] {
        &self.c
    }

    pub fn channel(&self, i: usize) -> &DMatrix<f64> {
        &self.c[i]
    }

    /// Model restricted to a subset of channels (for residual-system
    /// checks after dropout). Skips re-validation of channels; validates
    /// joint observability of the remainder.
    pub fn with_channels(&self, keep: &[usize]) -> Result<SystemModel> {
        let c: Vec<DMatrix<f64>> = keep.iter().map(|&i| self.c[i].clone()).collect();
        SystemModel::new(self.a.clone(), c)
    }
}

/// n-block observability matrix [C; CA; ...; CA^{n-1}].
pub fn observability_matrix(c: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let s = c.nrows();
    let mut rows = DMatrix::<f64>::zeros(s * n, n);
    let mut block = c.clone();
    rows.view_mut((0, 0), (s, n)).copy_from(&block);
    for k in 1..n {
        block = &block * a;
        rows.view_mut((k * s, 0), (s, n)).copy_from(&block);
    }
    rows
}

/// Orthonormal basis (as columns) of the unobservable subspace of
/// (C_i, A): the kernel of the n-block observability matrix, which is
/// the largest A-invariant subspace inside ker C_i.
pub fn unobservable_subspace(c_i: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c_i.ncols() != a.nrows() {
        return Err(Error::Config("channel and state dimensions disagree".into()));
    }
    numerics::nullspace_default(&observability_matrix(c_i, a))
}

/// Orthonormal-row L_i with ker L_i equal to the unobservable subspace
/// of (C_i, A): rows span the row space of the observability matrix.
pub fn build_l(c_i: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c_i.iter().all(|&v| v == 0.0) {
        return Err(Error::Assumption("cannot build L for a zero channel".into()));
    }
    let obs = observability_matrix(c_i, a);
    // rows of L = orthonormal basis of (ker obs)^perp = kernel of the
    // projector onto ker obs; equivalently the kernel of obs^T acting
    // from the right. Reuse the SVD-based nullspace on obs^T.
    let n = a.nrows();
    let kernel = numerics::nullspace_default(&obs)?;
    let n_i = n - kernel.ncols();
    if n_i == 0 {
        return Err(Error::Assumption(
            "channel observes nothing (unobservable subspace is everything)".into(),
        ));
    }
    // complete the kernel basis to an orthonormal basis of R^n: the row
    // space basis is the nullspace of kernel^T.
    let l_cols = numerics::nullspace_default(&kernel.transpose())?;
    debug_assert_eq!(l_cols.ncols(), n_i);
    Ok(l_cols.transpose())
}

/// Unique solutions of C_i = Cbar_i L_i and L_i A = Abar_i L_i given a
/// full-row-rank L_i whose kernel is A-invariant and inside ker C_i.
/// Residuals above `RESIDUAL_TOL * scale` signal a kernel-incorrect L_i.
pub fn reduce_pair(
    c_i: &DMatrix<f64>,
    a: &DMatrix<f64>,
    l_i: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let gram = l_i * l_i.transpose();
    let la = l_i * a;
    let abar = numerics::solve_xm_eq_b(&(&la * l_i.transpose()), &gram)?;
    let cbar = numerics::solve_xm_eq_b(&(c_i * l_i.transpose()), &gram)?;

    let scale_a = numerics::spectral_norm(a).max(1.0);
    let res_a = numerics::spectral_norm(&(&la - &abar * l_i));
    if res_a > RESIDUAL_TOL * scale_a {
        return Err(Error::Numerics(format!(
            "L A = Abar L residual {res_a:.3e} exceeds tolerance; kernel of L is not A-invariant"
        )));
    }
    let scale_c = numerics::spectral_norm(c_i).max(1.0);
    let res_c = numerics::spectral_norm(&(c_i - &cbar * l_i));
    if res_c > RESIDUAL_TOL * scale_c {
        return Err(Error::Numerics(format!(
            "C = Cbar L residual {res_c:.3e} exceeds tolerance; kernel of L is not inside ker C"
        )));
    }
    Ok((cbar, abar))
}

/// Output-injection gain K with every eigenvalue of Abar + K Cbar at a
/// distinct real <= -omega. Poles are placed at -omega (1 + k / (2 n_i)),
/// k = 0..n_i-1; multi-output channels are reduced to a single output by
/// a deterministic probe combination. Output is deterministic for fixed
/// inputs.
pub fn place_observer_gain(
    cbar: &DMatrix<f64>,
    abar: &DMatrix<f64>,
    omega: f64,
) -> Result<DMatrix<f64>> {
    if omega <= 0.0 {
        return Err(Error::Config("observer rate omega must be positive".into()));
    }
    let n = abar.nrows();
    let s = cbar.nrows();
    assert!(
        numerics::rank_default(&observability_matrix(cbar, abar))? == n,
        "reduced pair must be observable"
    );
    let poles: Vec<f64> = (0..n)
        .map(|k| -omega * (1.0 + k as f64 / (2 * n) as f64))
        .collect();

    // deterministic probe rows: unit vectors first, then fixed mixtures
    let mut probes: Vec<DMatrix<f64>> = (0..s)
        .map(|j| DMatrix::from_fn(1, s, |_, i| if i == j { 1.0 } else { 0.0 }))
        .collect();
    probes.push(DMatrix::from_fn(1, s, |_, i| 1.0 / (1.0 + i as f64)));
    probes.push(DMatrix::from_fn(1, s, |_, i| ((i + 1) as f64).sqrt()));

    for g in probes {
        let c_single = &g * cbar; // 1 x n
        let obs = observability_matrix(&c_single, abar);
        if numerics::rank_default(&obs)? != n {
            continue;
        }
        // Ackermann on the single-output pair: spec(Abar - K0 c) = poles
        // with K0 = p(Abar) O^{-1} e_n; our closed loop is Abar + K Cbar,
        // so K = -K0 g^T.
        let mut p_a = DMatrix::<f64>::identity(n, n);
        for &pole in &poles {
            p_a *= abar - DMatrix::<f64>::identity(n, n) * pole;
        }
        let mut e_n = DVector::<f64>::zeros(n);
        e_n[n - 1] = 1.0;
        let k0 = p_a * numerics::solve(&obs, &e_n)?;
        let k = -k0 * &g;

        let spec = numerics::eigenvalues(&(abar + &k * cbar))?;
        if spec.max_real_part <= -omega + 1e-6 * omega.max(1.0) {
            return Ok(k);
        }
    }
    // Pairs whose dynamics are not cyclic (repeated eigenvalues needing
    // more than one output) have no single-output reduction; fall back to
    // the finite-horizon Gramian gain K = -W^{-1} Cbar', which places the
    // spectral abscissa strictly below -a for any horizon.
    let a_margin = omega * (1.0 + 1.0 / (2 * n) as f64);
    let shifted = abar.transpose() + DMatrix::<f64>::identity(n, n) * a_margin;
    let w = gramian(&(-&shifted), &(cbar.transpose() * cbar), 1.0)?;
    // K = -W^{-1} Cbar' = -(Cbar W^{-1})' since W is symmetric
    let k = -numerics::solve_xm_eq_b(cbar, &w)?.transpose();
    let spec = numerics::eigenvalues(&(abar + &k * cbar))?;
    if spec.max_real_part <= -omega + 1e-6 * omega.max(1.0) {
        return Ok(k);
    }
    Err(Error::Numerics(
        "gain placement failed to meet the requested rate".into(),
    ))
}

/// W = int_0^T e^{Mt} N e^{M't} dt via the augmented exponential
/// exp([[M, N],[0, -M']] T) = [[F1, G1],[0, F2]], giving W = G1 F1'.
fn gramian(m: &DMatrix<f64>, n_mat: &DMatrix<f64>, horizon: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut aug = DMatrix::<f64>::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(m);
    aug.view_mut((0, n), (n, n)).copy_from(n_mat);
    aug.view_mut((n, n), (n, n)).copy_from(&(-m.transpose()));
    let e = numerics::mat_exp(&aug, horizon)?;
    let f1 = e.view((0, 0), (n, n)).clone_owned();
    let g1 = e.view((0, n), (n, n)).clone_owned();
    Ok(g1 * f1.transpose())
}

/// Rank report of the stacked observability matrix.
#[derive(Debug, Clone)]
pub struct ObservabilityReport {
    pub state_dim: usize,
    pub joint_rank: usize,
    pub jointly_observable: bool,
    /// Observability-matrix rank of each single channel.
    pub channel_ranks: Vec<usize>,
}

pub fn check_joint_observability(model: &SystemModel) -> Result<ObservabilityReport> {
    let n = model.state_dim();
    let stacked_rows: usize = model.channels().iter().map(|c| c.nrows()).sum();
    let mut stacked = DMatrix::<f64>::zeros(stacked_rows, n);
    let mut row = 0;
    for c in model.channels() {
        stacked.view_mut((row, 0), (c.nrows(), n)).copy_from(c);
        row += c.nrows();
    }
    let joint_rank = numerics::rank_default(&observability_matrix(&stacked, model.a()))?;
    let mut channel_ranks = Vec::with_capacity(model.channel_count());
    for c in model.channels() {
        channel_ranks.push(numerics::rank_default(&observability_matrix(c, model.a()))?);
    }
    Ok(ObservabilityReport {
        state_dim: n,
        joint_rank,
        jointly_observable: joint_rank == n,
        channel_ranks,
    })
}

/// True iff G is symmetric positive definite and the spectrum of
/// L' G L lies in (-1, 1], which makes Q = L' G a valid estimator gain.
pub fn validate_gain_matrix(l: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<bool> {
    let n_i = l.nrows();
    if g.nrows() != n_i || g.ncols() != n_i {
        return Err(Error::Config("gain matrix G has wrong dimensions".into()));
    }
    let asym = numerics::spectral_norm(&(g - g.transpose()));
    if asym > 1e-9 * numerics::spectral_norm(g).max(1.0) {
        return Err(Error::Config("gain matrix G is not symmetric".into()));
    }
    let g_spec = numerics::eigenvalues(g)?;
    if g_spec.eigenvalues.iter().any(|z| z.re <= 0.0) {
        return Err(Error::Config("gain matrix G is not positive definite".into()));
    }
    let product = l.transpose() * g * l;
    let spec = numerics::eigenvalues(&product)?;
    let tol = 1e-9;
    Ok(spec
        .eigenvalues
        .iter()
        .all(|z| z.re > -1.0 + tol && z.re <= 1.0 + tol))
}

/// Everything agent i needs at run time.
#[derive(Debug, Clone)]
pub struct AgentDesign {
    pub index: usize,
    pub n_i: usize,
    pub l: DMatrix<f64>,
    pub abar: DMatrix<f64>,
    pub cbar: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Estimator gain Q = L'(L L')^{-1}, or L' G for a validated G.
    pub q: DMatrix<f64>,
    /// P = I - Q L; the orthogonal projection onto ker L for the
    /// default Q.
    pub p: DMatrix<f64>,
    /// Negated spectral abscissa of Abar + K Cbar.
    pub achieved_rate: f64,
}

impl AgentDesign {
    /// Assemble and validate a design from explicit L and K (plus an
    /// optional estimator gain matrix G).
    pub fn from_parts(
        model: &SystemModel,
        index: usize,
        l: DMatrix<f64>,
        k: DMatrix<f64>,
        g: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        let n = model.state_dim();
        let c_i = model.channel(index);
        if l.ncols() != n || l.nrows() == 0 || l.nrows() > n {
            return Err(Error::Config(format!(
                "agent {}: L has shape {}x{}, expected n_i x {}",
                index + 1,
                l.nrows(),
                l.ncols(),
                n
            )));
        }
        let n_i = l.nrows();
        if numerics::rank_default(&l)? != n_i {
            return Err(Error::Config(format!("agent {}: L is rank deficient", index + 1)));
        }
        let expected_n_i = n - unobservable_subspace(c_i, model.a())?.ncols();
        if n_i != expected_n_i {
            return Err(Error::Config(format!(
                "agent {}: L has {} rows but the observable part has dimension {}",
                index + 1,
                n_i,
                expected_n_i
            )));
        }
        let (cbar, abar) = reduce_pair(c_i, model.a(), &l)?;
        if k.nrows() != n_i || k.ncols() != c_i.nrows() {
            return Err(Error::Config(format!(
                "agent {}: K has shape {}x{}, expected {}x{}",
                index + 1,
                k.nrows(),
                k.ncols(),
                n_i,
                c_i.nrows()
            )));
        }
        let q = match g {
            Some(g) => {
                if !validate_gain_matrix(&l, g)? {
                    return Err(Error::Config(format!(
                        "agent {}: spectrum of L' G L leaves (-1, 1]",
                        index + 1
                    )));
                }
                l.transpose() * g
            }
            None => {
                let gram = l.clone_owned() * l.transpose();
                numerics::solve_xm_eq_b(&l.transpose(), &gram.transpose())?
            }
        };
        let p = DMatrix::<f64>::identity(n, n) - &q * &l;
        let spec = numerics::eigenvalues(&(&abar + &k * &cbar))?;
        Ok(AgentDesign {
            index,
            n_i,
            l,
            abar,
            cbar,
            k,
            q,
            p,
            achieved_rate: -spec.max_real_part,
        })
    }

    /// Synthesize L (orthonormal rows) and K (poles at or below -omega)
    /// from the model alone.
    pub fn synthesize(model: &SystemModel, index: usize, omega: f64) -> Result<Self> {
        let c_i = model.channel(index);
        let l = build_l(c_i, model.a())?;
        let (cbar, abar) = reduce_pair(c_i, model.a(), &l)?;
        let k = place_observer_gain(&cbar, &abar, omega)?;
        AgentDesign::from_parts(model, index, l, k, None)
    }

    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.abar + &self.k * &self.cbar
    }
}

/// Synthesize every agent and check the joint hypothesis
/// rank [L_1; ...; L_m] = n (equivalent to the intersection of the
/// kernels being zero).
pub fn design_all(model: &SystemModel, omega: f64) -> Result<Vec<AgentDesign>> {
    let designs: Result<Vec<AgentDesign>> = (0..model.channel_count())
        .map(|i| AgentDesign::synthesize(model, i, omega))
        .collect();
    let designs = designs?;
    check_stacked_rank(model, &designs)?;
    Ok(designs)
}

pub fn check_stacked_rank(model: &SystemModel, designs: &[AgentDesign]) -> Result<()> {
    let n = model.state_dim();
    let total: usize = designs.iter().map(|d| d.n_i).sum();
    let mut stacked = DMatrix::<f64>::zeros(total, n);
    let mut row = 0;
    for d in designs {
        stacked.view_mut((row, 0), (d.n_i, n)).copy_from(&d.l);
        row += d.n_i;
    }
    if numerics::rank_default(&stacked)? != n {
        return Err(Error::Assumption(
            "stacked L matrices are rank deficient; the kernels of the P_i intersect".into(),
        ));
    }
    Ok(())
}
