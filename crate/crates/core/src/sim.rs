//! Hybrid closed-loop simulator: continuous flows of the plant, the
//! local observers and the inter-event estimate propagation; q
//! synchronous consensus iterations of the local parameter estimators
//! inside each compute window; event-time jumps; dropout and sinusoidal
//! disturbance handling; trace recording; and an independent
//! error-recursion oracle.
//!
//! All flows are advanced by exact discretization with cached matrix
//! exponentials on the sample grid. The loop integrates the plant state
//! together with the *error* coordinates e_i = x_i - x and
//! mu_i = w_i - L_i x, which evolve by the same exact maps; this keeps
//! the error trajectories well-conditioned even when the plant itself
//! grows by many orders of magnitude over the run. Estimate
//! trajectories are recovered as x + e_i on demand.

use nalgebra::{DMatrix, DVector};

use crate::design::{AgentDesign, SystemModel};
use crate::error::{Error, Result};
use crate::network::{Digraph, GraphSchedule};
use crate::numerics::mat_exp;

/// Hybrid schedule parameters: event period T, compute window tau,
/// iteration count q, observer rate target omega.
#[derive(Debug, Clone, Copy)]
pub struct ObserverParams {
    pub t_period: f64,
    pub tau: f64,
    pub q: usize,
    pub omega: f64,
}

impl ObserverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_period > 0.0) {
            return Err(Error::Config("event period T must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau < self.t_period) {
            return Err(Error::Config("compute window must satisfy 0 < tau < T".into()));
        }
        if self.q < 1 {
            return Err(Error::Config("iteration count q must be at least one".into()));
        }
        if !(self.omega > 0.0) {
            return Err(Error::Config("observer rate omega must be positive".into()));
        }
        Ok(())
    }
}

/// Additive plant disturbance b * amplitude cos(frequency t).
#[derive(Debug, Clone)]
pub struct Disturbance {
    pub b: DVector<f64>,
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: SystemModel,
    pub designs: Vec<AgentDesign>,
    pub params: ObserverParams,
    pub schedule: GraphSchedule,
    pub x0: DVector<f64>,
    pub w0: Vec<DVector<f64>>,
    pub xhat0: Vec<DVector<f64>>,
    pub disturbance: Option<Disturbance>,
    pub t_end: f64,
    pub sample_dt: f64,
    pub log_iterations: bool,
    pub record_estimates: bool,
}

fn near_integer(x: f64) -> Option<usize> {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) && r >= 0.0 {
        Some(r as usize)
    } else {
        None
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let n = self.model.state_dim();
        let m = self.model.channel_count();
        if self.designs.len() != m {
            return Err(Error::Config(format!(
                "{} designs for {} channels",
                self.designs.len(),
                m
            )));
        }
        if self.schedule.vertex_count() != m {
            return Err(Error::Config(format!(
                "schedule has {} vertices for {} agents",
                self.schedule.vertex_count(),
                m
            )));
        }
        if self.x0.len() != n {
            return Err(Error::Config("initial state has wrong dimension".into()));
        }
        if self.w0.len() != m || self.xhat0.len() != m {
            return Err(Error::Config("need one w0 and xhat0 per agent".into()));
        }
        for (i, d) in self.designs.iter().enumerate() {
            if self.w0[i].len() != d.n_i {
                return Err(Error::Config(format!(
                    "w0 for agent {} has length {}, expected {}",
                    i + 1,
                    self.w0[i].len(),
                    d.n_i
                )));
            }
            if self.xhat0[i].len() != n {
                return Err(Error::Config(format!(
                    "xhat0 for agent {} has wrong dimension",
                    i + 1
                )));
            }
        }
        if let Some(dist) = &self.disturbance {
            if dist.b.len() != n {
                return Err(Error::Config("disturbance direction has wrong dimension".into()));
            }
            if !(dist.frequency >= 0.0) {
                return Err(Error::Config("disturbance frequency must be non-negative".into()));
            }
        }
        if !(self.sample_dt > 0.0) {
            return Err(Error::Config("sample_dt must be positive".into()));
        }
        let steps_per_event = near_integer(self.params.t_period / self.sample_dt)
            .filter(|&s| s >= 2)
            .ok_or_else(|| {
                Error::Config("sample_dt must divide the event period T".into())
            })?;
        let steps_tau = near_integer(self.params.tau / self.sample_dt)
            .filter(|&s| s >= 1 && s < steps_per_event)
            .ok_or_else(|| {
                Error::Config("sample_dt must divide the compute window tau".into())
            })?;
        let _ = steps_tau;
        if !(self.t_end >= 0.0) {
            return Err(Error::Config("t_end must be non-negative".into()));
        }
        near_integer(self.t_end / self.sample_dt)
            .ok_or_else(|| Error::Config("sample_dt must divide t_end".into()))?;
        // dropout instants must sit on the event grid: estimator behavior
        // under mid-window departures is undefined
        for &(time, v) in self.schedule.dropouts() {
            let on_grid = near_integer(time / self.params.t_period)
                .map(|k| k >= 1)
                .unwrap_or(false);
            if !on_grid {
                return Err(Error::Config(format!(
                    "dropout of agent {} at t = {time} is not on the event grid",
                    v + 1
                )));
            }
        }
        Ok(())
    }
}

/// One synchronous run of the local parameter estimators:
/// z_i(0) given, then for k = 1..q
///   zbar_i = mean of z_s(k-1) over s in N_i(tau_k),
///   z_i(k) = zbar_i - Q_i (L_i zbar_i - w_i),
/// with `w` the values frozen at the window start. Returns all iterates
/// `[k][agent]`, k = 0..=q.
///
/// The same recursion runs in shifted coordinates: feeding estimate
/// errors as z and observer errors as w yields the parameter-error
/// iterates.
pub fn estimator_window(
    z0: &[DVector<f64>],
    w: &[DVector<f64>],
    designs: &[&AgentDesign],
    graphs: &[Digraph],
) -> Vec<Vec<DVector<f64>>> {
    let m = designs.len();
    assert_eq!(z0.len(), m);
    assert_eq!(w.len(), m);
    let mut iterates = Vec::with_capacity(graphs.len() + 1);
    iterates.push(z0.to_vec());
    for g in graphs {
        assert_eq!(g.vertex_count(), m);
        let prev = iterates.last().unwrap();
        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let neighbors = g.neighbors(i);
            let mut zbar = DVector::<f64>::zeros(prev[i].len());
            for &s in neighbors {
                zbar += &prev[s];
            }
            zbar /= neighbors.len() as f64;
            let correction = &designs[i].q * (&designs[i].l * &zbar - &w[i]);
            next.push(zbar - correction);
        }
        iterates.push(next);
    }
    iterates
}

/// Independent oracle for the window: the parameter-error recursion
///   eps_i(0) = e^{A(T-tau)} (x_i(t_{j-1}) - x(t_{j-1})),
///   eps_i(k) = (1/m_i(k)) P_i sum_{s in N_i(tau_k)} eps_s(k-1) + Q_i mu_i,
///   x_i(t_j) - x(t_j) = e^{A tau} eps_i(q),
/// computed without touching the z iteration (undisturbed flows).
/// Returns the iterates `[k][agent]` and the post-event errors.
pub fn error_recursion_oracle(
    prev_err: &[DVector<f64>],
    mu: &[DVector<f64>],
    designs: &[&AgentDesign],
    graphs: &[Digraph],
    a: &DMatrix<f64>,
    t_period: f64,
    tau: f64,
) -> Result<(Vec<Vec<DVector<f64>>>, Vec<DVector<f64>>)> {
    let m = designs.len();
    let flow_between = mat_exp(a, t_period - tau)?;
    let flow_jump = mat_exp(a, tau)?;
    let eps0: Vec<DVector<f64>> = prev_err.iter().map(|e| &flow_between * e).collect();
    let mut iterates = vec![eps0];
    for g in graphs {
        let prev = iterates.last().unwrap();
        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let neighbors = g.neighbors(i);
            let mut sum = DVector::<f64>::zeros(prev[i].len());
            for &s in neighbors {
                sum += &prev[s];
            }
            let mean_count = neighbors.len() as f64;
            let projected = (&designs[i].p * sum) / mean_count;
            next.push(projected + &designs[i].q * &mu[i]);
        }
        iterates.push(next);
    }
    let jump: Vec<DVector<f64>> = iterates.last().unwrap().iter().map(|e| &flow_jump * e).collect();
    Ok((iterates, jump))
}

/// Per-event bookkeeping needed by the invariants and the reports.
#[derive(Debug, Clone)]
pub struct EventRecord {
    /// 1-based event index j; the event fires at time j T.
    pub index: usize,
    pub time: f64,
    /// Agents that participated in the window (alive since the previous
    /// event), original 0-based labels.
    pub members: Vec<usize>,
    /// Plant state at the previous event time t_{j-1}.
    pub x_prev: DVector<f64>,
    /// Plant state at the freeze instant t_j - tau.
    pub x_freeze: DVector<f64>,
    /// Estimate errors at t_{j-1}, aligned with `members`.
    pub prev_err: Vec<DVector<f64>>,
    /// Estimate errors at the freeze instant (the window's z_i(0) - p_j).
    pub eps0: Vec<DVector<f64>>,
    /// Observer errors frozen at t_j - tau, aligned with `members`.
    pub mu: Vec<DVector<f64>>,
    /// Agents that applied the jump (members minus any dropout at t_j).
    pub jumped: Vec<usize>,
    /// Post-jump estimate errors, aligned with `jumped`.
    pub jump_err: Vec<DVector<f64>>,
    /// |zeta_i(k)| per iterate when iteration logging is on: `[k][member]`.
    pub iter_norms: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub times: Vec<f64>,
    /// `err[agent][sample]` = |x_i - x|_2, NaN once the agent dropped out.
    pub err: Vec<Vec<f64>>,
    pub x: Vec<DVector<f64>>,
    /// Estimates x + e_i, recorded only when requested.
    pub xhat: Option<Vec<Vec<DVector<f64>>>>,
    pub events: Vec<EventRecord>,
    pub initial_max_err: f64,
}

impl SimTrace {
    /// Largest error over live agents at sample s; NaN columns ignored.
    pub fn max_err_at(&self, s: usize) -> f64 {
        self.err
            .iter()
            .map(|col| col[s])
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sample_count(&self) -> usize {
        self.times.len()
    }
}

/// One-step exact propagator on the sample grid. With a disturbance the
/// plant is augmented by the 2-state oscillator generating
/// amplitude cos(frequency t), which makes every step exact (no
/// quadrature error).
struct Propagator {
    e_plant: DMatrix<f64>,
    obs_step: Vec<DMatrix<f64>>,
    e_jump: DMatrix<f64>,
    dist: Option<DistCache>,
}

struct DistCache {
    /// x-row blocks of exp([[A, B],[0, S]] dt) with B = [b, 0].
    x_forced: DMatrix<f64>,
    /// oscillator advance over dt.
    rot: DMatrix<f64>,
    /// forced displacement over the jump horizon tau.
    jump_forced: DMatrix<f64>,
    /// per-agent mu coupling over dt: mu' = M mu - G d.
    mu_forced: Vec<DMatrix<f64>>,
}

fn oscillator_generator(frequency: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -frequency, frequency, 0.0])
}

/// Upper blocks (e^{A dt}-part, forced part) of the augmented
/// exponential exp([[A, B],[0, S]] dt).
fn forced_blocks(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let w = b.ncols();
    let mut aug = DMatrix::<f64>::zeros(n + w, n + w);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, w)).copy_from(b);
    aug.view_mut((n, n), (w, w)).copy_from(s);
    let e = mat_exp(&aug, dt)?;
    Ok((
        e.view((0, 0), (n, n)).clone_owned(),
        e.view((0, n), (n, w)).clone_owned(),
    ))
}

impl Propagator {
    fn new(config: &SimConfig) -> Result<Self> {
        let a = config.model.a();
        let dt = config.sample_dt;
        let e_plant = mat_exp(a, dt)?;
        let e_jump = mat_exp(a, config.params.tau)?;
        let obs_step: Result<Vec<DMatrix<f64>>> = config
            .designs
            .iter()
            .map(|d| mat_exp(&d.closed_loop(), dt))
            .collect();
        let obs_step = obs_step?;
        let dist = match &config.disturbance {
            None => None,
            Some(d) => {
                let s = oscillator_generator(d.frequency);
                let n = a.nrows();
                let mut b = DMatrix::<f64>::zeros(n, 2);
                b.set_column(0, &d.b);
                let (_, x_forced) = forced_blocks(a, &b, &s, dt)?;
                let (_, jump_forced) = forced_blocks(a, &b, &s, config.params.tau)?;
                let mut mu_forced = Vec::with_capacity(config.designs.len());
                for design in &config.designs {
                    let lb = &design.l * &d.b;
                    let mut b_mu = DMatrix::<f64>::zeros(design.n_i, 2);
                    b_mu.set_column(0, &lb);
                    let (_, g) = forced_blocks(&design.closed_loop(), &b_mu, &s, dt)?;
                    mu_forced.push(g);
                }
                Some(DistCache {
                    x_forced,
                    rot: mat_exp(&s, dt)?,
                    jump_forced,
                    mu_forced,
                })
            }
        };
        Ok(Propagator {
            e_plant,
            obs_step,
            e_jump,
            dist,
        })
    }

    /// Advance plant, oscillator, estimate errors and observer errors by
    /// one grid step. Estimate errors obey de/dt = A e - b nu, observer
    /// errors dmu/dt = (Abar + K Cbar) mu - L b nu.
    fn step(
        &self,
        x: &mut DVector<f64>,
        d: &mut Option<DVector<f64>>,
        e: &mut [DVector<f64>],
        mu: &mut [DVector<f64>],
        alive: &[bool],
    ) {
        match (&self.dist, d.as_mut()) {
            (Some(cache), Some(dvec)) => {
                let new_x = &self.e_plant * &*x + &cache.x_forced * &*dvec;
                for (i, ei) in e.iter_mut().enumerate() {
                    if alive[i] {
                        *ei = &self.e_plant * &*ei - &cache.x_forced * &*dvec;
                    }
                }
                for (i, mui) in mu.iter_mut().enumerate() {
                    if alive[i] {
                        *mui = &self.obs_step[i] * &*mui - &cache.mu_forced[i] * &*dvec;
                    }
                }
                *x = new_x;
                *dvec = &cache.rot * &*dvec;
            }
            _ => {
                *x = &self.e_plant * &*x;
                for (i, ei) in e.iter_mut().enumerate() {
                    if alive[i] {
                        *ei = &self.e_plant * &*ei;
                    }
                }
                for (i, mui) in mu.iter_mut().enumerate() {
                    if alive[i] {
                        *mui = &self.obs_step[i] * &*mui;
                    }
                }
            }
        }
    }

    /// Post-window jump in error coordinates:
    /// e_i(t_j) = e^{A tau} zeta_i(q) - (forced plant displacement over
    /// the window).
    fn jump(&self, zeta_q: &DVector<f64>, d_freeze: Option<&DVector<f64>>) -> DVector<f64> {
        let mut out = &self.e_jump * zeta_q;
        if let (Some(cache), Some(dvec)) = (&self.dist, d_freeze) {
            out -= &cache.jump_forced * dvec;
        }
        out
    }
}

struct PendingWindow {
    members: Vec<usize>,
    x_freeze: DVector<f64>,
    eps0: Vec<DVector<f64>>,
    mu: Vec<DVector<f64>>,
    jump_targets: Vec<DVector<f64>>,
    iter_norms: Option<Vec<Vec<f64>>>,
}

/// Execute the hybrid closed loop. Deterministic: identical configs
/// produce bit-identical traces.
pub fn run(config: &SimConfig) -> Result<SimTrace> {
    config.validate()?;
    let n = config.model.state_dim();
    let m = config.model.channel_count();
    let dt = config.sample_dt;
    let steps_per_event = near_integer(config.params.t_period / dt).unwrap();
    let steps_tau = near_integer(config.params.tau / dt).unwrap();
    let total_steps = near_integer(config.t_end / dt).unwrap();

    let propagator = Propagator::new(config)?;

    let mut x = config.x0.clone();
    let mut d: Option<DVector<f64>> = config
        .disturbance
        .as_ref()
        .map(|dist| DVector::from_vec(vec![dist.amplitude, 0.0]));
    let mut alive = vec![true; m];
    let mut e: Vec<DVector<f64>> = (0..m).map(|i| &config.xhat0[i] - &config.x0).collect();
    let mut mu: Vec<DVector<f64>> = (0..m)
        .map(|i| &config.w0[i] - &config.designs[i].l * &config.x0)
        .collect();

    let mut last_event_x = x.clone();
    let mut last_event_err = e.clone();

    let sample_count = total_steps + 1;
    let mut times = Vec::with_capacity(sample_count);
    let mut err: Vec<Vec<f64>> = vec![Vec::with_capacity(sample_count); m];
    let mut xs = Vec::with_capacity(sample_count);
    let mut xhat: Option<Vec<Vec<DVector<f64>>>> = if config.record_estimates {
        Some(vec![Vec::with_capacity(sample_count); m])
    } else {
        None
    };
    let mut events = Vec::new();

    let nan_vec = DVector::from_element(n, f64::NAN);
    let record_sample = |t: f64,
                             x: &DVector<f64>,
                             e: &[DVector<f64>],
                             alive: &[bool],
                             times: &mut Vec<f64>,
                             err: &mut Vec<Vec<f64>>,
                             xs: &mut Vec<DVector<f64>>,
                             xhat: &mut Option<Vec<Vec<DVector<f64>>>>| {
        times.push(t);
        xs.push(x.clone());
        for i in 0..m {
            err[i].push(if alive[i] { e[i].norm() } else { f64::NAN });
        }
        if let Some(cols) = xhat {
            for i in 0..m {
                cols[i].push(if alive[i] { x + &e[i] } else { nan_vec.clone() });
            }
        }
    };

    record_sample(0.0, &x, &e, &alive, &mut times, &mut err, &mut xs, &mut xhat);

    let mut pending: Option<PendingWindow> = None;

    for step in 1..=total_steps {
        propagator.step(&mut x, &mut d, &mut e, &mut mu, &alive);
        let t = step as f64 * dt;
        let pos = step % steps_per_event;

        // freeze point t_j - tau: run the window if its event is inside
        // the horizon
        if pos == steps_per_event - steps_tau && step + steps_tau <= total_steps {
            let j = step / steps_per_event + 1;
            let members: Vec<usize> = (0..m).filter(|&i| alive[i]).collect();
            let designs_ref: Vec<&AgentDesign> =
                members.iter().map(|&i| &config.designs[i]).collect();
            let graphs: Result<Vec<Digraph>> = crate::analysis::window_times(
                j,
                config.params.t_period,
                config.params.tau,
                config.params.q,
            )
            .iter()
            .map(|&tk| config.schedule.graph_at(tk))
            .collect();
            let graphs = graphs?;
            for g in &graphs {
                if g.vertex_count() != members.len() {
                    return Err(Error::Config(
                        "schedule membership disagrees with the simulator state".into(),
                    ));
                }
            }
            let zeta0: Vec<DVector<f64>> = members.iter().map(|&i| e[i].clone()).collect();
            let mu_frozen: Vec<DVector<f64>> = members.iter().map(|&i| mu[i].clone()).collect();
            let iterates = estimator_window(&zeta0, &mu_frozen, &designs_ref, &graphs);
            let zeta_q = iterates.last().unwrap();
            let jump_targets: Vec<DVector<f64>> = zeta_q
                .iter()
                .map(|z| propagator.jump(z, d.as_ref()))
                .collect();
            let iter_norms = config.log_iterations.then(|| {
                iterates
                    .iter()
                    .map(|row| row.iter().map(|v| v.norm()).collect())
                    .collect()
            });
            pending = Some(PendingWindow {
                members,
                x_freeze: x.clone(),
                eps0: zeta0,
                mu: mu_frozen,
                jump_targets,
                iter_norms,
            });
        }

        // event time t_j: apply dropouts scheduled here, then the jumps
        if pos == 0 {
            let j = step / steps_per_event;
            let window = pending.take().ok_or_else(|| {
                Error::Config("internal: event fired without a computed window".into())
            })?;
            let dying: Vec<usize> = config
                .schedule
                .dropouts()
                .iter()
                .filter(|(time, _)| (time - t).abs() <= 1e-9 * t.abs().max(1.0))
                .map(|&(_, v)| v)
                .collect();
            for &v in &dying {
                alive[v] = false;
            }
            let mut jumped = Vec::new();
            let mut jump_err = Vec::new();
            for (slot, &agent) in window.members.iter().enumerate() {
                if alive[agent] {
                    e[agent] = window.jump_targets[slot].clone();
                    jumped.push(agent);
                    jump_err.push(e[agent].clone());
                }
            }
            let prev_err: Vec<DVector<f64>> = window
                .members
                .iter()
                .map(|&i| last_event_err[i].clone())
                .collect();
            events.push(EventRecord {
                index: j,
                time: t,
                members: window.members,
                x_prev: last_event_x.clone(),
                x_freeze: window.x_freeze,
                prev_err,
                eps0: window.eps0,
                mu: window.mu,
                jumped,
                jump_err,
                iter_norms: window.iter_norms,
            });
            last_event_x = x.clone();
            last_event_err = e.clone();
        }

        record_sample(t, &x, &e, &alive, &mut times, &mut err, &mut xs, &mut xhat);
    }

    let initial_max_err = (0..m)
        .map(|i| (&config.xhat0[i] - &config.x0).norm())
        .fold(0.0, f64::max);

    Ok(SimTrace {
        times,
        err,
        x: xs,
        xhat,
        events,
        initial_max_err,
    })
}

/// Least-squares decay rate of ln(max_i err_i) over [t_start, t_end]:
/// the negated slope. Degenerate (rate = +inf, flag set) when the window
/// contains a zero error or fewer than two samples.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub rate: f64,
    pub degenerate: bool,
}

pub fn fit_rate(trace: &SimTrace, t_start: f64, t_end: f64) -> RateFit {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for s in 0..trace.sample_count() {
        let t = trace.times[s];
        if t < t_start || t > t_end {
            continue;
        }
        let v = trace.max_err_at(s);
        if v == 0.0 {
            return RateFit {
                rate: f64::INFINITY,
                degenerate: true,
            };
        }
        if v.is_finite() {
            pts.push((t, v.ln()));
        }
    }
    if pts.len() < 2 {
        return RateFit {
            rate: f64::INFINITY,
            degenerate: true,
        };
    }
    let len = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in pts {
        num += (t - mean_t) * (y - mean_y);
        den += (t - mean_t) * (t - mean_t);
    }
    RateFit {
        rate: -(num / den),
        degenerate: false,
    }
}
