//! On-disk scenario configuration (versioned JSON, matrices as
//! row-major nested arrays) and its conversion into validated runtime
//! objects.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    contraction_coefficient, contraction_sequence_length, min_iterations, min_observer_rate,
    quotient_divisor, ContractionCert, ContractionMethod, ENUMERATION_CAP,
};
use crate::design::{build_l, reduce_pair, AgentDesign, SystemModel};
use crate::error::{Error, Result};
use crate::network::{
    is_strongly_connected, ConnectivityPolicy, Digraph, GraphSchedule, ScheduleMode,
};
use crate::numerics;
use crate::sim::{Disturbance, ObserverParams, SimConfig};

pub type JsonMatrix = Vec<Vec<f64>>;

pub fn rows_to_mat(rows: &JsonMatrix, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Config(format!("{what}: matrix must be non-empty")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("{what}: ragged matrix rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

pub fn mat_to_rows(m: &DMatrix<f64>) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn vec_to_dvector(v: &[f64], what: &str) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Err(Error::Config(format!("{what}: vector must be non-empty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{what}: non-finite entry")));
    }
    Ok(DVector::from_row_slice(v))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemSection {
    pub a: JsonMatrix,
    pub c: Vec<JsonMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GraphSection {
    /// Neighbor sets keyed by 1-based vertex label: `{"1": [1,2], ...}`.
    Static { neighbors: BTreeMap<String, Vec<usize>> },
    Piecewise { pieces: Vec<GraphPiece> },
    Generator { density: f64, seed: u64, dwell: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphPiece {
    pub t: f64,
    pub neighbors: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DropoutSection {
    pub time: f64,
    /// 1-based agent label.
    pub agent: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamsSection {
    #[serde(rename = "T")]
    pub t_period: f64,
    pub tau: f64,
    /// Iterations per window; defaults to the certified minimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    /// Observer rate target; defaults to max(1, 2x the certified
    /// threshold).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DesignSection {
    /// Per-agent L_i overrides (all agents or none).
    pub l: Vec<JsonMatrix>,
    /// Per-agent K_i overrides; requires `l`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<JsonMatrix>>,
    /// Optional per-agent estimator gain matrices G_i (null entries use
    /// the default Q_i).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Option<JsonMatrix>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InitialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DisturbanceSection {
    pub b: Vec<f64>,
    pub amplitude: f64,
    pub frequency: f64,
}

fn default_t_end() -> f64 {
    100.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimSection {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Defaults to T / 100.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default)]
    pub log_iterations: bool,
    #[serde(default)]
    pub record_estimates: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            t_end: default_t_end(),
            sample_dt: None,
            log_iterations: false,
            record_estimates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicySection {
    #[default]
    Error,
    Warn,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub system: SystemSection,
    pub graph: GraphSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropouts: Vec<DropoutSection>,
    pub params: ParamsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceSection>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub connectivity_policy: PolicySection,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text)?;
        if config.schema != 1 {
            return Err(Error::Config(format!(
                "unsupported schema version {}",
                config.schema
            )));
        }
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn neighbors_to_digraph(map: &BTreeMap<String, Vec<usize>>, m: usize) -> Result<Digraph> {
    if map.len() != m {
        return Err(Error::Config(format!(
            "graph lists {} vertices but the system has {} channels",
            map.len(),
            m
        )));
    }
    let mut sets = vec![BTreeSet::new(); m];
    for (key, neigh) in map {
        let label: usize = key
            .parse()
            .map_err(|_| Error::Config(format!("graph key '{key}' is not a vertex label")))?;
        if label < 1 || label > m {
            return Err(Error::Config(format!("graph vertex label {label} out of 1..={m}")));
        }
        for &s in neigh {
            if s < 1 || s > m {
                return Err(Error::Config(format!(
                    "vertex {label} lists out-of-range neighbor {s}"
                )));
            }
            sets[label - 1].insert(s - 1);
        }
    }
    Digraph::from_neighbor_sets(sets)
}

/// Numbers gathered while building that the report and the acceptance
/// checks need.
#[derive(Debug, Clone)]
pub struct Certification {
    pub zeta: f64,
    pub cert: ContractionCert,
    pub q_min: usize,
    pub q: usize,
    pub r: usize,
    pub omega_threshold: f64,
    pub omega: f64,
    /// Slowest achieved observer rate across agents.
    pub achieved_omega: f64,
    /// Certified overall rate; `None` when the hypotheses fail.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AssumptionStatus {
    pub jointly_observable: bool,
    pub graphs_strongly_connected: bool,
    pub residual_observability: bool,
    pub rate_certified: bool,
}

impl AssumptionStatus {
    pub fn all(&self) -> bool {
        self.jointly_observable
            && self.graphs_strongly_connected
            && self.residual_observability
            && self.rate_certified
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        if !self.jointly_observable {
            Some("joint observability")
        } else if !self.graphs_strongly_connected {
            Some("strong connectivity")
        } else if !self.residual_observability {
            Some("residual joint observability after dropout")
        } else if !self.rate_certified {
            Some("certified convergence rate (lambda > 0)")
        } else {
            None
        }
    }
}

/// Fully validated runtime scenario.
#[derive(Debug)]
pub struct BuiltScenario {
    pub config: ScenarioConfig,
    pub model: SystemModel,
    pub designs: Vec<AgentDesign>,
    pub schedule: GraphSchedule,
    pub params: ObserverParams,
    pub certification: Certification,
    pub assumptions: AssumptionStatus,
    pub warnings: Vec<String>,
    pub sim: SimConfig,
    /// max_i |xhat0_i - x0| and max_i |w0_i - L_i x0|.
    pub delta_x: f64,
    pub delta_mu: f64,
}

pub fn build_scenario(config: &ScenarioConfig) -> Result<BuiltScenario> {
    let mut warnings: Vec<String> = Vec::new();

    // plant
    let a = rows_to_mat(&config.system.a, "system.a")?;
    if a.nrows() != a.ncols() {
        return Err(Error::Config("system.a must be square".into()));
    }
    let c: Result<Vec<DMatrix<f64>>> = config
        .system
        .c
        .iter()
        .enumerate()
        .map(|(i, rows)| rows_to_mat(rows, &format!("system.c[{}]", i + 1)))
        .collect();
    let model = SystemModel::new(a, c?)?;
    let n = model.state_dim();
    let m = model.channel_count();

    // schedule
    let t_period = config.params.t_period;
    if !(t_period > 0.0) {
        return Err(Error::Config("params.T must be positive".into()));
    }
    let mode = match &config.graph {
        GraphSection::Static { neighbors } => {
            ScheduleMode::Static(neighbors_to_digraph(neighbors, m)?)
        }
        GraphSection::Piecewise { pieces } => {
            let built: Result<Vec<(f64, Digraph)>> = pieces
                .iter()
                .map(|p| Ok((p.t, neighbors_to_digraph(&p.neighbors, m)?)))
                .collect();
            ScheduleMode::Piecewise(built?)
        }
        GraphSection::Generator { density, seed, dwell } => ScheduleMode::Generator {
            m,
            density: *density,
            seed: *seed,
            dwell: *dwell,
        },
    };
    let mut dropouts: Vec<(f64, usize)> = Vec::new();
    for d in &config.dropouts {
        if d.agent < 1 || d.agent > m {
            return Err(Error::Config(format!("dropout agent {} out of range", d.agent)));
        }
        let snapped = (d.time / t_period).round().max(1.0) * t_period;
        if (snapped - d.time).abs() > 1e-9 * d.time.abs().max(1.0) {
            warnings.push(format!(
                "dropout of agent {} snapped from t = {} to the event time t = {}",
                d.agent, d.time, snapped
            ));
        }
        dropouts.push((snapped, d.agent - 1));
    }
    let policy = match config.connectivity_policy {
        PolicySection::Error => ConnectivityPolicy::Error,
        PolicySection::Warn => ConnectivityPolicy::Warn,
    };
    let schedule = GraphSchedule::new(mode, dropouts, policy)?;

    // decomposition: explicit L or synthesized
    let ls: Vec<DMatrix<f64>> = match &config.design {
        Some(section) => {
            if section.l.len() != m {
                return Err(Error::Config(format!(
                    "design.l lists {} agents, expected {}",
                    section.l.len(),
                    m
                )));
            }
            let parsed: Result<Vec<DMatrix<f64>>> = section
                .l
                .iter()
                .enumerate()
                .map(|(i, rows)| rows_to_mat(rows, &format!("design.l[{}]", i + 1)))
                .collect();
            parsed?
        }
        None => {
            let built: Result<Vec<DMatrix<f64>>> = (0..m)
                .map(|i| build_l(model.channel(i), model.a()))
                .collect();
            built?
        }
    };

    // certification (depends only on the L_i through the projections)
    let zeta = numerics::zeta(model.a())?;
    let mut projections = Vec::with_capacity(m);
    for (i, l) in ls.iter().enumerate() {
        if numerics::rank_default(l)? != l.nrows() {
            return Err(Error::Config(format!(
                "design.l[{}] is rank deficient",
                i + 1
            )));
        }
        let gram = l * l.transpose();
        let q_default = numerics::solve_xm_eq_b(&l.transpose(), &gram.transpose())?;
        projections.push(DMatrix::<f64>::identity(n, n) - q_default * l);
    }
    let seq_len = contraction_sequence_length(m);
    let class_size = (m as f64).powi(seq_len as i32);
    let method = if class_size <= ENUMERATION_CAP as f64 {
        ContractionMethod::Exact
    } else {
        warnings.push(format!(
            "contraction class has {class_size:.3e} sequences; sampling 20000 of them"
        ));
        ContractionMethod::Sampled {
            budget: 20_000,
            seed: config.seed,
        }
    };
    let cert = contraction_coefficient(&projections, method, ENUMERATION_CAP)?;
    warnings.extend(cert.warnings.iter().cloned());

    let q_min = min_iterations(zeta, t_period, cert.gamma, m)?;
    let q = config.params.q.unwrap_or(q_min);
    if q < q_min {
        warnings.push(format!(
            "q = {q} is below the certified minimum {q_min}; the exponential-rate certificate is void"
        ));
    }
    let r = q / quotient_divisor(m);
    let omega_threshold = min_observer_rate(r, t_period, cert.gamma, zeta);
    let omega = config
        .params
        .omega
        .unwrap_or_else(|| (2.0 * omega_threshold.max(0.0)).max(1.0));

    // agent designs
    let k_override: Option<Vec<DMatrix<f64>>> = match config.design.as_ref().and_then(|d| d.k.as_ref()) {
        Some(ks) => {
            if ks.len() != m {
                return Err(Error::Config(format!(
                    "design.k lists {} agents, expected {}",
                    ks.len(),
                    m
                )));
            }
            let parsed: Result<Vec<DMatrix<f64>>> = ks
                .iter()
                .enumerate()
                .map(|(i, rows)| rows_to_mat(rows, &format!("design.k[{}]", i + 1)))
                .collect();
            Some(parsed?)
        }
        None => None,
    };
    let g_override: Vec<Option<DMatrix<f64>>> = match config.design.as_ref().and_then(|d| d.g.as_ref())
    {
        Some(gs) => {
            if gs.len() != m {
                return Err(Error::Config(format!(
                    "design.g lists {} agents, expected {}",
                    gs.len(),
                    m
                )));
            }
            let parsed: Result<Vec<Option<DMatrix<f64>>>> = gs
                .iter()
                .enumerate()
                .map(|(i, rows)| match rows {
                    Some(rows) => Ok(Some(rows_to_mat(rows, &format!("design.g[{}]", i + 1))?)),
                    None => Ok(None),
                })
                .collect();
            parsed?
        }
        None => vec![None; m],
    };

    let mut designs = Vec::with_capacity(m);
    for (i, l) in ls.iter().enumerate() {
        let k = match &k_override {
            Some(ks) => ks[i].clone(),
            None => {
                let (cbar, abar) = reduce_pair(model.channel(i), model.a(), l)?;
                crate::design::place_observer_gain(&cbar, &abar, omega)?
            }
        };
        let design = AgentDesign::from_parts(&model, i, l.clone(), k, g_override[i].as_ref())?;
        if design.achieved_rate < omega - 1e-6 * omega.max(1.0) {
            warnings.push(format!(
                "agent {}: observer rate {:.6} falls short of the configured target {omega}",
                i + 1,
                design.achieved_rate
            ));
        }
        designs.push(design);
    }
    crate::design::check_stacked_rank(&model, &designs)?;

    let achieved_omega = designs
        .iter()
        .map(|d| d.achieved_rate)
        .fold(f64::INFINITY, f64::min);
    let lambda = (omega_threshold > 0.0 && achieved_omega > omega_threshold)
        .then_some(omega_threshold);

    // schedule connectivity over the run horizon (strong connectivity can
    // only change at piece switches and dropout times)
    let t_end = config.sim.t_end;
    let mut critical: Vec<f64> = vec![0.0];
    if let GraphSection::Piecewise { pieces } = &config.graph {
        critical.extend(pieces.iter().map(|p| p.t).filter(|&t| t <= t_end));
    }
    critical.extend(
        schedule
            .dropouts()
            .iter()
            .map(|&(t, _)| t)
            .filter(|&t| t <= t_end),
    );
    if let GraphSection::Generator { dwell, .. } = &config.graph {
        let mut t = 0.0;
        for _ in 0..8 {
            t += dwell;
            if t > t_end {
                break;
            }
            critical.push(t);
        }
    }
    let mut graphs_strongly_connected = true;
    for &t in &critical {
        match schedule.graph_at(t) {
            Ok(g) => {
                if !is_strongly_connected(&g) {
                    graphs_strongly_connected = false;
                    warnings.push(format!("graph at t = {t} is not strongly connected"));
                }
            }
            Err(Error::Assumption(msg)) => {
                graphs_strongly_connected = false;
                warnings.push(msg);
            }
            Err(e) => return Err(e),
        }
    }

    // residual joint observability after each dropout prefix
    let mut residual_observability = true;
    for k in 0..schedule.dropouts().len() {
        let t = schedule.dropouts()[k].0;
        let members = schedule.members_at(t);
        if let Err(e) = model.with_channels(&members) {
            residual_observability = false;
            warnings.push(format!(
                "after the dropout at t = {t} the residual system fails: {e}"
            ));
        }
    }

    let certification = Certification {
        zeta,
        cert,
        q_min,
        q,
        r,
        omega_threshold,
        omega,
        achieved_omega,
        lambda,
    };
    let assumptions = AssumptionStatus {
        jointly_observable: true, // SystemModel::new enforced it
        graphs_strongly_connected,
        residual_observability,
        rate_certified: lambda.is_some(),
    };

    // initial data
    let x0 = match config.initial.as_ref().and_then(|i| i.x0.as_ref()) {
        Some(v) => vec_to_dvector(v, "initial.x0")?,
        None => DVector::zeros(n),
    };
    if x0.len() != n {
        return Err(Error::Config("initial.x0 has wrong dimension".into()));
    }
    let w0: Vec<DVector<f64>> = match config.initial.as_ref().and_then(|i| i.w0.as_ref()) {
        Some(rows) => {
            if rows.len() != m {
                return Err(Error::Config("initial.w0 needs one vector per agent".into()));
            }
            let parsed: Result<Vec<DVector<f64>>> = rows
                .iter()
                .enumerate()
                .map(|(i, v)| vec_to_dvector(v, &format!("initial.w0[{}]", i + 1)))
                .collect();
            parsed?
        }
        None => designs.iter().map(|d| DVector::zeros(d.n_i)).collect(),
    };
    let xhat0: Vec<DVector<f64>> = match config.initial.as_ref().and_then(|i| i.xhat0.as_ref()) {
        Some(rows) => {
            if rows.len() != m {
                return Err(Error::Config("initial.xhat0 needs one vector per agent".into()));
            }
            let parsed: Result<Vec<DVector<f64>>> = rows
                .iter()
                .enumerate()
                .map(|(i, v)| vec_to_dvector(v, &format!("initial.xhat0[{}]", i + 1)))
                .collect();
            parsed?
        }
        None => vec![DVector::zeros(n); m],
    };

    let disturbance = match &config.disturbance {
        Some(d) => Some(Disturbance {
            b: vec_to_dvector(&d.b, "disturbance.b")?,
            amplitude: d.amplitude,
            frequency: d.frequency,
        }),
        None => None,
    };

    let params = ObserverParams {
        t_period,
        tau: config.params.tau,
        q,
        omega,
    };
    let sample_dt = config.sim.sample_dt.unwrap_or(t_period / 100.0);

    let delta_x = xhat0
        .iter()
        .map(|v| (v - &x0).norm())
        .fold(0.0, f64::max);
    let delta_mu = designs
        .iter()
        .zip(&w0)
        .map(|(d, w)| (w - &d.l * &x0).norm())
        .fold(0.0, f64::max);

    let sim = SimConfig {
        model: model.clone(),
        designs: designs.clone(),
        params,
        schedule: schedule.clone(),
        x0,
        w0,
        xhat0,
        disturbance,
        t_end,
        sample_dt,
        log_iterations: config.sim.log_iterations,
        record_estimates: config.sim.record_estimates,
    };
    sim.validate()?;

    Ok(BuiltScenario {
        config: config.clone(),
        model,
        designs,
        schedule,
        params,
        certification,
        assumptions,
        warnings,
        sim,
        delta_x,
        delta_mu,
    })
}
