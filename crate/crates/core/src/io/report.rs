//! Design/certification reports and run summaries (stable JSON shapes).

use serde::{Deserialize, Serialize};

use crate::design::check_joint_observability;
use crate::error::Result;
use crate::io::config::BuiltScenario;
use crate::numerics;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexEntry {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentReport {
    /// 1-based agent label.
    pub agent: usize,
    pub n_i: usize,
    /// |L A - Abar L| and |C - Cbar L| relative to the data scale.
    pub residual_la: f64,
    pub residual_c: f64,
    pub observer_eigenvalues: Vec<ComplexEntry>,
    pub achieved_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemReport {
    pub n: usize,
    pub m: usize,
    pub jointly_observable: bool,
    pub joint_rank: usize,
    pub channel_ranks: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub rho: f64,
    pub gamma: f64,
    /// "exact" or "sampled".
    pub method: String,
    pub sequences_checked: usize,
    pub sequence_length: usize,
    pub zeta: f64,
    pub q_min: usize,
    pub q: usize,
    pub r: usize,
    pub omega_threshold: f64,
    pub omega: f64,
    pub achieved_omega: f64,
    /// Certified overall exponential rate; null when uncertified.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionsReport {
    pub channels_nonzero: bool,
    pub jointly_observable: bool,
    pub graphs_strongly_connected: bool,
    pub residual_observability: bool,
    pub rate_certified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub schema: u32,
    pub system: SystemReport,
    pub agents: Vec<AgentReport>,
    pub certification: CertificationReport,
    pub assumptions: AssumptionsReport,
    pub warnings: Vec<String>,
}

pub fn design_report(built: &BuiltScenario) -> Result<DesignReport> {
    let obs = check_joint_observability(&built.model)?;
    let a = built.model.a();
    let a_scale = numerics::spectral_norm(a).max(1.0);
    let mut agents = Vec::with_capacity(built.designs.len());
    for d in &built.designs {
        let c_i = built.model.channel(d.index);
        let residual_la =
            numerics::spectral_norm(&(&d.l * a - &d.abar * &d.l)) / a_scale;
        let residual_c = numerics::spectral_norm(&(c_i - &d.cbar * &d.l))
            / numerics::spectral_norm(c_i).max(1.0);
        let spec = numerics::eigenvalues(&d.closed_loop())?;
        agents.push(AgentReport {
            agent: d.index + 1,
            n_i: d.n_i,
            residual_la,
            residual_c,
            observer_eigenvalues: spec
                .eigenvalues
                .iter()
                .map(|z| ComplexEntry { re: z.re, im: z.im })
                .collect(),
            achieved_rate: d.achieved_rate,
        });
    }
    let cert = &built.certification;
    Ok(DesignReport {
        schema: 1,
        system: SystemReport {
            n: built.model.state_dim(),
            m: built.model.channel_count(),
            jointly_observable: obs.jointly_observable,
            joint_rank: obs.joint_rank,
            channel_ranks: obs.channel_ranks,
        },
        agents,
        certification: CertificationReport {
            rho: cert.cert.rho,
            gamma: cert.cert.gamma,
            method: if cert.cert.exact { "exact" } else { "sampled" }.to_string(),
            sequences_checked: cert.cert.sequences_checked,
            sequence_length: cert.cert.sequence_length,
            zeta: cert.zeta,
            q_min: cert.q_min,
            q: cert.q,
            r: cert.r,
            omega_threshold: cert.omega_threshold,
            omega: cert.omega,
            achieved_omega: cert.achieved_omega,
            lambda: cert.lambda,
        },
        assumptions: AssumptionsReport {
            channels_nonzero: true,
            jointly_observable: built.assumptions.jointly_observable,
            graphs_strongly_connected: built.assumptions.graphs_strongly_connected,
            residual_observability: built.assumptions.residual_observability,
            rate_certified: built.assumptions.rate_certified,
        },
        warnings: built.warnings.clone(),
    })
}

/// Fixed-key run summary: `fitted_rate`, `lambda_certified`,
/// `final_max_err`, `events`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub fitted_rate: Option<f64>,
    pub lambda_certified: Option<f64>,
    pub final_max_err: f64,
    pub events: usize,
}

/// One acceptance check of a reproduce run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceCheck {
    pub name: String,
    pub pass: bool,
    pub observed: f64,
    pub constraint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub preset: String,
    pub pass: bool,
    pub checks: Vec<AcceptanceCheck>,
}

impl AcceptanceSummary {
    pub fn new(preset: &str) -> Self {
        AcceptanceSummary {
            preset: preset.to_string(),
            pass: true,
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, pass: bool, observed: f64, constraint: String) {
        self.pass &= pass;
        self.checks.push(AcceptanceCheck {
            name: name.to_string(),
            pass,
            observed,
            constraint,
        });
    }
}
