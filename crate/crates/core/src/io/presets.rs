//! Bundled scenario configurations for the `reproduce` command.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io::config::{
    mat_to_rows, DesignSection, DisturbanceSection, DropoutSection, GraphSection, InitialSection,
    ParamsSection, PolicySection, ScenarioConfig, SimSection, SystemSection,
};
use crate::presets;

pub const PRESET_NAMES: &[&str] = &["paper-example", "paper-noise", "resilience4"];

pub fn preset_config(name: &str) -> Result<ScenarioConfig> {
    match name {
        "paper-example" => Ok(paper_example_config()),
        "paper-noise" => Ok(paper_noise_config()),
        "resilience4" => Ok(resilience4_config()),
        other => Err(Error::Config(format!(
            "unknown preset '{other}'; available: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

fn neighbors(map: &[(usize, &[usize])]) -> BTreeMap<String, Vec<usize>> {
    map.iter()
        .map(|(v, n)| (v.to_string(), n.to_vec()))
        .collect()
}

/// Three-agent benchmark: bundled system, graph, observer matrices,
/// schedule constants and initial data; runs to t = 400.
pub fn paper_example_config() -> ScenarioConfig {
    let model = presets::paper_system();
    let (x0, w0, xhat0) = presets::paper_initial();
    ScenarioConfig {
        schema: 1,
        system: SystemSection {
            a: mat_to_rows(model.a()),
            c: model.channels().iter().map(mat_to_rows).collect(),
        },
        graph: GraphSection::Static {
            neighbors: neighbors(&[(1, &[1, 2]), (2, &[1, 2, 3]), (3, &[2, 3])]),
        },
        dropouts: Vec::new(),
        params: ParamsSection {
            t_period: 1.0,
            tau: 0.5,
            q: Some(45),
            omega: Some(2.0),
        },
        design: Some(DesignSection {
            l: presets::paper_l().iter().map(mat_to_rows).collect(),
            k: Some(presets::paper_k().iter().map(mat_to_rows).collect()),
            g: None,
        }),
        initial: Some(InitialSection {
            x0: Some(x0.iter().copied().collect()),
            w0: Some(w0.iter().map(|v| v.iter().copied().collect()).collect()),
            xhat0: Some(xhat0.iter().map(|v| v.iter().copied().collect()).collect()),
        }),
        disturbance: None,
        sim: SimSection {
            t_end: 400.0,
            sample_dt: Some(0.01),
            log_iterations: false,
            record_estimates: false,
        },
        seed: 0,
        connectivity_policy: PolicySection::Error,
    }
}

/// The benchmark driven by the unmeasured disturbance
/// nu = 7 cos(10 t) entering every state; runs to t = 200.
pub fn paper_noise_config() -> ScenarioConfig {
    let mut config = paper_example_config();
    config.disturbance = Some(DisturbanceSection {
        b: vec![1.0, 1.0, 1.0, 1.0],
        amplitude: 7.0,
        frequency: 10.0,
    });
    config.sim.t_end = 200.0;
    config
}

/// Four-agent dropout scenario: a fourth, individually observable
/// channel, the resilient four-vertex graph, and agent 2 leaving at
/// t = 50. Gains are synthesized; q is fixed well below the (extremely
/// conservative) certified minimum, so the run is honest about carrying
/// no rate certificate.
pub fn resilience4_config() -> ScenarioConfig {
    let model = presets::resilience_system();
    ScenarioConfig {
        schema: 1,
        system: SystemSection {
            a: mat_to_rows(model.a()),
            c: model.channels().iter().map(mat_to_rows).collect(),
        },
        graph: GraphSection::Static {
            neighbors: neighbors(&[
                (1, &[1, 2, 3]),
                (2, &[1, 2, 3, 4]),
                (3, &[1, 2, 3, 4]),
                (4, &[2, 3, 4]),
            ]),
        },
        dropouts: vec![DropoutSection {
            time: 50.0,
            agent: 2,
        }],
        params: ParamsSection {
            t_period: 1.0,
            tau: 0.5,
            q: Some(40),
            omega: Some(2.0),
        },
        design: None,
        initial: Some(InitialSection {
            x0: Some(vec![3.0, 2.0, 4.0, 1.0]),
            w0: None,
            xhat0: Some(vec![vec![-4.0, -4.0, -4.0, -4.0]; 4]),
        }),
        disturbance: None,
        sim: SimSection {
            t_end: 400.0,
            sample_dt: Some(0.01),
            log_iterations: false,
            record_estimates: false,
        },
        seed: 0,
        connectivity_policy: PolicySection::Error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::build_scenario;

    #[test]
    fn unknown_preset_is_a_config_error() {
        assert!(preset_config("nope").is_err());
    }

    #[test]
    fn noise_preset_builds() {
        let built = build_scenario(&paper_noise_config()).unwrap();
        assert!(built.sim.disturbance.is_some());
        assert!(built.assumptions.all());
    }

    #[test]
    fn resilience_preset_builds_without_rate_certificate() {
        let built = build_scenario(&resilience4_config()).unwrap();
        assert!(built.certification.lambda.is_none());
        assert!(built.assumptions.jointly_observable);
        assert!(built.assumptions.graphs_strongly_connected);
        assert!(built.assumptions.residual_observability);
        assert!(!built.assumptions.rate_certified);
    }
}
