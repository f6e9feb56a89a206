use std::path::Path;

use qvco_core::circuit_analysis::{min_transconductance, TankParams};
use qvco_core::transient_sim::{
    build_linear_qvco, build_netlist, measure_metrics, quadrature_error_deg, quadrature_locked,
    sequence_error_deg, transient, LinearQvcoParams, OscillatorParams, SimConfig, SimMetrics, Topology, Waveforms,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io;
use crate::units::{q, q_opt, to_pretty};

/// Single-ended swing target (V).
pub const SWING_TARGET: f64 = 0.350;
/// Allowed relative deviation from the swing target.
pub const SWING_TOL: f64 = 0.30;
/// Phase tolerance of the quadrature verdict (degrees).
pub const QUADRATURE_TOL_DEG: f64 = 2.0;

/// What to simulate: one of the transistor-level oscillators or the
/// behavioral linear-tank quadrature model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Circuit(Topology),
    Linear,
}

impl Target {
    pub fn parse(tag: &str) -> CliResult<Self> {
        if tag == "linear-qvco" {
            return Ok(Target::Linear);
        }
        tag.parse::<Topology>()
            .map(Target::Circuit)
            .map_err(|_| CliError::input(format!("unknown topology '{tag}' (lc-vco, tf-vco, cr-vco, tc-qvco, linear-qvco)")))
    }

    pub fn tag(self) -> &'static str {
        match self {
            Target::Circuit(t) => t.tag(),
            Target::Linear => "linear-qvco",
        }
    }

    fn is_quadrature(self) -> bool {
        matches!(self, Target::Circuit(Topology::TcQvco) | Target::Linear)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSection {
    pub tank: TankParams,
    /// Device transconductance as a multiple of the start-up minimum.
    pub gm_margin: f64,
    pub i_sat: Option<f64>,
    pub seed_mode: bool,
}

impl Default for LinearSection {
    fn default() -> Self {
        Self {
            tank: TankParams { r: 1000.0, c: 4.6e-12, l_p: 3e-9, k: 0.52, n: 3.5 },
            gm_margin: 1.5,
            i_sat: Some(2e-3),
            seed_mode: false,
        }
    }
}

/// Run configuration shared by `simulate` and `sweep`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Used by `sweep`; `simulate` takes the topology from its flag.
    pub topology: Option<String>,
    pub params: OscillatorParams,
    pub sim: SimConfig,
    pub linear: LinearSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            topology: None,
            params: OscillatorParams::default(),
            // start-up of the default quadrature core takes about 80 ns
            sim: SimConfig { stop: 200e-9, ..SimConfig::default() },
            linear: LinearSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => io::read_json(p),
            None => Ok(Self::default()),
        }
    }
}

pub struct Run {
    pub waveforms: Waveforms,
    pub metrics: SimMetrics,
}

pub fn simulate_once(target: Target, cfg: &RunConfig) -> CliResult<Run> {
    cfg.sim.validate()?;
    let (net, v_dd) = match target {
        Target::Circuit(t) => (build_netlist(t, &cfg.params)?, cfg.params.v_dd),
        Target::Linear => {
            let l = &cfg.linear;
            if !(l.gm_margin >= 0.0 && l.gm_margin.is_finite()) {
                return Err(CliError::input(format!("linear.gm_margin must be >= 0, got {}", l.gm_margin)));
            }
            let g_m = l.gm_margin * min_transconductance(&l.tank)?;
            let p = LinearQvcoParams { tank: l.tank, g_m, i_sat: l.i_sat, seed_mode: l.seed_mode };
            // no supply in the behavioral model; v_dd only scales power
            (build_linear_qvco(&p)?, 1.0)
        }
    };
    let waveforms = transient(&net, &cfg.sim)?;
    let metrics = measure_metrics(&waveforms, v_dd)?;
    Ok(Run { waveforms, metrics })
}

/// Mean peak-to-peak swing of all outputs.
pub fn mean_swing(m: &SimMetrics) -> f64 {
    m.outputs.iter().map(|o| o.amplitude_pp).sum::<f64>() / m.outputs.len().max(1) as f64
}

pub fn metrics_json(target: Target, cfg: &RunConfig, run: &Run) -> Value {
    let m = &run.metrics;
    let s = &run.waveforms.stats;
    let swing = mean_swing(m);
    let swing_err = (swing - SWING_TARGET) / SWING_TARGET;
    let quadrature = if target.is_quadrature() {
        let locked = quadrature_locked(m, QUADRATURE_TOL_DEG);
        json!({
            "error": q_opt(quadrature_error_deg(m), "deg"),
            "sequence_error": q_opt(sequence_error_deg(m), "deg"),
            "tolerance": q(QUADRATURE_TOL_DEG, "deg"),
            "verdict": if locked { "PASS" } else { "FAIL" },
        })
    } else {
        Value::Null
    };
    json!({
        "command": "simulate",
        "topology": target.tag(),
        "v_dd": q_opt((target != Target::Linear).then_some(cfg.params.v_dd), "V"),
        "step": q(cfg.sim.step, "s"),
        "stop": q(cfg.sim.stop, "s"),
        "oscillating": m.oscillating,
        "steady_state": m.steady_state,
        "f_osc": q_opt(m.f_osc, "Hz"),
        "cycles": q(m.cycles as f64, "1"),
        "outputs": m.outputs.iter().map(|o| json!({
            "name": o.name,
            "amplitude_pp": q(o.amplitude_pp, "V"),
            "phase": q_opt(o.phase_deg, "deg"),
        })).collect::<Vec<_>>(),
        "delta_v_out": q(m.delta_v_out, "V"),
        "startup_time": q_opt(m.startup_time, "s"),
        "envelope_growth": q(m.envelope_growth, "1/s"),
        "power_core": q_opt(m.power_core_mw, "mW"),
        "power_aux": q_opt(m.power_aux_mw, "mW"),
        "power_total": q_opt(m.power_total_mw(), "mW"),
        "quadrature": quadrature,
        "swing": {
            "measured": q(swing, "V"),
            "target": q(SWING_TARGET, "V"),
            "relative_error": q(swing_err * 100.0, "%"),
            "verdict": if m.oscillating && swing_err.abs() <= SWING_TOL { "PASS" } else { "FAIL" },
        },
        "solver": {
            "steps": q(s.steps as f64, "1"),
            "newton_iterations": q(s.newton_iterations as f64, "1"),
            "max_residual": q(s.max_residual, "A"),
            "source_ramped": s.source_ramped,
        },
    })
}

pub fn run(topology: &str, config: Option<&Path>, out: &Path) -> CliResult<Value> {
    let target = Target::parse(topology)?;
    let cfg = RunConfig::load(config)?;
    let run = simulate_once(target, &cfg)?;
    let report = metrics_json(target, &cfg, &run);
    io::ensure_dir(out)?;
    io::write(out, "waveforms.csv", &run.waveforms.outputs_csv()?)?;
    io::write(out, "metrics.json", &to_pretty(&report))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_tags_parse() {
        assert_eq!(Target::parse("tc-qvco").unwrap(), Target::Circuit(Topology::TcQvco));
        assert_eq!(Target::parse("linear-qvco").unwrap(), Target::Linear);
        assert!(matches!(Target::parse("ring"), Err(CliError::Input(_))));
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"params": {"v_c": 0.6}}"#).unwrap();
        assert_eq!(cfg.params.v_c, 0.6);
        assert_eq!(cfg.params.v_dd, 0.7);
        assert_eq!(cfg.sim.stop, 200e-9);
        assert!(serde_json::from_str::<RunConfig>(r#"{"simm": {}}"#).is_err());
    }
}
