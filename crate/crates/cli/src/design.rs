use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use qvco_core::circuit_analysis::{
    design_tank, predict_tuning_range, tank_resonance_and_q, DesignSpec, Feasibility, TankDesign,
    TuningPrediction,
};
use qvco_core::device_models::{ArrayCode, TuningArray, VaractorModel};
use qvco_core::em_extract::TransformerModel;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::CliResult;
use crate::io;
use crate::units::{q, q_opt, to_pretty};

/// kN closer than this to sqrt(2) is called out in the report.
const BOUNDARY_MARGIN: f64 = 0.05;

/// Spec file: the design targets plus the switched-array unit capacitor.
#[derive(Debug, Deserialize)]
pub struct SpecFile {
    #[serde(flatten)]
    pub spec: DesignSpec,
    /// Full-array capacitance step (F).
    #[serde(default = "default_unit_c")]
    pub array_unit_c: f64,
}

fn default_unit_c() -> f64 {
    1.0e-12
}

/// Varactor spanning the spec's capacitance range over its control range.
pub fn spec_varactor(spec: &DesignSpec) -> VaractorModel {
    VaractorModel {
        c_min: spec.c_var_min,
        c_max: spec.c_var_max,
        v_lo: spec.v_c_min,
        v_hi: spec.v_c_max,
        ..VaractorModel::reference()
    }
}

pub fn tuning(d: &TankDesign, spec: &DesignSpec, unit_c: f64) -> CliResult<TuningPrediction> {
    let array = TuningArray::new(unit_c, ArrayCode::B00)?;
    Ok(predict_tuning_range(&d.tank, &spec_varactor(spec), &array, spec.c_parasitic)?)
}

fn tuning_json(t: &TuningPrediction, unit_c: f64, c_par: f64) -> Value {
    json!({
        "array_unit_c": q(unit_c, "F"),
        "c_parasitic": q(c_par, "F"),
        "codes": t.codes.iter().map(|c| json!({
            "code": c.code.label(),
            "c_array": q(c.c_array, "F"),
            "f_min": q(c.f_min, "Hz"),
            "f_max": q(c.f_max, "Hz"),
            "k_vco": q(c.k_vco, "Hz/V"),
        })).collect::<Vec<_>>(),
        "f_min": q(t.f_min, "Hz"),
        "f_max": q(t.f_max, "Hz"),
        "ratio": q(t.f_max / t.f_min, "1"),
    })
}

pub fn run(spec_path: &Path, xfmr_path: &Path, out: Option<&Path>) -> CliResult<Value> {
    let file: SpecFile = io::read_json(spec_path)?;
    let xfmr: TransformerModel = io::read_json(xfmr_path)?;
    let spec = file.spec;
    let d = design_tank(&spec, &xfmr)?;
    let t = &d.tank;
    let (omega0, q_tank) = tank_resonance_and_q(t);
    let kn = t.kn();

    let mut diagnostics = d.diagnostics.clone();
    let margin = kn / SQRT_2 - 1.0;
    if margin.abs() < BOUNDARY_MARGIN && d.feasibility.is_feasible() {
        diagnostics.push(format!(
            "kN = {kn:.4} is {:.2}% from the sqrt(2) boundary; the start-up condition is sensitive to k and N",
            margin * 100.0
        ));
    }
    let (verdict, constraint) = match &d.feasibility {
        Feasibility::Feasible => ("feasible", None),
        Feasibility::Infeasible { constraint } => ("infeasible", Some(constraint.clone())),
    };
    let tuning = tuning(&d, &spec, file.array_unit_c)?;

    let report = json!({
        "command": "design",
        "target": {
            "f_c": q(spec.f_c, "Hz"),
            "omega_c": q(2.0 * PI * spec.f_c, "rad/s"),
            "v_dd": q(spec.v_dd, "V"),
            "v_out_pp": q(spec.v_out_pp, "V"),
        },
        "tank": {
            "r": q(t.r, "ohm"),
            "c": q(t.c, "F"),
            "l_p": q(t.l_p, "H"),
            "k": q(t.k, "1"),
            "n": q(t.n, "1"),
            "kn": q(kn, "1"),
            "l_tank": q(t.l_tank(), "H"),
            "q_coil": q(d.q_coil, "1"),
            "q_tank": q(q_tank, "1"),
        },
        "f0": q(omega0 / (2.0 * PI), "Hz"),
        "g_m_min": q_opt(d.g_m_min, "S"),
        "f_osc_predicted": q_opt(d.omega_osc.map(|w| w / (2.0 * PI)), "Hz"),
        "feasibility": { "verdict": verdict, "constraint": constraint },
        "tuning": tuning_json(&tuning, file.array_unit_c, spec.c_parasitic),
        "diagnostics": diagnostics,
    });
    if let Some(dir) = out {
        io::ensure_dir(dir)?;
        io::write(dir, "design.json", &to_pretty(&report))?;
    }
    Ok(report)
}
