use std::fmt::Write;
use std::path::Path;

use qvco_core::em_extract::{
    build_transformer_detailed, ProcessParams, TransformerGeometry, TransformerModel, TransformerStyle,
    DEFAULT_EVAL_FREQUENCY,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::CliResult;
use crate::io;
use crate::units::{q, to_pretty};

/// Geometry file layout. `process` defaults to the reference stack.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryFile {
    style: TransformerStyle,
    turns_primary: usize,
    turns_secondary: usize,
    tsv_pitch: f64,
    row_spacing: f64,
    #[serde(default = "ProcessParams::reference")]
    process: ProcessParams,
}

impl From<GeometryFile> for TransformerGeometry {
    fn from(g: GeometryFile) -> Self {
        TransformerGeometry {
            style: g.style,
            turns_primary: g.turns_primary,
            turns_secondary: g.turns_secondary,
            tsv_pitch: g.tsv_pitch,
            row_spacing: g.row_spacing,
            process: g.process,
        }
    }
}

pub fn load_geometry(path: &Path) -> CliResult<TransformerGeometry> {
    let g: GeometryFile = io::read_json(path)?;
    Ok(g.into())
}

/// Published metrics for the same transformer style.
pub fn published(style: TransformerStyle) -> (&'static str, TransformerModel) {
    match style {
        TransformerStyle::Toroidal => ("published toroidal TSV transformer", TransformerModel::published_toroidal()),
        TransformerStyle::VerticalSpiral => {
            ("published vertical spiral TSV transformer", TransformerModel::published_vertical_spiral())
        }
    }
}

/// (name, unit, scale to display unit, getter)
type Metric = (&'static str, &'static str, f64, fn(&TransformerModel) -> f64);

const METRICS: [Metric; 9] = [
    ("L_p", "nH", 1e9, |m| m.l_p),
    ("L_s", "nH", 1e9, |m| m.l_s()),
    ("R_pdc", "ohm", 1.0, |m| m.r_pdc),
    ("R_sdc", "ohm", 1.0, |m| m.r_sdc),
    ("R_pac", "ohm", 1.0, |m| m.r_pac),
    ("R_sac", "ohm", 1.0, |m| m.r_sac),
    ("k_ps", "1", 1.0, |m| m.k_ps()),
    ("k_ss", "1", 1.0, |m| m.k_ss),
    ("area", "mm^2", 1.0, |m| m.area_mm2),
];

pub fn model_json(m: &TransformerModel) -> Value {
    json!({
        "l_p": q(m.l_p, "H"),
        "l_s1": q(m.l_s1, "H"),
        "l_s2": q(m.l_s2, "H"),
        "r_pdc": q(m.r_pdc, "ohm"),
        "r_sdc": q(m.r_sdc, "ohm"),
        "r_pac": q(m.r_pac, "ohm"),
        "r_sac": q(m.r_sac, "ohm"),
        "k_ps1": q(m.k_ps1, "1"),
        "k_ps2": q(m.k_ps2, "1"),
        "k_ss": q(m.k_ss, "1"),
        "area": q(m.area_mm2, "mm^2"),
        "eval_frequency": q(m.eval_frequency, "Hz"),
    })
}

fn comparison(model: &TransformerModel, target: &TransformerModel) -> Vec<Value> {
    METRICS
        .iter()
        .map(|&(name, unit, scale, get)| {
            let (x, t) = (get(model), get(target));
            json!({
                "metric": name,
                "extracted": q(x * scale, unit),
                "target": q(t * scale, unit),
                "relative_error": q((x - t) / t * 100.0, "%"),
            })
        })
        .collect()
}

fn table(style: TransformerStyle, model: &TransformerModel, label: &str, target: &TransformerModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{style:?} transformer at {:.3} GHz", model.eval_frequency * 1e-9);
    let _ = writeln!(s, "{:<8} {:>12} {:>12} {:>10}  unit", "metric", "extracted", "target", "error %");
    for &(name, unit, scale, get) in &METRICS {
        let (x, t) = (get(model), get(target));
        let _ = writeln!(
            s,
            "{name:<8} {:>12.4} {:>12.4} {:>10.1}  {unit}",
            x * scale,
            t * scale,
            (x - t) / t * 100.0
        );
    }
    let _ = writeln!(s, "targets: {label}");
    s
}

pub fn run(geometry: &Path, freq: Option<f64>, out: Option<&Path>) -> CliResult<Value> {
    let geom = load_geometry(geometry)?;
    let f_eval = freq.unwrap_or(DEFAULT_EVAL_FREQUENCY);
    let ex = build_transformer_detailed(&geom, f_eval)?;
    let (label, target) = published(geom.style);

    let mut notes = Vec::new();
    if freq.is_none() {
        notes.push(format!("evaluation frequency not given; defaulted to {DEFAULT_EVAL_FREQUENCY:e} Hz"));
    }
    notes.push("AC resistance uses a skin-effect model; proximity and substrate loss are not included".to_string());

    let l = ex.l_matrix;
    let report = json!({
        "command": "extract",
        "geometry": {
            "file": geometry.display().to_string(),
            "style": geom.style,
            "turns_primary": q(geom.turns_primary as f64, "turns"),
            "turns_secondary": q(geom.turns_secondary as f64, "turns"),
            "tsv_pitch": q(geom.tsv_pitch, "um"),
            "row_spacing": q(geom.row_spacing, "um"),
        },
        "eval_frequency": q(f_eval, "Hz"),
        "eval_frequency_defaulted": freq.is_none(),
        "model": model_json(&ex.model),
        "inductance_matrix": l.iter().map(|r| r.iter().map(|&x| q(x, "H")).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "comparison": { "targets": label, "rows": comparison(&ex.model, &target) },
        "notes": notes,
    });

    if let Some(dir) = out {
        io::ensure_dir(dir)?;
        io::write(dir, "extract.json", &to_pretty(&report))?;
        io::write(dir, "extract.txt", &table(geom.style, &ex.model, label, &target))?;
        let raw = serde_json::to_value(ex.model).expect("model serializes");
        io::write(dir, "transformer.json", &to_pretty(&raw))?;
    }
    Ok(report)
}
