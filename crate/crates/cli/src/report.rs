use std::path::Path;

use qvco_core::circuit_analysis::{figure_of_merit, TankParams};
use qvco_core::transient_sim::phase_noise_leeson;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io;
use crate::units::{get_q, q, to_pretty};

const LITERATURE: &str = include_str!("../data/literature_comparison.json");

/// Offset of every phase-noise and FoM figure (Hz).
const OFFSET: f64 = 1e6;

/// Inputs of the published FoM figures: (design, carrier Hz, power mW,
/// phase noise dBc/Hz, quoted FoM dB).
const PUBLISHED_FOM: [(&str, f64, f64, f64, f64); 2] = [
    ("toroidal", 2.5e9, 1.5, -114.0, -180.0),
    ("vertical_spiral", 2.5e9, 1.7, -111.2, -177.0),
];

const SECTIONS: [(&str, &str); 4] = [
    ("extraction", "extract.json"),
    ("design", "design.json"),
    ("simulation", "metrics.json"),
    ("sweep", "sweep.json"),
];

fn arithmetic_check() -> CliResult<Value> {
    PUBLISHED_FOM
        .iter()
        .map(|&(name, f0, p, pn, quoted)| {
            let fom = figure_of_merit(f0, OFFSET, p, pn)?;
            Ok(json!({
                "design": name,
                "inputs": {
                    "carrier": q(f0, "Hz"),
                    "offset": q(OFFSET, "Hz"),
                    "power": q(p, "mW"),
                    "phase_noise": q(pn, "dBc/Hz"),
                },
                "fom": q(fom, "dB"),
                "quoted": q(quoted, "dB"),
                "difference": q(fom - quoted, "dB"),
            }))
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Value::Array)
}

/// Leeson estimate and FoM from the designed tank and the simulated run.
fn computed_fom(design: Option<&Value>, sim: Option<&Value>) -> CliResult<Value> {
    let (Some(d), Some(s)) = (design, sim) else {
        return Ok(json!({ "status": "missing", "needs": ["design", "simulation"] }));
    };
    let tank = (|| {
        Some(TankParams {
            r: get_q(d, "tank/r")?,
            c: get_q(d, "tank/c")?,
            l_p: get_q(d, "tank/l_p")?,
            k: get_q(d, "tank/k")?,
            n: get_q(d, "tank/n")?,
        })
    })();
    let (Some(tank), Some(f_osc), Some(p_core), Some(p_total)) =
        (tank, get_q(s, "f_osc"), get_q(s, "power_core"), get_q(s, "power_total"))
    else {
        return Ok(json!({
            "status": "missing",
            "reason": "design tank, oscillation frequency or supply power not available",
        }));
    };
    let pn = phase_noise_leeson(&tank, p_core, OFFSET, 0.0)?;
    let fom = figure_of_merit(f_osc, OFFSET, p_total, pn)?;
    Ok(json!({
        "status": "present",
        "phase_noise": q(pn, "dBc/Hz"),
        "signal_power": q(p_core, "mW"),
        "excess_noise": q(0.0, "dB"),
        "carrier": q(f_osc, "Hz"),
        "power": q(p_total, "mW"),
        "fom": q(fom, "dB"),
        "note": "Leeson estimate from the designed tank Q with the core power as signal power; \
                 device noise is not modeled",
    }))
}

pub fn run(dir: &Path) -> CliResult<Value> {
    if !dir.is_dir() {
        return Err(CliError::input(format!("{}: not a directory", dir.display())));
    }
    let mut sections = serde_json::Map::new();
    let mut found = Vec::new();
    let mut gaps = Vec::new();
    for (name, file) in SECTIONS {
        let doc = io::read_json_if_present(&dir.join(file))?;
        let entry = match &doc {
            Some(v) => json!({ "status": "present", "file": file, "data": v }),
            None => {
                gaps.push(name);
                json!({ "status": "missing", "file": file })
            }
        };
        sections.insert(name.to_string(), entry);
        found.push(doc);
    }
    let literature: Value = serde_json::from_str(LITERATURE).expect("bundled literature table is valid JSON");

    let report = json!({
        "command": "report",
        "computed": sections,
        "gaps": gaps,
        "fom": {
            "arithmetic_check": arithmetic_check()?,
            "computed": computed_fom(found[1].as_ref(), found[2].as_ref())?,
        },
        "literature": literature,
    });
    io::write(dir, "report.json", &to_pretty(&report))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::bare_numbers;

    #[test]
    fn published_fom_arithmetic_reproduces() {
        for row in arithmetic_check().unwrap().as_array().unwrap() {
            assert!(get_q(row, "difference").unwrap().abs() < 0.5, "{row}");
        }
    }

    #[test]
    fn literature_block_is_labeled_and_carries_units() {
        let v: Value = serde_json::from_str(LITERATURE).unwrap();
        assert!(v["label"].as_str().unwrap().contains("literature"));
        assert_eq!(v["designs"].as_array().unwrap().len(), 7);
        assert!(bare_numbers(&v).is_empty());
    }
}
