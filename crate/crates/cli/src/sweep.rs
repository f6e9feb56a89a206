use std::path::Path;

use qvco_core::device_models::ArrayCode;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io;
use crate::simulate::{mean_swing, simulate_once, RunConfig, Target};
use crate::units::{q, q_opt, to_pretty};

/// Published f_max/f_min over the full tuning range, quoted for comparison.
const LITERATURE_TUNING_RATIO: f64 = 3.4 / 2.0;

pub struct SweepArgs {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub codes: Vec<String>,
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Param {
    VC,
    ArrayCode,
    GmMargin,
}

impl Param {
    fn parse(s: &str) -> CliResult<Self> {
        match s {
            "v_c" => Ok(Param::VC),
            "array_code" => Ok(Param::ArrayCode),
            "gm_margin" => Ok(Param::GmMargin),
            _ => Err(CliError::input(format!("unknown sweep parameter '{s}' (v_c, array_code, gm_margin)"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    value: f64,
    code: ArrayCode,
}

#[derive(Debug, Serialize)]
struct Row {
    index: usize,
    value: f64,
    array_code: String,
    oscillating: Option<bool>,
    f_osc_hz: Option<f64>,
    amplitude_pp_v: Option<f64>,
    delta_v_out_v: Option<f64>,
    power_mw: Option<f64>,
    envelope_growth_per_s: Option<f64>,
    error: String,
}

fn linspace(from: f64, to: f64, steps: usize) -> Vec<f64> {
    (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect()
}

fn points(p: Param, a: &SweepArgs, cfg: &RunConfig) -> CliResult<Vec<Point>> {
    if a.steps < 2 {
        return Err(CliError::input(format!("--steps must be at least 2, got {}", a.steps)));
    }
    if !(a.from.is_finite() && a.to.is_finite()) {
        return Err(CliError::input("--from and --to must be finite"));
    }
    if !a.codes.is_empty() && p != Param::VC {
        return Err(CliError::input("--codes only applies to a v_c sweep"));
    }
    let values = linspace(a.from, a.to, a.steps);
    match p {
        Param::VC => {
            let codes = if a.codes.is_empty() {
                vec![cfg.params.array_code]
            } else {
                a.codes.iter().map(|c| c.parse::<ArrayCode>()).collect::<Result<Vec<_>, _>>()?
            };
            Ok(codes.iter().flat_map(|&code| values.iter().map(move |&value| Point { value, code })).collect())
        }
        Param::ArrayCode => {
            let ok = |v: f64| v.fract() == 0.0 && (0.0..=3.0).contains(&v);
            if !ok(a.from) || !ok(a.to) || a.steps as f64 != (a.to - a.from).abs() + 1.0 {
                return Err(CliError::input(
                    "array_code sweeps take integer codes 0..=3 with --steps equal to the number of codes",
                ));
            }
            values
                .into_iter()
                .map(|v| Ok(Point { value: v, code: ArrayCode::from_bits(v.round() as u8)? }))
                .collect()
        }
        Param::GmMargin => Ok(values.into_iter().map(|value| Point { value, code: cfg.params.array_code }).collect()),
    }
}

fn configure(p: Param, pt: Point, base: &RunConfig) -> CliResult<RunConfig> {
    let mut cfg = base.clone();
    cfg.params.array_code = pt.code;
    match p {
        Param::VC => cfg.params.v_c = pt.value,
        Param::ArrayCode => {}
        Param::GmMargin => {
            if !(pt.value >= 0.0) {
                return Err(CliError::input(format!("gm_margin must be >= 0, got {}", pt.value)));
            }
            cfg.linear.gm_margin = pt.value;
            // transistor cores: scale the configured sizing
            cfg.params.nmos = cfg.params.nmos.scaled(pt.value);
            cfg.params.pmos = cfg.params.pmos.scaled(pt.value);
        }
    }
    Ok(cfg)
}

fn evaluate(index: usize, p: Param, pt: Point, target: Target, base: &RunConfig) -> Row {
    let mut row = Row {
        index,
        value: pt.value,
        array_code: pt.code.label().to_string(),
        oscillating: None,
        f_osc_hz: None,
        amplitude_pp_v: None,
        delta_v_out_v: None,
        power_mw: None,
        envelope_growth_per_s: None,
        error: String::new(),
    };
    match configure(p, pt, base).and_then(|cfg| simulate_once(target, &cfg)) {
        Ok(run) => {
            let m = run.metrics;
            row.oscillating = Some(m.oscillating);
            row.f_osc_hz = m.f_osc;
            row.amplitude_pp_v = Some(mean_swing(&m));
            row.delta_v_out_v = Some(m.delta_v_out);
            row.power_mw = m.power_total_mw();
            row.envelope_growth_per_s = Some(m.envelope_growth);
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}

fn csv_text(rows: &[Row]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Numeric(format!("writing sweep table: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Numeric(format!("writing sweep table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Frequency span of the oscillating rows, optionally restricted to one code.
fn span(rows: &[Row], code: Option<&str>) -> Option<(f64, f64)> {
    let fs: Vec<f64> = rows
        .iter()
        .filter(|r| code.is_none_or(|c| r.array_code == c) && r.oscillating == Some(true))
        .filter_map(|r| r.f_osc_hz)
        .collect();
    if fs.is_empty() {
        return None;
    }
    Some((fs.iter().copied().fold(f64::INFINITY, f64::min), fs.iter().copied().fold(0.0, f64::max)))
}

fn monotone(fs: &[f64]) -> bool {
    fs.windows(2).all(|w| w[1] >= w[0]) || fs.windows(2).all(|w| w[1] <= w[0])
}

fn summary(p: Param, a: &SweepArgs, target: Target, rows: &[Row]) -> Value {
    let mut codes: Vec<&str> = rows.iter().map(|r| r.array_code.as_str()).collect();
    codes.dedup();
    let per_code = if p == Param::VC {
        codes
            .iter()
            .map(|&c| {
                let fs: Vec<f64> = rows.iter().filter(|r| r.array_code == c).filter_map(|r| r.f_osc_hz).collect();
                let s = span(rows, Some(c));
                json!({
                    "code": c,
                    "f_min": q_opt(s.map(|x| x.0), "Hz"),
                    "f_max": q_opt(s.map(|x| x.1), "Hz"),
                    "monotone": monotone(&fs),
                })
            })
            .collect()
    } else {
        Vec::new()
    };
    let s = span(rows, None);
    json!({
        "command": "sweep",
        "topology": target.tag(),
        "param": a.param,
        "from": q(a.from, if p == Param::VC { "V" } else { "1" }),
        "to": q(a.to, if p == Param::VC { "V" } else { "1" }),
        "points": q(rows.len() as f64, "1"),
        "failed_points": q(rows.iter().filter(|r| !r.error.is_empty()).count() as f64, "1"),
        "oscillating_points": q(rows.iter().filter(|r| r.oscillating == Some(true)).count() as f64, "1"),
        "f_min": q_opt(s.map(|x| x.0), "Hz"),
        "f_max": q_opt(s.map(|x| x.1), "Hz"),
        "ratio": q_opt(s.map(|x| x.1 / x.0), "1"),
        "per_code": per_code,
        "literature": { "ratio": q(LITERATURE_TUNING_RATIO, "1"), "source": "published 2 to 3.4 GHz tuning range" },
    })
}

pub fn run(a: &SweepArgs, config: Option<&Path>, out: &Path) -> CliResult<Value> {
    let p = Param::parse(&a.param)?;
    if a.jobs == 0 {
        return Err(CliError::input("--jobs must be at least 1"));
    }
    let cfg = RunConfig::load(config)?;
    let target = Target::parse(cfg.topology.as_deref().unwrap_or("tc-qvco"))?;
    let pts = points(p, a, &cfg)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Numeric(format!("thread pool: {e}")))?;
    // collect() on an indexed parallel iterator keeps the input order
    let rows: Vec<Row> = pool.install(|| {
        pts.par_iter().enumerate().map(|(i, &pt)| evaluate(i, p, pt, target, &cfg)).collect()
    });
    for r in rows.iter().filter(|r| !r.error.is_empty()) {
        eprintln!("qvco: sweep point {} ({} = {}): {}", r.index, a.param, r.value, r.error);
    }

    let report = summary(p, a, target, &rows);
    io::ensure_dir(out)?;
    io::write(out, "sweep.csv", &csv_text(&rows)?)?;
    io::write(out, "sweep.json", &to_pretty(&report))?;
    Ok(report)
}
