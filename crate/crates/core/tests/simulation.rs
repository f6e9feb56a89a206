use qvco_core::circuit_analysis::{min_transconductance, oscillation_frequency_closed, TankParams};
use qvco_core::device_models::flipped_dots;
use qvco_core::transient_sim::*;

fn reference_tank() -> TankParams {
    TankParams::new(1000.0, 4.6e-12, 3e-9, 0.52, 3.5).unwrap()
}

fn linear_run(margin: f64, i_sat: Option<f64>, stop: f64) -> SimMetrics {
    let t = reference_tank();
    let g_m = margin * min_transconductance(&t).unwrap();
    let net = build_linear_qvco(&LinearQvcoParams { tank: t, g_m, i_sat, seed_mode: false }).unwrap();
    let w = transient(&net, &SimConfig { stop, ..SimConfig::default() }).unwrap();
    measure_metrics(&w, 1.0).unwrap()
}

fn tc_run(p: &OscillatorParams, step: Option<f64>) -> SimMetrics {
    let net = build_netlist(Topology::TcQvco, p).unwrap();
    let mut cfg = SimConfig { stop: 200e-9, ..SimConfig::default() };
    if let Some(h) = step {
        cfg.step = h;
    }
    measure_metrics(&transient(&net, &cfg).unwrap(), p.v_dd).unwrap()
}

#[test]
fn linear_core_grows_above_and_decays_below_threshold() {
    let above = linear_run(1.2, None, 200e-9);
    let below = linear_run(0.8, None, 200e-9);
    assert!(above.envelope_growth > 0.0, "{}", above.envelope_growth);
    assert!(below.envelope_growth < 0.0, "{}", below.envelope_growth);
}

#[test]
fn limited_linear_core_runs_at_the_closed_form_frequency() {
    let m = linear_run(3.0, Some(2e-3), 200e-9);
    assert!(m.oscillating && m.steady_state);
    let f9 = oscillation_frequency_closed(&reference_tank()).unwrap() / (2.0 * std::f64::consts::PI);
    let f = m.f_osc.unwrap();
    assert!((f / f9 - 1.0).abs() < 0.01, "{f} vs {f9}");
    assert!(quadrature_locked(&m, 2.0), "{:?}", m.phases_deg());
}

#[test]
fn identical_runs_are_bit_identical() {
    let t = reference_tank();
    let g_m = 1.5 * min_transconductance(&t).unwrap();
    let net = build_linear_qvco(&LinearQvcoParams { tank: t, g_m, i_sat: Some(2e-3), seed_mode: false }).unwrap();
    let cfg = SimConfig { stop: 20e-9, ..SimConfig::default() };
    let a = transient(&net, &cfg).unwrap();
    let b = transient(&net, &cfg).unwrap();
    assert_eq!(a.outputs_csv().unwrap(), b.outputs_csv().unwrap());
}

#[test]
fn default_quadrature_core_locks_with_the_target_swing() {
    let m = tc_run(&OscillatorParams::default(), None);
    assert!(m.oscillating && m.steady_state);
    assert!(quadrature_locked(&m, 2.0), "{:?}", m.phases_deg());
    for o in &m.outputs {
        assert!((0.245..=0.455).contains(&o.amplitude_pp), "{}: {}", o.name, o.amplitude_pp);
    }
    assert!(m.power_core_mw.unwrap() > 0.0 && m.startup_time.is_some());
}

#[test]
fn halving_the_step_barely_moves_the_frequency() {
    let p = OscillatorParams::default();
    let h = SimConfig::default().step;
    let f1 = tc_run(&p, Some(h)).f_osc.unwrap();
    let f2 = tc_run(&p, Some(0.5 * h)).f_osc.unwrap();
    assert!((f1 / f2 - 1.0).abs() < 1e-3, "{f1} vs {f2}");
}

#[test]
fn device_mismatch_widens_the_amplitude_gap() {
    let matched = tc_run(&OscillatorParams::default(), None);
    let skewed = tc_run(&OscillatorParams { core_b_mismatch: 0.1, ..OscillatorParams::default() }, None);
    assert!(skewed.delta_v_out > matched.delta_v_out, "{} vs {}", skewed.delta_v_out, matched.delta_v_out);
}

#[test]
fn flipped_dots_prevent_quadrature_lock() {
    let mut p = OscillatorParams::default();
    p.dots = flipped_dots(&p.dots);
    let m = tc_run(&p, None);
    assert!(!quadrature_locked(&m, 2.0), "{:?}", m.phases_deg());
}
