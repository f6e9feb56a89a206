use std::f64::consts::PI;

use proptest::prelude::*;
use qvco_core::circuit_analysis::*;
use qvco_core::device_models::{ArrayCode, TuningArray, VaractorModel};

fn tank() -> impl Strategy<Value = TankParams> {
    (100.0..5000.0f64, 0.5e-12..10e-12f64, 0.5e-9..5e-9f64, 0.2..0.9f64, 1.0..8.0f64)
        .prop_filter("needs kN above sqrt(2)", |&(_, _, _, k, n)| k * n > 1.45)
        .prop_map(|(r, c, l_p, k, n)| TankParams::new(r, c, l_p, k, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closed_form_frequency_is_the_characteristic_root(t in tank()) {
        let g_m = min_transconductance(&t).unwrap();
        let closed = oscillation_frequency_closed(&t).unwrap();
        let root = solve_characteristic(&t, g_m).unwrap();
        prop_assert!((closed - root).abs() <= 1e-9 * root, "{closed} vs {root}");
        let (w0, _) = tank_resonance_and_q(&t);
        prop_assert!(closed > w0);
    }

    #[test]
    fn ideal_varactor_range_follows_the_ratio_law(c_min in 0.5e-12..5e-12f64, ratio in 1.5..4.0f64, t in tank()) {
        let var = VaractorModel { c_min, c_max: ratio * c_min, ..VaractorModel::reference() };
        let arr = TuningArray::new(1e-12, ArrayCode::B00).unwrap();
        let pred = predict_tuning_range(&t, &var, &arr, 0.0).unwrap();
        let c00 = pred.codes[0];
        prop_assert!((c00.f_max / c00.f_min - ratio.sqrt()).abs() < 1e-3 * ratio.sqrt());
        prop_assert!(pred.f_max / pred.f_min > c00.f_max / c00.f_min);
    }
}

#[test]
fn reference_tank_resonates_at_2_6_ghz() {
    let w = resonant_frequency(0.52f64.powi(2) * 3e-9, 4.6e-12).unwrap();
    let f = w / (2.0 * PI);
    assert!((f / 2.60e9 - 1.0).abs() < 0.005, "{f}");
    assert!((f / 2.5e9 - 1.0).abs() < 0.05);
}

#[test]
fn published_fom_arithmetic() {
    let tor = figure_of_merit(2.5e9, 1e6, 1.5, -114.0).unwrap();
    let vs = figure_of_merit(2.5e9, 1e6, 1.7, -111.2).unwrap();
    assert!((tor + 180.0).abs() < 0.5, "{tor}");
    assert!((vs + 177.0).abs() < 0.5, "{vs}");
}

#[test]
fn below_the_coupling_boundary_there_is_no_oscillation() {
    let t = TankParams::new(1000.0, 4.6e-12, 3e-9, 0.52, 2.0).unwrap();
    assert!(matches!(min_transconductance(&t), Err(qvco_core::Error::InfeasibleDesign { .. })));
}
