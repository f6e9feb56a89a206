use nalgebra::Matrix3;
use proptest::prelude::*;
use qvco_core::em_extract::*;

fn geometry() -> impl Strategy<Value = TransformerGeometry> {
    (any::<bool>(), 2usize..12, 1usize..4, 25.0..60.0f64, 30.0..200.0f64).prop_map(|(toroid, np, ns, pitch, row)| {
        TransformerGeometry {
            style: if toroid { TransformerStyle::Toroidal } else { TransformerStyle::VerticalSpiral },
            turns_primary: np,
            turns_secondary: ns,
            tsv_pitch: pitch,
            row_spacing: row,
            process: ProcessParams::reference(),
        }
    })
}

fn segment() -> impl Strategy<Value = Segment> {
    let p = || prop::array::uniform3(-200.0..200.0f64);
    (p(), p(), 1.0..12.0f64).prop_filter_map("degenerate", |(a, b, r)| {
        let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        (len > 5.0 * r).then(|| Segment::round(a, b, r))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mutual_partial_inductance_is_symmetric(a in segment(), b in segment()) {
        if let (Ok(ab), Ok(ba)) = (mutual_partial_inductance(&a, &b), mutual_partial_inductance(&b, &a)) {
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1e-30), "{ab} vs {ba}");
        }
    }

    #[test]
    fn inductance_matrix_is_symmetric_and_positive_definite(g in geometry()) {
        let ex = build_transformer_detailed(&g, DEFAULT_EVAL_FREQUENCY).unwrap();
        let l = ex.l_matrix;
        let m = Matrix3::from_fn(|i, j| l[i][j]);
        prop_assert!((m - m.transpose()).abs().max() <= 1e-12 * m.abs().max());
        prop_assert!(m.cholesky().is_some(), "{l:?}");
        let x = ex.model;
        prop_assert!(x.k_ps1 < 1.0 && x.k_ps2 < 1.0 && x.k_ss < 1.0);
    }

    #[test]
    fn ac_resistance_rises_with_frequency(g in geometry(), f in 0.5e9..5e9f64) {
        let lo = build_transformer(&g, f).unwrap();
        let hi = build_transformer(&g, 2.0 * f).unwrap();
        prop_assert!(hi.r_pac > lo.r_pac && hi.r_sac > lo.r_sac);
        prop_assert!(lo.r_pac >= lo.r_pdc);
        prop_assert_eq!(lo.l_p, hi.l_p);
    }

    #[test]
    fn toroid_couples_primary_more_than_secondaries(np in 4usize..12, ns in 1usize..3, row in 60.0..200.0f64) {
        let g = TransformerGeometry {
            turns_primary: np,
            turns_secondary: ns,
            row_spacing: row,
            ..TransformerGeometry::reference_toroidal()
        };
        let m = build_transformer(&g, DEFAULT_EVAL_FREQUENCY).unwrap();
        prop_assert!(m.k_ps() > m.k_ss, "k_ps {} k_ss {}", m.k_ps(), m.k_ss);
    }
}

#[test]
fn vertical_spiral_coupling_falls_with_line_separation() {
    let ks: Vec<f64> = [30.0, 45.0, 60.0, 90.0, 140.0]
        .iter()
        .map(|&row| {
            let g = TransformerGeometry { row_spacing: row, ..TransformerGeometry::reference_vertical_spiral() };
            build_transformer(&g, DEFAULT_EVAL_FREQUENCY).unwrap().k_ps()
        })
        .collect();
    assert!(ks.windows(2).all(|w| w[1] < w[0]), "{ks:?}");
}

#[test]
fn subdividing_segments_leaves_inductance_unchanged() {
    for g in [TransformerGeometry::reference_toroidal(), TransformerGeometry::reference_vertical_spiral()] {
        subdivision_check(&g);
    }
}

fn subdivision_check(g: &TransformerGeometry) {
    let coils = g.coils().unwrap();
    let fine: [CoilGeometry; 3] = coils.clone().map(|c| CoilGeometry {
        role: c.role,
        segments: c.segments.iter().flat_map(|s| s.subdivide(2)).collect(),
    });
    for (a, b) in coils.iter().zip(&fine) {
        let (la, lb) = (loop_inductance(a).unwrap(), loop_inductance(b).unwrap());
        assert!((la - lb).abs() / la < 5e-3, "{la} vs {lb}");
    }
}

#[test]
fn swapping_the_secondaries_swaps_their_entries() {
    let g = TransformerGeometry::reference_toroidal();
    let area = metal_area(&g).unwrap();
    let [p, s1, s2] = g.coils().unwrap();
    let a = extract_coils(&[p.clone(), s1.clone(), s2.clone()], 2.5e9, area).unwrap().model;
    let b = extract_coils(&[p, s2, s1], 2.5e9, area).unwrap().model;
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs();
    assert!(close(a.l_s1, b.l_s2) && close(a.l_s2, b.l_s1));
    assert!(close(a.k_ps1, b.k_ps2) && close(a.k_ps2, b.k_ps1));
    assert!(close(a.k_ss, b.k_ss) && close(a.l_p, b.l_p));
}

#[test]
fn vertical_spiral_area_tracks_primary_turns() {
    let area = |np| {
        let g = TransformerGeometry { turns_primary: np, ..TransformerGeometry::reference_vertical_spiral() };
        metal_area(&g).unwrap()
    };
    let ratio = area(16) / area(8);
    assert!((1.9..2.2).contains(&ratio), "{ratio}");
}

#[test]
fn committed_layouts_keep_the_hard_orderings() {
    let tor = build_transformer(&TransformerGeometry::reference_toroidal(), 2.5e9).unwrap();
    let vs = build_transformer(&TransformerGeometry::reference_vertical_spiral(), 2.5e9).unwrap();
    assert!(tor.k_ps() > tor.k_ss);
    assert!(vs.area_mm2 < tor.area_mm2);
    let (n, d_out, d_in, w, s) = REFERENCE_SPIRAL;
    let (_, spiral_area) = wheeler_spiral_inductance(n, d_out, d_in, w, s).unwrap();
    let ratio = spiral_area / tor.area_mm2;
    assert!((2.5..=4.5).contains(&ratio), "{ratio}");
}
