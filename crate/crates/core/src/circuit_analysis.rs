//! Small-signal design chain of the transformer-feedback current-reuse QVCO.
//!
//! The half circuit reduces each core to a parallel tank `R || C || k^2 L_p`
//! driven by controlled sources whose gains involve the primary/secondary
//! coupling `k` and the turns ratio `N`. Everything here is closed-form except
//! [`solve_characteristic`], a bracketed root finder that serves as an
//! independent check on [`oscillation_frequency_closed`].

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::device_models::{ArrayCode, TuningArray, VaractorModel};
use crate::em_extract::TransformerModel;
use crate::{Error, Result};

/// Required `g_m` above this multiple of `2/R` is reported as near-singular.
pub const GM_EXCESS_LIMIT: f64 = 10.0;

/// Half-circuit tank parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankParams {
    /// Parallel loss resistance (Ω).
    pub r: f64,
    /// Total tank capacitance (F).
    pub c: f64,
    /// Primary inductance (H).
    pub l_p: f64,
    /// Primary-secondary coupling coefficient.
    pub k: f64,
    /// Turns ratio.
    pub n: f64,
}

impl TankParams {
    pub fn new(r: f64, c: f64, l_p: f64, k: f64, n: f64) -> Result<Self> {
        let t = Self { r, c, l_p, k, n };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("R", self.r), ("C", self.c), ("L_p", self.l_p), ("N", self.n)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("tank {name} must be positive, got {v}")));
            }
        }
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(Error::Domain(format!("coupling k must lie in (0, 1), got {}", self.k)));
        }
        Ok(())
    }

    /// `k * N`, the loop gain factor of the cross-coupled injection.
    pub fn kn(&self) -> f64 {
        self.k * self.n
    }

    /// Magnetizing inductance `k^2 L_p` seen by the tank.
    pub fn l_tank(&self) -> f64 {
        self.k * self.k * self.l_p
    }
}

/// Target specification of the oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Supply voltage (V).
    pub v_dd: f64,
    /// Center frequency (Hz).
    pub f_c: f64,
    /// Control voltage range (V).
    pub v_c_min: f64,
    pub v_c_max: f64,
    /// Primary and secondary inductance targets (H).
    pub l_p: f64,
    pub l_s: f64,
    /// Varactor capacitance range (F).
    pub c_var_min: f64,
    pub c_var_max: f64,
    /// Single-ended peak-to-peak output swing target (V).
    pub v_out_pp: f64,
    /// Largest allowed amplitude difference between outputs (V).
    pub max_delta_v_out: f64,
    /// Fixed capacitance added to the tank on top of the varactor (F).
    #[serde(default)]
    pub c_parasitic: f64,
}

impl DesignSpec {
    /// Design targets of the reference 0.7 V, 2.5 GHz oscillator.
    pub fn reference() -> Self {
        Self {
            v_dd: 0.7,
            f_c: 2.5e9,
            v_c_min: 0.1,
            v_c_max: 0.7,
            l_p: 3.0e-9,
            l_s: 0.4e-9,
            c_var_min: 2.1e-12,
            c_var_max: 6.3e-12,
            v_out_pp: 0.350,
            max_delta_v_out: 0.025,
            c_parasitic: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_dd", self.v_dd),
            ("f_c", self.f_c),
            ("v_c_min", self.v_c_min),
            ("v_c_max", self.v_c_max),
            ("l_p", self.l_p),
            ("l_s", self.l_s),
            ("c_var_min", self.c_var_min),
            ("c_var_max", self.c_var_max),
            ("v_out_pp", self.v_out_pp),
            ("max_delta_v_out", self.max_delta_v_out),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.v_c_min >= self.v_c_max {
            return Err(Error::Domain("v_c_min must be below v_c_max".into()));
        }
        if self.c_var_min >= self.c_var_max {
            return Err(Error::Domain("c_var_min must be below c_var_max".into()));
        }
        if !(self.c_parasitic >= 0.0) {
            return Err(Error::Domain("c_parasitic must be non-negative".into()));
        }
        Ok(())
    }

    pub fn c_var_mid(&self) -> f64 {
        0.5 * (self.c_var_min + self.c_var_max)
    }
}

/// Phase noise and figure-of-merit summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFomReport {
    /// Phase noise at `offset` (dBc/Hz).
    pub phi_noise: f64,
    /// Offset frequency (Hz).
    pub offset: f64,
    /// Carrier frequency (Hz).
    pub carrier: f64,
    /// DC power (mW).
    pub power_mw: f64,
    /// Figure of merit (dB).
    pub fom: f64,
}

impl NoiseFomReport {
    pub fn new(carrier: f64, offset: f64, power_mw: f64, phi_noise: f64) -> Result<Self> {
        let fom = figure_of_merit(carrier, offset, power_mw, phi_noise)?;
        Ok(Self { phi_noise, offset, carrier, power_mw, fom })
    }
}

/// LC resonance `1/sqrt(L C)` in rad/s.
pub fn resonant_frequency(l_eq: f64, c_eq: f64) -> Result<f64> {
    if !(l_eq > 0.0) || !(c_eq > 0.0) {
        return Err(Error::Domain(format!(
            "resonance needs positive L and C, got L = {l_eq}, C = {c_eq}"
        )));
    }
    Ok(1.0 / (l_eq * c_eq).sqrt())
}

/// Parallel tank impedance `1/Z = 1/R + 1/(j w k^2 L_p) + j w C`.
pub fn tank_impedance(t: &TankParams, omega: f64) -> Result<Complex64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("tank impedance needs w > 0, got {omega}")));
    }
    let j = Complex64::i();
    let y = Complex64::new(1.0 / t.r, 0.0) + 1.0 / (j * omega * t.l_tank()) + j * omega * t.c;
    Ok(1.0 / y)
}

/// Tank resonance `w0 = 1/sqrt(k^2 L_p C)` and quality factor `Q = w0 R C`.
pub fn tank_resonance_and_q(t: &TankParams) -> (f64, f64) {
    let omega0 = 1.0 / (t.l_tank() * t.c).sqrt();
    (omega0, omega0 * t.r * t.c)
}

/// The inductive form `R / (w0 k^2 L_p)` of the tank quality factor.
pub fn tank_q_inductive(t: &TankParams) -> f64 {
    let (omega0, _) = tank_resonance_and_q(t);
    t.r / (omega0 * t.l_tank())
}

fn require_oscillation_margin(t: &TankParams) -> Result<f64> {
    let kn = t.kn();
    let denom = kn * kn - 2.0;
    if !(denom > 0.0) {
        return Err(Error::InfeasibleDesign {
            constraint: format!("kN = {kn:.4} must exceed sqrt(2) = {SQRT_2:.4}"),
        });
    }
    Ok(denom)
}

/// Minimum transconductance `(2/R) (kN)^2 / ((kN)^2 - 2)` for sustained
/// quadrature oscillation.
pub fn min_transconductance(t: &TankParams) -> Result<f64> {
    let denom = require_oscillation_margin(t)?;
    let kn2 = t.kn() * t.kn();
    Ok(2.0 / t.r * kn2 / denom)
}

/// Closed-form quadrature oscillation frequency (rad/s).
pub fn oscillation_frequency_closed(t: &TankParams) -> Result<f64> {
    let denom = require_oscillation_margin(t)?;
    let (omega0, q) = tank_resonance_and_q(t);
    let b = 3.0 * t.kn() / (2.0 * q * denom);
    Ok(omega0 * (b + (b * b + 1.0).sqrt()))
}

/// Positive root of `3 g_m/(kN) + 2/(w k^2 L_p) - 2 w C = 0`, found by
/// bisection down to adjacent floating-point values.
pub fn solve_characteristic(t: &TankParams, g_m: f64) -> Result<f64> {
    if !(g_m >= 0.0 && g_m.is_finite()) {
        return Err(Error::Domain(format!("g_m must be non-negative, got {g_m}")));
    }
    let kn = t.kn();
    let lt = t.l_tank();
    let f = |w: f64| 3.0 * g_m / kn + 2.0 / (w * lt) - 2.0 * w * t.c;

    let (omega0, _) = tank_resonance_and_q(t);
    // f is strictly decreasing on w > 0 and f(w0) = 3 g_m / kN >= 0.
    let mut lo = omega0;
    let mut hi = 2.0 * omega0;
    let mut expand = 0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(Error::Numeric("characteristic equation has no positive root".into()));
        }
    }
    if f(lo) == 0.0 {
        return Ok(lo);
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

/// Startup condition `R_L >= 2/g_m`, with `R_L` the inductor series
/// resistance, exactly as stated for the basic LC-VCO.
pub fn startup_check(r_series: f64, g_m: f64) -> bool {
    if !(g_m > 0.0) || !(r_series > 0.0) {
        return false;
    }
    r_series >= 2.0 / g_m
}

/// Oscillator figure of merit `-20 log(f0/df) + 10 log(P_mW) + phi` (dB).
pub fn figure_of_merit(f0: f64, delta_f: f64, power_mw: f64, phi_noise: f64) -> Result<f64> {
    for (name, v) in [("f0", f0), ("offset", delta_f), ("power", power_mw)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(-20.0 * (f0 / delta_f).log10() + 10.0 * power_mw.log10() + phi_noise)
}

/// Outcome of the design feasibility checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Feasibility {
    Feasible,
    Infeasible { constraint: String },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Tank derived from a specification and an extracted transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankDesign {
    pub tank: TankParams,
    /// Quality factor of the primary coil at the tank resonance.
    pub q_coil: f64,
    /// Minimum transconductance when `kN > sqrt(2)` (S).
    pub g_m_min: Option<f64>,
    /// Predicted quadrature oscillation frequency (rad/s).
    pub omega_osc: Option<f64>,
    pub feasibility: Feasibility,
    pub diagnostics: Vec<String>,
}

impl TankDesign {
    /// The tank, or the violated constraint as an error.
    pub fn require_feasible(&self) -> Result<TankParams> {
        match &self.feasibility {
            Feasibility::Feasible => Ok(self.tank),
            Feasibility::Infeasible { constraint } => {
                Err(Error::InfeasibleDesign { constraint: constraint.clone() })
            }
        }
    }
}

/// Build the half-circuit tank from a specification and a transformer model.
///
/// `C` sits at the varactor midpoint plus `spec.c_parasitic`, `N` is
/// `sqrt(L_p / L_s)` and the parallel loss follows from the coil quality
/// factor `Q_L = w0 L_p / R_pac` as `R = Q_L w0 k^2 L_p`.
pub fn design_tank(spec: &DesignSpec, xfmr: &TransformerModel) -> Result<TankDesign> {
    spec.validate()?;
    xfmr.validate()?;

    let l_s = 0.5 * (xfmr.l_s1 + xfmr.l_s2);
    let k = 0.5 * (xfmr.k_ps1 + xfmr.k_ps2);
    let n = (xfmr.l_p / l_s).sqrt();
    let c = spec.c_var_mid() + spec.c_parasitic;
    if !(k > 0.0) {
        return Err(Error::InvalidModel("primary-secondary coupling is zero".into()));
    }

    let omega0 = resonant_frequency(k * k * xfmr.l_p, c)?;
    let q_coil = omega0 * xfmr.l_p / xfmr.r_pac;
    let r = q_coil * omega0 * k * k * xfmr.l_p;
    let tank = TankParams::new(r, c, xfmr.l_p, k, n)?;

    let mut diagnostics = Vec::new();
    if (xfmr.k_ps1 - xfmr.k_ps2).abs() > 1e-9 || (xfmr.l_s1 - xfmr.l_s2).abs() > 1e-21 {
        diagnostics.push(format!(
            "secondaries are asymmetric (k_ps1 = {:.4}, k_ps2 = {:.4}); averaged",
            xfmr.k_ps1, xfmr.k_ps2
        ));
    }
    let f0 = omega0 / (2.0 * PI);
    diagnostics.push(format!(
        "tank resonance {:.4} GHz vs center target {:.4} GHz",
        f0 * 1e-9,
        spec.f_c * 1e-9
    ));

    let kn = tank.kn();
    let (g_m_min, omega_osc, feasibility) = match min_transconductance(&tank) {
        Err(Error::InfeasibleDesign { constraint }) => {
            diagnostics.push(format!("no oscillation: {constraint}"));
            (None, None, Feasibility::Infeasible { constraint })
        }
        Err(e) => return Err(e),
        Ok(g_m) => {
            let omega = oscillation_frequency_closed(&tank)?;
            let excess = g_m * r / 2.0;
            let feasibility = if excess > GM_EXCESS_LIMIT {
                let constraint = format!(
                    "kN = {kn:.4} is within {:.2}% of sqrt(2): required g_m = {excess:.1} x 2/R \
                     exceeds the {GM_EXCESS_LIMIT} x limit",
                    (kn / SQRT_2 - 1.0) * 100.0
                );
                diagnostics.push(format!("near-singular transconductance: {constraint}"));
                Feasibility::Infeasible { constraint }
            } else {
                Feasibility::Feasible
            };
            (Some(g_m), Some(omega), feasibility)
        }
    };

    Ok(TankDesign { tank, q_coil, g_m_min, omega_osc, feasibility, diagnostics })
}

/// Tuning range of one array code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeRange {
    pub code: ArrayCode,
    /// Array capacitance (F).
    pub c_array: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Tuning gain at the control-range midpoint (Hz/V).
    pub k_vco: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningPrediction {
    pub codes: Vec<CodeRange>,
    pub f_min: f64,
    pub f_max: f64,
}

/// Frequency of the tank at total capacitance `c` (Hz).
fn tank_frequency(t: &TankParams, c: f64) -> f64 {
    1.0 / (2.0 * PI * (t.l_tank() * c).sqrt())
}

/// Tank frequency over the varactor range for each distinct array code.
///
/// The tank capacitance at each point is `C_var(V_c) + C_teq + c_parasitic`;
/// the `C` stored in `t` is ignored.
pub fn predict_tuning_range(
    t: &TankParams,
    varactor: &VaractorModel,
    array: &TuningArray,
    c_parasitic: f64,
) -> Result<TuningPrediction> {
    t.validate()?;
    varactor.validate()?;
    if !(c_parasitic >= 0.0) {
        return Err(Error::Domain("c_parasitic must be non-negative".into()));
    }
    let v_mid = 0.5 * (varactor.v_lo + varactor.v_hi);
    let codes = ArrayCode::DISTINCT
        .iter()
        .map(|&code| {
            let c_array = array.with_code(code).capacitance();
            let c_at = |v: f64| varactor.capacitance(v) + c_array + c_parasitic;
            let f_max = tank_frequency(t, c_at(varactor.v_lo));
            let f_min = tank_frequency(t, c_at(varactor.v_hi));
            // df/dV = -(f / 2C) dC/dV
            let c_mid = c_at(v_mid);
            let k_vco = -tank_frequency(t, c_mid) / (2.0 * c_mid) * varactor.slope(v_mid);
            CodeRange { code, c_array, f_min, f_max, k_vco }
        })
        .collect::<Vec<_>>();
    let f_min = codes.iter().map(|c| c.f_min).fold(f64::INFINITY, f64::min);
    let f_max = codes.iter().map(|c| c.f_max).fold(0.0, f64::max);
    Ok(TuningPrediction { codes, f_min, f_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_tank(r: f64) -> TankParams {
        TankParams::new(r, 4.6e-12, 3e-9, 0.52, 2.0 / 0.52).unwrap()
    }

    #[test]
    fn resonance_identity_and_errors() {
        assert_eq!(resonant_frequency(1.0, 1.0).unwrap(), 1.0);
        let w = resonant_frequency(3e-9, 4.6e-12).unwrap();
        assert_relative_eq!(w / (2.0 * PI), 1.354_816_847e9, max_relative = 1e-3);
        assert!(matches!(resonant_frequency(3e-9, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn impedance_is_real_at_resonance() {
        let t = reference_tank(500.0);
        let (w0, _) = tank_resonance_and_q(&t);
        let z = tank_impedance(&t, w0).unwrap();
        assert_relative_eq!(z.re, 500.0, max_relative = 1e-9);
        assert!(z.im.abs() < 1e-9 * 500.0);
        assert!(tank_impedance(&t, w0 * 1e-9).unwrap().norm() < 1e-3);
        assert!(tank_impedance(&t, 0.0).is_err());
    }

    #[test]
    fn impedance_below_resonance_matches_direct_evaluation() {
        // Frozen from an independent complex evaluation of the admittance sum.
        let t = reference_tank(500.0);
        let (w0, _) = tank_resonance_and_q(&t);
        let z = tank_impedance(&t, 0.8 * w0).unwrap();
        assert_relative_eq!(z.re, 1.735_660_899_103_158, max_relative = 1e-9);
        assert_relative_eq!(z.im, 29.407_786_907_465_57, max_relative = 1e-9);
    }

    #[test]
    fn resonance_with_reference_values() {
        let (w0, q) = tank_resonance_and_q(&reference_tank(500.0));
        let f0 = w0 / (2.0 * PI);
        assert_relative_eq!(f0, 2.60e9, max_relative = 5e-3);
        assert!((f0 / 2.5e9 - 1.0).abs() < 0.05);
        assert_relative_eq!(q, tank_q_inductive(&reference_tank(500.0)), max_relative = 1e-12);
    }

    #[test]
    fn doubling_r_doubles_q() {
        let (w_a, q_a) = tank_resonance_and_q(&reference_tank(500.0));
        let (w_b, q_b) = tank_resonance_and_q(&reference_tank(1000.0));
        assert_eq!(w_a, w_b);
        assert_relative_eq!(q_b, 2.0 * q_a, max_relative = 1e-12);
    }

    #[test]
    fn unit_coupling_limit() {
        let t = TankParams { r: 1.0, c: 1.0, l_p: 1.0, k: 1.0 - 1e-15, n: 2.0 };
        let (w0, _) = tank_resonance_and_q(&t);
        assert_relative_eq!(w0, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn min_gm_values() {
        let t = TankParams::new(500.0, 4.6e-12, 3e-9, 0.5, 4.0).unwrap();
        assert_relative_eq!(min_transconductance(&t).unwrap(), 8.0e-3, max_relative = 1e-12);
        let big = TankParams::new(500.0, 4.6e-12, 3e-9, 0.5, 1e6).unwrap();
        assert_relative_eq!(min_transconductance(&big).unwrap(), 2.0 / 500.0, max_relative = 1e-9);
        let low = TankParams::new(500.0, 4.6e-12, 3e-9, 0.5, 2.4).unwrap();
        assert!(matches!(min_transconductance(&low), Err(Error::InfeasibleDesign { .. })));
        assert!(oscillation_frequency_closed(&low).is_err());
    }

    #[test]
    fn closed_form_frequency_example() {
        // kN = 2, Q = 10: choose R so that w0 R C = 10.
        let mut t = TankParams::new(1.0, 4.6e-12, 3e-9, 0.5, 4.0).unwrap();
        let (w0, _) = tank_resonance_and_q(&t);
        t.r = 10.0 / (w0 * t.c);
        let w = oscillation_frequency_closed(&t).unwrap();
        assert_relative_eq!(w / w0, 1.161_187_420_807_834, epsilon = 1e-4);
    }

    #[test]
    fn infinite_q_gives_resonance() {
        let t = TankParams::new(1e30, 4.6e-12, 3e-9, 0.5, 4.0).unwrap();
        let (w0, _) = tank_resonance_and_q(&t);
        assert_relative_eq!(oscillation_frequency_closed(&t).unwrap(), w0, max_relative = 1e-12);
    }

    #[test]
    fn characteristic_root_properties() {
        let t = reference_tank(500.0);
        let (w0, _) = tank_resonance_and_q(&t);
        assert_relative_eq!(solve_characteristic(&t, 0.0).unwrap(), w0, max_relative = 1e-14);
        let mut prev = w0;
        for g in [1e-4, 1e-3, 1e-2, 1e-1] {
            let w = solve_characteristic(&t, g).unwrap();
            assert!(w > prev);
            prev = w;
        }
        let gm = min_transconductance(&t).unwrap();
        assert_relative_eq!(
            solve_characteristic(&t, gm).unwrap(),
            oscillation_frequency_closed(&t).unwrap(),
            max_relative = 1e-9
        );
        assert!(solve_characteristic(&t, -1.0).is_err());
    }

    #[test]
    fn startup_condition_as_stated() {
        let g = 8e-3;
        assert!(startup_check(2.0 / g, g));
        assert!(startup_check(500.0, g));
        assert!(!startup_check(100.0, g));
        assert!(!startup_check(500.0, 0.0));
        assert!(!startup_check(500.0, 1e-300));
    }

    #[test]
    fn fom_examples() {
        let toroidal = figure_of_merit(2.5e9, 1e6, 1.5, -114.0).unwrap();
        assert_relative_eq!(toroidal, -180.197_887_582_883_94, epsilon = 1e-9);
        assert!((toroidal + 180.0).abs() < 0.5);
        let spiral = figure_of_merit(2.5e9, 1e6, 1.7, -111.2).unwrap();
        assert!((spiral + 177.0).abs() < 0.5);
        assert_eq!(figure_of_merit(3e9, 3e9, 1.0, -100.0).unwrap(), -100.0);
        assert!(figure_of_merit(0.0, 1e6, 1.0, -100.0).is_err());
        assert!(figure_of_merit(2.5e9, 1e6, -1.0, -100.0).is_err());
    }

    fn reference_model(l_s: f64) -> TransformerModel {
        TransformerModel {
            l_p: 3e-9,
            l_s1: l_s,
            l_s2: l_s,
            r_pdc: 0.3,
            r_sdc: 0.064,
            r_pac: 1.4,
            r_sac: 0.35,
            k_ps1: 0.52,
            k_ps2: 0.52,
            k_ss: 0.15,
            area_mm2: 0.17,
            eval_frequency: 2.5e9,
        }
    }

    #[test]
    fn reference_design_is_flagged_near_singular() {
        let design = design_tank(&DesignSpec::reference(), &reference_model(0.4e-9)).unwrap();
        assert_relative_eq!(design.tank.n, 2.738_612_787_525_830_6, max_relative = 1e-12);
        assert_relative_eq!(design.tank.kn(), 1.424_078_649_513_432, max_relative = 1e-12);
        assert_relative_eq!(design.tank.c, 4.2e-12, max_relative = 1e-12);
        match &design.feasibility {
            Feasibility::Infeasible { constraint } => assert!(constraint.contains("sqrt(2)")),
            other => panic!("expected infeasible, got {other:?}"),
        }
        assert!(design.require_feasible().is_err());
        // Coil Q and tank Q coincide by construction.
        assert_relative_eq!(tank_q_inductive(&design.tank), design.q_coil, max_relative = 1e-12);
    }

    #[test]
    fn design_with_margin_is_feasible() {
        let design = design_tank(&DesignSpec::reference(), &reference_model(0.1e-9)).unwrap();
        assert!(design.feasibility.is_feasible());
        let w = design.omega_osc.unwrap();
        let (w0, _) = tank_resonance_and_q(&design.tank);
        assert!(w >= w0);
    }

    #[test]
    fn secondary_labels_do_not_matter() {
        let mut a = reference_model(0.4e-9);
        a.k_ps1 = 0.50;
        a.k_ps2 = 0.54;
        let mut b = a;
        b.k_ps1 = a.k_ps2;
        b.k_ps2 = a.k_ps1;
        let spec = DesignSpec::reference();
        assert_eq!(design_tank(&spec, &a).unwrap().tank, design_tank(&spec, &b).unwrap().tank);
    }

    #[test]
    fn tuning_ratio_law() {
        let t = reference_tank(500.0);
        let var = VaractorModel::reference();
        let arr = TuningArray::new(1e-12, ArrayCode::B00).unwrap();
        let pred = predict_tuning_range(&t, &var, &arr, 0.0).unwrap();
        let c00 = pred.codes[0];
        assert_eq!(c00.code, ArrayCode::B00);
        assert_relative_eq!(c00.f_max / c00.f_min, 3f64.sqrt(), epsilon = 1e-3);
        assert!(pred.codes.iter().all(|c| c.f_min < c.f_max && c.k_vco < 0.0));
        assert!(pred.codes[1].f_max < c00.f_max && pred.codes[1].f_min < c00.f_min);
        assert!(pred.f_max / pred.f_min > c00.f_max / c00.f_min);

        let with_par = predict_tuning_range(&t, &var, &arr, 0.5e-12).unwrap();
        assert!(with_par.f_min < pred.f_min && with_par.f_max < pred.f_max);
    }
}
