//! Behavioral device models used by the transient simulator.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::em_extract::TransformerModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    N,
    P,
}

/// Square-law MOS parameters. `vth` is signed: positive for n, negative for p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosParams {
    pub polarity: Polarity,
    /// Transconductance factor (A/V^2).
    pub k: f64,
    /// Threshold voltage (V).
    pub vth: f64,
    /// Channel-length modulation (1/V).
    #[serde(default)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Cutoff,
    Triode,
    Saturation,
}

/// Drain current and its partial derivatives at one bias point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosEval {
    /// Current flowing into the drain terminal (A).
    pub id: f64,
    /// `d id / d v_gs` (S).
    pub gm: f64,
    /// `d id / d v_ds` (S).
    pub gds: f64,
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallSignal {
    pub gm: f64,
    pub gds: f64,
    pub region: Region,
}

impl SmallSignal {
    /// True when the device is off and both conductances are zero.
    pub fn is_cutoff(&self) -> bool {
        self.region == Region::Cutoff
    }
}

impl MosParams {
    pub fn nmos(k: f64, vth: f64, lambda: f64) -> Self {
        Self { polarity: Polarity::N, k, vth, lambda }
    }

    pub fn pmos(k: f64, vth: f64, lambda: f64) -> Self {
        Self { polarity: Polarity::P, k, vth, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidModel(format!("MOS K must be positive, got {}", self.k)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidModel(format!("MOS lambda must be >= 0, got {}", self.lambda)));
        }
        let ok = match self.polarity {
            Polarity::N => self.vth > 0.0,
            Polarity::P => self.vth < 0.0,
        };
        if !ok {
            return Err(Error::InvalidModel(format!(
                "threshold {} has the wrong sign for {:?}-channel",
                self.vth, self.polarity
            )));
        }
        Ok(())
    }

    /// Same device with `K` scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { k: self.k * factor, ..*self }
    }
}

/// n-type forward-mode current for `v_ds >= 0` with derivatives.
fn forward(k: f64, vth: f64, lambda: f64, vgs: f64, vds: f64) -> (f64, f64, f64, Region) {
    let vov = vgs - vth;
    if vov <= 0.0 {
        return (0.0, 0.0, 0.0, Region::Cutoff);
    }
    let clm = 1.0 + lambda * vds;
    if vds < vov {
        let core = vov * vds - 0.5 * vds * vds;
        let id = k * core * clm;
        let gm = k * vds * clm;
        let gds = k * (vov - vds) * clm + k * core * lambda;
        (id, gm, gds, Region::Triode)
    } else {
        let id = 0.5 * k * vov * vov * clm;
        (id, k * vov * clm, 0.5 * k * vov * vov * lambda, Region::Saturation)
    }
}

/// n-type current including source/drain reversal for `v_ds < 0`.
fn n_type(k: f64, vth: f64, lambda: f64, vgs: f64, vds: f64) -> MosEval {
    if vds >= 0.0 {
        let (id, gm, gds, region) = forward(k, vth, lambda, vgs, vds);
        MosEval { id, gm, gds, region }
    } else {
        // Roles of source and drain swap: I(vgs, vds) = -F(vgs - vds, -vds).
        let (f, fg, fd, region) = forward(k, vth, lambda, vgs - vds, -vds);
        MosEval { id: -f, gm: -fg, gds: fg + fd, region }
    }
}

/// Full evaluation of the square-law model at `(v_gs, v_ds)`.
pub fn mos_eval(p: &MosParams, vgs: f64, vds: f64) -> MosEval {
    match p.polarity {
        Polarity::N => n_type(p.k, p.vth, p.lambda, vgs, vds),
        Polarity::P => {
            let e = n_type(p.k, -p.vth, p.lambda, -vgs, -vds);
            MosEval { id: -e.id, ..e }
        }
    }
}

/// Drain current (A), positive into the drain.
///
/// Triode current carries the same `(1 + lambda v_ds)` factor as saturation so
/// the two regions meet continuously for any `lambda`.
pub fn mos_current(p: &MosParams, vgs: f64, vds: f64) -> f64 {
    mos_eval(p, vgs, vds).id
}

/// Analytic `g_m` and `g_ds`; cutoff yields zeros with the region flagged.
pub fn mos_small_signal(p: &MosParams, vgs: f64, vds: f64) -> SmallSignal {
    let e = mos_eval(p, vgs, vds);
    SmallSignal { gm: e.gm, gds: e.gds, region: e.region }
}

/// Smooth varactor characteristic: a scaled tanh, odd about the control midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaractorModel {
    pub c_min: f64,
    pub c_max: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    /// Steepness of the tanh curve; larger values flatten the ends.
    pub shape: f64,
}

impl VaractorModel {
    /// 2.1 pF to 6.3 pF over 0.1 V to 0.7 V.
    pub fn reference() -> Self {
        Self { c_min: 2.1e-12, c_max: 6.3e-12, v_lo: 0.1, v_hi: 0.7, shape: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_min < self.c_max) {
            return Err(Error::InvalidModel("varactor needs 0 < c_min < c_max".into()));
        }
        if !(self.v_lo < self.v_hi) {
            return Err(Error::InvalidModel("varactor needs v_lo < v_hi".into()));
        }
        if !(self.shape > 0.0 && self.shape.is_finite()) {
            return Err(Error::InvalidModel("varactor shape must be positive".into()));
        }
        Ok(())
    }

    fn normalized(&self, v: f64) -> f64 {
        let mid = 0.5 * (self.v_lo + self.v_hi);
        let half = 0.5 * (self.v_hi - self.v_lo);
        (v - mid) / half
    }

    /// Capacitance at control voltage `v`, clamped outside `[v_lo, v_hi]`.
    pub fn capacitance(&self, v: f64) -> f64 {
        if v <= self.v_lo {
            return self.c_min;
        }
        if v >= self.v_hi {
            return self.c_max;
        }
        let x = self.normalized(v);
        let mid = 0.5 * (self.c_min + self.c_max);
        let half = 0.5 * (self.c_max - self.c_min);
        mid + half * (self.shape * x).tanh() / self.shape.tanh()
    }

    /// `dC/dV` (F/V); zero outside the control range.
    pub fn slope(&self, v: f64) -> f64 {
        if v <= self.v_lo || v >= self.v_hi {
            return 0.0;
        }
        let x = self.normalized(v);
        let half_c = 0.5 * (self.c_max - self.c_min);
        let half_v = 0.5 * (self.v_hi - self.v_lo);
        let sech = 1.0 / (self.shape * x).cosh();
        half_c * self.shape * sech * sech / self.shape.tanh() / half_v
    }
}

pub fn varactor_capacitance(m: &VaractorModel, v_c: f64) -> f64 {
    m.capacitance(v_c)
}

/// Two-bit code of the switched-capacitor arrays. Bit `i` closes array `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArrayCode {
    #[serde(rename = "00")]
    B00,
    #[serde(rename = "01")]
    B01,
    #[serde(rename = "10")]
    B10,
    #[serde(rename = "11")]
    B11,
}

impl ArrayCode {
    pub const ALL: [ArrayCode; 4] = [ArrayCode::B00, ArrayCode::B01, ArrayCode::B10, ArrayCode::B11];
    /// One representative per distinct capacitance.
    pub const DISTINCT: [ArrayCode; 3] = [ArrayCode::B00, ArrayCode::B01, ArrayCode::B11];

    pub fn bits(self) -> u8 {
        match self {
            ArrayCode::B00 => 0,
            ArrayCode::B01 => 1,
            ArrayCode::B10 => 2,
            ArrayCode::B11 => 3,
        }
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.bits() == bits)
            .ok_or_else(|| Error::InvalidModel(format!("array code must be 0..=3, got {bits}")))
    }

    /// Whether array `i` (0 or 1) has its switch closed.
    pub fn closed(self, i: usize) -> bool {
        self.bits() >> i & 1 == 1
    }

    pub fn label(self) -> &'static str {
        match self {
            ArrayCode::B00 => "00",
            ArrayCode::B01 => "01",
            ArrayCode::B10 => "10",
            ArrayCode::B11 => "11",
        }
    }
}

impl std::str::FromStr for ArrayCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::InvalidModel(format!("array code must be 00, 01, 10 or 11, got {s:?}")))
    }
}

impl std::fmt::Display for ArrayCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Differential 2-bit array: each closed section puts two unit capacitors in
/// series across the outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningArray {
    /// Unit capacitance `C` (F).
    pub unit_c: f64,
    pub code: ArrayCode,
}

impl TuningArray {
    pub fn new(unit_c: f64, code: ArrayCode) -> Result<Self> {
        if !(unit_c > 0.0 && unit_c.is_finite()) {
            return Err(Error::InvalidModel(format!("array unit C must be positive, got {unit_c}")));
        }
        Ok(Self { unit_c, code })
    }

    pub fn with_code(&self, code: ArrayCode) -> Self {
        Self { code, ..*self }
    }

    /// Equivalent capacitance: 0, C/2 or C.
    pub fn capacitance(&self) -> f64 {
        let closed = (0..2).filter(|&i| self.code.closed(i)).count();
        match closed {
            0 => 0.0,
            1 => self.unit_c / 2.0,
            _ => self.unit_c,
        }
    }
}

pub fn tuning_array_capacitance(a: &TuningArray) -> f64 {
    a.capacitance()
}

/// Dot convention of a 3-coil transformer, ordered primary, secondary 1,
/// secondary 2. Entry `(i, j)` multiplies `k_ij sqrt(L_i L_j)`.
pub type DotSigns = [[f64; 3]; 3];

/// Default convention: secondary 1 aids the primary, secondary 2 opposes it
/// and the two secondaries aid each other.
pub const DEFAULT_DOTS: DotSigns = [[1.0, 1.0, -1.0], [1.0, 1.0, 1.0], [-1.0, 1.0, 1.0]];

/// `DEFAULT_DOTS` with both primary-secondary signs reversed.
pub fn flipped_dots(d: &DotSigns) -> DotSigns {
    let mut out = *d;
    for j in 1..3 {
        out[0][j] = -out[0][j];
        out[j][0] = -out[j][0];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledInductorSet {
    /// Inductance matrix (H), primary first.
    pub l: [[f64; 3]; 3],
    /// Series resistance per coil (Ω).
    pub r: [f64; 3],
    pub signs: DotSigns,
}

impl CoupledInductorSet {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.l[i][j])
    }

    /// Smallest eigenvalue of the inductance matrix (H).
    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix().symmetric_eigenvalues().min()
    }

    /// Stored magnetic energy `0.5 i^T L i` (J).
    pub fn energy(&self, i: [f64; 3]) -> f64 {
        let mut e = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                e += i[a] * self.l[a][b] * i[b];
            }
        }
        0.5 * e
    }
}

/// Coupled-inductor stamp with the default dot convention.
pub fn coupled_inductor_matrix(x: &TransformerModel) -> Result<CoupledInductorSet> {
    coupled_inductor_matrix_with_signs(x, &DEFAULT_DOTS)
}

/// Coupled-inductor stamp `M_ij = s_ij k_ij sqrt(L_i L_j)` with series
/// resistances taken at the model's evaluation frequency.
pub fn coupled_inductor_matrix_with_signs(
    x: &TransformerModel,
    signs: &DotSigns,
) -> Result<CoupledInductorSet> {
    x.validate()?;
    for i in 0..3 {
        if signs[i][i] != 1.0 {
            return Err(Error::InvalidModel("dot sign diagonal must be +1".into()));
        }
        for j in 0..3 {
            if signs[i][j] != signs[j][i] || signs[i][j].abs() != 1.0 {
                return Err(Error::InvalidModel("dot signs must be a symmetric +-1 matrix".into()));
            }
        }
    }
    let ls = [x.l_p, x.l_s1, x.l_s2];
    let k = [[1.0, x.k_ps1, x.k_ps2], [x.k_ps1, 1.0, x.k_ss], [x.k_ps2, x.k_ss, 1.0]];
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            l[i][j] = signs[i][j] * k[i][j] * (ls[i] * ls[j]).sqrt();
        }
    }
    let set = CoupledInductorSet { l, r: [x.r_pac, x.r_sac, x.r_sac], signs: *signs };
    let min_eig = set.min_eigenvalue();
    if !(min_eig > 0.0) {
        return Err(Error::InvalidModel(format!(
            "coupling (k_ps1 = {}, k_ps2 = {}, k_ss = {}) gives a non-positive-definite inductance \
             matrix (smallest eigenvalue {min_eig:.3e} H)",
            x.k_ps1, x.k_ps2, x.k_ss
        )));
    }
    Ok(set)
}

/// AC-coupled self-biased inverter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferParams {
    /// Coupling capacitor (F).
    pub c_couple: f64,
    /// Input-to-output feedback resistor (Ω).
    pub r_feedback: f64,
    pub nmos: MosParams,
    pub pmos: MosParams,
    /// Load capacitance at the buffer output (F).
    pub c_load: f64,
}

impl BufferParams {
    /// 1 pF coupling, 100 kΩ feedback, pull-up twice as strong as pull-down.
    pub fn reference() -> Self {
        let nmos = MosParams::nmos(2e-3, 0.3, 0.1);
        Self {
            c_couple: 1e-12,
            r_feedback: 100e3,
            nmos,
            pmos: MosParams::pmos(2.0 * nmos.k, -0.3, 0.1),
            c_load: 50e-15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_couple > 0.0 && self.r_feedback > 0.0 && self.c_load >= 0.0) {
            return Err(Error::InvalidModel("buffer C, R must be positive".into()));
        }
        if self.nmos.polarity != Polarity::N || self.pmos.polarity != Polarity::P {
            return Err(Error::InvalidModel("buffer needs one n and one p device".into()));
        }
        self.nmos.validate()?;
        self.pmos.validate()
    }
}
