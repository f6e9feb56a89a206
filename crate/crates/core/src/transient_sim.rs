//! Time-domain circuit simulation of the oscillator topologies.
//!
//! Modified nodal analysis with one unknown per non-ground node plus one
//! branch current per voltage source and per inductor coil. Every element
//! contributes a resistive part `f(x)` and a charge/flux part `q(x)`; the
//! system `d/dt q(x) + f(x) = 0` is integrated with the trapezoidal rule at a
//! fixed step and solved by Newton iteration on a dense LU factorization.
//!
//! Debug dump format, one element per line:
//!
//! ```text
//! <kind> <name> <node>... key=value...
//! ```
//!
//! with kinds `R C L K M VAR SW V I G`. Coupled sets (`K`) list their coils as
//! `a->b` pairs followed by the inductance matrix rows.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit_analysis::{tank_resonance_and_q, TankParams};
use crate::constants::{BOLTZMANN, T_REF};
use crate::device_models::{
    mos_eval, ArrayCode, BufferParams, DotSigns, MosParams, VaractorModel, DEFAULT_DOTS,
};
use crate::em_extract::TransformerModel;
use crate::{Error, Result};

/// Conductance from every node to ground keeping floating nodes solvable (S).
pub const GMIN: f64 = 1e-12;

const GROUND: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ElementKind {
    Resistor { a: usize, b: usize, r: f64 },
    Capacitor { a: usize, b: usize, c: f64 },
    /// Inductor with series resistance; its current runs from `a` to `b`.
    Inductor { a: usize, b: usize, l: f64, r: f64 },
    /// Coils `(a, b)` with a full inductance matrix and series resistances.
    CoupledInductors { coils: Vec<(usize, usize)>, l: Vec<Vec<f64>>, r: Vec<f64> },
    Mos { d: usize, g: usize, s: usize, params: MosParams },
    /// Linear capacitor whose value is set by the DC control voltage `v_c`.
    Varactor { a: usize, b: usize, model: VaractorModel, v_c: f64 },
    Switch { a: usize, b: usize, r_on: f64, r_off: f64, closed: bool },
    /// `v(p) - v(n) = v`; the branch current flows into `p` through the source.
    VoltageSource { p: usize, n: usize, v: f64 },
    /// Current `i` flows from `p` through the source into `n`.
    CurrentSource { p: usize, n: usize, i: f64 },
    /// Controlled current drawn from `from` and injected into `to`:
    /// `i = sat(sum c (v(p) - v(n)))`, where `sat` is the identity or
    /// `i_sat tanh(x / i_sat)`.
    Vccs { from: usize, to: usize, terms: Vec<(usize, usize, f64)>, i_sat: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
}

impl ElementKind {
    fn nodes(&self) -> Vec<usize> {
        match self {
            ElementKind::Resistor { a, b, .. }
            | ElementKind::Capacitor { a, b, .. }
            | ElementKind::Inductor { a, b, .. }
            | ElementKind::Varactor { a, b, .. }
            | ElementKind::Switch { a, b, .. } => vec![*a, *b],
            ElementKind::VoltageSource { p, n, .. } | ElementKind::CurrentSource { p, n, .. } => {
                vec![*p, *n]
            }
            ElementKind::CoupledInductors { coils, .. } => {
                coils.iter().flat_map(|&(a, b)| [a, b]).collect()
            }
            ElementKind::Mos { d, g, s, .. } => vec![*d, *g, *s],
            ElementKind::Vccs { from, to, terms, .. } => {
                let mut v = vec![*from, *to];
                v.extend(terms.iter().flat_map(|&(p, n, _)| [p, n]));
                v
            }
        }
    }

    /// Number of branch-current unknowns this element adds.
    fn branches(&self) -> usize {
        match self {
            ElementKind::VoltageSource { .. } | ElementKind::Inductor { .. } => 1,
            ElementKind::CoupledInductors { coils, .. } => coils.len(),
            _ => 0,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ElementKind::Resistor { .. } => "R",
            ElementKind::Capacitor { .. } => "C",
            ElementKind::Inductor { .. } => "L",
            ElementKind::CoupledInductors { .. } => "K",
            ElementKind::Mos { .. } => "M",
            ElementKind::Varactor { .. } => "VAR",
            ElementKind::Switch { .. } => "SW",
            ElementKind::VoltageSource { .. } => "V",
            ElementKind::CurrentSource { .. } => "I",
            ElementKind::Vccs { .. } => "G",
        }
    }
}

/// Circuit connectivity. Node 0 is ground and is named `"0"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    nodes: Vec<String>,
    elements: Vec<Element>,
    /// Output node names in order (`V_o1`, `V_o2`, ...).
    pub outputs: Vec<String>,
    /// Voltage source feeding the oscillator core.
    pub core_supply: Option<String>,
    /// Voltage source feeding auxiliary circuits such as output buffers.
    pub aux_supply: Option<String>,
    /// Unknowns offset from the operating point before time stepping, in
    /// addition to the configured perturbation.
    pub seeds: Vec<(String, f64)>,
}

impl Default for Netlist {
    fn default() -> Self {
        Self::new()
    }
}

impl Netlist {
    pub fn new() -> Self {
        Self {
            nodes: vec!["0".into()],
            elements: Vec::new(),
            outputs: Vec::new(),
            core_supply: None,
            aux_supply: None,
            seeds: Vec::new(),
        }
    }

    /// Index of a node, creating it on first use. `"0"` and `"gnd"` are ground.
    pub fn node(&mut self, name: &str) -> usize {
        if name == "0" || name == "gnd" {
            return GROUND;
        }
        if let Some(i) = self.nodes.iter().position(|n| n == name) {
            return i;
        }
        self.nodes.push(name.to_string());
        self.nodes.len() - 1
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        if name == "gnd" {
            return Some(GROUND);
        }
        self.nodes.iter().position(|n| n == name)
    }

    pub fn node_names(&self) -> &[String] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ElementKind) -> Result<()> {
        let name = name.into();
        if self.elements.iter().any(|e| e.name == name) {
            return Err(Error::Netlist(format!("duplicate element name '{name}'")));
        }
        self.elements.push(Element { name, kind });
        Ok(())
    }

    pub fn add_resistor(&mut self, name: &str, a: &str, b: &str, r: f64) -> Result<()> {
        let (a, b) = (self.node(a), self.node(b));
        self.add(name, ElementKind::Resistor { a, b, r })
    }

    pub fn add_capacitor(&mut self, name: &str, a: &str, b: &str, c: f64) -> Result<()> {
        let (a, b) = (self.node(a), self.node(b));
        self.add(name, ElementKind::Capacitor { a, b, c })
    }

    pub fn add_inductor(&mut self, name: &str, a: &str, b: &str, l: f64, r: f64) -> Result<()> {
        let (a, b) = (self.node(a), self.node(b));
        self.add(name, ElementKind::Inductor { a, b, l, r })
    }

    pub fn add_coupled(
        &mut self,
        name: &str,
        coils: &[(&str, &str)],
        l: Vec<Vec<f64>>,
        r: Vec<f64>,
    ) -> Result<()> {
        let coils = coils.iter().map(|&(a, b)| (self.node(a), self.node(b))).collect();
        self.add(name, ElementKind::CoupledInductors { coils, l, r })
    }

    pub fn add_mos(&mut self, name: &str, d: &str, g: &str, s: &str, params: MosParams) -> Result<()> {
        let (d, g, s) = (self.node(d), self.node(g), self.node(s));
        self.add(name, ElementKind::Mos { d, g, s, params })
    }

    pub fn add_vsource(&mut self, name: &str, p: &str, n: &str, v: f64) -> Result<()> {
        let (p, n) = (self.node(p), self.node(n));
        self.add(name, ElementKind::VoltageSource { p, n, v })
    }

    pub fn add_isource(&mut self, name: &str, p: &str, n: &str, i: f64) -> Result<()> {
        let (p, n) = (self.node(p), self.node(n));
        self.add(name, ElementKind::CurrentSource { p, n, i })
    }

    /// Check element values and connectivity.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut touched = vec![false; n];
        touched[GROUND] = true;
        for e in &self.elements {
            for &i in &e.kind.nodes() {
                if i >= n {
                    return Err(Error::Netlist(format!("element '{}' references missing node {i}", e.name)));
                }
                touched[i] = true;
            }
            let bad = |what: &str| Err(Error::Netlist(format!("element '{}': {what}", e.name)));
            match &e.kind {
                ElementKind::Resistor { r, .. } if !(*r > 0.0) => return bad("resistance must be positive"),
                ElementKind::Capacitor { c, .. } if !(*c >= 0.0) => return bad("capacitance must be >= 0"),
                ElementKind::Inductor { l, r, .. } if !(*l > 0.0 && *r >= 0.0) => {
                    return bad("inductance must be positive and resistance >= 0")
                }
                ElementKind::CoupledInductors { coils, l, r } => {
                    let m = coils.len();
                    if m == 0 || l.len() != m || r.len() != m || l.iter().any(|row| row.len() != m) {
                        return bad("coupled set dimensions disagree");
                    }
                    for i in 0..m {
                        if !(r[i] >= 0.0) {
                            return bad("coil resistance must be >= 0");
                        }
                        for j in 0..m {
                            if (l[i][j] - l[j][i]).abs() > 1e-12 * (l[i][i] * l[j][j]).sqrt() {
                                return bad("inductance matrix must be symmetric");
                            }
                        }
                    }
                    let mat = DMatrix::from_fn(m, m, |i, j| l[i][j]);
                    let min = mat.symmetric_eigenvalues().min();
                    if !(min > 0.0) {
                        return bad("inductance matrix is not positive definite");
                    }
                }
                ElementKind::Mos { params, .. } => params.validate()?,
                ElementKind::Varactor { model, .. } => model.validate()?,
                ElementKind::Switch { r_on, r_off, .. } if !(*r_on > 0.0 && *r_off > 0.0) => {
                    return bad("switch resistances must be positive")
                }
                ElementKind::VoltageSource { v, .. } if !v.is_finite() => return bad("source value not finite"),
                ElementKind::CurrentSource { i, .. } if !i.is_finite() => return bad("source value not finite"),
                ElementKind::Vccs { i_sat: Some(s), .. } if !(*s > 0.0) => return bad("i_sat must be positive"),
                _ => {}
            }
        }
        if let Some(i) = touched.iter().position(|t| !t) {
            return Err(Error::Netlist(format!("node '{}' has no connections", self.nodes[i])));
        }
        for o in &self.outputs {
            if self.node_index(o).is_none() {
                return Err(Error::Netlist(format!("output node '{o}' does not exist")));
            }
        }
        for s in self.core_supply.iter().chain(self.aux_supply.iter()) {
            match self.element(s).map(|e| &e.kind) {
                Some(ElementKind::VoltageSource { .. }) => {}
                _ => return Err(Error::Netlist(format!("supply '{s}' is not a voltage source"))),
            }
        }
        Ok(())
    }

    /// Names of all unknowns: nodes except ground, then branch currents.
    pub fn unknown_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.nodes[1..].to_vec();
        for e in &self.elements {
            match &e.kind {
                ElementKind::CoupledInductors { coils, .. } => {
                    names.extend((0..coils.len()).map(|k| format!("I({}.{})", e.name, k)))
                }
                k if k.branches() == 1 => names.push(format!("I({})", e.name)),
                _ => {}
            }
        }
        names
    }

    /// Line-per-element text dump (format in the module docs).
    pub fn dump(&self) -> String {
        let nm = |i: usize| self.nodes[i].as_str();
        let mut out = String::new();
        for e in &self.elements {
            let _ = write!(out, "{} {}", e.kind.tag(), e.name);
            match &e.kind {
                ElementKind::Resistor { a, b, r } => {
                    let _ = write!(out, " {} {} r={r:e}", nm(*a), nm(*b));
                }
                ElementKind::Capacitor { a, b, c } => {
                    let _ = write!(out, " {} {} c={c:e}", nm(*a), nm(*b));
                }
                ElementKind::Inductor { a, b, l, r } => {
                    let _ = write!(out, " {} {} l={l:e} r={r:e}", nm(*a), nm(*b));
                }
                ElementKind::CoupledInductors { coils, l, r } => {
                    for (a, b) in coils {
                        let _ = write!(out, " {}->{}", nm(*a), nm(*b));
                    }
                    for row in l {
                        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                        let _ = write!(out, " l=[{}]", cells.join(","));
                    }
                    let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
                    let _ = write!(out, " r=[{}]", cells.join(","));
                }
                ElementKind::Mos { d, g, s, params } => {
                    let _ = write!(
                        out,
                        " {} {} {} type={:?} k={} vth={} lambda={}",
                        nm(*d),
                        nm(*g),
                        nm(*s),
                        params.polarity,
                        params.k,
                        params.vth,
                        params.lambda
                    );
                }
                ElementKind::Varactor { a, b, model, v_c } => {
                    let _ = write!(out, " {} {} v_c={v_c} c={:e}", nm(*a), nm(*b), model.capacitance(*v_c));
                }
                ElementKind::Switch { a, b, r_on, r_off, closed } => {
                    let _ = write!(out, " {} {} r_on={r_on:e} r_off={r_off:e} closed={closed}", nm(*a), nm(*b));
                }
                ElementKind::VoltageSource { p, n, v } => {
                    let _ = write!(out, " {} {} v={v:e}", nm(*p), nm(*n));
                }
                ElementKind::CurrentSource { p, n, i } => {
                    let _ = write!(out, " {} {} i={i:e}", nm(*p), nm(*n));
                }
                ElementKind::Vccs { from, to, terms, i_sat } => {
                    let _ = write!(out, " {} {}", nm(*from), nm(*to));
                    for (p, n, c) in terms {
                        let _ = write!(out, " {c:e}*({},{})", nm(*p), nm(*n));
                    }
                    if let Some(s) = i_sat {
                        let _ = write!(out, " i_sat={s:e}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "lc-vco")]
    LcVco,
    #[serde(rename = "tf-vco")]
    TfVco,
    #[serde(rename = "cr-vco")]
    CrVco,
    #[serde(rename = "tc-qvco")]
    TcQvco,
}

impl Topology {
    pub const ALL: [Topology; 4] = [Topology::LcVco, Topology::TfVco, Topology::CrVco, Topology::TcQvco];

    pub fn tag(self) -> &'static str {
        match self {
            Topology::LcVco => "lc-vco",
            Topology::TfVco => "tf-vco",
            Topology::CrVco => "cr-vco",
            Topology::TcQvco => "tc-qvco",
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.tag() == s)
            .ok_or_else(|| Error::Netlist(format!("unknown topology '{s}' (lc-vco, tf-vco, cr-vco, tc-qvco)")))
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Parameters shared by the oscillator netlist generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillatorParams {
    /// V
    pub v_dd: f64,
    pub transformer: TransformerModel,
    pub dots: DotSigns,
    pub varactor: VaractorModel,
    /// Varactor control voltage (V).
    pub v_c: f64,
    /// Unit capacitor of each switched section (F).
    pub array_unit_c: f64,
    pub array_code: ArrayCode,
    /// Ω
    pub switch_r_on: f64,
    pub switch_r_off: f64,
    /// Fixed capacitance from every output to ground (F).
    pub c_node: f64,
    /// Junction capacitance on internal source nodes (F).
    pub c_source: f64,
    pub nmos: MosParams,
    pub pmos: MosParams,
    /// Tail current of the lc-vco (A).
    pub tail_current: f64,
    /// Coupling between the two halves of a center-tapped primary.
    pub center_tap_k: f64,
    /// Output buffers of the tc-qvco.
    pub buffer: Option<BufferParams>,
    /// `false` removes the regenerative devices, leaving a passive tank.
    pub active: bool,
    /// Relative `K` error of the tc-qvco core B devices; 0 keeps the cores matched.
    pub core_b_mismatch: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self {
            v_dd: 0.7,
            transformer: TransformerModel::published_toroidal(),
            dots: DEFAULT_DOTS,
            varactor: VaractorModel::reference(),
            v_c: 0.4,
            array_unit_c: 1.0e-12,
            array_code: ArrayCode::B00,
            switch_r_on: 50.0,
            switch_r_off: 1e7,
            c_node: 50e-15,
            c_source: 20e-15,
            nmos: MosParams::nmos(20e-3, 0.2, 0.1),
            pmos: MosParams::pmos(20e-3, -0.2, 0.1),
            tail_current: 1e-3,
            center_tap_k: 0.5,
            buffer: Some(BufferParams::reference()),
            active: true,
            core_b_mismatch: 0.0,
        }
    }
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_dd > 0.0) {
            return Err(Error::Netlist("v_dd must be positive".into()));
        }
        self.transformer.validate()?;
        self.varactor.validate()?;
        self.nmos.validate()?;
        self.pmos.validate()?;
        if self.nmos.polarity != crate::device_models::Polarity::N
            || self.pmos.polarity != crate::device_models::Polarity::P
        {
            return Err(Error::Netlist("nmos/pmos polarities are swapped".into()));
        }
        if !(self.array_unit_c >= 0.0 && self.c_node >= 0.0 && self.c_source >= 0.0) {
            return Err(Error::Netlist("capacitances must be >= 0".into()));
        }
        if !(self.switch_r_on > 0.0 && self.switch_r_off > self.switch_r_on) {
            return Err(Error::Netlist("switch needs 0 < r_on < r_off".into()));
        }
        if !(self.tail_current > 0.0) {
            return Err(Error::Netlist("tail current must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.center_tap_k) {
            return Err(Error::Netlist("center_tap_k must lie in [0, 1)".into()));
        }
        if let Some(b) = &self.buffer {
            b.validate()?;
        }
        if !(self.core_b_mismatch > -1.0 && self.core_b_mismatch.is_finite()) {
            return Err(Error::Netlist("core_b_mismatch must exceed -1".into()));
        }
        Ok(())
    }
}

/// Build the netlist of one oscillator topology.
pub fn build_netlist(topology: Topology, p: &OscillatorParams) -> Result<Netlist> {
    p.validate()?;
    let mut n = Netlist::new();
    match topology {
        Topology::LcVco => build_lc(&mut n, p)?,
        Topology::TfVco => build_tf(&mut n, p)?,
        Topology::CrVco => build_cr(&mut n, p)?,
        Topology::TcQvco => build_tc(&mut n, p)?,
    }
    n.validate()?;
    Ok(n)
}

/// Varactors, fixed node capacitance and the two switched sections across
/// one differential output pair.
fn tank_caps(n: &mut Netlist, p: &OscillatorParams, tag: &str, a: &str, b: &str) -> Result<()> {
    for out in [a, b] {
        let node = n.node(out);
        n.add(
            format!("Cvar_{out}"),
            ElementKind::Varactor { a: node, b: GROUND, model: p.varactor, v_c: p.v_c },
        )?;
        if p.c_node > 0.0 {
            n.add_capacitor(&format!("Cp_{out}"), out, "0", p.c_node)?;
        }
    }
    if p.array_unit_c > 0.0 {
        for i in 0..2 {
            let x = format!("arr{tag}{i}_x");
            let y = format!("arr{tag}{i}_y");
            n.add_capacitor(&format!("Carr{tag}{i}a"), a, &x, p.array_unit_c)?;
            n.add_capacitor(&format!("Carr{tag}{i}b"), &y, b, p.array_unit_c)?;
            let (xi, yi) = (n.node(&x), n.node(&y));
            n.add(
                format!("SWarr{tag}{i}"),
                ElementKind::Switch {
                    a: xi,
                    b: yi,
                    r_on: p.switch_r_on,
                    r_off: p.switch_r_off,
                    closed: p.array_code.closed(i),
                },
            )?;
        }
    }
    Ok(())
}

/// Two halves of a center-tapped coil, both oriented from the tap outward,
/// whose differential series inductance is `l_total`.
fn center_tapped(l_total: f64, k: f64) -> (f64, f64) {
    let half = l_total / (2.0 * (1.0 + k));
    (half, -k * half)
}

fn build_lc(n: &mut Netlist, p: &OscillatorParams) -> Result<()> {
    let x = &p.transformer;
    n.add_vsource("vdd", "vdd", "0", p.v_dd)?;
    n.core_supply = Some("vdd".into());
    let (h, m) = center_tapped(x.l_p, p.center_tap_k);
    n.add_coupled(
        "Ltank",
        &[("vdd", "V_o1"), ("vdd", "V_o2")],
        vec![vec![h, m], vec![m, h]],
        vec![0.5 * x.r_pac; 2],
    )?;
    tank_caps(n, p, "a", "V_o1", "V_o2")?;
    if p.active {
        n.add_mos("M1", "V_o1", "V_o2", "tail", p.nmos)?;
        n.add_mos("M2", "V_o2", "V_o1", "tail", p.nmos)?;
        n.add_isource("Itail", "tail", "0", p.tail_current)?;
        n.add_capacitor("Ctail", "tail", "0", p.c_source.max(1e-15))?;
    }
    n.outputs = vec!["V_o1".into(), "V_o2".into()];
    Ok(())
}

fn build_tf(n: &mut Netlist, p: &OscillatorParams) -> Result<()> {
    let x = &p.transformer;
    n.add_vsource("vdd", "vdd", "0", p.v_dd)?;
    n.core_supply = Some("vdd".into());
    let (h, m) = center_tapped(x.l_p, p.center_tap_k);
    let ls = [x.l_s1, x.l_s2];
    // A source coil opposing its drain half puts source and drain in phase.
    let m1 = -x.k_ps1 * (h * ls[0]).sqrt();
    let m2 = -x.k_ps2 * (h * ls[1]).sqrt();
    let mss = x.k_ss * (ls[0] * ls[1]).sqrt();
    let l = vec![
        vec![h, m, m1, 0.0],
        vec![m, h, 0.0, m2],
        vec![m1, 0.0, ls[0], mss],
        vec![0.0, m2, mss, ls[1]],
    ];
    n.add_coupled(
        "XF",
        &[("vdd", "V_o1"), ("vdd", "V_o2"), ("s1", "0"), ("s2", "0")],
        l,
        vec![0.5 * x.r_pac, 0.5 * x.r_pac, x.r_sac, x.r_sac],
    )?;
    tank_caps(n, p, "a", "V_o1", "V_o2")?;
    n.add_capacitor("Cs1", "s1", "0", p.c_source.max(1e-15))?;
    n.add_capacitor("Cs2", "s2", "0", p.c_source.max(1e-15))?;
    if p.active {
        n.add_mos("M1", "V_o1", "V_o2", "s1", p.nmos)?;
        n.add_mos("M2", "V_o2", "V_o1", "s2", p.nmos)?;
    }
    n.outputs = vec!["V_o1".into(), "V_o2".into()];
    Ok(())
}

fn build_cr(n: &mut Netlist, p: &OscillatorParams) -> Result<()> {
    let x = &p.transformer;
    n.add_vsource("vdd", "vdd", "0", p.v_dd)?;
    n.core_supply = Some("vdd".into());
    n.add_inductor("Lp", "V_o1", "V_o2", x.l_p, x.r_pac)?;
    tank_caps(n, p, "a", "V_o1", "V_o2")?;
    if p.active {
        n.add_mos("Mp", "V_o1", "V_o2", "vdd", p.pmos)?;
        n.add_mos("Mn", "V_o2", "V_o1", "0", p.nmos)?;
    }
    n.outputs = vec!["V_o1".into(), "V_o2".into()];
    Ok(())
}

/// Three-coil transformer as a coupled set: primary `a -> b`, then the two
/// secondaries as given.
fn add_transformer(
    n: &mut Netlist,
    name: &str,
    p: &OscillatorParams,
    primary: (&str, &str),
    s1: (&str, &str),
    s2: (&str, &str),
) -> Result<()> {
    let set = crate::device_models::coupled_inductor_matrix_with_signs(&p.transformer, &p.dots)?;
    let l = set.l.iter().map(|row| row.to_vec()).collect();
    n.add_coupled(name, &[primary, s1, s2], l, set.r.to_vec())
}

/// Two current-reuse cores. Each core's NMOS and PMOS sources return to the
/// rails through the secondaries of the other core's transformer, so the
/// source voltages carry the other core's signal. Core B's connection into
/// transformer A is wound in reverse, which makes V_o3 lag V_o1.
fn build_tc(n: &mut Netlist, p: &OscillatorParams) -> Result<()> {
    n.add_vsource("vdd", "vdd", "0", p.v_dd)?;
    n.core_supply = Some("vdd".into());

    // Transformer A: primary across core A; reversed secondaries carry core B's current.
    add_transformer(n, "XA", p, ("V_o1", "V_o2"), ("0", "sn_b"), ("vdd", "sp_b"))?;
    // Transformer B: primary across core B; its secondaries carry core A's current.
    add_transformer(n, "XB", p, ("V_o3", "V_o4"), ("sn_a", "0"), ("sp_a", "vdd"))?;

    tank_caps(n, p, "a", "V_o1", "V_o2")?;
    tank_caps(n, p, "b", "V_o3", "V_o4")?;
    for s in ["sn_a", "sp_a", "sn_b", "sp_b"] {
        n.add_capacitor(&format!("Cj_{s}"), s, "0", p.c_source.max(1e-15))?;
    }
    if p.active {
        n.add_mos("Mpa", "V_o1", "V_o2", "sp_a", p.pmos)?;
        n.add_mos("Mna", "V_o2", "V_o1", "sn_a", p.nmos)?;
        let scale = 1.0 + p.core_b_mismatch;
        n.add_mos("Mpb", "V_o3", "V_o4", "sp_b", p.pmos.scaled(scale))?;
        n.add_mos("Mnb", "V_o4", "V_o3", "sn_b", p.nmos.scaled(scale))?;
    }
    if let Some(b) = &p.buffer {
        n.add_vsource("vdd_buf", "vdd_buf", "0", p.v_dd)?;
        n.aux_supply = Some("vdd_buf".into());
        for k in 1..=4 {
            let o = format!("V_o{k}");
            let bin = format!("buf{k}_in");
            let bout = format!("buf{k}_out");
            n.add_capacitor(&format!("Cc{k}"), &o, &bin, b.c_couple)?;
            n.add_resistor(&format!("Rf{k}"), &bin, &bout, b.r_feedback)?;
            n.add_mos(&format!("Mbp{k}"), &bout, &bin, "vdd_buf", b.pmos)?;
            n.add_mos(&format!("Mbn{k}"), &bout, &bin, "0", b.nmos)?;
            n.add_capacitor(&format!("Cl{k}"), &bout, "0", b.c_load.max(1e-15))?;
        }
    }
    n.outputs = (1..=4).map(|k| format!("V_o{k}")).collect();
    Ok(())
}

/// Linear-tank quadrature model built literally from the half-circuit:
/// each core is a differential `R || C || k^2 L_p` tank driven by
/// transconductor currents combining both cores' differential voltages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearQvcoParams {
    pub tank: TankParams,
    /// Device transconductance (S).
    pub g_m: f64,
    /// Saturation current of each injection; `None` keeps it linear (A).
    pub i_sat: Option<f64>,
    /// Seed the quadrature mode instead of relying on the perturbation alone.
    pub seed_mode: bool,
}

/// Behavioral quadrature oscillator. With `vA = V_o1 - V_o2`,
/// `vB = V_o3 - V_o4`, `a = 1 - 2/(kN)^2` and `b = 3/kN`, the injections are
/// `(g/2)(a vA - b vB)` into tank A and `(g/2)(a vB + b vA)` into tank B.
/// Their quadrature mode has the threshold and frequency of the closed-form
/// analysis, with `V_o3` lagging `V_o1`.
pub fn build_linear_qvco(p: &LinearQvcoParams) -> Result<Netlist> {
    p.tank.validate()?;
    if !(p.g_m >= 0.0 && p.g_m.is_finite()) {
        return Err(Error::Netlist("g_m must be >= 0".into()));
    }
    let t = &p.tank;
    let kn = t.kn();
    let a = 1.0 - 2.0 / (kn * kn);
    let b = 3.0 / kn;
    let g = 0.5 * p.g_m;
    let mut n = Netlist::new();
    for (tag, x, y) in [("A", "V_o1", "V_o2"), ("B", "V_o3", "V_o4")] {
        n.add_resistor(&format!("R{tag}"), x, y, t.r)?;
        n.add_capacitor(&format!("C{tag}"), x, y, t.c)?;
        n.add_inductor(&format!("L{tag}"), x, y, t.l_tank(), 0.0)?;
        // common mode has no drive; tie it to ground weakly
        n.add_resistor(&format!("Rcm{tag}1"), x, "0", 1e6)?;
        n.add_resistor(&format!("Rcm{tag}2"), y, "0", 1e6)?;
    }
    let (o1, o2, o3, o4) = (n.node("V_o1"), n.node("V_o2"), n.node("V_o3"), n.node("V_o4"));
    n.add(
        "GA",
        ElementKind::Vccs { from: o2, to: o1, terms: vec![(o1, o2, g * a), (o3, o4, -g * b)], i_sat: p.i_sat },
    )?;
    n.add(
        "GB",
        ElementKind::Vccs { from: o4, to: o3, terms: vec![(o3, o4, g * a), (o1, o2, g * b)], i_sat: p.i_sat },
    )?;
    n.outputs = (1..=4).map(|k| format!("V_o{k}")).collect();
    if p.seed_mode {
        // vA = e cos(wt), vB = e sin(wt): inductor B starts at -e / (w L).
        let e = 1e-3;
        let w = crate::circuit_analysis::oscillation_frequency_closed(t).unwrap_or(tank_resonance_and_q(t).0);
        n.seeds.push(("I(LB)".into(), -e / (w * t.l_tank())));
        n.seeds.push(("V_o1".into(), 0.5 * e));
        n.seeds.push(("V_o2".into(), -0.5 * e));
    }
    n.validate()?;
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integration {
    Trapezoidal,
    BackwardEuler,
}

/// Starting point of a transient run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// DC operating point with capacitors open and inductors shorted.
    OperatingPoint,
    /// All capacitor voltages and inductor currents zero, sources on.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// s
    pub step: f64,
    /// s
    pub stop: f64,
    pub reltol: f64,
    /// A for current rows, V for voltage rows.
    pub abstol: f64,
    pub max_newton: usize,
    /// Offset added to the first output's initial voltage (V).
    pub perturbation: f64,
    pub method: Integration,
    pub initial: InitialState,
    /// Source ramp used when the first step fails (s).
    pub source_ramp: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 1.0 / (200.0 * 3.4e9),
            stop: 100e-9,
            reltol: 1e-9,
            abstol: 1e-12,
            max_newton: 50,
            perturbation: 1e-3,
            method: Integration::Trapezoidal,
            initial: InitialState::OperatingPoint,
            source_ramp: 1e-9,
        }
    }
}

impl SimConfig {
    /// Step of `points` samples per period at `f_max`.
    pub fn for_frequency(f_max: f64, points: f64, stop: f64) -> Self {
        Self { step: 1.0 / (points * f_max), stop, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {}", self.step)));
        }
        if !(self.stop > self.step) {
            return Err(Error::Domain("stop time must exceed the time step".into()));
        }
        if !(self.reltol > 0.0 && self.abstol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if self.max_newton == 0 {
            return Err(Error::Domain("max_newton must be at least 1".into()));
        }
        if !self.perturbation.is_finite() || !(self.source_ramp > 0.0) {
            return Err(Error::Domain("perturbation must be finite and source_ramp positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.stop / self.step).round() as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub steps: usize,
    pub newton_iterations: usize,
    /// Largest nonlinear residual over all accepted steps.
    pub max_residual: f64,
    /// True when the run needed the source-ramping fallback.
    pub source_ramped: bool,
}

/// Sampled solution on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveforms {
    pub time: Vec<f64>,
    pub names: Vec<String>,
    pub traces: Vec<Vec<f64>>,
    pub outputs: Vec<String>,
    pub core_supply: Option<String>,
    pub aux_supply: Option<String>,
    pub stats: SimStats,
}

impl Waveforms {
    /// Waveforms from explicit traces; used for synthetic inputs.
    pub fn from_traces(time: Vec<f64>, traces: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if time.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("time grid must be strictly increasing".into()));
        }
        if traces.iter().any(|(_, t)| t.len() != time.len()) {
            return Err(Error::Domain("trace length differs from the time grid".into()));
        }
        let outputs = traces.iter().map(|(n, _)| n.clone()).filter(|n| n.starts_with("V_o")).collect();
        let (names, traces) = traces.into_iter().unzip();
        Ok(Self { time, names, traces, outputs, core_supply: None, aux_supply: None, stats: SimStats::default() })
    }

    pub fn trace(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.traces[i].as_slice())
    }

    /// Current delivered by a voltage source (positive out of its + terminal).
    pub fn supply_current(&self, source: &str) -> Option<Vec<f64>> {
        self.trace(&format!("I({source})")).map(|t| t.iter().map(|i| -i).collect())
    }

    /// CSV with header `time_s,<columns>` at full double precision.
    pub fn to_csv(&self, columns: &[String]) -> Result<String> {
        let cols: Vec<&[f64]> = columns
            .iter()
            .map(|c| self.trace(c).ok_or_else(|| Error::Domain(format!("no trace named '{c}'"))))
            .collect::<Result<_>>()?;
        let mut out = String::with_capacity(self.time.len() * 24 * (columns.len() + 1));
        out.push_str("time_s");
        for c in columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (k, t) in self.time.iter().enumerate() {
            let _ = write!(out, "{t}");
            for c in &cols {
                let _ = write!(out, ",{}", c[k]);
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// CSV of the output nodes.
    pub fn outputs_csv(&self) -> Result<String> {
        self.to_csv(&self.outputs)
    }
}

/// Unknown layout of a netlist.
struct System<'a> {
    net: &'a Netlist,
    n: usize,
    /// First branch unknown of each element.
    branch: Vec<usize>,
    names: Vec<String>,
}

/// Per-evaluation buffers: resistive part, charges and their Jacobians.
struct Eval {
    f: Vec<f64>,
    q: Vec<f64>,
    jf: Vec<f64>,
    jq: Vec<f64>,
    fscale: Vec<f64>,
}

impl Eval {
    fn new(n: usize) -> Self {
        Self { f: vec![0.0; n], q: vec![0.0; n], jf: vec![0.0; n * n], jq: vec![0.0; n * n], fscale: vec![0.0; n] }
    }
}

fn row(node: usize) -> Option<usize> {
    node.checked_sub(1)
}

impl<'a> System<'a> {
    fn new(net: &'a Netlist) -> Self {
        let nn = net.nodes.len() - 1;
        let mut next = nn;
        let branch = net
            .elements
            .iter()
            .map(|e| {
                let b = next;
                next += e.kind.branches();
                b
            })
            .collect();
        Self { net, n: next, branch, names: net.unknown_names() }
    }

    fn volt(x: &[f64], node: usize) -> f64 {
        row(node).map_or(0.0, |r| x[r])
    }

    /// Evaluate `f`, `q` and their Jacobians at `x`; sources scaled by `s`.
    fn eval(&self, x: &[f64], s: f64, ev: &mut Eval) {
        let n = self.n;
        ev.f.iter_mut().for_each(|v| *v = 0.0);
        ev.q.iter_mut().for_each(|v| *v = 0.0);
        ev.jf.iter_mut().for_each(|v| *v = 0.0);
        ev.jq.iter_mut().for_each(|v| *v = 0.0);
        ev.fscale.iter_mut().for_each(|v| *v = 0.0);
        let Eval { f, q, jf, jq, fscale } = ev;
        let (f, fscale) = (f.as_mut_slice(), fscale.as_mut_slice());
        let mut add_f = |r: Option<usize>, v: f64| {
            if let Some(r) = r {
                f[r] += v;
                fscale[r] += v.abs();
            }
        };
        macro_rules! jadd {
            ($m:expr, $r:expr, $c:expr, $v:expr) => {
                if let (Some(r), Some(c)) = ($r, $c) {
                    $m[r * n + c] += $v;
                }
            };
        }
        for i in 1..self.net.nodes.len() {
            add_f(row(i), GMIN * x[i - 1]);
            jadd!(jf, row(i), row(i), GMIN);
        }
        let conductance = |a: usize, b: usize, g: f64, add_f: &mut dyn FnMut(Option<usize>, f64), jf: &mut Vec<f64>| {
            let i = g * (Self::volt(x, a) - Self::volt(x, b));
            add_f(row(a), i);
            add_f(row(b), -i);
            jadd!(jf, row(a), row(a), g);
            jadd!(jf, row(a), row(b), -g);
            jadd!(jf, row(b), row(a), -g);
            jadd!(jf, row(b), row(b), g);
        };
        let capacitance = |a: usize, b: usize, c: f64, q: &mut Vec<f64>, jq: &mut Vec<f64>| {
            let v = c * (Self::volt(x, a) - Self::volt(x, b));
            if let Some(r) = row(a) {
                q[r] += v;
            }
            if let Some(r) = row(b) {
                q[r] -= v;
            }
            jadd!(jq, row(a), row(a), c);
            jadd!(jq, row(a), row(b), -c);
            jadd!(jq, row(b), row(a), -c);
            jadd!(jq, row(b), row(b), c);
        };
        for (ei, e) in self.net.elements.iter().enumerate() {
            let br = self.branch[ei];
            match &e.kind {
                ElementKind::Resistor { a, b, r } => conductance(*a, *b, 1.0 / r, &mut add_f, jf),
                ElementKind::Switch { a, b, r_on, r_off, closed } => {
                    conductance(*a, *b, 1.0 / if *closed { r_on } else { r_off }, &mut add_f, jf)
                }
                ElementKind::Capacitor { a, b, c } => capacitance(*a, *b, *c, q, jq),
                ElementKind::Varactor { a, b, model, v_c } => capacitance(*a, *b, model.capacitance(*v_c), q, jq),
                ElementKind::Inductor { a, b, l, r } => {
                    self.stamp_coils(x, &[(*a, *b)], &|_, _| *l, &[*r], br, &mut add_f, jf, q, jq)
                }
                ElementKind::CoupledInductors { coils, l, r } => {
                    self.stamp_coils(x, coils, &|i, j| l[i][j], r, br, &mut add_f, jf, q, jq)
                }
                ElementKind::VoltageSource { p, n: m, v } => {
                    let i = x[br];
                    add_f(row(*p), i);
                    add_f(row(*m), -i);
                    jadd!(jf, row(*p), Some(br), 1.0);
                    jadd!(jf, row(*m), Some(br), -1.0);
                    let vp = Self::volt(x, *p);
                    let vm = Self::volt(x, *m);
                    add_f(Some(br), vp - vm - s * v);
                    jadd!(jf, Some(br), row(*p), 1.0);
                    jadd!(jf, Some(br), row(*m), -1.0);
                }
                ElementKind::CurrentSource { p, n: m, i } => {
                    add_f(row(*p), s * i);
                    add_f(row(*m), -s * i);
                }
                ElementKind::Mos { d, g, s: src, params } => {
                    let (vd, vg, vs) = (Self::volt(x, *d), Self::volt(x, *g), Self::volt(x, *src));
                    let m = mos_eval(params, vg - vs, vd - vs);
                    add_f(row(*d), m.id);
                    add_f(row(*src), -m.id);
                    for (rr, sign) in [(row(*d), 1.0), (row(*src), -1.0)] {
                        jadd!(jf, rr, row(*g), sign * m.gm);
                        jadd!(jf, rr, row(*d), sign * m.gds);
                        jadd!(jf, rr, row(*src), -sign * (m.gm + m.gds));
                    }
                }
                ElementKind::Vccs { from, to, terms, i_sat } => {
                    let ctrl: f64 = terms.iter().map(|&(p, m, c)| c * (Self::volt(x, p) - Self::volt(x, m))).sum();
                    let (i, di) = match i_sat {
                        Some(is) => {
                            let t = (ctrl / is).tanh();
                            (is * t, 1.0 - t * t)
                        }
                        None => (ctrl, 1.0),
                    };
                    add_f(row(*from), i);
                    add_f(row(*to), -i);
                    for &(p, m, c) in terms {
                        for (rr, sign) in [(row(*from), 1.0), (row(*to), -1.0)] {
                            jadd!(jf, rr, row(p), sign * c * di);
                            jadd!(jf, rr, row(m), -sign * c * di);
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn stamp_coils(
        &self,
        x: &[f64],
        coils: &[(usize, usize)],
        l: &dyn Fn(usize, usize) -> f64,
        r: &[f64],
        br: usize,
        add_f: &mut dyn FnMut(Option<usize>, f64),
        jf: &mut [f64],
        q: &mut [f64],
        jq: &mut [f64],
    ) {
        let n = self.n;
        for (k, &(a, b)) in coils.iter().enumerate() {
            let bk = br + k;
            let i = x[bk];
            add_f(row(a), i);
            add_f(row(b), -i);
            if let Some(ra) = row(a) {
                jf[ra * n + bk] += 1.0;
                jf[bk * n + ra] -= 1.0;
            }
            if let Some(rb) = row(b) {
                jf[rb * n + bk] -= 1.0;
                jf[bk * n + rb] += 1.0;
            }
            let dv = Self::volt(x, a) - Self::volt(x, b);
            add_f(Some(bk), r[k] * i - dv);
            jf[bk * n + bk] += r[k];
            for j in 0..coils.len() {
                let lkj = l(k, j);
                q[bk] += lkj * x[br + j];
                jq[bk * n + br + j] += lkj;
            }
        }
    }
}

/// Dense LU with partial pivoting, solving `a x = b` in place (`b` becomes
/// `x`). A pivot below `1e-14` of its column's largest original entry marks
/// the column's unknown as structurally undetermined.
fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> std::result::Result<(), usize> {
    let mut colmax = vec![0.0f64; n];
    for i in 0..n {
        for (j, c) in colmax.iter_mut().enumerate() {
            *c = c.max(a[i * n + j].abs());
        }
    }
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].abs();
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best.is_finite() && best > 0.0 && best > 1e-14 * colmax[k]) {
            return Err(k);
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        let piv = a[k * n + k];
        for i in k + 1..n {
            let m = a[i * n + k] / piv;
            if m != 0.0 {
                a[i * n + k] = 0.0;
                for j in k + 1..n {
                    a[i * n + j] -= m * a[k * n + j];
                }
                b[i] -= m * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[k * n + j] * b[j];
        }
        b[k] = s / a[k * n + k];
    }
    Ok(())
}

/// What the Newton iteration drives to zero.
enum Residual<'b> {
    /// `f(x)`
    Dc,
    /// `a (q(x) - q0) - qdot0 + f(x)`
    Step { a: f64, q0: &'b [f64], qdot0: Option<&'b [f64]> },
}

enum NewtonFail {
    Singular(usize),
    NoConvergence(f64),
}

struct Work {
    ev: Eval,
    r: Vec<f64>,
    j: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self { ev: Eval::new(n), r: vec![0.0; n], j: vec![0.0; n * n] }
    }
}

impl System<'_> {
    /// Newton iteration; returns (iterations, final max residual). On
    /// success `w.ev` holds the evaluation at the returned `x`.
    #[allow(clippy::too_many_arguments)]
    fn newton(
        &self,
        x: &mut [f64],
        s: f64,
        res: &Residual,
        reltol: f64,
        abstol: f64,
        max_iter: usize,
        limit: Option<f64>,
        w: &mut Work,
    ) -> std::result::Result<(usize, f64), NewtonFail> {
        let n = self.n;
        let nn = self.net.nodes.len() - 1;
        let mut dx_ok = false;
        let mut prev_ok = false;
        let mut resid = f64::INFINITY;
        for it in 0..=max_iter {
            self.eval(x, s, &mut w.ev);
            let ev = &w.ev;
            let mut ok = true;
            resid = 0.0;
            match res {
                Residual::Dc => {
                    for i in 0..n {
                        let v = ev.f[i];
                        w.r[i] = v;
                        resid = f64::max(resid, v.abs());
                        ok &= v.abs() <= abstol + reltol * ev.fscale[i];
                    }
                    w.j.copy_from_slice(&ev.jf);
                }
                Residual::Step { a, q0, qdot0 } => {
                    for i in 0..n {
                        let qd = qdot0.map_or(0.0, |d| d[i]);
                        let v = a * (ev.q[i] - q0[i]) - qd + ev.f[i];
                        let scale = ev.fscale[i] + a * (ev.q[i].abs() + q0[i].abs()) + qd.abs();
                        w.r[i] = v;
                        resid = f64::max(resid, v.abs());
                        ok &= v.abs() <= abstol + reltol * scale;
                    }
                    for k in 0..n * n {
                        w.j[k] = a * ev.jq[k] + ev.jf[k];
                    }
                }
            }
            // A residual that stays within tolerance across an update is also
            // accepted: on weakly tied nodes the update test alone can stall.
            if ok && (it == 0 || dx_ok || prev_ok) {
                return Ok((it, resid));
            }
            prev_ok = ok;
            if it == max_iter {
                break;
            }
            for v in w.r.iter_mut() {
                *v = -*v;
            }
            lu_solve(&mut w.j, &mut w.r, n).map_err(NewtonFail::Singular)?;
            let mut factor = 1.0;
            if let Some(lim) = limit {
                let big = w.r[..nn].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if big > lim {
                    factor = lim / big;
                }
            }
            dx_ok = factor == 1.0;
            for i in 0..n {
                let d = factor * w.r[i];
                x[i] += d;
                dx_ok &= d.abs() <= reltol * x[i].abs() + abstol;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(NewtonFail::NoConvergence(f64::INFINITY));
            }
        }
        Err(NewtonFail::NoConvergence(resid))
    }

    fn fail(&self, e: NewtonFail, time: f64) -> Error {
        match e {
            NewtonFail::Singular(k) => Error::SingularMatrix { unknown: self.names[k].clone() },
            NewtonFail::NoConvergence(residual) => Error::StepFailure { time, residual },
        }
    }

    /// DC solution with capacitors open; falls back to source stepping.
    fn operating_point(&self, cfg: &SimConfig, w: &mut Work) -> Result<Vec<f64>> {
        let iters = cfg.max_newton.max(200);
        let mut x = vec![0.0; self.n];
        match self.newton(&mut x, 1.0, &Residual::Dc, cfg.reltol, cfg.abstol, iters, Some(0.2), w) {
            Ok(_) => return Ok(x),
            Err(NewtonFail::Singular(k)) => return Err(self.fail(NewtonFail::Singular(k), 0.0)),
            Err(_) => {}
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for k in 1..=20 {
            let s = k as f64 / 20.0;
            self.newton(&mut x, s, &Residual::Dc, cfg.reltol, cfg.abstol, iters, Some(0.2), w)
                .map_err(|e| self.fail(e, 0.0))?;
        }
        Ok(x)
    }

    fn run(&self, cfg: &SimConfig, ramp: bool) -> Result<Waveforms> {
        let n = self.n;
        let h = cfg.step;
        let steps = cfg.steps();
        let mut w = Work::new(n);
        let src = |t: f64| if ramp { (t / cfg.source_ramp).min(1.0) } else { 1.0 };

        let mut x = match (ramp, cfg.initial) {
            (false, InitialState::OperatingPoint) => self.operating_point(cfg, &mut w)?,
            _ => vec![0.0; n],
        };
        if let Some(o) = self.net.outputs.first() {
            let k = self.names.iter().position(|nm| nm == o).expect("validated output");
            x[k] += cfg.perturbation;
        }
        for (name, v) in &self.net.seeds {
            let k = self
                .names
                .iter()
                .position(|nm| nm == name)
                .ok_or_else(|| Error::Netlist(format!("seed refers to unknown '{name}'")))?;
            x[k] += *v;
        }

        // Consistent start: a tiny backward-Euler step holds the stored
        // charges and fluxes while algebraic unknowns settle.
        self.eval(&x, src(0.0), &mut w.ev);
        let q_target = w.ev.q.clone();
        let tau = h * 1e-4;
        let init = Residual::Step { a: 1.0 / tau, q0: &q_target, qdot0: None };
        let mut stats = SimStats { steps, ..SimStats::default() };
        let (it, r) = self
            .newton(&mut x, src(0.0), &init, cfg.reltol, cfg.abstol, cfg.max_newton, None, &mut w)
            .map_err(|e| self.fail(e, 0.0))?;
        stats.newton_iterations += it;
        stats.max_residual = r;
        let mut q0 = w.ev.q.clone();
        let mut qdot0: Vec<f64> = (0..n).map(|i| (q0[i] - q_target[i]) / tau).collect();

        let mut traces: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(steps + 1)).collect();
        let mut time = Vec::with_capacity(steps + 1);
        let record = |x: &[f64], traces: &mut Vec<Vec<f64>>| {
            for (tr, v) in traces.iter_mut().zip(x) {
                tr.push(*v);
            }
        };
        time.push(0.0);
        record(&x, &mut traces);

        let trap = cfg.method == Integration::Trapezoidal;
        let a = if trap { 2.0 / h } else { 1.0 / h };
        let mut q1 = vec![0.0; n];
        for k in 1..=steps {
            let t = k as f64 * h;
            let res = Residual::Step { a, q0: &q0, qdot0: if trap { Some(&qdot0) } else { None } };
            let (it, r) = self
                .newton(&mut x, src(t), &res, cfg.reltol, cfg.abstol, cfg.max_newton, None, &mut w)
                .map_err(|e| self.fail(e, t))?;
            stats.newton_iterations += it;
            stats.max_residual = stats.max_residual.max(r);
            q1.copy_from_slice(&w.ev.q);
            for i in 0..n {
                qdot0[i] = if trap { a * (q1[i] - q0[i]) - qdot0[i] } else { a * (q1[i] - q0[i]) };
            }
            std::mem::swap(&mut q0, &mut q1);
            time.push(t);
            record(&x, &mut traces);
        }
        stats.source_ramped = ramp;
        Ok(Waveforms {
            time,
            names: self.names.clone(),
            traces,
            outputs: self.net.outputs.clone(),
            core_supply: self.net.core_supply.clone(),
            aux_supply: self.net.aux_supply.clone(),
            stats,
        })
    }
}

/// Fixed-step transient analysis.
///
/// A failure on the very first step is retried once from the zero state
/// with all sources ramped over `cfg.source_ramp`.
pub fn transient(net: &Netlist, cfg: &SimConfig) -> Result<Waveforms> {
    net.validate()?;
    cfg.validate()?;
    let sys = System::new(net);
    match sys.run(cfg, false) {
        Err(Error::StepFailure { time, .. }) if time <= cfg.step => sys.run(cfg, true),
        other => other,
    }
}

/// DC operating point as (unknown name, value) pairs.
pub fn operating_point(net: &Netlist) -> Result<Vec<(String, f64)>> {
    net.validate()?;
    let sys = System::new(net);
    let cfg = SimConfig::default();
    let mut w = Work::new(sys.n);
    let x = sys.operating_point(&cfg, &mut w)?;
    Ok(sys.names.iter().cloned().zip(x).collect())
}

/// Peak-to-peak swing below which an output counts as quiet (V).
pub const AMPLITUDE_FLOOR: f64 = 1e-6;
/// Relative pp spread that counts as settled over `STEADY_CYCLES` cycles.
pub const STEADY_TOL: f64 = 1e-3;
pub const STEADY_CYCLES: usize = 5;
/// Most cycles used for the spectral measurement window.
pub const WINDOW_CYCLES: usize = 50;
/// Phases of V_o2, V_o3, V_o4 relative to V_o1 for the intended rotation.
pub const EXPECTED_PHASES_DEG: [f64; 3] = [180.0, 270.0, 90.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMetric {
    pub name: String,
    /// Peak-to-peak swing over the measurement window (V).
    pub amplitude_pp: f64,
    /// Fundamental phase relative to the first output, in [0, 360).
    pub phase_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub oscillating: bool,
    pub f_osc: Option<f64>,
    pub outputs: Vec<OutputMetric>,
    /// Largest pairwise peak-to-peak difference among outputs (V).
    pub delta_v_out: f64,
    pub startup_time: Option<f64>,
    pub power_core_mw: Option<f64>,
    pub power_aux_mw: Option<f64>,
    /// Slope of ln(pp) against time on the first output (1/s).
    pub envelope_growth: f64,
    pub steady_state: bool,
    /// Full cycles of the first output found in the record.
    pub cycles: usize,
}

impl SimMetrics {
    pub fn phases_deg(&self) -> Vec<f64> {
        self.outputs.iter().skip(1).filter_map(|o| o.phase_deg).collect()
    }

    /// Core plus auxiliary power (mW).
    pub fn power_total_mw(&self) -> Option<f64> {
        match (self.power_core_mw, self.power_aux_mw) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
        }
    }
}

fn wrap_deg(d: f64) -> f64 {
    let w = d.rem_euclid(360.0);
    if w >= 360.0 { 0.0 } else { w }
}

fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = wrap_deg(a - b);
    d.min(360.0 - d)
}

/// Worst deviation of the sorted phases from {90, 180, 270}. `None` unless
/// there are exactly four oscillating outputs.
pub fn quadrature_error_deg(m: &SimMetrics) -> Option<f64> {
    let mut p = m.phases_deg();
    if !m.oscillating || p.len() != 3 {
        return None;
    }
    p.sort_by(f64::total_cmp);
    Some(p.iter().zip([90.0, 180.0, 270.0]).map(|(a, b)| angle_diff_deg(*a, b)).fold(0.0, f64::max))
}

/// Worst deviation from the intended output sequence `EXPECTED_PHASES_DEG`.
pub fn sequence_error_deg(m: &SimMetrics) -> Option<f64> {
    let p = m.phases_deg();
    if !m.oscillating || p.len() != 3 {
        return None;
    }
    Some(p.iter().zip(EXPECTED_PHASES_DEG).map(|(a, b)| angle_diff_deg(*a, b)).fold(0.0, f64::max))
}

/// Both the four-phase set and its rotation sense hold within `tol_deg`.
pub fn quadrature_locked(m: &SimMetrics, tol_deg: f64) -> bool {
    matches!(sequence_error_deg(m), Some(e) if e <= tol_deg)
}

/// Rising crossings of `v` through `level`, linearly interpolated.
fn rising_crossings(t: &[f64], v: &[f64], level: f64) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    for k in 1..v.len() {
        let (a, b) = (v[k - 1] - level, v[k] - level);
        if a < 0.0 && b >= 0.0 {
            let frac = -a / (b - a);
            out.push((t[k - 1] + frac * (t[k] - t[k - 1]), k));
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
}

fn span(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
    if v.is_empty() { 0.0 } else { hi - lo }
}

/// Hann-windowed DTFT of `v` at frequency `f` (mean removed).
fn dtft(t: &[f64], v: &[f64], f: f64) -> Complex64 {
    let n = v.len();
    let m = mean(v);
    let t0 = t[0];
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1).max(1) as f64).cos();
        let ph = -2.0 * PI * f * (t[k] - t0);
        acc += Complex64::from_polar(w * (v[k] - m), ph);
    }
    acc
}

/// Frequency of the largest windowed DTFT magnitude in `[lo, hi]`.
fn refine_peak(t: &[f64], v: &[f64], lo: f64, hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = dtft(t, v, c).norm();
    let mut fd = dtft(t, v, d).norm();
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dtft(t, v, c).norm();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dtft(t, v, d).norm();
        }
    }
    0.5 * (a + b)
}

/// Frequency, phases, swings, startup and power from a transient record.
///
/// The first output is the reference. A record whose final cycle swing has
/// fallen below half its largest, or that never completes three cycles,
/// is reported as not oscillating.
pub fn measure_metrics(w: &Waveforms, v_dd: f64) -> Result<SimMetrics> {
    if !(v_dd > 0.0 && v_dd.is_finite()) {
        return Err(Error::Domain(format!("v_dd must be positive, got {v_dd}")));
    }
    if w.outputs.is_empty() {
        return Err(Error::Domain("waveforms have no outputs".into()));
    }
    let traces: Vec<&[f64]> = w
        .outputs
        .iter()
        .map(|o| w.trace(o).ok_or_else(|| Error::Domain(format!("missing output trace '{o}'"))))
        .collect::<Result<_>>()?;
    let t = &w.time;
    let v = traces[0];
    let n = t.len();

    let level = mean(&v[n / 2..]);
    let xs = rising_crossings(t, v, level);
    let cycles = xs.len().saturating_sub(1);
    let pp: Vec<f64> = xs.windows(2).map(|c| span(&v[c[0].1..c[1].1])).collect();
    let mids: Vec<f64> = xs.windows(2).map(|c| 0.5 * (c[0].0 + c[1].0)).collect();

    let envelope_growth = {
        let pts: Vec<(f64, f64)> = mids.iter().zip(&pp).filter(|(_, p)| **p > 0.0).map(|(m, p)| (*m, p.ln())).collect();
        if pts.len() < 2 {
            0.0
        } else {
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            if sxx > 0.0 { sxy / sxx } else { 0.0 }
        }
    };

    let settled = |k: usize| {
        let s = &pp[k..k + STEADY_CYCLES];
        let hi = s.iter().cloned().fold(0.0, f64::max);
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo <= STEADY_TOL * hi
    };
    let steady_state = cycles >= STEADY_CYCLES && settled(cycles - STEADY_CYCLES);
    let max_pp = pp.iter().cloned().fold(0.0, f64::max);
    let last_pp = pp.last().copied().unwrap_or(0.0);
    let oscillating = cycles >= 3 && last_pp > AMPLITUDE_FLOOR && last_pp > 0.5 * max_pp;

    let quiet = |name: &String, tr: &[f64]| OutputMetric {
        name: name.clone(),
        amplitude_pp: span(&tr[n / 2..]),
        phase_deg: None,
    };
    if !oscillating {
        let outputs: Vec<OutputMetric> = w.outputs.iter().zip(&traces).map(|(nm, tr)| quiet(nm, tr)).collect();
        let delta_v_out = span(&outputs.iter().map(|o| o.amplitude_pp).collect::<Vec<_>>());
        return Ok(SimMetrics {
            oscillating,
            f_osc: None,
            outputs,
            delta_v_out,
            startup_time: None,
            power_core_mw: None,
            power_aux_mw: None,
            envelope_growth,
            steady_state: false,
            cycles,
        });
    }

    // Measurement window: whole cycles after the envelope settles, or the
    // second half of the record when it never does.
    let onset = (0..cycles.saturating_sub(STEADY_CYCLES - 1))
        .rev()
        .take_while(|&k| k + STEADY_CYCLES <= cycles && settled(k))
        .last()
        .unwrap_or(cycles / 2);
    let m = (cycles - onset).clamp(1, WINDOW_CYCLES);
    let (t_start, i0) = xs[cycles - m];
    let (t_end, i1) = xs[cycles];
    let f_coarse = m as f64 / (t_end - t_start);
    let tw = &t[i0..i1];
    let bin = 1.0 / (tw[tw.len() - 1] - tw[0]);
    let f_osc = refine_peak(tw, &v[i0..i1], f_coarse - 0.5 * bin, f_coarse + 0.5 * bin);

    let ref_phase = dtft(tw, &v[i0..i1], f_osc).arg();
    let outputs: Vec<OutputMetric> = w
        .outputs
        .iter()
        .zip(&traces)
        .enumerate()
        .map(|(k, (name, tr))| {
            let seg = &tr[i0..i1];
            let phase = if k == 0 { 0.0 } else { wrap_deg((dtft(tw, seg, f_osc).arg() - ref_phase).to_degrees()) };
            OutputMetric { name: name.clone(), amplitude_pp: span(seg), phase_deg: Some(phase) }
        })
        .collect();
    let delta_v_out = span(&outputs.iter().map(|o| o.amplitude_pp).collect::<Vec<_>>());

    let steady_pp = mean(&pp[cycles - m..]);
    let startup_time = pp.iter().position(|p| *p >= 0.9 * steady_pp).map(|k| mids[k]);

    let power = |src: &Option<String>| {
        src.as_ref().and_then(|s| w.supply_current(s)).map(|i| v_dd * mean(&i[i0..i1]) * 1e3)
    };
    Ok(SimMetrics {
        oscillating,
        f_osc: Some(f_osc),
        outputs,
        delta_v_out,
        startup_time,
        power_core_mw: power(&w.core_supply),
        power_aux_mw: power(&w.aux_supply),
        envelope_growth,
        steady_state,
        cycles,
    })
}

/// Leeson estimate `10 log10(F kT/(2P) (f0/(2 Q df))^2)` in dBc/Hz, with
/// `f0` and `Q` taken from the tank.
pub fn phase_noise_leeson(t: &TankParams, p_sig_mw: f64, delta_f: f64, f_excess_db: f64) -> Result<f64> {
    t.validate()?;
    for (name, v) in [("signal power", p_sig_mw), ("offset", delta_f)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(f_excess_db >= 0.0 && f_excess_db.is_finite()) {
        return Err(Error::Domain(format!("excess noise must be >= 0 dB, got {f_excess_db}")));
    }
    let (omega0, q) = tank_resonance_and_q(t);
    let f0 = omega0 / (2.0 * PI);
    let f = 10f64.powf(f_excess_db / 10.0);
    let p = p_sig_mw * 1e-3;
    Ok(10.0 * (f * BOLTZMANN * T_REF / (2.0 * p) * (f0 / (2.0 * q * delta_f)).powi(2)).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_models::flipped_dots;

    fn rc_net() -> Netlist {
        let mut n = Netlist::new();
        n.add_vsource("vs", "in", "0", 1.0).unwrap();
        n.add_resistor("R1", "in", "out", 1e3).unwrap();
        n.add_capacitor("C1", "out", "0", 1e-9).unwrap();
        n
    }

    fn quiet(step: f64, stop: f64) -> SimConfig {
        SimConfig { step, stop, perturbation: 0.0, initial: InitialState::Zero, ..SimConfig::default() }
    }

    /// Max and RMS error of the RC charging curve against `1 - exp(-t/tau)`.
    fn rc_error(points_per_tau: f64) -> (f64, f64) {
        let tau = 1e-6;
        let w = transient(&rc_net(), &quiet(tau / points_per_tau, 5.0 * tau)).unwrap();
        let v = w.trace("out").unwrap();
        let errs: Vec<f64> = w.time.iter().zip(v).map(|(t, v)| v - (1.0 - (-t / tau).exp())).collect();
        let max = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
        (max, rms)
    }

    #[test]
    fn rc_step_matches_exponential() {
        let (_, rms) = rc_error(200.0);
        assert!(rms < 1e-3, "rms {rms}");
    }

    #[test]
    fn rc_error_is_second_order() {
        let (e1, _) = rc_error(50.0);
        let (e2, _) = rc_error(100.0);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lossless_lc_keeps_its_amplitude() {
        let (l, c) = (1e-9f64, 1e-12f64);
        let period = 2.0 * PI * (l * c).sqrt();
        let mut n = Netlist::new();
        n.add_inductor("L1", "a", "0", l, 0.0).unwrap();
        n.add_capacitor("C1", "a", "0", c).unwrap();
        n.seeds.push(("a".into(), 1.0));
        let w = transient(&n, &quiet(period / 200.0, 100.0 * period)).unwrap();
        let v = w.trace("a").unwrap();
        let per = 200;
        let first = span(&v[..per]);
        let last = span(&v[v.len() - per..]);
        assert!((last / first - 1.0).abs() < 1e-4, "first {first} last {last}");
    }

    #[test]
    fn accepted_steps_satisfy_kcl() {
        let w = transient(&rc_net(), &quiet(5e-9, 2e-6)).unwrap();
        assert!(w.stats.max_residual < 1e-9, "{:?}", w.stats);
        assert!(!w.stats.source_ramped);
    }

    #[test]
    fn parallel_sources_are_singular() {
        let mut n = Netlist::new();
        n.add_vsource("v1", "a", "0", 1.0).unwrap();
        n.add_vsource("v2", "a", "0", 2.0).unwrap();
        n.add_resistor("R1", "a", "0", 1e3).unwrap();
        match transient(&n, &quiet(1e-9, 1e-8)) {
            Err(Error::SingularMatrix { unknown }) => assert!(unknown.starts_with("I(v"), "{unknown}"),
            other => panic!("expected a singular matrix, got {other:?}"),
        }
    }

    #[test]
    fn newton_starvation_reports_the_failing_time() {
        let net = build_netlist(Topology::CrVco, &OscillatorParams::default()).unwrap();
        let cfg = SimConfig { max_newton: 1, stop: 1e-9, ..SimConfig::default() };
        match transient(&net, &cfg) {
            Err(Error::StepFailure { time, residual }) => {
                assert!(time >= 0.0 && time <= cfg.stop);
                assert!(residual > 0.0);
            }
            other => panic!("expected a step failure, got {other:?}"),
        }
    }

    #[test]
    fn netlist_rejects_bad_input() {
        let mut n = rc_net();
        assert!(n.add_resistor("R1", "in", "0", 1.0).is_err());
        n.add_resistor("Rneg", "in", "0", -1.0).unwrap();
        assert!(n.validate().is_err());

        let mut n = rc_net();
        n.outputs.push("nowhere".into());
        assert!(n.validate().is_err());

        let mut n = rc_net();
        n.add_coupled("K1", &[("in", "0"), ("out", "0")], vec![vec![1e-9, 2e-9], vec![2e-9, 1e-9]], vec![0.0, 0.0])
            .unwrap();
        assert!(n.validate().is_err(), "coupling above unity must be rejected");
    }

    #[test]
    fn tc_qvco_structure_is_frozen() {
        let n = build_netlist(Topology::TcQvco, &OscillatorParams::default()).unwrap();
        let count = |tag: &str| n.elements().iter().filter(|e| e.kind.tag() == tag).count();
        assert_eq!(n.node_names().len(), 27);
        assert_eq!(n.elements().len(), 52);
        assert_eq!(n.unknown_names().len(), 34);
        assert_eq!((count("K"), count("M"), count("VAR"), count("SW")), (2, 12, 4, 4));
        assert_eq!((count("C"), count("R"), count("V")), (24, 4, 2));
        assert_eq!(n.outputs, ["V_o1", "V_o2", "V_o3", "V_o4"]);
        let again = build_netlist(Topology::TcQvco, &OscillatorParams::default()).unwrap();
        assert_eq!(n.dump(), again.dump());
    }

    /// Element descriptions with node names passed through `map`, terminal
    /// order and winding direction ignored.
    fn signature(n: &Netlist, map: &dyn Fn(&str) -> String) -> Vec<String> {
        let names = n.node_names();
        let nm = |i: usize| map(&names[i]);
        let pair = |a: usize, b: usize| {
            let mut v = [nm(a), nm(b)];
            v.sort();
            v.join("|")
        };
        let mut out: Vec<String> = n
            .elements()
            .iter()
            .map(|e| match &e.kind {
                ElementKind::CoupledInductors { coils, l, r } => {
                    let c: Vec<String> = coils.iter().map(|&(a, b)| pair(a, b)).collect();
                    let mags: Vec<String> = l.iter().flatten().map(|v| format!("{:e}", v.abs())).collect();
                    format!("K {} {} {:?}", c.join(" "), mags.join(","), r)
                }
                ElementKind::Mos { d, g, s, params } => {
                    format!("M {} {} {} {:?} {} {}", nm(*d), nm(*g), nm(*s), params.polarity, params.k, params.vth)
                }
                k => {
                    let nodes = k.nodes();
                    format!("{} {}", k.tag(), pair(nodes[0], nodes[1]))
                }
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn swapping_cores_gives_an_isomorphic_netlist() {
        let n = build_netlist(Topology::TcQvco, &OscillatorParams::default()).unwrap();
        let swap = |s: &str| -> String {
            let pairs = [
                ("V_o1", "V_o3"),
                ("V_o2", "V_o4"),
                ("sn_a", "sn_b"),
                ("sp_a", "sp_b"),
                ("buf1_in", "buf3_in"),
                ("buf1_out", "buf3_out"),
                ("buf2_in", "buf4_in"),
                ("buf2_out", "buf4_out"),
            ];
            for (a, b) in pairs {
                if s == a {
                    return b.into();
                }
                if s == b {
                    return a.into();
                }
            }
            if let Some(rest) = s.strip_prefix("arra") {
                return format!("arrb{rest}");
            }
            if let Some(rest) = s.strip_prefix("arrb") {
                return format!("arra{rest}");
            }
            s.into()
        };
        assert_eq!(signature(&n, &|s| s.to_string()), signature(&n, &swap));
    }

    #[test]
    fn every_topology_builds_and_validates() {
        for t in Topology::ALL {
            let n = build_netlist(t, &OscillatorParams::default()).unwrap();
            assert!(n.core_supply.is_some());
            assert_eq!(t.tag().parse::<Topology>().unwrap(), t);
        }
        assert!("xyz".parse::<Topology>().is_err());
        let bad = OscillatorParams { v_dd: 0.0, ..OscillatorParams::default() };
        assert!(build_netlist(Topology::CrVco, &bad).is_err());
    }

    #[test]
    fn passive_lc_tank_decays() {
        let p = OscillatorParams { active: false, ..OscillatorParams::default() };
        let n = build_netlist(Topology::LcVco, &p).unwrap();
        let w = transient(&n, &SimConfig { stop: 30e-9, ..SimConfig::default() }).unwrap();
        let m = measure_metrics(&w, p.v_dd).unwrap();
        assert!(!m.oscillating);
        assert!(m.envelope_growth < 0.0);
        assert!(m.f_osc.is_none());
    }

    #[test]
    fn symmetric_core_without_perturbation_stays_put() {
        let p = OscillatorParams { buffer: None, ..OscillatorParams::default() };
        let n = build_netlist(Topology::TcQvco, &p).unwrap();
        let cfg = SimConfig { stop: 40e-9, perturbation: 0.0, ..SimConfig::default() };
        let w = transient(&n, &cfg).unwrap();
        for o in &n.outputs {
            assert!(span(w.trace(o).unwrap()) < 1e-9, "{o} moved");
        }
        let kicked = transient(&n, &SimConfig { perturbation: 1e-3, ..cfg }).unwrap();
        assert!(span(kicked.trace("V_o1").unwrap()) > 1e-3);
    }

    #[test]
    fn flipped_dots_change_the_transformer_signs() {
        let p = OscillatorParams { dots: flipped_dots(&DEFAULT_DOTS), ..OscillatorParams::default() };
        let a = build_netlist(Topology::TcQvco, &p).unwrap();
        let b = build_netlist(Topology::TcQvco, &OscillatorParams::default()).unwrap();
        assert_ne!(a.dump(), b.dump());
    }

    fn four_phase(freq: f64, amps: [f64; 4], phases_deg: [f64; 4], cycles: usize) -> Waveforms {
        let per = 200;
        let n = cycles * per + 1;
        let time: Vec<f64> = (0..n).map(|k| k as f64 / (per as f64 * freq)).collect();
        let traces = (0..4)
            .map(|i| {
                let ph = phases_deg[i].to_radians();
                let v = time.iter().map(|t| 0.35 + 0.5 * amps[i] * (2.0 * PI * freq * t + ph + 0.3).cos()).collect();
                (format!("V_o{}", i + 1), v)
            })
            .collect();
        Waveforms::from_traces(time, traces).unwrap()
    }

    #[test]
    fn synthetic_quadrature_is_recovered() {
        let w = four_phase(2.5e9, [0.35; 4], [0.0, 180.0, 270.0, 90.0], 60);
        let m = measure_metrics(&w, 0.7).unwrap();
        assert!(m.oscillating && m.steady_state);
        assert!((m.f_osc.unwrap() / 2.5e9 - 1.0).abs() < 1e-6, "{:?}", m.f_osc);
        for (got, want) in m.phases_deg().iter().zip(EXPECTED_PHASES_DEG) {
            assert!(angle_diff_deg(*got, want) < 0.1, "{got} vs {want}");
        }
        assert!(quadrature_locked(&m, 0.1));
        assert!(m.power_core_mw.is_none());
    }

    #[test]
    fn reversed_rotation_is_not_locked() {
        let w = four_phase(2.5e9, [0.35; 4], [0.0, 180.0, 90.0, 270.0], 60);
        let m = measure_metrics(&w, 0.7).unwrap();
        assert!(quadrature_error_deg(&m).unwrap() < 0.1);
        assert!(sequence_error_deg(&m).unwrap() > 179.0);
        assert!(!quadrature_locked(&m, 2.0));
    }

    #[test]
    fn amplitude_imbalance_is_the_largest_pairwise_gap() {
        let w = four_phase(2.5e9, [0.350, 0.340, 0.331, 0.345], [0.0, 180.0, 270.0, 90.0], 60);
        let m = measure_metrics(&w, 0.7).unwrap();
        assert!((m.delta_v_out - 0.019).abs() < 1e-4, "{}", m.delta_v_out);
        assert!(m.delta_v_out >= 0.0);
    }

    #[test]
    fn decaying_waveform_is_not_oscillating() {
        let f = 2.5e9;
        let time: Vec<f64> = (0..12001).map(|k| k as f64 / (200.0 * f)).collect();
        let v: Vec<f64> = time.iter().map(|t| (-t / 5e-9).exp() * (2.0 * PI * f * t).sin()).collect();
        let w = Waveforms::from_traces(time, vec![("V_o1".into(), v)]).unwrap();
        let m = measure_metrics(&w, 0.7).unwrap();
        assert!(!m.oscillating);
        assert!((m.envelope_growth * 5e-9 + 1.0).abs() < 0.05, "{}", m.envelope_growth);
    }

    #[test]
    fn startup_is_where_the_envelope_reaches_ninety_percent() {
        let f = 2.5e9;
        let tau = 5e-9;
        let time: Vec<f64> = (0..40001).map(|k| k as f64 / (200.0 * f)).collect();
        let v: Vec<f64> = time.iter().map(|t| (1.0 - (-t / tau).exp()) * (2.0 * PI * f * t).sin()).collect();
        let w = Waveforms::from_traces(time, vec![("V_o1".into(), v)]).unwrap();
        let m = measure_metrics(&w, 0.7).unwrap();
        let expect = tau * 10f64.ln();
        // resolved to one cycle
        assert!((m.startup_time.unwrap() - expect).abs() < 1.0 / f, "{:?} vs {expect}", m.startup_time);
    }

    #[test]
    fn metrics_need_outputs_and_supply() {
        let w = Waveforms::from_traces(vec![0.0, 1.0], vec![("x".into(), vec![0.0, 1.0])]).unwrap();
        assert!(measure_metrics(&w, 0.7).is_err());
        assert!(Waveforms::from_traces(vec![0.0, 0.0], vec![]).is_err());
        let w = four_phase(2.5e9, [0.35; 4], [0.0; 4], 10);
        assert!(measure_metrics(&w, 0.0).is_err());
    }

    #[test]
    fn csv_is_full_precision_and_headed() {
        let w = four_phase(2.5e9, [0.35; 4], [0.0, 180.0, 270.0, 90.0], 1);
        let csv = w.outputs_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "time_s,V_o1,V_o2,V_o3,V_o4");
        let row: Vec<f64> = lines.nth(7).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row[0], w.time[7]);
        assert_eq!(row[1], w.trace("V_o1").unwrap()[7]);
        assert!(w.to_csv(&["nope".into()]).is_err());
    }

    fn tank() -> TankParams {
        TankParams::new(800.0, 4.6e-12, 3e-9, 0.52, 2.74).unwrap()
    }

    #[test]
    fn leeson_follows_q_squared_and_offset_squared() {
        let t = tank();
        let base = phase_noise_leeson(&t, 1.5, 1e6, 0.0).unwrap();
        let double_q = TankParams { r: 2.0 * t.r, ..t };
        let lower = phase_noise_leeson(&double_q, 1.5, 1e6, 0.0).unwrap();
        assert!((base - lower - 20.0 * 2f64.log10()).abs() < 1e-9);
        let far = phase_noise_leeson(&t, 1.5, 1e7, 0.0).unwrap();
        assert!((base - far - 20.0).abs() < 1e-9);
        let noisy = phase_noise_leeson(&t, 1.5, 1e6, 3.0).unwrap();
        assert!((noisy - base - 3.0).abs() < 1e-9);
    }

    #[test]
    fn leeson_rejects_bad_inputs() {
        let t = tank();
        assert!(phase_noise_leeson(&t, 0.0, 1e6, 0.0).is_err());
        assert!(phase_noise_leeson(&t, 1.0, -1.0, 0.0).is_err());
        assert!(phase_noise_leeson(&t, 1.0, 1e6, -1.0).is_err());
        assert!(phase_noise_leeson(&TankParams { r: 0.0, ..t }, 1.0, 1e6, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { step: 0.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { stop: 1e-15, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { max_newton: 0, ..SimConfig::default() }.validate().is_err());
        let c = SimConfig::for_frequency(2e9, 100.0, 1e-8);
        assert_eq!(c.steps(), 2000);
    }
}
