//! Lumped models of 3-coil TSV transformers from partial inductances.
//!
//! Every coil is discretized into straight segments: round TSVs plus
//! rectangular metal traces. Inductance is the sum of partial self terms and
//! signed partial mutual terms; resistance comes from a one-skin-depth shell
//! model. Lengths are in µm throughout the geometry types.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{MU0_OVER_4PI, MU_0, UM};
use crate::{Error, Result};

/// Copper resistivity (Ω·m).
pub const COPPER_RESISTIVITY: f64 = 1.68e-8;

/// Default evaluation frequency for AC resistance (Hz).
pub const DEFAULT_EVAL_FREQUENCY: f64 = 2.5e9;

const CONNECT_TOL: f64 = 1e-9;
const GEOM_EPS: f64 = 1e-9;

/// Process stack of one tier. Lengths in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub substrate_tier_height: f64,
    pub tsv_diameter: f64,
    pub liner_thickness: f64,
    /// Minimum edge-to-edge spacing between TSVs.
    pub min_tsv_pitch: f64,
    pub m7_thickness: f64,
    pub m8_thickness: f64,
    pub m9_thickness: f64,
    pub m7_width: f64,
    pub m8_width: f64,
    pub m9_width: f64,
    pub via_m9m8: f64,
    pub via_m8m7: f64,
    /// Ω·m
    pub conductor_resistivity: f64,
    /// S/m; kept for completeness, substrate loss is not modeled.
    pub substrate_conductivity: f64,
}

impl ProcessParams {
    /// 60 µm tier, 20 µm TSVs and the 7/7/2 µm top metals of the reference process.
    pub fn reference() -> Self {
        Self {
            substrate_tier_height: 60.0,
            tsv_diameter: 20.0,
            liner_thickness: 0.5,
            min_tsv_pitch: 5.0,
            m7_thickness: 2.0,
            m8_thickness: 7.0,
            m9_thickness: 7.0,
            m7_width: 24.0,
            m8_width: 24.0,
            m9_width: 24.0,
            via_m9m8: 5.0,
            via_m8m7: 3.0,
            conductor_resistivity: COPPER_RESISTIVITY,
            substrate_conductivity: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("substrate_tier_height", self.substrate_tier_height),
            ("tsv_diameter", self.tsv_diameter),
            ("liner_thickness", self.liner_thickness),
            ("min_tsv_pitch", self.min_tsv_pitch),
            ("m7_thickness", self.m7_thickness),
            ("m8_thickness", self.m8_thickness),
            ("m9_thickness", self.m9_thickness),
            ("m7_width", self.m7_width),
            ("m8_width", self.m8_width),
            ("m9_width", self.m9_width),
            ("via_m9m8", self.via_m9m8),
            ("via_m8m7", self.via_m8m7),
            ("conductor_resistivity", self.conductor_resistivity),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.substrate_conductivity >= 0.0) {
            return Err(Error::InvalidGeometry("substrate_conductivity must be >= 0".into()));
        }
        if self.tsv_diameter <= 2.0 * self.liner_thickness {
            return Err(Error::InvalidGeometry(
                "tsv_diameter must exceed twice the liner thickness".into(),
            ));
        }
        Ok(())
    }

    /// Copper radius of a TSV; the liner surrounds the stated diameter.
    pub fn tsv_radius(&self) -> f64 {
        0.5 * self.tsv_diameter
    }

    /// Smallest allowed center-to-center TSV distance.
    pub fn min_center_pitch(&self) -> f64 {
        self.tsv_diameter + self.min_tsv_pitch
    }

    fn metal(&self, layer: Layer) -> (f64, f64) {
        match layer {
            Layer::M7 | Layer::B7 => (self.m7_width, self.m7_thickness),
            Layer::M8 | Layer::B8 => (self.m8_width, self.m8_thickness),
            Layer::M9 | Layer::B9 => (self.m9_width, self.m9_thickness),
        }
    }

    /// Center height of a metal layer. The top stack sits on the substrate
    /// with M7 nearest; the bottom stack mirrors the tier below, M9 nearest.
    fn z(&self, layer: Layer) -> f64 {
        let h = self.substrate_tier_height;
        let (t7, t8, t9) = (self.m7_thickness, self.m8_thickness, self.m9_thickness);
        let (v87, v98) = (self.via_m8m7, self.via_m9m8);
        match layer {
            Layer::M7 => h + t7 / 2.0,
            Layer::M8 => h + t7 + v87 + t8 / 2.0,
            Layer::M9 => h + t7 + v87 + t8 + v98 + t9 / 2.0,
            Layer::B9 => -t9 / 2.0,
            Layer::B8 => -(t9 + v98 + t8 / 2.0),
            Layer::B7 => -(t9 + v98 + t8 + v87 + t7 / 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layer {
    M7,
    M8,
    M9,
    B9,
    B8,
    B7,
}

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum CrossSection {
    Round { radius: f64 },
    Rectangular { width: f64, thickness: f64 },
}

impl CrossSection {
    fn area_um2(&self) -> f64 {
        match *self {
            CrossSection::Round { radius } => PI * radius * radius,
            CrossSection::Rectangular { width, thickness } => width * thickness,
        }
    }

    fn largest_dimension(&self) -> f64 {
        match *self {
            CrossSection::Round { radius } => radius,
            CrossSection::Rectangular { width, thickness } => width.max(thickness),
        }
    }

    /// Geometric mean distance of the cross-section from itself (µm).
    fn gmd(&self) -> f64 {
        match *self {
            CrossSection::Round { radius } => radius * (-0.25f64).exp(),
            CrossSection::Rectangular { width, thickness } => 0.2235 * (width + thickness),
        }
    }

    /// Conducting area when current is confined to one skin depth (µm²).
    fn skin_area_um2(&self, delta: f64) -> f64 {
        match *self {
            CrossSection::Round { radius } => {
                if delta >= radius {
                    PI * radius * radius
                } else {
                    let inner = radius - delta;
                    PI * (radius * radius - inner * inner)
                }
            }
            CrossSection::Rectangular { width, thickness } => {
                if 2.0 * delta >= width.min(thickness) {
                    width * thickness
                } else {
                    width * thickness - (width - 2.0 * delta) * (thickness - 2.0 * delta)
                }
            }
        }
    }
}

/// Straight conductor piece. Coordinates in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Point3,
    pub end: Point3,
    pub cross_section: CrossSection,
    /// Ω·m
    pub resistivity: f64,
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

impl Segment {
    pub fn new(start: Point3, end: Point3, cross_section: CrossSection, resistivity: f64) -> Self {
        Self { start, end, cross_section, resistivity }
    }

    pub fn round(start: Point3, end: Point3, radius: f64) -> Self {
        Self::new(start, end, CrossSection::Round { radius }, COPPER_RESISTIVITY)
    }

    pub fn rect(start: Point3, end: Point3, width: f64, thickness: f64) -> Self {
        Self::new(start, end, CrossSection::Rectangular { width, thickness }, COPPER_RESISTIVITY)
    }

    pub fn length(&self) -> f64 {
        norm(sub(self.end, self.start))
    }

    pub fn direction(&self) -> Point3 {
        let d = sub(self.end, self.start);
        scale(d, 1.0 / norm(d))
    }

    pub fn reversed(&self) -> Self {
        Self { start: self.end, end: self.start, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length() > GEOM_EPS) {
            return Err(Error::InvalidGeometry(format!(
                "segment {:?} -> {:?} has zero length",
                self.start, self.end
            )));
        }
        let dims_ok = match self.cross_section {
            CrossSection::Round { radius } => radius > 0.0,
            CrossSection::Rectangular { width, thickness } => width > 0.0 && thickness > 0.0,
        };
        if !dims_ok {
            return Err(Error::InvalidGeometry("cross-section dimensions must be positive".into()));
        }
        if !(self.resistivity > 0.0) {
            return Err(Error::InvalidGeometry("resistivity must be positive".into()));
        }
        Ok(())
    }

    /// Split into `n` equal collinear pieces.
    pub fn subdivide(&self, n: usize) -> Vec<Segment> {
        let d = sub(self.end, self.start);
        (0..n)
            .map(|i| {
                let a = i as f64 / n as f64;
                let b = (i + 1) as f64 / n as f64;
                let p = |t: f64| [self.start[0] + d[0] * t, self.start[1] + d[1] * t, self.start[2] + d[2] * t];
                Segment { start: p(a), end: if i + 1 == n { self.end } else { p(b) }, ..*self }
            })
            .collect()
    }
}

/// Rosa (round) or Grover (rectangular) partial self inductance (H).
///
/// Requires the segment to be at least twice as long as its largest
/// cross-section dimension.
pub fn partial_self_inductance(seg: &Segment) -> Result<f64> {
    seg.validate()?;
    let l = seg.length();
    let dim = seg.cross_section.largest_dimension();
    if l < 2.0 * dim {
        return Err(Error::InvalidGeometry(format!(
            "segment length {l} µm is below twice its cross-section dimension {dim} µm"
        )));
    }
    Ok(long_self(seg))
}

fn long_self(seg: &Segment) -> f64 {
    let l = seg.length();
    let pref = MU_0 / (2.0 * PI) * l * UM;
    match seg.cross_section {
        CrossSection::Round { radius } => pref * ((2.0 * l / radius).ln() - 0.75),
        CrossSection::Rectangular { width, thickness } => {
            let wt = width + thickness;
            pref * ((2.0 * l / wt).ln() + 0.5 + 0.2235 * wt / l)
        }
    }
}

/// Self term valid for any aspect ratio: the closed forms for long pieces,
/// the filament-at-GMD form for short stubs.
fn segment_self(seg: &Segment) -> f64 {
    let l = seg.length();
    if l >= 2.0 * seg.cross_section.largest_dimension() {
        return long_self(seg);
    }
    let g = seg.cross_section.gmd();
    MU_0 / (2.0 * PI) * UM * (l * (l / g).asinh() - (l * l + g * g).sqrt() + g)
}

/// Antiderivative of the parallel-filament mutual kernel.
fn kernel(u: f64, d: f64) -> f64 {
    if d < GEOM_EPS {
        let a = u.abs();
        if a > 0.0 {
            a * a.ln()
        } else {
            0.0
        }
    } else {
        u * (u / d).asinh() - (u * u + d * d).sqrt()
    }
}

/// Mutual of `b` projected onto the axis of `a`.
fn projected_mutual(a: &Segment, b: &Segment) -> Result<f64> {
    let ua = a.direction();
    let ub = b.direction();
    let c = dot(ua, ub);
    if c.abs() < 1e-12 {
        return Ok(0.0);
    }
    let la = a.length();
    let lb_proj = b.length() * c;
    let s0 = dot(sub(b.start, a.start), ua);
    let s1 = s0 + lb_proj;
    let mid = [
        0.5 * (b.start[0] + b.end[0]),
        0.5 * (b.start[1] + b.end[1]),
        0.5 * (b.start[2] + b.end[2]),
    ];
    let v = sub(mid, a.start);
    let perp = sub(v, scale(ua, dot(v, ua)));
    let d = norm(perp);
    let (lo, hi) = if s0 <= s1 { (s0, s1) } else { (s1, s0) };
    if d < GEOM_EPS && la.min(hi) - lo.max(0.0) > GEOM_EPS {
        return Err(Error::InvalidGeometry(format!(
            "collinear conductors overlap: {:?}->{:?} and {:?}->{:?}",
            a.start, a.end, b.start, b.end
        )));
    }
    let m = kernel(hi, d) - kernel(lo, d) - kernel(hi - la, d) + kernel(lo - la, d);
    Ok(c.signum() * MU0_OVER_4PI * UM * m)
}

fn canonical_key(s: &Segment) -> [f64; 6] {
    [s.start[0], s.start[1], s.start[2], s.end[0], s.end[1], s.end[2]]
}

/// Mutual of two collinear pieces of one conductor that touch end to end,
/// taken as the part of the joined piece's self term not in either half.
/// This keeps the inductance of a straight run independent of how it is
/// segmented, including pieces short enough to use the stub self form.
fn abutting_mutual(a: &Segment, b: &Segment, c: f64) -> Option<f64> {
    if (c.abs() - 1.0).abs() >= 1e-12 || a.cross_section != b.cross_section {
        return None;
    }
    let touch = [(a.end, b.start), (a.end, b.end), (a.start, b.start), (a.start, b.end)]
        .iter()
        .find(|(x, y)| norm(sub(*x, *y)) < CONNECT_TOL)
        .copied()?;
    let ua = a.direction();
    // the far ends must lie on opposite sides of the shared point
    let far_a = if touch.0 == a.end { a.start } else { a.end };
    let far_b = if touch.1 == b.start { b.end } else { b.start };
    let off = sub(far_b, far_a);
    if norm(sub(off, scale(ua, dot(off, ua)))) >= GEOM_EPS || dot(sub(far_a, touch.0), sub(far_b, touch.0)) >= 0.0 {
        return None;
    }
    let joined = Segment { start: far_a, end: far_b, ..*a };
    let m = 0.5 * (segment_self(&joined) - segment_self(a) - segment_self(b));
    Some(c.signum() * m)
}

/// Partial mutual inductance between two segments (H).
///
/// Exact Grover filament result for parallel pieces, zero for perpendicular
/// ones, and the average of the two projections otherwise. The sign follows
/// the relative current direction.
pub fn mutual_partial_inductance(a: &Segment, b: &Segment) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    // Evaluate in a fixed order so that M(a, b) and M(b, a) are bit-identical.
    let (p, q) = if canonical_key(a).partial_cmp(&canonical_key(b)) == Some(std::cmp::Ordering::Greater) {
        (b, a)
    } else {
        (a, b)
    };
    let c = dot(p.direction(), q.direction());
    if let Some(m) = abutting_mutual(p, q, c) {
        Ok(m)
    } else if (c.abs() - 1.0).abs() < 1e-12 {
        projected_mutual(p, q)
    } else {
        Ok(0.5 * (projected_mutual(p, q)? + projected_mutual(q, p)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoilRole {
    Primary,
    Secondary1,
    Secondary2,
}

/// One winding as an ordered chain of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilGeometry {
    pub role: CoilRole,
    pub segments: Vec<Segment>,
}

impl CoilGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidGeometry(format!("{:?} coil has no segments", self.role)));
        }
        for s in &self.segments {
            s.validate()?;
        }
        for (i, w) in self.segments.windows(2).enumerate() {
            if norm(sub(w[1].start, w[0].end)) > CONNECT_TOL {
                return Err(Error::InvalidGeometry(format!(
                    "{:?} coil is disconnected between segments {i} and {}",
                    self.role,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Same path traversed backwards.
    pub fn reversed(&self) -> Self {
        Self { role: self.role, segments: self.segments.iter().rev().map(Segment::reversed).collect() }
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }
}

/// Inductance of one coil: partial self terms plus all signed mutual terms.
pub fn loop_inductance(coil: &CoilGeometry) -> Result<f64> {
    coil.validate()?;
    coil_pair_inductance(coil, coil)
}

fn coil_pair_inductance(a: &CoilGeometry, b: &CoilGeometry) -> Result<f64> {
    let same = std::ptr::eq(a, b);
    let mut total = 0.0;
    for (i, sa) in a.segments.iter().enumerate() {
        if same {
            total += segment_self(sa);
            for sb in &a.segments[i + 1..] {
                total += 2.0 * mutual_partial_inductance(sa, sb)?;
            }
        } else {
            for sb in &b.segments {
                total += mutual_partial_inductance(sa, sb)?;
            }
        }
    }
    Ok(total)
}

/// Skin depth `sqrt(rho / (pi f mu0))` in metres; infinite at DC.
pub fn skin_depth(resistivity: f64, f: f64) -> f64 {
    if f <= 0.0 {
        f64::INFINITY
    } else {
        (resistivity / (PI * f * MU_0)).sqrt()
    }
}

/// DC and AC series resistance of a coil (Ω).
pub fn coil_resistance(coil: &CoilGeometry, f: f64) -> Result<(f64, f64)> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::Domain(format!("frequency must be >= 0, got {f}")));
    }
    coil.validate()?;
    let mut r_dc = 0.0;
    let mut r_ac = 0.0;
    for s in &coil.segments {
        let l = s.length() * UM;
        r_dc += s.resistivity * l / (s.cross_section.area_um2() * UM * UM);
        let delta_um = skin_depth(s.resistivity, f) / UM;
        r_ac += s.resistivity * l / (s.cross_section.skin_area_um2(delta_um) * UM * UM);
    }
    Ok((r_dc, r_ac))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformerStyle {
    Toroidal,
    VerticalSpiral,
}

/// Parametrized transformer layout. Lengths in µm.
///
/// For the toroidal style `row_spacing` is the radial span between the inner
/// and outer TSV rows of each turn; for the vertical spiral it is the distance
/// between the primary line and each secondary line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerGeometry {
    pub style: TransformerStyle,
    pub turns_primary: usize,
    pub turns_secondary: usize,
    pub tsv_pitch: f64,
    pub row_spacing: f64,
    pub process: ProcessParams,
}

impl TransformerGeometry {
    /// Toroidal layout committed as the closest fit to the reference transformer.
    pub fn reference_toroidal() -> Self {
        Self {
            style: TransformerStyle::Toroidal,
            turns_primary: 9,
            turns_secondary: 2,
            tsv_pitch: 25.0,
            row_spacing: 120.0,
            process: ProcessParams::reference(),
        }
    }

    /// Vertical spiral with the same turn counts as [`Self::reference_toroidal`].
    pub fn reference_vertical_spiral() -> Self {
        Self {
            style: TransformerStyle::VerticalSpiral,
            turns_primary: 9,
            turns_secondary: 2,
            tsv_pitch: 60.0,
            row_spacing: 25.0,
            process: ProcessParams::reference(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        if self.turns_primary == 0 || self.turns_secondary == 0 {
            return Err(Error::InvalidGeometry("every coil needs at least one turn".into()));
        }
        let min = self.process.min_center_pitch();
        if !(self.tsv_pitch >= min) {
            return Err(Error::InvalidGeometry(format!(
                "tsv_pitch {} µm is below the minimum center pitch {min} µm",
                self.tsv_pitch
            )));
        }
        if !(self.row_spacing >= min) {
            return Err(Error::InvalidGeometry(format!(
                "row_spacing {} µm is below the minimum center pitch {min} µm",
                self.row_spacing
            )));
        }
        Ok(())
    }

    /// Generate the three coils: primary, secondary 1, secondary 2.
    pub fn coils(&self) -> Result<[CoilGeometry; 3]> {
        self.validate()?;
        let segs = match self.style {
            TransformerStyle::Toroidal => toroidal_coils(self),
            TransformerStyle::VerticalSpiral => vertical_spiral_coils(self),
        };
        let roles = [CoilRole::Primary, CoilRole::Secondary1, CoilRole::Secondary2];
        let mut out = roles.map(|role| CoilGeometry { role, segments: Vec::new() });
        for (coil, s) in out.iter_mut().zip(segs) {
            coil.segments = s;
            coil.validate()?;
        }
        Ok(out)
    }
}

/// Chain of Manhattan points joined by rectangular traces, skipping repeats.
fn trace(points: &[Point3], width: f64, thickness: f64, rho: f64) -> Vec<Segment> {
    let mut clean: Vec<Point3> = Vec::with_capacity(points.len());
    for &p in points {
        if clean.last().is_none_or(|&q| norm(sub(p, q)) > GEOM_EPS) {
            clean.push(p);
        }
    }
    clean
        .windows(2)
        .map(|w| Segment::new(w[0], w[1], CrossSection::Rectangular { width, thickness }, rho))
        .collect()
}

/// Slot sequence of the toroid: primary turns with the two secondaries'
/// turns spread evenly between them, alternating S1, S2.
pub fn toroid_slot_sequence(turns_primary: usize, turns_secondary: usize) -> Vec<CoilRole> {
    let secondaries: Vec<CoilRole> = (0..2 * turns_secondary)
        .map(|i| if i % 2 == 0 { CoilRole::Secondary1 } else { CoilRole::Secondary2 })
        .collect();
    let mut seq = Vec::with_capacity(turns_primary + secondaries.len());
    let mut placed = 0;
    for i in 0..turns_primary {
        seq.push(CoilRole::Primary);
        // round((i + 1) * 2 Ns / Np), half up
        let want = (2 * (i + 1) * secondaries.len() + turns_primary) / (2 * turns_primary);
        while placed < want {
            seq.push(secondaries[placed]);
            placed += 1;
        }
    }
    seq
}

fn coil_index(role: CoilRole) -> usize {
    match role {
        CoilRole::Primary => 0,
        CoilRole::Secondary1 => 1,
        CoilRole::Secondary2 => 2,
    }
}

/// Square-ring toroid. Slots sit along the four sides of an inner square;
/// each turn is a TSV pair spanning `row_spacing` outward, bridged by M9 on
/// top. Consecutive turns of a coil are joined on that coil's own bottom
/// layer by a route that leaves the outer TSV half a pitch sideways, drops to
/// the coil's route radius and follows it around the ring.
fn toroidal_coils(g: &TransformerGeometry) -> [Vec<Segment>; 3] {
    let pr = &g.process;
    let p = g.tsv_pitch;
    let s = g.row_spacing;
    let r = pr.tsv_radius();
    let rho = pr.conductor_resistivity;
    let seq = toroid_slot_sequence(g.turns_primary, g.turns_secondary);
    let nside = seq.len().div_ceil(4);
    let clearance = p;
    let a = 2.0 * clearance + (nside as f64 - 1.0) * p;

    // origin, tangent, outward normal per side
    let sides: [([f64; 2], [f64; 2], [f64; 2]); 4] = [
        ([0.0, 0.0], [1.0, 0.0], [0.0, -1.0]),
        ([a, 0.0], [0.0, 1.0], [1.0, 0.0]),
        ([a, a], [-1.0, 0.0], [0.0, 1.0]),
        ([0.0, a], [0.0, -1.0], [-1.0, 0.0]),
    ];
    let slot = |j: usize| (j / nside, clearance + (j % nside) as f64 * p);
    let pt = |k: usize, off: f64, rad: f64, z: f64| {
        let (o, t, n) = sides[k];
        [o[0] + t[0] * off + n[0] * rad, o[1] + t[1] * off + n[1] * rad, z]
    };

    let z_top = pr.z(Layer::M9);
    let (w_top, t_top) = pr.metal(Layer::M9);
    let bottoms = [Layer::B9, Layer::B8, Layer::B7];
    let mut out: [Vec<Segment>; 3] = Default::default();
    for (ci, coil) in out.iter_mut().enumerate() {
        let layer = bottoms[ci];
        let zb = pr.z(layer);
        let (wb, tb) = pr.metal(layer);
        let route = s * TOROID_ROUTE_FRACTION[ci];
        let slots: Vec<usize> =
            seq.iter().enumerate().filter(|(_, &c)| coil_index(c) == ci).map(|(j, _)| j).collect();
        for (q, &j) in slots.iter().enumerate() {
            let (k, off) = slot(j);
            let a0 = pt(k, off, 0.0, zb);
            let a1 = pt(k, off, 0.0, z_top);
            let b1 = pt(k, off, s, z_top);
            let b0 = pt(k, off, s, zb);
            coil.push(Segment::new(a0, a1, CrossSection::Round { radius: r }, rho));
            coil.push(Segment::new(a1, b1, CrossSection::Rectangular { width: w_top, thickness: t_top }, rho));
            coil.push(Segment::new(b1, b0, CrossSection::Round { radius: r }, rho));
            if let Some(&jn) = slots.get(q + 1) {
                let (kn, offn) = slot(jn);
                let half = 0.5 * p;
                let mut pts = vec![b0, pt(k, off + half, s, zb), pt(k, off + half, route, zb)];
                let mut kk = k;
                while kk != kn {
                    pts.push(pt(kk, a + route, route, zb));
                    kk += 1;
                }
                pts.push(pt(kn, offn - half, route, zb));
                pts.push(pt(kn, offn - half, 0.0, zb));
                pts.push(pt(kn, offn, 0.0, zb));
                coil.extend(trace(&pts, wb, tb, rho));
            }
        }
    }
    out
}

/// Radial position of each coil's bottom route as a fraction of the span.
const TOROID_ROUTE_FRACTION: [f64; 3] = [0.5, 1.0 / 3.0, 2.0 / 3.0];

/// Turns per vertical-spiral cell: one per top metal layer.
const SPIRAL_CELL_TURNS: usize = 3;

/// Vertical spiral: each coil lies in a vertical plane with all its TSVs on
/// one line. Turns nest in cells of up to three, the outermost on M9, then
/// M8, then M7, with mirrored bottom layers. A cell's inner terminal leaves
/// the plane sideways on the shallowest bottom layer to reach the next cell.
fn vertical_spiral_coils(g: &TransformerGeometry) -> [Vec<Segment>; 3] {
    let pr = &g.process;
    let p = g.tsv_pitch;
    let d = g.row_spacing;
    let jog = 0.5 * d;
    let len_p = spiral_length(g.turns_primary, p);
    let len_s = spiral_length(g.turns_secondary, p);
    let x0s = 0.5 * (len_p - len_s);
    [
        spiral_coil(pr, g.turns_primary, p, 0.0, 0.0, jog),
        spiral_coil(pr, g.turns_secondary, p, d, x0s, jog),
        spiral_coil(pr, g.turns_secondary, p, -d, x0s, -jog),
    ]
}

fn spiral_cells(turns: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = turns;
    while n > 0 {
        let t = n.min(SPIRAL_CELL_TURNS);
        out.push(t);
        n -= t;
    }
    out
}

/// Extent along the line between the first and last TSV centers (µm).
fn spiral_length(turns: usize, p: f64) -> f64 {
    let tsvs: usize = spiral_cells(turns).iter().map(|t| 2 * t).sum();
    let cells = spiral_cells(turns).len();
    // cells are separated by one extra pitch
    (tsvs - 1) as f64 * p + (cells - 1) as f64 * p
}

fn spiral_coil(pr: &ProcessParams, turns: usize, p: f64, y: f64, x0: f64, jog: f64) -> Vec<Segment> {
    let r = pr.tsv_radius();
    let rho = pr.conductor_resistivity;
    let tops = [Layer::M9, Layer::M8, Layer::M7];
    // bottom of turn i joins it to turn i + 1; the outer joins sit deepest
    let joins = [Layer::B7, Layer::B8];
    let exit = Layer::B9;
    let (we, te) = pr.metal(exit);
    let round = CrossSection::Round { radius: r };

    let mut segs = Vec::new();
    let mut x = x0;
    let mut prev_exit: Option<Point3> = None;
    for t in spiral_cells(turns) {
        let xs: Vec<f64> = (0..2 * t).map(|i| x + i as f64 * p).collect();
        let ze = pr.z(exit);
        if let Some(e) = prev_exit {
            let pts = [e, [e[0], y + jog, ze], [xs[0], y + jog, ze], [xs[0], y, ze]];
            segs.extend(trace(&pts, we, te, rho));
        }
        for i in 0..t {
            let xl = xs[i];
            let xr = xs[2 * t - 1 - i];
            let zt = pr.z(tops[i]);
            let (wt, tt) = pr.metal(tops[i]);
            let zl = if i == 0 { ze } else { pr.z(joins[i - 1]) };
            let zr = if i + 1 < t { pr.z(joins[i]) } else { ze };
            segs.push(Segment::new([xl, y, zl], [xl, y, zt], round, rho));
            segs.push(Segment::new(
                [xl, y, zt],
                [xr, y, zt],
                CrossSection::Rectangular { width: wt, thickness: tt },
                rho,
            ));
            segs.push(Segment::new([xr, y, zt], [xr, y, zr], round, rho));
            if i + 1 < t {
                let (wj, tj) = pr.metal(joins[i]);
                segs.extend(trace(&[[xr, y, zr], [xs[i + 1], y, zr]], wj, tj, rho));
            }
        }
        prev_exit = Some([xs[t], y, ze]);
        x = xs[2 * t - 1] + 2.0 * p;
    }
    segs
}

/// Lumped electrical model of a 3-coil transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerModel {
    /// H
    pub l_p: f64,
    pub l_s1: f64,
    pub l_s2: f64,
    /// Ω
    pub r_pdc: f64,
    pub r_sdc: f64,
    pub r_pac: f64,
    pub r_sac: f64,
    pub k_ps1: f64,
    pub k_ps2: f64,
    pub k_ss: f64,
    /// mm²
    pub area_mm2: f64,
    /// Hz
    pub eval_frequency: f64,
}

impl TransformerModel {
    /// Published toroidal transformer metrics.
    pub fn published_toroidal() -> Self {
        Self {
            l_p: 2.99e-9,
            l_s1: 0.38e-9,
            l_s2: 0.38e-9,
            r_pdc: 0.300,
            r_sdc: 0.064,
            r_pac: 1.4,
            r_sac: 0.35,
            k_ps1: 0.52,
            k_ps2: 0.52,
            k_ss: 0.15,
            area_mm2: 0.17,
            eval_frequency: DEFAULT_EVAL_FREQUENCY,
        }
    }

    /// Published vertical-spiral transformer metrics.
    pub fn published_vertical_spiral() -> Self {
        Self {
            l_p: 2.97e-9,
            l_s1: 0.36e-9,
            l_s2: 0.36e-9,
            r_pdc: 0.488,
            r_sdc: 0.066,
            r_pac: 3.03,
            r_sac: 0.38,
            k_ps1: 0.54,
            k_ps2: 0.54,
            k_ss: 0.29,
            area_mm2: 0.14,
            eval_frequency: DEFAULT_EVAL_FREQUENCY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l_p", self.l_p), ("l_s1", self.l_s1), ("l_s2", self.l_s2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("k_ps1", self.k_ps1), ("k_ps2", self.k_ps2), ("k_ss", self.k_ss)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidModel(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        for (name, dc, ac) in [("primary", self.r_pdc, self.r_pac), ("secondary", self.r_sdc, self.r_sac)] {
            if !(dc >= 0.0 && ac >= dc) {
                return Err(Error::InvalidModel(format!(
                    "{name} resistance needs 0 <= R_dc <= R_ac, got {dc} and {ac}"
                )));
            }
        }
        if !(self.area_mm2 > 0.0) {
            return Err(Error::InvalidModel("area must be positive".into()));
        }
        if !(self.eval_frequency >= 0.0) {
            return Err(Error::InvalidModel("eval_frequency must be >= 0".into()));
        }
        Ok(())
    }

    /// Mean secondary inductance (H).
    pub fn l_s(&self) -> f64 {
        0.5 * (self.l_s1 + self.l_s2)
    }

    /// Mean primary-secondary coupling.
    pub fn k_ps(&self) -> f64 {
        0.5 * (self.k_ps1 + self.k_ps2)
    }
}

/// Full extraction result: the model plus the signed inductance matrix and
/// per-coil resistances it was reduced from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub model: TransformerModel,
    /// Signed inductance matrix (H), primary first.
    pub l_matrix: [[f64; 3]; 3],
    /// (R_dc, R_ac) per coil (Ω).
    pub resistances: [(f64, f64); 3],
}

/// Reduce three coils to a lumped model.
pub fn extract_coils(coils: &[CoilGeometry; 3], f_eval: f64, area_mm2: f64) -> Result<Extraction> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        coils[i].validate()?;
        l[i][i] = coil_pair_inductance(&coils[i], &coils[i])?;
        for j in 0..i {
            let m = coil_pair_inductance(&coils[i], &coils[j])?;
            l[i][j] = m;
            l[j][i] = m;
        }
    }
    for (i, row) in l.iter().enumerate() {
        if !(row[i] > 0.0) {
            return Err(Error::InvalidGeometry(format!("coil {i} has non-positive inductance")));
        }
    }
    let mut res = [(0.0, 0.0); 3];
    for i in 0..3 {
        res[i] = coil_resistance(&coils[i], f_eval)?;
    }
    let k = |i: usize, j: usize| l[i][j].abs() / (l[i][i] * l[j][j]).sqrt();
    let model = TransformerModel {
        l_p: l[0][0],
        l_s1: l[1][1],
        l_s2: l[2][2],
        r_pdc: res[0].0,
        r_sdc: 0.5 * (res[1].0 + res[2].0),
        r_pac: res[0].1,
        r_sac: 0.5 * (res[1].1 + res[2].1),
        k_ps1: k(0, 1),
        k_ps2: k(0, 2),
        k_ss: k(1, 2),
        area_mm2,
        eval_frequency: f_eval,
    };
    model.validate()?;
    Ok(Extraction { model, l_matrix: l, resistances: res })
}

/// Extract the lumped model of a parametrized transformer.
pub fn build_transformer(geom: &TransformerGeometry, f_eval: f64) -> Result<TransformerModel> {
    Ok(build_transformer_detailed(geom, f_eval)?.model)
}

pub fn build_transformer_detailed(geom: &TransformerGeometry, f_eval: f64) -> Result<Extraction> {
    if !(f_eval >= 0.0 && f_eval.is_finite()) {
        return Err(Error::Domain(format!("evaluation frequency must be >= 0, got {f_eval}")));
    }
    let coils = geom.coils()?;
    extract_coils(&coils, f_eval, metal_area(geom)?)
}

fn footprint(seg: &Segment) -> ([f64; 2], [f64; 2]) {
    let half = match seg.cross_section {
        CrossSection::Round { radius } => [radius, radius],
        CrossSection::Rectangular { width, .. } => {
            // lateral half-width perpendicular to an in-plane trace
            let d = sub(seg.end, seg.start);
            if d[0].abs() > d[1].abs() {
                [0.0, width / 2.0]
            } else {
                [width / 2.0, 0.0]
            }
        }
    };
    let lo = [seg.start[0].min(seg.end[0]) - half[0], seg.start[1].min(seg.end[1]) - half[1]];
    let hi = [seg.start[0].max(seg.end[0]) + half[0], seg.start[1].max(seg.end[1]) + half[1]];
    (lo, hi)
}

/// Bounding-box footprint of all conductors (mm²).
pub fn metal_area(geom: &TransformerGeometry) -> Result<f64> {
    let coils = geom.coils()?;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for s in coils.iter().flat_map(|c| c.segments.iter()) {
        let (a, b) = footprint(s);
        for i in 0..2 {
            lo[i] = lo[i].min(a[i]);
            hi[i] = hi[i].max(b[i]);
        }
    }
    Ok((hi[0] - lo[0]) * (hi[1] - lo[1]) * 1e-6)
}

/// Modified-Wheeler inductance of a square planar spiral and its footprint.
///
/// Dimensions in µm; returns (H, mm²).
pub fn wheeler_spiral_inductance(
    n_turns: usize,
    outer_dim: f64,
    inner_dim: f64,
    width: f64,
    spacing: f64,
) -> Result<(f64, f64)> {
    if n_turns == 0 {
        return Err(Error::InvalidGeometry("spiral needs at least one turn".into()));
    }
    if !(inner_dim > 0.0 && outer_dim > inner_dim) {
        return Err(Error::InvalidGeometry("spiral needs outer_dim > inner_dim > 0".into()));
    }
    if !(width > 0.0 && spacing >= 0.0) {
        return Err(Error::InvalidGeometry("spiral width must be positive".into()));
    }
    let n = n_turns as f64;
    let needed = 2.0 * (n * width + (n - 1.0) * spacing);
    if needed > outer_dim - inner_dim + 1e-9 {
        return Err(Error::InvalidGeometry(format!(
            "{n_turns} turns of {width} µm at {spacing} µm spacing need {needed} µm, \
             only {} µm available",
            outer_dim - inner_dim
        )));
    }
    const K1: f64 = 2.34;
    const K2: f64 = 2.75;
    let d_avg = 0.5 * (outer_dim + inner_dim) * UM;
    let fill = (outer_dim - inner_dim) / (outer_dim + inner_dim);
    let l = K1 * MU_0 * n * n * d_avg / (1.0 + K2 * fill);
    Ok((l, outer_dim * outer_dim * 1e-6))
}

/// Comparison planar spiral used against the TSV transformers: 2 turns of
/// 24 µm M9 at 5 µm spacing, 800 µm outside and 320 µm inside (about 3 nH).
pub const REFERENCE_SPIRAL: (usize, f64, f64, f64, f64) = (2, 800.0, 320.0, 24.0, 5.0);
