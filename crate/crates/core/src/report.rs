//! Run reports with text and JSON renderings.
//!
//! JSON output writes every float with 17 significant digits, so repeated
//! runs with the same inputs give byte-identical files. Text output uses 6.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::acr::{AcrReport, AcrVerdict, EquilibriumStatus, PlRlkAcrOutcome, PlRlkAcrReport};
use crate::approx::{FluxApproximation, GmaApproximation};
use crate::checks::VerificationReport;
use crate::equilibria::{EquilibriumSet, TrajectoryMeta};
use crate::format::{fmt_g17, fmt_sig};
use crate::kinetics::{KineticsClassification, PowerLawKineticSystem, DEFAULT_ORDER_TOL};
use crate::network::{ReactionNetwork, StructuralReport};

/// Kinetic-order matrix `T` in row-major form, one column per reactant complex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TMatrixSection {
    pub species: Vec<String>,
    pub reactant_complexes: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KineticsSection {
    pub classification: KineticsClassification,
    pub rate_constants: Vec<f64>,
    /// Absent when the kinetics are not reactant-determined.
    pub t_matrix: Option<TMatrixSection>,
}

impl KineticsSection {
    pub fn from_system(sys: &PowerLawKineticSystem) -> Self {
        let net = sys.network();
        let t_matrix = sys.t_matrix(DEFAULT_ORDER_TOL).ok().map(|t| TMatrixSection {
            species: net.species_names(),
            reactant_complexes: t.reactant_complexes.iter().map(|&y| net.complex_label(y)).collect(),
            rows: t
                .entries
                .row_iter()
                .map(|row| row.iter().copied().collect())
                .collect(),
        });
        Self {
            classification: sys.classify(DEFAULT_ORDER_TOL),
            rate_constants: sys.rate_constants().to_vec(),
            t_matrix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationSection {
    pub operating_point: Vec<f64>,
    pub fluxes: Vec<FluxApproximation>,
    pub classification: KineticsClassification,
}

impl From<&GmaApproximation> for ApproximationSection {
    fn from(gma: &GmaApproximation) -> Self {
        Self {
            operating_point: gma.operating_point.clone(),
            fluxes: gma.fluxes.clone(),
            classification: gma.classification.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSection {
    pub species: Vec<String>,
    pub t_end: f64,
    pub final_state: Vec<f64>,
    pub meta: TrajectoryMeta,
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructuralReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinetics: Option<KineticsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acr: Option<AcrReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plrlk: Option<PlRlkAcrReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<EquilibriumSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approximation: Option<ApproximationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, input: Option<&str>) -> Self {
        Self {
            command: command.to_string(),
            input: input.map(str::to_string),
            structure: None,
            kinetics: None,
            acr: None,
            plrlk: None,
            equilibria: None,
            verification: None,
            approximation: None,
            simulation: None,
            warnings: Vec::new(),
        }
    }

    /// Pretty JSON with 17-significant-digit floats and a trailing newline.
    pub fn to_json(&self) -> String {
        to_json_g17(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(s) = &self.structure {
            render_structure(&mut out, s);
        }
        if let Some(k) = &self.kinetics {
            render_kinetics(&mut out, k);
        }
        if let Some(a) = &self.approximation {
            render_approximation(&mut out, a);
        }
        if let Some(a) = &self.acr {
            render_acr(&mut out, a, self.structure.as_ref());
        }
        if let Some(p) = &self.plrlk {
            render_plrlk(&mut out, p);
        }
        if let Some(e) = &self.equilibria {
            render_equilibria(&mut out, e);
        }
        if let Some(v) = &self.verification {
            render_verification(&mut out, v);
        }
        if let Some(s) = &self.simulation {
            render_simulation(&mut out, s);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Structural section for a network.
pub fn structure_of(net: &ReactionNetwork) -> StructuralReport {
    net.structural_report()
}

/// Serializes `value` as pretty JSON, writing floats with [`fmt_g17`].
/// Non-finite floats become `null`.
pub fn to_json_g17<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17Formatter::default());
    value.serialize(&mut ser).expect("report serializes");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[derive(Default)]
struct G17Formatter {
    inner: PrettyFormatter<'static>,
}

impl G17Formatter {
    fn write_float<W: ?Sized + io::Write>(&mut self, w: &mut W, x: f64) -> io::Result<()> {
        if x.is_finite() {
            w.write_all(fmt_g17(x).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }
}

impl Formatter for G17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        self.write_float(w, value)
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_float(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

fn sig(x: f64) -> String {
    fmt_sig(x, 6)
}

fn vec_sig(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| sig(x)).collect();
    format!("({})", parts.join(", "))
}

fn classes(labels: &[Vec<String>]) -> String {
    labels
        .iter()
        .map(|c| format!("{{{}}}", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn render_structure(out: &mut String, s: &StructuralReport) {
    let _ = writeln!(out, "species: {}", s.species.join(", "));
    let _ = writeln!(out, "complexes: {}", s.complexes.join(", "));
    let _ = writeln!(
        out,
        "n={} ℓ={} s={} δ={} t={}",
        s.n, s.num_linkage_classes, s.rank, s.deficiency, s.num_terminal_classes
    );
    let _ = writeln!(out, "r={} m={} n_r={} q={} δρ={}", s.r, s.m, s.num_reactant_complexes, s.reactant_rank, s.reactant_deficiency);
    let _ = writeln!(out, "linkage classes: {}", classes(&s.linkage_class_labels));
    let _ = writeln!(out, "strong linkage classes: {}", classes(&s.strong_linkage_class_labels));
    let _ = writeln!(out, "terminal classes: {}", classes(&s.terminal_class_labels));
    let _ = writeln!(out, "nonterminal: {}", s.nonterminal_labels.join(", "));
}

fn render_kinetics(out: &mut String, k: &KineticsSection) {
    let c = &k.classification;
    let kind = if c.is_mass_action { "mass action" } else { "power law" };
    let _ = writeln!(
        out,
        "kinetics: {kind} (PL-RDK: {}, PL-RLK: {})",
        yes_no(c.is_pl_rdk),
        yes_no(c.is_pl_rlk)
    );
    if let Some((a, b)) = c.rdk_violation {
        let _ = writeln!(out, "reactions {} and {} share a reactant complex with different orders", a + 1, b + 1);
    }
    let _ = writeln!(out, "rate constants: {}", vec_sig(&k.rate_constants));
    if let Some(t) = &k.t_matrix {
        let _ = writeln!(out, "T matrix (columns: {}):", t.reactant_complexes.join(", "));
        for (name, row) in t.species.iter().zip(&t.rows) {
            let cells: Vec<String> = row.iter().map(|&x| sig(x)).collect();
            let _ = writeln!(out, "  {name}: [{}]", cells.join(", "));
        }
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn render_approximation(out: &mut String, a: &ApproximationSection) {
    let _ = writeln!(out, "operating point: {}", vec_sig(&a.operating_point));
    for f in &a.fluxes {
        let _ = writeln!(out, "  {}: k={} orders={}", f.label, sig(f.rate_constant), vec_sig(&f.orders));
    }
}

fn render_acr(out: &mut String, a: &AcrReport, structure: Option<&StructuralReport>) {
    let label = |y: usize| match structure {
        Some(s) => s.complexes[y].clone(),
        None => format!("#{y}"),
    };
    match &a.verdict {
        AcrVerdict::Acr { species } => {
            let _ = writeln!(out, "ACR in {}", species.join(", "));
        }
        AcrVerdict::Inapplicable { reason } => {
            let _ = writeln!(out, "criterion inapplicable: {reason}");
        }
        AcrVerdict::HypothesisFailed { detail } => {
            let _ = writeln!(out, "hypothesis failed: {detail}");
        }
    }
    for p in &a.candidates {
        let name = structure.map_or_else(|| format!("#{}", p.species), |s| s.species[p.species].clone());
        let _ = writeln!(
            out,
            "  pair {} / {} differs in {name} (order difference {})",
            label(p.y),
            label(p.y_prime),
            sig(p.delta_order)
        );
    }
    match &a.equilibrium_status {
        EquilibriumStatus::Assumed => {
            let _ = writeln!(out, "positive equilibrium: assumed");
        }
        EquilibriumStatus::Verified { equilibrium, count } => {
            let _ = writeln!(out, "positive equilibrium: found {count}, first {}", vec_sig(equilibrium));
        }
        EquilibriumStatus::NotFound { starts } => {
            let _ = writeln!(out, "positive equilibrium: none found from {starts} starts");
        }
    }
    for n in &a.numeric_confirmation {
        let _ = writeln!(
            out,
            "numeric {}: {} equilibria, range [{}, {}], relative spread {:.1e}{}",
            n.species,
            n.count,
            sig(n.min),
            sig(n.max),
            n.relative_spread,
            if n.low_confidence { " (low confidence)" } else { "" }
        );
    }
}

fn render_plrlk(out: &mut String, p: &PlRlkAcrReport) {
    match &p.outcome {
        PlRlkAcrOutcome::Confirmed { species } => {
            let _ = writeln!(out, "PL-RLK check: ACR in {}", species.join(", "));
        }
        PlRlkAcrOutcome::NotApplicable { reason } => {
            let _ = writeln!(out, "PL-RLK check: not applicable ({reason})");
        }
    }
}

fn render_equilibria(out: &mut String, e: &EquilibriumSet) {
    let _ = writeln!(
        out,
        "equilibria: {} distinct from {} starts, {} failed",
        e.points.len(),
        e.n_starts,
        e.failed.len()
    );
    for p in &e.points {
        let _ = writeln!(out, "  {}", vec_sig(&p.concentrations));
    }
}

fn render_verification(out: &mut String, v: &VerificationReport) {
    for (i, t) in v.trials.iter().enumerate() {
        let supports: Vec<String> = t
            .kernel
            .supports
            .iter()
            .map(|s| format!("{{{}}}", s.class_labels.join(", ")))
            .collect();
        let _ = writeln!(
            out,
            "trial {} ({:?}): STLK {}: dim Ker A_κ = {} (t = {}) with supports {}",
            i + 1,
            t.source,
            pass_fail(t.kernel.passed),
            t.kernel.nullity,
            t.kernel.num_terminal_classes,
            supports.join(", ")
        );
        let _ = writeln!(
            out,
            "trial {}: bound {}: nullity(Y A_κ) = {} ≤ {}",
            i + 1,
            pass_fail(t.nullity_bound.passed),
            t.nullity_bound.nullity,
            t.nullity_bound.bound
        );
    }
    match &v.log_residual {
        Some(l) => {
            let _ = writeln!(
                out,
                "log residual {}: max {:.1e} over {} pairs from {} equilibria (tolerance {:.0e})",
                pass_fail(l.passed),
                l.max_abs_residual,
                l.pairs_checked,
                l.equilibria,
                l.tolerance
            );
        }
        None => {
            let _ = writeln!(
                out,
                "log residual: skipped ({} equilibria found)",
                v.equilibria_found
            );
        }
    }
    let _ = writeln!(out, "overall: {}", pass_fail(v.passed));
}

fn pass_fail(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

fn render_simulation(out: &mut String, s: &SimulationSection) {
    let _ = writeln!(out, "t_end = {}", sig(s.t_end));
    for (name, &x) in s.species.iter().zip(&s.final_state) {
        let _ = writeln!(out, "  {name} = {}", sig(x));
    }
    let _ = writeln!(
        out,
        "method {:?}: {} accepted, {} rejected steps",
        s.meta.method, s.meta.stats.accepted, s.meta.stats.rejected
    );
    if let Some(path) = &s.output {
        let _ = writeln!(out, "trajectory written to {path}");
    }
}
