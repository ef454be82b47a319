//! The decision engine: a fixed chain of sufficient and necessary conditions,
//! each verdict tagged with the result it comes from.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{HeisError, Result};
use crate::obstruct::{search_obstruction, ObstructionCertificate, SearchBudget};
use crate::system::{
    ad_rank_condition, detect_decoupled_cells, is_singular, normal_form_decoupled,
    normal_form_h1, rank_condition, system_subalgebra_h, CellParams, LinearSystem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Controllable,
    NotControllable,
    Unknown,
}

/// Result a verdict rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// The rank condition fails.
    RankFail,
    /// One-input dichotomy on H^1.
    Thm2,
    /// Verified quadratic obstruction.
    #[serde(rename = "Thm4/5-certificate")]
    Thm45Certificate,
    /// Singular system with the ad-rank condition.
    Thm6,
    /// `Z` in the Lie algebra generated by the controls.
    Thm7,
    /// At least `n + 1` independent controls.
    Cor1,
    /// A controllable decoupled cell.
    Thm8,
    /// Decoupled cells with invariants `c_j` of both signs.
    #[serde(rename = "Thm9/Thm10")]
    Thm9Thm10,
    /// Completely decoupled with all `c_j` of one sign.
    Thm10,
    /// Regular system, no obstruction found.
    ConjectureOnly,
    /// Singular system outside every criterion.
    NoCriterion,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Self::RankFail => "RankFail",
            Self::Thm2 => "Thm2",
            Self::Thm45Certificate => "Thm4/5-certificate",
            Self::Thm6 => "Thm6",
            Self::Thm7 => "Thm7",
            Self::Cor1 => "Cor1",
            Self::Thm8 => "Thm8",
            Self::Thm9Thm10 => "Thm9/Thm10",
            Self::Thm10 => "Thm10",
            Self::ConjectureOnly => "ConjectureOnly",
            Self::NoCriterion => "NoCriterion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub outcome: Outcome,
    pub provenance: Provenance,
    /// Controllable in exact time `T` for every `T > 0`.
    pub exact_time: bool,
    pub certificate: Option<ObstructionCertificate>,
    /// Named parameter values the deciding branch looked at.
    pub parameters: Vec<(String, f64)>,
    pub notes: String,
}

impl Verdict {
    fn new(outcome: Outcome, provenance: Provenance) -> Self {
        Self {
            outcome,
            provenance,
            exact_time: false,
            certificate: None,
            parameters: Vec::new(),
            notes: String::new(),
        }
    }

    fn param(mut self, name: &str, value: f64) -> Self {
        self.parameters.push((name.to_string(), value));
        self
    }

    fn note(mut self, text: &str) -> Self {
        if !self.notes.is_empty() {
            self.notes.push_str("; ");
        }
        self.notes.push_str(text);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecideOptions {
    pub budget: SearchBudget,
    pub seed: u64,
}

impl Default for DecideOptions {
    fn default() -> Self {
        Self {
            budget: SearchBudget::default(),
            seed: 0,
        }
    }
}

/// Discriminant `d^2 + 4bc` of the cell's quotient block `[[0, b], [c, d]]`.
pub fn cell_discriminant(p: &CellParams, d: f64) -> f64 {
    d * d + 4.0 * p.b * p.c
}

/// A cell is controllable iff its quotient eigenvalues are not real, or
/// `d = 0` and `f != 0`. Near-zero discriminants count as real.
pub fn cell_controllable(p: &CellParams, d: f64, tol: f64) -> Result<bool> {
    if p.c.abs() <= tol {
        return Err(HeisError::Hypothesis("cell invariant c is zero".into()));
    }
    let disc = cell_discriminant(p, d);
    let scale = (d * d).max((4.0 * p.b * p.c).abs()).max(1.0);
    if disc < -tol * scale {
        return Ok(true);
    }
    Ok(d.abs() <= tol && p.f.abs() > tol)
}

fn near_parabola(p: &CellParams, d: f64, tol: f64) -> bool {
    let scale = (d * d).max((4.0 * p.b * p.c).abs()).max(1.0);
    cell_discriminant(p, d).abs() <= tol * scale
}

pub fn decide(sys: &LinearSystem) -> Verdict {
    decide_with(sys, &DecideOptions::default())
}

pub fn decide_with(sys: &LinearSystem, opts: &DecideOptions) -> Verdict {
    let tol = sys.tolerance();
    let reduced = sys
        .with_controls(sys.independent_controls())
        .expect("independent subfamily of a valid family is valid");
    let sys = &reduced;
    let n = sys.n();
    let d = sys.d();

    if !rank_condition(sys) {
        return Verdict::new(Outcome::NotControllable, Provenance::RankFail)
            .note("the zero-time ideal is a proper subalgebra");
    }
    if sys.m() >= n + 1 {
        let mut v = Verdict::new(Outcome::Controllable, Provenance::Cor1)
            .param("m", sys.m() as f64)
            .param("n", n as f64);
        v.exact_time = true;
        return v;
    }
    if system_subalgebra_h(sys).contains(&sys.z_vector(), tol) {
        let mut v = Verdict::new(Outcome::Controllable, Provenance::Thm7)
            .note("Z lies in the Lie algebra generated by the controls");
        v.exact_time = true;
        return v;
    }
    if n == 1 {
        return decide_h1(sys, opts);
    }
    if is_singular(sys) && ad_rank_condition(sys) {
        return Verdict::new(Outcome::Controllable, Provenance::Thm6).param("d", d);
    }
    if let Some(v) = decide_decoupled(sys, opts) {
        return v;
    }
    if !is_singular(sys) {
        if let Some(cert) = search_obstruction(sys, &opts.budget, opts.seed) {
            let mu = cert.mu;
            let mut v = Verdict::new(Outcome::NotControllable, Provenance::Thm45Certificate)
                .param("d", d)
                .param("mu", mu);
            v.certificate = Some(cert);
            return v;
        }
        return Verdict::new(Outcome::Unknown, Provenance::ConjectureOnly)
            .param("d", d)
            .note("conjectured controllable: no obstruction found within search budget");
    }
    Verdict::new(Outcome::Unknown, Provenance::NoCriterion)
        .param("d", d)
        .note("singular system without ad-rank and without a decisive decoupled cell")
}

fn decide_h1(sys: &LinearSystem, opts: &DecideOptions) -> Verdict {
    let tol = sys.tolerance();
    let nf = match normal_form_h1(sys) {
        Ok(nf) => nf,
        Err(e) => {
            return Verdict::new(Outcome::Unknown, Provenance::NoCriterion)
                .note(&format!("normal form failed: {e}"))
        }
    };
    let cell = CellParams {
        index: 0,
        b: nf.b,
        c: 1.0,
        f: nf.f,
    };
    let yes = cell_controllable(&cell, nf.d, tol).unwrap_or(false);
    let mut v = Verdict::new(
        if yes { Outcome::Controllable } else { Outcome::NotControllable },
        Provenance::Thm2,
    )
    .param("b", nf.b)
    .param("d", nf.d)
    .param("f", nf.f)
    .param("-d^2/4", 0.0 - nf.d * nf.d / 4.0);
    if near_parabola(&cell, nf.d, tol) {
        v = v.note("b is within tolerance of -d^2/4; treated as not below it");
    }
    if !yes && nf.d.abs() > tol {
        v.certificate = search_obstruction(sys, &opts.budget, opts.seed);
    }
    v
}

fn decide_decoupled(sys: &LinearSystem, opts: &DecideOptions) -> Option<Verdict> {
    let tol = sys.tolerance();
    let cells = detect_decoupled_cells(sys).ok()?;
    if cells.is_empty() {
        return None;
    }
    let nf = normal_form_decoupled(sys, &cells).ok()?;
    let with_cells = |mut v: Verdict| {
        v = v.param("d", nf.d);
        for c in &nf.cells {
            let k = c.index + 1;
            v = v
                .param(&format!("b_{k}"), c.b)
                .param(&format!("c_{k}"), c.c)
                .param(&format!("f_{k}"), c.f);
        }
        v
    };
    for c in &nf.cells {
        if cell_controllable(c, nf.d, tol).unwrap_or(false) {
            return Some(
                with_cells(Verdict::new(Outcome::Controllable, Provenance::Thm8))
                    .note(&format!("cell {} is controllable", c.index + 1)),
            );
        }
    }
    let positive = nf.cells.iter().any(|c| c.c > 0.0);
    let negative = nf.cells.iter().any(|c| c.c < 0.0);
    if positive && negative {
        return Some(
            with_cells(Verdict::new(Outcome::Controllable, Provenance::Thm9Thm10))
                .note("decoupled cells have invariants c_j of both signs"),
        );
    }
    if sys.m() == sys.n() && cells.len() == sys.m() {
        let mut v = with_cells(Verdict::new(Outcome::NotControllable, Provenance::Thm10))
            .note("completely decoupled with all c_j of one sign");
        if !is_singular(sys) {
            v.certificate = search_obstruction(sys, &opts.budget, opts.seed);
        }
        return Some(v);
    }
    None
}

/// Human-readable rendering of a verdict.
pub fn explain(v: &Verdict) -> String {
    let mut out = String::new();
    let outcome = match v.outcome {
        Outcome::Controllable => "controllable",
        Outcome::NotControllable => "not controllable",
        Outcome::Unknown => "undecided",
    };
    let _ = writeln!(out, "verdict: {outcome} [{}]", v.provenance.tag());
    if v.exact_time {
        let _ = writeln!(out, "controllable in exact time T for every T > 0");
    }
    let get = |name: &str| v.parameters.iter().find(|(k, _)| k == name).map(|(_, x)| *x);
    match v.provenance {
        Provenance::Thm2 => {
            if let (Some(b), Some(d), Some(f)) = (get("b"), get("d"), get("f")) {
                let bound = 0.0 - d * d / 4.0;
                let rel = if b < bound { "<" } else { ">=" };
                let _ = writeln!(out, "normal form: b = {b}, d = {d}, f = {f}");
                let _ = writeln!(out, "b < -d^2/4: {b} {rel} {bound}");
                let _ = writeln!(out, "d = 0 and f != 0: {}", d == 0.0 && f != 0.0);
            }
        }
        _ => {
            for (k, x) in &v.parameters {
                let sign = if k.starts_with("c_") {
                    if *x < 0.0 {
                        " (negative)"
                    } else {
                        " (positive)"
                    }
                } else {
                    ""
                };
                let _ = writeln!(out, "{k} = {x}{sign}");
            }
        }
    }
    if let Some(c) = &v.certificate {
        let _ = writeln!(
            out,
            "certificate: {:?} change of variable, mu = {}, surface w = {}",
            c.stage,
            c.mu,
            c.threshold()
        );
    }
    if !v.notes.is_empty() {
        let _ = writeln!(out, "notes: {}", v.notes);
    }
    out
}
