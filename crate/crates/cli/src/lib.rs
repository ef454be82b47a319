//! Front end for `heis`: loads a system file, runs one command and renders a
//! report as JSON or text.

pub mod report;
pub mod spec;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use heis_core::derivation::{is_derivation_with, DerivationCheck};
use heis_core::{
    ad_rank_condition, decide_with, detect_decoupled_cells, explain, integrate_in, is_singular,
    normal_form_decoupled, normal_form_h1, rank_condition, sample_signal, search_obstruction,
    verify_certificate, DecideOptions, Direction, GroupElement, LinearSystem, SampleOptions,
    SearchBudget, Trajectory,
};

use report::{
    rows, CertificateReport, CertifyReport, NormalFormReport, Report, Run, Segment,
    SimulationReport, Validation, VerdictReport,
};
pub use spec::{load_spec, parse_spec, CliError, SystemSpec, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Analyze,
    NormalForm,
    Simulate,
    Certify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::Analyze => "analyze",
            Self::NormalForm => "normal-form",
            Self::Simulate => "simulate",
            Self::Certify => "certify",
        }
    }
}

/// Controllability analysis of linear systems on Heisenberg groups.
#[derive(Debug, Clone, Parser)]
#[command(name = "heis", version)]
pub struct Args {
    pub command: Command,
    /// System specification (JSON).
    pub spec: PathBuf,
    /// Emit the report as JSON (default).
    #[arg(long, conflicts_with = "text")]
    pub json: bool,
    /// Emit a human-readable report.
    #[arg(long)]
    pub text: bool,
    /// Simulation horizon.
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    /// Number of random signals to simulate.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    /// Bound on every control value.
    #[arg(long, default_value_t = 10.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// RK4 step.
    #[arg(long, default_value_t = heis_core::sim::DEFAULT_STEP)]
    pub step: f64,
    /// Integrate the reversed-time system.
    #[arg(long)]
    pub backward: bool,
    /// Starts of the numeric certificate search.
    #[arg(long, default_value_t = SearchBudget::default().starts)]
    pub budget: usize,
    /// Output path: the trajectory CSV for `simulate`, the report otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Args {
    fn search_budget(&self) -> SearchBudget {
        SearchBudget {
            starts: self.budget,
            ..SearchBudget::default()
        }
    }

    fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            horizon: self.horizon,
            samples: self.samples,
            amplitude: self.amplitude,
            seed: self.seed,
            step: self.step,
            direction: if self.backward {
                Direction::Backward
            } else {
                Direction::Forward
            },
        }
    }
}

/// Result of a command. `consistent` is false when an emitted certificate
/// failed re-verification.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandResult {
    pub report: Report,
    pub csv: Option<String>,
    pub consistent: bool,
}

impl CommandResult {
    pub fn exit_code(&self) -> u8 {
        if self.consistent {
            0
        } else {
            2
        }
    }
}

pub fn run(args: &Args, spec: &SystemSpec) -> Result<CommandResult, CliError> {
    let sys = spec.system()?;
    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        command: args.command.name().to_string(),
        input: spec.clone(),
        validation: None,
        verdict: None,
        normal_form: None,
        certify: None,
        simulation: None,
    };
    let mut csv = None;
    let mut consistent = true;
    match args.command {
        Command::Validate => report.validation = Some(validation(spec, &sys)?),
        Command::Analyze => {
            let opts = DecideOptions {
                budget: args.search_budget(),
                seed: args.seed,
            };
            let v = decide_with(&sys, &opts);
            let verified = v.certificate.as_ref().map_or(true, |c| verify_certificate(&sys, c));
            consistent = verified;
            report.verdict = Some(VerdictReport::new(&v, explain(&v), verified));
        }
        Command::NormalForm => report.normal_form = Some(normal_form(&sys)?),
        Command::Certify => {
            let budget = args.search_budget();
            let found = search_obstruction(&sys, &budget, args.seed);
            let verified = found.as_ref().map_or(true, |c| verify_certificate(&sys, c));
            consistent = verified;
            let note = match &found {
                Some(_) => "certificate found".to_string(),
                None if sys.d().abs() <= sys.tolerance() => {
                    "singular system (d = 0): no certificate of this type exists".to_string()
                }
                None => "no certificate found within the budget; this proves nothing".to_string(),
            };
            report.certify = Some(CertifyReport {
                budget,
                seed: args.seed,
                found: found.is_some(),
                note,
                certificate: found.as_ref().map(|c| CertificateReport::new(c, verified)),
            });
        }
        Command::Simulate => {
            let (sim, text) = simulate(args, &sys)?;
            report.simulation = Some(sim);
            csv = Some(text);
        }
    }
    Ok(CommandResult { report, csv, consistent })
}

fn validation(spec: &SystemSpec, sys: &LinearSystem) -> Result<Validation, CliError> {
    let m = spec.matrix();
    let tol = spec.tolerance();
    let check = |c| is_derivation_with(&m, spec.n, c, tol).map_err(|e| CliError::Invalid(e.to_string()));
    let structural = check(DerivationCheck::Structural)?;
    let leibniz = check(DerivationCheck::Leibniz)?;
    if structural != leibniz {
        return Err(CliError::Internal(
            "block test and Leibniz check disagree on the derivation".into(),
        ));
    }
    Ok(Validation {
        d: sys.d(),
        derivation_structural: structural,
        derivation_leibniz: leibniz,
        independent_controls: sys.independent_controls().len(),
        controls_commute: sys.controls_commute(),
        rank_condition: rank_condition(sys),
        ad_rank_condition: ad_rank_condition(sys),
        singular: is_singular(sys),
        decoupled_cells: detect_decoupled_cells(sys).unwrap_or_default(),
    })
}

fn normal_form(sys: &LinearSystem) -> Result<NormalFormReport, CliError> {
    if sys.n() == 1 && sys.m() == 1 {
        let nf = normal_form_h1(sys).map_err(|e| CliError::Invalid(e.to_string()))?;
        return Ok(NormalFormReport::H1 {
            b: nf.b,
            d: nf.d,
            f: nf.f,
            frame: rows(nf.frame.columns()),
        });
    }
    let cells = detect_decoupled_cells(sys).map_err(|e| CliError::Invalid(e.to_string()))?;
    if cells.is_empty() {
        return Err(CliError::Invalid(
            "no normal form: the system has no decoupled cell".into(),
        ));
    }
    let nf = normal_form_decoupled(sys, &cells).map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(NormalFormReport::Decoupled {
        d: nf.d,
        cells: nf.cells.iter().map(Into::into).collect(),
        frame: rows(nf.frame.columns()),
        matrix: rows(&nf.matrix),
    })
}

fn simulate(args: &Args, sys: &LinearSystem) -> Result<(SimulationReport, String), CliError> {
    let opts = args.sample_options();
    if opts.samples == 0 || !(opts.horizon > 0.0) || !(opts.step > 0.0) || !(opts.amplitude >= 0.0) {
        return Err(CliError::Invalid(
            "samples, horizon and step must be positive and amplitude non-negative".into(),
        ));
    }
    let e = GroupElement::identity(sys.n());
    let mut csv = String::from("sample,t");
    for i in 1..=sys.n() {
        let _ = write!(csv, ",x{i},y{i}");
    }
    csv.push_str(",z\n");
    let mut runs = Vec::with_capacity(opts.samples);
    for k in 0..opts.samples {
        let signal = sample_signal(&opts, sys.m(), k);
        let tr = integrate_in(sys, &e, &signal, opts.step, opts.direction)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        append_csv(&mut csv, k, &tr);
        runs.push(Run {
            segments: signal
                .segments()
                .iter()
                .map(|(duration, u)| Segment { duration: *duration, u: u.clone() })
                .collect(),
            endpoint: tr.endpoint().to_vector().iter().copied().collect(),
        });
    }
    let report = SimulationReport {
        seed: opts.seed,
        horizon: opts.horizon,
        samples: opts.samples,
        amplitude: opts.amplitude,
        step: opts.step,
        direction: opts.direction,
        csv: args.out.as_ref().map(|p| p.display().to_string()),
        runs,
    };
    Ok((report, csv))
}

fn append_csv(out: &mut String, sample: usize, tr: &Trajectory) {
    for (t, g) in tr.times.iter().zip(&tr.states) {
        let _ = write!(out, "{sample},{t:.16e}");
        for v in g.to_vector().iter() {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
}

pub fn to_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize") + "\n"
}

pub fn to_text(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} (n = {})", report.command, report.input.n);
    if let Some(v) = &report.validation {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let _ = writeln!(s, "derivation: valid (d = {})", v.d);
        let _ = writeln!(s, "independent controls: {}", v.independent_controls);
        let _ = writeln!(s, "controls commute: {}", yn(v.controls_commute));
        let _ = writeln!(s, "rank condition: {}", yn(v.rank_condition));
        let _ = writeln!(s, "ad-rank condition: {}", yn(v.ad_rank_condition));
        let _ = writeln!(s, "singular: {}", yn(v.singular));
        let _ = writeln!(s, "decoupled cells: {:?}", v.decoupled_cells);
    }
    if let Some(v) = &report.verdict {
        if v.exact_time {
            let _ = writeln!(s, "controllable in any positive time");
        }
        let _ = writeln!(s, "{}", v.explanation.trim_end());
        if let Some(c) = &v.certificate {
            write_certificate(&mut s, c);
        }
    }
    if let Some(nf) = &report.normal_form {
        match nf {
            NormalFormReport::H1 { b, d, f, frame } => {
                let _ = writeln!(s, "H1 normal form: b = {b}, d = {d}, f = {f}");
                write_matrix(&mut s, "frame", frame);
            }
            NormalFormReport::Decoupled { d, cells, frame, matrix } => {
                let _ = writeln!(s, "decoupled normal form: d = {d}");
                for c in cells {
                    let _ = writeln!(s, "  cell {}: b = {}, c = {}, f = {}", c.index + 1, c.b, c.c, c.f);
                }
                write_matrix(&mut s, "frame", frame);
                write_matrix(&mut s, "derivation", matrix);
            }
        }
    }
    if let Some(c) = &report.certify {
        let _ = writeln!(s, "{}", c.note);
        if let Some(cert) = &c.certificate {
            write_certificate(&mut s, cert);
        }
    }
    if let Some(sim) = &report.simulation {
        let _ = writeln!(
            s,
            "{} run(s), seed {}, horizon {}, amplitude {}, step {}",
            sim.samples, sim.seed, sim.horizon, sim.amplitude, sim.step
        );
        if let Some(path) = &sim.csv {
            let _ = writeln!(s, "trajectories: {path}");
        }
        for (k, r) in sim.runs.iter().enumerate() {
            let _ = writeln!(s, "  endpoint {k}: {:?}", r.endpoint);
        }
    }
    s
}

fn write_certificate(s: &mut String, c: &CertificateReport) {
    let _ = writeln!(
        s,
        "certificate ({:?}, verified: {}): mu = {}, w stays on one side of {}",
        c.stage, c.verified, c.mu, c.threshold
    );
    write_matrix(s, "S", &c.s);
    let _ = writeln!(s, "p = {:?}", c.p);
    write_matrix(s, "Q'", &c.qprime);
    let _ = writeln!(s, "l' = {:?}", c.lprime);
}

fn write_matrix(s: &mut String, name: &str, m: &[Vec<f64>]) {
    let _ = writeln!(s, "{name}:");
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6}")).collect();
        let _ = writeln!(s, "  {}", cells.join(" "));
    }
}

/// Runs the command described by `args` and writes its output. Returns the
/// process exit code.
pub fn execute(args: &Args) -> Result<u8, CliError> {
    let spec = load_spec(&args.spec)?;
    let outcome = run(args, &spec)?;
    let rendered = if args.text {
        to_text(&outcome.report)
    } else {
        to_json(&outcome.report)
    };
    let write = |path: &PathBuf, body: &str| {
        fs::write(path, body).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    };
    match (&outcome.csv, &args.out) {
        (Some(csv), Some(path)) => {
            write(path, csv)?;
            print!("{rendered}");
        }
        (Some(csv), None) => print!("{csv}"),
        (None, Some(path)) => write(path, &rendered)?,
        (None, None) => print!("{rendered}"),
    }
    if !outcome.consistent {
        eprintln!("heis: emitted certificate failed re-verification");
    }
    Ok(outcome.exit_code())
}
