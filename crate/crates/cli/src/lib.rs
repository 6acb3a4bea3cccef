//! The `ppcf` command line: argument model, settings resolution and one
//! function per subcommand. `main.rs` only forwards to [`run`].

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ppcf_core::ast::{parse, parse_type, typecheck_closed, Label, Term, Ty, TyCtx};
use ppcf_core::machine::{
    enumerate, estimate_prob, expect_label_operational, run_lc, run_tape, EnumLimits, MultiTape, RunOutcome, State,
    Tape,
};
use ppcf_core::metrics::{builtin_contexts, tamed_distance_estimate};
use ppcf_core::rat::Rat;
use ppcf_core::relational::{clique_check, infer_points, support_match, SearchBounds};
use ppcf_core::semantics::{expect_label_semantic, prob_zero, Divergence, Expectation, SemParams};
use ppcf_core::transform::{lcof, spy, spy_vars, strip, tamed};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "ppcf", version, about = "Probabilistic PCF toolkit: run, enumerate, interpret, measure")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Write the report (the CSV table when there is one) to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Optional `key=value` file supplying defaults for the flags below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Machine steps per run.
    #[arg(long, global = true)]
    pub fuel: Option<u64>,
    /// Longest random tape explored by enumeration.
    #[arg(long, global = true)]
    pub max_tape: Option<usize>,
    /// Enumeration abandons paths lighter than this (rational).
    #[arg(long, global = true)]
    pub min_weight: Option<String>,
    /// Truncation bound K: naturals are represented by 0..K.
    #[arg(long = "trunc", global = true)]
    pub trunc: Option<usize>,
    #[arg(long, global = true)]
    pub fix_tol: Option<f64>,
    #[arg(long, global = true)]
    pub fix_iters: Option<u64>,
    #[arg(long, global = true)]
    pub tangent_tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and typecheck a closed term; print its type.
    Check { file: PathBuf },
    /// Run the machine on one random tape (and label tapes, if given).
    Run {
        file: PathBuf,
        /// Bits of the main tape, e.g. `0110`.
        #[arg(long, default_value = "")]
        tape: String,
        /// Label tapes for labeled coins, e.g. `a:01,b:1`.
        #[arg(long)]
        label_tapes: Option<String>,
    },
    /// Monte Carlo estimate of the probability of reaching 0.
    Sample { file: PathBuf },
    /// Exact weighted enumeration of random tapes.
    Enumerate { file: PathBuf },
    /// Denotational probability of reaching 0.
    Prob { file: PathBuf },
    /// Expected uses of a label, conditioned on termination at 0.
    Expect {
        file: PathBuf,
        #[arg(long)]
        label: Option<String>,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
    },
    /// Probability and expectation over a parameter grid, as CSV.
    Sweep {
        /// Term source in which `{<param>}` is replaced by each grid value.
        template: PathBuf,
        #[arg(long, default_value = "q")]
        param: String,
        /// `start..stop step s` or `start:stop:s`, endpoints included.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        label: Option<String>,
    },
    /// Tamed observational distance estimate against the denotational bound.
    Dist {
        file1: PathBuf,
        file2: PathBuf,
        /// Taming probability in [0, 1); omit to apply contexts untamed.
        #[arg(short = 'p', long = "p")]
        p: Option<String>,
        /// Directory of extra `nat -> nat` contexts (`*.ppcf`).
        #[arg(long)]
        contexts: Option<PathBuf>,
    },
    /// Intersection-type judgments, support comparison or clique check.
    Rel {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = RelMode::Points)]
        mode: RelMode,
        #[arg(long)]
        max_multiset: Option<usize>,
        #[arg(long)]
        max_numeral: Option<u64>,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Source-to-source translations.
    Transform {
        #[arg(value_enum)]
        kind: TransformKind,
        file: PathBuf,
        /// Label rates for lcof, e.g. `a=1/2,b=1/3` (missing labels: 1).
        #[arg(long)]
        rates: Option<String>,
        /// Taming probability for `tamed`.
        #[arg(short = 'p', long = "p")]
        p: Option<String>,
        /// Type of the tested term for `tamed`.
        #[arg(long, default_value = "nat")]
        ty: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Op,
    Sem,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelMode {
    Points,
    Support,
    Clique,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    Spy,
    Lcof,
    Strip,
    Tamed,
}

/// Fully resolved numeric settings.
#[derive(Clone, Debug)]
pub struct Settings {
    pub fuel: u64,
    pub max_tape: usize,
    pub min_weight: Option<Rat>,
    pub sem: SemParams,
    pub seed: u64,
    pub samples: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { fuel: 100_000, max_tape: 20, min_weight: None, sem: SemParams::default(), seed: 0, samples: 10_000 }
    }
}

impl Settings {
    pub fn limits(&self) -> EnumLimits {
        EnumLimits { fuel: self.fuel, max_tape: self.max_tape, min_weight: self.min_weight.clone() }
    }

    /// Flags win over the config file, which wins over defaults.
    pub fn resolve(args: &CommonArgs) -> CliResult<Settings> {
        let file = match &args.config {
            Some(path) => read_config(path)?,
            None => HashMap::new(),
        };
        let mut s = Settings::default();
        for (key, value) in &file {
            let bad = || CliError::Domain(format!("config: bad value `{value}` for `{key}`"));
            match key.as_str() {
                "fuel" => s.fuel = value.parse().map_err(|_| bad())?,
                "max-tape" => s.max_tape = value.parse().map_err(|_| bad())?,
                "min-weight" => s.min_weight = Some(value.parse().map_err(|_| bad())?),
                "trunc" => s.sem.k = value.parse().map_err(|_| bad())?,
                "fix-tol" => s.sem.fix_tol = value.parse().map_err(|_| bad())?,
                "fix-iters" => s.sem.fix_max_iters = value.parse().map_err(|_| bad())?,
                "tangent-tol" => s.sem.tangent_tol = value.parse().map_err(|_| bad())?,
                "seed" => s.seed = value.parse().map_err(|_| bad())?,
                "samples" => s.samples = value.parse().map_err(|_| bad())?,
                _ => return Err(CliError::Domain(format!("config: unknown key `{key}`"))),
            }
        }
        if let Some(v) = args.fuel {
            s.fuel = v;
        }
        if let Some(v) = args.max_tape {
            s.max_tape = v;
        }
        if let Some(v) = &args.min_weight {
            s.min_weight = Some(v.parse().map_err(domain)?);
        }
        if let Some(v) = args.trunc {
            s.sem.k = v;
        }
        if let Some(v) = args.fix_tol {
            s.sem.fix_tol = v;
        }
        if let Some(v) = args.fix_iters {
            s.sem.fix_max_iters = v;
        }
        if let Some(v) = args.tangent_tol {
            s.sem.tangent_tol = v;
        }
        if let Some(v) = args.seed {
            s.seed = v;
        }
        if let Some(v) = args.samples {
            s.samples = v;
        }
        s.sem.validate().map_err(domain)?;
        Ok(s)
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn read_config(path: &Path) -> CliResult<HashMap<String, String>> {
    let text = read_file(path)?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Domain(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// A finished command: human text, JSON, and optionally a CSV table.
#[derive(Debug, Clone)]
pub struct Report {
    pub text: String,
    pub json: Value,
    pub csv: Option<String>,
}

/// Floats with 12 significant digits; `inf` and `nan` spelled out.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // The exponent after rounding to 12 digits, so 0.99999999999999 counts as 1.
    let sci = format!("{x:.11e}");
    let mag: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-4..12).contains(&mag) {
        format!("{:.*}", (11 - mag) as usize, x)
    } else {
        sci
    }
}

fn json_float(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(fmt_float(x))
    }
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_term(path: &Path) -> CliResult<Term> {
    let src = read_file(path)?;
    parse(&src).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_closed(path: &Path) -> CliResult<(Term, Ty)> {
    let t = load_term(path)?;
    let ty = typecheck_closed(&t).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    Ok((t, ty))
}

fn load_nat(path: &Path) -> CliResult<Term> {
    let (t, ty) = load_closed(path)?;
    if !ty.is_nat() {
        return Err(CliError::Domain(format!("{}: expected a term of type nat, found {ty}", path.display())));
    }
    Ok(t)
}

fn rat_json(r: &Rat) -> Value {
    json!({ "fraction": r.to_string(), "value": r.to_f64() })
}

/// Parses `a=1/2,b=1/3` or `a:01,b:1` style lists.
fn pairs(s: &str, sep: char) -> CliResult<Vec<(String, String)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.split_once(sep)
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Domain(format!("expected `name{sep}value`, got `{p}`")))
        })
        .collect()
}

pub fn cmd_check(file: &Path) -> CliResult<Report> {
    let (_, ty) = load_closed(file)?;
    Ok(Report { text: ty.to_string(), json: json!({ "type": ty.to_string() }), csv: None })
}

pub fn cmd_run(file: &Path, tape: &str, label_tapes: Option<&str>, s: &Settings) -> CliResult<Report> {
    let (term, _) = load_closed(file)?;
    let tape: Tape = tape.parse().map_err(|e: ppcf_core::machine::TapeParseError| domain(e.0))?;
    let state = State::initial(term).map_err(domain)?;
    let outcome = match label_tapes {
        Some(lt) => {
            let mut mt = MultiTape::new();
            for (l, bits) in pairs(lt, ':')? {
                let t: Tape = bits.parse().map_err(|e: ppcf_core::machine::TapeParseError| domain(e.0))?;
                mt = mt.with(&Label::new(&l), t);
            }
            run_lc(&state, &tape, &mt, s.fuel)
        }
        None => run_tape(&state, &tape, s.fuel),
    };
    let json = match &outcome {
        RunOutcome::AcceptZero { weight, labels, steps } => json!({
            "outcome": "accept",
            "weight": weight.to_string(),
            "labels": labels.iter().map(|(l, n)| (l.to_string(), json!(n))).collect::<serde_json::Map<_, _>>(),
            "steps": steps,
        }),
        RunOutcome::Reject { reason, steps } => json!({ "outcome": "reject", "reason": reason.as_str(), "steps": steps }),
        RunOutcome::OutOfFuel => json!({ "outcome": "out-of-fuel" }),
    };
    Ok(Report { text: outcome.to_string(), json, csv: None })
}

pub fn cmd_sample(file: &Path, s: &Settings) -> CliResult<Report> {
    let term = load_nat(file)?;
    let e = estimate_prob(&term, s.samples, s.seed, s.fuel).map_err(domain)?;
    let text = format!(
        "estimate {}\nstderr {}\nout-of-fuel {}\nsamples {} seed {}",
        fmt_float(e.estimate),
        fmt_float(e.stderr),
        fmt_float(e.timeout_fraction),
        s.samples,
        s.seed
    );
    let json = json!({
        "estimate": e.estimate, "stderr": e.stderr, "timeout_fraction": e.timeout_fraction,
        "samples": s.samples, "seed": s.seed,
    });
    Ok(Report { text, json, csv: None })
}

pub fn cmd_enumerate(file: &Path, s: &Settings) -> CliResult<Report> {
    let term = load_nat(file)?;
    let r = enumerate(&State::initial(term).map_err(domain)?, &s.limits());
    let mut text = format!(
        "accept {} ({})\nreject {}\nresidual {}\n",
        r.accept_total,
        fmt_float(r.accept_total.to_f64()),
        r.reject_total,
        r.residual
    );
    for (mu, w) in &r.table {
        let _ = writeln!(text, "  {mu} {w}");
    }
    let json = json!({
        "accept_total": rat_json(&r.accept_total),
        "reject_total": rat_json(&r.reject_total),
        "residual": rat_json(&r.residual),
        "pruned": rat_json(&r.pruned),
        "table": r.table.iter().map(|(mu, w)| json!({ "multiset": mu.to_string(), "weight": w.to_string() })).collect::<Vec<_>>(),
    });
    Ok(Report { text: text.trim_end().to_string(), json, csv: Some(r.to_csv()) })
}

pub fn cmd_prob(file: &Path, s: &Settings) -> CliResult<Report> {
    let term = load_nat(file)?;
    let r = prob_zero::<f64>(&strip(&term), &s.sem).map_err(domain)?;
    let d = &r.diagnostics;
    let mut text = fmt_float(r.value);
    if !d.converged() {
        text.push_str("\nwarning: a fixpoint iteration hit the iteration bound; the value is a lower bound");
    }
    let json = json!({
        "prob_zero": r.value,
        "converged": d.converged(),
        "fix_iterations": d.fix_iterations,
        "max_mass": d.max_mass,
        "trunc": s.sem.k,
    });
    Ok(Report { text, json, csv: None })
}

/// The single label of `term`, unless `given` names one.
fn pick_label(term: &Term, given: Option<&str>) -> CliResult<Label> {
    let labels = term.labels();
    if labels.is_empty() {
        return Err(CliError::Domain(
            "term has no labels: the conditional expectation would be 0/0 of nothing counted".into(),
        ));
    }
    match given {
        Some(l) => {
            let l = Label::new(l);
            if !labels.contains(&l) {
                return Err(CliError::Domain(format!("label `{l}` does not occur in the term")));
            }
            Ok(l)
        }
        None if labels.len() == 1 => Ok(labels.into_iter().next().expect("one label")),
        None => Err(CliError::Domain("term has several labels; pass --label".into())),
    }
}

fn expectation_json(e: &Expectation) -> Value {
    match e {
        Expectation::Finite(v) => json!(v),
        Expectation::Diverged(Divergence::Tangent) => json!("diverged"),
        Expectation::Diverged(Divergence::ZeroProbability) => json!("undefined"),
    }
}

fn expectation_text(e: &Expectation) -> String {
    match e {
        Expectation::Finite(v) => fmt_float(*v),
        Expectation::Diverged(Divergence::Tangent) => "diverged".into(),
        Expectation::Diverged(Divergence::ZeroProbability) => "undefined (termination probability 0)".into(),
    }
}

/// Both routes to the expected label count. Parsed fields are exposed so
/// callers can check them without scraping text.
#[derive(Clone, Debug)]
pub struct ExpectReport {
    pub label: Label,
    pub operational: Option<ppcf_core::machine::OperationalExpectation>,
    pub semantic: Option<Expectation>,
    pub prob_zero: Option<f64>,
}

impl ExpectReport {
    pub fn conditional(&self) -> Option<f64> {
        self.operational.as_ref().and_then(|o| o.conditional())
    }

    /// Converging mass the enumeration has not yet resolved: the semantic
    /// termination probability minus the accepted mass.
    pub fn unresolved(&self) -> Option<f64> {
        Some(self.prob_zero? - self.operational.as_ref()?.accept_mass.to_f64())
    }

    pub fn gap(&self) -> Option<f64> {
        Some((self.conditional()? - self.semantic.as_ref()?.finite()?).abs())
    }
}

pub fn expect(file: &Path, label: Option<&str>, mode: Mode, s: &Settings) -> CliResult<ExpectReport> {
    let term = load_nat(file)?;
    let l = pick_label(&term, label)?;
    let operational = match mode {
        Mode::Op | Mode::Both => Some(expect_label_operational(&term, &l, &s.limits()).map_err(domain)?),
        Mode::Sem => None,
    };
    let (semantic, prob) = match mode {
        Mode::Sem | Mode::Both => {
            let e = expect_label_semantic(&term, &l, &s.sem).map_err(domain)?;
            let p = prob_zero::<f64>(&strip(&term), &s.sem).map_err(domain)?.value;
            (Some(e), Some(p))
        }
        Mode::Op => (None, None),
    };
    Ok(ExpectReport { label: l, operational, semantic, prob_zero: prob })
}

pub fn cmd_expect(file: &Path, label: Option<&str>, mode: Mode, s: &Settings) -> CliResult<Report> {
    let r = expect(file, label, mode, s)?;
    let mut text = format!("label {}\n", r.label);
    let mut json = serde_json::Map::new();
    json.insert("label".into(), json!(r.label.to_string()));
    if let Some(o) = &r.operational {
        let cond = o.conditional().map(fmt_float).unwrap_or_else(|| "undefined (0/0: nothing accepted)".into());
        let _ = writeln!(
            text,
            "operational lower {} accepted {} residual {} conditional {}",
            fmt_float(o.lower.to_f64()),
            fmt_float(o.accept_mass.to_f64()),
            fmt_float(o.residual.to_f64()),
            cond
        );
        json.insert(
            "operational".into(),
            json!({
                "lower": o.lower.to_f64(),
                "accept_mass": o.accept_mass.to_f64(),
                "residual": o.residual.to_f64(),
                "conditional": o.conditional(),
            }),
        );
    }
    if let Some(e) = &r.semantic {
        let _ = writeln!(text, "semantic {}", expectation_text(e));
        json.insert("semantic".into(), expectation_json(e));
        json.insert("prob_zero".into(), json!(r.prob_zero));
    }
    if let Some(u) = r.unresolved() {
        let _ = writeln!(text, "unresolved converging mass {}", fmt_float(u.max(0.0)));
        json.insert("unresolved".into(), json!(u.max(0.0)));
    }
    if mode == Mode::Both {
        let gap = r.gap();
        let _ = writeln!(text, "gap {}", gap.map(fmt_float).unwrap_or_else(|| "n/a".into()));
        json.insert("gap".into(), json!(gap));
    }
    Ok(Report { text: text.trim_end().to_string(), json: Value::Object(json), csv: None })
}

/// Inclusive grid `start..stop step s` or `start:stop:s` over rationals.
pub fn parse_grid(spec: &str) -> CliResult<Vec<Rat>> {
    let bad = || CliError::Domain(format!("bad grid `{spec}`: expected `a..b step s` or `a:b:s`"));
    let (a, b, step) = if let Some((range, step)) = spec.split_once("step") {
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        (a, b, step)
    } else {
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            [a, b, s] => (*a, *b, *s),
            _ => return Err(bad()),
        }
    };
    let (a, b, step): (Rat, Rat, Rat) =
        (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?, step.parse().map_err(|_| bad())?);
    if step.is_zero() || step.is_negative() {
        return Err(bad());
    }
    let mut out = Vec::new();
    let mut x = a;
    while x <= b {
        out.push(x.clone());
        x = &x + &step;
    }
    Ok(out)
}

pub fn cmd_sweep(template: &Path, param: &str, grid: &str, label: Option<&str>, s: &Settings) -> CliResult<Report> {
    let src = read_file(template)?;
    let hole = format!("{{{param}}}");
    if !src.contains(&hole) {
        return Err(CliError::Domain(format!("template has no `{hole}` placeholder")));
    }
    let points = parse_grid(grid)?;
    let mut csv = format!("{param},prob_zero,expectation\n");
    let mut rows = Vec::new();
    for q in &points {
        let term = parse(&src.replace(&hole, &q.to_string())).map_err(domain)?;
        let ty = typecheck_closed(&term).map_err(domain)?;
        if !ty.is_nat() {
            return Err(CliError::Domain(format!("template instance has type {ty}, expected nat")));
        }
        let l = pick_label(&term, label)?;
        let p = prob_zero::<f64>(&strip(&term), &s.sem).map_err(domain)?.value;
        let e = match expect_label_semantic(&term, &l, &s.sem).map_err(domain)? {
            Expectation::Finite(v) => v,
            Expectation::Diverged(Divergence::Tangent) => f64::INFINITY,
            Expectation::Diverged(Divergence::ZeroProbability) => f64::NAN,
        };
        let _ = writeln!(csv, "{},{},{}", fmt_float(q.to_f64()), fmt_float(p), fmt_float(e));
        rows.push(json!({ param: q.to_f64(), "prob_zero": p, "expectation": json_float(e) }));
    }
    Ok(Report { text: csv.trim_end().to_string(), json: json!({ "rows": rows }), csv: Some(csv) })
}

fn load_contexts(dir: &Path) -> CliResult<Vec<(String, Term)>> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppcf"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, load_term(p)?))
        })
        .collect()
}

pub fn cmd_dist(file1: &Path, file2: &Path, p: Option<&str>, contexts: Option<&Path>, s: &Settings) -> CliResult<Report> {
    let (m1, _) = load_closed(file1)?;
    let (m2, _) = load_closed(file2)?;
    let p: Option<Rat> = p.map(|p| p.parse().map_err(domain)).transpose()?;
    let mut ctxs = builtin_contexts();
    if let Some(dir) = contexts {
        ctxs.extend(load_contexts(dir)?);
    }
    let r = tamed_distance_estimate(&m1, &m2, p.as_ref(), &ctxs, &s.sem).map_err(domain)?;
    let mut text = String::new();
    for row in &r.rows {
        let _ = writeln!(text, "{} {} {} gap {}", row.context, fmt_float(row.prob1), fmt_float(row.prob2), fmt_float(row.gap));
    }
    let _ = write!(
        text,
        "distance {}\nempirical {}\nbound {}\nwithin-bound {}",
        fmt_float(r.denotational_distance),
        fmt_float(r.empirical),
        fmt_float(r.bound),
        r.within_bound(1e-9)
    );
    let json = json!({
        "p": p.as_ref().map(|p| p.to_string()),
        "distance": r.denotational_distance,
        "empirical": r.empirical,
        "bound": json_float(r.bound),
        "within_bound": r.within_bound(1e-9),
        "rows": r.rows.iter().map(|row| json!({
            "context": row.context, "prob1": row.prob1, "prob2": row.prob2, "gap": row.gap,
        })).collect::<Vec<_>>(),
    });
    Ok(Report { text, json, csv: Some(r.to_csv()) })
}

pub fn cmd_rel(
    file: &Path,
    mode: RelMode,
    max_multiset: Option<usize>,
    max_numeral: Option<u64>,
    max_depth: Option<usize>,
    s: &Settings,
) -> CliResult<Report> {
    let (term, ty) = load_closed(file)?;
    let mut bounds = SearchBounds::default();
    if let Some(v) = max_multiset {
        bounds.max_multiset_size = v;
    }
    if let Some(v) = max_numeral {
        bounds.max_numeral = v;
    }
    if let Some(v) = max_depth {
        bounds.max_depth = v;
    }
    match mode {
        RelMode::Points => {
            let ps = infer_points(&TyCtx::new(), &term, &ty, bounds).map_err(domain)?;
            let lines = ps.render(&term);
            let mut text = lines.join("\n");
            if ps.truncated {
                text.push_str("\nwarning: search bounds were hit; judgments may be missing");
            }
            Ok(Report { text, json: json!({ "judgments": lines, "truncated": ps.truncated }), csv: None })
        }
        RelMode::Support => {
            let r = support_match(&term, bounds, &s.limits()).map_err(domain)?;
            let fmt_set = |s: &std::collections::BTreeSet<u64>| {
                s.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ")
            };
            let text = format!(
                "relational {{{}}}\noperational {{{}}}\nmatch {}\nresidual {}{}",
                fmt_set(&r.relational),
                fmt_set(&r.operational),
                r.matches(),
                r.residual,
                if r.truncated { "\nwarning: search bounds were hit" } else { "" }
            );
            let json = json!({
                "relational": r.relational, "operational": r.operational, "skipped": r.skipped,
                "matches": r.matches(), "truncated": r.truncated, "residual": r.residual.to_string(),
            });
            Ok(Report { text, json, csv: None })
        }
        RelMode::Clique => {
            let r = clique_check(&term, bounds, s.fuel).map_err(domain)?;
            let mut text = format!("spied {}\n", r.spied);
            for (c, a) in &r.points {
                let _ = writeln!(text, "{c} ⊢ M : {a}");
            }
            let machine = r.machine.as_ref().map(|(n, mu)| format!("{n} {mu}"));
            let _ = write!(
                text,
                "clique size {}\nmachine {}\nconsistent {}",
                r.size(),
                machine.clone().unwrap_or_else(|| "no result within fuel".into()),
                r.consistent()
            );
            let json = json!({
                "size": r.size(), "consistent": r.consistent(), "machine": machine, "truncated": r.truncated,
            });
            Ok(Report { text, json, csv: None })
        }
    }
}

pub fn cmd_transform(kind: TransformKind, file: &Path, rates: Option<&str>, p: Option<&str>, ty: &str) -> CliResult<Report> {
    let term = load_term(file)?;
    let out = match kind {
        TransformKind::Strip => strip(&term),
        TransformKind::Spy => spy(&term, &spy_vars(&term), &TyCtx::new()).map_err(domain)?,
        TransformKind::Lcof => {
            let mut r = BTreeMap::new();
            for (l, v) in pairs(rates.unwrap_or(""), '=')? {
                r.insert(Label::new(&l), v.parse::<Rat>().map_err(domain)?);
            }
            lcof(&term, &r, &TyCtx::new()).map_err(domain)?
        }
        TransformKind::Tamed => {
            let p: Rat = p.ok_or_else(|| CliError::Domain("tamed needs -p".into()))?.parse().map_err(domain)?;
            let sigma = parse_type(ty).map_err(domain)?;
            tamed(&term, &p, &sigma).map_err(domain)?
        }
    };
    Ok(Report { text: out.to_string(), json: json!({ "term": out.to_string() }), csv: None })
}

pub fn execute(cli: &Cli) -> CliResult<Report> {
    let s = Settings::resolve(&cli.common)?;
    match &cli.command {
        Command::Check { file } => cmd_check(file),
        Command::Run { file, tape, label_tapes } => cmd_run(file, tape, label_tapes.as_deref(), &s),
        Command::Sample { file } => cmd_sample(file, &s),
        Command::Enumerate { file } => cmd_enumerate(file, &s),
        Command::Prob { file } => cmd_prob(file, &s),
        Command::Expect { file, label, mode } => cmd_expect(file, label.as_deref(), *mode, &s),
        Command::Sweep { template, param, grid, label } => cmd_sweep(template, param, grid, label.as_deref(), &s),
        Command::Dist { file1, file2, p, contexts } => cmd_dist(file1, file2, p.as_deref(), contexts.as_deref(), &s),
        Command::Rel { file, mode, max_multiset, max_numeral, max_depth } => {
            cmd_rel(file, *mode, *max_multiset, *max_numeral, *max_depth, &s)
        }
        Command::Transform { kind, file, rates, p, ty } => cmd_transform(*kind, file, rates.as_deref(), p.as_deref(), ty),
    }
}

/// Runs a parsed command line, writing to the given streams; returns the
/// process exit code.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = execute(cli).and_then(|report| {
        let body = if cli.common.json {
            serde_json::to_string_pretty(&report.json).expect("JSON values serialize")
        } else {
            report.text.clone()
        };
        if let Some(path) = &cli.common.out {
            let payload = report.csv.clone().unwrap_or_else(|| body.clone() + "\n");
            fs::write(path, payload).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        writeln!(stdout, "{body}").map_err(|e| CliError::Io(e.to_string()))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
