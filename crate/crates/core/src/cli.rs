//! Experiment configuration, orchestration and report files.
//!
//! Config grammar: `[section]` headers followed by `key = value` lines; `#` starts a
//! comment. Values are numbers, bare words, lists `[a, b, ...]` or lists of pairs
//! `[(x, v), ...]`.
//!
//! ```text
//! [experiment]
//! kind = control            # spectrum | asymptotics | observability | control | simulate
//! elements = 512
//! modes = 12
//! horizons = [0.5]
//! quadrature_order = 4
//! output = out              # overridden by --out
//! export_matrices = false
//!
//! [profile]
//! length = 1
//!
//! [rho]
//! poly = [1, 1]             # 1 + x
//! [sigma]
//! samples = [(0, 1), (0.5, 1.25), (1, 1.5)]
//! [q]                       # optional, default 0
//! poly = [0, 1, -1]
//!
//! [initial]                 # control and simulate
//! coefficients = [(1, 0), (1, 0)]
//!
//! [control]                 # optional
//! method = both             # moment | hum | both
//! gram_cap = 1e12
//! waveform_samples = 1001
//! ```
//!
//! Every CSV starts with `# schema: <name>/<version>` and a header row. Floats are
//! printed with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::Serialize;

use crate::asymptotics::{gap_report, spacing_report, trace_limit_report, AsymptoticModel};
use crate::coeffs::{CoefficientProfile, CoefficientSpec, ProfileSpec, WaveGeometry, DEFAULT_QUADRATURE_ORDER};
use crate::control::{
    relative_l2_difference, synthesize_hum_control, synthesize_moment_control, ControlOptions,
    ControlSolution, GRAM_CONDITION_CAP,
};
use crate::dynamics::{evolve_free, ModalState};
use crate::eigen::{solve_spectrum, validate_spectrum, SpectralData, ValidationReport};
use crate::observability::{observability_constants, ObservabilityReport};
use crate::operator::{DiscreteOperator, MIN_ELEMENTS};
use crate::{Error, ErrorClass};

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const CONDITIONING: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Spectrum,
    Asymptotics,
    Observability,
    Control,
    Simulate,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Spectrum => "spectrum",
            Kind::Asymptotics => "asymptotics",
            Kind::Observability => "observability",
            Kind::Control => "control",
            Kind::Simulate => "simulate",
        }
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "spectrum" => Kind::Spectrum,
            "asymptotics" => Kind::Asymptotics,
            "observability" => Kind::Observability,
            "control" => Kind::Control,
            "simulate" => Kind::Simulate,
            _ => return Err(format!("unknown experiment kind `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMethods {
    Moment,
    Hum,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlConfig {
    pub method: ControlMethods,
    pub gram_cap: f64,
    pub waveform_samples: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            method: ControlMethods::Both,
            gram_cap: GRAM_CONDITION_CAP,
            waveform_samples: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub profile: ProfileSpec,
    pub elements: usize,
    pub modes: usize,
    pub horizons: Vec<f64>,
    pub quadrature_order: usize,
    pub output: Option<PathBuf>,
    pub export_matrices: bool,
    pub initial: Option<Vec<Complex64>>,
    pub control: ControlConfig,
}

/// One problem found in a config file; `line` is 1-based, 0 for whole-file problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    Word(String),
    List(Vec<Value>),
    Tuple(Vec<Value>),
}

struct ValueParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> ValueParser<'a> {
    fn parse(text: &'a str) -> Result<Value, String> {
        let mut p = ValueParser {
            s: text.as_bytes(),
            pos: 0,
        };
        let v = p.value()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(format!("unexpected trailing input `{}`", &text[p.pos..]));
        }
        Ok(v)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Result<Value, String> {
        self.skip_ws();
        match self.s.get(self.pos) {
            None => Err("missing value".into()),
            Some(b'[') => self.seq(b']').map(Value::List),
            Some(b'(') => self.seq(b')').map(Value::Tuple),
            Some(_) => {
                let start = self.pos;
                while self.pos < self.s.len() && !b",)] \t".contains(&self.s[self.pos]) {
                    self.pos += 1;
                }
                let tok = std::str::from_utf8(&self.s[start..self.pos]).map_err(|e| e.to_string())?;
                if tok.is_empty() {
                    return Err(format!("unexpected `{}`", self.s[self.pos] as char));
                }
                Ok(match tok.parse::<f64>() {
                    Ok(x) => Value::Num(x),
                    Err(_) => Value::Word(tok.to_string()),
                })
            }
        }
    }

    fn seq(&mut self, close: u8) -> Result<Vec<Value>, String> {
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.s.get(self.pos) {
                None => return Err(format!("unclosed `{}`", if close == b']' { '[' } else { '(' })),
                Some(&c) if c == close => {
                    self.pos += 1;
                    return Ok(items);
                }
                _ => {}
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.s.get(self.pos) {
                Some(b',') => self.pos += 1,
                Some(&c) if c == close => {}
                Some(&c) => return Err(format!("expected `,` or `{}`, found `{}`", close as char, c as char)),
                None => return Err("unterminated list".into()),
            }
        }
    }
}

struct Entry {
    line: usize,
    raw: String,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "experiment",
        &["kind", "elements", "modes", "horizons", "quadrature_order", "output", "export_matrices"],
    ),
    ("profile", &["length"]),
    ("rho", &["poly", "samples"]),
    ("sigma", &["poly", "samples"]),
    ("q", &["poly", "samples"]),
    ("initial", &["coefficients"]),
    ("control", &["method", "gram_cap", "waveform_samples"]),
];

struct Collector {
    errors: Vec<ConfigError>,
}

impl Collector {
    fn push(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            message: message.into(),
        });
    }

    fn value(&mut self, section: &str, key: &str, e: &Entry) -> Option<Value> {
        match ValueParser::parse(&e.raw) {
            Ok(v) => Some(v),
            Err(msg) => {
                self.push(e.line, format!("[{section}] {key}: {msg}"));
                None
            }
        }
    }

    fn number(&mut self, section: &str, key: &str, e: &Entry) -> Option<f64> {
        match self.value(section, key, e)? {
            Value::Num(x) if x.is_finite() => Some(x),
            _ => {
                self.push(e.line, format!("[{section}] {key} must be a number, got `{}`", e.raw));
                None
            }
        }
    }

    fn positive_int(&mut self, section: &str, key: &str, e: &Entry) -> Option<usize> {
        let x = self.number(section, key, e)?;
        if x >= 1.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Some(x as usize)
        } else {
            self.push(e.line, format!("[{section}] {key} must be a positive integer, got {}", e.raw));
            None
        }
    }

    fn positive(&mut self, section: &str, key: &str, e: &Entry) -> Option<f64> {
        let x = self.number(section, key, e)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.push(e.line, format!("[{section}] {key} must be positive, got {}", e.raw));
            None
        }
    }

    fn numbers(&mut self, section: &str, key: &str, e: &Entry) -> Option<Vec<f64>> {
        match self.value(section, key, e)? {
            Value::List(items) => {
                let nums: Option<Vec<f64>> = items
                    .iter()
                    .map(|v| match v {
                        Value::Num(x) if x.is_finite() => Some(*x),
                        _ => None,
                    })
                    .collect();
                if nums.is_none() || items.is_empty() {
                    self.push(e.line, format!("[{section}] {key} must be a nonempty list of numbers"));
                }
                nums.filter(|v| !v.is_empty())
            }
            Value::Num(x) if x.is_finite() => Some(vec![x]),
            _ => {
                self.push(e.line, format!("[{section}] {key} must be a list of numbers"));
                None
            }
        }
    }

    fn pairs(&mut self, section: &str, key: &str, e: &Entry) -> Option<Vec<(f64, f64)>> {
        let bad = |c: &mut Self| {
            c.push(e.line, format!("[{section}] {key} must be a nonempty list of (a, b) pairs"));
            None
        };
        let Value::List(items) = self.value(section, key, e)? else {
            return bad(self);
        };
        let pairs: Option<Vec<(f64, f64)>> = items
            .iter()
            .map(|v| match v {
                Value::Tuple(t) => match t.as_slice() {
                    [Value::Num(a), Value::Num(b)] if a.is_finite() && b.is_finite() => Some((*a, *b)),
                    _ => None,
                },
                _ => None,
            })
            .collect();
        match pairs {
            Some(p) if !p.is_empty() => Some(p),
            _ => bad(self),
        }
    }
}

/// Parses and validates a config, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut c = Collector { errors: Vec::new() };
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']').map(str::trim) else {
                c.push(line, format!("malformed section header `{content}`"));
                current = None;
                continue;
            };
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                c.push(line, format!("unknown section [{name}]"));
                current = None;
                continue;
            }
            if let Some(prev) = sections.get(name) {
                if name == "profile" {
                    c.push(line, format!("exactly one profile section allowed (first at line {})", prev.line));
                } else {
                    c.push(line, format!("duplicate section [{name}] (first at line {})", prev.line));
                }
                current = None;
                continue;
            }
            sections.insert(
                name.to_string(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            c.push(line, format!("expected `key = value`, found `{content}`"));
            continue;
        };
        let key = key.trim();
        let Some(section) = current.as_deref() else {
            c.push(line, format!("key `{key}` outside of a known section"));
            continue;
        };
        let allowed = SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            c.push(line, format!("unknown key `{key}` in [{section}]"));
            continue;
        }
        let sec = sections.get_mut(section).expect("section registered");
        if let Some(prev) = sec.entries.get(key) {
            c.push(line, format!("duplicate key `{key}` in [{section}] (first at line {})", prev.line));
            continue;
        }
        sec.entries.insert(
            key.to_string(),
            Entry {
                line,
                raw: value.trim().to_string(),
            },
        );
    }

    for required in ["experiment", "profile", "rho", "sigma"] {
        if !sections.contains_key(required) {
            c.push(0, format!("missing section [{required}]"));
        }
    }

    let empty = Section {
        line: 0,
        entries: BTreeMap::new(),
    };
    let exp = sections.get("experiment").unwrap_or(&empty);
    let get = |s: &Section, k: &str| s.entries.get(k).map(|e| Entry { line: e.line, raw: e.raw.clone() });

    let kind = get(exp, "kind").and_then(|e| match e.raw.parse::<Kind>() {
        Ok(k) => Some(k),
        Err(msg) => {
            c.push(e.line, format!("[experiment] kind: {msg}"));
            None
        }
    });
    let elements = match get(exp, "elements") {
        Some(e) => c.positive_int("experiment", "elements", &e).and_then(|n| {
            if n < MIN_ELEMENTS {
                c.push(e.line, format!("[experiment] elements must be at least {MIN_ELEMENTS}, got {n}"));
                None
            } else {
                Some(n)
            }
        }),
        None => Some(512),
    };
    let modes = match get(exp, "modes") {
        Some(e) => c.positive_int("experiment", "modes", &e),
        None => Some(12),
    };
    let horizons = match get(exp, "horizons") {
        Some(e) => c.numbers("experiment", "horizons", &e).and_then(|v| {
            if v.iter().all(|t| *t > 0.0) {
                Some(v)
            } else {
                c.push(e.line, "[experiment] horizons must all be positive");
                None
            }
        }),
        None => Some(vec![1.0]),
    };
    let quadrature_order = match get(exp, "quadrature_order") {
        Some(e) => c.positive_int("experiment", "quadrature_order", &e).and_then(|n| {
            if n < 2 {
                c.push(e.line, "[experiment] quadrature_order must be at least 2");
                None
            } else {
                Some(n)
            }
        }),
        None => Some(DEFAULT_QUADRATURE_ORDER),
    };
    let output = get(exp, "output").map(|e| PathBuf::from(e.raw.trim_matches('"')));
    let export_matrices = match get(exp, "export_matrices") {
        Some(e) => match e.raw.as_str() {
            "true" => true,
            "false" => false,
            other => {
                c.push(e.line, format!("[experiment] export_matrices must be true or false, got `{other}`"));
                false
            }
        },
        None => false,
    };
    if let (Some(e), Some(m)) = (elements, modes) {
        if m > 2 * (e - 1) {
            let line = get(exp, "modes").map_or(0, |x| x.line);
            c.push(line, format!("[experiment] modes = {m} exceeds the {} unknowns", 2 * (e - 1)));
        }
    }

    let length = sections.get("profile").and_then(|s| match get(s, "length") {
        Some(e) => c.positive("profile", "length", &e),
        None => {
            c.push(s.line, "[profile] missing key `length`");
            None
        }
    });
    let mut coefficient = |name: &str, default: Option<CoefficientSpec>| -> Option<CoefficientSpec> {
        let Some(s) = sections.get(name) else {
            return default;
        };
        match (get(s, "poly"), get(s, "samples")) {
            (Some(e), None) => c.numbers(name, "poly", &e).map(CoefficientSpec::Polynomial),
            (None, Some(e)) => c.pairs(name, "samples", &e).map(CoefficientSpec::Samples),
            (Some(_), Some(e)) => {
                c.push(e.line, format!("[{name}] give either `poly` or `samples`, not both"));
                None
            }
            (None, None) => {
                c.push(s.line, format!("[{name}] needs `poly` or `samples`"));
                None
            }
        }
    };
    let rho = coefficient("rho", None);
    let sigma = coefficient("sigma", None);
    let q = coefficient("q", Some(CoefficientSpec::constant(0.0)));

    let initial = sections.get("initial").and_then(|s| match get(s, "coefficients") {
        Some(e) => c.pairs("initial", "coefficients", &e).map(|p| {
            p.into_iter().map(|(re, im)| Complex64::new(re, im)).collect::<Vec<_>>()
        }),
        None => {
            c.push(s.line, "[initial] missing key `coefficients`");
            None
        }
    });
    if let (Some(init), Some(m)) = (&initial, modes) {
        if init.len() > m {
            let line = sections["initial"].entries["coefficients"].line;
            c.push(line, format!("[initial] {} coefficients exceed modes = {m}", init.len()));
        }
    }

    let mut control = ControlConfig::default();
    if let Some(s) = sections.get("control") {
        if let Some(e) = get(s, "method") {
            match e.raw.as_str() {
                "moment" => control.method = ControlMethods::Moment,
                "hum" => control.method = ControlMethods::Hum,
                "both" => control.method = ControlMethods::Both,
                other => c.push(e.line, format!("[control] method must be moment, hum or both, got `{other}`")),
            }
        }
        if let Some(e) = get(s, "gram_cap") {
            if let Some(x) = c.positive("control", "gram_cap", &e) {
                control.gram_cap = x;
            }
        }
        if let Some(e) = get(s, "waveform_samples") {
            if let Some(n) = c.positive_int("control", "waveform_samples", &e) {
                if n < 2 {
                    c.push(e.line, "[control] waveform_samples must be at least 2");
                } else {
                    control.waveform_samples = n;
                }
            }
        }
    }
    if matches!(kind, Some(Kind::Control | Kind::Simulate)) && initial.is_none() && !sections.contains_key("initial") {
        c.push(0, format!("missing section [initial] required by kind = {}", kind.unwrap().name()));
    }

    if !c.errors.is_empty() {
        c.errors.sort_by_key(|e| e.line);
        return Err(ConfigErrors(c.errors));
    }
    Ok(ExperimentConfig {
        kind,
        profile: ProfileSpec {
            length: length.expect("validated"),
            rho: rho.expect("validated"),
            sigma: sigma.expect("validated"),
            q: q.expect("validated"),
        },
        elements: elements.expect("validated"),
        modes: modes.expect("validated"),
        horizons: horizons.expect("validated"),
        quadrature_order: quadrature_order.expect("validated"),
        output,
        export_matrices,
        initial,
        control,
    })
}

/// Failure of a run, classified for the exit code.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigErrors),
    Library(Error),
    Io(io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => exit::CONFIG,
            RunError::Io(_) => exit::IO,
            RunError::Library(e) => match e.class() {
                ErrorClass::Input => exit::CONFIG,
                ErrorClass::Numerical => exit::NUMERICAL,
                ErrorClass::Conditioning => exit::CONDITIONING,
            },
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error:\n{e}"),
            RunError::Library(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Library(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: String,
    pub kind: Kind,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
    /// Wall-clock timings per stage. Not written to any output file, so outputs stay
    /// byte-identical across runs.
    #[serde(skip)]
    pub timings: Vec<(String, Duration)>,
}

/// Float formatting shared by every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes files into one directory and removes them all if the run fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new(dir: &Path) -> io::Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            committed: false,
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, contents)
    }

    fn csv(&mut self, name: &str, schema: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        self.write(name, &csv_text(schema, header, rows))
    }

    fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

pub fn csv_text(schema: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("# schema: {schema}/{SCHEMA_VERSION}\n{}\n", header.join(","));
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Maps `f` over `items` on up to `threads` scoped workers, preserving order.
fn parallel_map<T: Sync, R: Send, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

struct Pipeline {
    geometry: WaveGeometry,
    spectrum: SpectralData,
}

fn build_pipeline(cfg: &ExperimentConfig, timings: &mut Vec<(String, Duration)>) -> Result<Pipeline, RunError> {
    let t0 = Instant::now();
    let profile = CoefficientProfile::build(&cfg.profile)?;
    let geometry = WaveGeometry::new(&profile, cfg.quadrature_order)?;
    let op = Arc::new(DiscreteOperator::assemble(&profile, cfg.elements)?);
    timings.push(("assemble".into(), t0.elapsed()));
    let t1 = Instant::now();
    let spectrum = solve_spectrum(op, cfg.modes)?;
    timings.push(("eigensolve".into(), t1.elapsed()));
    Ok(Pipeline {
        geometry,
        spectrum,
    })
}

fn spectrum_rows(s: &SpectralData) -> Vec<Vec<String>> {
    (0..s.len())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                fmt_f64(s.lambdas[i]),
                fmt_f64(s.mus[i]),
                fmt_f64(s.traces[i]),
                fmt_f64(s.residuals[i]),
            ]
        })
        .collect()
}

fn initial_state(cfg: &ExperimentConfig, spec: &SpectralData) -> Result<ModalState, RunError> {
    let mut c = cfg.initial.clone().unwrap_or_default();
    c.resize(cfg.modes.min(spec.trusted_count), Complex64::new(0.0, 0.0));
    if cfg.initial.as_ref().is_some_and(|i| i.len() > c.len()) {
        return Err(Error::InvalidArgument(format!(
            "initial data has more coefficients than the {} trusted modes",
            spec.trusted_count
        ))
        .into());
    }
    Ok(ModalState::new(spec, c)?)
}

/// Runs `config` (with the subcommand's kind) and writes its outputs into `out`.
pub fn run(kind: Kind, config: &ExperimentConfig, out: &Path, threads: usize) -> Result<RunReport, RunError> {
    if let Some(k) = config.kind {
        if k != kind {
            return Err(RunError::Config(ConfigErrors(vec![ConfigError {
                line: 0,
                message: format!("config declares kind = {}, command is {}", k.name(), kind.name()),
            }])));
        }
    }
    if matches!(kind, Kind::Control | Kind::Simulate) && config.initial.is_none() {
        return Err(RunError::Config(ConfigErrors(vec![ConfigError {
            line: 0,
            message: format!("missing section [initial] required by {}", kind.name()),
        }])));
    }
    let mut timings = Vec::new();
    let p = build_pipeline(config, &mut timings)?;
    let mut files = Outputs::new(out)?;
    let spec = &p.spectrum;

    files.csv(
        "spectrum.csv",
        "spectrum",
        &["n", "lambda", "mu", "trace", "residual"],
        &spectrum_rows(spec),
    )?;
    if config.export_matrices {
        let op = spec.operator();
        let mut rows = Vec::new();
        for i in 0..op.dim() {
            for j in i.saturating_sub(op.stiffness.bandwidth())..=i {
                rows.push(vec![
                    i.to_string(),
                    j.to_string(),
                    fmt_f64(op.stiffness.get(i, j)),
                    fmt_f64(op.mass.get(i, j)),
                ]);
            }
        }
        files.csv("matrices.csv", "matrices", &["i", "j", "stiffness", "mass"], &rows)?;
    }
    let validation = validate_spectrum(spec);

    let t0 = Instant::now();
    let summary = match kind {
        Kind::Spectrum => spectrum_summary(spec, &validation),
        Kind::Asymptotics => run_asymptotics(&p, &mut files)?,
        Kind::Observability => run_observability(config, spec, &mut files, threads)?,
        Kind::Control => run_control(config, &p, &mut files, threads)?,
        Kind::Simulate => run_simulate(config, spec, &mut files)?,
    };
    timings.push((kind.name().into(), t0.elapsed()));

    let mut summary = summary;
    if let serde_json::Value::Object(map) = &mut summary {
        map.insert("validation_pass".into(), validation.pass.into());
        map.insert("trusted_count".into(), spec.trusted_count.into());
        map.insert("gamma".into(), p.geometry.gamma.into());
    }
    let mut report = RunReport {
        schema: format!("run_report/{SCHEMA_VERSION}"),
        kind,
        files: Vec::new(),
        summary,
        timings,
    };
    let mut names = files.names();
    names.push("run_report.json".into());
    report.files = names;
    let json = serde_json::to_string_pretty(&report).map_err(|e| io::Error::other(e.to_string()))?;
    files.write("run_report.json", &(json + "\n"))?;
    files.committed = true;
    Ok(report)
}

fn spectrum_summary(spec: &SpectralData, v: &ValidationReport) -> serde_json::Value {
    serde_json::json!({
        "modes": spec.len(),
        "lambda_1": spec.lambdas[0],
        "max_residual": spec.residuals.iter().cloned().fold(0.0, f64::max),
        "validation_checked": v.checked,
    })
}

fn run_asymptotics(p: &Pipeline, files: &mut Outputs) -> Result<serde_json::Value, RunError> {
    let spec = &p.spectrum;
    let spacing = spacing_report(spec, &p.geometry)?;
    let gaps = gap_report(spec, &p.geometry)?;
    let traces = trace_limit_report(spec, &p.geometry)?;
    let model = AsymptoticModel::new(p.geometry.clone(), spec.len())?;
    files.csv(
        "spacing.csv",
        "spacing",
        &["n", "delta_mu", "normalized"],
        &spacing
            .rows
            .iter()
            .map(|r| vec![r.n.to_string(), fmt_f64(r.delta_mu), fmt_f64(r.normalized)])
            .collect::<Vec<_>>(),
    )?;
    files.csv(
        "gap.csv",
        "gap",
        &["n", "gap", "normalized", "midpoint"],
        &gaps
            .rows
            .iter()
            .map(|r| vec![r.n.to_string(), fmt_f64(r.gap), fmt_f64(r.normalized), fmt_f64(r.midpoint)])
            .collect::<Vec<_>>(),
    )?;
    files.csv(
        "trace.csv",
        "trace",
        &["n", "scaled_trace", "ratio"],
        &traces
            .rows
            .iter()
            .map(|r| vec![r.n.to_string(), fmt_f64(r.scaled), fmt_f64(r.ratio)])
            .collect::<Vec<_>>(),
    )?;
    files.csv(
        "roots.csv",
        "roots",
        &["n", "mu_tilde", "mu"],
        &model
            .mu_tilde
            .iter()
            .zip(&spec.mus)
            .enumerate()
            .map(|(i, (a, b))| vec![(i + 1).to_string(), fmt_f64(*a), fmt_f64(*b)])
            .collect::<Vec<_>>(),
    )?;
    Ok(serde_json::json!({
        "index_offset": spacing.index_offset,
        "gap_bounded": gaps.bounded,
        "gaps_increasing": gaps.increasing,
        "trace_limit": traces.limit,
    }))
}

fn run_observability(
    cfg: &ExperimentConfig,
    spec: &SpectralData,
    files: &mut Outputs,
    threads: usize,
) -> Result<serde_json::Value, RunError> {
    let n = cfg.modes.min(spec.trusted_count);
    let reports: Vec<Result<ObservabilityReport, Error>> =
        parallel_map(&cfg.horizons, threads, |&t| observability_constants(spec, t, n));
    let reports: Vec<ObservabilityReport> = reports.into_iter().collect::<Result<_, _>>()?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.horizon),
                r.n.to_string(),
                fmt_f64(r.c_lower),
                fmt_f64(r.c_upper),
                fmt_f64(r.condition),
                fmt_f64(r.density.unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    files.csv(
        "observability.csv",
        "observability",
        &["T", "N", "c_T", "C_T", "condition", "density_estimate"],
        &rows,
    )?;
    Ok(serde_json::json!({
        "N": n,
        "all_resolved": reports.iter().all(|r| r.resolved),
    }))
}

fn run_control(
    cfg: &ExperimentConfig,
    p: &Pipeline,
    files: &mut Outputs,
    threads: usize,
) -> Result<serde_json::Value, RunError> {
    let spec = &p.spectrum;
    let state0 = initial_state(cfg, spec)?;
    let sigma_l = spec.sigma_end();
    let opts = ControlOptions {
        gram_cap: cfg.control.gram_cap,
        ..ControlOptions::default()
    };
    let cells: Vec<Result<Vec<ControlSolution>, Error>> = parallel_map(&cfg.horizons, threads, |&t| {
        let mut out = Vec::new();
        if cfg.control.method != ControlMethods::Hum {
            out.push(synthesize_moment_control(&state0, spec, sigma_l, t, &opts)?);
        }
        if cfg.control.method != ControlMethods::Moment {
            out.push(synthesize_hum_control(&state0, spec, sigma_l, t, &opts)?);
        }
        Ok(out)
    });
    let cells: Vec<Vec<ControlSolution>> = cells.into_iter().collect::<Result<_, _>>()?;

    let mut waveform = Vec::new();
    let mut agreement = Vec::new();
    for cell in &cells {
        for s in cell {
            for (t, f) in s.waveform(cfg.control.waveform_samples) {
                waveform.push(vec![
                    serde_json::to_value(s.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    fmt_f64(s.horizon),
                    fmt_f64(t),
                    fmt_f64(f.re),
                    fmt_f64(f.im),
                ]);
            }
        }
        if let [a, b] = cell.as_slice() {
            agreement.push(relative_l2_difference(b, a)?);
        }
    }
    let solutions: Vec<&ControlSolution> = cells.iter().flatten().collect();
    let report = serde_json::json!({
        "schema": format!("control_report/{SCHEMA_VERSION}"),
        "solutions": solutions,
    });
    let json = serde_json::to_string_pretty(&report).map_err(|e| io::Error::other(e.to_string()))?;
    files.write("control_report.json", &(json + "\n"))?;
    files.csv("control_waveform.csv", "control_waveform", &["method", "T", "t", "re_f", "im_f"], &waveform)?;
    Ok(serde_json::json!({
        "N": state0.len(),
        "max_residual_final": solutions.iter().map(|s| s.residual_final).fold(0.0, f64::max),
        "method_agreement": agreement,
    }))
}

fn run_simulate(cfg: &ExperimentConfig, spec: &SpectralData, files: &mut Outputs) -> Result<serde_json::Value, RunError> {
    let state0 = initial_state(cfg, spec)?;
    let state_rows = |s: &ModalState| -> Vec<Vec<String>> {
        s.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| vec![(i + 1).to_string(), fmt_f64(c.re), fmt_f64(c.im)])
            .collect()
    };
    files.csv("state_0.csv", "state", &["n", "re_c", "im_c"], &state_rows(&state0))?;
    let mut norms = vec![norm_row(&state0)];
    for (k, &t) in cfg.horizons.iter().enumerate() {
        let s = evolve_free(&state0, t);
        files.csv(&format!("state_{}.csv", k + 1), "state", &["n", "re_c", "im_c"], &state_rows(&s))?;
        norms.push(norm_row(&s));
    }
    files.csv("norms.csv", "norms", &["t", "norm_minus_half", "norm_zero", "norm_half"], &norms)?;
    Ok(serde_json::json!({ "N": state0.len(), "snapshots": cfg.horizons.len() + 1 }))
}

fn norm_row(s: &ModalState) -> Vec<String> {
    vec![
        fmt_f64(s.time),
        fmt_f64(s.sobolev_norm(-0.5)),
        fmt_f64(s.sobolev_norm(0.0)),
        fmt_f64(s.sobolev_norm(0.5)),
    ]
}

/// Reads, parses and runs a config file. Output directory: `out`, else the config's
/// `output`, else `./out`.
pub fn run_file(kind: Kind, config: &Path, out: Option<&Path>, threads: usize) -> Result<RunReport, RunError> {
    let text = fs::read_to_string(config)?;
    let cfg = parse_config(&text).map_err(RunError::Config)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    run(kind, &cfg, &dir, threads)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[experiment]\nkind = spectrum\n[profile]\nlength = 1\n[rho]\npoly = [1]\n[sigma]\npoly = [1]\n";

    #[test]
    fn parses_minimal_config() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.kind, Some(Kind::Spectrum));
        assert_eq!(cfg.elements, 512);
        assert_eq!(cfg.profile.q, CoefficientSpec::constant(0.0));
    }

    #[test]
    fn negative_elements_named_with_line() {
        let text = MINIMAL.replace("kind = spectrum", "kind = spectrum\nelements = -4");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, 3);
        assert!(err.0[0].message.contains("elements"));
    }

    #[test]
    fn two_profiles_rejected() {
        let text = format!("{MINIMAL}[profile]\nlength = 2\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.0.iter().any(|e| e.message.contains("exactly one profile section") && e.line == 9));
    }

    #[test]
    fn collects_all_errors() {
        let text = "[experiment]\nkind = wobble\nmodes = 0\nbogus = 1\n[profile]\n[rho]\nsamples = [(0, 1), 2]\n[nonsense]\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        for l in [0, 2, 3, 4, 5, 7, 8] {
            assert!(lines.contains(&l), "missing error on line {l}: {err}");
        }
    }

    #[test]
    fn value_grammar() {
        assert_eq!(ValueParser::parse("1e-3").unwrap(), Value::Num(1e-3));
        assert_eq!(
            ValueParser::parse("[(0, 1), (0.5,2)]").unwrap(),
            Value::List(vec![
                Value::Tuple(vec![Value::Num(0.0), Value::Num(1.0)]),
                Value::Tuple(vec![Value::Num(0.5), Value::Num(2.0)]),
            ])
        );
        assert!(ValueParser::parse("[1, 2").is_err());
        assert!(ValueParser::parse("[1 2]").is_err());
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<u32> = (0..37).collect();
        assert_eq!(parallel_map(&items, 4, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
