#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use biharmonic::coeffs::{CoefficientProfile, CoefficientSpec, ProfileSpec, WaveGeometry};
use biharmonic::eigen::{solve_spectrum, SpectralData};
use biharmonic::operator::DiscreteOperator;
use biharmonic::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_spec() -> ProfileSpec {
    ProfileSpec::constant(1.0, 1.0, 1.0, 0.0)
}

/// ρ = 1 + x, σ = 1 + x/2, q = x(1 − x) on [0, 1].
pub fn variable_spec() -> ProfileSpec {
    ProfileSpec {
        length: 1.0,
        rho: CoefficientSpec::Polynomial(vec![1.0, 1.0]),
        sigma: CoefficientSpec::Polynomial(vec![1.0, 0.5]),
        q: CoefficientSpec::Polynomial(vec![0.0, 1.0, -1.0]),
    }
}

pub fn profile(spec: &ProfileSpec) -> CoefficientProfile {
    CoefficientProfile::build(spec).unwrap()
}

pub fn geometry(spec: &ProfileSpec) -> WaveGeometry {
    WaveGeometry::new(&profile(spec), 4).unwrap()
}

pub fn operator(spec: &ProfileSpec, elements: usize) -> Arc<DiscreteOperator> {
    Arc::new(DiscreteOperator::assemble(&profile(spec), elements).unwrap())
}

pub fn spectrum(spec: &ProfileSpec, elements: usize, count: usize) -> SpectralData {
    solve_spectrum(operator(spec, elements), count).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Composite Gauss–Legendre on `[0, T]` with many panels, for oscillatory integrands.
pub fn fine_integral<F: Fn(f64) -> f64>(horizon: f64, panels: usize, f: F) -> f64 {
    let rule = biharmonic::quadrature::GaussLegendre::new(8);
    let h = horizon / panels as f64;
    (0..panels)
        .map(|p| rule.integrate(p as f64 * h, (p + 1) as f64 * h, &f))
        .sum()
}

// CLI helpers

pub const KINDS: [&str; 5] = ["spectrum", "asymptotics", "observability", "control", "simulate"];

pub fn cli_config(horizons: &str, elements: usize) -> String {
    format!(
        "[experiment]
elements = {elements}
modes = 12
horizons = {horizons}

[profile]
length = 1
[rho]
poly = [1, 1]
[sigma]
poly = [1, 0.5]
[q]
poly = [0, 1, -1]

[initial]
coefficients = [(1, 0), (1, 0)]

[control]
method = both
waveform_samples = 21
"
    )
}

pub fn run_cli(kind: &str, cfg: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join(format!("{kind}.cfg"));
    fs::write(&path, cfg).unwrap();
    Command::new(env!("CARGO_BIN_EXE_biharmonic"))
        .arg(kind)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join(kind))
        .args(extra)
        .output()
        .unwrap()
}

pub fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

pub fn json_keys(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::Object(m) => m.keys().cloned().collect::<Vec<_>>().join(","),
        _ => String::new(),
    }
}

/// Schema fingerprint of one run directory: CSV schema and header lines, JSON key sets.
pub fn fingerprint(kind: &str, dir: &Path) -> String {
    let mut out = String::new();
    for path in files(dir) {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let text = fs::read_to_string(&path).unwrap();
        if name.ends_with(".csv") {
            let mut lines = text.lines();
            let (schema, header) = (lines.next().unwrap(), lines.next().unwrap());
            out += &format!("{kind} {name} | {schema} | {header}\n");
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            out += &format!("{kind} {name} | {}", json_keys(&v));
            if let Some(s) = v.get("summary") {
                out += &format!(" | summary: {}", json_keys(s));
            }
            if let Some(s) = v.get("solutions").and_then(|s| s.as_array()) {
                let keys: BTreeSet<String> = s.iter().map(json_keys).collect();
                out += &format!(" | solutions: {}", keys.into_iter().collect::<Vec<_>>().join(" / "));
            }
            out += "\n";
        }
    }
    out
}

pub fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/schemas.txt")
}
