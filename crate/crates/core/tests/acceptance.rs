//! Acceptance suite: one PASS/FAIL line per criterion, in order. Exits nonzero if any
//! criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use biharmonic::asymptotics::{
    characteristic_roots, gap_report, spacing_report, trace_limit_gamma, trace_limit_report,
};
use biharmonic::control::{
    relative_l2_difference, synthesize_hum_control, synthesize_moment_control, ControlOptions,
};
use biharmonic::dynamics::{evolve_controlled, evolve_free, sobolev_norm, Control, ModalState};
use biharmonic::eigen::validate_spectrum;
use biharmonic::observability::{beurling_density, gram, observability_constants};
use biharmonic::Complex64;
use common::*;
use rand::Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let s = spectrum(&unit_spec(), 512, 8);
    let elapsed = start.elapsed().as_secs_f64();
    let roots = characteristic_roots(1.0, 8).unwrap();
    let worst = s.mus.iter().zip(&roots).map(|(m, r)| (m - r).abs() / r).fold(0.0, f64::max);
    let pinned = [4.730_040_744_9, 7.853_204_624_1, 10.995_607_838_0];
    let pinned_ok = pinned.iter().zip(&s.mus).all(|(p, m)| (m - p).abs() / p <= 1e-6);
    outcome(
        worst <= 1e-6 && pinned_ok && elapsed <= 30.0,
        format!("max rel |μₙ − μ̃ₙ|/μ̃ₙ (n ≤ 8) = {worst:.2e} (tol 1e-6), μ₁ = {:.10}, {elapsed:.3} s", s.mus[0]),
    )
}

fn spacing_law() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, spec, tol) in [("constant", unit_spec(), 1e-3), ("variable", variable_spec(), 1e-2)] {
        let s = spectrum(&spec, 2048, 30);
        let report = spacing_report(&s, &geometry(&spec)).unwrap();
        let worst = report
            .rows
            .iter()
            .filter(|r| (15..=24).contains(&r.n))
            .map(|r| (r.normalized - 1.0).abs())
            .fold(0.0, f64::max);
        pass &= worst <= tol;
        parts.push(format!("{name}: max |Δμγ/π − 1| = {worst:.2e} (tol {tol:.0e})"));
    }
    outcome(pass, parts.join("; "))
}

fn gap_law() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, spec) in [("constant", unit_spec()), ("variable", variable_spec())] {
        let s = spectrum(&spec, 2048, 60);
        let report = gap_report(&s, &geometry(&spec)).unwrap();
        let window: Vec<_> = report.rows.iter().filter(|r| (15..=24).contains(&r.n)).collect();
        let lo = window.iter().map(|r| r.normalized).fold(f64::INFINITY, f64::min);
        let hi = window.iter().map(|r| r.normalized).fold(0.0, f64::max);
        let mid = window.iter().map(|r| (r.midpoint - 1.0).abs()).fold(0.0, f64::max);
        // same gaps with the index shifted by one, as in the (n − ½) enumeration
        let c = (std::f64::consts::PI / geometry(&spec).gamma).powi(4);
        let shifted: Vec<f64> = report.rows[13..23]
            .iter()
            .map(|r| r.gap / (4.0 * (r.n as f64 + 1.5).powi(3) * c))
            .collect();
        let (slo, shi) = (shifted.iter().cloned().fold(f64::INFINITY, f64::min), shifted.iter().cloned().fold(0.0, f64::max));
        let in_band = lo >= 0.9 && hi <= 1.1;
        pass &= in_band && report.bounded && report.increasing;
        parts.push(format!(
            "{name}: normalized ∈ [{lo:.5}, {hi:.5}] (band [0.9, 1.1]), ≍ bounded {} for 2 ≤ n ≤ {}, \
             supplementary: midpoint-normalized max |·−1| = {mid:.1e}, shifted-index range [{slo:.5}, {shi:.5}]",
            report.bounded, s.trusted_count
        ));
    }
    outcome(pass, parts.join("; "))
}

fn trace_asymptote() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, spec) in [("constant", unit_spec()), ("variable", variable_spec())] {
        let s = spectrum(&spec, 2048, 20);
        let g = geometry(&spec);
        let limit = trace_limit_gamma(&g);
        let worst = (9..15)
            .map(|i| (s.traces[i].abs() / s.lambdas[i].sqrt() / limit - 1.0).abs())
            .fold(0.0, f64::max);
        let natural = trace_limit_report(&s, &g).unwrap();
        let natural_worst = natural.rows[9..15].iter().map(|r| (r.ratio - 1.0).abs()).fold(0.0, f64::max);
        pass &= worst <= 0.04;
        parts.push(format!(
            "{name}: max |ratio − 1| = {worst:.2e} (tol 4e-2); against the √γ-normalized limit {natural_worst:.1e}"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn simplicity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, spec) in [("constant", unit_spec()), ("variable", variable_spec())] {
        let s = spectrum(&spec, 512, 51);
        let report = validate_spectrum(&s);
        let min_gap = report.modes.iter().filter_map(|m| m.relative_gap).fold(f64::INFINITY, f64::min);
        let min_trace = report.modes.iter().map(|m| m.trace_abs).fold(f64::INFINITY, f64::min);
        pass &= report.pass && report.checked == s.trusted_count;
        parts.push(format!(
            "{name}: {} modes checked, min rel gap {min_gap:.2e}, min |tₙ| {min_trace:.3e}",
            report.checked
        ));
    }
    outcome(pass, parts.join("; "))
}

fn energy_conservation() -> Outcome {
    let s = spectrum(&variable_spec(), 512, 12);
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let state = ModalState::new(&s, random_complex(&mut r, 12)).unwrap();
        let t = r.gen_range(-10.0..10.0);
        let moved = evolve_free(&state, t);
        for theta in [-0.5, 0.0, 0.5] {
            let (a, b) = (sobolev_norm(&state, theta), sobolev_norm(&moved, theta));
            worst = worst.max((a - b).abs() / a);
        }
    }
    outcome(worst <= 1e-12, format!("max rel drift over 100 states, θ ∈ {{−½, 0, ½}}: {worst:.2e} (tol 1e-12)"))
}

fn observability() -> Outcome {
    let s = spectrum(&unit_spec(), 512, 12);
    let mut r = rng(7);
    let mut pass = true;
    let mut parts = Vec::new();
    let mut lows = Vec::new();
    for horizon in [0.1, 1.0] {
        let report = observability_constants(&s, horizon, 12).unwrap();
        let g = gram(&s.lambdas, horizon, None).unwrap();
        let mut escaped = 0;
        for _ in 0..100 {
            let c = random_complex(&mut r, 12);
            let d: Vec<Complex64> = c.iter().zip(&s.traces).map(|(c, t)| c * t).collect();
            let h2: f64 = c.iter().zip(&s.lambdas).map(|(c, l)| l * c.norm_sqr()).sum();
            let q = g.energy(&d) / h2;
            if q < report.c_lower * (1.0 - 1e-8) || q > report.c_upper * (1.0 + 1e-8) {
                escaped += 1;
            }
        }
        pass &= report.c_lower > 0.0 && escaped == 0;
        lows.push(report.c_lower);
        parts.push(format!(
            "T={horizon}: c_T = {:.4e}, C_T = {:.4e}, {escaped}/100 outside",
            report.c_lower, report.c_upper
        ));
    }
    pass &= lows[1] >= lows[0];
    outcome(pass, parts.join("; "))
}

fn beurling() -> Outcome {
    let lambdas: Vec<f64> = characteristic_roots(1.0, 200).unwrap().iter().map(|m| m.powi(4)).collect();
    let rmax = lambdas[199] / 10.0;
    let grid: Vec<f64> = [1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0].iter().map(|f| f * rmax).collect();
    let report = beurling_density(&lambdas, &grid).unwrap();
    let last = report.estimates.last().unwrap().1;
    outcome(
        last <= 0.05 && report.nonincreasing,
        format!(
            "estimate at r = λ₂₀₀/10: {last:.3e} (tol 0.05), decreasing over {} windows: {}",
            grid.len(),
            report.nonincreasing
        ),
    )
}

fn null_control() -> Outcome {
    let s = spectrum(&unit_spec(), 512, 12);
    let opts = ControlOptions::default();
    let mut data = Vec::new();
    let mut two = vec![Complex64::new(0.0, 0.0); 12];
    two[0] = Complex64::new(1.0, 0.0);
    two[1] = Complex64::new(1.0, 0.0);
    data.push(two);
    let mut r = rng(9);
    for _ in 0..10 {
        data.push(random_complex(&mut r, 12));
    }
    let (mut residual, mut agreement, mut slowest): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut failures = 0;
    for c in data {
        let state = ModalState::new(&s, c).unwrap();
        let t0 = Instant::now();
        let moment = synthesize_moment_control(&state, &s, 1.0, 0.5, &opts);
        let t1 = Instant::now();
        let hum = synthesize_hum_control(&state, &s, 1.0, 0.5, &opts);
        slowest = slowest.max((t1 - t0).as_secs_f64()).max(t1.elapsed().as_secs_f64());
        match (moment, hum) {
            (Ok(m), Ok(h)) => {
                residual = residual.max(m.residual_final).max(h.residual_final);
                agreement = agreement.max(relative_l2_difference(&h, &m).unwrap());
            }
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0 && residual <= 1e-8 && agreement <= 1e-8 && slowest <= 10.0,
        format!(
            "11 data: max residual {residual:.2e}, max moment/HUM L² difference {agreement:.2e} (tol 1e-8), \
             slowest synthesis {slowest:.3} s"
        ),
    )
}

fn well_posedness() -> Outcome {
    let s = spectrum(&variable_spec(), 512, 12);
    let sigma = s.sigma_end();
    let horizon: f64 = 1.0;
    let constant = sigma * horizon.sqrt() * s.traces.iter().zip(&s.lambdas).map(|(t, l)| t * t / l).sum::<f64>().sqrt();
    let bound = constant.max(1.0);
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let state = ModalState::new(&s, random_complex(&mut r, 12)).unwrap();
        let frequencies: Vec<f64> = (0..6).map(|_| r.gen_range(-2.0 * s.lambdas[11]..2.0 * s.lambdas[11])).collect();
        let beta = random_complex(&mut r, 6);
        let fnorm = gram(&frequencies, horizon, None).unwrap().energy(&beta).sqrt();
        let f = Control::ExpSum { frequencies, beta };
        let denom = sobolev_norm(&state, -0.5) + fnorm;
        for j in 1..=40 {
            let y = evolve_controlled(&state, &s, sigma, &f, horizon * j as f64 / 40.0).unwrap();
            worst = worst.max(sobolev_norm(&y, -0.5) / denom);
        }
    }
    outcome(
        worst.is_finite() && worst <= bound * (1.0 + 1e-12),
        format!("sup quotient over 100 (y⁰, f): {worst:.4e}; configuration constant max(1, σ(ℓ)√T‖t/√λ‖) = {bound:.4e}"),
    )
}

fn determinism_and_schema() -> Outcome {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut identical = true;
    let mut fingerprints = String::new();
    for kind in KINDS {
        let cfg = cli_config("[0.5, 1]", 128);
        let ok = run_cli(kind, &cfg, a.path(), &[]).status.success()
            && run_cli(kind, &cfg, b.path(), &["--threads", "4"]).status.success();
        if !ok {
            return outcome(false, format!("{kind} run failed"));
        }
        for (x, y) in files(&a.path().join(kind)).iter().zip(files(&b.path().join(kind))) {
            identical &= fs::read(x).unwrap() == fs::read(&y).unwrap();
        }
        run_cli(kind, &cfg, c.path(), &[]);
        fingerprints += &fingerprint(kind, &c.path().join(kind));
    }
    let golden = fs::read_to_string(golden_path()).unwrap_or_default();
    let schema_ok = fingerprints == golden;
    outcome(
        identical && schema_ok,
        format!("5 subcommands rerun byte-identical: {identical}; golden schemas match: {schema_ok}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("clamped-beam oracle equivalence", oracle_equivalence),
        ("μ-spacing law", spacing_law),
        ("cubic gap law", gap_law),
        ("trace asymptote", trace_asymptote),
        ("simplicity and trace nonvanishing", simplicity),
        ("energy conservation", energy_conservation),
        ("observability", observability),
        ("Beurling density", beurling),
        ("null control", null_control),
        ("well-posedness bound", well_posedness),
        ("determinism and schema", determinism_and_schema),
    ];
    let mut passed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        passed += o.pass as usize;
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
    if passed == criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
