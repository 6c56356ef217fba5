//! Null controls from `x = ℓ` by the truncated moment method and by HUM.
//!
//! Steering `a(0)` to `a(T) = 0` in modes `1..=N` is the moment problem
//! `∫₀^T e^{−iλₙs} f(s) ds = mₙ`, `mₙ = i·aₙ(0)/(σ(ℓ)tₙ)`. Its minimum-norm solution
//! is `f = Σ βₖe^{iλₖt}` with `Gβ = m`. HUM reaches the same `f` through
//! `Λ = σ(ℓ)·diag(t)·G·diag(t)`: `Λc = i·a(0)` and `β = t∘c`.
//!
//! Every solution is verified by an independent closed-form forward solve.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{evolve_controlled, sobolev_norm, Control, ModalState};
use crate::eigen::{SpectralData, TRACE_FLOOR};
use crate::observability::{gram, quadratic_form, GramSystem};
use crate::{Error, Result};

pub const GRAM_CONDITION_CAP: f64 = 1e12;
pub const CG_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Moment,
    Hum,
}

#[derive(Debug, Clone, Copy)]
pub struct ControlOptions {
    pub gram_cap: f64,
    pub trace_floor: f64,
    pub cg_tolerance: f64,
    /// Iteration cap for conjugate gradients, as a multiple of the system size.
    pub cg_iterations_per_dim: usize,
}

impl Default for ControlOptions {
    fn default() -> Self {
        Self {
            gram_cap: GRAM_CONDITION_CAP,
            trace_floor: TRACE_FLOOR,
            cg_tolerance: CG_TOLERANCE,
            cg_iterations_per_dim: 4,
        }
    }
}

/// Moments of the modes that can be steered; modes with `|tₙ|` below the floor are
/// listed in `excluded` and left uncontrolled.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// 0-based mode indices, ascending.
    pub modes: Vec<usize>,
    pub values: Vec<Complex64>,
    pub excluded: Vec<usize>,
}

pub fn moments_for_null(state0: &ModalState, spec: &SpectralData, sigma_l: f64) -> Result<Moments> {
    moments_with_floor(state0, spec, sigma_l, TRACE_FLOOR)
}

fn moments_with_floor(
    state0: &ModalState,
    spec: &SpectralData,
    sigma_l: f64,
    floor: f64,
) -> Result<Moments> {
    state0.check_basis(spec)?;
    if !(sigma_l > 0.0) {
        return Err(Error::InvalidArgument(format!("σ(ℓ) must be positive, got {sigma_l}")));
    }
    let mut out = Moments {
        modes: Vec::new(),
        values: Vec::new(),
        excluded: Vec::new(),
    };
    for (n, &a) in state0.coefficients.iter().enumerate() {
        let t = spec.traces[n];
        if t.abs() < floor {
            out.excluded.push(n);
            continue;
        }
        out.modes.push(n);
        out.values.push(Complex64::new(0.0, 1.0) * a / (sigma_l * t));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CgDiagnostics {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// The direct solve was used because conjugate gradients did not converge.
    pub fell_back: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlSolution {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub method: Method,
    pub moments: Vec<Complex64>,
    pub frequencies: Vec<f64>,
    pub beta: Vec<Complex64>,
    pub control_norm: f64,
    /// `‖a(T)‖_{−½}/‖a(0)‖_{−½}` from the forward solve.
    pub residual_final: f64,
    pub gram_condition: f64,
    /// 0-based modes left uncontrolled because of a vanishing trace.
    pub excluded: Vec<usize>,
    /// HUM datum `c`, with `β = t∘c`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hum_datum: Option<Vec<Complex64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg: Option<CgDiagnostics>,
}

impl ControlSolution {
    pub fn control(&self) -> Control {
        Control::ExpSum {
            frequencies: self.frequencies.clone(),
            beta: self.beta.clone(),
        }
    }

    /// `g(t) = conj(f(T − t))`, again an exponential sum in the same frequencies.
    pub fn time_reversed(&self) -> Control {
        Control::ExpSum {
            frequencies: self.frequencies.clone(),
            beta: self
                .beta
                .iter()
                .zip(&self.frequencies)
                .map(|(b, &l)| b.conj() * Complex64::from_polar(1.0, -l * self.horizon))
                .collect(),
        }
    }

    /// `(t, f(t))` at `samples` uniform points of `[0, T]`, endpoints included.
    pub fn waveform(&self, samples: usize) -> Vec<(f64, Complex64)> {
        let f = self.control();
        let last = samples.max(2) - 1;
        (0..=last)
            .map(|j| {
                let t = self.horizon * j as f64 / last as f64;
                (t, f.eval(t))
            })
            .collect()
    }
}

/// `‖f − g‖_{L²(0,T)} / ‖g‖_{L²(0,T)}` for two controls on the same frequencies.
pub fn relative_l2_difference(f: &ControlSolution, g: &ControlSolution) -> Result<f64> {
    if f.frequencies != g.frequencies || f.horizon != g.horizon {
        return Err(Error::InvalidArgument(
            "controls use different frequencies or horizons".into(),
        ));
    }
    let system = gram(&g.frequencies, g.horizon, None)?;
    let diff: Vec<Complex64> = f.beta.iter().zip(&g.beta).map(|(a, b)| a - b).collect();
    let den = system.energy(&g.beta).sqrt();
    let num = system.energy(&diff).sqrt();
    Ok(if den > 0.0 { num / den } else { num })
}

fn gram_for(spec: &SpectralData, modes: &[usize], horizon: f64, cap: f64) -> Result<GramSystem> {
    let lambdas: Vec<f64> = modes.iter().map(|&n| spec.lambdas[n]).collect();
    let system = gram(&lambdas, horizon, None)?;
    if !(system.condition <= cap) {
        return Err(Error::Conditioning {
            condition: system.condition,
            cap,
        });
    }
    Ok(system)
}

fn check_horizon(state0: &ModalState, spec: &SpectralData, horizon: f64) -> Result<()> {
    state0.check_basis(spec)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if state0.is_empty() {
        return Err(Error::InvalidArgument("control of an empty modal state".into()));
    }
    Ok(())
}

fn cholesky_solve(a: &DMatrix<Complex64>, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    Ok(chol.solve(&DVector::from_column_slice(b)).iter().cloned().collect())
}

/// Forward solve and packaging shared by both routes.
#[allow(clippy::too_many_arguments)]
fn verify(
    state0: &ModalState,
    spec: &SpectralData,
    sigma_l: f64,
    horizon: f64,
    method: Method,
    moments: Moments,
    system: &GramSystem,
    beta: Vec<Complex64>,
) -> Result<ControlSolution> {
    let control = Control::ExpSum {
        frequencies: system.lambdas.clone(),
        beta: beta.clone(),
    };
    let end = evolve_controlled(state0, spec, sigma_l, &control, horizon)?;
    let initial = sobolev_norm(state0, -0.5);
    let last = sobolev_norm(&end, -0.5);
    Ok(ControlSolution {
        horizon,
        n: state0.len(),
        method,
        moments: moments.values,
        frequencies: system.lambdas.clone(),
        control_norm: quadratic_form(&system.g, &beta).max(0.0).sqrt(),
        beta,
        residual_final: if initial > 0.0 { last / initial } else { last },
        gram_condition: system.condition,
        excluded: moments.excluded,
        hum_datum: None,
        cg: None,
    })
}

/// Minimum-norm control in the span of `{e^{iλₖt}}` meeting the null moments.
pub fn synthesize_moment_control(
    state0: &ModalState,
    spec: &SpectralData,
    sigma_l: f64,
    horizon: f64,
    opts: &ControlOptions,
) -> Result<ControlSolution> {
    check_horizon(state0, spec, horizon)?;
    let moments = moments_with_floor(state0, spec, sigma_l, opts.trace_floor)?;
    let system = gram_for(spec, &moments.modes, horizon, opts.gram_cap)?;
    let beta = cholesky_solve(&system.g, &moments.values)?;
    verify(state0, spec, sigma_l, horizon, Method::Moment, moments, &system, beta)
}

/// `Λ[n][k] = σ(ℓ)tₙtₖG[n][k]` for the leading `n` modes.
pub fn hum_operator(spec: &SpectralData, horizon: f64, n: usize, sigma_l: f64) -> Result<DMatrix<Complex64>> {
    if n == 0 || n > spec.trusted_count {
        return Err(Error::InvalidArgument(format!(
            "HUM operator needs 1 ≤ N ≤ {}, got {n}",
            spec.trusted_count
        )));
    }
    let system = gram(&spec.lambdas[..n], horizon, Some(&spec.traces[..n]))?;
    Ok(system.weighted.expect("traces supplied") * Complex64::new(sigma_l, 0.0))
}

pub fn synthesize_hum_control(
    state0: &ModalState,
    spec: &SpectralData,
    sigma_l: f64,
    horizon: f64,
    opts: &ControlOptions,
) -> Result<ControlSolution> {
    check_horizon(state0, spec, horizon)?;
    let moments = moments_with_floor(state0, spec, sigma_l, opts.trace_floor)?;
    let system = gram_for(spec, &moments.modes, horizon, opts.gram_cap)?;
    let traces: Vec<f64> = moments.modes.iter().map(|&n| spec.traces[n]).collect();
    let k = traces.len();
    let lambda = DMatrix::from_fn(k, k, |m, j| system.g[(m, j)] * (sigma_l * traces[m] * traces[j]));
    let rhs: Vec<Complex64> = moments
        .modes
        .iter()
        .map(|&n| Complex64::new(0.0, 1.0) * state0.coefficients[n])
        .collect();
    let (datum, mut diagnostics) = conjugate_gradient(&lambda, &rhs, opts.cg_tolerance, opts.cg_iterations_per_dim * k + 10);
    let datum = if diagnostics.converged {
        datum
    } else {
        diagnostics.fell_back = true;
        cholesky_solve(&lambda, &rhs)?
    };
    let beta = datum.iter().zip(&traces).map(|(c, &t)| c * t).collect();
    let mut solution = verify(state0, spec, sigma_l, horizon, Method::Hum, moments, &system, beta)?;
    solution.hum_datum = Some(datum);
    solution.cg = Some(diagnostics);
    Ok(solution)
}

/// Conjugate gradients for a Hermitian positive definite `a`, from a zero start.
fn conjugate_gradient(
    a: &DMatrix<Complex64>,
    b: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> (Vec<Complex64>, CgDiagnostics) {
    let n = b.len();
    let b = DVector::from_column_slice(b);
    let bnorm = b.norm();
    let mut x = DVector::<Complex64>::zeros(n);
    let mut diag = CgDiagnostics {
        iterations: 0,
        relative_residual: 0.0,
        converged: true,
        fell_back: false,
    };
    if bnorm == 0.0 {
        return (x.iter().cloned().collect(), diag);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dotc(&r).re;
    diag.converged = false;
    for it in 1..=max_iter {
        let ap = a * &p;
        let alpha = rr / p.dotc(&ap).re;
        x += &p * Complex64::new(alpha, 0.0);
        // true residual each step: the systems are small and this keeps the stopping
        // test honest
        r = &b - a * &x;
        let rr_next = r.dotc(&r).re;
        diag.iterations = it;
        diag.relative_residual = rr_next.sqrt() / bnorm;
        if diag.relative_residual <= tol {
            diag.converged = true;
            break;
        }
        p = &r + &p * Complex64::new(rr_next / rr, 0.0);
        rr = rr_next;
    }
    (x.iter().cloned().collect(), diag)
}
