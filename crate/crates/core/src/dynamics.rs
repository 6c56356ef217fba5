//! Modal states `y(t) = Σ aₙ(t) Φₙ` and their evolution.
//!
//! The controlled system in modal form is `aₙ′ = iλₙaₙ + iσ(ℓ)tₙ f(t)`, so
//!
//! ```text
//! aₙ(T) = e^{iλₙT} (aₙ(0) + iσ(ℓ)tₙ ∫₀^T e^{−iλₙs} f(s) ds).
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::SpectralData;
use crate::operator::HermiteField;
use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Minimum samples per period of the fastest retained mode for tabulated controls.
pub const SAMPLES_PER_PERIOD: f64 = 20.0;
const PROJECTION_POINTS: usize = 6;
/// Minimum samples per element for projecting sampled initial data.
pub const SAMPLES_PER_ELEMENT: usize = 4;

/// Complex modal coefficients at time `time`, tied to one spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalState {
    pub coefficients: Vec<Complex64>,
    pub lambdas: Vec<f64>,
    pub time: f64,
    pub basis_id: u64,
}

impl ModalState {
    /// State with the given leading coefficients, at time 0.
    pub fn new(spec: &SpectralData, coefficients: Vec<Complex64>) -> Result<Self> {
        let n = coefficients.len();
        if n > spec.trusted_count {
            return Err(Error::InvalidArgument(format!(
                "{n} modal coefficients exceed the {} trusted modes",
                spec.trusted_count
            )));
        }
        Ok(Self {
            coefficients,
            lambdas: spec.lambdas[..n].to_vec(),
            time: 0.0,
            basis_id: spec.basis_id,
        })
    }

    pub fn zero(spec: &SpectralData, n: usize) -> Result<Self> {
        Self::new(spec, vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn check_basis(&self, spec: &SpectralData) -> Result<()> {
        if self.basis_id != spec.basis_id {
            return Err(Error::BasisMismatch {
                state: self.basis_id,
                spectrum: spec.basis_id,
            });
        }
        Ok(())
    }

    /// `√(Σ λₙ^{2θ}|cₙ|²)`.
    pub fn sobolev_norm(&self, theta: f64) -> f64 {
        sobolev_norm(self, theta)
    }
}

/// Result of projecting initial data onto the modes.
#[derive(Debug, Clone)]
pub struct Projection {
    pub state: ModalState,
    /// `‖y⁰ − Σcₙ Φₙ‖_ρ / ‖y⁰‖_ρ`, via Bessel's identity on the same quadrature.
    pub residual: f64,
}

/// Projection of a discrete function given by real and imaginary free-dof vectors.
/// Exact up to round-off for combinations of the computed modes.
pub fn project_dofs(spec: &SpectralData, n: usize, re: &[f64], im: &[f64]) -> Result<Projection> {
    let op = spec.operator();
    if re.len() != op.dim() || im.len() != op.dim() {
        return Err(Error::InvalidArgument(format!(
            "dof vectors must have length {}",
            op.dim()
        )));
    }
    check_count(spec, n)?;
    let (mre, mim) = (op.mass.mul_vec(re), op.mass.mul_vec(im));
    let dot = crate::band::dot;
    let coefficients = spec.modes[..n]
        .iter()
        .map(|phi| Complex64::new(dot(phi, &mre), dot(phi, &mim)))
        .collect();
    let norm2 = dot(re, &mre) + dot(im, &mim);
    finish(spec, coefficients, norm2)
}

/// Projection of `y⁰` given as a function, by Gauss quadrature on each element.
pub fn project_function<F>(spec: &SpectralData, n: usize, y0: F) -> Result<Projection>
where
    F: Fn(f64) -> Complex64,
{
    check_count(spec, n)?;
    let op = spec.operator();
    let mesh = op.mesh;
    let h = mesh.h();
    let rule = GaussLegendre::new(PROJECTION_POINTS);
    // (element, ξ, ρ·w·h, y⁰)
    let mut points = Vec::with_capacity(mesh.elements * rule.len());
    for e in 0..mesh.elements {
        for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
            let xi = 0.5 * (u + 1.0);
            let x = mesh.node(e) + xi * h;
            points.push((e, xi, op.profile().rho(x) * 0.5 * w * h, y0(x)));
        }
    }
    let norm2 = points.iter().map(|p| p.2 * p.3.norm_sqr()).sum();
    let coefficients = (0..n)
        .map(|k| {
            let field = spec.mode_field(k);
            points
                .iter()
                .map(|&(e, xi, rw, y)| y * (rw * field.eval_local(e, xi)[0]))
                .sum()
        })
        .collect();
    finish(spec, coefficients, norm2)
}

/// Projection of `y⁰` sampled at `S+1` uniform points on `[0, ℓ]` (endpoints included),
/// by composite Simpson quadrature. `S` must be an even multiple of the element count
/// with at least [`SAMPLES_PER_ELEMENT`] intervals per element.
pub fn project_samples(spec: &SpectralData, n: usize, samples: &[Complex64]) -> Result<Projection> {
    check_count(spec, n)?;
    let op = spec.operator();
    let mesh = op.mesh;
    let intervals = samples.len().saturating_sub(1);
    let required = SAMPLES_PER_ELEMENT * mesh.elements;
    if intervals < required {
        return Err(Error::Undersampled {
            have: samples.len(),
            required: required + 1,
        });
    }
    if !intervals.is_multiple_of(mesh.elements) || !(intervals / mesh.elements).is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "{} samples do not resample onto {} elements: need 2k·E + 1 points",
            samples.len(),
            mesh.elements
        )));
    }
    let dx = mesh.length / intervals as f64;
    let weights: Vec<f64> = (0..=intervals)
        .map(|j| {
            let s = if j == 0 || j == intervals {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s * dx / 3.0 * op.profile().rho(j as f64 * dx)
        })
        .collect();
    let per = intervals / mesh.elements;
    let locate = |j: usize| -> (usize, f64) {
        let e = (j / per).min(mesh.elements - 1);
        (e, (j - e * per) as f64 / per as f64)
    };
    let norm2 = samples.iter().zip(&weights).map(|(y, w)| w * y.norm_sqr()).sum();
    let coefficients = (0..n)
        .map(|k| {
            let field = spec.mode_field(k);
            samples
                .iter()
                .zip(&weights)
                .enumerate()
                .map(|(j, (&y, &w))| {
                    let (e, xi) = locate(j);
                    y * (w * field.eval_local(e, xi)[0])
                })
                .sum()
        })
        .collect();
    finish(spec, coefficients, norm2)
}

fn check_count(spec: &SpectralData, n: usize) -> Result<()> {
    if n == 0 || n > spec.trusted_count {
        return Err(Error::InvalidArgument(format!(
            "projection onto {n} modes, spectrum trusts {}",
            spec.trusted_count
        )));
    }
    Ok(())
}

fn finish(spec: &SpectralData, coefficients: Vec<Complex64>, norm2: f64) -> Result<Projection> {
    let captured: f64 = coefficients.iter().map(|c: &Complex64| c.norm_sqr()).sum();
    let residual = if norm2 > 0.0 {
        ((norm2 - captured).max(0.0) / norm2).sqrt()
    } else {
        0.0
    };
    Ok(Projection {
        state: ModalState::new(spec, coefficients)?,
        residual,
    })
}

/// Reconstruction `Σ cₙ Φₙ` as real and imaginary Hermite fields.
pub fn reconstruct(state: &ModalState, spec: &SpectralData) -> Result<(HermiteField, HermiteField)> {
    state.check_basis(spec)?;
    let dim = spec.operator().dim();
    let mut re = vec![0.0; dim];
    let mut im = vec![0.0; dim];
    for (c, phi) in state.coefficients.iter().zip(&spec.modes) {
        for ((r, i), p) in re.iter_mut().zip(im.iter_mut()).zip(phi) {
            *r += c.re * p;
            *i += c.im * p;
        }
    }
    let mesh = spec.operator().mesh;
    Ok((HermiteField::from_free(mesh, &re), HermiteField::from_free(mesh, &im)))
}

/// `e^{iλt}`.
fn phase(lambda: f64, t: f64) -> Complex64 {
    Complex64::from_polar(1.0, lambda * t)
}

/// Exact free evolution over a further time `t`.
pub fn evolve_free(state: &ModalState, t: f64) -> ModalState {
    ModalState {
        coefficients: state
            .coefficients
            .iter()
            .zip(&state.lambdas)
            .map(|(c, &l)| c * phase(l, t))
            .collect(),
        lambdas: state.lambdas.clone(),
        time: state.time + t,
        basis_id: state.basis_id,
    }
}

pub fn sobolev_norm(state: &ModalState, theta: f64) -> f64 {
    state
        .coefficients
        .iter()
        .zip(&state.lambdas)
        .map(|(c, &l)| l.powf(2.0 * theta) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// A boundary control on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Control {
    /// `f(t) = Σ βₖ e^{iνₖt}`.
    ExpSum {
        frequencies: Vec<f64>,
        beta: Vec<Complex64>,
    },
    /// `f` at `t = j·dt`, `j = 0..=S`, with `S` even.
    Tabulated { dt: f64, values: Vec<Complex64> },
}

impl Control {
    pub fn zero() -> Self {
        Control::ExpSum {
            frequencies: Vec::new(),
            beta: Vec::new(),
        }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        match self {
            Control::ExpSum { frequencies, beta } => {
                frequencies.iter().zip(beta).map(|(&nu, b)| b * phase(nu, t)).sum()
            }
            Control::Tabulated { dt, values } => {
                let s = (t / dt).clamp(0.0, (values.len() - 1) as f64);
                let j = (s.floor() as usize).min(values.len().saturating_sub(2));
                let u = s - j as f64;
                values[j] * (1.0 - u) + values[j + 1] * u
            }
        }
    }

    /// Samples `f(j·T/S)`, `j = 0..=S`.
    pub fn tabulate(&self, horizon: f64, intervals: usize) -> Control {
        let dt = horizon / intervals as f64;
        Control::Tabulated {
            dt,
            values: (0..=intervals).map(|j| self.eval(j as f64 * dt)).collect(),
        }
    }

    /// `∫₀^T e^{−iλs} f(s) ds`.
    pub fn moment(&self, lambda: f64, horizon: f64) -> Complex64 {
        match self {
            Control::ExpSum { frequencies, beta } => frequencies
                .iter()
                .zip(beta)
                .map(|(&nu, b)| b * exp_integral(nu - lambda, horizon))
                .sum(),
            Control::Tabulated { dt, values } => filon(values, *dt, -lambda),
        }
    }
}

/// `∫₀^T e^{iωs} ds = (e^{iωT} − 1)/(iω)`, with the numerator written without
/// cancellation.
pub fn exp_integral(omega: f64, horizon: f64) -> Complex64 {
    if omega == 0.0 {
        return Complex64::new(horizon, 0.0);
    }
    let x = omega * horizon;
    let half = (0.5 * x).sin();
    let num = Complex64::new(-2.0 * half * half, x.sin());
    num / Complex64::new(0.0, omega)
}

/// Filon–Simpson rule for `∫ f(s) e^{iωs} ds` over uniformly tabulated `f`: `f` is
/// replaced by its piecewise quadratic interpolant on panel pairs and the product
/// integrated exactly.
fn filon(values: &[Complex64], dt: f64, omega: f64) -> Complex64 {
    let theta = omega * dt;
    let [i0, i1, i2] = panel_moments(theta);
    let mut total = Complex64::new(0.0, 0.0);
    for j in (1..values.len() - 1).step_by(2) {
        let (fm, fc, fp) = (values[j - 1], values[j], values[j + 1]);
        let f1 = (fp - fm) * 0.5;
        let f2 = (fp + fm) * 0.5 - fc;
        let local = fc * i0 + f1 * i1 + f2 * i2;
        total += local * phase(omega, j as f64 * dt);
    }
    total * dt
}

/// `∫_{−1}^{1} uᵐ e^{iθu} du` for `m = 0, 1, 2`.
fn panel_moments(theta: f64) -> [Complex64; 3] {
    if theta.abs() < 1.0 {
        // Σⱼ (iθ)ʲ/j! · 2/(m+j+1) over m+j even; terms fall below 1e-19 by j = 22
        let mut out = [Complex64::new(0.0, 0.0); 3];
        let mut term = Complex64::new(1.0, 0.0);
        for j in 0..24 {
            for (m, o) in out.iter_mut().enumerate() {
                if (m + j) % 2 == 0 {
                    *o += term * (2.0 / (m + j + 1) as f64);
                }
            }
            term *= Complex64::new(0.0, theta / (j + 1) as f64);
        }
        return out;
    }
    let (s, c) = theta.sin_cos();
    let t2 = theta * theta;
    [
        Complex64::new(2.0 * s / theta, 0.0),
        Complex64::new(0.0, 2.0 * (s - theta * c) / t2),
        Complex64::new(2.0 * ((t2 - 2.0) * s + 2.0 * theta * c) / (t2 * theta), 0.0),
    ]
}

/// Samples a tabulated control needs over `[0, T]` for the given spectrum slice.
pub fn required_samples(lambda_max: f64, horizon: f64) -> usize {
    let intervals = (SAMPLES_PER_PERIOD * lambda_max * horizon / (2.0 * PI)).ceil() as usize;
    let even = intervals.max(2).next_multiple_of(2);
    even + 1
}

/// Controlled evolution of `state0` over `[0, T]`, with `f` acting at `x = ℓ`.
pub fn evolve_controlled(
    state0: &ModalState,
    spec: &SpectralData,
    sigma_l: f64,
    f: &Control,
    horizon: f64,
) -> Result<ModalState> {
    state0.check_basis(spec)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if let Control::Tabulated { dt, values } = f {
        let intervals = values.len().saturating_sub(1);
        if intervals < 2 || intervals % 2 != 0 {
            return Err(Error::InvalidArgument(
                "tabulated control needs an even number of intervals".into(),
            ));
        }
        if ((intervals as f64 * dt) - horizon).abs() > 1e-12 * horizon {
            return Err(Error::InvalidArgument(format!(
                "tabulation covers [0, {}], horizon is {horizon}",
                intervals as f64 * dt
            )));
        }
        let lambda_max = state0.lambdas.iter().cloned().fold(0.0, f64::max);
        let required = required_samples(lambda_max, horizon);
        if values.len() < required {
            return Err(Error::Undersampled {
                have: values.len(),
                required,
            });
        }
    }
    let coefficients = state0
        .coefficients
        .iter()
        .zip(&state0.lambdas)
        .zip(&spec.traces)
        .map(|((&a, &l), &t)| {
            let forced = a + Complex64::new(0.0, sigma_l * t) * f.moment(l, horizon);
            forced * phase(l, horizon)
        })
        .collect();
    Ok(ModalState {
        coefficients,
        lambdas: state0.lambdas.clone(),
        time: state0.time + horizon,
        basis_id: state0.basis_id,
    })
}
