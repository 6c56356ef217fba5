//! Gram matrices of `{e^{iλₙt}}` on `(0, T)`, truncated observability constants and
//! Beurling window densities.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::ModalState;
use crate::eigen::SpectralData;
use crate::{Error, Result};

/// Two frequencies closer than this (relative to the larger) are treated as equal.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;
/// Minimum sequence length for density estimates.
pub const MIN_DENSITY_TERMS: usize = 10;

/// `G[m][n] = ∫₀^T e^{i(λₙ−λₘ)t} dt` and its optional trace weighting.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub horizon: f64,
    pub lambdas: Vec<f64>,
    pub g: DMatrix<Complex64>,
    /// `tₘtₙG[m][n]` when traces were supplied.
    pub weighted: Option<DMatrix<Complex64>>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `max/min` eigenvalue ratio of `G`; infinite when `G` is not numerically definite.
    pub condition: f64,
}

impl GramSystem {
    /// `dᴴGd = ∫₀^T |Σ dₙe^{iλₙt}|² dt`.
    pub fn energy(&self, d: &[Complex64]) -> f64 {
        quadratic_form(&self.g, d)
    }
}

/// `∫₀^T e^{iωt} dt` written as `e^{iωT/2}·2sin(ωT/2)/ω`, which is Hermitian-symmetric
/// in `ω` bit for bit.
fn gram_entry(omega: f64, horizon: f64) -> Complex64 {
    if omega == 0.0 {
        return Complex64::new(horizon, 0.0);
    }
    let half = 0.5 * omega * horizon;
    Complex64::from_polar(2.0 * half.sin() / omega, half)
}

pub fn gram(lambdas: &[f64], horizon: f64, traces: Option<&[f64]>) -> Result<GramSystem> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("Gram matrix of an empty family".into()));
    }
    if let Some(t) = traces {
        if t.len() != lambdas.len() {
            return Err(Error::InvalidArgument(format!(
                "{} traces for {} frequencies",
                t.len(),
                lambdas.len()
            )));
        }
    }
    for (i, &a) in lambdas.iter().enumerate() {
        for &b in &lambdas[..i] {
            if (a - b).abs() <= DUPLICATE_TOLERANCE * a.abs().max(b.abs()) {
                return Err(Error::DuplicateFrequency { index: i + 1, value: a });
            }
        }
    }
    let n = lambdas.len();
    let g = DMatrix::from_fn(n, n, |m, k| {
        if m == k {
            Complex64::new(horizon, 0.0)
        } else {
            gram_entry(lambdas[k] - lambdas[m], horizon)
        }
    });
    let weighted = traces.map(|t| DMatrix::from_fn(n, n, |m, k| g[(m, k)] * (t[m] * t[k])));
    let (min_eigenvalue, max_eigenvalue) = hermitian_extremes(&g);
    Ok(GramSystem {
        horizon,
        lambdas: lambdas.to_vec(),
        g,
        weighted,
        min_eigenvalue,
        max_eigenvalue,
        condition: condition(min_eigenvalue, max_eigenvalue),
    })
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub fn hermitian_extremes(a: &DMatrix<Complex64>) -> (f64, f64) {
    let eig = a.clone().symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub fn condition(min: f64, max: f64) -> f64 {
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `dᴴAd`, real part (the imaginary part vanishes for Hermitian `A`).
pub fn quadratic_form(a: &DMatrix<Complex64>, d: &[Complex64]) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (m, dm) in d.iter().enumerate() {
        let row: Complex64 = d.iter().enumerate().map(|(k, dk)| a[(m, k)] * dk).sum();
        s += dm.conj() * row;
    }
    s.re
}

/// `∂²ₓy(t, ℓ) = Σ cₙ e^{iλₙt} tₙ`.
pub fn boundary_output(state: &ModalState, spec: &SpectralData, t: f64) -> Result<Complex64> {
    state.check_basis(spec)?;
    Ok(state
        .coefficients
        .iter()
        .zip(&state.lambdas)
        .zip(&spec.traces)
        .map(|((c, &l), &tr)| c * Complex64::from_polar(tr, l * t))
        .sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityReport {
    pub horizon: f64,
    pub n: usize,
    pub c_lower: f64,
    pub c_upper: f64,
    /// Condition estimate of the unweighted Gram matrix.
    pub condition: f64,
    /// `c_lower` for the leading `1..=n` modes.
    pub c_lower_by_n: Vec<f64>,
    /// False when the weighted Gram matrix is not numerically definite; this is a
    /// resolution failure of the truncation, not evidence against observability.
    pub resolved: bool,
    /// Window-count density of all computed eigenvalues at the widest window.
    pub density: Option<f64>,
}

/// `D^{−1/2} G̃ D^{−1/2}` with `D = diag(λ)` for the leading `n` modes.
pub fn observability_matrix(spec: &SpectralData, horizon: f64, n: usize) -> Result<(GramSystem, DMatrix<Complex64>)> {
    if n == 0 || n > spec.trusted_count {
        return Err(Error::InvalidArgument(format!(
            "observability needs 1 ≤ N ≤ {}, got {n}",
            spec.trusted_count
        )));
    }
    let lambdas = &spec.lambdas[..n];
    let system = gram(lambdas, horizon, Some(&spec.traces[..n]))?;
    let weighted = system.weighted.as_ref().expect("traces supplied");
    let scaled = DMatrix::from_fn(n, n, |m, k| weighted[(m, k)] / (lambdas[m] * lambdas[k]).sqrt());
    Ok((system, scaled))
}

pub fn observability_constants(spec: &SpectralData, horizon: f64, n: usize) -> Result<ObservabilityReport> {
    let (system, scaled) = observability_matrix(spec, horizon, n)?;
    let (c_lower, c_upper) = hermitian_extremes(&scaled);
    let c_lower_by_n = (1..=n)
        .map(|k| hermitian_extremes(&scaled.view((0, 0), (k, k)).into_owned()).0)
        .collect();
    let resolved = c_lower > 64.0 * f64::EPSILON * n as f64 * c_upper;
    let density = (spec.len() >= MIN_DENSITY_TERMS).then(|| {
        let span = spec.lambdas[spec.len() - 1] - spec.lambdas[0];
        beurling_density(&spec.lambdas, &[span / 10.0])
            .map(|r| r.estimates[0].1)
            .unwrap_or(f64::NAN)
    });
    Ok(ObservabilityReport {
        horizon,
        n,
        c_lower,
        c_upper,
        condition: system.condition,
        c_lower_by_n,
        resolved,
        density,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    /// `(r, max count in a window of length r / r)`.
    pub estimates: Vec<(f64, f64)>,
    /// Estimates do not increase along the (sorted) window grid.
    pub nonincreasing: bool,
}

/// Largest number of points in any half-open window `[a, a + r)`, divided by `r`.
pub fn beurling_density(sequence: &[f64], r_grid: &[f64]) -> Result<DensityReport> {
    if sequence.len() < MIN_DENSITY_TERMS {
        return Err(Error::InvalidArgument(format!(
            "density needs at least {MIN_DENSITY_TERMS} terms, got {}",
            sequence.len()
        )));
    }
    if sequence.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidArgument("sequence must be sorted ascending".into()));
    }
    let mut grid = r_grid.to_vec();
    if grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument("window lengths must be positive".into()));
    }
    grid.sort_by(f64::total_cmp);
    let estimates: Vec<(f64, f64)> = grid
        .iter()
        .map(|&r| {
            // a maximal window can always be slid right until it starts at a point
            let mut best = 0;
            let mut j = 0;
            for (i, &a) in sequence.iter().enumerate() {
                j = j.max(i);
                while j < sequence.len() && sequence[j] < a + r {
                    j += 1;
                }
                best = best.max(j - i);
            }
            (r, best as f64 / r)
        })
        .collect();
    let nonincreasing = estimates.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(DensityReport {
        estimates,
        nonincreasing,
    })
}
