//! Large-n laws for the clamped spectrum and the reports comparing them with
//! computed spectra.
//!
//! Indexing follows [`SpectralData`]: root `k` (1-based) of `cos(μγ)cosh(μγ) = 1`
//! is the one near `(k + ½)π/γ` and is matched against the `k`-th eigenvalue.

use std::f64::consts::PI;

use serde::Serialize;

use crate::coeffs::WaveGeometry;
use crate::eigen::SpectralData;
use crate::{Error, Result};

/// Root residuals are checked on `cos(μγ) − sech(μγ)`, which has the same zeros as
/// the characteristic function but stays O(1).
pub const ROOT_RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Bounds for the `≍` check on normalized gaps.
pub const GAP_RATIO_BOUNDS: (f64, f64) = (0.25, 4.0);

#[derive(Debug, Clone)]
pub struct AsymptoticModel {
    pub geometry: WaveGeometry,
    pub mu_tilde: Vec<f64>,
    /// `π/γ`.
    pub spacing: f64,
    /// `(π/γ)⁴`.
    pub gap_constant: f64,
}

impl AsymptoticModel {
    pub fn new(geometry: WaveGeometry, count: usize) -> Result<Self> {
        let mu_tilde = characteristic_roots(geometry.gamma, count)?;
        let spacing = PI / geometry.gamma;
        Ok(Self {
            geometry,
            mu_tilde,
            spacing,
            gap_constant: spacing.powi(4),
        })
    }

    /// `Φₙ(x)` from the large-n eigenfunction formula, `n` 1-based.
    pub fn eigenfunction(&self, n: usize, x: f64) -> Result<f64> {
        let mu = *self.mu_tilde.get(n.wrapping_sub(1)).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "mode {n} outside the {} available roots",
                self.mu_tilde.len()
            ))
        })?;
        let length = self.geometry.length();
        if !(0.0..=length).contains(&x) {
            return Err(Error::InvalidArgument(format!("x = {x} outside [0, {length}]")));
        }
        let gamma = self.geometry.gamma;
        let shape = eigenfunction_shape(mu * gamma, mu * self.geometry.optical(x));
        Ok(2.0 * self.geometry.zeta(x) / gamma.sqrt() * shape)
    }
}

/// `g(μ) = cos(μγ)cosh(μγ) − 1`.
pub fn characteristic(gamma: f64, mu: f64) -> f64 {
    let s = mu * gamma;
    s.cos() * s.cosh() - 1.0
}

/// `cos(μγ) − sech(μγ)`, the overflow-free form of [`characteristic`].
pub fn scaled_characteristic(gamma: f64, mu: f64) -> f64 {
    let s = mu * gamma;
    s.cos() - 1.0 / s.cosh()
}

/// First `count` positive roots of [`characteristic`], by bisection on
/// `(kπ/γ, (k+1)π/γ)`, each of which holds exactly one root.
pub fn characteristic_roots(gamma: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidArgument("root count must be at least 1".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("γ must be positive, got {gamma}")));
    }
    let f = |s: f64| s.cos() - 1.0 / s.cosh();
    (1..=count)
        .map(|k| {
            // bisect in the variable s = μγ so the γ scaling is exact
            let (mut a, mut b) = (k as f64 * PI, (k + 1) as f64 * PI);
            let (fa, fb) = (f(a), f(b));
            if fa * fb >= 0.0 {
                return Err(Error::Bracket { index: k });
            }
            loop {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if (f(mid) > 0.0) == (fa > 0.0) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let s = if f(a).abs() <= f(b).abs() { a } else { b };
            if f(s).abs() > ROOT_RESIDUAL_TOLERANCE {
                return Err(Error::Bracket { index: k });
            }
            Ok(s / gamma)
        })
        .collect()
}

/// Bracketed combination of the eigenfunction formula divided by `e^{a}`, with
/// `a = μγ` and `b = μX ≤ a`.
///
/// Expanded so that every exponential is bounded by 1. The unexpanded product loses
/// about `e^{b}·ε` in absolute terms, already 1e-3 near `a = 30`, so it is never used.
fn eigenfunction_shape(a: f64, b: f64) -> f64 {
    let e = (-a).exp();
    let ca = a.cos() * e - 0.5 * (1.0 + e * e);
    let sa = a.sin() * e + 0.5 * (1.0 - e * e);
    ca * b.cos() + sa * b.sin()
        - 0.5 * (b - a).exp() * (a.cos() + a.sin() - e)
        - 0.5 * (-b).exp() * (ca - sa)
}

/// `lim |tₙ|/√λₙ = 2ζ(ℓ)√(ρ(ℓ)/σ(ℓ))/√γ` for ρ-normalized modes.
pub fn trace_limit(geometry: &WaveGeometry) -> f64 {
    trace_limit_gamma(geometry) * geometry.gamma.sqrt()
}

/// The same expression with `γ` in place of `√γ`; coincides with [`trace_limit`]
/// only when `γ = 1`.
pub fn trace_limit_gamma(geometry: &WaveGeometry) -> f64 {
    let p = geometry.profile();
    let l = p.length();
    2.0 * p.zeta(l) * (p.rho(l) / p.sigma(l)).sqrt() / geometry.gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpacingRow {
    pub n: usize,
    pub delta_mu: f64,
    /// `(μₙ₊₁ − μₙ)γ/π`.
    pub normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpacingReport {
    pub rows: Vec<SpacingRow>,
    /// Integer `k` minimizing `Σ(μₙ − (π/γ)(n + k − ½))²`.
    pub index_offset: i64,
}

pub fn spacing_report(spec: &SpectralData, geometry: &WaveGeometry) -> Result<SpacingReport> {
    require_trusted(spec, 3)?;
    let scale = geometry.gamma / PI;
    let rows = spec
        .mus
        .windows(2)
        .enumerate()
        .map(|(i, w)| SpacingRow {
            n: i + 1,
            delta_mu: w[1] - w[0],
            normalized: (w[1] - w[0]) * scale,
        })
        .collect();
    let m = spec.trusted_count.min(spec.len());
    let mean = spec.mus[..m]
        .iter()
        .enumerate()
        .map(|(i, mu)| mu * scale - (i + 1) as f64 + 0.5)
        .sum::<f64>()
        / m as f64;
    Ok(SpacingReport {
        rows,
        index_offset: mean.round() as i64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub gap: f64,
    /// `(λₙ₊₁ − λₙ) / (4(n+½)³(π/γ)⁴)`.
    pub normalized: f64,
    /// `(λₙ₊₁ − λₙ) / ((π/γ)⁴((n+3/2)⁴ − (n+½)⁴))`, the exact difference of the
    /// leading root asymptote.
    pub midpoint: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    /// Every gap is positive.
    pub increasing: bool,
    /// Normalized gaps lie in [`GAP_RATIO_BOUNDS`] for `2 ≤ n < trusted_count`.
    pub bounded: bool,
}

pub fn gap_report(spec: &SpectralData, geometry: &WaveGeometry) -> Result<GapReport> {
    require_trusted(spec, 5)?;
    let c = (PI / geometry.gamma).powi(4);
    let rows: Vec<GapRow> = spec
        .lambdas
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let n = (i + 1) as f64;
            let gap = w[1] - w[0];
            GapRow {
                n: i + 1,
                gap,
                normalized: gap / (4.0 * (n + 0.5).powi(3) * c),
                midpoint: gap / (c * ((n + 1.5).powi(4) - (n + 0.5).powi(4))),
            }
        })
        .collect();
    let (lo, hi) = GAP_RATIO_BOUNDS;
    let bounded = rows
        .iter()
        .filter(|r| r.n >= 2 && r.n < spec.trusted_count)
        .all(|r| (lo..=hi).contains(&r.normalized));
    Ok(GapReport {
        increasing: rows.iter().all(|r| r.gap > 0.0),
        bounded,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub n: usize,
    /// `|tₙ|/√λₙ`.
    pub scaled: f64,
    /// `scaled` divided by [`trace_limit`].
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub limit: f64,
    pub rows: Vec<TraceRow>,
}

pub fn trace_limit_report(spec: &SpectralData, geometry: &WaveGeometry) -> Result<TraceReport> {
    require_trusted(spec, 5)?;
    let limit = trace_limit(geometry);
    let rows = spec
        .traces
        .iter()
        .zip(&spec.lambdas)
        .enumerate()
        .map(|(i, (t, l))| {
            let scaled = t.abs() / l.sqrt();
            TraceRow {
                n: i + 1,
                scaled,
                ratio: scaled / limit,
            }
        })
        .collect();
    Ok(TraceReport { limit, rows })
}

fn require_trusted(spec: &SpectralData, min: usize) -> Result<()> {
    if spec.trusted_count < min {
        return Err(Error::InvalidArgument(format!(
            "report needs at least {min} trusted modes, spectrum has {}",
            spec.trusted_count
        )));
    }
    Ok(())
}
