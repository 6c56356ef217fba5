//! Lowest eigenpairs of `Kφ = λMφ` and the validated spectral data built from them.
//!
//! Eigenvalues are isolated by bisection on the inertia of `K − sM` (Sylvester's law
//! applied to the banded `LDLᵀ` factorization), then each eigenvector is obtained by
//! shifted inverse iteration and its eigenvalue refined by the Rayleigh quotient.
//! Everything is sequential and deterministic, so repeated runs are bit-identical.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::Serialize;

use crate::band::{dot, BandLu};
use crate::operator::{DiscreteOperator, HermiteField};
use crate::{Error, Result};

/// Relative gap below which two neighbouring eigenvalues are not considered distinct.
pub const SIMPLICITY_TOLERANCE: f64 = 1e-8;
/// Default absolute floor for `|φₙ″(ℓ)|`.
pub const TRACE_FLOOR: f64 = 1e-6;
/// Default tolerance on the M-orthonormality of the returned modes.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;

const BISECTION_REL_TOL: f64 = 1e-14;
const BISECTION_MAX_STEPS: usize = 200;
const INVERSE_ITERATIONS: usize = 3;
const REFINEMENT_STEPS: usize = 2;

/// Ascending eigenvalues, M-orthonormal modes and boundary traces.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub lambdas: Vec<f64>,
    /// `λₙ^{1/4}`.
    pub mus: Vec<f64>,
    /// Eigenvectors in free-dof coordinates, `ΦₘᵀMΦₙ = δₘₙ`.
    pub modes: Vec<Vec<f64>>,
    /// `tₙ = Φₙ″(ℓ)`, positive by sign convention.
    pub traces: Vec<f64>,
    /// `‖KΦₙ − λₙMΦₙ‖₂ / (λₙ‖Φₙ‖_M)`.
    pub residuals: Vec<f64>,
    /// Number of leading modes considered resolved by the mesh.
    pub trusted_count: usize,
    /// Identifier shared by every modal state expressed in this basis.
    pub basis_id: u64,
    operator: Arc<DiscreteOperator>,
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.operator
    }

    /// `σ(ℓ)` of the underlying profile.
    pub fn sigma_end(&self) -> f64 {
        self.operator.sigma_end()
    }

    /// Reconstruction of mode `n` (0-based) as a Hermite field.
    pub fn mode_field(&self, n: usize) -> HermiteField {
        HermiteField::from_free(self.operator.mesh, &self.modes[n])
    }

    /// The leading `n` modes as a new spectrum (same basis id prefix semantics do not
    /// apply: the truncated spectrum gets its own id).
    pub fn truncated(&self, n: usize) -> SpectralData {
        let n = n.min(self.len());
        let mut out = SpectralData {
            lambdas: self.lambdas[..n].to_vec(),
            mus: self.mus[..n].to_vec(),
            modes: self.modes[..n].to_vec(),
            traces: self.traces[..n].to_vec(),
            residuals: self.residuals[..n].to_vec(),
            trusted_count: self.trusted_count.min(n),
            basis_id: 0,
            operator: Arc::clone(&self.operator),
        };
        out.basis_id = fingerprint(&out.lambdas, &out.traces);
        out
    }
}

/// Lowest `count` eigenpairs of the assembled pair.
pub fn solve_spectrum(op: Arc<DiscreteOperator>, count: usize) -> Result<SpectralData> {
    let n = op.dim();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "requested {count} eigenpairs of a {n}-dimensional problem"
        )));
    }
    let k = &op.stiffness;
    let m = &op.mass;
    m.cholesky()?;
    let below_zero = k.count_below(m, 0.0);
    if below_zero > 0 {
        return Err(Error::NonPositiveEigenvalue {
            index: 1,
            value: f64::NAN,
        });
    }

    let mut hi = 1.0;
    while k.count_below(m, hi) < count {
        hi *= 4.0;
        if !hi.is_finite() {
            return Err(Error::Eigensolver("could not bracket the spectrum".into()));
        }
    }

    let mut lambdas = Vec::with_capacity(count);
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut mass_modes: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut lo = 0.0;
    for idx in 0..count {
        // Invariant: count_below(lo) ≤ idx < count_below(b).
        let mut a = lo;
        let mut b = hi;
        for _ in 0..BISECTION_MAX_STEPS {
            if b - a <= BISECTION_REL_TOL * b {
                break;
            }
            let mid = 0.5 * (a + b);
            if k.count_below(m, mid) > idx {
                b = mid;
            } else {
                a = mid;
            }
        }
        lo = a;
        let shift = 0.5 * (a + b);

        let lu = BandLu::from_symmetric(&k.shifted(m, shift));
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i * 7919 % 101) as f64 / 101.0))
            .collect();
        for _ in 0..INVERSE_ITERATIONS {
            let rhs = m.mul_vec(&x);
            x = lu.solve(&rhs);
            let norm = m.bilinear(&x, &x).sqrt();
            normalize(&mut x, norm);
        }
        for _ in 0..2 {
            for (prev, mprev) in modes.iter().zip(&mass_modes) {
                let c = dot(mprev, &x);
                for (xi, pi) in x.iter_mut().zip(prev) {
                    *xi -= c * pi;
                }
            }
            let norm = m.bilinear(&x, &x).sqrt();
            normalize(&mut x, norm);
        }
        // Refinement against the element-wise residual, which is far more accurate than
        // the banded products for smooth modes on fine meshes.
        for _ in 0..REFINEMENT_STEPS {
            let lambda = op.rayleigh_quotient(&x);
            let (kx, mx) = op.apply(&x);
            let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - lambda * b).collect();
            let mut d = lu.solve(&r);
            for (prev, mprev) in modes.iter().zip(&mass_modes).chain([(&x, &mx)]) {
                let c = dot(mprev, &d);
                for (di, pi) in d.iter_mut().zip(prev) {
                    *di -= c * pi;
                }
            }
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi -= di;
            }
            let norm = op.energies(&x).1.sqrt();
            normalize(&mut x, norm);
        }
        if op.boundary_trace(&x) < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        let mx = m.mul_vec(&x);
        let lambda = op.rayleigh_quotient(&x);
        if !(lambda > 0.0) {
            return Err(Error::NonPositiveEigenvalue {
                index: idx + 1,
                value: lambda,
            });
        }
        lambdas.push(lambda);
        modes.push(x);
        mass_modes.push(mx);
    }

    if let Some(i) = lambdas.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Eigensolver(format!(
            "eigenvalues {} and {} out of order",
            i + 1,
            i + 2
        )));
    }

    let traces: Vec<f64> = modes.iter().map(|x| op.boundary_trace(x)).collect();
    let residuals = modes
        .iter()
        .zip(&lambdas)
        .map(|(x, &lambda)| {
            let (kx, mx) = op.apply(x);
            let r: f64 = kx
                .iter()
                .zip(&mx)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            r / (lambda * dot(x, &mx).sqrt())
        })
        .collect();
    let basis_id = fingerprint(&lambdas, &traces);
    Ok(SpectralData {
        mus: lambdas.iter().map(|l: &f64| l.sqrt().sqrt()).collect(),
        lambdas,
        modes,
        traces,
        residuals,
        trusted_count: count.min(op.mesh.elements / 10),
        basis_id,
        operator: op,
    })
}

fn normalize(x: &mut [f64], norm: f64) {
    x.iter_mut().for_each(|v| *v /= norm);
}

fn fingerprint(lambdas: &[f64], traces: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for v in lambdas.iter().chain(traces) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Problems detected by [`validate_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumFlag {
    Positivity,
    /// This mode and the next are not separated by the simplicity tolerance.
    Simplicity,
    Trace,
    Orthonormality,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeCheck {
    pub n: usize,
    pub positive: bool,
    /// `(λₙ₊₁ − λₙ)/λₙ₊₁`, absent for the last mode.
    pub relative_gap: Option<f64>,
    pub trace_abs: f64,
    /// `maxₘ |⟨Φₘ, Φₙ⟩_M − δₘₙ|` over the validated modes.
    pub orthonormality_residual: f64,
    pub flags: Vec<SpectrumFlag>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checked: usize,
    pub modes: Vec<ModeCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub gap_tolerance: f64,
    pub trace_floor: f64,
    pub orthonormality_tolerance: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: SIMPLICITY_TOLERANCE,
            trace_floor: TRACE_FLOOR,
            orthonormality_tolerance: ORTHONORMALITY_TOLERANCE,
        }
    }
}

pub fn validate_spectrum(spec: &SpectralData) -> ValidationReport {
    validate_spectrum_with(spec, ValidationOptions::default())
}

/// Per-mode checks of positivity, simplicity, trace nonvanishing and orthonormality
/// over the first `trusted_count` modes (at least one).
pub fn validate_spectrum_with(spec: &SpectralData, opts: ValidationOptions) -> ValidationReport {
    let checked = spec.trusted_count.max(1).min(spec.len());
    let mass = &spec.operator.mass;
    let mass_modes: Vec<Vec<f64>> = spec.modes[..checked]
        .iter()
        .map(|x| mass.mul_vec(x))
        .collect();
    let mut modes = Vec::with_capacity(checked);
    for i in 0..checked {
        let lambda = spec.lambdas[i];
        let mut flags = Vec::new();
        let positive = lambda > 0.0;
        if !positive {
            flags.push(SpectrumFlag::Positivity);
        }
        let relative_gap = spec
            .lambdas
            .get(i + 1)
            .filter(|_| i + 1 < checked)
            .map(|&next| (next - lambda) / next.abs().max(f64::MIN_POSITIVE));
        if relative_gap.is_some_and(|g| !(g > opts.gap_tolerance)) {
            flags.push(SpectrumFlag::Simplicity);
        }
        let trace_abs = spec.traces[i].abs();
        if !(trace_abs > opts.trace_floor) {
            flags.push(SpectrumFlag::Trace);
        }
        let orthonormality_residual = (0..checked)
            .map(|j| {
                let g = dot(&spec.modes[j], &mass_modes[i]);
                (g - if i == j { 1.0 } else { 0.0 }).abs()
            })
            .fold(0.0, f64::max);
        if !(orthonormality_residual <= opts.orthonormality_tolerance) {
            flags.push(SpectrumFlag::Orthonormality);
        }
        modes.push(ModeCheck {
            n: i + 1,
            positive,
            relative_gap,
            trace_abs,
            orthonormality_residual,
            flags,
        });
    }
    let pass = modes.iter().all(|m| m.flags.is_empty());
    ValidationReport {
        checked,
        modes,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientProfile;
    use nalgebra::DMatrix;

    fn unit_op(e: usize) -> Arc<DiscreteOperator> {
        let p = CoefficientProfile::constant(1.0, 1.0, 1.0, 0.0).unwrap();
        Arc::new(DiscreteOperator::assemble(&p, e).unwrap())
    }

    /// Dense Cholesky reduction `L⁻¹KL⁻ᵀ` and symmetric eigensolve.
    fn dense_eigenvalues(op: &DiscreteOperator) -> Vec<f64> {
        let k = op.stiffness.to_dense();
        let m = op.mass.to_dense();
        let l = m.cholesky().unwrap().l();
        let linv = l.clone().try_inverse().unwrap();
        let c: DMatrix<f64> = &linv * k * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn agrees_with_dense_reduction() {
        let op = unit_op(16);
        let spec = solve_spectrum(Arc::clone(&op), 10).unwrap();
        let dense = dense_eigenvalues(&op);
        for i in 0..10 {
            assert!(
                (spec.lambdas[i] - dense[i]).abs() < 1e-9 * dense[i],
                "{i}: {} vs {}",
                spec.lambdas[i],
                dense[i]
            );
        }
    }

    #[test]
    fn orthonormal_positive_traces() {
        let spec = solve_spectrum(unit_op(64), 6).unwrap();
        let report = validate_spectrum(&spec);
        assert_eq!(report.checked, 6);
        assert!(report.pass, "{report:?}");
        assert!(spec.traces.iter().all(|&t| t > 0.0));
        assert_eq!(spec.trusted_count, 6);
    }

    #[test]
    fn rejects_bad_count() {
        let op = unit_op(8);
        assert!(solve_spectrum(Arc::clone(&op), 0).is_err());
        assert!(solve_spectrum(op, 15).is_err());
    }

    #[test]
    fn injected_duplicate_is_flagged() {
        let mut spec = solve_spectrum(unit_op(64), 6).unwrap();
        spec.lambdas[3] = spec.lambdas[2];
        let report = validate_spectrum(&spec);
        assert!(!report.pass);
        assert!(report.modes[2].flags.contains(&SpectrumFlag::Simplicity));
    }

    #[test]
    fn injected_zero_trace_is_flagged() {
        let mut spec = solve_spectrum(unit_op(64), 6).unwrap();
        spec.traces[4] = 0.0;
        let report = validate_spectrum(&spec);
        assert!(!report.pass);
        assert_eq!(report.modes[4].flags, vec![SpectrumFlag::Trace]);
    }

    #[test]
    fn deterministic() {
        let a = solve_spectrum(unit_op(128), 8).unwrap();
        let b = solve_spectrum(unit_op(128), 8).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.lambdas), bits(&b.lambdas));
        assert_eq!(bits(&a.traces), bits(&b.traces));
        assert_eq!(a.basis_id, b.basis_id);
    }
}
