//! C¹ Hermite-cubic discretization of the clamped operator
//! `A u = ρ⁻¹((σu″)″ − (qu′)′)` with `u = u′ = 0` at both ends.
//!
//! Each mesh node carries a value and a slope. The four clamped unknowns at `x = 0`
//! and `x = ℓ` are eliminated, so free node `i ∈ 1..E` owns dofs `2(i−1)` (value) and
//! `2(i−1)+1` (slope). The stiffness `K` discretizes `∫ σu″v″ + qu′v′` and the mass
//! `M` discretizes `∫ ρuv`, both with 4-point Gauss quadrature per element.

use crate::band::SymBandMatrix;
use crate::coeffs::CoefficientProfile;
use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

pub const MIN_ELEMENTS: usize = 8;
const ELEMENT_GAUSS_POINTS: usize = 4;
/// Half bandwidth of the assembled matrices, independent of `E`.
pub const BANDWIDTH: usize = 3;

/// Uniform partition of `[0, ℓ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    pub length: f64,
    pub elements: usize,
}

impl Mesh {
    pub fn h(&self) -> f64 {
        self.length / self.elements as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.elements {
            self.length
        } else {
            i as f64 * self.h()
        }
    }

    /// Element containing `x` and the local coordinate `ξ ∈ [0, 1]`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        if x >= self.length {
            return (self.elements - 1, 1.0);
        }
        let h = self.h();
        let e = ((x / h).floor().max(0.0) as usize).min(self.elements - 1);
        (e, ((x - e as f64 * h) / h).clamp(0.0, 1.0))
    }
}

/// Hermite cubic shape functions on `[0, 1]` and their first two derivatives with
/// respect to `x`, for element size `h`.
pub fn shape(xi: f64, h: f64) -> [[f64; 4]; 3] {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    [
        [
            1.0 - 3.0 * x2 + 2.0 * x3,
            h * (xi - 2.0 * x2 + x3),
            3.0 * x2 - 2.0 * x3,
            h * (x3 - x2),
        ],
        [
            (6.0 * x2 - 6.0 * xi) / h,
            1.0 - 4.0 * xi + 3.0 * x2,
            (6.0 * xi - 6.0 * x2) / h,
            3.0 * x2 - 2.0 * xi,
        ],
        [
            (12.0 * xi - 6.0) / (h * h),
            (6.0 * xi - 4.0) / h,
            (6.0 - 12.0 * xi) / (h * h),
            (6.0 * xi - 2.0) / h,
        ],
    ]
}

/// Nodal values and slopes of a piecewise Hermite cubic on a [`Mesh`], including the
/// boundary nodes. Used for reconstruction and for interpolating test functions.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteField {
    pub mesh: Mesh,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl HermiteField {
    /// Hermite interpolant of `f` with derivative `df`.
    pub fn interpolate<F, D>(mesh: Mesh, f: F, df: D) -> Self
    where
        F: Fn(f64) -> f64,
        D: Fn(f64) -> f64,
    {
        let xs: Vec<f64> = (0..=mesh.elements).map(|i| mesh.node(i)).collect();
        Self {
            mesh,
            values: xs.iter().map(|&x| f(x)).collect(),
            slopes: xs.iter().map(|&x| df(x)).collect(),
        }
    }

    /// Embeds a vector of free dofs, with zero clamped values.
    pub fn from_free(mesh: Mesh, u: &[f64]) -> Self {
        let n = mesh.elements + 1;
        let mut values = vec![0.0; n];
        let mut slopes = vec![0.0; n];
        for i in 1..mesh.elements {
            values[i] = u[2 * (i - 1)];
            slopes[i] = u[2 * (i - 1) + 1];
        }
        Self { mesh, values, slopes }
    }

    /// Free dofs, dropping the four boundary unknowns.
    pub fn to_free(&self) -> Vec<f64> {
        (1..self.mesh.elements)
            .flat_map(|i| [self.values[i], self.slopes[i]])
            .collect()
    }

    fn local(&self, e: usize) -> [f64; 4] {
        [self.values[e], self.slopes[e], self.values[e + 1], self.slopes[e + 1]]
    }

    /// Value, first and second derivative at `x`.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let (e, xi) = self.mesh.locate(x);
        self.eval_local(e, xi)
    }

    pub fn eval_local(&self, e: usize, xi: f64) -> [f64; 3] {
        let s = shape(xi, self.mesh.h());
        let c = self.local(e);
        let mut out = [0.0; 3];
        for (k, row) in s.iter().enumerate() {
            out[k] = row.iter().zip(&c).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Second derivative of the last-element cubic at `x = ℓ`.
    pub fn end_curvature(&self) -> f64 {
        self.eval_local(self.mesh.elements - 1, 1.0)[2]
    }
}

/// Assembled stiffness/mass pair and the trace functional `u ↦ u″(ℓ)`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub mesh: Mesh,
    pub stiffness: SymBandMatrix,
    pub mass: SymBandMatrix,
    /// Sparse coefficients `(dof, weight)` of the trace functional.
    pub trace_vector: Vec<(usize, f64)>,
    profile: CoefficientProfile,
    /// `(ξ, w, ρ, σ, q)` at the Gauss points of every element.
    samples: Vec<[f64; 5]>,
}

impl DiscreteOperator {
    pub fn assemble(profile: &CoefficientProfile, elements: usize) -> Result<Self> {
        if elements < MIN_ELEMENTS {
            return Err(Error::InvalidArgument(format!(
                "at least {MIN_ELEMENTS} elements required, got {elements}"
            )));
        }
        let mesh = Mesh {
            length: profile.length(),
            elements,
        };
        let h = mesh.h();
        let rule = GaussLegendre::new(ELEMENT_GAUSS_POINTS);
        let ndof = 2 * (elements - 1);
        let mut stiffness = SymBandMatrix::zeros(ndof, BANDWIDTH);
        let mut mass = SymBandMatrix::zeros(ndof, BANDWIDTH);

        // Gauss points in ξ and the corresponding shape tables are mesh-independent
        // apart from h.
        let local: Vec<(f64, f64, [[f64; 4]; 3])> = rule
            .mapped(0.0, 1.0)
            .map(|(xi, w)| (xi, w, shape(xi, h)))
            .collect();

        let mut samples = Vec::with_capacity(elements * local.len());
        for e in 0..elements {
            let xa = mesh.node(e);
            let mut ke = [[0.0; 4]; 4];
            let mut me = [[0.0; 4]; 4];
            for &(xi, w, s) in &local {
                let x = xa + xi * h;
                let (rho, sigma, q) = (profile.rho(x), profile.sigma(x), profile.q(x));
                if !(rho > 0.0 && sigma > 0.0 && q >= 0.0) {
                    profile.check_admissible([x])?;
                }
                samples.push([xi, w, rho, sigma, q]);
                let wx = w * h;
                for a in 0..4 {
                    for b in 0..=a {
                        ke[a][b] += wx * (sigma * s[2][a] * s[2][b] + q * s[1][a] * s[1][b]);
                        me[a][b] += wx * rho * s[0][a] * s[0][b];
                    }
                }
            }
            let dofs = element_dofs(e, elements);
            for a in 0..4 {
                let Some(ga) = dofs[a] else { continue };
                for b in 0..=a {
                    let Some(gb) = dofs[b] else { continue };
                    let (k, m) = (ke[a][b], me[a][b]);
                    // each unordered pair is visited once and stored once
                    stiffness.add(ga, gb, k);
                    mass.add(ga, gb, m);
                }
            }
        }

        // u″(ℓ) = (6 u_a + 2h u′_a − 6 u_b + 4h u′_b)/h² with u_b = u′_b = 0.
        let last = 2 * (elements - 2);
        let trace_vector = vec![(last, 6.0 / (h * h)), (last + 1, 2.0 / h)];

        Ok(Self {
            mesh,
            stiffness,
            mass,
            trace_vector,
            profile: profile.clone(),
            samples,
        })
    }

    /// Value, slope and curvature at each Gauss point of element `e`, formed from nodal
    /// differences so that no `O(h⁻²)` terms cancel.
    fn local_jets(&self, field: &HermiteField, e: usize) -> [[f64; 3]; ELEMENT_GAUSS_POINTS] {
        let h = self.mesh.h();
        let (ua, da, ub, db) = (
            field.values[e],
            field.slopes[e],
            field.values[e + 1],
            field.slopes[e + 1],
        );
        let slope = (ub - ua) / h;
        let mut out = [[0.0; 3]; ELEMENT_GAUSS_POINTS];
        for (jet, &[xi, ..]) in out.iter_mut().zip(&self.samples[e * ELEMENT_GAUSS_POINTS..]) {
            let x2 = xi * xi;
            jet[0] = ua
                + h * (xi * da + x2 * (3.0 * slope - 2.0 * da - db) + x2 * xi * (da + db - 2.0 * slope));
            jet[1] = 6.0 * (xi - x2) * slope + (1.0 - 4.0 * xi + 3.0 * x2) * da
                + (3.0 * x2 - 2.0 * xi) * db;
            jet[2] = ((6.0 - 12.0 * xi) * slope + (6.0 * xi - 4.0) * da + (6.0 * xi - 2.0) * db) / h;
        }
        out
    }

    /// `(uᵀKu, uᵀMu)` accumulated element by element.
    ///
    /// Equal to the band products in exact arithmetic, but free of the cancellation of
    /// the `O(h⁻³)` matrix entries, which dominates for smooth `u` on fine meshes.
    pub fn energies(&self, u: &[f64]) -> (f64, f64) {
        let field = HermiteField::from_free(self.mesh, u);
        let h = self.mesh.h();
        let mut stiff = 0.0;
        let mut mass = 0.0;
        for e in 0..self.mesh.elements {
            let jets = self.local_jets(&field, e);
            let pts = &self.samples[e * ELEMENT_GAUSS_POINTS..(e + 1) * ELEMENT_GAUSS_POINTS];
            for (&[v, d1, d2], &[_, w, rho, sigma, q]) in jets.iter().zip(pts) {
                stiff += w * h * (sigma * d2 * d2 + q * d1 * d1);
                mass += w * h * rho * v * v;
            }
        }
        (stiff, mass)
    }

    /// `(Ku, Mu)` accumulated element by element, with the same cancellation
    /// properties as [`Self::energies`].
    pub fn apply(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let field = HermiteField::from_free(self.mesh, u);
        let h = self.mesh.h();
        let nodes = self.mesh.elements + 1;
        let mut kn = vec![[0.0; 2]; nodes];
        let mut mn = vec![[0.0; 2]; nodes];
        for e in 0..self.mesh.elements {
            let jets = self.local_jets(&field, e);
            let pts = &self.samples[e * ELEMENT_GAUSS_POINTS..(e + 1) * ELEMENT_GAUSS_POINTS];
            for (&[v, d1, d2], &[xi, w, rho, sigma, q]) in jets.iter().zip(pts) {
                let s = shape(xi, h);
                let (a, b) = (w * h * sigma * d2, w * h * q * d1);
                let c = w * h * rho * v;
                for (l, node) in [(0, e), (1, e), (2, e + 1), (3, e + 1)] {
                    kn[node][l % 2] += a * s[2][l] + b * s[1][l];
                    mn[node][l % 2] += c * s[0][l];
                }
            }
        }
        let free = |acc: Vec<[f64; 2]>| -> Vec<f64> { acc[1..nodes - 1].iter().flatten().copied().collect() };
        (free(kn), free(mn))
    }

    /// Rayleigh quotient `uᵀKu / uᵀMu` via [`Self::energies`].
    pub fn rayleigh_quotient(&self, u: &[f64]) -> f64 {
        let (k, m) = self.energies(u);
        k / m
    }

    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    pub fn profile(&self) -> &CoefficientProfile {
        &self.profile
    }

    /// `σ(ℓ)`, the weight of the boundary control term.
    pub fn sigma_end(&self) -> f64 {
        self.profile.sigma(self.mesh.length)
    }

    /// `u″(ℓ)` of the discrete function with free dofs `u`.
    pub fn boundary_trace(&self, u: &[f64]) -> f64 {
        self.trace_vector.iter().map(|&(i, w)| w * u[i]).sum()
    }

    /// Richardson extrapolation of the end curvature of a smooth function across the
    /// mesh and its uniform refinement, assuming the leading O(h²) error term.
    pub fn extrapolated_trace<F, D>(&self, f: F, df: D) -> f64
    where
        F: Fn(f64) -> f64,
        D: Fn(f64) -> f64,
    {
        let coarse = HermiteField::interpolate(self.mesh, &f, &df).end_curvature();
        let fine_mesh = Mesh {
            elements: 2 * self.mesh.elements,
            ..self.mesh
        };
        let fine = HermiteField::interpolate(fine_mesh, &f, &df).end_curvature();
        (4.0 * fine - coarse) / 3.0
    }
}

/// Global free dof (if any) for each of the four local unknowns of element `e`.
fn element_dofs(e: usize, elements: usize) -> [Option<usize>; 4] {
    let node = |i: usize, k: usize| -> Option<usize> {
        (i > 0 && i < elements).then(|| 2 * (i - 1) + k)
    };
    [node(e, 0), node(e, 1), node(e + 1, 0), node(e + 1, 1)]
}
