//! Coefficient profiles `(ρ, σ, q, ℓ)` and the optical geometry derived from them.
//!
//! A profile is admissible when `ρ ≥ ρ₀ > 0`, `σ ≥ σ₀ > 0` and `q ≥ 0` on `[0, ℓ]`.
//! Positivity of black-box data can only be checked by sampling, so every profile is
//! validated on a dense uniform grid plus the nodes of the default geometry quadrature,
//! and the assembly re-checks its own element quadrature nodes.
//!
//! The geometry is
//!
//! ```text
//! X(x) = ∫₀ˣ (ρ/σ)^{1/4} dt,   γ = X(ℓ),   ζ(x) = (ρ^{3/4} σ^{1/4})^{-1/2}
//! ```

use serde::{Deserialize, Serialize};

use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Uniform validation points, in addition to the quadrature nodes.
pub const VALIDATION_POINTS: usize = 4096;
/// Cells of the composite geometry quadrature.
pub const GEOMETRY_CELLS: usize = 256;
/// Gauss points per geometry cell.
pub const DEFAULT_QUADRATURE_ORDER: usize = 4;

/// How a single coefficient is described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefficientSpec {
    /// `a₀ + a₁x + a₂x² + …` in the physical variable `x`.
    Polynomial(Vec<f64>),
    /// `(x, value)` table covering `[0, ℓ]`, interpolated by a monotone cubic.
    Samples(Vec<(f64, f64)>),
}

impl CoefficientSpec {
    pub fn constant(c: f64) -> Self {
        CoefficientSpec::Polynomial(vec![c])
    }

    /// The same description with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            CoefficientSpec::Polynomial(a) => {
                CoefficientSpec::Polynomial(a.iter().map(|v| v * factor).collect())
            }
            CoefficientSpec::Samples(s) => {
                CoefficientSpec::Samples(s.iter().map(|&(x, v)| (x, v * factor)).collect())
            }
        }
    }
}

/// Full description of a profile, as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub length: f64,
    pub rho: CoefficientSpec,
    pub sigma: CoefficientSpec,
    pub q: CoefficientSpec,
}

impl ProfileSpec {
    pub fn constant(length: f64, rho: f64, sigma: f64, q: f64) -> Self {
        Self {
            length,
            rho: CoefficientSpec::constant(rho),
            sigma: CoefficientSpec::constant(sigma),
            q: CoefficientSpec::constant(q),
        }
    }
}

/// Fritsch–Carlson monotone cubic Hermite interpolant. It never overshoots the data,
/// so positive samples give a positive interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Profile("a sample table needs at least two points".into()));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Profile("sample table contains non-finite values".into()));
        }
        if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Profile(format!(
                "sample abscissae must be strictly increasing (x = {} after {})",
                xs[i + 1], xs[i]
            )));
        }
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                let (d0, d1) = (delta[k - 1], delta[k]);
                if d0 * d1 > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slopes[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slopes[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let x = x.clamp(self.xs[0], self.xs[n - 1]);
        let k = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1]
    }

    fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }
}

/// Shape-preserving one-sided three-point endpoint derivative.
fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// A single evaluated coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Polynomial(Vec<f64>),
    Samples(MonotoneCubic),
}

impl Coefficient {
    fn from_spec(spec: &CoefficientSpec, length: f64, name: &str) -> Result<Self> {
        match spec {
            CoefficientSpec::Polynomial(a) => {
                if a.is_empty() {
                    return Err(Error::Profile(format!("{name}: empty polynomial")));
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Profile(format!("{name}: non-finite polynomial coefficient")));
                }
                Ok(Coefficient::Polynomial(a.clone()))
            }
            CoefficientSpec::Samples(points) => {
                let interp = MonotoneCubic::new(points)
                    .map_err(|e| Error::Profile(format!("{name}: {e}")))?;
                let (lo, hi) = interp.domain();
                let tol = 1e-12 * length;
                if lo > tol || hi < length - tol {
                    return Err(Error::Profile(format!(
                        "{name}: samples cover [{lo}, {hi}], must cover [0, {length}]"
                    )));
                }
                Ok(Coefficient::Samples(interp))
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Polynomial(a) => a.iter().rev().fold(0.0, |acc, &c| acc * x + c),
            Coefficient::Samples(s) => s.eval(x),
        }
    }
}

/// Admissible physical data `(ρ, σ, q)` on `[0, ℓ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientProfile {
    length: f64,
    rho: Coefficient,
    sigma: Coefficient,
    q: Coefficient,
    spec: ProfileSpec,
}

impl CoefficientProfile {
    /// Builds and validates a profile.
    pub fn build(spec: &ProfileSpec) -> Result<Self> {
        let length = spec.length;
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Profile(format!("length must be positive, got {length}")));
        }
        let profile = Self {
            length,
            rho: Coefficient::from_spec(&spec.rho, length, "rho")?,
            sigma: Coefficient::from_spec(&spec.sigma, length, "sigma")?,
            q: Coefficient::from_spec(&spec.q, length, "q")?,
            spec: spec.clone(),
        };
        let uniform = (0..VALIDATION_POINTS)
            .map(|i| length * i as f64 / (VALIDATION_POINTS - 1) as f64);
        let rule = GaussLegendre::new(DEFAULT_QUADRATURE_ORDER);
        let hc = length / GEOMETRY_CELLS as f64;
        let nodes: Vec<f64> = (0..GEOMETRY_CELLS)
            .flat_map(|c| {
                let a = c as f64 * hc;
                rule.mapped(a, a + hc).map(|(x, _)| x).collect::<Vec<_>>()
            })
            .collect();
        profile.check_admissible(uniform.chain(nodes))?;
        Ok(profile)
    }

    pub fn constant(length: f64, rho: f64, sigma: f64, q: f64) -> Result<Self> {
        Self::build(&ProfileSpec::constant(length, rho, sigma, q))
    }

    /// Checks the positivity invariants at the given points. On failure, reports the
    /// point of worst violation.
    pub fn check_admissible<I: IntoIterator<Item = f64>>(&self, xs: I) -> Result<()> {
        let mut worst: Option<(&'static str, f64, f64)> = None;
        for x in xs {
            let checks = [
                ("rho", self.rho(x), false),
                ("sigma", self.sigma(x), false),
                ("q", self.q(x), true),
            ];
            for (name, v, allow_zero) in checks {
                let bad = !v.is_finite() || if allow_zero { v < 0.0 } else { v <= 0.0 };
                if bad && worst.is_none_or(|(_, _, w)| v < w || !v.is_finite()) {
                    worst = Some((name, x, v));
                }
            }
        }
        match worst {
            Some((name, x, value)) => Err(Error::Positivity { name, x, value }),
            None => Ok(()),
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn rho(&self, x: f64) -> f64 {
        self.rho.eval(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        self.sigma.eval(x)
    }

    pub fn q(&self, x: f64) -> f64 {
        self.q.eval(x)
    }

    pub fn spec(&self) -> &ProfileSpec {
        &self.spec
    }

    /// ζ(x) = ρ^{-3/8} σ^{-1/8}.
    pub fn zeta(&self, x: f64) -> f64 {
        (self.rho(x).powf(0.75) * self.sigma(x).powf(0.25)).powf(-0.5)
    }

    /// Optical slowness (ρ/σ)^{1/4}, the integrand of X.
    pub fn slowness(&self, x: f64) -> f64 {
        (self.rho(x) / self.sigma(x)).powf(0.25)
    }
}

/// One row of the geometry quadrature table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryNode {
    pub x: f64,
    pub weight: f64,
    pub zeta: f64,
    /// X evaluated at this node.
    pub optical: f64,
}

/// γ, ζ and X for a profile, from composite Gauss–Legendre quadrature.
#[derive(Debug, Clone)]
pub struct WaveGeometry {
    pub gamma: f64,
    /// |γ(cells) − γ(2·cells)| plus a round-off allowance.
    pub gamma_error: f64,
    pub quadrature_order: usize,
    pub cells: usize,
    pub nodes: Vec<GeometryNode>,
    cumulative: Vec<f64>,
    rule: GaussLegendre,
    profile: CoefficientProfile,
}

impl WaveGeometry {
    /// Geometry on the default grid of [`GEOMETRY_CELLS`] cells.
    pub fn new(profile: &CoefficientProfile, quadrature_order: usize) -> Result<Self> {
        Self::with_cells(profile, quadrature_order, GEOMETRY_CELLS)
    }

    pub fn with_cells(
        profile: &CoefficientProfile,
        quadrature_order: usize,
        cells: usize,
    ) -> Result<Self> {
        if quadrature_order < 2 {
            return Err(Error::InvalidArgument(format!(
                "quadrature order must be at least 2, got {quadrature_order}"
            )));
        }
        if cells == 0 {
            return Err(Error::InvalidArgument("geometry needs at least one cell".into()));
        }
        let rule = GaussLegendre::new(quadrature_order);
        let (cumulative, nodes) = integrate_slowness(profile, &rule, cells);
        profile.check_admissible(nodes.iter().map(|n| n.x))?;
        let gamma = cumulative[cells];
        let (fine, _) = integrate_slowness(profile, &rule, 2 * cells);
        let gamma_error = (fine[2 * cells] - gamma).abs() + 64.0 * f64::EPSILON * gamma;
        Ok(Self {
            gamma,
            gamma_error,
            quadrature_order,
            cells,
            nodes,
            cumulative,
            rule,
            profile: profile.clone(),
        })
    }

    pub fn profile(&self) -> &CoefficientProfile {
        &self.profile
    }

    pub fn length(&self) -> f64 {
        self.profile.length
    }

    pub fn zeta(&self, x: f64) -> f64 {
        self.profile.zeta(x)
    }

    /// X(x), the optical distance from the left end.
    pub fn optical(&self, x: f64) -> f64 {
        let length = self.profile.length;
        if x <= 0.0 {
            return 0.0;
        }
        if x >= length {
            return self.gamma;
        }
        let hc = length / self.cells as f64;
        let cell = ((x / hc) as usize).min(self.cells - 1);
        let a = cell as f64 * hc;
        self.cumulative[cell] + self.rule.integrate(a, x, |t| self.profile.slowness(t))
    }
}

fn integrate_slowness(
    profile: &CoefficientProfile,
    rule: &GaussLegendre,
    cells: usize,
) -> (Vec<f64>, Vec<GeometryNode>) {
    let hc = profile.length / cells as f64;
    let mut cumulative = Vec::with_capacity(cells + 1);
    let mut nodes = Vec::with_capacity(cells * rule.len());
    cumulative.push(0.0);
    let mut total = 0.0;
    for c in 0..cells {
        let a = c as f64 * hc;
        for (x, w) in rule.mapped(a, a + hc) {
            nodes.push(GeometryNode {
                x,
                weight: w,
                zeta: profile.zeta(x),
                optical: total + rule.integrate(a, x, |t| profile.slowness(t)),
            });
        }
        total += rule.integrate(a, a + hc, |t| profile.slowness(t));
        cumulative.push(total);
    }
    (cumulative, nodes)
}
