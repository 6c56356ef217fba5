//! Banded matrices for the assembled operator pair.
//!
//! Symmetric matrices are stored by lower diagonals: entry `(j + d, j)` lives at
//! `data[j * (kd + 1) + d]` for `0 ≤ d ≤ kd`.

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymBandMatrix {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Half bandwidth.
    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        (d <= self.kd && r < self.n).then(|| c * (self.kd + 1) + d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    ///
    /// Panics if `(i, j)` is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.kd));
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let base = j * (self.kd + 1);
            y[j] += self.data[base] * x[j];
            for d in 1..=self.kd.min(self.n - 1 - j) {
                let a = self.data[base + d];
                y[j + d] += a * x[j];
                y[j] += a * x[j + d];
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Maximum absolute difference between mirrored entries of the expanded matrix.
    /// Zero by construction; kept as an explicit check for assembly tests.
    pub fn asymmetry(&self) -> f64 {
        let d = self.to_dense();
        (&d - d.transpose()).amax()
    }

    /// `self − shift·other`, both of the same shape.
    pub fn shifted(&self, other: &SymBandMatrix, shift: f64) -> SymBandMatrix {
        assert_eq!((self.n, self.kd), (other.n, other.kd));
        SymBandMatrix {
            n: self.n,
            kd: self.kd,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - shift * b)
                .collect(),
        }
    }

    /// Number of negative pivots of the unpivoted `LDLᵀ` factorization of
    /// `self − shift·other`. By Sylvester's law of inertia this is the number of
    /// generalized eigenvalues below `shift` when `other` is positive definite.
    pub fn count_below(&self, other: &SymBandMatrix, shift: f64) -> usize {
        let n = self.n;
        let kd = self.kd;
        let w = kd + 1;
        // l[j*w + d] = L[j+d][j], d ≥ 1; diag[j] = D[j]
        let mut l = vec![0.0; n * w];
        let mut diag = vec![0.0; n];
        let mut negatives = 0;
        let tiny = f64::MIN_POSITIVE.sqrt();
        for j in 0..n {
            let mut dj = self.data[j * w] - shift * other.data[j * w];
            for k in j.saturating_sub(kd)..j {
                let ljk = l[k * w + (j - k)];
                dj -= ljk * ljk * diag[k];
            }
            if dj == 0.0 {
                dj = -tiny * (1.0 + self.data[j * w].abs());
            }
            if dj < 0.0 {
                negatives += 1;
            }
            diag[j] = dj;
            for d in 1..=kd.min(n - 1 - j) {
                let i = j + d;
                let mut v = self.data[j * w + d] - shift * other.data[j * w + d];
                for k in i.saturating_sub(kd)..j {
                    v -= l[k * w + (i - k)] * l[k * w + (j - k)] * diag[k];
                }
                l[j * w + d] = v / dj;
            }
        }
        negatives
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let kd = self.kd;
        let w = kd + 1;
        let mut l = vec![0.0; n * w];
        for j in 0..n {
            let mut s = self.data[j * w];
            for k in j.saturating_sub(kd)..j {
                let v = l[k * w + (j - k)];
                s -= v * v;
            }
            if !(s > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = s.sqrt();
            l[j * w] = ljj;
            for d in 1..=kd.min(n - 1 - j) {
                let i = j + d;
                let mut v = self.data[j * w + d];
                for k in i.saturating_sub(kd)..j {
                    v -= l[k * w + (i - k)] * l[k * w + (j - k)];
                }
                l[j * w + d] = v / ljj;
            }
        }
        Ok(BandCholesky { n, kd, l })
    }
}

/// `A = L Lᵀ` with `L` stored like [`SymBandMatrix`].
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    kd: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kd, w) = (self.n, self.kd, self.kd + 1);
        let mut y = b.to_vec();
        for j in 0..n {
            y[j] /= self.l[j * w];
            for d in 1..=kd.min(n - 1 - j) {
                y[j + d] -= self.l[j * w + d] * y[j];
            }
        }
        for j in (0..n).rev() {
            let mut v = y[j];
            for d in 1..=kd.min(n - 1 - j) {
                v -= self.l[j * w + d] * y[j + d];
            }
            y[j] = v / self.l[j * w];
        }
        y
    }
}

/// LU factorization with partial pivoting of a square band matrix with `kl` lower and
/// `ku` upper diagonals. Row `i` of `U` is stored over columns `i ..= i + kl + ku`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    rows: Vec<f64>,
    multipliers: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    /// Factors the symmetric band matrix as a general one.
    pub fn from_symmetric(a: &SymBandMatrix) -> Self {
        let n = a.n;
        let kl = a.kd;
        let ku = a.kd;
        // row i holds columns (i - kl) ..= (i + ku + kl)
        let width = 2 * kl + ku + 1;
        let mut rows = vec![0.0; n * width];
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                rows[i * width + (j + kl - i)] = a.get(i, j);
            }
        }
        let at = |rows: &[f64], i: usize, j: usize| rows[i * width + (j + kl - i)];
        let mut multipliers = vec![0.0; n * kl];
        let mut pivots = vec![0; n];
        let scale = rows.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = at(&rows, k, k).abs();
            for i in k + 1..=last {
                let v = at(&rows, i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots[k] = p;
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    let a_idx = k * width + (j + kl - k);
                    let b_idx = p * width + (j + kl - p);
                    rows.swap(a_idx, b_idx);
                }
            }
            let mut piv = at(&rows, k, k);
            if piv.abs() < floor {
                piv = if piv < 0.0 { -floor } else { floor };
                rows[k * width + kl] = piv;
            }
            for i in k + 1..=last {
                let m = at(&rows, i, k) / piv;
                multipliers[k * kl.max(1) + (i - k - 1)] = m;
                if m != 0.0 {
                    for j in k + 1..=cmax {
                        let u = at(&rows, k, j);
                        rows[i * width + (j + kl - i)] -= m * u;
                    }
                }
                rows[i * width + (k + kl - i)] = 0.0;
            }
        }
        Self {
            n,
            kl,
            width,
            rows,
            multipliers,
            pivots,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let ku = width - 2 * kl - 1;
        let mut y = b.to_vec();
        for k in 0..n {
            y.swap(k, self.pivots[k]);
            let last = (k + kl).min(n - 1);
            for i in k + 1..=last {
                y[i] -= self.multipliers[k * kl.max(1) + (i - k - 1)] * y[k];
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + kl + ku).min(n - 1);
            let mut v = y[k];
            for j in k + 1..=cmax {
                v -= self.rows[k * width + (j + kl - k)] * y[j];
            }
            y[k] = v / self.rows[k * width + kl];
        }
        y
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
