//! Truncated real Fourier series on the circle, vector valued.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FourierError {
    #[error("need at least {needed} samples for order {order}, got {got}")]
    TooFewSamples { order: usize, needed: usize, got: usize },
    #[error("sample phases do not resolve order {order} (rank {rank} < {cols})")]
    RankDeficient { order: usize, rank: usize, cols: usize },
    #[error("phases and values differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("inconsistent value dimension")]
    DimMismatch,
}

/// `f(φ) = a₀ + Σ_{k=1}^{K} a_k cos kφ + b_k sin kφ`, each coefficient a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub mean: Vec<f64>,
    pub cos: Vec<Vec<f64>>,
    pub sin: Vec<Vec<f64>>,
}

impl FourierSeries {
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self { mean: vec![0.0; dim], cos: vec![vec![0.0; dim]; order], sin: vec![vec![0.0; dim]; order] }
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Self { mean: value, cos: Vec::new(), sin: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn order(&self) -> usize {
        self.cos.len()
    }

    /// Value and first two derivatives with respect to `φ`.
    pub fn eval_derivs(&self, phi: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut f = self.mean.clone();
        let mut df = vec![0.0; d];
        let mut ddf = vec![0.0; d];
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let kf = (k + 1) as f64;
            let (s, c) = (kf * phi).sin_cos();
            for i in 0..d {
                f[i] += a[i] * c + b[i] * s;
                df[i] += kf * (b[i] * c - a[i] * s);
                ddf[i] -= kf * kf * (a[i] * c + b[i] * s);
            }
        }
        (f, df, ddf)
    }

    pub fn eval(&self, phi: f64) -> Vec<f64> {
        let d = self.dim();
        let mut f = self.mean.clone();
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let (s, c) = (((k + 1) as f64) * phi).sin_cos();
            for i in 0..d {
                f[i] += a[i] * c + b[i] * s;
            }
        }
        f
    }

    /// Flat coefficient vector `[mean, cos₁, sin₁, cos₂, …]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (a, b) in self.cos.iter().zip(&self.sin) {
            out.extend_from_slice(a);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn from_flat(dim: usize, order: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), dim * (2 * order + 1));
        let mut s = Self::zeros(dim, order);
        s.mean.copy_from_slice(&flat[..dim]);
        for k in 0..order {
            let o = dim * (1 + 2 * k);
            s.cos[k].copy_from_slice(&flat[o..o + dim]);
            s.sin[k].copy_from_slice(&flat[o + dim..o + 2 * dim]);
        }
        s
    }

    /// Mean over one period.
    pub fn average(&self) -> &[f64] {
        &self.mean
    }

    /// Least-squares fit of order `order` to samples `(φ_j, v_j)`.
    pub fn fit(phases: &[f64], values: &[Vec<f64>], order: usize) -> Result<Self, FourierError> {
        if phases.len() != values.len() {
            return Err(FourierError::LengthMismatch(phases.len(), values.len()));
        }
        let cols = 2 * order + 1;
        if phases.len() < cols {
            return Err(FourierError::TooFewSamples { order, needed: cols, got: phases.len() });
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(FourierError::DimMismatch);
        }
        let design = design_matrix(phases, order);
        let svd = design.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * 1e-10 * (phases.len() as f64).sqrt();
        let rank = svd.rank(tol);
        if rank < cols {
            return Err(FourierError::RankDeficient { order, rank, cols });
        }
        let rhs = DMatrix::from_fn(phases.len(), dim, |r, c| values[r][c]);
        let coef = svd.solve(&rhs, tol).map_err(|_| FourierError::RankDeficient { order, rank, cols })?;
        let mut s = Self::zeros(dim, order);
        for i in 0..dim {
            s.mean[i] = coef[(0, i)];
            for k in 0..order {
                s.cos[k][i] = coef[(1 + 2 * k, i)];
                s.sin[k][i] = coef[(2 + 2 * k, i)];
            }
        }
        Ok(s)
    }
}

/// Rows `[1, cos φ, sin φ, cos 2φ, sin 2φ, …]`.
pub fn design_matrix(phases: &[f64], order: usize) -> DMatrix<f64> {
    let cols = 2 * order + 1;
    let mut m = DMatrix::zeros(phases.len(), cols);
    for (r, phi) in phases.iter().enumerate() {
        m[(r, 0)] = 1.0;
        for k in 0..order {
            let (s, c) = (((k + 1) as f64) * phi).sin_cos();
            m[(r, 1 + 2 * k)] = c;
            m[(r, 2 + 2 * k)] = s;
        }
    }
    m
}

/// Basis row at a single phase, as a column vector.
pub fn basis(phi: f64, order: usize) -> DVector<f64> {
    let mut v = DVector::zeros(2 * order + 1);
    v[0] = 1.0;
    for k in 0..order {
        let (s, c) = (((k + 1) as f64) * phi).sin_cos();
        v[1 + 2 * k] = c;
        v[2 + 2 * k] = s;
    }
    v
}
