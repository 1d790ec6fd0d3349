//! Phase assignment for noisy oscillator data and phase-indexed Fourier models.
//!
//! The protophase is the polar angle in the plane of the two leading principal
//! components of the centred samples `(r, ṙ)`. It is rectified to a phase that
//! advances at a uniform average rate with the Fourier change of variables of
//! Kralemann et al.

use crate::fourier::{FourierError, FourierSeries};
use crate::trajectory::ShapeState;
use nalgebra::{DMatrix, SymmetricEigen};
type Complex64 = nalgebra::Complex<f64>;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PhaseError {
    #[error("shape data is degenerate (rank {0} < 2)")]
    Degenerate(usize),
    #[error("need at least {needed:.1} cycles of data, found {found:.2}")]
    TooFewCycles { needed: f64, found: f64 },
    #[error("times and shapes differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

pub const MIN_CYCLES: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub rectification_order: usize,
    /// Require at least this many cycles.
    pub min_cycles: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self { rectification_order: 7, min_cycles: MIN_CYCLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAssignment {
    /// Phase of every sample in `[0, 2π)`.
    pub phases: Vec<f64>,
    /// Unwrapped phase, starting in `[0, 2π)`.
    pub unwrapped: Vec<f64>,
    /// Number of completed turns over the record.
    pub windings: u64,
    /// Mean phase rate over the record.
    pub mean_rate: f64,
    /// Indices `j` where the unwrapped phase fails to increase from `j-1` to `j`.
    pub non_monotone: Vec<usize>,
}

impl PhaseAssignment {
    pub fn is_monotone(&self) -> bool {
        self.non_monotone.is_empty()
    }
}

fn unwrap_angles(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut offset = 0.0;
    let mut prev = raw.first().copied().unwrap_or(0.0);
    for &a in raw {
        let mut step = a - prev;
        while step > std::f64::consts::PI {
            step -= TAU;
            offset -= TAU;
        }
        while step < -std::f64::consts::PI {
            step += TAU;
            offset += TAU;
        }
        out.push(a + offset);
        prev = a;
    }
    out
}

/// Protophase `θ_j` (unwrapped) of each sample, oriented so that it increases
/// along the direction of motion given by the derivatives.
pub fn protophase(shapes: &[ShapeState]) -> Result<Vec<f64>, PhaseError> {
    let n = shapes.len();
    let d = shapes.first().map_or(0, |s| s.dim());
    if n < 3 || d == 0 {
        return Err(PhaseError::Degenerate(0));
    }
    let dim = 2 * d;
    let point = |s: &ShapeState, k: usize| if k < d { s.alpha[k] } else { s.alpha_dot[k - d] };
    let velocity = |s: &ShapeState, k: usize| if k < d { s.alpha_dot[k] } else { s.alpha_ddot[k - d] };
    let mut mean = vec![0.0; dim];
    for s in shapes {
        for (k, m) in mean.iter_mut().enumerate() {
            *m += point(s, k);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for s in shapes {
        for a in 0..dim {
            let xa = point(s, a) - mean[a];
            for b in a..dim {
                cov[(a, b)] += xa * (point(s, b) - mean[b]);
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > top * 1e-12 && eig.eigenvalues[i] > 0.0).count();
    if rank < 2 {
        return Err(PhaseError::Degenerate(rank));
    }
    let e1 = eig.eigenvectors.column(order[0]).into_owned();
    let e2 = eig.eigenvectors.column(order[1]).into_owned();

    let mut angular_rate = 0.0;
    let raw: Vec<f64> = shapes
        .iter()
        .map(|s| {
            let (mut y1, mut y2, mut v1, mut v2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for k in 0..dim {
                let x = point(s, k) - mean[k];
                let v = velocity(s, k);
                y1 += e1[k] * x;
                y2 += e2[k] * x;
                v1 += e1[k] * v;
                v2 += e2[k] * v;
            }
            let r2 = y1 * y1 + y2 * y2;
            if r2 > 0.0 {
                angular_rate += (y1 * v2 - y2 * v1) / r2;
            }
            y2.atan2(y1)
        })
        .collect();
    let sign = if angular_rate < 0.0 { -1.0 } else { 1.0 };
    let oriented: Vec<f64> = raw.iter().map(|a| sign * a).collect();
    Ok(unwrap_angles(&oriented))
}

/// Fourier change of variables making the phase advance uniformly on average:
/// `φ = θ + Σ_{k=1}^{N} 2 Re[S_k (e^{ikθ} − 1) / (ik)]` with
/// `S_k = ⟨e^{−ikθ_j}⟩` over the samples.
pub fn rectify(theta: &[f64], order: usize) -> Vec<f64> {
    let n = theta.len() as f64;
    let s: Vec<Complex64> = (1..=order)
        .map(|k| theta.iter().map(|t| Complex64::from_polar(1.0, -(k as f64) * t)).sum::<Complex64>() / n)
        .collect();
    theta
        .iter()
        .map(|&t| {
            let mut phi = t;
            for (idx, sk) in s.iter().enumerate() {
                let k = (idx + 1) as f64;
                let term = sk * (Complex64::from_polar(1.0, k * t) - 1.0) / Complex64::new(0.0, k);
                phi += 2.0 * term.re;
            }
            phi
        })
        .collect()
}

/// Assigns a phase to every sample of a uniformly sampled shape series.
pub fn estimate_phase(times: &[f64], shapes: &[ShapeState], cfg: &PhaseConfig) -> Result<PhaseAssignment, PhaseError> {
    if times.len() != shapes.len() {
        return Err(PhaseError::LengthMismatch(times.len(), shapes.len()));
    }
    let theta = protophase(shapes)?;
    let mut phi = rectify(&theta, cfg.rectification_order);
    let shift = phi[0].rem_euclid(TAU) - phi[0];
    phi.iter_mut().for_each(|p| *p += shift);
    let span = phi[phi.len() - 1] - phi[0];
    let found = span.abs() / TAU;
    let non_monotone: Vec<usize> = (1..phi.len()).filter(|&j| phi[j] <= phi[j - 1]).collect();
    if found < cfg.min_cycles {
        return Err(PhaseError::TooFewCycles { needed: cfg.min_cycles, found });
    }
    let duration = times[times.len() - 1] - times[0];
    Ok(PhaseAssignment {
        phases: phi.iter().map(|p| p.rem_euclid(TAU)).collect(),
        windings: (span.max(0.0) / TAU).floor() as u64,
        mean_rate: if duration > 0.0 { span / duration } else { 0.0 },
        unwrapped: phi,
        non_monotone,
    })
}

/// A least-squares Fourier fit with its residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierModel {
    pub series: FourierSeries,
    pub rms_residual: f64,
    pub max_residual: f64,
}

impl FourierModel {
    pub fn eval(&self, phi: f64) -> Vec<f64> {
        self.series.eval(phi)
    }
}

pub fn fit_fourier(phases: &[f64], values: &[Vec<f64>], order: usize) -> Result<FourierModel, PhaseError> {
    let series = FourierSeries::fit(phases, values, order)?;
    let mut sq = 0.0;
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for (p, v) in phases.iter().zip(values) {
        for (a, b) in series.eval(*p).iter().zip(v) {
            let r = a - b;
            sq += r * r;
            worst = worst.max(r.abs());
            count += 1;
        }
    }
    Ok(FourierModel { series, rms_residual: (sq / count.max(1) as f64).sqrt(), max_residual: worst })
}

/// Phase models of the gait `γ` and its time derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitModels {
    pub gamma: FourierSeries,
    pub gamma_dot: FourierSeries,
    pub gamma_ddot: FourierSeries,
    /// Phase advance per unit time.
    pub rate: f64,
}

impl GaitModels {
    pub fn shape_dim(&self) -> usize {
        self.gamma.dim()
    }

    pub fn at(&self, phi: f64) -> ShapeState {
        ShapeState { alpha: self.gamma.eval(phi), alpha_dot: self.gamma_dot.eval(phi), alpha_ddot: self.gamma_ddot.eval(phi) }
    }

    /// Uses exact derivatives of a known gait traversed at unit phase rate.
    pub fn from_series(series: &FourierSeries) -> Self {
        Self::differentiated(series.clone(), 1.0)
    }

    /// Derivative models by term-wise differentiation of `γ` at phase rate `rate`.
    pub fn differentiated(gamma: FourierSeries, rate: f64) -> Self {
        let order = gamma.order();
        let mut d1 = FourierSeries::zeros(gamma.dim(), order);
        let mut d2 = FourierSeries::zeros(gamma.dim(), order);
        for k in 0..order {
            let kf = (k + 1) as f64;
            for i in 0..gamma.dim() {
                let (a, b) = (gamma.cos[k][i], gamma.sin[k][i]);
                d1.cos[k][i] = rate * kf * b;
                d1.sin[k][i] = -rate * kf * a;
                d2.cos[k][i] = -rate * rate * kf * kf * a;
                d2.sin[k][i] = -rate * rate * kf * kf * b;
            }
        }
        Self { gamma, gamma_dot: d1, gamma_ddot: d2, rate }
    }
}

/// Fits `γ` (and either differentiates it or fits `γ̇`, `γ̈` separately).
pub fn fit_gait_models(
    phases: &PhaseAssignment,
    shapes: &[ShapeState],
    order: usize,
    independent_derivatives: bool,
) -> Result<GaitModels, PhaseError> {
    let r: Vec<Vec<f64>> = shapes.iter().map(|s| s.alpha.clone()).collect();
    let gamma = FourierSeries::fit(&phases.phases, &r, order)?;
    if !independent_derivatives {
        return Ok(GaitModels::differentiated(gamma, phases.mean_rate));
    }
    let rd: Vec<Vec<f64>> = shapes.iter().map(|s| s.alpha_dot.clone()).collect();
    let rdd: Vec<Vec<f64>> = shapes.iter().map(|s| s.alpha_ddot.clone()).collect();
    Ok(GaitModels {
        gamma,
        gamma_dot: FourierSeries::fit(&phases.phases, &rd, order)?,
        gamma_ddot: FourierSeries::fit(&phases.phases, &rdd, order)?,
        rate: phases.mean_rate,
    })
}
