//! Gaits and the noisy shape-oscillator signal that drives experiments.
//!
//! The phase is `φ(t) = t + b(t)` where `b` is Brownian motion of intensity
//! `phase_noise_std` smoothed by two first-order stages at the filter corner, so
//! that `φ̈` exists. The additive shape perturbation `a(t)` is an
//! Ornstein–Uhlenbeck process followed by two more first-order stages with the
//! same corner; `a`, `ȧ` and `ä` are then continuous state functions, and the
//! stationary standard deviation of each coordinate of `a` equals
//! `amplitude_noise_std`.

use crate::fourier::FourierSeries;
use crate::trajectory::{ShapeSignal, ShapeState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("unsupported gait kind `{0}` (expected twist, flap or circle)")]
    UnsupportedKind(String),
    #[error("segments per paddle must be at least 1")]
    NoSegments,
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("need at least one cycle")]
    NoCycles,
    #[error("noise parameter `{0}` must be non-negative and finite")]
    BadNoise(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitKind {
    TwistInPlace,
    SymmetricFlap,
    Circle,
}

impl FromStr for GaitKind {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "twist" | "twist_in_place" => Ok(GaitKind::TwistInPlace),
            "flap" | "symmetric_flap" => Ok(GaitKind::SymmetricFlap),
            "circle" => Ok(GaitKind::Circle),
            other => Err(ShapeError::UnsupportedKind(other.to_string())),
        }
    }
}

impl GaitKind {
    pub fn name(&self) -> &'static str {
        match self {
            GaitKind::TwistInPlace => "twist",
            GaitKind::SymmetricFlap => "flap",
            GaitKind::Circle => "circle",
        }
    }
}

/// A periodic shape loop `γ(φ)` with period `2π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gait {
    pub series: FourierSeries,
}

impl Gait {
    pub fn new(series: FourierSeries) -> Self {
        Self { series }
    }

    pub fn shape_dim(&self) -> usize {
        self.series.dim()
    }

    pub fn period(&self) -> f64 {
        TAU
    }

    /// `(γ, γ', γ'')` at phase `φ`.
    pub fn at_phase(&self, phi: f64) -> ShapeState {
        let (alpha, alpha_dot, alpha_ddot) = self.series.eval_derivs(phi);
        ShapeState { alpha, alpha_dot, alpha_ddot }
    }

    pub fn gamma(&self, phi: f64) -> Vec<f64> {
        self.series.eval(phi)
    }
}

/// Driving the gait at unit phase rate is itself a shape signal.
impl ShapeSignal for Gait {
    fn dim(&self) -> usize {
        self.shape_dim()
    }

    fn eval(&self, t: f64) -> ShapeState {
        self.at_phase(t)
    }
}

/// Two-paddle gait with rest offsets `±π/2` and amplitude `amplitude` radians.
pub fn manual_gait(kind: GaitKind, amplitude: f64) -> Gait {
    let mut s = FourierSeries::zeros(2, 1);
    s.mean = vec![FRAC_PI_2, -FRAC_PI_2];
    match kind {
        GaitKind::TwistInPlace => s.sin[0] = vec![amplitude, amplitude],
        GaitKind::SymmetricFlap => s.sin[0] = vec![amplitude, -amplitude],
        GaitKind::Circle => {
            s.sin[0] = vec![amplitude, 0.0];
            s.cos[0] = vec![0.0, -amplitude];
        }
    }
    Gait::new(s)
}

/// Mirror-symmetric flapping of two paddles with `segments_per_paddle` joints
/// each, every joint oscillating with amplitude `amplitude_total / N`.
pub fn multiseg_flap_gait(segments_per_paddle: usize, amplitude_total: f64) -> Result<Gait, ShapeError> {
    let n = segments_per_paddle;
    if n < 1 {
        return Err(ShapeError::NoSegments);
    }
    let amp = amplitude_total / n as f64;
    let mut s = FourierSeries::zeros(2 * n, 1);
    for j in 0..n {
        s.sin[0][j] = amp;
        s.sin[0][n + j] = -amp;
    }
    s.mean[0] = FRAC_PI_2;
    s.mean[n] = -FRAC_PI_2;
    Ok(Gait::new(s))
}

/// Serializable description of a gait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GaitSpec {
    Manual {
        kind: GaitKind,
        #[serde(default = "unit_amplitude")]
        amplitude: f64,
    },
    MultisegFlap {
        segments_per_paddle: usize,
        #[serde(default = "pi_amplitude")]
        amplitude_total: f64,
    },
    Fourier {
        series: FourierSeries,
    },
}

fn unit_amplitude() -> f64 {
    1.0
}

fn pi_amplitude() -> f64 {
    PI
}

impl GaitSpec {
    pub fn build(&self) -> Result<Gait, ShapeError> {
        match self {
            GaitSpec::Manual { kind, amplitude } => Ok(manual_gait(*kind, *amplitude)),
            GaitSpec::MultisegFlap { segments_per_paddle, amplitude_total } => {
                multiseg_flap_gait(*segments_per_paddle, *amplitude_total)
            }
            GaitSpec::Fourier { series } => Ok(Gait::new(series.clone())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GaitSpec::Manual { kind, .. } => kind.name().to_string(),
            GaitSpec::MultisegFlap { segments_per_paddle, .. } => format!("multiseg{segments_per_paddle}"),
            GaitSpec::Fourier { .. } => "fourier".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Phase diffusion intensity, `1/√time`.
    pub phase_noise_std: f64,
    /// Stationary standard deviation of the additive shape perturbation, radians.
    pub amplitude_noise_std: f64,
    /// Filter corner frequency, `1/time`.
    pub filter_corner: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { phase_noise_std: 0.01, amplitude_noise_std: 0.02, filter_corner: 10.0 / TAU, seed: 0 }
    }
}

impl NoiseParams {
    pub fn silent() -> Self {
        Self { phase_noise_std: 0.0, amplitude_noise_std: 0.0, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        for (name, v) in [
            ("phase_noise_std", self.phase_noise_std),
            ("amplitude_noise_std", self.amplitude_noise_std),
            ("filter_corner", self.filter_corner),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ShapeError::BadNoise(name));
            }
        }
        if self.filter_corner == 0.0 && (self.phase_noise_std > 0.0 || self.amplitude_noise_std > 0.0) {
            return Err(ShapeError::BadNoise("filter_corner"));
        }
        Ok(())
    }
}

/// A generated noisy shape trajectory: grid values of phase and perturbation
/// with two derivatives each, interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySignal {
    pub gait: Gait,
    pub t0: f64,
    pub dt: f64,
    /// `(φ, φ̇, φ̈)` per grid node.
    pub phase: Vec<[f64; 3]>,
    /// `(a, ȧ, ä)` per grid node, one entry per shape coordinate.
    pub offset: Vec<Vec<[f64; 3]>>,
}

/// Quintic Hermite interpolation of value, slope and curvature on `[0, h]`.
fn hermite5(p0: &[f64; 3], p1: &[f64; 3], s: f64, h: f64) -> [f64; 3] {
    let (y0, d0, c0) = (p0[0], p0[1] * h, p0[2] * h * h);
    let (y1, d1, c1) = (p1[0], p1[1] * h, p1[2] * h * h);
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h20 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h21 = 0.5 * (s3 - 2.0 * s4 + s5);
    let dh00 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
    let dh10 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
    let dh20 = 0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4);
    let dh01 = -dh00;
    let dh11 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
    let dh21 = 0.5 * (3.0 * s2 - 8.0 * s3 + 5.0 * s4);
    let ddh00 = -60.0 * s + 180.0 * s2 - 120.0 * s3;
    let ddh10 = -36.0 * s + 96.0 * s2 - 60.0 * s3;
    let ddh20 = 0.5 * (2.0 - 18.0 * s + 36.0 * s2 - 20.0 * s3);
    let ddh01 = -ddh00;
    let ddh11 = -24.0 * s + 84.0 * s2 - 60.0 * s3;
    let ddh21 = 0.5 * (6.0 * s - 24.0 * s2 + 20.0 * s3);
    let v = h00 * y0 + h10 * d0 + h20 * c0 + h01 * y1 + h11 * d1 + h21 * c1;
    let dv = dh00 * y0 + dh10 * d0 + dh20 * c0 + dh01 * y1 + dh11 * d1 + dh21 * c1;
    let ddv = ddh00 * y0 + ddh10 * d0 + ddh20 * c0 + ddh01 * y1 + ddh11 * d1 + ddh21 * c1;
    [v, dv / h, ddv / (h * h)]
}

impl NoisySignal {
    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.len().saturating_sub(1)) as f64 * self.dt
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let u = ((t - self.t0) / self.dt).max(0.0);
        let k = (u.floor() as usize).min(self.len().saturating_sub(2));
        (k, (u - k as f64).min(1.0))
    }

    /// True phase and its derivatives at `t`.
    pub fn phase_at(&self, t: f64) -> [f64; 3] {
        let (k, s) = self.locate(t);
        if s == 0.0 {
            return self.phase[k];
        }
        hermite5(&self.phase[k], &self.phase[k + 1], s, self.dt)
    }

    /// Grid-node state without interpolation.
    pub fn node(&self, k: usize) -> ShapeState {
        self.compose(&self.phase[k], |i| self.offset[k][i])
    }

    fn compose(&self, ph: &[f64; 3], off: impl Fn(usize) -> [f64; 3]) -> ShapeState {
        let g = self.gait.at_phase(ph[0]);
        let d = g.dim();
        let mut out = ShapeState::zeros(d);
        for i in 0..d {
            let a = off(i);
            out.alpha[i] = g.alpha[i] + a[0];
            out.alpha_dot[i] = g.alpha_dot[i] * ph[1] + a[1];
            out.alpha_ddot[i] = g.alpha_ddot[i] * ph[1] * ph[1] + g.alpha_dot[i] * ph[2] + a[2];
        }
        out
    }

    /// Grid samples `(t, state, true phase)`.
    pub fn samples(&self) -> impl Iterator<Item = (f64, ShapeState, f64)> + '_ {
        (0..self.len()).map(|k| (self.t0 + k as f64 * self.dt, self.node(k), self.phase[k][0]))
    }
}

impl ShapeSignal for NoisySignal {
    fn dim(&self) -> usize {
        self.gait.shape_dim()
    }

    fn eval(&self, t: f64) -> ShapeState {
        let (k, s) = self.locate(t);
        if s == 0.0 {
            return self.node(k);
        }
        let ph = hermite5(&self.phase[k], &self.phase[k + 1], s, self.dt);
        self.compose(&ph, |i| hermite5(&self.offset[k][i], &self.offset[k + 1][i], s, self.dt))
    }
}

/// Integrates the noisy oscillator for `n_cycles` gait periods at step `dt`
/// (Euler–Maruyama), starting at phase zero at `t = 0`.
pub fn noisy_shape_signal(gait: &Gait, noise: &NoiseParams, n_cycles: usize, dt: f64) -> Result<NoisySignal, ShapeError> {
    noisy_shape_signal_span(gait, noise, n_cycles as f64 * gait.period(), dt)
}

/// As `noisy_shape_signal` but for an arbitrary duration.
pub fn noisy_shape_signal_span(gait: &Gait, noise: &NoiseParams, duration: f64, dt: f64) -> Result<NoisySignal, ShapeError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ShapeError::BadStep(dt));
    }
    if !(duration > 0.0) {
        return Err(ShapeError::NoCycles);
    }
    noise.validate()?;
    let d = gait.shape_dim();
    let w = noise.filter_corner;
    let steps = (duration / dt).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let sqdt = dt.sqrt();
    let amp_drive = noise.amplitude_noise_std * (16.0 * w / 3.0).sqrt();

    // shape perturbation filter states, pre-rolled to stationarity
    let mut x = vec![[0.0f64; 3]; d];
    let advance_offsets = |x: &mut Vec<[f64; 3]>, rng: &mut ChaCha8Rng| {
        for xi in x.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            let [x1, x2, x3] = *xi;
            *xi = [
                x1 - w * x1 * dt + amp_drive * sqdt * z,
                x2 + w * (x1 - x2) * dt,
                x3 + w * (x2 - x3) * dt,
            ];
        }
    };
    if noise.amplitude_noise_std > 0.0 {
        let preroll = (20.0 / w / dt).ceil() as usize;
        for _ in 0..preroll {
            advance_offsets(&mut x, &mut rng);
        }
    }

    let offset_of = |x: &[[f64; 3]]| -> Vec<[f64; 3]> {
        x.iter().map(|[x1, x2, x3]| [*x3, w * (x2 - x3), w * w * (x1 - 2.0 * x2 + x3)]).collect()
    };

    // phase diffusion states: Brownian w, filtered twice
    let (mut bw, mut b1, mut b2) = (0.0f64, 0.0f64, 0.0f64);
    let phase_of = |t: f64, bw: f64, b1: f64, b2: f64| [t + b2, 1.0 + w * (b1 - b2), w * w * (bw - 2.0 * b1 + b2)];

    let mut phase = Vec::with_capacity(steps + 1);
    let mut offset = Vec::with_capacity(steps + 1);
    phase.push(phase_of(0.0, bw, b1, b2));
    offset.push(offset_of(&x));
    for k in 1..=steps {
        if noise.amplitude_noise_std > 0.0 {
            advance_offsets(&mut x, &mut rng);
        }
        if noise.phase_noise_std > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            let (pw, p1) = (bw, b1);
            bw += noise.phase_noise_std * sqdt * z;
            b1 += w * (pw - b1) * dt;
            b2 += w * (p1 - b2) * dt;
        }
        phase.push(phase_of(k as f64 * dt, bw, b1, b2));
        offset.push(offset_of(&x));
    }
    Ok(NoisySignal { gait: gait.clone(), t0: 0.0, dt, phase, offset })
}
