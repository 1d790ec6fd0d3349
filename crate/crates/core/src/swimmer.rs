//! The planar paddleboat: a slender central body with two paddles, each a chain
//! of `n/2` massless slender segments hinged at the body centre.
//!
//! Drag follows slender-body (Cox) resistive force theory, linear in velocity.
//! All mass sits in the central body, so the locked inertia is constant and the
//! mechanical connection vanishes.
//!
//! Shape angles are relative joint angles measured counterclockwise. The first
//! joint of each paddle is measured from the body x-axis; gaits place paddle one
//! around `+π/2` and paddle two around `−π/2`.

use crate::se2::{ad_star, body_to_world, rot, world_to_body, BodyVelocity, GroupElement, Momentum, Wrench};
use crate::trajectory::{ShapeSignal, ShapeState, Trajectory, TrajectorySample};
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SwimmerError {
    #[error("invalid swimmer parameter `{field}`: {msg}")]
    InvalidParam { field: &'static str, msg: String },
    #[error("segment index {index} out of range for {n} segments")]
    SegmentIndex { index: usize, n: usize },
    #[error("shape dimension {got} does not match swimmer with {expected} segments")]
    ShapeDim { expected: usize, got: usize },
    #[error("drag system is singular")]
    SingularDrag,
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("simulation blew up at t = {t}: non-finite or runaway state")]
    NonFinite { t: f64 },
}

/// Physical constants of the paddleboat. `epsilon` is the inertia/damping
/// ratio `m/c`; the body mass is `m = epsilon · damping`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwimmerParams {
    /// Total number of paddle segments (even).
    pub n: usize,
    /// Body length `L`.
    pub body_length: f64,
    /// Paddle length parameter `d`; each segment has length `d/n`.
    pub paddle_length: f64,
    pub cx: f64,
    pub cy: f64,
    /// Dimensionless moment of inertia `Ī`.
    pub inertia: f64,
    pub epsilon: f64,
    /// Damping scale `c`.
    pub damping: f64,
}

impl Default for SwimmerParams {
    fn default() -> Self {
        Self { n: 2, body_length: 1.0, paddle_length: 0.5, cx: 1.0, cy: 2.0, inertia: 1.0, epsilon: 1.0, damping: 1.0 }
    }
}

impl SwimmerParams {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_segments(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<(), SwimmerError> {
        let bad = |field, msg: &str| Err(SwimmerError::InvalidParam { field, msg: msg.to_string() });
        if self.n < 2 || self.n % 2 != 0 {
            return bad("n", "must be an even integer >= 2");
        }
        for (field, v) in [
            ("body_length", self.body_length),
            ("paddle_length", self.paddle_length),
            ("cx", self.cx),
            ("cy", self.cy),
            ("inertia", self.inertia),
            ("damping", self.damping),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, "must be positive and finite");
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be non-negative and finite");
        }
        Ok(())
    }

    pub fn segment_length(&self) -> f64 {
        self.paddle_length / self.n as f64
    }

    pub fn mass(&self) -> f64 {
        self.epsilon * self.damping
    }

    /// Mass-normalised locked inertia `diag(1, 1, Ī)`.
    pub fn inertia_bar(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, self.inertia))
    }

    fn check_shape(&self, alpha: &[f64]) -> Result<(), SwimmerError> {
        if alpha.len() != self.n {
            return Err(SwimmerError::ShapeDim { expected: self.n, got: alpha.len() });
        }
        Ok(())
    }
}

fn cox_drag(c: f64, cx: f64, cy: f64, len: f64) -> Matrix3<f64> {
    c * Matrix3::from_diagonal(&Vector3::new(cx * len, cy * len, len.powi(3) * cy / 12.0))
}

/// Drag matrices `(C_{d/n}, C_L)` of one paddle segment and of the body.
pub fn drag_matrices(params: &SwimmerParams) -> (Matrix3<f64>, Matrix3<f64>) {
    let c = params.damping;
    (
        cox_drag(c, params.cx, params.cy, params.segment_length()),
        cox_drag(c, params.cx, params.cy, params.body_length),
    )
}

/// First segment (0-based) of the paddle that contains `segment`.
fn paddle_base(n: usize, segment: usize) -> usize {
    let half = n / 2;
    (segment / half) * half
}

/// Velocity map `V_i` (3 × (3+n), acting on `[ξ; α̇]`, result in the frame of
/// segment `i`) and wrench map `W_i` (segment-frame wrench to body wrench).
/// `segment` is 0-based.
pub fn link_maps(
    params: &SwimmerParams,
    alpha: &[f64],
    segment: usize,
) -> Result<(DMatrix<f64>, Matrix3<f64>), SwimmerError> {
    params.check_shape(alpha)?;
    let n = params.n;
    if segment >= n {
        return Err(SwimmerError::SegmentIndex { index: segment, n });
    }
    Ok((velocity_map(params, alpha, segment), wrench_map(params, alpha, segment)))
}

fn cumulative_angles(alpha: &[f64], base: usize, i: usize) -> Vec<f64> {
    // beta[k - base] = α_base + … + α_k
    let mut beta = Vec::with_capacity(i - base + 1);
    let mut acc = 0.0;
    for a in &alpha[base..=i] {
        acc += a;
        beta.push(acc);
    }
    beta
}

fn velocity_map(params: &SwimmerParams, alpha: &[f64], i: usize) -> DMatrix<f64> {
    let n = params.n;
    let l = params.segment_length();
    let base = paddle_base(n, i);
    let beta = cumulative_angles(alpha, base, i);
    let beta_i = beta[i - base];
    let e2 = Vector2::new(0.0, 1.0);
    // offset[k] = R⁻¹(α_{k+1} + … + α_i) e2 for k in base..i
    let offsets: Vec<Vector2<f64>> = (base..i).map(|k| rot(-(beta_i - beta[k - base])) * e2).collect();

    let mut v = DMatrix::zeros(3, 3 + n);
    let r = rot(-beta_i);
    v.fixed_view_mut::<2, 2>(0, 0).copy_from(&r);
    // ω_k = θ̇ + Σ_{j=base..k} α̇_j, so θ̇ feeds every rotation rate.
    let mut theta_col = 0.5 * l * e2;
    for o in &offsets {
        theta_col += l * o;
    }
    v[(0, 2)] = theta_col.x;
    v[(1, 2)] = theta_col.y;
    v[(2, 2)] = 1.0;
    for j in base..=i {
        let mut col = 0.5 * l * e2;
        for k in j..i {
            col += l * offsets[k - base];
        }
        v[(0, 3 + j)] = col.x;
        v[(1, 3 + j)] = col.y;
        v[(2, 3 + j)] = 1.0;
    }
    v
}

fn wrench_map(params: &SwimmerParams, alpha: &[f64], i: usize) -> Matrix3<f64> {
    let l = params.segment_length();
    let base = paddle_base(params.n, i);
    let beta = cumulative_angles(alpha, base, i);
    let beta_i = beta[i - base];
    let mut arm = 0.5 * l * nalgebra::Matrix2::identity();
    for k in base + 1..=i {
        // R(α_k + … + α_i)
        arm += l * rot(beta_i - beta[k - 1 - base]);
    }
    let torque_row = Vector2::new(0.0, 1.0).transpose() * arm;
    let r = rot(beta_i);
    Matrix3::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 0)], r[(1, 1)], 0.0, torque_row[0], torque_row[1], 1.0)
}

/// Linear drag operator: `total_wrench = −(Dξ · ξ + Dr · α̇)`.
#[derive(Debug, Clone)]
pub struct DragOperator {
    pub d_xi: Matrix3<f64>,
    pub d_shape: DMatrix<f64>,
}

impl DragOperator {
    pub fn new(params: &SwimmerParams, alpha: &[f64]) -> Self {
        let n = params.n;
        let (c_seg, c_body) = drag_matrices(params);
        let mut d_xi = c_body;
        let mut d_shape = DMatrix::zeros(3, n);
        for i in 0..n {
            let v = velocity_map(params, alpha, i);
            let w = wrench_map(params, alpha, i);
            let wcv = DMatrix::from_column_slice(3, 3, (w * c_seg).as_slice()) * v;
            d_xi += wcv.fixed_view::<3, 3>(0, 0);
            d_shape += wcv.columns(3, n);
        }
        Self { d_xi, d_shape }
    }

    pub fn wrench(&self, xi: &Vector3<f64>, alpha_dot: &[f64]) -> Vector3<f64> {
        let mut f = -(self.d_xi * xi);
        for (j, a) in alpha_dot.iter().enumerate() {
            f -= self.d_shape.column(j) * *a;
        }
        f
    }

    /// Stokes-limit connection: `ξ = −A · α̇` balances the drag.
    pub fn connection(&self) -> Result<DMatrix<f64>, SwimmerError> {
        let lu = self.d_xi.lu();
        let inv = lu.try_inverse().ok_or(SwimmerError::SingularDrag)?;
        let inv = DMatrix::from_column_slice(3, 3, inv.as_slice());
        Ok(inv * &self.d_shape)
    }
}

/// Net wrench of body and segment drag: `F_body + Σ_i F_i`.
pub fn total_wrench(
    params: &SwimmerParams,
    alpha: &[f64],
    alpha_dot: &[f64],
    xi: &BodyVelocity,
) -> Result<Wrench, SwimmerError> {
    params.check_shape(alpha)?;
    params.check_shape(alpha_dot)?;
    let (c_seg, c_body) = drag_matrices(params);
    let mut f = -(c_body * xi.0);
    let mut input = DVector::zeros(3 + params.n);
    input.rows_mut(0, 3).copy_from(&xi.0);
    input.rows_mut(3, params.n).copy_from_slice(alpha_dot);
    for i in 0..params.n {
        let v = velocity_map(params, alpha, i);
        let w = wrench_map(params, alpha, i);
        let link_vel = v * &input;
        f -= w * (c_seg * Vector3::new(link_vel[0], link_vel[1], link_vel[2]));
    }
    Ok(Wrench(f))
}

/// Local viscous connection `A_visc(α)` (3 × n) from the force balance
/// `total_wrench(α, e_j, ξ_j) = 0`, column `j` equal to `−ξ_j`.
pub fn stokes_connection(params: &SwimmerParams, alpha: &[f64]) -> Result<DMatrix<f64>, SwimmerError> {
    params.check_shape(alpha)?;
    let n = params.n;
    let zero_shape = vec![0.0; n];
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        m.set_column(k, &total_wrench(params, alpha, &zero_shape, &BodyVelocity(e))?.0);
    }
    let lu = m.lu();
    let mut a = DMatrix::zeros(3, n);
    for j in 0..n {
        let mut ej = vec![0.0; n];
        ej[j] = 1.0;
        let f0 = total_wrench(params, alpha, &ej, &BodyVelocity::zero())?.0;
        let xi = lu.solve(&(-f0)).ok_or(SwimmerError::SingularDrag)?;
        a.set_column(j, &(-xi));
    }
    Ok(a)
}

/// Symmetric dissipation form `c·ν` on `[ξ; α̇]`, `(3+n) × (3+n)`: body drag plus
/// `Σ V_iᵀ C V_i`.
pub fn dissipation_form(params: &SwimmerParams, alpha: &[f64]) -> Result<DMatrix<f64>, SwimmerError> {
    params.check_shape(alpha)?;
    let n = params.n;
    let (c_seg, c_body) = drag_matrices(params);
    let c_seg = DMatrix::from_column_slice(3, 3, c_seg.as_slice());
    let mut form = DMatrix::zeros(3 + n, 3 + n);
    form.fixed_view_mut::<3, 3>(0, 0).copy_from(&c_body);
    for i in 0..n {
        let v = velocity_map(params, alpha, i);
        form += v.transpose() * &c_seg * v;
    }
    Ok(form)
}

/// Which equations of motion `simulate` integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Formulation {
    /// Body momentum `ṗ = F + ad*_ξ p` with pose reconstruction by group exponentials.
    #[default]
    Momentum,
    /// Second-order equations for `(x, y, θ)` in world coordinates.
    World,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Output sample interval.
    pub dt: f64,
    /// Cap on the internal step as a fraction of `epsilon`.
    pub step_fraction: f64,
    pub formulation: Formulation,
    /// Samples before this time are integrated but not recorded.
    pub record_from: f64,
    /// Zero every drag map (momentum conservation checks).
    pub disable_drag: bool,
}

impl SimOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, step_fraction: 0.1, formulation: Formulation::Momentum, record_from: f64::NEG_INFINITY, disable_drag: false }
    }

    pub fn formulation(mut self, f: Formulation) -> Self {
        self.formulation = f;
        self
    }

    pub fn record_from(mut self, t: f64) -> Self {
        self.record_from = t;
        self
    }
}

/// Momentum on the Stokes-limit manifold for the current shape velocity.
pub fn stokes_momentum(params: &SwimmerParams, shape: &ShapeState) -> Result<Momentum, SwimmerError> {
    let a = stokes_connection(params, &shape.alpha)?;
    let xi = -(a * DVector::from_column_slice(&shape.alpha_dot));
    let xi = Vector3::new(xi[0], xi[1], xi[2]);
    Ok(Momentum(params.mass() * params.inertia_bar() * xi))
}

struct Dynamics<'a> {
    params: &'a SwimmerParams,
    signal: &'a dyn ShapeSignal,
    mass_inv: Vector3<f64>,
    disable_drag: bool,
}

impl Dynamics<'_> {
    fn drag_at(&self, t: f64) -> (DragOperator, ShapeState) {
        let shape = self.signal.eval(t);
        let op = if self.disable_drag {
            DragOperator { d_xi: Matrix3::zeros(), d_shape: DMatrix::zeros(3, self.params.n) }
        } else {
            DragOperator::new(self.params, &shape.alpha)
        };
        (op, shape)
    }

    fn xi_of(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p.component_mul(&self.mass_inv)
    }

    fn p_rate(&self, op: &DragOperator, shape: &ShapeState, p: &Vector3<f64>) -> Vector3<f64> {
        let xi = self.xi_of(p);
        op.wrench(&xi, &shape.alpha_dot) + ad_star(&BodyVelocity(xi), &Momentum(*p)).0
    }

    /// World-form acceleration; state `[q; q̇]`.
    fn world_rate(&self, op: &DragOperator, shape: &ShapeState, q: &Vector3<f64>, qd: &Vector3<f64>) -> Vector3<f64> {
        let g = GroupElement::new(q[0], q[1], q[2]);
        let xi = world_to_body(&g, qd);
        let f = op.wrench(&xi.0, &shape.alpha_dot);
        let f_world = body_to_world(&g, &BodyVelocity(f));
        f_world.component_mul(&self.mass_inv)
    }
}

/// Integrates the swimmer driven by `signal` over `t_span` from pose `g0` and
/// body momentum `p0`.
///
/// With `epsilon = 0` the Stokes-limit kinematics `ξ = −A_visc α̇` are used and
/// `p` is reported as zero.
pub fn simulate(
    params: &SwimmerParams,
    signal: &dyn ShapeSignal,
    t_span: (f64, f64),
    opts: &SimOptions,
    g0: GroupElement,
    p0: Momentum,
) -> Result<Trajectory, SwimmerError> {
    params.validate()?;
    if signal.dim() != params.n {
        return Err(SwimmerError::ShapeDim { expected: params.n, got: signal.dim() });
    }
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(SwimmerError::BadStep(opts.dt));
    }
    let (t0, t1) = t_span;
    let n_out = ((t1 - t0) / opts.dt + 1e-9).floor() as usize;
    if params.epsilon == 0.0 {
        return simulate_stokes(params, signal, t0, n_out, opts, g0);
    }

    let eps = params.epsilon;
    let substeps = if opts.dt > opts.step_fraction * eps { (opts.dt / (opts.step_fraction * eps)).ceil() as usize } else { 1 };
    if opts.dt > 2.0 * opts.step_fraction * eps {
        log::warn!("dt = {} exceeds epsilon/5 = {}; refining to {} substeps", opts.dt, eps / 5.0, substeps);
    }
    let h = opts.dt / substeps as f64;
    let m = params.mass();
    let ibar = params.inertia_bar();
    let dyn_ = Dynamics {
        params,
        signal,
        mass_inv: Vector3::new(1.0 / (m * ibar[(0, 0)]), 1.0 / (m * ibar[(1, 1)]), 1.0 / (m * ibar[(2, 2)])),
        disable_drag: opts.disable_drag,
    };

    let mut samples = Vec::with_capacity(n_out + 1);
    let mut g = g0;
    let mut p = p0.0;
    let mut q = g0.as_vector();
    let mut qd = body_to_world(&g0, &BodyVelocity(dyn_.xi_of(&p)));
    let (mut op0, mut shape0) = dyn_.drag_at(t0);

    let record = |samples: &mut Vec<TrajectorySample>, t: f64, shape: &ShapeState, g: GroupElement, xi: Vector3<f64>| {
        if t >= opts.record_from {
            samples.push(TrajectorySample {
                t,
                shape: shape.clone(),
                g,
                xi: BodyVelocity(xi),
                p: Momentum(ibar * xi * m),
            });
        }
    };

    match opts.formulation {
        Formulation::Momentum => record(&mut samples, t0, &shape0, g, dyn_.xi_of(&p)),
        Formulation::World => record(&mut samples, t0, &shape0, g, world_to_body(&g, &qd).0),
    }

    for k in 0..n_out {
        for s in 0..substeps {
            let t = t0 + k as f64 * opts.dt + s as f64 * h;
            let (op_mid, shape_mid) = dyn_.drag_at(t + 0.5 * h);
            let (op1, shape1) = dyn_.drag_at(t + h);
            match opts.formulation {
                Formulation::Momentum => {
                    let k1 = dyn_.p_rate(&op0, &shape0, &p);
                    let p2 = p + 0.5 * h * k1;
                    let k2 = dyn_.p_rate(&op_mid, &shape_mid, &p2);
                    let p3 = p + 0.5 * h * k2;
                    let k3 = dyn_.p_rate(&op_mid, &shape_mid, &p3);
                    let p4 = p + h * k3;
                    let k4 = dyn_.p_rate(&op1, &shape1, &p4);
                    let xi_bar = (dyn_.xi_of(&p) + 2.0 * dyn_.xi_of(&p2) + 2.0 * dyn_.xi_of(&p3) + dyn_.xi_of(&p4)) / 6.0;
                    p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    g = g.compose(&GroupElement::exp(&BodyVelocity(h * xi_bar)));
                }
                Formulation::World => {
                    let a1 = dyn_.world_rate(&op0, &shape0, &q, &qd);
                    let (q2, v2) = (q + 0.5 * h * qd, qd + 0.5 * h * a1);
                    let a2 = dyn_.world_rate(&op_mid, &shape_mid, &q2, &v2);
                    let (q3, v3) = (q + 0.5 * h * v2, qd + 0.5 * h * a2);
                    let a3 = dyn_.world_rate(&op_mid, &shape_mid, &q3, &v3);
                    let (q4, v4) = (q + h * v3, qd + h * a3);
                    let a4 = dyn_.world_rate(&op1, &shape1, &q4, &v4);
                    q += h / 6.0 * (qd + 2.0 * v2 + 2.0 * v3 + v4);
                    qd += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
                    g = GroupElement::new(q[0], q[1], q[2]);
                }
            }
            op0 = op1;
            shape0 = shape1;
        }
        let t = t0 + (k + 1) as f64 * opts.dt;
        let xi = match opts.formulation {
            Formulation::Momentum => dyn_.xi_of(&p),
            Formulation::World => world_to_body(&g, &qd).0,
        };
        if !xi.iter().all(|v| v.is_finite()) || xi.amax() > 1e12 || !g.as_vector().iter().all(|v| v.is_finite()) {
            return Err(SwimmerError::NonFinite { t });
        }
        record(&mut samples, t, &shape0, g, xi);
    }
    Ok(Trajectory { samples })
}

fn simulate_stokes(
    params: &SwimmerParams,
    signal: &dyn ShapeSignal,
    t0: f64,
    n_out: usize,
    opts: &SimOptions,
    g0: GroupElement,
) -> Result<Trajectory, SwimmerError> {
    let mut shapes = Vec::with_capacity(n_out + 1);
    let mut xis = Vec::with_capacity(n_out + 1);
    for k in 0..=n_out {
        let shape = signal.eval(t0 + k as f64 * opts.dt);
        let a = DragOperator::new(params, &shape.alpha).connection()?;
        let xi = -(a * DVector::from_column_slice(&shape.alpha_dot));
        xis.push(BodyVelocity::new(xi[0], xi[1], xi[2]));
        shapes.push(shape);
    }
    let poses = crate::se2::reconstruct(g0, &xis, opts.dt, crate::se2::Reconstruction::MidpointExponential)
        .map_err(|_| SwimmerError::NonFinite { t: t0 })?;
    let samples = shapes
        .into_iter()
        .zip(xis)
        .zip(poses)
        .enumerate()
        .map(|(k, ((shape, xi), g))| TrajectorySample { t: t0 + k as f64 * opts.dt, shape, g, xi, p: Momentum::zero() })
        .filter(|s| s.t >= opts.record_from)
        .collect();
    Ok(Trajectory { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::FnSignal;
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_shape(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-PI..PI)).collect()
    }

    fn flap_signal(a: f64) -> FnSignal<impl Fn(f64) -> ShapeState + Sync> {
        FnSignal {
            dim: 2,
            f: move |t: f64| ShapeState {
                alpha: vec![FRAC_PI_2 + a * t.sin(), -FRAC_PI_2 - a * t.sin()],
                alpha_dot: vec![a * t.cos(), -a * t.cos()],
                alpha_ddot: vec![-a * t.sin(), a * t.sin()],
            },
        }
    }

    #[test]
    fn drag_matrix_values() {
        let p = SwimmerParams::default();
        let (seg, body) = drag_matrices(&p);
        let expect_body = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 1.0 / 6.0));
        assert!((body - expect_body).amax() < 1e-15);
        let expect_seg = Matrix3::from_diagonal(&Vector3::new(0.25, 0.5, 0.25f64.powi(3) * 2.0 / 12.0));
        assert!((seg - expect_seg).amax() < 1e-15);
        let (seg4, _) = drag_matrices(&p.clone().with_segments(4));
        assert!((seg4[(0, 0)] - seg[(0, 0)] / 2.0).abs() < 1e-15);
        assert!((seg4[(1, 1)] - seg[(1, 1)] / 2.0).abs() < 1e-15);
        assert!((seg4[(2, 2)] - seg[(2, 2)] / 8.0).abs() < 1e-15);
    }

    #[test]
    fn validation_names_field() {
        let err = SwimmerParams { n: 3, ..Default::default() }.validate().unwrap_err();
        assert!(matches!(err, SwimmerError::InvalidParam { field: "n", .. }));
        let err = SwimmerParams { cy: -1.0, ..Default::default() }.validate().unwrap_err();
        assert!(matches!(err, SwimmerError::InvalidParam { field: "cy", .. }));
    }

    #[test]
    fn link_map_at_rest_pose() {
        let p = SwimmerParams::default();
        let (v, _) = link_maps(&p, &[0.0, 0.0], 0).unwrap();
        let input = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let out = v * input;
        assert!((out - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-15);
        assert!(matches!(link_maps(&p, &[0.0, 0.0], 2), Err(SwimmerError::SegmentIndex { .. })));
    }

    #[test]
    fn link_maps_are_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 4, 6] {
            let params = SwimmerParams::default().with_segments(n);
            for _ in 0..1000 / 3 + 1 {
                let alpha = random_shape(&mut rng, n);
                let f = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let xi = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let mut input = DVector::zeros(3 + n);
                input.rows_mut(0, 3).copy_from(&xi);
                for i in 0..n {
                    let (v, w) = link_maps(&params, &alpha, i).unwrap();
                    let link_vel = v * &input;
                    let lhs = f.dot(&Vector3::new(link_vel[0], link_vel[1], link_vel[2]));
                    let rhs = (w * f).dot(&xi);
                    assert!((lhs - rhs).abs() < 1e-12, "n={n} i={i}: {lhs} vs {rhs}");
                }
            }
        }
    }

    /// Resistive-force integral along a straight rod from the origin to
    /// `len · u`, evaluated by Gauss–Legendre quadrature.
    fn rod_wrench(params: &SwimmerParams, angle: f64, len: f64, xi: &Vector3<f64>, omega_rel: f64) -> Vector3<f64> {
        let nodes = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
        let weights = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
        let u = Vector2::new(angle.cos(), angle.sin());
        let nrm = Vector2::new(-u.y, u.x);
        let omega = xi[2] + omega_rel;
        let mut f = Vector3::zeros();
        for (x, w) in nodes.iter().zip(weights) {
            let s = 0.5 * len * (x + 1.0);
            let pos = s * u;
            let vel = Vector2::new(xi[0] - xi[2] * pos.y, xi[1] + xi[2] * pos.x) + (omega - xi[2]) * s * nrm;
            let force = -params.damping * (params.cx * vel.dot(&u) * u + params.cy * vel.dot(&nrm) * nrm);
            let dw = 0.5 * len * w;
            f += dw * Vector3::new(force.x, force.y, pos.x * force.y - pos.y * force.x);
        }
        f
    }

    #[test]
    fn straight_paddle_matches_rod_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 4, 6] {
            let params = SwimmerParams::default().with_segments(n);
            let half = n / 2;
            for _ in 0..20 {
                let a1 = rng.random_range(-PI..PI);
                let a2 = rng.random_range(-PI..PI);
                let mut alpha = vec![0.0; n];
                alpha[0] = a1;
                alpha[half] = a2;
                let xi = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let mut alpha_dot = vec![0.0; n];
                let w1 = rng.random_range(-1.0..1.0);
                alpha_dot[0] = w1;
                let total = total_wrench(&params, &alpha, &alpha_dot, &BodyVelocity(xi)).unwrap().0;
                let (_, c_body) = drag_matrices(&params);
                let paddle_len = params.paddle_length / 2.0;
                let expect = -(c_body * xi) + rod_wrench(&params, a1, paddle_len, &xi, w1) + rod_wrench(&params, a2, paddle_len, &xi, 0.0);
                assert!((total - expect).amax() < 1e-12, "n={n}: {total} vs {expect}");
            }
        }
    }

    #[test]
    fn wrench_is_linear_and_vanishes_at_rest() {
        let p = SwimmerParams::default();
        let alpha = [0.3, -1.2];
        let zero = total_wrench(&p, &alpha, &[0.0, 0.0], &BodyVelocity::zero()).unwrap();
        assert_eq!(zero, Wrench::zero());
        let xi = BodyVelocity::new(0.2, -0.4, 0.9);
        let f1 = total_wrench(&p, &alpha, &[0.5, 0.1], &xi).unwrap();
        let f2 = total_wrench(&p, &alpha, &[1.0, 0.2], &(2.0 * xi)).unwrap();
        assert!((f2.0 - 2.0 * f1.0).amax() < 1e-14);
    }

    #[test]
    fn mirror_symmetric_motion_has_no_side_force() {
        let p = SwimmerParams::default();
        let f = total_wrench(&p, &[1.1, -1.1], &[0.7, -0.7], &BodyVelocity::new(0.3, 0.0, 0.0)).unwrap();
        assert!(f.y().abs() < 1e-15 && f.theta().abs() < 1e-15);
        let a = stokes_connection(&p, &[FRAC_PI_2, -FRAC_PI_2]).unwrap();
        let xi = -(a * DVector::from_vec(vec![0.4, -0.4]));
        assert!(xi[1].abs() < 1e-15 && xi[2].abs() < 1e-15);
    }

    #[test]
    fn connection_balances_drag() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 4] {
            let params = SwimmerParams::default().with_segments(n);
            for _ in 0..50 {
                let alpha = random_shape(&mut rng, n);
                let a = stokes_connection(&params, &alpha).unwrap();
                let rdot: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let xi = -(&a * DVector::from_column_slice(&rdot));
                let f = total_wrench(&params, &alpha, &rdot, &BodyVelocity::new(xi[0], xi[1], xi[2])).unwrap();
                assert!(f.0.amax() < 1e-10);
                let via_operator = DragOperator::new(&params, &alpha).connection().unwrap();
                assert!((via_operator - &a).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn connection_independent_of_damping_scale() {
        let p = SwimmerParams::default();
        let alpha = [1.0, -2.0];
        let a1 = stokes_connection(&p, &alpha).unwrap();
        let a2 = stokes_connection(&SwimmerParams { damping: 2.0, ..p }, &alpha).unwrap();
        assert!((a1 - a2).amax() < 1e-14);
    }

    #[test]
    fn connection_at_symmetric_flap_matches_hand_integral() {
        // Paddles along ±y. Integrating the rod drag by hand with Cx = 1,
        // Cy = 2, ℓ = 1/4 gives
        //   Fx = −2 ξx + (α̇1 − α̇2)/16,  Fy = −5/2 ξy,
        //   τ  = −θ̇/6 − (2θ̇ + α̇1 + α̇2)/96.
        let a = stokes_connection(&SwimmerParams::default(), &[FRAC_PI_2, -FRAC_PI_2]).unwrap();
        let expect = DMatrix::from_row_slice(3, 2, &[-1.0 / 32.0, 1.0 / 32.0, 0.0, 0.0, 1.0 / 18.0, 1.0 / 18.0]);
        assert!((a - expect).amax() < 1e-14);
    }

    #[test]
    fn segment_merge_reproduces_two_link_connection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p2 = SwimmerParams::default();
        let p4 = p2.clone().with_segments(4);
        for _ in 0..100 {
            let a = random_shape(&mut rng, 2);
            let a2 = stokes_connection(&p2, &a).unwrap();
            let a4 = stokes_connection(&p4, &[a[0], 0.0, a[1], 0.0]).unwrap();
            // α̇ of a first joint drives the whole straight paddle
            assert!((a4.column(0) - a2.column(0)).amax() < 1e-10);
            assert!((a4.column(2) - a2.column(1)).amax() < 1e-10);
        }
    }

    #[test]
    fn dissipation_form_agrees_with_wrench() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = SwimmerParams::default().with_segments(4);
        for _ in 0..50 {
            let alpha = random_shape(&mut rng, 4);
            let form = dissipation_form(&params, &alpha).unwrap();
            assert!((&form - form.transpose()).amax() < 1e-14);
            let rdot: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xi = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let mut v = DVector::zeros(7);
            v.rows_mut(0, 3).copy_from(&xi);
            v.rows_mut(3, 4).copy_from_slice(&rdot);
            let f_form = -(form.rows(0, 3) * v);
            let f = total_wrench(&params, &alpha, &rdot, &BodyVelocity(xi)).unwrap().0;
            assert!((Vector3::new(f_form[0], f_form[1], f_form[2]) - f).amax() < 1e-12);
        }
    }

    #[test]
    fn stationary_without_shape_motion() {
        let params = SwimmerParams::default().with_epsilon(0.1);
        let still = FnSignal { dim: 2, f: |_t: f64| ShapeState { alpha: vec![1.0, -1.0], alpha_dot: vec![0.0; 2], alpha_ddot: vec![0.0; 2] } };
        let traj = simulate(&params, &still, (0.0, 1.0), &SimOptions::new(0.01), GroupElement::new(1.0, 2.0, 3.0), Momentum::zero()).unwrap();
        assert!(traj.samples.iter().all(|s| s.g == GroupElement::new(1.0, 2.0, 3.0) && s.xi.0.amax() == 0.0));
    }

    #[test]
    fn symmetric_flap_stays_on_x_axis() {
        let params = SwimmerParams::default().with_epsilon(0.05);
        let traj = simulate(&params, &flap_signal(1.0), (0.0, 2.0 * PI), &SimOptions::new(0.01), GroupElement::identity(), Momentum::zero()).unwrap();
        for s in &traj.samples {
            assert!(s.xi.y().abs() < 1e-12 && s.xi.theta().abs() < 1e-12);
        }
        assert!(traj.samples.iter().any(|s| s.xi.x().abs() > 1e-3));
    }

    #[test]
    fn stokes_limit_kinematics_for_zero_epsilon() {
        let params = SwimmerParams::default().with_epsilon(0.0);
        let sig = flap_signal(1.0);
        let traj = simulate(&params, &sig, (0.0, 1.0), &SimOptions::new(0.05), GroupElement::identity(), Momentum::zero()).unwrap();
        for s in &traj.samples {
            let a = stokes_connection(&params, &s.shape.alpha).unwrap();
            let xi = -(a * DVector::from_column_slice(&s.shape.alpha_dot));
            assert!((Vector3::new(xi[0], xi[1], xi[2]) - s.xi.0).amax() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let sig = flap_signal(1.0);
        let opts = SimOptions::new(0.0);
        let err = simulate(&SwimmerParams::default(), &sig, (0.0, 1.0), &opts, GroupElement::identity(), Momentum::zero());
        assert_eq!(err.unwrap_err(), SwimmerError::BadStep(0.0));
        let err = simulate(&SwimmerParams::default().with_segments(4), &sig, (0.0, 1.0), &SimOptions::new(0.1), GroupElement::identity(), Momentum::zero());
        assert!(matches!(err, Err(SwimmerError::ShapeDim { .. })));
    }
}
