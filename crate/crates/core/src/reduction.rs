//! Geometric reduction of inertial–viscous locomotion in the small-inertia
//! limit.
//!
//! Given mass-normalised kinetic and damping-normalised dissipation forms on
//! `[ξ; ṙ]`, the body velocity expands as
//!
//! ```text
//! ξ = −A_visc(r) ṙ + ε [ B(r) r̈ + G(r)(ṙ, ṙ) ] + O(ε²)
//! ```
//!
//! with `H = Ī_loc (A_mech − A_visc)`, `B = V̄_loc⁻¹ H` and
//! `G(u, v) = V̄_loc⁻¹ [ ad*_{A v}(H u) + Σ_j (∂H/∂r_j u) v_j ]`.

use crate::se2::{ad_star_matrix, BodyVelocity};
use crate::swimmer::{self, SwimmerError, SwimmerParams};
use crate::trajectory::{ShapeState, Trajectory};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReductionError {
    #[error("locked {0} block is singular")]
    Singular(&'static str),
    #[error("shape dimension mismatch: expected {expected}, got {got}")]
    ShapeDim { expected: usize, got: usize },
    #[error("locked dissipation is not stabilising: max Re λ(Ī⁻¹V̄) = {0}")]
    Unstable(f64),
    #[error("trajectory too short for a centred difference")]
    TooShort,
    #[error(transparent)]
    Swimmer(#[from] SwimmerError),
}

/// A locomoting system described by its Riemannian data on `[ξ; ṙ]`.
///
/// Both forms are `(3+d) × (3+d)` with the group block first and are
/// normalised: the physical forms are `m · kinetic_form` and
/// `c · dissipation_form`.
pub trait ReducedSystem: Sync {
    fn shape_dim(&self) -> usize;
    fn mass(&self) -> f64;
    fn damping(&self) -> f64;
    fn kinetic_form(&self, r: &[f64]) -> Result<DMatrix<f64>, ReductionError>;
    fn dissipation_form(&self, r: &[f64]) -> Result<DMatrix<f64>, ReductionError>;

    fn epsilon(&self) -> f64 {
        self.mass() / self.damping()
    }
}

impl ReducedSystem for SwimmerParams {
    fn shape_dim(&self) -> usize {
        self.n
    }

    fn mass(&self) -> f64 {
        SwimmerParams::mass(self)
    }

    fn damping(&self) -> f64 {
        self.damping
    }

    fn kinetic_form(&self, r: &[f64]) -> Result<DMatrix<f64>, ReductionError> {
        check_dim(self.n, r)?;
        let mut k = DMatrix::zeros(3 + self.n, 3 + self.n);
        k.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.inertia_bar());
        Ok(k)
    }

    fn dissipation_form(&self, r: &[f64]) -> Result<DMatrix<f64>, ReductionError> {
        Ok(swimmer::dissipation_form(self, r)? / self.damping)
    }
}

fn check_dim(expected: usize, r: &[f64]) -> Result<(), ReductionError> {
    if r.len() != expected {
        return Err(ReductionError::ShapeDim { expected, got: r.len() });
    }
    Ok(())
}

fn block3(m: &DMatrix<f64>) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

fn invert3(m: &Matrix3<f64>, what: &'static str) -> Result<Matrix3<f64>, ReductionError> {
    m.try_inverse().ok_or(ReductionError::Singular(what))
}

fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// Connections and locked tensors at one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LockedData {
    pub inertia: Matrix3<f64>,
    /// `V̄_loc = −ν_ξξ`.
    pub viscous: Matrix3<f64>,
    pub a_mech: DMatrix<f64>,
    pub a_visc: DMatrix<f64>,
}

pub fn locked_data(sys: &dyn ReducedSystem, r: &[f64]) -> Result<LockedData, ReductionError> {
    check_dim(sys.shape_dim(), r)?;
    let d = sys.shape_dim();
    let k = sys.kinetic_form(r)?;
    let nu = sys.dissipation_form(r)?;
    let inertia = block3(&k);
    let nu_xx = block3(&nu);
    let a_mech = to_dmatrix(&invert3(&inertia, "inertia")?) * k.view((0, 3), (3, d));
    let a_visc = to_dmatrix(&invert3(&nu_xx, "dissipation")?) * nu.view((0, 3), (3, d));
    Ok(LockedData { inertia, viscous: -nu_xx, a_mech, a_visc })
}

pub fn viscous_connection(sys: &dyn ReducedSystem, r: &[f64]) -> Result<DMatrix<f64>, ReductionError> {
    Ok(locked_data(sys, r)?.a_visc)
}

/// Largest real part among eigenvalues of `Ī_loc⁻¹ V̄_loc`; negative when the
/// locked system relaxes.
pub fn spectral_abscissa(data: &LockedData) -> Result<f64, ReductionError> {
    let m = invert3(&data.inertia, "inertia")? * data.viscous;
    Ok(m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Step for central differences in shape.
pub const SHAPE_FD_STEP: f64 = 1e-5;

/// Terms of the first-order expansion at one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationTerms {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// `g[i * d + j]` is the body-velocity column multiplying `u_i v_j`.
    pub g: Vec<Vector3<f64>>,
}

impl PerturbationTerms {
    pub fn shape_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn g_apply(&self, u: &[f64], v: &[f64]) -> Vector3<f64> {
        let d = self.shape_dim();
        let mut out = Vector3::zeros();
        for i in 0..d {
            for j in 0..d {
                out += self.g[i * d + j] * (u[i] * v[j]);
            }
        }
        out
    }

    /// Velocity predicted to first order in `epsilon`.
    pub fn predict(&self, shape: &ShapeState, epsilon: f64) -> BodyVelocity {
        let rd = DVector::from_column_slice(&shape.alpha_dot);
        let rdd = DVector::from_column_slice(&shape.alpha_ddot);
        let zeroth = -(&self.a * &rd);
        let first = &self.b * &rdd;
        let g = self.g_apply(&shape.alpha_dot, &shape.alpha_dot);
        BodyVelocity::new(
            zeroth[0] + epsilon * (first[0] + g[0]),
            zeroth[1] + epsilon * (first[1] + g[1]),
            zeroth[2] + epsilon * (first[2] + g[2]),
        )
    }

    pub fn predict_stokes(&self, shape: &ShapeState) -> BodyVelocity {
        let xi = -(&self.a * DVector::from_column_slice(&shape.alpha_dot));
        BodyVelocity::new(xi[0], xi[1], xi[2])
    }
}

fn h_tensor(data: &LockedData) -> DMatrix<f64> {
    to_dmatrix(&data.inertia) * (&data.a_mech - &data.a_visc)
}

pub fn perturbation_terms(sys: &dyn ReducedSystem, r: &[f64]) -> Result<PerturbationTerms, ReductionError> {
    let d = sys.shape_dim();
    let data = locked_data(sys, r)?;
    let v_inv = invert3(&data.viscous, "dissipation")?;
    let h = h_tensor(&data);
    let b = to_dmatrix(&v_inv) * &h;

    let mut dh = Vec::with_capacity(d);
    for j in 0..d {
        let mut rp = r.to_vec();
        let mut rm = r.to_vec();
        rp[j] += SHAPE_FD_STEP;
        rm[j] -= SHAPE_FD_STEP;
        let hp = h_tensor(&locked_data(sys, &rp)?);
        let hm = h_tensor(&locked_data(sys, &rm)?);
        dh.push((hp - hm) / (2.0 * SHAPE_FD_STEP));
    }

    let mut g = Vec::with_capacity(d * d);
    for i in 0..d {
        let hu = Vector3::new(h[(0, i)], h[(1, i)], h[(2, i)]);
        let c = ad_star_matrix(&hu);
        for j in 0..d {
            let av = Vector3::new(data.a_visc[(0, j)], data.a_visc[(1, j)], data.a_visc[(2, j)]);
            let dhij = Vector3::new(dh[j][(0, i)], dh[j][(1, i)], dh[j][(2, i)]);
            g.push(v_inv * (c * av + dhij));
        }
    }
    Ok(PerturbationTerms { a: data.a_visc, b, g })
}

/// Shape derivatives `∂A_visc/∂r_j` by central differences.
pub fn connection_derivatives(sys: &dyn ReducedSystem, r: &[f64]) -> Result<Vec<DMatrix<f64>>, ReductionError> {
    (0..sys.shape_dim())
        .map(|j| {
            let mut rp = r.to_vec();
            let mut rm = r.to_vec();
            rp[j] += SHAPE_FD_STEP;
            rm[j] -= SHAPE_FD_STEP;
            Ok((viscous_connection(sys, &rp)? - viscous_connection(sys, &rm)?) / (2.0 * SHAPE_FD_STEP))
        })
        .collect()
}

/// Body-frame drag wrench `−c · ν_ξ· [ξ; ṙ]` at one sample.
pub fn drag_wrench(sys: &dyn ReducedSystem, shape: &ShapeState, xi: &BodyVelocity) -> Result<Vector3<f64>, ReductionError> {
    let d = sys.shape_dim();
    let nu = sys.dissipation_form(&shape.alpha)?;
    let mut v = DVector::zeros(3 + d);
    v.rows_mut(0, 3).copy_from(&xi.0);
    v.rows_mut(3, d).copy_from_slice(&shape.alpha_dot);
    let f = -(nu.rows(0, 3) * v) * sys.damping();
    Ok(Vector3::new(f[0], f[1], f[2]))
}

/// Spatial momentum `J = Ad*_{g⁻¹} p` for every sample.
pub fn spatial_momentum(traj: &Trajectory) -> Vec<Vector3<f64>> {
    traj.samples.iter().map(|s| s.g.covector_to_spatial(&s.p.0)).collect()
}

/// Relative residual `max ‖J̇ − K‖ / max ‖K‖` of the spatial momentum balance,
/// with `J̇` from centred differences and `K` the spatial drag wrench.
pub fn momentum_residual(sys: &dyn ReducedSystem, traj: &Trajectory) -> Result<f64, ReductionError> {
    let n = traj.len();
    if n < 3 {
        return Err(ReductionError::TooShort);
    }
    let dt = traj.dt().ok_or(ReductionError::TooShort)?;
    let j = spatial_momentum(traj);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for k in 1..n - 1 {
        let s = &traj.samples[k];
        let jdot = (j[k + 1] - j[k - 1]) / (2.0 * dt);
        let kk = s.g.covector_to_spatial(&drag_wrench(sys, &s.shape, &s.xi)?);
        worst = worst.max((jdot - kk).norm());
        scale = scale.max(kk.norm());
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    /// Generic system with a shape-dependent inertia and mechanical coupling,
    /// used to exercise the parts that vanish for the paddleboat.
    struct Toy;

    impl ReducedSystem for Toy {
        fn shape_dim(&self) -> usize {
            1
        }
        fn mass(&self) -> f64 {
            0.1
        }
        fn damping(&self) -> f64 {
            1.0
        }
        fn kinetic_form(&self, r: &[f64]) -> Result<DMatrix<f64>, ReductionError> {
            let s = r[0].sin();
            Ok(DMatrix::from_row_slice(4, 4, &[
                2.0 + s, 0.0, 0.0, 0.5,
                0.0, 1.0, 0.0, 0.0,
                0.0, 0.0, 1.0, 0.2 * s,
                0.5, 0.0, 0.2 * s, 1.0,
            ]))
        }
        fn dissipation_form(&self, r: &[f64]) -> Result<DMatrix<f64>, ReductionError> {
            let c = r[0].cos();
            Ok(DMatrix::from_row_slice(4, 4, &[
                3.0, 0.0, 0.0, c,
                0.0, 2.0, 0.0, 0.3,
                0.0, 0.0, 1.0, 0.0,
                c, 0.3, 0.0, 1.0,
            ]))
        }
    }

    #[test]
    fn swimmer_has_no_mechanical_connection() {
        let p = SwimmerParams::default().with_epsilon(0.1);
        let data = locked_data(&p, &[1.0, -0.5]).unwrap();
        assert_eq!(data.a_mech.amax(), 0.0);
        assert!(spectral_abscissa(&data).unwrap() < 0.0);
    }

    #[test]
    fn both_connection_paths_agree() {
        let p = SwimmerParams::default().with_segments(4);
        let r = [1.2, 0.3, -2.0, 0.4];
        let via_form = viscous_connection(&p, &r).unwrap();
        let via_balance = swimmer::stokes_connection(&p, &r).unwrap();
        assert!((via_form - via_balance).amax() < 1e-12);
        // V̄ A_visc reproduces the cross block of the dissipation form
        let data = locked_data(&p, &r).unwrap();
        let nu = p.dissipation_form(&r).unwrap();
        let cross = -(to_dmatrix(&data.viscous) * &data.a_visc);
        assert!((cross - nu.view((0, 3), (3, 4))).amax() < 1e-12);
    }

    #[test]
    fn toy_terms_match_hand_formulas() {
        let r = [0.7];
        let terms = perturbation_terms(&Toy, &r).unwrap();
        let (s, c) = r[0].sin_cos();
        let a_mech = Vector3::new(0.5 / (2.0 + s), 0.0, 0.2 * s);
        let a_visc = Vector3::new(c / 3.0, 0.15, 0.0);
        assert!((Vector3::new(terms.a[(0, 0)], terms.a[(1, 0)], terms.a[(2, 0)]) - a_visc).amax() < 1e-14);
        let ib = Matrix3::from_diagonal(&Vector3::new(2.0 + s, 1.0, 1.0));
        let vb = -Matrix3::from_diagonal(&Vector3::new(3.0, 2.0, 1.0));
        let h = ib * (a_mech - a_visc);
        let b = vb.try_inverse().unwrap() * h;
        assert!((Vector3::new(terms.b[(0, 0)], terms.b[(1, 0)], terms.b[(2, 0)]) - b).amax() < 1e-14);
        // H_x = 0.5 − (2+s) c/3, H_y = −0.15, H_θ = 0.2 s
        let dh = Vector3::new(-c * c / 3.0 + (2.0 + s) * s / 3.0, 0.0, 0.2 * c);
        let g = vb.try_inverse().unwrap() * (ad_star_matrix(&h) * a_visc + dh);
        assert!((terms.g[0] - g).amax() < 1e-8);
    }

    #[test]
    fn prediction_reduces_to_stokes_at_zero_epsilon() {
        let p = SwimmerParams::default();
        let terms = perturbation_terms(&p, &[FRAC_PI_2, -FRAC_PI_2]).unwrap();
        let shape = ShapeState { alpha: vec![FRAC_PI_2, -FRAC_PI_2], alpha_dot: vec![1.0, -1.0], alpha_ddot: vec![0.3, 0.1] };
        assert_eq!(terms.predict(&shape, 0.0), terms.predict_stokes(&shape));
    }

    #[test]
    fn dimension_checked() {
        let p = SwimmerParams::default();
        assert_eq!(locked_data(&p, &[0.0]).unwrap_err(), ReductionError::ShapeDim { expected: 2, got: 1 });
    }
}
