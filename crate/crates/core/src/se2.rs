//! Planar rigid motions: the group SE(2), its Lie algebra se(2) and the dual se(2)*.
//!
//! Coordinates are ordered translation first, `[x, y, theta]`, for group
//! elements, body velocities, momenta and wrenches alike. The dual pairing is
//! the plain dot product in these coordinates.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum Se2Error {
    #[error("non-finite body velocity sample at index {0}")]
    NonFinite(usize),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
}

/// Pose of the body frame in the world. `theta` is kept unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupElement {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

macro_rules! algebra_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
        pub struct $name(pub Vector3<f64>);

        impl $name {
            pub fn new(x: f64, y: f64, theta: f64) -> Self {
                Self(Vector3::new(x, y, theta))
            }
            pub fn zero() -> Self {
                Self(Vector3::zeros())
            }
            pub fn x(&self) -> f64 {
                self.0[0]
            }
            pub fn y(&self) -> f64 {
                self.0[1]
            }
            pub fn theta(&self) -> f64 {
                self.0[2]
            }
            pub fn translation(&self) -> Vector2<f64> {
                Vector2::new(self.0[0], self.0[1])
            }
            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl Add for $name {
            type Output = Self;
            fn add(self, rhs: Self) -> Self {
                Self(self.0 + rhs.0)
            }
        }

        impl Sub for $name {
            type Output = Self;
            fn sub(self, rhs: Self) -> Self {
                Self(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = Self;
            fn neg(self) -> Self {
                Self(-self.0)
            }
        }

        impl Mul<$name> for f64 {
            type Output = $name;
            fn mul(self, rhs: $name) -> $name {
                $name(self * rhs.0)
            }
        }

        impl From<Vector3<f64>> for $name {
            fn from(v: Vector3<f64>) -> Self {
                Self(v)
            }
        }
    };
}

algebra_newtype!(
    /// Body-frame velocity, an element of se(2).
    BodyVelocity
);
algebra_newtype!(
    /// Body momentum, an element of se(2)*.
    Momentum
);
algebra_newtype!(
    /// Planar force and torque acting on the body, an element of se(2)*.
    Wrench
);

/// Counterclockwise rotation of the plane by `angle`.
pub fn rot(angle: f64) -> nalgebra::Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    nalgebra::Matrix2::new(c, -s, s, c)
}

/// The planar cross product `a × b`.
#[inline]
pub fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

impl GroupElement {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let t = self.translation() + rot(self.theta) * other.translation();
        GroupElement::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> GroupElement {
        let t = -(rot(-self.theta) * self.translation());
        GroupElement::new(t.x, t.y, -self.theta)
    }

    /// Homogeneous 3×3 matrix representation.
    pub fn matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.x, s, c, self.y, 0.0, 0.0, 1.0)
    }

    /// Group exponential of a body velocity held for unit time.
    pub fn exp(xi: &BodyVelocity) -> GroupElement {
        let w = xi.theta();
        let v = xi.translation();
        // V(w) = [[sin w / w, -(1 - cos w)/w], [(1 - cos w)/w, sin w / w]]
        let (a, b) = if w.abs() < 1e-6 {
            let w2 = w * w;
            (1.0 - w2 / 6.0 + w2 * w2 / 120.0, w / 2.0 - w * w2 / 24.0)
        } else {
            (w.sin() / w, (1.0 - w.cos()) / w)
        };
        GroupElement::new(a * v.x - b * v.y, b * v.x + a * v.y, w)
    }

    /// Same pose with the heading compared modulo 2π.
    pub fn approx_eq_mod_turn(&self, other: &GroupElement, tol: f64) -> bool {
        let dtheta = (self.theta - other.theta).rem_euclid(2.0 * PI);
        let dtheta = dtheta.min(2.0 * PI - dtheta);
        (self.x - other.x).abs() <= tol && (self.y - other.y).abs() <= tol && dtheta <= tol
    }

    /// Maps a body-frame covector (momentum or wrench) to the world frame,
    /// `Ad*_{g^-1}`: rotate the force part and take moments about the world origin.
    pub fn covector_to_spatial(&self, body: &Vector3<f64>) -> Vector3<f64> {
        let f = rot(self.theta) * Vector2::new(body[0], body[1]);
        Vector3::new(f.x, f.y, body[2] + cross(&self.translation(), &f))
    }
}

/// Converts a world-frame velocity `ġ = (ẋ, ẏ, θ̇)` into body velocity at pose `g`.
pub fn world_to_body(g: &GroupElement, gdot: &Vector3<f64>) -> BodyVelocity {
    let v = rot(-g.theta) * Vector2::new(gdot[0], gdot[1]);
    BodyVelocity::new(v.x, v.y, gdot[2])
}

pub fn body_to_world(g: &GroupElement, xi: &BodyVelocity) -> Vector3<f64> {
    let v = rot(g.theta) * xi.translation();
    Vector3::new(v.x, v.y, xi.theta())
}

/// The se(2) Lie bracket `[ξ, η]`.
pub fn bracket(xi: &BodyVelocity, eta: &BodyVelocity) -> BodyVelocity {
    // [ξ, η]_xy = ω_ξ J v_η − ω_η J v_ξ with J the quarter turn.
    let j = |v: Vector2<f64>| Vector2::new(-v.y, v.x);
    let t = xi.theta() * j(eta.translation()) - eta.theta() * j(xi.translation());
    BodyVelocity::new(t.x, t.y, 0.0)
}

/// Coadjoint action `ad*_ξ p`, defined by `⟨ad*_ξ p, η⟩ = ⟨p, [ξ, η]⟩`.
pub fn ad_star(xi: &BodyVelocity, p: &Momentum) -> Momentum {
    Momentum(ad_star_matrix(&p.0) * xi.0)
}

/// Matrix `C(p)` with `C(p) · ξ = ad*_ξ p`; the map p ↦ C(p) is linear.
pub fn ad_star_matrix(p: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, p[1], 0.0, 0.0, -p[0], -p[1], p[0], 0.0)
}

pub fn pairing(p: &Vector3<f64>, xi: &Vector3<f64>) -> f64 {
    p.dot(xi)
}

/// How `reconstruct` advances the pose between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Reconstruction {
    /// `g_{k+1} = g_k · exp(dt · (ξ_k + ξ_{k+1}) / 2)`; stays on the group exactly.
    #[default]
    MidpointExponential,
    /// Classical RK4 on `(x, y, θ)` with linearly interpolated ξ at the half step.
    Rk4Coordinates,
}

/// Integrates `ġ = g ξ` from `g0` over a uniformly sampled body-velocity signal.
/// Returns one pose per input sample, starting with `g0`.
pub fn reconstruct(
    g0: GroupElement,
    xi: &[BodyVelocity],
    dt: f64,
    mode: Reconstruction,
) -> Result<Vec<GroupElement>, Se2Error> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Se2Error::BadStep(dt));
    }
    if let Some(i) = xi.iter().position(|v| !v.is_finite()) {
        return Err(Se2Error::NonFinite(i));
    }
    let mut out = Vec::with_capacity(xi.len());
    if xi.is_empty() {
        return Ok(out);
    }
    out.push(g0);
    let mut g = g0;
    for w in xi.windows(2) {
        g = match mode {
            Reconstruction::MidpointExponential => {
                let mid = 0.5 * (w[0] + w[1]);
                g.compose(&GroupElement::exp(&(dt * mid)))
            }
            Reconstruction::Rk4Coordinates => {
                let mid = 0.5 * (w[0] + w[1]);
                let f = |q: &Vector3<f64>, v: &BodyVelocity| {
                    body_to_world(&GroupElement::new(q[0], q[1], q[2]), v)
                };
                let q = g.as_vector();
                let k1 = f(&q, &w[0]);
                let k2 = f(&(q + 0.5 * dt * k1), &mid);
                let k3 = f(&(q + 0.5 * dt * k2), &mid);
                let k4 = f(&(q + dt * k3), &w[1]);
                let q = q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                GroupElement::new(q[0], q[1], q[2])
            }
        };
        out.push(g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn hat(xi: &BodyVelocity) -> Matrix3<f64> {
        Matrix3::new(0.0, -xi.theta(), xi.x(), xi.theta(), 0.0, xi.y(), 0.0, 0.0, 0.0)
    }

    fn close(a: &GroupElement, b: &GroupElement, tol: f64) -> bool {
        (a.as_vector() - b.as_vector()).amax() < tol
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = GroupElement::new(1.0, 0.0, FRAC_PI_2);
        let b = GroupElement::new(1.0, 0.0, 0.0);
        let c = a.compose(&b);
        assert!(close(&c, &GroupElement::new(1.0, 1.0, FRAC_PI_2), 1e-15));
        let m = a.matrix() * b.matrix();
        assert!((m - c.matrix()).amax() < 1e-15);
    }

    #[test]
    fn identity_and_inverse() {
        let g = GroupElement::new(0.3, -2.0, 4.0);
        assert_eq!(GroupElement::identity().compose(&g), g);
        assert!(close(&g.compose(&g.inverse()), &GroupElement::identity(), 1e-12));
    }

    #[test]
    fn body_velocity_examples() {
        let xi = world_to_body(&GroupElement::identity(), &Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(xi, BodyVelocity::new(1.0, 0.0, 0.0));
        let xi = world_to_body(&GroupElement::new(5.0, 2.0, FRAC_PI_2), &Vector3::new(1.0, 0.0, 0.0));
        assert!((xi.0 - Vector3::new(0.0, -1.0, 0.0)).amax() < 1e-15);
        let xi = world_to_body(&GroupElement::new(-3.0, 7.0, 1.1), &Vector3::new(0.0, 0.0, 1.0));
        assert!((xi.0 - Vector3::new(0.0, 0.0, 1.0)).amax() < 1e-15);
    }

    #[test]
    fn ad_star_vanishes_on_zero() {
        let p = Momentum::new(1.0, 2.0, 3.0);
        assert_eq!(ad_star(&BodyVelocity::zero(), &p), Momentum::zero());
        assert_eq!(ad_star(&BodyVelocity::new(1.0, -1.0, 2.0), &Momentum::zero()), Momentum::zero());
    }

    #[test]
    fn reconstruct_constant_twist_closes_circle() {
        let (v, w) = (0.7, 1.3);
        let steps = 400;
        let dt = 2.0 * PI / w / steps as f64;
        let xi = vec![BodyVelocity::new(v, 0.0, w); steps + 1];
        let g0 = GroupElement::new(2.0, -1.0, 0.4);
        let path = reconstruct(g0, &xi, dt, Reconstruction::MidpointExponential).unwrap();
        let end = path.last().unwrap();
        assert!(end.approx_eq_mod_turn(&g0, 1e-12));
        // every point on the circle of radius v/ω about the centre
        let centre = g0.translation() + rot(g0.theta) * Vector2::new(0.0, v / w);
        for g in &path {
            assert!(((g.translation() - centre).norm() - v / w).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruct_trivial_signals() {
        let g0 = GroupElement::new(1.0, 2.0, 3.0);
        let path = reconstruct(g0, &vec![BodyVelocity::zero(); 50], 0.1, Reconstruction::default()).unwrap();
        assert!(path.iter().all(|g| *g == g0));
        let spin = vec![BodyVelocity::new(0.0, 0.0, 0.5); 11];
        let path = reconstruct(g0, &spin, 0.1, Reconstruction::default()).unwrap();
        for (k, g) in path.iter().enumerate() {
            assert!((g.theta - (3.0 + 0.05 * k as f64)).abs() < 1e-14);
            assert!((g.translation() - g0.translation()).norm() < 1e-14);
        }
    }

    #[test]
    fn reconstruct_rejects_non_finite() {
        let xi = vec![BodyVelocity::zero(), BodyVelocity::new(f64::NAN, 0.0, 0.0)];
        assert_eq!(
            reconstruct(GroupElement::identity(), &xi, 0.1, Reconstruction::default()),
            Err(Se2Error::NonFinite(1))
        );
    }

    #[test]
    fn rk4_reconstruction_is_fourth_order() {
        let xi_c = BodyVelocity::new(1.0, 0.4, 2.0);
        let t_end = 1.0;
        let exact = GroupElement::exp(&(t_end * xi_c));
        let err = |steps: usize| {
            let xi = vec![xi_c; steps + 1];
            let path =
                reconstruct(GroupElement::identity(), &xi, t_end / steps as f64, Reconstruction::Rk4Coordinates)
                    .unwrap();
            (path.last().unwrap().as_vector() - exact.as_vector()).amax()
        };
        let ratio = err(20) / err(40);
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn group_is_associative(a in prop::array::uniform3(-3.0..3.0f64),
                                b in prop::array::uniform3(-3.0..3.0f64),
                                c in prop::array::uniform3(-3.0..3.0f64)) {
            let (a, b, c) = (GroupElement::new(a[0], a[1], a[2]), GroupElement::new(b[0], b[1], b[2]),
                             GroupElement::new(c[0], c[1], c[2]));
            prop_assert!(close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-12));
            prop_assert!(close(&a.compose(&a.inverse()), &GroupElement::identity(), 1e-12));
        }

        #[test]
        fn body_world_round_trip(g in prop::array::uniform3(-5.0..5.0f64), v in prop::array::uniform3(-5.0..5.0f64)) {
            let g = GroupElement::new(g[0], g[1], g[2]);
            let xi = BodyVelocity::new(v[0], v[1], v[2]);
            let back = world_to_body(&g, &body_to_world(&g, &xi));
            prop_assert!((back.0 - xi.0).amax() < 1e-12);
        }

        #[test]
        fn ad_star_dualises_commutator(x in prop::array::uniform3(-2.0..2.0f64),
                                       e in prop::array::uniform3(-2.0..2.0f64),
                                       p in prop::array::uniform3(-2.0..2.0f64)) {
            let (xi, eta, p) = (BodyVelocity::new(x[0], x[1], x[2]), BodyVelocity::new(e[0], e[1], e[2]),
                                Momentum::new(p[0], p[1], p[2]));
            let comm = hat(&xi) * hat(&eta) - hat(&eta) * hat(&xi);
            let brute = BodyVelocity::new(comm[(0, 2)], comm[(1, 2)], comm[(1, 0)]);
            prop_assert!((bracket(&xi, &eta).0 - brute.0).amax() < 1e-12);
            let lhs = pairing(&ad_star(&xi, &p).0, &eta.0);
            let rhs = pairing(&p.0, &brute.0);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn exp_matches_matrix_exponential(v in prop::array::uniform3(-2.0..2.0f64)) {
            let xi = BodyVelocity::new(v[0], v[1], v[2]);
            // Taylor series of the 3×3 matrix exponential as an independent route
            let h = hat(&xi);
            let mut term = Matrix3::identity();
            let mut sum = Matrix3::identity();
            for k in 1..40 {
                term = term * h / k as f64;
                sum += term;
            }
            prop_assert!((GroupElement::exp(&xi).matrix() - sum).amax() < 1e-12);
        }
    }
}
