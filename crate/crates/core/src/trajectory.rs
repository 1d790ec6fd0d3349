//! Shape states, shape signals and recorded trajectories with their CSV form.

use crate::se2::{BodyVelocity, GroupElement, Momentum};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trajectory csv at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trajectory is empty")]
    Empty,
}

/// Shape configuration `(r, ṙ, r̈)` on the n-torus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShapeState {
    pub alpha: Vec<f64>,
    pub alpha_dot: Vec<f64>,
    pub alpha_ddot: Vec<f64>,
}

impl ShapeState {
    pub fn zeros(dim: usize) -> Self {
        Self { alpha: vec![0.0; dim], alpha_dot: vec![0.0; dim], alpha_ddot: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(&self.alpha_dot).chain(&self.alpha_ddot).all(|v| v.is_finite())
    }
}

/// A shape trajectory that can be queried at any time inside its span.
pub trait ShapeSignal: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64) -> ShapeState;
}

/// Any `Fn(t) -> ShapeState` is a signal; the dimension is carried alongside.
pub struct FnSignal<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64) -> ShapeState + Sync> ShapeSignal for FnSignal<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64) -> ShapeState {
        (self.f)(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub shape: ShapeState,
    pub g: GroupElement,
    pub xi: BodyVelocity,
    pub p: Momentum,
}

/// Uniformly sampled simulation or ingested record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.shape.dim())
    }

    /// Sample spacing, taken from the first two samples.
    pub fn dt(&self) -> Option<f64> {
        match self.samples.as_slice() {
            [a, b, ..] => Some(b.t - a.t),
            _ => None,
        }
    }

    pub fn shapes(&self) -> Vec<ShapeState> {
        self.samples.iter().map(|s| s.shape.clone()).collect()
    }

    pub fn body_velocities(&self) -> Vec<BodyVelocity> {
        self.samples.iter().map(|s| s.xi).collect()
    }

    /// Samples with `t >= t0`.
    pub fn after(&self, t0: f64) -> Trajectory {
        Trajectory { samples: self.samples.iter().filter(|s| s.t >= t0).cloned().collect() }
    }

    pub fn csv_header(dim: usize) -> String {
        let mut cols = vec!["t".to_string()];
        for prefix in ["alpha", "dalpha", "ddalpha"] {
            cols.extend((1..=dim).map(|i| format!("{prefix}_{i}")));
        }
        cols.extend(
            ["x", "y", "theta", "xi_x", "xi_y", "xi_theta", "p_x", "p_y", "p_theta"].map(String::from),
        );
        cols.join(",")
    }

    /// Writes the trajectory with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TrajectoryError> {
        writeln!(w, "{}", Self::csv_header(self.shape_dim()))?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            let values = std::iter::once(s.t)
                .chain(s.shape.alpha.iter().copied())
                .chain(s.shape.alpha_dot.iter().copied())
                .chain(s.shape.alpha_ddot.iter().copied())
                .chain([s.g.x, s.g.y, s.g.theta])
                .chain(s.xi.0.iter().copied())
                .chain(s.p.0.iter().copied());
            for (k, v) in values.enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format_sig17(v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Trajectory, TrajectoryError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(TrajectoryError::Empty)??;
        let ncols = header.split(',').count();
        if ncols < 10 || (ncols - 10) % 3 != 0 {
            return Err(TrajectoryError::Parse { line: 1, msg: format!("unexpected column count {ncols}") });
        }
        let dim = (ncols - 10) / 3;
        if header != Self::csv_header(dim) {
            return Err(TrajectoryError::Parse { line: 1, msg: "header mismatch".into() });
        }
        let mut samples = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| TrajectoryError::Parse { line: k + 2, msg: e.to_string() })?;
            if vals.len() != ncols {
                return Err(TrajectoryError::Parse { line: k + 2, msg: "wrong number of fields".into() });
            }
            let b = 1 + 3 * dim;
            samples.push(TrajectorySample {
                t: vals[0],
                shape: ShapeState {
                    alpha: vals[1..1 + dim].to_vec(),
                    alpha_dot: vals[1 + dim..1 + 2 * dim].to_vec(),
                    alpha_ddot: vals[1 + 2 * dim..b].to_vec(),
                },
                g: GroupElement::new(vals[b], vals[b + 1], vals[b + 2]),
                xi: BodyVelocity::new(vals[b + 3], vals[b + 4], vals[b + 5]),
                p: Momentum::new(vals[b + 6], vals[b + 7], vals[b + 8]),
            });
        }
        if samples.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        Ok(Trajectory { samples })
    }
}

/// Formats a float with 17 significant digits; the value round-trips exactly.
pub fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(t: f64, v: f64) -> TrajectorySample {
        TrajectorySample {
            t,
            shape: ShapeState { alpha: vec![v, -v], alpha_dot: vec![0.1, 0.2], alpha_ddot: vec![1e-300, 3.0] },
            g: GroupElement::new(1.0, 2.0, v),
            xi: BodyVelocity::new(v, 0.5, -0.25),
            p: Momentum::new(0.0, 1.0 / 3.0, 7.0),
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            Trajectory::csv_header(2),
            "t,alpha_1,alpha_2,dalpha_1,dalpha_2,ddalpha_1,ddalpha_2,x,y,theta,xi_x,xi_y,xi_theta,p_x,p_y,p_theta"
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(Trajectory::read_csv("".as_bytes()).is_err());
        let mut buf = Vec::new();
        Trajectory { samples: vec![sample(0.0, 1.0)] }.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("e0,", "e0,x");
        assert!(Trajectory::read_csv(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in prop::collection::vec(-1e6..1e6f64, 1..20)) {
            let traj = Trajectory { samples: vals.iter().enumerate().map(|(k, v)| sample(k as f64 * 0.1, *v)).collect() };
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).unwrap();
            let back = Trajectory::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, traj);
        }
    }
}
