//! Phase-sectioned least-squares models of body velocity near a gait.
//!
//! Samples are binned by phase into `M` sections centred on `φ_m = 2πm/M`.
//! Within section `m` the offsets `δ = r − γ(φ_m)`, `δ̇ = ṙ − γ̇(φ_m)` and
//! `δ̈ = r̈ − γ̈(φ_m)` are regressed against each body-velocity component, and
//! the per-section coefficients are interpolated over phase by Fourier series.
//!
//! Regressor rows are `[1, δ, δ̇, δ⊗δ̇]` for the Stokes family and
//! `[1, δ, δ̇, δ̈, δ⊗δ̇, δ⊗δ̈, δ̇⊗δ̇ (, δ⊗δ̇⊗δ̇)]` for the perturbed family. Outer
//! products are flattened row-major: `(a⊗b)[i·d + j] = a_i b_j`.

use crate::fourier::{design_matrix, FourierSeries};
use crate::phase::GaitModels;
use crate::reduction::{connection_derivatives, perturbation_terms, viscous_connection, ReducedSystem, ReductionError};
use crate::se2::BodyVelocity;
use crate::trajectory::ShapeState;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("every phase section is empty")]
    NoData,
    #[error("non-finite {0} in regression input")]
    NonFinite(&'static str),
    #[error("invalid regressor config: {0}")]
    Config(String),
    #[error("shape dimension mismatch: expected {expected}, got {got}")]
    ShapeDim { expected: usize, got: usize },
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Stokes,
    PerturbedStokes,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Stokes => "stokes",
            ModelKind::PerturbedStokes => "perturbed_stokes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub sections: usize,
    /// Offset radius; samples with any offset norm at or beyond it are dropped.
    #[serde(with = "crate::floats")]
    pub kappa: f64,
    /// Tikhonov weight relative to the column-normalised Gram matrix.
    pub ridge: f64,
    pub coeff_fourier_order: usize,
    pub kind: ModelKind,
    pub include_cubic: bool,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            sections: 32,
            kappa: f64::INFINITY,
            ridge: 1e-8,
            coeff_fourier_order: 10,
            kind: ModelKind::Stokes,
            include_cubic: false,
        }
    }
}

impl RegressorConfig {
    pub fn of_kind(kind: ModelKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RegressionError> {
        if self.sections < 8 {
            return Err(RegressionError::Config(format!("sections must be >= 8, got {}", self.sections)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(RegressionError::Config("ridge must be non-negative and finite".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(RegressionError::Config("kappa must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Constant,
    Delta,
    DeltaDot,
    DeltaDdot,
    DeltaDeltaDot,
    DeltaDeltaDdot,
    DeltaDotDeltaDot,
    DeltaDeltaDotDeltaDot,
}

/// Column ranges of each regressor block, in row order.
pub fn block_layout(kind: ModelKind, d: usize, cubic: bool) -> Vec<(Block, Range<usize>)> {
    let mut sizes = vec![(Block::Constant, 1), (Block::Delta, d), (Block::DeltaDot, d)];
    match kind {
        ModelKind::Stokes => sizes.push((Block::DeltaDeltaDot, d * d)),
        ModelKind::PerturbedStokes => {
            sizes.push((Block::DeltaDdot, d));
            sizes.push((Block::DeltaDeltaDot, d * d));
            sizes.push((Block::DeltaDeltaDdot, d * d));
            sizes.push((Block::DeltaDotDeltaDot, d * d));
            if cubic {
                sizes.push((Block::DeltaDeltaDotDeltaDot, d * d * d));
            }
        }
    }
    let mut start = 0;
    sizes
        .into_iter()
        .map(|(b, n)| {
            let r = start..start + n;
            start += n;
            (b, r)
        })
        .collect()
}

pub fn column_count(kind: ModelKind, d: usize, cubic: bool) -> usize {
    block_layout(kind, d, cubic).last().map_or(0, |(_, r)| r.end)
}

/// Appends one regressor row to `out`.
pub fn regressor_row(kind: ModelKind, cubic: bool, delta: &[f64], delta_dot: &[f64], delta_ddot: &[f64], out: &mut Vec<f64>) {
    let outer = |a: &[f64], b: &[f64], out: &mut Vec<f64>| {
        for x in a {
            for y in b {
                out.push(x * y);
            }
        }
    };
    out.push(1.0);
    out.extend_from_slice(delta);
    out.extend_from_slice(delta_dot);
    match kind {
        ModelKind::Stokes => outer(delta, delta_dot, out),
        ModelKind::PerturbedStokes => {
            out.extend_from_slice(delta_ddot);
            outer(delta, delta_dot, out);
            outer(delta, delta_ddot, out);
            outer(delta_dot, delta_dot, out);
            if cubic {
                for x in delta {
                    for y in delta_dot {
                        for z in delta_dot {
                            out.push(x * y * z);
                        }
                    }
                }
            }
        }
    }
}

/// One observation expressed relative to a section's gait point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    pub phase: f64,
    pub delta: Vec<f64>,
    pub delta_dot: Vec<f64>,
    pub delta_ddot: Vec<f64>,
    pub target: [f64; 3],
}

/// Samples with their assigned phases, ready for fitting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitData {
    pub phases: Vec<f64>,
    pub shapes: Vec<ShapeState>,
    pub xi: Vec<BodyVelocity>,
}

pub fn section_phase(m: usize, sections: usize) -> f64 {
    TAU * m as f64 / sections as f64
}

/// Section whose bin `[φ_m − π/M, φ_m + π/M)` contains `phi`.
pub fn section_of(phi: f64, sections: usize) -> usize {
    let width = TAU / sections as f64;
    (((phi + PI / sections as f64).rem_euclid(TAU) / width).floor() as usize) % sections
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn offset_against(gamma: &ShapeState, phi: f64, shape: &ShapeState, xi: &BodyVelocity) -> Offset {
    Offset {
        phase: phi,
        delta: sub(&shape.alpha, &gamma.alpha),
        delta_dot: sub(&shape.alpha_dot, &gamma.alpha_dot),
        delta_ddot: sub(&shape.alpha_ddot, &gamma.alpha_ddot),
        target: [xi.x(), xi.y(), xi.theta()],
    }
}

fn within(o: &Offset, kappa: f64) -> bool {
    norm(&o.delta) < kappa && norm(&o.delta_dot) < kappa && norm(&o.delta_ddot) < kappa
}

/// Offsets of the samples falling in section `m`.
pub fn collect_samples(data: &FitData, gait: &GaitModels, m: usize, cfg: &RegressorConfig) -> Vec<Offset> {
    let gamma = gait.at(section_phase(m, cfg.sections));
    data.phases
        .iter()
        .zip(&data.shapes)
        .zip(&data.xi)
        .filter(|((phi, _), _)| section_of(**phi, cfg.sections) == m)
        .map(|((phi, s), xi)| offset_against(&gamma, *phi, s, xi))
        .filter(|o| within(o, cfg.kappa))
        .collect()
}

/// Offsets for every section in one pass over the data.
pub fn collect_all(datasets: &[FitData], gait: &GaitModels, cfg: &RegressorConfig) -> Vec<Vec<Offset>> {
    let gammas: Vec<ShapeState> = (0..cfg.sections).map(|m| gait.at(section_phase(m, cfg.sections))).collect();
    let mut out = vec![Vec::new(); cfg.sections];
    for data in datasets {
        for ((phi, s), xi) in data.phases.iter().zip(&data.shapes).zip(&data.xi) {
            let m = section_of(*phi, cfg.sections);
            let o = offset_against(&gammas[m], *phi, s, xi);
            if within(&o, cfg.kappa) {
                out[m].push(o);
            }
        }
    }
    out
}

/// Design matrix (N × columns) and targets (N × 3).
pub fn build_design_matrix(offsets: &[Offset], kind: ModelKind, cubic: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = offsets.first().map_or(0, |o| o.delta.len());
    let cols = column_count(kind, d, cubic);
    let mut flat = Vec::with_capacity(offsets.len() * cols);
    let mut row = Vec::with_capacity(cols);
    for o in offsets {
        row.clear();
        regressor_row(kind, cubic, &o.delta, &o.delta_dot, &o.delta_ddot, &mut row);
        flat.extend_from_slice(&row);
    }
    let design = DMatrix::from_row_slice(offsets.len(), cols, &flat);
    let targets = DMatrix::from_fn(offsets.len(), 3, |r, c| offsets[r].target[c]);
    (design, targets)
}

/// Indices of columns that are not duplicates of another (the `δ̇⊗δ̇` block
/// repeats `(i, j)` as `(j, i)`).
fn unique_columns(kind: ModelKind, d: usize, cubic: bool) -> Vec<usize> {
    let mut keep = Vec::new();
    for (block, range) in block_layout(kind, d, cubic) {
        match block {
            Block::DeltaDotDeltaDot => {
                keep.extend(range.clone().filter(|c| {
                    let k = c - range.start;
                    k / d <= k % d
                }));
            }
            Block::DeltaDeltaDotDeltaDot => {
                keep.extend(range.clone().filter(|c| {
                    let k = c - range.start;
                    (k / d) % d <= k % d
                }));
            }
            _ => keep.extend(range),
        }
    }
    keep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDiagnostics {
    pub samples: usize,
    /// Condition number of the column-normalised design on its distinct columns.
    #[serde(with = "crate::floats")]
    pub condition: f64,
    pub rms_residual: [f64; 3],
    /// `max_k |C₀ − C_δ̇ · γ̇|`, the constraint the regression leaves free.
    pub constraint_mismatch: f64,
}

/// Ridge-regularised least squares with column-RMS normalisation. Returns the
/// `columns × 3` coefficient matrix.
pub fn solve_least_squares(design: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let (n, p) = design.shape();
    let scales: Vec<f64> = (0..p)
        .map(|c| {
            let rms = (design.column(c).norm_squared() / n as f64).sqrt();
            if rms > 0.0 { rms } else { 1.0 }
        })
        .collect();
    let mut scaled = design.clone();
    for (c, s) in scales.iter().enumerate() {
        scaled.column_mut(c).unscale_mut(*s);
    }
    let svd = scaled.svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let smax = svd.singular_values.max();
    let lambda = ridge * n as f64;
    let cutoff = smax * 1e-13 * (n.max(p) as f64);
    let filt: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| {
            if s <= cutoff {
                0.0
            } else if lambda > 0.0 {
                s / (s * s + lambda)
            } else {
                1.0 / s
            }
        })
        .collect();
    let mut proj = u.transpose() * targets;
    for (r, f) in filt.iter().enumerate() {
        proj.row_mut(r).scale_mut(*f);
    }
    let mut coef = vt.transpose() * proj;
    for (c, s) in scales.iter().enumerate() {
        coef.row_mut(c).unscale_mut(*s);
    }
    coef
}

fn condition_number(design: &DMatrix<f64>, keep: &[usize]) -> f64 {
    let n = design.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let mut sub = design.select_columns(keep);
    for mut col in sub.column_iter_mut() {
        let rms = (col.norm_squared() / n as f64).sqrt();
        if rms > 0.0 {
            col.unscale_mut(rms);
        }
    }
    let sv = sub.singular_values();
    let smin = sv.min();
    if smin > 0.0 { sv.max() / smin } else { f64::INFINITY }
}

/// A fitted local model: per-section coefficients and their phase interpolants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    pub kind: ModelKind,
    pub include_cubic: bool,
    pub shape_dim: usize,
    pub sections: usize,
    pub section_phases: Vec<f64>,
    /// Per section, `3 × columns` coefficients flattened component-major, or
    /// `None` when the section had no samples.
    pub section_coefficients: Vec<Option<Vec<f64>>>,
    /// Fourier interpolant of the flattened coefficients.
    pub interpolant: FourierSeries,
    pub gait: GaitModels,
    /// Largest `(‖δ‖, ‖δ̇‖, ‖δ̈‖)` seen in each section.
    #[serde(with = "crate::floats::triples")]
    pub tube: Vec<[f64; 3]>,
    #[serde(with = "crate::floats")]
    pub kappa: f64,
    pub diagnostics: Vec<Option<SectionDiagnostics>>,
}

/// Fourier fit of each row of `values` (one vector per phase) with minimum-norm
/// coefficients when the order exceeds what the phases resolve.
pub fn interpolate_over_phase(phases: &[f64], values: &[Vec<f64>], order: usize) -> FourierSeries {
    let dim = values.first().map_or(0, |v| v.len());
    let design = design_matrix(phases, order);
    let rhs = DMatrix::from_fn(phases.len(), dim, |r, c| values[r][c]);
    let svd = design.svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * (phases.len().max(2 * order + 1) as f64);
    let coef = svd.solve(&rhs, tol).expect("svd solve");
    let mut flat = Vec::with_capacity(dim * (2 * order + 1));
    for r in 0..2 * order + 1 {
        flat.extend(coef.row(r).iter().copied());
    }
    FourierSeries::from_flat(dim, order, &flat)
}

impl LocalModel {
    pub fn columns(&self) -> usize {
        column_count(self.kind, self.shape_dim, self.include_cubic)
    }

    pub fn layout(&self) -> Vec<(Block, Range<usize>)> {
        block_layout(self.kind, self.shape_dim, self.include_cubic)
    }

    /// Interpolated `3 × columns` coefficient matrix at phase `phi`.
    pub fn coefficients_at(&self, phi: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, self.columns(), &self.interpolant.eval(phi))
    }

    /// Interpolated coefficients of one regressor block.
    pub fn block_at(&self, phi: f64, block: Block) -> Option<DMatrix<f64>> {
        let range = self.layout().into_iter().find(|(b, _)| *b == block)?.1;
        Some(self.coefficients_at(phi).columns(range.start, range.len()).into_owned())
    }

    /// Per-section (not interpolated) coefficients of one block.
    pub fn section_block(&self, m: usize, block: Block) -> Option<DMatrix<f64>> {
        let range = self.layout().into_iter().find(|(b, _)| *b == block)?.1;
        let c = self.section_coefficients[m].as_ref()?;
        let full = DMatrix::from_row_slice(3, self.columns(), c);
        Some(full.columns(range.start, range.len()).into_owned())
    }

    pub fn predict(&self, phi: f64, delta: &[f64], delta_dot: &[f64], delta_ddot: &[f64]) -> Result<BodyVelocity, RegressionError> {
        for (name, v) in [("delta", delta), ("delta_dot", delta_dot), ("delta_ddot", delta_ddot)] {
            if v.len() != self.shape_dim {
                return Err(RegressionError::ShapeDim { expected: self.shape_dim, got: v.len() });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(RegressionError::NonFinite(name));
            }
        }
        if !phi.is_finite() {
            return Err(RegressionError::NonFinite("phase"));
        }
        if !self.in_tube(phi, delta, delta_dot, delta_ddot) {
            log::debug!("prediction at phase {phi:.3} outside the fitted tube");
        }
        let mut row = Vec::with_capacity(self.columns());
        regressor_row(self.kind, self.include_cubic, delta, delta_dot, delta_ddot, &mut row);
        let coef = self.interpolant.eval(phi);
        let p = row.len();
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = coef[k * p..(k + 1) * p].iter().zip(&row).map(|(c, x)| c * x).sum();
        }
        Ok(BodyVelocity::new(out[0], out[1], out[2]))
    }

    /// Prediction for a shape state at phase `phi`, offsets taken against the
    /// gait model at that phase.
    pub fn predict_state(&self, phi: f64, shape: &ShapeState) -> Result<BodyVelocity, RegressionError> {
        let g = self.gait.at(phi);
        self.predict(phi, &sub(&shape.alpha, &g.alpha), &sub(&shape.alpha_dot, &g.alpha_dot), &sub(&shape.alpha_ddot, &g.alpha_ddot))
    }

    pub fn in_tube(&self, phi: f64, delta: &[f64], delta_dot: &[f64], delta_ddot: &[f64]) -> bool {
        let r = self.tube[section_of(phi, self.sections)];
        let k = self.kappa;
        norm(delta) <= r[0].min(k) && norm(delta_dot) <= r[1].min(k) && norm(delta_ddot) <= r[2].min(k)
    }

    fn assemble(
        kind: ModelKind,
        include_cubic: bool,
        shape_dim: usize,
        sections: usize,
        order: usize,
        section_coefficients: Vec<Option<Vec<f64>>>,
        gait: GaitModels,
        tube: Vec<[f64; 3]>,
        kappa: f64,
        diagnostics: Vec<Option<SectionDiagnostics>>,
    ) -> Result<Self, RegressionError> {
        let section_phases: Vec<f64> = (0..sections).map(|m| section_phase(m, sections)).collect();
        let (ph, vals): (Vec<f64>, Vec<Vec<f64>>) = section_phases
            .iter()
            .zip(&section_coefficients)
            .filter_map(|(p, c)| c.as_ref().map(|c| (*p, c.clone())))
            .unzip();
        if ph.is_empty() {
            return Err(RegressionError::NoData);
        }
        let interpolant = interpolate_over_phase(&ph, &vals, order);
        Ok(Self {
            kind,
            include_cubic,
            shape_dim,
            sections,
            section_phases,
            section_coefficients,
            interpolant,
            gait,
            tube,
            kappa,
            diagnostics,
        })
    }
}

/// Fits a local model of the chosen kind to phase-assigned data.
pub fn fit(datasets: &[FitData], gait: &GaitModels, cfg: &RegressorConfig) -> Result<LocalModel, RegressionError> {
    cfg.validate()?;
    let d = gait.shape_dim();
    for data in datasets {
        if data.shapes.iter().any(|s| s.dim() != d) {
            return Err(RegressionError::ShapeDim { expected: d, got: data.shapes.iter().find(|s| s.dim() != d).map_or(0, |s| s.dim()) });
        }
        if !data.xi.iter().all(|v| v.is_finite()) {
            return Err(RegressionError::NonFinite("target"));
        }
        if !data.shapes.iter().all(|s| s.is_finite()) || !data.phases.iter().all(|p| p.is_finite()) {
            return Err(RegressionError::NonFinite("regressor"));
        }
    }
    let per_section = collect_all(datasets, gait, cfg);
    if per_section.iter().all(|s| s.is_empty()) {
        return Err(RegressionError::NoData);
    }
    let cols = column_count(cfg.kind, d, cfg.include_cubic);
    let keep = unique_columns(cfg.kind, d, cfg.include_cubic);
    let layout = block_layout(cfg.kind, d, cfg.include_cubic);
    let dd_range = layout.iter().find(|(b, _)| *b == Block::DeltaDot).map(|(_, r)| r.clone()).expect("delta-dot block");

    let mut coefficients = Vec::with_capacity(cfg.sections);
    let mut diagnostics = Vec::with_capacity(cfg.sections);
    let mut tube = Vec::with_capacity(cfg.sections);
    for (m, offsets) in per_section.iter().enumerate() {
        let mut radii = [0.0f64; 3];
        for o in offsets {
            radii[0] = radii[0].max(norm(&o.delta));
            radii[1] = radii[1].max(norm(&o.delta_dot));
            radii[2] = radii[2].max(norm(&o.delta_ddot));
        }
        tube.push(radii);
        if offsets.is_empty() {
            log::warn!("phase section {m} has no samples; relying on interpolation");
            coefficients.push(None);
            diagnostics.push(None);
            continue;
        }
        if offsets.len() < 3 * cols {
            log::warn!("phase section {m}: {} samples for {cols} regressors", offsets.len());
        }
        let (design, targets) = build_design_matrix(offsets, cfg.kind, cfg.include_cubic);
        let coef = solve_least_squares(&design, &targets, cfg.ridge);
        let resid = &design * &coef - &targets;
        let n = offsets.len() as f64;
        let rms = [0, 1, 2].map(|k| (resid.column(k).norm_squared() / n).sqrt());
        let condition = condition_number(&design, &keep);
        if condition > 1e8 {
            log::warn!("phase section {m}: design condition number {condition:.3e}");
        }
        let gdot = gait.gamma_dot.eval(section_phase(m, cfg.sections));
        let mismatch = (0..3)
            .map(|k| {
                let c0 = coef[(0, k)];
                let lin: f64 = dd_range.clone().zip(&gdot).map(|(c, g)| coef[(c, k)] * g).sum();
                (c0 - lin).abs()
            })
            .fold(0.0, f64::max);
        let mut flat = Vec::with_capacity(3 * cols);
        for k in 0..3 {
            flat.extend(coef.column(k).iter().copied());
        }
        coefficients.push(Some(flat));
        diagnostics.push(Some(SectionDiagnostics { samples: offsets.len(), condition, rms_residual: rms, constraint_mismatch: mismatch }));
    }
    LocalModel::assemble(
        cfg.kind,
        cfg.include_cubic,
        d,
        cfg.sections,
        cfg.coeff_fourier_order,
        coefficients,
        gait.clone(),
        tube,
        cfg.kappa,
        diagnostics,
    )
}

/// The Stokes-family model implied by a known viscous connection: the
/// first-order Taylor expansion of `ξ = −A(r) ṙ` about the gait.
pub fn stokes_model_from_connection(
    sys: &dyn ReducedSystem,
    gait: &GaitModels,
    sections: usize,
    order: usize,
) -> Result<LocalModel, RegressionError> {
    let d = sys.shape_dim();
    let layout = block_layout(ModelKind::Stokes, d, false);
    let cols = column_count(ModelKind::Stokes, d, false);
    let range = |b: Block| layout.iter().find(|(x, _)| *x == b).map(|(_, r)| r.start).expect("block");
    let mut coefficients = Vec::with_capacity(sections);
    for m in 0..sections {
        let g = gait.at(section_phase(m, sections));
        let a = viscous_connection(sys, &g.alpha)?;
        let da = connection_derivatives(sys, &g.alpha)?;
        let mut coef = DMatrix::zeros(3, cols);
        let gd = DVector::from_column_slice(&g.alpha_dot);
        let c0 = -(&a * &gd);
        for k in 0..3 {
            coef[(k, 0)] = c0[k];
            for i in 0..d {
                coef[(k, range(Block::DeltaDot) + i)] = -a[(k, i)];
                coef[(k, range(Block::Delta) + i)] = -(da[i].row(k) * &gd)[0];
                for j in 0..d {
                    coef[(k, range(Block::DeltaDeltaDot) + i * d + j)] = -da[i][(k, j)];
                }
            }
        }
        coefficients.push(Some(coef.transpose().as_slice().to_vec()));
    }
    LocalModel::assemble(
        ModelKind::Stokes,
        false,
        d,
        sections,
        order,
        coefficients,
        gait.clone(),
        vec![[f64::INFINITY; 3]; sections],
        f64::INFINITY,
        vec![None; sections],
    )
}

/// First-order slow-manifold velocity `−A ṙ + ε (B r̈ + G(ṙ, ṙ))` at every
/// sample; synthetic targets with a known perturbed structure.
pub fn perturbed_targets(sys: &dyn ReducedSystem, shapes: &[ShapeState]) -> Result<Vec<BodyVelocity>, RegressionError> {
    let eps = sys.epsilon();
    shapes
        .iter()
        .map(|s| Ok(perturbation_terms(sys, &s.alpha)?.predict(s, eps)))
        .collect()
}
