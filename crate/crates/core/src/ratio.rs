//! Density-ratio models `w(s) = p_H^π(s) / G(s)`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dist::WeightedEmpirical;
use crate::env::{final_distribution, FeatureTable, MdpSpec, StateId};
use crate::error::{Error, Result};
use crate::policy::Policy;

/// Numerator mass below this is treated as zero by the coverage check.
pub const COVERAGE_TOL: f64 = 1e-12;
/// Minimum number of sample points for KuLSIF.
pub const KULSIF_MIN_POINTS: usize = 10;

/// The regularization grid `{2^−20, …, 2^0}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-20..=0).map(|k| 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RatioKind {
    #[default]
    Exact,
    Kulsif,
    Constant,
}

/// Serializable ratio settings (`ratio.*` config keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatioParams {
    pub kind: RatioKind,
    pub lambda_grid: Vec<f64>,
    pub clip_floor: f64,
}

impl Default for RatioParams {
    fn default() -> Self {
        RatioParams { kind: RatioKind::Exact, lambda_grid: default_lambda_grid(), clip_floor: 0.0 }
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Table(HashMap<StateId, f64>),
    Kulsif { features: Arc<FeatureTable>, theta: Vec<f64>, lambda: f64, loo_scores: Vec<f64> },
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct DensityRatioModel {
    inner: Inner,
    clip_floor: f64,
}

impl DensityRatioModel {
    pub fn constant(value: f64) -> Self {
        DensityRatioModel { inner: Inner::Constant(value), clip_floor: f64::NEG_INFINITY }
    }

    pub fn kind(&self) -> RatioKind {
        match self.inner {
            Inner::Table(_) => RatioKind::Exact,
            Inner::Kulsif { .. } => RatioKind::Kulsif,
            Inner::Constant(_) => RatioKind::Constant,
        }
    }

    pub fn eval(&self, state: StateId) -> Result<f64> {
        let raw = match &self.inner {
            Inner::Table(t) => *t.get(&state).ok_or(Error::UnknownState(state))?,
            Inner::Kulsif { features, theta, .. } => {
                features.row(state)?.iter().zip(theta).map(|(x, t)| x * t).sum()
            }
            Inner::Constant(c) => *c,
        };
        Ok(raw.max(self.clip_floor))
    }

    /// Unclipped KuLSIF output, for diagnostics.
    pub fn raw(&self, state: StateId) -> Result<f64> {
        match &self.inner {
            Inner::Kulsif { features, theta, .. } => {
                Ok(features.row(state)?.iter().zip(theta).map(|(x, t)| x * t).sum())
            }
            _ => self.eval(state),
        }
    }

    /// Selected regularization strength, for the KuLSIF kind.
    pub fn lambda(&self) -> Option<f64> {
        match &self.inner {
            Inner::Kulsif { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    /// Leave-one-out scores over the grid, for the KuLSIF kind.
    pub fn loo_scores(&self) -> Option<&[f64]> {
        match &self.inner {
            Inner::Kulsif { loo_scores, .. } => Some(loo_scores),
            _ => None,
        }
    }
}

/// `w*(s) = p_H^π(s) / g(s)` with the numerator from dynamic programming.
pub fn exact_ratio(spec: &MdpSpec, policy: &Policy, g: &WeightedEmpirical) -> Result<DensityRatioModel> {
    let p = final_distribution(spec, policy)?;
    let target: Vec<(StateId, f64)> = spec.valid_states().iter().copied().zip(p).collect();
    exact_ratio_from_target(&target, g)
}

/// Exact ratio against an explicit target distribution over states.
pub fn exact_ratio_from_target(target: &[(StateId, f64)], g: &WeightedEmpirical) -> Result<DensityRatioModel> {
    if g.is_signed() {
        return Err(Error::contract("exact ratio needs an unsigned denominator"));
    }
    let denom: HashMap<StateId, f64> = g.state_marginal().into_iter().collect();
    let mut uncovered = Vec::new();
    let mut table: HashMap<StateId, f64> = denom.keys().map(|&s| (s, 0.0)).collect();
    for &(s, p) in target {
        match denom.get(&s) {
            Some(&q) if q > 0.0 => {
                table.insert(s, p / q);
            }
            _ if p > COVERAGE_TOL => uncovered.push(s),
            _ => {}
        }
    }
    if !uncovered.is_empty() {
        uncovered.sort_unstable();
        return Err(Error::Coverage { states: uncovered });
    }
    Ok(DensityRatioModel { inner: Inner::Table(table), clip_floor: 0.0 })
}

/// KuLSIF with a linear kernel on `[features(s), 1]`.
///
/// Minimizes `½·E_g[r²] − E_target[r] + (λ/2)·‖θ‖²` for `r(s) = θᵀψ(s)` and
/// picks `λ` from `lambda_grid` by exact leave-one-out over sample points.
pub fn fit_kulsif(
    g: &WeightedEmpirical,
    target: &[(StateId, f64)],
    features: &FeatureTable,
    lambda_grid: &[f64],
    clip_floor: f64,
) -> Result<DensityRatioModel> {
    if g.is_signed() {
        return Err(Error::Unsupported("KuLSIF needs an unsigned sample".into()));
    }
    let points = g.sample_size().unwrap_or(g.len());
    if points < KULSIF_MIN_POINTS {
        return Err(Error::invalid(format!("KuLSIF needs at least {KULSIF_MIN_POINTS} sample points, got {points}")));
    }
    let total: f64 = target.iter().map(|t| t.1).sum();
    if (total - 1.0).abs() > 1e-9 || target.iter().any(|t| t.1 < 0.0) {
        return Err(Error::invalid("target must be a probability vector"));
    }
    if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("lambda grid must contain positive values"));
    }
    if !(clip_floor >= 0.0) {
        return Err(Error::invalid("clip floor must be nonnegative"));
    }
    let psi_table = Arc::new(features.with_constant());
    let d = psi_table.dim();

    let mut c = DMatrix::<f64>::zeros(d, d);
    let mut psis = Vec::with_capacity(g.len());
    for (atom, w) in g.iter() {
        let psi = DVector::from_column_slice(psi_table.row(atom.state)?);
        c.syger(w, &psi, &psi, 1.0);
        psis.push((psi, w));
    }
    let mut mu = DVector::<f64>::zeros(d);
    for &(s, p) in target {
        if p != 0.0 {
            mu.axpy(p, &DVector::from_column_slice(psi_table.row(s)?), 1.0);
        }
    }
    c.fill_upper_triangle_with_lower_triangle();
    let eig = SymmetricEigen::new(c);
    let q = &eig.eigenvectors;
    let qt_mu = q.transpose() * &mu;
    let qt_psi: Vec<DVector<f64>> = psis.iter().map(|(p, _)| q.transpose() * p).collect();
    // A single held-out point carries mass 1/N; for population tables, a whole atom.
    let removal = |w: f64| g.sample_size().map_or(w, |n| 1.0 / n as f64);

    let solve = |shift: f64, rhs: &DVector<f64>| -> Option<DVector<f64>> {
        let mut out = rhs.clone();
        for (o, l) in out.iter_mut().zip(eig.eigenvalues.iter()) {
            let den = l + shift;
            if den.abs() <= 1e-300 {
                return None;
            }
            *o /= den;
        }
        Some(out)
    };

    let mut scores = Vec::with_capacity(lambda_grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (gi, &lambda) in lambda_grid.iter().enumerate() {
        let mut score = 0.0;
        let mut ok = true;
        for (psi_q, (_, w)) in qt_psi.iter().zip(&psis) {
            let m = removal(*w);
            if m >= 1.0 {
                ok = false;
                break;
            }
            // B = C + λ(1 − m)I; θ_{−i} = (1 − m)·(B − m ψψᵀ)^{-1} μ (in the eigenbasis).
            let (Some(u), Some(v)) = (solve(lambda * (1.0 - m), &qt_mu), solve(lambda * (1.0 - m), psi_q)) else {
                ok = false;
                break;
            };
            let den = 1.0 - m * psi_q.dot(&v);
            if den.abs() <= 1e-12 {
                ok = false;
                break;
            }
            let theta = (&u + &v * (m * psi_q.dot(&u) / den)) * (1.0 - m);
            let r = psi_q.dot(&theta);
            score += w * (0.5 * r * r - qt_mu.dot(&theta));
        }
        let score = if ok && score.is_finite() { score } else { f64::NAN };
        scores.push(score);
        if score.is_finite() && best.is_none_or(|(_, b)| score < b) {
            best = Some((gi, score));
        }
    }
    let (gi, _) = best.ok_or_else(|| Error::EstimationFailure("kernel system singular at every grid point".into()))?;
    let lambda = lambda_grid[gi];
    let theta_q = solve(lambda, &qt_mu).ok_or_else(|| Error::EstimationFailure("singular kernel system".into()))?;
    let theta = (q * theta_q).iter().copied().collect();
    Ok(DensityRatioModel {
        inner: Inner::Kulsif { features: psi_table, theta, lambda, loo_scores: scores },
        clip_floor,
    })
}
