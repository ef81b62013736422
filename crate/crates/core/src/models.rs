//! Property predictors trained on (possibly signed, possibly reweighted)
//! empirical distributions. All training is full-batch and deterministic.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dist::WeightedEmpirical;
use crate::env::{FeatureKind, FeatureTable, StateId};
use crate::error::{Error, Result};
use crate::ratio::DensityRatioModel;
use crate::seed::{self, Fingerprint};

/// Ridge strength enforced when fitting on signed measures.
pub const SIGNED_MIN_RIDGE: f64 = 1e-6;
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    LinearRidge,
    Mlp,
}

/// Predictor training settings (`predictor.*` config keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub kind: ModelKind,
    pub features: FeatureKind,
    pub ridge: f64,
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    /// Exponent on the density ratio in covariate-shift refits.
    pub lambda: f64,
    pub init_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            kind: ModelKind::LinearRidge,
            features: FeatureKind::Full,
            ridge: 1e-6,
            hidden: 32,
            steps: 5000,
            lr: 1e-2,
            lambda: 0.0,
            init_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn linear(features: FeatureKind, ridge: f64) -> Self {
        FitConfig { kind: ModelKind::LinearRidge, features, ridge, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::invalid("ridge strength must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("weight exponent must lie in [0, 1]"));
        }
        if self.kind == ModelKind::Mlp && (self.hidden == 0 || !(self.lr > 0.0)) {
            return Err(Error::invalid("mlp needs a positive width and learning rate"));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        Fingerprint::new()
            .str(&format!("{:?}/{:?}", self.kind, self.features))
            .f64(self.ridge)
            .u64(self.hidden as u64)
            .u64(self.steps as u64)
            .f64(self.lr)
            .f64(self.lambda)
            .u64(self.init_seed)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictorParams {
    Linear {
        theta: Vec<f64>,
    },
    /// `f(x) = w2·softplus(W1·x + b1) + b2`, `W1` stored row-major (`hidden × dim`).
    Mlp {
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    /// Weighted training loss reached (ridge term excluded).
    pub loss: f64,
    pub config_hash: u64,
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

/// A trained predictor `f(·)` over a fixed feature table.
#[derive(Debug, Clone)]
pub struct Predictor {
    features: Arc<FeatureTable>,
    params: PredictorParams,
    meta: FitMeta,
    cache: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PredictorJson {
    feature_map: String,
    params: PredictorParams,
    meta: FitMeta,
}

impl Predictor {
    pub fn new(features: Arc<FeatureTable>, params: PredictorParams, meta: FitMeta) -> Result<Self> {
        let dim = features.dim();
        match &params {
            PredictorParams::Linear { theta } if theta.len() != dim => {
                return Err(Error::contract(format!("expected {dim} coefficients, got {}", theta.len())))
            }
            PredictorParams::Mlp { hidden, w1, b1, w2, .. }
                if w1.len() != hidden * dim || b1.len() != *hidden || w2.len() != *hidden =>
            {
                return Err(Error::contract("mlp parameter shapes do not match"))
            }
            _ => {}
        }
        let mut p = Predictor { features, params, meta, cache: Vec::new() };
        p.cache = (0..p.features.states().len()).map(|i| p.eval_row(p.features.row_at(i))).collect();
        if p.cache.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("predictor is not finite on every state"));
        }
        Ok(p)
    }

    pub fn linear(features: Arc<FeatureTable>, theta: Vec<f64>) -> Result<Self> {
        Self::new(features, PredictorParams::Linear { theta }, FitMeta::default())
    }

    /// Lookup-table predictor via one-hot features; `predict(states[i]) = values[i]`.
    pub fn tabular(states: &[StateId], values: &[f64]) -> Result<Self> {
        let n = states.len();
        let rows = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let table = FeatureTable::new("onehot", states.to_vec(), rows)?;
        Self::linear(Arc::new(table), values.to_vec())
    }

    fn eval_row(&self, x: &[f64]) -> f64 {
        match &self.params {
            PredictorParams::Linear { theta } => dot(theta, x),
            PredictorParams::Mlp { hidden, w1, b1, w2, b2 } => {
                let d = x.len();
                let mut y = *b2;
                for j in 0..*hidden {
                    let z = b1[j] + dot(&w1[j * d..(j + 1) * d], x);
                    y += w2[j] * softplus(z);
                }
                y
            }
        }
    }

    pub fn predict(&self, state: StateId) -> Result<f64> {
        self.features.position(state).map(|p| self.cache[p]).ok_or(Error::UnknownState(state))
    }

    pub fn predict_all(&self, states: &[StateId]) -> Result<Vec<f64>> {
        states.iter().map(|&s| self.predict(s)).collect()
    }

    pub fn params(&self) -> &PredictorParams {
        &self.params
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn features(&self) -> &Arc<FeatureTable> {
        &self.features
    }

    /// Features for kernel methods: hidden activations of an MLP, else the raw features.
    pub fn kernel_features(&self) -> Arc<FeatureTable> {
        match &self.params {
            PredictorParams::Linear { .. } => self.features.clone(),
            PredictorParams::Mlp { hidden, w1, b1, .. } => {
                let d = self.features.dim();
                let rows = (0..self.features.states().len())
                    .map(|i| {
                        let x = self.features.row_at(i);
                        (0..*hidden).map(|j| softplus(b1[j] + dot(&w1[j * d..(j + 1) * d], x))).collect()
                    })
                    .collect();
                let id = format!("{}/hidden", self.features.id());
                Arc::new(FeatureTable::new(id, self.features.states().to_vec(), rows).expect("finite activations"))
            }
        }
    }

    pub fn to_json(&self) -> String {
        let doc = PredictorJson {
            feature_map: self.features.id().to_string(),
            params: self.params.clone(),
            meta: self.meta.clone(),
        };
        serde_json::to_string(&doc).expect("predictor serializes")
    }

    /// Restores a predictor; `features` must be the table it was trained on.
    pub fn from_json(json: &str, features: Arc<FeatureTable>) -> Result<Self> {
        let doc: PredictorJson = serde_json::from_str(json).map_err(|e| Error::invalid(e.to_string()))?;
        if doc.feature_map != features.id() {
            return Err(Error::invalid(format!(
                "predictor was trained on feature map {:?}, got {:?}",
                doc.feature_map,
                features.id()
            )));
        }
        Self::new(features, doc.params, doc.meta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Fits `argmin_f E_{S∼g}(f(S) − label)²` (+ ridge).
pub fn fit(g: &WeightedEmpirical, features: &Arc<FeatureTable>, cfg: &FitConfig) -> Result<Predictor> {
    let weights = g.weights().to_vec();
    fit_with_weights(g, &weights, features, cfg)
}

/// Fits with atom weights `g(s)·max(w(s), 0)^λ`.
pub fn fit_weighted(
    g: &WeightedEmpirical,
    ratio: &DensityRatioModel,
    lambda_exp: f64,
    features: &Arc<FeatureTable>,
    cfg: &FitConfig,
) -> Result<Predictor> {
    if !(0.0..=1.0).contains(&lambda_exp) {
        return Err(Error::invalid("weight exponent must lie in [0, 1]"));
    }
    let mut weights = Vec::with_capacity(g.len());
    for (atom, w) in g.iter() {
        let r = ratio.eval(atom.state)?.max(0.0);
        weights.push(w * r.powf(lambda_exp));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::DegenerateWeights);
    }
    fit_with_weights(g, &weights, features, cfg)
}

fn fit_with_weights(
    g: &WeightedEmpirical,
    weights: &[f64],
    features: &Arc<FeatureTable>,
    cfg: &FitConfig,
) -> Result<Predictor> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::EmptySample);
    }
    let signed = g.is_signed() || weights.iter().any(|&w| w < 0.0);
    let ridge = if signed { cfg.ridge.max(SIGNED_MIN_RIDGE) } else { cfg.ridge };
    let rows = g.atoms().iter().map(|a| features.row(a.state)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<f64> = g.atoms().iter().map(|a| a.label).collect();
    match cfg.kind {
        ModelKind::LinearRidge => fit_linear(features, &rows, &labels, weights, ridge, cfg),
        ModelKind::Mlp => fit_mlp(features, &rows, &labels, weights, ridge, cfg),
    }
}

fn weighted_loss(pred: impl Fn(usize) -> f64, labels: &[f64], weights: &[f64]) -> f64 {
    labels.iter().zip(weights).enumerate().map(|(i, (y, w))| w * (pred(i) - y).powi(2)).sum()
}

fn fit_linear(
    features: &Arc<FeatureTable>,
    rows: &[&[f64]],
    labels: &[f64],
    weights: &[f64],
    ridge: f64,
    cfg: &FitConfig,
) -> Result<Predictor> {
    let d = features.dim();
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for ((x, &y), &w) in rows.iter().zip(labels).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for i in 0..d {
            let wx = w * x[i];
            b[i] += wx * y;
            for j in i..d {
                a[(i, j)] += wx * x[j];
            }
        }
    }
    for i in 0..d {
        a[(i, i)] += ridge;
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    let theta = solve_symmetric(a, &b)?;
    let loss = weighted_loss(|i| dot(&theta, rows[i]), labels, weights);
    let meta = FitMeta { loss, config_hash: cfg.fingerprint(), loss_trace: Vec::new() };
    Predictor::new(features.clone(), PredictorParams::Linear { theta }, meta)
}

/// Solves `A x = b` for symmetric (possibly indefinite) `A` by eigendecomposition.
pub(crate) fn solve_symmetric(a: DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::new(a);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || min / max <= SINGULAR_RATIO {
        return Err(Error::Singular { ratio: if max > 0.0 { min / max } else { 0.0 } });
    }
    let vt_b = eig.eigenvectors.transpose() * b;
    let scaled = DVector::from_iterator(vt_b.len(), vt_b.iter().zip(eig.eigenvalues.iter()).map(|(x, l)| x / l));
    Ok((eig.eigenvectors * scaled).iter().copied().collect())
}

fn fit_mlp(
    features: &Arc<FeatureTable>,
    rows: &[&[f64]],
    labels: &[f64],
    weights: &[f64],
    ridge: f64,
    cfg: &FitConfig,
) -> Result<Predictor> {
    let d = features.dim();
    let h = cfg.hidden;
    let mut rng = seed::rng(seed::derive_seed(cfg.init_seed, "mlp-init", 0));
    let mut normal = |scale: f64| -> f64 { scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) };
    let mut w1: Vec<f64> = (0..h * d).map(|_| normal(1.0 / (d.max(1) as f64).sqrt())).collect();
    let mut b1 = vec![0.0; h];
    let mut w2: Vec<f64> = (0..h).map(|_| normal(1.0 / (h as f64).sqrt())).collect();
    let mut b2 = 0.0;

    let n = rows.len();
    let mut z = vec![0.0; n * h];
    let mut act = vec![0.0; n * h];
    let mut gw1 = vec![0.0; h * d];
    let mut gb1 = vec![0.0; h];
    let mut gw2 = vec![0.0; h];
    let mut trace = Vec::with_capacity(cfg.steps + 1);

    let forward = |w1: &[f64], b1: &[f64], w2: &[f64], b2: f64, z: &mut [f64], act: &mut [f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut y = b2;
                for j in 0..h {
                    let zz = b1[j] + dot(&w1[j * d..(j + 1) * d], rows[i]);
                    z[i * h + j] = zz;
                    let a = softplus(zz);
                    act[i * h + j] = a;
                    y += w2[j] * a;
                }
                y
            })
            .collect()
    };

    for _ in 0..cfg.steps {
        let out = forward(&w1, &b1, &w2, b2, &mut z, &mut act);
        trace.push(weighted_loss(|i| out[i], labels, weights));
        gw1.iter_mut().for_each(|x| *x = 0.0);
        gb1.iter_mut().for_each(|x| *x = 0.0);
        gw2.iter_mut().for_each(|x| *x = 0.0);
        let mut gb2 = 0.0;
        for i in 0..n {
            let r = 2.0 * weights[i] * (out[i] - labels[i]);
            if r == 0.0 {
                continue;
            }
            gb2 += r;
            for j in 0..h {
                gw2[j] += r * act[i * h + j];
                let dz = r * w2[j] * sigmoid(z[i * h + j]);
                gb1[j] += dz;
                for (k, xk) in rows[i].iter().enumerate() {
                    gw1[j * d + k] += dz * xk;
                }
            }
        }
        let lr = cfg.lr;
        for (p, g) in w1.iter_mut().zip(&gw1) {
            *p -= lr * (g + 2.0 * ridge * *p);
        }
        for (p, g) in b1.iter_mut().zip(&gb1) {
            *p -= lr * (g + 2.0 * ridge * *p);
        }
        for (p, g) in w2.iter_mut().zip(&gw2) {
            *p -= lr * (g + 2.0 * ridge * *p);
        }
        b2 -= lr * (gb2 + 2.0 * ridge * b2);
    }
    let out = forward(&w1, &b1, &w2, b2, &mut z, &mut act);
    let loss = weighted_loss(|i| out[i], labels, weights);
    trace.push(loss);
    let meta = FitMeta { loss, config_hash: cfg.fingerprint(), loss_trace: trace };
    Predictor::new(features.clone(), PredictorParams::Mlp { hidden: h, w1, b1, w2, b2 }, meta)
}
