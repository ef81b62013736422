//! Plug-in, importance-sampling and doubly-robust performance estimators, and
//! the policy-evaluation pipeline `J(G1, G2)` they are combined into.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bias::BivariateFunctional;
use crate::dist::WeightedEmpirical;
use crate::env::{final_distribution, sample_trajectories, true_performance, FeatureTable, MdpSpec, PropertyOracle};
use crate::error::{Error, Result};
use crate::models::{fit, fit_weighted, FitConfig, Predictor};
use crate::policy::{learn, Learned, LearnerConfig, Policy};
use crate::ratio::{exact_ratio, fit_kulsif, DensityRatioModel, RatioKind, RatioParams};
use crate::seed::Fingerprint;

/// Default rollout count of [`j_pi_mc`].
pub const DEFAULT_MC_TRAJECTORIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    #[default]
    Pi,
    Is,
    Dr,
}

/// `J_PI(π, f) = E^π f(S_H)`, exact.
pub fn j_pi(spec: &MdpSpec, policy: &Policy, f: &Predictor) -> Result<f64> {
    j_pi_values(spec, policy, &f.predict_all(spec.valid_states())?)
}

/// [`j_pi`] with predictor values aligned with the valid states.
pub fn j_pi_values(spec: &MdpSpec, policy: &Policy, values: &[f64]) -> Result<f64> {
    let p = final_distribution(spec, policy)?;
    Ok(p.iter().zip(values).map(|(p, v)| p * v).sum())
}

/// Monte-Carlo `J_PI` over `n_traj` rollouts: `(mean, standard error)`.
pub fn j_pi_mc(spec: &MdpSpec, policy: &Policy, f: &Predictor, n_traj: usize, rng_seed: u64) -> Result<(f64, f64)> {
    if n_traj < 2 {
        return Err(Error::invalid("Monte-Carlo evaluation needs at least two trajectories"));
    }
    let trajs = sample_trajectories(spec, policy, n_traj, rng_seed)?;
    let ys = trajs.iter().map(|t| f.predict(t.final_state())).collect::<Result<Vec<_>>>()?;
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// `J_IS = E_{S∼g}[w(S)·f*(S)]`.
pub fn j_is(w: &DensityRatioModel, g: &WeightedEmpirical) -> Result<f64> {
    g.try_expect(|a| Ok(w.eval(a.state)? * a.label))
}

/// `J_DR = E_{S∼g}[w(S)·(f*(S) − f(S))] + J_PI(π, f)`.
pub fn j_dr(spec: &MdpSpec, policy: &Policy, w: &DensityRatioModel, f: &Predictor, g: &WeightedEmpirical) -> Result<f64> {
    let correction = g.try_expect(|a| Ok(w.eval(a.state)? * (a.label - f.predict(a.state)?)))?;
    Ok(correction + j_pi(spec, policy, f)?)
}

/// Total variation distance between two aligned probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub estimator: EstimatorKind,
    /// Predictor settings; `predictor.lambda` is the covariate-shift exponent.
    pub predictor: FitConfig,
    pub learner: LearnerConfig,
    pub ratio: RatioParams,
}

/// What the first argument determines: the λ = 0 predictor and the learned policy.
#[derive(Debug, Clone)]
pub struct FirstStage {
    pub predictor: Predictor,
    pub learned: Learned,
}

/// `J(G1, G2)`: predictor(G1) → policy(G1) → ratio(π, G2) → weighted
/// predictor refit on G2 → estimator on G2.
///
/// With the plug-in estimator and `λ = 0` this is `J_PI(π(G1), f(G2))`.
#[derive(Debug, Clone)]
pub struct PolicyPipeline {
    spec: Arc<MdpSpec>,
    features: Arc<FeatureTable>,
    population: Option<Arc<WeightedEmpirical>>,
    cfg: PipelineConfig,
    id: u64,
}

impl PolicyPipeline {
    /// `population` is the exact data distribution G; the exact ratio kind
    /// uses it as denominator.
    pub fn new(
        spec: Arc<MdpSpec>,
        features: Arc<FeatureTable>,
        cfg: PipelineConfig,
        population: Option<Arc<WeightedEmpirical>>,
    ) -> Result<Self> {
        cfg.predictor.validate()?;
        cfg.learner.validate()?;
        let pipeline = PolicyPipeline { spec, features, population, id: 0, cfg };
        if pipeline.needs_ratio() && pipeline.cfg.ratio.kind == RatioKind::Exact && pipeline.population.is_none() {
            return Err(Error::invalid("the exact ratio needs the population table"));
        }
        let id = pipeline.fingerprint();
        Ok(PolicyPipeline { id, ..pipeline })
    }

    fn fingerprint(&self) -> u64 {
        let l = &self.cfg.learner;
        let mut fp = Fingerprint::new()
            .str("policy-pipeline")
            .str(&format!("{:?}", self.cfg.estimator))
            .u64(self.cfg.predictor.fingerprint())
            .str(self.features.id())
            .str(&format!("{:?}", l.kind))
            .f64(l.nu)
            .u64(l.steps as u64)
            .f64(l.lr)
            .f64(l.temperature)
            .u64(l.candidates.as_ref().map_or(0, |c| c.len() as u64))
            .str(&format!("{:?}", self.cfg.ratio.kind))
            .f64(self.cfg.ratio.clip_floor);
        for &x in &self.cfg.ratio.lambda_grid {
            fp = fp.f64(x);
        }
        if let Some(p) = &self.population {
            fp = fp.u64(p.fingerprint());
        }
        fp.finish()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &Arc<MdpSpec> {
        &self.spec
    }

    pub fn features(&self) -> &Arc<FeatureTable> {
        &self.features
    }

    fn needs_ratio(&self) -> bool {
        self.cfg.estimator != EstimatorKind::Pi || self.cfg.predictor.lambda > 0.0
    }

    /// Fits the λ = 0 predictor on `g1` and learns the policy from it.
    pub fn first_stage(&self, g1: &WeightedEmpirical) -> Result<FirstStage> {
        let base = FitConfig { lambda: 0.0, ..self.cfg.predictor.clone() };
        let predictor = fit(g1, &self.features, &base)?;
        let learned = learn(g1, &predictor, &self.spec, &self.cfg.learner)?;
        Ok(FirstStage { predictor, learned })
    }

    fn ratio(&self, stage: &FirstStage, g2: &WeightedEmpirical) -> Result<DensityRatioModel> {
        let policy = &stage.learned.policy;
        match self.cfg.ratio.kind {
            RatioKind::Exact => exact_ratio(&self.spec, policy, self.population.as_ref().expect("checked in new")),
            RatioKind::Constant => Ok(DensityRatioModel::constant(1.0)),
            RatioKind::Kulsif => {
                if g2.is_signed() {
                    return Err(Error::Unsupported("KuLSIF ratio with a signed second argument".into()));
                }
                let p = final_distribution(&self.spec, policy)?;
                let target: Vec<_> = self.spec.valid_states().iter().copied().zip(p).collect();
                let kernel = stage.predictor.kernel_features();
                fit_kulsif(g2, &target, &kernel, &self.cfg.ratio.lambda_grid, self.cfg.ratio.clip_floor)
            }
        }
    }

    /// Second stage: everything that depends on `g2`.
    pub fn evaluate(&self, stage: &FirstStage, g2: &WeightedEmpirical) -> Result<f64> {
        let policy = &stage.learned.policy;
        if !self.needs_ratio() {
            let f = fit(g2, &self.features, &self.cfg.predictor)?;
            return j_pi(&self.spec, policy, &f);
        }
        let w = self.ratio(stage, g2)?;
        match self.cfg.estimator {
            EstimatorKind::Is => j_is(&w, g2),
            EstimatorKind::Pi => {
                let f = fit_weighted(g2, &w, self.cfg.predictor.lambda, &self.features, &self.cfg.predictor)?;
                j_pi(&self.spec, policy, &f)
            }
            EstimatorKind::Dr => {
                let f = fit_weighted(g2, &w, self.cfg.predictor.lambda, &self.features, &self.cfg.predictor)?;
                j_dr(&self.spec, policy, &w, &f, g2)
            }
        }
    }
}

impl BivariateFunctional for PolicyPipeline {
    fn eval(&self, g1: &WeightedEmpirical, g2: &WeightedEmpirical) -> Result<f64> {
        let stage = self.first_stage(g1)?;
        self.evaluate(&stage, g2)
    }

    fn eval_many(&self, g1: &WeightedEmpirical, g2s: &[&WeightedEmpirical]) -> Result<Vec<f64>> {
        let stage = self.first_stage(g1)?;
        g2s.iter().map(|g2| self.evaluate(&stage, g2)).collect()
    }

    fn accepts_signed(&self) -> bool {
        !(self.needs_ratio() && self.cfg.ratio.kind == RatioKind::Kulsif)
    }

    fn id(&self) -> u64 {
        self.id
    }
}

/// Estimator output with optional bias decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: EstimatorKind,
    /// `J(Ĝ, Ĝ)`.
    pub value: f64,
    /// Present only for Monte-Carlo evaluations.
    pub stderr: Option<f64>,
    pub config_hash: u64,
    pub sample_hash: u64,
    /// `J(Ĝ, Ĝ_test)`, or `J(Ĝ, G)` when the test argument is the population.
    pub j_hat_test: Option<f64>,
    /// `J*(π̂)`.
    pub j_star: Option<f64>,
    /// `J(Ĝ, Ĝ_test) − J*(π̂)`.
    pub misspec: Option<f64>,
    /// `J(Ĝ, Ĝ) − J(Ĝ, Ĝ_test)`.
    pub reusing: Option<f64>,
    pub boot_bias: Option<f64>,
    pub corrected: Option<f64>,
    /// The test sample was smaller than ten times the training sample.
    pub small_test: bool,
}

impl EvalReport {
    /// `J(Ĝ, Ĝ) − J*(π̂)`.
    pub fn total(&self) -> Option<f64> {
        self.j_star.map(|j| self.value - j)
    }
}

/// Measures both biases of the pipeline on one training sample.
///
/// `g_test` should be at least ten times larger than `g_train`, or the exact
/// population table; otherwise the report is flagged.
pub fn decompose(
    oracle: &PropertyOracle,
    pipeline: &PolicyPipeline,
    g_train: &WeightedEmpirical,
    g_test: &WeightedEmpirical,
) -> Result<(EvalReport, FirstStage)> {
    let stage = pipeline.first_stage(g_train)?;
    let value = pipeline.evaluate(&stage, g_train)?;
    let test = pipeline.evaluate(&stage, g_test)?;
    let j_star = true_performance(&pipeline.spec, oracle, &stage.learned.policy)?;
    let small_test = match (g_train.sample_size(), g_test.sample_size()) {
        (Some(n), Some(m)) => m < 10 * n,
        _ => false,
    };
    let report = EvalReport {
        kind: pipeline.cfg.estimator,
        value,
        stderr: None,
        config_hash: pipeline.id,
        sample_hash: g_train.fingerprint(),
        j_hat_test: Some(test),
        j_star: Some(j_star),
        misspec: Some(test - j_star),
        reusing: Some(value - test),
        boot_bias: None,
        corrected: None,
        small_test,
    };
    Ok((report, stage))
}
