//! Bias-vs-N sweeps and estimator-variant comparisons.

use std::sync::Arc;
use std::time::Instant;

use offeval_core::bias::{bootstrap_bias, corrected};
use offeval_core::dist::WeightedEmpirical;
use offeval_core::env::{build_dataset, population_table, FeatureTable, FragmentChainEnv, MdpSpec, PropertyOracle};
use offeval_core::estimators::{decompose, PipelineConfig, PolicyPipeline};
use offeval_core::models::FitConfig;
use offeval_core::policy::{LearnerConfig, Policy};
use offeval_core::ratio::RatioParams;
use offeval_core::seed::derive_seed;
use rayon::prelude::*;

use crate::config::{BehaviorParams, ExperimentConfig, Variant};
use crate::HarnessError;

/// One (N, repeat, ν, variant) measurement. Value fields are `None` when the
/// stage producing them failed; `error` then says why.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub exp: String,
    pub variant: String,
    pub n: usize,
    pub nu: f64,
    pub lambda: f64,
    pub repeat: usize,
    /// `J(Ĝ, Ĝ)`.
    pub j_hat_hat: Option<f64>,
    /// `J(Ĝ, Ĝ_test)`, with the exact G table as default test argument.
    pub j_hat_test: Option<f64>,
    /// `J*(π̂)`.
    pub j_star: Option<f64>,
    pub boot_bias: Option<f64>,
    pub corrected: Option<f64>,
    pub misspec: Option<f64>,
    pub reusing: Option<f64>,
    pub ms: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    /// `J(Ĝ, Ĝ) − J*(π̂)`.
    pub fn total(&self) -> Option<f64> {
        Some(self.j_hat_hat? - self.j_star?)
    }

    /// `|misspec + reusing − total|`, when all three are present.
    pub fn accounting_gap(&self) -> Option<f64> {
        Some((self.misspec? + self.reusing? - self.total()?).abs())
    }
}

/// Everything derived from the environment block, shared by all rows.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub env: FragmentChainEnv,
    pub behavior: Policy,
    pub population: Arc<WeightedEmpirical>,
    features: Arc<FeatureTable>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let env = FragmentChainEnv::new(&cfg.env).map_err(|e| HarnessError::Config(format!("env: {e}")))?;
        let behavior = match cfg.behavior {
            BehaviorParams::Uniform => Policy::uniform(env.spec()),
            BehaviorParams::Random { seed } => Policy::random(env.spec(), seed),
        };
        let population = Arc::new(population_table(env.spec(), env.oracle(), &behavior)?);
        let features = env.feature_table(cfg.predictor.features);
        Ok(Experiment { cfg, env, behavior, population, features })
    }

    pub fn spec(&self) -> &Arc<MdpSpec> {
        self.env.spec()
    }

    pub fn oracle(&self) -> &PropertyOracle {
        self.env.oracle()
    }

    /// The pipeline `J(G1, G2)` of one variant at behavior-cloning strength `nu`.
    pub fn pipeline(&self, variant: Variant, nu: f64) -> Result<PolicyPipeline, HarnessError> {
        let learner = LearnerConfig::from_params(self.spec(), &self.cfg.policy)
            .map_err(|e| HarnessError::Config(format!("policy: {e}")))?
            .with_nu(nu);
        let lambda = if variant.shift { self.cfg.shift_lambda } else { 0.0 };
        let ratio = match (&self.cfg.ratio, variant.needs_ratio()) {
            (Some(r), _) => r.clone(),
            (None, false) => RatioParams::default(),
            (None, true) => return Err(HarnessError::Config(format!("variant {variant} needs a ratio block"))),
        };
        let cfg = PipelineConfig {
            estimator: variant.estimator,
            predictor: FitConfig { lambda, ..self.cfg.predictor.clone() },
            learner,
            ratio,
        };
        Ok(PolicyPipeline::new(self.spec().clone(), self.features.clone(), cfg, Some(self.population.clone()))?)
    }

    /// Training sample for (N, repeat); identical across variants and ν.
    pub fn train_sample(&self, n: usize, repeat: usize) -> Result<WeightedEmpirical, HarnessError> {
        let seed = derive_seed(self.cfg.seed, &format!("train-{n}"), repeat as u64);
        Ok(WeightedEmpirical::empirical(&build_dataset(self.spec(), self.oracle(), &self.behavior, n, seed)?)?)
    }

    fn test_sample(&self, n: usize, repeat: usize) -> Result<Arc<WeightedEmpirical>, HarnessError> {
        match self.cfg.test_size {
            None => Ok(self.population.clone()),
            Some(m) => {
                let seed = derive_seed(self.cfg.seed, &format!("test-{n}"), repeat as u64);
                let sample = build_dataset(self.spec(), self.oracle(), &self.behavior, m, seed)?;
                Ok(Arc::new(WeightedEmpirical::empirical(&sample)?))
            }
        }
    }

    fn measure(&self, pipeline: &PolicyPipeline, variant: Variant, n: usize, repeat: usize, row: &mut ResultRow) -> Result<(), HarnessError> {
        let g = self.train_sample(n, repeat)?;
        let test = self.test_sample(n, repeat)?;
        let (report, _) = decompose(self.oracle(), pipeline, &g, &test)?;
        row.j_hat_hat = Some(report.value);
        row.j_hat_test = report.j_hat_test;
        row.j_star = report.j_star;
        row.misspec = report.misspec;
        row.reusing = report.reusing;
        if variant.bootstrap {
            let seed = derive_seed(self.cfg.seed, &format!("bootstrap-{n}"), repeat as u64);
            let bias = bootstrap_bias(pipeline, &g, None, self.cfg.bootstrap_replicates, seed)?;
            row.boot_bias = Some(bias.estimate);
            row.corrected = Some(corrected(pipeline, &g, &bias)?);
        }
        Ok(())
    }

    fn row(&self, pipeline: &PolicyPipeline, variant: Variant, nu: f64, n: usize, repeat: usize) -> ResultRow {
        let start = Instant::now();
        let mut row = ResultRow {
            exp: self.cfg.name.clone(),
            variant: variant.to_string(),
            n,
            nu,
            lambda: pipeline.config().predictor.lambda,
            repeat,
            j_hat_hat: None,
            j_hat_test: None,
            j_star: None,
            boot_bias: None,
            corrected: None,
            misspec: None,
            reusing: None,
            ms: None,
            error: None,
        };
        if let Err(e) = self.measure(pipeline, variant, n, repeat, &mut row) {
            row.error = Some(e.to_string());
        }
        if self.cfg.record_timing {
            row.ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        row
    }

    fn run(&self, plan: &[(Variant, f64)]) -> Result<Vec<ResultRow>, HarnessError> {
        let pipelines = plan.iter().map(|&(v, nu)| self.pipeline(v, nu)).collect::<Result<Vec<_>, _>>()?;
        let mut tasks = Vec::new();
        for &n in &self.cfg.n_grid {
            for p in 0..plan.len() {
                for r in 0..self.cfg.repeats {
                    tasks.push((n, p, r));
                }
            }
        }
        Ok(tasks
            .into_par_iter()
            .map(|(n, p, r)| self.row(&pipelines[p], plan[p].0, plan[p].1, n, r))
            .collect())
    }
}

/// One row per (N, repeat) for the configured variant at `policy.nu`.
pub fn run_bias_vs_n(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let exp = Experiment::new(cfg.clone())?;
    exp.run(&[(cfg.sweep_variant(), cfg.policy.nu)])
}

/// One row per (N, ν, variant, repeat) over `nu_grid × variants`.
pub fn run_reduction_comparison(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let exp = Experiment::new(cfg.clone())?;
    let variants = cfg.comparison_variants()?;
    let plan: Vec<(Variant, f64)> = cfg.nu_grid.iter().flat_map(|&nu| variants.iter().map(move |&v| (v, nu))).collect();
    exp.run(&plan)
}
