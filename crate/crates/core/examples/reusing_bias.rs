//! Decomposes the error of a reused estimate and applies the bootstrap correction.

use std::sync::Arc;

use offeval_core::bias::{bootstrap_bias, corrected};
use offeval_core::dist::WeightedEmpirical;
use offeval_core::env::{build_dataset, build_fragment_chain, population_table, FeatureKind, TeacherKind};
use offeval_core::estimators::{decompose, EstimatorKind, PipelineConfig, PolicyPipeline};
use offeval_core::models::FitConfig;
use offeval_core::policy::{CandidateSet, LearnerConfig, Policy};
use offeval_core::ratio::RatioParams;

fn main() -> offeval_core::Result<()> {
    let env = build_fragment_chain(4, 2, 0.3, TeacherKind::Linear, 27)?;
    let spec = env.spec().clone();
    let behavior = Policy::uniform(&spec);
    let population = Arc::new(population_table(&spec, env.oracle(), &behavior)?);
    let cfg = PipelineConfig {
        estimator: EstimatorKind::Pi,
        predictor: FitConfig::linear(FeatureKind::Counts, 1e-6),
        learner: LearnerConfig::argmax(Arc::new(CandidateSet::random(&spec, 8, 0)?), 0.0),
        ratio: RatioParams::default(),
    };
    let pipeline =
        PolicyPipeline::new(spec.clone(), env.feature_table(FeatureKind::Counts), cfg, Some(population.clone()))?;

    let g = WeightedEmpirical::empirical(&build_dataset(&spec, env.oracle(), &behavior, 256, 1)?)?;
    let (report, _) = decompose(env.oracle(), &pipeline, &g, &population)?;
    let bias = bootstrap_bias(&pipeline, &g, None, 20, 1)?;
    println!("J(Ĝ,Ĝ)    = {:.6}", report.value);
    println!("J*(π̂)     = {:.6}", report.j_star.unwrap_or(f64::NAN));
    println!("misspec   = {:.6}", report.misspec.unwrap_or(f64::NAN));
    println!("reusing   = {:.6}", report.reusing.unwrap_or(f64::NAN));
    println!("bootstrap = {:.6}", bias.estimate);
    println!("corrected = {:.6}", corrected(&pipeline, &g, &bias)?);
    Ok(())
}
