//! Acceptance run: one PASS/FAIL line per criterion, then a single assertion
//! that every line passed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use offeval_core::bias::{
    bootstrap_bias, frechet_bias_at, oracle_bias, split_bias, DiscreteSampler, EnvSampler,
    PopulationSampler, TestFunctional,
};
use offeval_core::dist::{LabeledSample, WeightedEmpirical};
use offeval_core::env::{
    build_dataset, build_fragment_chain, final_distribution, population_table, true_performance, FeatureKind,
    FragmentChainEnv, MdpSpec, TeacherKind,
};
use offeval_core::estimators::{j_dr, j_is, j_pi, total_variation, EstimatorKind, PipelineConfig, PolicyPipeline};
use offeval_core::models::{fit, fit_weighted, FitConfig, Predictor};
use offeval_core::policy::{default_nu_grid, learn, CandidateSet, LearnerConfig, Policy};
use offeval_core::ratio::{exact_ratio, DensityRatioModel, RatioParams};
use offeval_core::seed::derive_seed;
use offeval_harness::output::csv_body;
use offeval_harness::presets;
use offeval_harness::{run_bias_vs_n, run_reduction_comparison};
use rayon::prelude::*;
use serde_json::json;

type Outcome = (bool, String);

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    cov / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

/// Skewed six-point population standardized to mean 0, variance 1.
fn scalar_population() -> DiscreteSampler {
    let raw = [0.0, 1.0, 2.0, 3.0, 5.0, 8.0];
    let mean = raw.iter().sum::<f64>() / 6.0;
    let sd = (raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0).sqrt();
    let values: Vec<f64> = raw.iter().map(|x| (x - mean) / sd).collect();
    DiscreteSampler::scalar(&values, &[1.0 / 6.0; 6]).unwrap()
}

fn label_moments(g: &WeightedEmpirical) -> (f64, f64) {
    let m: f64 = g.iter().map(|(a, w)| w * a.label).sum();
    let v: f64 = g.iter().map(|(a, w)| w * (a.label - m).powi(2)).sum();
    (m, v)
}

struct Instance {
    env: FragmentChainEnv,
    behavior: Policy,
    pipeline: PolicyPipeline,
}

impl Instance {
    fn new(teacher_seed: u64, stochasticity: f64, learner: impl FnOnce(&MdpSpec) -> LearnerConfig) -> Self {
        let env = build_fragment_chain(4, 2, stochasticity, TeacherKind::Linear, teacher_seed).unwrap();
        let spec = env.spec().clone();
        let behavior = Policy::uniform(&spec);
        let population = Arc::new(population_table(&spec, env.oracle(), &behavior).unwrap());
        let cfg = PipelineConfig {
            estimator: EstimatorKind::Pi,
            predictor: FitConfig::linear(FeatureKind::Counts, 1e-6),
            learner: learner(&spec),
            ratio: RatioParams::default(),
        };
        let pipeline =
            PolicyPipeline::new(spec, env.feature_table(FeatureKind::Counts), cfg, Some(population)).unwrap();
        Instance { env, behavior, pipeline }
    }

    /// Linear teacher and model, argmax over 8 random deterministic candidates.
    fn winners_curse() -> Self {
        Self::new(27, 0.3, |spec| LearnerConfig::argmax(Arc::new(CandidateSet::random(spec, 8, 0).unwrap()), 0.0))
    }

    /// Smooth learner for the numerical-derivative comparison.
    fn softmax() -> Self {
        Self::new(112, 0.0, |_| LearnerConfig::softmax(200, 0.5, 1.0, 0.0))
    }

    fn sampler(&self) -> EnvSampler {
        EnvSampler::new(self.env.spec().clone(), self.env.oracle().clone(), self.behavior.clone()).unwrap()
    }

    fn sample(&self, n: usize, seed: u64) -> WeightedEmpirical {
        WeightedEmpirical::empirical(&build_dataset(self.env.spec(), self.env.oracle(), &self.behavior, n, seed).unwrap())
            .unwrap()
    }
}

fn accounting_identity() -> Outcome {
    let sweep = presets::config(presets::winners_curse(), json!({"n_grid": [32, 128, 512], "repeats": 4, "bootstrap": true}))
        .unwrap();
    let compare = presets::config(
        presets::winners_curse(),
        json!({"n_grid": [64, 256], "repeats": 2, "variants": ["PI--", "PI+-", "PI-+", "DR--", "IS--"]}),
    )
    .unwrap();
    let mut rows = run_bias_vs_n(&sweep).unwrap();
    rows.extend(run_reduction_comparison(&compare).unwrap());
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.accounting_gap()).collect();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    (
        gaps.len() == rows.len() && worst <= 1e-10,
        format!("{} rows ({failed} failed), max |misspec + reusing − total| = {worst:.1e}", rows.len()),
    )
}

fn optimism() -> Outcome {
    let inst = Instance::winners_curse();
    let o = oracle_bias(&inst.pipeline, &inst.sampler(), 128, 4000, 2).unwrap();
    let se = o.stderr.unwrap();
    (o.estimate - 3.0 * se > 0.0, format!("b_128 = {:.4e} ± {se:.1e} (4000 datasets)", o.estimate))
}

fn first_order_law() -> Outcome {
    let inst = Instance::winners_curse();
    let sampler = inst.sampler();
    let ns = [64.0, 128.0, 256.0, 512.0];
    let reports: Vec<_> = ns.iter().map(|&n| oracle_bias(&inst.pipeline, &sampler, n as usize, 4000, 3).unwrap()).collect();
    let b: Vec<f64> = reports.iter().map(|r| r.estimate).collect();
    if b.iter().any(|&x| x <= 0.0) {
        return (false, format!("nonpositive bias in {b:?}"));
    }
    let slope = log_log_slope(&ns, &b);
    let listed: Vec<String> = reports.iter().map(|r| format!("{:.3e}±{:.1e}", r.estimate, r.stderr.unwrap())).collect();
    ((-1.4..=-0.6).contains(&slope), format!("slope {slope:.3}; b_N = {}", listed.join(", ")))
}

fn bootstrap_second_order() -> Outcome {
    // b̂ − s²/N with s² the unbiased sample variance has mean E[b̂] − b_N exactly.
    let pop = scalar_population();
    let j = TestFunctional::SquaredMean;
    let dev = |n: usize| {
        let d: Vec<f64> = (0..4000u64)
            .into_par_iter()
            .map(|i| {
                let g = pop.draw(n, derive_seed(40, &format!("data-{n}"), i)).unwrap();
                let b = bootstrap_bias(&j, &g, None, 10_000, derive_seed(40, &format!("boot-{n}"), i)).unwrap();
                b.estimate - label_moments(&g).1 / (n - 1) as f64
            })
            .collect();
        mean_se(&d)
    };
    let (d64, se64) = dev(64);
    let (d256, se256) = dev(256);
    let bands = (d64 + 1.0 / 4096.0).abs() <= 3.0 * se64 && (d256 + 1.0 / 65536.0).abs() <= 3.0 * se256;
    let ratio = d64.abs() / d256.abs();
    (
        bands && ratio >= 8.0,
        format!(
            "deviation N=64 {d64:.3e}±{se64:.1e} (closed form {:.3e}), N=256 {d256:.3e}±{se256:.1e} ({:.3e}); ratio {ratio:.1}",
            -1.0 / 4096.0,
            -1.0 / 65536.0
        ),
    )
}

fn split_means(j: TestFunctional, n: usize, frac: f64, tag: &str) -> (f64, f64) {
    let pop = scalar_population();
    let vals: Vec<f64> = (0..4000u64)
        .into_par_iter()
        .map(|i| {
            let g = pop.draw(n, derive_seed(50, tag, i)).unwrap();
            split_bias(&j, &g, frac, 1, derive_seed(51, tag, i)).unwrap().estimate
        })
        .collect();
    mean_se(&vals)
}

fn split_failure() -> Outcome {
    let pop = scalar_population();
    let (sq, sq_se) = split_means(TestFunctional::SquaredMean, 64, 0.5, "sq");
    let b_sq = oracle_bias(&TestFunctional::SquaredMean, &pop, 64, 4000, 52).unwrap();
    let (pr, pr_se) = split_means(TestFunctional::ProductMean, 64, 0.8, "prod");
    let b_pr = oracle_bias(&TestFunctional::ProductMean, &pop, 64, 4000, 53).unwrap();
    let ok_sq = sq.abs() <= 3.0 * sq_se && (b_sq.estimate - 1.0 / 64.0).abs() <= 3.0 * b_sq.stderr.unwrap();
    let ok_pr = pr + 3.0 * pr_se < 0.0 && b_pr.estimate - 3.0 * b_pr.stderr.unwrap() > 0.0;
    (
        ok_sq && ok_pr,
        format!(
            "squared mean: split {sq:.2e}±{sq_se:.1e} vs b_N {:.4e}; product mean (0.8): split {pr:.3e}±{pr_se:.1e} vs b_N {:.3e}",
            b_sq.estimate, b_pr.estimate
        ),
    )
}

fn split_when_linear() -> Outcome {
    // Split of a 512-point sample at 0.5 trains on |D| = 256: compare with b_256.
    let j = TestFunctional::LinearInSecond;
    let (m, se) = split_means(j, 512, 0.5, "linear");
    let b = oracle_bias(&j, &scalar_population(), 256, 4000, 54).unwrap();
    let dev = m - 1.0 / 256.0;
    (
        dev.abs() <= 3.0 * se,
        format!("split {m:.4e}±{se:.1e}, b_256 = 1/256 (oracle {:.4e}); deviation {dev:.1e}", b.estimate),
    )
}

fn random_instance(seed: u64) -> (FragmentChainEnv, Policy, Policy) {
    let env =
        build_fragment_chain(3 + (seed as usize % 2), 2, 0.1 * (seed % 4) as f64, TeacherKind::Quadratic, seed).unwrap();
    let behavior = Policy::random(env.spec(), 100 + seed);
    let target = Policy::random(env.spec(), 200 + seed);
    (env, behavior, target)
}

fn double_robustness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut reductions = true;
    for seed in 0..20 {
        let (env, behavior, target) = random_instance(seed);
        let spec = env.spec();
        let g = population_table(spec, env.oracle(), &behavior).unwrap();
        let sample = WeightedEmpirical::empirical(&build_dataset(spec, env.oracle(), &behavior, 150, seed).unwrap()).unwrap();
        let f_hat = fit(&sample, &env.feature_table(FeatureKind::Counts), &FitConfig::linear(FeatureKind::Counts, 1e-6)).unwrap();
        let f_star = Predictor::tabular(spec.valid_states(), env.oracle().values()).unwrap();
        let w_star = exact_ratio(spec, &target, &g).unwrap();
        let w_bad = DensityRatioModel::constant(1.3);
        let truth = true_performance(spec, env.oracle(), &target).unwrap();
        worst = worst.max((j_dr(spec, &target, &w_star, &f_hat, &g).unwrap() - truth).abs());
        worst = worst.max((j_dr(spec, &target, &w_bad, &f_star, &g).unwrap() - truth).abs());
        let zero_f = Predictor::tabular(spec.valid_states(), &vec![0.0; spec.valid_states().len()]).unwrap();
        reductions &= j_dr(spec, &target, &DensityRatioModel::constant(0.0), &f_hat, &sample).unwrap()
            == j_pi(spec, &target, &f_hat).unwrap();
        reductions &= j_dr(spec, &target, &w_bad, &zero_f, &sample).unwrap() == j_is(&w_bad, &sample).unwrap();
    }
    (
        worst <= 1e-10 && reductions,
        format!("max |J_DR − J*| = {worst:.1e} over 20 instances; w≡0 / f≡0 reductions bit-identical: {reductions}"),
    )
}

fn is_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (env, behavior, target) = random_instance(seed);
        let spec = env.spec();
        let g = population_table(spec, env.oracle(), &behavior).unwrap();
        let w = exact_ratio(spec, &target, &g).unwrap();
        worst = worst.max((j_is(&w, &g).unwrap() - true_performance(spec, env.oracle(), &target).unwrap()).abs());
    }
    (worst <= 1e-10, format!("max |J_IS − J*| = {worst:.1e} over 20 instances"))
}

fn frechet() -> Outcome {
    let pop = scalar_population();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let g = pop.draw(64, seed).unwrap();
        let want = label_moments(&g).1 / 64.0;
        for eps in [0.01, 0.1, 0.25, 0.5] {
            worst = worst.max((frechet_bias_at(&TestFunctional::SquaredMean, &g, eps).unwrap().estimate - want).abs());
        }
    }
    let inst = Instance::softmax();
    let (mut fr, mut bs) = (0.0, 0.0);
    for s in 0..20u64 {
        let g = inst.sample(256, 1000 + s);
        fr += frechet_bias_at(&inst.pipeline, &g, 0.01).unwrap().estimate / 20.0;
        bs += bootstrap_bias(&inst.pipeline, &g, None, 100, s).unwrap().estimate / 20.0;
    }
    let rel = (fr - bs).abs() / bs.abs();
    (
        worst <= 1e-10 && rel <= 0.3,
        format!("squared mean max error {worst:.1e}; policy functional Fréchet {fr:.4e} vs bootstrap {bs:.4e} ({:.0}% apart)", rel * 100.0),
    )
}

fn reduction_benefit() -> Outcome {
    let cfg = presets::config(
        presets::winners_curse(),
        json!({"n_grid": [256], "repeats": 20, "nu_grid": [0.0], "variants": ["PI--", "PI-+"]}),
    )
    .unwrap();
    let rows = run_reduction_comparison(&cfg).unwrap();
    let dev = |tag: &str, corrected: bool| {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.variant == tag)
            .map(|r| (if corrected { r.corrected.unwrap() } else { r.j_hat_hat.unwrap() } - r.j_star.unwrap()).abs())
            .collect();
        assert_eq!(errs.len(), 20);
        errs.iter().sum::<f64>() / 20.0
    };
    let (plain, corr) = (dev("PI--", false), dev("PI-+", true));
    (corr < plain, format!("mean |J(Ĝ,Ĝ) − J*| {plain:.5} (PI--) vs mean |corrected − J*| {corr:.5} (PI-+)"))
}

fn skewed_logits(spec: &MdpSpec) -> Vec<Vec<f64>> {
    (0..spec.horizon())
        .map(|h| {
            (0..spec.step(h).len())
                .flat_map(|local| (0..spec.num_actions()).map(move |a| if a == (h + local) % 2 { 2.0 } else { 0.0 }))
                .collect()
        })
        .collect()
}

fn covariate_shift() -> Outcome {
    let env = build_fragment_chain(4, 2, 0.0, TeacherKind::Quadratic, 0).unwrap();
    let spec = env.spec();
    let features = env.feature_table(FeatureKind::Counts);
    let cfg = FitConfig::linear(FeatureKind::Counts, 1e-6);
    let behavior = Policy::uniform(spec);
    let target = Policy::softmax(spec, &skewed_logits(spec), 0.5);
    let population = population_table(spec, env.oracle(), &behavior).unwrap();
    let w = exact_ratio(spec, &target, &population).unwrap();
    let p = final_distribution(spec, &target).unwrap();
    let mse = |f: &Predictor| -> f64 {
        spec.valid_states().iter().zip(&p).map(|(&s, q)| q * (f.predict(s).unwrap() - env.oracle().eval(s).unwrap()).powi(2)).sum()
    };
    let (mut m0, mut m1) = (0.0, 0.0);
    for seed in 0..50 {
        let g = WeightedEmpirical::empirical(&build_dataset(spec, env.oracle(), &behavior, 256, seed).unwrap()).unwrap();
        m0 += mse(&fit_weighted(&g, &w, 0.0, &features, &cfg).unwrap()) / 50.0;
        m1 += mse(&fit_weighted(&g, &w, 1.0, &features, &cfg).unwrap()) / 50.0;
    }
    (m1 <= m0, format!("target MSE λ=1 {m1:.4e} vs λ=0 {m0:.4e} (50 seeds)"))
}

fn cloning_trend() -> Outcome {
    let env = build_fragment_chain(4, 2, 0.2, TeacherKind::Quadratic, 0).unwrap();
    let spec = env.spec();
    let behavior = Policy::uniform(spec);
    let features = env.feature_table(FeatureKind::Full);
    let largest = *default_nu_grid().last().unwrap();
    let (mut tv0, mut tv1, mut j0, mut j1) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..20 {
        let data: LabeledSample = build_dataset(spec, env.oracle(), &behavior, 128, seed).unwrap();
        let g = WeightedEmpirical::empirical(&data).unwrap();
        let f = fit(&g, &features, &FitConfig::default()).unwrap();
        let marginal: std::collections::HashMap<usize, f64> = g.state_marginal().into_iter().collect();
        let marginal: Vec<f64> = spec.valid_states().iter().map(|s| marginal.get(s).copied().unwrap_or(0.0)).collect();
        for (nu, tv, j) in [(0.0, &mut tv0, &mut j0), (largest, &mut tv1, &mut j1)] {
            let pi = learn(&g, &f, spec, &LearnerConfig::softmax(200, 0.5, 1.0, nu)).unwrap().policy;
            *tv += total_variation(&final_distribution(spec, &pi).unwrap(), &marginal) / 20.0;
            *j += true_performance(spec, env.oracle(), &pi).unwrap() / 20.0;
        }
    }
    (
        tv1 <= tv0 && j1 <= j0 + 1e-9,
        format!("ν=0: TV {tv0:.4}, J* {j0:.4}; ν={largest}: TV {tv1:.4}, J* {j1:.4} (20 seeds)"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let body = merge_preset(json!({"n_grid": [32, 64], "repeats": 3, "nu_grid": [0.0, 1.0], "bootstrap_replicates": 10}));
    std::fs::write(&config, body.to_string()).unwrap();
    let run = |jobs: &str, cmd: &str| {
        let out = dir.path().join(format!("{cmd}-{jobs}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_offeval"))
            .args([cmd, "--config", config.to_str().unwrap(), "--seed", "7", "--jobs", jobs, "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        csv_body(&std::fs::read_to_string(out).unwrap())
    };
    let mut same = true;
    let mut lines = 0;
    for cmd in ["bias-sweep", "reduction-compare"] {
        let (a, b) = (run("1", cmd), run("8", cmd));
        same &= a == b;
        lines += a.lines().count() - 1;
    }
    (same, format!("{lines} data rows byte-identical across --jobs 1 and --jobs 8: {same}"))
}

fn merge_preset(overrides: serde_json::Value) -> serde_json::Value {
    let mut v = presets::winners_curse();
    v.as_object_mut().unwrap().extend(overrides.as_object().unwrap().clone());
    v.as_object_mut().unwrap().insert("bootstrap".into(), json!(true));
    v
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, Duration, fn() -> Outcome); 13] = [
        ("1 bias decomposition identity", Duration::from_secs(60), accounting_identity),
        ("2 optimism of the reused estimate", Duration::from_secs(300), optimism),
        ("3 first-order decay of the reusing bias", Duration::from_secs(900), first_order_law),
        ("4 bootstrap second-order accuracy", Duration::from_secs(120), bootstrap_second_order),
        ("5 train-test split failure", Duration::from_secs(120), split_failure),
        ("6 split works when linear", Duration::from_secs(60), split_when_linear),
        ("7 double robustness", Duration::from_secs(60), double_robustness),
        ("8 importance-sampling exactness", Duration::from_secs(60), is_exactness),
        ("9 numerical-derivative estimator", Duration::from_secs(600), frechet),
        ("10 bias-reduction benefit", Duration::from_secs(600), reduction_benefit),
        ("11 covariate-shift refit", Duration::from_secs(120), covariate_shift),
        ("12 behavior-cloning trend", Duration::from_secs(300), cloning_trend),
        ("13 determinism across job counts", Duration::from_secs(60), determinism),
    ];
    let mut failed = Vec::new();
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(outcome) => outcome,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        let elapsed = start.elapsed();
        let ok = ok && elapsed <= budget;
        println!(
            "{} criterion {name}: {detail} [{:.1}s of {}s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !ok {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
