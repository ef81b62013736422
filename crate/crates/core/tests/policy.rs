use std::sync::Arc;

use offeval_core::dist::{LabeledPoint, LabeledSample, WeightedEmpirical};
use offeval_core::env::{
    build_dataset, build_fragment_chain, final_distribution, state_distributions, FeatureKind, FragmentChainEnv,
    MdpSpec, TeacherKind, Trajectory,
};
use offeval_core::estimators::{j_pi, total_variation};
use offeval_core::models::{fit, FitConfig, Predictor};
use offeval_core::policy::{bc_loss, behavior_mle, default_nu_grid, learn, CandidateSet, LearnerConfig, Policy};
use offeval_core::Error;

fn sample_of(env: &FragmentChainEnv, behavior: &Policy, n: usize, seed: u64) -> WeightedEmpirical {
    WeightedEmpirical::empirical(&build_dataset(env.spec(), env.oracle(), behavior, n, seed).unwrap()).unwrap()
}

fn from_trajectories(env: &FragmentChainEnv, trajs: Vec<Trajectory>) -> WeightedEmpirical {
    let points = trajs
        .iter()
        .map(|t| LabeledPoint { state: t.final_state(), label: env.oracle().eval(t.final_state()).unwrap() })
        .collect();
    WeightedEmpirical::empirical(&LabeledSample::new(points, Some(trajs)).unwrap()).unwrap()
}

fn values(spec: &MdpSpec, f: &Predictor) -> Vec<f64> {
    f.predict_all(spec.valid_states()).unwrap()
}

/// Spearman rank correlation (no ties expected in the inputs used here).
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let var: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
    cov / var
}

#[test]
fn single_candidate_is_returned() {
    let env = build_fragment_chain(4, 2, 0.2, TeacherKind::Quadratic, 0).unwrap();
    let spec = env.spec();
    let only = Policy::random_deterministic(spec, 3);
    let set = Arc::new(CandidateSet::new(spec, vec![only.clone()]).unwrap());
    let g = sample_of(&env, &Policy::uniform(spec), 50, 0);
    let f = fit(&g, &env.feature_table(FeatureKind::Full), &FitConfig::default()).unwrap();
    let out = learn(&g, &f, spec, &LearnerConfig::argmax(set, 0.0)).unwrap();
    assert_eq!(out.policy, only);
    assert_eq!(out.candidate, Some(0));
}

#[test]
fn argmax_matches_brute_force() {
    let env = build_fragment_chain(4, 2, 0.2, TeacherKind::Quadratic, 1).unwrap();
    let spec = env.spec();
    let set = Arc::new(CandidateSet::random(spec, 8, 5).unwrap());
    let features = env.feature_table(FeatureKind::Counts);
    for seed in 0..10 {
        let g = sample_of(&env, &Policy::uniform(spec), 64, seed);
        let f = fit(&g, &features, &FitConfig::linear(FeatureKind::Counts, 1e-6)).unwrap();
        let out = learn(&g, &f, spec, &LearnerConfig::argmax(set.clone(), 0.0)).unwrap();
        let scores: Vec<f64> = set.policies().iter().map(|p| j_pi(spec, p, &f).unwrap()).collect();
        let best = scores.iter().enumerate().fold(0, |b, (i, s)| if *s > scores[b] { i } else { b });
        assert_eq!(out.candidate, Some(best));
        assert!((out.objective - scores[best]).abs() <= 1e-12);
    }
}

#[test]
fn argmax_is_invariant_under_positive_affine_maps() {
    let env = build_fragment_chain(4, 2, 0.2, TeacherKind::Quadratic, 2).unwrap();
    let spec = env.spec();
    let set = Arc::new(CandidateSet::random(spec, 16, 1).unwrap());
    let cfg = LearnerConfig::argmax(set, 0.0);
    for seed in 0..10 {
        let g = sample_of(&env, &Policy::uniform(spec), 64, seed);
        let f = fit(&g, &env.feature_table(FeatureKind::Full), &FitConfig::default()).unwrap();
        let base = learn(&g, &f, spec, &cfg).unwrap().candidate;
        for (a, b) in [(2.0, 0.0), (0.5, -3.0), (10.0, 7.0)] {
            let mapped: Vec<f64> = values(spec, &f).iter().map(|v| a * v + b).collect();
            let h = Predictor::tabular(spec.valid_states(), &mapped).unwrap();
            assert_eq!(learn(&g, &h, spec, &cfg).unwrap().candidate, base);
        }
    }
}

#[test]
fn replaying_a_trajectory_has_zero_loss() {
    let env = build_fragment_chain(3, 3, 0.0, TeacherKind::Linear, 0).unwrap();
    let spec = env.spec();
    let pi = Policy::random_deterministic(spec, 2);
    let g = sample_of(&env, &pi, 1, 0);
    assert_eq!(bc_loss(&pi, &g, spec).unwrap(), 0.0);
    // The estimated behavior of a single trajectory is deterministic along it.
    let mle = behavior_mle(&g, spec).unwrap();
    assert_eq!(bc_loss(&mle, &g, spec).unwrap(), 0.0);
}

#[test]
fn uniform_policy_costs_log_of_the_action_count() {
    let env = build_fragment_chain(4, 2, 0.3, TeacherKind::Linear, 0).unwrap();
    let spec = env.spec();
    let g = sample_of(&env, &Policy::random(spec, 1), 100, 2);
    let loss = bc_loss(&Policy::uniform(spec), &g, spec).unwrap();
    assert!((loss - 4f64.ln()).abs() <= 1e-12);
}

#[test]
fn two_trajectory_loss_by_hand() {
    let env = build_fragment_chain(2, 2, 0.0, TeacherKind::Linear, 0).unwrap();
    let spec = env.spec();
    let trajs = build_dataset(spec, env.oracle(), &Policy::uniform(spec), 40, 0).unwrap().trajectories().unwrap().to_vec();
    let a = trajs[0].clone();
    let b = trajs.iter().find(|t| t.final_state() != a.final_state()).unwrap().clone();
    let g = from_trajectories(&env, vec![a.clone(), b.clone()]);
    let pi = Policy::random(spec, 4);
    let nll = |t: &Trajectory| -> f64 {
        (0..spec.horizon()).map(|h| -pi.prob(spec, h, t.states[h], t.actions[h]).ln()).sum::<f64>()
    };
    // (1/(H·|D|))·Σ_traj Σ_h −log π_h(a_h | s_h) with H = 2, |D| = 2.
    let want = (nll(&a) + nll(&b)) / 4.0;
    assert!((bc_loss(&pi, &g, spec).unwrap() - want).abs() <= 1e-12);
}

#[test]
fn conflicting_trajectories_split_evenly() {
    let env = build_fragment_chain(2, 1, 0.0, TeacherKind::Linear, 0).unwrap();
    let spec = env.spec();
    let root = spec.step(0).states()[0];
    let t = |a: usize| {
        let next = spec.step(0).row(0, a).unwrap()[0].0;
        Trajectory { states: vec![root, next], actions: vec![a] }
    };
    let g = from_trajectories(&env, vec![t(0), t(1)]);
    let mle = behavior_mle(&g, spec).unwrap();
    assert_eq!(&mle.row(0, 0)[..2], &[0.5, 0.5]);
}

#[test]
fn behavior_estimate_converges() {
    let env = build_fragment_chain(4, 2, 0.2, TeacherKind::Quadratic, 0).unwrap();
    let spec = env.spec();
    let truth = Policy::random(spec, 9);
    let g = sample_of(&env, &truth, 5000, 1);
    let mle = behavior_mle(&g, spec).unwrap();
    let visits = state_distributions(spec, &truth).unwrap();
    for h in 0..spec.horizon() {
        for (local, &s) in spec.step(h).states().iter().enumerate() {
            if visits[h][s] > 0.0 {
                let tv = total_variation(mle.row(h, local), truth.row(h, local));
                assert!(tv <= 0.05, "step {h} state {s}: TV {tv}");
            }
        }
    }
}

#[test]
fn cloning_needs_trajectories() {
    let env = build_fragment_chain(4, 2, 0.0, TeacherKind::Linear, 0).unwrap();
    let spec = env.spec();
    let points = vec![LabeledPoint { state: spec.valid_states()[0], label: 1.0 }];
    let g = WeightedEmpirical::empirical(&LabeledSample::new(points, None).unwrap()).unwrap();
    let f = Predictor::tabular(spec.valid_states(), &vec![0.0; spec.valid_states().len()]).unwrap();
    let cfg = LearnerConfig::softmax(10, 0.5, 1.0, 1.0);
    assert!(matches!(learn(&g, &f, spec, &cfg), Err(Error::MissingTrajectories)));
    assert!(learn(&g, &f, spec, &cfg.with_nu(0.0)).is_ok());
}

#[test]
fn argmax_cloning_loss_is_monotone_in_nu() {
    let env = build_fragment_chain(4, 2, 0.2, TeacherKind::Quadratic, 3).unwrap();
    let spec = env.spec();
    let set = Arc::new(CandidateSet::random(spec, 32, 2).unwrap());
    let behavior = Policy::random(spec, 5);
    for seed in 0..5 {
        let g = sample_of(&env, &behavior, 200, seed);
        let f = fit(&g, &env.feature_table(FeatureKind::Full), &FitConfig::default()).unwrap();
        let mut grid = vec![0.0];
        grid.extend(default_nu_grid());
        let losses: Vec<f64> = grid
            .iter()
            .map(|&nu| bc_loss(&learn(&g, &f, spec, &LearnerConfig::argmax(set.clone(), nu)).unwrap().policy, &g, spec).unwrap())
            .collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {losses:?}");
    }
}

#[test]
fn softmax_cloning_trend_over_the_grid() {
    let env = build_fragment_chain(4, 2, 0.2, TeacherKind::Quadratic, 0).unwrap();
    let spec = env.spec();
    let behavior = Policy::uniform(spec);
    let grid = default_nu_grid();
    let (mut rho, mut tv_first, mut tv_last) = (0.0, 0.0, 0.0);
    let seeds = 20;
    for seed in 0..seeds {
        let g = sample_of(&env, &behavior, 128, seed);
        let f = fit(&g, &env.feature_table(FeatureKind::Full), &FitConfig::default()).unwrap();
        let marginal: Vec<f64> = {
            let m: std::collections::HashMap<usize, f64> = g.state_marginal().into_iter().collect();
            spec.valid_states().iter().map(|s| m.get(s).copied().unwrap_or(0.0)).collect()
        };
        let policies: Vec<Policy> = std::iter::once(0.0)
            .chain(grid.iter().copied())
            .map(|nu| learn(&g, &f, spec, &LearnerConfig::softmax(200, 0.5, 1.0, nu)).unwrap().policy)
            .collect();
        let losses: Vec<f64> = policies[1..].iter().map(|p| bc_loss(p, &g, spec).unwrap()).collect();
        rho += spearman(&grid, &losses) / seeds as f64;
        let tv = |p: &Policy| total_variation(&final_distribution(spec, p).unwrap(), &marginal);
        tv_first += tv(&policies[0]) / seeds as f64;
        tv_last += tv(policies.last().unwrap()) / seeds as f64;
    }
    assert!(rho <= 0.0, "mean Spearman correlation {rho}");
    assert!(tv_last <= tv_first, "TV at largest ν {tv_last} vs ν = 0 {tv_first}");
}
