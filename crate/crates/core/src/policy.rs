//! Policies and policy learners.
//!
//! The learner's base loss is `−J_PI(π, f)`, evaluated exactly by dynamic
//! programming; behavior cloning adds `ν·BC(π, g)` on the sample's trajectories.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dist::WeightedEmpirical;
use crate::env::{backward_values, final_distribution, state_distributions, ActionId, MdpSpec, StateId};
use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::seed;

const ROW_TOL: f64 = 1e-12;

/// Candidate sets are exhaustive up to this many deterministic policies.
pub const MAX_ENUMERATED_CANDIDATES: u128 = 4096;
/// Size of the random candidate set used beyond [`MAX_ENUMERATED_CANDIDATES`].
pub const DEFAULT_RANDOM_CANDIDATES: usize = 64;

/// The behavior-cloning coefficient grid `{2^−4, …, 2^4}`.
pub fn default_nu_grid() -> Vec<f64> {
    (-4..=4).map(|k| 2f64.powi(k)).collect()
}

/// Step-wise action distributions `π_h(a|s)` for `h < H`.
///
/// Rows are laid out by the local state index of each step table of the
/// spec the policy was built for; the terminal step is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_actions: usize,
    steps: Vec<Vec<f64>>,
}

impl Policy {
    /// Builds a policy from `rows[h][local]`, each a dense row over all actions.
    pub fn from_rows(spec: &MdpSpec, rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let na = spec.num_actions();
        let mut steps = Vec::with_capacity(rows.len());
        for step in rows {
            let mut flat = Vec::with_capacity(step.len() * na);
            for row in step {
                if row.len() != na {
                    return Err(Error::contract(format!("policy row has {} entries, expected {na}", row.len())));
                }
                flat.extend(row);
            }
            steps.push(flat);
        }
        let policy = Policy { num_actions: na, steps };
        policy.check_against(spec)?;
        Ok(policy)
    }

    fn from_fn(spec: &MdpSpec, mut row: impl FnMut(usize, usize, &[ActionId]) -> Vec<f64>) -> Self {
        let na = spec.num_actions();
        let steps = (0..spec.horizon())
            .map(|h| {
                let table = spec.step(h);
                let mut flat = vec![0.0; table.len() * na];
                for local in 0..table.len() {
                    let avail: Vec<ActionId> = table.available(local).collect();
                    let probs = row(h, local, &avail);
                    for (&a, p) in avail.iter().zip(probs) {
                        flat[local * na + a] = p;
                    }
                }
                flat
            })
            .collect();
        Policy { num_actions: na, steps }
    }

    /// Uniform over the available actions of every state.
    pub fn uniform(spec: &MdpSpec) -> Self {
        Self::from_fn(spec, |_, _, avail| vec![1.0 / avail.len() as f64; avail.len()])
    }

    /// Deterministic policy from `choices[h][local]`.
    pub fn deterministic(spec: &MdpSpec, choices: &[Vec<ActionId>]) -> Result<Self> {
        if choices.len() != spec.horizon() {
            return Err(Error::contract("one choice vector per non-terminal step required"));
        }
        let na = spec.num_actions();
        let mut steps = Vec::with_capacity(choices.len());
        for (h, step) in choices.iter().enumerate() {
            let table = spec.step(h);
            if step.len() != table.len() {
                return Err(Error::contract(format!("step {h} needs {} choices", table.len())));
            }
            let mut flat = vec![0.0; table.len() * na];
            for (local, &a) in step.iter().enumerate() {
                if !table.is_available(local, a) {
                    return Err(Error::contract(format!("action {a} unavailable at step {h}")));
                }
                flat[local * na + a] = 1.0;
            }
            steps.push(flat);
        }
        Ok(Policy { num_actions: na, steps })
    }

    /// A random stochastic policy with rows drawn from a flat Dirichlet.
    pub fn random(spec: &MdpSpec, rng_seed: u64) -> Self {
        let mut rng = seed::rng(rng_seed);
        Self::from_fn(spec, |_, _, avail| {
            let e: Vec<f64> = avail.iter().map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|x| x / total).collect()
        })
    }

    /// A random deterministic policy.
    pub fn random_deterministic(spec: &MdpSpec, rng_seed: u64) -> Self {
        let mut rng = seed::rng(rng_seed);
        Self::from_fn(spec, |_, _, avail| {
            let pick = rng.random_range(0..avail.len());
            (0..avail.len()).map(|i| if i == pick { 1.0 } else { 0.0 }).collect()
        })
    }

    /// Softmax of `logits[h][local·|A| + a] / τ` over available actions.
    pub fn softmax(spec: &MdpSpec, logits: &[Vec<f64>], temperature: f64) -> Self {
        Self::from_fn(spec, |h, local, avail| {
            let na = spec.num_actions();
            let z: Vec<f64> = avail.iter().map(|&a| logits[h][local * na + a] / temperature).collect();
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|x| x / total).collect()
        })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Dense action row of the state with local index `local` at step `h`.
    pub fn row(&self, h: usize, local: usize) -> &[f64] {
        &self.steps[h][local * self.num_actions..(local + 1) * self.num_actions]
    }

    /// `π_h(a|s)`; zero for states without rows at step `h`.
    pub fn prob(&self, spec: &MdpSpec, h: usize, state: StateId, action: ActionId) -> f64 {
        match spec.step(h).local_index(state) {
            Some(local) if action < self.num_actions => self.row(h, local)[action],
            _ => 0.0,
        }
    }

    /// Checks shape and normalization against `spec`.
    pub fn check_against(&self, spec: &MdpSpec) -> Result<()> {
        if self.steps.len() != spec.horizon() || self.num_actions != spec.num_actions() {
            return Err(Error::contract("policy shape does not match the MDP"));
        }
        for (h, flat) in self.steps.iter().enumerate() {
            let table = spec.step(h);
            if flat.len() != table.len() * self.num_actions {
                return Err(Error::contract(format!("policy step {h} does not match the step table")));
            }
            for local in 0..table.len() {
                let row = self.row(h, local);
                let mut sum = 0.0;
                for (a, &p) in row.iter().enumerate() {
                    if !(p >= 0.0) || !p.is_finite() {
                        return Err(Error::contract(format!("negative or non-finite policy entry at step {h}")));
                    }
                    if p > 0.0 && !table.is_available(local, a) {
                        return Err(Error::contract(format!("policy puts mass on unavailable action {a} at step {h}")));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_TOL {
                    return Err(Error::contract(format!(
                        "policy row for state {} at step {h} sums to {sum}",
                        table.states()[local]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A fixed list of candidate policies with their final-step distributions cached.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    policies: Vec<Policy>,
    finals: Vec<Vec<f64>>,
}

impl CandidateSet {
    pub fn new(spec: &MdpSpec, policies: Vec<Policy>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::invalid("candidate list must be nonempty"));
        }
        let finals = policies.iter().map(|p| final_distribution(spec, p)).collect::<Result<_>>()?;
        Ok(CandidateSet { policies, finals })
    }

    /// All deterministic policies when there are at most
    /// [`MAX_ENUMERATED_CANDIDATES`], otherwise
    /// [`DEFAULT_RANDOM_CANDIDATES`] random ones fixed by `rng_seed`.
    pub fn default_for(spec: &MdpSpec, rng_seed: u64) -> Result<Self> {
        if spec.deterministic_policy_count() <= MAX_ENUMERATED_CANDIDATES {
            Self::new(spec, enumerate_deterministic(spec))
        } else {
            Self::random(spec, DEFAULT_RANDOM_CANDIDATES, rng_seed)
        }
    }

    /// `count` random deterministic policies.
    pub fn random(spec: &MdpSpec, count: usize, rng_seed: u64) -> Result<Self> {
        let policies = (0..count)
            .map(|i| Policy::random_deterministic(spec, seed::derive_seed(rng_seed, "candidate", i as u64)))
            .collect();
        Self::new(spec, policies)
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn get(&self, i: usize) -> &Policy {
        &self.policies[i]
    }

    /// Final-step distribution of candidate `i`, aligned with the valid states.
    pub fn final_distribution(&self, i: usize) -> &[f64] {
        &self.finals[i]
    }
}

fn enumerate_deterministic(spec: &MdpSpec) -> Vec<Policy> {
    let slots: Vec<(usize, usize, Vec<ActionId>)> = (0..spec.horizon())
        .flat_map(|h| {
            let table = spec.step(h);
            (0..table.len()).map(move |local| (h, local, table.available(local).collect()))
        })
        .collect();
    let total = spec.deterministic_policy_count() as usize;
    let mut out = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut choices: Vec<Vec<ActionId>> = (0..spec.horizon()).map(|h| vec![0; spec.step(h).len()]).collect();
        for (h, local, avail) in &slots {
            choices[*h][*local] = avail[code % avail.len()];
            code /= avail.len();
        }
        out.push(Policy::deterministic(spec, &choices).expect("enumerated choices are available"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    #[default]
    ArgmaxCandidates,
    SoftmaxGradient,
}

/// Serializable learner settings (`policy.*` config keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyParams {
    pub kind: LearnerKind,
    pub nu: f64,
    /// Number of random deterministic candidates; `None` uses the default rule.
    pub candidates: Option<usize>,
    pub candidate_seed: u64,
    pub steps: usize,
    pub lr: f64,
    pub temperature: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            kind: LearnerKind::ArgmaxCandidates,
            nu: 0.0,
            candidates: None,
            candidate_seed: 0,
            steps: 200,
            lr: 0.5,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub candidates: Option<Arc<CandidateSet>>,
    pub steps: usize,
    pub lr: f64,
    pub temperature: f64,
    pub nu: f64,
}

impl LearnerConfig {
    pub fn argmax(candidates: Arc<CandidateSet>, nu: f64) -> Self {
        LearnerConfig {
            kind: LearnerKind::ArgmaxCandidates,
            candidates: Some(candidates),
            steps: 0,
            lr: 0.0,
            temperature: 1.0,
            nu,
        }
    }

    pub fn softmax(steps: usize, lr: f64, temperature: f64, nu: f64) -> Self {
        LearnerConfig { kind: LearnerKind::SoftmaxGradient, candidates: None, steps, lr, temperature, nu }
    }

    pub fn from_params(spec: &MdpSpec, params: &PolicyParams) -> Result<Self> {
        let cfg = match params.kind {
            LearnerKind::ArgmaxCandidates => {
                let set = match params.candidates {
                    None => CandidateSet::default_for(spec, params.candidate_seed)?,
                    Some(n) => CandidateSet::random(spec, n, params.candidate_seed)?,
                };
                Self::argmax(Arc::new(set), params.nu)
            }
            LearnerKind::SoftmaxGradient => Self::softmax(params.steps, params.lr, params.temperature, params.nu),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        LearnerConfig { nu, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::invalid("behavior-cloning coefficient must be a finite nonnegative number"));
        }
        match self.kind {
            LearnerKind::ArgmaxCandidates => match &self.candidates {
                Some(c) if !c.is_empty() => Ok(()),
                _ => Err(Error::invalid("argmax learner needs a nonempty candidate list")),
            },
            LearnerKind::SoftmaxGradient => {
                if !(self.temperature > 0.0) || !(self.lr > 0.0) {
                    return Err(Error::invalid("softmax learner needs positive temperature and learning rate"));
                }
                Ok(())
            }
        }
    }
}

/// Outcome of a learner run.
#[derive(Debug, Clone)]
pub struct Learned {
    pub policy: Policy,
    /// Final value of `J_PI(π, f) − ν·BC(π, g)`.
    pub objective: f64,
    /// Index of the chosen candidate, for the argmax learner.
    pub candidate: Option<usize>,
}

/// Weighted action counts `n_h(s, a)` from the sample's trajectories.
#[derive(Debug, Clone)]
struct ActionCounts {
    /// `(h, local, action, weight)`
    entries: Vec<(usize, usize, ActionId, f64)>,
}

impl ActionCounts {
    fn from_sample(spec: &MdpSpec, g: &WeightedEmpirical) -> Result<Self> {
        let mut entries: Vec<(usize, usize, ActionId, f64)> = Vec::new();
        for (traj, w) in g.trajectory_weights()? {
            if traj.horizon() != spec.horizon() {
                return Err(Error::contract("trajectory length does not match the horizon"));
            }
            for (h, (&s, &a)) in traj.states.iter().zip(&traj.actions).enumerate() {
                let local = spec
                    .step(h)
                    .local_index(s)
                    .ok_or_else(|| Error::contract(format!("trajectory visits state {s} without rows at step {h}")))?;
                entries.push((h, local, a, w));
            }
        }
        entries.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
        let mut merged: Vec<(usize, usize, ActionId, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (e.0, e.1, e.2) => last.3 += e.3,
                _ => merged.push(e),
            }
        }
        Ok(ActionCounts { entries: merged })
    }

    /// `−(1/H) Σ n·log π`; `+∞` when an observed action has zero probability.
    fn loss(&self, policy: &Policy, horizon: usize) -> f64 {
        let mut acc = 0.0;
        for &(h, local, a, n) in &self.entries {
            if n == 0.0 {
                continue;
            }
            let p = policy.row(h, local)[a];
            if p <= 0.0 {
                return f64::INFINITY;
            }
            acc -= n * p.ln();
        }
        acc / horizon as f64
    }
}

/// Weighted mean negative log-likelihood per decision of the sample's trajectories.
pub fn bc_loss(policy: &Policy, g: &WeightedEmpirical, spec: &MdpSpec) -> Result<f64> {
    policy.check_against(spec)?;
    Ok(ActionCounts::from_sample(spec, g)?.loss(policy, spec.horizon()))
}

/// Per-(h, s) weighted action frequencies; unvisited rows are uniform.
pub fn behavior_mle(g: &WeightedEmpirical, spec: &MdpSpec) -> Result<Policy> {
    if g.is_signed() {
        return Err(Error::contract("behavior estimation needs an unsigned sample"));
    }
    let counts = ActionCounts::from_sample(spec, g)?;
    let na = spec.num_actions();
    let mut steps: Vec<Vec<f64>> = (0..spec.horizon()).map(|h| vec![0.0; spec.step(h).len() * na]).collect();
    for &(h, local, a, n) in &counts.entries {
        steps[h][local * na + a] += n;
    }
    for (h, flat) in steps.iter_mut().enumerate() {
        let table = spec.step(h);
        for local in 0..table.len() {
            let row = &mut flat[local * na..(local + 1) * na];
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|x| *x /= total);
            } else {
                let avail: Vec<_> = table.available(local).collect();
                for a in &avail {
                    row[*a] = 1.0 / avail.len() as f64;
                }
            }
        }
    }
    Ok(Policy { num_actions: na, steps })
}

/// Trains a policy on `g` against the predictor's values.
pub fn learn(g: &WeightedEmpirical, predictor: &Predictor, spec: &MdpSpec, cfg: &LearnerConfig) -> Result<Learned> {
    let values = predictor.predict_all(spec.valid_states())?;
    learn_from_values(g, &values, spec, cfg)
}

/// As [`learn`], with predictor values given directly (aligned with the valid states).
pub fn learn_from_values(g: &WeightedEmpirical, values: &[f64], spec: &MdpSpec, cfg: &LearnerConfig) -> Result<Learned> {
    cfg.validate()?;
    if values.len() != spec.valid_states().len() {
        return Err(Error::contract("predictor values must align with valid states"));
    }
    let counts = if cfg.nu > 0.0 { Some(ActionCounts::from_sample(spec, g)?) } else { None };
    match cfg.kind {
        LearnerKind::ArgmaxCandidates => {
            let set = cfg.candidates.as_ref().expect("validated");
            let mut best: Option<(usize, f64)> = None;
            for i in 0..set.len() {
                let j: f64 = set.final_distribution(i).iter().zip(values).map(|(p, v)| p * v).sum();
                let obj = match &counts {
                    Some(c) => j - cfg.nu * c.loss(set.get(i), spec.horizon()),
                    None => j,
                };
                if best.is_none_or(|(_, b)| obj > b) {
                    best = Some((i, obj));
                }
            }
            let (i, objective) = best.expect("nonempty candidate set");
            Ok(Learned { policy: set.get(i).clone(), objective, candidate: Some(i) })
        }
        LearnerKind::SoftmaxGradient => softmax_ascent(spec, values, counts.as_ref(), cfg),
    }
}

fn softmax_ascent(spec: &MdpSpec, values: &[f64], counts: Option<&ActionCounts>, cfg: &LearnerConfig) -> Result<Learned> {
    let na = spec.num_actions();
    let horizon = spec.horizon();
    let tau = cfg.temperature;
    let mut logits: Vec<Vec<f64>> = (0..horizon).map(|h| vec![0.0; spec.step(h).len() * na]).collect();
    let mut grad: Vec<Vec<f64>> = logits.clone();
    for _ in 0..cfg.steps {
        let policy = Policy::softmax(spec, &logits, tau);
        let dists = state_distributions(spec, &policy)?;
        let v = backward_values(spec, &policy, values)?;
        for (h, gstep) in grad.iter_mut().enumerate() {
            let table = spec.step(h);
            gstep.iter_mut().for_each(|x| *x = 0.0);
            for (local, &s) in table.states().iter().enumerate() {
                let mass = dists[h][s];
                if mass == 0.0 {
                    continue;
                }
                let row = policy.row(h, local);
                let vs = v[h][s];
                for a in table.available(local) {
                    let q: f64 = table.row(local, a).unwrap().iter().map(|&(t, p)| p * v[h + 1][t]).sum();
                    gstep[local * na + a] = mass * row[a] * (q - vs) / tau;
                }
            }
        }
        if let Some(c) = counts {
            // ∂(−ν·BC)/∂θ = (ν/H)·(n(s,a) − n(s)·π(a|s))/τ
            let scale = cfg.nu / horizon as f64 / tau;
            let mut totals: Vec<Vec<f64>> = (0..horizon).map(|h| vec![0.0; spec.step(h).len()]).collect();
            for &(h, local, a, n) in &c.entries {
                grad[h][local * na + a] += scale * n;
                totals[h][local] += n;
            }
            for (h, step_totals) in totals.iter().enumerate() {
                let table = spec.step(h);
                for (local, &n) in step_totals.iter().enumerate() {
                    if n == 0.0 {
                        continue;
                    }
                    let row = policy.row(h, local);
                    for a in table.available(local) {
                        grad[h][local * na + a] -= scale * n * row[a];
                    }
                }
            }
        }
        for (l, gs) in logits.iter_mut().zip(&grad) {
            for (x, d) in l.iter_mut().zip(gs) {
                *x += cfg.lr * d;
            }
        }
    }
    let policy = Policy::softmax(spec, &logits, tau);
    let j: f64 = final_distribution(spec, &policy)?.iter().zip(values).map(|(p, v)| p * v).sum();
    let objective = match counts {
        Some(c) => j - cfg.nu * c.loss(&policy, horizon),
        None => j,
    };
    Ok(Learned { policy, objective, candidate: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{LabeledPoint, LabeledSample};
    use crate::env::{build_fragment_chain, TeacherKind, Trajectory};

    fn small() -> crate::env::FragmentChainEnv {
        build_fragment_chain(2, 2, 0.0, TeacherKind::Quadratic, 4).unwrap()
    }

    fn sample_of(trajs: Vec<Trajectory>) -> WeightedEmpirical {
        let pts = trajs.iter().map(|t| LabeledPoint { state: t.final_state(), label: 0.0 }).collect();
        WeightedEmpirical::empirical(&LabeledSample::new(pts, Some(trajs)).unwrap()).unwrap()
    }

    #[test]
    fn uniform_rows_are_normalized() {
        let env = small();
        let p = Policy::uniform(env.spec());
        p.check_against(env.spec()).unwrap();
        assert_eq!(p.row(0, 0), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn unnormalized_rows_are_rejected() {
        let env = small();
        let spec = env.spec();
        let mut rows = vec![vec![vec![0.5, 0.5, 0.0]], vec![vec![0.5, 0.5, 0.0]; 2]];
        assert!(Policy::from_rows(spec, rows.clone()).is_ok());
        rows[1][1] = vec![0.6, 0.5, 0.0];
        assert!(Policy::from_rows(spec, rows.clone()).is_err());
        rows[1][1] = vec![0.5, 0.0, 0.5];
        assert!(Policy::from_rows(spec, rows).is_err());
    }

    #[test]
    fn enumeration_covers_all_deterministic_policies() {
        let env = small();
        let set = CandidateSet::default_for(env.spec(), 0).unwrap();
        assert_eq!(set.len(), 8);
        let distinct: std::collections::HashSet<Vec<u64>> = set
            .policies()
            .iter()
            .map(|p| (0..2).flat_map(|h| p.steps[h].iter().map(|x| x.to_bits())).collect())
            .collect();
        assert_eq!(distinct.len(), 8);
    }

    #[test]
    fn large_instances_fall_back_to_random_candidates() {
        let env = build_fragment_chain(4, 3, 0.0, TeacherKind::Linear, 0).unwrap();
        let set = CandidateSet::default_for(env.spec(), 3).unwrap();
        assert_eq!(set.len(), DEFAULT_RANDOM_CANDIDATES);
    }

    #[test]
    fn replaying_a_single_trajectory_costs_nothing() {
        let env = small();
        let spec = env.spec();
        let t = Trajectory { states: vec![0, 2, 5], actions: vec![1, 0] };
        let g = sample_of(vec![t]);
        let p = behavior_mle(&g, spec).unwrap();
        assert_eq!(bc_loss(&p, &g, spec).unwrap(), 0.0);
        assert_eq!(p.row(0, 0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn conflicting_trajectories_give_even_split() {
        let env = small();
        let spec = env.spec();
        let g = sample_of(vec![
            Trajectory { states: vec![0, 1, 3], actions: vec![0, 0] },
            Trajectory { states: vec![0, 1, 4], actions: vec![0, 1] },
        ]);
        let p = behavior_mle(&g, spec).unwrap();
        let local = spec.step(1).local_index(1).unwrap();
        assert_eq!(p.row(1, local), &[0.5, 0.5, 0.0]);
        // the unvisited branch stays uniform
        let other = spec.step(1).local_index(2).unwrap();
        assert_eq!(p.row(1, other), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn missing_trajectories_are_reported() {
        let env = small();
        let pts = vec![LabeledPoint { state: 3, label: 1.0 }];
        let g = WeightedEmpirical::empirical(&LabeledSample::new(pts, None).unwrap()).unwrap();
        let set = Arc::new(CandidateSet::default_for(env.spec(), 0).unwrap());
        let values = vec![0.0; 4];
        let err = learn_from_values(&g, &values, env.spec(), &LearnerConfig::argmax(set, 1.0)).unwrap_err();
        assert!(matches!(err, Error::MissingTrajectories));
    }

    #[test]
    fn softmax_ascent_moves_toward_the_best_leaf() {
        let env = small();
        let spec = env.spec();
        let values = vec![0.0, 0.0, 0.0, 1.0];
        let g = sample_of(vec![Trajectory { states: vec![0, 1, 3], actions: vec![0, 0] }]);
        let cfg = LearnerConfig::softmax(200, 0.5, 1.0, 0.0);
        let out = learn_from_values(&g, &values, spec, &cfg).unwrap();
        let p = final_distribution(spec, &out.policy).unwrap();
        assert!(p[3] > 0.5, "{p:?}");
        assert!((out.objective - p[3]).abs() < 1e-12);
    }
}
