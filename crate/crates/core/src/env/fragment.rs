//! Fragment-chain environments: a policy appends one of `K` fragments per step
//! for `H` steps, and the finished chain is scored by a fixed teacher function.

use std::collections::HashMap;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::FeatureTable;
use super::mdp::{MdpSpec, SparseRow, StateId, StepTable};
use crate::error::{Error, Result};
use crate::seed;

/// Upper bound on `K^H`, the number of finished chains.
pub const MAX_FINAL_STATES: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Linear,
    #[default]
    Quadratic,
}

/// Which feature block a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Fragment counts only.
    Counts,
    /// Fragment counts plus pairwise co-occurrence indicators.
    #[default]
    Full,
}

/// Serializable construction parameters (`env.*` config keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    pub k: usize,
    pub h: usize,
    pub stochasticity: f64,
    pub teacher: TeacherKind,
    pub teacher_seed: u64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams { k: 4, h: 2, stochasticity: 0.0, teacher: TeacherKind::Quadratic, teacher_seed: 0 }
    }
}

/// Closed-form description of the ground-truth property function.
///
/// `f*(s) = bias + Σ_j linear[j]·φ_j(s) + Σ_{j≤k} quadratic[(j,k)]·φ_j(s)·φ_k(s)`
/// over the full feature vector φ; `quadratic` is empty for a linear teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherDescription {
    pub kind: TeacherKind,
    pub bias: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
}

impl TeacherDescription {
    fn draw(kind: TeacherKind, dim: usize, teacher_seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive_seed(teacher_seed, "teacher", 0));
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let bias = normal();
        let linear = (0..dim).map(|_| normal()).collect();
        let quadratic = match kind {
            TeacherKind::Linear => Vec::new(),
            TeacherKind::Quadratic => {
                let scale = 1.0 / (dim as f64).sqrt();
                (0..dim * (dim + 1) / 2).map(|_| scale * normal()).collect()
            }
        };
        TeacherDescription { kind, bias, linear, quadratic }
    }

    pub fn eval(&self, phi: &[f64]) -> f64 {
        let mut y = self.bias + self.linear.iter().zip(phi).map(|(b, x)| b * x).sum::<f64>();
        if !self.quadratic.is_empty() {
            let mut idx = 0;
            for j in 0..phi.len() {
                for k in j..phi.len() {
                    y += self.quadratic[idx] * phi[j] * phi[k];
                    idx += 1;
                }
            }
        }
        y
    }
}

/// Ground-truth property function tabulated over the valid states.
#[derive(Debug, Clone)]
pub struct PropertyOracle {
    description: Option<TeacherDescription>,
    states: Vec<StateId>,
    values: Vec<f64>,
    index: HashMap<StateId, usize>,
}

impl PropertyOracle {
    pub fn from_table(states: Vec<StateId>, values: Vec<f64>) -> Result<Self> {
        if states.len() != values.len() {
            return Err(Error::contract("one value per state required"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("property values must be finite"));
        }
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(PropertyOracle { description: None, states, values, index })
    }

    pub fn eval(&self, state: StateId) -> Result<f64> {
        self.index.get(&state).map(|&i| self.values[i]).ok_or(Error::UnknownState(state))
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn description(&self) -> Option<&TeacherDescription> {
        self.description.as_ref()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sequence-building MDP over an alphabet of `k` fragments.
#[derive(Debug, Clone)]
pub struct FragmentChainEnv {
    k: usize,
    h: usize,
    stochasticity: f64,
    offsets: Vec<usize>,
    spec: Arc<MdpSpec>,
    oracle: Arc<PropertyOracle>,
}

/// Builds the environment and its teacher. See [`FragmentChainEnv::new`].
pub fn build_fragment_chain(
    k: usize,
    h: usize,
    stochasticity: f64,
    teacher: TeacherKind,
    teacher_seed: u64,
) -> Result<FragmentChainEnv> {
    FragmentChainEnv::new(&EnvParams { k, h, stochasticity, teacher, teacher_seed })
}

impl FragmentChainEnv {
    pub fn new(params: &EnvParams) -> Result<Self> {
        let EnvParams { k, h, stochasticity, teacher, teacher_seed } = *params;
        if k < 2 {
            return Err(Error::invalid("need at least two fragments"));
        }
        if h < 1 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !(0.0..=1.0).contains(&stochasticity) {
            return Err(Error::invalid("stochasticity must lie in [0, 1]"));
        }
        let finals = (k as u128).checked_pow(h as u32).unwrap_or(u128::MAX);
        if finals > MAX_FINAL_STATES {
            return Err(Error::Capacity { states: finals, limit: MAX_FINAL_STATES });
        }
        let mut offsets = Vec::with_capacity(h + 2);
        let mut acc = 0usize;
        let mut level = 1usize;
        for _ in 0..=h + 1 {
            offsets.push(acc);
            acc += level;
            level *= k;
        }
        let terminal = offsets[h + 1];
        let num_states = terminal + 1;
        let num_actions = k + 1;
        let terminal_action = k;

        let mut steps = Vec::with_capacity(h + 1);
        for step in 0..h {
            let mut entries = Vec::with_capacity(offsets[step + 1] - offsets[step]);
            for s in offsets[step]..offsets[step + 1] {
                let first_child = offsets[step + 1] + (s - offsets[step]) * k;
                let mut rows: Vec<Option<SparseRow>> = (0..k)
                    .map(|a| {
                        let row = if stochasticity == 0.0 {
                            vec![(first_child + a, 1.0)]
                        } else {
                            (0..k)
                                .map(|c| {
                                    let p = stochasticity / k as f64 + if c == a { 1.0 - stochasticity } else { 0.0 };
                                    (first_child + c, p)
                                })
                                .collect()
                        };
                        Some(row)
                    })
                    .collect();
                rows.push(None);
                entries.push((s, rows));
            }
            steps.push(StepTable::new(entries)?);
        }
        let mut last = Vec::new();
        for s in offsets[h]..offsets[h + 1] {
            let mut rows: Vec<Option<SparseRow>> = vec![None; k];
            rows.push(Some(vec![(terminal, 1.0)]));
            last.push((s, rows));
        }
        steps.push(StepTable::new(last)?);

        let valid: Vec<StateId> = (offsets[h]..offsets[h + 1]).collect();
        let spec = MdpSpec::new(num_states, num_actions, h, steps, vec![(0, 1.0)], terminal, terminal_action, valid)?;

        let mut env = FragmentChainEnv {
            k,
            h,
            stochasticity,
            offsets,
            spec: Arc::new(spec),
            oracle: Arc::new(PropertyOracle::from_table(Vec::new(), Vec::new())?),
        };
        let description = TeacherDescription::draw(teacher, env.feature_dim(FeatureKind::Full), teacher_seed);
        let states = env.spec.valid_states().to_vec();
        let values = states.iter().map(|&s| description.eval(&env.phi(s, FeatureKind::Full))).collect();
        let mut oracle = PropertyOracle::from_table(states, values)?;
        oracle.description = Some(description);
        env.oracle = Arc::new(oracle);
        Ok(env)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.h
    }

    pub fn stochasticity(&self) -> f64 {
        self.stochasticity
    }

    pub fn is_deterministic(&self) -> bool {
        self.stochasticity == 0.0
    }

    pub fn spec(&self) -> &Arc<MdpSpec> {
        &self.spec
    }

    pub fn oracle(&self) -> &Arc<PropertyOracle> {
        &self.oracle
    }

    pub fn terminal_state(&self) -> StateId {
        self.offsets[self.h + 1]
    }

    /// Encodes a fragment sequence of length `0..=H`.
    pub fn encode(&self, fragments: &[usize]) -> Result<StateId> {
        if fragments.len() > self.h || fragments.iter().any(|&f| f >= self.k) {
            return Err(Error::invalid(format!("not a valid fragment sequence: {fragments:?}")));
        }
        let r = fragments.iter().fold(0usize, |acc, &f| acc * self.k + f);
        Ok(self.offsets[fragments.len()] + r)
    }

    /// Decodes a non-terminal state into its fragment sequence.
    pub fn decode(&self, state: StateId) -> Result<Vec<usize>> {
        if state >= self.terminal_state() {
            return Err(Error::UnknownState(state));
        }
        let len = self.offsets.partition_point(|&o| o <= state) - 1;
        let mut r = state - self.offsets[len];
        let mut out = vec![0; len];
        for slot in out.iter_mut().rev() {
            *slot = r % self.k;
            r /= self.k;
        }
        Ok(out)
    }

    pub fn feature_dim(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::Counts => self.k,
            FeatureKind::Full => self.k + self.k * (self.k - 1) / 2,
        }
    }

    fn phi(&self, state: StateId, kind: FeatureKind) -> Vec<f64> {
        let seq = self.decode(state).expect("non-terminal state");
        let mut counts = vec![0.0; self.k];
        for &f in &seq {
            counts[f] += 1.0;
        }
        let mut out = counts.clone();
        if kind == FeatureKind::Full {
            for i in 0..self.k {
                for j in i + 1..self.k {
                    out.push(if counts[i] > 0.0 && counts[j] > 0.0 { 1.0 } else { 0.0 });
                }
            }
        }
        out
    }

    /// Feature vector φ(s) of a non-terminal state.
    pub fn features_of(&self, state: StateId, kind: FeatureKind) -> Result<Vec<f64>> {
        self.decode(state)?;
        Ok(self.phi(state, kind))
    }

    /// Feature table over the valid (finished) states.
    pub fn feature_table(&self, kind: FeatureKind) -> Arc<FeatureTable> {
        let states = self.spec.valid_states().to_vec();
        let rows = states.iter().map(|&s| self.phi(s, kind)).collect();
        let id = match kind {
            FeatureKind::Counts => "counts",
            FeatureKind::Full => "counts+pairs",
        };
        Arc::new(FeatureTable::new(id, states, rows).expect("valid by construction"))
    }
}
