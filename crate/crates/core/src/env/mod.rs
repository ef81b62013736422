//! Finite-horizon MDPs with known property functions, exact dynamic
//! programming over them, and dataset sampling.

mod features;
mod fragment;
mod mdp;

pub use features::FeatureTable;
pub use fragment::{
    build_fragment_chain, EnvParams, FeatureKind, FragmentChainEnv, PropertyOracle, TeacherDescription,
    TeacherKind, MAX_FINAL_STATES,
};
pub use mdp::{
    backward_values, final_distribution, sample_trajectories, state_distributions, ActionId, MdpSpec, SparseRow,
    StateId, StepTable, Trajectory,
};

use crate::dist::{Atom, LabeledPoint, LabeledSample, WeightedEmpirical};
use crate::error::Result;
use crate::policy::Policy;

/// `J*(π) = E_{S∼p_H^π} f*(S)`, computed exactly.
pub fn true_performance(spec: &MdpSpec, oracle: &PropertyOracle, policy: &Policy) -> Result<f64> {
    let p = final_distribution(spec, policy)?;
    let mut acc = 0.0;
    for (&s, &q) in spec.valid_states().iter().zip(&p) {
        if q != 0.0 {
            acc += q * oracle.eval(s)?;
        }
    }
    Ok(acc)
}

/// Rolls out `n` trajectories under `behavior` and labels each final state with `f*`.
pub fn build_dataset(
    spec: &MdpSpec,
    oracle: &PropertyOracle,
    behavior: &Policy,
    n: usize,
    rng_seed: u64,
) -> Result<LabeledSample> {
    let trajs = sample_trajectories(spec, behavior, n, rng_seed)?;
    let points = trajs
        .iter()
        .map(|t| {
            let state = t.final_state();
            oracle.eval(state).map(|label| LabeledPoint { state, label })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledSample::new(points, Some(trajs))
}

/// The exact data distribution `G = p_H^behavior` as a labeled table.
pub fn population_table(spec: &MdpSpec, oracle: &PropertyOracle, behavior: &Policy) -> Result<WeightedEmpirical> {
    let p = final_distribution(spec, behavior)?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (&s, &q) in spec.valid_states().iter().zip(&p) {
        if q > 0.0 {
            atoms.push(Atom { state: s, label: oracle.eval(s)? });
            weights.push(q);
        }
    }
    WeightedEmpirical::from_weights(atoms, weights, false)
}
