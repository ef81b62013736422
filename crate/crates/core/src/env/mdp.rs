use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::seed;

pub type StateId = usize;
pub type ActionId = usize;

/// Sparse transition row: `(next state, probability)` pairs.
pub type SparseRow = Vec<(StateId, f64)>;

const ROW_TOL: f64 = 1e-12;
const DIST_TOL: f64 = 1e-10;

/// Transition rows for the states that can be occupied at one step.
///
/// `rows[i][a]` is `None` when action `a` is not available in `states[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTable {
    states: Vec<StateId>,
    rows: Vec<Vec<Option<SparseRow>>>,
}

impl StepTable {
    pub fn new(mut entries: Vec<(StateId, Vec<Option<SparseRow>>)>) -> Result<Self> {
        entries.sort_by_key(|(s, _)| *s);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::contract(format!("state {} listed twice in a step table", w[0].0)));
            }
        }
        let (states, rows) = entries.into_iter().unzip();
        Ok(StepTable { states, rows })
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn local_index(&self, state: StateId) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }

    pub fn row(&self, local: usize, action: ActionId) -> Option<&SparseRow> {
        self.rows[local].get(action).and_then(Option::as_ref)
    }

    pub fn is_available(&self, local: usize, action: ActionId) -> bool {
        self.row(local, action).is_some()
    }

    pub fn available(&self, local: usize) -> impl Iterator<Item = ActionId> + '_ {
        self.rows[local].iter().enumerate().filter_map(|(a, r)| r.as_ref().map(|_| a))
    }
}

/// A finite-horizon MDP with a terminal state and a terminal action.
///
/// Steps are indexed `0..=horizon`. At step `horizon` the only available
/// action is the terminal action, which moves to the terminal state; the
/// state occupied at that step is the scored outcome.
#[derive(Debug, Clone)]
pub struct MdpSpec {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    steps: Vec<StepTable>,
    initial: SparseRow,
    terminal_state: StateId,
    terminal_action: ActionId,
    valid_states: Vec<StateId>,
    valid_index: Vec<u32>,
}

const NOT_VALID: u32 = u32::MAX;

impl MdpSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        steps: Vec<StepTable>,
        initial: SparseRow,
        terminal_state: StateId,
        terminal_action: ActionId,
        mut valid_states: Vec<StateId>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if steps.len() != horizon + 1 {
            return Err(Error::contract(format!(
                "expected {} step tables, got {}",
                horizon + 1,
                steps.len()
            )));
        }
        if terminal_state >= num_states || terminal_action >= num_actions {
            return Err(Error::contract("terminal state/action out of range"));
        }
        valid_states.sort_unstable();
        valid_states.dedup();
        let mut valid_index = vec![NOT_VALID; num_states];
        for (i, &s) in valid_states.iter().enumerate() {
            if s >= num_states {
                return Err(Error::UnknownState(s));
            }
            valid_index[s] = i as u32;
        }
        let spec = MdpSpec {
            num_states,
            num_actions,
            horizon,
            steps,
            initial,
            terminal_state,
            terminal_action,
            valid_states,
            valid_index,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        check_row(&self.initial, self.num_states, "initial distribution")?;
        for (h, table) in self.steps.iter().enumerate() {
            for (local, &s) in table.states.iter().enumerate() {
                if s >= self.num_states {
                    return Err(Error::UnknownState(s));
                }
                if table.rows[local].len() > self.num_actions {
                    return Err(Error::contract(format!("state {s} at step {h} has too many actions")));
                }
                if table.available(local).next().is_none() {
                    return Err(Error::contract(format!("state {s} at step {h} has no available action")));
                }
                for a in table.available(local) {
                    let row = table.row(local, a).unwrap();
                    check_row(row, self.num_states, &format!("T_{h}(.|{s},{a})"))?;
                    if h == self.horizon {
                        let terminal_ok = a == self.terminal_action
                            && row.len() == 1
                            && row[0].0 == self.terminal_state
                            && (row[0].1 - 1.0).abs() <= ROW_TOL;
                        if !terminal_ok {
                            return Err(Error::contract(format!(
                                "at the final step only the terminal action may be available, and it must reach the terminal state (state {s}, action {a})"
                            )));
                        }
                    } else if a == self.terminal_action {
                        return Err(Error::contract(format!(
                            "terminal action available before the final step (state {s}, step {h})"
                        )));
                    }
                }
            }
        }
        // Every reachable state needs a row at its step, and everything
        // reachable at the final step must be a valid outcome.
        let reach = self.reachable_sets();
        for (h, set) in reach.iter().enumerate() {
            for &s in set {
                if self.steps[h].local_index(s).is_none() {
                    return Err(Error::contract(format!("state {s} reachable at step {h} has no transition rows")));
                }
            }
        }
        for &s in &reach[self.horizon] {
            if !self.is_valid(s) {
                return Err(Error::contract(format!("state {s} reachable at the final step is not a valid state")));
            }
        }
        Ok(())
    }

    /// States reachable at each step under some policy.
    pub fn reachable_sets(&self) -> Vec<BTreeSet<StateId>> {
        let mut out = Vec::with_capacity(self.horizon + 1);
        let mut current: BTreeSet<StateId> =
            self.initial.iter().filter(|(_, p)| *p > 0.0).map(|(s, _)| *s).collect();
        for h in 0..=self.horizon {
            let mut next = BTreeSet::new();
            if h < self.horizon {
                let table = &self.steps[h];
                for &s in &current {
                    if let Some(local) = table.local_index(s) {
                        for a in table.available(local) {
                            for &(t, p) in table.row(local, a).unwrap() {
                                if p > 0.0 {
                                    next.insert(t);
                                }
                            }
                        }
                    }
                }
            }
            out.push(std::mem::replace(&mut current, next));
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn step(&self, h: usize) -> &StepTable {
        &self.steps[h]
    }

    pub fn steps(&self) -> &[StepTable] {
        &self.steps
    }

    pub fn initial(&self) -> &SparseRow {
        &self.initial
    }

    pub fn terminal_state(&self) -> StateId {
        self.terminal_state
    }

    pub fn terminal_action(&self) -> ActionId {
        self.terminal_action
    }

    pub fn valid_states(&self) -> &[StateId] {
        &self.valid_states
    }

    pub fn is_valid(&self, s: StateId) -> bool {
        self.valid_position(s).is_some()
    }

    /// Position of `s` in [`valid_states`](Self::valid_states).
    pub fn valid_position(&self, s: StateId) -> Option<usize> {
        match self.valid_index.get(s) {
            Some(&i) if i != NOT_VALID => Some(i as usize),
            _ => None,
        }
    }

    /// Number of deterministic step-wise policies (product of available action counts).
    pub fn deterministic_policy_count(&self) -> u128 {
        let mut total: u128 = 1;
        for table in &self.steps[..self.horizon] {
            for local in 0..table.len() {
                let k = table.available(local).count() as u128;
                total = total.saturating_mul(k);
            }
        }
        total
    }
}

fn check_row(row: &SparseRow, num_states: usize, what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &(s, p) in row {
        if s >= num_states {
            return Err(Error::UnknownState(s));
        }
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::contract(format!("{what} has a negative or non-finite entry {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::contract(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Per-step state distributions `p_h`, `h = 0..=H`, as dense vectors over all states.
pub fn state_distributions(spec: &MdpSpec, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    policy.check_against(spec)?;
    let n = spec.num_states();
    let mut dists = Vec::with_capacity(spec.horizon() + 1);
    let mut p = vec![0.0; n];
    for &(s, q) in spec.initial() {
        p[s] += q;
    }
    for h in 0..spec.horizon() {
        let table = spec.step(h);
        let mut next = vec![0.0; n];
        for (s, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let local = table
                .local_index(s)
                .ok_or_else(|| Error::contract(format!("policy reaches state {s} at step {h} where it is undefined")))?;
            let probs = policy.row(h, local);
            for a in table.available(local) {
                let pa = probs[a];
                if pa == 0.0 {
                    continue;
                }
                for &(t, q) in table.row(local, a).unwrap() {
                    next[t] += mass * pa * q;
                }
            }
        }
        check_mass(&p, h)?;
        dists.push(std::mem::replace(&mut p, next));
    }
    check_mass(&p, spec.horizon())?;
    dists.push(p);
    Ok(dists)
}

fn check_mass(p: &[f64], h: usize) -> Result<()> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > DIST_TOL {
        return Err(Error::contract(format!("state distribution at step {h} sums to {total}")));
    }
    Ok(())
}

/// Final-step distribution aligned with [`MdpSpec::valid_states`].
pub fn final_distribution(spec: &MdpSpec, policy: &Policy) -> Result<Vec<f64>> {
    let dists = state_distributions(spec, policy)?;
    let last = &dists[spec.horizon()];
    Ok(spec.valid_states().iter().map(|&s| last[s]).collect())
}

/// Backward value recursion: `V_H = terminal values`, `V_h = P_h^π V_{h+1}`.
///
/// `terminal` is aligned with [`MdpSpec::valid_states`]. Returned vectors are
/// dense over all states; entries for states without rows at a step are zero.
pub fn backward_values(spec: &MdpSpec, policy: &Policy, terminal: &[f64]) -> Result<Vec<Vec<f64>>> {
    if terminal.len() != spec.valid_states().len() {
        return Err(Error::contract("terminal values must align with valid states"));
    }
    policy.check_against(spec)?;
    let n = spec.num_states();
    let mut v = vec![0.0; n];
    for (i, &s) in spec.valid_states().iter().enumerate() {
        v[s] = terminal[i];
    }
    let mut out = vec![Vec::new(); spec.horizon() + 1];
    for h in (0..spec.horizon()).rev() {
        let table = spec.step(h);
        let mut cur = vec![0.0; n];
        for (local, &s) in table.states().iter().enumerate() {
            let probs = policy.row(h, local);
            let mut acc = 0.0;
            for a in table.available(local) {
                if probs[a] == 0.0 {
                    continue;
                }
                let q: f64 = table.row(local, a).unwrap().iter().map(|&(t, p)| p * v[t]).sum();
                acc += probs[a] * q;
            }
            cur[s] = acc;
        }
        out[h + 1] = std::mem::replace(&mut v, cur);
    }
    out[0] = v;
    Ok(out)
}

/// `(s_0, a_0, s_1, ..., a_{H-1}, s_H)`; the forced terminal action is not stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<StateId>,
    pub actions: Vec<ActionId>,
}

impl Trajectory {
    pub fn final_state(&self) -> StateId {
        *self.states.last().expect("trajectory has at least one state")
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

fn sample_index<R: rand::Rng>(rng: &mut R, weights: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = None;
    for (i, w) in weights {
        if w <= 0.0 {
            continue;
        }
        cum += w;
        last = Some(i);
        if u < cum {
            return Some(i);
        }
    }
    last
}

/// Rolls out `n` trajectories under `policy` with a deterministic stream from `rng_seed`.
pub fn sample_trajectories(spec: &MdpSpec, policy: &Policy, n: usize, rng_seed: u64) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::invalid("trajectory count must be at least 1"));
    }
    policy.check_against(spec)?;
    let mut rng = seed::rng(rng_seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s0 = spec.initial()[sample_index(&mut rng, spec.initial().iter().map(|x| x.1).enumerate())
            .ok_or_else(|| Error::contract("empty initial distribution"))?]
        .0;
        let mut states = Vec::with_capacity(spec.horizon() + 1);
        let mut actions = Vec::with_capacity(spec.horizon());
        states.push(s0);
        let mut s = s0;
        for h in 0..spec.horizon() {
            let table = spec.step(h);
            let local = table
                .local_index(s)
                .ok_or_else(|| Error::contract(format!("no transition rows for state {s} at step {h}")))?;
            let probs = policy.row(h, local);
            let a = sample_index(&mut rng, table.available(local).map(|a| (a, probs[a])))
                .ok_or_else(|| Error::contract(format!("policy row at step {h}, state {s} has no mass")))?;
            let row = table.row(local, a).unwrap();
            let next = row[sample_index(&mut rng, row.iter().map(|x| x.1).enumerate()).unwrap()].0;
            actions.push(a);
            states.push(next);
            s = next;
        }
        out.push(Trajectory { states, actions });
    }
    Ok(out)
}
