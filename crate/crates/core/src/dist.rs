//! Labeled samples and signed-weight empirical distributions over labeled states.
//!
//! [`WeightedEmpirical`] is the single input type for every learner in the crate:
//! the sample distribution Ĝ, the population table G, bootstrap resamples,
//! split halves, and the signed ε-perturbations used for numerical
//! functional derivatives all share it.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_distr::{Binomial, Distribution};

use crate::env::{StateId, Trajectory};
use crate::error::{Error, Result};
use crate::seed::{self, Fingerprint};

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub state: StateId,
    pub label: f64,
}

/// Where a sample came from. Samples generated by rolling out a behavior
/// policy are guaranteed to have a state distribution realized by that
/// policy; external ones are not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Provenance {
    #[default]
    Generated,
    External,
}

/// A finite labeled sample `{(s_n, f*(s_n))}` with optional trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    points: Vec<LabeledPoint>,
    trajectories: Option<Vec<Trajectory>>,
    provenance: Provenance,
}

impl LabeledSample {
    pub fn new(points: Vec<LabeledPoint>, trajectories: Option<Vec<Trajectory>>) -> Result<Self> {
        if points.iter().any(|p| !p.label.is_finite()) {
            return Err(Error::contract("labels must be finite"));
        }
        if let Some(trajs) = &trajectories {
            if trajs.len() != points.len() {
                return Err(Error::contract("one trajectory per point required"));
            }
            for (i, (t, p)) in trajs.iter().zip(&points).enumerate() {
                if t.states.len() != t.actions.len() + 1 || t.final_state() != p.state {
                    return Err(Error::contract(format!("trajectory {i} does not end at point {i}'s state")));
                }
            }
        }
        Ok(LabeledSample { points, trajectories, provenance: Provenance::Generated })
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn trajectories(&self) -> Option<&[Trajectory]> {
        self.trajectories.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mark_external(mut self) -> Self {
        self.provenance = Provenance::External;
        self
    }

    /// Writes `state_id,label` rows; labels carry 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| csv_error(path, e);
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["state_id", "label"]).map_err(io)?;
        for p in &self.points {
            w.write_record([p.state.to_string(), format!("{:.16e}", p.label)]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }

    /// Writes one `s0,a0,s1,...,sH` row per trajectory.
    pub fn write_trajectories(&self, path: &Path) -> Result<()> {
        let trajs = self.trajectories.as_ref().ok_or(Error::MissingTrajectories)?;
        let io = |e: csv::Error| csv_error(path, e);
        let mut w = csv::WriterBuilder::new().flexible(true).has_headers(false).from_path(path).map_err(io)?;
        for t in trajs {
            let mut rec = Vec::with_capacity(t.states.len() + t.actions.len());
            for (h, s) in t.states.iter().enumerate() {
                rec.push(s.to_string());
                if let Some(a) = t.actions.get(h) {
                    rec.push(a.to_string());
                }
            }
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }

    /// Reads a sample written by [`write_csv`](Self::write_csv) and an optional
    /// trajectory sidecar. The result is marked [`Provenance::External`].
    pub fn read_csv(path: &Path, trajectories: Option<&Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let field = |i: usize| rec.get(i).ok_or_else(|| parse_error(path, "missing column"));
            let state = field(0)?.trim().parse::<StateId>().map_err(|e| parse_error(path, e))?;
            let label = field(1)?.trim().parse::<f64>().map_err(|e| parse_error(path, e))?;
            points.push(LabeledPoint { state, label });
        }
        let trajs = match trajectories {
            None => None,
            Some(tp) => {
                let mut r = csv::ReaderBuilder::new()
                    .flexible(true)
                    .has_headers(false)
                    .from_path(tp)
                    .map_err(|e| csv_error(tp, e))?;
                let mut out = Vec::new();
                for rec in r.records() {
                    let rec = rec.map_err(|e| csv_error(tp, e))?;
                    let nums = rec
                        .iter()
                        .map(|f| f.trim().parse::<usize>().map_err(|e| parse_error(tp, e)))
                        .collect::<Result<Vec<_>>>()?;
                    if nums.len() % 2 == 0 {
                        return Err(parse_error(tp, "trajectory rows must alternate states and actions"));
                    }
                    let states = nums.iter().step_by(2).copied().collect();
                    let actions = nums.iter().skip(1).step_by(2).copied().collect();
                    out.push(Trajectory { states, actions });
                }
                Some(out)
            }
        };
        Ok(LabeledSample::new(points, trajs)?.mark_external())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::Parse { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

fn parse_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse { path: path.to_path_buf(), message: e.to_string() }
}

/// A labeled state; atoms are identified by `(state, label)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub state: StateId,
    pub label: f64,
}

impl Atom {
    fn key(&self) -> (StateId, u64) {
        (self.state, self.label.to_bits())
    }
}

/// One trajectory leading to an atom, with its multiplicity within the atom.
#[derive(Debug, Clone, PartialEq)]
pub struct PathShare {
    pub trajectory: Arc<Trajectory>,
    pub count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(1 − ε)·g + ε·δ_x`
    Toward,
    /// `(1 + ε)·g − ε·δ_x` (signed)
    Away,
}

/// Finite signed measure with total mass one over distinct labeled states.
#[derive(Debug, Clone)]
pub struct WeightedEmpirical {
    atoms: Vec<Atom>,
    weights: Vec<f64>,
    signed: bool,
    sample_size: Option<usize>,
    paths: Option<Vec<Vec<PathShare>>>,
}

impl WeightedEmpirical {
    /// Builds a distribution from possibly repeated atoms; duplicates merge.
    pub fn from_weights(atoms: Vec<Atom>, weights: Vec<f64>, signed: bool) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::contract("one weight per atom required"));
        }
        Self::assemble(atoms, weights, None, signed, None)
    }

    fn assemble(
        atoms: Vec<Atom>,
        weights: Vec<f64>,
        paths: Option<Vec<Vec<PathShare>>>,
        signed: bool,
        sample_size: Option<usize>,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut index: HashMap<(StateId, u64), usize> = HashMap::with_capacity(atoms.len());
        let mut out_atoms = Vec::with_capacity(atoms.len());
        let mut out_weights: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut out_paths: Option<Vec<Vec<PathShare>>> = paths.as_ref().map(|_| Vec::new());
        let mut path_iter = paths.map(Vec::into_iter);
        for (atom, w) in atoms.into_iter().zip(weights) {
            if !atom.label.is_finite() || !w.is_finite() {
                return Err(Error::contract("atoms and weights must be finite"));
            }
            if !signed && w < 0.0 {
                return Err(Error::contract("negative weight in an unsigned distribution"));
            }
            let shares = path_iter.as_mut().map(|it| it.next().expect("paths align with atoms"));
            match index.get(&atom.key()) {
                Some(&i) => {
                    // Shares are relative within an atom; rescale by atom mass before merging.
                    if let (Some(op), Some(sh)) = (out_paths.as_mut(), shares) {
                        merge_shares(&mut op[i], out_weights[i], sh, w);
                    }
                    out_weights[i] += w;
                }
                None => {
                    index.insert(atom.key(), out_atoms.len());
                    out_atoms.push(atom);
                    out_weights.push(w);
                    if let (Some(op), Some(sh)) = (out_paths.as_mut(), shares) {
                        op.push(sh);
                    }
                }
            }
        }
        let total: f64 = out_weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::contract(format!("weights sum to {total}, not 1")));
        }
        Ok(WeightedEmpirical { atoms: out_atoms, weights: out_weights, signed, sample_size, paths: out_paths })
    }

    /// Declares the size of the underlying multiset (weights must be multiples of `1/n`).
    pub fn with_sample_size(mut self, n: usize) -> Result<Self> {
        if self.signed || n == 0 {
            return Err(Error::contract("sample size applies to unsigned empirical distributions"));
        }
        for &w in &self.weights {
            integral(w * n as f64)?;
        }
        self.sample_size = Some(n);
        Ok(self)
    }

    /// The empirical distribution of a sample: weight = multiplicity / N.
    pub fn empirical(sample: &LabeledSample) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = sample.len();
        let mut index: HashMap<(StateId, u64), usize> = HashMap::new();
        let mut atoms = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, p) in sample.points().iter().enumerate() {
            let atom = Atom { state: p.state, label: p.label };
            let j = *index.entry(atom.key()).or_insert_with(|| {
                atoms.push(atom);
                counts.push(0);
                members.push(Vec::new());
                atoms.len() - 1
            });
            counts[j] += 1;
            members[j].push(i);
        }
        let paths = sample.trajectories().map(|trajs| {
            members
                .iter()
                .map(|idx| {
                    let mut seen: HashMap<&Trajectory, usize> = HashMap::new();
                    let mut shares: Vec<PathShare> = Vec::new();
                    for &i in idx {
                        let t = &trajs[i];
                        match seen.get(t) {
                            Some(&k) => shares[k].count += 1.0,
                            None => {
                                seen.insert(t, shares.len());
                                shares.push(PathShare { trajectory: Arc::new(t.clone()), count: 1.0 });
                            }
                        }
                    }
                    shares
                })
                .collect()
        });
        let weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(WeightedEmpirical { atoms, weights, signed: false, sample_size: Some(n), paths })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// Size of the underlying multiset, when this is an empirical distribution.
    pub fn sample_size(&self) -> Option<usize> {
        self.sample_size
    }

    pub fn has_trajectories(&self) -> bool {
        self.paths.is_some()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, f64)> {
        self.atoms.iter().zip(self.weights.iter().copied())
    }

    /// `Σ_i weight_i · h(atom_i)`.
    pub fn expect<F: FnMut(&Atom) -> f64>(&self, mut h: F) -> f64 {
        self.iter().map(|(a, w)| w * h(a)).sum()
    }

    pub fn try_expect<F: FnMut(&Atom) -> Result<f64>>(&self, mut h: F) -> Result<f64> {
        let mut acc = 0.0;
        for (a, w) in self.iter() {
            acc += w * h(a)?;
        }
        Ok(acc)
    }

    pub fn position(&self, atom: &Atom) -> Option<usize> {
        self.atoms.iter().position(|a| a.key() == atom.key())
    }

    /// Total weight per state, in order of first appearance.
    pub fn state_marginal(&self) -> Vec<(StateId, f64)> {
        let mut index: HashMap<StateId, usize> = HashMap::new();
        let mut out: Vec<(StateId, f64)> = Vec::new();
        for (a, w) in self.iter() {
            match index.get(&a.state) {
                Some(&i) => out[i].1 += w,
                None => {
                    index.insert(a.state, out.len());
                    out.push((a.state, w));
                }
            }
        }
        out
    }

    /// Trajectories with their effective weights `atom weight × within-atom share`.
    pub fn trajectory_weights(&self) -> Result<Vec<(&Trajectory, f64)>> {
        let paths = self.paths.as_ref().ok_or(Error::MissingTrajectories)?;
        let mut out = Vec::new();
        for (shares, &w) in paths.iter().zip(&self.weights) {
            let total: f64 = shares.iter().map(|s| s.count).sum();
            if total <= 0.0 {
                continue;
            }
            for s in shares {
                out.push((s.trajectory.as_ref(), w * s.count / total));
            }
        }
        Ok(out)
    }

    /// Draws `n` points with replacement using the weights as probabilities.
    pub fn bootstrap_resample(&self, n: usize, rng_seed: u64) -> Result<Self> {
        if self.signed {
            return Err(Error::contract("cannot resample from a signed measure"));
        }
        if n == 0 {
            return Err(Error::invalid("resample size must be positive"));
        }
        let mut rng = seed::rng(rng_seed);
        let counts = multinomial(&mut rng, n as u64, &self.weights);
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        let mut paths = self.paths.as_ref().map(|_| Vec::new());
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            atoms.push(self.atoms[i]);
            weights.push(c as f64 / n as f64);
            if let (Some(out), Some(src)) = (paths.as_mut(), self.paths.as_ref()) {
                let shares = &src[i];
                let draws = multinomial(&mut rng, c, &shares.iter().map(|s| s.count).collect::<Vec<_>>());
                out.push(
                    shares
                        .iter()
                        .zip(draws)
                        .filter(|(_, k)| *k > 0)
                        .map(|(s, k)| PathShare { trajectory: s.trajectory.clone(), count: k as f64 })
                        .collect(),
                );
            }
        }
        Ok(WeightedEmpirical { atoms, weights, signed: false, sample_size: Some(n), paths })
    }

    /// Random partition of the underlying multiset into halves of sizes
    /// `round(frac·N)` and `N − round(frac·N)`, each renormalized.
    pub fn split(&self, frac: f64, rng_seed: u64) -> Result<(Self, Self)> {
        if self.signed {
            return Err(Error::contract("cannot split a signed measure"));
        }
        if !(frac > 0.0 && frac < 1.0) {
            return Err(Error::invalid(format!("split fraction {frac} outside (0, 1)")));
        }
        let n = self.sample_size.ok_or_else(|| Error::contract("split needs an empirical distribution"))?;
        if n < 2 {
            return Err(Error::invalid("split needs at least two points"));
        }
        let n_first = (frac * n as f64).round() as usize;
        if n_first == 0 || n_first == n {
            return Err(Error::invalid(format!("fraction {frac} of {n} points leaves one side empty")));
        }
        // Expand back to unit points: (atom, path) pairs.
        let mut units: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
        for (i, &w) in self.weights.iter().enumerate() {
            let c = integral(w * n as f64)?;
            match self.paths.as_ref() {
                Some(p) => {
                    let mut used = 0;
                    for (j, s) in p[i].iter().enumerate() {
                        let k = integral(s.count)?;
                        used += k;
                        units.extend(std::iter::repeat_n((i, Some(j)), k));
                    }
                    if used != c {
                        return Err(Error::contract("path counts do not match atom multiplicity"));
                    }
                }
                None => units.extend(std::iter::repeat_n((i, None), c)),
            }
        }
        if units.len() != n {
            return Err(Error::contract("atom multiplicities do not add up to the sample size"));
        }
        let mut rng = seed::rng(rng_seed);
        units.shuffle(&mut rng);
        let (a, b) = units.split_at(n_first);
        Ok((self.from_units(a)?, self.from_units(b)?))
    }

    fn from_units(&self, units: &[(usize, Option<usize>)]) -> Result<Self> {
        let m = units.len();
        let mut order: Vec<usize> = Vec::new();
        let mut counts: HashMap<usize, (usize, Vec<(usize, f64)>)> = HashMap::new();
        for &(i, j) in units {
            let e = counts.entry(i).or_insert_with(|| {
                order.push(i);
                (0, Vec::new())
            });
            e.0 += 1;
            if let Some(j) = j {
                match e.1.iter_mut().find(|(jj, _)| *jj == j) {
                    Some(slot) => slot.1 += 1.0,
                    None => e.1.push((j, 1.0)),
                }
            }
        }
        order.sort_unstable();
        let atoms = order.iter().map(|&i| self.atoms[i]).collect();
        let weights = order.iter().map(|i| counts[i].0 as f64 / m as f64).collect();
        let paths = self.paths.as_ref().map(|src| {
            order
                .iter()
                .map(|i| {
                    counts[i]
                        .1
                        .iter()
                        .map(|&(j, k)| PathShare { trajectory: src[*i][j].trajectory.clone(), count: k })
                        .collect()
                })
                .collect()
        });
        Ok(WeightedEmpirical { atoms, weights, signed: false, sample_size: Some(m), paths })
    }

    /// `(1 − ε)·g + ε·δ_atom` or `(1 + ε)·g − ε·δ_atom`.
    ///
    /// `ε = 0` returns `g` unchanged. An atom outside the support is appended
    /// with zero base weight.
    pub fn perturb(&self, atom: &Atom, eps: f64, direction: Direction) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::invalid(format!("perturbation size {eps} outside [0, 1)")));
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        out.sample_size = None;
        let pos = match self.position(atom) {
            Some(p) => p,
            None => {
                out.atoms.push(*atom);
                out.weights.push(0.0);
                if let Some(p) = out.paths.as_mut() {
                    p.push(Vec::new());
                }
                out.atoms.len() - 1
            }
        };
        let (scale, point) = match direction {
            Direction::Toward => (1.0 - eps, eps),
            Direction::Away => (1.0 + eps, -eps),
        };
        for w in out.weights.iter_mut() {
            *w *= scale;
        }
        out.weights[pos] += point;
        out.signed = self.signed || direction == Direction::Away || out.weights.iter().any(|&w| w < 0.0);
        Ok(out)
    }

    /// Affine combination `Σ_k c_k·g_k` with `Σ_k c_k = 1` over the union support.
    pub fn mix(components: &[(f64, &WeightedEmpirical)]) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid("mixture coefficients must sum to one"));
        }
        let with_paths = components.iter().all(|(_, g)| g.paths.is_some());
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        let mut paths = with_paths.then(Vec::new);
        let mut signed = false;
        for &(c, g) in components {
            signed |= c < 0.0 || g.signed;
            for (i, (a, w)) in g.iter().enumerate() {
                atoms.push(*a);
                weights.push(c * w);
                if let Some(p) = paths.as_mut() {
                    p.push(g.paths.as_ref().unwrap()[i].clone());
                }
            }
        }
        let mut out = Self::assemble(atoms, weights, paths, true, None)?;
        out.signed = signed || out.weights.iter().any(|&w| w < 0.0);
        Ok(out)
    }

    /// Fingerprint of atoms and weights; pairs bias reports with their sample.
    pub fn fingerprint(&self) -> u64 {
        let mut fp = Fingerprint::new().u64(self.atoms.len() as u64);
        for (a, w) in self.iter() {
            fp = fp.u64(a.state as u64).f64(a.label).f64(w);
        }
        fp.finish()
    }
}

fn merge_shares(existing: &mut Vec<PathShare>, existing_mass: f64, incoming: Vec<PathShare>, incoming_mass: f64) {
    let norm = |v: &[PathShare]| v.iter().map(|s| s.count).sum::<f64>().max(f64::MIN_POSITIVE);
    let (ea, ia) = (existing_mass / norm(existing), incoming_mass / norm(&incoming));
    for s in existing.iter_mut() {
        s.count *= ea;
    }
    for s in incoming {
        match existing.iter_mut().find(|e| e.trajectory == s.trajectory) {
            Some(e) => e.count += s.count * ia,
            None => existing.push(PathShare { trajectory: s.trajectory, count: s.count * ia }),
        }
    }
}

fn integral(x: f64) -> Result<usize> {
    let r = x.round();
    if (x - r).abs() > 1e-6 || r < 0.0 {
        return Err(Error::contract(format!("expected an integral multiplicity, got {x}")));
    }
    Ok(r as usize)
}

/// Multinomial counts via sequential conditional binomials.
fn multinomial<R: rand::Rng>(rng: &mut R, n: u64, weights: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; weights.len()];
    let mut remaining_n = n;
    let mut remaining_mass: f64 = weights.iter().sum();
    for (i, &w) in weights.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if i + 1 == weights.len() {
            out[i] = remaining_n;
            break;
        }
        let p = if remaining_mass > 0.0 { (w / remaining_mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if p >= 1.0 {
            remaining_n
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(remaining_n, p).expect("valid binomial").sample(rng)
        };
        out[i] = k;
        remaining_n -= k;
        remaining_mass -= w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(labels: &[(StateId, f64)]) -> LabeledSample {
        LabeledSample::new(labels.iter().map(|&(state, label)| LabeledPoint { state, label }).collect(), None).unwrap()
    }

    fn atom(state: StateId, label: f64) -> Atom {
        Atom { state, label }
    }

    #[test]
    fn distinct_points_get_equal_weight() {
        let g = WeightedEmpirical::empirical(&sample(&[(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0)])).unwrap();
        assert_eq!(g.weights(), &[0.25; 4]);
        assert_eq!(g.sample_size(), Some(4));
    }

    #[test]
    fn duplicates_merge_by_multiplicity() {
        let g = WeightedEmpirical::empirical(&sample(&[(5, 1.0), (5, 1.0), (6, 2.0)])).unwrap();
        assert_eq!(g.len(), 2);
        assert!((g.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((g.weights()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn empty_sample_is_rejected() {
        assert!(matches!(WeightedEmpirical::empirical(&sample(&[])), Err(Error::EmptySample)));
    }

    #[test]
    fn single_draw_resample_is_a_point_mass() {
        let g = WeightedEmpirical::empirical(&sample(&[(0, 1.0), (1, 2.0), (2, 3.0)])).unwrap();
        let r = g.bootstrap_resample(1, 9).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weights(), &[1.0]);
    }

    #[test]
    fn signed_input_cannot_be_resampled() {
        let g = WeightedEmpirical::empirical(&sample(&[(0, 1.0), (1, 2.0)])).unwrap();
        let s = g.perturb(&atom(0, 1.0), 0.5, Direction::Away).unwrap();
        assert!(s.is_signed());
        assert!(s.bootstrap_resample(2, 0).is_err());
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        let pts: Vec<_> = (0..10).map(|i| (i, i as f64)).collect();
        let g = WeightedEmpirical::empirical(&sample(&pts)).unwrap();
        let (a, b) = g.split(0.5, 3).unwrap();
        assert_eq!((a.sample_size(), b.sample_size()), (Some(5), Some(5)));
        let (a, b) = g.split(0.8, 3).unwrap();
        assert_eq!((a.sample_size(), b.sample_size()), (Some(8), Some(2)));
        assert!(g.split(0.01, 3).is_err());
        assert!(g.split(1.0, 3).is_err());
    }

    #[test]
    fn zero_eps_perturbation_is_identity() {
        let g = WeightedEmpirical::empirical(&sample(&[(0, 1.0), (1, 3.0)])).unwrap();
        for d in [Direction::Toward, Direction::Away] {
            let p = g.perturb(&atom(0, 1.0), 0.0, d).unwrap();
            assert_eq!(p.weights(), g.weights());
            assert!(!p.is_signed());
        }
        assert!(g.perturb(&atom(0, 1.0), 1.0, Direction::Toward).is_err());
        assert!(g.perturb(&atom(0, 1.0), -0.1, Direction::Toward).is_err());
    }

    #[test]
    fn away_perturbation_weight_arithmetic() {
        let g = WeightedEmpirical::empirical(&sample(&[(0, 1.0), (1, 3.0), (2, 5.0), (3, 7.0)])).unwrap();
        let eps = 0.3;
        let p = g.perturb(&atom(1, 3.0), eps, Direction::Away).unwrap();
        assert!((p.weights()[1] - ((1.0 + eps) * 0.25 - eps)).abs() < 1e-15);
        assert!((p.weights()[0] - (1.0 + eps) * 0.25).abs() < 1e-15);
        assert!((p.total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn toward_perturbation_mean_is_linear() {
        let g = WeightedEmpirical::empirical(&sample(&[(0, 1.0), (1, 3.0), (2, 8.0)])).unwrap();
        let eps = 0.2;
        let p = g.perturb(&atom(2, 8.0), eps, Direction::Toward).unwrap();
        let mean = |d: &WeightedEmpirical| d.expect(|a| a.label);
        assert!((mean(&p) - ((1.0 - eps) * mean(&g) + eps * 8.0)).abs() < 1e-14);
    }

    #[test]
    fn expect_basics() {
        let g = WeightedEmpirical::empirical(&sample(&[(0, 1.0), (1, 3.0)])).unwrap();
        assert_eq!(g.expect(|_| 1.0), 1.0);
        assert_eq!(g.expect(|a| a.label), 2.0);
        // Two atoms {1, 3} at 1/2 each, pushed away from the atom at 1 by ε = 1/2:
        // weights become 1.5·0.5 − 0.5 = 0.25 and 1.5·0.5 = 0.75, so E[label] = 0.25 + 2.25 = 2.5.
        let s = g.perturb(&atom(0, 1.0), 0.5, Direction::Away).unwrap();
        assert!((s.expect(|a| a.label) - 2.5).abs() < 1e-15);
        // Pushed away from the atom at 3: weights 0.75 and 0.25, E = 0.75 + 0.75 = 1.5.
        let s = g.perturb(&atom(1, 3.0), 0.5, Direction::Away).unwrap();
        assert!((s.expect(|a| a.label) - 1.5).abs() < 1e-15);
        // Four atoms at 1/4: the pushed-away atom goes to 1.5/4 − 0.5 = −0.125.
        let g4 = WeightedEmpirical::empirical(&sample(&[(0, 1.0), (1, 3.0), (2, 5.0), (3, 7.0)])).unwrap();
        let s = g4.perturb(&atom(3, 7.0), 0.5, Direction::Away).unwrap();
        assert_eq!(s.weights()[3], -0.125);
        // E = 0.375·(1 + 3 + 5) − 0.125·7 = 3.375 − 0.875 = 2.5
        assert!((s.expect(|a| a.label) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let traj = |s: Vec<usize>, a: Vec<usize>| Trajectory { states: s, actions: a };
        let labels = [0.1 + 0.2, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE];
        let points: Vec<_> = labels.iter().enumerate().map(|(i, &l)| LabeledPoint { state: 10 + i, label: l }).collect();
        let trajs = (0..4).map(|i| traj(vec![0, 2, 10 + i], vec![1, i])).collect();
        let s = LabeledSample::new(points, Some(trajs)).unwrap();
        let (p, t) = (dir.path().join("d.csv"), dir.path().join("d.traj.csv"));
        s.write_csv(&p).unwrap();
        s.write_trajectories(&t).unwrap();
        let back = LabeledSample::read_csv(&p, Some(&t)).unwrap();
        assert_eq!(back.points(), s.points());
        assert_eq!(back.trajectories(), s.trajectories());
        assert_eq!(back.provenance(), Provenance::External);
    }
}
