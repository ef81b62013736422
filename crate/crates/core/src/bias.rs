//! Reusing-bias estimators over bivariate functionals `J(G1, G2)`.
//!
//! The reusing bias is `b_N = E[J(Ĝ, Ĝ) − J(Ĝ, G)]`. Bootstrap, split and
//! numerical-derivative estimators need only the sample; the brute-force
//! oracle needs the population.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{Direction, WeightedEmpirical};
use crate::env::{build_dataset, population_table, MdpSpec, PropertyOracle};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::seed::{derive_seed, Fingerprint};

/// Default bootstrap replicate count.
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 20;
/// Default perturbation size of [`frechet_bias`].
pub const DEFAULT_FRECHET_EPS: f64 = 0.25;
/// Reports error out when more than this fraction of replicates fail.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

/// A real-valued functional of two (possibly signed) distributions.
pub trait BivariateFunctional: Sync {
    fn eval(&self, g1: &WeightedEmpirical, g2: &WeightedEmpirical) -> Result<f64>;

    /// `J(g1, g2)` for several second arguments; implementations may share
    /// the work that depends only on `g1`.
    fn eval_many(&self, g1: &WeightedEmpirical, g2s: &[&WeightedEmpirical]) -> Result<Vec<f64>> {
        g2s.iter().map(|g2| self.eval(g1, g2)).collect()
    }

    /// Whether signed measures are accepted in both arguments.
    fn accepts_signed(&self) -> bool;

    fn is_deterministic(&self) -> bool {
        true
    }

    /// Configuration fingerprint, used to pair bias reports with functionals.
    fn id(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasMethod {
    Bootstrap,
    Split,
    Frechet,
    Oracle,
}

impl BiasMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BiasMethod::Bootstrap => "bootstrap",
            BiasMethod::Split => "split",
            BiasMethod::Frechet => "frechet",
            BiasMethod::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub method: BiasMethod,
    pub estimate: f64,
    /// Per-replicate values; for the Fréchet method, per-atom stencil terms.
    pub replicates: Vec<f64>,
    pub failed: usize,
    /// Monte-Carlo standard error of the estimate, where it is a replicate mean.
    pub stderr: Option<f64>,
    pub n: usize,
    /// M for bootstrap, split fraction, ε for Fréchet, dataset count for oracle.
    pub param: f64,
    pub seed: u64,
    pub functional_id: u64,
    pub sample_fingerprint: u64,
    /// Fréchet estimates at other ε, for diagnostics.
    pub eps_sweep: Vec<(f64, f64)>,
}

impl BiasReport {
    /// `method,estimate,n,param,seed,replicates_json`
    pub fn csv_row(&self) -> String {
        let reps = serde_json::to_string(&self.replicates).expect("finite floats serialize");
        format!(
            "{},{:.16e},{},{:.16e},{},\"{}\"",
            self.method.as_str(),
            self.estimate,
            self.n,
            self.param,
            self.seed,
            reps.replace('"', "\"\"")
        )
    }
}

pub const BIAS_CSV_HEADER: &str = "method,estimate,n,param,seed,replicates_json";

struct Replicates {
    values: Vec<f64>,
    failed: usize,
}

fn gather(results: Vec<Result<f64>>) -> Result<Replicates> {
    let total = results.len();
    let mut values = Vec::with_capacity(total);
    let mut failed = 0;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => failed += 1,
            Err(e) => {
                failed += 1;
                last_err = Some(e);
            }
        }
    }
    if values.is_empty() {
        // Every replicate failed; the underlying error is more useful than a count.
        return Err(last_err.unwrap_or(Error::ReplicateFailures { failed, total }));
    }
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(Error::ReplicateFailures { failed, total });
    }
    Ok(Replicates { values, failed })
}

fn mean_and_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = (values.len() > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    (mean, se)
}

/// `b̂ = (1/M) Σ_m [J(Ĝ*_m, Ĝ*_m) − J(Ĝ*_m, Ĝ)]` over resamples of size `n`
/// (default: the sample size of `g`).
pub fn bootstrap_bias<J: BivariateFunctional + ?Sized>(
    j: &J,
    g: &WeightedEmpirical,
    n: Option<usize>,
    m_reps: usize,
    rng_seed: u64,
) -> Result<BiasReport> {
    if g.is_signed() {
        return Err(Error::contract("bootstrap needs an unsigned sample"));
    }
    if m_reps == 0 {
        return Err(Error::invalid("need at least one bootstrap replicate"));
    }
    let n = n.or(g.sample_size()).ok_or_else(|| Error::invalid("resample size unknown; pass n explicitly"))?;
    let results: Vec<Result<f64>> = (0..m_reps)
        .into_par_iter()
        .map(|i| {
            let star = g.bootstrap_resample(n, derive_seed(rng_seed, "bootstrap", i as u64))?;
            let v = j.eval_many(&star, &[&star, g])?;
            Ok(v[0] - v[1])
        })
        .collect();
    let reps = gather(results)?;
    let (estimate, stderr) = mean_and_stderr(&reps.values);
    Ok(BiasReport {
        method: BiasMethod::Bootstrap,
        estimate,
        replicates: reps.values,
        failed: reps.failed,
        stderr,
        n,
        param: m_reps as f64,
        seed: rng_seed,
        functional_id: j.id(),
        sample_fingerprint: g.fingerprint(),
        eps_sweep: Vec::new(),
    })
}

/// `b_split = mean over splits of J(D, D) − J(D, T)` with `|D| = round(frac·N)`.
pub fn split_bias<J: BivariateFunctional + ?Sized>(
    j: &J,
    g: &WeightedEmpirical,
    frac: f64,
    n_repeats: usize,
    rng_seed: u64,
) -> Result<BiasReport> {
    if n_repeats == 0 {
        return Err(Error::invalid("need at least one split"));
    }
    // Surface configuration errors directly rather than as replicate failures.
    g.split(frac, derive_seed(rng_seed, "split", 0))?;
    let results: Vec<Result<f64>> = (0..n_repeats)
        .into_par_iter()
        .map(|i| {
            let (d, t) = g.split(frac, derive_seed(rng_seed, "split", i as u64))?;
            let v = j.eval_many(&d, &[&d, &t])?;
            Ok(v[0] - v[1])
        })
        .collect();
    let reps = gather(results)?;
    let (estimate, stderr) = mean_and_stderr(&reps.values);
    Ok(BiasReport {
        method: BiasMethod::Split,
        estimate,
        replicates: reps.values,
        failed: reps.failed,
        stderr,
        n: g.sample_size().unwrap_or(0),
        param: frac,
        seed: rng_seed,
        functional_id: j.id(),
        sample_fingerprint: g.fingerprint(),
        eps_sweep: Vec::new(),
    })
}

/// Per-atom stencil term `2·J̃^(1,1) + J̃^(0,2)` and the weighted estimate.
fn frechet_terms<J: BivariateFunctional + ?Sized>(j: &J, g: &WeightedEmpirical, eps: f64, n: usize) -> Result<(f64, Vec<f64>)> {
    let j_gg = j.eval(g, g)?;
    let terms: Vec<Result<f64>> = g
        .atoms()
        .par_iter()
        .map(|x| {
            let a = g.perturb(x, eps, Direction::Toward)?;
            let b = g.perturb(x, eps, Direction::Away)?;
            let from_a = j.eval_many(&a, &[&a, &b])?;
            let from_b = j.eval_many(&b, &[&a, &b])?;
            let from_g = j.eval_many(g, &[&a, &b])?;
            let j11 = (from_a[0] - from_a[1] - from_b[0] + from_b[1]) / (4.0 * eps * eps);
            let j02 = (from_g[0] - 2.0 * j_gg + from_g[1]) / (eps * eps);
            Ok(2.0 * j11 + j02)
        })
        .collect();
    let terms = terms.into_iter().collect::<Result<Vec<_>>>()?;
    let weighted: f64 = terms.iter().zip(g.weights()).map(|(t, w)| w * t).sum();
    Ok((weighted / (2.0 * n as f64), terms))
}

/// `b̃ = (1/2N) Σ_X g(X)·[2·J̃^(1,1) + J̃^(0,2)]` with finite-difference
/// stencils at `(1 − ε)g + εδ_X` and `(1 + ε)g − εδ_X`.
///
/// Also evaluates the estimate at `ε/2` and records both in `eps_sweep`.
pub fn frechet_bias<J: BivariateFunctional + ?Sized>(j: &J, g: &WeightedEmpirical, eps: f64) -> Result<BiasReport> {
    let mut report = frechet_bias_at(j, g, eps)?;
    let (half, _) = frechet_terms(j, g, eps / 2.0, report.n)?;
    report.eps_sweep = vec![(eps, report.estimate), (eps / 2.0, half)];
    Ok(report)
}

/// [`frechet_bias`] without the diagnostic sweep.
pub fn frechet_bias_at<J: BivariateFunctional + ?Sized>(j: &J, g: &WeightedEmpirical, eps: f64) -> Result<BiasReport> {
    if !j.accepts_signed() {
        return Err(Error::SignedUnsupported);
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::invalid(format!("perturbation size {eps} outside (0, 0.5]")));
    }
    let n = g.sample_size().ok_or_else(|| Error::invalid("numerical-derivative estimate needs a sample size"))?;
    let (estimate, terms) = frechet_terms(j, g, eps, n)?;
    Ok(BiasReport {
        method: BiasMethod::Frechet,
        estimate,
        replicates: terms,
        failed: 0,
        stderr: None,
        n,
        param: eps,
        seed: 0,
        functional_id: j.id(),
        sample_fingerprint: g.fingerprint(),
        eps_sweep: Vec::new(),
    })
}

/// Source of i.i.d. samples from a population known exactly.
pub trait PopulationSampler: Sync {
    /// The population `G` itself.
    fn population(&self) -> &WeightedEmpirical;
    /// Empirical distribution of `n` i.i.d. draws from `G`.
    fn draw(&self, n: usize, rng_seed: u64) -> Result<WeightedEmpirical>;
}

/// Samples from a finite labeled table.
#[derive(Debug, Clone)]
pub struct DiscreteSampler {
    table: WeightedEmpirical,
}

impl DiscreteSampler {
    pub fn new(table: WeightedEmpirical) -> Result<Self> {
        if table.is_signed() {
            return Err(Error::contract("a population must be unsigned"));
        }
        Ok(DiscreteSampler { table })
    }

    /// Scalar population: atom `i` has state `i` and label `values[i]`.
    pub fn scalar(values: &[f64], probs: &[f64]) -> Result<Self> {
        let atoms = values.iter().enumerate().map(|(i, &label)| crate::dist::Atom { state: i, label }).collect();
        Self::new(WeightedEmpirical::from_weights(atoms, probs.to_vec(), false)?)
    }
}

impl PopulationSampler for DiscreteSampler {
    fn population(&self) -> &WeightedEmpirical {
        &self.table
    }

    fn draw(&self, n: usize, rng_seed: u64) -> Result<WeightedEmpirical> {
        self.table.bootstrap_resample(n, rng_seed)
    }
}

/// Samples labeled datasets (with trajectories) by rolling out a behavior policy.
#[derive(Debug, Clone)]
pub struct EnvSampler {
    spec: std::sync::Arc<MdpSpec>,
    oracle: std::sync::Arc<PropertyOracle>,
    behavior: Policy,
    table: WeightedEmpirical,
}

impl EnvSampler {
    pub fn new(
        spec: std::sync::Arc<MdpSpec>,
        oracle: std::sync::Arc<PropertyOracle>,
        behavior: Policy,
    ) -> Result<Self> {
        let table = population_table(&spec, &oracle, &behavior)?;
        Ok(EnvSampler { spec, oracle, behavior, table })
    }

    pub fn behavior(&self) -> &Policy {
        &self.behavior
    }
}

impl PopulationSampler for EnvSampler {
    fn population(&self) -> &WeightedEmpirical {
        &self.table
    }

    fn draw(&self, n: usize, rng_seed: u64) -> Result<WeightedEmpirical> {
        let sample = build_dataset(&self.spec, &self.oracle, &self.behavior, n, rng_seed)?;
        WeightedEmpirical::empirical(&sample)
    }
}

/// Brute-force `b_N(G) = E[J(Ĝ, Ĝ) − J(Ĝ, G)]` over `r_datasets` fresh samples.
pub fn oracle_bias<J: BivariateFunctional + ?Sized, S: PopulationSampler + ?Sized>(
    j: &J,
    sampler: &S,
    n: usize,
    r_datasets: usize,
    rng_seed: u64,
) -> Result<BiasReport> {
    if r_datasets == 0 || n == 0 {
        return Err(Error::invalid("need at least one dataset of at least one point"));
    }
    let pop = sampler.population();
    let results: Vec<Result<f64>> = (0..r_datasets)
        .into_par_iter()
        .map(|i| {
            let g = sampler.draw(n, derive_seed(rng_seed, "oracle", i as u64))?;
            let v = j.eval_many(&g, &[&g, pop])?;
            Ok(v[0] - v[1])
        })
        .collect();
    let reps = gather(results)?;
    let (estimate, stderr) = mean_and_stderr(&reps.values);
    Ok(BiasReport {
        method: BiasMethod::Oracle,
        estimate,
        replicates: reps.values,
        failed: reps.failed,
        stderr,
        n,
        param: r_datasets as f64,
        seed: rng_seed,
        functional_id: j.id(),
        sample_fingerprint: pop.fingerprint(),
        eps_sweep: Vec::new(),
    })
}

/// `J(g, g) − bias.estimate`; the report must come from this functional and sample.
pub fn corrected<J: BivariateFunctional + ?Sized>(j: &J, g: &WeightedEmpirical, bias: &BiasReport) -> Result<f64> {
    if bias.functional_id != j.id() {
        return Err(Error::Pairing(format!("functional {:#x} vs report {:#x}", j.id(), bias.functional_id)));
    }
    if bias.sample_fingerprint != g.fingerprint() {
        return Err(Error::Pairing("sample fingerprint differs".into()));
    }
    Ok(j.eval(g, g)? - bias.estimate)
}

/// Closed-form functionals of the label means `m1 = E_{G1}X`, `m2 = E_{G2}X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunctional {
    /// `m2²`
    SquaredMean,
    /// `m1·m2 + m2²`
    ProductMean,
    /// `m1·m2`
    LinearInSecond,
    Constant(f64),
}

impl TestFunctional {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunctional::SquaredMean => "squared-mean",
            TestFunctional::ProductMean => "product-mean",
            TestFunctional::LinearInSecond => "linear-in-second",
            TestFunctional::Constant(_) => "constant",
        }
    }
}

impl BivariateFunctional for TestFunctional {
    fn eval(&self, g1: &WeightedEmpirical, g2: &WeightedEmpirical) -> Result<f64> {
        let m1 = || g1.expect(|a| a.label);
        let m2 = g2.expect(|a| a.label);
        Ok(match self {
            TestFunctional::SquaredMean => m2 * m2,
            TestFunctional::ProductMean => m1() * m2 + m2 * m2,
            TestFunctional::LinearInSecond => m1() * m2,
            TestFunctional::Constant(c) => *c,
        })
    }

    fn accepts_signed(&self) -> bool {
        true
    }

    fn id(&self) -> u64 {
        let c = match self {
            TestFunctional::Constant(c) => *c,
            _ => 0.0,
        };
        Fingerprint::new().str(self.name()).f64(c).finish()
    }
}

/// Reference functionals with known reusing bias.
pub fn test_functionals() -> Vec<TestFunctional> {
    vec![
        TestFunctional::SquaredMean,
        TestFunctional::ProductMean,
        TestFunctional::LinearInSecond,
        TestFunctional::Constant(1.0),
    ]
}
