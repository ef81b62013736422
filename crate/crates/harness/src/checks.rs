//! Closed-form checks of the bias estimators on scalar test functionals.

use offeval_core::bias::{
    bootstrap_bias, frechet_bias_at, oracle_bias, split_bias, BiasReport, DiscreteSampler, PopulationSampler,
    TestFunctional,
};
use offeval_core::seed::derive_seed;
use rayon::prelude::*;

use crate::HarnessError;

/// Outcome of one check, with the reports it produced.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub reports: Vec<BiasReport>,
}

/// Six-atom population with mean 0 and variance 1, skewed so that odd
/// moments are nonzero.
pub fn reference_population() -> DiscreteSampler {
    let raw = [0.0, 1.0, 2.0, 3.0, 5.0, 8.0];
    let k = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / k;
    let sd = (raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k).sqrt();
    let values: Vec<f64> = raw.iter().map(|x| (x - mean) / sd).collect();
    DiscreteSampler::scalar(&values, &[1.0 / k; 6]).expect("valid population")
}

/// `σ̂² = E_g X² − (E_g X)²` of a scalar sample.
pub fn plug_in_variance(g: &offeval_core::dist::WeightedEmpirical) -> f64 {
    let m1 = g.expect(|a| a.label);
    g.expect(|a| a.label * a.label) - m1 * m1
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn outcome(name: &str, passed: bool, detail: String, reports: Vec<BiasReport>) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed, detail, reports }
}

/// Runs the suite; `datasets` controls the Monte-Carlo budget.
pub fn run_checks(seed: u64, datasets: usize) -> Result<Vec<CheckOutcome>, HarnessError> {
    let pop = reference_population();
    let sq = TestFunctional::SquaredMean;
    let mut out = Vec::new();

    let n = 64;
    let o = oracle_bias(&sq, &pop, n, datasets, derive_seed(seed, "check-oracle", 0))?;
    let se = o.stderr.unwrap_or(0.0);
    let target = 1.0 / n as f64;
    out.push(outcome(
        "oracle squared mean = 1/N",
        (o.estimate - target).abs() <= 3.0 * se,
        format!("estimate {:.6e} ± {:.1e}, closed form {target:.6e}", o.estimate, se),
        vec![o],
    ));

    let g = pop.draw(n, derive_seed(seed, "check-sample", 0))?;
    let want = plug_in_variance(&g) / n as f64;
    let mut worst: f64 = 0.0;
    let mut reports = Vec::new();
    for eps in [0.1, 0.25, 0.5] {
        let f = frechet_bias_at(&sq, &g, eps)?;
        worst = worst.max((f.estimate - want).abs());
        reports.push(f);
    }
    out.push(outcome(
        "numerical-derivative estimate = plug-in variance / N",
        worst <= 1e-10,
        format!("max deviation {worst:.1e} over eps 0.1, 0.25, 0.5"),
        reports,
    ));

    // E[b̂ − s²/N] = −σ²/N² with s² the unbiased sample variance.
    let m_boot = 200;
    let devs: Vec<Result<f64, HarnessError>> = (0..datasets / 4)
        .into_par_iter()
        .map(|i| {
            let g = pop.draw(n, derive_seed(seed, "check-boot-data", i as u64))?;
            let b = bootstrap_bias(&sq, &g, None, m_boot, derive_seed(seed, "check-boot", i as u64))?;
            let s2 = plug_in_variance(&g) * n as f64 / (n - 1) as f64;
            Ok(b.estimate - s2 / n as f64)
        })
        .collect();
    let devs = devs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (m, se) = mean_se(&devs);
    let want = -1.0 / (n * n) as f64;
    out.push(outcome(
        "bootstrap deviation = −σ²/N²",
        (m - want).abs() <= 3.0 * se,
        format!("mean deviation {m:.3e} ± {se:.1e}, closed form {want:.3e}"),
        Vec::new(),
    ));

    let split_means = |f: TestFunctional, frac: f64, tag: &str| -> Result<(f64, f64), HarnessError> {
        let vals: Vec<Result<f64, HarnessError>> = (0..datasets)
            .into_par_iter()
            .map(|i| {
                let g = pop.draw(n, derive_seed(seed, tag, i as u64))?;
                Ok(split_bias(&f, &g, frac, 1, derive_seed(seed, "check-split", i as u64))?.estimate)
            })
            .collect();
        Ok(mean_se(&vals.into_iter().collect::<Result<Vec<_>, _>>()?))
    };
    let (m, se) = split_means(sq, 0.5, "check-split-sq")?;
    out.push(outcome(
        "split estimate on squared mean at frac 0.5 = 0",
        m.abs() <= 3.0 * se,
        format!("mean {m:.3e} ± {se:.1e}; true bias {:.3e}", 1.0 / n as f64),
        Vec::new(),
    ));
    let (m, se) = split_means(TestFunctional::ProductMean, 0.8, "check-split-prod")?;
    out.push(outcome(
        "split estimate on product mean at frac 0.8 < 0",
        m + 3.0 * se < 0.0,
        format!("mean {m:.3e} ± {se:.1e}, closed form {:.3e}; true bias {:.3e}", -2.5 / n as f64, 2.0 / n as f64),
        Vec::new(),
    ));

    let c = TestFunctional::Constant(3.5);
    let reports = vec![
        bootstrap_bias(&c, &g, None, 20, seed)?,
        split_bias(&c, &g, 0.5, 10, seed)?,
        frechet_bias_at(&c, &g, 0.25)?,
        oracle_bias(&c, &pop, n, 100, seed)?,
    ];
    let worst = reports.iter().map(|r| r.estimate.abs()).fold(0.0, f64::max);
    out.push(outcome("constant functional has zero bias", worst == 0.0, format!("max |estimate| {worst:e}"), reports));
    Ok(out)
}
