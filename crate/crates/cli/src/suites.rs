//! The named test suites. Each returns a list of report cells; a sampler or
//! integrability failure aborts the suite and is recorded in its report.

use std::collections::BTreeMap;

use conegibbs::configuration::{Configuration, MassMode};
use conegibbs::estimates::{event_decay_probe, exp_moment_check, temperedness_exp_check, uniform_moment_check, BoundReport};
use conegibbs::geometry::Region;
use conegibbs::interaction::{finiteness_bound, hamiltonian_brute_force, lower_bound_rhs};
use conegibbs::reference_measure::{factorization_check, laplace_check, moment_bound_check};
use conegibbs::rng::{replicate, StreamSeed};
use conegibbs::specification::mcmc::mcmc_samples;
use conegibbs::specification::{consistency_residual, dlr_residual};
use conegibbs::stats::ks_two_sample;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Resolved, Sampler, Suite};

/// Relative agreement demanded of the cell-list Hamiltonian.
pub const HAMILTONIAN_RTOL: f64 = 1e-12;
/// Significance level of the sampler-agreement KS tests.
pub const KS_LEVEL: f64 = 0.01;

#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub check: String,
    pub parameters: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub pass: bool,
    pub detail: Value,
}

impl Cell {
    fn new(check: impl Into<String>, lhs: f64, rhs: f64, stderr: f64, pass: bool, detail: Value) -> Self {
        Cell {
            check: check.into(),
            parameters: BTreeMap::new(),
            lhs,
            rhs,
            stderr,
            pass,
            detail,
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    fn bound(b: &BoundReport) -> Self {
        Cell {
            check: b.name.clone(),
            parameters: b.parameters.clone(),
            lhs: b.lhs_estimate.value,
            rhs: b.rhs_bound,
            stderr: b.lhs_estimate.stderr,
            pass: b.ok(),
            detail: json!({ "enforced": b.enforced, "inequality_holds": b.pass, "lhs_estimate": b.lhs_estimate }),
        }
    }
}

type Outcome = conegibbs::Result<Vec<Cell>>;

pub fn run(suite: Suite, r: &Resolved, seed: StreamSeed) -> Outcome {
    match suite {
        Suite::Laplace => laplace(r, seed),
        Suite::Moments => moments(r, seed),
        Suite::Hamiltonian => hamiltonian(r, seed),
        Suite::Partition => partition(r, seed),
        Suite::Consistency => consistency(r, seed),
        Suite::Dlr => dlr(r, seed),
        Suite::Lyapunov => lyapunov(r, seed),
        Suite::Tempered => tempered(r, seed),
        Suite::All => unreachable!("expanded before dispatch"),
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

fn laplace(r: &Resolved, seed: StreamSeed) -> Outcome {
    let ps = r.kernel.poisson();
    let samples = ps.sample_many(r.config.run.n_samples, seed.child(0));
    let mut cells = Vec::new();
    for (i, f) in r.laplace.iter().enumerate() {
        let rep = laplace_check(ps, &samples, &f.h, &f.psi)?;
        cells.push(
            Cell::new("laplace", rep.estimate, rep.closed_form, rep.stderr, rep.pass, to_value(&rep))
                .with("fixture", i as f64)
                .with("trunc_bound", rep.trunc_bound),
        );
    }
    Ok(cells)
}

/// Split `lambda` into at most three non-empty parts, round robin.
fn split(lambda: &Region) -> Vec<Region> {
    let parts = lambda.len().min(3);
    let mut out = vec![Vec::new(); parts];
    for (i, k) in lambda.iter().enumerate() {
        out[i % parts].push(k.clone());
    }
    out.into_iter().map(|v| v.into_iter().collect()).collect()
}

fn moments(r: &Resolved, seed: StreamSeed) -> Outcome {
    let ps = r.kernel.poisson();
    let samples = ps.sample_many(r.config.run.n_samples, seed.child(0));
    let mut cells = Vec::new();
    for (i, f) in r.laplace.iter().enumerate() {
        for n in [1, 2, 4] {
            let rep = moment_bound_check(ps, &f.h, &f.psi, n, &samples)?;
            cells.push(
                Cell::new("moment_bound", rep.empirical.value, rep.rhs, rep.empirical.stderr, !rep.violation, to_value(&rep))
                    .with("fixture", i as f64)
                    .with("order", n as f64),
            );
        }
    }
    let parts = split(&r.lambda);
    if parts.len() >= 2 {
        let rep = factorization_check(&samples, &parts)?;
        cells.push(
            Cell::new("factorization", rep.mean_of_product, rep.product_of_means, rep.stderr, rep.pass, to_value(&rep))
                .with("regions", parts.len() as f64),
        );
    }
    Ok(cells)
}

fn hamiltonian(r: &Resolved, seed: StreamSeed) -> Outcome {
    let k = &r.kernel;
    let positive = k.poisson().mark_measure().is_positive_regime();
    let potential = k.potential();
    let opts = k.interaction().options();
    let rows = replicate(r.config.run.n_samples, seed.child(0), |rng, _| {
        let eta = k.poisson().sample(rng);
        let fast = k.interaction().energy(&eta)?.total;
        let brute = hamiltonian_brute_force(&eta, &r.xi, &r.lambda, potential, opts)?.total;
        let bound = finiteness_bound(&eta, &r.xi, &r.lambda, potential)?;
        let lower = lower_bound_rhs(&eta, &r.lambda, potential.repulsion(), MassMode::Tv);
        Ok((fast, brute, bound, lower))
    })?;
    let mut worst = 0.0f64;
    let mut lower_violations = 0usize;
    let mut finite_violations = 0usize;
    for &(fast, brute, bound, lower) in &rows {
        // relative to the sum of absolute pair terms, which `bound` dominates
        let scale = fast.abs().max(brute.abs()).max(bound);
        if scale > 0.0 {
            worst = worst.max((fast - brute).abs() / scale);
        }
        if fast < lower - 1e-9 * scale.max(1.0) {
            lower_violations += 1;
        }
        if !fast.is_finite() || fast.abs() > bound * (1.0 + 1e-12) + 1e-300 {
            finite_violations += 1;
        }
    }
    let n = rows.len() as f64;
    Ok(vec![
        Cell::new("cell_list_vs_brute_force", worst, HAMILTONIAN_RTOL, 0.0, worst <= HAMILTONIAN_RTOL, Value::Null).with("instances", n),
        Cell::new(
            "energy_lower_bound",
            lower_violations as f64,
            0.0,
            0.0,
            lower_violations == 0 || !positive,
            json!({ "enforced": positive }),
        )
        .with("instances", n),
        Cell::new("energy_finite", finite_violations as f64, 0.0, 0.0, finite_violations == 0, Value::Null).with("instances", n),
    ])
}

fn partition(r: &Resolved, seed: StreamSeed) -> Outcome {
    let n = r.config.run.n_samples;
    let rep = r.kernel.partition_function(n, seed.child(0))?;
    let mut cells = vec![Cell::new("partition_function", rep.estimate.value, 1.0, rep.estimate.stderr, rep.pass(), to_value(&rep))
        .with("jensen_lower", rep.jensen_lower)];
    if r.config.run.sampler == Sampler::Mcmc {
        let direct = r.kernel.rejection_samples(n, seed.child(1))?;
        let (chain, stats) = mcmc_samples(&r.kernel, n, &r.config.run.mcmc, seed.child(2))?;
        let stat = |s: &[conegibbs::specification::GibbsSample], f: &dyn Fn(&Configuration) -> f64| s.iter().map(|x| f(&x.config)).collect::<Vec<f64>>();
        let tv = |c: &Configuration| c.tv_mass(&r.lambda).unwrap_or(0.0);
        let count = |c: &Configuration| c.len() as f64;
        for (name, f) in [("tv_mass", &tv as &dyn Fn(&Configuration) -> f64), ("atom_count", &count)] {
            let ks = ks_two_sample(&stat(&direct, f), &stat(&chain, f), KS_LEVEL);
            cells.push(
                Cell::new(format!("sampler_agreement_{name}"), ks.statistic, ks.critical, 0.0, ks.pass, json!({ "mcmc_acceptance": stats.acceptance_rate() }))
                    .with("level", KS_LEVEL),
            );
        }
    }
    Ok(cells)
}

fn consistency(r: &Resolved, seed: StreamSeed) -> Outcome {
    let rep = consistency_residual(&r.kernel, &r.inner, &r.event, r.config.run.n_samples, seed.child(0))?;
    Ok(vec![Cell::new("consistency", rep.lhs, rep.rhs, rep.stderr, rep.pass, to_value(&rep))])
}

fn dlr(r: &Resolved, seed: StreamSeed) -> Outcome {
    let rep = dlr_residual(&r.kernel, &r.lambda, &r.xi, &r.event, &r.config.run.rings, r.config.run.n_samples, seed.child(0))?;
    let mut cells: Vec<Cell> = rep
        .rows
        .iter()
        .map(|row| {
            Cell::new("dlr_residual", row.residual.lhs, row.residual.rhs, row.residual.stderr, row.residual.pass, to_value(&row.residual))
                .with("rings", row.rings as f64)
        })
        .collect();
    let last = rep.rows.last().map(|x| x.residual.diff.abs()).unwrap_or(0.0);
    cells.push(Cell::new("dlr_trend", last, 0.0, 0.0, rep.trend_pass, Value::Null));
    Ok(cells)
}

fn growing(r: &Resolved) -> Vec<Region> {
    std::iter::once(r.lambda.clone())
        .chain(r.config.run.rings.iter().map(|&n| r.spec.grow(&r.lambda, n)))
        .collect()
}

fn lyapunov(r: &Resolved, seed: StreamSeed) -> Outcome {
    let n = r.config.run.n_samples;
    let a = r.kernel.potential().repulsion();
    let k = r.inner.iter().next().expect("inner is non-empty");
    let mut betas = vec![0.0, 0.5 * a, a];
    betas.dedup();
    let mut cells = Vec::new();
    for (i, &beta) in betas.iter().enumerate() {
        let rep = exp_moment_check(&r.kernel, k, beta, r.epsilon, n, seed.child(i as u64))?;
        cells.push(Cell::bound(&rep));
    }
    let rep = uniform_moment_check(&r.kernel, &r.lambda, r.config.run.moment_order, &growing(r), &r.xi, n, seed.child(10))?;
    cells.push(
        Cell::new("uniform_moment", rep.slope, 0.0, rep.slope_stderr, rep.pass, to_value(&rep))
            .with("order", rep.order as f64)
            .with("max", rep.max),
    );
    Ok(cells)
}

fn tempered(r: &Resolved, seed: StreamSeed) -> Outcome {
    let run = &r.config.run;
    let rep = temperedness_exp_check(&r.kernel, run.alpha_temp, r.epsilon, run.n_samples, seed.child(0))?;
    let mut cells = vec![Cell::bound(&rep)];
    let t = r.xi.temperedness(run.alpha_temp, MassMode::Tv)?;
    cells.push(
        Cell::new("boundary_tempered", t.value, f64::INFINITY, 0.0, t.value.is_finite(), Value::Null).with("alpha_temp", run.alpha_temp),
    );
    let rep = event_decay_probe(&r.kernel, &r.lambda, &growing(r), &r.xi, &run.thresholds, run.decay_level, run.n_samples, seed.child(1))?;
    for row in &rep.rows {
        cells.push(
            Cell::new("decay_chebyshev", row.sup, row.chebyshev, row.sup_stderr, row.chebyshev_pass, Value::Null).with("threshold", row.threshold),
        );
    }
    let last = rep.rows.last().map(|x| x.sup).unwrap_or(0.0);
    cells.push(
        Cell::new("event_decay", last, run.decay_level, 0.0, rep.pass, json!({ "monotone": rep.monotone, "decayed": rep.decayed }))
            .with("level", run.decay_level),
    );
    Ok(cells)
}
