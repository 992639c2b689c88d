use std::path::Path;

use conegibbs::specification::mcmc::mcmc_samples;
use conegibbs::specification::GibbsSample;
use serde_json::json;

use crate::config::{Resolved, Sampler};
use crate::report::{resolved_config, write_file, WriteError};

/// Stream id for dumps, distinct from every suite stream.
const DUMP_STREAM: u64 = 100;

pub enum DumpError {
    Sampler(conegibbs::Error),
    Write(WriteError),
}

/// Writes `samples/sample_NNNNNN.txt` and `manifest.json` under `dir`.
pub fn dump(r: &Resolved, dir: &Path) -> Result<usize, DumpError> {
    let run = &r.config.run;
    let n = run.n_samples;
    let seed = r.seed().child(DUMP_STREAM);
    let (samples, acceptance): (Vec<GibbsSample>, _) = match run.sampler {
        _ if n == 0 => (Vec::new(), json!(null)),
        Sampler::Rejection => {
            let s = r.kernel.rejection_samples(n, seed).map_err(DumpError::Sampler)?;
            let trials: u64 = s.iter().map(|x| x.accepted_after).sum();
            let rate = n as f64 / trials as f64;
            (
                s,
                json!({ "trials": trials, "accepted": n, "rate": rate, "z_estimate": rate }),
            )
        }
        Sampler::Mcmc => {
            let (s, stats) = mcmc_samples(&r.kernel, n, &run.mcmc, seed).map_err(DumpError::Sampler)?;
            (
                s,
                json!({ "proposed": stats.proposed, "accepted": stats.accepted, "rate": stats.acceptance_rate() }),
            )
        }
    };
    let mut files = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("samples/sample_{i:06}.txt");
        write_file(&dir.join(&name), s.config.to_text().as_bytes()).map_err(DumpError::Write)?;
        files.push(name);
    }
    let mm = r.kernel.poisson().mark_measure();
    let manifest = json!({
        "seed": run.seed,
        "stream": DUMP_STREAM,
        "n": n,
        "sampler": run.sampler,
        "truncation": {
            "eps_trunc": mm.eps_trunc(),
            "sampled_intensity": mm.truncated_mass(),
            "expected_discarded_mass": r.kernel.truncation_mass(),
        },
        "acceptance": acceptance,
        "files": files,
        "config": resolved_config(r),
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_file(&dir.join("manifest.json"), &bytes).map_err(DumpError::Write)?;
    Ok(samples.len())
}
