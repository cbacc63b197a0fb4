//! Batches of independent runs: seed sweeps, parameter sweeps and the
//! continuation-speed bracket search.
//!
//! With the `parallel` feature (on by default) work is spread over a rayon
//! pool. Without it every entry point runs sequentially and returns the same
//! results in the same order.

use crate::catalog::{self, RunOutcome};
use crate::error::{Error, Result};

/// One run request.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: String,
    pub overrides: Vec<(String, String)>,
    pub seed: u64,
}

impl Job {
    pub fn new(id: &str, overrides: &[(&str, String)], seed: u64) -> Self {
        Self {
            id: id.to_string(),
            overrides: overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            seed,
        }
    }

    pub fn run(&self) -> Result<RunOutcome> {
        catalog::run(&self.id, &self.overrides, self.seed)
    }
}

/// Order-preserving map, parallel when the feature is enabled.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

pub fn run_batch(jobs: &[Job]) -> Vec<Result<RunOutcome>> {
    par_map(jobs, Job::run)
}

pub fn run_batch_sequential(jobs: &[Job]) -> Vec<Result<RunOutcome>> {
    jobs.iter().map(Job::run).collect()
}

/// Runs `jobs` on at most `threads` workers. `threads = 1` is sequential.
#[cfg(feature = "parallel")]
pub fn run_batch_limited(jobs: &[Job], threads: usize) -> Result<Vec<Result<RunOutcome>>> {
    if threads <= 1 {
        return Ok(run_batch_sequential(jobs));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("could not start {threads} workers: {e}")))?;
    Ok(pool.install(|| run_batch(jobs)))
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch_limited(jobs: &[Job], _threads: usize) -> Result<Vec<Result<RunOutcome>>> {
    Ok(run_batch_sequential(jobs))
}

/// `(seed, final theta)` for each seed of an identification example.
pub fn seed_sweep(id: &str, overrides: &[(&str, String)], seeds: &[u64]) -> Vec<(u64, Result<Vec<f64>>)> {
    let jobs: Vec<Job> = seeds.iter().map(|&s| Job::new(id, overrides, s)).collect();
    run_batch(&jobs)
        .into_iter()
        .zip(seeds)
        .map(|(out, &seed)| (seed, final_theta(out)))
        .collect()
}

fn final_theta(out: Result<RunOutcome>) -> Result<Vec<f64>> {
    let report = out?.report?;
    report
        .final_theta
        .map(|t| t.as_slice().to_vec())
        .ok_or_else(|| Error::InvalidInput("example does not estimate a parameter".into()))
}

/// Whether a run at a given continuation speed reached `lambda = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaOutcome {
    Reached,
    Stagnated,
    /// Breakdown or divergence; neither side of the bracket.
    Failed,
}

pub fn probe_alpha(id: &str, overrides: &[(&str, String)], alpha: f64) -> Result<AlphaOutcome> {
    let mut ov: Vec<(&str, String)> = overrides.to_vec();
    ov.push(("alpha", alpha.to_string()));
    let out = Job::new(id, &ov, 0).run()?;
    Ok(match out.report {
        Ok(r) if r.t_switch.is_some() => AlphaOutcome::Reached,
        Ok(_) | Err(Error::Stagnation { .. }) => AlphaOutcome::Stagnated,
        Err(_) => AlphaOutcome::Failed,
    })
}

/// Bracket `[stagnates, reaches]` on the continuation speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBracket {
    pub stagnates: f64,
    pub reaches: f64,
}

/// Shrinks `[lo, hi]`, where `lo` stagnates and `hi` reaches `lambda = 1`,
/// by probing `probes` interior points per round in parallel. Stops after
/// `rounds` rounds. The response need not be monotone in alpha; the result
/// is a bracket around one transition.
pub fn locate_alpha_min(
    id: &str,
    overrides: &[(&str, String)],
    lo: f64,
    hi: f64,
    probes: usize,
    rounds: usize,
) -> Result<AlphaBracket> {
    if !(lo < hi) || probes == 0 {
        return Err(Error::InvalidInput("need lo < hi and at least one probe".into()));
    }
    let ends = par_map(&[lo, hi], |&a| probe_alpha(id, overrides, a));
    match (&ends[0], &ends[1]) {
        (Ok(AlphaOutcome::Stagnated), Ok(AlphaOutcome::Reached)) => {}
        (a, b) => {
            return Err(Error::InvalidInput(format!(
                "alpha = {lo} must stagnate and alpha = {hi} must reach 1 (got {a:?} and {b:?})"
            )))
        }
    }
    let mut bracket = AlphaBracket { stagnates: lo, reaches: hi };
    for _ in 0..rounds {
        let width = bracket.reaches - bracket.stagnates;
        let points: Vec<f64> = (1..=probes)
            .map(|i| bracket.stagnates + width * i as f64 / (probes + 1) as f64)
            .collect();
        let outcomes = par_map(&points, |&a| probe_alpha(id, overrides, a));
        // walk down from the top: the lowest point of the reaching run that
        // ends at `reaches` becomes the new upper end
        let mut upper = bracket.reaches;
        let mut lower = bracket.stagnates;
        for (a, o) in points.iter().zip(outcomes).rev() {
            match o? {
                AlphaOutcome::Reached => upper = *a,
                AlphaOutcome::Stagnated => {
                    lower = *a;
                    break;
                }
                AlphaOutcome::Failed => break,
            }
        }
        if lower >= upper {
            break;
        }
        bracket = AlphaBracket {
            stagnates: lower,
            reaches: upper,
        };
    }
    Ok(bracket)
}
