//! Fixed-step classical Runge-Kutta integration.
//!
//! Step sizes are uniform and the time grid is computed as `t0 + k * dt`
//! rather than accumulated, so long runs do not drift. As the continuation
//! speed `alpha` grows the closed loops get stiffer; a step no larger than
//! `1 / (10 * alpha * k)` (with `k` the largest loop gain) has been adequate
//! for every bundled example.

use crate::error::{Error, Result};
use crate::smallmat::Vector;

/// Right-hand side plus initial condition.
pub struct OdeProblem<F> {
    pub rhs: F,
    pub x0: Vector,
    pub t0: f64,
}

impl<F> OdeProblem<F>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    pub fn new(rhs: F, x0: Vector, t0: f64) -> Self {
        Self { rhs, x0, t0 }
    }

    pub fn dimension(&self) -> usize {
        self.x0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    pub max_steps: usize,
}

impl StepConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            max_steps: usize::MAX,
        }
    }

    /// Number of uniform steps needed to cover `[t0, t_end]`.
    pub fn steps_from(&self, t0: f64) -> usize {
        let span = (self.t_end - t0) / self.dt;
        // tolerate round-off so that 1.0 / 0.01 counts as 100 steps
        (span - 1e-9).ceil().max(0.0) as usize
    }

    fn validate(&self, t0: f64) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > t0) {
            return Err(Error::InvalidInput(format!(
                "t_end ({}) must exceed t0 ({t0})",
                self.t_end
            )));
        }
        Ok(())
    }
}

/// States beyond this magnitude are treated as a finite-time blowup.
pub const DIVERGENCE_BOUND: f64 = 1e10;

fn check_bounded(t: f64, x: &Vector) -> Result<()> {
    check_finite(t, x)?;
    if x.amax() > DIVERGENCE_BOUND {
        return Err(Error::Divergence {
            t,
            state: x.iter().copied().collect(),
        });
    }
    Ok(())
}

fn check_finite(t: f64, x: &Vector) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            t,
            state: x.iter().copied().collect(),
        })
    }
}

/// One classical RK4 step of size `dt` from `(t, x)`.
pub fn rk4_step<F>(rhs: &F, t: f64, x: &Vector, dt: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    check_bounded(t, x)?;
    let half = 0.5 * dt;
    let k1 = rhs(t, x)?;
    check_finite(t, &k1)?;
    if k1.len() != x.len() {
        return Err(Error::Model(format!(
            "right-hand side returned dimension {} for a state of dimension {}",
            k1.len(),
            x.len()
        )));
    }
    let stage = |tt: f64, xs: Vector| -> Result<Vector> {
        check_bounded(tt, &xs)?;
        let k = rhs(tt, &xs)?;
        check_finite(tt, &k)?;
        Ok(k)
    };
    let k2 = stage(t + half, x + &k1 * half)?;
    let k3 = stage(t + half, x + &k2 * half)?;
    let k4 = stage(t + dt, x + &k3 * dt)?;
    let next = x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    check_bounded(t + dt, &next)?;
    Ok(next)
}

/// Integrates from `t0` to `t_end`, calling `observer(t, x)` after every
/// step. The last step is shortened if `t_end - t0` is not a multiple of `dt`.
pub fn integrate<F, O>(problem: &OdeProblem<F>, cfg: &StepConfig, mut observer: O) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
    O: FnMut(f64, &Vector),
{
    cfg.validate(problem.t0)?;
    let steps = cfg.steps_from(problem.t0);
    if steps > cfg.max_steps {
        return Err(Error::StepBudget {
            max_steps: cfg.max_steps,
        });
    }
    let mut x = problem.x0.clone();
    check_finite(problem.t0, &x)?;
    for k in 0..steps {
        let t = problem.t0 + k as f64 * cfg.dt;
        let t_next = if k + 1 == steps {
            cfg.t_end
        } else {
            problem.t0 + (k + 1) as f64 * cfg.dt
        };
        x = rk4_step(&problem.rhs, t, &x, t_next - t)?;
        observer(t_next, &x);
    }
    Ok(x)
}

/// Piecewise-constant interpolant over time-stamped samples. Queries before
/// the first sample return the first sample.
#[derive(Debug, Clone)]
pub struct ZohSignal {
    times: Vec<f64>,
    values: Vec<Vector>,
}

impl ZohSignal {
    pub fn new(samples: Vec<(f64, Vector)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("zero-order hold needs at least one sample".into()));
        }
        if samples.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidInput("zero-order hold samples must be sorted by time".into()));
        }
        let (times, values) = samples.into_iter().unzip();
        Ok(Self { times, values })
    }

    pub fn at(&self, t: f64) -> &Vector {
        // index of the last sample with time <= t
        let idx = self.times.partition_point(|&s| s <= t);
        &self.values[idx.saturating_sub(1)]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Convenience constructor for [`ZohSignal`] returning a closure.
pub fn zoh_signal(samples: Vec<(f64, Vector)>) -> Result<impl Fn(f64) -> Vector> {
    let sig = ZohSignal::new(samples)?;
    Ok(move |t| sig.at(t).clone())
}
