//! Continuation feedback shared by the affine and nonaffine setpoint
//! controllers.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::smallmat::{self, Mat, Vector};

pub mod affine;
pub mod nonaffine;

pub use affine::{assemble, compute_h, run_affine_setpoint, HomotopyForm};
pub use nonaffine::{assemble_nonaffine, compute_h_nonaffine, run_nonaffine_setpoint, NonaffineOptions};

/// `lambda` and its derivatives up to order `r_max - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyState {
    pub lambda: f64,
    /// `derivs[k - 1]` is the k-th derivative of lambda.
    pub derivs: Vec<f64>,
}

impl HomotopyState {
    pub fn zero(r_max: usize) -> Self {
        Self {
            lambda: 0.0,
            derivs: vec![0.0; r_max.saturating_sub(1)],
        }
    }

    /// k-th derivative, with order 0 being lambda itself.
    pub fn order(&self, k: usize) -> f64 {
        if k == 0 {
            self.lambda
        } else {
            self.derivs[k - 1]
        }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            lambda: s[0],
            derivs: s[1..].to_vec(),
        }
    }
}

/// `H^(r) = A (u, lambda^(r_max)) + B` with `A = [A1 | A2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationAssembly {
    pub a1: Mat,
    pub a2: Vector,
    pub b: Vector,
}

impl ContinuationAssembly {
    pub fn a(&self) -> Mat {
        let m = self.a1.nrows();
        let mut a = Mat::zeros(m, m + 1);
        a.columns_mut(0, self.a1.ncols()).copy_from(&self.a1);
        a.set_column(self.a1.ncols(), &self.a2);
        a
    }

    pub fn m(&self) -> usize {
        self.a1.nrows()
    }
}

/// How the predictor term is scaled by the lambda-rate weight `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TangentScaling {
    /// `alpha * gamma * tau(A)`.
    Uniform,
    /// `alpha * Q * tau(A Q)`: the tangent measured in the same metric as the
    /// corrector. Identical to `Uniform` when `gamma = 1`.
    #[default]
    Metric,
}

impl std::str::FromStr for TangentScaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "metric" => Ok(Self::Metric),
            other => Err(Error::Config(format!("unknown tangent scaling `{other}` (uniform|metric)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlGains {
    /// Continuation speed.
    pub alpha: f64,
    /// Weight of the lambda rate, `Q = diag(1, .., 1, gamma)`.
    pub gamma: f64,
    /// Pole of the outer loop. For relative degree one this is the
    /// proportional gain on `H`.
    pub outer_gain: f64,
    pub dt: f64,
    pub t_end: f64,
    pub stagnation_window: f64,
    pub stagnation_eps: f64,
    pub tangent: TangentScaling,
    pub rank_tol: f64,
    /// Record every n-th step in the trajectory log.
    pub log_every: usize,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 1.0,
            outer_gain: 10.0,
            dt: 1e-3,
            t_end: 10.0,
            stagnation_window: 1.0,
            stagnation_eps: 0.02,
            tangent: TangentScaling::Metric,
            rank_tol: smallmat::DEFAULT_TOL,
            log_every: 1,
        }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("outer_gain", self.outer_gain),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("stagnation_window", self.stagnation_window),
            ("stagnation_eps", self.stagnation_eps),
            ("rank_tol", self.rank_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// `Q = diag(1, .., 1, gamma)` as its diagonal.
pub fn q_weight(dim: usize, gamma: f64) -> Vector {
    let mut q = Vector::from_element(dim, 1.0);
    q[dim - 1] = gamma;
    q
}

/// Predictor term of the continuation law.
pub fn predictor(a: &Mat, alpha: f64, gamma: f64, scaling: TangentScaling, tol: f64) -> Result<Vector> {
    let dim = a.ncols();
    Ok(match scaling {
        TangentScaling::Uniform => smallmat::tangent_vector_tol(a, tol)? * (alpha * gamma),
        TangentScaling::Metric => {
            let q = q_weight(dim, gamma);
            let aq = a * Mat::from_diagonal(&q);
            smallmat::tangent_vector_tol(&aq, tol)?.component_mul(&q) * alpha
        }
    })
}

/// `(u, lambda^(r_max)) = predictor + Q (A Q)^+ (v - B)`.
pub fn feedback(assembly: &ContinuationAssembly, v: &Vector, gains: &ControlGains) -> Result<(Vector, f64)> {
    let full = feedback_with(&assembly.a(), &(v - &assembly.b), gains.alpha, gains.gamma, gains.tangent, gains.rank_tol)?;
    let m = assembly.m();
    Ok((full.rows(0, m).into_owned(), full[m]))
}

/// Continuation law for an arbitrary `k x (k+1)` matrix and right-hand side.
pub fn feedback_with(a: &Mat, rhs: &Vector, alpha: f64, gamma: f64, scaling: TangentScaling, tol: f64) -> Result<Vector> {
    let tangent = predictor(a, alpha, gamma, scaling, tol).map_err(|e| breakdown_from(e, a))?;
    let q = q_weight(a.ncols(), gamma);
    let corr = smallmat::weighted_pinv(a, &q, tol)? * rhs;
    Ok(tangent + corr)
}

fn breakdown_from(e: Error, a: &Mat) -> Error {
    match e {
        Error::RankDeficient { .. } => Error::ContinuationBreakdown {
            t: f64::NAN,
            sigma_min: smallest_singular_value(a),
            state: Vec::new(),
        },
        other => other,
    }
}

pub(crate) fn smallest_singular_value(a: &Mat) -> f64 {
    smallmat::singular_values(a)
        .ok()
        .and_then(|s| s.last().copied())
        .unwrap_or(f64::NAN)
}

/// Attach the time and state of failure to a breakdown raised deep in a
/// feedback evaluation.
pub(crate) fn at_state(e: Error, t: f64, state: &Vector) -> Error {
    match e {
        Error::ContinuationBreakdown { sigma_min, .. } => Error::ContinuationBreakdown {
            t,
            sigma_min,
            state: state.iter().copied().collect(),
        },
        Error::RankDeficient { .. } => Error::ContinuationBreakdown {
            t,
            sigma_min: 0.0,
            state: state.iter().copied().collect(),
        },
        other => other,
    }
}

/// Outer loop for the chain `H^(r) = v`: all closed-loop poles at
/// `-outer_gain`, i.e. `v = -sum_k C(r, k) p^(r-k) H^(k)`. For `r = 1` this
/// is `v = -outer_gain * H`.
pub fn outer_loop_chain(h_derivs: &[f64], gain: f64) -> f64 {
    let r = h_derivs.len();
    -(0..r)
        .map(|k| binomial(r, k) * gain.powi((r - k) as i32) * h_derivs[k])
        .sum::<f64>()
}

/// Proportional outer loop `v = -outer_gain * H`.
pub fn outer_loop(h: &Vector, gains: &ControlGains) -> Vector {
    h * -gains.outer_gain
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Flags a continuation that stopped making progress: lambda varied by
/// less than `eps` over the last `window` seconds.
#[derive(Debug, Clone)]
pub struct StagnationMonitor {
    window: f64,
    eps: f64,
    start: Option<f64>,
    history: VecDeque<(f64, f64)>,
}

impl StagnationMonitor {
    pub fn new(window: f64, eps: f64) -> Self {
        Self {
            window,
            eps,
            start: None,
            history: VecDeque::new(),
        }
    }

    pub fn observe(&mut self, t: f64, lambda: f64) -> bool {
        let start = *self.start.get_or_insert(t);
        self.history.push_back((t, lambda));
        while let Some(&(t0, _)) = self.history.front() {
            if t0 < t - self.window - 1e-12 {
                self.history.pop_front();
            } else {
                break;
            }
        }
        if t - start < self.window {
            return false;
        }
        let (lo, hi) = self
            .history
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, l)| (lo.min(l), hi.max(l)));
        hi - lo < self.eps
    }
}

/// Summary of a controller or identifier run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    /// Time at which the run ended.
    pub t_final: f64,
    /// First time lambda reached 1.
    pub t_switch: Option<f64>,
    pub final_lambda: f64,
    /// Plant output at the end of the run (control engines).
    pub final_y: Option<Vector>,
    /// Smallest singular value of the continuation matrix seen before the
    /// switch.
    pub min_sigma: f64,
    /// Largest `|u|_inf` seen.
    pub max_u: f64,
    /// Estimate at the end of the run (identification engines).
    pub final_theta: Option<Vector>,
    /// `|x - xhat|` or the last window error norm (identification engines).
    pub final_error: Option<f64>,
    pub steps: usize,
}

impl RunReport {
    pub fn final_y_norm(&self) -> Option<f64> {
        self.final_y.as_ref().map(|y| y.amax())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(r: usize, c: usize, d: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, d)
    }

    fn asm(a1: Mat, a2: &[f64], b: &[f64]) -> ContinuationAssembly {
        ContinuationAssembly {
            a1,
            a2: Vector::from_row_slice(a2),
            b: Vector::from_row_slice(b),
        }
    }

    #[test]
    fn pure_predictor_lies_in_null_space() {
        let gains = ControlGains::default();
        let a = asm(m(1, 1, &[1.0]), &[1.0], &[0.0]);
        let (u, l) = feedback(&a, &Vector::zeros(1), &gains).unwrap();
        // oracle: null space of [1, 1] oriented so det [[1, 1], [t1, t2]] > 0
        let s = 1.0 / 2f64.sqrt();
        assert_relative_eq!(u[0], -s, epsilon = 1e-12);
        assert_relative_eq!(l, s, epsilon = 1e-12);
        assert!((u[0] + l).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_scaled_tangent() {
        let gains = ControlGains {
            alpha: 3.0,
            ..Default::default()
        };
        let a = asm(m(2, 2, &[2.0, 0.0, 0.0, 3.0]), &[0.0, 0.0], &[0.5, -1.0]);
        let (u, l) = feedback(&a, &Vector::from_row_slice(&[0.5, -1.0]), &gains).unwrap();
        assert_relative_eq!(u, Vector::zeros(2), epsilon = 1e-12);
        assert_relative_eq!(l, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn corrector_only_solves_the_linear_system() {
        let gains = ControlGains {
            alpha: 1e-300,
            gamma: 0.2,
            ..Default::default()
        };
        let a = asm(m(1, 1, &[2.0]), &[1.0], &[1.0]);
        let v = Vector::from_element(1, 4.0);
        let (u, l) = feedback(&a, &v, &gains).unwrap();
        assert_relative_eq!(2.0 * u[0] + l, 3.0, epsilon = 1e-12);
        // minimal norm in the Q metric: Q (A Q)^+ with A Q = [2, 0.2]
        let denom = 4.0 + 0.04;
        assert_relative_eq!(u[0], 2.0 * 3.0 / denom, epsilon = 1e-12);
        assert_relative_eq!(l, 0.2 * 0.2 * 3.0 / denom, epsilon = 1e-12);
    }

    #[test]
    fn uniform_and_metric_agree_for_unit_gamma() {
        let a = m(2, 3, &[1.0, -0.3, 0.8, 0.2, 1.4, -0.5]);
        let p = predictor(&a, 2.0, 1.0, TangentScaling::Uniform, 1e-10).unwrap();
        let q = predictor(&a, 2.0, 1.0, TangentScaling::Metric, 1e-10).unwrap();
        assert_relative_eq!(p, q, epsilon = 1e-12);
    }

    #[test]
    fn metric_tangent_is_parallel_to_plain_tangent() {
        let a = m(1, 2, &[1.5, 0.3]);
        let p = predictor(&a, 1.0, 0.05, TangentScaling::Uniform, 1e-10).unwrap();
        let q = predictor(&a, 1.0, 0.05, TangentScaling::Metric, 1e-10).unwrap();
        assert!((&a * &q).norm() < 1e-12);
        assert!((p[0] * q[1] - p[1] * q[0]).abs() < 1e-12);
        assert!(p.dot(&q) > 0.0);
    }

    #[test]
    fn rank_loss_is_a_breakdown() {
        let a = asm(m(2, 2, &[1.0, 0.0, 1.0, 0.0]), &[1.0, 1.0], &[0.0, 0.0]);
        let err = feedback(&a, &Vector::zeros(2), &ControlGains::default()).unwrap_err();
        assert!(matches!(err, Error::ContinuationBreakdown { .. }));
        let err = at_state(err, 0.5, &Vector::from_element(1, 2.0));
        match err {
            Error::ContinuationBreakdown { t, state, .. } => {
                assert_eq!(t, 0.5);
                assert_eq!(state, vec![2.0]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn outer_loop_examples() {
        let g = ControlGains {
            outer_gain: 100.0,
            ..Default::default()
        };
        assert_eq!(outer_loop(&Vector::zeros(2), &g), Vector::zeros(2));
        let v = outer_loop(&Vector::from_row_slice(&[0.01, -0.02]), &g);
        assert_relative_eq!(v, Vector::from_row_slice(&[-1.0, 2.0]), epsilon = 1e-14);
        let g = ControlGains {
            outer_gain: 10.0,
            ..Default::default()
        };
        assert_eq!(outer_loop(&Vector::from_element(1, 0.5), &g)[0], -5.0);
        assert_eq!(outer_loop_chain(&[0.5], 10.0), -5.0);
        // double pole at -p: v = -(p^2 H + 2 p H')
        assert_eq!(outer_loop_chain(&[1.0, 2.0], 3.0), -(9.0 + 12.0));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
        assert_eq!(binomial(2, 3), 0.0);
    }

    #[test]
    fn stagnation_monitor() {
        let mut mon = StagnationMonitor::new(1.0, 0.02);
        let mut flagged = None;
        for k in 0..5000 {
            let t = k as f64 * 1e-3;
            // rises fast, then creeps
            let lam = if t < 1.0 { 0.8 * t } else { 0.8 + 0.001 * (t - 1.0) };
            if mon.observe(t, lam) {
                flagged = Some(t);
                break;
            }
        }
        let t = flagged.expect("creeping lambda must be flagged");
        assert!(t > 1.5 && t < 2.2, "{t}");

        let mut mon = StagnationMonitor::new(1.0, 0.02);
        assert!((0..5000).all(|k| !mon.observe(k as f64 * 1e-3, 0.1 * k as f64 * 1e-3)));
    }
}
