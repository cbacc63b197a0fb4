//! Identification of linearly parameterized uncertainty
//! `x' = f(x, u) + w(x, u) theta`.
//!
//! The homotopy `H = x - xhat - (1 - lambda)(x0 - xhat0)` is driven to zero
//! while `lambda` goes from 0 to 1. The measured state is never
//! differentiated: the lambda rate splits as `M + N x'` and the `N x'` part
//! is integrated by parts.

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::RunReport;
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::log::TrajectoryLog;
use crate::models::{ensure_finite_vec, TrueParameters, UncertainAffine};
use crate::smallmat::{self, Mat, Vector};

/// How the estimate responds to the homotopy residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaLoop {
    /// `theta = w^+ (k_theta H - f)`: the model rate follows `+k_theta H`,
    /// which pulls `xhat` toward `x`.
    #[default]
    Tracking,
    /// `theta = w^+ (-k_theta H - f)`.
    Opposed,
}

impl std::str::FromStr for ThetaLoop {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tracking" => Ok(Self::Tracking),
            "opposed" => Ok(Self::Opposed),
            other => Err(Error::Config(format!("unknown theta loop `{other}` (tracking|opposed)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentGains {
    pub alpha: f64,
    /// Loop gain on `H` in the lambda law.
    pub k: f64,
    /// Gain of the estimate law.
    pub k_theta: f64,
    pub theta_lo: Vector,
    pub theta_hi: Vector,
    pub theta_loop: ThetaLoop,
    /// Hold lambda at 1 once it first gets there.
    pub latch: bool,
    pub dt: f64,
    pub t_end: f64,
    pub rank_tol: f64,
    pub log_every: usize,
}

impl IdentGains {
    pub fn validate(&self, q: usize) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("k", self.k),
            ("k_theta", self.k_theta),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("rank_tol", self.rank_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.theta_lo.len() != q || self.theta_hi.len() != q {
            return Err(Error::Config(format!("theta bounds must have dimension {q}")));
        }
        if self.theta_lo.iter().zip(self.theta_hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::Config("theta bounds are empty".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// `H = x - xhat - (1 - lambda)(x0 - xhat0)`.
pub fn compute_h_ident(x: &Vector, xhat: &Vector, x0: &Vector, xhat0: &Vector, lambda: f64) -> Vector {
    x - xhat - (x0 - xhat0) * (1.0 - lambda)
}

/// `H' = A1 theta + A2 lambda' + x' + b_model` with `A1 = -w(xhat, u)`,
/// `A2 = x0 - xhat0`, `b_model = -f(xhat, u)`. The measured `x'` is kept
/// out of the assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentAssembly {
    pub a1: Mat,
    pub a2: Vector,
    pub b_model: Vector,
}

impl IdentAssembly {
    pub fn a(&self) -> Mat {
        let (n, q) = self.a1.shape();
        let mut a = Mat::zeros(n, q + 1);
        a.columns_mut(0, q).copy_from(&self.a1);
        a.set_column(q, &self.a2);
        a
    }
}

pub fn assemble_ident<M: UncertainAffine + ?Sized>(
    model: &M,
    xhat: &Vector,
    u: &Vector,
    x0: &Vector,
    xhat0: &Vector,
) -> Result<IdentAssembly> {
    let w = model.w(xhat, u);
    let f = model.f(xhat, u);
    ensure_finite_vec("model drift", &f)?;
    Ok(IdentAssembly {
        a1: -w,
        a2: x0 - xhat0,
        b_model: -f,
    })
}

/// `lambda`-law pieces: `(theta', lambda') = M + N x'`.
#[derive(Debug, Clone, PartialEq)]
pub struct MnSplit {
    /// Length `q + 1`; the last entry is `M2`.
    pub m: Vector,
    /// `(q + 1) x n`; the last row is `N2`.
    pub n: Mat,
}

impl MnSplit {
    pub fn m2(&self) -> f64 {
        self.m[self.m.len() - 1]
    }

    pub fn n2(&self) -> Vector {
        self.n.row(self.n.nrows() - 1).transpose()
    }
}

/// `M = alpha tau(A) - k A^+ H + A^+ f(xhat, u)`, `N = -A^+`.
pub fn split_mn(assembly: &IdentAssembly, h: &Vector, gains: &IdentGains) -> Result<MnSplit> {
    let a = assembly.a();
    let tau = smallmat::tangent_vector_tol(&a, gains.rank_tol).map_err(|e| match e {
        Error::RankDeficient { .. } => Error::ContinuationBreakdown {
            t: f64::NAN,
            sigma_min: crate::control::smallest_singular_value(&a),
            state: Vec::new(),
        },
        other => other,
    })?;
    let p = smallmat::pinv(&a, gains.rank_tol)?;
    let m = tau * gains.alpha - &p * h * gains.k - &p * &assembly.b_model;
    Ok(MnSplit { m, n: -p })
}

/// Running state of the integration-by-parts lambda formula
/// `lambda = int M2 + N2 x - N2(0) x(0) - int N2' x`.
#[derive(Debug, Clone, Default)]
pub struct LambdaIntegrator {
    i_m2: f64,
    i_n2x: f64,
    prev: Option<Prev>,
    n2_0: Vector,
    x_0: Vector,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
struct Prev {
    m2: f64,
    n2: Vector,
    x: Vector,
}

impl LambdaIntegrator {
    pub fn new() -> Self {
        Self::default()
    }

    fn begin(&mut self, m2: f64, n2: &Vector, x: &Vector) -> f64 {
        self.n2_0 = n2.clone();
        self.x_0 = x.clone();
        self.prev = Some(Prev {
            m2,
            n2: n2.clone(),
            x: x.clone(),
        });
        self.lambda = 0.0;
        0.0
    }

    /// Adds the step's share of `int N2' x` as the Stieltjes trapezoid
    /// `(N2 - N2_prev) (x + x_prev) / 2`, so `x` is never differenced.
    /// Returns the part of lambda that does not depend on the current `M2`.
    fn by_parts(&mut self, n2: &Vector, x: &Vector) -> f64 {
        let prev = self.prev.as_ref().expect("begun");
        self.i_n2x += (n2 - &prev.n2).dot(&((x + &prev.x) * 0.5));
        n2.dot(x) - self.n2_0.dot(&self.x_0) - self.i_n2x
    }

    /// One call per step, in time order; the first call fixes `N2(0)` and
    /// `x(0)` and returns 0.
    pub fn advance(&mut self, m2: f64, n2: &Vector, x: &Vector, dt: f64) -> f64 {
        if self.prev.is_none() {
            return self.begin(m2, n2, x);
        }
        let rest = self.by_parts(n2, x);
        let prev_m2 = self.prev.as_ref().map_or(m2, |p| p.m2);
        self.i_m2 += 0.5 * dt * (m2 + prev_m2);
        self.finish(m2, n2, x, rest)
    }

    /// As [`advance`](Self::advance) for `M2 = a + b lambda`, solving the
    /// trapezoidal update for the current lambda exactly.
    pub fn advance_affine(&mut self, a: f64, b: f64, n2: &Vector, x: &Vector, dt: f64) -> f64 {
        if self.prev.is_none() {
            return self.begin(a, n2, x);
        }
        let rest = self.by_parts(n2, x);
        let prev_m2 = self.prev.as_ref().map_or(a, |p| p.m2);
        let lambda = (self.i_m2 + 0.5 * dt * (prev_m2 + a) + rest) / (1.0 - 0.5 * dt * b);
        let m2 = a + b * lambda;
        self.i_m2 += 0.5 * dt * (m2 + prev_m2);
        self.finish(m2, n2, x, rest)
    }

    fn finish(&mut self, m2: f64, n2: &Vector, x: &Vector, rest: f64) -> f64 {
        self.lambda = self.i_m2 + rest;
        self.prev = Some(Prev {
            m2,
            n2: n2.clone(),
            x: x.clone(),
        });
        self.lambda
    }

    /// Latest `M2` fed to the accumulator.
    pub fn last_m2(&self) -> Option<f64> {
        self.prev.as_ref().map(|p| p.m2)
    }
}

/// `theta = clamp(w^+ (+-k_theta H - f(xhat, u)))`.
pub fn theta_estimate<M: UncertainAffine + ?Sized>(
    model: &M,
    xhat: &Vector,
    u: &Vector,
    h: &Vector,
    gains: &IdentGains,
) -> Result<Vector> {
    let w = model.w(xhat, u);
    let f = model.f(xhat, u);
    let sign = match gains.theta_loop {
        ThetaLoop::Tracking => 1.0,
        ThetaLoop::Opposed => -1.0,
    };
    let target = h * (sign * gains.k_theta) - f;
    let raw = if w.shape() == (1, 1) {
        Vector::from_element(1, smallmat::scalar_pinv(w[(0, 0)]) * target[0])
    } else {
        smallmat::pinv(&w, gains.rank_tol)? * target
    };
    Ok(Vector::from_iterator(
        raw.len(),
        raw.iter().enumerate().map(|(j, &v)| v.clamp(gains.theta_lo[j], gains.theta_hi[j])),
    ))
}

/// Uniform measurement noise of the given amplitude from a seeded stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { amplitude: 0.0, seed: 0 }
    }
}

/// Co-simulates the true plant and the model. The identifier sees only
/// the noisy measurement of `x`, the input and the model.
///
/// Log columns: `t, x*, xm*, xhat*, u*, H*, lambda, theta*, M2, N2_*`.
pub fn run_ident_linear<M: UncertainAffine + ?Sized>(
    model: &M,
    truth: &TrueParameters,
    xhat0: &Vector,
    input: &dyn Fn(f64) -> Vector,
    noise: NoiseSpec,
    gains: &IdentGains,
    log: &mut TrajectoryLog,
) -> Result<RunReport> {
    let (n, m, q) = (model.n(), model.m(), model.q());
    gains.validate(q)?;
    if q != n {
        return Err(Error::InvalidInput(format!(
            "the continuation matrix is n x (q + 1); a tangent needs q = n, got n = {n}, q = {q}"
        )));
    }
    if truth.x0.len() != n || xhat0.len() != n || truth.theta.len() != q {
        return Err(Error::InvalidInput("initial states or parameter have the wrong dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut measure = |x: &Vector| -> Vector {
        if noise.amplitude > 0.0 {
            x.map(|v| v + noise.amplitude * rng.gen_range(-1.0..=1.0))
        } else {
            x.clone()
        }
    };

    let mut columns = vec!["t".to_string()];
    for (p, c) in [("x", n), ("xm", n), ("xhat", n), ("u", m), ("H", n)] {
        columns.extend(TrajectoryLog::indexed(p, c));
    }
    columns.push("lambda".into());
    columns.extend(TrajectoryLog::indexed("theta", q));
    columns.push("M2".into());
    columns.extend(TrajectoryLog::indexed("N2_", n));
    *log = TrajectoryLog::new(columns)?;

    let mut x = truth.x0.clone();
    let mut xhat = xhat0.clone();
    let x0m = measure(&x);
    if (&x0m - xhat0).norm() < 1e-12 {
        return Err(Error::Config("x0 and xhat0 coincide; the homotopy column would vanish".into()));
    }
    let c = &x0m - xhat0;

    let mut integ = LambdaIntegrator::new();
    let mut latched = false;
    let mut report = RunReport::default();
    let mut theta = Vector::zeros(q);
    let steps = (gains.t_end / gains.dt - 1e-9).ceil() as usize;

    for k in 0..=steps {
        let t = k as f64 * gains.dt;
        let u = input(t);
        let xm = if k == 0 { x0m.clone() } else { measure(&x) };

        let assembly = assemble_ident(model, &xhat, &u, &x0m, xhat0)?;
        // H = H_free + lambda c, so M2 = a + b lambda
        let h_free = &xm - &xhat - &c;
        let split = split_mn(&assembly, &h_free, gains).map_err(|e| crate::control::at_state(e, t, &xhat))?;
        let p = -&split.n;
        let b = -gains.k * (&p * &c)[q];
        let a = split.m2();
        let mut lambda = integ.advance_affine(a, b, &split.n2(), &xm, gains.dt);
        if gains.latch && (latched || lambda >= 1.0) {
            if !latched {
                report.t_switch = Some(t);
                info!("lambda reached 1 at t = {t:.4}");
            }
            latched = true;
            lambda = 1.0;
        } else if report.t_switch.is_none() && lambda >= 1.0 {
            report.t_switch = Some(t);
        }
        let h = compute_h_ident(&xm, &xhat, &x0m, xhat0, lambda);
        theta = theta_estimate(model, &xhat, &u, &h, gains)?;

        if k % gains.log_every == 0 || k == steps {
            let mut row = vec![t];
            row.extend(x.iter());
            row.extend(xm.iter());
            row.extend(xhat.iter());
            row.extend(u.iter());
            row.extend(h.iter());
            row.push(lambda);
            row.extend(theta.iter());
            row.push(integ.last_m2().unwrap_or(a));
            row.extend(split.n2().iter());
            log.push(row)?;
        }
        report.final_lambda = lambda;
        report.max_u = report.max_u.max(u.amax());
        if k == steps {
            break;
        }

        let th = theta.clone();
        xhat = rk4_step(&|tt: f64, s: &Vector| Ok(model.rhs(s, &input(tt), &th)), t, &xhat, gains.dt)?;
        x = rk4_step(&|tt: f64, s: &Vector| Ok(model.rhs(s, &input(tt), &truth.theta)), t, &x, gains.dt)?;
        report.steps = k + 1;
    }

    report.t_final = steps as f64 * gains.dt;
    report.final_theta = Some(theta);
    report.final_error = Some((&x - &xhat).norm());
    report.min_sigma = f64::NAN;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `x' = u + theta (1 - x^2)`, written out here independently of the
    /// bundled catalog.
    struct Scalar;

    impl UncertainAffine for Scalar {
        fn n(&self) -> usize {
            1
        }
        fn m(&self) -> usize {
            1
        }
        fn q(&self) -> usize {
            1
        }
        fn f(&self, _x: &Vector, u: &Vector) -> Vector {
            u.clone()
        }
        fn w(&self, x: &Vector, _u: &Vector) -> Mat {
            Mat::from_element(1, 1, 1.0 - x[0] * x[0])
        }
    }

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    fn gains() -> IdentGains {
        IdentGains {
            alpha: 2.5,
            k: 5.0,
            k_theta: 10.0,
            theta_lo: s(0.0),
            theta_hi: s(10.0),
            theta_loop: ThetaLoop::Tracking,
            latch: true,
            dt: 1e-3,
            t_end: 20.0,
            rank_tol: smallmat::DEFAULT_TOL,
            log_every: 1,
        }
    }

    #[test]
    fn h_cases() {
        let (x0, xh0) = (s(0.0), s(0.5));
        assert_eq!(compute_h_ident(&x0, &xh0, &x0, &xh0, 0.0)[0], 0.0);
        assert_eq!(compute_h_ident(&s(0.7), &s(0.2), &x0, &xh0, 1.0)[0], 0.7 - 0.2);
        assert_relative_eq!(compute_h_ident(&s(0.3), &s(0.1), &x0, &xh0, 0.5)[0], 0.45, epsilon = 1e-15);
    }

    #[test]
    fn assembly_of_scalar_example() {
        let xh = s(0.4);
        let u = s(1.3);
        let asm = assemble_ident(&Scalar, &xh, &u, &s(0.0), &s(0.5)).unwrap();
        assert_relative_eq!(asm.a1[(0, 0)], 0.4 * 0.4 - 1.0, epsilon = 1e-15);
        assert_eq!(asm.a2[0], -0.5);
        assert_eq!(asm.b_model[0], -1.3);
        assert_eq!(asm.a().shape(), (1, 2));
    }

    #[test]
    fn split_reductions() {
        let mut g = gains();
        let xh = s(0.4);
        let asm = assemble_ident(&Scalar, &xh, &s(0.0), &s(0.0), &s(0.5)).unwrap();
        // predictor only
        let mn = split_mn(&asm, &s(0.0), &g).unwrap();
        let tau = smallmat::tangent_vector(&asm.a()).unwrap();
        assert_relative_eq!(mn.m, tau * g.alpha, epsilon = 1e-12);

        // gain-free split with a nonzero drift
        g.alpha = 1e-300;
        g.k = 1e-300;
        let asm = assemble_ident(&Scalar, &xh, &s(0.8), &s(0.0), &s(0.5)).unwrap();
        let mn = split_mn(&asm, &s(0.2), &g).unwrap();
        let a = asm.a();
        let p = a.transpose() / a.norm_squared();
        assert_relative_eq!(mn.m, p.column(0) * 0.8, epsilon = 1e-12);
        assert_relative_eq!(mn.n, -p, epsilon = 1e-12);
        assert_relative_eq!(mn.n2()[0], -a[(0, 1)] / a.norm_squared(), epsilon = 1e-12);
    }

    #[test]
    fn lambda_integrator_reductions() {
        let dt = 0.01;
        let n2 = s(0.7);
        let mut li = LambdaIntegrator::new();
        let x0 = s(0.2);
        assert_eq!(li.advance(0.0, &n2, &x0, dt), 0.0);
        let mut x = x0.clone();
        for k in 1..=100 {
            x = s(0.2 + (k as f64 * dt).sin());
            li.advance(0.0, &n2, &x, dt);
        }
        assert_relative_eq!(li.lambda, 0.7 * (x[0] - x0[0]), epsilon = 1e-12);

        let mut li = LambdaIntegrator::new();
        let zero = s(0.0);
        li.advance(0.3, &zero, &x0, dt);
        for _ in 0..250 {
            li.advance(0.3, &zero, &x0, dt);
        }
        assert_relative_eq!(li.lambda, 0.3 * 2.5, epsilon = 1e-12);
    }

    #[test]
    fn implicit_update_solves_linear_lambda_law() {
        // lambda' = 1 - lambda from 0: lambda = 1 - exp(-t)
        let dt = 1e-3;
        let zero = s(0.0);
        let mut li = LambdaIntegrator::new();
        li.advance_affine(1.0, -1.0, &zero, &zero, dt);
        for _ in 0..1000 {
            li.advance_affine(1.0, -1.0, &zero, &zero, dt);
        }
        assert_relative_eq!(li.lambda, 1.0 - (-1.0_f64).exp(), epsilon = 1e-7);
        assert_relative_eq!(li.last_m2().unwrap(), (-1.0_f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn theta_formula_cases() {
        let g = gains();
        let xh = s(0.5);
        let th = theta_estimate(&Scalar, &xh, &s(-3.0), &s(0.1), &g).unwrap();
        assert_relative_eq!(th[0], (10.0 * 0.1 + 3.0) / 0.75, epsilon = 1e-12);
        // singular regressor
        let th = theta_estimate(&Scalar, &s(1.0), &s(-3.0), &s(0.1), &g).unwrap();
        assert_eq!(th[0], 0.0);
        // clamped from above and below
        assert_eq!(theta_estimate(&Scalar, &xh, &s(-30.0), &s(0.0), &g).unwrap()[0], 10.0);
        assert_eq!(theta_estimate(&Scalar, &xh, &s(3.0), &s(0.0), &g).unwrap()[0], 0.0);
        // the opposed loop flips the H term only
        let mut o = g.clone();
        o.theta_loop = ThetaLoop::Opposed;
        let th = theta_estimate(&Scalar, &xh, &s(-3.0), &s(0.1), &o).unwrap();
        assert_relative_eq!(th[0], (-10.0 * 0.1 + 3.0) / 0.75, epsilon = 1e-12);
    }

    #[test]
    fn theta_loop_parses() {
        assert_eq!("tracking".parse::<ThetaLoop>().unwrap(), ThetaLoop::Tracking);
        assert_eq!("opposed".parse::<ThetaLoop>().unwrap(), ThetaLoop::Opposed);
        assert!("up".parse::<ThetaLoop>().is_err());
    }

    fn run(theta: f64, noise: NoiseSpec, g: &IdentGains) -> (RunReport, TrajectoryLog) {
        let truth = TrueParameters { theta: s(theta), x0: s(0.0) };
        let mut log = TrajectoryLog::default();
        let r = run_ident_linear(&Scalar, &truth, &s(0.5), &|t| s(t), noise, g, &mut log).unwrap();
        (r, log)
    }

    #[test]
    fn noise_free_run_identifies_theta() {
        let mut g = gains();
        g.log_every = 100;
        let (r, log) = run(5.0, NoiseSpec::none(), &g);
        assert!((r.final_theta.unwrap()[0] - 5.0).abs() <= 0.05);
        assert!(r.t_switch.is_some());
        assert!(r.final_error.unwrap() < 0.025);
        let lam = log.column("lambda").unwrap();
        assert_eq!(lam[0], 0.0);
        assert_eq!(*lam.last().unwrap(), 1.0);
    }

    #[test]
    fn zero_parameter_is_identified() {
        let mut g = gains();
        g.log_every = 1000;
        let (r, _) = run(0.0, NoiseSpec::none(), &g);
        assert!(r.final_theta.unwrap()[0].abs() < 0.05);
        // with theta pinned at its lower bound the model rate is k_theta H,
        // a first-order tracker of the ramp x' = t: lag x'/k_theta
        assert_relative_eq!(r.final_error.unwrap(), 20.0 / g.k_theta, epsilon = 0.02);
    }

    #[test]
    fn coincident_initial_states_rejected() {
        let truth = TrueParameters { theta: s(5.0), x0: s(0.5) };
        let mut log = TrajectoryLog::default();
        let err = run_ident_linear(&Scalar, &truth, &s(0.5), &|t| s(t), NoiseSpec::none(), &gains(), &mut log)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
