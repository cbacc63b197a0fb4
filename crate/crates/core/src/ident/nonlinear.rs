//! Identification under nonlinear parameterization `x' = f(x, u, theta)`.
//!
//! Two error signals are supported. The continuous one compares model and
//! plant derivatives directly and needs a privileged derivative oracle. The
//! discrete one restarts the model from the measured state at the start of
//! each window and compares endpoints, so only sampled states are used.
//! Either way `(theta, lambda)` follows a homotopy from the anchor `theta0`
//! to a zero of the error.

use log::{info, warn};

use crate::control::{at_state, feedback_with, RunReport, TangentScaling};
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::log::TrajectoryLog;
use crate::models::{ensure_finite_vec, TrueParameters, UncertainGeneral};
use crate::smallmat::{self, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IdentMode {
    /// Instantaneous derivative mismatch, with `xhat := x`.
    #[default]
    Continuous,
    /// Windowed endpoint error, held between window boundaries.
    Discrete { delta_t: f64 },
}

/// How the window Jacobian `d e / d theta` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    /// Forward sensitivity `S' = f_x S + f_theta`, `S(t_i) = 0`, integrated
    /// alongside the model. This is the exact derivative of the window error.
    #[default]
    Sensitivity,
    /// Trapezoidal integral of `f_theta` along the model trajectory. Drops
    /// the `f_x S` coupling, so it is only first-order accurate in the
    /// window length.
    ElementWise,
}

impl std::str::FromStr for JacobianMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sensitivity" => Ok(Self::Sensitivity),
            "element-wise" | "elementwise" => Ok(Self::ElementWise),
            other => Err(Error::Config(format!(
                "unknown jacobian mode `{other}` (sensitivity|element-wise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentNlGains {
    pub alpha: f64,
    pub gamma: f64,
    pub k: f64,
    /// Homotopy anchor.
    pub theta0: Vector,
    pub mode: IdentMode,
    pub jacobian: JacobianMode,
    pub tangent: TangentScaling,
    /// Rows of the state error used for identification; must have `q`
    /// entries. `None` uses every row and needs `n = q`.
    pub error_rows: Option<Vec<usize>>,
    pub dt: f64,
    pub t_end: f64,
    pub rank_tol: f64,
    pub log_every: usize,
}

impl IdentNlGains {
    fn validate(&self, n: usize, q: usize) -> Result<Vec<usize>> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("k", self.k),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("rank_tol", self.rank_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.theta0.len() != q {
            return Err(Error::Config(format!("theta0 must have dimension {q}")));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if let IdentMode::Discrete { delta_t } = self.mode {
            let ratio = delta_t / self.dt;
            if !(delta_t > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
                return Err(Error::Config(format!(
                    "window length {delta_t} must be a positive multiple of dt = {}",
                    self.dt
                )));
            }
        }
        let rows = match &self.error_rows {
            Some(r) => r.clone(),
            None => (0..n).collect(),
        };
        if rows.len() != q || rows.iter().any(|&r| r >= n) {
            return Err(Error::Config(format!(
                "error rows {rows:?} must pick {q} distinct state rows out of {n}"
            )));
        }
        Ok(rows)
    }
}

/// One identification window `[t_i, t_next]` integrated with step `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub t_i: f64,
    pub t_next: f64,
    pub dt: f64,
}

impl WindowSpec {
    fn steps(&self) -> usize {
        ((self.t_next - self.t_i) / self.dt).round().max(1.0) as usize
    }

    fn h(&self) -> f64 {
        (self.t_next - self.t_i) / self.steps() as f64
    }
}

/// Model restarted at the measured `x(t_i)` and integrated across the
/// window; returns `xhat(t_next) - x(t_next)`.
pub fn window_error<M: UncertainGeneral + ?Sized>(
    model: &M,
    x_at_ti: &Vector,
    x_at_tnext: &Vector,
    input: &dyn Fn(f64) -> Vector,
    theta_hat: &Vector,
    window: &WindowSpec,
) -> Result<Vector> {
    let rhs = |t: f64, s: &Vector| Ok(model.f(s, &input(t), theta_hat));
    let mut xh = x_at_ti.clone();
    let h = window.h();
    for j in 0..window.steps() {
        xh = rk4_step(&rhs, window.t_i + j as f64 * h, &xh, h)?;
    }
    Ok(xh - x_at_tnext)
}

/// `d e / d theta` over the window, n x q.
pub fn window_jacobian<M: UncertainGeneral + ?Sized>(
    model: &M,
    x_at_ti: &Vector,
    input: &dyn Fn(f64) -> Vector,
    theta_hat: &Vector,
    window: &WindowSpec,
    mode: JacobianMode,
) -> Result<Mat> {
    let n = model.n();
    let q = model.q();
    let h = window.h();
    match mode {
        JacobianMode::ElementWise => {
            let rhs = |t: f64, s: &Vector| Ok(model.f(s, &input(t), theta_hat));
            let mut xh = x_at_ti.clone();
            let mut acc = Mat::zeros(n, q);
            let mut g_prev = model.df_dtheta(&xh, &input(window.t_i), theta_hat);
            for j in 0..window.steps() {
                let t = window.t_i + j as f64 * h;
                xh = rk4_step(&rhs, t, &xh, h)?;
                let g = model.df_dtheta(&xh, &input(t + h), theta_hat);
                acc += (&g_prev + &g) * (0.5 * h);
                g_prev = g;
            }
            Ok(acc)
        }
        JacobianMode::Sensitivity => {
            // augmented state (xhat, vec(S)) with S column-major
            let rhs = |t: f64, z: &Vector| -> Result<Vector> {
                let u = input(t);
                let x = z.rows(0, n).into_owned();
                let s = Mat::from_column_slice(n, q, &z.as_slice()[n..]);
                let ds = model.df_dx(&x, &u, theta_hat) * s + model.df_dtheta(&x, &u, theta_hat);
                let mut out = Vector::zeros(n + n * q);
                out.rows_mut(0, n).copy_from(&model.f(&x, &u, theta_hat));
                out.rows_mut(n, n * q).copy_from_slice(ds.as_slice());
                Ok(out)
            };
            let mut z = Vector::zeros(n + n * q);
            z.rows_mut(0, n).copy_from(x_at_ti);
            for j in 0..window.steps() {
                z = rk4_step(&rhs, window.t_i + j as f64 * h, &z, h)?;
            }
            Ok(Mat::from_column_slice(n, q, &z.as_slice()[n..]))
        }
    }
}

/// `(x, u) -> x'`.
pub type StateRate<'a> = dyn Fn(&Vector, &Vector) -> Vector + 'a;

/// `f(x, u, theta_hat) - f(x, u, theta)`. The plant derivative comes from
/// `oracle`, which only the continuous mode provides.
pub fn continuous_error<M: UncertainGeneral + ?Sized>(
    model: &M,
    x: &Vector,
    u: &Vector,
    theta_hat: &Vector,
    oracle: Option<&StateRate<'_>>,
) -> Result<Vector> {
    let Some(plant_rate) = oracle else {
        return Err(Error::Unavailable(
            "the plant derivative is not measured; the continuous error needs the simulation oracle".into(),
        ));
    };
    Ok(model.f(x, u, theta_hat) - plant_rate(x, u))
}

/// `theta' = -k J^+ e`.
pub fn newton_adaptation(e_bar: &Vector, jac: &Mat, k: f64) -> Result<Vector> {
    let rank = smallmat::rank(jac, smallmat::DEFAULT_TOL).unwrap_or(0);
    if rank < jac.nrows().min(jac.ncols()) || rank < e_bar.len() {
        warn!("parameter Jacobian is rank deficient (rank {rank}); using the pseudoinverse");
    }
    if jac.iter().all(|v| *v == 0.0) {
        return Ok(Vector::zeros(jac.ncols()));
    }
    Ok(smallmat::pinv(jac, smallmat::DEFAULT_TOL)? * e_bar * -k)
}

/// Homotopy flow on `H = lambda e + (1 - lambda)(theta - theta0)`:
/// `(theta', lambda') = predictor - k Q (A Q)^+ H` with
/// `A = [lambda De + (1 - lambda) I | e - theta + theta0]`.
pub fn homotopy_ident_step(
    e: &Vector,
    de: &Mat,
    theta_hat: &Vector,
    lambda: f64,
    gains: &IdentNlGains,
) -> Result<(Vector, f64)> {
    let q = theta_hat.len();
    if e.len() != q || de.shape() != (q, q) || gains.theta0.len() != q {
        return Err(Error::InvalidInput("homotopy step: e, De and theta must agree in dimension".into()));
    }
    let dtheta = theta_hat - &gains.theta0;
    let mut a = Mat::zeros(q, q + 1);
    a.columns_mut(0, q)
        .copy_from(&(de * lambda + Mat::identity(q, q) * (1.0 - lambda)));
    a.set_column(q, &(e - &dtheta));
    let h = e * lambda + dtheta * (1.0 - lambda);
    let out = feedback_with(&a, &(-h * gains.k), gains.alpha, gains.gamma, gains.tangent, gains.rank_tol)?;
    Ok((out.rows(0, q).into_owned(), out[q]))
}

fn select(v: &Vector, rows: &[usize]) -> Vector {
    Vector::from_iterator(rows.len(), rows.iter().map(|&r| v[r]))
}

fn select_rows(a: &Mat, rows: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// After lambda reaches 1 it is held there and the estimate follows the
/// Newton flow on the error alone.
fn flow(e: &Vector, de: &Mat, theta: &Vector, lambda: f64, latched: bool, gains: &IdentNlGains) -> Result<(Vector, f64)> {
    if latched {
        Ok((newton_adaptation(e, de, gains.k)?, 0.0))
    } else {
        homotopy_ident_step(e, de, theta, lambda, gains)
    }
}

/// Runs the identifier against a simulated plant.
///
/// Log columns: `t, x*, u*, theta*, lambda, e*, De_ij, e_norm, window_start`.
pub fn run_ident_nonlinear<M: UncertainGeneral + ?Sized>(
    model: &M,
    truth: &TrueParameters,
    input: &dyn Fn(f64) -> Vector,
    gains: &IdentNlGains,
    log: &mut TrajectoryLog,
) -> Result<RunReport> {
    let (n, m, q) = (model.n(), model.m(), model.q());
    let rows = gains.validate(n, q)?;
    if truth.x0.len() != n || truth.theta.len() != q {
        return Err(Error::InvalidInput("true state or parameter has the wrong dimension".into()));
    }
    let mut columns = vec!["t".to_string()];
    for (p, c) in [("x", n), ("u", m), ("theta", q)] {
        columns.extend(TrajectoryLog::indexed(p, c));
    }
    columns.push("lambda".into());
    columns.extend(TrajectoryLog::indexed("e", q));
    for i in 1..=q {
        for j in 1..=q {
            columns.push(format!("De{i}{j}"));
        }
    }
    columns.extend(["e_norm", "window_start"].map(String::from));
    *log = TrajectoryLog::new(columns)?;

    let record = |log: &mut TrajectoryLog, t: f64, x: &Vector, th: &Vector, lam: f64, e: &Vector, de: &Mat, w: f64| {
        let mut row = vec![t];
        row.extend(x.iter());
        row.extend(input(t).iter());
        row.extend(th.iter());
        row.push(lam);
        row.extend(e.iter());
        for i in 0..q {
            for j in 0..q {
                row.push(de[(i, j)]);
            }
        }
        row.push(e.norm());
        row.push(w);
        log.push(row)
    };

    let plant_rate = |x: &Vector, u: &Vector| model.f(x, u, &truth.theta);
    let steps = (gains.t_end / gains.dt - 1e-9).ceil() as usize;
    let mut report = RunReport {
        min_sigma: f64::NAN,
        ..Default::default()
    };
    let mut x = truth.x0.clone();
    let mut theta = gains.theta0.clone();
    let mut lambda = 0.0;
    let mut latched = false;

    match gains.mode {
        IdentMode::Continuous => {
            // composite state (x, theta, lambda); the model state is x itself
            let errors = |t: f64, x: &Vector, th: &Vector| -> Result<(Vector, Mat)> {
                let u = input(t);
                let e = continuous_error(model, x, &u, th, Some(&plant_rate))?;
                let de = model.df_dtheta(x, &u, th);
                Ok((select(&e, &rows), select_rows(&de, &rows)))
            };
            let (e0, de0) = errors(0.0, &x, &theta)?;
            record(log, 0.0, &x, &theta, lambda, &e0, &de0, f64::NAN)?;
            let mut last_e = e0;
            for k in 0..steps {
                let t = k as f64 * gains.dt;
                let t_next = (k + 1) as f64 * gains.dt;
                let mut z = Vector::zeros(n + q + 1);
                z.rows_mut(0, n).copy_from(&x);
                z.rows_mut(n, q).copy_from(&theta);
                z[n + q] = lambda;
                let lat = latched;
                let rhs = |tt: f64, z: &Vector| -> Result<Vector> {
                    let xx = z.rows(0, n).into_owned();
                    let th = z.rows(n, q).into_owned();
                    let (e, de) = errors(tt, &xx, &th)?;
                    let (dth, dl) = flow(&e, &de, &th, z[n + q], lat, gains).map_err(|err| at_state(err, tt, z))?;
                    let mut out = Vector::zeros(n + q + 1);
                    out.rows_mut(0, n).copy_from(&plant_rate(&xx, &input(tt)));
                    out.rows_mut(n, q).copy_from(&dth);
                    out[n + q] = dl;
                    Ok(out)
                };
                z = rk4_step(&rhs, t, &z, gains.dt)?;
                x = z.rows(0, n).into_owned();
                theta = z.rows(n, q).into_owned();
                lambda = z[n + q];
                if !latched && lambda >= 1.0 {
                    latched = true;
                    lambda = 1.0;
                    report.t_switch = Some(t_next);
                    info!("lambda reached 1 at t = {t_next:.3}, theta = {:?}", theta.as_slice());
                }
                report.steps = k + 1;
                report.max_u = report.max_u.max(input(t).amax());
                if (k + 1) % gains.log_every == 0 || k + 1 == steps {
                    let (e, de) = errors(t_next, &x, &theta)?;
                    record(log, t_next, &x, &theta, lambda, &e, &de, f64::NAN)?;
                    last_e = e;
                }
            }
            report.final_error = Some(last_e.norm());
        }
        IdentMode::Discrete { delta_t } => {
            let per_window = (delta_t / gains.dt).round() as usize;
            let mut held: Option<(Vector, Mat)> = None;
            let mut window_start = 0.0;
            let mut x_at_start = x.clone();
            let zero_e = Vector::zeros(q);
            let zero_de = Mat::zeros(q, q);
            record(log, 0.0, &x, &theta, lambda, &zero_e, &zero_de, f64::NAN)?;
            for k in 0..steps {
                let t = k as f64 * gains.dt;
                let t_next = (k + 1) as f64 * gains.dt;
                if k > 0 && k % per_window == 0 {
                    // window [t - delta_t, t] is complete: evaluate at the
                    // current estimate and hold until the next boundary
                    let w = WindowSpec {
                        t_i: window_start,
                        t_next: t,
                        dt: gains.dt,
                    };
                    let e = window_error(model, &x_at_start, &x, input, &theta, &w)?;
                    let de = window_jacobian(model, &x_at_start, input, &theta, &w, gains.jacobian)?;
                    ensure_finite_vec("window error", &e)?;
                    held = Some((select(&e, &rows), select_rows(&de, &rows)));
                    window_start = t;
                    x_at_start = x.clone();
                }
                x = rk4_step(&|tt: f64, s: &Vector| Ok(plant_rate(s, &input(tt))), t, &x, gains.dt)?;
                if let Some((e, de)) = &held {
                    let mut s = Vector::zeros(q + 1);
                    s.rows_mut(0, q).copy_from(&theta);
                    s[q] = lambda;
                    let lat = latched;
                    let rhs = |tt: f64, s: &Vector| -> Result<Vector> {
                        let th = s.rows(0, q).into_owned();
                        let (dth, dl) = flow(e, de, &th, s[q], lat, gains).map_err(|err| at_state(err, tt, s))?;
                        let mut out = Vector::zeros(q + 1);
                        out.rows_mut(0, q).copy_from(&dth);
                        out[q] = dl;
                        Ok(out)
                    };
                    s = rk4_step(&rhs, t, &s, gains.dt)?;
                    theta = s.rows(0, q).into_owned();
                    lambda = s[q];
                    if !latched && lambda >= 1.0 {
                        latched = true;
                        lambda = 1.0;
                        report.t_switch = Some(t_next);
                        info!("lambda reached 1 at t = {t_next:.3}, theta = {:?}", theta.as_slice());
                    }
                }
                report.steps = k + 1;
                report.max_u = report.max_u.max(input(t).amax());
                if (k + 1) % gains.log_every == 0 || k + 1 == steps {
                    let (e, de) = held.as_ref().map_or((&zero_e, &zero_de), |(e, d)| (e, d));
                    let ws = if held.is_some() { window_start - delta_t } else { f64::NAN };
                    record(log, t_next, &x, &theta, lambda, e, de, ws)?;
                }
            }
            report.final_error = held.map(|(e, _)| e.norm());
        }
    }

    report.t_final = steps as f64 * gains.dt;
    report.final_theta = Some(theta);
    report.final_lambda = lambda;
    Ok(report)
}
