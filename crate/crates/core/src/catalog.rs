//! Bundled example systems, each wired to the engine that drives it.
//!
//! `build` returns a fully configured [`ExampleSpec`]; `run` dispatches it.
//! Overrides arrive as `key = value` strings and are checked against the
//! example's engine, so a typo is an error rather than a silent no-op.

use crate::control::{
    run_affine_setpoint, run_nonaffine_setpoint, ControlGains, HomotopyForm, NonaffineOptions, RunReport,
    TangentScaling,
};
use crate::error::{Error, Result};
use crate::ident::{
    run_ident_linear, run_ident_nonlinear, IdentGains, IdentMode, IdentNlGains, JacobianMode, NoiseSpec, ThetaLoop,
};
use crate::log::TrajectoryLog;
use crate::models::{self, AffinePlant, GeneralPlant, TrueParameters, UncertainAffine, UncertainGeneral};
use crate::smallmat::{Mat, Vector};

/// Registered ids in listing order.
pub const EXAMPLE_IDS: [&str; 6] = [
    "affine-mimo",
    "nonaffine-siso",
    "cubic-siso",
    "ident-linear",
    "ident-nl-continuous",
    "ident-nl-discrete",
];

fn s(v: f64) -> Vector {
    Vector::from_element(1, v)
}

/// Two-input, two-output affine plant whose first decoupling entry
/// `3 x1^2 - 1` vanishes on the way from `x0 = (1, 1)` to the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct AffineMimo;

impl AffineMimo {
    fn a22(x2: f64) -> f64 {
        4.0 * x2.powi(3) * (2.0 * x2).cos() - 2.0 * x2.powi(4) * (2.0 * x2).sin()
    }
}

impl AffinePlant for AffineMimo {
    fn n(&self) -> usize {
        2
    }
    fn m(&self) -> usize {
        2
    }
    fn f(&self, x: &Vector) -> Vector {
        Vector::from_row_slice(&[x[1].powi(3), x[0].powi(3)])
    }
    fn g(&self, _x: &Vector) -> Mat {
        Mat::identity(2, 2)
    }
    fn h(&self, x: &Vector) -> Vector {
        Vector::from_row_slice(&[x[0].powi(3) - x[0] + 1.0, x[1].powi(4) * (2.0 * x[1]).cos()])
    }
    fn rel_deg(&self) -> Vec<usize> {
        vec![1, 1]
    }
    fn decoupling(&self, x: &Vector) -> Mat {
        Mat::from_row_slice(2, 2, &[3.0 * x[0] * x[0] - 1.0, 0.0, 0.0, Self::a22(x[1])])
    }
    fn drift_out(&self, x: &Vector) -> Vector {
        Vector::from_row_slice(&[
            (3.0 * x[0] * x[0] - 1.0) * x[1].powi(3),
            Self::a22(x[1]) * x[0].powi(3),
        ])
    }
}

/// `x' = u^3 (x^2 + 1) + exp(-u)`, `y = x (x^2 - 1) + 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonaffineSiso;

impl GeneralPlant for NonaffineSiso {
    fn n(&self) -> usize {
        1
    }
    fn m(&self) -> usize {
        1
    }
    fn f(&self, x: &Vector, u: &Vector) -> Vector {
        s(u[0].powi(3) * (x[0] * x[0] + 1.0) + (-u[0]).exp())
    }
    fn h(&self, x: &Vector) -> Vector {
        s(x[0] * (x[0] * x[0] - 1.0) + 1.0)
    }
    fn df_du(&self, x: &Vector, u: &Vector) -> Mat {
        Mat::from_element(1, 1, 3.0 * u[0] * u[0] * (x[0] * x[0] + 1.0) - (-u[0]).exp())
    }
    fn dh_dx(&self, x: &Vector) -> Mat {
        Mat::from_element(1, 1, 3.0 * x[0] * x[0] - 1.0)
    }
    fn equilibrium_guess(&self) -> Vector {
        s(-1.0)
    }
}

/// `x' = u`, `y = x (x^2 - 1) + 1`. Its output map folds at `x = +-1/sqrt(3)`,
/// so the origin cannot be reached from `x0 = 1` by inverting `y' = h'(x) u`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CubicSiso;

impl GeneralPlant for CubicSiso {
    fn n(&self) -> usize {
        1
    }
    fn m(&self) -> usize {
        1
    }
    fn f(&self, _x: &Vector, u: &Vector) -> Vector {
        u.clone()
    }
    fn h(&self, x: &Vector) -> Vector {
        s(x[0] * (x[0] * x[0] - 1.0) + 1.0)
    }
    fn df_du(&self, _x: &Vector, _u: &Vector) -> Mat {
        Mat::identity(1, 1)
    }
    fn dh_dx(&self, x: &Vector) -> Mat {
        Mat::from_element(1, 1, 3.0 * x[0] * x[0] - 1.0)
    }
}

impl AffinePlant for CubicSiso {
    fn n(&self) -> usize {
        1
    }
    fn m(&self) -> usize {
        1
    }
    fn f(&self, _x: &Vector) -> Vector {
        s(0.0)
    }
    fn g(&self, _x: &Vector) -> Mat {
        Mat::identity(1, 1)
    }
    fn h(&self, x: &Vector) -> Vector {
        s(x[0] * (x[0] * x[0] - 1.0) + 1.0)
    }
    fn rel_deg(&self) -> Vec<usize> {
        vec![1]
    }
    fn decoupling(&self, x: &Vector) -> Mat {
        Mat::from_element(1, 1, 3.0 * x[0] * x[0] - 1.0)
    }
    fn drift_out(&self, _x: &Vector) -> Vector {
        s(0.0)
    }
}

/// `x' = u + theta (1 - x^2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentScalar;

impl UncertainAffine for IdentScalar {
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

/// Pendulum-like oscillator `x1' = x2`, `x2' = -omega^2 sin(theta x1) + u`.
#[derive(Debug, Clone, Copy)]
pub struct Oscillator {
    pub omega: f64,
}

impl UncertainGeneral for Oscillator {
    fn n(&self) -> usize {
        2
    }
    fn m(&self) -> usize {
        1
    }
    fn q(&self) -> usize {
        1
    }
    fn f(&self, x: &Vector, u: &Vector, theta: &Vector) -> Vector {
        let w2 = self.omega * self.omega;
        Vector::from_row_slice(&[x[1], -w2 * (theta[0] * x[0]).sin() + u[0]])
    }
    fn df_dtheta(&self, x: &Vector, _u: &Vector, theta: &Vector) -> Mat {
        let w2 = self.omega * self.omega;
        Mat::from_row_slice(2, 1, &[0.0, -w2 * x[0] * (theta[0] * x[0]).cos()])
    }
    fn df_dx(&self, x: &Vector, _u: &Vector, theta: &Vector) -> Mat {
        let w2 = self.omega * self.omega;
        Mat::from_row_slice(2, 2, &[0.0, 1.0, -w2 * theta[0] * (theta[0] * x[0]).cos(), 0.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Affine,
    Nonaffine,
    IdentLinear,
    IdentNonlinear,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Affine => "affine",
            Engine::Nonaffine => "nonaffine",
            Engine::IdentLinear => "ident-linear",
            Engine::IdentNonlinear => "ident-nonlinear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSetup {
    pub x0: Vector,
    pub form: HomotopyForm,
    pub gains: ControlGains,
    /// Add `(1, sin 20 t)` to the measured output for the whole run.
    pub disturbance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonaffineSetup {
    pub x0: Vector,
    pub gains: ControlGains,
    pub u0: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentLinearSetup {
    pub truth: TrueParameters,
    pub xhat0: Vector,
    pub gains: IdentGains,
    /// Half-width of the uniform measurement noise.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentNlSetup {
    pub omega: f64,
    pub truth: TrueParameters,
    pub gains: IdentNlGains,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Setup {
    Affine(AffineSetup),
    Nonaffine(NonaffineSetup),
    IdentLinear(IdentLinearSetup),
    IdentNonlinear(IdentNlSetup),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSpec {
    pub id: &'static str,
    pub engine: Engine,
    pub description: &'static str,
    pub setup: Setup,
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {value:?}")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// Comma-separated numbers, e.g. `1, 1`.
fn parse_vec(key: &str, value: &str, len: usize) -> Result<Vector> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| parse_f64(key, p))
        .collect::<Result<_>>()?;
    if parts.len() != len {
        return Err(Error::Config(format!("{key}: expected {len} values, got {}", parts.len())));
    }
    Ok(Vector::from_vec(parts))
}

fn parse_tangent(key: &str, value: &str) -> Result<TangentScaling> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected uniform or metric, got {value:?}")))
}

fn unknown(key: &str, id: &str, known: &[&str]) -> Error {
    Error::Config(format!("unknown key {key:?} for example {id}; accepted keys: {}", known.join(", ")))
}

const CONTROL_KEYS: [&str; 10] = [
    "alpha",
    "gamma",
    "outer_gain",
    "dt",
    "t_end",
    "stagnation_window",
    "stagnation_eps",
    "tangent",
    "rank_tol",
    "log_every",
];

fn apply_control(g: &mut ControlGains, key: &str, value: &str) -> Result<bool> {
    match key {
        "alpha" => g.alpha = parse_f64(key, value)?,
        "gamma" => g.gamma = parse_f64(key, value)?,
        "outer_gain" | "gain" => g.outer_gain = parse_f64(key, value)?,
        "dt" => g.dt = parse_f64(key, value)?,
        "t_end" => g.t_end = parse_f64(key, value)?,
        "stagnation_window" => g.stagnation_window = parse_f64(key, value)?,
        "stagnation_eps" => g.stagnation_eps = parse_f64(key, value)?,
        "tangent" => g.tangent = parse_tangent(key, value)?,
        "rank_tol" => g.rank_tol = parse_f64(key, value)?,
        "log_every" => g.log_every = parse_usize(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl ExampleSpec {
    /// Continuation speed of whichever engine the example uses.
    pub fn alpha(&self) -> f64 {
        match &self.setup {
            Setup::Affine(a) => a.gains.alpha,
            Setup::Nonaffine(a) => a.gains.alpha,
            Setup::IdentLinear(a) => a.gains.alpha,
            Setup::IdentNonlinear(a) => a.gains.alpha,
        }
    }

    /// Identification window length, for the discrete nonlinear identifier.
    pub fn delta_t(&self) -> Option<f64> {
        match &self.setup {
            Setup::IdentNonlinear(IdentNlSetup {
                gains: IdentNlGains {
                    mode: IdentMode::Discrete { delta_t },
                    ..
                },
                ..
            }) => Some(*delta_t),
            _ => None,
        }
    }

    pub fn t_end(&self) -> f64 {
        match &self.setup {
            Setup::Affine(a) => a.gains.t_end,
            Setup::Nonaffine(a) => a.gains.t_end,
            Setup::IdentLinear(a) => a.gains.t_end,
            Setup::IdentNonlinear(a) => a.gains.t_end,
        }
    }

    /// Keys accepted by [`ExampleSpec::apply`].
    pub fn keys(&self) -> Vec<&'static str> {
        let mut keys: Vec<&'static str> = match &self.setup {
            Setup::Affine(_) => [&CONTROL_KEYS[..], &["x0", "form", "disturbance"]].concat(),
            Setup::Nonaffine(_) => [&CONTROL_KEYS[..], &["x0", "u0"]].concat(),
            Setup::IdentLinear(_) => vec![
                "alpha", "k", "k_theta", "theta_lo", "theta_hi", "theta_loop", "latch", "dt", "t_end", "rank_tol",
                "log_every", "theta", "x0", "xhat0", "noise",
            ],
            Setup::IdentNonlinear(_) => vec![
                "alpha", "gamma", "k", "theta0", "delta_t", "jacobian", "tangent", "dt", "t_end", "rank_tol",
                "log_every", "theta", "x0", "omega",
            ],
        };
        keys.sort_unstable();
        keys
    }

    /// Applies one `key = value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let id = self.id;
        let known = self.keys();
        let reject = || unknown(key, id, &known);
        match &mut self.setup {
            Setup::Affine(a) => {
                if apply_control(&mut a.gains, key, value)? {
                    return Ok(());
                }
                match key {
                    "x0" => a.x0 = parse_vec(key, value, a.x0.len())?,
                    "disturbance" => a.disturbance = parse_bool(key, value)?,
                    "form" => {
                        a.form = match value.trim() {
                            "convex" => HomotopyForm::Convex,
                            "linear" => HomotopyForm::Linear,
                            _ => return Err(Error::Config(format!("form: expected convex or linear, got {value:?}"))),
                        }
                    }
                    _ => return Err(reject()),
                }
            }
            Setup::Nonaffine(a) => {
                if apply_control(&mut a.gains, key, value)? {
                    return Ok(());
                }
                match key {
                    "x0" => a.x0 = parse_vec(key, value, a.x0.len())?,
                    "u0" => a.u0 = Some(parse_vec(key, value, 1)?),
                    _ => return Err(reject()),
                }
            }
            Setup::IdentLinear(a) => {
                let g = &mut a.gains;
                match key {
                    "alpha" => g.alpha = parse_f64(key, value)?,
                    "k" => g.k = parse_f64(key, value)?,
                    "k_theta" => g.k_theta = parse_f64(key, value)?,
                    "theta_lo" => g.theta_lo = parse_vec(key, value, g.theta_lo.len())?,
                    "theta_hi" => g.theta_hi = parse_vec(key, value, g.theta_hi.len())?,
                    "theta_loop" => {
                        g.theta_loop = value
                            .trim()
                            .parse::<ThetaLoop>()
                            .map_err(|_| Error::Config(format!("theta_loop: expected tracking or opposed, got {value:?}")))?
                    }
                    "latch" => g.latch = parse_bool(key, value)?,
                    "dt" => g.dt = parse_f64(key, value)?,
                    "t_end" => g.t_end = parse_f64(key, value)?,
                    "rank_tol" => g.rank_tol = parse_f64(key, value)?,
                    "log_every" => g.log_every = parse_usize(key, value)?,
                    "theta" => a.truth.theta = parse_vec(key, value, a.truth.theta.len())?,
                    "x0" => a.truth.x0 = parse_vec(key, value, a.truth.x0.len())?,
                    "xhat0" => a.xhat0 = parse_vec(key, value, a.xhat0.len())?,
                    "noise" => a.noise = parse_f64(key, value)?,
                    _ => return Err(reject()),
                }
            }
            Setup::IdentNonlinear(a) => {
                let g = &mut a.gains;
                match key {
                    "alpha" => g.alpha = parse_f64(key, value)?,
                    "gamma" => g.gamma = parse_f64(key, value)?,
                    "k" => g.k = parse_f64(key, value)?,
                    "theta0" => g.theta0 = parse_vec(key, value, g.theta0.len())?,
                    "delta_t" => match &mut g.mode {
                        IdentMode::Discrete { delta_t } => *delta_t = parse_f64(key, value)?,
                        IdentMode::Continuous => {
                            return Err(Error::Config(format!("delta_t does not apply to {id}, which has no windows")))
                        }
                    },
                    "jacobian" => {
                        g.jacobian = match value.trim() {
                            "sensitivity" => JacobianMode::Sensitivity,
                            "elementwise" | "element-wise" => JacobianMode::ElementWise,
                            _ => {
                                return Err(Error::Config(format!(
                                    "jacobian: expected sensitivity or elementwise, got {value:?}"
                                )))
                            }
                        }
                    }
                    "tangent" => g.tangent = parse_tangent(key, value)?,
                    "dt" => g.dt = parse_f64(key, value)?,
                    "t_end" => g.t_end = parse_f64(key, value)?,
                    "rank_tol" => g.rank_tol = parse_f64(key, value)?,
                    "log_every" => g.log_every = parse_usize(key, value)?,
                    "theta" => a.truth.theta = parse_vec(key, value, a.truth.theta.len())?,
                    "x0" => a.truth.x0 = parse_vec(key, value, a.truth.x0.len())?,
                    "omega" => a.omega = parse_f64(key, value)?,
                    _ => return Err(reject()),
                }
            }
        }
        Ok(())
    }

    /// Limit points of the output map for the scalar control examples.
    pub fn limit_points(&self) -> Result<Vec<f64>> {
        match self.id {
            "cubic-siso" => models::limit_points(&CubicSiso, -2.0, 2.0),
            "nonaffine-siso" => models::limit_points(&NonaffineSiso, -2.0, 2.0),
            _ => Err(Error::InvalidInput(format!("{} is not a scalar control example", self.id))),
        }
    }
}

fn control_gains(alpha: f64, outer_gain: f64, t_end: f64) -> ControlGains {
    ControlGains {
        alpha,
        outer_gain,
        t_end,
        ..ControlGains::default()
    }
}

pub fn build(id: &str) -> Result<ExampleSpec> {
    let spec = match id {
        "affine-mimo" => ExampleSpec {
            id: "affine-mimo",
            engine: Engine::Affine,
            description: "two-channel affine plant whose decoupling matrix turns singular en route",
            setup: Setup::Affine(AffineSetup {
                x0: Vector::from_row_slice(&[1.0, 1.0]),
                form: HomotopyForm::Convex,
                gains: control_gains(20.0, 100.0, 3.0),
                disturbance: true,
            }),
        },
        "nonaffine-siso" => ExampleSpec {
            id: "nonaffine-siso",
            engine: Engine::Nonaffine,
            description: "scalar plant nonaffine in the input, output folds twice",
            setup: Setup::Nonaffine(NonaffineSetup {
                x0: s(1.0),
                gains: control_gains(2.0, 10.0, 5.0),
                u0: None,
            }),
        },
        "cubic-siso" => ExampleSpec {
            id: "cubic-siso",
            engine: Engine::Nonaffine,
            description: "integrator with a cubic output, unreachable by plain feedback linearization",
            setup: Setup::Nonaffine(NonaffineSetup {
                x0: s(1.0),
                gains: control_gains(2.0, 10.0, 5.0),
                u0: None,
            }),
        },
        "ident-linear" => ExampleSpec {
            id: "ident-linear",
            engine: Engine::IdentLinear,
            description: "scalar plant with one linearly entering parameter, noisy state measurement",
            setup: Setup::IdentLinear(IdentLinearSetup {
                truth: TrueParameters {
                    theta: s(5.0),
                    x0: s(0.0),
                },
                xhat0: s(0.5),
                gains: IdentGains {
                    alpha: 2.5,
                    k: 5.0,
                    k_theta: 10.0,
                    theta_lo: s(0.0),
                    theta_hi: s(10.0),
                    theta_loop: ThetaLoop::Tracking,
                    latch: true,
                    dt: 1e-3,
                    t_end: 20.0,
                    rank_tol: crate::smallmat::DEFAULT_TOL,
                    log_every: 1,
                },
                noise: 0.01,
            }),
        },
        "ident-nl-continuous" | "ident-nl-discrete" => {
            let discrete = id == "ident-nl-discrete";
            let (alpha, gamma, mode, t_end, log_every) = if discrete {
                (0.5, 0.05, IdentMode::Discrete { delta_t: 0.1 }, 80.0, 10)
            } else {
                (1.0, 0.1, IdentMode::Continuous, 30.0, 1)
            };
            ExampleSpec {
                id: if discrete { "ident-nl-discrete" } else { "ident-nl-continuous" },
                engine: Engine::IdentNonlinear,
                description: if discrete {
                    "oscillator parameter identified from windowed prediction errors"
                } else {
                    "oscillator parameter identified from the instantaneous derivative error"
                },
                setup: Setup::IdentNonlinear(IdentNlSetup {
                    omega: 2.0,
                    truth: TrueParameters {
                        theta: s(0.75),
                        x0: Vector::zeros(2),
                    },
                    gains: IdentNlGains {
                        alpha,
                        gamma,
                        k: 10.0,
                        theta0: s(0.0),
                        mode,
                        jacobian: JacobianMode::Sensitivity,
                        tangent: TangentScaling::Metric,
                        error_rows: Some(vec![1]),
                        dt: 1e-3,
                        t_end,
                        rank_tol: crate::smallmat::DEFAULT_TOL,
                        log_every,
                    },
                }),
            }
        }
        _ => {
            return Err(Error::UnknownExample {
                id: id.to_string(),
                registered: EXAMPLE_IDS.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    Ok(spec)
}

/// Every registered example in listing order.
pub fn all() -> Vec<ExampleSpec> {
    EXAMPLE_IDS.iter().map(|id| build(id).expect("registered id")).collect()
}

/// Result of [`run`]. The log holds everything written up to the point of
/// failure when `report` is an error.
#[derive(Debug)]
pub struct RunOutcome {
    pub spec: ExampleSpec,
    pub seed: u64,
    pub report: Result<RunReport>,
    pub log: TrajectoryLog,
}

/// Builds `id`, applies `overrides` in order and runs it. The seed drives
/// measurement noise where the example has any.
pub fn run(id: &str, overrides: &[(String, String)], seed: u64) -> Result<RunOutcome> {
    let mut spec = build(id)?;
    for (k, v) in overrides {
        spec.apply(k, v)?;
    }
    Ok(run_spec(spec, seed))
}

pub fn run_spec(spec: ExampleSpec, seed: u64) -> RunOutcome {
    let mut log = TrajectoryLog::default();
    let report = match &spec.setup {
        Setup::Affine(a) => {
            let on = a.disturbance;
            let disturbance = move |t: f64| {
                if on {
                    Vector::from_row_slice(&[1.0, (20.0 * t).sin()])
                } else {
                    Vector::zeros(2)
                }
            };
            match spec.id {
                "cubic-siso" => run_affine_setpoint(&CubicSiso, &a.x0, a.form, &a.gains, &|_| s(0.0), &mut log),
                _ => run_affine_setpoint(&AffineMimo, &a.x0, a.form, &a.gains, &disturbance, &mut log),
            }
        }
        Setup::Nonaffine(a) => {
            let options = NonaffineOptions { u0: a.u0.clone() };
            match spec.id {
                "cubic-siso" => run_nonaffine_setpoint(&CubicSiso, &a.x0, &a.gains, &options, &mut log),
                _ => run_nonaffine_setpoint(&NonaffineSiso, &a.x0, &a.gains, &options, &mut log),
            }
        }
        Setup::IdentLinear(a) => {
            let noise = NoiseSpec {
                amplitude: a.noise,
                seed,
            };
            run_ident_linear(&IdentScalar, &a.truth, &a.xhat0, &|t| s(t), noise, &a.gains, &mut log)
        }
        Setup::IdentNonlinear(a) => {
            let plant = Oscillator { omega: a.omega };
            run_ident_nonlinear(&plant, &a.truth, &|t| s((4.0 * t).sin()), &a.gains, &mut log)
        }
    };
    RunOutcome {
        spec,
        seed,
        report,
        log,
    }
}
