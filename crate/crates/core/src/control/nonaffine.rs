//! Setpoint control of general plants `x' = f(x, u)` through a moving
//! affinization around the current input.

use log::info;

use super::{
    at_state, feedback, outer_loop, smallest_singular_value, ContinuationAssembly, ControlGains, HomotopyState,
    RunReport, StagnationMonitor,
};
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::log::TrajectoryLog;
use crate::models::{affinize_at, ensure_finite_mat, ensure_finite_vec, solve_equilibrium_input, AffinizationFrame, GeneralPlant};
use crate::smallmat::{self, Vector};

/// `H = y + y0 lambda - y0`.
pub fn compute_h_nonaffine(y: &Vector, y0: &Vector, lambda: f64) -> Result<Vector> {
    if y.len() != y0.len() {
        return Err(Error::InvalidInput("y and y0 must have the same dimension".into()));
    }
    Ok(y + y0 * lambda - y0)
}

/// `H' = [h'(x) ghat(x) | y0] (u, lambda') + h'(x) fhat(x)` for relative
/// degree one outputs.
pub fn assemble_nonaffine<P: GeneralPlant + ?Sized>(
    frame: &AffinizationFrame<'_, P>,
    x: &Vector,
    _hs: &HomotopyState,
    y0: &Vector,
) -> Result<ContinuationAssembly> {
    let plant = frame.plant();
    if x.len() != plant.n() || y0.len() != plant.m() {
        return Err(Error::InvalidInput("assembly: dimensions do not match the plant".into()));
    }
    let (fh, gh) = frame.eval(x);
    ensure_finite_vec("affinized drift", &fh)?;
    ensure_finite_mat("affinized input matrix", &gh)?;
    let dh = plant.dh_dx(x);
    ensure_finite_mat("output Jacobian", &dh)?;
    Ok(ContinuationAssembly {
        a1: &dh * gh,
        a2: y0.clone(),
        b: dh * fh,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NonaffineOptions {
    /// Initial expansion input. Solved from `f(x0, u0) = 0` when absent.
    pub u0: Option<Vector>,
}

struct Eval {
    u: Vector,
    lambda_dot: f64,
    h: Vector,
    v: Vector,
    sigma_min: f64,
}

/// Runs the retargeted continuation: the affinization frame is rebuilt at
/// the end of every step around the input just applied. After lambda
/// reaches 1 the frame keeps moving and the output is regulated by inverting
/// `h'(x) ghat(x)`.
///
/// Log columns: `t, x*, u*, y*, H*, v*, lambda, sigma_min, phase,
/// frame_residual`.
pub fn run_nonaffine_setpoint<P: GeneralPlant + ?Sized>(
    plant: &P,
    x0: &Vector,
    gains: &ControlGains,
    options: &NonaffineOptions,
    log: &mut TrajectoryLog,
) -> Result<RunReport> {
    gains.validate()?;
    let (n, m) = (plant.n(), plant.m());
    if x0.len() != n {
        return Err(Error::InvalidInput(format!("x0 has dimension {} but the plant has {n} states", x0.len())));
    }
    if plant.rel_deg().iter().any(|&r| r != 1) {
        return Err(Error::InvalidInput(
            "the nonaffine controller supports relative degree one outputs only".into(),
        ));
    }
    let u0 = match &options.u0 {
        Some(u) if u.len() == m => u.clone(),
        Some(_) => return Err(Error::Config("u0 has the wrong dimension".into())),
        None => solve_equilibrium_input(plant, x0)?,
    };
    info!("initial expansion input u0 = {:?}", u0.as_slice());
    let y0 = plant.h(x0);
    ensure_finite_vec("initial output", &y0)?;

    let eval = |frame: &AffinizationFrame<'_, P>, t: f64, s: &Vector, phase: u8| -> Result<Eval> {
        let x = s.rows(0, n).into_owned();
        let lam = s[n];
        let hs = HomotopyState {
            lambda: lam,
            derivs: vec![],
        };
        let y = plant.h(&x);
        let assembly = assemble_nonaffine(frame, &x, &hs, &y0)?;
        if phase == 1 {
            let h = compute_h_nonaffine(&y, &y0, lam)?;
            let v = outer_loop(&h, gains);
            let (u, lambda_dot) = feedback(&assembly, &v, gains).map_err(|e| at_state(e, t, s))?;
            Ok(Eval {
                u,
                lambda_dot,
                sigma_min: smallest_singular_value(&assembly.a()),
                h,
                v,
            })
        } else {
            let v = outer_loop(&y, gains);
            let rank = smallmat::rank(&assembly.a1, gains.rank_tol)?;
            if rank < m {
                return Err(Error::ContinuationBreakdown {
                    t,
                    sigma_min: smallest_singular_value(&assembly.a1),
                    state: s.iter().copied().collect(),
                });
            }
            let u = smallmat::pinv(&assembly.a1, gains.rank_tol)? * (&v - &assembly.b);
            Ok(Eval {
                u,
                lambda_dot: 0.0,
                sigma_min: f64::NAN,
                h: y,
                v,
            })
        }
    };

    let mut columns = vec!["t".to_string()];
    for (p, c) in [("x", n), ("u", m), ("y", m), ("H", m), ("v", m)] {
        columns.extend(TrajectoryLog::indexed(p, c));
    }
    columns.extend(["lambda", "sigma_min", "phase", "frame_residual"].map(String::from));
    *log = TrajectoryLog::new(columns)?;

    let record = |log: &mut TrajectoryLog, t: f64, s: &Vector, e: &Eval, phase: u8, residual: f64| -> Result<()> {
        let x = s.rows(0, n).into_owned();
        let mut row = vec![t];
        row.extend(x.iter());
        row.extend(e.u.iter());
        row.extend(plant.h(&x).iter());
        row.extend(e.h.iter());
        row.extend(e.v.iter());
        row.extend([s[n], e.sigma_min, phase as f64, residual]);
        log.push(row)
    };

    let mut s = Vector::zeros(n + 1);
    s.rows_mut(0, n).copy_from(x0);
    let mut frame = affinize_at(plant, &u0)?;
    let mut phase = 1u8;
    let mut report = RunReport::default();
    let mut monitor = StagnationMonitor::new(gains.stagnation_window, gains.stagnation_eps);

    let e0 = eval(&frame, 0.0, &s, phase)?;
    report.min_sigma = e0.sigma_min;
    report.max_u = e0.u.amax();
    record(log, 0.0, &s, &e0, phase, 0.0)?;
    monitor.observe(0.0, 0.0);

    let steps = (gains.t_end / gains.dt - 1e-9).ceil() as usize;
    for k in 0..steps {
        let t = k as f64 * gains.dt;
        let t_next = (k + 1) as f64 * gains.dt;
        let ph = phase;
        let rhs = |tt: f64, ss: &Vector| -> Result<Vector> {
            let e = eval(&frame, tt, ss, ph)?;
            let x = ss.rows(0, n).into_owned();
            let mut ds = Vector::zeros(n + 1);
            ds.rows_mut(0, n).copy_from(&plant.f(&x, &e.u));
            ds[n] = e.lambda_dot;
            Ok(ds)
        };
        s = rk4_step(&rhs, t, &s, gains.dt)?;
        report.steps = k + 1;

        if phase == 1 && s[n] >= 1.0 {
            s[n] = 1.0;
            phase = 2;
            report.t_switch = Some(t_next);
            info!("lambda reached 1 at t = {t_next:.4}");
        }

        // evaluate with the frame used over the step, then retarget to it
        let e = eval(&frame, t_next, &s, phase)?;
        let x = s.rows(0, n).into_owned();
        let (fh, gh) = frame.eval(&x);
        let residual = (plant.f(&x, &e.u) - fh - gh * &e.u).norm();
        if phase == 1 {
            report.min_sigma = report.min_sigma.min(e.sigma_min);
        }
        report.max_u = report.max_u.max(e.u.amax());
        if (k + 1) % gains.log_every == 0 || k + 1 == steps {
            record(log, t_next, &s, &e, phase, residual)?;
        }
        frame = affinize_at(plant, &e.u)?;

        if phase == 1 && monitor.observe(t_next, s[n]) {
            return Err(Error::Stagnation { t: t_next, lambda: s[n] });
        }
    }

    report.t_final = steps as f64 * gains.dt;
    report.final_lambda = s[n];
    report.final_y = Some(plant.h(&s.rows(0, n).into_owned()));
    if phase == 1 {
        return Err(Error::Stagnation {
            t: report.t_final,
            lambda: report.final_lambda,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmat::Mat;
    use approx::assert_relative_eq;

    struct Plant;

    impl GeneralPlant for Plant {
        fn n(&self) -> usize {
            1
        }
        fn m(&self) -> usize {
            1
        }
        fn f(&self, x: &Vector, u: &Vector) -> Vector {
            Vector::from_element(1, u[0].powi(3) * (x[0] * x[0] + 1.0) + (-u[0]).exp())
        }
        fn h(&self, x: &Vector) -> Vector {
            Vector::from_element(1, x[0] * (x[0] * x[0] - 1.0) + 1.0)
        }
    }

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn compute_h_examples() {
        assert_eq!(compute_h_nonaffine(&s(2.0), &s(2.0), 0.0).unwrap()[0], 0.0);
        assert_relative_eq!(compute_h_nonaffine(&s(0.3), &s(2.0), 1.0).unwrap()[0], 0.3, epsilon = 1e-15);
        // y0 = 1: H = x (x^2 - 1) + lambda
        let x = 0.4_f64;
        let y = Plant.h(&s(x));
        assert_relative_eq!(
            compute_h_nonaffine(&y, &s(1.0), 0.3).unwrap()[0],
            x * (x * x - 1.0) + 0.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn assembly_matches_hand_derivation() {
        let ui = -0.8_f64;
        let frame = affinize_at(&Plant, &s(ui)).unwrap();
        for &x in &[-1.2, 0.1, 0.9] {
            let a = assemble_nonaffine(&frame, &s(x), &HomotopyState::zero(1), &s(1.0)).unwrap();
            let dh = 3.0 * x * x - 1.0;
            let g = 3.0 * ui * ui * (x * x + 1.0) - (-ui).exp();
            let fh = ui.powi(3) * (x * x + 1.0) + (-ui).exp() - g * ui;
            assert_relative_eq!(a.a1[(0, 0)], dh * g, max_relative = 1e-6);
            assert_relative_eq!(a.a2[0], 1.0);
            assert_relative_eq!(a.b[0], dh * fh, max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn limit_point_keeps_rank_through_y0_column() {
        let frame = affinize_at(&Plant, &s(-1.0)).unwrap();
        let x = 1.0 / 3f64.sqrt();
        let a = assemble_nonaffine(&frame, &s(x), &HomotopyState::zero(1), &s(1.0)).unwrap();
        assert!(a.a1[(0, 0)].abs() < 1e-6);
        assert_eq!(smallmat::rank(&a.a(), 1e-10).unwrap(), 1);
    }

    #[test]
    fn degenerate_frame_rescued_by_y0() {
        let a = ContinuationAssembly {
            a1: Mat::zeros(1, 1),
            a2: s(0.7),
            b: s(0.0),
        };
        let t = smallmat::tangent_vector(&a.a()).unwrap();
        assert_relative_eq!(t, Vector::from_row_slice(&[-1.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn nonaffine_example_converges() {
        let gains = ControlGains {
            alpha: 2.0,
            outer_gain: 10.0,
            t_end: 4.0,
            ..Default::default()
        };
        let mut log = TrajectoryLog::default();
        let opts = NonaffineOptions {
            u0: Some(s(-1.173_744_578_641_433_8)),
        };
        let rep = run_nonaffine_setpoint(&Plant, &s(1.0), &gains, &opts, &mut log).unwrap();
        assert!(rep.t_switch.is_some());
        assert!(rep.final_y_norm().unwrap() < 1e-2);
    }

    #[test]
    fn relative_degree_above_one_rejected() {
        struct Second;
        impl GeneralPlant for Second {
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
                x.clone()
            }
            fn rel_deg(&self) -> Vec<usize> {
                vec![2]
            }
        }
        let mut log = TrajectoryLog::default();
        let err = run_nonaffine_setpoint(&Second, &s(0.0), &ControlGains::default(), &Default::default(), &mut log);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }
}
