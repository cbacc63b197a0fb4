//! Setpoint control of affine plants `x' = f(x) + g(x) u` through a
//! homotopy between a linear companion and the plant output.

use log::{debug, info};

use super::{
    at_state, binomial, feedback, outer_loop_chain, smallest_singular_value, ContinuationAssembly, ControlGains,
    HomotopyState, RunReport, StagnationMonitor,
};
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::log::TrajectoryLog;
use crate::models::{companion_step, ensure_finite_mat, ensure_finite_vec, AffinePlant, LinearCompanion};
use crate::smallmat::{self, Mat, Vector};

/// Which homotopy output the controller drives to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HomotopyForm {
    /// `H = (1 - lambda) eta + lambda y` with a companion integrator bank.
    #[default]
    Convex,
    /// `H = y + y0 lambda - y0` with `y0 = h(x0)`; no companion.
    Linear,
}

/// `H = (1 - lambda) eta + lambda y`.
pub fn compute_h(y: &Vector, eta: &Vector, lambda: f64) -> Result<Vector> {
    if y.len() != eta.len() {
        return Err(Error::InvalidInput("y and eta must have the same dimension".into()));
    }
    Ok(eta * (1.0 - lambda) + y * lambda)
}

/// Continuation assembly for the convex homotopy at an unperturbed output.
pub fn assemble<P: AffinePlant + ?Sized>(
    plant: &P,
    companion: &LinearCompanion,
    x: &Vector,
    z: &Vector,
    hs: &HomotopyState,
) -> Result<ContinuationAssembly> {
    let derivs = plant.out_derivs(x);
    convex_assembly(plant, companion, x, z, hs, &derivs)
}

struct RowData {
    dec: Mat,
    drift: Vector,
}

fn row_data<P: AffinePlant + ?Sized>(plant: &P, x: &Vector) -> Result<RowData> {
    let dec = plant.decoupling(x);
    let drift = plant.drift_out(x);
    ensure_finite_mat("decoupling matrix", &dec)?;
    ensure_finite_vec("output drift", &drift)?;
    Ok(RowData { dec, drift })
}

fn convex_assembly<P: AffinePlant + ?Sized>(
    plant: &P,
    companion: &LinearCompanion,
    x: &Vector,
    z: &Vector,
    hs: &HomotopyState,
    y_derivs: &[Vec<f64>],
) -> Result<ContinuationAssembly> {
    let m = plant.m();
    let r = plant.rel_deg();
    let r_max = plant.max_rel_deg();
    if x.len() != plant.n() || z.len() != companion.dim() || companion.rel_deg() != r.as_slice() {
        return Err(Error::InvalidInput("assembly: state dimensions do not match the plant".into()));
    }
    let RowData { dec, drift } = row_data(plant, x)?;
    let lam = hs.lambda;
    let mut a1 = Mat::zeros(m, m);
    let mut a2 = Vector::zeros(m);
    let mut b = Vector::zeros(m);
    for i in 0..m {
        let ri = r[i];
        // (y - eta)^(k) for k < r_i
        let gap: Vec<f64> = (0..ri).map(|k| y_derivs[i][k] - companion.eta_deriv(z, i, k)).collect();
        for k in 0..m {
            a1[(i, k)] = lam * dec[(i, k)] + if i == k { 1.0 - lam } else { 0.0 };
        }
        let mut bi = lam * drift[i];
        for j in 1..ri {
            bi += binomial(ri, j) * hs.order(j) * gap[ri - j];
        }
        if ri == r_max {
            a2[i] = gap[0];
        } else {
            bi += hs.order(ri) * gap[0];
        }
        b[i] = bi;
    }
    Ok(ContinuationAssembly { a1, a2, b })
}

fn linear_assembly<P: AffinePlant + ?Sized>(plant: &P, x: &Vector, hs: &HomotopyState, y0: &Vector) -> Result<ContinuationAssembly> {
    let m = plant.m();
    let r = plant.rel_deg();
    let r_max = plant.max_rel_deg();
    let RowData { dec, drift } = row_data(plant, x)?;
    let mut a2 = Vector::zeros(m);
    let mut b = drift;
    for i in 0..m {
        if r[i] == r_max {
            a2[i] = y0[i];
        } else {
            b[i] += y0[i] * hs.order(r[i]);
        }
    }
    Ok(ContinuationAssembly { a1: dec, a2, b })
}

/// Control evaluated at one instant.
#[derive(Debug, Clone)]
struct Eval {
    u: Vector,
    lambda_top: f64,
    h: Vector,
    v: Vector,
    sigma_min: f64,
}

struct Loop<'a, P: AffinePlant + ?Sized> {
    plant: &'a P,
    form: HomotopyForm,
    companion: LinearCompanion,
    gains: &'a ControlGains,
    y0: Vector,
    n: usize,
    m: usize,
    r: Vec<usize>,
    r_max: usize,
    disturbance: &'a dyn Fn(f64) -> Vector,
}

impl<P: AffinePlant + ?Sized> Loop<'_, P> {
    fn z_dim(&self) -> usize {
        match self.form {
            HomotopyForm::Convex => self.companion.dim(),
            HomotopyForm::Linear => 0,
        }
    }

    fn split(&self, s: &Vector) -> (Vector, Vector, HomotopyState) {
        let zd = self.z_dim();
        let x = s.rows(0, self.n).into_owned();
        let z = s.rows(self.n, zd).into_owned();
        let hs = HomotopyState::from_slice(&s.as_slice()[self.n + zd..]);
        (x, z, hs)
    }

    fn measured_derivs(&self, t: f64, x: &Vector) -> Result<Vec<Vec<f64>>> {
        let mut d = self.plant.out_derivs(x);
        let off = (self.disturbance)(t);
        if off.len() != self.m {
            return Err(Error::InvalidInput("disturbance has the wrong dimension".into()));
        }
        for i in 0..self.m {
            d[i][0] += off[i];
        }
        Ok(d)
    }

    fn phase1(&self, t: f64, s: &Vector, with_sigma: bool) -> Result<Eval> {
        let (x, z, hs) = self.split(s);
        let yd = self.measured_derivs(t, &x)?;
        let mut h = Vector::zeros(self.m);
        let mut v = Vector::zeros(self.m);
        let assembly = match self.form {
            HomotopyForm::Convex => {
                for i in 0..self.m {
                    let ri = self.r[i];
                    let gap: Vec<f64> = (0..ri).map(|k| yd[i][k] - self.companion.eta_deriv(&z, i, k)).collect();
                    let hk: Vec<f64> = (0..ri)
                        .map(|k| {
                            self.companion.eta_deriv(&z, i, k)
                                + (0..=k).map(|j| binomial(k, j) * hs.order(j) * gap[k - j]).sum::<f64>()
                        })
                        .collect();
                    h[i] = hk[0];
                    v[i] = outer_loop_chain(&hk, self.gains.outer_gain);
                }
                convex_assembly(self.plant, &self.companion, &x, &z, &hs, &yd)?
            }
            HomotopyForm::Linear => {
                for i in 0..self.m {
                    let hk: Vec<f64> = (0..self.r[i])
                        .map(|k| {
                            if k == 0 {
                                yd[i][0] + self.y0[i] * hs.lambda - self.y0[i]
                            } else {
                                yd[i][k] + self.y0[i] * hs.order(k)
                            }
                        })
                        .collect();
                    h[i] = hk[0];
                    v[i] = outer_loop_chain(&hk, self.gains.outer_gain);
                }
                linear_assembly(self.plant, &x, &hs, &self.y0)?
            }
        };
        let (u, lambda_top) = feedback(&assembly, &v, self.gains).map_err(|e| at_state(e, t, s))?;
        let sigma_min = if with_sigma {
            smallest_singular_value(&assembly.a())
        } else {
            f64::NAN
        };
        Ok(Eval {
            u,
            lambda_top,
            h,
            v,
            sigma_min,
        })
    }

    /// Feedback linearization at lambda = 1 with the same outer loop.
    fn phase2(&self, t: f64, s: &Vector) -> Result<Eval> {
        let x = s.rows(0, self.n).into_owned();
        let yd = self.measured_derivs(t, &x)?;
        let RowData { dec, drift } = row_data(self.plant, &x)?;
        let mut v = Vector::zeros(self.m);
        let mut h = Vector::zeros(self.m);
        for i in 0..self.m {
            h[i] = yd[i][0];
            v[i] = outer_loop_chain(&yd[i], self.gains.outer_gain);
        }
        let rank = smallmat::rank(&dec, self.gains.rank_tol)?;
        if rank < self.m {
            return Err(Error::ContinuationBreakdown {
                t,
                sigma_min: smallest_singular_value(&dec),
                state: s.iter().copied().collect(),
            });
        }
        let u = smallmat::pinv(&dec, self.gains.rank_tol)? * (&v - drift);
        Ok(Eval {
            u,
            lambda_top: 0.0,
            h,
            v,
            sigma_min: f64::NAN,
        })
    }

    fn rhs(&self, t: f64, s: &Vector, phase: u8) -> Result<Vector> {
        let (x, z, _) = self.split(s);
        let e = if phase == 1 { self.phase1(t, s, false)? } else { self.phase2(t, s)? };
        let mut ds = Vector::zeros(s.len());
        let dx = self.plant.f(&x) + self.plant.g(&x) * &e.u;
        ds.rows_mut(0, self.n).copy_from(&dx);
        if phase == 1 {
            let zd = self.z_dim();
            if zd > 0 {
                ds.rows_mut(self.n, zd).copy_from(&companion_step(&self.companion, &z, &e.u)?);
            }
            let base = self.n + zd;
            for k in 0..self.r_max - 1 {
                ds[base + k] = s[base + k + 1];
            }
            ds[base + self.r_max - 1] = e.lambda_top;
        }
        Ok(ds)
    }
}

/// Runs the two-stage controller: continuation until lambda reaches 1, then
/// feedback linearization with the same outer loop until `t_end`.
///
/// The controller sees `h(x) + disturbance(t)`. The log receives
/// `t, x*, u*, y*, H*, v*, lambda, sigma_min, phase` where `y` is the true
/// (undisturbed) output.
pub fn run_affine_setpoint<P: AffinePlant + ?Sized>(
    plant: &P,
    x0: &Vector,
    form: HomotopyForm,
    gains: &ControlGains,
    disturbance: &dyn Fn(f64) -> Vector,
    log: &mut TrajectoryLog,
) -> Result<RunReport> {
    gains.validate()?;
    let (n, m) = (plant.n(), plant.m());
    if x0.len() != n {
        return Err(Error::InvalidInput(format!("x0 has dimension {} but the plant has {n} states", x0.len())));
    }
    let r = plant.rel_deg();
    if r.len() != m || r.contains(&0) {
        return Err(Error::InvalidInput("plant must declare one relative degree >= 1 per output".into()));
    }
    let companion = LinearCompanion::new(&r)?;
    let lp = Loop {
        plant,
        form,
        companion,
        gains,
        y0: plant.h(x0),
        n,
        m,
        r_max: plant.max_rel_deg(),
        r,
        disturbance,
    };
    ensure_finite_vec("initial output", &lp.y0)?;

    let mut columns = vec!["t".to_string()];
    for (p, c) in [("x", n), ("u", m), ("y", m), ("H", m), ("v", m)] {
        columns.extend(TrajectoryLog::indexed(p, c));
    }
    columns.extend(["lambda", "sigma_min", "phase"].map(String::from));
    *log = TrajectoryLog::new(columns)?;

    let mut s = Vector::zeros(n + lp.z_dim() + lp.r_max);
    s.rows_mut(0, n).copy_from(x0);
    let mut phase = 1u8;
    let mut report = RunReport {
        min_sigma: f64::INFINITY,
        ..Default::default()
    };
    let mut monitor = StagnationMonitor::new(gains.stagnation_window, gains.stagnation_eps);
    let lambda_idx = n + lp.z_dim();

    let record = |log: &mut TrajectoryLog, t: f64, s: &Vector, e: &Eval, phase: u8| -> Result<()> {
        let x = s.rows(0, n);
        let y = plant.h(&x.into_owned());
        let mut row = Vec::with_capacity(log.columns().len());
        row.push(t);
        row.extend(x.iter());
        row.extend(e.u.iter());
        row.extend(y.iter());
        row.extend(e.h.iter());
        row.extend(e.v.iter());
        row.push(s[lambda_idx]);
        row.push(e.sigma_min);
        row.push(phase as f64);
        log.push(row)
    };

    let t0 = 0.0;
    let steps = ((gains.t_end - t0) / gains.dt - 1e-9).ceil() as usize;
    let e0 = lp.phase1(t0, &s, true)?;
    report.min_sigma = e0.sigma_min;
    report.max_u = e0.u.amax();
    record(log, t0, &s, &e0, phase)?;
    monitor.observe(t0, 0.0);

    for k in 0..steps {
        let t = t0 + k as f64 * gains.dt;
        let t_next = t0 + (k + 1) as f64 * gains.dt;
        let ph = phase;
        s = rk4_step(&|tt: f64, ss: &Vector| lp.rhs(tt, ss, ph), t, &s, gains.dt)?;
        report.steps = k + 1;

        if phase == 1 && s[lambda_idx] >= 1.0 {
            s[lambda_idx] = 1.0;
            for j in 1..lp.r_max {
                s[lambda_idx + j] = 0.0;
            }
            phase = 2;
            report.t_switch = Some(t_next);
            info!("lambda reached 1 at t = {t_next:.4}");
        }

        let e = if phase == 1 { lp.phase1(t_next, &s, true)? } else { lp.phase2(t_next, &s)? };
        if phase == 1 {
            report.min_sigma = report.min_sigma.min(e.sigma_min);
        }
        report.max_u = report.max_u.max(e.u.amax());
        if (k + 1) % gains.log_every == 0 || k + 1 == steps {
            record(log, t_next, &s, &e, phase)?;
        }

        if phase == 1 && monitor.observe(t_next, s[lambda_idx]) {
            debug!("stagnation detected at t = {t_next}");
            return Err(Error::Stagnation {
                t: t_next,
                lambda: s[lambda_idx],
            });
        }
    }

    report.t_final = t0 + steps as f64 * gains.dt;
    report.final_lambda = s[lambda_idx];
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
    use approx::assert_relative_eq;

    /// Two decoupled cubic channels; the same structure as the bundled
    /// MIMO example but written out independently here.
    struct Mimo;

    impl AffinePlant for Mimo {
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
            let a11 = 3.0 * x[0] * x[0] - 1.0;
            let a22 = 4.0 * x[1].powi(3) * (2.0 * x[1]).cos() - 2.0 * x[1].powi(4) * (2.0 * x[1]).sin();
            Mat::from_row_slice(2, 2, &[a11, 0.0, 0.0, a22])
        }
        fn drift_out(&self, x: &Vector) -> Vector {
            let d = self.decoupling(x);
            let f = self.f(x);
            Vector::from_row_slice(&[d[(0, 0)] * f[0], d[(1, 1)] * f[1]])
        }
    }

    #[test]
    fn compute_h_examples() {
        let y = Vector::from_element(1, 4.0);
        let eta = Vector::from_element(1, 2.0);
        assert_eq!(compute_h(&y, &eta, 0.0).unwrap(), eta);
        assert_eq!(compute_h(&y, &eta, 1.0).unwrap(), y);
        assert_eq!(compute_h(&y, &eta, 0.5).unwrap()[0], 3.0);
    }

    #[test]
    fn initial_assembly_of_mimo_example() {
        let comp = LinearCompanion::new(&[1, 1]).unwrap();
        let x = Vector::from_row_slice(&[1.0, 1.0]);
        let a = assemble(&Mimo, &comp, &x, &Vector::zeros(2), &HomotopyState::zero(1)).unwrap();
        let expected = Mat::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 2f64.cos()]);
        assert_relative_eq!(a.a(), expected, epsilon = 1e-15);
        assert_eq!(a.b, Vector::zeros(2));
    }

    #[test]
    fn pure_limits() {
        let comp = LinearCompanion::new(&[1, 1]).unwrap();
        let x = Vector::from_row_slice(&[0.4, -0.7]);
        let z = Vector::from_row_slice(&[0.1, 0.2]);
        let one = HomotopyState {
            lambda: 1.0,
            derivs: vec![],
        };
        let a = assemble(&Mimo, &comp, &x, &z, &one).unwrap();
        assert_relative_eq!(a.a1, Mimo.decoupling(&x), epsilon = 1e-15);
        assert_relative_eq!(a.b, Mimo.drift_out(&x), epsilon = 1e-15);
        let a = assemble(&Mimo, &comp, &x, &z, &HomotopyState::zero(1)).unwrap();
        assert_eq!(a.a1, Mat::identity(2, 2));
        assert_eq!(a.b, Vector::zeros(2));
    }

    #[test]
    fn initial_step_is_well_posed() {
        let comp = LinearCompanion::new(&[1, 1]).unwrap();
        let x = Vector::from_row_slice(&[1.0, 1.0]);
        let a = assemble(&Mimo, &comp, &x, &Vector::zeros(2), &HomotopyState::zero(1)).unwrap();
        assert_eq!(smallmat::rank(&a.a(), 1e-10).unwrap(), 2);
        let gains = ControlGains {
            alpha: 20.0,
            outer_gain: 100.0,
            ..Default::default()
        };
        let (u, l) = feedback(&a, &Vector::zeros(2), &gains).unwrap();
        assert!(u.iter().all(|v| v.is_finite()) && l.is_finite());
        assert!(l > 0.0, "lambda must start increasing");
    }

    #[test]
    fn mimo_run_reaches_lambda_one_and_zeroes_output() {
        let gains = ControlGains {
            alpha: 20.0,
            outer_gain: 100.0,
            t_end: 3.0,
            ..Default::default()
        };
        let mut log = TrajectoryLog::default();
        let rep = run_affine_setpoint(
            &Mimo,
            &Vector::from_row_slice(&[1.0, 1.0]),
            HomotopyForm::Convex,
            &gains,
            &|_| Vector::zeros(2),
            &mut log,
        )
        .unwrap();
        let ts = rep.t_switch.expect("switch");
        assert!(ts > 0.2 && ts < 1.0, "{ts}");
        assert!(rep.final_y_norm().unwrap() < 1e-3);
        assert_eq!(log.len(), 3001);
    }

    #[test]
    fn bad_dimensions_rejected() {
        let mut log = TrajectoryLog::default();
        let err = run_affine_setpoint(
            &Mimo,
            &Vector::zeros(3),
            HomotopyForm::Convex,
            &ControlGains::default(),
            &|_| Vector::zeros(2),
            &mut log,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
