//! Plant descriptions consumed by the controllers and identifiers.
//!
//! Derivative data (decoupling matrix, Lie derivatives, input Jacobians) is
//! supplied analytically by each model where convenient. Anything left out
//! falls back to central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::smallmat::{self, Mat, Vector};

/// Central-difference step for a component of magnitude `c`.
pub fn fd_step(c: f64) -> f64 {
    1e-6 * (1.0 + c.abs())
}

/// Jacobian of `fun` at `at` by central differences.
pub fn fd_jacobian<F>(fun: F, at: &Vector) -> Mat
where
    F: Fn(&Vector) -> Vector,
{
    let base = fun(at);
    let mut jac = Mat::zeros(base.len(), at.len());
    let mut probe = at.clone();
    for j in 0..at.len() {
        let h = fd_step(at[j]);
        probe[j] = at[j] + h;
        let plus = fun(&probe);
        probe[j] = at[j] - h;
        let minus = fun(&probe);
        probe[j] = at[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    jac
}

pub(crate) fn ensure_finite_vec(what: &str, v: &Vector) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Model(format!("{what} evaluated to a non-finite value: {:?}", v.as_slice())))
    }
}

pub(crate) fn ensure_finite_mat(what: &str, a: &Mat) -> Result<()> {
    if a.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Model(format!("{what} evaluated to a non-finite value")))
    }
}

/// `x' = f(x) + g(x) u`, `y = h(x)` with known relative degrees.
pub trait AffinePlant: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn f(&self, x: &Vector) -> Vector;
    /// n x m input matrix.
    fn g(&self, x: &Vector) -> Mat;
    fn h(&self, x: &Vector) -> Vector;
    fn rel_deg(&self) -> Vec<usize>;
    /// Row i holds `L_g L_f^(r_i - 1) h_i`.
    fn decoupling(&self, x: &Vector) -> Mat;
    /// Entry i holds `L_f^(r_i) h_i`.
    fn drift_out(&self, x: &Vector) -> Vector;

    /// `out_derivs(x)[i][k] = L_f^k h_i` for `k < r_i`; entry 0 is `y_i`.
    ///
    /// The default nests finite differences, which loses accuracy beyond
    /// the first derivative. Models with `r_i > 2` should override it.
    fn out_derivs(&self, x: &Vector) -> Vec<Vec<f64>> {
        let r = self.rel_deg();
        let y = self.h(x);
        (0..self.m())
            .map(|i| {
                let mut row = vec![y[i]];
                for k in 1..r[i] {
                    row.push(lie_f_power(self, i, k, x));
                }
                row
            })
            .collect()
    }

    fn max_rel_deg(&self) -> usize {
        self.rel_deg().into_iter().max().unwrap_or(1)
    }
}

fn lie_f_power<P: AffinePlant + ?Sized>(plant: &P, i: usize, k: usize, x: &Vector) -> f64 {
    if k == 0 {
        return plant.h(x)[i];
    }
    let grad = fd_jacobian(|p| Vector::from_element(1, lie_f_power(plant, i, k - 1, p)), x);
    (grad * plant.f(x))[0]
}

/// Samples `count` states uniformly in the box `[lo, hi]` and checks the
/// declared Lie-derivative data against finite differences of the output
/// along the flow. Returns the worst relative mismatch on success.
pub fn audit_affine<P: AffinePlant + ?Sized>(
    plant: &P,
    lo: &Vector,
    hi: &Vector,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let n = plant.n();
    let m = plant.m();
    if lo.len() != n || hi.len() != n {
        return Err(Error::InvalidInput("audit box must match the state dimension".into()));
    }
    let r = plant.rel_deg();
    if r.len() != m || r.contains(&0) {
        return Err(Error::InvalidInput("relative degrees must be >= 1, one per output".into()));
    }
    let tol = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mismatch = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());

    for _ in 0..count {
        let x = Vector::from_iterator(n, (0..n).map(|j| rng.gen_range(lo[j]..=hi[j])));
        let f = plant.f(&x);
        let g = plant.g(&x);
        let dec = plant.decoupling(&x);
        let drift = plant.drift_out(&x);
        for i in 0..m {
            let top = r[i] - 1;
            let phi = |p: &Vector| Vector::from_element(1, plant.out_derivs(p)[i][top]);
            let grad = fd_jacobian(phi, &x);
            let fd_drift = (&grad * &f)[0];
            let fd_dec = &grad * &g;
            worst = worst.max(mismatch(drift[i], fd_drift));
            for k in 0..m {
                worst = worst.max(mismatch(dec[(i, k)], fd_dec[(0, k)]));
            }
            for k in 0..top {
                let phi_k = |p: &Vector| Vector::from_element(1, plant.out_derivs(p)[i][k]);
                let fd_next = (fd_jacobian(phi_k, &x) * &f)[0];
                worst = worst.max(mismatch(plant.out_derivs(&x)[i][k + 1], fd_next));
            }
        }
        if worst > tol {
            return Err(Error::Model(format!(
                "declared Lie-derivative data disagrees with finite differences at x = {:?} \
                 (relative mismatch {worst:e})",
                x.as_slice()
            )));
        }
    }
    Ok(worst)
}

/// `x' = f(x, u)`, `y = h(x)`.
pub trait GeneralPlant: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn f(&self, x: &Vector, u: &Vector) -> Vector;
    fn h(&self, x: &Vector) -> Vector;

    fn df_du(&self, x: &Vector, u: &Vector) -> Mat {
        fd_jacobian(|p| self.f(x, p), u)
    }

    fn df_dx(&self, x: &Vector, u: &Vector) -> Mat {
        fd_jacobian(|p| self.f(p, u), x)
    }

    /// m x n output Jacobian.
    fn dh_dx(&self, x: &Vector) -> Mat {
        fd_jacobian(|p| self.h(p), x)
    }

    /// Starting point for the equilibrium-input Newton solve.
    fn equilibrium_guess(&self) -> Vector {
        Vector::zeros(self.m())
    }

    fn rel_deg(&self) -> Vec<usize> {
        vec![1; self.m()]
    }
}

/// Point linearization `x' ~ A x + B u + dx`, `y ~ C x + dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub dx: Vector,
    pub dy: Vector,
}

pub fn linearize_at_point<P: GeneralPlant + ?Sized>(plant: &P, x0: &Vector, u0: &Vector) -> Result<Linearization> {
    if x0.len() != plant.n() || u0.len() != plant.m() {
        return Err(Error::InvalidInput("linearization point has the wrong dimension".into()));
    }
    let a = fd_jacobian(|p| plant.f(p, u0), x0);
    let b = fd_jacobian(|p| plant.f(x0, p), u0);
    let c = fd_jacobian(|p| plant.h(p), x0);
    ensure_finite_mat("state Jacobian", &a)?;
    ensure_finite_mat("input Jacobian", &b)?;
    ensure_finite_mat("output Jacobian", &c)?;
    let dx = plant.f(x0, u0) - &a * x0 - &b * u0;
    let dy = plant.h(x0) - &c * x0;
    ensure_finite_vec("state offset", &dx)?;
    ensure_finite_vec("output offset", &dy)?;
    Ok(Linearization { a, b, c, dx, dy })
}

/// Affine approximation of a general plant around a fixed input `u_i`:
/// `x' ~ fhat(x) + ghat(x) u`.
pub struct AffinizationFrame<'a, P: GeneralPlant + ?Sized> {
    plant: &'a P,
    pub u_i: Vector,
}

impl<P: GeneralPlant + ?Sized> Clone for AffinizationFrame<'_, P> {
    fn clone(&self) -> Self {
        Self {
            plant: self.plant,
            u_i: self.u_i.clone(),
        }
    }
}

impl<'a, P: GeneralPlant + ?Sized> AffinizationFrame<'a, P> {
    pub fn ghat(&self, x: &Vector) -> Mat {
        self.plant.df_du(x, &self.u_i)
    }

    pub fn fhat(&self, x: &Vector) -> Vector {
        self.plant.f(x, &self.u_i) - self.ghat(x) * &self.u_i
    }

    /// Both halves at once, sharing the Jacobian evaluation.
    pub fn eval(&self, x: &Vector) -> (Vector, Mat) {
        let g = self.ghat(x);
        let f = self.plant.f(x, &self.u_i) - &g * &self.u_i;
        (f, g)
    }

    pub fn plant(&self) -> &'a P {
        self.plant
    }
}

pub fn affinize_at<'a, P: GeneralPlant + ?Sized>(plant: &'a P, u_i: &Vector) -> Result<AffinizationFrame<'a, P>> {
    if u_i.len() != plant.m() {
        return Err(Error::InvalidInput("expansion input has the wrong dimension".into()));
    }
    if u_i.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("expansion input must be finite".into()));
    }
    Ok(AffinizationFrame {
        plant,
        u_i: u_i.clone(),
    })
}

/// Newton iteration on `u -> f(x0, u)` from the plant's guess, with step
/// halving. Non-square Jacobians are handled in the least-squares sense.
pub fn solve_equilibrium_input<P: GeneralPlant + ?Sized>(plant: &P, x0: &Vector) -> Result<Vector> {
    solve_equilibrium_from(plant, x0, &plant.equilibrium_guess())
}

pub fn solve_equilibrium_from<P: GeneralPlant + ?Sized>(plant: &P, x0: &Vector, guess: &Vector) -> Result<Vector> {
    const MAX_ITER: usize = 50;
    const TOL: f64 = 1e-9;
    if x0.len() != plant.n() || guess.len() != plant.m() {
        return Err(Error::InvalidInput("equilibrium solve: wrong dimensions".into()));
    }
    let mut u = guess.clone();
    let mut res = plant.f(x0, &u);
    let mut norm = res.norm();
    for it in 0..MAX_ITER {
        if norm <= TOL {
            return Ok(u);
        }
        let jac = plant.df_du(x0, &u);
        let step = smallmat::pinv(&jac, smallmat::DEFAULT_TOL)? * &res;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &u - &step * scale;
            let cand_res = plant.f(x0, &cand);
            let cand_norm = cand_res.norm();
            if cand_norm.is_finite() && cand_norm < norm {
                u = cand;
                res = cand_res;
                norm = cand_norm;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::EquilibriumNotFound {
                iterations: it + 1,
                residual: norm,
            });
        }
    }
    if norm <= TOL {
        Ok(u)
    } else {
        Err(Error::EquilibriumNotFound {
            iterations: MAX_ITER,
            residual: norm,
        })
    }
}

/// Points where a scalar output has zero slope, located by sign changes of
/// `dh/dx` on a grid over `[lo, hi]` followed by bisection.
pub fn limit_points<P: GeneralPlant + ?Sized>(plant: &P, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if plant.n() != 1 || plant.m() != 1 {
        return Err(Error::InvalidInput("limit points are only located for scalar plants".into()));
    }
    let slope = |x: f64| plant.dh_dx(&Vector::from_element(1, x))[(0, 0)];
    let grid = 1000;
    let mut out = Vec::new();
    let mut a = lo;
    let mut sa = slope(a);
    for k in 1..=grid {
        let b = lo + (hi - lo) * k as f64 / grid as f64;
        let sb = slope(b);
        if sa == 0.0 {
            out.push(a);
        } else if sa * sb < 0.0 {
            let (mut l, mut r, mut sl) = (a, b, sa);
            for _ in 0..100 {
                let mid = 0.5 * (l + r);
                let sm = slope(mid);
                if sm * sl > 0.0 {
                    l = mid;
                    sl = sm;
                } else {
                    r = mid;
                }
            }
            out.push(0.5 * (l + r));
        }
        a = b;
        sa = sb;
    }
    Ok(out)
}

/// Model side of `x' = f(x, u) + w(x, u) theta`.
pub trait UncertainAffine: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn q(&self) -> usize;
    fn f(&self, x: &Vector, u: &Vector) -> Vector;
    /// n x q regressor.
    fn w(&self, x: &Vector, u: &Vector) -> Mat;

    fn rhs(&self, x: &Vector, u: &Vector, theta: &Vector) -> Vector {
        self.f(x, u) + self.w(x, u) * theta
    }
}

/// Model side of `x' = f(x, u, theta)`.
pub trait UncertainGeneral: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn q(&self) -> usize;
    fn f(&self, x: &Vector, u: &Vector, theta: &Vector) -> Vector;

    /// n x q.
    fn df_dtheta(&self, x: &Vector, u: &Vector, theta: &Vector) -> Mat {
        fd_jacobian(|p| self.f(x, u, p), theta)
    }

    /// n x n.
    fn df_dx(&self, x: &Vector, u: &Vector, theta: &Vector) -> Mat {
        fd_jacobian(|p| self.f(p, u, theta), x)
    }
}

/// Simulation-side secrets: the true parameter and the true initial state.
/// Only the run harnesses see this; identifier code paths never do.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters {
    pub theta: Vector,
    pub x0: Vector,
}

/// Bank of integrator chains with lengths `r_i`. For output `i` the block
/// `z[off_i .. off_i + r_i]` holds `eta_i, eta_i', ..., eta_i^(r_i - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCompanion {
    rel_deg: Vec<usize>,
    offsets: Vec<usize>,
}

impl LinearCompanion {
    pub fn new(rel_deg: &[usize]) -> Result<Self> {
        if rel_deg.is_empty() || rel_deg.contains(&0) {
            return Err(Error::InvalidInput("companion chains need lengths >= 1".into()));
        }
        let mut offsets = Vec::with_capacity(rel_deg.len());
        let mut acc = 0;
        for &r in rel_deg {
            offsets.push(acc);
            acc += r;
        }
        Ok(Self {
            rel_deg: rel_deg.to_vec(),
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.rel_deg.iter().sum()
    }

    pub fn m(&self) -> usize {
        self.rel_deg.len()
    }

    pub fn rel_deg(&self) -> &[usize] {
        &self.rel_deg
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn eta(&self, z: &Vector) -> Vector {
        Vector::from_iterator(self.m(), self.offsets.iter().map(|&o| z[o]))
    }

    /// `eta_i^(k)` for `k < r_i`.
    pub fn eta_deriv(&self, z: &Vector, i: usize, k: usize) -> f64 {
        assert!(k < self.rel_deg[i], "derivative order beyond the chain length");
        z[self.offsets[i] + k]
    }
}

pub fn companion_step(companion: &LinearCompanion, z: &Vector, u: &Vector) -> Result<Vector> {
    if z.len() != companion.dim() || u.len() != companion.m() {
        return Err(Error::InvalidInput("companion state or input has the wrong dimension".into()));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("companion input must be finite".into()));
    }
    let mut dz = Vector::zeros(z.len());
    for (i, (&off, &r)) in companion.offsets.iter().zip(&companion.rel_deg).enumerate() {
        for k in 0..r - 1 {
            dz[off + k] = z[off + k + 1];
        }
        dz[off + r - 1] = u[i];
    }
    Ok(dz)
}

/// Raises the relative degree of a general plant by one by treating its
/// input as a state: `x' = f(x, u)`, `u' = w`, `y = h(x)`. The result is
/// affine in the new input `w`.
pub struct IntegratorAugmented<'a, P: GeneralPlant + ?Sized> {
    plant: &'a P,
}

impl<'a, P: GeneralPlant + ?Sized> IntegratorAugmented<'a, P> {
    pub fn new(plant: &'a P) -> Result<Self> {
        if plant.rel_deg().iter().any(|&r| r != 1) {
            return Err(Error::InvalidInput("integrator augmentation expects relative degree one outputs".into()));
        }
        Ok(Self { plant })
    }

    fn split(&self, s: &Vector) -> (Vector, Vector) {
        let n = self.plant.n();
        (s.rows(0, n).into_owned(), s.rows(n, self.plant.m()).into_owned())
    }

    /// `h'(x) f(x, u)` as a function of the augmented state.
    fn first_derivs(&self, s: &Vector) -> Vector {
        let (x, u) = self.split(s);
        self.plant.dh_dx(&x) * self.plant.f(&x, &u)
    }
}

impl<P: GeneralPlant + ?Sized> AffinePlant for IntegratorAugmented<'_, P> {
    fn n(&self) -> usize {
        self.plant.n() + self.plant.m()
    }
    fn m(&self) -> usize {
        self.plant.m()
    }
    fn f(&self, s: &Vector) -> Vector {
        let (x, u) = self.split(s);
        let mut out = Vector::zeros(self.n());
        out.rows_mut(0, self.plant.n()).copy_from(&self.plant.f(&x, &u));
        out
    }
    fn g(&self, _s: &Vector) -> Mat {
        let (n, m) = (self.plant.n(), self.plant.m());
        let mut g = Mat::zeros(n + m, m);
        g.view_mut((n, 0), (m, m)).fill_with_identity();
        g
    }
    fn h(&self, s: &Vector) -> Vector {
        self.plant.h(&self.split(s).0)
    }
    fn rel_deg(&self) -> Vec<usize> {
        vec![2; self.plant.m()]
    }
    fn decoupling(&self, s: &Vector) -> Mat {
        let (x, u) = self.split(s);
        self.plant.dh_dx(&x) * self.plant.df_du(&x, &u)
    }
    fn drift_out(&self, s: &Vector) -> Vector {
        fd_jacobian(|p| self.first_derivs(p), s) * self.f(s)
    }
    fn out_derivs(&self, s: &Vector) -> Vec<Vec<f64>> {
        let y = self.h(s);
        let dy = self.first_derivs(s);
        (0..self.m()).map(|i| vec![y[i], dy[i]]).collect()
    }
}
