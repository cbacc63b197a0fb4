//! Online parameter identification.

pub mod linear;
pub mod nonlinear;

pub use linear::{
    assemble_ident, compute_h_ident, run_ident_linear, split_mn, theta_estimate, IdentAssembly, IdentGains,
    LambdaIntegrator, MnSplit, NoiseSpec, ThetaLoop,
};
pub use nonlinear::{
    continuous_error, homotopy_ident_step, newton_adaptation, run_ident_nonlinear, window_error, window_jacobian,
    IdentMode, IdentNlGains, JacobianMode, WindowSpec,
};
