//! Pilot power weighted sum-rate maximization and max-min data power control.
//!
//! Both solvers work on the use-and-then-forget SINR written as
//! `SINR_u = A_u / B_u` with
//!
//! ```text
//! A_u = pd_u pp_u tau G_u
//! B_u = sum_i pd_i N_ui / G_u + sum_{i in P_u, i != u} pd_i pp_i tau |C_ui|^2 / G_u + sigma2
//! ```
//!
//! where, summing over the serving APs of `u`,
//! `G_u = sum_l tr(B_lu Psi^-1 B_lu)`, `N_ui = sum_l tr(B_li B_lu Psi^-1 B_lu)` and
//! `C_ui = sum_l tr(B_li Psi^-1 B_lu)`. Data powers here are in watts.

mod coefficients;
mod data;
mod pilot;

pub use coefficients::{sinr_ratio_parts, SinrCoefficients};
pub use data::{
    feasibility_fixed_point, maxmin_data_powers, posynomial_coefficients, DataSolveState,
    PosynomialCoeffs,
};
pub use pilot::{
    maximize_surrogate, surrogate_value, update_auxiliary, wsrm_pilot_powers, PilotSolveState,
    WsrmParams,
};
