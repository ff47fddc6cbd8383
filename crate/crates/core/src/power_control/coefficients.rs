use nalgebra::DMatrix;

use crate::channel_training::{pilot_covariances, PilotPlan};
use crate::clustering::Association;
use crate::linalg::{self, CMatrix};
use crate::propagation::{LargeScale, SpatialCovariance};
use crate::{Error, Result};

/// Trace aggregates of the SINR for fixed pilot powers.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrCoefficients {
    pub tau: usize,
    pub sigma2: f64,
    /// `G_u`.
    pub gain: Vec<f64>,
    /// `N_ui` at `(u, i)`.
    pub noncoherent: DMatrix<f64>,
    /// `|C_ui|^2` at `(u, i)`; zero unless `i != u` shares the pilot of `u`.
    pub coherent: DMatrix<f64>,
}

impl SinrCoefficients {
    /// Builds every aggregate with `Psi` evaluated at `p_pilot`.
    pub fn build(
        ls: &LargeScale,
        assoc: &Association,
        plan: &PilotPlan,
        p_pilot: &[f64],
        sigma2: f64,
    ) -> Result<Self> {
        let u_count = ls.num_ues();
        if assoc.num_ues() != u_count || assoc.num_aps != ls.num_aps() {
            return Err(Error::config(
                "association does not match the large-scale statistics",
            ));
        }
        match &ls.covariance {
            SpatialCovariance::Uncorrelated => Self::build_scalar(ls, assoc, plan, p_pilot, sigma2),
            SpatialCovariance::General(all) => {
                Self::build_matrix(ls, all, assoc, plan, p_pilot, sigma2)
            }
        }
    }

    fn build_scalar(
        ls: &LargeScale,
        assoc: &Association,
        plan: &PilotPlan,
        p_pilot: &[f64],
        sigma2: f64,
    ) -> Result<Self> {
        let (l_count, u_count) = (ls.num_aps(), ls.num_ues());
        if p_pilot.len() != u_count || plan.num_ues() != u_count {
            return Err(Error::config("pilot powers and plan must cover every user"));
        }
        let tau = plan.tau;
        let m = ls.antennas as f64;
        let mut psi = DMatrix::from_element(l_count, tau, sigma2);
        for l in 0..l_count {
            for u in 0..u_count {
                psi[(l, plan.pilot_of[u])] += tau as f64 * p_pilot[u] * ls.beta[(l, u)];
            }
        }
        let mut gain = vec![0.0; u_count];
        let mut noncoherent = DMatrix::zeros(u_count, u_count);
        let mut coherent = DMatrix::zeros(u_count, u_count);
        for u in 0..u_count {
            let t = plan.pilot_of[u];
            let mut cross = vec![0.0; u_count];
            for &l in &assoc.serving_sets[u] {
                let b = ls.beta[(l, u)];
                let inv = 1.0 / psi[(l, t)];
                let w = b * b * inv;
                gain[u] += w;
                for i in 0..u_count {
                    noncoherent[(u, i)] += ls.beta[(l, i)] * w;
                }
                for &i in plan.co_pilots(u) {
                    cross[i] += ls.beta[(l, i)] * b * inv;
                }
            }
            gain[u] *= m;
            for i in 0..u_count {
                noncoherent[(u, i)] *= m;
            }
            for &i in plan.co_pilots(u) {
                if i != u {
                    coherent[(u, i)] = (m * cross[i]).powi(2);
                }
            }
        }
        Ok(Self {
            tau,
            sigma2,
            gain,
            noncoherent,
            coherent,
        })
    }

    fn build_matrix(
        ls: &LargeScale,
        all: &[CMatrix],
        assoc: &Association,
        plan: &PilotPlan,
        p_pilot: &[f64],
        sigma2: f64,
    ) -> Result<Self> {
        let (l_count, u_count) = (ls.num_aps(), ls.num_ues());
        let tau = plan.tau;
        let psi = pilot_covariances(ls, plan, p_pilot, sigma2)?;
        let inverses: Vec<CMatrix> = psi
            .iter()
            .map(linalg::hermitian_inverse)
            .collect::<Result<_>>()?;
        let mut gain = vec![0.0; u_count];
        let mut noncoherent = DMatrix::zeros(u_count, u_count);
        let mut coherent = DMatrix::zeros(u_count, u_count);
        for u in 0..u_count {
            let t = plan.pilot_of[u];
            let mut cross = vec![crate::Complex64::new(0.0, 0.0); u_count];
            for &l in &assoc.serving_sets[u] {
                debug_assert!(l < l_count);
                let b_lu = &all[l * u_count + u];
                let inv = &inverses[l * tau + t];
                let inv_b = inv * b_lu;
                let b_inv_b = b_lu * &inv_b;
                gain[u] += linalg::real_trace(&b_inv_b);
                for i in 0..u_count {
                    noncoherent[(u, i)] +=
                        linalg::trace_product(&all[l * u_count + i], &b_inv_b).re;
                }
                for &i in plan.co_pilots(u) {
                    cross[i] += linalg::trace_product(&all[l * u_count + i], &inv_b);
                }
            }
            for &i in plan.co_pilots(u) {
                if i != u {
                    coherent[(u, i)] = cross[i].norm_sqr();
                }
            }
        }
        Ok(Self {
            tau,
            sigma2,
            gain,
            noncoherent,
            coherent,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.gain.len()
    }
}

/// Numerators `A_u` and denominators `B_u`, data powers in watts.
pub fn sinr_ratio_parts(
    coeffs: &SinrCoefficients,
    p_pilot: &[f64],
    p_data: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = coeffs.num_ues();
    if p_pilot.len() != n || p_data.len() != n {
        return Err(Error::config(format!("expected {n} pilot and data powers")));
    }
    let tau = coeffs.tau as f64;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for u in 0..n {
        let g = coeffs.gain[u];
        if !(g > 0.0) {
            return Err(Error::UndefinedSinr { ue: u });
        }
        let mut interference = 0.0;
        for i in 0..n {
            interference += p_data[i] * coeffs.noncoherent[(u, i)];
            let c = coeffs.coherent[(u, i)];
            if c != 0.0 {
                interference += p_data[i] * p_pilot[i] * tau * c;
            }
        }
        a.push(p_data[u] * p_pilot[u] * tau * g);
        b.push(interference / g + coeffs.sigma2);
    }
    Ok((a, b))
}
