use nalgebra::DMatrix;

use crate::channel_training::PilotPlan;
use crate::clustering::Association;
use crate::propagation::LargeScale;
use crate::{Error, Result};

use super::coefficients::SinrCoefficients;

/// `SINR_u = p_u / (sum_i (e_ui + f_ui) p_i + b_u)` for normalized data
/// powers `p in [0, 1]^U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosynomialCoeffs {
    /// Coherent pilot-contamination ratios.
    pub e: DMatrix<f64>,
    /// Non-coherent interference ratios, including `f_uu`.
    pub f: DMatrix<f64>,
    /// Noise ratios.
    pub b: Vec<f64>,
}

impl PosynomialCoeffs {
    pub fn num_ues(&self) -> usize {
        self.b.len()
    }

    /// Same ratios from numerically aggregated trace coefficients, valid
    /// for any spatial covariance. Physical data power is `p * p_max`.
    pub fn from_sinr_coefficients(
        coeffs: &SinrCoefficients,
        p_pilot: &[f64],
        p_max: f64,
    ) -> Result<Self> {
        let n = coeffs.num_ues();
        let tau = coeffs.tau as f64;
        let mut e = DMatrix::zeros(n, n);
        let mut f = DMatrix::zeros(n, n);
        let mut b = vec![0.0; n];
        for u in 0..n {
            let g = coeffs.gain[u];
            let signal = p_pilot[u] * tau * g;
            if !(signal > 0.0) {
                return Err(Error::UndefinedSinr { ue: u });
            }
            for i in 0..n {
                f[(u, i)] = coeffs.noncoherent[(u, i)] / (g * signal);
                e[(u, i)] = p_pilot[i] * tau * coeffs.coherent[(u, i)] / (g * signal);
            }
            b[u] = coeffs.sigma2 / (p_max * signal);
        }
        Ok(Self { e, f, b })
    }

    /// SINR of every user at normalized powers `p`.
    pub fn sinr(&self, p: &[f64]) -> Vec<f64> {
        (0..self.num_ues())
            .map(|u| {
                let interference: f64 = (0..self.num_ues())
                    .map(|i| (self.e[(u, i)] + self.f[(u, i)]) * p[i])
                    .sum();
                p[u] / (interference + self.b[u])
            })
            .collect()
    }
}

/// Closed-form ratios for `B_lu = beta_lu I_M`, with
/// `psi_l = tau sum_{i in P_u} p_i beta_li + sigma2` and `S_u = sum_{l in A_u} beta_lu^2 / psi_l`:
///
/// ```text
/// e_ui = p_i (sum_l beta_li beta_lu / psi_l)^2 / (p_u S_u^2)          i in P_u, i != u
/// f_ui = sum_l beta_li beta_lu^2 / psi_l / (M tau p_u S_u^2)
/// b_u  = sigma2 / (p_max M tau p_u S_u)
/// ```
pub fn posynomial_coefficients(
    ls: &LargeScale,
    assoc: &Association,
    plan: &PilotPlan,
    p_pilot: &[f64],
    sigma2: f64,
    p_max: f64,
) -> Result<PosynomialCoeffs> {
    if !ls.is_uncorrelated() {
        return Err(Error::UnsupportedMode(
            "closed-form posynomial ratios need uncorrelated fading; use PosynomialCoeffs::from_sinr_coefficients"
                .into(),
        ));
    }
    let (l_count, n) = (ls.num_aps(), ls.num_ues());
    let tau = plan.tau as f64;
    let m = ls.antennas as f64;
    let mut psi = DMatrix::from_element(l_count, plan.tau, sigma2);
    for l in 0..l_count {
        for i in 0..n {
            psi[(l, plan.pilot_of[i])] += tau * p_pilot[i] * ls.beta[(l, i)];
        }
    }
    let mut e = DMatrix::zeros(n, n);
    let mut f = DMatrix::zeros(n, n);
    let mut b = vec![0.0; n];
    for u in 0..n {
        let t = plan.pilot_of[u];
        let serving = &assoc.serving_sets[u];
        let s: f64 = serving
            .iter()
            .map(|&l| ls.beta[(l, u)].powi(2) / psi[(l, t)])
            .sum();
        if !(s > 0.0 && p_pilot[u] > 0.0) {
            return Err(Error::UndefinedSinr { ue: u });
        }
        for i in 0..n {
            let num: f64 = serving
                .iter()
                .map(|&l| ls.beta[(l, i)] * ls.beta[(l, u)].powi(2) / psi[(l, t)])
                .sum();
            f[(u, i)] = num / (m * tau * p_pilot[u] * s * s);
        }
        for &i in plan.co_pilots(u) {
            if i != u {
                let cross: f64 = serving
                    .iter()
                    .map(|&l| ls.beta[(l, i)] * ls.beta[(l, u)] / psi[(l, t)])
                    .sum();
                e[(u, i)] = p_pilot[i] * cross * cross / (p_pilot[u] * s * s);
            }
        }
        b[u] = sigma2 / (p_max * m * tau * p_pilot[u] * s);
    }
    Ok(PosynomialCoeffs { e, f, b })
}

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_CAP: usize = 20_000;
const BOX_MARGIN: f64 = 1e-9;

/// Minimal solution of `p >= t ((E + F) p + b)` by the monotone iteration
/// `p <- t ((E + F) p + b)` from `p = t b`. Feasible when it settles inside
/// the unit box.
pub fn feasibility_fixed_point(t: f64, coeffs: &PosynomialCoeffs) -> (bool, Vec<f64>) {
    let n = coeffs.num_ues();
    if t <= 0.0 {
        return (true, vec![0.0; n]);
    }
    let k = &coeffs.e + &coeffs.f;
    let b = nalgebra::DVector::from_column_slice(&coeffs.b);
    let mut p = &b * t;
    for _ in 0..FIXED_POINT_CAP {
        let next = (&k * &p + &b) * t;
        if next.iter().any(|&v| v > 1.0 + BOX_MARGIN || !v.is_finite()) {
            return (false, next.iter().copied().collect());
        }
        let change = (&next - &p).norm();
        p = next;
        if change <= FIXED_POINT_TOL * p.norm().max(f64::MIN_POSITIVE) {
            return (true, p.iter().map(|v| v.min(1.0)).collect());
        }
    }
    (false, p.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSolveState {
    /// Normalized powers in `[0, 1]`.
    pub p_data: Vec<f64>,
    /// Largest feasible common SINR found.
    pub t_star: f64,
    /// `(low, high)` bracket after every bisection step.
    pub bisection_trace: Vec<(f64, f64)>,
}

/// Max-min SINR by bisection over `t` with [`feasibility_fixed_point`].
///
/// The bracket starts at `low = min_u SINR_u(1)`, which is always feasible,
/// and `high = min_u 1 / (f_uu + b_u)`, which no `p <= 1` can beat.
pub fn maxmin_data_powers(coeffs: &PosynomialCoeffs, tol: f64) -> Result<DataSolveState> {
    let n = coeffs.num_ues();
    if n == 0 {
        return Err(Error::config("no users"));
    }
    if coeffs
        .e
        .iter()
        .chain(coeffs.f.iter())
        .chain(coeffs.b.iter())
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(Error::Numerical(
            "posynomial coefficients must be finite and non-negative".into(),
        ));
    }
    let full = coeffs.sinr(&vec![1.0; n]);
    let mut lo = full.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = (0..n)
        .map(|u| 1.0 / (coeffs.f[(u, u)] + coeffs.b[u]))
        .fold(f64::INFINITY, f64::min)
        .max(lo);
    let (ok, mut best) = feasibility_fixed_point(lo, coeffs);
    if !ok {
        // Rounding at the box edge; all-ones attains `lo` by construction.
        best = vec![1.0; n];
    }
    let mut trace = vec![(lo, hi)];
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        let (ok, p) = feasibility_fixed_point(mid, coeffs);
        if ok {
            lo = mid;
            best = p;
        } else {
            hi = mid;
        }
        trace.push((lo, hi));
    }
    Ok(DataSolveState {
        p_data: best,
        t_star: lo,
        bisection_trace: trace,
    })
}
