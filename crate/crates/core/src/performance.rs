//! Use-and-then-forget SINR with MR combining over the serving APs, spectral
//! efficiency and summary statistics.

use rand::Rng;

use crate::channel_training::{
    mmse_estimate, received_pilot, ChannelSampler, PilotPlan, TrainingState,
};
use crate::clustering::Association;
use crate::linalg::{self, CMatrix};
use crate::propagation::LargeScale;
use crate::{Complex64, Error, Result};

/// Fraction of the coherence block left for data, `1 - tau / tau_c`.
pub fn prelog(tau: usize, tau_c: usize) -> Result<f64> {
    if tau == 0 || tau >= tau_c {
        return Err(Error::config(format!(
            "need 0 < tau < tau_c, got tau = {tau}, tau_c = {tau_c}"
        )));
    }
    Ok(1.0 - tau as f64 / tau_c as f64)
}

/// `(1 - tau/tau_c) log2(1 + SINR)` per user.
pub fn spectral_efficiency(sinr: &[f64], tau: usize, tau_c: usize) -> Result<Vec<f64>> {
    let pre = prelog(tau, tau_c)?;
    Ok(sinr.iter().map(|&s| pre * (1.0 + s).log2()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub sinr: Vec<f64>,
    pub se: Vec<f64>,
    pub prelog: f64,
}

/// SINR from the expectation terms of the combined signal
/// `v_u^H y = sum_{l in A_u} h_hat_lu^H y_l`:
///
/// ```text
/// E{h_hat_lu^H h_lu}       = p_u tau tr(B_lu Psi^-1 B_lu)
/// E{|h_hat_lu^H h_li|^2}   = tr(B_li C_lu) + [i in P_u] p_u p_i tau^2 |tr(B_li Psi^-1 B_lu)|^2
/// E{||h_hat_lu||^2}        = tr(C_lu)
/// ```
///
/// with `C_lu` the estimate covariance held by `training`. Data powers are in
/// watts.
#[allow(clippy::too_many_arguments)]
pub fn closed_form_sinr(
    ls: &LargeScale,
    training: &TrainingState,
    assoc: &Association,
    plan: &PilotPlan,
    p_pilot: &[f64],
    p_data: &[f64],
    sigma2: f64,
    tau_c: usize,
) -> Result<SinrReport> {
    let n = ls.num_ues();
    if p_pilot.len() != n || p_data.len() != n || assoc.num_ues() != n {
        return Err(Error::config(format!("expected {n} users everywhere")));
    }
    let tau = plan.tau as f64;
    let mut sinr = Vec::with_capacity(n);
    for u in 0..n {
        if assoc.serving_sets[u].is_empty() {
            return Err(Error::UndefinedSinr { ue: u });
        }
        let t = plan.pilot_of[u];
        let mut mean_gain = 0.0;
        let mut combiner_power = 0.0;
        let mut interference = 0.0;
        let mut cross = vec![Complex64::new(0.0, 0.0); n];
        for &l in &assoc.serving_sets[u] {
            let c_lu = training.estimate_covariance(l, u);
            let trace_c = linalg::real_trace(c_lu);
            mean_gain += trace_c;
            combiner_power += trace_c;
            for i in 0..n {
                let b_li: CMatrix = ls.covariance(l, i);
                interference += p_data[i] * linalg::trace_product(&b_li, c_lu).re;
                if i != u && plan.shares_pilot(u, i) {
                    let inv = linalg::hermitian_inverse(training.psi(l, t))?;
                    let b_lu = ls.covariance(l, u);
                    let tr = linalg::trace_product(&b_li, &(inv * b_lu));
                    cross[i] += tr * ((p_pilot[u] * p_pilot[i]).sqrt() * tau);
                }
            }
        }
        for i in 0..n {
            if i != u {
                interference += p_data[i] * cross[i].norm_sqr();
            }
        }
        let signal = p_data[u] * mean_gain * mean_gain;
        let denominator = interference + sigma2 * combiner_power;
        sinr.push(if signal == 0.0 {
            0.0
        } else {
            signal / denominator
        });
    }
    let se = spectral_efficiency(&sinr, plan.tau, tau_c)?;
    Ok(SinrReport {
        sinr,
        se,
        prelog: prelog(plan.tau, tau_c)?,
    })
}

/// Monte Carlo estimate of the use-and-then-forget SINR.
///
/// Every draw synthesizes channels, noisy pilots and MMSE estimates, then
/// accumulates `g_ui = sum_{l in A_u} h_hat_lu^H h_li` and `||v_u||^2`. The
/// SINR is `pd_u |E g_uu|^2 / (sum_i pd_i E|g_ui|^2 - pd_u |E g_uu|^2 + sigma2 E||v_u||^2)`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_sinr<R: Rng + ?Sized>(
    ls: &LargeScale,
    assoc: &Association,
    plan: &PilotPlan,
    p_pilot: &[f64],
    p_data: &[f64],
    sigma2: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_draws == 0 {
        return Err(Error::config("need at least one draw"));
    }
    let n = ls.num_ues();
    let sampler = ChannelSampler::new(ls)?;
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    let mut power = vec![vec![0.0; n]; n];
    let mut norm = vec![0.0; n];
    for _ in 0..n_draws {
        let real = sampler.sample(rng);
        let obs = received_pilot(&real, plan, p_pilot, sigma2, rng)?;
        let est = mmse_estimate(&obs, ls, plan, p_pilot, sigma2)?;
        for u in 0..n {
            for &l in &assoc.serving_sets[u] {
                norm[u] += est.estimate(l, u).norm_squared();
            }
            for i in 0..n {
                let g: Complex64 = assoc.serving_sets[u]
                    .iter()
                    .map(|&l| est.estimate(l, u).dotc(real.link(l, i)))
                    .sum();
                power[u][i] += g.norm_sqr();
                if i == u {
                    mean[u] += g;
                }
            }
        }
    }
    let k = n_draws as f64;
    Ok((0..n)
        .map(|u| {
            let m = (mean[u] / k).norm_sqr();
            let total: f64 = (0..n).map(|i| p_data[i] * power[u][i] / k).sum();
            let signal = p_data[u] * m;
            if signal == 0.0 {
                0.0
            } else {
                signal / (total - signal + sigma2 * norm[u] / k)
            }
        })
        .collect())
}

/// Sorted samples with mean and type-7 percentiles.
#[derive(Debug, Clone, PartialEq)]
pub struct StatSummary {
    pub sorted: Vec<f64>,
    pub mean: f64,
}

impl StatSummary {
    pub fn count(&self) -> usize {
        self.sorted.len()
    }

    /// Percentile `q` in `[0, 100]`, interpolating linearly between order
    /// statistics.
    pub fn percentile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let h = (n - 1) as f64 * q.clamp(0.0, 100.0) / 100.0;
        let lo = h.floor() as usize;
        if lo + 1 >= n {
            return self.sorted[n - 1];
        }
        self.sorted[lo] + (h - lo as f64) * (self.sorted[lo + 1] - self.sorted[lo])
    }

    /// Value exceeded by 95% of the samples.
    pub fn likely_95(&self) -> f64 {
        self.percentile(5.0)
    }

    /// Sample standard error of the mean.
    pub fn std_error(&self) -> f64 {
        let n = self.sorted.len();
        if n < 2 {
            return 0.0;
        }
        let var = self
            .sorted
            .iter()
            .map(|x| (x - self.mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt()
    }

    /// Empirical CDF points `(value, rank / n)`.
    pub fn cdf_points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, (k + 1) as f64 / n))
            .collect()
    }
}

pub fn aggregate_stats(samples: &[f64]) -> Result<StatSummary> {
    if samples.is_empty() {
        return Err(Error::config("cannot summarize an empty sample"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(StatSummary { sorted, mean })
}
