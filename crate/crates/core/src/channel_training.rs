//! Pilot assignment, small-scale fading draws and MMSE channel estimation.
//!
//! Pilot sequences are orthogonal with squared norm `tau`, so they are never
//! materialized: the de-spread observation for pilot `t` at AP `l` is
//! synthesized directly as `sum_{i: t_i = t} sqrt(p_i tau) h_li + n`, with
//! `n ~ CN(0, sigma2 I)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, CMatrix, CVector};
use crate::propagation::{LargeScale, SpatialCovariance};
use crate::{Complex64, Error, Result};

/// How pilots are handed out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotPolicy {
    /// User `u` (0-based) gets pilot `u mod tau`.
    RoundRobin,
    /// I.i.d. uniform pilots drawn from the given seed.
    Random { seed: u64 },
}

/// Pilot index of every user. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPlan {
    pub tau: usize,
    pub pilot_of: Vec<usize>,
    users_on: Vec<Vec<usize>>,
}

impl PilotPlan {
    pub fn new(tau: usize, pilot_of: Vec<usize>) -> Result<Self> {
        if tau == 0 {
            return Err(Error::config("need at least one pilot"));
        }
        let mut users_on = vec![Vec::new(); tau];
        for (u, &t) in pilot_of.iter().enumerate() {
            if t >= tau {
                return Err(Error::config(format!(
                    "user {u} has pilot {t} but tau = {tau}"
                )));
            }
            users_on[t].push(u);
        }
        Ok(Self {
            tau,
            pilot_of,
            users_on,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.pilot_of.len()
    }

    /// Users transmitting pilot `t`, ascending.
    pub fn users_on(&self, t: usize) -> &[usize] {
        &self.users_on[t]
    }

    /// Co-pilot set of `u`, including `u` itself.
    pub fn co_pilots(&self, u: usize) -> &[usize] {
        &self.users_on[self.pilot_of[u]]
    }

    pub fn shares_pilot(&self, u: usize, i: usize) -> bool {
        self.pilot_of[u] == self.pilot_of[i]
    }
}

pub fn assign_pilots(
    num_ues: usize,
    tau: usize,
    tau_c: usize,
    policy: PilotPolicy,
) -> Result<PilotPlan> {
    if tau == 0 {
        return Err(Error::config("tau must be >= 1"));
    }
    if tau > tau_c {
        return Err(Error::config(format!(
            "tau = {tau} exceeds the coherence block {tau_c}"
        )));
    }
    let pilot_of = match policy {
        PilotPolicy::RoundRobin => (0..num_ues).map(|u| u % tau).collect(),
        PilotPolicy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..num_ues).map(|_| rng.random_range(0..tau)).collect()
        }
    };
    PilotPlan::new(tau, pilot_of)
}

/// One small-scale fading draw for every link, stored by `l * U + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub num_aps: usize,
    pub num_ues: usize,
    pub h: Vec<CVector>,
}

impl ChannelRealization {
    pub fn link(&self, l: usize, u: usize) -> &CVector {
        &self.h[l * self.num_ues + u]
    }
}

/// Draws channels repeatedly from fixed statistics, caching `B^{1/2}`.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    num_aps: usize,
    num_ues: usize,
    antennas: usize,
    roots: Roots,
}

#[derive(Debug, Clone)]
enum Roots {
    Scalar(Vec<f64>),
    Matrix(Vec<CMatrix>),
}

impl ChannelSampler {
    pub fn new(ls: &LargeScale) -> Result<Self> {
        let roots = match &ls.covariance {
            SpatialCovariance::Uncorrelated => {
                let (l_count, u_count) = (ls.num_aps(), ls.num_ues());
                let mut v = Vec::with_capacity(l_count * u_count);
                for l in 0..l_count {
                    for u in 0..u_count {
                        v.push(ls.beta[(l, u)].sqrt());
                    }
                }
                Roots::Scalar(v)
            }
            SpatialCovariance::General(all) => {
                Roots::Matrix(all.iter().map(linalg::psd_sqrt).collect::<Result<_>>()?)
            }
        };
        Ok(Self {
            num_aps: ls.num_aps(),
            num_ues: ls.num_ues(),
            antennas: ls.antennas,
            roots,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let n = self.num_aps * self.num_ues;
        let h = (0..n)
            .map(|k| {
                let g = linalg::complex_normal_vector(rng, self.antennas);
                match &self.roots {
                    Roots::Scalar(r) => g * Complex64::new(r[k], 0.0),
                    Roots::Matrix(r) => &r[k] * g,
                }
            })
            .collect();
        ChannelRealization {
            num_aps: self.num_aps,
            num_ues: self.num_ues,
            h,
        }
    }
}

/// `h_lu = B_lu^{1/2} g` with `g ~ CN(0, I)`.
pub fn sample_channels<R: Rng + ?Sized>(
    ls: &LargeScale,
    rng: &mut R,
) -> Result<ChannelRealization> {
    Ok(ChannelSampler::new(ls)?.sample(rng))
}

/// De-spread pilot observations, stored by `l * tau + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub tau: usize,
    pub r: Vec<CVector>,
}

impl PilotObservation {
    pub fn at(&self, l: usize, t: usize) -> &CVector {
        &self.r[l * self.tau + t]
    }
}

pub fn received_pilot<R: Rng + ?Sized>(
    real: &ChannelRealization,
    plan: &PilotPlan,
    p_pilot: &[f64],
    sigma2: f64,
    rng: &mut R,
) -> Result<PilotObservation> {
    check_powers(plan, p_pilot, real.num_ues)?;
    let antennas = real.h.first().map_or(0, |v| v.len());
    let tau = plan.tau;
    let noise_scale = Complex64::new(sigma2.max(0.0).sqrt(), 0.0);
    let mut r = Vec::with_capacity(real.num_aps * tau);
    for l in 0..real.num_aps {
        for t in 0..tau {
            let mut acc = CVector::zeros(antennas);
            for &i in plan.users_on(t) {
                acc.axpy(
                    Complex64::new((p_pilot[i] * tau as f64).sqrt(), 0.0),
                    real.link(l, i),
                    Complex64::new(1.0, 0.0),
                );
            }
            if sigma2 > 0.0 {
                acc += linalg::complex_normal_vector(rng, antennas) * noise_scale;
            }
            r.push(acc);
        }
    }
    Ok(PilotObservation { tau, r })
}

fn check_powers(plan: &PilotPlan, p_pilot: &[f64], num_ues: usize) -> Result<()> {
    if plan.num_ues() != num_ues || p_pilot.len() != num_ues {
        return Err(Error::config(format!(
            "pilot plan covers {} users and {} powers were given, expected {num_ues}",
            plan.num_ues(),
            p_pilot.len()
        )));
    }
    if let Some(u) = p_pilot.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::config(format!(
            "pilot power of user {u} is {}",
            p_pilot[u]
        )));
    }
    Ok(())
}

/// `Psi_{l,t} = sum_{i: t_i = t} tau p_i B_li + sigma2 I`, stored by `l * tau + t`.
pub fn pilot_covariances(
    ls: &LargeScale,
    plan: &PilotPlan,
    p_pilot: &[f64],
    sigma2: f64,
) -> Result<Vec<CMatrix>> {
    check_powers(plan, p_pilot, ls.num_ues())?;
    let tau = plan.tau;
    let m = ls.antennas;
    let mut out = Vec::with_capacity(ls.num_aps() * tau);
    for l in 0..ls.num_aps() {
        for t in 0..tau {
            let psi = match &ls.covariance {
                SpatialCovariance::Uncorrelated => {
                    let s: f64 = plan
                        .users_on(t)
                        .iter()
                        .map(|&i| tau as f64 * p_pilot[i] * ls.beta[(l, i)])
                        .sum();
                    linalg::scaled_identity(m, s + sigma2)
                }
                SpatialCovariance::General(all) => {
                    let mut acc = linalg::scaled_identity(m, sigma2);
                    for &i in plan.users_on(t) {
                        acc += &all[l * ls.num_ues() + i]
                            * Complex64::new(tau as f64 * p_pilot[i], 0.0);
                    }
                    acc
                }
            };
            out.push(psi);
        }
    }
    Ok(out)
}

/// MMSE estimates and the statistics they were formed with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub num_aps: usize,
    pub num_ues: usize,
    pub tau: usize,
    /// `Psi_{l,t}` by `l * tau + t`.
    pub psi: Vec<CMatrix>,
    /// `h_hat_lu` by `l * U + u`.
    pub h_hat: Vec<CVector>,
    /// `p_u tau B_lu Psi^{-1} B_lu` by `l * U + u`.
    pub est_cov: Vec<CMatrix>,
}

impl TrainingState {
    pub fn psi(&self, l: usize, t: usize) -> &CMatrix {
        &self.psi[l * self.tau + t]
    }

    pub fn estimate(&self, l: usize, u: usize) -> &CVector {
        &self.h_hat[l * self.num_ues + u]
    }

    pub fn estimate_covariance(&self, l: usize, u: usize) -> &CMatrix {
        &self.est_cov[l * self.num_ues + u]
    }
}

/// `h_hat_lu = sqrt(p_u tau) B_lu Psi_{l,t_u}^{-1} r_{l,t_u}`.
pub fn mmse_estimate(
    obs: &PilotObservation,
    ls: &LargeScale,
    plan: &PilotPlan,
    p_pilot: &[f64],
    sigma2: f64,
) -> Result<TrainingState> {
    let psi = pilot_covariances(ls, plan, p_pilot, sigma2)?;
    let tau = plan.tau;
    let (l_count, u_count) = (ls.num_aps(), ls.num_ues());
    if obs.tau != tau || obs.r.len() != l_count * tau {
        return Err(Error::config(
            "pilot observation does not match the pilot plan",
        ));
    }
    let mut h_hat = Vec::with_capacity(l_count * u_count);
    let mut est_cov = Vec::with_capacity(l_count * u_count);
    for l in 0..l_count {
        let mut inverses: Vec<Option<CMatrix>> = vec![None; tau];
        for u in 0..u_count {
            let t = plan.pilot_of[u];
            if inverses[t].is_none() {
                let inv = linalg::hermitian_inverse(&psi[l * tau + t])
                    .map_err(|e| Error::Singular(format!("Psi at AP {l}, pilot {t}: {e}")))?;
                inverses[t] = Some(inv);
            }
            let inv = inverses[t].as_ref().expect("filled above");
            let b = ls.covariance(l, u);
            let b_inv = &b * inv;
            let gain = (p_pilot[u] * tau as f64).sqrt();
            h_hat.push(&b_inv * obs.at(l, t) * Complex64::new(gain, 0.0));
            est_cov.push(&b_inv * &b * Complex64::new(gain * gain, 0.0));
        }
    }
    Ok(TrainingState {
        num_aps: l_count,
        num_ues: u_count,
        tau,
        psi,
        h_hat,
        est_cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn round_robin_examples() {
        let plan = assign_pilots(4, 2, 200, PilotPolicy::RoundRobin).unwrap();
        assert_eq!(plan.pilot_of, vec![0, 1, 0, 1]);
        assert_eq!(plan.co_pilots(0), &[0, 2]);
        let plan = assign_pilots(2, 4, 200, PilotPolicy::RoundRobin).unwrap();
        assert!((0..2).all(|u| plan.co_pilots(u) == [u]));
        assert!(assign_pilots(3, 201, 200, PilotPolicy::RoundRobin).is_err());
    }

    #[test]
    fn random_plan_is_reproducible() {
        let a = assign_pilots(30, 5, 200, PilotPolicy::Random { seed: 9 }).unwrap();
        let b = assign_pilots(30, 5, 200, PilotPolicy::Random { seed: 9 }).unwrap();
        assert_eq!(a, b);
        for u in 0..30 {
            assert!(a.co_pilots(u).contains(&u));
            for i in 0..30 {
                assert_eq!(a.co_pilots(u).contains(&i), a.pilot_of[i] == a.pilot_of[u]);
            }
        }
    }

    #[test]
    fn zero_covariance_gives_zero_channel() {
        let ls = LargeScale::uncorrelated(DMatrix::zeros(2, 2), 3).unwrap();
        let real = sample_channels(&ls, &mut rng(1)).unwrap();
        assert!(real.h.iter().all(|v| v.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn channel_power_matches_gain() {
        let beta = 3e-7;
        let ls = LargeScale::uncorrelated(DMatrix::from_element(1, 1, beta), 1).unwrap();
        let sampler = ChannelSampler::new(&ls).unwrap();
        let mut r = rng(2);
        let n = 100_000;
        let p: Vec<f64> = (0..n)
            .map(|_| sampler.sample(&mut r).h[0][0].norm_sqr())
            .collect();
        let mean = p.iter().sum::<f64>() / n as f64;
        let sd = (p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - beta).abs() < 3.0 * sd / (n as f64).sqrt());
        assert_ne!(sampler.sample(&mut rng(3)), sampler.sample(&mut rng(4)));
    }

    #[test]
    fn noiseless_superposition() {
        let ls = LargeScale::uncorrelated(DMatrix::from_element(1, 3, 1.0), 2).unwrap();
        let real = sample_channels(&ls, &mut rng(5)).unwrap();
        let plan = PilotPlan::new(3, vec![0, 0, 1]).unwrap();
        let p = [0.1, 0.4, 0.2];
        let obs = received_pilot(&real, &plan, &p, 0.0, &mut rng(6)).unwrap();
        let expected = real.link(0, 0) * Complex64::new((0.3f64).sqrt(), 0.0)
            + real.link(0, 1) * Complex64::new((1.2f64).sqrt(), 0.0);
        assert!((obs.at(0, 0) - expected).norm() < 1e-12);
        let single = real.link(0, 2) * Complex64::new((0.6f64).sqrt(), 0.0);
        assert!((obs.at(0, 1) - single).norm() < 1e-12);
        assert!(obs.at(0, 2).norm() == 0.0);
    }

    #[test]
    fn scalar_mmse_formula() {
        let (beta, p, tau, sigma2) = (2e-6, 0.05, 4usize, 1e-7);
        let ls = LargeScale::uncorrelated(DMatrix::from_element(1, 1, beta), 1).unwrap();
        let plan = PilotPlan::new(tau, vec![0]).unwrap();
        let real = sample_channels(&ls, &mut rng(7)).unwrap();
        let obs = received_pilot(&real, &plan, &[p], sigma2, &mut rng(8)).unwrap();
        let st = mmse_estimate(&obs, &ls, &plan, &[p], sigma2).unwrap();
        let pt = p * tau as f64;
        let expected = obs.at(0, 0)[0] * (pt.sqrt() * beta / (pt * beta + sigma2));
        assert!((st.estimate(0, 0)[0] - expected).norm() < 1e-12 * expected.norm());
        let var = pt * beta * beta / (pt * beta + sigma2);
        assert!((st.estimate_covariance(0, 0)[(0, 0)].re / var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_pilot_power_gives_zero_estimate() {
        let ls = LargeScale::uncorrelated(DMatrix::from_element(2, 2, 1e-6), 2).unwrap();
        let plan = PilotPlan::new(2, vec![0, 1]).unwrap();
        let real = sample_channels(&ls, &mut rng(9)).unwrap();
        let p = [0.0, 0.1];
        let obs = received_pilot(&real, &plan, &p, 1e-9, &mut rng(10)).unwrap();
        let st = mmse_estimate(&obs, &ls, &plan, &p, 1e-9).unwrap();
        assert!(st.estimate(0, 0).norm() == 0.0 && st.estimate(1, 0).norm() == 0.0);
    }

    #[test]
    fn noiseless_limit_recovers_channel() {
        let mut r = rng(11);
        let g = CMatrix::from_fn(3, 3, |_, _| linalg::complex_normal(&mut r));
        let b = &g * g.adjoint() + linalg::scaled_identity(3, 0.1);
        let ls = LargeScale::with_covariances(1, 1, vec![b.clone()]).unwrap();
        let plan = PilotPlan::new(1, vec![0]).unwrap();
        let real = sample_channels(&ls, &mut r).unwrap();
        let sigma2 = 1e-12 * linalg::real_trace(&b) / 3.0;
        let obs = received_pilot(&real, &plan, &[1.0], sigma2, &mut r).unwrap();
        let st = mmse_estimate(&obs, &ls, &plan, &[1.0], sigma2).unwrap();
        let err = (st.estimate(0, 0) - real.link(0, 0)).norm() / real.link(0, 0).norm();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn singular_psi_is_reported() {
        let ls = LargeScale::uncorrelated(DMatrix::from_element(1, 1, 1.0), 1).unwrap();
        let plan = PilotPlan::new(1, vec![0]).unwrap();
        let obs = PilotObservation {
            tau: 1,
            r: vec![CVector::zeros(1)],
        };
        let err = mmse_estimate(&obs, &ls, &plan, &[0.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn co_pilot_symmetry_and_psd_bounds() {
        let ls = LargeScale::uncorrelated(DMatrix::from_element(2, 2, 4e-7), 2).unwrap();
        let plan = PilotPlan::new(1, vec![0, 0]).unwrap();
        let p = [0.05, 0.05];
        let real = sample_channels(&ls, &mut rng(12)).unwrap();
        let obs = received_pilot(&real, &plan, &p, 1e-9, &mut rng(13)).unwrap();
        let st = mmse_estimate(&obs, &ls, &plan, &p, 1e-9).unwrap();
        for l in 0..2 {
            assert_eq!(st.estimate_covariance(l, 0), st.estimate_covariance(l, 1));
            let gap = ls.covariance(l, 0) - st.estimate_covariance(l, 0);
            assert!(linalg::is_hermitian_psd(&gap, 1e-9));
            assert!(linalg::hermitian_asymmetry(st.psi(l, 0)) <= 1e-12);
        }
    }
}
