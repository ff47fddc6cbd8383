use crate::channel_training::PilotPlan;
use crate::clustering::Association;
use crate::performance::prelog;
use crate::propagation::LargeScale;
use crate::{Error, Result};

use super::coefficients::{sinr_ratio_parts, SinrCoefficients};

/// Settings of the pilot power solver.
#[derive(Debug, Clone, PartialEq)]
pub struct WsrmParams {
    /// Per-user weights; `None` means all ones.
    pub weights: Option<Vec<f64>>,
    /// Lower power bound in watts.
    pub eps: f64,
    pub p_max: f64,
    /// Relative change of the power vector that counts as converged.
    pub delta: f64,
    pub max_iters: usize,
    pub tau_c: usize,
    /// Step halvings tried before an iteration leaves the powers unchanged.
    pub max_halvings: usize,
}

impl Default for WsrmParams {
    fn default() -> Self {
        Self {
            weights: None,
            eps: 1e-6,
            p_max: 0.1,
            delta: 1e-4,
            max_iters: 100,
            tau_c: 200,
            max_halvings: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotSolveState {
    pub p_pilot: Vec<f64>,
    /// Auxiliary variables from the last iteration.
    pub y: Vec<f64>,
    /// Weighted sum SE at the start and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations whose full surrogate step lowered the weighted sum SE and
    /// had to be shortened.
    pub rejected_steps: usize,
}

/// `y_u = sqrt(A_u) / B_u`.
pub fn update_auxiliary(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&a, &b)| a.max(0.0).sqrt() / b)
        .collect()
}

/// `sum_u w_u (2 y_u sqrt(A_u) - y_u^2 B_u)`.
pub fn surrogate_value(y: &[f64], a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    (0..y.len())
        .map(|u| weights[u] * (2.0 * y[u] * a[u].max(0.0).sqrt() - y[u] * y[u] * b[u]))
        .sum()
}

/// Exact maximizer over `[eps, p_max]^U` of the surrogate with `Psi` frozen.
///
/// With `c_j = pd_j tau G_j` and
/// `lambda_j = sum_{u != j, u shares pilot with j} w_u y_u^2 pd_j tau |C_uj|^2 / G_u`,
/// coordinate `j` maximizes `2 w_j y_j sqrt(c_j p) - lambda_j p`, giving
/// `p = (w_j y_j)^2 c_j / lambda_j^2`.
pub fn maximize_surrogate(
    y: &[f64],
    coeffs: &SinrCoefficients,
    p_data: &[f64],
    weights: &[f64],
    eps: f64,
    p_max: f64,
) -> Vec<f64> {
    let n = coeffs.num_ues();
    let tau = coeffs.tau as f64;
    let mut lambda = vec![0.0; n];
    for u in 0..n {
        let scale = weights[u] * y[u] * y[u] / coeffs.gain[u];
        if scale == 0.0 || !scale.is_finite() {
            continue;
        }
        for j in 0..n {
            let c = coeffs.coherent[(u, j)];
            if c != 0.0 {
                lambda[j] += scale * p_data[j] * tau * c;
            }
        }
    }
    (0..n)
        .map(|j| {
            if lambda[j] > 0.0 {
                let c = p_data[j] * tau * coeffs.gain[j];
                let wy = weights[j] * y[j];
                (wy * wy * c / (lambda[j] * lambda[j])).clamp(eps, p_max)
            } else {
                p_max
            }
        })
        .collect()
}

struct Evaluation {
    coeffs: SinrCoefficients,
    a: Vec<f64>,
    b: Vec<f64>,
    objective: f64,
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    ls: &LargeScale,
    assoc: &Association,
    plan: &PilotPlan,
    p_pilot: &[f64],
    p_data: &[f64],
    sigma2: f64,
    weights: &[f64],
    prelog: f64,
) -> Result<Evaluation> {
    let coeffs = SinrCoefficients::build(ls, assoc, plan, p_pilot, sigma2)?;
    let (a, b) = sinr_ratio_parts(&coeffs, p_pilot, p_data)?;
    let objective = (0..a.len())
        .map(|u| weights[u] * prelog * (a[u] / b[u]).ln_1p() / std::f64::consts::LN_2)
        .sum();
    Ok(Evaluation {
        coeffs,
        a,
        b,
        objective,
    })
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new
        .iter()
        .zip(old)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let base: f64 = old.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / base
}

/// Pilot powers maximizing the weighted sum SE by alternating the auxiliary
/// update with the closed-form surrogate maximizer.
///
/// `Psi` and every trace coefficient are rebuilt from the current powers at
/// the start of each iteration. Because the frozen surrogate ignores how the
/// powers move `Psi`, the full step can lower the true objective; the step
/// toward the surrogate maximizer is then halved until the objective does
/// not decrease, and dropped if no halving works.
pub fn wsrm_pilot_powers(
    ls: &LargeScale,
    plan: &PilotPlan,
    assoc: &Association,
    p_data: &[f64],
    sigma2: f64,
    params: &WsrmParams,
) -> Result<PilotSolveState> {
    let n = ls.num_ues();
    if !(params.eps > 0.0 && params.eps <= params.p_max) {
        return Err(Error::config(format!(
            "need 0 < eps <= p_max, got eps = {}, p_max = {}",
            params.eps, params.p_max
        )));
    }
    let weights = match &params.weights {
        Some(w) if w.len() == n => w.clone(),
        Some(w) => return Err(Error::config(format!("{} weights for {n} users", w.len()))),
        None => vec![1.0; n],
    };
    let prelog = prelog(plan.tau, params.tau_c)?;
    let mut p = vec![params.p_max / 2.0; n];
    let mut current = evaluate(ls, assoc, plan, &p, p_data, sigma2, &weights, prelog)?;
    let mut trace = vec![current.objective];
    let mut y = update_auxiliary(&current.a, &current.b);
    let mut rejected = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iters {
        iterations += 1;
        y = update_auxiliary(&current.a, &current.b);
        let target = maximize_surrogate(
            &y,
            &current.coeffs,
            p_data,
            &weights,
            params.eps,
            params.p_max,
        );
        let mut step = 1.0;
        let mut accepted = None;
        for k in 0..=params.max_halvings {
            let q: Vec<f64> = p
                .iter()
                .zip(&target)
                .map(|(&a, &b)| (a + step * (b - a)).clamp(params.eps, params.p_max))
                .collect();
            let eval = evaluate(ls, assoc, plan, &q, p_data, sigma2, &weights, prelog)?;
            if eval.objective >= current.objective {
                accepted = Some((q, eval));
                break;
            }
            if k == 0 {
                rejected += 1;
            }
            step *= 0.5;
        }
        let change = match accepted {
            Some((q, eval)) => {
                let change = relative_change(&q, &p);
                p = q;
                current = eval;
                change
            }
            None => 0.0,
        };
        trace.push(current.objective);
        if change < params.delta {
            converged = true;
            break;
        }
    }
    Ok(PilotSolveState {
        p_pilot: p,
        y,
        objective_trace: trace,
        iterations,
        converged,
        rejected_steps: rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_training::{assign_pilots, PilotPolicy};
    use nalgebra::DMatrix;

    #[test]
    fn auxiliary_examples() {
        assert_eq!(
            update_auxiliary(&[4.0, 0.0, 9.0], &[2.0, 1.0, 3.0]),
            vec![1.0, 0.0, 1.0]
        );
        let y = update_auxiliary(&[9.0], &[3.0]);
        assert!((surrogate_value(&y, &[9.0], &[3.0], &[1.0]) - 3.0).abs() < 1e-15);
    }

    fn coeffs_with(c: f64, lam: f64) -> SinrCoefficients {
        // two users on one pilot, G = 1, tau = 1: c_0 = pd_0 G_0 tau, and
        // lambda_0 = w_1 y_1^2 pd_0 |C_10|^2 / G_1
        SinrCoefficients {
            tau: 1,
            sigma2: 1.0,
            gain: vec![1.0, 1.0],
            noncoherent: DMatrix::zeros(2, 2),
            coherent: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, lam / c, 0.0]),
        }
    }

    #[test]
    fn surrogate_closed_form() {
        let coeffs = coeffs_with(1.0, 2.0);
        let p = maximize_surrogate(&[1.0, 1.0], &coeffs, &[1.0, 1.0], &[1.0, 1.0], 1e-6, 1.0);
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert_eq!(p[1], 1.0);
        let coeffs = coeffs_with(1.0, 0.1);
        let p = maximize_surrogate(&[1.0, 1.0], &coeffs, &[1.0, 1.0], &[1.0, 1.0], 1e-6, 1.0);
        assert_eq!(p[0], 1.0);
        let obj = |x: f64| 2.0 * x.sqrt() - 0.1 * x;
        assert!(obj(1.0) > obj(1.0 - 1e-3) && obj(1.0) > obj(1e-6 + 1e-3));
    }

    #[test]
    fn single_user_goes_to_full_power() {
        let ls = LargeScale::uncorrelated(DMatrix::from_element(3, 1, 1e-7), 1).unwrap();
        let plan = assign_pilots(1, 2, 200, PilotPolicy::RoundRobin).unwrap();
        let assoc = Association::from_serving_sets(3, vec![vec![0, 1, 2]]);
        let st =
            wsrm_pilot_powers(&ls, &plan, &assoc, &[0.1], 1e-9, &WsrmParams::default()).unwrap();
        assert!(st.converged && st.iterations <= 2);
        assert_eq!(st.p_pilot, vec![0.1]);
    }

    #[test]
    fn symmetric_pair_stays_symmetric() {
        let beta = DMatrix::from_row_slice(2, 2, &[1e-6, 1e-6, 2e-7, 2e-7]);
        let ls = LargeScale::uncorrelated(beta, 1).unwrap();
        let plan = assign_pilots(2, 1, 200, PilotPolicy::RoundRobin).unwrap();
        let assoc = Association::from_serving_sets(2, vec![vec![0, 1], vec![0, 1]]);
        let st = wsrm_pilot_powers(
            &ls,
            &plan,
            &assoc,
            &[0.1, 0.1],
            1e-9,
            &WsrmParams::default(),
        )
        .unwrap();
        assert_eq!(st.p_pilot[0], st.p_pilot[1]);
        assert!(st.objective_trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
