use crate::channel_training::{
    assign_pilots, mmse_estimate, received_pilot, sample_channels, PilotPlan,
};
use crate::clustering::{
    ap_correlation_matrix, associate_users, baseline_association, dendrogram, top_n_per_user,
    Association, Baseline, Dendrogram, Partition,
};
use crate::performance::{aggregate_stats, spectral_efficiency, StatSummary};
use crate::power_control::{
    maxmin_data_powers, posynomial_coefficients, sinr_ratio_parts, wsrm_pilot_powers,
    PosynomialCoeffs, SinrCoefficients, WsrmParams,
};
use crate::propagation::{large_scale_gains, sample_shadowing, LargeScale};
use crate::topology::{place_network, Topology};
use crate::{Error, Result};

use super::config::{AssocScheme, DataScheme, ExperimentConfig, KappaSetting, PilotScheme, Scheme};
use super::seeding::{batch_rng, BOOTSTRAP, LAYOUT, PILOTS};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchFailure {
    pub batch: usize,
    pub message: String,
}

/// Aggregated outcome of one scheme at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub axis_value: Option<f64>,
    /// Per-user SE of every successful batch, in batch order.
    pub samples: Vec<f64>,
    pub summary: Option<StatSummary>,
    /// Mean solver iterations: pilot solver outer iterations when present,
    /// otherwise bisection steps, otherwise zero.
    pub iters_mean: f64,
    pub wall_ms: f64,
    pub failures: Vec<BatchFailure>,
    /// Largest AP load seen under the clustering association.
    pub max_load: usize,
    /// Batches in which some AP served more than `tau` users.
    pub load_cap_violations: usize,
    pub wsrm_iterations: Vec<usize>,
    pub wsrm_unconverged: usize,
    pub rejected_steps: usize,
    /// Pilot solver objective trace of the first successful batch.
    pub trace: Option<Vec<f64>>,
    /// Set when the whole configuration failed.
    pub error: Option<String>,
}

impl ResultRow {
    fn empty(scheme: Scheme) -> Self {
        Self {
            scheme,
            axis_value: None,
            samples: Vec::new(),
            summary: None,
            iters_mean: 0.0,
            wall_ms: 0.0,
            failures: Vec::new(),
            max_load: 0,
            load_cap_violations: 0,
            wsrm_iterations: Vec::new(),
            wsrm_unconverged: 0,
            rejected_steps: 0,
            trace: None,
            error: None,
        }
    }

    pub(crate) fn failed(scheme: Scheme, axis_value: Option<f64>, message: String) -> Self {
        let mut row = Self::empty(scheme);
        row.axis_value = axis_value;
        row.error = Some(message);
        row
    }
}

/// Clustering and association of the first batch, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub batch: usize,
    pub topology: Topology,
    pub partition: Partition,
    pub association: Association,
}

/// `(kappa, mean SE)` per grid value; `None` marks a discarded value.
pub type CalibrationTable = Vec<(f64, Option<f64>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Threshold used by clustering schemes.
    pub kappa: Option<f64>,
    /// Mean SE per calibration grid value; `None` when some calibration
    /// batch ran out of AP capacity.
    pub calibration: CalibrationTable,
    pub rows: Vec<ResultRow>,
    pub snapshot: Option<Snapshot>,
}

/// One large-scale draw with everything shared across schemes.
pub(crate) struct Network {
    pub topology: Topology,
    pub ls: LargeScale,
    pub plan: PilotPlan,
    pub dendrogram: Option<Dendrogram>,
}

pub(crate) fn prepare_network(
    cfg: &ExperimentConfig,
    batch: usize,
    calibration: bool,
) -> Result<Network> {
    let b = batch as u64;
    let mut rng = batch_rng(cfg.seed, b, LAYOUT, calibration);
    let topology = place_network(cfg.num_aps, cfg.num_ues, cfg.side, cfg.ap_height, &mut rng)?;
    let model = cfg.large_scale_model();
    let shadowing = sample_shadowing(&topology, &model, &mut rng)?;
    let ls = large_scale_gains(&topology, &model, &shadowing, cfg.antennas)?;
    let pilot_seed = {
        use rand::Rng;
        batch_rng(cfg.seed, b, PILOTS, calibration).random::<u64>()
    };
    let plan = assign_pilots(
        cfg.num_ues,
        cfg.tau,
        cfg.tau_c,
        cfg.pilot_policy.policy(pilot_seed),
    )?;
    let dendrogram = if cfg.needs_clustering() {
        // One full-network estimation pass at full pilot power drives the
        // clustering before any association exists.
        let mut rng = batch_rng(cfg.seed, b, BOOTSTRAP, calibration);
        let sigma2 = cfg.sigma2();
        let full = vec![cfg.p_max; cfg.num_ues];
        let real = sample_channels(&ls, &mut rng)?;
        let obs = received_pilot(&real, &plan, &full, sigma2, &mut rng)?;
        let training = mmse_estimate(&obs, &ls, &plan, &full, sigma2)?;
        Some(dendrogram(&ap_correlation_matrix(
            &training,
            cfg.similarity,
        )))
    } else {
        None
    };
    Ok(Network {
        topology,
        ls,
        plan,
        dendrogram,
    })
}

pub(crate) struct SchemeOutcome {
    pub se: Vec<f64>,
    pub iterations: f64,
    pub max_load: Option<usize>,
    pub wsrm: Option<(usize, bool, usize, Vec<f64>)>,
    pub association: Association,
    pub partition: Option<Partition>,
}

pub(crate) fn evaluate_scheme(
    cfg: &ExperimentConfig,
    net: &Network,
    scheme: Scheme,
    kappa: Option<f64>,
) -> Result<SchemeOutcome> {
    let ls = &net.ls;
    let n = cfg.num_ues;
    let clustered = || -> Result<(Partition, Association)> {
        let dendro = net
            .dendrogram
            .as_ref()
            .ok_or_else(|| Error::config("clustering requested without a bootstrap pass"))?;
        let kappa = kappa.ok_or_else(|| Error::config("clustering requested without kappa"))?;
        let partition = dendro.cut(kappa);
        let assoc = associate_users(&partition, &ls.beta, cfg.tau)?;
        Ok((partition, assoc))
    };
    let (association, partition, max_load) = match scheme.assoc {
        AssocScheme::Dappa => {
            let (p, a) = clustered()?;
            let load = a.max_load();
            (a, Some(p), Some(load))
        }
        AssocScheme::TopMatched => {
            let (_, a) = clustered()?;
            let counts: Vec<usize> = a.serving_sets.iter().map(Vec::len).collect();
            (top_n_per_user(&ls.beta, &counts)?, None, None)
        }
        AssocScheme::AllAps => (
            baseline_association(&ls.beta, Baseline::AllAps)?,
            None,
            None,
        ),
        AssocScheme::TopN(k) => (
            baseline_association(&ls.beta, Baseline::TopN(k))?,
            None,
            None,
        ),
    };
    let sigma2 = cfg.sigma2();
    let full_data = vec![cfg.p_max; n];
    let mut iterations = 0.0;
    let mut wsrm = None;
    let p_pilot = match scheme.pilot {
        PilotScheme::Full => vec![cfg.p_max; n],
        PilotScheme::Equal => vec![cfg.p_max / 2.0; n],
        PilotScheme::Wsrm => {
            let params = WsrmParams {
                weights: cfg.weights.clone(),
                eps: cfg.eps,
                p_max: cfg.p_max,
                delta: cfg.delta,
                max_iters: cfg.max_iters,
                tau_c: cfg.tau_c,
                ..WsrmParams::default()
            };
            let st = wsrm_pilot_powers(ls, &net.plan, &association, &full_data, sigma2, &params)?;
            iterations = st.iterations as f64;
            wsrm = Some((
                st.iterations,
                st.converged,
                st.rejected_steps,
                st.objective_trace,
            ));
            st.p_pilot
        }
    };
    let coeffs = SinrCoefficients::build(ls, &association, &net.plan, &p_pilot, sigma2)?;
    let p_data = match scheme.data {
        DataScheme::Equal => full_data,
        DataScheme::MaxMin => {
            let posy = if ls.is_uncorrelated() {
                posynomial_coefficients(ls, &association, &net.plan, &p_pilot, sigma2, cfg.p_max)?
            } else {
                PosynomialCoeffs::from_sinr_coefficients(&coeffs, &p_pilot, cfg.p_max)?
            };
            let st = maxmin_data_powers(&posy, cfg.maxmin_tol)?;
            if wsrm.is_none() {
                iterations = (st.bisection_trace.len() - 1) as f64;
            }
            st.p_data.iter().map(|p| p * cfg.p_max).collect()
        }
    };
    let (a, b) = sinr_ratio_parts(&coeffs, &p_pilot, &p_data)?;
    let sinr: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a / b).collect();
    let se = spectral_efficiency(&sinr, cfg.tau, cfg.tau_c)?;
    Ok(SchemeOutcome {
        se,
        iterations,
        max_load,
        wsrm,
        association,
        partition,
    })
}

/// Maps `f` over `0..n`, on `workers` threads when parallelism is compiled
/// in. Output order follows the index.
pub(crate) fn map_batches<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        (0..n).map(f).collect()
    }
}

/// Scheme whose clustering quality decides kappa.
fn calibration_scheme(cfg: &ExperimentConfig) -> Option<Scheme> {
    cfg.schemes
        .iter()
        .find(|s| s.assoc == AssocScheme::Dappa)
        .or_else(|| {
            cfg.schemes
                .iter()
                .find(|s| s.assoc == AssocScheme::TopMatched)
        })
        .map(|s| Scheme::new(AssocScheme::Dappa, s.pilot, s.data))
}

/// Picks kappa from the grid by mean SE on separate calibration batches.
///
/// A grid value is discarded when any calibration batch cannot serve every
/// user within the load cap. If every value is discarded the smallest one
/// is used.
fn calibrate_kappa(cfg: &ExperimentConfig) -> Result<(f64, CalibrationTable)> {
    let scheme = calibration_scheme(cfg)
        .ok_or_else(|| Error::config("no clustering scheme to calibrate"))?;
    let per_batch: Vec<Result<Vec<Option<f64>>>> =
        map_batches(cfg.calibration_batches, cfg.workers, |b| {
            let net = prepare_network(cfg, b, true)?;
            Ok(cfg
                .kappa_grid
                .iter()
                .map(|&k| {
                    evaluate_scheme(cfg, &net, scheme, Some(k))
                        .ok()
                        .map(|o| o.se.iter().sum::<f64>() / o.se.len() as f64)
                })
                .collect())
        });
    let per_batch: Vec<Vec<Option<f64>>> = per_batch.into_iter().collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(cfg.kappa_grid.len());
    for (g, &k) in cfg.kappa_grid.iter().enumerate() {
        let values: Option<Vec<f64>> = per_batch.iter().map(|b| b[g]).collect();
        table.push((k, values.map(|v| v.iter().sum::<f64>() / v.len() as f64)));
    }
    let best = table.iter().filter_map(|&(k, m)| m.map(|m| (k, m))).fold(
        None,
        |acc: Option<(f64, f64)>, (k, m)| match acc {
            Some((_, bm)) if bm >= m => acc,
            _ => Some((k, m)),
        },
    );
    let kappa = match best {
        Some((k, _)) => k,
        None => cfg.kappa_grid.iter().copied().fold(f64::INFINITY, f64::min),
    };
    Ok((kappa, table))
}

// wasm32-unknown-unknown has no monotonic clock; timings read zero there.
#[cfg(not(target_arch = "wasm32"))]
fn clock() -> Option<std::time::Instant> {
    Some(std::time::Instant::now())
}

#[cfg(target_arch = "wasm32")]
fn clock() -> Option<()> {
    None
}

#[cfg(not(target_arch = "wasm32"))]
fn elapsed_ms_since(start: Option<std::time::Instant>) -> f64 {
    start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
}

#[cfg(target_arch = "wasm32")]
fn elapsed_ms_since(_: Option<()>) -> f64 {
    0.0
}

struct BatchRecord {
    outcomes: Vec<std::result::Result<SchemeOutcome, String>>,
    elapsed_ms: Vec<f64>,
    network: Option<Network>,
}

/// Runs every batch of `cfg` for each configured scheme.
///
/// Numbers depend only on the configuration and seed: every batch draws
/// from its own generator and results are merged in batch order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (kappa, calibration) = if cfg.needs_clustering() {
        match cfg.kappa {
            KappaSetting::Fixed(k) => (Some(k), Vec::new()),
            KappaSetting::Auto => {
                let (k, table) = calibrate_kappa(cfg)?;
                (Some(k), table)
            }
        }
    } else {
        (None, Vec::new())
    };
    let records: Vec<BatchRecord> =
        map_batches(cfg.batches, cfg.workers, |b| {
            match prepare_network(cfg, b, false) {
                Err(e) => BatchRecord {
                    outcomes: cfg.schemes.iter().map(|_| Err(e.to_string())).collect(),
                    elapsed_ms: vec![0.0; cfg.schemes.len()],
                    network: None,
                },
                Ok(net) => {
                    let mut outcomes = Vec::with_capacity(cfg.schemes.len());
                    let mut elapsed_ms = Vec::with_capacity(cfg.schemes.len());
                    for &s in &cfg.schemes {
                        let start = clock();
                        outcomes
                            .push(evaluate_scheme(cfg, &net, s, kappa).map_err(|e| e.to_string()));
                        elapsed_ms.push(elapsed_ms_since(start));
                    }
                    BatchRecord {
                        outcomes,
                        elapsed_ms,
                        network: (b == 0).then_some(net),
                    }
                }
            }
        });

    let mut rows: Vec<ResultRow> = cfg.schemes.iter().map(|&s| ResultRow::empty(s)).collect();
    let mut snapshot = None;
    let mut iteration_sums = vec![(0.0, 0usize); cfg.schemes.len()];
    for (b, rec) in records.into_iter().enumerate() {
        for (k, outcome) in rec.outcomes.into_iter().enumerate() {
            let row = &mut rows[k];
            row.wall_ms += rec.elapsed_ms[k];
            match outcome {
                Err(message) => row.failures.push(BatchFailure { batch: b, message }),
                Ok(o) => {
                    row.samples.extend_from_slice(&o.se);
                    iteration_sums[k].0 += o.iterations;
                    iteration_sums[k].1 += 1;
                    if let Some(load) = o.max_load {
                        row.max_load = row.max_load.max(load);
                        if load > cfg.tau {
                            row.load_cap_violations += 1;
                        }
                    }
                    if let Some((iters, converged, rejected, trace)) = o.wsrm {
                        row.wsrm_iterations.push(iters);
                        row.wsrm_unconverged += usize::from(!converged);
                        row.rejected_steps += rejected;
                        if row.trace.is_none() {
                            row.trace = Some(trace);
                        }
                    }
                    if snapshot.is_none() {
                        if let (Some(p), Some(net)) = (o.partition, rec.network.as_ref()) {
                            snapshot = Some(Snapshot {
                                batch: b,
                                topology: net.topology.clone(),
                                partition: p,
                                association: o.association,
                            });
                        }
                    }
                }
            }
        }
    }
    for (row, (sum, count)) in rows.iter_mut().zip(iteration_sums) {
        row.iters_mean = if count > 0 { sum / count as f64 } else { 0.0 };
        row.summary = aggregate_stats(&row.samples).ok();
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        kappa,
        calibration,
        rows,
        snapshot,
    })
}
