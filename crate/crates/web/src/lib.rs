//! Browser bindings for the simulator. Every entry point takes plain numbers
//! or strings and returns a JSON document; errors come back as
//! `{"error": "..."}`.

use cellfree::harness::{run_experiment, ExperimentConfig, KappaSetting, Scheme};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn base_config(seed: u32, aps: u32, users: u32, tau: u32) -> ExperimentConfig {
    ExperimentConfig {
        num_aps: aps as usize,
        num_ues: users as usize,
        tau: tau as usize,
        seed: seed as u64,
        workers: 1,
        ..ExperimentConfig::default()
    }
}

fn kappa_setting(kappa: f64) -> KappaSetting {
    if kappa > 0.0 {
        KappaSetting::Fixed(kappa)
    } else {
        KappaSetting::Auto
    }
}

fn finish(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// One network drawn with `seed`: AP positions with their cluster, user
/// positions with their serving APs. A non-positive `kappa` calibrates it.
pub fn layout_json(seed: u32, aps: u32, users: u32, tau: u32, kappa: f64) -> String {
    finish((|| {
        let cfg = ExperimentConfig {
            kappa: kappa_setting(kappa),
            calibration_batches: 8,
            batches: 1,
            ..base_config(seed, aps, users, tau)
        };
        let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
        if let Some(f) = res.rows.first().and_then(|r| r.failures.first()) {
            return Err(f.message.clone());
        }
        let snap = res.snapshot.ok_or("no snapshot was recorded")?;
        let topo = &snap.topology;
        let ap: Vec<Value> = topo
            .ap_positions
            .iter()
            .enumerate()
            .map(|(l, p)| json!({ "x": p.x, "y": p.y, "cluster": snap.partition.cluster_of[l] }))
            .collect();
        let ue: Vec<Value> = topo
            .ue_positions
            .iter()
            .zip(&snap.association.serving_sets)
            .map(|(p, s)| json!({ "x": p.x, "y": p.y, "serving": s }))
            .collect();
        Ok(json!({
            "side": topo.side,
            "kappa": res.kappa,
            "clusters": snap.partition.num_clusters(),
            "max_load": snap.association.max_load(),
            "aps": ap,
            "ues": ue,
        }))
    })())
}

/// Empirical SE CDF per scheme; `schemes` is a comma-separated list such as
/// `dappa:full:equal,all:full:equal`.
pub fn se_cdf_json(
    seed: u32,
    aps: u32,
    users: u32,
    tau: u32,
    batches: u32,
    schemes: &str,
) -> String {
    finish((|| {
        let schemes: Vec<Scheme> = schemes
            .split(',')
            .map(|s| s.trim().parse::<Scheme>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let cfg = ExperimentConfig {
            schemes,
            batches: batches.max(1) as usize,
            calibration_batches: 8,
            ..base_config(seed, aps, users, tau)
        };
        let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let rows: Vec<Value> = res
            .rows
            .iter()
            .map(|r| match &r.summary {
                Some(s) => json!({
                    "scheme": r.scheme.to_string(),
                    "mean": s.mean,
                    "p5": s.likely_95(),
                    "failed_batches": r.failures.len(),
                    "cdf": s.cdf_points().iter().map(|&(x, p)| [x, p]).collect::<Vec<_>>(),
                }),
                None => json!({
                    "scheme": r.scheme.to_string(),
                    "error": r.error.clone().unwrap_or_else(|| "no samples".into()),
                }),
            })
            .collect();
        Ok(json!({ "kappa": res.kappa, "rows": rows }))
    })())
}

/// Objective trace of the pilot power solver on one network.
pub fn wsrm_trace_json(seed: u32, aps: u32, users: u32, tau: u32) -> String {
    finish((|| {
        let cfg = ExperimentConfig {
            schemes: vec!["dappa:wsrm:equal"
                .parse()
                .map_err(|e: cellfree::Error| e.to_string())?],
            batches: 1,
            calibration_batches: 8,
            ..base_config(seed, aps, users, tau)
        };
        let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let row = res.rows.first().ok_or("no result")?;
        if let Some(f) = row.failures.first() {
            return Err(f.message.clone());
        }
        Ok(json!({
            "trace": row.trace.clone().unwrap_or_default(),
            "iterations": row.wsrm_iterations.first().copied().unwrap_or(0),
            "shortened_steps": row.rejected_steps,
            "mean_se": row.summary.as_ref().map(|s| s.mean),
        }))
    })())
}

#[wasm_bindgen]
pub fn layout(seed: u32, aps: u32, users: u32, tau: u32, kappa: f64) -> String {
    layout_json(seed, aps, users, tau, kappa)
}

#[wasm_bindgen]
pub fn se_cdf(seed: u32, aps: u32, users: u32, tau: u32, batches: u32, schemes: &str) -> String {
    se_cdf_json(seed, aps, users, tau, batches, schemes)
}

#[wasm_bindgen]
pub fn wsrm_trace(seed: u32, aps: u32, users: u32, tau: u32) -> String {
    wsrm_trace_json(seed, aps, users, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn layout_has_every_node() {
        let v = parse(&layout_json(3, 30, 10, 5, 0.0));
        assert_eq!(v["aps"].as_array().unwrap().len(), 30);
        assert_eq!(v["ues"].as_array().unwrap().len(), 10);
        assert!(v["max_load"].as_u64().unwrap() <= 5);
    }

    #[test]
    fn cdf_ends_at_one() {
        let v = parse(&se_cdf_json(
            3,
            30,
            10,
            5,
            2,
            "dappa:full:equal, all:full:equal",
        ));
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 2);
        let cdf = rows[0]["cdf"].as_array().unwrap();
        assert_eq!(cdf.last().unwrap()[1].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn trace_and_errors() {
        let v = parse(&wsrm_trace_json(3, 30, 10, 5));
        let t: Vec<f64> = v["trace"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert!(t.len() >= 2 && t.windows(2).all(|w| w[1] >= w[0]));
        let bad = parse(&se_cdf_json(3, 30, 10, 5, 1, "nonsense"));
        assert!(bad["error"].is_string());
    }
}
