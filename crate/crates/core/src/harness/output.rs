use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

use super::config::ExperimentConfig;
use super::experiment::{ExperimentResult, ResultRow};
use super::sweep::SweepPoint;

/// Files written and anything worth warning about.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputReport {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    report: OutputReport,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.report.files.push(path);
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn suffix(point: &SweepPoint) -> String {
    match (point.axis, point.value) {
        (Some(axis), Some(v)) => format!("_{axis}-{v}"),
        _ => String::new(),
    }
}

fn rows_of(point: &SweepPoint, base: &ExperimentConfig) -> Vec<ResultRow> {
    match &point.outcome {
        Ok(r) => r
            .rows
            .iter()
            .map(|row| {
                let mut row = row.clone();
                row.axis_value = point.value;
                row
            })
            .collect(),
        Err(message) => base
            .schemes
            .iter()
            .map(|&s| ResultRow::failed(s, point.value, message.clone()))
            .collect(),
    }
}

/// Writes summary, diagnostics, error, CDF, trace, clustering and metadata
/// files into `dest`, creating it if needed.
///
/// Every file except the `wall_ms` column and the metadata timestamp is a
/// pure function of the configuration.
pub fn emit_outputs(
    base: &ExperimentConfig,
    points: &[SweepPoint],
    dest: &Path,
) -> Result<OutputReport> {
    fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
    let mut w = Writer {
        dir: dest,
        report: OutputReport::default(),
    };
    if points.is_empty() {
        w.report
            .warnings
            .push("no results; only metadata written".into());
        w.write("metadata.txt", &metadata(base, points))?;
        return Ok(w.report);
    }

    let mut summary = String::from("scheme,axis_value,mean_se,se_p5,iters_mean,wall_ms\n");
    let mut diagnostics = String::from(
        "scheme,axis_value,kappa,samples,failed_batches,se_stderr,max_load,load_cap_violations,wsrm_unconverged,rejected_steps\n",
    );
    let mut errors = String::from("scheme,axis_value,batch,message\n");
    for point in points {
        let kappa = point.outcome.as_ref().ok().and_then(|r| r.kappa);
        for row in rows_of(point, base) {
            let axis = fmt_opt(row.axis_value);
            let label = row.scheme.to_string();
            let (mean, p5, stderr) = match &row.summary {
                Some(s) => (
                    s.mean.to_string(),
                    s.likely_95().to_string(),
                    s.std_error().to_string(),
                ),
                None => Default::default(),
            };
            let _ = writeln!(
                summary,
                "{label},{axis},{mean},{p5},{},{:.3}",
                row.iters_mean, row.wall_ms
            );
            let _ = writeln!(
                diagnostics,
                "{label},{axis},{},{},{},{stderr},{},{},{},{}",
                fmt_opt(kappa),
                row.samples.len(),
                row.failures.len(),
                row.max_load,
                row.load_cap_violations,
                row.wsrm_unconverged,
                row.rejected_steps
            );
            if let Some(e) = &row.error {
                let _ = writeln!(errors, "{label},{axis},,\"{}\"", e.replace('"', "'"));
            }
            for f in &row.failures {
                let _ = writeln!(
                    errors,
                    "{label},{axis},{},\"{}\"",
                    f.batch,
                    f.message.replace('"', "'")
                );
            }
            let stem = format!("{}{}", row.scheme.file_stem(), suffix(point));
            if let Some(s) = &row.summary {
                let mut cdf = String::from("se_bit_s_hz,cum_prob\n");
                for (v, p) in s.cdf_points() {
                    let _ = writeln!(cdf, "{v},{p}");
                }
                w.write(&format!("cdf_{stem}.csv"), &cdf)?;
            } else {
                w.report
                    .warnings
                    .push(format!("{label} at {axis:?}: no samples"));
            }
            if let Some(trace) = &row.trace {
                let mut t = String::from("iter,objective\n");
                for (k, v) in trace.iter().enumerate() {
                    let _ = writeln!(t, "{k},{v}");
                }
                w.write(&format!("trace_{stem}.csv"), &t)?;
            }
        }
    }
    w.write("summary.csv", &summary)?;
    w.write("diagnostics.csv", &diagnostics)?;
    w.write("errors.csv", &errors)?;

    if let Some(snap) = points
        .iter()
        .find_map(|p| p.outcome.as_ref().ok().and_then(|r| r.snapshot.as_ref()))
    {
        let mut part = String::from("ap_id,cluster_id,x,y\n");
        for (l, &c) in snap.partition.cluster_of.iter().enumerate() {
            let p = snap.topology.ap_positions[l];
            let _ = writeln!(part, "{l},{c},{},{}", p.x, p.y);
        }
        w.write("partition.csv", &part)?;
        let mut assoc = String::from("ue_id,serving_aps,x,y\n");
        for (u, set) in snap.association.serving_sets.iter().enumerate() {
            let ids: Vec<String> = set.iter().map(|l| l.to_string()).collect();
            let p = snap.topology.ue_positions[u];
            let _ = writeln!(assoc, "{u},{},{},{}", ids.join(";"), p.x, p.y);
        }
        w.write("association.csv", &assoc)?;
    }
    w.write("metadata.txt", &metadata(base, points))?;
    Ok(w.report)
}

fn metadata(base: &ExperimentConfig, points: &[SweepPoint]) -> String {
    let mut m = String::from("# resolved configuration\n");
    for (k, v) in base.to_kv() {
        let _ = writeln!(m, "{k} = {v}");
    }
    m.push_str("\n# conventions\n");
    m.push_str("batch = one independent placement and shadowing draw\n");
    m.push_str("cdf_pooling = users pooled across batches\n");
    m.push_str("percentile = linear interpolation between order statistics\n");
    m.push_str("se_p5 = 5th percentile (95%-likely SE)\n");
    m.push_str("seeding = ChaCha8 stream per (batch, purpose) from seed\n");
    m.push_str("bootstrap_pilot_power = p_max\n");
    m.push_str("ue_order = ascending index\n");
    m.push_str("ranking = large-scale gain\n");
    m.push_str("tie_break = lowest index\n");
    for point in points {
        let label = match (point.axis, point.value) {
            (Some(a), Some(v)) => format!("{a}={v}"),
            _ => "run".into(),
        };
        let _ = writeln!(m, "\n# point {label}");
        match &point.outcome {
            Err(e) => {
                let _ = writeln!(m, "error = {e}");
            }
            Ok(ExperimentResult {
                kappa, calibration, ..
            }) => {
                let _ = writeln!(m, "kappa_resolved = {}", fmt_opt(*kappa));
                for (k, v) in calibration {
                    let value = v
                        .map(|v| v.to_string())
                        .unwrap_or_else(|| "exhausted".into());
                    let _ = writeln!(m, "calibration[{k}] = {value}");
                }
            }
        }
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let _ = writeln!(m, "\ntimestamp = {stamp}");
    m
}
