use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::channel_training::PilotPolicy;
use crate::clustering::Similarity;
use crate::propagation::{LargeScaleModel, ModelKind};
use crate::{Error, Result};

/// Which APs serve each user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssocScheme {
    /// Correlation clustering with the load cap.
    Dappa,
    AllAps,
    TopN(usize),
    /// Top-N with N equal to the clustering scheme's serving-set size per user.
    TopMatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotScheme {
    /// Every user at `p_max`.
    Full,
    /// Every user at `p_max / 2`.
    Equal,
    Wsrm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataScheme {
    /// Every user at `p_max`.
    Equal,
    MaxMin,
}

/// `association:pilot:data`, e.g. `dappa:wsrm:maxmin` or `top-5:full:equal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scheme {
    pub assoc: AssocScheme,
    pub pilot: PilotScheme,
    pub data: DataScheme,
}

impl Scheme {
    pub const fn new(assoc: AssocScheme, pilot: PilotScheme, data: DataScheme) -> Self {
        Self { assoc, pilot, data }
    }

    /// Short identifier usable in file names.
    pub fn file_stem(&self) -> String {
        self.to_string().replace(':', "_")
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(format!(
                "scheme '{s}' is not association:pilot:data"
            )));
        }
        let assoc = match parts[0] {
            "dappa" => AssocScheme::Dappa,
            "all" => AssocScheme::AllAps,
            "top-matched" => AssocScheme::TopMatched,
            other => match other.strip_prefix("top-").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => AssocScheme::TopN(n),
                _ => return Err(Error::config(format!("unknown association '{other}'"))),
            },
        };
        let pilot = match parts[1] {
            "full" => PilotScheme::Full,
            "equal" => PilotScheme::Equal,
            "wsrm" => PilotScheme::Wsrm,
            other => {
                return Err(Error::config(format!(
                    "unknown pilot power scheme '{other}'"
                )))
            }
        };
        let data = match parts[2] {
            "equal" => DataScheme::Equal,
            "maxmin" => DataScheme::MaxMin,
            other => {
                return Err(Error::config(format!(
                    "unknown data power scheme '{other}'"
                )))
            }
        };
        Ok(Self { assoc, pilot, data })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.assoc {
            AssocScheme::Dappa => f.write_str("dappa")?,
            AssocScheme::AllAps => f.write_str("all")?,
            AssocScheme::TopN(n) => write!(f, "top-{n}")?,
            AssocScheme::TopMatched => f.write_str("top-matched")?,
        }
        f.write_str(match self.pilot {
            PilotScheme::Full => ":full",
            PilotScheme::Equal => ":equal",
            PilotScheme::Wsrm => ":wsrm",
        })?;
        f.write_str(match self.data {
            DataScheme::Equal => ":equal",
            DataScheme::MaxMin => ":maxmin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaSetting {
    /// Pick the grid value with the best mean SE on calibration batches.
    Auto,
    Fixed(f64),
}

/// Every knob of an experiment. Keys of the text format are the field names.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    pub antennas: usize,
    pub side: f64,
    pub ap_height: f64,
    pub model: ModelKind,
    /// Overrides of the model's shadowing statistics.
    pub shadow_std_db: Option<f64>,
    pub decorrelation_m: Option<f64>,
    pub tau: usize,
    pub tau_c: usize,
    pub noise_dbm: f64,
    pub p_max: f64,
    pub kappa: KappaSetting,
    pub kappa_grid: Vec<f64>,
    pub calibration_batches: usize,
    pub similarity: Similarity,
    pub pilot_policy: PilotPolicyKind,
    pub schemes: Vec<Scheme>,
    pub batches: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub eps: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub maxmin_tol: f64,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotPolicyKind {
    RoundRobin,
    Random,
}

impl PilotPolicyKind {
    /// Concrete policy; random plans draw from the batch's own seed.
    pub fn policy(self, batch_seed: u64) -> PilotPolicy {
        match self {
            PilotPolicyKind::RoundRobin => PilotPolicy::RoundRobin,
            PilotPolicyKind::Random => PilotPolicy::Random { seed: batch_seed },
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_aps: 100,
            num_ues: 40,
            antennas: 1,
            side: 1000.0,
            ap_height: 10.0,
            model: ModelKind::UrbanMicro,
            shadow_std_db: None,
            decorrelation_m: None,
            tau: 20,
            tau_c: 200,
            noise_dbm: -92.0,
            p_max: 0.1,
            kappa: KappaSetting::Auto,
            kappa_grid: vec![
                0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.88, 0.9, 0.92, 0.94, 0.96, 0.98,
            ],
            calibration_batches: 50,
            similarity: Similarity::Magnitude,
            pilot_policy: PilotPolicyKind::RoundRobin,
            schemes: vec![Scheme::new(
                AssocScheme::Dappa,
                PilotScheme::Full,
                DataScheme::Equal,
            )],
            batches: 100,
            seed: 1,
            workers: 0,
            eps: 1e-6,
            delta: 1e-4,
            max_iters: 100,
            maxmin_tol: 1e-6,
            weights: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "num_aps" | "L" => self.num_aps = parse(key, value)?,
            "num_ues" | "U" => self.num_ues = parse(key, value)?,
            "antennas" | "M" => self.antennas = parse(key, value)?,
            "side" => self.side = parse(key, value)?,
            "ap_height" => self.ap_height = parse(key, value)?,
            "model" => self.model = value.parse()?,
            "shadow_std_db" => self.shadow_std_db = Some(parse(key, value)?),
            "decorrelation_m" => self.decorrelation_m = Some(parse(key, value)?),
            "tau" => self.tau = parse(key, value)?,
            "tau_c" => self.tau_c = parse(key, value)?,
            "noise_dbm" => self.noise_dbm = parse(key, value)?,
            "p_max" => self.p_max = parse(key, value)?,
            "kappa" => {
                self.kappa = if value == "auto" {
                    KappaSetting::Auto
                } else {
                    KappaSetting::Fixed(parse(key, value)?)
                }
            }
            "kappa_grid" => self.kappa_grid = parse_list(key, value)?,
            "calibration_batches" => self.calibration_batches = parse(key, value)?,
            "similarity" => self.similarity = value.parse()?,
            "pilot_policy" => {
                self.pilot_policy = match value {
                    "round-robin" => PilotPolicyKind::RoundRobin,
                    "random" => PilotPolicyKind::Random,
                    other => return Err(Error::config(format!("unknown pilot policy '{other}'"))),
                }
            }
            "schemes" | "scheme" => {
                self.schemes = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "batches" | "realizations" => self.batches = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "maxmin_tol" => self.maxmin_tol = parse(key, value)?,
            "weights" => self.weights = Some(parse_list(key, value)?),
            other => return Err(Error::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("side", self.side),
            ("p_max", self.p_max),
            ("eps", self.eps),
            ("delta", self.delta),
            ("maxmin_tol", self.maxmin_tol),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::config(format!("{k} must be positive, got {v}")));
        }
        if self.num_aps == 0 || self.num_ues == 0 || self.antennas == 0 {
            return Err(Error::config("num_aps, num_ues and antennas must be >= 1"));
        }
        if self.tau == 0 || self.tau >= self.tau_c {
            return Err(Error::config(format!(
                "need 0 < tau < tau_c, got {} and {}",
                self.tau, self.tau_c
            )));
        }
        if self.batches == 0 {
            return Err(Error::config("batches must be >= 1"));
        }
        if !(self.ap_height >= 0.0) {
            return Err(Error::config("ap_height must be >= 0"));
        }
        if self.eps > self.p_max {
            return Err(Error::config("eps must not exceed p_max"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("at least one scheme is required"));
        }
        if let KappaSetting::Fixed(k) = self.kappa {
            if !(k >= 0.0) {
                return Err(Error::config(format!("kappa must be >= 0, got {k}")));
            }
        } else if self.kappa_grid.is_empty() || self.calibration_batches == 0 {
            return Err(Error::config(
                "automatic kappa needs a grid and calibration batches",
            ));
        }
        for s in &self.schemes {
            if let AssocScheme::TopN(n) = s.assoc {
                if n > self.num_aps {
                    return Err(Error::config(format!("{s}: N exceeds the number of APs")));
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.num_ues || w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::config(
                    "weights need one non-negative value per user",
                ));
            }
        }
        self.large_scale_model().validate()
    }

    pub fn sigma2(&self) -> f64 {
        crate::dbm_to_watts(self.noise_dbm)
    }

    pub fn large_scale_model(&self) -> LargeScaleModel {
        let mut m = LargeScaleModel::of_kind(self.model);
        if let Some(s) = self.shadow_std_db {
            m.shadow_std_db = s;
        }
        if let Some(d) = self.decorrelation_m {
            m.decorrelation_m = d;
        }
        m
    }

    pub fn needs_clustering(&self) -> bool {
        self.schemes
            .iter()
            .any(|s| matches!(s.assoc, AssocScheme::Dappa | AssocScheme::TopMatched))
    }

    /// Resolved settings as `key = value` lines, in a fixed order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let model = self.large_scale_model();
        let mut kv = vec![
            ("num_aps", self.num_aps.to_string()),
            ("num_ues", self.num_ues.to_string()),
            ("antennas", self.antennas.to_string()),
            ("side", self.side.to_string()),
            ("ap_height", self.ap_height.to_string()),
            ("model", self.model.to_string()),
            ("shadow_std_db", model.shadow_std_db.to_string()),
            ("decorrelation_m", model.decorrelation_m.to_string()),
            ("tau", self.tau.to_string()),
            ("tau_c", self.tau_c.to_string()),
            ("noise_dbm", self.noise_dbm.to_string()),
            ("p_max", self.p_max.to_string()),
            (
                "kappa",
                match self.kappa {
                    KappaSetting::Auto => "auto".into(),
                    KappaSetting::Fixed(k) => k.to_string(),
                },
            ),
            ("kappa_grid", join(&self.kappa_grid)),
            ("calibration_batches", self.calibration_batches.to_string()),
            ("similarity", self.similarity.to_string()),
            (
                "pilot_policy",
                match self.pilot_policy {
                    PilotPolicyKind::RoundRobin => "round-robin".into(),
                    PilotPolicyKind::Random => "random".into(),
                },
            ),
            (
                "schemes",
                self.schemes
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("batches", self.batches.to_string()),
            ("seed", self.seed.to_string()),
            ("eps", self.eps.to_string()),
            ("delta", self.delta.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("maxmin_tol", self.maxmin_tol.to_string()),
        ];
        if let Some(w) = &self.weights {
            kv.push(("weights", join(w)));
        }
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
