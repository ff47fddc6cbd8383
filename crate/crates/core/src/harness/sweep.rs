use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

use super::config::{ExperimentConfig, KappaSetting};
use super::experiment::{run_experiment, ExperimentResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Users,
    Tau,
    Aps,
    Kappa,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U" | "users" | "num_ues" => Ok(SweepAxis::Users),
            "tau" => Ok(SweepAxis::Tau),
            "L" | "aps" | "num_aps" => Ok(SweepAxis::Aps),
            "kappa" => Ok(SweepAxis::Kappa),
            other => Err(Error::config(format!(
                "unknown sweep axis '{other}' (U|tau|L|kappa)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Users => "U",
            SweepAxis::Tau => "tau",
            SweepAxis::Aps => "L",
            SweepAxis::Kappa => "kappa",
        })
    }
}

impl SweepAxis {
    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::config(format!(
                    "{self} needs a positive integer, got {value}"
                )))
            }
        };
        match self {
            SweepAxis::Users => cfg.num_ues = count()?,
            SweepAxis::Tau => cfg.tau = count()?,
            SweepAxis::Aps => cfg.num_aps = count()?,
            SweepAxis::Kappa => cfg.kappa = KappaSetting::Fixed(value),
        }
        Ok(())
    }
}

/// One point of a sweep. A failed point keeps its error message.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub axis: Option<SweepAxis>,
    pub value: Option<f64>,
    pub outcome: std::result::Result<ExperimentResult, String>,
}

impl SweepPoint {
    pub fn single(result: ExperimentResult) -> Self {
        Self {
            axis: None,
            value: None,
            outcome: Ok(result),
        }
    }
}

/// Runs the experiment once per value, all with the base seed.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::config("a sweep needs at least one value"));
    }
    Ok(values
        .iter()
        .map(|&v| {
            let mut point = cfg.clone();
            let outcome = axis
                .apply(&mut point, v)
                .and_then(|_| run_experiment(&point))
                .map_err(|e| e.to_string());
            SweepPoint {
                axis: Some(axis),
                value: Some(v),
                outcome,
            }
        })
        .collect())
}
