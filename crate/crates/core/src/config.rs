//! Experiment configuration: a `key = value` file whose entries can each be
//! overridden on the command line.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use the long
//! flag names with `-` or `_` interchangeably.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ocrp::CrpParams;
use crate::partition::Composition;

/// Every tunable parameter of every subcommand. Unset fields fall back to
/// subcommand defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub alpha: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub coarse_alpha: Option<f64>,
    pub coarse_theta1: Option<f64>,
    pub coarse_theta2: Option<f64>,
    pub gamma: Option<f64>,
    pub n: Option<u64>,
    pub resolution: Option<u64>,
    pub horizon: Option<f64>,
    pub time: Option<f64>,
    pub cap: Option<f64>,
    pub replicates: Option<u64>,
    pub seed: Option<u64>,
    pub from: Option<Composition>,
    pub out: Option<PathBuf>,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Config {
        line,
        message: format!("bad value {value:?} for {key}: {e}"),
    })
}

impl ExperimentConfig {
    /// Parses configuration text. Errors carry the 1-based line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected key = value, got {content:?}"),
            })?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            cfg.set(line, &key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let duplicate = || Error::Config {
            line,
            message: format!("duplicate key {key}"),
        };
        macro_rules! assign {
            ($field:ident) => {{
                if self.$field.is_some() {
                    return Err(duplicate());
                }
                self.$field = Some(parse_value(line, key, value)?);
            }};
        }
        match key {
            "alpha" => assign!(alpha),
            "theta1" => assign!(theta1),
            "theta2" => assign!(theta2),
            "coarse_alpha" => assign!(coarse_alpha),
            "coarse_theta1" => assign!(coarse_theta1),
            "coarse_theta2" => assign!(coarse_theta2),
            "gamma" => assign!(gamma),
            "n" => assign!(n),
            "resolution" => assign!(resolution),
            "horizon" => assign!(horizon),
            "time" => assign!(time),
            "cap" => assign!(cap),
            "replicates" => assign!(replicates),
            "seed" => assign!(seed),
            "from" => assign!(from),
            "out" => assign!(out),
            _ => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key {key}"),
                })
            }
        }
        Ok(())
    }

    /// Fields set in `overrides` replace those in `self`.
    pub fn merged(self, overrides: ExperimentConfig) -> Self {
        Self {
            alpha: overrides.alpha.or(self.alpha),
            theta1: overrides.theta1.or(self.theta1),
            theta2: overrides.theta2.or(self.theta2),
            coarse_alpha: overrides.coarse_alpha.or(self.coarse_alpha),
            coarse_theta1: overrides.coarse_theta1.or(self.coarse_theta1),
            coarse_theta2: overrides.coarse_theta2.or(self.coarse_theta2),
            gamma: overrides.gamma.or(self.gamma),
            n: overrides.n.or(self.n),
            resolution: overrides.resolution.or(self.resolution),
            horizon: overrides.horizon.or(self.horizon),
            time: overrides.time.or(self.time),
            cap: overrides.cap.or(self.cap),
            replicates: overrides.replicates.or(self.replicates),
            seed: overrides.seed.or(self.seed),
            from: overrides.from.or(self.from),
            out: overrides.out.or(self.out),
        }
    }

    /// Seating parameters, with each missing entry taken from `default`.
    pub fn params(&self, default: (f64, f64, f64)) -> Result<CrpParams> {
        CrpParams::new(
            self.alpha.unwrap_or(default.0),
            self.theta1.unwrap_or(default.1),
            self.theta2.unwrap_or(default.2),
        )
    }

    /// Coarse seating parameters, with each missing entry taken from
    /// `default`.
    pub fn coarse_params(&self, default: (f64, f64, f64)) -> Result<CrpParams> {
        CrpParams::new(
            self.coarse_alpha.unwrap_or(default.0),
            self.coarse_theta1.unwrap_or(default.1),
            self.coarse_theta2.unwrap_or(default.2),
        )
    }
}
