//! Line-oriented `key = value` run configuration shared by the command
//! line front end. Command-line flags override file values; unknown keys
//! are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::fmt_f64;
use crate::kinfit::MlesacConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub noise_sigma: f64,
    pub outlier_rate: f64,
    pub mlesac_sigma: f64,
    pub hypotheses: usize,
    pub em_steps: usize,
    pub step: f64,
    pub iters: usize,
    pub threads: usize,
    pub plane_threshold: f64,
    pub torque_threshold: f64,
    pub cloud: Option<PathBuf>,
    pub boxes: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            noise_sigma: 0.005,
            outlier_rate: 0.05,
            mlesac_sigma: 0.005,
            hypotheses: 200,
            em_steps: 10,
            step: 0.03,
            iters: 40,
            threads: 1,
            plane_threshold: 0.01,
            torque_threshold: crate::unlatch::DEFAULT_TORQUE_THRESHOLD,
            cloud: None,
            boxes: None,
            trajectory: None,
            store: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(format!("outlier_rate {} outside [0,1]", self.outlier_rate));
        }
        if self.noise_sigma < 0.0 {
            return Err("noise_sigma must be nonnegative".into());
        }
        for (name, value) in [
            ("mlesac_sigma", self.mlesac_sigma),
            ("step", self.step),
            ("plane_threshold", self.plane_threshold),
            ("torque_threshold", self.torque_threshold),
        ] {
            if value <= 0.0 {
                return Err(format!("{name} must be positive"));
            }
        }
        for (name, value) in [
            ("hypotheses", self.hypotheses),
            ("em_steps", self.em_steps),
            ("iters", self.iters),
            ("threads", self.threads),
        ] {
            if value == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn mlesac(&self, outlier_volume: Option<f64>) -> MlesacConfig {
        MlesacConfig {
            hypotheses: self.hypotheses,
            sigma: self.mlesac_sigma,
            outlier_volume,
            em_steps: self.em_steps,
            seed: self.seed,
            reestimate_sigma: false,
        }
    }

    pub fn print(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("noise_sigma = {}\n", fmt_f64(self.noise_sigma)));
        out.push_str(&format!("outlier_rate = {}\n", fmt_f64(self.outlier_rate)));
        out.push_str(&format!("mlesac_sigma = {}\n", fmt_f64(self.mlesac_sigma)));
        out.push_str(&format!("hypotheses = {}\n", self.hypotheses));
        out.push_str(&format!("em_steps = {}\n", self.em_steps));
        out.push_str(&format!("step = {}\n", fmt_f64(self.step)));
        out.push_str(&format!("iters = {}\n", self.iters));
        out.push_str(&format!("threads = {}\n", self.threads));
        out.push_str(&format!("plane_threshold = {}\n", fmt_f64(self.plane_threshold)));
        out.push_str(&format!("torque_threshold = {}\n", fmt_f64(self.torque_threshold)));
        for (key, path) in [
            ("cloud", &self.cloud),
            ("boxes", &self.boxes),
            ("trajectory", &self.trajectory),
            ("store", &self.store),
        ] {
            if let Some(p) = path {
                out.push_str(&format!("{key} = {}\n", p.display()));
            }
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ConfigError::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64, ConfigError> {
                v.parse().map_err(|_| err(format!("bad number {v:?}")))
            };
            let int = |v: &str| -> Result<usize, ConfigError> {
                v.parse().map_err(|_| err(format!("bad integer {v:?}")))
            };
            match key {
                "seed" => cfg.seed = value.parse().map_err(|_| err(format!("bad integer {value:?}")))?,
                "noise_sigma" => cfg.noise_sigma = num(value)?,
                "outlier_rate" => cfg.outlier_rate = num(value)?,
                "mlesac_sigma" => cfg.mlesac_sigma = num(value)?,
                "hypotheses" => cfg.hypotheses = int(value)?,
                "em_steps" => cfg.em_steps = int(value)?,
                "step" => cfg.step = num(value)?,
                "iters" => cfg.iters = int(value)?,
                "threads" => cfg.threads = int(value)?,
                "plane_threshold" => cfg.plane_threshold = num(value)?,
                "torque_threshold" => cfg.torque_threshold = num(value)?,
                "cloud" => cfg.cloud = Some(PathBuf::from(value)),
                "boxes" => cfg.boxes = Some(PathBuf::from(value)),
                "trajectory" => cfg.trajectory = Some(PathBuf::from(value)),
                "store" => cfg.store = Some(PathBuf::from(value)),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate().map_err(|msg| ConfigError::Parse {
            path: origin.to_string(),
            line: 0,
            msg,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }
}
