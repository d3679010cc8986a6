//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown or repeated keys are errors. Relative paths are resolved against
//! the directory holding the config file.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rfdeg_core::fgdm::{AenetConfig, FgdmTrainConfig};
use rfdeg_core::resample::{DtlrSpec, FilterKind};
use rfdeg_core::rfdm::{RfdmTrainConfig, VelocityNetConfig};
use rfdeg_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// HR images used for pair synthesis.
    pub hr_dir: PathBuf,
    /// Unpaired real LR images used for training.
    pub lr_dir: PathBuf,
    /// Aligned held-out HR images and their real LR counterparts (same file
    /// names), used by the studies.
    pub heldout_hr_dir: PathBuf,
    pub heldout_lr_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Downscale factor from HR to LR.
    pub scale: usize,
    pub dtlr: DtlrSpec,
    pub aenet: AenetConfig,
    pub fgdm_train: FgdmTrainConfig,
    pub vnet: VelocityNetConfig,
    pub rfdm_train: RfdmTrainConfig,
    /// Euler steps at synthesis.
    pub flow_steps: usize,
    /// Retraining length per point of the lambda study.
    pub lambda_study_steps: usize,
    /// Largest iteration count in the DT-LR and filter studies.
    pub study_max_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hr_dir: "corpus/hr".into(),
            lr_dir: "corpus/lr".into(),
            heldout_hr_dir: "corpus/heldout/hr".into(),
            heldout_lr_dir: "corpus/heldout/lr".into(),
            out_dir: "run".into(),
            seed: 0,
            scale: 4,
            dtlr: DtlrSpec::default(),
            aenet: AenetConfig::default(),
            fgdm_train: FgdmTrainConfig::default(),
            vnet: VelocityNetConfig::default(),
            rfdm_train: RfdmTrainConfig::default(),
            flow_steps: 20,
            lambda_study_steps: 500,
            study_max_iters: 10,
        }
    }
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| format!("invalid value `{value}`: {e}"))
}

impl RunConfig {
    /// Desk-scale settings: the default schedule with narrower networks so a
    /// full train fits a single-core budget.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.aenet.base_channels = 16;
        cfg.vnet.base_channels = 16;
        cfg
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "hr_dir" => self.hr_dir = value.into(),
            "lr_dir" => self.lr_dir = value.into(),
            "heldout_hr_dir" => self.heldout_hr_dir = value.into(),
            "heldout_lr_dir" => self.heldout_lr_dir = value.into(),
            "out_dir" => self.out_dir = value.into(),
            "seed" => self.seed = parse(value)?,
            "scale" => self.scale = parse(value)?,
            "dtlr_iterations" => self.dtlr.iterations = parse(value)?,
            "dtlr_scale" => self.dtlr.scale = parse(value)?,
            "dtlr_filter" => self.dtlr.filter = parse::<FilterKind>(value)?,
            "fgdm_base_channels" => self.aenet.base_channels = parse(value)?,
            "fgdm_residual_blocks" => self.aenet.residual_blocks = parse(value)?,
            "fgdm_kernel_size" => self.aenet.kernel_size = parse(value)?,
            "fgdm_frequency_channel" => self.aenet.frequency_channel = parse(value)?,
            "fgdm_steps" => self.fgdm_train.steps = parse(value)?,
            "fgdm_batch" => self.fgdm_train.batch = parse(value)?,
            "fgdm_learning_rate" => self.fgdm_train.learning_rate = parse(value)?,
            "fgdm_patch" => self.fgdm_train.patch = parse(value)?,
            "rfdm_base_channels" => self.vnet.base_channels = parse(value)?,
            "rfdm_embed_dim" => self.vnet.embed_dim = parse(value)?,
            "rfdm_steps" => self.rfdm_train.steps = parse(value)?,
            "rfdm_batch" => self.rfdm_train.batch = parse(value)?,
            "rfdm_learning_rate" => self.rfdm_train.learning_rate = parse(value)?,
            "rfdm_patch" => self.rfdm_train.patch = parse(value)?,
            "rfdm_lambda" => self.rfdm_train.lambda = parse(value)?,
            "flow_steps" => self.flow_steps = parse(value)?,
            "lambda_study_steps" => self.lambda_study_steps = parse(value)?,
            "study_max_iters" => self.study_max_iters = parse(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Path| p.display().to_string();
        vec![
            ("hr_dir", path(&self.hr_dir)),
            ("lr_dir", path(&self.lr_dir)),
            ("heldout_hr_dir", path(&self.heldout_hr_dir)),
            ("heldout_lr_dir", path(&self.heldout_lr_dir)),
            ("out_dir", path(&self.out_dir)),
            ("seed", self.seed.to_string()),
            ("scale", self.scale.to_string()),
            ("dtlr_iterations", self.dtlr.iterations.to_string()),
            ("dtlr_scale", self.dtlr.scale.to_string()),
            ("dtlr_filter", self.dtlr.filter.name().to_string()),
            ("fgdm_base_channels", self.aenet.base_channels.to_string()),
            ("fgdm_residual_blocks", self.aenet.residual_blocks.to_string()),
            ("fgdm_kernel_size", self.aenet.kernel_size.to_string()),
            ("fgdm_frequency_channel", self.aenet.frequency_channel.to_string()),
            ("fgdm_steps", self.fgdm_train.steps.to_string()),
            ("fgdm_batch", self.fgdm_train.batch.to_string()),
            ("fgdm_learning_rate", self.fgdm_train.learning_rate.to_string()),
            ("fgdm_patch", self.fgdm_train.patch.to_string()),
            ("rfdm_base_channels", self.vnet.base_channels.to_string()),
            ("rfdm_embed_dim", self.vnet.embed_dim.to_string()),
            ("rfdm_steps", self.rfdm_train.steps.to_string()),
            ("rfdm_batch", self.rfdm_train.batch.to_string()),
            ("rfdm_learning_rate", self.rfdm_train.learning_rate.to_string()),
            ("rfdm_patch", self.rfdm_train.patch.to_string()),
            ("rfdm_lambda", self.rfdm_train.lambda.to_string()),
            ("flow_steps", self.flow_steps.to_string()),
            ("lambda_study_steps", self.lambda_study_steps.to_string()),
            ("study_max_iters", self.study_max_iters.to_string()),
        ]
    }

    /// Parses config text over the defaults. Paths are kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Config { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(err(format!("`{key}` has no value")));
            }
            if seen.iter().any(|k| k == key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(err)?;
            seen.push(key.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config {
                line: 0,
                msg: format!("{}: no such config file", path.display()),
            },
            _ => Error::Config {
                line: 0,
                msg: format!("{}: {e}", path.display()),
            },
        })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.hr_dir,
            &mut self.lr_dir,
            &mut self.heldout_hr_dir,
            &mut self.heldout_lr_dir,
            &mut self.out_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        if self.scale < 2 {
            return bad(format!("scale {} must be at least 2", self.scale));
        }
        if self.dtlr.scale < 2 {
            return bad(format!("dtlr_scale {} must be at least 2", self.dtlr.scale));
        }
        if self.flow_steps == 0 {
            return bad("flow_steps must be at least 1".into());
        }
        if !(self.rfdm_train.lambda >= 0.0) {
            return bad(format!("rfdm_lambda {} must be nonnegative", self.rfdm_train.lambda));
        }
        for (name, lr) in [
            ("fgdm_learning_rate", self.fgdm_train.learning_rate),
            ("rfdm_learning_rate", self.rfdm_train.learning_rate),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} {lr} must be positive"));
            }
        }
        if let Err(e) = self.aenet.validate() {
            return bad(e.to_string());
        }
        Ok(())
    }
}
