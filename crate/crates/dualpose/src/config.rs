//! Run configuration: line-based `key = value` files with `#` comments,
//! strict key validation, and documented defaults.

use std::path::Path;

use crate::config_err;
use crate::error::Result;
use crate::pipeline::ModelDims;
use crate::relnet::{BranchConfig, BranchVariant};
use crate::synth::SceneConfig;
use crate::tensor::adam::AdamHyper;

#[derive(Debug, Clone)]
pub struct RunConfig {
    // model dims
    pub c: usize,
    pub d: usize,
    pub k: usize,
    pub height: usize,
    pub width: usize,
    // branch structure
    pub branch: BranchVariant,
    pub use_adfm_in_dim: bool,
    pub use_adfm_in_decoder: bool,
    // loss
    pub alpha: f64,
    // optimizer
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    // schedule
    pub steps: usize,
    /// Fractions of `steps` at which the learning rate divides by ten.
    pub lr_drops: Vec<f64>,
    // data
    pub n_max: usize,
    pub overlap_prob: f64,
    pub train_seeds: usize,
    pub eval_seeds: usize,
    // reproducibility
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            c: 16,
            d: 8,
            k: 5,
            height: 64,
            width: 64,
            branch: BranchVariant::Full,
            use_adfm_in_dim: true,
            use_adfm_in_decoder: true,
            alpha: 1.0,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 5000,
            lr_drops: vec![1.0 / 3.0, 2.0 / 3.0],
            n_max: 4,
            overlap_prob: 0.5,
            train_seeds: 2000,
            eval_seeds: 200,
            seed: 0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err!("line {line}: key '{key}' has malformed value '{value}'"))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_err!("line {line}: key '{key}' expects true or false, got '{value}'")),
    }
}

impl RunConfig {
    /// Parse a config file; absent keys fall back to defaults, unknown keys
    /// and malformed values are rejected with the key and line number.
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err!("cannot read config {}: {e}", path.display()))?;
        Self::from_str_checked(&text)
    }

    pub fn from_str_checked(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| config_err!("line {line}: expected 'key = value', got '{raw}'"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "c" => cfg.c = parse_value(key, value, line)?,
                "d" => cfg.d = parse_value(key, value, line)?,
                "k" => cfg.k = parse_value(key, value, line)?,
                "height" => cfg.height = parse_value(key, value, line)?,
                "width" => cfg.width = parse_value(key, value, line)?,
                "branch" => {
                    cfg.branch = BranchVariant::parse(value)
                        .map_err(|e| config_err!("line {line}: {e}"))?
                }
                "use_adfm_in_dim" => cfg.use_adfm_in_dim = parse_bool(key, value, line)?,
                "use_adfm_in_decoder" => cfg.use_adfm_in_decoder = parse_bool(key, value, line)?,
                "alpha" => cfg.alpha = parse_value(key, value, line)?,
                "lr" => cfg.lr = parse_value(key, value, line)?,
                "beta1" => cfg.beta1 = parse_value(key, value, line)?,
                "beta2" => cfg.beta2 = parse_value(key, value, line)?,
                "epsilon" => cfg.epsilon = parse_value(key, value, line)?,
                "steps" => cfg.steps = parse_value(key, value, line)?,
                "lr_drops" => {
                    cfg.lr_drops = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| parse_value::<f64>(key, s.trim(), line))
                        .collect::<Result<Vec<f64>>>()?
                }
                "n_max" => cfg.n_max = parse_value(key, value, line)?,
                "overlap_prob" => cfg.overlap_prob = parse_value(key, value, line)?,
                "train_seeds" => cfg.train_seeds = parse_value(key, value, line)?,
                "eval_seeds" => cfg.eval_seeds = parse_value(key, value, line)?,
                "seed" => cfg.seed = parse_value(key, value, line)?,
                _ => return Err(config_err!("line {line}: unknown key '{key}'")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_dims().validate()?;
        if self.alpha <= 0.0 {
            return Err(config_err!("alpha must be positive, got {}", self.alpha));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(config_err!("lr must be positive, got {}", self.lr));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(config_err!("{name} must lie in [0,1), got {beta}"));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(config_err!("epsilon must be positive, got {}", self.epsilon));
        }
        for &frac in &self.lr_drops {
            if !(0.0..1.0).contains(&frac) {
                return Err(config_err!("lr_drops fractions must lie in [0,1), got {frac}"));
            }
        }
        if self.n_max == 0 || self.n_max > 6 {
            return Err(config_err!("n_max must lie in 1..=6, got {}", self.n_max));
        }
        if !(0.0..=1.0).contains(&self.overlap_prob) {
            return Err(config_err!("overlap_prob must lie in [0,1], got {}", self.overlap_prob));
        }
        if self.train_seeds == 0 || self.eval_seeds == 0 {
            return Err(config_err!(
                "train_seeds and eval_seeds must be positive, got {} / {}",
                self.train_seeds,
                self.eval_seeds
            ));
        }
        Ok(())
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims { c: self.c, d: self.d, k: self.k, input_h: self.height, input_w: self.width }
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            n_max: self.n_max,
            height: self.height,
            width: self.width,
            overlap_prob: self.overlap_prob,
            joints: self.k,
        }
    }

    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper { lr: self.lr, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    pub fn branch_config(&self) -> BranchConfig {
        BranchConfig {
            variant: self.branch,
            adfm_in_dim: self.use_adfm_in_dim,
            adfm_in_decoder: self.use_adfm_in_decoder,
        }
    }

    /// Deterministic scene seed for dataset index `idx`. Training scenes use
    /// indices below `train_seeds`, held-out scenes the range above it.
    pub fn scene_seed(&self, idx: usize) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(idx as u64)
    }

    pub fn eval_scene_seed(&self, idx: usize) -> u64 {
        self.scene_seed(self.train_seeds + idx)
    }

    /// Step indices at which the learning rate divides by ten.
    pub fn lr_drop_steps(&self) -> Vec<usize> {
        let mut drops: Vec<usize> =
            self.lr_drops.iter().map(|f| (f * self.steps as f64).floor() as usize).collect();
        drops.sort_unstable();
        drops.dedup();
        drops
    }

    /// Canonical `key = value` rendering of every field, stable across runs.
    pub fn canonical_text(&self) -> String {
        let drops =
            self.lr_drops.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "c = {}\nd = {}\nk = {}\nheight = {}\nwidth = {}\nbranch = {}\n\
             use_adfm_in_dim = {}\nuse_adfm_in_decoder = {}\nalpha = {}\nlr = {}\n\
             beta1 = {}\nbeta2 = {}\nepsilon = {}\nsteps = {}\nlr_drops = {}\n\
             n_max = {}\noverlap_prob = {}\ntrain_seeds = {}\neval_seeds = {}\nseed = {}\n",
            self.c,
            self.d,
            self.k,
            self.height,
            self.width,
            self.branch.name(),
            self.use_adfm_in_dim,
            self.use_adfm_in_decoder,
            self.alpha,
            self.lr,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.steps,
            drops,
            self.n_max,
            self.overlap_prob,
            self.train_seeds,
            self.eval_seeds,
            self.seed,
        )
    }
}
