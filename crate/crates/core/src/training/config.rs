//! Plain `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are matched
//! exactly; unknown keys are errors so typos never silently fall back to
//! defaults.

use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgnet::ModelConfig;

/// Parses `key = value` lines in order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value, got `{line}`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::config(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("invalid value `{value}` for `{key}`: {e}")))
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Drop probability on input and decoder-input embeddings.
    pub dropout: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Iterations between validation passes.
    pub eval_every: usize,
    /// Validation passes without improvement before stopping.
    pub patience: usize,
    /// Starting value of every Adagrad accumulator.
    pub initial_accumulator: f64,
    /// Validation examples scored per pass; 0 scores all of them.
    pub eval_limit: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::qa()
    }
}

impl TrainConfig {
    /// Reference QA hyperparameters.
    pub fn qa() -> Self {
        TrainConfig {
            learning_rate: 0.0015,
            dropout: 0.5,
            clip_norm: 2.0,
            batch_size: 8,
            max_iterations: 20_000,
            eval_every: 200,
            patience: 5,
            initial_accumulator: 0.1,
            eval_limit: 0,
            seed: 0,
        }
    }

    /// Reference summarization-pretraining hyperparameters.
    pub fn pretrain() -> Self {
        TrainConfig {
            learning_rate: 0.015,
            ..Self::qa()
        }
    }

    /// QA settings that converge on a single core within minutes.
    pub fn desk_qa() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            dropout: 0.0,
            max_iterations: 30_000,
            eval_every: 200,
            patience: 20,
            eval_limit: 200,
            ..Self::qa()
        }
    }

    /// Pretraining settings for desk-scale corpora.
    pub fn desk_pretrain() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            dropout: 0.1,
            max_iterations: 6_000,
            eval_every: 200,
            eval_limit: 200,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive_f = [
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("initial_accumulator", self.initial_accumulator),
        ];
        for (k, v) in positive_f {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{k} must be positive, got {v}")));
            }
        }
        let positive_u = [
            ("batch_size", self.batch_size),
            ("max_iterations", self.max_iterations),
            ("eval_every", self.eval_every),
            ("patience", self.patience),
        ];
        for (k, v) in positive_u {
            if v == 0 {
                return Err(Error::config(format!("{k} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Sets one field by key. Returns `Ok(false)` for keys this struct does
    /// not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "clip_norm" => self.clip_norm = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "max_iterations" => self.max_iterations = parse_value(key, value)?,
            "eval_every" => self.eval_every = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "initial_accumulator" => self.initial_accumulator = parse_value(key, value)?,
            "eval_limit" => self.eval_limit = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in parse_kv(text)? {
            if !c.set(&k, &v)? {
                return Err(Error::config(format!("unknown key `{k}`")));
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "learning_rate = {}\ndropout = {}\nclip_norm = {}\nbatch_size = {}\nmax_iterations = {}\n\
             eval_every = {}\npatience = {}\ninitial_accumulator = {}\neval_limit = {}\nseed = {}\n",
            self.learning_rate,
            self.dropout,
            self.clip_norm,
            self.batch_size,
            self.max_iterations,
            self.eval_every,
            self.patience,
            self.initial_accumulator,
            self.eval_limit,
            self.seed
        )
    }
}

impl ModelConfig {
    /// Sets one field by key; `Ok(false)` for keys this struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "model" | "architecture" => self.architecture = parse_value(key, value)?,
            "hidden" => self.hidden = parse_value(key, value)?,
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "embedding" => self.embedding = parse_value(key, value)?,
            "store_layers" => self.store_layers = parse_value(key, value)?,
            "pseudo_seed" => self.pseudo_seed = parse_value(key, value)?,
            "max_encoder_steps" => self.max_encoder_steps = parse_value(key, value)?,
            "dosage_steps" => self.dosage_steps = parse_value(key, value)?,
            "frequency_steps" => self.frequency_steps = parse_value(key, value)?,
            "summary_steps" => self.summary_steps = parse_value(key, value)?,
            "init_range" => self.init_range = parse_value(key, value)?,
            "embedding_init_range" => self.embedding_init_range = parse_value(key, value)?,
            "beam_width" => self.beam_width = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let c = TrainConfig {
            learning_rate: 0.25,
            seed: 9,
            ..TrainConfig::desk_qa()
        };
        assert_eq!(TrainConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn comments_and_errors() {
        let c = TrainConfig::from_kv("# lr\n\nlearning_rate = 0.5\n").unwrap();
        assert_eq!(c.learning_rate, 0.5);
        assert!(TrainConfig::from_kv("lr = 0.5").is_err());
        assert!(TrainConfig::from_kv("learning_rate 0.5").is_err());
        assert!(TrainConfig::from_kv("batch_size = -1").is_err());
        assert!(TrainConfig::from_kv("dropout = 1.0").is_err());
    }

    #[test]
    fn reference_values() {
        let qa = TrainConfig::qa();
        assert_eq!((qa.learning_rate, qa.dropout, qa.clip_norm, qa.batch_size), (0.0015, 0.5, 2.0, 8));
        assert_eq!(TrainConfig::pretrain().learning_rate, 0.015);
        assert_eq!(qa.patience, 5);
        assert_eq!(qa.eval_every, 200);
    }

    #[test]
    fn model_keys() {
        let mut m = ModelConfig::default();
        assert!(m.set("model", "md").unwrap());
        assert!(m.set("embedding", "pseudo").unwrap());
        assert!(!m.set("learning_rate", "1").unwrap());
        assert!(m.set("hidden", "x").is_err());
        assert_eq!(m.architecture, crate::pgnet::Architecture::Md);
    }
}
