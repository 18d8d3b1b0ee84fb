//! Effective configuration of one run, layered as defaults < config file <
//! `MEDREG_*` environment < command-line flags.
//!
//! Keys are flat `key = value` pairs. Training keys apply to the extraction
//! trainer; the same keys prefixed with `pretrain.` apply to summarization
//! pretraining. Environment variables map `MEDREG_PRETRAIN__LEARNING_RATE` to
//! `pretrain.learning_rate`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use medreg::corpus::{GenerationProfile, SplitFractions};
use medreg::evaluation::Variant;
use medreg::pgnet::ModelConfig;
use medreg::pipeline::AsrNoise;
use medreg::training::{parse_kv, TrainConfig};
use medreg::{Error, Result};
use serde::Serialize;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "MEDREG_CONFIG";
pub const ENV_PREFIX: &str = "MEDREG_";

/// Size class of the default hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small models that train in minutes on one CPU.
    Desk,
    /// Full-size models with the reference optimizer settings.
    Full,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(Error::config(format!("unknown preset `{other}` (expected desk or full)"))),
        }
    }
}

/// Where a key's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    File,
    Env,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Override {
    pub key: String,
    pub value: String,
    pub source: Source,
}

/// Corpus, split, evaluation and experiment settings outside the model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataConfig {
    pub n_transcripts: usize,
    /// Overrides the generator's MM, MN and NBM distractor rates together.
    pub distractor_rate: Option<f64>,
    pub split: SplitFractions,
    pub vocab_threshold: usize,
    pub pretrain_vocab_threshold: usize,
    pub augment: bool,
    /// Split scored by `evaluate`: `test` or `validation`.
    pub eval_split: String,
    pub baselines: bool,
    pub pipeline: bool,
    pub asr_substitution_rate: f64,
    pub asr_deletion_rate: f64,
    /// Noise draws per evaluation, seeded from the run seed upward.
    pub asr_runs: usize,
    pub ablation_sizes: Vec<usize>,
    pub ablation_runs: usize,
    pub ablation_variants: Vec<Variant>,
    /// Extra medication names, one per line.
    pub lexicon: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_transcripts: 500,
            distractor_rate: None,
            split: SplitFractions::default(),
            vocab_threshold: 1,
            pretrain_vocab_threshold: 1,
            augment: true,
            eval_split: "test".into(),
            baselines: true,
            pipeline: false,
            asr_substitution_rate: 0.1,
            asr_deletion_rate: 0.0,
            asr_runs: 3,
            ablation_sizes: vec![50, 100, 200, 400],
            ablation_runs: 3,
            ablation_variants: vec![Variant::ColdStart, Variant::Pretrained],
            lexicon: None,
        }
    }
}

fn parse<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("invalid value `{value}` for `{key}`: {e}")))
}

fn parse_list<T>(key: &str, value: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_variant(key: &str, value: &str) -> Result<Variant> {
    match value {
        "cold_start" => Ok(Variant::ColdStart),
        "pretrained" => Ok(Variant::Pretrained),
        other => Err(Error::config(format!("invalid value `{other}` for `{key}`"))),
    }
}

impl DataConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "n_transcripts" => self.n_transcripts = parse(key, value)?,
            "distractor_rate" => self.distractor_rate = Some(parse(key, value)?),
            "split.train" => self.split.train = parse(key, value)?,
            "split.validation" => self.split.validation = parse(key, value)?,
            "split.test" => self.split.test = parse(key, value)?,
            "split.holdout" => self.split.holdout = parse(key, value)?,
            "vocab_threshold" => self.vocab_threshold = parse(key, value)?,
            "pretrain.vocab_threshold" => self.pretrain_vocab_threshold = parse(key, value)?,
            "augment" => self.augment = parse(key, value)?,
            "eval_split" => self.eval_split = value.to_string(),
            "baselines" => self.baselines = parse(key, value)?,
            "pipeline" => self.pipeline = parse(key, value)?,
            "asr.substitution_rate" => self.asr_substitution_rate = parse(key, value)?,
            "asr.deletion_rate" => self.asr_deletion_rate = parse(key, value)?,
            "asr.runs" => self.asr_runs = parse(key, value)?,
            "ablation.sizes" => self.ablation_sizes = parse_list(key, value)?,
            "ablation.runs" => self.ablation_runs = parse(key, value)?,
            "ablation.variants" => {
                self.ablation_variants = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_variant(key, s))
                    .collect::<Result<_>>()?
            }
            "lexicon" => self.lexicon = Some(PathBuf::from(value)),
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn validate(&self) -> Result<()> {
        if self.n_transcripts == 0 {
            return Err(Error::config("n_transcripts must be positive"));
        }
        if let Some(r) = self.distractor_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("distractor_rate must be in [0, 1], got {r}")));
            }
        }
        if !matches!(self.eval_split.as_str(), "test" | "validation") {
            return Err(Error::config(format!(
                "eval_split must be test or validation, got `{}`",
                self.eval_split
            )));
        }
        if self.asr_runs == 0 || self.ablation_runs == 0 {
            return Err(Error::config("asr.runs and ablation.runs must be positive"));
        }
        if self.ablation_sizes.is_empty() || self.ablation_variants.is_empty() {
            return Err(Error::config("ablation.sizes and ablation.variants must be non-empty"));
        }
        self.asr_noise().validate()
    }

    pub fn asr_noise(&self) -> AsrNoise {
        AsrNoise {
            substitution_rate: self.asr_substitution_rate,
            deletion_rate: self.asr_deletion_rate,
        }
    }

    /// Generator profile with the distractor override applied.
    pub fn profile(&self) -> GenerationProfile {
        let mut p = GenerationProfile::default();
        if let Some(r) = self.distractor_rate {
            p.mm_rate = r;
            p.mn_rate = r;
            p.nbm_rate = r;
        }
        p
    }
}

/// Everything a command reads from configuration, plus the overrides that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub preset: Preset,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pretrain: TrainConfig,
    pub data: DataConfig,
    pub overrides: Vec<Override>,
}

impl Settings {
    pub fn defaults(preset: Preset) -> Self {
        let (model, train, pretrain) = match preset {
            Preset::Desk => (
                ModelConfig {
                    hidden: 32,
                    embed_dim: 32,
                    ..ModelConfig::default()
                },
                TrainConfig::desk_qa(),
                TrainConfig::desk_pretrain(),
            ),
            Preset::Full => (ModelConfig::default(), TrainConfig::qa(), TrainConfig::pretrain()),
        };
        Settings {
            preset,
            seed: 0,
            model,
            train,
            pretrain,
            data: DataConfig::default(),
            overrides: Vec::new(),
        }
    }

    /// Applies `overrides` in order over the defaults of the last `preset`
    /// among them.
    pub fn from_overrides(overrides: Vec<Override>) -> Result<Self> {
        let preset = match overrides.iter().rev().find(|o| o.key == "preset") {
            Some(o) => o.value.parse()?,
            None => Preset::Desk,
        };
        let mut s = Settings::defaults(preset);
        for o in &overrides {
            s.set(&o.key, &o.value)
                .map_err(|e| Error::config(format!("{e} (from {})", source_name(o.source))))?;
        }
        s.model.validate()?;
        s.train.validate()?;
        s.pretrain.validate()?;
        s.data.validate()?;
        s.overrides = overrides;
        Ok(s)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "preset" {
            return Ok(());
        }
        if key == "seed" {
            self.seed = parse(key, value)?;
            return Ok(());
        }
        if self.data.set(key, value)? || self.model.set(key, value)? {
            return Ok(());
        }
        if let Some(k) = key.strip_prefix("pretrain.") {
            if k != "seed" && self.pretrain.set(k, value)? {
                return Ok(());
            }
        } else if self.train.set(key, value)? {
            return Ok(());
        }
        Err(Error::config(format!("unknown key `{key}`")))
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.pretrain.clone()
        }
    }

    /// Seeds of repeated runs: the run seed and the ones after it.
    pub fn seeds(&self, runs: usize) -> Vec<u64> {
        (0..runs as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

fn source_name(s: Source) -> &'static str {
    match s {
        Source::File => "config file",
        Source::Env => "environment",
        Source::Flag => "flags",
    }
}

/// Overrides from a config file.
pub fn file_overrides(path: &Path) -> Result<Vec<Override>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_kv(&text)?
        .into_iter()
        .map(|(key, value)| Override {
            key,
            value,
            source: Source::File,
        })
        .collect())
}

/// Overrides from `MEDREG_*` variables other than [`CONFIG_ENV`], sorted by
/// key.
pub fn env_overrides<I>(vars: I) -> Vec<Override>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut out: Vec<Override> = vars
        .into_iter()
        .filter(|(k, _)| k != CONFIG_ENV)
        .filter_map(|(k, v)| {
            let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase().replace("__", ".");
            Some(Override {
                key,
                value: v,
                source: Source::Env,
            })
        })
        .collect();
    out.sort_by(|a, b| a.key.cmp(&b.key));
    out
}

/// Parses a `key=value` flag.
pub fn flag_override(text: &str) -> std::result::Result<Override, String> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{text}`"))?;
    Ok(Override {
        key: k.trim().to_string(),
        value: v.trim().to_string(),
        source: Source::Flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use medreg::embeddings::EmbeddingKind;
    use medreg::pgnet::Architecture;

    fn ov(key: &str, value: &str, source: Source) -> Override {
        Override {
            key: key.into(),
            value: value.into(),
            source,
        }
    }

    #[test]
    fn later_layers_win() {
        let s = Settings::from_overrides(vec![
            ov("learning_rate", "0.2", Source::File),
            ov("hidden", "16", Source::File),
            ov("learning_rate", "0.3", Source::Env),
            ov("learning_rate", "0.4", Source::Flag),
        ])
        .unwrap();
        assert_eq!(s.train.learning_rate, 0.4);
        assert_eq!(s.model.hidden, 16);
        assert_eq!(s.overrides.len(), 4);
    }

    #[test]
    fn pretrain_prefix_and_presets() {
        let s = Settings::from_overrides(vec![
            ov("preset", "full", Source::File),
            ov("pretrain.learning_rate", "0.02", Source::Flag),
            ov("model", "md", Source::Flag),
            ov("embedding", "pseudo", Source::Flag),
        ])
        .unwrap();
        assert_eq!(s.model.hidden, 128);
        assert_eq!(s.pretrain.learning_rate, 0.02);
        assert_eq!(s.train.learning_rate, TrainConfig::qa().learning_rate);
        assert_eq!(s.model.architecture, Architecture::Md);
        assert_eq!(s.model.embedding, EmbeddingKind::Pseudo);
        assert_eq!(Settings::from_overrides(vec![]).unwrap().model.hidden, 32);
    }

    #[test]
    fn violations_are_config_errors() {
        for (k, v) in [
            ("learnin_rate", "0.1"),
            ("hidden", "0"),
            ("dropout", "1.5"),
            ("eval_split", "train"),
            ("asr.substitution_rate", "2"),
            ("ablation.variants", "warm"),
            ("pretrain.seed", "3"),
        ] {
            let e = Settings::from_overrides(vec![ov(k, v, Source::Flag)]).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{k}: {e}");
        }
    }

    #[test]
    fn env_mapping() {
        let o = env_overrides([
            ("MEDREG_PRETRAIN__LEARNING_RATE".to_string(), "0.5".to_string()),
            ("MEDREG_CONFIG".to_string(), "x".to_string()),
            ("MEDREG_HIDDEN".to_string(), "8".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ]);
        assert_eq!(o, vec![ov("hidden", "8", Source::Env), ov("pretrain.learning_rate", "0.5", Source::Env)]);
    }

    #[test]
    fn seeds_flow_into_training() {
        let s = Settings::from_overrides(vec![ov("seed", "7", Source::Flag)]).unwrap();
        assert_eq!(s.train_config().seed, 7);
        assert_eq!(s.pretrain_config().seed, 7);
        assert_eq!(s.seeds(3), vec![7, 8, 9]);
    }

    #[test]
    fn distractor_override() {
        let s = Settings::from_overrides(vec![ov("distractor_rate", "0.4", Source::File)]).unwrap();
        let p = s.data.profile();
        assert_eq!((p.mm_rate, p.mn_rate, p.nbm_rate), (0.4, 0.4, 0.4));
    }
}
