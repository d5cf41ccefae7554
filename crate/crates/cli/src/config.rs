use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use recfollow::corpus::SyntheticConfig;
use recfollow::embed::SkipGramConfig;
use recfollow::han::HanConfig;
use recfollow::ner::NerConfig;
use recfollow::text::Segmenter;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{fail, CmdResult, WithCode, EXIT_CONFIG};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub reports: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub sentence_model: Option<PathBuf>,
    pub ner_model: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// One abbreviation per line; replaces the built-in list.
    pub abbreviations: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdherenceConfig {
    pub grace_days: u32,
    /// Defaults to the date of the latest report.
    pub dataset_end: Option<NaiveDate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Reports read, processed and written per batch.
    pub batch_size: usize,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { batch_size: 256, threads: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub generate: SyntheticConfig,
    pub embeddings: SkipGramConfig,
    pub han: HanConfig,
    pub ner: NerConfig,
    pub adherence: AdherenceConfig,
    pub extract: ExtractConfig,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> CmdResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| fail(EXIT_CONFIG, format!("reading config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| fail(EXIT_CONFIG, format!("config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> CmdResult<u64> {
        self.seed.ok_or_else(|| fail(EXIT_CONFIG, "no seed: pass --seed or set `seed` in the config"))
    }

    /// SHA-256 of the effective settings, paths excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn segmenter(&self) -> CmdResult<Segmenter> {
        match &self.paths.abbreviations {
            None => Ok(Segmenter::default()),
            Some(p) => {
                let f = File::open(p).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", p.display())))?;
                Segmenter::from_reader(BufReader::new(f)).code(EXIT_CONFIG)
            }
        }
    }
}

/// The flag value, else the config value; the path must exist.
pub fn input_path(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> CmdResult<PathBuf> {
    let path = flag.or_else(|| config.clone()).ok_or_else(|| fail(EXIT_CONFIG, format!("missing {what} path")))?;
    if !path.exists() {
        return Err(fail(EXIT_CONFIG, format!("{what} {} does not exist", path.display())));
    }
    Ok(path)
}

pub fn output_path(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> CmdResult<PathBuf> {
    flag.or_else(|| config.clone()).ok_or_else(|| fail(EXIT_CONFIG, format!("missing {what} path")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let text = include_str!("../../../config.example.toml");
        let cfg: PipelineConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, Some(42));
        assert_eq!(cfg.han.word_hidden, 300);
        assert_eq!(cfg.ner.token_hidden, 100);
        assert_eq!(cfg.embeddings.dim, 300);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[han]\nwrod_hidden = 3\n").is_err());
    }

    #[test]
    fn hash_ignores_paths() {
        let mut a = PipelineConfig::default();
        let h = a.hash();
        a.paths.out = Some("x".into());
        assert_eq!(a.hash(), h);
        a.han.dropout = 0.3;
        assert_ne!(a.hash(), h);
    }
}
