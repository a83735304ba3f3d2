use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::ast::CompilerConfig;
use crate::embed::TokenScheme;
use crate::gcn::{AdamConfig, GcnConfig};
use crate::train::{SplitSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_fraction: 0.9, stratified: true }
    }
}

/// Every tunable of the pipeline. Loadable from TOML; missing keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Replaces the built-in label set (TSV, `kind<TAB>category`).
    pub label_set: Option<PathBuf>,
    pub strict: bool,
    pub dump_edges: bool,
    pub embedding_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub train_embedding: bool,
    pub min_count: usize,
    /// 0 selects plain kind tokens.
    pub name_buckets: u32,
    pub epochs: usize,
    pub patience: usize,
    pub threshold: f64,
    pub suspect_count: usize,
    pub learning: AdamConfig,
    pub split: SplitSection,
    pub compilers: BTreeMap<String, PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let gcn = GcnConfig::default();
        PipelineConfig {
            output_dir: PathBuf::from("out"),
            seed: 7,
            label_set: None,
            strict: false,
            dump_edges: false,
            embedding_dim: gcn.embedding_dim,
            hidden_dims: gcn.hidden_dims,
            train_embedding: gcn.train_embedding,
            min_count: 1,
            name_buckets: 0,
            epochs: 50,
            patience: 10,
            threshold: 0.5,
            suspect_count: 5,
            learning: AdamConfig::default(),
            split: SplitSection::default(),
            compilers: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        Self::default().overlay(text)
    }

    /// Applies the keys present in `text` on top of `self`.
    pub fn overlay(&self, text: &str) -> Result<Self, PipelineError> {
        let file: toml::Table = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(self).map_err(|e| PipelineError::Config(e.to_string()))?;
        merge_tables(&mut base, file);
        let config: PipelineConfig =
            toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn overlay_file(&self, path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::io(path, source))?;
        self.overlay(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| Err(PipelineError::Config(msg));
        if self.embedding_dim == 0 || self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return fail(format!("dimensions must be positive: embedding {} hidden {:?}", self.embedding_dim, self.hidden_dims));
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return fail(format!("split.train_fraction {f} outside (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!("threshold {} outside [0, 1]", self.threshold));
        }
        let l = &self.learning;
        if !(l.base_lr > 0.0 && (0.0..1.0).contains(&l.beta1) && (0.0..1.0).contains(&l.beta2) && l.epsilon > 0.0) {
            return fail(format!("invalid learning block {l:?}"));
        }
        self.compiler_config()?;
        Ok(())
    }

    pub fn compiler_config(&self) -> Result<CompilerConfig, PipelineError> {
        let text = toml::to_string(&CompilerConfig { compilers: self.compilers.clone() })
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        CompilerConfig::from_toml(&text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn token_scheme(&self) -> TokenScheme {
        match self.name_buckets {
            0 => TokenScheme::Kind,
            buckets => TokenScheme::KindWithNameBucket { buckets },
        }
    }

    pub fn gcn_config(&self) -> GcnConfig {
        GcnConfig {
            embedding_dim: self.embedding_dim,
            hidden_dims: self.hidden_dims.clone(),
            num_classes: 2,
            seed: self.seed,
            train_embedding: self.train_embedding,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            adam: self.learning,
            seed: self.seed,
            threshold: self.threshold,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.split.train_fraction, seed: self.seed, stratified: self.split.stratified }
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if key != "compilers" => merge_tables(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn file_overrides_only_present_keys() {
        let flags = PipelineConfig { epochs: 3, seed: 11, ..PipelineConfig::default() };
        let merged = flags.overlay("seed = 5\n[learning]\nbase_lr = 0.01\n").unwrap();
        assert_eq!((merged.epochs, merged.seed), (3, 5));
        assert_eq!(merged.learning.base_lr, 0.01);
        assert_eq!(merged.learning.beta1, 0.9);
    }

    #[test]
    fn invalid_values_rejected() {
        for text in ["hidden_dims = [4, 0]", "[split]\ntrain_fraction = 1.5", "threshold = 2.0", "bogus = 1"] {
            assert!(matches!(PipelineConfig::from_toml(text), Err(PipelineError::Config(_))), "{text}");
        }
    }

    #[test]
    fn compilers_table() {
        let c = PipelineConfig::from_toml("[compilers]\n\">=0.8.0\" = \"/opt/solc\"\n").unwrap();
        assert_eq!(c.compiler_config().unwrap().locate("0.8.4").unwrap(), Path::new("/opt/solc"));
        assert!(PipelineConfig::from_toml("[compilers]\n\"not a range\" = \"/x\"\n").is_err());
    }
}
