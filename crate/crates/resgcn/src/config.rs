//! Flat key-value run configuration: one TOML file, CLI-flag overrides,
//! every hyperparameter present by name with its default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inject::InjectionSpec;
use crate::model::{AttentionTarget, Hyperparams, Strategy};
use crate::seed::stage_seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // dataset paths
    pub edges: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output_dir: PathBuf,

    // preprocessing: 0 disables PCA; by default PCA runs on the training
    // input (i.e. after injection), set pca_before_injection to move it
    // ahead of the injection stage instead
    pub pca_dim: usize,
    pub pca_before_injection: bool,

    // injection
    pub s: usize,
    pub t: usize,
    pub k: usize,
    pub label_donor: bool,

    // model
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub lr: f64,
    pub epochs: usize,
    pub gcn_dims: Vec<usize>,
    pub res_layers: usize,
    pub att_layers: usize,
    pub decoder_layers: usize,
    pub embedding_attention: String,

    // evaluation
    pub strategy: String,
    pub ks: Vec<usize>,

    /// Root seed; stage seeds (inject, init) derive from it.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            edges: None,
            attributes: None,
            labels: None,
            output_dir: PathBuf::from("out"),
            pca_dim: 20,
            pca_before_injection: false,
            s: 15,
            t: 10,
            k: 50,
            label_donor: false,
            alpha: 0.8,
            lambda: 0.1,
            gamma: 1.0,
            lr: 0.01,
            epochs: 100,
            gcn_dims: vec![64, 32],
            res_layers: 3,
            att_layers: 2,
            decoder_layers: 2,
            embedding_attention: "both".into(),
            strategy: "residual".into(),
            ks: vec![50, 100, 200, 300],
            seed: 42,
        }
    }
}

/// What a command needs from the config before it may touch the filesystem.
#[derive(Debug, Clone, Copy, Default)]
pub struct Requirements {
    pub edges: bool,
    pub attributes: bool,
    pub labels: bool,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Reject any invariant violation before a command writes files.
    pub fn validate(&self, needs: Requirements) -> Result<()> {
        self.hyperparams().and_then(|hp| hp.validate())?;
        self.strategies()?;
        if self.ks.is_empty() || self.ks.iter().any(|&k| k == 0) {
            return Err(Error::Config("ks must be a nonempty list of positive K".into()));
        }
        let check_path = |name: &str, path: &Option<PathBuf>, required: bool| -> Result<()> {
            match path {
                Some(p) if !p.exists() => Err(Error::Config(format!(
                    "{name} file not found: {}",
                    p.display()
                ))),
                None if required => Err(Error::Config(format!(
                    "missing required path: {name} (set it in the config or pass --{name})"
                ))),
                _ => Ok(()),
            }
        };
        check_path("edges", &self.edges, needs.edges)?;
        check_path("attributes", &self.attributes, needs.attributes)?;
        check_path("labels", &self.labels, needs.labels)?;
        Ok(())
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        Ok(Hyperparams {
            alpha: self.alpha,
            lambda: self.lambda,
            gamma: self.gamma,
            lr: self.lr,
            epochs: self.epochs,
            gcn_dims: self.gcn_dims.clone(),
            res_layers: self.res_layers,
            att_layers: self.att_layers,
            decoder_layers: self.decoder_layers,
            embedding_attention: self.embedding_attention.parse()?,
            seed: stage_seed(self.seed, "init"),
        })
    }

    pub fn injection_spec(&self) -> InjectionSpec {
        InjectionSpec {
            s: self.s,
            t: self.t,
            k: self.k,
            seed: stage_seed(self.seed, "inject"),
            label_donor: self.label_donor,
        }
    }

    /// The configured strategy list: a single name, or all four for "all".
    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        if self.strategy == "all" {
            Ok(Strategy::ALL.to_vec())
        } else {
            Ok(vec![self.strategy.parse()?])
        }
    }

    pub fn attention_target(&self) -> Result<AttentionTarget> {
        self.embedding_attention.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_carry_paper_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.alpha, 0.8);
        assert_eq!(cfg.lambda, 0.1);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.gcn_dims, vec![64, 32]);
        assert_eq!(cfg.s, 15);
        assert_eq!(cfg.pca_dim, 20);
        assert_eq!(cfg.ks, vec![50, 100, 200, 300]);
    }

    #[test]
    fn file_overrides_defaults_and_rejects_unknown_keys() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alpha = 0.3\nepochs = 5\ngcn_dims = [16, 8]").unwrap();
        let cfg = RunConfig::from_file(f.path()).unwrap();
        assert_eq!(cfg.alpha, 0.3);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.gcn_dims, vec![16, 8]);
        assert_eq!(cfg.lambda, 0.1);

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alhpa = 0.3").unwrap();
        assert!(matches!(
            RunConfig::from_file(f.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn validation_runs_before_any_write() {
        let cfg = RunConfig {
            alpha: 2.0,
            ..RunConfig::default()
        };
        assert!(cfg.validate(Requirements::default()).is_err());

        let cfg = RunConfig {
            edges: Some(PathBuf::from("/definitely/not/here")),
            ..RunConfig::default()
        };
        assert!(cfg
            .validate(Requirements {
                edges: true,
                ..Requirements::default()
            })
            .is_err());

        let cfg = RunConfig::default();
        assert!(matches!(
            cfg.validate(Requirements {
                edges: true,
                ..Requirements::default()
            }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stage_seeds_differ_between_stages() {
        let cfg = RunConfig::default();
        let hp = cfg.hyperparams().unwrap();
        let spec = cfg.injection_spec();
        assert_ne!(hp.seed, spec.seed);
    }

    #[test]
    fn strategy_all_expands() {
        let cfg = RunConfig {
            strategy: "all".into(),
            ..RunConfig::default()
        };
        assert_eq!(cfg.strategies().unwrap().len(), 4);
        let cfg = RunConfig {
            strategy: "bogus".into(),
            ..RunConfig::default()
        };
        assert!(cfg.strategies().is_err());
    }
}
