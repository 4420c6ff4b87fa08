//! Experiment configuration file.
//!
//! A single TOML document drives the whole pipeline. Sections mirror the
//! library: `[model]` points at (or inlines) a model file, `[simulation]`
//! fixes the window and seed, `[dictionary]`, `[estimator]` and
//! `[diagnostics]` configure the downstream stages. Run
//! `kalikow replicate --explain-config` for the annotated template.

use kalikow::decomp::Neuron;
use kalikow::dict::Dictionary;
use kalikow::io::ModelFile;
use kalikow::models::TransitionModel;
use kalikow::{Error, KalikowModel, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub model: ModelSection,
    pub simulation: SimulationSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<DictionarySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
    pub output: OutputSection,
}

fn default_schema() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    /// Path to a model file (TOML family or `atoms v1`), relative to the
    /// config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// Inline alternative to `file`: the model file content.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    pub neurons: Vec<i64>,
    pub m: usize,
    pub t: i64,
    pub seed: u64,
    /// Cap on sites visited per genealogy (default one million).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub genealogy_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionarySection {
    /// short_memory | cumulative | cumulative_spont | hawkes | hawkes_spont
    pub kind: String,
    /// Defaults to the simulation past depth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSection {
    pub target: i64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSection {
    /// Inv targets to check the smallest eigenvalue against.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kappa: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_s: Option<usize>,
    /// exact | certified (certified needs `mu`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: String,
}

/// Config plus everything derived from it (model, dictionary, paths).
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub model: KalikowModel,
    pub transition: Option<TransitionModel>,
    pub dictionary: Option<Dictionary>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config TOML: {e}")))?;
        if config.schema != 1 {
            return Err(Error::Parse(format!(
                "unsupported config schema {}",
                config.schema
            )));
        }
        Ok(config)
    }

    /// Load, fingerprint, and cross-validate a config file.
    pub fn load(path: &Path) -> Result<ResolvedConfig> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::Parse("config is not UTF-8".into()))?;
        let config = Self::parse(&text)?;
        let fingerprint = fingerprint_hex(&bytes);
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve(fingerprint, &base_dir)
    }

    fn resolve(self, fingerprint: String, base_dir: &Path) -> Result<ResolvedConfig> {
        let model_file = match (&self.model.file, &self.model.inline) {
            (Some(file), None) => ModelFile::load(&base_dir.join(file))?,
            (None, Some(inline)) => ModelFile::parse(inline)?,
            _ => {
                return Err(Error::Parse(
                    "[model] needs exactly one of `file` or `inline`".into(),
                ))
            }
        };
        let model = model_file.build(Some(base_dir))?;
        let transition = model_file.transition_model(Some(base_dir))?;

        let sim = &self.simulation;
        if sim.neurons.is_empty() {
            return Err(Error::Parse("[simulation] needs a non-empty neuron list".into()));
        }
        if sim.m < 1 || sim.t <= sim.m as i64 {
            return Err(Error::Parse(format!(
                "[simulation] needs m >= 1 and t > m, got m = {}, t = {}",
                sim.m, sim.t
            )));
        }
        let f: Vec<Neuron> = sim.neurons.iter().map(|&n| Neuron(n)).collect();

        let dictionary = match &self.dictionary {
            None => None,
            Some(d) => {
                let dict_m = d.m.unwrap_or(sim.m);
                if dict_m > sim.m {
                    return Err(Error::Parse(format!(
                        "dictionary m = {dict_m} exceeds simulation m = {}",
                        sim.m
                    )));
                }
                Some(kalikow::dict::from_name(&d.kind, &f, dict_m, d.eta)?)
            }
        };

        if let Some(est) = &self.estimator {
            if dictionary.is_none() {
                return Err(Error::Parse("[estimator] requires [dictionary]".into()));
            }
            if !sim.neurons.contains(&est.target) {
                return Err(Error::Parse(format!(
                    "estimator target {} not among simulated neurons",
                    est.target
                )));
            }
            match (est.delta, est.d) {
                (Some(delta), None) => {
                    if !(0.0 < delta && delta < 1.0) {
                        return Err(Error::Parse(format!(
                            "estimator delta must be in (0, 1), got {delta}"
                        )));
                    }
                }
                (None, Some(d)) => {
                    if d < 0.0 {
                        return Err(Error::Parse(format!(
                            "estimator d must be nonnegative, got {d}"
                        )));
                    }
                }
                _ => {
                    return Err(Error::Parse(
                        "[estimator] needs exactly one of `delta` or `d`".into(),
                    ))
                }
            }
        }

        if let Some(diag) = &self.diagnostics {
            if let Some(mode) = &diag.re_mode {
                if mode != "exact" && mode != "certified" {
                    return Err(Error::Parse(format!("unknown re_mode `{mode}`")));
                }
                if mode == "certified" && diag.mu.is_none() {
                    return Err(Error::Parse("certified re_mode needs `mu`".into()));
                }
            }
        }

        let out_dir = base_dir.join(&self.output.dir);
        Ok(ResolvedConfig {
            fingerprint,
            model,
            transition,
            dictionary,
            out_dir,
            config: self,
        })
    }
}

/// SHA-256 of the raw config bytes, `sha256:<hex>`.
pub fn fingerprint_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

/// Annotated config template for `--explain-config`.
pub const CONFIG_TEMPLATE: &str = r#"# Experiment configuration (TOML). All defaults shown.
schema = 1

[model]
# Exactly one of `file` (path relative to this config) or `inline`.
# Model files declare one family section ([markov], [infinite_order],
# [hawkes], [hawkes_chain], [gl_linear]) or use the `atoms v1` format.
file = "model.toml"

[simulation]
neurons = [1, 2]    # observed neuron ids F
m = 3               # retained past depth (>= dictionary depth)
t = 10000           # horizon T (> m)
seed = 42
# genealogy_cap = 1000000

[dictionary]        # optional; required by [estimator]
kind = "hawkes_spont"  # short_memory | cumulative | cumulative_spont
                       # | hawkes | hawkes_spont
# m = 3             # defaults to simulation.m
# eta = 1           # bin width, cumulative families only (bins = m / eta)

[estimator]         # optional
target = 2          # must be among simulation.neurons
gamma = 2.0         # l1 tuning (the oracle inequality assumes gamma >= 2)
delta = 0.1         # threshold level; sets d = d_delta (or give `d`)
# d = 0.0167
# max_iter = 100000
# tol = 1e-10

[diagnostics]       # optional
kappa = [0.01]      # Inv targets for lambda_min(G)
re_c = 1.0          # restricted-eigenvalue cone constant
re_s = 2            # sparsity
re_mode = "exact"   # exact | certified (certified needs mu)
mu = 0.3            # randomness band of the model
theta = 0.35        # exponential sparsity rate (enables coupling bounds)

[output]
dir = "out"         # artifacts: sample.csv, sample.bin, gram.json,
                    # solution.json, report.json
"#;
