//! Experiment configuration: TOML with dotted keys, merged over a
//! per-command preset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stablecvar::abc::{AbcConfig, EpsilonSpec};
use stablecvar::bayes::{BetaPriorKind, ChainConfig, PriorSpec};
use stablecvar::cvar::{normalize_beta, regressor_count, CvarParams, TauSpec};
use stablecvar::linalg::{Mat, Vector};
use stablecvar::stable::StableParams;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Johansen,
    GaussianBayes,
    GibbsExact,
    Abc,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Johansen => "johansen",
            EstimatorKind::GaussianBayes => "gaussian-bayes",
            EstimatorKind::GibbsExact => "gibbs-exact",
            EstimatorKind::Abc => "abc",
        }
    }

    pub fn has_chain(self) -> bool {
        self != EstimatorKind::Johansen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    FitStable,
    BiasStudy,
    Estimate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FitStable => "fit-stable",
            Command::BiasStudy => "bias-study",
            Command::Estimate => "estimate",
        }
    }
}

/// A matrix given either as a flat column-stacked list or as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixInput {
    pub fn to_mat(&self, rows: usize, cols: usize, name: &str) -> CliResult<Mat> {
        let bad = || CliError::Config(format!("{name} must be {rows}×{cols}"));
        match self {
            MatrixInput::Flat(v) => {
                if v.len() != rows * cols {
                    return Err(bad());
                }
                Ok(Mat::from_column_slice(rows, cols, v))
            }
            MatrixInput::Rows(rs) => {
                if rs.len() != rows || rs.iter().any(|r| r.len() != cols) {
                    return Err(bad());
                }
                let flat: Vec<f64> = rs.iter().flatten().copied().collect();
                Ok(Mat::from_row_slice(rows, cols, &flat))
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            MatrixInput::Flat(v) => v.len(),
            MatrixInput::Rows(rs) => rs.iter().map(Vec::len).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Rows per simulated series.
    pub t: usize,
    pub p: usize,
    pub r: usize,
    /// n×r; its top r×r block is normalized to the identity.
    pub beta: MatrixInput,
    pub alpha_adj: MatrixInput,
    /// Zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    pub sigma: MatrixInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableConfig {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub delta: f64,
}

/// One law shared by every asset, or one per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StableInput {
    Shared(StableConfig),
    PerAsset(Vec<StableConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Law of the inter-day innovations; required by simulation and the
    /// mixture estimators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stable: Option<StableInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub burnin: usize,
    pub draws: usize,
    pub beta_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSection {
    /// Fixed tolerance; when absent it is calibrated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub calibrate_quantile: f64,
    pub calibrate_draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<Vec<f64>>,
    pub block_updates: bool,
    pub stall_window: usize,
    pub pilot_burnin: usize,
    pub pilot_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Series CSVs; when empty, series are simulated from the model.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// Median/sd normalization per batch; defaults to on for files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
    /// Split every file into consecutive batches of this many rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_len: Option<usize>,
    /// Take the files from a manifest and verify their hashes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// `flat` or `matrix_normal`.
    pub beta: BetaPriorKind,
    /// Prior mean of the free β rows, row-major; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_mean: Option<Vec<f64>>,
    /// Prior variance of each free β entry under `matrix_normal`.
    pub beta_var: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            beta: BetaPriorKind::Flat,
            beta_mean: None,
            beta_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSection {
    pub bins: usize,
    /// Values beyond this many IQRs outside the quartiles are trimmed.
    pub trim_iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub bootstrap: usize,
    /// Tail index at or above which a fit is flagged near-Gaussian.
    pub near_gaussian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicates: usize,
    pub estimator: EstimatorKind,
    pub model: ModelConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub tau: TauSpec,
    pub chain: ChainSection,
    pub abc: AbcSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub prior: PriorSection,
    pub bias: BiasSection,
    pub fit: FitSection,
}

fn base() -> ExperimentConfig {
    ExperimentConfig {
        seed: 20_240_601,
        replicates: 10,
        estimator: EstimatorKind::Abc,
        model: ModelConfig {
            t: 500,
            p: 1,
            r: 1,
            beta: MatrixInput::Flat(vec![1.0, 0.5]),
            alpha_adj: MatrixInput::Flat(vec![0.1, -0.3]),
            mu: None,
            sigma: MatrixInput::Rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        },
        noise: NoiseConfig {
            stable: Some(StableInput::Shared(StableConfig {
                a: 1.3,
                b: 0.0,
                gamma: 1.0,
                delta: 0.0,
            })),
        },
        tau: TauSpec::Modulus { modulus: 50 },
        chain: ChainSection {
            burnin: 2000,
            draws: 5000,
            beta_steps: 1,
        },
        abc: AbcSection {
            epsilon: None,
            calibrate_quantile: 0.1,
            calibrate_draws: 200,
            anneal: None,
            block_updates: false,
            stall_window: 5000,
            pilot_burnin: 500,
            pilot_draws: 1000,
        },
        data: DataSection::default(),
        prior: PriorSection::default(),
        bias: BiasSection { bins: 30, trim_iqr: 5.0 },
        fit: FitSection {
            bootstrap: 200,
            near_gaussian: 1.95,
        },
    }
}

/// Defaults for each command: the symmetric desk-scale study for
/// `estimate` and `simulate`, the contamination study for `bias-study`.
pub fn preset(cmd: Command) -> ExperimentConfig {
    let mut cfg = base();
    if cmd == Command::BiasStudy {
        cfg.replicates = 100;
        cfg.estimator = EstimatorKind::GaussianBayes;
        cfg.model = ModelConfig {
            t: 200,
            p: 1,
            r: 1,
            beta: MatrixInput::Flat(vec![1.0, -1.0]),
            alpha_adj: MatrixInput::Flat(vec![-0.002, 0.001]),
            mu: None,
            sigma: MatrixInput::Rows(vec![vec![100.0, 0.0], vec![0.0, 100.0]]),
        };
        cfg.noise.stable = Some(StableInput::Shared(StableConfig {
            a: 1.6,
            b: 0.0,
            gamma: 97.0,
            delta: -4.7,
        }));
        cfg.tau = TauSpec::Modulus { modulus: 20 };
    }
    cfg
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // tagged enums are replaced whole so stale variant fields do not linger
                    Some(slot) if k != "tau" && k != "stable" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Preset for `cmd` overlaid with the keys of `text`.
    pub fn from_toml_over(cmd: Command, text: &str) -> CliResult<Self> {
        let over: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_value_over(cmd, toml::Value::Table(over))
    }

    fn from_value_over(cmd: Command, over: toml::Value) -> CliResult<Self> {
        let mut v = toml::Value::try_from(preset(cmd)).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut v, over);
        v.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    /// Loads a TOML config, or the config echoed in a JSON manifest.
    pub fn load(cmd: Command, path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(preset(cmd));
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let m = crate::manifest::Manifest::from_json(&text)?;
            if m.command != cmd.name() {
                return Err(CliError::Config(format!(
                    "manifest was written by `{}`, not `{}`",
                    m.command,
                    cmd.name()
                )));
            }
            m.verify_inputs()?;
            return Ok(m.config);
        }
        Self::from_toml_over(cmd, &text)
    }

    /// Long chains over more replicates.
    pub fn apply_full_protocol(&mut self) {
        self.chain.burnin = 10_000;
        self.chain.draws = 20_000;
        self.replicates = 20;
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn n(&self) -> usize {
        self.model.beta.len() / self.model.r.max(1)
    }

    pub fn validate(&self) -> CliResult<()> {
        let m = &self.model;
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if self.chain.draws == 0 || self.chain.beta_steps == 0 {
            return Err(CliError::Config("chain.draws and chain.beta_steps must be at least 1".into()));
        }
        if m.p == 0 || m.r == 0 || m.t < 2 {
            return Err(CliError::Config("model.p and model.r must be positive and model.t at least 2".into()));
        }
        if m.beta.len() % m.r != 0 || self.n() <= m.r {
            return Err(CliError::Config(format!("model.beta must hold n×{} entries with n > r", m.r)));
        }
        if self.bias.bins == 0 || !(self.bias.trim_iqr > 0.0) {
            return Err(CliError::Config("bias.bins and bias.trim_iqr must be positive".into()));
        }
        if self.fit.bootstrap == 0 {
            return Err(CliError::Config("fit.bootstrap must be at least 1".into()));
        }
        if self.data.batch_len.is_some_and(|b| b < 2) {
            return Err(CliError::Config("data.batch_len must be at least 2".into()));
        }
        for f in &self.data.files {
            if !f.exists() {
                return Err(CliError::Config(format!("data file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> CliResult<CvarParams> {
        let m = &self.model;
        let n = self.n();
        if m.p != 1 {
            return Err(CliError::Config("simulation supports model.p = 1 only".into()));
        }
        let beta = m.beta.to_mat(n, m.r, "model.beta")?;
        let alpha = m.alpha_adj.to_mat(n, m.r, "model.alpha_adj")?;
        let (alpha, beta) = normalize_beta(&alpha, &beta)?;
        let mu = match &m.mu {
            None => Vector::zeros(n),
            Some(v) if v.len() == n => Vector::from_column_slice(v),
            Some(_) => return Err(CliError::Config(format!("model.mu must have {n} entries"))),
        };
        let params = CvarParams {
            mu,
            alpha_adj: alpha,
            beta_coint: beta,
            psi: Vec::new(),
            sigma: m.sigma.to_mat(n, n, "model.sigma")?,
            r: m.r,
            p: m.p,
        };
        params.validate()?;
        Ok(params)
    }

    /// Per-asset stable laws for `n` assets.
    pub fn stable(&self, n: usize) -> CliResult<Vec<StableParams>> {
        let to = |s: &StableConfig| StableParams::new(s.a, s.b, s.gamma, s.delta).map_err(CliError::from);
        match &self.noise.stable {
            None => Err(CliError::Config("noise.stable is required".into())),
            Some(StableInput::Shared(s)) => Ok(vec![to(s)?; n]),
            Some(StableInput::PerAsset(v)) if v.len() == n => v.iter().map(to).collect(),
            Some(StableInput::PerAsset(v)) => Err(CliError::Config(format!(
                "noise.stable lists {} laws for {n} assets",
                v.len()
            ))),
        }
    }

    /// Vague priors for `n` assets with the configured β prior.
    pub fn priors(&self, n: usize) -> CliResult<PriorSpec> {
        let (p, r) = (self.model.p, self.model.r);
        let mut priors = PriorSpec::vague(n, regressor_count(n, p, r), r);
        let pr = &self.prior;
        priors.beta_prior = pr.beta;
        if pr.beta == BetaPriorKind::Flat {
            return Ok(priors);
        }
        if !(pr.beta_var.is_finite() && pr.beta_var > 0.0) {
            return Err(CliError::Config("prior.beta_var must be positive".into()));
        }
        if let Some(mean) = &pr.beta_mean {
            let free = n.saturating_sub(r) * r;
            if mean.len() != free {
                return Err(CliError::Config(format!("prior.beta_mean must have {free} entries")));
            }
            for i in r..n {
                for j in 0..r {
                    priors.beta_bar[(i, j)] = mean[(i - r) * r + j];
                }
            }
        }
        priors.q_prior = Mat::identity(r, r) * pr.beta_var;
        Ok(priors)
    }

    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        let mut c = ChainConfig::new(self.chain.burnin, self.chain.draws, seed);
        c.beta_steps = self.chain.beta_steps;
        c
    }

    pub fn abc_config(&self, seed: u64) -> AbcConfig {
        let a = &self.abc;
        let mut cfg = AbcConfig::new(self.chain_config(seed));
        cfg.epsilon = match a.epsilon {
            Some(value) => EpsilonSpec::Absolute { value },
            None => EpsilonSpec::Calibrate {
                quantile: a.calibrate_quantile,
                draws: a.calibrate_draws,
            },
        };
        cfg.anneal = a.anneal.clone();
        cfg.block_updates = a.block_updates;
        cfg.stall_window = a.stall_window;
        cfg.pilot = ChainConfig::new(a.pilot_burnin, a.pilot_draws, seed);
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_normal_prior_places_its_mean_on_the_free_rows() {
        let text = "[prior]\nbeta = \"matrix_normal\"\nbeta_mean = [-1.0]\nbeta_var = 4.0\n";
        let cfg = ExperimentConfig::from_toml_over(Command::Estimate, text).unwrap();
        let pr = cfg.priors(2).unwrap();
        assert_eq!(pr.beta_prior, BetaPriorKind::MatrixNormal);
        assert_eq!(pr.beta_bar[(0, 0)], 1.0);
        assert_eq!(pr.beta_bar[(1, 0)], -1.0);
        assert_eq!(pr.q_prior[(0, 0)], 4.0);
        let flat = preset(Command::Estimate).priors(2).unwrap();
        assert_eq!(flat.beta_prior, BetaPriorKind::Flat);
        for bad in ["beta_mean = [1.0, 2.0]\nbeta_var = 1.0", "beta_var = 0.0"] {
            let text = format!("[prior]\nbeta = \"matrix_normal\"\n{bad}\n");
            let cfg = ExperimentConfig::from_toml_over(Command::Estimate, &text).unwrap();
            assert!(matches!(cfg.priors(2), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for cmd in [Command::Simulate, Command::FitStable, Command::BiasStudy, Command::Estimate] {
            let cfg = preset(cmd);
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml_over(cmd, &text).unwrap(), cfg);
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn dotted_keys_override_the_preset() {
        let text = "seed = 7\nmodel.t = 300\nchain.draws = 10\ntau.kind = \"none\"\nnoise.stable.b = 0.5\n";
        let err = ExperimentConfig::from_toml_over(Command::Estimate, text).unwrap_err();
        // the stable table is replaced whole, so a lone `b` is incomplete
        assert!(matches!(err, CliError::Config(_)));
        let text = "seed = 7\nmodel.t = 300\nchain.draws = 10\ntau.kind = \"none\"\n\
                    noise.stable = { a = 1.5, b = 0.5, gamma = 2.0, delta = 0.0 }\n";
        let cfg = ExperimentConfig::from_toml_over(Command::Estimate, text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.t, 300);
        assert_eq!(cfg.chain.draws, 10);
        assert_eq!(cfg.chain.burnin, 2000);
        assert_eq!(cfg.tau, TauSpec::None);
        assert_eq!(cfg.stable(2).unwrap()[0].b, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_over(Command::Estimate, "model.gamma = 1").is_err());
        assert!(ExperimentConfig::from_toml_over(Command::Estimate, "sed = 1").is_err());
    }

    #[test]
    fn matrices_accept_flat_and_row_forms() {
        let flat = MatrixInput::Flat(vec![1.0, 2.0, 3.0, 4.0]);
        let rows = MatrixInput::Rows(vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
        assert_eq!(flat.to_mat(2, 2, "m").unwrap(), rows.to_mat(2, 2, "m").unwrap());
        assert!(flat.to_mat(3, 1, "m").is_err());
    }

    #[test]
    fn bias_preset_builds_the_contamination_model() {
        let cfg = preset(Command::BiasStudy);
        let p = cfg.params().unwrap();
        assert_eq!(p.beta_coint[(1, 0)], -1.0);
        assert_eq!(p.sigma[(0, 0)], 100.0);
        assert_eq!(cfg.stable(2).unwrap()[1].gamma, 97.0);
    }

    #[test]
    fn invalid_counts_are_rejected() {
        let mut cfg = preset(Command::Simulate);
        cfg.replicates = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = preset(Command::Estimate);
        cfg.chain.draws = 0;
        assert!(cfg.validate().is_err());
    }
}
