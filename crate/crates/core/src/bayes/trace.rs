use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cvar::{assemble_beta, CvarParams};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

use super::adaptive::AdaptiveConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burnin: usize,
    pub draws: usize,
    /// Metropolis steps on β per sweep.
    pub beta_steps: usize,
    pub adaptive: AdaptiveConfig,
    /// Echoed into the trace; the generator itself is passed separately.
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(burnin: usize, draws: usize, seed: u64) -> Self {
        ChainConfig {
            burnin,
            draws,
            beta_steps: 1,
            adaptive: AdaptiveConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Validation("chain must record at least one draw".into()));
        }
        if self.beta_steps == 0 {
            return Err(Error::Validation("beta_steps must be at least 1".into()));
        }
        let w = self.adaptive.adapt_weight;
        if !(0.0..=1.0).contains(&w) || !(self.adaptive.fixed_scale > 0.0) {
            return Err(Error::Validation("adaptive weight must be in [0,1] and fixed scale positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub sigma: Mat,
    pub b_tilde: Mat,
    /// (n−r)×r entries of β below the identity block.
    pub beta_free: Mat,
    pub lambda: Vector,
}

impl ChainState {
    pub fn beta(&self) -> Mat {
        assemble_beta(&self.beta_free)
    }
}

/// One stored post-burn-in draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub state: ChainState,
    /// Coefficients in the untransformed regression.
    pub b: Mat,
    /// Summary distance of the synthetic data set (ABC only).
    pub distance: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl BlockCounter {
    pub fn add(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    /// `None` when nothing was proposed.
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub sigma: BlockCounter,
    pub b_tilde: BlockCounter,
    pub lambda: BlockCounter,
    pub beta: BlockCounter,
    /// Joint ABC accept/reject.
    pub joint: BlockCounter,
}

/// Per-iteration ABC bookkeeping, burn-in included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub epsilon: f64,
    /// Distance of the current state after the iteration.
    pub distance: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub sampler: String,
    pub draws: Vec<Draw>,
    /// Empty for samplers without a kernel.
    pub iterations: Vec<IterationRecord>,
    pub acceptance: AcceptanceStats,
    pub config: ChainConfig,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mmse: f64,
    pub stdev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub sigma: Option<f64>,
    pub b_tilde: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub joint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub sampler: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ChainConfig,
    pub draws: usize,
    pub acceptance: AcceptanceRates,
    pub params: Vec<ParamSummary>,
}

impl ChainTrace {
    pub fn n(&self) -> usize {
        self.draws.first().map_or(0, |d| d.state.sigma.nrows())
    }

    pub fn r(&self) -> usize {
        self.draws.first().map_or(0, |d| d.state.beta_free.ncols())
    }

    pub fn has_distance(&self) -> bool {
        self.draws.iter().any(|d| d.distance.is_some())
    }

    /// Column names of [`ChainTrace::flatten`]: `sigma_i_j` (upper
    /// triangle), `b_i_j`, `beta_i_j` for the free entries of βᵀ (so the
    /// second entry of the single vector in a pair is `beta_1_2`), and
    /// `lambda_i`. Indices are 1-based.
    pub fn param_names(&self) -> Vec<String> {
        let (n, r) = (self.n(), self.r());
        let k = self.draws.first().map_or(0, |d| d.b.nrows());
        let mut names = Vec::new();
        for i in 0..n {
            for j in i..n {
                names.push(format!("sigma_{}_{}", i + 1, j + 1));
            }
        }
        for i in 0..k {
            for j in 0..n {
                names.push(format!("b_{}_{}", i + 1, j + 1));
            }
        }
        for i in 0..r {
            for j in r..n {
                names.push(format!("beta_{}_{}", i + 1, j + 1));
            }
        }
        for i in 0..n {
            names.push(format!("lambda_{}", i + 1));
        }
        names
    }

    pub fn flatten(draw: &Draw) -> Vec<f64> {
        let s = &draw.state;
        let n = s.sigma.nrows();
        let r = s.beta_free.ncols();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i..n {
                out.push(s.sigma[(i, j)]);
            }
        }
        for i in 0..draw.b.nrows() {
            out.extend(draw.b.row(i).iter());
        }
        for i in 0..r {
            for j in 0..n - r {
                out.push(s.beta_free[(j, i)]);
            }
        }
        out.extend(s.lambda.iter());
        out
    }

    /// Posterior mean and standard deviation (divisor `N − 1`) of every
    /// flattened parameter.
    pub fn param_summaries(&self) -> Vec<ParamSummary> {
        let names = self.param_names();
        let rows: Vec<Vec<f64>> = self.draws.iter().map(Self::flatten).collect();
        let m = rows.len() as f64;
        names
            .into_iter()
            .enumerate()
            .map(|(c, name)| {
                let mean = rows.iter().map(|r| r[c]).sum::<f64>() / m;
                let var = if rows.len() > 1 {
                    rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (m - 1.0)
                } else {
                    0.0
                };
                ParamSummary {
                    name,
                    mmse: mean,
                    stdev: var.sqrt(),
                }
            })
            .collect()
    }

    pub fn param(&self, name: &str) -> Option<ParamSummary> {
        self.param_summaries().into_iter().find(|p| p.name == name)
    }

    /// Posterior mean of the free β entries.
    pub fn beta_free_mmse(&self) -> Mat {
        let first = &self.draws[0].state.beta_free;
        let mut acc = Mat::zeros(first.nrows(), first.ncols());
        for d in &self.draws {
            acc += &d.state.beta_free;
        }
        acc / self.draws.len() as f64
    }

    /// Model parameters at the posterior means of β, B and Σ.
    pub fn mmse_params(&self) -> Result<CvarParams> {
        let d0 = &self.draws[0];
        let m = self.draws.len() as f64;
        let mut b = Mat::zeros(d0.b.nrows(), d0.b.ncols());
        let mut sigma = Mat::zeros(d0.state.sigma.nrows(), d0.state.sigma.ncols());
        for d in &self.draws {
            b += &d.b;
            sigma += &d.state.sigma;
        }
        CvarParams::from_b(&(b / m), assemble_beta(&self.beta_free_mmse()), sigma / m, self.p)
    }

    pub fn acceptance_rates(&self) -> AcceptanceRates {
        let a = &self.acceptance;
        AcceptanceRates {
            sigma: a.sigma.rate(),
            b_tilde: a.b_tilde.rate(),
            lambda: a.lambda.rate(),
            beta: a.beta.rate(),
            joint: a.joint.rate(),
        }
    }

    pub fn summary(&self) -> Result<TraceSummary> {
        Ok(TraceSummary {
            sampler: self.sampler.clone(),
            seed: self.config.seed,
            config_hash: config_hash(&self.config)?,
            config: self.config.clone(),
            draws: self.draws.len(),
            acceptance: self.acceptance_rates(),
            params: self.param_summaries(),
        })
    }

    /// One row per draw; ABC traces carry trailing `distance,epsilon`.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let abc = self.has_distance();
        let mut header = vec!["draw".to_string()];
        header.extend(self.param_names());
        if abc {
            header.push("distance".into());
            header.push("epsilon".into());
        }
        w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
        for (i, d) in self.draws.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(Self::flatten(d).iter().map(|v| format!("{v:?}")));
            if abc {
                let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
                rec.push(fmt(d.distance));
                rec.push(fmt(d.epsilon));
            }
            w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}
