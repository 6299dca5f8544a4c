//! Study reports and the statistics behind them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stablecvar::bayes::{AcceptanceRates, ChainTrace};
use stablecvar::cvar::CvarParams;
use stablecvar::stable::quantile;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub mmse: f64,
    /// Posterior standard deviation; absent for point estimators.
    pub stdev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub id: usize,
    pub seed: u64,
    pub draws: usize,
    pub acceptance: Option<AcceptanceRates>,
    pub trace_file: Option<String>,
    pub params: Vec<ParamEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamAggregate {
    pub name: String,
    pub ave_mmse: f64,
    pub ave_stdev: Option<f64>,
    /// Cross-replicate sd over √replicates; absent with one replicate.
    pub se_mmse: Option<f64>,
    pub se_stdev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub estimator: String,
    pub replicates: usize,
    pub config_hash: String,
    pub params: Vec<ParamAggregate>,
    /// Mean over replicates of each block's acceptance rate.
    pub acceptance: Option<AcceptanceRates>,
    pub rows: Vec<ReplicateRow>,
}

/// Mean and sample sd (divisor `N − 1`); sd is `None` below two values.
pub fn mean_sd(xs: &[f64]) -> (f64, Option<f64>) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let sd = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt());
    (mean, sd)
}

/// Parameters of a point estimate, named like the trace columns.
pub fn point_params(p: &CvarParams) -> Vec<ParamEstimate> {
    let n = p.n();
    let r = p.r;
    let mut out = Vec::new();
    let mut push = |name: String, v: f64| out.push(ParamEstimate { name, mmse: v, stdev: None });
    for i in 0..n {
        for j in i..n {
            push(format!("sigma_{}_{}", i + 1, j + 1), p.sigma[(i, j)]);
        }
    }
    let b = p.b_matrix();
    for i in 0..b.nrows() {
        for j in 0..n {
            push(format!("b_{}_{}", i + 1, j + 1), b[(i, j)]);
        }
    }
    for i in 0..r {
        for j in r..n {
            push(format!("beta_{}_{}", i + 1, j + 1), p.beta_coint[(j, i)]);
        }
    }
    out
}

pub fn trace_params(t: &ChainTrace) -> Vec<ParamEstimate> {
    t.param_summaries()
        .into_iter()
        .map(|s| ParamEstimate {
            name: s.name,
            mmse: s.mmse,
            stdev: Some(s.stdev),
        })
        .collect()
}

fn mean_rate(rows: &[&AcceptanceRates], f: impl Fn(&AcceptanceRates) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl StudyReport {
    pub fn aggregate(estimator: &str, config_hash: String, rows: Vec<ReplicateRow>) -> CliResult<Self> {
        let first = rows.first().ok_or_else(|| CliError::Config("no replicates to aggregate".into()))?;
        let names: Vec<String> = first.params.iter().map(|p| p.name.clone()).collect();
        if rows.iter().any(|r| r.params.iter().map(|p| &p.name).ne(names.iter())) {
            return Err(CliError::Config("replicates report different parameters".into()));
        }
        let rt = (rows.len() as f64).sqrt();
        let params = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let mmse: Vec<f64> = rows.iter().map(|r| r.params[k].mmse).collect();
                let sds: Option<Vec<f64>> = rows.iter().map(|r| r.params[k].stdev).collect();
                let (ave_mmse, sd_mmse) = mean_sd(&mmse);
                let (ave_stdev, se_stdev) = match sds {
                    Some(s) => {
                        let (m, sd) = mean_sd(&s);
                        (Some(m), sd.map(|v| v / rt))
                    }
                    None => (None, None),
                };
                ParamAggregate {
                    name: name.clone(),
                    ave_mmse,
                    ave_stdev,
                    se_mmse: sd_mmse.map(|v| v / rt),
                    se_stdev,
                }
            })
            .collect();
        let acc: Vec<&AcceptanceRates> = rows.iter().filter_map(|r| r.acceptance.as_ref()).collect();
        let acceptance = (!acc.is_empty()).then(|| AcceptanceRates {
            sigma: mean_rate(&acc, |a| a.sigma),
            b_tilde: mean_rate(&acc, |a| a.b_tilde),
            lambda: mean_rate(&acc, |a| a.lambda),
            beta: mean_rate(&acc, |a| a.beta),
            joint: mean_rate(&acc, |a| a.joint),
        });
        Ok(StudyReport {
            estimator: estimator.into(),
            replicates: rows.len(),
            config_hash,
            params,
            acceptance,
            rows,
        })
    }

    pub fn param(&self, name: &str) -> Option<&ParamAggregate> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Recomputes every per-replicate posterior mean from the stored trace
    /// CSVs under `root` and checks it against the report.
    pub fn cross_check(&self, root: &Path) -> CliResult<()> {
        for row in &self.rows {
            let Some(file) = &row.trace_file else { continue };
            let path = root.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let means = column_means(&text).map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
            for p in &row.params {
                let m = means
                    .iter()
                    .find(|(n, _)| *n == p.name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| CliError::Manifest(format!("{} lacks column {}", path.display(), p.name)))?;
                if (m - p.mmse).abs() > 1e-9 * p.mmse.abs().max(1.0) {
                    return Err(CliError::Manifest(format!(
                        "replicate {}: {} mean {m} from the trace differs from the reported {}",
                        row.id, p.name, p.mmse
                    )));
                }
            }
        }
        let recomputed = StudyReport::aggregate(&self.estimator, self.config_hash.clone(), self.rows.clone())?;
        if recomputed.params != self.params {
            return Err(CliError::Manifest("aggregates do not match the replicate rows".into()));
        }
        Ok(())
    }
}

/// Column means of a trace CSV, keyed by header.
fn column_means(text: &str) -> Result<Vec<(String, f64)>, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty trace")?.split(',').collect();
    let mut sums = vec![0.0; header.len()];
    let mut rows = 0usize;
    for line in lines {
        for (k, field) in line.split(',').enumerate() {
            if !field.is_empty() {
                sums[k] += field.parse::<f64>().map_err(|e| e.to_string())?;
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err("trace has no draws".into());
    }
    Ok(header.into_iter().map(String::from).zip(sums.into_iter().map(|s| s / rows as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub below: usize,
    pub above: usize,
}

impl Histogram {
    /// `bins` equal-width bins over `[lo, hi]`; the last bin is closed.
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + w * i as f64).collect();
        let mut counts = vec![0; bins];
        let (mut below, mut above) = (0, 0);
        for &v in values {
            if v < lo {
                below += 1;
            } else if v > hi {
                above += 1;
            } else {
                counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
            }
        }
        Histogram {
            edges,
            counts,
            below,
            above,
        }
    }
}

/// Values within `k` IQRs outside the quartiles.
pub fn trim_iqr(values: &[f64], k: f64) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    let iqr = q3 - q1;
    values
        .iter()
        .copied()
        .filter(|v| *v >= q1 - k * iqr && *v <= q3 + k * iqr)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub estimator: String,
    pub group: String,
    /// One entry per replicate; `None` where the estimator failed.
    pub estimates: Vec<Option<f64>>,
    pub failures: usize,
    pub mean: f64,
    pub stdev: Option<f64>,
    pub trimmed_mean: f64,
    pub trimmed_stdev: Option<f64>,
    pub trimmed: usize,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRatio {
    pub estimator: String,
    /// Contaminated over clean cross-replicate sd.
    pub ratio: Option<f64>,
    pub trimmed_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub parameter: String,
    pub truth: f64,
    pub replicates: usize,
    pub config_hash: String,
    pub groups: Vec<GroupSummary>,
    pub dispersion: Vec<DispersionRatio>,
}

impl GroupSummary {
    pub fn new(estimator: &str, group: &str, estimates: Vec<Option<f64>>, trim: f64, edges: (f64, f64), bins: usize) -> CliResult<Self> {
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        if ok.is_empty() {
            return Err(CliError::Config(format!("{estimator} failed on every {group} replicate")));
        }
        let (mean, stdev) = mean_sd(&ok);
        let kept = trim_iqr(&ok, trim);
        let (trimmed_mean, trimmed_stdev) = mean_sd(&kept);
        Ok(GroupSummary {
            estimator: estimator.into(),
            group: group.into(),
            failures: estimates.len() - ok.len(),
            histogram: Histogram::new(&ok, edges.0, edges.1, bins),
            estimates,
            mean,
            stdev,
            trimmed_mean,
            trimmed_stdev,
            trimmed: ok.len() - kept.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetFit {
    pub asset: String,
    pub boundary_points: usize,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Percentile bootstrap 95% intervals.
    pub a_ci: Interval,
    pub b_ci: Interval,
    pub gamma_ci: Interval,
    pub delta_ci: Interval,
    pub clamped: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFit {
    pub path: String,
    pub assets: Vec<AssetFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub bootstrap: usize,
    pub config_hash: String,
    pub files: Vec<FileFit>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use stablecvar::linalg::{Mat, Vector};

    fn row(id: usize, mmse: f64, sd: Option<f64>) -> ReplicateRow {
        ReplicateRow {
            id,
            seed: id as u64,
            draws: 1,
            acceptance: None,
            trace_file: None,
            params: vec![ParamEstimate {
                name: "beta_1_2".into(),
                mmse,
                stdev: sd,
            }],
        }
    }

    #[test]
    fn standard_errors_divide_by_root_replicates() {
        let rows = vec![row(0, 1.0, Some(0.1)), row(1, 3.0, Some(0.3)), row(2, 5.0, Some(0.5)), row(3, 7.0, Some(0.7))];
        let r = StudyReport::aggregate("x", "h".into(), rows).unwrap();
        let p = r.param("beta_1_2").unwrap();
        assert_eq!(p.ave_mmse, 4.0);
        // sd of 1,3,5,7 is √(20/3)
        assert!((p.se_mmse.unwrap() - (20.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert!((p.ave_stdev.unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(r.replicates, 4);
    }

    #[test]
    fn single_replicate_has_no_standard_error() {
        let r = StudyReport::aggregate("johansen", "h".into(), vec![row(0, 1.0, None)]).unwrap();
        let p = r.param("beta_1_2").unwrap();
        assert_eq!(p.se_mmse, None);
        assert_eq!(p.ave_stdev, None);
    }

    #[test]
    fn histogram_counts_every_value_once() {
        let v = [0.0, 0.1, 0.5, 1.0, -3.0, 9.0];
        let h = Histogram::new(&v, 0.0, 1.0, 4);
        assert_eq!(h.counts, vec![2, 0, 1, 1]);
        assert_eq!((h.below, h.above), (1, 1));
        assert_eq!(h.edges.len(), 5);
    }

    #[test]
    fn trimming_drops_far_outliers_only() {
        let mut v: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        v.push(100.0);
        let kept = trim_iqr(&v, 5.0);
        assert_eq!(kept.len(), 20);
        assert!(!kept.contains(&100.0));
    }

    #[test]
    fn point_params_follow_trace_names() {
        let p = CvarParams {
            mu: Vector::from_vec(vec![0.1, 0.2]),
            alpha_adj: Mat::from_row_slice(2, 1, &[0.3, -0.4]),
            beta_coint: Mat::from_row_slice(2, 1, &[1.0, -0.7]),
            psi: vec![],
            sigma: Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]),
            r: 1,
            p: 1,
        };
        let names: Vec<String> = point_params(&p).into_iter().map(|e| e.name).collect();
        assert_eq!(
            names,
            ["sigma_1_1", "sigma_1_2", "sigma_2_2", "b_1_1", "b_1_2", "b_2_1", "b_2_2", "beta_1_2"]
        );
        assert_eq!(point_params(&p)[7].mmse, -0.7);
        assert_eq!(point_params(&p)[5].mmse, 0.3);
    }

    #[test]
    fn column_means_skip_blank_fields() {
        let m = column_means("draw,x,distance\n0,1.0,\n1,3.0,\n").unwrap();
        assert_eq!(m[1], ("x".to_string(), 2.0));
    }
}
