//! The four subcommands. Each writes its outputs and a manifest into the
//! output directory and returns the manifest.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use stablecvar::abc::run_hadmcmc_abc;
use stablecvar::bayes::{gaussian_bayes_estimate, run_gibbs, ChainTrace};
use stablecvar::cvar::{johansen_estimate, simulate_cvar, CvarParams, SeriesData, SeriesMeta};
use stablecvar::rng::{derive_seed, rng_from_seed};
use stablecvar::stable::{fit_mcculloch, quantile, StableParams};
use stablecvar::Error as CoreError;

use crate::config::{Command, EstimatorKind, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_file, FileRecord, Manifest, Normalization, OutputDir, ReplicateRecord};
use crate::report::{
    point_params, trace_params, AssetFit, BiasReport, DispersionRatio, FileFit, FitReport, GroupSummary, Interval,
    ReplicateRow, StudyReport,
};

/// Fewest inter-day points per asset accepted by `fit-stable`.
pub const MIN_BOUNDARY_POINTS: usize = 10;

pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; `None` uses one per core.
    pub threads: Option<usize>,
}

fn pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
}

fn rep_name(id: usize) -> String {
    format!("rep_{id:04}")
}

/// Seed of the series of replicate `id` in `simulate` and `estimate`.
pub fn data_seed(master: u64, id: usize) -> u64 {
    derive_seed(master, 2 * id as u64)
}

pub fn chain_seed(master: u64, id: usize) -> u64 {
    derive_seed(master, 2 * id as u64 + 1)
}

struct Model {
    params: CvarParams,
    stable: Vec<StableParams>,
    tau_idx: Vec<usize>,
}

impl Model {
    fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        let params = cfg.params()?;
        let tau_idx = cfg.tau.row_indices(cfg.model.t)?;
        let stable = match cfg.stable(params.n()) {
            Ok(s) => s,
            // never drawn without boundaries
            Err(_) if tau_idx.is_empty() => vec![StableParams::new(2.0, 0.0, 1.0, 0.0)?; params.n()],
            Err(e) => return Err(e),
        };
        Ok(Model { params, stable, tau_idx })
    }

    fn simulate(&self, t: usize, tau_idx: &[usize], seed: u64) -> CliResult<SeriesData> {
        Ok(simulate_cvar(&self.params, &self.stable, tau_idx, t, &mut rng_from_seed(seed))?)
    }
}

fn replicate_ids(cfg: &ExperimentConfig, only: Option<usize>) -> CliResult<Vec<usize>> {
    match only {
        Some(id) if id >= cfg.replicates => Err(CliError::Config(format!(
            "replicate {id} is outside 0..{}",
            cfg.replicates
        ))),
        Some(id) => Ok(vec![id]),
        None => Ok((0..cfg.replicates).collect()),
    }
}

/// Writes one series CSV per replicate. With `only`, regenerates that
/// replicate alone.
pub fn simulate(cfg: &ExperimentConfig, opts: &RunOptions, only: Option<usize>) -> CliResult<Manifest> {
    cfg.validate()?;
    let model = Model::new(cfg)?;
    let ids = replicate_ids(cfg, only)?;
    let series: Vec<CliResult<String>> = pool(opts.threads)?.install(|| {
        ids.par_iter()
            .map(|&id| {
                let s = model.simulate(cfg.model.t, &model.tau_idx, data_seed(cfg.seed, id))?;
                Ok(s.to_csv_string()?)
            })
            .collect()
    });
    let mut out = OutputDir::create(&opts.out)?;
    let mut manifest = Manifest::new(Command::Simulate, cfg)?;
    for (&id, text) in ids.iter().zip(series) {
        let text = text.map_err(CliError::in_replicate(id))?;
        out.write(&format!("series/{}.csv", rep_name(id)), text.as_bytes())?;
        manifest.replicates.push(ReplicateRecord {
            id,
            data_seed: Some(data_seed(cfg.seed, id)),
            chain_seeds: Vec::new(),
            source: None,
            rows: None,
            normalization: None,
        });
    }
    out.finish(manifest)
}

/// Files named by the config: `data.files`, or the series outputs of
/// `data.manifest`.
fn input_files(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    match (&cfg.data.manifest, cfg.data.files.is_empty()) {
        (Some(_), false) => Err(CliError::Config("set either data.files or data.manifest, not both".into())),
        (Some(m), true) => Manifest::series_files(m),
        (None, _) => Ok(cfg.data.files.clone()),
    }
}

fn record_inputs(files: &[PathBuf], manifest: &mut Manifest) -> CliResult<()> {
    for f in files {
        manifest.inputs.push(FileRecord {
            path: f.display().to_string(),
            sha256: sha256_file(f)?,
        });
    }
    Ok(())
}

/// Consecutive batches of `len` rows; a shorter tail is dropped.
pub fn batches(s: &SeriesData, len: usize) -> CliResult<Vec<(usize, SeriesData)>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= s.len() {
        let tau = s.tau_idx.iter().filter(|&&t| t >= start && t < start + len).map(|t| t - start).collect();
        let meta = SeriesMeta {
            timestamps: s.meta.timestamps.get(start..start + len).map(<[_]>::to_vec).unwrap_or_default(),
            ..s.meta.clone()
        };
        out.push((start, SeriesData::new(s.prices.rows(start, len).into_owned(), tau, meta)?));
        start += len;
    }
    if start < s.len() {
        log::warn!("dropping the last {} rows that do not fill a batch", s.len() - start);
    }
    Ok(out)
}

struct Dataset {
    series: SeriesData,
    record: ReplicateRecord,
}

fn file_datasets(cfg: &ExperimentConfig, files: &[PathBuf]) -> CliResult<Vec<Dataset>> {
    let normalize = cfg.data.normalize.unwrap_or(true);
    let mut out = Vec::new();
    for f in files {
        let s = SeriesData::read_csv(f)?;
        let parts = match cfg.data.batch_len {
            Some(len) => batches(&s, len)?,
            None => vec![(0, s)],
        };
        for (start, part) in parts {
            let id = out.len();
            let rows = Some([start, start + part.len()]);
            let (series, normalization) = if normalize {
                let (s, stats) = part.normalized()?;
                let stats = stats.into_iter().map(|(median, sd)| Normalization { median, sd }).collect();
                (s, Some(stats))
            } else {
                (part, None)
            };
            out.push(Dataset {
                series,
                record: ReplicateRecord {
                    id,
                    data_seed: None,
                    chain_seeds: vec![chain_seed(cfg.seed, id)],
                    source: Some(f.display().to_string()),
                    rows,
                    normalization,
                },
            });
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("input files yield no complete batch".into()));
    }
    Ok(out)
}

fn simulated_datasets(cfg: &ExperimentConfig) -> CliResult<Vec<Dataset>> {
    let model = Model::new(cfg)?;
    (0..cfg.replicates)
        .map(|id| {
            let seed = data_seed(cfg.seed, id);
            Ok(Dataset {
                series: model.simulate(cfg.model.t, &model.tau_idx, seed)?,
                record: ReplicateRecord {
                    id,
                    data_seed: Some(seed),
                    chain_seeds: vec![chain_seed(cfg.seed, id)],
                    source: None,
                    rows: None,
                    normalization: None,
                },
            })
        })
        .collect()
}

fn run_estimator(cfg: &ExperimentConfig, series: &SeriesData, stable: &[StableParams], seed: u64) -> CliResult<Option<ChainTrace>> {
    let (p, r) = (cfg.model.p, cfg.model.r);
    let priors = cfg.priors(series.n())?;
    let mut rng = rng_from_seed(seed);
    let trace = match cfg.estimator {
        EstimatorKind::Johansen => return Ok(None),
        EstimatorKind::GaussianBayes => gaussian_bayes_estimate(series, p, r, &priors, &cfg.chain_config(seed), &mut rng)?,
        EstimatorKind::GibbsExact => run_gibbs(series, p, r, stable, &priors, &cfg.chain_config(seed), &mut rng)?,
        EstimatorKind::Abc => run_hadmcmc_abc(series, p, r, stable, &priors, &cfg.abc_config(seed), &mut rng)?,
    };
    Ok(Some(trace))
}

struct Estimate {
    row: ReplicateRow,
    trace_csv: Option<String>,
}

fn estimate_one(cfg: &ExperimentConfig, d: &Dataset, stable: &[StableParams]) -> CliResult<Estimate> {
    let seed = d.record.chain_seeds[0];
    let id = d.record.id;
    match run_estimator(cfg, &d.series, stable, seed)? {
        None => {
            let fit = johansen_estimate(&d.series, cfg.model.p, cfg.model.r)?;
            Ok(Estimate {
                row: ReplicateRow {
                    id,
                    seed,
                    draws: 0,
                    acceptance: None,
                    trace_file: None,
                    params: point_params(&fit),
                },
                trace_csv: None,
            })
        }
        Some(trace) => Ok(Estimate {
            row: ReplicateRow {
                id,
                seed,
                draws: trace.draws.len(),
                acceptance: Some(trace.acceptance_rates()),
                trace_file: Some(format!("traces/{}.csv", rep_name(id))),
                params: trace_params(&trace),
            },
            trace_csv: Some(trace.to_csv_string()?),
        }),
    }
}

/// Runs the configured estimator on every replicate and writes
/// `study.json` plus one trace CSV per chain.
pub fn estimate(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<(Manifest, StudyReport)> {
    cfg.validate()?;
    let files = input_files(cfg)?;
    let mut manifest = Manifest::new(Command::Estimate, cfg)?;
    record_inputs(&files, &mut manifest)?;
    let data = if files.is_empty() {
        simulated_datasets(cfg)?
    } else {
        file_datasets(cfg, &files)?
    };
    let n = data[0].series.n();
    if n != cfg.n() {
        return Err(CliError::Config(format!(
            "data have {n} assets but model.beta describes {}",
            cfg.n()
        )));
    }
    let stable = match cfg.estimator {
        EstimatorKind::GibbsExact | EstimatorKind::Abc => cfg.stable(n)?,
        _ => Vec::new(),
    };
    if cfg.estimator == EstimatorKind::GibbsExact {
        if let Some(s) = stable.iter().find(|s| !s.is_symmetric()) {
            return Err(CliError::Config(format!(
                "gibbs-exact needs symmetric stable noise but noise.stable has b = {}; use estimator = \"abc\"",
                s.b
            )));
        }
    }
    let results: Vec<CliResult<Estimate>> = pool(opts.threads)?.install(|| {
        data.par_iter()
            .map(|d| estimate_one(cfg, d, &stable).map_err(CliError::in_replicate(d.record.id)))
            .collect()
    });
    let mut out = OutputDir::create(&opts.out)?;
    let mut rows = Vec::with_capacity(results.len());
    for res in results {
        let e = res?;
        if let (Some(file), Some(csv)) = (&e.row.trace_file, &e.trace_csv) {
            out.write(file, csv.as_bytes())?;
        }
        rows.push(e.row);
    }
    let report = StudyReport::aggregate(cfg.estimator.name(), manifest.config_hash.clone(), rows)?;
    report.cross_check(out.root())?;
    out.write_json("study.json", &report)?;
    manifest.replicates = data.into_iter().map(|d| d.record).collect();
    Ok((out.finish(manifest)?, report))
}

/// β entry below the identity block in the first cointegration vector.
fn first_free_beta(p: &CvarParams) -> f64 {
    p.beta_coint[(p.r, 0)]
}

/// A numeric failure of one estimator on one series is a missing
/// estimate, counted in the group's failures; anything else aborts.
fn tolerate_estimation(res: CliResult<f64>) -> CliResult<Option<f64>> {
    match res {
        Ok(v) => Ok(Some(v)),
        Err(CliError::Core(
            e @ (CoreError::Estimation(_)
            | CoreError::Sampler { .. }
            | CoreError::Numeric(_)
            | CoreError::Conditioning { .. }
            | CoreError::Decomposition { .. }),
        )) => {
            log::warn!("estimator failed: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

struct BiasRow {
    /// johansen clean, johansen contaminated, gaussian-bayes clean, contaminated
    values: [Option<f64>; 4],
}

fn bias_one(cfg: &ExperimentConfig, model: &Model, id: usize) -> CliResult<BiasRow> {
    let (p, r) = (cfg.model.p, cfg.model.r);
    // both groups share the Gaussian path; only the boundary rows differ
    let seed = derive_seed(cfg.seed, 3 * id as u64);
    let clean = model.simulate(cfg.model.t, &[], seed)?;
    let dirty = model.simulate(cfg.model.t, &model.tau_idx, seed)?;
    let n = clean.n();
    let priors = cfg.priors(n)?;
    let johansen = |s: &SeriesData| tolerate_estimation(johansen_estimate(s, p, r).map(|f| first_free_beta(&f)).map_err(CliError::from));
    let bayes = |s: &SeriesData, stream: u64| {
        let seed = derive_seed(cfg.seed, 3 * id as u64 + stream);
        let res = gaussian_bayes_estimate(s, p, r, &priors, &cfg.chain_config(seed), &mut rng_from_seed(seed))
            .map(|t| t.beta_free_mmse()[(0, 0)])
            .map_err(CliError::from);
        tolerate_estimation(res)
    };
    Ok(BiasRow {
        values: [johansen(&clean)?, johansen(&dirty)?, bayes(&clean, 1)?, bayes(&dirty, 2)?],
    })
}

/// Johansen and the Gaussian Bayes baseline on paired clean and
/// contaminated replicates.
pub fn bias_study(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<(Manifest, BiasReport)> {
    cfg.validate()?;
    let model = Model::new(cfg)?;
    if model.tau_idx.is_empty() {
        return Err(CliError::Config("bias-study needs a boundary schedule for the contaminated group".into()));
    }
    let results: Vec<CliResult<BiasRow>> = pool(opts.threads)?.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|id| bias_one(cfg, &model, id).map_err(CliError::in_replicate(id)))
            .collect()
    });
    let rows = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let column = |k: usize| -> Vec<Option<f64>> { rows.iter().map(|r| r.values[k]).collect() };

    let mut manifest = Manifest::new(Command::BiasStudy, cfg)?;
    let mut groups = Vec::new();
    let mut dispersion = Vec::new();
    for (e, name) in ["johansen", "gaussian-bayes"].into_iter().enumerate() {
        let (clean, dirty) = (column(2 * e), column(2 * e + 1));
        // shared edges over the trimmed values of both groups
        let mut kept: Vec<f64> = Vec::new();
        for g in [&clean, &dirty] {
            let ok: Vec<f64> = g.iter().flatten().copied().collect();
            if !ok.is_empty() {
                kept.extend(crate::report::trim_iqr(&ok, cfg.bias.trim_iqr));
            }
        }
        let lo = kept.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let edges = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let c = GroupSummary::new(name, "clean", clean, cfg.bias.trim_iqr, edges, cfg.bias.bins)?;
        let d = GroupSummary::new(name, "contaminated", dirty, cfg.bias.trim_iqr, edges, cfg.bias.bins)?;
        let ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) if y > 0.0 => Some(x / y),
            _ => None,
        };
        dispersion.push(DispersionRatio {
            estimator: name.into(),
            ratio: ratio(d.stdev, c.stdev),
            trimmed_ratio: ratio(d.trimmed_stdev, c.trimmed_stdev),
        });
        groups.push(c);
        groups.push(d);
    }
    let report = BiasReport {
        parameter: format!("beta_1_{}", cfg.model.r + 1),
        truth: first_free_beta(&model.params),
        replicates: cfg.replicates,
        config_hash: manifest.config_hash.clone(),
        groups,
        dispersion,
    };

    let mut csv = String::from("replicate,johansen_clean,johansen_contaminated,gaussian_bayes_clean,gaussian_bayes_contaminated\n");
    for (id, row) in rows.iter().enumerate() {
        csv.push_str(&id.to_string());
        for v in row.values {
            csv.push(',');
            if let Some(x) = v {
                csv.push_str(&format!("{x:?}"));
            }
        }
        csv.push('\n');
    }
    let mut out = OutputDir::create(&opts.out)?;
    out.write("estimates.csv", csv.as_bytes())?;
    out.write_json("bias_study.json", &report)?;
    manifest.replicates = (0..cfg.replicates)
        .map(|id| ReplicateRecord {
            id,
            data_seed: Some(derive_seed(cfg.seed, 3 * id as u64)),
            chain_seeds: vec![derive_seed(cfg.seed, 3 * id as u64 + 1), derive_seed(cfg.seed, 3 * id as u64 + 2)],
            source: None,
            rows: None,
            normalization: None,
        })
        .collect();
    Ok((out.finish(manifest)?, report))
}

fn percentile_interval(values: &mut [f64]) -> Interval {
    values.sort_by(f64::total_cmp);
    Interval {
        lo: quantile(values, 0.025),
        hi: quantile(values, 0.975),
    }
}

fn fit_asset(cfg: &ExperimentConfig, asset: String, points: &[f64], seed: u64) -> CliResult<AssetFit> {
    if points.len() < MIN_BOUNDARY_POINTS {
        return Err(CliError::Config(format!(
            "asset {asset} has {} inter-day points; at least {MIN_BOUNDARY_POINTS} are needed",
            points.len()
        )));
    }
    let fit = fit_mcculloch(points)?;
    let mut rng = rng_from_seed(seed);
    let mut draws: [Vec<f64>; 4] = Default::default();
    let mut resample = vec![0.0; points.len()];
    for _ in 0..cfg.fit.bootstrap {
        for v in resample.iter_mut() {
            *v = points[rng.random_range(0..points.len())];
        }
        let f = fit_mcculloch(&resample)?.params;
        for (d, v) in draws.iter_mut().zip([f.a, f.b, f.gamma, f.delta]) {
            d.push(v);
        }
    }
    let [a, b, g, d] = draws.map(|mut v| percentile_interval(&mut v));
    let p = fit.params;
    let mut notes = fit.notes;
    if p.a >= cfg.fit.near_gaussian {
        notes.push(format!("near-Gaussian: tail index {:.3} ≥ {}", p.a, cfg.fit.near_gaussian));
    }
    Ok(AssetFit {
        asset,
        boundary_points: points.len(),
        a: p.a,
        b: p.b,
        gamma: p.gamma,
        delta: p.delta,
        a_ci: a,
        b_ci: b,
        gamma_ci: g,
        delta_ci: d,
        clamped: fit.clamped,
        notes,
    })
}

/// Quantile fit of the inter-day differences of every asset in every
/// file, with bootstrap intervals. Values stay in price units.
pub fn fit_stable(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<(Manifest, FitReport)> {
    cfg.validate()?;
    let files = input_files(cfg)?;
    if files.is_empty() {
        return Err(CliError::Config("fit-stable needs at least one series file".into()));
    }
    let mut manifest = Manifest::new(Command::FitStable, cfg)?;
    record_inputs(&files, &mut manifest)?;
    let mut fits = Vec::new();
    for (k, f) in files.iter().enumerate() {
        let s = SeriesData::read_csv(f)?;
        let labels = s.asset_labels();
        let diffs = s.inter_day_differences();
        let jobs: Vec<(usize, String, Vec<f64>)> =
            labels.into_iter().zip(diffs).enumerate().map(|(j, (l, d))| (j, l, d)).collect();
        let assets: Vec<CliResult<AssetFit>> = pool(opts.threads)?.install(|| {
            jobs.into_par_iter()
                .map(|(j, label, d)| fit_asset(cfg, label, &d, derive_seed(derive_seed(cfg.seed, k as u64), j as u64)))
                .collect()
        });
        fits.push(FileFit {
            path: f.display().to_string(),
            assets: assets.into_iter().collect::<CliResult<_>>()?,
        });
    }
    let report = FitReport {
        bootstrap: cfg.fit.bootstrap,
        config_hash: manifest.config_hash.clone(),
        files: fits,
    };
    let mut out = OutputDir::create(&opts.out)?;
    out.write_json("fit_stable.json", &report)?;
    Ok((out.finish(manifest)?, report))
}

/// Reads a study report written by [`estimate`].
pub fn read_study(dir: &Path) -> CliResult<StudyReport> {
    let path = dir.join("study.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Manifest(e.to_string()))
}
