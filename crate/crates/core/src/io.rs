//! CSV/JSON persistence of runs, metrics and curves, and reloading of stored runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::engine::ConsumptionLog;
use crate::error::{Error, Result};
use crate::experiment::{BinnedCurve, CompareSummary, RunRecord, RunResults};
use crate::learner::Weights;
use crate::metrics::MetricsReport;
use crate::recommend::AlgorithmKind;
use crate::signals::{DISTANCE_COLUMN, QUALITY_COLUMN};
use crate::world::{Item, ItemId, User, UserId};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";

pub const LOG_HEADER: [&str; 5] = ["run_id", "algorithm", "round", "user_id", "item_id"];
pub const ITEMS_HEADER: [&str; 5] = ["run_id", "item_id", "quality", "genre", "birth_round"];
pub const PREFERENCES_HEADER: [&str; 3] = ["run_id", "user_id", "preference"];
pub const WEIGHTS_HEADER: [&str; 6] = ["round", "w0", "w_quality", "w_distance", "w_rec1", "w_rec2"];
pub const METRICS_HEADER: [&str; 12] = [
    "algorithm",
    "run_id",
    "inter",
    "intra",
    "filter_bubble",
    "homogeneity",
    "alt_homogeneity",
    "natural_homogeneity",
    "mean_q",
    "mean_aff",
    "std_q",
    "std_aff",
];
pub const CURVE_HEADER: [&str; 6] = ["algorithm", "bin_lo", "bin_hi", "count", "mean", "std"];

const MISSING: &str = "NA";

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_optional(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_else(|| MISSING.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFiles {
    pub algorithm: AlgorithmKind,
    pub run_id: usize,
    pub seed: u64,
    pub log: String,
    pub items: String,
    pub preferences: String,
    pub weights: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulation_seconds: f64,
    pub write_seconds: f64,
}

/// Completion marker of an output directory. Paths are relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub runs: Vec<RunFiles>,
    pub metrics: String,
    pub timings: Timings,
}

impl RunManifest {
    pub fn files(&self) -> impl Iterator<Item = &str> + '_ {
        self.runs
            .iter()
            .flat_map(|r| [&r.log, &r.items, &r.preferences, &r.weights])
            .chain(std::iter::once(&self.metrics))
            .map(String::as_str)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    csv::Writer::from_path(path).map_err(|source| Error::Csv { path: path.into(), source })
}

fn write_records<W, I, R>(writer: &mut csv::Writer<W>, header: &[&str], rows: I) -> csv::Result<()>
where
    W: std::io::Write,
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut writer = csv_writer(path)?;
    write_records(&mut writer, header, rows).map_err(|source| Error::Csv { path: path.into(), source })
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let wrap = |source| Error::Csv { path: path.into(), source };
    let mut reader = csv::Reader::from_path(path).map_err(wrap)?;
    let found = reader.headers().map_err(wrap)?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Data(format!("{}: unexpected header {:?}", path.display(), found)));
    }
    reader.records().collect::<std::result::Result<_, _>>().map_err(wrap)
}

struct Fields<'a> {
    path: &'a Path,
    record: &'a csv::StringRecord,
}

impl Fields<'_> {
    fn raw(&self, index: usize) -> Result<&str> {
        self.record.get(index).ok_or_else(|| {
            Error::Data(format!("{}: line {} is missing field {index}", self.path.display(), self.line()))
        })
    }

    fn line(&self) -> u64 {
        self.record.position().map_or(0, |p| p.line())
    }

    fn parse<T: FromStr>(&self, index: usize) -> Result<T> {
        let raw = self.raw(index)?;
        raw.parse().map_err(|_| {
            Error::Data(format!("{}: line {}: cannot parse {raw:?}", self.path.display(), self.line()))
        })
    }

    fn optional(&self, index: usize) -> Result<Option<f64>> {
        if self.raw(index)? == MISSING {
            Ok(None)
        } else {
            self.parse(index).map(Some)
        }
    }
}

pub fn run_stem(algorithm: AlgorithmKind, run_id: usize) -> String {
    format!("{}__run{run_id}.csv", algorithm.name())
}

fn run_files(record: &RunRecord) -> RunFiles {
    let stem = run_stem(record.algorithm, record.run_id);
    RunFiles {
        algorithm: record.algorithm,
        run_id: record.run_id,
        seed: record.seed,
        log: format!("logs/{stem}"),
        items: format!("items/{stem}"),
        preferences: format!("preferences/{stem}"),
        weights: format!("weights/{stem}"),
    }
}

pub fn write_log(path: &Path, log: &ConsumptionLog) -> Result<()> {
    let rows = log.choices.iter().enumerate().flat_map(|(t, round)| {
        round.iter().enumerate().map(move |(j, item)| {
            vec![
                log.run_id.to_string(),
                log.algorithm.name().to_string(),
                (t + 1).to_string(),
                j.to_string(),
                item.to_string(),
            ]
        })
    });
    write_rows(path, &LOG_HEADER, rows)
}

pub fn write_items(path: &Path, run_id: usize, items: &[Item]) -> Result<()> {
    let rows = items.iter().map(|item| {
        vec![
            run_id.to_string(),
            item.id.to_string(),
            format_float(item.quality),
            format_float(item.genre),
            item.birth_round.to_string(),
        ]
    });
    write_rows(path, &ITEMS_HEADER, rows)
}

pub fn write_preferences(path: &Path, run_id: usize, users: &[User]) -> Result<()> {
    let rows = users
        .iter()
        .map(|u| vec![run_id.to_string(), u.id.to_string(), format_float(u.preference)]);
    write_rows(path, &PREFERENCES_HEADER, rows)
}

/// One row per training round; recommendation columns beyond the model's width are `NA`.
pub fn write_weights(path: &Path, history: &[Weights]) -> Result<()> {
    let rows = history.iter().enumerate().map(|(t, w)| {
        let mut row = vec![(t + 1).to_string(), format_float(w.intercept)];
        row.push(format_optional(w.coefficient(QUALITY_COLUMN)));
        row.push(format_optional(w.coefficient(DISTANCE_COLUMN)));
        for k in 0..2 {
            row.push(format_optional(w.coefficients.get(2 + k).copied()));
        }
        row
    });
    write_rows(path, &WEIGHTS_HEADER, rows)
}

fn metric_rows(reports: &[MetricsReport]) -> impl Iterator<Item = Vec<String>> + '_ {
    reports.iter().map(|r| {
        vec![
            r.algorithm.name().to_string(),
            r.run_id.to_string(),
            format_float(r.inter),
            format_float(r.intra),
            format_optional(r.filter_bubble),
            format_optional(r.homogeneity),
            format_optional(r.alt_homogeneity),
            format_optional(r.natural_homogeneity),
            format_float(r.mean_q),
            format_float(r.mean_aff),
            format_float(r.std_q),
            format_float(r.std_aff),
        ]
    })
}

pub fn write_metrics(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    write_rows(path, &METRICS_HEADER, metric_rows(reports))
}

/// The metrics table as CSV text.
pub fn metrics_table(reports: &[MetricsReport]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    write_records(&mut writer, &METRICS_HEADER, metric_rows(reports)).expect("writing to memory");
    String::from_utf8(writer.into_inner().expect("flushed")).expect("ascii table")
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsReport>> {
    read_rows(path, &METRICS_HEADER)?
        .iter()
        .map(|record| {
            let f = Fields { path, record };
            Ok(MetricsReport {
                algorithm: f.parse(0)?,
                run_id: f.parse(1)?,
                inter: f.parse(2)?,
                intra: f.parse(3)?,
                filter_bubble: f.optional(4)?,
                homogeneity: f.optional(5)?,
                alt_homogeneity: f.optional(6)?,
                natural_homogeneity: f.optional(7)?,
                mean_q: f.parse(8)?,
                mean_aff: f.parse(9)?,
                std_q: f.parse(10)?,
                std_aff: f.parse(11)?,
            })
        })
        .collect()
}

pub fn write_curves(path: &Path, curves: &[(AlgorithmKind, BinnedCurve)]) -> Result<()> {
    let rows = curves.iter().flat_map(|(kind, curve)| {
        curve.bins.iter().map(move |bin| {
            vec![
                kind.name().to_string(),
                format_float(bin.lo),
                format_float(bin.hi),
                bin.count.to_string(),
                format_optional(bin.mean),
                format_optional(bin.std),
            ]
        })
    });
    write_rows(path, &CURVE_HEADER, rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_compare(path: &Path, summary: &CompareSummary) -> Result<()> {
    write_json(path, summary)
}

/// Reassembles a consumption log from its three per-run files.
pub fn read_log(log_path: &Path, items_path: &Path, preferences_path: &Path) -> Result<ConsumptionLog> {
    let users = read_rows(preferences_path, &PREFERENCES_HEADER)?
        .iter()
        .enumerate()
        .map(|(j, record)| {
            let f = Fields { path: preferences_path, record };
            let id: UserId = f.parse(1)?;
            if id as usize != j {
                return Err(Error::Data(format!("{}: users out of order", preferences_path.display())));
            }
            Ok(User { id, preference: f.parse(2)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let items = read_rows(items_path, &ITEMS_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let f = Fields { path: items_path, record };
            let id: ItemId = f.parse(1)?;
            if id as usize != i {
                return Err(Error::Data(format!("{}: items out of order", items_path.display())));
            }
            Ok(Item {
                id,
                quality: f.parse(2)?,
                genre: f.parse(3)?,
                birth_round: f.parse(4)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let records = read_rows(log_path, &LOG_HEADER)?;
    let mut run_id = None;
    let mut algorithm = None;
    let mut choices: Vec<Vec<Option<ItemId>>> = Vec::new();
    for record in &records {
        let f = Fields { path: log_path, record };
        let (run, kind): (usize, AlgorithmKind) = (f.parse(0)?, f.parse(1)?);
        if *run_id.get_or_insert(run) != run || *algorithm.get_or_insert(kind) != kind {
            return Err(Error::Data(format!("{}: mixes several runs", log_path.display())));
        }
        let round: usize = f.parse(2)?;
        let user: usize = f.parse(3)?;
        if round == 0 || user >= users.len() {
            return Err(Error::Data(format!("{}: line {} out of range", log_path.display(), f.line())));
        }
        if choices.len() < round {
            choices.resize_with(round, || vec![None; users.len()]);
        }
        if choices[round - 1][user].replace(f.parse(4)?).is_some() {
            return Err(Error::Data(format!("{}: duplicate (round, user) at line {}", log_path.display(), f.line())));
        }
    }
    let choices = choices
        .into_iter()
        .enumerate()
        .map(|(t, round)| {
            round
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Data(format!("{}: round {} is incomplete", log_path.display(), t + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let log = ConsumptionLog {
        run_id: run_id.ok_or_else(|| Error::Data(format!("{}: empty log", log_path.display())))?,
        algorithm: algorithm.expect("set together with run id"),
        choices,
        items,
        users,
    };
    log.validate()?;
    Ok(log)
}

pub fn read_manifest(out_dir: &Path) -> Result<RunManifest> {
    let path = out_dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
}

/// Rebuilds experiment results from a completed output directory.
///
/// Metrics are recomputed from the stored logs; per-round weights are not reloaded.
pub fn load_results(out_dir: &Path) -> Result<RunResults> {
    let manifest = read_manifest(out_dir)?;
    let records = manifest
        .runs
        .iter()
        .map(|files| {
            let log = read_log(
                &out_dir.join(&files.log),
                &out_dir.join(&files.items),
                &out_dir.join(&files.preferences),
            )?;
            RunRecord::from_log(log, files.seed, Vec::new())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResults::from_records(manifest.config, records))
}

/// Removes the files it tracks unless disarmed.
struct Cleanup {
    paths: Vec<PathBuf>,
    armed: bool,
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if self.armed {
            for path in &self.paths {
                let _ = fs::remove_file(path);
            }
        }
    }
}

/// Writes every per-run file and the metrics table, then the manifest.
///
/// A directory already holding a manifest is refused unless `force`. On
/// failure the files written so far are removed and no manifest exists.
pub fn write_outputs(results: &RunResults, out_dir: &Path, force: bool, simulation: Duration) -> Result<RunManifest> {
    let started = std::time::Instant::now();
    let manifest_path = out_dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        if !force {
            return Err(Error::OutputExists(out_dir.into()));
        }
        fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut cleanup = Cleanup { paths: Vec::new(), armed: true };
    let mut runs = Vec::with_capacity(results.records.len());
    for record in &results.records {
        let files = run_files(record);
        let mut track = |name: &str| {
            let path = out_dir.join(name);
            cleanup.paths.push(path.clone());
            path
        };
        write_log(&track(&files.log), &record.log)?;
        write_items(&track(&files.items), record.run_id, &record.log.items)?;
        write_preferences(&track(&files.preferences), record.run_id, &record.log.users)?;
        write_weights(&track(&files.weights), &record.training_weights)?;
        runs.push(files);
    }
    let metrics_path = out_dir.join(METRICS_FILE);
    cleanup.paths.push(metrics_path.clone());
    let reports: Vec<MetricsReport> = results.reports().cloned().collect();
    write_metrics(&metrics_path, &reports)?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: results.config.master_seed,
        config: results.config.clone(),
        runs,
        metrics: METRICS_FILE.to_string(),
        timings: Timings {
            simulation_seconds: simulation.as_secs_f64(),
            write_seconds: started.elapsed().as_secs_f64(),
        },
    };
    let staging = out_dir.join(format!("{MANIFEST_FILE}.partial"));
    cleanup.paths.push(staging.clone());
    write_json(&staging, &manifest)?;
    fs::rename(&staging, &manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    cleanup.armed = false;
    Ok(manifest)
}
