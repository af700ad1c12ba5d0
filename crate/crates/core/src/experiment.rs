//! Multi-run orchestration, binned curves and cross-algorithm comparisons.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::engine::{run_deployment_phase, run_training_phase, ConsumptionLog};
use crate::error::{Error, Result};
use crate::learner::Weights;
use crate::metrics::{metrics_report, sorted_pairwise_distance, user_summaries, MetricsReport, UserSummary, METRIC_NAMES};
use crate::recommend::AlgorithmKind;
use crate::rng;
use crate::stats::{kendall_tau_b, mean, pearson, population_variance, Estimate};

pub const CURVE_BIN_WIDTH: f64 = 3.0;
pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// One simulated (algorithm, seed) pair.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: AlgorithmKind,
    pub run_id: usize,
    pub seed: u64,
    pub log: ConsumptionLog,
    pub report: MetricsReport,
    pub summaries: Vec<UserSummary>,
    /// Estimator fitted at each training round; the last one drove deployment.
    pub training_weights: Vec<Weights>,
}

impl RunRecord {
    pub fn from_log(log: ConsumptionLog, seed: u64, training_weights: Vec<Weights>) -> Result<Self> {
        Ok(Self {
            algorithm: log.algorithm,
            run_id: log.run_id,
            seed,
            report: metrics_report(&log)?,
            summaries: user_summaries(&log)?,
            training_weights,
            log,
        })
    }
}

pub type Aggregates = BTreeMap<AlgorithmKind, BTreeMap<String, Estimate>>;

#[derive(Debug, Clone)]
pub struct RunResults {
    pub config: ExperimentConfig,
    /// Sorted by (algorithm, run id).
    pub records: Vec<RunRecord>,
    pub aggregates: Aggregates,
}

impl RunResults {
    pub fn from_records(config: ExperimentConfig, mut records: Vec<RunRecord>) -> Self {
        records.sort_by_key(|r| (r.algorithm, r.run_id));
        let aggregates = aggregate(records.iter().map(|r| &r.report));
        Self { config, records, aggregates }
    }

    pub fn algorithms(&self) -> Vec<AlgorithmKind> {
        let mut kinds: Vec<AlgorithmKind> = self.records.iter().map(|r| r.algorithm).collect();
        kinds.dedup();
        kinds
    }

    pub fn runs_of(&self, algorithm: AlgorithmKind) -> impl Iterator<Item = &RunRecord> + '_ {
        self.records.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn estimate(&self, algorithm: AlgorithmKind, metric: &str) -> Option<&Estimate> {
        self.aggregates.get(&algorithm)?.get(metric)
    }

    pub fn reports(&self) -> impl Iterator<Item = &MetricsReport> + '_ {
        self.records.iter().map(|r| &r.report)
    }
}

/// Mean and 95% t-interval per algorithm and metric over the defined values.
pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Aggregates {
    let mut grouped: BTreeMap<AlgorithmKind, Vec<&MetricsReport>> = BTreeMap::new();
    for report in reports {
        grouped.entry(report.algorithm).or_default().push(report);
    }
    grouped
        .into_iter()
        .map(|(kind, mut runs)| {
            runs.sort_by_key(|r| r.run_id);
            let metrics = METRIC_NAMES
                .iter()
                .map(|&name| {
                    let values: Vec<f64> = runs.iter().filter_map(|r| r.metric(name)).collect();
                    (name.to_string(), Estimate::of(&values, CONFIDENCE_LEVEL))
                })
                .collect();
            (kind, metrics)
        })
        .collect()
}

/// Training then deployment for one algorithm and run index.
pub fn simulate_run(config: &ExperimentConfig, algorithm: AlgorithmKind, run_id: usize) -> Result<RunRecord> {
    let seed = rng::run_seed(config.master_seed, run_id);
    let attempt = || -> Result<RunRecord> {
        let trained = run_training_phase(config, algorithm, seed)?;
        let log = run_deployment_phase(config, algorithm, &trained.weights, seed, run_id)?;
        RunRecord::from_log(log, seed, trained.history)
    };
    attempt().map_err(|e| Error::Run {
        algorithm,
        run_id,
        source: Box::new(e),
    })
}

/// `n_runs` seeds for every algorithm, executed in parallel.
pub fn run_experiment(config: &ExperimentConfig, algorithms: &[AlgorithmKind]) -> Result<RunResults> {
    config.validate()?;
    if algorithms.is_empty() {
        return Err(Error::Usage("no algorithms selected".into()));
    }
    let jobs: Vec<(AlgorithmKind, usize)> = algorithms
        .iter()
        .flat_map(|&kind| (0..config.n_runs).map(move |run| (kind, run)))
        .collect();
    let records = jobs
        .into_par_iter()
        .map(|(kind, run)| simulate_run(config, kind, run))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResults::from_records(config.clone(), records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// Contiguous equal-width bins `[k·w, (k+1)·w)` with per-bin mean and population sd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub width: f64,
    pub first_bin: i64,
    pub bins: Vec<CurveBin>,
}

impl BinnedCurve {
    pub fn from_points(points: &[(f64, f64)], width: f64) -> Self {
        let index = |x: f64| (x / width).floor() as i64;
        let Some(first) = points.iter().map(|p| index(p.0)).min() else {
            return Self { width, first_bin: 0, bins: Vec::new() };
        };
        let last = points.iter().map(|p| index(p.0)).max().unwrap_or(first);
        let mut members: Vec<Vec<f64>> = vec![Vec::new(); (last - first + 1) as usize];
        for &(x, y) in points {
            members[(index(x) - first) as usize].push(y);
        }
        let bins = members
            .iter()
            .enumerate()
            .map(|(offset, ys)| {
                let k = first + offset as i64;
                let populated = !ys.is_empty();
                CurveBin {
                    lo: k as f64 * width,
                    hi: (k + 1) as f64 * width,
                    count: ys.len(),
                    mean: populated.then(|| mean(ys)),
                    std: populated.then(|| population_variance(ys).sqrt()),
                }
            })
            .collect();
        Self { width, first_bin: first, bins }
    }

    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `(bin index, mean)` of populated bins.
    pub fn populated(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.bins
            .iter()
            .enumerate()
            .filter_map(|(o, b)| b.mean.map(|m| (self.first_bin + o as i64, m)))
    }
}

/// Mean consumed genre minus preference, binned by preference, pooled over runs.
pub fn deviation_curve(results: &RunResults, algorithm: AlgorithmKind) -> BinnedCurve {
    let points: Vec<(f64, f64)> = results
        .runs_of(algorithm)
        .flat_map(|r| r.summaries.iter().map(|s| (s.preference, s.deviation())))
        .collect();
    BinnedCurve::from_points(&points, CURVE_BIN_WIDTH)
}

/// Consumed genre variance binned by preference, pooled over runs.
pub fn variance_curve(results: &RunResults, algorithm: AlgorithmKind) -> BinnedCurve {
    let points: Vec<(f64, f64)> = results
        .runs_of(algorithm)
        .flat_map(|r| r.summaries.iter().map(|s| (s.preference, s.genre_variance)))
        .collect();
    BinnedCurve::from_points(&points, CURVE_BIN_WIDTH)
}

/// Index pairs `(a, b)`, `a < b`, of `users` users: all of them, or
/// `sample` of them drawn without replacement from `seed`.
pub fn user_pairs(users: usize, sample: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = users * users.saturating_sub(1) / 2;
    if sample == 0 || sample >= total {
        return (0..users).flat_map(|a| (a + 1..users).map(move |b| (a, b))).collect();
    }
    let mut picks = index::sample(&mut rng::pair_stream(seed), total, sample).into_vec();
    picks.sort_unstable();
    let mut pairs = Vec::with_capacity(sample);
    let (mut row, mut row_start) = (0usize, 0usize);
    for k in picks {
        while k >= row_start + (users - 1 - row) {
            row_start += users - 1 - row;
            row += 1;
        }
        pairs.push((row, row + 1 + (k - row_start)));
    }
    pairs
}

/// Total pairwise consumed-genre distance binned by preference distance.
///
/// `pair_sample_size` pairs per run (0 = every pair), drawn from the run seed.
pub fn pairwise_distance_curve(results: &RunResults, algorithm: AlgorithmKind, pair_sample_size: usize) -> BinnedCurve {
    let points: Vec<(f64, f64)> = results
        .runs_of(algorithm)
        .collect::<Vec<_>>()
        .par_iter()
        .flat_map_iter(|run| {
            let log = &run.log;
            let sorted: Vec<Vec<f64>> = (0..log.users.len())
                .map(|j| {
                    let mut g = log.genres(j);
                    g.sort_by(f64::total_cmp);
                    g
                })
                .collect();
            user_pairs(log.users.len(), pair_sample_size, run.seed)
                .into_iter()
                .map(|(a, b)| {
                    let x = (log.users[a].preference - log.users[b].preference).abs();
                    (x, sorted_pairwise_distance(&sorted[a], &sorted[b]))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    BinnedCurve::from_points(&points, CURVE_BIN_WIDTH)
}

/// Mean curve value over the bins every curve populates.
pub fn curve_heights(curves: &[(AlgorithmKind, BinnedCurve)]) -> Vec<(AlgorithmKind, f64)> {
    let shared: Vec<i64> = match curves.first() {
        None => return Vec::new(),
        Some((_, first)) => first
            .populated()
            .map(|(k, _)| k)
            .filter(|k| curves.iter().all(|(_, c)| c.populated().any(|(j, _)| j == *k)))
            .collect(),
    };
    curves
        .iter()
        .map(|(kind, curve)| {
            let ys: Vec<f64> = curve.populated().filter(|(k, _)| shared.contains(k)).map(|(_, y)| y).collect();
            (*kind, mean(&ys))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingConsistency {
    pub kendall_tau: Option<f64>,
    pub identical_order: bool,
    pub order_a: Vec<AlgorithmKind>,
    pub order_b: Vec<AlgorithmKind>,
}

fn descending(scores: &[(AlgorithmKind, f64)]) -> Vec<AlgorithmKind> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.into_iter().map(|(k, _)| k).collect()
}

/// Compares the descending orders induced by two per-algorithm scores.
pub fn ranking_consistency(a: &[(AlgorithmKind, f64)], b: &[(AlgorithmKind, f64)]) -> Result<RankingConsistency> {
    if a.len() < 2 || a.len() != b.len() {
        return Err(Error::Usage("ranking needs the same two or more algorithms on both sides".into()));
    }
    let mut ys = Vec::with_capacity(a.len());
    for (kind, _) in a {
        let y = b
            .iter()
            .find(|(k, _)| k == kind)
            .ok_or_else(|| Error::Usage(format!("{kind} missing from second ranking")))?;
        ys.push(y.1);
    }
    let xs: Vec<f64> = a.iter().map(|(_, x)| *x).collect();
    let order_a = descending(a);
    let order_b = descending(b);
    Ok(RankingConsistency {
        kendall_tau: kendall_tau_b(&xs, &ys),
        identical_order: order_a == order_b,
        order_a,
        order_b,
    })
}

/// Correlation and ranking summary across algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub pearson_fig2: Option<f64>,
    pub pearson_fig2_algorithm_means: Option<f64>,
    #[serde(rename = "pearson_appB")]
    pub pearson_appb: Option<f64>,
    #[serde(rename = "pearson_appB_algorithm_means")]
    pub pearson_appb_algorithm_means: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub exact_ranking_match: bool,
    pub filter_bubble_order: Vec<AlgorithmKind>,
    pub pairwise_height_order: Vec<AlgorithmKind>,
    pub algorithms: Aggregates,
}

fn paired(reports: &[&MetricsReport], x: impl Fn(&MetricsReport) -> Option<f64>) -> (Vec<f64>, Vec<f64>) {
    reports
        .iter()
        .filter_map(|r| Some((x(r)?, r.natural_homogeneity?)))
        .unzip()
}

/// Homogeneity correlations and the filter-bubble versus pairwise-distance
/// ranking, over the original seven algorithms present in `results`.
pub fn compare(results: &RunResults, pair_sample_size: usize) -> Result<CompareSummary> {
    let kinds: Vec<AlgorithmKind> = results
        .algorithms()
        .into_iter()
        .filter(|k| AlgorithmKind::ORIGINAL.contains(k))
        .collect();
    let reports: Vec<&MetricsReport> = results.reports().filter(|r| kinds.contains(&r.algorithm)).collect();

    let (hx, hy) = paired(&reports, |r| r.homogeneity);
    let (ax, ay) = paired(&reports, |r| r.alt_homogeneity);
    let mean_of = |kind: AlgorithmKind, metric: &str| results.estimate(kind, metric).map(|e| e.mean);
    let means = |metric: &str| -> (Vec<f64>, Vec<f64>) {
        kinds
            .iter()
            .filter_map(|&k| Some((mean_of(k, metric)?, mean_of(k, "natural_homogeneity")?)))
            .unzip()
    };
    let (mhx, mhy) = means("homogeneity");
    let (max, may) = means("alt_homogeneity");

    let bubble: Vec<(AlgorithmKind, f64)> = kinds
        .iter()
        .filter_map(|&k| Some((k, mean_of(k, "filter_bubble")?)))
        .collect();
    let curves: Vec<(AlgorithmKind, BinnedCurve)> = bubble
        .iter()
        .map(|&(k, _)| (k, pairwise_distance_curve(results, k, pair_sample_size)))
        .collect();
    let heights = curve_heights(&curves);
    let ranking = if bubble.len() >= 2 {
        Some(ranking_consistency(&bubble, &heights)?)
    } else {
        None
    };

    Ok(CompareSummary {
        pearson_fig2: pearson(&hx, &hy),
        pearson_fig2_algorithm_means: pearson(&mhx, &mhy),
        pearson_appb: pearson(&ax, &ay),
        pearson_appb_algorithm_means: pearson(&max, &may),
        kendall_tau: ranking.as_ref().and_then(|r| r.kendall_tau),
        exact_ranking_match: ranking.as_ref().is_some_and(|r| r.identical_order),
        filter_bubble_order: ranking.as_ref().map(|r| r.order_a.clone()).unwrap_or_default(),
        pairwise_height_order: ranking.map(|r| r.order_b).unwrap_or_default(),
        algorithms: results.aggregates.clone(),
    })
}
