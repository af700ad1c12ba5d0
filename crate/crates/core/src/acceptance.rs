//! Acceptance checks over a finished experiment and the numerical property suites.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::engine::choose_item;
use crate::error::Result;
use crate::experiment::{compare, simulate_run, CompareSummary, RunResults};
use crate::learner::{fit_least_squares, standardize};
use crate::metrics::{pairwise_genre_distance, pooled_genre_variance, sorted_pairwise_distance};
use crate::recommend::{svd_user_similarity, top_count, AlgorithmKind};
use crate::signals::FeatureMatrix;
use crate::stats::Estimate;

use AlgorithmKind::{BinnedConsumption, Consumption, Hybrid, Perfect, SkewedTopPick, Svd, TrueGenre, TrueQuality};

const NO_REC: AlgorithmKind = AlgorithmKind::None;

pub const IDENTITY_TOLERANCE: f64 = 1e-9;
pub const FIG2_MIN_PEARSON: f64 = 0.80;
pub const APPB_MIN_PEARSON: f64 = 0.95;
pub const INTRA_MAX_RELATIVE_CHANGE: f64 = 0.25;
pub const DESK_MIN_TAU: f64 = 0.71;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] criterion {} ({}): {}", self.id, self.name, self.detail)
    }
}

/// Accumulates named sub-checks into one outcome.
struct Checks {
    passed: bool,
    notes: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self { passed: true, notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, note: String) {
        self.passed &= ok;
        self.notes.push(format!("{}{note}", if ok { "" } else { "FAILED " }));
    }

    fn finish(self, id: u8, name: &'static str) -> Outcome {
        Outcome { id, name, passed: self.passed, detail: self.notes.join("; ") }
    }
}

fn estimate<'a>(results: &'a RunResults, kind: AlgorithmKind, metric: &str) -> Option<&'a Estimate> {
    results.estimate(kind, metric)
}

fn show(e: Option<&Estimate>) -> String {
    match e {
        Some(Estimate { mean, ci_low: Some(lo), ci_high: Some(hi), .. }) => format!("{mean:.4} [{lo:.4}, {hi:.4}]"),
        Some(e) => format!("{:.4}", e.mean),
        None => "n/a".into(),
    }
}

/// `a` below `b` with separated intervals.
fn below(checks: &mut Checks, results: &RunResults, metric: &str, a: AlgorithmKind, b: AlgorithmKind) {
    let (ea, eb) = (estimate(results, a, metric), estimate(results, b, metric));
    let ok = matches!((ea, eb), (Some(x), Some(y)) if x.below(y));
    checks.check(ok, format!("{metric} {a} {} < {b} {}", show(ea), show(eb)));
}

fn overlapping(checks: &mut Checks, results: &RunResults, metric: &str, a: AlgorithmKind, b: AlgorithmKind) {
    let (ea, eb) = (estimate(results, a, metric), estimate(results, b, metric));
    let ok = matches!((ea, eb), (Some(x), Some(y)) if x.overlaps(y));
    checks.check(ok, format!("{metric} {a} {} overlaps {b} {}", show(ea), show(eb)));
}

/// Pooled variance equals inter plus intra on every run.
pub fn criterion_identity(results: &RunResults) -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for run in &results.records {
        let pooled = pooled_genre_variance(&run.log);
        let parts = run.report.inter + run.report.intra;
        let rel = (pooled - parts).abs() / pooled.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if !(rel <= IDENTITY_TOLERANCE) {
            failures += 1;
        }
    }
    Outcome {
        id: 1,
        name: "variance decomposition identity",
        passed: failures == 0 && !results.records.is_empty(),
        detail: format!(
            "{} runs, worst relative error {worst:.3e}, {failures} above {IDENTITY_TOLERANCE:e}",
            results.records.len()
        ),
    }
}

pub fn criterion_homogeneity_correlation(summary: &CompareSummary) -> Outcome {
    let mut checks = Checks::new();
    let show = |r: Option<f64>| r.map_or("n/a".to_string(), |r| format!("{r:.4}"));
    checks.check(
        summary.pearson_fig2.is_some_and(|r| r >= FIG2_MIN_PEARSON),
        format!("homogeneity r = {} (>= {FIG2_MIN_PEARSON})", show(summary.pearson_fig2)),
    );
    checks.check(
        summary.pearson_appb.is_some_and(|r| r >= APPB_MIN_PEARSON),
        format!("alternative homogeneity r = {} (>= {APPB_MIN_PEARSON})", show(summary.pearson_appb)),
    );
    checks.finish(2, "homogeneity tracks inverse pooled spread")
}

pub fn criterion_consumption_recommenders(results: &RunResults) -> Outcome {
    let mut checks = Checks::new();
    let base = estimate(results, NO_REC, "intra").map(|e| e.mean);
    for kind in [Consumption, Svd, Hybrid] {
        below(&mut checks, results, "inter", kind, NO_REC);
        let intra = estimate(results, kind, "intra").map(|e| e.mean);
        let change = match (intra, base) {
            (Some(a), Some(b)) => Some((a - b).abs() / b.abs()),
            _ => None,
        };
        checks.check(
            change.is_some_and(|c| c < INTRA_MAX_RELATIVE_CHANGE),
            format!(
                "intra {kind} changes {} vs none",
                change.map_or("n/a".into(), |c| format!("{:.1}%", 100.0 * c))
            ),
        );
    }
    checks.finish(3, "consumption recommenders narrow users collectively")
}

pub fn criterion_baselines(results: &RunResults) -> Outcome {
    let mut checks = Checks::new();
    below(&mut checks, results, "filter_bubble", NO_REC, TrueGenre);
    below(&mut checks, results, "filter_bubble", NO_REC, Perfect);
    below(&mut checks, results, "inter", TrueQuality, NO_REC);
    below(&mut checks, results, "intra", NO_REC, TrueQuality);
    checks.finish(4, "baseline recommenders")
}

pub fn criterion_novel_recommenders(results: &RunResults) -> Outcome {
    let mut checks = Checks::new();
    below(&mut checks, results, "intra", NO_REC, BinnedConsumption);
    below(&mut checks, results, "intra", Hybrid, BinnedConsumption);
    below(&mut checks, results, "inter", BinnedConsumption, NO_REC);
    below(&mut checks, results, "filter_bubble", BinnedConsumption, NO_REC);
    below(&mut checks, results, "inter", NO_REC, SkewedTopPick);
    below(&mut checks, results, "intra", NO_REC, SkewedTopPick);
    checks.finish(5, "binned and skewed recommenders")
}

pub fn criterion_ranking(summary: &CompareSummary, min_tau: f64) -> Outcome {
    let tau = summary.kendall_tau;
    let order = |o: &[AlgorithmKind]| o.iter().map(|k| k.name()).collect::<Vec<_>>().join(">");
    Outcome {
        id: 6,
        name: "filter-bubble and pairwise-distance rankings agree",
        passed: tau.is_some_and(|t| t >= min_tau - 1e-12),
        detail: format!(
            "tau = {} (>= {min_tau}), exact match {}, bubble {} / pairwise {}",
            tau.map_or("n/a".into(), |t| format!("{t:.4}")),
            summary.exact_ranking_match,
            order(&summary.filter_bubble_order),
            order(&summary.pairwise_height_order)
        ),
    }
}

pub fn criterion_quality_component(results: &RunResults) -> Outcome {
    let mut checks = Checks::new();
    overlapping(&mut checks, results, "mean_q", BinnedConsumption, Hybrid);
    below(&mut checks, results, "mean_q", SkewedTopPick, Hybrid);
    checks.finish(7, "quality component of novel recommenders")
}

/// Criteria 1 to 7 on a finished nine-algorithm experiment.
pub fn evaluate(results: &RunResults, min_tau: f64) -> Result<Vec<Outcome>> {
    let summary = compare(results, results.config.pair_sample_size)?;
    Ok(vec![
        criterion_identity(results),
        criterion_homogeneity_correlation(&summary),
        criterion_consumption_recommenders(results),
        criterion_baselines(results),
        criterion_novel_recommenders(results),
        criterion_ranking(&summary, min_tau),
        criterion_quality_component(results),
    ])
}

fn matrix_of(columns: usize, rows: Vec<Vec<f64>>) -> FeatureMatrix {
    let names = (0..columns).map(|c| format!("x{c}")).collect();
    let keyed = rows.into_iter().enumerate().map(|(i, r)| ((0, i as u32), r)).collect();
    FeatureMatrix::from_rows(names, keyed).expect("rectangular rows")
}

/// Noiseless linear targets are recovered to within `1e-6`.
pub fn check_ols_recovery(trials: usize, seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let p = rng.gen_range(1..=4);
        let n = rng.gen_range(p + 2..40);
        let beta: Vec<f64> = (0..=p).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| beta[0] + r.iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>())
            .collect();
        let raw = rows.clone();
        let Ok((z, stats)) = standardize(matrix_of(p, rows)) else {
            return (false, "standardize failed".into());
        };
        let Ok(w) = fit_least_squares(&z, &y, stats) else {
            return (false, "fit failed".into());
        };
        for (r, target) in raw.iter().zip(&y) {
            let err = (w.predict(r).unwrap_or(f64::NAN) - target).abs() / target.abs().max(1.0);
            worst = worst.max(err);
        }
        // raw-scale coefficients: w_c / sd_c
        for c in 0..p {
            let implied = w.coefficients[c] / w.stats.0[c].sd;
            worst = worst.max((implied - beta[c + 1]).abs());
        }
    }
    (worst < 1e-6, format!("OLS recovery worst error {worst:.2e}"))
}

/// Cosine similarity of user rows in the rank-`k` left singular space.
fn dense_similarity_oracle(a: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] * sigma[i] > 1e-10 * smax * smax).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    order.truncate(rank);
    let m = a.nrows();
    let mut emb = DMatrix::<f64>::zeros(m, order.len());
    for (c, &k) in order.iter().enumerate() {
        for r in 0..m {
            emb[(r, c)] = u[(r, k)] * sigma[k];
        }
    }
    let norms: Vec<f64> = (0..m).map(|r| emb.row(r).norm()).collect();
    DMatrix::from_fn(m, m, |i, j| {
        // rows orthogonal to the kept subspace carry no signal
        if norms[i] < 1e-9 || norms[j] < 1e-9 {
            0.0
        } else {
            (emb.row(i).dot(&emb.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    })
}

/// Gram-eigen similarity against a dense SVD on small random histories.
pub fn check_svd_oracle(trials: usize, seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for _ in 0..trials {
        let users = rng.gen_range(2..=6);
        let items = rng.gen_range(2..=6);
        let rank = rng.gen_range(1..=6);
        let histories: Vec<Vec<u32>> = (0..users)
            .map(|_| (0..items as u32).filter(|_| rng.gen_bool(0.5)).collect())
            .collect();
        let dense = DMatrix::from_fn(users, items, |j, i| {
            if histories[j].contains(&(i as u32)) {
                1.0
            } else {
                0.0
            }
        });
        let oracle = dense_similarity_oracle(&dense, rank);
        // a gap between kept and dropped singular values keeps the subspace well defined
        let sv = dense.clone().singular_values();
        let mut sorted: Vec<f64> = sv.iter().copied().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if rank < sorted.len() && (sorted[rank - 1] - sorted[rank]).abs() < 1e-6 {
            continue;
        }
        let sim = svd_user_similarity(&histories, items, rank);
        compared += 1;
        for a in 0..users {
            for b in 0..users {
                worst = worst.max((sim.get(a, b) - oracle[(a, b)]).abs());
            }
        }
    }
    (
        worst < 1e-8 && compared > trials / 2,
        format!("SVD similarity vs dense oracle worst {worst:.2e} over {compared} matrices"),
    )
}

/// Prefix-sum pairwise distance against the quadratic double sum.
pub fn check_pairwise_distance(instances: usize, seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    for _ in 0..instances {
        let len = rng.gen_range(1..60);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(-50i32..50) as f64).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        if sorted_pairwise_distance(&a, &b) != pairwise_genre_distance(&a, &b) {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("pairwise distance: {mismatches} of {instances} instances differ"))
}

pub fn check_standardization(seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|_| vec![rng.gen_range(-1e3..1e3), 7.0 + rng.gen_range(0.0..1e-3), 4.0])
        .collect();
    let Ok((z, stats)) = standardize(matrix_of(3, rows)) else {
        return (false, "standardize failed".into());
    };
    let mut worst = 0.0f64;
    for c in 0..2 {
        let col: Vec<f64> = z.column(c).collect();
        let mean = crate::stats::mean(&col);
        let var = crate::stats::population_variance(&col);
        worst = worst.max(mean.abs()).max((var - 1.0).abs());
    }
    let constant_ok = stats.0[2].degenerate && z.column(2).all(|v| v == 0.0);
    (
        worst < 1e-9 && constant_ok,
        format!("standardized mean/variance worst deviation {worst:.2e}, constant column zeroed {constant_ok}"),
    )
}

pub fn check_ties_and_counts() -> (bool, String) {
    let ties = choose_item(&[5, 2, 9], &[1.0, 1.0, 0.5]).ok() == Some(2)
        && choose_item(&[3], &[0.0]).ok() == Some(3)
        && choose_item(&[0, 1, 2], &[-1.0, 2.0, 2.0]).ok() == Some(1);
    let counts = top_count(25.0, 10) == 3
        && top_count(25.0, 4) == 1
        && top_count(25.0, 1) == 1
        && top_count(100.0, 7) == 7
        && top_count(10.0, 11) == 2;
    (ties && counts, format!("tie-break {ties}, ceiling counts {counts}"))
}

/// Two independent simulations of the same run are bit-identical.
pub fn check_determinism(config: &ExperimentConfig, kind: AlgorithmKind) -> Result<(bool, String)> {
    let first = simulate_run(config, kind, 0)?;
    let second = simulate_run(config, kind, 0)?;
    let same_log = first.log == second.log;
    let same_metrics = first.report == second.report
        && [first.report.inter, first.report.intra]
            .iter()
            .zip([second.report.inter, second.report.intra])
            .all(|(a, b)| a.to_bits() == b.to_bits());
    Ok((
        same_log && same_metrics,
        format!("{kind} rerun identical log {same_log}, identical metrics {same_metrics}"),
    ))
}

/// The numerical property suites that need no full experiment.
pub fn criterion_numerical(config: &ExperimentConfig) -> Result<Outcome> {
    let mut checks = Checks::new();
    for (ok, note) in [
        check_ols_recovery(200, 1),
        check_svd_oracle(200, 2),
        check_pairwise_distance(200, 3),
        check_standardization(4),
        check_ties_and_counts(),
        check_determinism(config, Hybrid)?,
    ] {
        checks.check(ok, note);
    }
    Ok(checks.finish(8, "numerical property suites"))
}
