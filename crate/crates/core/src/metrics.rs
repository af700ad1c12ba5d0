//! Diversity, filter-bubble and homogeneity measures over a consumption log.
//!
//! All variances are population variances. With equal consumption counts per
//! user, the pooled variance of consumed genres then splits exactly into
//! inter-user plus intra-user diversity.

use serde::{Deserialize, Serialize};

use crate::engine::ConsumptionLog;
use crate::error::{Error, Result};
use crate::recommend::AlgorithmKind;
use crate::stats::{mean, population_variance};

#[derive(Debug, Clone, PartialEq)]
pub struct UserSummary {
    pub user: usize,
    pub preference: f64,
    /// Mean consumed genre.
    pub mean_genre: f64,
    /// Consumed genre variance.
    pub genre_variance: f64,
}

impl UserSummary {
    pub fn deviation(&self) -> f64 {
        self.mean_genre - self.preference
    }
}

/// Per-run metric values; `None` marks a metric whose denominator vanished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub algorithm: AlgorithmKind,
    pub run_id: usize,
    pub inter: f64,
    pub intra: f64,
    pub filter_bubble: Option<f64>,
    pub homogeneity: Option<f64>,
    pub alt_homogeneity: Option<f64>,
    pub natural_homogeneity: Option<f64>,
    pub mean_q: f64,
    pub mean_aff: f64,
    pub std_q: f64,
    pub std_aff: f64,
}

/// Names of the report fields that are aggregated across runs.
pub const METRIC_NAMES: [&str; 10] = [
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

impl MetricsReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "inter" => Some(self.inter),
            "intra" => Some(self.intra),
            "filter_bubble" => self.filter_bubble,
            "homogeneity" => self.homogeneity,
            "alt_homogeneity" => self.alt_homogeneity,
            "natural_homogeneity" => self.natural_homogeneity,
            "mean_q" => Some(self.mean_q),
            "mean_aff" => Some(self.mean_aff),
            "std_q" => Some(self.std_q),
            "std_aff" => Some(self.std_aff),
            _ => None,
        }
    }
}

pub fn user_summaries(log: &ConsumptionLog) -> Result<Vec<UserSummary>> {
    if log.rounds() == 0 {
        return Err(Error::Data("log has no rounds".into()));
    }
    log.validate()?;
    Ok(log
        .users
        .iter()
        .enumerate()
        .map(|(j, user)| summarize(j, user.preference, &log.genres(j)))
        .collect())
}

/// Summary of one user given the genres they consumed.
pub fn summarize(user: usize, preference: f64, genres: &[f64]) -> UserSummary {
    UserSummary {
        user,
        preference,
        mean_genre: mean(genres),
        genre_variance: population_variance(genres),
    }
}

/// Population variance of the users' mean consumed genres.
pub fn inter_user_diversity(summaries: &[UserSummary]) -> f64 {
    let means: Vec<f64> = summaries.iter().map(|s| s.mean_genre).collect();
    population_variance(&means)
}

/// Mean of the users' consumed genre variances.
pub fn intra_user_diversity(summaries: &[UserSummary]) -> f64 {
    let variances: Vec<f64> = summaries.iter().map(|s| s.genre_variance).collect();
    mean(&variances)
}

pub fn filter_bubble_effect(inter: f64, intra: f64) -> Option<f64> {
    (intra > 0.0).then(|| inter / intra)
}

/// `1 / sqrt(inter² + intra²)`
pub fn homogeneity(inter: f64, intra: f64) -> Option<f64> {
    let norm = inter.hypot(intra);
    (norm > 0.0).then(|| 1.0 / norm)
}

/// `1 / (inter + intra)`
pub fn alt_homogeneity(inter: f64, intra: f64) -> Option<f64> {
    let sum = inter + intra;
    (sum > 0.0).then(|| 1.0 / sum)
}

/// Inverse standard deviation of all consumed genres pooled with multiplicity.
pub fn natural_homogeneity(log: &ConsumptionLog) -> Option<f64> {
    let var = pooled_genre_variance(log);
    (var > 0.0).then(|| 1.0 / var.sqrt())
}

pub fn pooled_genre_variance(log: &ConsumptionLog) -> f64 {
    let pooled: Vec<f64> = log
        .choices
        .iter()
        .flatten()
        .map(|&i| log.items[i as usize].genre)
        .collect();
    population_variance(&pooled)
}

/// `Σ_{a ∈ A} Σ_{b ∈ B} |a − b|` via sorting and prefix sums.
pub fn pairwise_genre_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    sorted_pairwise_distance(&a, &b)
}

/// As [`pairwise_genre_distance`] for inputs already sorted ascending.
pub fn sorted_pairwise_distance(a: &[f64], b: &[f64]) -> f64 {
    let total_b: f64 = b.iter().sum();
    let mut below = 0usize;
    let mut prefix = 0.0;
    let mut sum = 0.0;
    for &x in a {
        while below < b.len() && b[below] <= x {
            prefix += b[below];
            below += 1;
        }
        let above = b.len() - below;
        sum += x * below as f64 - prefix + (total_b - prefix) - x * above as f64;
    }
    sum
}

/// Mean and population standard deviation of the quality and affinity parts
/// of every realised utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityComponents {
    pub mean_q: f64,
    pub mean_aff: f64,
    pub std_q: f64,
    pub std_aff: f64,
}

pub fn utility_components(log: &ConsumptionLog) -> UtilityComponents {
    let mut quality = Vec::with_capacity(log.events());
    let mut affinity = Vec::with_capacity(log.events());
    for round in &log.choices {
        for (j, &i) in round.iter().enumerate() {
            let item = &log.items[i as usize];
            quality.push(item.quality);
            affinity.push(-(log.users[j].preference - item.genre).abs());
        }
    }
    UtilityComponents {
        mean_q: mean(&quality),
        mean_aff: mean(&affinity),
        std_q: population_variance(&quality).sqrt(),
        std_aff: population_variance(&affinity).sqrt(),
    }
}

pub fn metrics_report(log: &ConsumptionLog) -> Result<MetricsReport> {
    let summaries = user_summaries(log)?;
    let inter = inter_user_diversity(&summaries);
    let intra = intra_user_diversity(&summaries);
    let utility = utility_components(log);
    Ok(MetricsReport {
        algorithm: log.algorithm,
        run_id: log.run_id,
        inter,
        intra,
        filter_bubble: filter_bubble_effect(inter, intra),
        homogeneity: homogeneity(inter, intra),
        alt_homogeneity: alt_homogeneity(inter, intra),
        natural_homogeneity: natural_homogeneity(log),
        mean_q: utility.mean_q,
        mean_aff: utility.mean_aff,
        std_q: utility.std_q,
        std_aff: utility.std_aff,
    })
}
