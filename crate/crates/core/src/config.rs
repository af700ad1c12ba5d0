//! Experiment configuration.
//!
//! Config files are TOML documents whose keys are the field names below.
//! Missing keys fall back to the full-scale defaults; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of users.
    pub m: usize,
    /// Items present before the first round.
    pub k_init: usize,
    /// Items added every round.
    pub k_new: usize,
    /// Number of rounds.
    #[serde(rename = "t")]
    pub rounds: usize,
    /// Number of training worlds used to fit the utility estimator.
    pub k_train: usize,
    pub mu_q: f64,
    pub var_q: f64,
    pub var_g: f64,
    pub var_u: f64,
    /// Variance of the private quality-signal noise.
    pub var_ps: f64,
    /// Variance of the private genre-signal noise.
    pub var_gs: f64,
    /// Exponent on |genre| in the skewed top-pick score.
    pub delta_skew: f64,
    /// Percentage of items flagged by the skewed top-pick recommender.
    pub k_top_pct: f64,
    /// Width of the genre bins used by binned consumption.
    pub genre_bin_width: f64,
    pub svd_rank: usize,
    /// Seeds per algorithm.
    pub n_runs: usize,
    pub master_seed: u64,
    /// User pairs sampled for the pairwise-distance curve; 0 means all pairs.
    pub pair_sample_size: usize,
    /// When positive, genres and preferences are drawn from an equal mixture
    /// of two normals centred at `±bimodal_offset` (same variances).
    pub bimodal_offset: f64,
    /// Show the true genre as the distance `|p_j - g_i|` to each user's
    /// preference instead of the raw value `g_i`. Off by default.
    pub genre_as_distance: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            k_init: 10,
            k_new: 5,
            rounds: 100,
            k_train: 10,
            mu_q: 100.0,
            var_q: 10.0,
            var_g: 10.0,
            var_u: 10.0,
            var_ps: 10.0,
            var_gs: 10.0,
            delta_skew: 1.0,
            k_top_pct: 25.0,
            genre_bin_width: 1.0,
            svd_rank: 16,
            n_runs: 15,
            master_seed: 20240513,
            pair_sample_size: 20_000,
            bimodal_offset: 0.0,
            genre_as_distance: false,
        }
    }
}

impl ExperimentConfig {
    /// Reduced profile that runs the full nine-algorithm sweep in minutes.
    pub fn desk() -> Self {
        Self {
            m: 300,
            rounds: 60,
            k_init: 10,
            k_new: 5,
            k_train: 5,
            n_runs: 8,
            pair_sample_size: 0,
            ..Self::default()
        }
    }

    /// Total number of items in a world after the last round.
    pub fn total_items(&self) -> usize {
        self.k_init + self.rounds * self.k_new
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts: [(&'static str, usize); 5] = [
            ("m", self.m),
            ("t", self.rounds),
            ("k_init", self.k_init),
            ("k_train", self.k_train),
            ("svd_rank", self.svd_rank),
        ];
        for (field, value) in positive_counts {
            if value == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.n_runs == 0 {
            return Err(Error::config("n_runs", "must be at least 1"));
        }
        if self.total_items() < self.rounds {
            return Err(Error::config(
                "k_new",
                format!(
                    "k_init + t * k_new = {} is smaller than t = {}; users would run out of items",
                    self.total_items(),
                    self.rounds
                ),
            ));
        }
        if self.m > u32::MAX as usize || self.total_items() > u32::MAX as usize {
            return Err(Error::config("m", "world exceeds 32-bit id space"));
        }
        let variances: [(&'static str, f64); 5] = [
            ("var_q", self.var_q),
            ("var_g", self.var_g),
            ("var_u", self.var_u),
            ("var_ps", self.var_ps),
            ("var_gs", self.var_gs),
        ];
        for (field, value) in variances {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(field, format!("must be a positive variance, got {value}")));
            }
        }
        if !self.mu_q.is_finite() {
            return Err(Error::config("mu_q", "must be finite"));
        }
        if !(self.k_top_pct > 0.0 && self.k_top_pct <= 100.0) {
            return Err(Error::config(
                "k_top_pct",
                format!("must lie in (0, 100], got {}", self.k_top_pct),
            ));
        }
        if !self.delta_skew.is_finite() {
            return Err(Error::config("delta_skew", "must be finite"));
        }
        if !(self.genre_bin_width.is_finite() && self.genre_bin_width > 0.0) {
            return Err(Error::config("genre_bin_width", "must be positive"));
        }
        if !(self.bimodal_offset.is_finite() && self.bimodal_offset >= 0.0) {
            return Err(Error::config("bimodal_offset", "must be nonnegative"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::config("master_seed", "must fit in a signed 64-bit integer"));
        }
        Ok(())
    }

    /// Parses and validates a TOML config document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            line: e.span().map(|span| line_of(text, span.start)),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config fields are all TOML-representable")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Reads a config file; unspecified keys take their defaults.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text)
}
