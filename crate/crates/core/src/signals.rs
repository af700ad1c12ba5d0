//! Private per-(user, item) signals and the feature rows built from them.

use crate::error::{Error, Result};
use crate::recommend::RecSignalMatrix;
use crate::world::{true_utility, ItemId, User, UserId, WorldState};

/// Noisy quality and genre estimates, drawn once when an item spawns.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateSignals {
    users: usize,
    quality: Vec<f64>,
    genre: Vec<f64>,
}

impl PrivateSignals {
    pub(crate) fn new(users: usize, item_capacity: usize) -> Self {
        Self {
            users,
            quality: Vec::with_capacity(users * item_capacity),
            genre: Vec::with_capacity(users * item_capacity),
        }
    }

    pub(crate) fn push_item(&mut self, users: usize, mut draw: impl FnMut(usize) -> (f64, f64)) {
        debug_assert_eq!(users, self.users);
        for j in 0..users {
            let (q, g) = draw(j);
            self.quality.push(q);
            self.genre.push(g);
        }
    }

    pub fn items(&self) -> usize {
        if self.users == 0 {
            0
        } else {
            self.quality.len() / self.users
        }
    }

    /// `q^j_i`
    pub fn quality(&self, user: UserId, item: ItemId) -> f64 {
        self.quality[item as usize * self.users + user as usize]
    }

    /// `g^j_i`
    pub fn genre(&self, user: UserId, item: ItemId) -> f64 {
        self.genre[item as usize * self.users + user as usize]
    }
}

/// `|p_j - g^j_i|`, the mismatch a user perceives through their own genre estimate.
pub fn perceived_distance(user: &User, item: ItemId, signals: &PrivateSignals) -> f64 {
    (user.preference - signals.genre(user.id, item)).abs()
}

pub const QUALITY_COLUMN: &str = "q_sig";
pub const DISTANCE_COLUMN: &str = "distance";

/// Row-major feature table: one row per (user, available item).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    columns: Vec<String>,
    keys: Vec<(UserId, ItemId)>,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(columns: Vec<String>, rows: Vec<((UserId, ItemId), Vec<f64>)>) -> Result<Self> {
        let width = columns.len();
        let mut matrix = Self {
            columns,
            keys: Vec::with_capacity(rows.len()),
            values: Vec::with_capacity(rows.len() * width),
        };
        for (key, row) in rows {
            if row.len() != width {
                return Err(Error::Internal(format!(
                    "row of width {} in a {width}-column matrix",
                    row.len()
                )));
            }
            matrix.keys.push(key);
            matrix.values.extend_from_slice(&row);
        }
        Ok(matrix)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[(UserId, ItemId)] {
        &self.keys
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let w = self.width();
        &self.values[index * w..(index + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width().max(1)).take(self.len())
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |row| row[c])
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Appends the rows of `other`, which must share the column layout.
    pub fn append(&mut self, other: FeatureMatrix) -> Result<()> {
        if other.columns != self.columns {
            return Err(Error::Internal("column layouts differ".into()));
        }
        self.keys.extend(other.keys);
        self.values.extend(other.values);
        Ok(())
    }

    /// True utility of each row's (user, item) pair in `state`.
    pub fn targets(&self, state: &WorldState) -> Vec<f64> {
        self.keys
            .iter()
            .map(|&(j, i)| true_utility(&state.users()[j as usize], &state.items()[i as usize]))
            .collect()
    }
}

/// Assembles `[q_sig, distance, rec...]` for every user and their available items.
pub fn build_features(state: &WorldState, rec: &RecSignalMatrix) -> Result<FeatureMatrix> {
    if rec.users() != state.users().len() || rec.items() < state.items().len() {
        return Err(Error::Internal(format!(
            "recommendation signals cover {}x{} but the world has {}x{}",
            rec.users(),
            rec.items(),
            state.users().len(),
            state.items().len()
        )));
    }
    let mut columns = vec![QUALITY_COLUMN.to_string(), DISTANCE_COLUMN.to_string()];
    columns.extend(rec.columns().iter().map(|c| c.to_string()));
    let width = columns.len();

    let signals = state.signals();
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for user in state.users() {
        for item in state.available_items(user.id) {
            keys.push((user.id, item));
            values.push(signals.quality(user.id, item));
            values.push(perceived_distance(user, item, signals));
            values.extend_from_slice(rec.get(user.id, item));
        }
    }
    debug_assert_eq!(values.len(), keys.len() * width);
    Ok(FeatureMatrix { columns, keys, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::recommend::{recommend, AlgorithmKind, RecParams};
    use crate::world::init_world;

    fn signals_with(genre: f64) -> PrivateSignals {
        let mut s = PrivateSignals::new(1, 1);
        s.push_item(1, |_| (0.0, genre));
        s
    }

    #[test]
    fn distance_cases() {
        let u = User { id: 0, preference: 2.0 };
        assert_eq!(perceived_distance(&u, 0, &signals_with(2.0)), 0.0);
        let u = User { id: 0, preference: -1.0 };
        assert_eq!(perceived_distance(&u, 0, &signals_with(3.0)), 4.0);
        let swapped = User { id: 0, preference: 3.0 };
        assert_eq!(perceived_distance(&swapped, 0, &signals_with(-1.0)), 4.0);
    }

    fn world() -> (ExperimentConfig, WorldState) {
        let config = ExperimentConfig { m: 20, k_init: 8, k_new: 3, rounds: 4, ..Default::default() };
        let mut state = init_world(&config, 4).unwrap();
        state.begin_round();
        (config, state)
    }

    #[test]
    fn column_counts_follow_algorithm() {
        let (_, state) = world();
        let none = build_features(&state, &recommend(&state, AlgorithmKind::None, &RecParams::default())).unwrap();
        assert_eq!(none.columns(), ["q_sig", "distance"]);
        let perfect = build_features(&state, &recommend(&state, AlgorithmKind::Perfect, &RecParams::default())).unwrap();
        assert_eq!(perfect.columns(), ["q_sig", "distance", "quality", "genre"]);
        let row = perfect.row(0);
        let (j, i) = perfect.keys()[0];
        assert_eq!(row[2], state.items()[i as usize].quality);
        assert_eq!(row[3], state.items()[i as usize].genre);
        assert_eq!(row[1], perceived_distance(&state.users()[j as usize], i, state.signals()));
        assert!(none.column(1).all(|d| d >= 0.0));
    }

    #[test]
    fn single_pair_single_row() {
        let config = ExperimentConfig { m: 1, k_init: 1, k_new: 0, rounds: 1, ..Default::default() };
        let mut state = init_world(&config, 1).unwrap();
        state.begin_round();
        let x = build_features(&state, &recommend(&state, AlgorithmKind::None, &RecParams::default())).unwrap();
        assert_eq!(x.len(), 1);
    }

    #[test]
    fn domain_mismatch_is_an_error() {
        let (_, state) = world();
        let rec = RecSignalMatrix::shared(vec![], 3, 5, vec![]);
        assert!(matches!(build_features(&state, &rec), Err(Error::Internal(_))));
    }

    #[test]
    fn signals_fixed_across_rounds() {
        let (config, mut state) = world();
        let rec = recommend(&state, AlgorithmKind::None, &RecParams::default());
        let first = build_features(&state, &rec).unwrap();
        let lookup = first.keys().iter().copied().zip(first.rows().map(|r| r.to_vec())).collect::<Vec<_>>();
        let choices: Vec<ItemId> = (0..config.m as u32).map(|j| state.available_items(j)[0]).collect();
        state.commit(&choices).unwrap();
        state.begin_round();
        state.spawn_items(config.k_new);
        let later = build_features(&state, &recommend(&state, AlgorithmKind::None, &RecParams::default())).unwrap();
        let mut matched = 0;
        for (key, row) in later.keys().iter().zip(later.rows()) {
            if let Some((_, old)) = lookup.iter().find(|(k, _)| k == key) {
                assert_eq!(old.as_slice(), row);
                matched += 1;
            }
        }
        assert!(matched > 0);
    }

    #[test]
    fn quality_noise_is_unbiased() {
        let config = ExperimentConfig { m: 200, k_init: 500, ..Default::default() };
        let state = init_world(&config, 21).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        for item in state.items() {
            for j in 0..config.m as u32 {
                sum += state.signals().quality(j, item.id) - item.quality;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let se = (config.var_ps / count as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
    }
}
