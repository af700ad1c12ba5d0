//! Recommendation signals `r^j_i(t)` for the nine algorithms.

mod svd;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::signals::PrivateSignals;
use crate::world::{ConsumptionLedger, Item, ItemId, UserId, WorldState};

pub use svd::{svd_user_similarity, svd_user_embedding, UserEmbedding, UserSimilarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    None,
    TrueGenre,
    TrueQuality,
    Perfect,
    Consumption,
    Svd,
    Hybrid,
    BinnedConsumption,
    SkewedTopPick,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 9] = [
        AlgorithmKind::None,
        AlgorithmKind::TrueGenre,
        AlgorithmKind::TrueQuality,
        AlgorithmKind::Perfect,
        AlgorithmKind::Consumption,
        AlgorithmKind::Svd,
        AlgorithmKind::Hybrid,
        AlgorithmKind::BinnedConsumption,
        AlgorithmKind::SkewedTopPick,
    ];

    /// Baselines plus the past-consumption recommenders.
    pub const ORIGINAL: [AlgorithmKind; 7] = [
        AlgorithmKind::None,
        AlgorithmKind::TrueGenre,
        AlgorithmKind::TrueQuality,
        AlgorithmKind::Perfect,
        AlgorithmKind::Consumption,
        AlgorithmKind::Svd,
        AlgorithmKind::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::None => "none",
            AlgorithmKind::TrueGenre => "true-genre",
            AlgorithmKind::TrueQuality => "true-quality",
            AlgorithmKind::Perfect => "perfect",
            AlgorithmKind::Consumption => "consumption",
            AlgorithmKind::Svd => "svd",
            AlgorithmKind::Hybrid => "hybrid",
            AlgorithmKind::BinnedConsumption => "binned-consumption",
            AlgorithmKind::SkewedTopPick => "skewed-top-pick",
        }
    }

    /// Names of the recommendation columns appended to the feature vector.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            AlgorithmKind::None => &[],
            AlgorithmKind::TrueGenre => &["genre"],
            AlgorithmKind::TrueQuality => &["quality"],
            AlgorithmKind::Perfect => &["quality", "genre"],
            AlgorithmKind::Consumption => &["consumption"],
            AlgorithmKind::Svd => &["svd"],
            AlgorithmKind::Hybrid => &["consumption", "svd"],
            AlgorithmKind::BinnedConsumption => &["binned_consumption"],
            AlgorithmKind::SkewedTopPick => &["top_pick"],
        }
    }

    pub fn dimension(self) -> usize {
        self.columns().len()
    }

    pub fn uses_svd(self) -> bool {
        matches!(self, AlgorithmKind::Svd | AlgorithmKind::Hybrid)
    }

    /// Whether every user receives the same signal for a given item.
    pub fn is_personalized(self) -> bool {
        matches!(self, AlgorithmKind::Svd | AlgorithmKind::Hybrid | AlgorithmKind::SkewedTopPick)
    }

    pub fn parse_list(list: &str) -> Result<Vec<AlgorithmKind>, Error> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|kind| kind.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown algorithm `{s}`")))
    }
}

/// Tunables read by the binned, skewed and SVD recommenders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecParams {
    pub delta_skew: f64,
    pub k_top_pct: f64,
    pub genre_bin_width: f64,
    pub svd_rank: usize,
    pub genre_as_distance: bool,
}

impl Default for RecParams {
    fn default() -> Self {
        RecParams::from(&ExperimentConfig::default())
    }
}

impl From<&ExperimentConfig> for RecParams {
    fn from(config: &ExperimentConfig) -> Self {
        Self {
            delta_skew: config.delta_skew,
            k_top_pct: config.k_top_pct,
            genre_bin_width: config.genre_bin_width,
            svd_rank: config.svd_rank,
            genre_as_distance: config.genre_as_distance,
        }
    }
}

/// Recommendation vectors for every (user, item) pair of one round.
///
/// Non-personalized signals are stored once per item.
#[derive(Debug, Clone, PartialEq)]
pub struct RecSignalMatrix {
    columns: Vec<&'static str>,
    users: usize,
    items: usize,
    personal: bool,
    values: Vec<f64>,
}

impl RecSignalMatrix {
    /// `values` is item-major, `items * columns.len()` long.
    pub fn shared(columns: Vec<&'static str>, users: usize, items: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), items * columns.len());
        Self { columns, users, items, personal: false, values }
    }

    /// `values` is user-major, `users * items * columns.len()` long.
    pub fn personal(columns: Vec<&'static str>, users: usize, items: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), users * items * columns.len());
        Self { columns, users, items, personal: true, values }
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn dimension(&self) -> usize {
        self.columns.len()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn get(&self, user: UserId, item: ItemId) -> &[f64] {
        let d = self.columns.len();
        let slot = if self.personal {
            user as usize * self.items + item as usize
        } else {
            item as usize
        };
        &self.values[slot * d..(slot + 1) * d]
    }

    /// Single-column view for `column` across users; mostly for tests.
    pub fn component(&self, user: UserId, item: ItemId, column: usize) -> f64 {
        self.get(user, item)[column]
    }
}

/// Computes this round's signals, deriving the SVD embedding when the kind needs it.
pub fn recommend(state: &WorldState, kind: AlgorithmKind, params: &RecParams) -> RecSignalMatrix {
    let embedding = kind
        .uses_svd()
        .then(|| svd_user_embedding(state.ledger().histories(), state.items().len(), params.svd_rank));
    recommend_with(state, kind, params, embedding.as_ref())
}

/// As [`recommend`], reusing an embedding computed from the round-start ledger.
pub fn recommend_with(
    state: &WorldState,
    kind: AlgorithmKind,
    params: &RecParams,
    embedding: Option<&UserEmbedding>,
) -> RecSignalMatrix {
    let users = state.users().len();
    let items = state.items();
    let n = items.len();
    let ledger = state.ledger();
    let shared = |values: Vec<f64>| RecSignalMatrix::shared(kind.columns().to_vec(), users, n, values);
    let svd_column = || {
        let embedding = embedding.expect("svd recommenders need a user embedding");
        embedding.weighted_counts(ledger.histories(), n)
    };
    let personal = |values: Vec<f64>| RecSignalMatrix::personal(kind.columns().to_vec(), users, n, values);
    let genre_distances = |with_quality: bool| {
        let mut values = Vec::with_capacity(users * n * (1 + with_quality as usize));
        for user in state.users() {
            for item in items {
                if with_quality {
                    values.push(item.quality);
                }
                values.push((user.preference - item.genre).abs());
            }
        }
        personal(values)
    };
    match kind {
        AlgorithmKind::None => shared(Vec::new()),
        AlgorithmKind::TrueGenre if params.genre_as_distance => genre_distances(false),
        AlgorithmKind::Perfect if params.genre_as_distance => genre_distances(true),
        AlgorithmKind::TrueGenre => shared(items.iter().map(|i| i.genre).collect()),
        AlgorithmKind::TrueQuality => shared(items.iter().map(|i| i.quality).collect()),
        AlgorithmKind::Perfect => shared(items.iter().flat_map(|i| [i.quality, i.genre]).collect()),
        AlgorithmKind::Consumption => shared(consumption_signal(ledger)),
        AlgorithmKind::BinnedConsumption => {
            shared(binned_consumption_signal(items, ledger.counts(), params.genre_bin_width))
        }
        AlgorithmKind::Svd => personal(svd_column()),
        AlgorithmKind::Hybrid => {
            let weighted = svd_column();
            let counts = ledger.counts();
            let mut values = Vec::with_capacity(2 * users * n);
            for j in 0..users {
                for i in 0..n {
                    values.push(counts[i] as f64);
                    values.push(weighted[j * n + i]);
                }
            }
            personal(values)
        }
        AlgorithmKind::SkewedTopPick => personal(skewed_top_pick_signal(
            items,
            state.signals(),
            users,
            params.delta_skew,
            params.k_top_pct,
        )),
    }
}

/// `d_i(t)` for each item.
pub fn consumption_signal(ledger: &ConsumptionLedger) -> Vec<f64> {
    ledger.counts().iter().map(|&c| c as f64).collect()
}

/// `Σ_{j'} Sim(j, j') d^{j'}_i` evaluated directly from a similarity matrix.
///
/// Returns a user-major `m × n` table. The engine uses the factored form in
/// [`UserEmbedding::weighted_counts`] instead.
pub fn svd_signal(ledger: &ConsumptionLedger, items: usize, similarity: &UserSimilarity) -> Vec<f64> {
    let m = similarity.users();
    let mut out = vec![0.0; m * items];
    for j in 0..m {
        for (other, history) in ledger.histories().iter().enumerate() {
            let s = similarity.get(j, other);
            if s == 0.0 {
                continue;
            }
            for &i in history {
                out[j * items + i as usize] += s;
            }
        }
    }
    out
}

/// Bin index of `genre` for bins `[k·w, (k+1)·w)`.
pub fn genre_bin(genre: f64, width: f64) -> i64 {
    (genre / width).floor() as i64
}

/// Consumption count z-scored within its genre bin (population statistics).
///
/// Singleton bins and bins with vanishing spread give 0.
pub fn binned_consumption_signal(items: &[Item], counts: &[u32], bin_width: f64) -> Vec<f64> {
    let mut bins: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (idx, item) in items.iter().enumerate() {
        bins.entry(genre_bin(item.genre, bin_width)).or_default().push(idx);
    }
    let mut out = vec![0.0; items.len()];
    for members in bins.values() {
        if members.len() < 2 {
            continue;
        }
        let len = members.len() as f64;
        let mean = members.iter().map(|&i| counts[i] as f64).sum::<f64>() / len;
        let var = members
            .iter()
            .map(|&i| (counts[i] as f64 - mean).powi(2))
            .sum::<f64>()
            / len;
        let sd = var.sqrt();
        if sd < 1e-12 {
            continue;
        }
        for &i in members {
            out[i] = (counts[i] as f64 - mean) / sd;
        }
    }
    out
}

/// Number of items flagged when `pct` percent of `n` are recommended.
pub fn top_count(pct: f64, n: usize) -> usize {
    ((pct * n as f64 / 100.0).ceil() as usize).min(n)
}

/// Flags, per user, the top `⌈k_top_pct% · n⌉` items by `q^j_i · |g_i|^δ`.
///
/// All items in the world are ranked, consumed or not; ties go to the lower id.
pub fn skewed_top_pick_signal(
    items: &[Item],
    signals: &PrivateSignals,
    users: usize,
    delta_skew: f64,
    k_top_pct: f64,
) -> Vec<f64> {
    let n = items.len();
    let k = top_count(k_top_pct, n);
    let skew: Vec<f64> = items.iter().map(|i| i.genre.abs().powf(delta_skew)).collect();
    let mut out = vec![0.0; users * n];
    let mut ranked: Vec<(f64, ItemId)> = Vec::with_capacity(n);
    for j in 0..users {
        ranked.clear();
        ranked.extend(items.iter().map(|i| (signals.quality(j as UserId, i.id) * skew[i.id as usize], i.id)));
        let by_rank = |a: &(f64, ItemId), b: &(f64, ItemId)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if k == 0 {
            continue;
        }
        if k < n {
            ranked.select_nth_unstable_by(k - 1, by_rank);
        }
        for &(_, id) in &ranked[..k] {
            out[j * n + id as usize] = 1.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::init_world;

    fn item(id: ItemId, genre: f64) -> Item {
        Item { id, quality: 100.0, genre, birth_round: 0 }
    }

    #[test]
    fn names_round_trip() {
        for kind in AlgorithmKind::ALL {
            assert_eq!(kind.name().parse::<AlgorithmKind>().unwrap(), kind);
        }
        assert!(matches!("popular".parse::<AlgorithmKind>(), Err(Error::Usage(_))));
        assert_eq!(
            AlgorithmKind::parse_list("none, hybrid").unwrap(),
            vec![AlgorithmKind::None, AlgorithmKind::Hybrid]
        );
    }

    #[test]
    fn dimensions_per_kind() {
        let dims: Vec<usize> = AlgorithmKind::ALL.iter().map(|k| k.dimension()).collect();
        assert_eq!(dims, vec![0, 1, 1, 2, 1, 1, 2, 1, 1]);
    }

    fn fresh(m: usize) -> WorldState {
        let config = ExperimentConfig { m, k_init: 6, k_new: 2, rounds: 3, ..Default::default() };
        let mut w = init_world(&config, 2).unwrap();
        w.begin_round();
        w.spawn_items(2);
        w
    }

    #[test]
    fn baseline_signals() {
        let w = fresh(4);
        let p = RecParams::default();
        let none = recommend(&w, AlgorithmKind::None, &p);
        assert_eq!(none.dimension(), 0);
        assert!(none.get(1, 3).is_empty());
        let genre = recommend(&w, AlgorithmKind::TrueGenre, &p);
        for user in 0..4 {
            for item in w.items() {
                assert_eq!(genre.get(user, item.id), [item.genre]);
            }
        }
        let consumption = recommend(&w, AlgorithmKind::Consumption, &p);
        assert!(w.items().iter().all(|i| consumption.get(0, i.id) == [0.0]));
        let hybrid = recommend(&w, AlgorithmKind::Hybrid, &p);
        assert!(w.items().iter().all(|i| hybrid.get(2, i.id) == [0.0, 0.0]));
    }

    #[test]
    fn non_personalized_rows_match_across_users() {
        let mut w = fresh(5);
        let choices: Vec<ItemId> = (0..5).map(|j| j as ItemId).collect();
        w.commit(&choices).unwrap();
        let p = RecParams::default();
        for kind in AlgorithmKind::ALL.into_iter().filter(|k| !k.is_personalized()) {
            let rec = recommend(&w, kind, &p);
            for item in w.items() {
                for j in 1..5 {
                    assert_eq!(rec.get(0, item.id), rec.get(j, item.id), "{kind}");
                }
            }
        }
    }

    #[test]
    fn consumption_counts_and_conservation() {
        let mut w = fresh(3);
        w.commit(&[0, 1, 1]).unwrap();
        let d = consumption_signal(w.ledger());
        assert_eq!(&d[..3], &[1.0, 2.0, 0.0]);
        assert_eq!(d.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn svd_signal_with_trivial_similarities() {
        let mut w = fresh(3);
        w.commit(&[0, 1, 1]).unwrap();
        let n = w.items().len();
        let zero = UserSimilarity::from_fn(3, |_, _| 0.0);
        assert!(svd_signal(w.ledger(), n, &zero).iter().all(|&v| v == 0.0));
        let identity = UserSimilarity::from_fn(3, |a, b| if a == b { 1.0 } else { 0.0 });
        let s = svd_signal(w.ledger(), n, &identity);
        for j in 0..3u32 {
            for i in 0..n as ItemId {
                let flag = if w.ledger().has_consumed(j, i) { 1.0 } else { 0.0 };
                assert_eq!(s[j as usize * n + i as usize], flag);
            }
        }
    }

    #[test]
    fn svd_signal_hand_sum() {
        // Users 0,1; user 0 consumed item 0, user 1 consumed item 1.
        let config = ExperimentConfig { m: 2, k_init: 2, k_new: 0, rounds: 1, ..Default::default() };
        let mut w = init_world(&config, 1).unwrap();
        w.begin_round();
        w.commit(&[0, 1]).unwrap();
        let sim = UserSimilarity::from_fn(2, |a, b| if a == b { 1.0 } else { 0.5 });
        let s = svd_signal(w.ledger(), 2, &sim);
        // r_00 = 1*1 + 0.5*0, r_01 = 1*0 + 0.5*1, r_10 = 0.5, r_11 = 1
        assert_eq!(s, vec![1.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn hybrid_is_consumption_then_svd() {
        let mut w = fresh(6);
        w.commit(&[0, 0, 1, 2, 2, 2]).unwrap();
        let p = RecParams::default();
        let hybrid = recommend(&w, AlgorithmKind::Hybrid, &p);
        let svd = recommend(&w, AlgorithmKind::Svd, &p);
        let cons = recommend(&w, AlgorithmKind::Consumption, &p);
        for j in 0..6 {
            for item in w.items() {
                let h = hybrid.get(j, item.id);
                assert_eq!(h[0], cons.get(j, item.id)[0]);
                assert_eq!(h[1], svd.get(j, item.id)[0]);
            }
        }
    }

    #[test]
    fn binned_formula_population_sd() {
        let items = vec![item(0, 0.1), item(1, 0.5), item(2, 0.9), item(3, 5.5)];
        let r = binned_consumption_signal(&items, &[2, 4, 6, 9], 1.0);
        let sd = (8.0f64 / 3.0).sqrt();
        assert!((r[2] - 2.0 / sd).abs() < 1e-12);
        assert!((r[2] - 1.2247).abs() < 1e-4);
        assert_eq!(r[3], 0.0);
        assert!((r[0] + r[1] + r[2]).abs() < 1e-12);
        let flat = binned_consumption_signal(&items[..2], &[3, 3], 1.0);
        assert_eq!(flat, vec![0.0, 0.0]);
    }

    #[test]
    fn binned_bins_are_half_open() {
        assert_eq!(genre_bin(0.0, 1.0), 0);
        assert_eq!(genre_bin(0.999, 1.0), 0);
        assert_eq!(genre_bin(1.0, 1.0), 1);
        assert_eq!(genre_bin(-0.01, 1.0), -1);
    }

    #[test]
    fn binned_invariant_to_constant_shift_in_bin() {
        let items = vec![item(0, 0.1), item(1, 0.2), item(2, 0.3)];
        let a = binned_consumption_signal(&items, &[1, 5, 2], 1.0);
        let b = binned_consumption_signal(&items, &[11, 15, 12], 1.0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ceiling_top_count() {
        assert_eq!(top_count(25.0, 4), 1);
        assert_eq!(top_count(25.0, 5), 2);
        assert_eq!(top_count(25.0, 510), 128);
        assert_eq!(top_count(100.0, 7), 7);
        assert_eq!(top_count(0.1, 3), 1);
    }

    fn uniform_signals(items: &[Item]) -> PrivateSignals {
        let mut s = PrivateSignals::new(1, items.len());
        for i in items {
            s.push_item(1, |_| (i.quality, i.genre));
        }
        s
    }

    #[test]
    fn skewed_with_zero_exponent_ranks_by_quality() {
        let items: Vec<Item> = (0..4)
            .map(|id| Item { id, quality: [3.0, 9.0, 1.0, 5.0][id as usize], genre: 0.0, birth_round: 0 })
            .collect();
        let r = skewed_top_pick_signal(&items, &uniform_signals(&items), 1, 0.0, 50.0);
        assert_eq!(r, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn skewed_zero_genre_scores_zero() {
        let items = vec![item(0, 0.0), item(1, 0.5), item(2, -0.1), item(3, 2.0)];
        let r = skewed_top_pick_signal(&items, &uniform_signals(&items), 1, 1.0, 75.0);
        assert_eq!(r, vec![0.0, 1.0, 1.0, 1.0]);
        let one = skewed_top_pick_signal(&items, &uniform_signals(&items), 1, 1.0, 25.0);
        assert_eq!(one.iter().sum::<f64>(), 1.0);
        assert_eq!(one[3], 1.0);
    }

    #[test]
    fn skewed_ties_prefer_lower_id() {
        let items = vec![item(0, 1.0), item(1, 1.0), item(2, 1.0)];
        let r = skewed_top_pick_signal(&items, &uniform_signals(&items), 1, 1.0, 50.0);
        assert_eq!(r, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn skewed_count_per_user() {
        let w = fresh(7);
        let rec = recommend(&w, AlgorithmKind::SkewedTopPick, &RecParams::default());
        let n = w.items().len();
        for j in 0..7 {
            let flagged: f64 = w.items().iter().map(|i| rec.get(j, i.id)[0]).sum();
            assert_eq!(flagged as usize, top_count(25.0, n));
        }
    }
}
