//! Users, items, ground-truth utility and consumption bookkeeping.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::rng;
use crate::signals::PrivateSignals;

pub type UserId = u32;
pub type ItemId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct User {
    pub id: UserId,
    pub preference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub quality: f64,
    pub genre: f64,
    pub birth_round: usize,
}

/// Utility user `user` gets from consuming `item`: quality minus genre mismatch.
pub fn true_utility(user: &User, item: &Item) -> f64 {
    item.quality - (user.preference - item.genre).abs()
}

/// Consumption counts, per-user histories and per-(user, item) flags.
#[derive(Debug, Clone)]
pub struct ConsumptionLedger {
    capacity: usize,
    counts: Vec<u32>,
    histories: Vec<Vec<ItemId>>,
    consumed: Vec<bool>,
}

impl ConsumptionLedger {
    pub fn new(users: usize, item_capacity: usize) -> Self {
        Self {
            capacity: item_capacity,
            counts: Vec::with_capacity(item_capacity),
            histories: vec![Vec::new(); users],
            consumed: vec![false; users * item_capacity],
        }
    }

    fn add_item(&mut self) {
        assert!(self.counts.len() < self.capacity, "item capacity exceeded");
        self.counts.push(0);
    }

    /// Number of users that consumed each item so far (`d_i`).
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn history(&self, user: UserId) -> &[ItemId] {
        &self.histories[user as usize]
    }

    pub fn histories(&self) -> &[Vec<ItemId>] {
        &self.histories
    }

    pub fn has_consumed(&self, user: UserId, item: ItemId) -> bool {
        self.consumed[user as usize * self.capacity + item as usize]
    }

    pub fn total_consumption(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Applies one choice per user, in user-id order.
    pub fn commit(&mut self, choices: &[ItemId]) -> Result<()> {
        if choices.len() != self.histories.len() {
            return Err(Error::Internal(format!(
                "{} choices for {} users",
                choices.len(),
                self.histories.len()
            )));
        }
        for (user, &item) in choices.iter().enumerate() {
            let slot = user * self.capacity + item as usize;
            if item as usize >= self.counts.len() || self.consumed[slot] {
                return Err(Error::Internal(format!(
                    "user {user} chose unavailable item {item}"
                )));
            }
        }
        for (user, &item) in choices.iter().enumerate() {
            self.consumed[user * self.capacity + item as usize] = true;
            self.counts[item as usize] += 1;
            self.histories[user].push(item);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Draws {
    mu_q: f64,
    sd_q: f64,
    sd_g: f64,
    sd_u: f64,
    sd_ps: f64,
    sd_gs: f64,
    bimodal_offset: f64,
}

impl Draws {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            mu_q: config.mu_q,
            sd_q: config.var_q.sqrt(),
            sd_g: config.var_g.sqrt(),
            sd_u: config.var_u.sqrt(),
            sd_ps: config.var_ps.sqrt(),
            sd_gs: config.var_gs.sqrt(),
            bimodal_offset: config.bimodal_offset,
        }
    }

    /// Zero-mean normal, or the symmetric two-component mixture when bimodal.
    fn centred<R: Rng>(&self, rng: &mut R, sd: f64) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        if self.bimodal_offset > 0.0 {
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            side * self.bimodal_offset + sd * z
        } else {
            sd * z
        }
    }
}

/// Draws `m` user preferences from the users substream of `seed`.
pub fn draw_users(config: &ExperimentConfig, seed: u64) -> Arc<[User]> {
    let draws = Draws::new(config);
    let mut rng = rng::users_stream(seed);
    (0..config.m)
        .map(|j| User {
            id: j as UserId,
            preference: draws.centred(&mut rng, draws.sd_u),
        })
        .collect()
}

/// One simulated world: shared users, its own items, signals and ledger.
#[derive(Debug, Clone)]
pub struct WorldState {
    world_index: usize,
    seed: u64,
    round: usize,
    users: Arc<[User]>,
    items: Vec<Item>,
    signals: PrivateSignals,
    ledger: ConsumptionLedger,
    draws: Draws,
}

/// Builds the deployment world (index 0) for `seed`.
pub fn init_world(config: &ExperimentConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let users = draw_users(config, seed);
    Ok(WorldState::with_users(config, seed, 0, users))
}

impl WorldState {
    /// World `world_index` of a run; training worlds use indices `1..=k_train`.
    pub fn with_users(
        config: &ExperimentConfig,
        seed: u64,
        world_index: usize,
        users: Arc<[User]>,
    ) -> Self {
        let capacity = config.total_items();
        let mut world = Self {
            world_index,
            seed,
            round: 0,
            ledger: ConsumptionLedger::new(users.len(), capacity),
            signals: PrivateSignals::new(users.len(), capacity),
            items: Vec::with_capacity(capacity),
            users,
            draws: Draws::new(config),
        };
        world.spawn_items(config.k_init);
        world
    }

    /// Adds `count` items born in the current round, with their per-user noise.
    pub fn spawn_items(&mut self, count: usize) -> Vec<ItemId> {
        let mut spawned = Vec::with_capacity(count);
        for _ in 0..count {
            let id = self.items.len() as ItemId;
            let mut rng = rng::item_stream(self.seed, self.world_index, id);
            let z: f64 = rng.sample(StandardNormal);
            let quality = self.draws.mu_q + self.draws.sd_q * z;
            let genre = self.draws.centred(&mut rng, self.draws.sd_g);
            let (sd_ps, sd_gs) = (self.draws.sd_ps, self.draws.sd_gs);
            self.signals.push_item(self.users.len(), |_| {
                let xi: f64 = rng.sample(StandardNormal);
                let delta: f64 = rng.sample(StandardNormal);
                (quality + sd_ps * xi, genre + sd_gs * delta)
            });
            self.items.push(Item {
                id,
                quality,
                genre,
                birth_round: self.round,
            });
            self.ledger.add_item();
            spawned.push(id);
        }
        spawned
    }

    /// Advances the round counter; items spawned afterwards carry the new round.
    pub fn begin_round(&mut self) -> usize {
        self.round += 1;
        self.round
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn world_index(&self) -> usize {
        self.world_index
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn shared_users(&self) -> Arc<[User]> {
        Arc::clone(&self.users)
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn signals(&self) -> &PrivateSignals {
        &self.signals
    }

    pub fn ledger(&self) -> &ConsumptionLedger {
        &self.ledger
    }

    /// Items born by the current round that `user` has not consumed, ascending.
    pub fn available_items(&self, user: UserId) -> Vec<ItemId> {
        self.items
            .iter()
            .filter(|item| item.birth_round <= self.round && !self.ledger.has_consumed(user, item.id))
            .map(|item| item.id)
            .collect()
    }

    pub fn commit(&mut self, choices: &[ItemId]) -> Result<()> {
        self.ledger.commit(choices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(p: f64) -> User {
        User { id: 0, preference: p }
    }

    fn item(q: f64, g: f64) -> Item {
        Item { id: 0, quality: q, genre: g, birth_round: 0 }
    }

    #[test]
    fn utility_formula() {
        assert_eq!(true_utility(&user(2.0), &item(100.0, 2.0)), 100.0);
        assert_eq!(true_utility(&user(2.0), &item(100.0, 5.0)), 97.0);
        assert_eq!(
            true_utility(&user(-3.0), &item(100.0, 0.0)),
            true_utility(&user(3.0), &item(100.0, 0.0))
        );
    }

    #[test]
    fn table_scale_world_shape() {
        let config = ExperimentConfig::default();
        let world = init_world(&config, 1).unwrap();
        assert_eq!(world.users().len(), 1000);
        assert_eq!(world.items().len(), 10);
        assert_eq!(world.round(), 0);
        assert_eq!(world.ledger().total_consumption(), 0);
    }

    #[test]
    fn minimal_world() {
        let config = ExperimentConfig { m: 1, k_init: 1, rounds: 1, k_new: 0, ..Default::default() };
        let world = init_world(&config, 1).unwrap();
        assert_eq!(world.users().len(), 1);
        assert_eq!(world.items().len(), 1);
        assert_eq!(config.total_items(), 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let config = ExperimentConfig { m: 0, ..Default::default() };
        assert!(matches!(init_world(&config, 1), Err(Error::Config { field: "m", .. })));
    }

    #[test]
    fn same_seed_same_world() {
        let config = ExperimentConfig::desk();
        let a = init_world(&config, 11).unwrap();
        let b = init_world(&config, 11).unwrap();
        assert_eq!(a.users(), b.users());
        assert_eq!(a.items(), b.items());
        assert_eq!(a.signals(), b.signals());
        let c = init_world(&config, 12).unwrap();
        assert_ne!(a.users(), c.users());
    }

    #[test]
    fn spawning_reaches_total_item_count() {
        let config = ExperimentConfig { m: 3, ..Default::default() };
        let mut world = init_world(&config, 5).unwrap();
        for _ in 0..config.rounds {
            world.begin_round();
            world.spawn_items(config.k_new);
        }
        assert_eq!(world.items().len(), 510);
        assert!(world.items().iter().all(|i| world.ledger().counts()[i.id as usize] == 0));
        let before = world.items().len();
        assert!(world.spawn_items(0).is_empty());
        assert_eq!(world.items().len(), before);
    }

    #[test]
    fn quality_sample_mean_within_three_standard_errors() {
        let n = 100_000;
        let config = ExperimentConfig { m: 1, k_init: n, ..Default::default() };
        let world = init_world(&config, 3).unwrap();
        let mean = world.items().iter().map(|i| i.quality).sum::<f64>() / n as f64;
        let se = (config.var_q / n as f64).sqrt();
        assert!((mean - 100.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn availability_is_per_user() {
        let config = ExperimentConfig { m: 2, k_init: 5, k_new: 0, rounds: 3, ..Default::default() };
        let mut world = init_world(&config, 1).unwrap();
        world.begin_round();
        assert_eq!(world.available_items(0).len(), 5);
        world.commit(&[3, 1]).unwrap();
        assert!(!world.available_items(0).contains(&3));
        assert!(world.available_items(1).contains(&3));
        assert!(world.commit(&[3, 0]).is_err());
    }

    #[test]
    fn bimodal_genres_split_around_offset() {
        let config = ExperimentConfig { m: 1, k_init: 20_000, bimodal_offset: 8.0, ..Default::default() };
        let world = init_world(&config, 9).unwrap();
        let positive = world.items().iter().filter(|i| i.genre > 0.0).count();
        assert!((positive as f64 / 20_000.0 - 0.5).abs() < 0.02);
        let near_zero = world.items().iter().filter(|i| i.genre.abs() < 1.0).count();
        assert!(near_zero < 400);
    }
}
