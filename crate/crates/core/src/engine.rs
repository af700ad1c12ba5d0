//! Learning phase over training worlds, then deployment in the true world.

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::learner::{fit_least_squares, standardize, Weights};
use crate::recommend::{recommend_with, svd_user_embedding, AlgorithmKind, RecParams, UserEmbedding};
use crate::signals::{build_features, FeatureMatrix};
use crate::world::{draw_users, init_world, Item, ItemId, User, WorldState};

/// Every deployment choice of one run, plus the frozen world it happened in.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionLog {
    pub run_id: usize,
    pub algorithm: AlgorithmKind,
    /// `choices[t][j]` is the item user `j` consumed in round `t + 1`.
    pub choices: Vec<Vec<ItemId>>,
    pub items: Vec<Item>,
    pub users: Vec<User>,
}

impl ConsumptionLog {
    pub fn rounds(&self) -> usize {
        self.choices.len()
    }

    /// Items consumed by `user`, in round order.
    pub fn history(&self, user: usize) -> impl Iterator<Item = &Item> + '_ {
        self.choices.iter().map(move |round| &self.items[round[user] as usize])
    }

    /// Genres consumed by `user`, in round order.
    pub fn genres(&self, user: usize) -> Vec<f64> {
        self.history(user).map(|item| item.genre).collect()
    }

    pub fn events(&self) -> usize {
        self.choices.iter().map(Vec::len).sum()
    }

    /// Checks shape and per-user uniqueness.
    pub fn validate(&self) -> Result<()> {
        let m = self.users.len();
        for (t, round) in self.choices.iter().enumerate() {
            if round.len() != m {
                return Err(Error::Data(format!("round {} has {} of {m} choices", t + 1, round.len())));
            }
            if let Some(bad) = round.iter().find(|&&i| i as usize >= self.items.len()) {
                return Err(Error::Data(format!("round {} references unknown item {bad}", t + 1)));
            }
        }
        for j in 0..m {
            let mut seen: Vec<ItemId> = self.choices.iter().map(|r| r[j]).collect();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Data(format!("user {j} consumed an item twice")));
            }
        }
        Ok(())
    }
}

/// Estimator weights after the final training round, with the per-round history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub weights: Weights,
    pub history: Vec<Weights>,
}

/// Highest prediction wins; exact ties go to the lowest item id.
pub fn choose_item(available: &[ItemId], predictions: &[f64]) -> Result<ItemId> {
    if available.len() != predictions.len() {
        return Err(Error::Internal("predictions do not align with available items".into()));
    }
    let mut best: Option<(ItemId, f64)> = None;
    for (&item, &score) in available.iter().zip(predictions) {
        best = match best {
            Some((b, s)) if s > score || (s == score && b < item) => Some((b, s)),
            _ => Some((item, score)),
        };
    }
    best.map(|(item, _)| item)
        .ok_or_else(|| Error::Internal("no available item to choose from".into()))
}

fn embedding_for(world: &WorldState, kind: AlgorithmKind, params: &RecParams) -> Option<UserEmbedding> {
    kind.uses_svd()
        .then(|| svd_user_embedding(world.ledger().histories(), world.items().len(), params.svd_rank))
}

/// Scores every available item with `weights` (after standardising this
/// round's features), lets each user take the argmax, then commits all choices.
fn consume_round(
    world: &mut WorldState,
    kind: AlgorithmKind,
    params: &RecParams,
    embedding: Option<&UserEmbedding>,
    weights: &Weights,
) -> Result<Vec<ItemId>> {
    let rec = recommend_with(world, kind, params, embedding);
    let features = build_features(world, &rec)?;
    if features.columns() != weights.columns.as_slice() {
        return Err(Error::Internal(format!(
            "weights fitted on {:?} applied to {:?}",
            weights.columns,
            features.columns()
        )));
    }
    let (z, _) = standardize(features)?;
    let choices = choose_per_user(&z, world.users().len(), weights)?;
    world.commit(&choices)?;
    Ok(choices)
}

fn choose_per_user(z: &FeatureMatrix, users: usize, weights: &Weights) -> Result<Vec<ItemId>> {
    let mut best: Vec<Option<(ItemId, f64)>> = vec![None; users];
    for (&(user, item), row) in z.keys().iter().zip(z.rows()) {
        let score = weights.score(row);
        let slot = &mut best[user as usize];
        match *slot {
            Some((b, s)) if s > score || (s == score && b < item) => {}
            _ => *slot = Some((item, score)),
        }
    }
    best.into_iter()
        .enumerate()
        .map(|(j, b)| {
            b.map(|(item, _)| item)
                .ok_or_else(|| Error::Internal(format!("user {j} has no available item")))
        })
        .collect()
}

/// Fits the shared estimator over `k_train` worlds, refitting every round.
///
/// Each round first pools round-start features with true-utility targets
/// from every world and fits; each world then spawns its new items and its
/// users consume with the fresh weights.
pub fn run_training_phase(config: &ExperimentConfig, kind: AlgorithmKind, seed: u64) -> Result<TrainingOutcome> {
    config.validate()?;
    let params = RecParams::from(config);
    let users = draw_users(config, seed);
    let mut worlds: Vec<WorldState> = (1..=config.k_train)
        .map(|index| WorldState::with_users(config, seed, index, users.clone()))
        .collect();
    let mut history = Vec::with_capacity(config.rounds);

    for round in 1..=config.rounds {
        let step = |worlds: &mut Vec<WorldState>| -> Result<Weights> {
            let prepared: Vec<(Option<UserEmbedding>, FeatureMatrix, Vec<f64>)> = worlds
                .par_iter_mut()
                .map(|world| {
                    world.begin_round();
                    let embedding = embedding_for(world, kind, &params);
                    let rec = recommend_with(world, kind, &params, embedding.as_ref());
                    let x = build_features(world, &rec)?;
                    let y = x.targets(world);
                    Ok((embedding, x, y))
                })
                .collect::<Result<_>>()?;

            let mut embeddings = Vec::with_capacity(prepared.len());
            let mut pooled: Option<FeatureMatrix> = None;
            let mut targets = Vec::new();
            for (embedding, x, y) in prepared {
                embeddings.push(embedding);
                targets.extend(y);
                match pooled.as_mut() {
                    Some(p) => p.append(x)?,
                    None => pooled = Some(x),
                }
            }
            let pooled = pooled.ok_or_else(|| Error::Internal("no training worlds".into()))?;
            let (z, stats) = standardize(pooled)?;
            let weights = fit_least_squares(&z, &targets, stats)?;

            worlds
                .par_iter_mut()
                .zip(embeddings.par_iter())
                .try_for_each(|(world, embedding)| {
                    world.spawn_items(config.k_new);
                    consume_round(world, kind, &params, embedding.as_ref(), &weights).map(drop)
                })?;
            Ok(weights)
        };
        history.push(step(&mut worlds).map_err(|e| e.in_round(round))?);
    }
    let weights = history.last().cloned().expect("at least one round");
    Ok(TrainingOutcome { weights, history })
}

/// Runs the true world with frozen weights; all users choose before counts update.
pub fn run_deployment_phase(
    config: &ExperimentConfig,
    kind: AlgorithmKind,
    weights: &Weights,
    seed: u64,
    run_id: usize,
) -> Result<ConsumptionLog> {
    let expected = 2 + kind.dimension();
    if weights.coefficients.len() != expected {
        return Err(Error::Internal(format!(
            "{kind} needs {expected} coefficients, weights have {}",
            weights.coefficients.len()
        )));
    }
    let params = RecParams::from(config);
    let mut world = init_world(config, seed)?;
    let mut choices = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        world.begin_round();
        world.spawn_items(config.k_new);
        let embedding = embedding_for(&world, kind, &params);
        let picked = consume_round(&mut world, kind, &params, embedding.as_ref(), weights)
            .map_err(|e| e.in_round(round))?;
        choices.push(picked);
    }
    Ok(ConsumptionLog {
        run_id,
        algorithm: kind,
        choices,
        items: world.items().to_vec(),
        users: world.users().to_vec(),
    })
}
