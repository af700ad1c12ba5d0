//! Truncated SVD of the binary user × item consumption matrix.
//!
//! With `A = U Σ Vᵀ`, the user representation is `U_k Σ_k = A V_k`. The top
//! right singular vectors come from the symmetric eigendecomposition of the
//! item Gram matrix `AᵀA`, whose size is bounded by the item count rather
//! than the user count.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::world::ItemId;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-10;
const ZERO_NORM: f64 = 1e-12;

/// Row-normalised `U_k Σ_k`; rows of users without signal are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEmbedding {
    users: usize,
    rank: usize,
    rows: Vec<f64>,
}

/// Cosine similarity between user representations.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSimilarity {
    users: usize,
    values: Vec<f64>,
}

impl UserSimilarity {
    pub fn from_fn(users: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(users * users);
        for a in 0..users {
            for b in 0..users {
                values.push(f(a, b));
            }
        }
        Self { users, values }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.users + b]
    }
}

impl UserEmbedding {
    /// Effective rank after clamping to the matrix rank.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn users(&self) -> usize {
        self.users
    }

    fn row(&self, user: usize) -> &[f64] {
        &self.rows[user * self.rank..(user + 1) * self.rank]
    }

    pub fn similarity(&self) -> UserSimilarity {
        UserSimilarity::from_fn(self.users, |a, b| {
            let dot: f64 = self.row(a).iter().zip(self.row(b)).map(|(x, y)| x * y).sum();
            dot.clamp(-1.0, 1.0)
        })
    }

    /// `Σ_{j'} Sim(j, j') d^{j'}_i` for all users and items, user-major.
    ///
    /// Uses `Sim = Ê Êᵀ`, so the sum is `ê_j · Σ_{j' consumed i} ê_{j'}`.
    pub fn weighted_counts(&self, histories: &[Vec<ItemId>], items: usize) -> Vec<f64> {
        let k = self.rank;
        let mut per_item = vec![0.0; items * k];
        for (user, history) in histories.iter().enumerate() {
            let row = self.row(user);
            for &i in history {
                let acc = &mut per_item[i as usize * k..(i as usize + 1) * k];
                for (a, r) in acc.iter_mut().zip(row) {
                    *a += r;
                }
            }
        }
        let mut out = vec![0.0; self.users * items];
        if k == 0 {
            return out;
        }
        for user in 0..self.users {
            let row = self.row(user);
            let target = &mut out[user * items..(user + 1) * items];
            for (i, value) in target.iter_mut().enumerate() {
                let column = &per_item[i * k..(i + 1) * k];
                *value = row.iter().zip(column).map(|(x, y)| x * y).sum();
            }
        }
        out
    }
}

/// Rank-`rank` embedding of the 0/1 matrix whose row `j` flags `histories[j]`.
pub fn svd_user_embedding(histories: &[Vec<ItemId>], items: usize, rank: usize) -> UserEmbedding {
    let users = histories.len();
    if items == 0 || users == 0 || rank == 0 {
        return UserEmbedding { users, rank: 0, rows: Vec::new() };
    }
    let mut gram = DMatrix::<f64>::zeros(items, items);
    for history in histories {
        for &a in history {
            for &b in history {
                gram[(a as usize, b as usize)] += 1.0;
            }
        }
    }
    let eigen = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..items).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
    let largest = eigen.eigenvalues[order[0]];
    let kept: Vec<usize> = order
        .into_iter()
        .take_while(|&c| largest > 0.0 && eigen.eigenvalues[c] > RANK_TOLERANCE * largest)
        .take(rank)
        .collect();
    let k = kept.len();

    let mut rows = vec![0.0; users * k];
    for (user, history) in histories.iter().enumerate() {
        let row = &mut rows[user * k..(user + 1) * k];
        for &i in history {
            for (slot, &c) in row.iter_mut().zip(&kept) {
                *slot += eigen.eigenvectors[(i as usize, c)];
            }
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > ZERO_NORM {
            row.iter_mut().for_each(|x| *x /= norm);
        } else {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    UserEmbedding { users, rank: k, rows }
}

pub fn svd_user_similarity(histories: &[Vec<ItemId>], items: usize, rank: usize) -> UserSimilarity {
    svd_user_embedding(histories, items, rank).similarity()
}
