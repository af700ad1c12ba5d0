//! Counter-keyed random substreams.
//!
//! Every random draw in a run comes from a ChaCha8 stream selected by
//! `(run seed, stream id)`. Stream ids encode what is being drawn (users,
//! one item of one world, pair sampling), so the values never depend on the
//! order in which worlds, items or runs are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const USERS: u64 = 1;
const ITEM: u64 = 2;
const PAIRS: u64 = 3;

/// Seed for the `index`-th run of an experiment.
pub fn run_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(index as u64 ^ 0x5EED_0F_2024))
}

fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub fn users_stream(seed: u64) -> ChaCha8Rng {
    stream(seed, USERS << 56)
}

/// Stream for item `item_id` of world `world_index` (0 is the deployment world).
pub fn item_stream(seed: u64, world_index: usize, item_id: u32) -> ChaCha8Rng {
    debug_assert!(world_index < 1 << 24);
    stream(seed, ITEM << 56 | (world_index as u64) << 32 | item_id as u64)
}

pub fn pair_stream(seed: u64) -> ChaCha8Rng {
    stream(seed, PAIRS << 56)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
