//! Deterministic random substreams.
//!
//! A substream seed is `SHA-256("dronebid/rng/v1" || master_seed_le || label)`,
//! used as the 32-byte seed of a ChaCha8 generator. Labels in use:
//!
//! | label            | purpose                                  |
//! |------------------|------------------------------------------|
//! | `orders`         | order arrivals, masses and distances     |
//! | `pretrain-orders`| order stream of the pretraining period   |
//! | `fleet`          | per-UAV state of health                  |
//! | `uav/<id>`       | the UAV's own draws (random winner rule) |
//! | `probes`         | decision-accuracy probe features         |
//! | `grid`           | random-rule draws in winner-SoH grids    |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"dronebid/rng/v1";

pub fn rng_substream(master_seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(master_seed.to_le_bytes());
    h.update(label.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub fn uav_stream_label(uav_id: u32) -> String {
    format!("uav/{uav_id}")
}

/// Seed of run `seed_index` in a sweep: `SHA-256("dronebid/run/v1" ||
/// master_seed_le || seed_index_le)`, first 8 bytes little-endian.
pub fn run_seed(master_seed: u64, seed_index: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(b"dronebid/run/v1");
    h.update(master_seed.to_le_bytes());
    h.update(seed_index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
