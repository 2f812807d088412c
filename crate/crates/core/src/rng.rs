//! Counter-style stream derivation: every (cell seed, operator, block)
//! triple maps to its own generator, so sample blocks can run on any worker
//! and operators keep their draws when other operators enter or leave.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::market::OperatorId;

pub type SampleStream = Xoshiro256PlusPlus;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn combine(seed: u64, value: u64) -> u64 {
    mix64(mix64(seed) ^ value)
}

/// Seed shared by every estimate evaluated at one (M, P) grid cell.
pub fn cell_seed(seed: u64, m: u32, p: u32) -> u64 {
    combine(combine(seed, u64::from(m)), u64::from(p))
}

pub fn operator_stream(cell_seed: u64, operator: OperatorId, block: u64) -> SampleStream {
    SampleStream::seed_from_u64(combine(combine(cell_seed, u64::from(operator.0)), block))
}
