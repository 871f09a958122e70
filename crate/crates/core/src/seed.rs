//! Stable seed derivation for independent random streams.

/// Mixes a base seed with stream coordinates (operation, strategy, trial, ...)
/// through SplitMix64 so neighbouring coordinates give unrelated streams.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    let mut state = splitmix(base);
    for &c in coords {
        state = splitmix(state ^ splitmix(c.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
