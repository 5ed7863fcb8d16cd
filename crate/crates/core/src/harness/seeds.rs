/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for sub-stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

/// Seed of trial `trial` under base seed `base`.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    derive_seed(base, (1u64 << 40) + trial as u64)
}

/// Seed of the run's codebook.
pub fn codebook_seed(base: u64) -> u64 {
    derive_seed(base, 0)
}
