//! Deterministic seed derivation for independent streams.

/// One round of the splitmix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    mix(mix(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Seed of the grid node at fields `(bx, bz)`, stable under float noise below 1e-6.
pub fn for_node(master: u64, bx: f64, bz: f64) -> u64 {
    let qx = (bx * 1e6).round() as i64 as u64;
    let qz = (bz * 1e6).round() as i64 as u64;
    derive(derive(master, qx), qz)
}
