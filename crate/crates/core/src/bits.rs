//! Bit-level helpers for computational-basis configurations.
//!
//! Bit `k` of a configuration holds spin `k`. A sub-configuration built from a
//! site list stores the spin at `sites[i]` in bit `i`.

/// Collects the bits of `config` at `sites` into a packed sub-configuration.
#[inline]
pub fn gather(config: u32, sites: &[usize]) -> u32 {
    sites
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &site)| acc | (((config >> site) & 1) << i))
}

/// Inverse of [`gather`]: places bit `i` of `sub` at `sites[i]`.
#[inline]
pub fn scatter(sub: u32, sites: &[usize]) -> u32 {
    sites
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &site)| acc | (((sub >> i) & 1) << site))
}

/// Cyclic shift by one site on an `n`-site ring: spin `k` moves to site `k + 1`.
#[inline]
pub fn rotate(config: u32, n: usize) -> u32 {
    let mask = low_mask(n);
    ((config << 1) | (config >> (n - 1))) & mask
}

#[inline]
pub fn low_mask(n: usize) -> u32 {
    if n >= 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

/// Renders a configuration with site 0 leftmost.
pub fn to_string(config: u32, n: usize) -> String {
    (0..n)
        .map(|k| if (config >> k) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Parses a 0/1 string with site 0 leftmost. Returns `None` on any other character.
pub fn from_str(s: &str) -> Option<u32> {
    if s.len() > 32 {
        return None;
    }
    s.bytes().enumerate().try_fold(0u32, |acc, (k, c)| match c {
        b'0' => Some(acc),
        b'1' => Some(acc | (1 << k)),
        _ => None,
    })
}
