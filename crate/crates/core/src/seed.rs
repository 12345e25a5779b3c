//! Stable seed derivation. Values must not change between releases, since
//! expanded datasets and bootstrap intervals are reproduced from them.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the parts, with a 0xff separator after each part, finished
/// with the splitmix64 mixer.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// Derive a child seed from a master seed and a list of string labels.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let master = master.to_le_bytes();
    let mut parts: alloc::vec::Vec<&[u8]> = alloc::vec::Vec::with_capacity(labels.len() + 1);
    parts.push(&master);
    parts.extend(labels.iter().map(|l| l.as_bytes()));
    stable_hash(&parts)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
