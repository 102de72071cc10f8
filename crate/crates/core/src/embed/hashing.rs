use crate::text::tokenize;

pub const DEFAULT_HASH_DIM: usize = 256;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of the text's tokens, L2-normalized.
///
/// Each token adds ±1 at bucket `fnv1a64(token) mod dim`; the sign is the
/// hash's top bit. Empty text (or text whose counts cancel) yields zeros.
pub fn hash_embed(text: &str, dim: usize) -> Vec<f32> {
    assert!(dim >= 8, "hashing dimension must be >= 8");
    let mut acc = vec![0.0f64; dim];
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[(h % dim as u64) as usize] += sign;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; dim];
    }
    acc.into_iter().map(|x| (x / norm) as f32).collect()
}
