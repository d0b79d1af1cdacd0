//! SHA-256 helpers shared by fingerprints, the commitment and the transcript.

use sha2::{Digest, Sha256};

pub type Hash32 = [u8; 32];

pub fn sha256(bytes: &[u8]) -> Hash32 {
    Sha256::digest(bytes).into()
}

pub fn sha256_parts(parts: &[&[u8]]) -> Hash32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// First eight digest bytes read big-endian, so the hex of the result is the
/// hex prefix of the digest.
pub fn trunc64(d: &Hash32) -> u64 {
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_digest_prefix() {
        assert_eq!(trunc64(&sha256(b"")), 0xe3b0c44298fc1c14);
        assert_eq!(sha256_parts(&[b"ab", b"c"]), sha256(b"abc"));
    }
}
