//! SHA-256 Fiat–Shamir transcript.

use num_bigint::BigUint;

use crate::digest::{sha256_parts, Hash32};
use crate::ff::{FieldElement, Modulus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    state: Hash32,
}

impl Transcript {
    pub fn new(domain: &str) -> Self {
        Transcript { state: sha256_parts(&[b"zkcraft-transcript", domain.as_bytes()]) }
    }

    pub fn state(&self) -> Hash32 {
        self.state
    }

    pub fn absorb(&mut self, label: &str, data: &[u8]) {
        self.state = sha256_parts(&[
            &self.state,
            &(label.len() as u32).to_le_bytes(),
            label.as_bytes(),
            &(data.len() as u64).to_le_bytes(),
            data,
        ]);
    }

    pub fn absorb_u64(&mut self, label: &str, v: u64) {
        self.absorb(label, &v.to_le_bytes());
    }

    pub fn absorb_fe(&mut self, label: &str, v: &FieldElement) {
        self.absorb(label, &v.to_bytes_fixed());
    }

    pub fn absorb_fes(&mut self, label: &str, vs: &[FieldElement]) {
        let mut buf = (vs.len() as u32).to_le_bytes().to_vec();
        for v in vs {
            buf.extend_from_slice(&v.to_bytes_fixed());
        }
        self.absorb(label, &buf);
    }

    /// Independent child transcript, e.g. one per repetition.
    pub fn fork(&self, label: &str, index: u64) -> Transcript {
        let mut t = self.clone();
        t.absorb(label, &index.to_le_bytes());
        t
    }

    /// Uniform integer in `[0, bound)` by masked rejection sampling.
    pub fn challenge_below(&mut self, label: &str, bound: &BigUint) -> BigUint {
        assert!(bound > &BigUint::from(0u8), "empty challenge range");
        let bits = bound.bits() as usize;
        let nbytes = bits.div_ceil(8);
        let excess = nbytes * 8 - bits;
        let mut ctr = 0u64;
        let value = loop {
            let mut bytes = Vec::with_capacity(nbytes + 32);
            let mut block = 0u32;
            while bytes.len() < nbytes {
                bytes.extend_from_slice(&sha256_parts(&[
                    &self.state,
                    b"challenge",
                    label.as_bytes(),
                    &ctr.to_le_bytes(),
                    &block.to_le_bytes(),
                ]));
                block += 1;
            }
            bytes.truncate(nbytes);
            bytes[0] &= 0xffu8 >> excess;
            ctr += 1;
            let v = BigUint::from_bytes_be(&bytes);
            if &v < bound {
                break v;
            }
        };
        self.absorb(label, &value.to_bytes_be());
        value
    }

    pub fn challenge_fe(&mut self, label: &str, q: &Modulus) -> FieldElement {
        let v = self.challenge_below(label, q.q());
        FieldElement::new(q, v)
    }

    /// `count` distinct indices in `[0, bound)`, in draw order.
    pub fn distinct_indices(&mut self, label: &str, count: usize, bound: usize) -> Vec<usize> {
        assert!(count <= bound, "cannot draw {count} distinct values below {bound}");
        let mut out: Vec<usize> = Vec::with_capacity(count);
        let b = BigUint::from(bound);
        while out.len() < count {
            let v = self.challenge_below(label, &b);
            let v = usize::try_from(v).expect("below a usize bound");
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}
