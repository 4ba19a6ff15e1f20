//! Counter-based SplitMix64 generator.
//!
//! Draw `n` (1-based) of a generator with seed `s` is
//! `mix(s + n * 0x9E3779B97F4A7C15)` in wrapping 64-bit arithmetic, where
//!
//! ```text
//! mix(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!         z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!         return z ^ (z >> 31)
//! ```
//!
//! Derived values:
//! - uniform in `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! - bounded integer below `n`: `(next_u64 * n) >> 64` in 128-bit arithmetic
//! - standard normal: Box–Muller cosine branch, `u1 = ((x1 >> 11) + 1) * 2^-53`,
//!   `u2 = (x2 >> 11) * 2^-53`, `sqrt(-2 ln u1) * cos(2π u2)`; two draws per value
//! - shuffle: Fisher–Yates from the last index down, `j = below(i + 1)`
//! - named sub-stream: new generator seeded with `mix(seed ^ fnv1a64(name))`

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
    counter: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent generator for a named purpose; does not advance `self`.
    pub fn derive(&self, name: &str) -> SeededRng {
        SeededRng::new(mix(self.seed ^ fnv1a64(name.as_bytes())))
    }

    pub fn derive_indexed(&self, name: &str, index: u64) -> SeededRng {
        let base = self.derive(name);
        SeededRng::new(mix(base.seed.wrapping_add(index.wrapping_mul(GOLDEN))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_MINUS_53;
        let u2 = (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
