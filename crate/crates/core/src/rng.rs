//! Seeded, splittable pseudo-random numbers for reproducible test corpora.
//!
//! The generator is SplitMix64 (Steele, Lea and Flood), chosen because it is
//! trivially portable: every verification corpus can be regenerated bit for
//! bit in another language from the description below.
//!
//! ```text
//! next():  state = state + 0x9E3779B97F4A7C15            (wrapping)
//!          z = state
//!          z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (wrapping)
//!          z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (wrapping)
//!          return z ^ (z >> 31)
//! uniform() = (next() >> 11) * 2^-53                     in [0, 1)
//! below(n)  = next() % n
//! stream(seed, i) = SplitMix64(SplitMix64(seed + (i + 1) * 0x9E3779B97F4A7C15).next())
//! ```
//!
//! Trial `i` of a verification suite always draws from `stream(seed, i)`, so
//! trials are independent of scheduling order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Independent child generator for trial `index` under `seed`.
    pub fn stream(seed: u64, index: u64) -> Self {
        let mut parent = SplitMix64::new(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)));
        SplitMix64::new(parent.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        self.next_u64() % n
    }

    /// Integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }
}
