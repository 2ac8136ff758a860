//! Portable seeded random number generation.
//!
//! Every random choice in this crate (weight init, batch shuffling, label
//! noise) flows through [`Rng`], a xoshiro256** generator seeded through a
//! splitmix64 expansion. Both algorithms are fully specified by their integer
//! arithmetic, so any implementation in any language that follows the same
//! recipe replays the exact same streams:
//!
//! - seeding: `s[0..4]` are four successive outputs of splitmix64 started at
//!   the seed value;
//! - `next_u64`: the xoshiro256** update (`rotl(s1 * 5, 7) * 9`);
//! - `next_f64`: the top 53 bits of `next_u64`, scaled into `[0, 1)`;
//! - `below(n)`: Lemire's unbiased multiply-shift bounded draw, retrying on
//!   the biased low band;
//! - `shuffle`: Fisher–Yates from the top index down, `j = below(i + 1)`;
//! - sub-streams: `Rng::from_seed_stream(seed, k)` reseeds from
//!   `seed ^ mix64(k)` where `mix64` is the splitmix64 output function.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output function applied to one state value.
#[inline]
fn mix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seedable, portable 64-bit generator (xoshiro256**).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: [u64; 4],
}

impl Rng {
    /// Seeds the four state words from successive splitmix64 outputs.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut state = [0u64; 4];
        for word in &mut state {
            *word = mix64(sm);
            sm = sm.wrapping_add(GOLDEN_GAMMA);
        }
        // xoshiro's state must not be all zero; splitmix64 makes this
        // astronomically unlikely but the guard costs nothing.
        if state == [0; 4] {
            state[0] = GOLDEN_GAMMA;
        }
        Rng { state }
    }

    /// Derives an independent stream `k` of a base seed.
    pub fn from_seed_stream(seed: u64, stream: u64) -> Self {
        Self::from_seed(derive_seed(seed, stream))
    }

    /// The xoshiro256** update.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// A double in `[0, 1)` from the top 53 bits of one draw.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// An unbiased draw from `0..n` (Lemire's method).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is undefined");
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (n as u128);
            let low = m as u64;
            if low < n {
                let threshold = n.wrapping_neg() % n;
                if low < threshold {
                    continue;
                }
            }
            return (m >> 64) as u64;
        }
    }

    /// A uniform double in `[lo, hi)`.
    #[inline]
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// The seed value of stream `k` of a base seed: `seed ^ mix64(k)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ mix64(stream)
}

/// The permutation of `0..n` produced by shuffling the identity with the
/// given stream. Fully determined by `(seed, stream)`.
pub fn seeded_permutation(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    Rng::from_seed_stream(seed, stream).shuffle(&mut perm);
    perm
}
