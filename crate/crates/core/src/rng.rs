//! Deterministic counter-based pseudo-random generator.
//!
//! Every randomized artifact in this crate (seed blocks, synthetic datasets,
//! episode sampling) is keyed by a `u64` seed and a stream label, and each
//! draw is a pure function of `(key, counter)`. The algorithm is pinned so
//! that a reimplementation in another language produces identical streams:
//!
//! ```text
//! key(seed, label) = mix(seed XOR (label * 0xA24BAED4963EE407))
//! draw(key, i)     = mix(key + (i + 1) * 0x9E3779B97F4A7C15)
//! mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!         z ^= z >> 27; z *= 0x94D049BB133111EB;
//!         z ^= z >> 31
//! ```
//!
//! `mix` is the SplitMix64 finalizer; all arithmetic is wrapping. Because a
//! draw depends only on the counter, streams can be split (new label) or
//! evaluated at arbitrary offsets without generating the prefix.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const LABEL_SALT: u64 = 0xA24B_AED4_963E_E407;

/// Stream labels, one per randomized artifact, so a single run seed never
/// aliases two draws.
pub mod streams {
    pub const CRP_BLOCK: u64 = 1;
    pub const DATASET_MEANS: u64 = 2;
    pub const DATASET_NOISE: u64 = 3;
    pub const EPISODE_CLASSES: u64 = 4;
    pub const EPISODE_SAMPLES: u64 = 5;
    pub const EPISODE_DERIVE: u64 = 6;
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: a key plus a cursor into the keyed stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Generator for stream `label` under `seed`.
    pub fn new(seed: u64, label: u64) -> Self {
        Self {
            key: mix(seed ^ label.wrapping_mul(LABEL_SALT)),
            counter: 0,
        }
    }

    /// The `i`-th draw of this stream, independent of the cursor.
    #[inline]
    pub fn at(&self, i: u64) -> u64 {
        mix(self.key.wrapping_add((i.wrapping_add(1)).wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in `[0, bound)` by rejection-free modulo (bias is negligible
    /// for the bounds used here, all far below 2^32).
    pub fn next_below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "bound must be non-zero");
        (self.next_u64() % bound as u64) as usize
    }

    /// Uniform in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller on two uniform draws.
    pub fn next_gaussian(&mut self) -> f64 {
        // Guard against ln(0).
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fair ±1 draw from the low bit.
    pub fn next_bipolar(&mut self) -> i8 {
        if self.next_u64() & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.next_below(i + 1);
            slice.swap(i, j);
        }
    }

    /// `count` distinct indices from `[0, n)`, in draw order.
    pub fn sample_distinct(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        self.shuffle(&mut pool);
        pool.truncate(count);
        pool
    }
}
