//! Bit-exact random streams.
//!
//! Every random draw in the crate goes through [`SplitMix64`] so that runs are
//! reproducible across platforms and can be re-implemented in other languages:
//!
//! * state update: `state += 0x9E3779B97F4A7C15` (wrapping)
//! * output: `z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)`
//! * episode / sub-stream seeds: `derive_seed(master, i)` is the `(i + 1)`-th
//!   output of a generator seeded with `master`, computed directly from the
//!   counter.
//! * bounded integers: Lemire's multiply-shift with rejection.
//! * uniform doubles: `(next >> 11) * 2^-53` in `[0, 1)`.
//! * Gaussians: Box–Muller, `sqrt(-2 ln u1) * cos(2π u2)` with
//!   `u1 = ((next >> 11) + 1) * 2^-53` in `(0, 1]`; the paired sine value is
//!   cached and returned by the next call.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_gaussian: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform integer in `[0, bound)`. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0)");
        let mut m = (self.next_u64() as u128) * (bound as u128);
        let mut low = m as u64;
        if low < bound {
            let threshold = bound.wrapping_neg() % bound;
            while low < threshold {
                m = (self.next_u64() as u128) * (bound as u128);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Moves a uniformly chosen `k`-subset to the front of `items` (partial
    /// Fisher–Yates) and returns it. Draw `i` picks from `[i, len)`.
    pub fn choose_prefix<'a, T>(&mut self, items: &'a mut [T], k: usize) -> &'a mut [T] {
        assert!(k <= items.len());
        for i in 0..k {
            let j = i + self.below((items.len() - i) as u64) as usize;
            items.swap(i, j);
        }
        &mut items[..k]
    }
}
