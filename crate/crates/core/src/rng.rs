//! Counter-based random number generation for reproducible parallel ensembles.
//!
//! Every draw is a pure function of `(seed, stream, counter)`, so an ensemble
//! produces bit-identical results regardless of thread count or execution
//! order: path `k` of an ensemble reads stream `k`, and the `j`-th normal
//! variate of a path reads counter `j`. There is no shared mutable state.

/// SplitMix64 finalizer: a full-avalanche 64-bit mixing function.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// A stateless counter-keyed generator for one stream (e.g. one ensemble path).
///
/// `uniform(c)` and `normal(c)` are pure in the counter `c`; callers hand out
/// disjoint counter ranges (per step, per component) to stay collision-free.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    /// Derive the generator for `stream` under `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        let key = mix(mix(seed ^ GOLDEN).wrapping_add(stream.wrapping_mul(GOLDEN)));
        CounterRng { key }
    }

    /// Derive a child stream (e.g. per boundary sample inside a seeded sampler).
    pub fn substream(&self, stream: u64) -> Self {
        CounterRng::new(self.key, stream)
    }

    #[inline]
    pub fn bits(&self, counter: u64) -> u64 {
        mix(self.key ^ mix(counter.wrapping_mul(GOLDEN).wrapping_add(self.key)))
    }

    /// Uniform draw in the open-closed interval (0, 1].
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        (((self.bits(counter) >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller on counters `2c` and `2c + 1`.
    #[inline]
    pub fn normal(&self, counter: u64) -> f64 {
        let u1 = self.uniform(2 * counter);
        let u2 = self.uniform(2 * counter + 1);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fill `out` with standard normals using counters `base + i`.
    pub fn fill_normal(&self, base: u64, out: &mut [f64]) {
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.normal(base + i as u64);
        }
    }
}
