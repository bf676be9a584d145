/// Deterministic pseudo-random generator used everywhere in this crate.
///
/// Algorithm: xorshift64* (Vigna 2016) — state update
/// `x ^= x >> 12; x ^= x << 25; x ^= x >> 27`, output `x * 2685821657736338717`.
/// The raw seed is first stretched through one round of splitmix64 per word so
/// that small consecutive seeds (0, 1, 2, ...) still start from well-mixed
/// states. The exact algorithm is part of the on-disk contract: the same seed
/// must produce the same synthetic datasets and the same initial weights on
/// every platform and in every future build, which rules out depending on an
/// external RNG crate whose stream could change across versions.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

/// One round of splitmix64: mixes a counter into a well-distributed word.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        // splitmix64 never maps to 0 except for one input; guard anyway since
        // xorshift64* has a fixed point at 0.
        let mut state = splitmix64(seed);
        if state == 0 {
            state = 0x4d59_5df4_d0f3_3173;
        }
        Rng { state }
    }

    /// Stable per-purpose sub-seed so independent consumers (weight init,
    /// noise, shuffling) draw from decorrelated streams.
    pub fn derive_seed(&self, stream: u64) -> u64 {
        splitmix64(self.state ^ splitmix64(stream))
    }

    pub fn derive(&self, stream: u64) -> Rng {
        Rng::new(self.derive_seed(stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    /// Uniform in [0, 1): top 53 bits scaled by 2⁻⁵³.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller. The spare cosine value is discarded
    /// deliberately: one draw always consumes exactly two uniforms, which
    /// keeps the stream position independent of call history.
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.uniform();
        if u1 <= 0.0 {
            u1 = f64::MIN_POSITIVE;
        }
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_scaled(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.normal()
    }

    /// Uniform integer in [0, n) by rejection, so all values are equally
    /// likely even when n does not divide 2⁶⁴.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below: empty range");
        let n = n as u64;
        let limit = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < limit {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
