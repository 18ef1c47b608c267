use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Seeded random generator bound to a named stream.
///
/// Each stream label selects an independent ChaCha8 stream for the same seed,
/// so draws for one concern (say "channel") never shift another ("init").
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: String,
    inner: ChaCha8Rng,
}

fn stream_id(label: &str) -> u64 {
    // FNV-1a, stable across platforms and builds.
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Rng {
    pub fn new(seed: u64, stream: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id(stream));
        Self {
            seed,
            stream: stream.to_owned(),
            inner,
        }
    }

    /// A fresh generator on the sub-stream `"<stream>/<label>"` of the same seed.
    pub fn derive(&self, label: &str) -> Rng {
        Rng::new(self.seed, &format!("{}/{label}", self.stream))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> &str {
        &self.stream
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn fill_normal(&mut self, out: &mut [f64], std: f64) {
        for v in out {
            *v = std * self.normal();
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        // Fisher-Yates, spelled out so the draw sequence is pinned here.
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// `k` distinct indices from `0..n` in random order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut p = self.permutation(n);
        p.truncate(k.min(n));
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_repeat() {
        let mut a = Rng::new(7, "channel");
        let mut b = Rng::new(7, "channel");
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut a = Rng::new(7, "channel");
        let mut b = Rng::new(7, "init");
        let xa: Vec<u64> = (0..8).map(|_| a.uniform().to_bits()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.uniform().to_bits()).collect();
        assert_ne!(xa, xb);
        let d = a.derive("x");
        assert_eq!(d.stream(), "channel/x");
    }

    #[test]
    fn choose_distinct_has_no_repeats() {
        let mut r = Rng::new(1, "t");
        let mut c = r.choose_distinct(50, 20);
        c.sort_unstable();
        c.dedup();
        assert_eq!(c.len(), 20);
    }
}
