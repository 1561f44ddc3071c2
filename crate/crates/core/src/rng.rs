//! Deterministic seeding and noise streams.
//!
//! Every random quantity in a campaign is derived from the experiment
//! seed and the run coordinates alone, so identical specs reproduce
//! bit-identical bundles regardless of scheduling. The generators are
//! pinned here instead of pulling in an external RNG crate: determinism
//! across toolkit versions is part of the bundle contract.

/// SplitMix64 finalizer; a fixed 64-bit mixing function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Per-run seed: seed_run = H(spec.seed, config_index, repetition),
/// where H folds each coordinate through the SplitMix64 finalizer.
pub fn derive_run_seed(spec_seed: u64, config_index: u64, repetition: u64) -> u64 {
    let mut s = mix64(spec_seed);
    s = mix64(
        s ^ config_index
            .wrapping_add(1)
            .wrapping_mul(0x9e3779b97f4a7c15),
    );
    s = mix64(s ^ repetition.wrapping_add(1).wrapping_mul(0xc2b2ae3d27d4eb4f));
    s
}

/// FNV-1a over the node id, used to branch a run's stream per node.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Stream for one node within one run; depends only on
    /// (seed, config_index, repetition, node).
    pub fn for_node(run_seed: u64, node: &str) -> Self {
        SplitMix64::new(mix64(run_seed ^ hash_str(node)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller.
    pub fn next_standard_normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
