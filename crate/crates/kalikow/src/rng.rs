//! Counter-based random number streams.
//!
//! The perfect-simulation algorithm consumes two independent fields of
//! i.i.d. uniforms indexed by sites: one drives the neighborhood draws,
//! the other the forward transitions. Instead of materializing the fields,
//! every variate is derived by hashing `(seed, stream, neuron, time)`
//! through a splitmix-style finalizer. Revisiting a site therefore always
//! reproduces the same draw, and replicas are order-independent and
//! embarrassingly parallel.

use crate::decomp::{Neuron, Site};

/// Logical stream of the per-site uniform field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Neighborhood draws (the backward pass).
    Genealogy,
    /// Forward transition draws.
    Forward,
    /// Auxiliary draws not tied to the two simulation fields
    /// (validation probes, synthetic samples, test oracles).
    Aux,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Genealogy => 0x9E37_79B9_7F4A_7C15,
            Stream::Forward => 0xC2B2_AE3D_27D4_EB4F,
            Stream::Aux => 0x1656_67B1_9E37_79F9,
        }
    }
}

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-site uniform generator for one seed.
#[derive(Debug, Clone, Copy)]
pub struct SiteRng {
    seed: u64,
}

impl SiteRng {
    pub fn new(seed: u64) -> Self {
        SiteRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent generator for replica `index`.
    pub fn replica(&self, index: u64) -> Self {
        SiteRng {
            seed: mix64(mix64(self.seed ^ 0xD134_2543_DE82_EF95) ^ index),
        }
    }

    #[inline]
    fn word(&self, stream: Stream, neuron: Neuron, time: i64) -> u64 {
        let mut h = mix64(self.seed ^ stream.tag());
        h = mix64(h ^ (neuron.0 as u64));
        h = mix64(h ^ (time as u64));
        h
    }

    /// Uniform variate in `[0, 1)` attached to `(stream, neuron, time)`.
    #[inline]
    pub fn uniform(&self, stream: Stream, neuron: Neuron, time: i64) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.word(stream, neuron, time) >> 11) as f64) * SCALE
    }

    /// Uniform variate for a site, convenience over [`SiteRng::uniform`].
    #[inline]
    pub fn site_uniform(&self, stream: Stream, site: Site) -> f64 {
        self.uniform(stream, site.neuron, site.time)
    }

    /// Sequential uniform stream (for oracles and synthetic data, not tied
    /// to sites): the k-th variate of lane `lane`.
    #[inline]
    pub fn sequence(&self, lane: u64, k: u64) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let mut h = mix64(self.seed ^ Stream::Aux.tag());
        h = mix64(h ^ lane);
        h = mix64(h ^ k);
        ((h >> 11) as f64) * SCALE
    }
}

/// Multiply-xor hasher for site-keyed memo tables. The default SipHash is
/// needlessly slow on 16-byte keys in the sampler hot loop.
#[derive(Default, Clone)]
pub struct FastHasher {
    state: u64,
}

impl std::hash::Hasher for FastHasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.state
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state = mix64(self.state ^ b as u64);
        }
    }

    #[inline]
    fn write_u64(&mut self, v: u64) {
        self.state = mix64(self.state ^ v);
    }

    #[inline]
    fn write_i64(&mut self, v: i64) {
        self.write_u64(v as u64);
    }
}

/// `BuildHasher` for [`FastHasher`].
#[derive(Default, Clone)]
pub struct FastHasherBuilder;

impl std::hash::BuildHasher for FastHasherBuilder {
    type Hasher = FastHasher;

    #[inline]
    fn build_hasher(&self) -> FastHasher {
        FastHasher::default()
    }
}

/// HashMap keyed by sites with the fast hasher.
pub type SiteHashMap<V> = std::collections::HashMap<Site, V, FastHasherBuilder>;
/// HashSet of sites with the fast hasher.
pub type SiteHashSet = std::collections::HashSet<Site, FastHasherBuilder>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_stream_independent() {
        let rng = SiteRng::new(7);
        let a = rng.uniform(Stream::Genealogy, Neuron(3), -5);
        let b = rng.uniform(Stream::Genealogy, Neuron(3), -5);
        assert_eq!(a, b);
        let c = rng.uniform(Stream::Forward, Neuron(3), -5);
        assert_ne!(a, c);
    }

    #[test]
    fn replicas_differ() {
        let rng = SiteRng::new(7);
        let a = rng.replica(0).uniform(Stream::Forward, Neuron(0), 0);
        let b = rng.replica(1).uniform(Stream::Forward, Neuron(0), 0);
        assert_ne!(a, b);
    }

    #[test]
    fn uniform_moments() {
        // Crude equidistribution check over neighbouring sites.
        let rng = SiteRng::new(123);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for t in 0..n {
            let u = rng.uniform(Stream::Genealogy, Neuron(1), t);
            sum += u;
            sum_sq += u * u;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.005, "var {var}");
    }
}
