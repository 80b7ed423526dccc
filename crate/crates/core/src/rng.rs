//! Keyed, splittable random streams.
//!
//! A stream is identified by a root seed and a path of integers, e.g.
//! `(replication, purpose, resample)`. The path is folded into a 256-bit
//! ChaCha key, so any node of the tree can be materialised independently of
//! every other node and in any order. Parallel code only has to agree on the
//! path it uses for a given piece of work to be bit-reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator handed out by [`RngStream::generator`].
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
        }
    }

    pub fn with_path(seed: u64, path: &[u64]) -> Self {
        Self {
            seed,
            path: path.to_vec(),
        }
    }

    /// Substream one level below this one.
    pub fn child(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        Self {
            seed: self.seed,
            path,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    fn key(&self) -> [u8; 32] {
        let mut h = mix64(self.seed ^ 0x005E_ED0F_5EED_0F00);
        for (depth, &p) in self.path.iter().enumerate() {
            let tagged = mix64(p.wrapping_add(GOLDEN.wrapping_mul(depth as u64 + 1)));
            h = mix64(h.rotate_left(29) ^ tagged).wrapping_add(GOLDEN);
        }
        h = mix64(h ^ self.path.len() as u64);
        let mut key = [0u8; 32];
        for (j, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = mix64(h.wrapping_add(GOLDEN.wrapping_mul(j as u64 + 1)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        key
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_path_same_bits() {
        let a = RngStream::with_path(7, &[3, 1]);
        let b = RngStream::new(7).child(3).child(1);
        let xs: Vec<u64> = (0..16)
            .map({
                let mut g = a.generator();
                move |_| g.gen()
            })
            .collect();
        let ys: Vec<u64> = (0..16)
            .map({
                let mut g = b.generator();
                move |_| g.gen()
            })
            .collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn distinct_paths_diverge() {
        let root = RngStream::new(1);
        let streams = [
            root.clone(),
            root.child(0),
            root.child(1),
            root.child(0).child(0),
            root.child(0).child(1),
            root.child(1).child(0),
            RngStream::new(2),
        ];
        let firsts: Vec<u64> = streams.iter().map(|s| s.generator().gen()).collect();
        for i in 0..firsts.len() {
            for j in i + 1..firsts.len() {
                assert_ne!(firsts[i], firsts[j], "streams {i} and {j} collide");
            }
        }
    }

    #[test]
    fn uniform_mean_is_sane() {
        let mut g = RngStream::new(99).generator();
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| g.gen::<f64>()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64).sqrt() / (n as f64).sqrt());
    }
}
