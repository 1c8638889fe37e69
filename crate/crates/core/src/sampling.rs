//! Seeded sampling helpers: low-discrepancy point sets on the torus and
//! per-instance RNG derivation.
//!
//! Every randomized routine in the crate takes an explicit seed and derives
//! sub-streams with [`instance_rng`], so fuzz instances are reproducible in
//! isolation from their (master seed, index) pair.

use nalgebra::DVector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::{lit, Scalar};

/// splitmix64, used to stretch a seed into stream offsets.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// RNG for fuzz instance `index` under `master_seed`.
pub fn instance_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut s = master_seed ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
    let lo = splitmix64(&mut s);
    let hi = splitmix64(&mut s);
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&lo.to_le_bytes());
    seed[8..16].copy_from_slice(&hi.to_le_bytes());
    seed[16..24].copy_from_slice(&master_seed.to_le_bytes());
    seed[24..].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Kronecker (additive golden-ratio) low-discrepancy sequence on `[0,1)^dim`,
/// offset deterministically by `seed`.
pub fn low_discrepancy_points<T: Scalar>(dim: usize, count: usize, seed: u64) -> Vec<DVector<T>> {
    // Generalized golden ratio alphas per dimension.
    let phi = |d: f64| -> f64 {
        let mut x = 2.0_f64;
        for _ in 0..64 {
            x = (1.0 + x).powf(1.0 / (d + 1.0));
        }
        x
    };
    let g = phi(dim as f64);
    let alphas: Vec<f64> = (1..=dim).map(|j| (1.0 / g.powi(j as i32)).fract()).collect();

    let mut s = seed;
    let offsets: Vec<f64> = (0..dim)
        .map(|_| (splitmix64(&mut s) as f64 / u64::MAX as f64).fract())
        .collect();

    (0..count)
        .map(|k| {
            DVector::from_iterator(
                dim,
                (0..dim).map(|j| {
                    let v = (offsets[j] + alphas[j] * (k as f64 + 1.0)).fract();
                    lit::<T>(v)
                }),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_discrepancy_is_deterministic_and_in_range() {
        let a = low_discrepancy_points::<f64>(2, 100, 7);
        let b = low_discrepancy_points::<f64>(2, 100, 7);
        assert_eq!(a, b);
        for p in &a {
            for &c in p.iter() {
                assert!((0.0..1.0).contains(&c));
            }
        }
        let c = low_discrepancy_points::<f64>(2, 10, 8);
        assert_ne!(a[..10], c[..]);
    }

    #[test]
    fn instance_rngs_differ_by_index() {
        use rand::RngCore;
        let mut r0 = instance_rng(1, 0);
        let mut r1 = instance_rng(1, 1);
        assert_ne!(r0.next_u64(), r1.next_u64());
    }
}
