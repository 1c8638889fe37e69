//! Seeded instance generators for property tests and oracle runs.
//!
//! Everything here is deterministic in (master_seed, instance_index), so a
//! failing instance can always be replayed from the two seeds in the report.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domination::orthonormalize;
use crate::error::Result;
use crate::measures::{AtomicMeasure, Decomposition};
use crate::sampling::instance_rng;
use crate::scalar::{lit, Scalar};
use crate::systems::{cycle_decomposition, FiniteSystem};

/// Uniform random permutation of {0, .., n-1}.
pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Product of `shears` integer elementary shears: exactly unimodular.
pub fn random_unimodular<T: Scalar>(rng: &mut ChaCha8Rng, d: usize, shears: usize) -> DMatrix<T> {
    let mut m = DMatrix::<T>::identity(d, d);
    for _ in 0..shears {
        let p = rng.gen_range(0..d);
        let mut q = rng.gen_range(0..d - 1);
        if q >= p {
            q += 1;
        }
        let c = lit::<T>(rng.gen_range(-2i64..=2) as f64);
        let mut shear = DMatrix::<T>::identity(d, d);
        shear[(p, q)] = c;
        m = shear * m;
    }
    m
}

/// Random finite cocycle instance: up to `max_states` states (at least 2),
/// matrices of dimension 2..=4 built from integer shears, uniform weights.
pub fn random_finite_system<T: Scalar>(master_seed: u64, index: u64) -> FiniteSystem<T> {
    let mut rng = instance_rng(master_seed, index);
    let n = rng.gen_range(2..=10usize);
    let d = rng.gen_range(2..=4usize);
    let perm = random_permutation(&mut rng, n);
    let mats = (0..n)
        .map(|_| {
            let shears = rng.gen_range(2..=5);
            random_unimodular::<T>(&mut rng, d, shears)
        })
        .collect();
    FiniteSystem::new(perm, mats, None).expect("shear products are unimodular")
}

/// A finite cocycle with an invariant splitting known by construction.
pub struct KnownSplitting<T: Scalar> {
    pub system: FiniteSystem<T>,
    pub index: usize,
    /// Orthonormal basis of the true E^cu per state.
    pub e_cu: Vec<DMatrix<T>>,
    /// Orthonormal basis of the true E^cs per state.
    pub e_cs: Vec<DMatrix<T>>,
    /// Smallest gap (in log scale) between the cu and cs diagonal blocks.
    pub log_gap: T,
}

/// Build A_s = C_{sigma(s)} D_s C_s^{-1} with integer-shear conjugators and
/// diagonal D_s split into an expanding block (first i entries) and a
/// contracting block, centered so |det| = 1 exactly in log space.
pub fn known_splitting_instance<T: Scalar>(master_seed: u64, index: u64) -> KnownSplitting<T> {
    let mut rng = instance_rng(master_seed, index ^ 0x5EED_u64);
    let n = rng.gen_range(2..=8usize);
    let d = rng.gen_range(2..=4usize);
    let i = rng.gen_range(1..d);
    let perm = random_permutation(&mut rng, n);

    // Mild conjugators: few unit shears keep the splitting angles healthy.
    let conj: Vec<DMatrix<T>> = (0..n)
        .map(|_| {
            let mut m = DMatrix::<T>::identity(d, d);
            for _ in 0..rng.gen_range(1..=2usize) {
                let p = rng.gen_range(0..d);
                let mut q = rng.gen_range(0..d - 1);
                if q >= p {
                    q += 1;
                }
                let mut shear = DMatrix::<T>::identity(d, d);
                shear[(p, q)] = lit::<T>(if rng.gen::<bool>() { 1.0 } else { -1.0 });
                m = shear * m;
            }
            m
        })
        .collect();

    let mut log_gap = T::max_value().unwrap();
    let mats: Vec<DMatrix<T>> = (0..n)
        .map(|s| {
            let mut logs: Vec<T> = (0..d)
                .map(|j| {
                    if j < i {
                        lit::<T>(rng.gen_range(0.5..1.5))
                    } else {
                        lit::<T>(rng.gen_range(-1.5..-0.5))
                    }
                })
                .collect();
            let mean = logs.iter().copied().fold(T::zero(), |a, b| a + b)
                / lit::<T>(d as f64);
            for l in logs.iter_mut() {
                *l -= mean;
            }
            let min_exp = logs[..i].iter().copied().fold(T::max_value().unwrap(), T::min);
            let max_con = logs[i..].iter().copied().fold(T::min_value().unwrap(), T::max);
            log_gap = log_gap.min(min_exp - max_con);
            let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                d,
                logs.iter().map(|l| l.exp()),
            ));
            let c_inv = conj[s]
                .clone()
                .try_inverse()
                .expect("unit shear products are invertible");
            &conj[perm[s]] * diag * c_inv
        })
        .collect();

    let e_cu = conj
        .iter()
        .map(|c| orthonormalize(&c.columns(0, i).into_owned()))
        .collect();
    let e_cs = conj
        .iter()
        .map(|c| orthonormalize(&c.columns(i, d - i).into_owned()))
        .collect();
    let system = FiniteSystem::new(perm, mats, None).expect("centered logs give |det| = 1");
    KnownSplitting {
        system,
        index: i,
        e_cu,
        e_cs,
        log_gap,
    }
}

/// Random invariant measure: a random positive mass per cycle, spread
/// uniformly inside the cycle.
pub fn random_invariant_measure<T: Scalar>(
    sys: &FiniteSystem<T>,
    master_seed: u64,
    index: u64,
) -> AtomicMeasure<T, usize> {
    let mut rng = instance_rng(master_seed, index ^ 0x3EA5_u64);
    let cycles = cycle_decomposition(sys);
    let masses: Vec<f64> = cycles.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = masses.iter().sum();
    let n = sys.n_states();
    let mut w = vec![T::zero(); n];
    for (cyc, mass) in cycles.iter().zip(&masses) {
        let per = lit::<T>(mass / total / cyc.states.len() as f64);
        for &s in &cyc.states {
            w[s] = per;
        }
    }
    // Renormalize away the f64 rounding before the sum check.
    let s: T = w.iter().copied().fold(T::zero(), |a, b| a + b);
    for x in w.iter_mut() {
        *x /= s;
    }
    AtomicMeasure::new((0..n).collect(), w).expect("cycle masses form a probability vector")
}

/// Random coarsening of a decomposition: components are grouped at random
/// and each group is merged into one mixture component.
pub fn random_coarsening<T: Scalar, P: Clone + PartialEq>(
    dec: &Decomposition<T, P>,
    master_seed: u64,
    index: u64,
) -> Result<Decomposition<T, P>> {
    let mut rng = instance_rng(master_seed, index ^ 0xC0A5_u64);
    let k = dec.components.len();
    let groups = rng.gen_range(1..=k);
    let mut assign: Vec<usize> = (0..k).map(|j| j % groups).collect();
    assign.shuffle(&mut rng);
    let mut out_components = Vec::with_capacity(groups);
    let mut out_weights = Vec::with_capacity(groups);
    for g in 0..groups {
        let members: Vec<usize> = (0..k).filter(|&j| assign[j] == g).collect();
        let mass: T = members
            .iter()
            .map(|&j| dec.weights[j])
            .fold(T::zero(), |a, b| a + b);
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for &j in &members {
            let rel = dec.weights[j] / mass;
            for (a, &w) in dec.components[j]
                .atoms()
                .iter()
                .zip(dec.components[j].weights())
            {
                atoms.push(a.clone());
                weights.push(w * rel);
            }
        }
        out_components.push(AtomicMeasure::merged(atoms, weights)?);
        out_weights.push(mass);
    }
    Decomposition::new(out_components, out_weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ergodic_decomposition_exact;
    use crate::systems::DynSystem;

    #[test]
    fn generated_systems_are_valid_and_reproducible() {
        for idx in 0..20 {
            let a = random_finite_system::<f64>(7, idx);
            let b = random_finite_system::<f64>(7, idx);
            assert_eq!(a.perm(), b.perm());
            assert_eq!(a.matrices(), b.matrices());
            for m in a.matrices() {
                assert!((m.determinant().abs() - 1.0).abs() <= 1e-9);
            }
        }
        let c = random_finite_system::<f64>(8, 0);
        let d0 = random_finite_system::<f64>(7, 0);
        assert!(c.perm() != d0.perm() || c.matrices() != d0.matrices());
    }

    #[test]
    fn known_splitting_is_equivariant() {
        for idx in 0..20 {
            let inst = known_splitting_instance::<f64>(11, idx);
            assert!(inst.log_gap > 0.0);
            let sys = &inst.system;
            for s in 0..sys.n_states() {
                let img = sys.cocycle(&s) * &inst.e_cu[s];
                let target = &inst.e_cu[sys.perm()[s]];
                // Column span must be preserved: project img onto target.
                let proj = target * (target.transpose() * &img);
                assert!(
                    (&img - &proj).norm() <= 1e-9 * img.norm(),
                    "E^cu not equivariant at state {s} of instance {idx}"
                );
            }
        }
    }

    #[test]
    fn invariant_measures_are_invariant() {
        for idx in 0..10 {
            let sys = random_finite_system::<f64>(3, idx);
            let mu = random_invariant_measure(&sys, 3, idx);
            let pushed = mu.push_forward(|s: &usize| sys.step(s).unwrap());
            let mut mass = vec![0.0; sys.n_states()];
            for (a, &w) in pushed.atoms().iter().zip(pushed.weights()) {
                mass[*a] += w;
            }
            for (s, &w) in mu.weights().iter().enumerate() {
                assert!((mass[s] - w).abs() <= 1e-12, "state {s}: {} vs {w}", mass[s]);
            }
        }
    }

    #[test]
    fn coarsening_preserves_the_mixture() {
        let sys = random_finite_system::<f64>(5, 2);
        let mu = random_invariant_measure(&sys, 5, 2);
        let dec = ergodic_decomposition_exact(&sys, &mu);
        let coarse = random_coarsening(&dec, 5, 2).unwrap();
        assert!(coarse.components.len() <= dec.components.len());
        let total: f64 = coarse.weights.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        // The coarse mixture equals the fine mixture as a measure on states.
        let mut fine = vec![0.0; sys.n_states()];
        for (c, &w) in dec.components.iter().zip(&dec.weights) {
            for (a, &m) in c.atoms().iter().zip(c.weights()) {
                fine[*a] += w * m;
            }
        }
        let mut agg = vec![0.0; sys.n_states()];
        for (c, &w) in coarse.components.iter().zip(&coarse.weights) {
            for (a, &m) in c.atoms().iter().zip(c.weights()) {
                agg[*a] += w * m;
            }
        }
        for (a, b) in fine.iter().zip(&agg) {
            assert!((a - b).abs() <= 1e-12_f64);
        }
    }
}
