//! Cocycle linear algebra and Lyapunov spectrum estimation: QR-based
//! exponents, exterior-power growth functionals, and the exact
//! periodic-product oracle.

use nalgebra::{DMatrix, SVD};

use crate::error::{ErgError, Result};
use crate::measures::AtomicMeasure;
use crate::scalar::{lit, Scalar};
use crate::systems::{DynSystem, FiniteSystem};

/// A sorted Lyapunov spectrum (nats per iterate) with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct LyapunovSpectrum<T: Scalar, P> {
    /// Exponents sorted descending.
    pub exponents: Vec<T>,
    pub n_used: usize,
    pub point: P,
    /// Max fluctuation of the running estimates over the last 10% of iterates.
    pub residual: T,
}

impl<T: Scalar, P> LyapunovSpectrum<T, P> {
    pub fn sum(&self) -> T {
        self.exponents.iter().copied().fold(T::zero(), |a, b| a + b)
    }

    /// Zero-sum tolerance for a conservative system after `n` iterates:
    /// log-accumulation roundoff grows linearly.
    pub fn sum_tol(n_used: usize, d: usize) -> T {
        lit::<T>(1e-8) * lit::<T>(n_used as f64) * lit::<T>(d as f64)
    }

    /// Default gap tolerance for multiplicity grouping, on the Birkhoff
    /// fluctuation scale.
    pub fn default_gap_tol(&self) -> T {
        lit::<T>(10.0) / lit::<T>(self.n_used as f64).sqrt()
    }

    /// Distinct exponents at the given gap tolerance (the estimate of the
    /// number of Oseledets subspaces).
    pub fn distinct_exponents(&self, gap_tol: T) -> Vec<T> {
        let mut out: Vec<T> = Vec::new();
        for &e in &self.exponents {
            match out.last() {
                Some(&last) if (last - e).abs() <= gap_tol => {}
                _ => out.push(e),
            }
        }
        out
    }
}

/// Index classification of a spectrum: NUH at a margin, with the spectral gap.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexClass<T: Scalar> {
    /// Number of positive exponents when `nuh` holds, else 0.
    pub index: usize,
    /// Gap between the smallest positive and largest negative exponent.
    pub gap: T,
    pub nuh: bool,
}

/// Norm of the i-th exterior power: the product of the `i` largest singular
/// values of `a`.
pub fn exterior_norm<T: Scalar>(a: &DMatrix<T>, i: usize) -> Result<T> {
    let d = a.nrows();
    if i < 1 || i > d {
        return Err(ErgError::Argument(format!(
            "exterior power index {i} out of range 1..={d}"
        )));
    }
    let svd = SVD::new(a.clone(), false, false);
    let mut sv: Vec<T> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(sv[..i].iter().copied().fold(T::one(), |p, s| p * s))
}

/// QR-based Lyapunov spectrum estimate along the forward orbit of `x`.
///
/// Re-orthogonalizes every iterate (cheap at d <= 4) starting from the
/// identity frame, and accumulates the log of the R-diagonals. The reported
/// exponents average only the second half of the orbit: the first half is
/// burn-in for the frame, which cancels the O(1/n) alignment bias of the
/// identity start and leaves an exponentially small error whenever the
/// exponents are separated.
pub fn estimate_spectrum<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    x: &S::Point,
    n: usize,
) -> Result<LyapunovSpectrum<T, S::Point>> {
    let d = sys.cocycle_dim();
    if n < d {
        return Err(ErgError::Argument(format!(
            "need n >= d = {d}, got n = {n}"
        )));
    }
    let mut q = DMatrix::<T>::identity(d, d);
    let mut acc = vec![T::zero(); d];
    let burn = n / 2;
    let mut acc_burn = vec![T::zero(); d];
    let tail_start = n - (n / 10).max(1);
    let mut tail_min = vec![T::max_value().unwrap(); d];
    let mut tail_max = vec![T::min_value().unwrap(); d];
    let rank_tol = lit::<T>(1e-150);

    let mut p = x.clone();
    for k in 0..n {
        let b = sys.cocycle(&p) * &q;
        let qr = b.qr();
        let r = qr.r();
        q = qr.q();
        for j in 0..d {
            let rd = r[(j, j)].abs();
            if !rd.is_finite_scalar() || rd <= rank_tol {
                return Err(ErgError::DegenerateCocycle { step: k });
            }
            acc[j] += rd.ln();
        }
        if k + 1 == burn {
            acc_burn.copy_from_slice(&acc);
        }
        if k + 1 > tail_start {
            let kk = lit::<T>((k + 1) as f64);
            for j in 0..d {
                let est = acc[j] / kk;
                tail_min[j] = tail_min[j].min(est);
                tail_max[j] = tail_max[j].max(est);
            }
        }
        if k + 1 < n {
            p = sys.step(&p).map_err(|e| match e {
                ErgError::NumericOverflow { .. } => ErgError::NumericOverflow { step: k + 1 },
                other => other,
            })?;
        }
    }

    let window = lit::<T>((n - burn) as f64);
    let mut exponents: Vec<T> = acc
        .iter()
        .zip(&acc_burn)
        .map(|(&a, &a0)| (a - a0) / window)
        .collect();
    exponents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let residual = (0..d)
        .map(|j| tail_max[j] - tail_min[j])
        .fold(T::zero(), |a, b| a.max(b));
    Ok(LyapunovSpectrum {
        exponents,
        n_used: n,
        point: x.clone(),
        residual,
    })
}

/// Exact Lyapunov spectrum of a periodic orbit of a finite system:
/// `(1/p) log` of the eigenvalue moduli of the cycle product.
pub fn exact_spectrum_periodic<T: Scalar>(
    sys: &FiniteSystem<T>,
    state: usize,
) -> Result<LyapunovSpectrum<T, usize>> {
    if state >= sys.n_states() {
        return Err(ErgError::Argument(format!("state {state} out of range")));
    }
    let p = sys.cycle_of(state).len();
    let prod = sys.cycle_product(state);
    // The unshifted QR iteration can cycle forever on matrices with several
    // eigenvalues of equal modulus (e.g. permutation-like cycle products), so
    // bound the iteration count and retry with a deterministic relative
    // jitter far below every downstream tolerance.
    let d = prod.nrows();
    let eigs = {
        let mut found = None;
        let scale = prod.amax().max(T::one());
        for attempt in 0..4 {
            let mut m = prod.clone();
            if attempt > 0 {
                let delta = scale * lit::<T>(1e-13 * 100f64.powi(attempt - 1));
                for r in 0..d {
                    for c in 0..d {
                        let pat = lit::<T>(((r * 31 + c * 17) % 7) as f64 - 3.0) / lit::<T>(3.0);
                        m[(r, c)] += delta * pat;
                    }
                }
            }
            if let Some(schur) =
                nalgebra::linalg::Schur::try_new(m, T::default_epsilon(), 50 * (d + 1) * (d + 1))
            {
                found = Some(schur.complex_eigenvalues());
                break;
            }
        }
        found.ok_or(ErgError::DegenerateCocycle { step: 0 })?
    };
    let pp = lit::<T>(p as f64);
    let mut exponents: Vec<T> = eigs
        .iter()
        .map(|z| {
            let modulus = (z.re * z.re + z.im * z.im).sqrt();
            if modulus <= T::zero() {
                Err(ErgError::DegenerateCocycle { step: 0 })
            } else {
                Ok(modulus.ln() / pp)
            }
        })
        .collect::<Result<_>>()?;
    exponents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(LyapunovSpectrum {
        exponents,
        n_used: p,
        point: state,
        residual: T::zero(),
    })
}

/// Values of the exterior-power growth functional per horizon, and their min.
#[derive(Debug, Clone)]
pub struct LiFunctional<T: Scalar> {
    /// `(n, L_i^{(n)})` per requested horizon.
    pub per_n: Vec<(usize, T)>,
    /// Min over the supplied horizons (finite stand-in for the inf over n).
    pub min: T,
}

/// Average exterior-power growth `L_i^{(n)} = \int (1/n) log ||∧^i Df^n|| dmu`
/// for each `n` in `n_list`.
pub fn l_i_functional<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    mu: &AtomicMeasure<T, S::Point>,
    i: usize,
    n_list: &[usize],
) -> Result<LiFunctional<T>> {
    if n_list.is_empty() {
        return Err(ErgError::Argument("n_list must be nonempty".into()));
    }
    let d = sys.cocycle_dim();
    if i < 1 || i > d {
        return Err(ErgError::Argument(format!(
            "exterior power index {i} out of range 1..={d}"
        )));
    }
    let n_max = *n_list.iter().max().unwrap();
    let big = lit::<T>(1e100);
    let mut per_n: Vec<(usize, T)> = n_list.iter().map(|&n| (n, T::zero())).collect();

    for (atom, &w) in mu.atoms().iter().zip(mu.weights()) {
        // One pass along the orbit, with rescaling; log ||∧^i (c M)|| =
        // log ||∧^i M|| + i log c keeps the values exact.
        let mut m = DMatrix::<T>::identity(d, d);
        let mut log_scale = T::zero();
        let mut p = atom.clone();
        for step in 1..=n_max {
            m = sys.cocycle(&p) * m;
            let mx = m.amax();
            if mx > big {
                m /= mx;
                log_scale += mx.ln();
            }
            if let Some(entry) = per_n.iter_mut().find(|(n, _)| *n == step) {
                let ln_norm = exterior_norm(&m, i)?.ln() + lit::<T>(i as f64) * log_scale;
                entry.1 += w * ln_norm / lit::<T>(step as f64);
            }
            if step < n_max {
                p = sys.step(&p)?;
            }
        }
    }
    let min = per_n
        .iter()
        .map(|&(_, v)| v)
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    Ok(LiFunctional { per_n, min })
}

/// Classify NUH membership at a margin: true iff no exponent lies inside
/// `[-margin, margin]` and both signs occur with the positive ones first.
pub fn classify_index<T: Scalar, P>(spec: &LyapunovSpectrum<T, P>, margin: T) -> IndexClass<T> {
    let d = spec.exponents.len();
    let pos = spec.exponents.iter().filter(|&&e| e > margin).count();
    let neg = spec.exponents.iter().filter(|&&e| e < -margin).count();
    if pos + neg == d && pos > 0 && neg > 0 {
        IndexClass {
            index: pos,
            gap: spec.exponents[pos - 1] - spec.exponents[pos],
            nuh: true,
        }
    } else {
        IndexClass {
            index: 0,
            gap: T::zero(),
            nuh: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::AtomicMeasure;
    use crate::sampling::low_discrepancy_points;
    use crate::systems::TorusMap;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    const CAT_TOP: f64 = 0.9624236501192069; // log((3+sqrt 5)/2)

    fn one_state(m: DMatrix<f64>) -> FiniteSystem<f64> {
        FiniteSystem::new(vec![0], vec![m], None).unwrap()
    }

    #[test]
    fn exterior_norm_examples() {
        let id3 = DMatrix::<f64>::identity(3, 3);
        assert_abs_diff_eq!(exterior_norm(&id3, 2).unwrap(), 1.0, epsilon = 1e-14);

        // Diagonal matrix: singular values are the |diagonal| entries.
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(&[3.0, 2.0, 1.0]));
        assert_abs_diff_eq!(exterior_norm(&d, 2).unwrap(), 6.0, epsilon = 1e-12);

        let cat = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(
            exterior_norm(&cat, 1).unwrap(),
            (3.0 + 5.0_f64.sqrt()) / 2.0,
            epsilon = 1e-6
        );

        assert!(exterior_norm(&id3, 0).is_err());
        assert!(exterior_norm(&id3, 4).is_err());
    }

    #[test]
    fn spectrum_constant_diagonal_cocycle() {
        let sys = one_state(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]));
        let spec = estimate_spectrum(&sys, &0, 100).unwrap();
        assert_abs_diff_eq!(spec.exponents[0], 2.0_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(spec.exponents[1], -(2.0_f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn spectrum_cat_map() {
        let cat = TorusMap::<f64>::cat();
        let x = DVector::from_row_slice(&[0.3514, 0.7212]);
        let spec = estimate_spectrum(&cat, &x, 10_000).unwrap();
        assert_abs_diff_eq!(spec.exponents[0], CAT_TOP, epsilon = 1e-3);
        assert_abs_diff_eq!(spec.exponents[1], -CAT_TOP, epsilon = 1e-3);
        assert!(spec.sum().abs() <= 1e-6);
    }

    #[test]
    fn spectrum_identity_map_is_exactly_zero() {
        let id = TorusMap::<f64>::identity(2);
        let x = DVector::from_row_slice(&[0.37, 0.58]);
        let spec = estimate_spectrum(&id, &x, 50).unwrap();
        assert_eq!(spec.exponents, vec![0.0, 0.0]);
        assert_eq!(spec.residual, 0.0);
    }

    #[test]
    fn exact_periodic_examples() {
        // 2-cycle diag(2,1/2), diag(3,1/3): product diag(6, 1/6).
        let sys = FiniteSystem::new(
            vec![1, 0],
            vec![
                DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
                DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0 / 3.0]),
            ],
            None,
        )
        .unwrap();
        let spec = exact_spectrum_periodic(&sys, 0).unwrap();
        assert_abs_diff_eq!(spec.exponents[0], 6.0_f64.ln() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.exponents[0], 0.895880, epsilon = 1e-6);
        assert_abs_diff_eq!(spec.exponents[1], -6.0_f64.ln() / 2.0, epsilon = 1e-12);

        // Rotation by 30 degrees: orthogonal, both exponents zero.
        let th = 30.0_f64.to_radians();
        let rot = one_state(DMatrix::from_row_slice(
            2,
            2,
            &[th.cos(), -th.sin(), th.sin(), th.cos()],
        ));
        let spec = exact_spectrum_periodic(&rot, 0).unwrap();
        assert_abs_diff_eq!(spec.exponents[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.exponents[1], 0.0, epsilon = 1e-14);

        // Cat matrix as a 1-cycle.
        let cat = one_state(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]));
        let spec = exact_spectrum_periodic(&cat, 0).unwrap();
        assert_abs_diff_eq!(spec.exponents[0], CAT_TOP, epsilon = 1e-10);
        assert!(spec.sum().abs() <= 1e-10);
    }

    #[test]
    fn l_i_functional_examples() {
        // Constant cocycle diag(2,1/2): L_1^{(n)} = log 2 for every n.
        let sys = one_state(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]));
        let mu = AtomicMeasure::new(vec![0usize], vec![1.0]).unwrap();
        let li = l_i_functional(&sys, &mu, 1, &[1, 2]).unwrap();
        for &(_, v) in &li.per_n {
            assert_abs_diff_eq!(v, 2.0_f64.ln(), epsilon = 1e-12);
        }

        // 2-cycle {diag(2,1/2), rot 90}: L_1^{(2)} = (1/2) log 2.
        let rot90 = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let sys = FiniteSystem::new(
            vec![1, 0],
            vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), rot90],
            None,
        )
        .unwrap();
        let mu = AtomicMeasure::new(vec![0usize, 1], vec![0.5, 0.5]).unwrap();
        let li = l_i_functional(&sys, &mu, 1, &[2]).unwrap();
        assert_abs_diff_eq!(li.per_n[0].1, 0.5 * 2.0_f64.ln(), epsilon = 1e-12);

        // Cat map, i = 2: the second exterior power is the determinant, so 0.
        let cat = TorusMap::<f64>::cat();
        let pts = low_discrepancy_points::<f64>(2, 100, 5);
        let w = vec![0.01; 100];
        let mu = AtomicMeasure::new(pts, w).unwrap();
        let li = l_i_functional(&cat, &mu, 2, &[1, 3, 7]).unwrap();
        assert!(li.min.abs() <= 1e-10);
    }

    #[test]
    fn l_i_is_subadditive_in_n() {
        let cat = TorusMap::<f64>::cat();
        let pts = low_discrepancy_points::<f64>(2, 20, 11);
        let mu = AtomicMeasure::new(pts, vec![0.05; 20]).unwrap();
        let ns: Vec<usize> = (1..=32).collect();
        let li = l_i_functional(&cat, &mu, 1, &ns).unwrap();
        let val = |n: usize| -> f64 {
            li.per_n.iter().find(|&&(m, _)| m == n).unwrap().1 * n as f64
        };
        for k in 1..=16usize {
            for n in 1..=16usize {
                assert!(val(k + n) <= val(k) + val(n) + 1e-9, "k={k}, n={n}");
            }
        }
    }

    #[test]
    fn classify_index_examples() {
        let spec = LyapunovSpectrum {
            exponents: vec![0.96, -0.96],
            n_used: 10_000,
            point: (),
            residual: 0.0,
        };
        let c = classify_index(&spec, 0.1);
        assert!(c.nuh);
        assert_eq!(c.index, 1);

        let zero = LyapunovSpectrum {
            exponents: vec![0.0, 0.0],
            n_used: 100,
            point: (),
            residual: 0.0,
        };
        assert!(!classify_index(&zero, 0.1).nuh);

        let mid = LyapunovSpectrum {
            exponents: vec![0.5, 0.05, -0.55],
            n_used: 100,
            point: (),
            residual: 0.0,
        };
        assert!(!classify_index(&mid, 0.1).nuh);
    }

    #[test]
    fn spectrum_generic_over_f32() {
        let sys = FiniteSystem::<f32>::new(
            vec![0],
            vec![DMatrix::from_row_slice(2, 2, &[2.0f32, 0.0, 0.0, 0.5])],
            None,
        )
        .unwrap();
        let spec = estimate_spectrum(&sys, &0, 50).unwrap();
        assert!((spec.exponents[0] - 2.0f32.ln()).abs() < 1e-5);
    }
}
