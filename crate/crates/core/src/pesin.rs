//! Pesin blocks from Birkhoff-sum conditions: the maximal function, truncated
//! and exact membership tests, block-measure estimation, and the block lemma
//! checker with its (eta, alpha, ell) parameter pipeline.

use nalgebra::SVD;

use crate::domination::{estimate_splitting_segment, exact_cycle_splitting, LogScaled};
use crate::error::{ErgError, Result};
use crate::measures::AtomicMeasure;
use crate::scalar::{lit, Scalar};
use crate::spectrum::exact_spectrum_periodic;
use crate::systems::{DynSystem, FiniteSystem, InverseSystem};

/// Which block to test: stable, unstable, or their intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    S,
    U,
    Both,
}

/// Parameters selecting a Pesin block Bl(ell).
#[derive(Debug, Clone)]
pub struct BlockParams {
    /// The block scale: membership looks at the ell-fold map.
    pub ell: usize,
    pub side: Side,
    /// Dimension of E^cu in the splitting used for the restricted norms.
    pub index: usize,
    /// Horizon for splitting estimation on smooth systems.
    pub horizon: usize,
}

/// The truncated maximal function of a finite value sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximalValue<T: Scalar> {
    /// Max over n of the prefix averages.
    pub phi_star: T,
    /// Smallest maximizing n (1-based).
    pub argmax: usize,
}

/// phi* = max over 1 <= n <= len of (1/n) sum_{j<n} vals[j].
pub fn maximal_function<T: Scalar>(vals: &[T]) -> Result<MaximalValue<T>> {
    if vals.is_empty() {
        return Err(ErgError::Argument("maximal function of an empty sequence".into()));
    }
    let mut sum = T::zero();
    let mut best = T::min_value().unwrap();
    let mut argmax = 1usize;
    for (j, &v) in vals.iter().enumerate() {
        sum += v;
        let avg = sum / lit::<T>((j + 1) as f64);
        if avg > best {
            best = avg;
            argmax = j + 1;
        }
    }
    Ok(MaximalValue {
        phi_star: best,
        argmax,
    })
}

/// Truncated block-membership verdict with its certificate.
#[derive(Debug, Clone)]
pub struct BlockVerdict<T: Scalar> {
    pub member: bool,
    pub phi_star: MaximalValue<T>,
    /// First n whose prefix average fails to be < -1, if any.
    pub first_violation: Option<usize>,
    /// Depth to which the condition was checked.
    pub checked_to: usize,
}

/// Membership from a value sequence: every prefix average must be < -1
/// (equivalently phi* < -1).
pub fn verdict_from_values<T: Scalar>(vals: &[T]) -> Result<BlockVerdict<T>> {
    let phi_star = maximal_function(vals)?;
    let mut sum = T::zero();
    let mut first_violation = None;
    for (j, &v) in vals.iter().enumerate() {
        sum += v;
        if first_violation.is_none() && sum / lit::<T>((j + 1) as f64) >= -T::one() {
            first_violation = Some(j + 1);
        }
    }
    Ok(BlockVerdict {
        member: first_violation.is_none(),
        phi_star,
        first_violation,
        checked_to: vals.len(),
    })
}

/// `log ||Df^ell|E^cs||` sequence along the ell-orbit of `x`, stable side,
/// with the splitting estimated at each visited point.
fn cs_log_norms<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    ell: usize,
    index: usize,
    horizon: usize,
    x: &S::Point,
    n_max: usize,
) -> Result<Vec<T>> {
    let d = sys.cocycle_dim();
    let mut vals = Vec::with_capacity(n_max);
    let mut y = x.clone();
    for _ in 0..n_max {
        let split = estimate_splitting_segment(sys, &y, index, horizon, 1)?;
        let mut prod = LogScaled::identity(d);
        let mut p = y.clone();
        for _ in 0..ell {
            prod.mul_left(&sys.cocycle(&p));
            p = sys.step(&p)?;
        }
        let svd = SVD::new(&prod.m * &split.e_cs[0], false, false);
        let max_sv = svd
            .singular_values
            .iter()
            .copied()
            .fold(T::zero(), |a, b| a.max(b));
        if max_sv <= T::zero() {
            return Err(ErgError::DegenerateCocycle { step: 0 });
        }
        vals.push(max_sv.ln() + prod.log);
        y = p;
    }
    Ok(vals)
}

/// Truncated Pesin-block membership: all prefix averages of the ell-scale
/// contraction logs must be < -1 up to depth `n_max` ("checked to n_max").
pub fn in_block<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    params: &BlockParams,
    x: &S::Point,
    n_max: usize,
) -> Result<BlockVerdict<T>> {
    if params.ell < 1 || n_max < 1 {
        return Err(ErgError::Argument("need ell >= 1 and n_max >= 1".into()));
    }
    let d = sys.cocycle_dim();
    match params.side {
        Side::S => {
            let vals = cs_log_norms(sys, params.ell, params.index, params.horizon, x, n_max)?;
            verdict_from_values(&vals)
        }
        Side::U => {
            // Bl^u(ell, f) = Bl^s(ell, f^{-1}); for f^{-1} the center-stable
            // bundle is E^cu of f, of complementary index.
            let inv = InverseSystem(sys);
            let vals = cs_log_norms(&inv, params.ell, d - params.index, params.horizon, x, n_max)?;
            verdict_from_values(&vals)
        }
        Side::Both => {
            let s = in_block(
                sys,
                &BlockParams {
                    side: Side::S,
                    ..params.clone()
                },
                x,
                n_max,
            )?;
            let u = in_block(
                sys,
                &BlockParams {
                    side: Side::U,
                    ..params.clone()
                },
                x,
                n_max,
            )?;
            Ok(BlockVerdict {
                member: s.member && u.member,
                phi_star: if s.phi_star.phi_star >= u.phi_star.phi_star {
                    s.phi_star
                } else {
                    u.phi_star
                },
                first_violation: match (s.first_violation, u.first_violation) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                },
                checked_to: n_max,
            })
        }
    }
}

/// Exact ell-scale contraction logs along the sigma^ell-cycle of `state`,
/// using the exact invariant splitting of the cycle product. Returns one
/// period of the (periodic) sequence.
pub fn exact_cycle_values<T: Scalar>(
    sys: &FiniteSystem<T>,
    ell: usize,
    index: usize,
    state: usize,
) -> Result<Vec<T>> {
    let d = sys.cocycle_dim();
    let split = exact_cycle_splitting(sys, state, index)?;
    let cycle = &split.points;
    let p0 = cycle.len();
    let g = {
        fn gcd(a: usize, b: usize) -> usize {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        gcd(p0, ell)
    };
    let p = p0 / g;
    let mut vals = Vec::with_capacity(p);
    for j in 0..p {
        let start = (ell * j) % p0;
        let mut prod = LogScaled::identity(d);
        for t in 0..ell {
            prod.mul_left(&sys.matrices()[cycle[(start + t) % p0]]);
        }
        let svd = SVD::new(&prod.m * &split.e_cs[start], false, false);
        let max_sv = svd
            .singular_values
            .iter()
            .copied()
            .fold(T::zero(), |a, b| a.max(b));
        if max_sv <= T::zero() {
            return Err(ErgError::DegenerateCocycle { step: 0 });
        }
        vals.push(max_sv.ln() + prod.log);
    }
    Ok(vals)
}

/// Exact membership from one period of the value sequence: with prefix sums
/// S_n and D = -(S_p + p) > 0, any n = qp + r (q >= 0, 1 <= r <= p) has
/// S_n + n = (S_r + r) - q D < S_r + r, so the condition S_n + n < 0 for all
/// n >= 1 reduces to one period plus a positive drift.
pub fn member_from_periodic_values<T: Scalar>(vals: &[T]) -> Result<bool> {
    if vals.is_empty() {
        return Err(ErgError::Argument("empty period".into()));
    }
    let mut sum = T::zero();
    for (r, &v) in vals.iter().enumerate() {
        sum += v;
        if sum + lit::<T>((r + 1) as f64) >= T::zero() {
            return Ok(false);
        }
    }
    // sum + p < 0 here, so the drift is positive and later periods only sink.
    Ok(true)
}

/// Brute-force counterpart of [`member_from_periodic_values`]: checks the
/// condition directly for all n up to `n_limit`.
pub fn member_brute_force<T: Scalar>(vals: &[T], n_limit: usize) -> bool {
    let p = vals.len();
    let mut sum = T::zero();
    for n in 1..=n_limit {
        sum += vals[(n - 1) % p];
        if sum + lit::<T>(n as f64) >= T::zero() {
            return false;
        }
    }
    true
}

/// Exact, untruncated Pesin-block membership for a state of a finite system.
pub fn in_block_exact_periodic<T: Scalar>(
    sys: &FiniteSystem<T>,
    params: &BlockParams,
    state: usize,
) -> Result<bool> {
    if params.ell < 1 {
        return Err(ErgError::Argument("need ell >= 1".into()));
    }
    let d = sys.cocycle_dim();
    match params.side {
        Side::S => {
            let vals = exact_cycle_values(sys, params.ell, params.index, state)?;
            member_from_periodic_values(&vals)
        }
        Side::U => {
            let inv = sys.inverse()?;
            let vals = exact_cycle_values(&inv, params.ell, d - params.index, state)?;
            member_from_periodic_values(&vals)
        }
        Side::Both => {
            let s = in_block_exact_periodic(
                sys,
                &BlockParams {
                    side: Side::S,
                    ..params.clone()
                },
                state,
            )?;
            let u = in_block_exact_periodic(
                sys,
                &BlockParams {
                    side: Side::U,
                    ..params.clone()
                },
                state,
            )?;
            Ok(s && u)
        }
    }
}

/// Weighted fraction of samples inside the block (truncated verdicts at
/// depth `n_max`); splitting degeneracies count as non-members.
pub fn block_measure<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    params: &BlockParams,
    samples: &AtomicMeasure<T, S::Point>,
    n_max: usize,
) -> Result<T> {
    let mut frac = T::zero();
    for (x, &w) in samples.atoms().iter().zip(samples.weights()) {
        match in_block(sys, params, x, n_max) {
            Ok(v) if v.member => frac += w,
            Ok(_) => {}
            Err(ErgError::NoGap { .. }) | Err(ErgError::DegenerateCocycle { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(frac)
}

/// Outcome of the (eta, alpha, ell) selection pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockChoice<T: Scalar> {
    pub alpha: T,
    pub ell: usize,
}

/// Cap on the ell search in [`choose_block_params`].
pub const ELL_MAX: usize = 10_000;

/// Pick alpha on the grid {2^-k : 0 <= k <= 20} (largest admissible for
/// condition (weight{lambda^cs > -alpha} < eta)), then the smallest
/// ell > 1/(alpha eta) whose mean finite-scale deviation is < alpha eta.
/// Returns None when no grid alpha is admissible or no ell <= ELL_MAX works.
pub fn choose_block_params<T: Scalar>(
    lambda_cs: &[T],
    weights: &[T],
    eta: T,
    finite_norm_fn: impl Fn(usize) -> Result<Vec<T>>,
) -> Result<Option<BlockChoice<T>>> {
    if eta <= T::zero() {
        return Err(ErgError::Argument("eta must be > 0".into()));
    }
    if lambda_cs.len() != weights.len() || lambda_cs.is_empty() {
        return Err(ErgError::Argument("one weight per lambda value required".into()));
    }
    let wsum: T = weights.iter().copied().fold(T::zero(), |a, b| a + b);
    if (wsum - T::one()).abs() > lit::<T>(1e-9) {
        return Err(ErgError::Argument("weights must sum to 1".into()));
    }
    let mut alpha = None;
    for k in 0..=20 {
        let a = lit::<T>(2.0_f64.powi(-k));
        let bad: T = lambda_cs
            .iter()
            .zip(weights)
            .filter(|(&l, _)| l > -a)
            .map(|(_, &w)| w)
            .fold(T::zero(), |x, y| x + y);
        if bad < eta {
            alpha = Some(a);
            break; // grid is descending: the first admissible value is largest
        }
    }
    let Some(alpha) = alpha else { return Ok(None) };
    let floor_bound = (T::one() / (alpha * eta)).to_f64_lossy().floor() as usize;
    for ell in (floor_bound + 1)..=ELL_MAX {
        // Guard against the strict inequality failing at the boundary.
        if lit::<T>(ell as f64) * alpha * eta <= T::one() {
            continue;
        }
        let per_sample = finite_norm_fn(ell)?;
        if per_sample.len() != lambda_cs.len() {
            return Err(ErgError::Argument(
                "finite_norm_fn must return one value per sample".into(),
            ));
        }
        let mean_dev: T = per_sample
            .iter()
            .zip(lambda_cs)
            .zip(weights)
            .map(|((&v, &l), &w)| w * (v - l).abs())
            .fold(T::zero(), |a, b| a + b);
        if mean_dev < alpha * eta {
            return Ok(Some(BlockChoice { alpha, ell }));
        }
    }
    Ok(None)
}

/// Hypotheses and data of the block lemma for one finite system.
#[derive(Debug, Clone)]
pub struct BlockLemmaParams<T: Scalar> {
    pub eta: T,
    pub alpha: T,
    pub ell: usize,
    pub index: usize,
    pub mu: AtomicMeasure<T, usize>,
}

#[derive(Debug, Clone)]
pub struct BlockLemmaReport<T: Scalar> {
    /// (e.c1): mu{lambda^cs > -alpha} < eta.
    pub c1: bool,
    /// (e.c2): ell > 1/(alpha eta).
    pub c2: bool,
    /// (e.c3): int |(1/ell) log||.^ell|E^cs|| - lambda^cs| dmu < alpha eta.
    pub c3: bool,
    pub hypotheses_hold: bool,
    pub conclusion_holds: bool,
    /// mu-mass outside the stable block.
    pub mu_nonmember: T,
    /// 3 eta - mu(nonmember).
    pub margin: T,
}

impl<T: Scalar> BlockLemmaReport<T> {
    pub fn to_json_line(&self, seed: Option<(u64, u64)>) -> String {
        serde_json::json!({
            "seed": seed.map(|(s, i)| format!("{s}/{i}")),
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "hypotheses_hold": self.hypotheses_hold,
            "conclusion_holds": self.conclusion_holds,
            "mu_nonmember": self.mu_nonmember.to_f64_lossy(),
            "margin": self.margin.to_f64_lossy(),
        })
        .to_string()
    }
}

/// Check the block lemma exactly on a finite system: the three hypotheses,
/// and the conclusion mu(complement of Bl^s(ell)) < 3 eta via exact periodic
/// membership. `mu` must be invariant.
pub fn check_block_lemma<T: Scalar>(
    sys: &FiniteSystem<T>,
    p: &BlockLemmaParams<T>,
) -> Result<BlockLemmaReport<T>> {
    if p.eta <= T::zero() || p.alpha <= T::zero() || p.ell < 1 {
        return Err(ErgError::Argument("need eta, alpha > 0 and ell >= 1".into()));
    }
    // Invariance check: push-forward of mu equals mu.
    let n = sys.n_states();
    let mut mass = vec![T::zero(); n];
    for (s, &w) in p.mu.atoms().iter().zip(p.mu.weights()) {
        if *s >= n {
            return Err(ErgError::Argument(format!("state {s} out of range")));
        }
        mass[*s] += w;
    }
    let mut deviation = T::zero();
    for s in 0..n {
        deviation = deviation.max((mass[sys.perm()[s]] - mass[s]).abs());
    }
    if deviation > lit::<T>(1e-12) {
        return Err(ErgError::NonInvariantMeasure {
            deviation: deviation.to_f64_lossy(),
        });
    }

    // Exact lambda^cs per state: the top exponent inside E^cs.
    let d = sys.cocycle_dim();
    if p.index < 1 || p.index >= d {
        return Err(ErgError::Argument("index out of range".into()));
    }
    let mut lambda_cs = vec![T::zero(); n];
    let mut finite_dev_sum = T::zero();
    let mut bad_mass = T::zero();
    let mut nonmember = T::zero();
    let params = BlockParams {
        ell: p.ell,
        side: Side::S,
        index: p.index,
        horizon: 0, // unused on the exact path
    };
    for s in 0..n {
        if mass[s] <= T::zero() {
            continue;
        }
        let spec = exact_spectrum_periodic(sys, s)?;
        lambda_cs[s] = spec.exponents[p.index];
        if lambda_cs[s] > -p.alpha {
            bad_mass += mass[s];
        }
        let vals = exact_cycle_values(sys, p.ell, p.index, s)?;
        // (1/ell) log||Df^ell|E^cs|| at s is vals[0]/ell by construction.
        finite_dev_sum += mass[s] * (vals[0] / lit::<T>(p.ell as f64) - lambda_cs[s]).abs();
        if !in_block_exact_periodic(sys, &params, s)? {
            nonmember += mass[s];
        }
    }
    let c1 = bad_mass < p.eta;
    let c2 = lit::<T>(p.ell as f64) * p.alpha * p.eta > T::one();
    let c3 = finite_dev_sum < p.alpha * p.eta;
    let three_eta = lit::<T>(3.0) * p.eta;
    Ok(BlockLemmaReport {
        c1,
        c2,
        c3,
        hypotheses_hold: c1 && c2 && c3,
        conclusion_holds: nonmember < three_eta,
        mu_nonmember: nonmember,
        margin: three_eta - nonmember,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::reference_measure_finite;
    use crate::sampling::low_discrepancy_points;
    use crate::systems::TorusMap;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn diag_sys(a: f64) -> FiniteSystem<f64> {
        // diag(e^{-a}, e^{a}): contraction e^{-a} on E^cs = e_1.
        FiniteSystem::new(
            vec![0],
            vec![DMatrix::from_row_slice(2, 2, &[(-a).exp(), 0.0, 0.0, a.exp()])],
            None,
        )
        .unwrap()
    }

    fn params(ell: usize) -> BlockParams {
        BlockParams {
            ell,
            side: Side::S,
            index: 1,
            horizon: 20,
        }
    }

    #[test]
    fn maximal_function_examples() {
        let m = maximal_function(&[-2.0, -2.0, -2.0]).unwrap();
        assert_eq!(m.phi_star, -2.0);
        assert_eq!(m.argmax, 1);

        let m = maximal_function(&[-0.5, -3.0]).unwrap();
        assert_eq!(m.phi_star, -0.5);
        assert_eq!(m.argmax, 1);

        let m = maximal_function(&[-3.0, 1.0, -3.0, 1.0, -3.0, 1.0]).unwrap();
        assert_abs_diff_eq!(m.phi_star, -1.0, epsilon = 1e-15);
        assert_eq!(m.argmax, 2);
    }

    #[test]
    fn in_block_constant_cocycles() {
        // log-norm -2 on E^cs: member with phi* = -2.
        let v = in_block(&diag_sys(2.0), &params(1), &0, 10).unwrap();
        assert!(v.member);
        assert_abs_diff_eq!(v.phi_star.phi_star, -2.0, epsilon = 1e-12);

        // first value -0.5: violation at n = 1.
        let v = in_block(&diag_sys(0.5), &params(1), &0, 10).unwrap();
        assert!(!v.member);
        assert_eq!(v.first_violation, Some(1));
    }

    #[test]
    fn in_block_cat_map_needs_ell_2() {
        let cat = TorusMap::<f64>::cat();
        let x = DVector::from_row_slice(&[0.3514, 0.7212]);
        let v1 = in_block(&cat, &params(1), &x, 5).unwrap();
        assert!(!v1.member); // contraction log = -0.9624 > -1
        let v2 = in_block(&cat, &params(2), &x, 5).unwrap();
        assert!(v2.member); // -1.9248 < -1
        assert_abs_diff_eq!(v2.phi_star.phi_star, -1.9248473, epsilon = 1e-4);
    }

    #[test]
    fn in_block_u_side_matches_inverse_s_side() {
        let cat = TorusMap::<f64>::cat();
        let x = DVector::from_row_slice(&[0.21, 0.62]);
        let mut pu = params(2);
        pu.side = Side::U;
        let u = in_block(&cat, &pu, &x, 4).unwrap();
        let inv = InverseSystem(&cat);
        let ps = BlockParams {
            ell: 2,
            side: Side::S,
            index: 1, // d - index of the forward system
            horizon: 20,
        };
        let s = in_block(&inv, &ps, &x, 4).unwrap();
        assert_eq!(u.member, s.member);
        assert_abs_diff_eq!(u.phi_star.phi_star, s.phi_star.phi_star, epsilon = 1e-10);
    }

    #[test]
    fn maximal_function_consistent_with_membership() {
        for vals in [
            vec![-2.0, -0.1, -3.0],
            vec![-1.5, -1.2, -0.9],
            vec![-1.0001, -1.0001],
            vec![-0.9999],
        ] {
            let v = verdict_from_values(&vals).unwrap();
            let m = maximal_function(&vals).unwrap();
            assert_eq!(v.member, m.phi_star < -1.0);
        }
    }

    #[test]
    fn exact_periodic_examples() {
        assert!(in_block_exact_periodic(&diag_sys(2.0), &params(1), 0).unwrap());
        // average exactly -1: boundary, not a member.
        assert!(!in_block_exact_periodic(&diag_sys(1.0), &params(1), 0).unwrap());

        // 2-cycle with a-values (-3, +0.5).
        let m0 = DMatrix::from_row_slice(2, 2, &[(-3.0f64).exp(), 0.0, 0.0, 3.0f64.exp()]);
        let m1 = DMatrix::from_row_slice(2, 2, &[0.5f64.exp(), 0.0, 0.0, (-0.5f64).exp()]);
        let sys = FiniteSystem::new(vec![1, 0], vec![m0, m1], None).unwrap();
        assert!(in_block_exact_periodic(&sys, &params(1), 0).unwrap());
        // Cross-check against brute force on the raw value sequence.
        assert!(member_brute_force(&[-3.0, 0.5], 100));
    }

    #[test]
    fn finite_reduction_agrees_with_brute_force() {
        // Slowly drifting periodic sequences near the boundary.
        let cases: Vec<Vec<f64>> = vec![
            vec![-3.0, 0.5],
            vec![-1.1],
            vec![-0.9],
            vec![-2.0, -0.05, -1.0],
            vec![-1.01, -0.999],
            vec![0.4, -2.5],
            vec![-4.0, 1.9, -1.0],
            vec![-1.0005, -1.0005, 0.0, -2.0],
        ];
        for vals in cases {
            let exact = member_from_periodic_values(&vals).unwrap();
            let brute = member_brute_force(&vals, 10_000);
            assert_eq!(exact, brute, "sequence {vals:?}");
        }
    }

    #[test]
    fn block_measure_examples() {
        // One member 1-cycle (weight 0.7), one non-member 1-cycle (0.3).
        let member = DMatrix::from_row_slice(2, 2, &[(-2.0f64).exp(), 0.0, 0.0, 2.0f64.exp()]);
        let nonmember = DMatrix::from_row_slice(2, 2, &[(-0.5f64).exp(), 0.0, 0.0, 0.5f64.exp()]);
        let sys =
            FiniteSystem::new(vec![0, 1], vec![member, nonmember], Some(vec![0.7, 0.3])).unwrap();
        let samples = reference_measure_finite(&sys);
        let frac = block_measure(&sys, &params(1), &samples, 20).unwrap();
        assert_abs_diff_eq!(frac, 0.7, epsilon = 1e-15);

        // Cat map at ell = 2: every point is a member.
        let cat = TorusMap::<f64>::cat();
        let samples = crate::measures::AtomicMeasure::uniform(
            low_discrepancy_points::<f64>(2, 1000, 6),
        )
        .unwrap();
        let frac = block_measure(&cat, &params(2), &samples, 3).unwrap();
        assert_abs_diff_eq!(frac, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn choose_block_params_examples() {
        // Constant lambda^cs = -2: alpha = 1, ell = 11.
        let choice = choose_block_params(&[-2.0], &[1.0], 0.1, |_ell| Ok(vec![-2.0]))
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(choice.alpha, 1.0, epsilon = 1e-15);
        assert_eq!(choice.ell, 11);

        // 10% of mass above -1 is still < eta = 0.2: alpha = 1 admissible.
        let choice = choose_block_params(
            &[-0.05, -2.0],
            &[0.1, 0.9],
            0.2,
            |_ell| Ok(vec![-0.05, -2.0]),
        )
        .unwrap()
        .unwrap();
        assert_abs_diff_eq!(choice.alpha, 1.0, epsilon = 1e-15);

        // Nonnegative exponents: no admissible alpha.
        let out = choose_block_params(&[0.0, 0.5], &[0.5, 0.5], 0.1, |_ell| Ok(vec![0.0, 0.5]))
            .unwrap();
        assert!(out.is_none());

        assert!(choose_block_params(&[-2.0], &[1.0], -0.1, |_| Ok(vec![-2.0])).is_err());
    }

    #[test]
    fn check_block_lemma_examples() {
        let sys = diag_sys(2.0);
        let mu = reference_measure_finite(&sys);
        let rep = check_block_lemma(
            &sys,
            &BlockLemmaParams {
                eta: 0.1,
                alpha: 1.0,
                ell: 11,
                index: 1,
                mu: mu.clone(),
            },
        )
        .unwrap();
        assert!(rep.c1 && rep.c2 && rep.c3);
        assert!(rep.hypotheses_hold);
        assert!(rep.conclusion_holds);
        assert_abs_diff_eq!(rep.mu_nonmember, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.margin, 0.3, epsilon = 1e-12);

        // ell <= 1/(alpha eta): hypotheses fail, lemma not applicable.
        let rep = check_block_lemma(
            &sys,
            &BlockLemmaParams {
                eta: 0.1,
                alpha: 1.0,
                ell: 10,
                index: 1,
                mu,
            },
        )
        .unwrap();
        assert!(!rep.c2);
        assert!(!rep.hypotheses_hold);
    }

    #[test]
    fn check_block_lemma_rejects_noninvariant_measure() {
        // 2-cycle with a non-invariant mu.
        let m = DMatrix::from_row_slice(2, 2, &[(-2.0f64).exp(), 0.0, 0.0, 2.0f64.exp()]);
        let sys = FiniteSystem::new(vec![1, 0], vec![m.clone(), m], None).unwrap();
        let mu = crate::measures::AtomicMeasure::new(vec![0usize, 1], vec![0.9, 0.1]).unwrap();
        let out = check_block_lemma(
            &sys,
            &BlockLemmaParams {
                eta: 0.1,
                alpha: 1.0,
                ell: 11,
                index: 1,
                mu,
            },
        );
        assert!(matches!(out, Err(ErgError::NonInvariantMeasure { .. })));
    }
}
