//! The measure layer: empirical measures, weak-star test-function metric,
//! exact and estimated ergodic decompositions, variance functional,
//! subadditive hat-norm, basin sets, invariant cores, and finite convex
//! approximation.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{ErgError, Result};
use crate::sampling::low_discrepancy_points;
use crate::scalar::{lit, Scalar};
use crate::systems::{cycle_decomposition, DynSystem, FiniteSystem, TorusMap, TorusPoint};

const WEIGHT_TOL: f64 = 1e-12;

/// Compensated (Kahan) sum: the normalization check must not fail from the
/// rounding of naively adding hundreds of thousands of tiny weights.
fn kahan_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// A weighted point-mass probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure<T: Scalar, P> {
    atoms: Vec<P>,
    weights: Vec<T>,
}

impl<T: Scalar, P: Clone + PartialEq> AtomicMeasure<T, P> {
    pub fn new(atoms: Vec<P>, weights: Vec<T>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(ErgError::Argument(
                "measure needs one weight per atom, at least one atom".into(),
            ));
        }
        if weights.iter().any(|&w| w < T::zero()) {
            return Err(ErgError::Argument("weights must be nonnegative".into()));
        }
        let sum = kahan_sum(weights.iter().copied());
        if (sum - T::one()).abs() > lit::<T>(WEIGHT_TOL) {
            return Err(ErgError::Argument(format!(
                "weights must sum to 1, got {}",
                sum.to_f64_lossy()
            )));
        }
        Ok(AtomicMeasure { atoms, weights })
    }

    /// Build a measure merging exactly-coincident atoms.
    pub fn merged(atoms: Vec<P>, weights: Vec<T>) -> Result<Self> {
        let mut out_atoms: Vec<P> = Vec::new();
        let mut out_weights: Vec<T> = Vec::new();
        for (a, w) in atoms.into_iter().zip(weights) {
            match out_atoms.iter().position(|b| *b == a) {
                Some(i) => out_weights[i] += w,
                None => {
                    out_atoms.push(a);
                    out_weights.push(w);
                }
            }
        }
        AtomicMeasure::new(out_atoms, out_weights)
    }

    pub fn dirac(p: P) -> Self {
        AtomicMeasure {
            atoms: vec![p],
            weights: vec![T::one()],
        }
    }

    pub fn uniform(atoms: Vec<P>) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(ErgError::Argument("uniform measure needs atoms".into()));
        }
        let w = T::one() / lit::<T>(n as f64);
        AtomicMeasure::new(atoms, vec![w; n])
    }

    pub fn atoms(&self) -> &[P] {
        &self.atoms
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Integral of a function against the measure (exact finite sum).
    pub fn integrate(&self, f: impl Fn(&P) -> T) -> T {
        self.atoms
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (a, &w)| acc + w * f(a))
    }

    /// Push-forward under a point map.
    pub fn push_forward<Q: Clone + PartialEq>(&self, f: impl Fn(&P) -> Q) -> AtomicMeasure<T, Q> {
        AtomicMeasure::merged(
            self.atoms.iter().map(|a| f(a)).collect(),
            self.weights.clone(),
        )
        .expect("push-forward preserves total mass")
    }
}

/// A bounded test function with a recorded sup-norm.
#[derive(Clone)]
pub struct TestFunction<T: Scalar, P> {
    pub name: String,
    pub sup_norm: T,
    f: Arc<dyn Fn(&P) -> T + Send + Sync>,
}

impl<T: Scalar, P> TestFunction<T, P> {
    pub fn new(
        name: impl Into<String>,
        sup_norm: T,
        f: impl Fn(&P) -> T + Send + Sync + 'static,
    ) -> Self {
        TestFunction {
            name: name.into(),
            sup_norm,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, p: &P) -> T {
        (self.f)(p)
    }
}

impl<T: Scalar, P> std::fmt::Debug for TestFunction<T, P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TestFunction({})", self.name)
    }
}

/// Ordered family of test functions; realizes the weak-star topology as a
/// concrete metric.
#[derive(Debug, Clone)]
pub struct TestFamily<T: Scalar, P> {
    pub functions: Vec<TestFunction<T, P>>,
}

impl<T: Scalar, P> TestFamily<T, P> {
    pub fn new(functions: Vec<TestFunction<T, P>>) -> Result<Self> {
        if functions.is_empty() {
            return Err(ErgError::Argument("test family must be nonempty".into()));
        }
        Ok(TestFamily { functions })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Upper bound for the induced metric: sum of the 2^{-k} weights.
    pub fn metric_diameter(&self) -> T {
        let mut s = T::zero();
        let half = lit::<T>(0.5);
        let mut w = half;
        for _ in 0..self.functions.len() {
            s += w;
            w *= half;
        }
        s
    }
}

/// Real Fourier modes `cos/sin(2 pi k.x)` with `|k|_inf <= max_degree`,
/// enumerated by increasing frequency magnitude.
pub fn fourier_family<T: Scalar>(dim: usize, max_degree: i64) -> TestFamily<T, TorusPoint<T>> {
    // Canonical half of the frequency lattice: first nonzero entry positive.
    let mut freqs: Vec<Vec<i64>> = Vec::new();
    let mut stack = vec![Vec::<i64>::new()];
    while let Some(cur) = stack.pop() {
        if cur.len() == dim {
            if cur.iter().any(|&k| k != 0) && cur.iter().find(|&&k| k != 0).copied().unwrap() > 0 {
                freqs.push(cur);
            }
            continue;
        }
        for k in -max_degree..=max_degree {
            let mut next = cur.clone();
            next.push(k);
            stack.push(next);
        }
    }
    freqs.sort_by(|a, b| {
        let na: i64 = a.iter().map(|k| k * k).sum();
        let nb: i64 = b.iter().map(|k| k * k).sum();
        na.cmp(&nb).then_with(|| a.cmp(b))
    });

    let mut functions = Vec::new();
    for k in freqs {
        let kk = k.clone();
        functions.push(TestFunction::new(
            format!("cos{k:?}"),
            T::one(),
            move |x: &TorusPoint<T>| {
                let phase: T = x
                    .iter()
                    .zip(&kk)
                    .fold(T::zero(), |a, (xi, &ki)| a + *xi * lit::<T>(ki as f64));
                (T::two_pi() * phase).cos()
            },
        ));
        let kk = k.clone();
        functions.push(TestFunction::new(
            format!("sin{k:?}"),
            T::one(),
            move |x: &TorusPoint<T>| {
                let phase: T = x
                    .iter()
                    .zip(&kk)
                    .fold(T::zero(), |a, (xi, &ki)| a + *xi * lit::<T>(ki as f64));
                (T::two_pi() * phase).sin()
            },
        ));
    }
    TestFamily { functions }
}

/// State-indicator test family for finite systems.
pub fn indicator_family<T: Scalar>(n_states: usize) -> TestFamily<T, usize> {
    let functions = (0..n_states)
        .map(|s| {
            TestFunction::new(format!("ind{s}"), T::one(), move |x: &usize| {
                if *x == s {
                    T::one()
                } else {
                    T::zero()
                }
            })
        })
        .collect();
    TestFamily { functions }
}

/// Weighted test-function metric:
/// `d = sum_k 2^{-k} |int psi_k dmu - int psi_k dnu| / (1 + ||psi_k||_inf)`.
pub fn weak_star_distance<T: Scalar, P: Clone + PartialEq>(
    mu: &AtomicMeasure<T, P>,
    nu: &AtomicMeasure<T, P>,
    fam: &TestFamily<T, P>,
) -> T {
    let half = lit::<T>(0.5);
    let mut w = half;
    let mut d = T::zero();
    for psi in &fam.functions {
        let a = mu.integrate(|p| psi.eval(p));
        let b = nu.integrate(|p| psi.eval(p));
        d += w * (a - b).abs() / (T::one() + psi.sup_norm);
        w *= half;
    }
    d
}

/// Finite-horizon empirical (Birkhoff) measure of the orbit of `x`.
pub fn birkhoff_empirical<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    x: &S::Point,
    n: usize,
) -> Result<AtomicMeasure<T, S::Point>> {
    if n < 1 {
        return Err(ErgError::Argument("horizon must be >= 1".into()));
    }
    let mut atoms = Vec::with_capacity(n);
    let mut p = x.clone();
    for k in 0..n {
        atoms.push(p.clone());
        if k + 1 < n {
            p = sys.step(&p)?;
        }
    }
    let w = T::one() / lit::<T>(n as f64);
    AtomicMeasure::merged(atoms, vec![w; n])
}

/// A measure on measures: components with a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T: Scalar, P> {
    pub components: Vec<AtomicMeasure<T, P>>,
    pub weights: Vec<T>,
}

impl<T: Scalar, P: Clone + PartialEq> Decomposition<T, P> {
    pub fn new(components: Vec<AtomicMeasure<T, P>>, weights: Vec<T>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(ErgError::Argument(
                "decomposition needs one weight per component".into(),
            ));
        }
        if weights.iter().any(|&w| w < T::zero()) {
            return Err(ErgError::Argument("weights must be nonnegative".into()));
        }
        let sum = kahan_sum(weights.iter().copied());
        if (sum - T::one()).abs() > lit::<T>(WEIGHT_TOL) {
            return Err(ErgError::Argument("weights must sum to 1".into()));
        }
        Ok(Decomposition {
            components,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// `mu-bar = int mu_y d lambda(y)`: weighted merge of component atoms.
pub fn integrate_decomposition<T: Scalar, P: Clone + PartialEq>(
    lam: &Decomposition<T, P>,
) -> AtomicMeasure<T, P> {
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (comp, &w) in lam.components.iter().zip(&lam.weights) {
        for (a, &cw) in comp.atoms().iter().zip(comp.weights()) {
            atoms.push(a.clone());
            weights.push(w * cw);
        }
    }
    AtomicMeasure::merged(atoms, weights).expect("component masses total 1")
}

/// Exact ergodic decomposition of a finite system: components are the uniform
/// measures on cycles, weighted by the mu-mass each cycle carries. Non-invariant
/// mu is accepted: every state's mass goes to its (eventual) cycle, matching the
/// push-forward of mu under the empirical-measure map.
pub fn ergodic_decomposition_exact<T: Scalar>(
    sys: &FiniteSystem<T>,
    mu: &AtomicMeasure<T, usize>,
) -> Decomposition<T, usize> {
    let cycles = cycle_decomposition(sys);
    let mut components = Vec::new();
    let mut weights = Vec::new();
    for cyc in &cycles {
        let mass = mu.integrate(|s| {
            if cyc.states.contains(s) {
                T::one()
            } else {
                T::zero()
            }
        });
        if mass > T::zero() {
            components.push(
                AtomicMeasure::uniform(cyc.states.clone()).expect("cycles are nonempty"),
            );
            weights.push(mass);
        }
    }
    Decomposition::new(components, weights).expect("cycle masses total 1")
}

/// Estimated ergodic decomposition: empirical measures at horizon `n`,
/// clustered by the greedy leader algorithm at the given radius. Deterministic
/// given the sample order.
pub fn estimate_decomposition<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    samples: &AtomicMeasure<T, S::Point>,
    n: usize,
    fam: &TestFamily<T, S::Point>,
    radius: T,
) -> Result<Decomposition<T, S::Point>> {
    if radius <= T::zero() {
        return Err(ErgError::Argument("radius must be > 0".into()));
    }
    let betas: Vec<AtomicMeasure<T, S::Point>> = samples
        .atoms()
        .iter()
        .map(|x| birkhoff_empirical(sys, x, n))
        .collect::<Result<_>>()?;

    // Greedy leader clustering, first fit by distance threshold.
    let mut leaders: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, beta) in betas.iter().enumerate() {
        match leaders
            .iter()
            .position(|&l| weak_star_distance(&betas[l], beta, fam) < radius)
        {
            Some(c) => members[c].push(i),
            None => {
                leaders.push(i);
                members.push(vec![i]);
            }
        }
    }

    let mut components = Vec::new();
    let mut weights = Vec::new();
    for cluster in &members {
        let mass: T = cluster
            .iter()
            .map(|&i| samples.weights()[i])
            .fold(T::zero(), |a, b| a + b);
        if mass <= T::zero() {
            continue;
        }
        let mut atoms = Vec::new();
        let mut ws = Vec::new();
        for &i in cluster {
            let rel = samples.weights()[i] / mass;
            for (a, &w) in betas[i].atoms().iter().zip(betas[i].weights()) {
                atoms.push(a.clone());
                ws.push(rel * w);
            }
        }
        // Renormalize away the rounding drift of summing many tiny weights.
        let total = kahan_sum(ws.iter().copied());
        for w in ws.iter_mut() {
            *w /= total;
        }
        components.push(AtomicMeasure::merged(atoms, ws)?);
        weights.push(mass);
    }
    Decomposition::new(components, weights)
}

/// `Var(phi, lambda) = int ( int phi dmu )^2 dlambda(mu)` for a function
/// centered with respect to the reference measure `m`.
pub fn variance<T: Scalar, P: Clone + PartialEq>(
    phi: impl Fn(&P) -> T,
    m: &AtomicMeasure<T, P>,
    lam: &Decomposition<T, P>,
) -> Result<T> {
    let centering = m.integrate(&phi);
    if centering.abs() > lit::<T>(1e-9) {
        return Err(ErgError::Argument(format!(
            "test function is not m-centered: int phi dm = {}",
            centering.to_f64_lossy()
        )));
    }
    Ok(lam
        .components
        .iter()
        .zip(&lam.weights)
        .fold(T::zero(), |acc, (comp, &w)| {
            let mean = comp.integrate(&phi);
            acc + w * mean * mean
        }))
}

/// Per-horizon values of the subadditive hat-norm `||phi_{f,n}||_{L2(m)} / n`
/// and their min over the supplied horizons.
#[derive(Debug, Clone)]
pub struct HatNorm<T: Scalar> {
    pub per_n: Vec<(usize, T)>,
    pub min: T,
}

/// Birkhoff-sum L2 norms against a reference measure.
pub fn hat_norm<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    phi: impl Fn(&S::Point) -> T,
    m: &AtomicMeasure<T, S::Point>,
    n_list: &[usize],
) -> Result<HatNorm<T>> {
    if n_list.is_empty() {
        return Err(ErgError::Argument("n_list must be nonempty".into()));
    }
    let n_max = *n_list.iter().max().unwrap();
    // Running Birkhoff sums per reference atom.
    let mut sums = vec![T::zero(); m.atoms().len()];
    let mut pts: Vec<S::Point> = m.atoms().to_vec();
    let mut per_n: Vec<(usize, T)> = Vec::new();
    let mut wanted: Vec<usize> = n_list.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let mut next = 0usize;
    for step in 1..=n_max {
        for (s, p) in sums.iter_mut().zip(pts.iter()) {
            *s += phi(p);
        }
        if next < wanted.len() && wanted[next] == step {
            let norm_sq = m
                .weights()
                .iter()
                .zip(&sums)
                .fold(T::zero(), |acc, (&w, &s)| acc + w * s * s);
            per_n.push((step, norm_sq.sqrt() / lit::<T>(step as f64)));
            next += 1;
        }
        if step < n_max {
            for p in pts.iter_mut() {
                *p = sys.step(p)?;
            }
        }
    }
    let min = per_n
        .iter()
        .map(|&(_, v)| v)
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    Ok(HatNorm { per_n, min })
}

/// Exact hat-norm on a finite system: the L2(m) norm of the cycle averages
/// of `phi`. Independent of the Birkhoff-sum route in [`hat_norm`].
pub fn hat_norm_exact_finite<T: Scalar>(
    sys: &FiniteSystem<T>,
    phi: impl Fn(&usize) -> T,
) -> T {
    let mut avg = vec![T::zero(); sys.n_states()];
    for cyc in cycle_decomposition(sys) {
        let p = lit::<T>(cyc.states.len() as f64);
        let mean = cyc
            .states
            .iter()
            .fold(T::zero(), |a, s| a + phi(s))
            / p;
        for &s in &cyc.states {
            avg[s] = mean;
        }
    }
    sys.weights()
        .iter()
        .zip(&avg)
        .fold(T::zero(), |acc, (&w, &a)| acc + w * a * a)
        .sqrt()
}

/// Membership of sampled points in a basin set `X_{U,f}` with `U` a
/// weak-star ball.
#[derive(Debug, Clone)]
pub struct BasinSet<T: Scalar> {
    pub flags: Vec<bool>,
    pub n_used: usize,
    pub radius: T,
    /// Fraction of samples whose membership agrees with that of their image
    /// (invariance diagnostic, reported not assumed).
    pub invariance_agreement: T,
}

impl<T: Scalar> BasinSet<T> {
    pub fn member_fraction(&self) -> T {
        let hits = self.flags.iter().filter(|&&b| b).count();
        lit::<T>(hits as f64) / lit::<T>(self.flags.len() as f64)
    }
}

pub fn basin_set<T: Scalar, S: DynSystem<T>>(
    sys: &S,
    center: &AtomicMeasure<T, S::Point>,
    radius: T,
    fam: &TestFamily<T, S::Point>,
    samples: &[S::Point],
    n: usize,
) -> Result<BasinSet<T>> {
    if radius <= T::zero() {
        return Err(ErgError::Argument("radius must be > 0".into()));
    }
    let mut flags = Vec::with_capacity(samples.len());
    let mut agree = 0usize;
    for x in samples {
        let beta = birkhoff_empirical(sys, x, n)?;
        let member = weak_star_distance(&beta, center, fam) < radius;
        flags.push(member);
        let fx = sys.step(x)?;
        let beta_fx = birkhoff_empirical(sys, &fx, n)?;
        let member_fx = weak_star_distance(&beta_fx, center, fam) < radius;
        if member == member_fx {
            agree += 1;
        }
    }
    Ok(BasinSet {
        invariance_agreement: lit::<T>(agree as f64) / lit::<T>(samples.len().max(1) as f64),
        flags,
        n_used: n,
        radius,
    })
}

/// Maximal invariant subset of a state set `V` of a finite system:
/// exactly the union of cycles entirely inside `V`.
pub fn invariant_core_finite<T: Scalar>(sys: &FiniteSystem<T>, v: &[usize]) -> Vec<usize> {
    let inside = |s: &usize| v.contains(s);
    let mut core = Vec::new();
    for cyc in cycle_decomposition(sys) {
        if cyc.states.iter().all(|s| inside(s)) && cyc.states.iter().any(|s| v.contains(s)) {
            core.extend(cyc.states);
        }
    }
    core.sort_unstable();
    core
}

/// Boolean grid region on `[0,1)^dim`, `resolution` cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRegion {
    pub dim: usize,
    pub resolution: usize,
    cells: Vec<bool>,
}

impl GridRegion {
    pub fn empty(dim: usize, resolution: usize) -> Self {
        GridRegion {
            dim,
            resolution,
            cells: vec![false; resolution.pow(dim as u32)],
        }
    }

    pub fn full(dim: usize, resolution: usize) -> Self {
        GridRegion {
            dim,
            resolution,
            cells: vec![true; resolution.pow(dim as u32)],
        }
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.resolution + i)
    }

    pub fn contains(&self, idx: &[usize]) -> bool {
        self.cells[self.flat(idx)]
    }

    pub fn insert(&mut self, idx: &[usize]) {
        let f = self.flat(idx);
        self.cells[f] = true;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn intersect(&mut self, other: &GridRegion) {
        for (a, &b) in self.cells.iter_mut().zip(&other.cells) {
            *a = *a && b;
        }
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let res = self.resolution;
        let dim = self.dim;
        self.cells.iter().enumerate().filter(|&(_, &b)| b).map(move |(f, _)| {
            let mut idx = vec![0usize; dim];
            let mut rest = f;
            for k in (0..dim).rev() {
                idx[k] = rest % res;
                rest /= res;
            }
            idx
        })
    }

    /// All cells intersecting the torus ball around `center`.
    pub fn ball<T: Scalar>(dim: usize, resolution: usize, center: &TorusPoint<T>, radius: T) -> Self {
        let mut out = GridRegion::empty(dim, resolution);
        let h = 1.0 / resolution as f64;
        let r = radius.to_f64_lossy();
        let c: Vec<f64> = center.iter().map(|&x| x.to_f64_lossy()).collect();
        let total = resolution.pow(dim as u32);
        for f in 0..total {
            let mut idx = vec![0usize; dim];
            let mut rest = f;
            for k in (0..dim).rev() {
                idx[k] = rest % resolution;
                rest /= resolution;
            }
            // Distance from the cell to the center (per-axis nearest point).
            let mut d2 = 0.0;
            for k in 0..dim {
                let lo = idx[k] as f64 * h;
                let hi = lo + h;
                let mut dk = f64::INFINITY;
                for shift in [-1.0, 0.0, 1.0] {
                    let cc = c[k] + shift;
                    let d = if cc < lo {
                        lo - cc
                    } else if cc > hi {
                        cc - hi
                    } else {
                        0.0
                    };
                    dk = dk.min(d);
                }
                d2 += dk * dk;
            }
            if d2.sqrt() <= r {
                out.cells[f] = true;
            }
        }
        out
    }
}

/// Conservative outer approximation of the image of a grid region under
/// one step of the map (forward or backward): each cell's corner images are
/// lifted continuously, covered by a bounding box, and inflated by one cell.
fn outer_image<T: Scalar>(sys: &TorusMap<T>, region: &GridRegion, forward: bool) -> Result<GridRegion> {
    let dim = region.dim;
    let res = region.resolution;
    let h = 1.0 / res as f64;
    let mut out = GridRegion::empty(dim, res);
    let step = |p: &TorusPoint<T>| -> Result<TorusPoint<T>> {
        if forward {
            sys.step(p)
        } else {
            sys.step_back(p)
        }
    };
    for idx in region.iter_cells() {
        // Center image anchors the lift.
        let center = DVector::from_iterator(
            dim,
            idx.iter().map(|&i| lit::<T>((i as f64 + 0.5) * h)),
        );
        let anchor: Vec<f64> = step(&center)?.iter().map(|&x| x.to_f64_lossy()).collect();
        let mut lo = anchor.clone();
        let mut hi = anchor.clone();
        for corner in 0..(1usize << dim) {
            let p = DVector::from_iterator(
                dim,
                (0..dim).map(|k| {
                    let off = if corner & (1 << k) != 0 { 1.0 } else { 0.0 };
                    lit::<T>((idx[k] as f64 + off) * h)
                }),
            );
            let img = step(&p)?;
            for k in 0..dim {
                // Lift modulo 1 to the representative nearest the anchor.
                let mut v = img[k].to_f64_lossy();
                while v - anchor[k] > 0.5 {
                    v -= 1.0;
                }
                while v - anchor[k] < -0.5 {
                    v += 1.0;
                }
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        // Mark every cell touching the inflated box.
        let ranges: Vec<(i64, i64)> = (0..dim)
            .map(|k| {
                let a = (lo[k] / h).floor() as i64 - 1;
                let b = (hi[k] / h).floor() as i64 + 1;
                (a, b)
            })
            .collect();
        let mut cursor: Vec<i64> = ranges.iter().map(|&(a, _)| a).collect();
        loop {
            let cell: Vec<usize> = cursor
                .iter()
                .map(|&c| (c.rem_euclid(res as i64)) as usize)
                .collect();
            out.insert(&cell);
            // Advance the multi-index.
            let mut k = dim;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                cursor[k] += 1;
                if cursor[k] <= ranges[k].1 {
                    break;
                }
                cursor[k] = ranges[k].0;
                if k == 0 {
                    break;
                }
            }
            if cursor.iter().zip(&ranges).all(|(&c, &(a, _))| c == a) {
                break;
            }
        }
    }
    Ok(out)
}

/// Grid outer approximation of the invariant core
/// `V_f = intersection of f^n(V), |n| <= k_range` for a torus map.
/// The result contains the true core.
pub fn invariant_core_torus<T: Scalar>(
    sys: &TorusMap<T>,
    v: &GridRegion,
    k_range: usize,
) -> Result<GridRegion> {
    let mut core = v.clone();
    let mut fwd = v.clone();
    let mut bwd = v.clone();
    for _ in 1..=k_range {
        fwd = outer_image(sys, &fwd, true)?;
        bwd = outer_image(sys, &bwd, false)?;
        core.intersect(&fwd);
        core.intersect(&bwd);
        if core.count() == 0 {
            break;
        }
    }
    Ok(core)
}

/// Greedy finite convex approximation of a decomposition: a sub-collection of
/// its components whose convex combination integrates within `eps` of the full
/// integral in the weak-star metric.
pub fn approx_convex_combination<T: Scalar, P: Clone + PartialEq>(
    lam: &Decomposition<T, P>,
    fam: &TestFamily<T, P>,
    eps: T,
) -> Result<Decomposition<T, P>> {
    if eps <= T::zero() {
        return Err(ErgError::Argument("eps must be > 0".into()));
    }
    let target = integrate_decomposition(lam);
    let k = lam.len();
    let mut chosen: Vec<usize> = Vec::new();
    let mut remaining: Vec<usize> = (0..k).collect();
    loop {
        // Current candidate from the chosen set with renormalized weights.
        if !chosen.is_empty() {
            let mass: T = chosen
                .iter()
                .map(|&i| lam.weights[i])
                .fold(T::zero(), |a, b| a + b);
            if mass > T::zero() {
                let comps: Vec<_> = chosen.iter().map(|&i| lam.components[i].clone()).collect();
                let ws: Vec<T> = chosen.iter().map(|&i| lam.weights[i] / mass).collect();
                let cand = Decomposition::new(comps, ws)?;
                if weak_star_distance(&integrate_decomposition(&cand), &target, fam) <= eps {
                    return Ok(cand);
                }
            }
        }
        if remaining.is_empty() {
            // Everything chosen: the combination is the decomposition itself.
            return Ok(lam.clone());
        }
        // Greedy step: add the component that brings the integral closest.
        let mut best = (remaining[0], T::max_value().unwrap());
        for &cand_i in &remaining {
            let mut ids = chosen.clone();
            ids.push(cand_i);
            let mass: T = ids
                .iter()
                .map(|&i| lam.weights[i])
                .fold(T::zero(), |a, b| a + b);
            if mass <= T::zero() {
                continue;
            }
            let comps: Vec<_> = ids.iter().map(|&i| lam.components[i].clone()).collect();
            let ws: Vec<T> = ids.iter().map(|&i| lam.weights[i] / mass).collect();
            let cand = Decomposition::new(comps, ws)?;
            let d = weak_star_distance(&integrate_decomposition(&cand), &target, fam);
            if d < best.1 {
                best = (cand_i, d);
            }
        }
        chosen.push(best.0);
        remaining.retain(|&i| i != best.0);
    }
}

const MEAS_SCHEMA: &str = "erglab-meas-v1";

/// Atom types serializable in the `erglab-meas-v1` schema.
pub trait MeasAtom: Clone + PartialEq {
    fn atom_dim(&self) -> usize;
    fn to_reals(&self) -> Vec<f64>;
    fn from_reals(vals: &[f64]) -> Result<Self>;
}

impl MeasAtom for usize {
    fn atom_dim(&self) -> usize {
        1
    }
    fn to_reals(&self) -> Vec<f64> {
        vec![*self as f64]
    }
    fn from_reals(vals: &[f64]) -> Result<Self> {
        if vals.len() != 1 || vals[0] < 0.0 || vals[0].fract() != 0.0 {
            return Err(ErgError::format(MEAS_SCHEMA, "state atom must be one integer"));
        }
        Ok(vals[0] as usize)
    }
}

impl<T: Scalar> MeasAtom for TorusPoint<T> {
    fn atom_dim(&self) -> usize {
        self.len()
    }
    fn to_reals(&self) -> Vec<f64> {
        self.iter().map(|&c| c.to_f64_lossy()).collect()
    }
    fn from_reals(vals: &[f64]) -> Result<Self> {
        if vals.is_empty() {
            return Err(ErgError::format(MEAS_SCHEMA, "point atom must be nonempty"));
        }
        Ok(DVector::from_iterator(vals.len(), vals.iter().map(|&v| lit::<T>(v))))
    }
}

fn parse_reals_line(line: &str, tag: &str) -> Result<Vec<f64>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.first() != Some(&tag) {
        return Err(ErgError::format(MEAS_SCHEMA, format!("expected '{tag}' line")));
    }
    toks[1..]
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| ErgError::format(MEAS_SCHEMA, format!("bad real '{t}': {e}")))
        })
        .collect()
}

impl<T: Scalar, P: MeasAtom> AtomicMeasure<T, P> {
    fn body_text(&self) -> String {
        let dim = self.atoms[0].atom_dim();
        let mut out = format!("n_atoms {} dim {}\n", self.atoms.len(), dim);
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            out.push_str("atom");
            for v in a.to_reals() {
                out.push_str(&format!(" {v:.17e}"));
            }
            out.push_str(&format!(" {:.17e}\n", w.to_f64_lossy()));
        }
        out
    }

    fn body_from_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        let size = lines
            .next()
            .ok_or_else(|| ErgError::format(MEAS_SCHEMA, "missing size line"))?;
        let toks: Vec<&str> = size.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "n_atoms" || toks[2] != "dim" {
            return Err(ErgError::format(MEAS_SCHEMA, "size line must be 'n_atoms N dim D'"));
        }
        let n: usize = toks[1]
            .parse()
            .map_err(|e| ErgError::format(MEAS_SCHEMA, format!("bad n_atoms: {e}")))?;
        let dim: usize = toks[3]
            .parse()
            .map_err(|e| ErgError::format(MEAS_SCHEMA, format!("bad dim: {e}")))?;
        let mut atoms = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| ErgError::format(MEAS_SCHEMA, "missing atom line"))?;
            let vals = parse_reals_line(line, "atom")?;
            if vals.len() != dim + 1 {
                return Err(ErgError::format(
                    MEAS_SCHEMA,
                    format!("atom line needs {dim} coordinates plus a weight"),
                ));
            }
            atoms.push(P::from_reals(&vals[..dim])?);
            weights.push(lit::<T>(vals[dim]));
        }
        AtomicMeasure::new(atoms, weights)
    }

    /// Serialize in the `erglab-meas-v1` schema.
    pub fn to_text(&self) -> String {
        format!("{MEAS_SCHEMA}\n{}", self.body_text())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ErgError::format(MEAS_SCHEMA, "empty file"))?;
        if header.trim() != MEAS_SCHEMA {
            return Err(ErgError::format(MEAS_SCHEMA, format!("bad schema tag '{header}'")));
        }
        Self::body_from_lines(&mut lines)
    }
}

impl<T: Scalar, P: MeasAtom> Decomposition<T, P> {
    /// Serialize as a weighted list of `erglab-meas-v1` measures.
    pub fn to_text(&self) -> String {
        let mut out = format!("{MEAS_SCHEMA}\ndecomposition {}\n", self.components.len());
        for (comp, &w) in self.components.iter().zip(&self.weights) {
            out.push_str(&format!("component {:.17e}\n", w.to_f64_lossy()));
            out.push_str(&comp.body_text());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ErgError::format(MEAS_SCHEMA, "empty file"))?;
        if header.trim() != MEAS_SCHEMA {
            return Err(ErgError::format(MEAS_SCHEMA, format!("bad schema tag '{header}'")));
        }
        let decl = lines
            .next()
            .ok_or_else(|| ErgError::format(MEAS_SCHEMA, "missing decomposition line"))?;
        let toks: Vec<&str> = decl.split_whitespace().collect();
        if toks.len() != 2 || toks[0] != "decomposition" {
            return Err(ErgError::format(MEAS_SCHEMA, "expected 'decomposition K'"));
        }
        let k: usize = toks[1]
            .parse()
            .map_err(|e| ErgError::format(MEAS_SCHEMA, format!("bad component count: {e}")))?;
        let mut components = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        for _ in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| ErgError::format(MEAS_SCHEMA, "missing component line"))?;
            let vals = parse_reals_line(line, "component")?;
            if vals.len() != 1 {
                return Err(ErgError::format(MEAS_SCHEMA, "component line takes one weight"));
            }
            weights.push(lit::<T>(vals[0]));
            components.push(AtomicMeasure::body_from_lines(&mut lines)?);
        }
        Decomposition::new(components, weights)
    }
}

/// Uniform reference measure on the states of a finite system (its weights).
pub fn reference_measure_finite<T: Scalar>(sys: &FiniteSystem<T>) -> AtomicMeasure<T, usize> {
    AtomicMeasure::new((0..sys.n_states()).collect(), sys.weights().to_vec())
        .expect("system weights form a probability")
}

/// Fixed-quadrature stand-in for Lebesgue measure on the torus: uniform
/// weights on a seeded low-discrepancy point set.
pub fn torus_reference_measure<T: Scalar>(
    dim: usize,
    n_samples: usize,
    seed: u64,
) -> AtomicMeasure<T, TorusPoint<T>> {
    AtomicMeasure::uniform(low_discrepancy_points(dim, n_samples, seed))
        .expect("sample set is nonempty")
}
