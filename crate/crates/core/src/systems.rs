//! The dynamical-system zoo: volume-preserving torus maps and exact finite
//! measure-preserving systems carrying matrix cocycles, behind one
//! evaluation interface.
//!
//! Conventions: torus coordinates live in `[0,1)^dim` and the metric is the
//! flat torus metric. Every map in the zoo has an exact closed-form inverse
//! (the maps are built from shears and unimodular integer matrices).

use nalgebra::{DMatrix, DVector};

use crate::error::{ErgError, Result};
use crate::sampling::low_discrepancy_points;
use crate::scalar::{lit, Scalar};

pub type TorusPoint<T> = DVector<T>;

/// A discrete-time invertible system with a linear cocycle over it.
pub trait DynSystem<T: Scalar> {
    type Point: Clone + PartialEq + std::fmt::Debug;

    /// Dimension of the cocycle matrices.
    fn cocycle_dim(&self) -> usize;

    fn step(&self, x: &Self::Point) -> Result<Self::Point>;

    fn step_back(&self, x: &Self::Point) -> Result<Self::Point>;

    /// Cocycle matrix at `x` (the Jacobian, for smooth systems).
    fn cocycle(&self, x: &Self::Point) -> DMatrix<T>;

    /// Metric on the phase space.
    fn distance(&self, a: &Self::Point, b: &Self::Point) -> T;

    /// Cocycle of the inverse system at `x`: `(Df(f^{-1}x))^{-1}`.
    fn cocycle_back(&self, x: &Self::Point) -> Result<DMatrix<T>> {
        let pre = self.step_back(x)?;
        self.cocycle(&pre)
            .try_inverse()
            .ok_or(ErgError::DegenerateCocycle { step: 0 })
    }
}

/// View of a system with time reversed.
pub struct InverseSystem<'a, S>(pub &'a S);

impl<'a, T: Scalar, S: DynSystem<T>> DynSystem<T> for InverseSystem<'a, S> {
    type Point = S::Point;

    fn cocycle_dim(&self) -> usize {
        self.0.cocycle_dim()
    }

    fn step(&self, x: &Self::Point) -> Result<Self::Point> {
        self.0.step_back(x)
    }

    fn step_back(&self, x: &Self::Point) -> Result<Self::Point> {
        self.0.step(x)
    }

    fn cocycle(&self, x: &Self::Point) -> DMatrix<T> {
        self.0
            .cocycle_back(x)
            .expect("inverse cocycle of an invertible system")
    }

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> T {
        self.0.distance(a, b)
    }
}

fn wrap01<T: Scalar>(x: T) -> T {
    let f = x - x.floor();
    // Guard against f == 1 from rounding.
    if f >= T::one() {
        f - T::one()
    } else {
        f
    }
}

fn check_finite<T: Scalar>(p: &DVector<T>, step: usize) -> Result<()> {
    if p.iter().all(|c| c.is_finite_scalar()) {
        Ok(())
    } else {
        Err(ErgError::NumericOverflow { step })
    }
}

#[derive(Debug, Clone)]
enum MapKind<T: Scalar> {
    /// Toral automorphism from a unimodular integer matrix.
    Toral {
        fwd: DMatrix<i64>,
        inv: DMatrix<i64>,
    },
    /// Chirikov standard map `(x,y) -> (x + y + (K/2pi) sin 2pi x, y + (K/2pi) sin 2pi x)`.
    Standard { k: T },
    /// 3D volume-preserving ABC-style map: three successive coordinate shears.
    Abc { a: T, b: T, c: T },
    /// Cat map composed with the shear `(x,y) -> (x, y + eps sin 2pi x)`.
    PerturbedCat { eps: T },
    /// Linear map on R^d, no wrap-around; a chart-scale test system.
    Linear {
        fwd: DMatrix<T>,
        inv: DMatrix<T>,
    },
    /// Deliberately non-conservative test map `(x,y) -> (x+y, y/2)`.
    Squash,
}

/// A smooth self-map of the torus (or of a linear chart) with Jacobian cocycle.
#[derive(Debug, Clone)]
pub struct TorusMap<T: Scalar> {
    name: String,
    dim: usize,
    kind: MapKind<T>,
}

fn int_matrix_inverse(m: &DMatrix<i64>) -> Result<DMatrix<i64>> {
    let d = m.nrows();
    let det: i64 = match d {
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => return Err(ErgError::Argument("toral matrices must be 2x2 or 3x3".into())),
    };
    if det != 1 && det != -1 {
        return Err(ErgError::Argument(format!(
            "toral matrix must be unimodular, det = {det}"
        )));
    }
    // Adjugate divided by det stays integral for unimodular matrices.
    let adj = match d {
        2 => DMatrix::from_row_slice(2, 2, &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]]),
        _ => {
            let cof = |r: usize, c: usize| -> i64 {
                let rows: Vec<usize> = (0..3).filter(|&i| i != r).collect();
                let cols: Vec<usize> = (0..3).filter(|&j| j != c).collect();
                let minor = m[(rows[0], cols[0])] * m[(rows[1], cols[1])]
                    - m[(rows[0], cols[1])] * m[(rows[1], cols[0])];
                if (r + c) % 2 == 0 {
                    minor
                } else {
                    -minor
                }
            };
            DMatrix::from_fn(3, 3, |r, c| cof(c, r))
        }
    };
    Ok(adj.map(|v| v / det))
}

impl<T: Scalar> TorusMap<T> {
    /// The Arnold cat map `[[2,1],[1,1]] mod 1`.
    pub fn cat() -> Self {
        Self::toral("cat", DMatrix::from_row_slice(2, 2, &[2, 1, 1, 1]))
            .expect("cat matrix is unimodular")
    }

    /// General hyperbolic toral automorphism from a unimodular integer matrix.
    pub fn toral(name: &str, m: DMatrix<i64>) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim || !(dim == 2 || dim == 3) {
            return Err(ErgError::Argument(
                "toral matrix must be square, 2x2 or 3x3".into(),
            ));
        }
        let inv = int_matrix_inverse(&m)?;
        Ok(TorusMap {
            name: name.to_string(),
            dim,
            kind: MapKind::Toral { fwd: m, inv },
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::toral("identity", DMatrix::identity(dim, dim)).expect("identity is unimodular")
    }

    /// Chirikov standard map with parameter `K`.
    pub fn standard(k: T) -> Self {
        TorusMap {
            name: format!("standard(K={})", k.to_f64_lossy()),
            dim: 2,
            kind: MapKind::Standard { k },
        }
    }

    /// 3D ABC-style map built from three volume-preserving shears.
    pub fn abc(a: T, b: T, c: T) -> Self {
        TorusMap {
            name: format!(
                "abc({},{},{})",
                a.to_f64_lossy(),
                b.to_f64_lossy(),
                c.to_f64_lossy()
            ),
            dim: 3,
            kind: MapKind::Abc { a, b, c },
        }
    }

    /// C1-small trigonometric perturbation of the cat map: cat composed with
    /// the conservative shear `(x, y) -> (x, y + eps sin 2pi x)`.
    pub fn perturbed_cat(eps: T) -> Self {
        TorusMap {
            name: format!("perturbed_cat(eps={})", eps.to_f64_lossy()),
            dim: 2,
            kind: MapKind::PerturbedCat { eps },
        }
    }

    /// Linear map on a chart of R^d (no wrap-around).
    pub fn linear(name: &str, m: DMatrix<T>) -> Result<Self> {
        let inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| ErgError::Argument("linear map must be invertible".into()))?;
        Ok(TorusMap {
            name: name.to_string(),
            dim: m.nrows(),
            kind: MapKind::Linear { fwd: m, inv },
        })
    }

    /// The non-conservative test map `(x,y) -> (x+y, y/2)`.
    pub fn squash() -> Self {
        TorusMap {
            name: "squash".into(),
            dim: 2,
            kind: MapKind::Squash,
        }
    }

    /// Zoo lookup by name, for the CLI.
    pub fn from_zoo(name: &str, params: &[T]) -> Result<Self> {
        match name {
            "cat" => Ok(Self::cat()),
            "identity" | "identity2" => Ok(Self::identity(2)),
            "identity3" => Ok(Self::identity(3)),
            "standard" => {
                let k = params
                    .first()
                    .copied()
                    .ok_or_else(|| ErgError::Argument("standard map needs parameter K".into()))?;
                Ok(Self::standard(k))
            }
            "abc" => {
                if params.len() != 3 {
                    return Err(ErgError::Argument("abc map needs parameters A,B,C".into()));
                }
                Ok(Self::abc(params[0], params[1], params[2]))
            }
            "perturbed_cat" => {
                let eps = params.first().copied().unwrap_or_else(T::zero);
                Ok(Self::perturbed_cat(eps))
            }
            "squash" => Ok(Self::squash()),
            other => Err(ErgError::Argument(format!(
                "unknown zoo map '{other}' (known: cat, identity, identity3, standard, abc, perturbed_cat, squash)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the phase space wraps (true torus) or is a linear chart.
    pub fn wraps(&self) -> bool {
        !matches!(self.kind, MapKind::Linear { .. })
    }

    fn eval_raw(&self, x: &TorusPoint<T>, forward: bool) -> TorusPoint<T> {
        let two_pi = T::two_pi();
        match &self.kind {
            MapKind::Toral { fwd, inv } => {
                let m = if forward { fwd } else { inv };
                let mf = m.map(|v| lit::<T>(v as f64));
                (mf * x).map(wrap01)
            }
            MapKind::Standard { k } => {
                let amp = *k / two_pi;
                if forward {
                    let dx = amp * (two_pi * x[0]).sin();
                    let y1 = wrap01(x[1] + dx);
                    let x1 = wrap01(x[0] + x[1] + dx);
                    DVector::from_vec(vec![x1, y1])
                } else {
                    let x0 = wrap01(x[0] - x[1]);
                    let y0 = wrap01(x[1] - amp * (two_pi * x0).sin());
                    DVector::from_vec(vec![x0, y0])
                }
            }
            MapKind::Abc { a, b, c } => {
                if forward {
                    let x1 = wrap01(x[0] + *a * (two_pi * x[2]).sin() + *c * (two_pi * x[1]).cos());
                    let y1 = wrap01(x[1] + *b * (two_pi * x1).sin() + *a * (two_pi * x[2]).cos());
                    let z1 = wrap01(x[2] + *c * (two_pi * y1).sin() + *b * (two_pi * x1).cos());
                    DVector::from_vec(vec![x1, y1, z1])
                } else {
                    let z0 = wrap01(x[2] - *c * (two_pi * x[1]).sin() - *b * (two_pi * x[0]).cos());
                    let y0 = wrap01(x[1] - *b * (two_pi * x[0]).sin() - *a * (two_pi * z0).cos());
                    let x0 = wrap01(x[0] - *a * (two_pi * z0).sin() - *c * (two_pi * y0).cos());
                    DVector::from_vec(vec![x0, y0, z0])
                }
            }
            MapKind::PerturbedCat { eps } => {
                if forward {
                    let sheared = DVector::from_vec(vec![
                        x[0],
                        wrap01(x[1] + *eps * (two_pi * x[0]).sin()),
                    ]);
                    let x1 = wrap01(lit::<T>(2.0) * sheared[0] + sheared[1]);
                    let y1 = wrap01(sheared[0] + sheared[1]);
                    DVector::from_vec(vec![x1, y1])
                } else {
                    let u = wrap01(x[0] - x[1]);
                    let v = wrap01(-x[0] + lit::<T>(2.0) * x[1]);
                    DVector::from_vec(vec![u, wrap01(v - *eps * (two_pi * u).sin())])
                }
            }
            MapKind::Linear { fwd, inv } => {
                let m = if forward { fwd } else { inv };
                m * x
            }
            MapKind::Squash => {
                if forward {
                    DVector::from_vec(vec![wrap01(x[0] + x[1]), x[1] * lit::<T>(0.5)])
                } else {
                    let y0 = x[1] * lit::<T>(2.0);
                    DVector::from_vec(vec![wrap01(x[0] - y0), y0])
                }
            }
        }
    }

    fn jac_raw(&self, x: &TorusPoint<T>) -> DMatrix<T> {
        let two_pi = T::two_pi();
        match &self.kind {
            MapKind::Toral { fwd, .. } => fwd.map(|v| lit::<T>(v as f64)),
            MapKind::Standard { k } => {
                let kc = *k * (two_pi * x[0]).cos();
                DMatrix::from_row_slice(2, 2, &[T::one() + kc, T::one(), kc, T::one()])
            }
            MapKind::Abc { a, b, c } => {
                // Chain the three shears symbolically.
                let x1 = wrap01(x[0] + *a * (two_pi * x[2]).sin() + *c * (two_pi * x[1]).cos());
                let y1 = wrap01(x[1] + *b * (two_pi * x1).sin() + *a * (two_pi * x[2]).cos());
                let mut j1 = DMatrix::identity(3, 3);
                j1[(0, 1)] = -*c * two_pi * (two_pi * x[1]).sin();
                j1[(0, 2)] = *a * two_pi * (two_pi * x[2]).cos();
                let mut j2 = DMatrix::identity(3, 3);
                j2[(1, 0)] = *b * two_pi * (two_pi * x1).cos();
                j2[(1, 2)] = -*a * two_pi * (two_pi * x[2]).sin();
                let mut j3 = DMatrix::identity(3, 3);
                j3[(2, 1)] = *c * two_pi * (two_pi * y1).cos();
                j3[(2, 0)] = *b * two_pi * (two_pi * x1).cos();
                // j3 acts after j2: its x- and y- partials are w.r.t. (x1, y1).
                j3 * j2 * j1
            }
            MapKind::PerturbedCat { eps } => {
                let cat = DMatrix::from_row_slice(
                    2,
                    2,
                    &[lit::<T>(2.0), T::one(), T::one(), T::one()],
                );
                let mut shear = DMatrix::identity(2, 2);
                shear[(1, 0)] = *eps * two_pi * (two_pi * x[0]).cos();
                cat * shear
            }
            MapKind::Linear { fwd, .. } => fwd.clone(),
            MapKind::Squash => DMatrix::from_row_slice(
                2,
                2,
                &[T::one(), T::one(), T::zero(), lit::<T>(0.5)],
            ),
        }
    }
}

impl<T: Scalar> DynSystem<T> for TorusMap<T> {
    type Point = TorusPoint<T>;

    fn cocycle_dim(&self) -> usize {
        self.dim
    }

    fn step(&self, x: &Self::Point) -> Result<Self::Point> {
        let y = self.eval_raw(x, true);
        check_finite(&y, 0)?;
        Ok(y)
    }

    fn step_back(&self, x: &Self::Point) -> Result<Self::Point> {
        let y = self.eval_raw(x, false);
        check_finite(&y, 0)?;
        Ok(y)
    }

    fn cocycle(&self, x: &Self::Point) -> DMatrix<T> {
        self.jac_raw(x)
    }

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> T {
        if self.wraps() {
            torus_distance(a, b)
        } else {
            (a - b).norm()
        }
    }
}

/// Flat metric on `[0,1)^dim`.
pub fn torus_distance<T: Scalar>(a: &TorusPoint<T>, b: &TorusPoint<T>) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        let d = (*x - *y).abs();
        let d = d.min(T::one() - d);
        acc += d * d;
    }
    acc.sqrt()
}

/// Exact finite measure-preserving system: a permutation of states with one
/// cocycle matrix per state and a reference probability on states.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSystem<T: Scalar> {
    n_states: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    matrices: Vec<DMatrix<T>>,
    weights: Vec<T>,
}

impl<T: Scalar> FiniteSystem<T> {
    pub fn new(perm: Vec<usize>, matrices: Vec<DMatrix<T>>, weights: Option<Vec<T>>) -> Result<Self> {
        let n = perm.len();
        if n == 0 {
            return Err(ErgError::Argument("empty permutation".into()));
        }
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(ErgError::Argument("perm is not a bijection".into()));
            }
            seen[p] = true;
        }
        if matrices.len() != n {
            return Err(ErgError::Argument("one cocycle matrix per state required".into()));
        }
        let d = matrices[0].nrows();
        let det_tol = lit::<T>(1e-12);
        for m in &matrices {
            if m.nrows() != d || m.ncols() != d {
                return Err(ErgError::Argument("cocycle matrices must share one square shape".into()));
            }
            if ((m.determinant()).abs() - T::one()).abs() > det_tol {
                return Err(ErgError::Argument(format!(
                    "cocycle matrix must have |det| = 1, got {}",
                    m.determinant().to_f64_lossy()
                )));
            }
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(ErgError::Argument("one weight per state required".into()));
                }
                if w.iter().any(|&x| x < T::zero()) {
                    return Err(ErgError::Argument("weights must be nonnegative".into()));
                }
                let s: T = w.iter().copied().fold(T::zero(), |a, b| a + b);
                if (s - T::one()).abs() > det_tol {
                    return Err(ErgError::Argument("weights must sum to 1".into()));
                }
                w
            }
            None => vec![T::one() / lit::<T>(n as f64); n],
        };
        let mut inv_perm = vec![0usize; n];
        for (i, &p) in perm.iter().enumerate() {
            inv_perm[p] = i;
        }
        Ok(FiniteSystem {
            n_states: n,
            perm,
            inv_perm,
            matrices,
            weights,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn matrices(&self) -> &[DMatrix<T>] {
        &self.matrices
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// The cycle through `state`, listed from `state`, and its length.
    pub fn cycle_of(&self, state: usize) -> Vec<usize> {
        let mut cyc = vec![state];
        let mut s = self.perm[state];
        while s != state {
            cyc.push(s);
            s = self.perm[s];
        }
        cyc
    }

    /// Least common multiple of all cycle lengths (the global period).
    pub fn lcm_of_cycles(&self) -> usize {
        fn gcd(a: usize, b: usize) -> usize {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        cycle_decomposition(self)
            .iter()
            .fold(1usize, |acc, c| acc / gcd(acc, c.states.len()) * c.states.len())
    }

    /// Product of cocycle matrices along the cycle through `state`
    /// (first matrix applied is the one at `state`).
    pub fn cycle_product(&self, state: usize) -> DMatrix<T> {
        let d = self.matrices[0].nrows();
        let mut prod = DMatrix::identity(d, d);
        for &s in &self.cycle_of(state) {
            prod = &self.matrices[s] * prod;
        }
        prod
    }

    /// The inverse system: inverse permutation with cocycles `(A(σ^{-1}s))^{-1}`.
    pub fn inverse(&self) -> Result<FiniteSystem<T>> {
        let mats = (0..self.n_states)
            .map(|s| {
                let pre = self.inv_perm[s];
                self.matrices[pre]
                    .clone()
                    .try_inverse()
                    .ok_or(ErgError::DegenerateCocycle { step: 0 })
            })
            .collect::<Result<Vec<_>>>()?;
        FiniteSystem::new(self.inv_perm.clone(), mats, Some(self.weights.clone()))
    }

    /// Serialize in the `erglab-fsys-v1` schema.
    pub fn to_text(&self) -> String {
        let d = self.matrices[0].nrows();
        let mut out = String::from("erglab-fsys-v1\n");
        out.push_str(&format!("n_states {} dim {}\n", self.n_states, d));
        out.push_str("perm");
        for &p in &self.perm {
            out.push_str(&format!(" {p}"));
        }
        out.push('\n');
        out.push_str("weights");
        for &w in &self.weights {
            out.push_str(&format!(" {:.17e}", w.to_f64_lossy()));
        }
        out.push('\n');
        for (s, m) in self.matrices.iter().enumerate() {
            out.push_str(&format!("matrix {s}"));
            for r in 0..d {
                for c in 0..d {
                    out.push_str(&format!(" {:.17e}", m[(r, c)].to_f64_lossy()));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const SCHEMA: &'static str = "erglab-fsys-v1";
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| ErgError::format(SCHEMA, "empty file"))?;
        if header.trim() != SCHEMA {
            return Err(ErgError::format(SCHEMA, format!("bad schema tag '{header}'")));
        }
        let dims = lines
            .next()
            .ok_or_else(|| ErgError::format(SCHEMA, "missing size line"))?;
        let toks: Vec<&str> = dims.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "n_states" || toks[2] != "dim" {
            return Err(ErgError::format(SCHEMA, "size line must be 'n_states N dim D'"));
        }
        let n: usize = toks[1]
            .parse()
            .map_err(|e| ErgError::format(SCHEMA, format!("bad n_states: {e}")))?;
        let d: usize = toks[3]
            .parse()
            .map_err(|e| ErgError::format(SCHEMA, format!("bad dim: {e}")))?;
        let parse_reals = |line: &str, tag: &str, count: usize| -> Result<Vec<T>> {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.first() != Some(&tag) || toks.len() != count + 1 {
                return Err(ErgError::format(
                    SCHEMA,
                    format!("expected '{tag}' line with {count} values"),
                ));
            }
            toks[1..]
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map(lit::<T>)
                        .map_err(|e| ErgError::format(SCHEMA, format!("bad real '{t}': {e}")))
                })
                .collect()
        };
        let perm_line = lines
            .next()
            .ok_or_else(|| ErgError::format(SCHEMA, "missing perm line"))?;
        let ptoks: Vec<&str> = perm_line.split_whitespace().collect();
        if ptoks.first() != Some(&"perm") || ptoks.len() != n + 1 {
            return Err(ErgError::format(SCHEMA, "perm line must list every state"));
        }
        let perm: Vec<usize> = ptoks[1..]
            .iter()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| ErgError::format(SCHEMA, format!("bad perm entry '{t}': {e}")))
            })
            .collect::<Result<_>>()?;
        let weights_line = lines
            .next()
            .ok_or_else(|| ErgError::format(SCHEMA, "missing weights line"))?;
        let weights = parse_reals(weights_line, "weights", n)?;
        let mut matrices = vec![DMatrix::<T>::zeros(d, d); n];
        let mut got = vec![false; n];
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.first() != Some(&"matrix") || toks.len() != 2 + d * d {
                return Err(ErgError::format(SCHEMA, "matrix line must be 'matrix S <d*d reals>'"));
            }
            let s: usize = toks[1]
                .parse()
                .map_err(|e| ErgError::format(SCHEMA, format!("bad state index: {e}")))?;
            if s >= n {
                return Err(ErgError::format(SCHEMA, format!("state index {s} out of range")));
            }
            let vals: Vec<T> = toks[2..]
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map(lit::<T>)
                        .map_err(|e| ErgError::format(SCHEMA, format!("bad real '{t}': {e}")))
                })
                .collect::<Result<_>>()?;
            matrices[s] = DMatrix::from_row_slice(d, d, &vals);
            got[s] = true;
        }
        if !got.iter().all(|&g| g) {
            return Err(ErgError::format(SCHEMA, "missing matrix line for some state"));
        }
        FiniteSystem::new(perm, matrices, Some(weights))
    }
}

impl<T: Scalar> DynSystem<T> for FiniteSystem<T> {
    type Point = usize;

    fn cocycle_dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    fn step(&self, x: &usize) -> Result<usize> {
        self.perm
            .get(*x)
            .copied()
            .ok_or_else(|| ErgError::Argument(format!("state {x} out of range")))
    }

    fn step_back(&self, x: &usize) -> Result<usize> {
        self.inv_perm
            .get(*x)
            .copied()
            .ok_or_else(|| ErgError::Argument(format!("state {x} out of range")))
    }

    fn cocycle(&self, x: &usize) -> DMatrix<T> {
        self.matrices[*x].clone()
    }

    fn distance(&self, a: &usize, b: &usize) -> T {
        if a == b {
            T::zero()
        } else {
            T::one()
        }
    }
}

/// An orbit segment with the Jacobians sampled along it.
#[derive(Debug, Clone)]
pub struct OrbitSegment<T: Scalar, P> {
    pub base: P,
    pub points: Vec<P>,
    pub matrices: Vec<DMatrix<T>>,
}

/// First `n` points of the orbit of `x`, with cocycle matrices.
pub fn orbit<T: Scalar, S: DynSystem<T>>(sys: &S, x: &S::Point, n: usize) -> Result<OrbitSegment<T, S::Point>> {
    if n < 1 {
        return Err(ErgError::Argument("orbit length must be >= 1".into()));
    }
    let mut points = Vec::with_capacity(n);
    let mut matrices = Vec::with_capacity(n);
    let mut p = x.clone();
    for k in 0..n {
        matrices.push(sys.cocycle(&p));
        points.push(p.clone());
        if k + 1 < n {
            p = sys.step(&p).map_err(|e| match e {
                ErgError::NumericOverflow { .. } => ErgError::NumericOverflow { step: k + 1 },
                other => other,
            })?;
        }
    }
    Ok(OrbitSegment {
        base: x.clone(),
        points,
        matrices,
    })
}

/// A cycle of a finite system with its total reference weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle<T: Scalar> {
    pub states: Vec<usize>,
    pub weight: T,
}

/// Cycle decomposition of the permutation; cycles ordered by least state.
pub fn cycle_decomposition<T: Scalar>(sys: &FiniteSystem<T>) -> Vec<Cycle<T>> {
    let n = sys.n_states();
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let states = sys.cycle_of(s);
        let mut weight = T::zero();
        for &q in &states {
            seen[q] = true;
            weight += sys.weights()[q];
        }
        cycles.push(Cycle { states, weight });
    }
    cycles
}

/// Conservativity report from a seeded quasi-random sample.
#[derive(Debug, Clone)]
pub struct VolumeReport<T: Scalar> {
    pub max_deviation: T,
    pub pass: bool,
    pub n_samples: usize,
    pub tol: T,
}

/// Check `| |det Dф(x)| - 1 | <= tol` over a seeded low-discrepancy sample.
pub fn volume_check<T: Scalar>(sys: &TorusMap<T>, n_samples: usize, tol: T, seed: u64) -> Result<VolumeReport<T>> {
    if n_samples < 1 {
        return Err(ErgError::Argument("n_samples must be >= 1".into()));
    }
    let pts = low_discrepancy_points::<T>(sys.dim(), n_samples, seed);
    let mut max_dev = T::zero();
    for p in &pts {
        let dev = (sys.cocycle(p).determinant().abs() - T::one()).abs();
        max_dev = max_dev.max(dev);
    }
    Ok(VolumeReport {
        max_deviation: max_dev,
        pass: max_dev <= tol,
        n_samples,
        tol,
    })
}
