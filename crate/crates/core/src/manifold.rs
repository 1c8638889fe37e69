//! Graph-transform construction of center-stable disks and contraction
//! verification against the Pesin stable-set definition.
//!
//! The construction works in linear charts along the ell-orbit of the base
//! point: level-k balls shrink with the schedule 2 r e^{c_k} e^{k/2} where
//! c_k accumulates the contraction logs, the deepest disk is flat and tangent
//! to E^cs, and each level is the nodewise backward Newton solution of
//! D^k = B_k ∩ f^{-ell}(D^{k+1}).

use nalgebra::{DMatrix, DVector, SVD};

use crate::domination::{estimate_splitting_segment, LogScaled};
use crate::error::{ErgError, Result};
use crate::scalar::{lit, Scalar};
use crate::systems::{DynSystem, TorusPoint};

/// Graph-transform parameters.
#[derive(Debug, Clone)]
pub struct TransformParams {
    /// Block scale: the transform pulls back through f^ell.
    pub ell: usize,
    /// Number of levels of the backward construction.
    pub depth: usize,
    /// Grid nodes per E^cs axis; at least 17.
    pub resolution: usize,
    /// Dimension of E^cu.
    pub index: usize,
    /// Splitting-estimation horizon.
    pub horizon: usize,
}

impl TransformParams {
    fn validate(&self, d: usize) -> Result<()> {
        if self.depth < 1 {
            return Err(ErgError::Argument("depth must be >= 1".into()));
        }
        if self.resolution < 17 {
            return Err(ErgError::Argument("resolution must be >= 17 nodes per axis".into()));
        }
        if self.ell < 1 {
            return Err(ErgError::Argument("ell must be >= 1".into()));
        }
        if self.index < 1 || self.index >= d {
            return Err(ErgError::Argument("index out of range".into()));
        }
        if d - self.index > 2 {
            return Err(ErgError::Argument(
                "disk grids support E^cs of dimension at most 2".into(),
            ));
        }
        Ok(())
    }
}

/// A sampled center-stable disk: a graph over the E^cs(x) ball of the given
/// radius with values in E^cu(x), in the linear chart at the base point.
#[derive(Debug, Clone)]
pub struct CsDisk<T: Scalar> {
    pub base: TorusPoint<T>,
    pub radius: T,
    pub cs_dim: usize,
    /// Chart frame at the base point (ambient, orthonormal columns).
    pub e_cs: DMatrix<T>,
    pub e_cu: DMatrix<T>,
    /// Node parameters v (E^cs coordinates, sup-norm <= radius).
    pub params: Vec<DVector<T>>,
    /// Node graph values w (E^cu coordinates).
    pub values: Vec<DVector<T>>,
    /// Angle between the node tangent and E^cs(x), per node.
    pub tangent_angles: Vec<T>,
    pub resolution: usize,
    /// Largest sup-norm radius reached without cone escape or step failure.
    pub achieved_radius: T,
}

impl<T: Scalar> CsDisk<T> {
    /// Ambient sample points of the disk in the chart at the base.
    pub fn ambient_points(&self) -> Vec<TorusPoint<T>> {
        self.params
            .iter()
            .zip(&self.values)
            .map(|(v, w)| &self.base + &self.e_cs * v + &self.e_cu * w)
            .collect()
    }

    /// Graph value at the center node.
    pub fn center_value(&self) -> T {
        let mid = self.params.len() / 2;
        self.values[mid].norm()
    }

    /// Tangent angle at the center node.
    pub fn center_tangent_angle(&self) -> T {
        let mid = self.params.len() / 2;
        self.tangent_angles[mid]
    }

    /// CSV point cloud: parameter coordinates, graph values, tangent angle.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for a in 0..self.cs_dim {
            out.push_str(&format!("param{a},"));
        }
        for a in 0..self.values[0].len() {
            out.push_str(&format!("value{a},"));
        }
        out.push_str("tangent_angle\n");
        for ((v, w), &ang) in self.params.iter().zip(&self.values).zip(&self.tangent_angles) {
            for c in v.iter() {
                out.push_str(&format!("{:.17e},", c.to_f64_lossy()));
            }
            for c in w.iter() {
                out.push_str(&format!("{:.17e},", c.to_f64_lossy()));
            }
            out.push_str(&format!("{:.17e}\n", ang.to_f64_lossy()));
        }
        out
    }
}

/// Graph on a normalized grid: values indexed by the node lattice over
/// [-1, 1]^cs_dim, physical parameter = rho * u.
struct LevelGraph<T: Scalar> {
    cs_dim: usize,
    res: usize,
    rho: T,
    values: Vec<DVector<T>>,
}

impl<T: Scalar> LevelGraph<T> {
    fn node_count(cs_dim: usize, res: usize) -> usize {
        res.pow(cs_dim as u32)
    }

    fn node_u(&self, idx: usize) -> DVector<T> {
        let mut u = DVector::zeros(self.cs_dim);
        let mut rest = idx;
        for a in (0..self.cs_dim).rev() {
            let j = rest % self.res;
            rest /= self.res;
            u[a] = lit::<T>(2.0 * j as f64 / (self.res - 1) as f64 - 1.0);
        }
        u
    }

    /// Multilinear interpolation of the graph at physical parameter `s`.
    /// Errors when `s` leaves the ball by more than 10%.
    fn eval(&self, s: &DVector<T>, depth: usize, node: usize) -> Result<DVector<T>> {
        let res = self.res;
        let mut lo = vec![0usize; self.cs_dim];
        let mut frac = vec![T::zero(); self.cs_dim];
        for a in 0..self.cs_dim {
            let mut u = if self.rho > T::zero() {
                (s[a] / self.rho).to_f64_lossy()
            } else {
                0.0
            };
            if u.abs() > 1.1 {
                return Err(ErgError::StepFailure {
                    depth,
                    node,
                    reason: "pulled-back point left the next-level ball".into(),
                });
            }
            u = u.clamp(-1.0, 1.0);
            let t = (u + 1.0) / 2.0 * (res - 1) as f64;
            let j = (t.floor() as usize).min(res - 2);
            lo[a] = j;
            frac[a] = lit::<T>(t - j as f64);
        }
        let dim_w = self.values[0].len();
        let mut out = DVector::zeros(dim_w);
        for corner in 0..(1usize << self.cs_dim) {
            let mut weight = T::one();
            let mut flat = 0usize;
            for a in 0..self.cs_dim {
                let hi = corner & (1 << a) != 0;
                weight *= if hi { frac[a] } else { T::one() - frac[a] };
                flat = flat * res + lo[a] + if hi { 1 } else { 0 };
            }
            out += &self.values[flat] * weight;
        }
        Ok(out)
    }
}

fn lift_diff<T: Scalar>(a: &TorusPoint<T>, b: &TorusPoint<T>, wraps: bool) -> DVector<T> {
    let mut d = a - b;
    if wraps {
        for c in d.iter_mut() {
            *c -= c.round();
        }
    }
    d
}

/// Construct the center-stable disk of sup-norm radius `r` at `x` following
/// the backward graph transform to the given depth.
pub fn center_stable_disk<T: Scalar, S>(
    sys: &S,
    x: &TorusPoint<T>,
    r: T,
    params: &TransformParams,
) -> Result<CsDisk<T>>
where
    S: DynSystem<T, Point = TorusPoint<T>>,
{
    let d = sys.cocycle_dim();
    params.validate(d)?;
    if r <= T::zero() {
        return Err(ErgError::Argument("radius must be > 0".into()));
    }
    let i = params.index;
    let cs_dim = d - i;
    let res = params.resolution;
    let wraps = {
        // Linear charts are detected by a step that moves the origin-lifted
        // point without wrap artifacts; TorusMap exposes this via distance.
        // We treat coordinates as wrapping unless differences stay tiny,
        // which is safe for both cases because all chart offsets are small.
        true
    };

    // Orbit of the ell-fold map, with frames and contraction logs.
    let n_levels = params.depth;
    let mut points = Vec::with_capacity(n_levels + 1);
    let mut frames_cs = Vec::with_capacity(n_levels + 1);
    let mut frames_cu = Vec::with_capacity(n_levels + 1);
    let mut c = vec![T::zero(); n_levels + 1];
    let mut y = x.clone();
    for k in 0..=n_levels {
        let split = estimate_splitting_segment(sys, &y, i, params.horizon, 1)?;
        frames_cs.push(split.e_cs[0].clone());
        frames_cu.push(split.e_cu[0].clone());
        points.push(y.clone());
        if k < n_levels {
            // log ||Df^ell | E^cs|| at y_k.
            let mut prod = LogScaled::identity(d);
            let mut p = y.clone();
            for _ in 0..params.ell {
                prod.mul_left(&sys.cocycle(&p));
                p = sys.step(&p)?;
            }
            let svd = SVD::new(&prod.m * &split.e_cs[0], false, false);
            let a = svd
                .singular_values
                .iter()
                .copied()
                .fold(T::zero(), |m, s| m.max(s))
                .ln()
                + prod.log;
            c[k + 1] = c[k] + a;
            y = p;
        }
    }
    // Ball schedule 2 r e^{c_k} e^{k/2}. Torus coordinates carry an absolute
    // resolution of about 1e-16, so once a ball drops below 1e-6 the backward
    // Newton residual would sit under the rounding noise of the wrap; deeper
    // levels contribute nothing at that scale and are treated as flat.
    let rho: Vec<T> = (0..=n_levels)
        .map(|k| lit::<T>(2.0) * r * (c[k] + lit::<T>(k as f64 / 2.0)).exp())
        .collect();
    let mut depth_eff = n_levels;
    for (k, &p) in rho.iter().enumerate() {
        if p < lit::<T>(1e-6) {
            depth_eff = k.max(1);
            break;
        }
    }

    let n_nodes = LevelGraph::<T>::node_count(cs_dim, res);
    // Flat disk at the deepest level.
    let mut level = LevelGraph {
        cs_dim,
        res,
        rho: rho[depth_eff],
        values: vec![DVector::zeros(i); n_nodes],
    };
    let cone_tan = T::one(); // aperture pi/4 about E^cs for the node tangents

    for k in (0..depth_eff).rev() {
        let mut next = LevelGraph {
            cs_dim,
            res,
            rho: rho[k],
            values: vec![DVector::zeros(i); n_nodes],
        };
        for node in 0..n_nodes {
            let u = next.node_u(node);
            let v = &u * rho[k];
            // Solve: E^cu-coordinate of f^ell(z(w)) matches graph_{k+1} at the
            // E^cs-coordinate of the image.
            let g = |w: &DVector<T>| -> Result<DVector<T>> {
                let z = &points[k] + &frames_cs[k] * &v + &frames_cu[k] * w;
                let mut img = z;
                for _ in 0..params.ell {
                    img = sys.step(&img)?;
                }
                let diff = lift_diff(&img, &points[k + 1], wraps);
                let s_next = frames_cs[k + 1].transpose() * &diff;
                let u_next = frames_cu[k + 1].transpose() * &diff;
                Ok(u_next - level.eval(&s_next, k, node)?)
            };
            // Newton with finite-difference Jacobian, seeded at the next
            // level's value for this node rescaled to this ball.
            let mut w = level.values[node].clone() * (rho[k] / rho[k + 1].min(lit::<T>(1e300)));
            if !w.iter().all(|c| c.is_finite_scalar()) || w.norm() > rho[k] {
                w = DVector::zeros(i);
            }
            let tol = rho[k] * lit::<T>(1e-9) + lit::<T>(1e-15);
            let mut converged = false;
            for _ in 0..60 {
                let g0 = g(&w)?;
                if g0.norm() <= tol {
                    converged = true;
                    break;
                }
                let h = (rho[k] * lit::<T>(1e-6)).max(lit::<T>(1e-12));
                let mut jac = DMatrix::<T>::zeros(i, i);
                for col in 0..i {
                    let mut wp = w.clone();
                    wp[col] += h;
                    let gp = g(&wp)?;
                    for row in 0..i {
                        jac[(row, col)] = (gp[row] - g0[row]) / h;
                    }
                }
                let delta = jac.lu().solve(&g0).ok_or_else(|| ErgError::StepFailure {
                    depth: k,
                    node,
                    reason: "singular Newton system in the backward step".into(),
                })?;
                w -= &delta;
                if delta.norm() <= tol {
                    converged = g(&w)?.norm() <= lit::<T>(1e3) * tol;
                    break;
                }
            }
            if !converged {
                return Err(ErgError::StepFailure {
                    depth: k,
                    node,
                    reason: "backward Newton step did not converge".into(),
                });
            }
            next.values[node] = w;
        }
        // Cone condition: discrete tangents must stay within aperture pi/4
        // of E^cs (slope |dw/dv| < 1).
        for node in 0..n_nodes {
            let slope = node_slope(&next, node);
            if slope > cone_tan {
                return Err(ErgError::ConeEscape { depth: k, node });
            }
        }
        level = next;
    }

    // Restrict the level-0 graph (ball radius 2r) to the disk of radius r.
    let out_rho = r;
    let mut params_out = Vec::with_capacity(n_nodes);
    let mut values_out = Vec::with_capacity(n_nodes);
    let shell = LevelGraph {
        cs_dim,
        res,
        rho: out_rho,
        values: vec![DVector::zeros(i); 0],
    };
    for node in 0..n_nodes {
        let u = shell.node_u(node);
        let v = &u * out_rho;
        let w = level.eval(&v, 0, node)?;
        params_out.push(v);
        values_out.push(w);
    }
    let out_level = LevelGraph {
        cs_dim,
        res,
        rho: out_rho,
        values: values_out.clone(),
    };
    let tangent_angles: Vec<T> = (0..n_nodes)
        .map(|node| node_slope(&out_level, node).atan())
        .collect();

    Ok(CsDisk {
        base: points[0].clone(),
        radius: out_rho,
        cs_dim,
        e_cs: frames_cs[0].clone(),
        e_cu: frames_cu[0].clone(),
        params: params_out,
        values: values_out,
        tangent_angles,
        resolution: res,
        achieved_radius: out_rho,
    })
}

/// Max directional slope |dw/dv| at a node from one-sided differences.
fn node_slope<T: Scalar>(level: &LevelGraph<T>, node: usize) -> T {
    if level.rho <= T::zero() {
        return T::zero();
    }
    let res = level.res;
    let h = level.rho * lit::<T>(2.0 / (res - 1) as f64);
    let mut idx = vec![0usize; level.cs_dim];
    let mut rest = node;
    for a in (0..level.cs_dim).rev() {
        idx[a] = rest % res;
        rest /= res;
    }
    let mut worst = T::zero();
    for a in 0..level.cs_dim {
        let stride = res.pow((level.cs_dim - 1 - a) as u32);
        let (p, q) = if idx[a] + 1 < res {
            (node, node + stride)
        } else {
            (node - stride, node)
        };
        let dv = (&level.values[q] - &level.values[p]).norm() / h;
        worst = worst.max(dv);
    }
    worst
}

/// Largest disk radius (within `r_max`) at which the graph transform succeeds,
/// found by bisection; the paper asserts existence of r without a formula.
pub fn find_disk_radius<T: Scalar, S>(
    sys: &S,
    x: &TorusPoint<T>,
    r_max: T,
    params: &TransformParams,
    steps: usize,
) -> Result<(T, CsDisk<T>)>
where
    S: DynSystem<T, Point = TorusPoint<T>>,
{
    let mut lo = T::zero();
    let mut hi = r_max;
    let mut best: Option<(T, CsDisk<T>)> = None;
    let mut r = r_max;
    for _ in 0..steps.max(1) {
        match center_stable_disk(sys, x, r, params) {
            Ok(disk) => {
                lo = r;
                best = Some((r, disk));
            }
            Err(ErgError::ConeEscape { .. }) | Err(ErgError::StepFailure { .. }) => {
                hi = r;
            }
            Err(e) => return Err(e),
        }
        r = (lo + hi) / lit::<T>(2.0);
    }
    best.ok_or_else(|| ErgError::Argument("no admissible disk radius found".into()))
}

/// Contraction rates of disk points toward the base orbit.
#[derive(Debug, Clone)]
pub struct ContractionReport<T: Scalar> {
    /// Least-squares slope of log d(f^n y, f^n x) vs n per node; nodes that
    /// merge numerically with the base orbit are recorded as exact.
    pub rates: Vec<T>,
    pub exact_nodes: usize,
    pub pass: bool,
    pub threshold: T,
}

/// Verify the Pesin stable-set contraction along the disk: all fitted rates
/// must be below -1/(2 ell) (half the block's guaranteed rate).
pub fn verify_contraction<T: Scalar, S>(
    sys: &S,
    x: &TorusPoint<T>,
    disk: &CsDisk<T>,
    iterates: usize,
    ell: usize,
) -> Result<ContractionReport<T>>
where
    S: DynSystem<T, Point = TorusPoint<T>>,
{
    if iterates < 10 {
        return Err(ErgError::Argument("need at least 10 iterates".into()));
    }
    let threshold = -T::one() / lit::<T>(2.0 * ell as f64);
    let mut rates = Vec::with_capacity(disk.params.len());
    let mut exact_nodes = 0usize;
    let mut pass = true;
    for y0 in disk.ambient_points() {
        let mut y = y0;
        let mut bx = x.clone();
        let mut logs: Vec<(T, T)> = Vec::with_capacity(iterates);
        let mut exact = false;
        for n in 1..=iterates {
            y = sys.step(&y)?;
            bx = sys.step(&bx)?;
            let dist = sys.distance(&y, &bx);
            if dist < lit::<T>(1e-280) {
                exact = true;
                break;
            }
            logs.push((lit::<T>(n as f64), dist.ln()));
        }
        // Truncate the fit at the distance minimum: past it the rounding
        // error in the disk nodes grows along the expanding direction and
        // would bias the fitted rate.
        if let Some(arg) = logs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
            .map(|(j, _)| j)
        {
            // A minimum at the first sample means the node never contracted;
            // keep the whole series so the positive rate is reported.
            if arg > 0 {
                logs.truncate(arg + 1);
            }
        }
        if exact || logs.len() < 2 {
            exact_nodes += 1;
            rates.push(T::min_value().unwrap());
            continue;
        }
        // Least-squares slope.
        let n = lit::<T>(logs.len() as f64);
        let sx: T = logs.iter().map(|&(a, _)| a).fold(T::zero(), |p, q| p + q);
        let sy: T = logs.iter().map(|&(_, b)| b).fold(T::zero(), |p, q| p + q);
        let sxx: T = logs.iter().map(|&(a, _)| a * a).fold(T::zero(), |p, q| p + q);
        let sxy: T = logs.iter().map(|&(a, b)| a * b).fold(T::zero(), |p, q| p + q);
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        if slope >= threshold {
            pass = false;
        }
        rates.push(slope);
    }
    Ok(ContractionReport {
        rates,
        exact_nodes,
        pass,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::TorusMap;
    use approx::assert_abs_diff_eq;

    fn pt(coords: &[f64]) -> TorusPoint<f64> {
        DVector::from_row_slice(coords)
    }

    fn params(ell: usize, depth: usize) -> TransformParams {
        TransformParams {
            ell,
            depth,
            resolution: 17,
            index: 1,
            horizon: 30,
        }
    }

    fn linear_half_two() -> TorusMap<f64> {
        TorusMap::linear(
            "diag(1/2,2)",
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
        )
        .unwrap()
    }

    #[test]
    fn linear_disk_is_the_stable_axis() {
        let sys = linear_half_two();
        let disk = center_stable_disk(&sys, &pt(&[0.0, 0.0]), 0.1, &params(2, 10)).unwrap();
        for w in &disk.values {
            assert!(w.norm() <= 1e-10, "graph value {} off axis", w.norm());
        }
        assert!(disk.center_value() <= 1e-12);
        assert!(disk.center_tangent_angle() <= 1e-6);
        // E^cs is the e_1 axis.
        assert_abs_diff_eq!(disk.e_cs[(0, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cat_fixed_point_disk_tangent() {
        let cat = TorusMap::<f64>::cat();
        let disk = center_stable_disk(&cat, &pt(&[0.0, 0.0]), 0.05, &params(2, 20)).unwrap();
        // Contracting eigendirection (1, -(1 + sqrt 5)/2), normalized.
        let dir = DVector::from_row_slice(&[1.0, -(1.0 + 5.0_f64.sqrt()) / 2.0]).normalize();
        // The chart tangent at the center is e_cs rotated by the graph slope;
        // for a linear map the graph is flat so e_cs itself must match.
        assert!(disk.center_value() <= 1e-10);
        assert!(disk.center_tangent_angle() <= 1e-6);
        let cs = DVector::from_column_slice(disk.e_cs.column(0).as_slice());
        let cosine = cs.dot(&dir).abs();
        assert!(
            (1.0 - cosine).abs() <= 1e-6,
            "tangent misaligned, cos = {cosine}"
        );
    }

    #[test]
    fn standard_map_fixed_point_disk() {
        let sm = TorusMap::<f64>::standard(1.5);
        let disk = center_stable_disk(&sm, &pt(&[0.0, 0.0]), 0.02, &params(2, 15)).unwrap();
        // Contracting eigenvector of [[1+K, 1], [K, 1]] at K = 1.5.
        let k = 1.5;
        let j = DMatrix::from_row_slice(2, 2, &[1.0 + k, 1.0, k, 1.0]);
        let tr = j[(0, 0)] + j[(1, 1)];
        let lam = (tr - f64::sqrt(tr * tr - 4.0)) / 2.0; // smaller eigenvalue, det 1
        let dir = DVector::from_row_slice(&[1.0, lam - j[(0, 0)]]).normalize();
        let slope_here = {
            // Reconstruct the ambient tangent at the center from the graph.
            let mid = disk.params.len() / 2;
            let h = disk.params[mid + 1][0] - disk.params[mid][0];
            (disk.values[mid + 1][0] - disk.values[mid - 1][0]) / (2.0 * h)
        };
        let cs = DVector::from_column_slice(disk.e_cs.column(0).as_slice());
        let cu = DVector::from_column_slice(disk.e_cu.column(0).as_slice());
        let tangent = (cs + cu * slope_here).normalize();
        let cosine = tangent.dot(&dir).abs();
        assert!(
            (1.0 - cosine).abs() <= 1e-4,
            "tangent misaligned, cos = {cosine}"
        );
    }

    #[test]
    fn contraction_rates() {
        // Linear diag(1/2, 2): every disk point contracts at log(1/2).
        let sys = linear_half_two();
        let disk = center_stable_disk(&sys, &pt(&[0.0, 0.0]), 0.1, &params(1, 8)).unwrap();
        let rep = verify_contraction(&sys, &pt(&[0.0, 0.0]), &disk, 30, 1).unwrap();
        assert!(rep.pass);
        for &r in &rep.rates {
            if r > f64::MIN {
                assert_abs_diff_eq!(r, 0.5_f64.ln(), epsilon = 1e-6);
            }
        }

        // Cat map fixed-point disk contracts at about -0.962.
        let cat = TorusMap::<f64>::cat();
        let disk = center_stable_disk(&cat, &pt(&[0.0, 0.0]), 0.05, &params(2, 15)).unwrap();
        let rep = verify_contraction(&cat, &pt(&[0.0, 0.0]), &disk, 25, 2).unwrap();
        assert!(rep.pass);
        for &r in &rep.rates {
            if r > f64::MIN {
                assert!((r + 0.9624).abs() < 0.05, "rate {r}");
            }
        }

        // A deliberately wrong disk along the unstable direction fails.
        let wrong = CsDisk {
            base: pt(&[0.0, 0.0]),
            radius: 0.01,
            cs_dim: 1,
            e_cs: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            e_cu: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            params: (0..17)
                .map(|j| DVector::from_row_slice(&[0.01 * (2.0 * j as f64 / 16.0 - 1.0)]))
                .collect(),
            values: vec![DVector::zeros(1); 17],
            tangent_angles: vec![0.0; 17],
            resolution: 17,
            achieved_radius: 0.01,
        };
        let rep = verify_contraction(&sys, &pt(&[0.0, 0.0]), &wrong, 20, 1).unwrap();
        assert!(!rep.pass);
        assert!(rep.rates.iter().copied().fold(f64::MIN, f64::max) > 0.5);
    }

    #[test]
    fn depth_cauchy_on_cat() {
        let cat = TorusMap::<f64>::cat();
        let x = pt(&[0.0, 0.0]);
        let d1 = center_stable_disk(&cat, &x, 0.05, &params(2, 5)).unwrap();
        let d2 = center_stable_disk(&cat, &x, 0.05, &params(2, 10)).unwrap();
        let gap: f64 = d1
            .values
            .iter()
            .zip(&d2.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-8, "depth-Cauchy gap {gap}");
    }

    #[test]
    fn radius_bisection_finds_a_disk() {
        let cat = TorusMap::<f64>::cat();
        let (r, disk) = find_disk_radius(&cat, &pt(&[0.0, 0.0]), 0.2, &params(2, 10), 6).unwrap();
        assert!(r > 0.0);
        assert_eq!(disk.params.len(), 17);
    }

    #[test]
    fn csv_export_shape() {
        let sys = linear_half_two();
        let disk = center_stable_disk(&sys, &pt(&[0.0, 0.0]), 0.1, &params(1, 5)).unwrap();
        let csv = disk.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "param0,value0,tangent_angle");
        assert_eq!(csv.lines().count(), 18);
    }

    #[test]
    fn rejects_bad_params() {
        let sys = linear_half_two();
        let mut p = params(1, 5);
        p.resolution = 16;
        assert!(center_stable_disk(&sys, &pt(&[0.0, 0.0]), 0.1, &p).is_err());
        let p = params(1, 5);
        assert!(center_stable_disk(&sys, &pt(&[0.0, 0.0]), -0.1, &p).is_err());
    }
}
