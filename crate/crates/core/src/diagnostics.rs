//! Convergence diagnostics.
//!
//! Everything here is a pure function of a snapshot `(problem, x, m)` or of a
//! finished trajectory.

use nalgebra::{DMatrix, DVector};

use crate::fields::PhiChoice;
use crate::linalg::{axpy, dist, dot, norm, sub};
use crate::problems::{check_point, FiniteSumProblem, HullDescription, Zonotope};
use crate::schedules::TimeGrid;
use crate::{GsgdError, RealVector, Result};

/// Default duality-gap tolerance for [`min_norm_point`].
pub const DEFAULT_MIN_NORM_TOL: f64 = 1e-9;

/// Number of sampled selections used when a problem has no hull oracle.
pub const SAMPLED_SELECTIONS: usize = 64;

/// A compact convex set accessed through linear minimization.
pub trait LinearOracle {
    fn dim(&self) -> usize;

    /// Some point of the set to start from.
    fn start(&self) -> RealVector;

    /// A vertex minimizing `<direction, v>`.
    fn minimize_linear(&self, direction: &[f64]) -> RealVector;
}

impl LinearOracle for HullDescription {
    fn dim(&self) -> usize {
        HullDescription::dim(self)
    }

    fn start(&self) -> RealVector {
        // lowest-norm vertex, lowest index on ties
        let mut best = 0;
        let mut best_norm = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let n = dot(v, v);
            if n < best_norm {
                best = i;
                best_norm = n;
            }
        }
        self.vertices[best].clone()
    }

    fn minimize_linear(&self, direction: &[f64]) -> RealVector {
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let val = dot(direction, v);
            if val < best_val {
                best = i;
                best_val = val;
            }
        }
        self.vertices[best].clone()
    }
}

impl LinearOracle for Zonotope {
    fn dim(&self) -> usize {
        Zonotope::dim(self)
    }

    fn start(&self) -> RealVector {
        self.minimize_linear(&self.center)
    }

    fn minimize_linear(&self, direction: &[f64]) -> RealVector {
        let mut v = self.center.clone();
        for g in &self.generators {
            let s = if dot(direction, g) > 0.0 { -1.0 } else { 1.0 };
            axpy(s, g, &mut v);
        }
        v
    }
}

/// Convex hull of a union of zonotopes.
#[derive(Debug, Clone)]
pub struct ZonotopeUnion(pub Vec<Zonotope>);

impl LinearOracle for ZonotopeUnion {
    fn dim(&self) -> usize {
        self.0[0].dim()
    }

    fn start(&self) -> RealVector {
        self.0[0].start()
    }

    fn minimize_linear(&self, direction: &[f64]) -> RealVector {
        let mut best: Option<(f64, RealVector)> = None;
        for z in &self.0 {
            let v = z.minimize_linear(direction);
            let val = dot(direction, &v);
            if best.as_ref().is_none_or(|(b, _)| val < *b) {
                best = Some((val, v));
            }
        }
        best.expect("union is non-empty").1
    }
}

/// `{v - shift : v in inner}`; its min-norm point gives `dist(shift, inner)`.
struct Shifted<'a, S: LinearOracle + ?Sized> {
    inner: &'a S,
    shift: &'a [f64],
}

impl<S: LinearOracle + ?Sized> LinearOracle for Shifted<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn start(&self) -> RealVector {
        sub(&self.inner.start(), self.shift)
    }

    fn minimize_linear(&self, direction: &[f64]) -> RealVector {
        sub(&self.inner.minimize_linear(direction), self.shift)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormPoint {
    pub point: RealVector,
    pub norm: f64,
    /// True when zero was certified to lie in the set and returned exactly.
    pub contains_zero: bool,
    pub iterations: usize,
}

/// Min-norm point of a vertex hull.
pub fn min_norm_in_hull(hull: &HullDescription, tol: f64) -> Result<MinNormPoint> {
    if hull.vertices.is_empty() {
        return Err(GsgdError::InvalidInput("empty vertex list".into()));
    }
    min_norm_point(hull, tol)
}

/// Euclidean distance from `p` to the set.
pub fn distance_to<S: LinearOracle + ?Sized>(set: &S, p: &[f64], tol: f64) -> Result<f64> {
    Ok(min_norm_point(
        &Shifted {
            inner: set,
            shift: p,
        },
        tol,
    )?
    .norm)
}

/// Affine minimizer of `|sum_i a_i c_i|` subject to `sum_i a_i = 1`.
fn affine_minimizer(corral: &[RealVector]) -> Vec<f64> {
    let r = corral.len();
    if r == 1 {
        return vec![1.0];
    }
    let n = corral[0].len();
    let base = &corral[0];
    let d = DMatrix::from_fn(n, r - 1, |i, j| corral[j + 1][i] - base[i]);
    let rhs = DVector::from_iterator(n, base.iter().map(|v| -v));
    let beta = d
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("SVD computed with both factors");
    let mut alpha = Vec::with_capacity(r);
    alpha.push(1.0 - beta.sum());
    alpha.extend(beta.iter());
    alpha
}

fn combine(corral: &[RealVector], weights: &[f64]) -> RealVector {
    let mut x = vec![0.0; corral[0].len()];
    for (c, w) in corral.iter().zip(weights) {
        axpy(*w, c, &mut x);
    }
    x
}

/// Wolfe's min-norm-point algorithm over a linear-minimization oracle.
///
/// Stops once the duality gap `|x|^2 - min_v <x, v>` falls below
/// `tol * max(1, max |c|^2)` over the active vertices `c`. Zero is returned
/// exactly when the active set is a full-dimensional simplex with strictly
/// positive barycentric weights, or when the iterate is zero up to rounding.
pub fn min_norm_point<S: LinearOracle + ?Sized>(set: &S, tol: f64) -> Result<MinNormPoint> {
    if !(tol > 0.0) {
        return Err(GsgdError::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = set.dim();
    const WEIGHT_EPS: f64 = 1e-12;
    let max_major = 100 * (n + 1) + 1000;

    let mut corral = vec![set.start()];
    let mut weights = vec![1.0];
    let mut x = corral[0].clone();
    let mut scale = dot(&x, &x).max(1.0);
    let mut iterations = 0;
    let mut certified = false;

    while iterations < max_major {
        iterations += 1;
        let v = set.minimize_linear(&x);
        scale = scale.max(dot(&v, &v));
        let gap = dot(&x, &x) - dot(&x, &v);
        if gap <= tol * scale || corral.contains(&v) {
            break;
        }
        corral.push(v);
        weights.push(0.0);

        loop {
            let alpha = affine_minimizer(&corral);
            if alpha.iter().all(|&a| a > WEIGHT_EPS) {
                weights = alpha;
                x = combine(&corral, &weights);
                break;
            }
            // move from the current weights toward alpha until a weight hits zero
            let mut step = 1.0f64;
            for (w, a) in weights.iter().zip(&alpha) {
                if *a <= WEIGHT_EPS && *w - *a > 0.0 {
                    step = step.min(*w / (*w - *a));
                }
            }
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = (1.0 - step) * *w + step * a;
            }
            let keep: Vec<bool> = weights.iter().map(|w| *w > WEIGHT_EPS).collect();
            if keep.iter().all(|k| *k) {
                // rounding kept every weight positive; drop the smallest
                let (imin, _) =
                    weights
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::INFINITY),
                            |acc, (i, w)| if *w < acc.1 { (i, *w) } else { acc },
                        );
                corral.remove(imin);
                weights.remove(imin);
            } else {
                let mut i = 0;
                corral.retain(|_| {
                    let k = keep[i];
                    i += 1;
                    k
                });
                weights.retain(|w| *w > WEIGHT_EPS);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            x = combine(&corral, &weights);
            if corral.len() == 1 {
                break;
            }
        }

        if corral.len() == n + 1 && weights.iter().all(|&w| w > WEIGHT_EPS) {
            // full-dimensional simplex with the origin's affine weights positive
            certified = true;
            break;
        }
        if norm(&x) <= 1e-12 * scale.sqrt() {
            certified = true;
            break;
        }
    }

    if certified || norm(&x) <= 1e-12 * scale.sqrt() {
        return Ok(MinNormPoint {
            point: vec![0.0; n],
            norm: 0.0,
            contains_zero: true,
            iterations,
        });
    }
    let nrm = norm(&x);
    Ok(MinNormPoint {
        point: x,
        norm: nrm,
        contains_zero: false,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    pub value: f64,
    /// False when the value is the smallest norm among sampled selections,
    /// an upper bound on the true distance.
    pub exact: bool,
}

/// `dist(0, conv(D_f(x)))`, with kinks within `radius` of `x` counted as active.
///
/// Problems without a hull oracle fall back to the smallest norm among
/// [`SAMPLED_SELECTIONS`] alternative selections.
pub fn stationarity_measure(
    problem: &dyn FiniteSumProblem,
    x: &[f64],
    radius: f64,
) -> Result<Stationarity> {
    check_point(problem, x)?;
    if !(radius >= 0.0) {
        return Err(GsgdError::InvalidParameter(format!(
            "radius must be >= 0, got {radius}"
        )));
    }
    if problem.has_hull() {
        let z = problem.hull_zonotope(x, radius)?;
        let mn = min_norm_point(&z, DEFAULT_MIN_NORM_TOL)?;
        return Ok(Stationarity {
            value: mn.norm,
            exact: true,
        });
    }
    let value = problem
        .selection_samples(x, SAMPLED_SELECTIONS)
        .iter()
        .map(|s| norm(s))
        .fold(f64::INFINITY, f64::min);
    Ok(Stationarity {
        value,
        exact: false,
    })
}

/// `h(x, m) = f(x) + phi(m) / tau`
pub fn lyapunov_h(
    problem: &dyn FiniteSumProblem,
    x: &[f64],
    m: &[f64],
    phi: &PhiChoice,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(GsgdError::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    Ok(problem.full_objective(x) + phi.value(m) / tau)
}

/// Distance from `m` to an inner approximation of `conv(D_f^delta(x))`.
///
/// The union over the `delta`-ball is replaced by the hulls at `x` and the
/// `2n` axis neighbours `x +- delta e_i`; the `delta`-inflation is applied by
/// subtracting `delta` from the distance (floored at zero).
pub fn momentum_gap(
    problem: &dyn FiniteSumProblem,
    x: &[f64],
    m: &[f64],
    delta: f64,
) -> Result<f64> {
    check_point(problem, x)?;
    check_point(problem, m)?;
    if !(delta >= 0.0) {
        return Err(GsgdError::InvalidParameter(format!(
            "delta must be >= 0, got {delta}"
        )));
    }
    let mut pieces = vec![problem.hull_zonotope(x, 0.0)?];
    if delta > 0.0 {
        for i in 0..x.len() {
            for s in [1.0, -1.0] {
                let mut y = x.to_vec();
                y[i] += s * delta;
                pieces.push(problem.hull_zonotope(&y, 0.0)?);
            }
        }
    }
    let d = distance_to(&ZonotopeUnion(pieces), m, DEFAULT_MIN_NORM_TOL)?;
    Ok((d - delta).max(0.0))
}

/// Piecewise-linear path through the iterates, segment `i` lasting `eta_i`.
#[derive(Debug, Clone)]
pub struct InterpolatedPath {
    xs: Vec<RealVector>,
    grid: TimeGrid,
}

pub fn interpolated_process(xs: Vec<RealVector>, etas: Vec<f64>) -> Result<InterpolatedPath> {
    if xs.is_empty() || etas.len() + 1 != xs.len() {
        return Err(GsgdError::InvalidInput(format!(
            "need len(etas) = len(xs) - 1, got {} and {}",
            etas.len(),
            xs.len()
        )));
    }
    if etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(GsgdError::InvalidInput("stepsizes must be positive".into()));
    }
    Ok(InterpolatedPath {
        xs,
        grid: TimeGrid::new(etas),
    })
}

impl InterpolatedPath {
    pub fn end(&self) -> f64 {
        self.grid.end()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `x(t) = x_i + (t - lambda(i)) / eta_i * (x_{i+1} - x_i)` for `t` in `[0, end]`.
    pub fn at(&self, t: f64) -> Result<RealVector> {
        let end = self.end();
        if t == end {
            return Ok(self.xs.last().expect("non-empty").clone());
        }
        let i = self.grid.inverse(t)?;
        Ok(self.segment_point(i, t))
    }

    fn segment_point(&self, i: usize, t: f64) -> RealVector {
        let start = self.grid.lambda(i).expect("segment index in range");
        let frac = (t - start) / self.grid.steps()[i];
        let (a, b) = (&self.xs[i], &self.xs[i + 1]);
        a.iter()
            .zip(b)
            .map(|(ai, bi)| ai + frac * (bi - ai))
            .collect()
    }
}

/// Parameters of the shadowing check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowParams {
    /// Length of each comparison window.
    pub window: f64,
    /// Explicit Euler step for the reference flow.
    pub euler_step: f64,
    /// Coefficient in `dx/dt in -(1 + alpha) D_f(x)`.
    pub alpha: f64,
    /// Number of window starts, spread evenly over the second half of the run.
    pub probes: usize,
}

impl Default for ShadowParams {
    fn default() -> Self {
        ShadowParams {
            window: 1.0,
            euler_step: 1e-5,
            alpha: 0.0,
            probes: 5,
        }
    }
}

/// Largest gap between the interpolated iterates and Euler solutions of
/// `dx/dt = -(1 + alpha) s(x)`, `s` the full selection, started on the path.
pub fn di_shadow_distance(
    problem: &dyn FiniteSumProblem,
    trajectory: Vec<RealVector>,
    etas: Vec<f64>,
    params: ShadowParams,
) -> Result<f64> {
    let ShadowParams {
        window,
        euler_step,
        alpha,
        probes,
    } = params;
    if !(window > 0.0 && euler_step > 0.0 && euler_step < window && probes >= 1) {
        return Err(GsgdError::InvalidParameter(format!(
            "bad shadowing parameters {params:?}"
        )));
    }
    let path = interpolated_process(trajectory, etas)?;
    let end = path.end();
    let first = end / 2.0;
    let last = end - window;
    if last < first {
        return Err(GsgdError::InvalidParameter(format!(
            "trajectory time {end} too short for window {window} in its second half"
        )));
    }
    let steps = (window / euler_step).floor() as usize;
    let mut worst = 0.0f64;
    for p in 0..probes {
        let t0 = if probes == 1 {
            first
        } else {
            first + (last - first) * p as f64 / (probes - 1) as f64
        };
        let mut y = path.at(t0)?;
        let mut seg = path.grid.inverse(t0.min(end * (1.0 - f64::EPSILON)))?;
        for j in 1..=steps {
            let g = problem.full_selection(&y);
            axpy(-(1.0 + alpha) * euler_step, &g, &mut y);
            let s = t0 + j as f64 * euler_step;
            while seg + 1 < path.grid.len() && path.grid.lambda(seg + 1)? <= s {
                seg += 1;
            }
            let xs = if s >= end {
                path.xs.last().expect("non-empty").clone()
            } else {
                path.segment_point(seg, s)
            };
            worst = worst.max(dist(&y, &xs));
        }
    }
    Ok(worst)
}
