//! Finite-sum test objectives `f(x) = (1/N) sum_i f_i(x)`.
//!
//! Every problem exposes per-component value and selection oracles. Sums of
//! absolute values of affine maps additionally expose their field
//! `conv((1/N) sum_i D_{f_i}(x))` exactly, as a zonotope (a center plus one
//! segment generator per kinked term) or as an enumerated vertex list.

use std::fmt::Debug;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, check_dim, check_finite, dot, norm};
use crate::{GsgdError, RealVector, Result};

/// Largest number of kinked terms for which vertices are enumerated (`2^12` vertices).
pub const MAX_HULL_KINKS: usize = 12;

/// Which one-sided limit a selection takes at a kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Plus,
    Minus,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// A polytope given by its (possibly redundant) vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct HullDescription {
    pub vertices: Vec<RealVector>,
}

impl HullDescription {
    pub fn new(vertices: Vec<RealVector>) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| GsgdError::InvalidInput("hull needs at least one vertex".into()))?;
        let n = first.len();
        for (i, v) in vertices.iter().enumerate() {
            check_dim(v, n, &format!("vertex {i}"))?;
            check_finite(v, &format!("vertex {i}"))?;
        }
        Ok(HullDescription { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }
}

/// `center + sum_j [-1, 1] * generators[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub center: RealVector,
    pub generators: Vec<RealVector>,
}

impl Zonotope {
    pub fn point(center: RealVector) -> Self {
        Zonotope {
            center,
            generators: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Enumerate all `2^g` sign patterns. Pattern bit `j` set means `+generators[j]`.
    pub fn vertices(&self, max_generators: usize) -> Result<HullDescription> {
        let g = self.generators.len();
        if g > max_generators {
            return Err(GsgdError::TooManyKinks {
                count: g,
                limit: max_generators,
            });
        }
        let vertices = (0..1usize << g)
            .map(|pattern| {
                let mut v = self.center.clone();
                for (j, gen) in self.generators.iter().enumerate() {
                    let s = if pattern >> j & 1 == 1 { 1.0 } else { -1.0 };
                    axpy(s, gen, &mut v);
                }
                v
            })
            .collect();
        Ok(HullDescription { vertices })
    }
}

/// A nonsmooth finite sum with per-component oracles.
///
/// Component indices are zero-based. Oracles assume `x.len() == self.dim()`;
/// use [`check_point`] at API boundaries.
pub trait FiniteSumProblem: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn num_components(&self) -> usize;

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// An element of `D_{f_i}(x)`.
    fn component_selection(&self, i: usize, x: &[f64]) -> RealVector;

    fn full_objective(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        (0..n).map(|i| self.component_value(i, x)).sum::<f64>() / n as f64
    }

    fn full_selection(&self, x: &[f64]) -> RealVector {
        let n = self.num_components();
        let mut acc = vec![0.0; self.dim()];
        for i in 0..n {
            axpy(1.0, &self.component_selection(i, x), &mut acc);
        }
        acc.iter_mut().for_each(|v| *v /= n as f64);
        acc
    }

    fn has_hull(&self) -> bool {
        false
    }

    /// `conv(D_f(y))` over points `y` whose kinks lie within `radius` of `x`.
    ///
    /// With `radius = 0` this is exactly `conv((1/N) sum_i D_{f_i}(x))`.
    fn hull_zonotope(&self, _x: &[f64], _radius: f64) -> Result<Zonotope> {
        Err(GsgdError::HullUnavailable(self.name().to_string()))
    }

    /// Vertex enumeration of `conv(D_f(x))`.
    fn hull_at(&self, x: &[f64]) -> Result<HullDescription> {
        self.hull_zonotope(x, 0.0)?.vertices(MAX_HULL_KINKS)
    }

    /// Alternative full selections at `x`, for problems without a hull oracle.
    fn selection_samples(&self, x: &[f64], _count: usize) -> Vec<RealVector> {
        vec![self.full_selection(x)]
    }
}

pub fn check_point(problem: &dyn FiniteSumProblem, x: &[f64]) -> Result<()> {
    check_dim(x, problem.dim(), "point")?;
    check_finite(x, "point")
}

/// `|<a, x> - b|`
#[derive(Debug, Clone, PartialEq)]
pub struct AbsTerm {
    pub a: RealVector,
    pub b: f64,
}

impl AbsTerm {
    #[inline]
    fn residual(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) - self.b
    }
}

/// `f_i(x) = sum_j |<a_ij, x> - b_ij|`, kinks resolved by a fixed side limit.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearSum {
    name: String,
    dim: usize,
    components: Vec<Vec<AbsTerm>>,
    side: Side,
}

impl PiecewiseLinearSum {
    pub fn new(name: &str, dim: usize, components: Vec<Vec<AbsTerm>>, side: Side) -> Result<Self> {
        if dim == 0 || components.is_empty() {
            return Err(GsgdError::InvalidInput(
                "need at least one component and one coordinate".into(),
            ));
        }
        for (i, terms) in components.iter().enumerate() {
            for t in terms {
                check_dim(&t.a, dim, &format!("component {i}"))?;
                check_finite(&t.a, &format!("component {i}"))?;
                if !t.b.is_finite() {
                    return Err(GsgdError::InvalidInput(format!(
                        "component {i}: offset not finite"
                    )));
                }
            }
        }
        Ok(PiecewiseLinearSum {
            name: name.to_string(),
            dim,
            components,
            side,
        })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn components(&self) -> &[Vec<AbsTerm>] {
        &self.components
    }

    /// Smallest `|residual| / |a|` over all terms, i.e. the distance from `x` to the nearest kink.
    pub fn kink_distance(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .flatten()
            .filter(|t| norm(&t.a) > 0.0)
            .map(|t| t.residual(x).abs() / norm(&t.a))
            .fold(f64::INFINITY, f64::min)
    }
}

impl FiniteSumProblem for PiecewiseLinearSum {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_components(&self) -> usize {
        self.components.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        self.components[i].iter().map(|t| t.residual(x).abs()).sum()
    }

    fn component_selection(&self, i: usize, x: &[f64]) -> RealVector {
        let mut g = vec![0.0; self.dim];
        for t in &self.components[i] {
            let r = t.residual(x);
            let s = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                self.side.sign()
            };
            axpy(s, &t.a, &mut g);
        }
        g
    }

    fn has_hull(&self) -> bool {
        true
    }

    fn hull_zonotope(&self, x: &[f64], radius: f64) -> Result<Zonotope> {
        check_point(self, x)?;
        let scale = 1.0 / self.components.len() as f64;
        let mut center = vec![0.0; self.dim];
        let mut generators = Vec::new();
        for t in self.components.iter().flatten() {
            let r = t.residual(x);
            let kinked = if radius > 0.0 {
                r.abs() <= radius * norm(&t.a)
            } else {
                r == 0.0
            };
            if kinked {
                if t.a.iter().any(|v| *v != 0.0) {
                    generators.push(t.a.iter().map(|v| v * scale).collect());
                }
            } else {
                axpy(r.signum() * scale, &t.a, &mut center);
            }
        }
        Ok(Zonotope { center, generators })
    }
}

/// `g(u, v) = |2u + v| + |u + 10|`: signSGD stalls on the diagonal near the origin
/// while the only stationary point is `(-10, 20)`.
pub fn make_counterexample(side: Side) -> PiecewiseLinearSum {
    let terms = vec![
        AbsTerm {
            a: vec![2.0, 1.0],
            b: 0.0,
        },
        AbsTerm {
            a: vec![1.0, 0.0],
            b: -10.0,
        },
    ];
    PiecewiseLinearSum::new("counterexample", 2, vec![terms], side)
        .expect("counterexample data is well formed")
}

/// `f_i(x) = |<a_i, x> - b_i|` for the rows of `a`.
pub fn make_l1_regression(a: &[Vec<f64>], b: &[f64], side: Side) -> Result<PiecewiseLinearSum> {
    if a.is_empty() || a.len() != b.len() {
        return Err(GsgdError::InvalidInput(format!(
            "need matching non-empty rows and labels, got {} rows and {} labels",
            a.len(),
            b.len()
        )));
    }
    let dim = a[0].len();
    let components = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            vec![AbsTerm {
                a: row.clone(),
                b: bi,
            }]
        })
        .collect();
    PiecewiseLinearSum::new("l1_regression", dim, components, side)
}

/// Seeded synthetic regression data: unit-normal rows, planted unit-normal
/// solution, labels `<a_i, x*> + noise_std * N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRecipe {
    pub samples: usize,
    pub dim: usize,
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub planted: Vec<f64>,
}

impl SyntheticRecipe {
    pub fn generate(&self) -> Result<SyntheticData> {
        if self.samples == 0 || self.dim == 0 {
            return Err(GsgdError::InvalidInput(
                "synthetic recipe needs samples, dim >= 1".into(),
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(GsgdError::InvalidParameter(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let planted: Vec<f64> = (0..self.dim).map(|_| normal()).collect();
        let a: Vec<Vec<f64>> = (0..self.samples)
            .map(|_| (0..self.dim).map(|_| normal()).collect())
            .collect();
        let b = a
            .iter()
            .map(|row| {
                let noise = if self.noise_std > 0.0 {
                    self.noise_std * normal()
                } else {
                    0.0
                };
                dot(row, &planted) + noise
            })
            .collect();
        Ok(SyntheticData { a, b, planted })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    L1,
    HalfSquare,
}

/// One-hidden-layer ReLU regression network with weights as the variable.
///
/// Parameters are packed as `[W1 (hidden x n_in, row-major), b1 (hidden), w2 (hidden), b2]`.
/// The selection is ordinary backpropagation with `relu'(0) := c_relu` and
/// `|.|'(0) := 0`, one member of the family of fields automatic differentiation produces.
#[derive(Debug, Clone)]
pub struct ReluNet {
    n_in: usize,
    hidden: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    loss: Loss,
    c_relu: f64,
}

struct Forward {
    pre: Vec<f64>,
    act: Vec<f64>,
    out: f64,
}

impl ReluNet {
    pub fn param_dim(n_in: usize, hidden: usize) -> usize {
        hidden * n_in + 2 * hidden + 1
    }

    pub fn c_relu(&self) -> f64 {
        self.c_relu
    }

    pub fn with_c_relu(&self, c_relu: f64) -> Self {
        ReluNet {
            c_relu,
            ..self.clone()
        }
    }

    fn forward(&self, x: &[f64], input: &[f64]) -> Forward {
        let (n_in, h) = (self.n_in, self.hidden);
        let w1 = &x[..h * n_in];
        let b1 = &x[h * n_in..h * n_in + h];
        let w2 = &x[h * n_in + h..h * n_in + 2 * h];
        let b2 = x[h * n_in + 2 * h];
        let pre: Vec<f64> = (0..h)
            .map(|j| dot(&w1[j * n_in..(j + 1) * n_in], input) + b1[j])
            .collect();
        let act: Vec<f64> = pre.iter().map(|z| z.max(0.0)).collect();
        let out = dot(&act, w2) + b2;
        Forward { pre, act, out }
    }

    fn loss_value(&self, r: f64) -> f64 {
        match self.loss {
            Loss::L1 => r.abs(),
            Loss::HalfSquare => 0.5 * r * r,
        }
    }

    fn loss_slope(&self, r: f64) -> f64 {
        match self.loss {
            Loss::L1 => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Loss::HalfSquare => r,
        }
    }

    fn relu_slope(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else if z < 0.0 {
            0.0
        } else {
            self.c_relu
        }
    }
}

/// Build a `[n_in, n_hidden, 1]` ReLU network over `(input, target)` pairs.
pub fn make_relu_net(
    widths: [usize; 3],
    data: &[(Vec<f64>, f64)],
    loss: Loss,
    c_relu: f64,
) -> Result<ReluNet> {
    let [n_in, hidden, n_out] = widths;
    if n_in == 0 || hidden == 0 || n_out != 1 {
        return Err(GsgdError::InvalidInput(format!(
            "widths must be [n_in >= 1, n_hidden >= 1, 1], got {widths:?}"
        )));
    }
    if !(0.0..=1.0).contains(&c_relu) {
        return Err(GsgdError::InvalidParameter(format!(
            "c_relu must lie in [0, 1], got {c_relu}"
        )));
    }
    if data.is_empty() {
        return Err(GsgdError::InvalidInput(
            "network needs at least one sample".into(),
        ));
    }
    for (i, (input, target)) in data.iter().enumerate() {
        check_dim(input, n_in, &format!("sample {i}"))?;
        check_finite(input, &format!("sample {i}"))?;
        if !target.is_finite() {
            return Err(GsgdError::InvalidInput(format!(
                "sample {i}: target not finite"
            )));
        }
    }
    Ok(ReluNet {
        n_in,
        hidden,
        inputs: data.iter().map(|(a, _)| a.clone()).collect(),
        targets: data.iter().map(|(_, b)| *b).collect(),
        loss,
        c_relu,
    })
}

impl FiniteSumProblem for ReluNet {
    fn name(&self) -> &str {
        "relu_net"
    }

    fn dim(&self) -> usize {
        Self::param_dim(self.n_in, self.hidden)
    }

    fn num_components(&self) -> usize {
        self.inputs.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let fw = self.forward(x, &self.inputs[i]);
        self.loss_value(fw.out - self.targets[i])
    }

    fn component_selection(&self, i: usize, x: &[f64]) -> RealVector {
        let (n_in, h) = (self.n_in, self.hidden);
        let input = &self.inputs[i];
        let fw = self.forward(x, input);
        let dout = self.loss_slope(fw.out - self.targets[i]);
        let w2 = &x[h * n_in + h..h * n_in + 2 * h];

        let mut g = vec![0.0; self.dim()];
        for j in 0..h {
            let dz = dout * w2[j] * self.relu_slope(fw.pre[j]);
            for (k, inp) in input.iter().enumerate() {
                g[j * n_in + k] = dz * inp;
            }
            g[h * n_in + j] = dz;
            g[h * n_in + h + j] = dout * fw.act[j];
        }
        g[h * n_in + 2 * h] = dout;
        g
    }

    /// Full selections with `relu'(0)` swept over an even grid on `[0, 1]`.
    fn selection_samples(&self, x: &[f64], count: usize) -> Vec<RealVector> {
        let count = count.max(1);
        (0..count)
            .map(|j| {
                let c = if count == 1 {
                    self.c_relu
                } else {
                    j as f64 / (count - 1) as f64
                };
                self.with_c_relu(c).full_selection(x)
            })
            .collect()
    }
}
