//! The momentum iteration
//!
//! ```text
//! g_k     = s_{i_k}(x_k) + xi_k
//! m_{k+1} = (1 - theta_k) m_k + theta_k g_k
//! x_{k+1} = x_k - eta_k (p_k + alpha g_k),   p_k in D_phi(m_{k+1})
//! ```
//!
//! with `i_k` drawn uniformly from the components (or the full batch), and the
//! five named methods as choices of `D_phi`. Lion evaluates `p_k` at a separate
//! interpolation `v_{k+1} = (1 - tau_k) m_k + tau_k g_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{lyapunov_h, momentum_gap, stationarity_measure};
use crate::fields::{clip_select, regu_select, sign_select, PhiChoice, TiePolicy};
use crate::linalg::{axpy, check_dim, check_finite, dist, is_finite, norm};
use crate::problems::{check_point, FiniteSumProblem};
use crate::schedules::{Regime, StepsizeSchedule};
use crate::{GsgdError, RealVector, Result};

/// Iterates beyond this norm count as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HeavyBall,
    #[serde(rename = "signsgd")]
    SignSgd,
    Lion,
    Normalized,
    Clipped,
}

impl Method {
    /// The potential whose field drives the `x` update.
    pub fn phi(self, clip: Option<f64>) -> Result<PhiChoice> {
        Ok(match self {
            Method::HeavyBall => PhiChoice::HalfSquare,
            Method::SignSgd | Method::Lion => PhiChoice::L1,
            Method::Normalized => PhiChoice::L2,
            Method::Clipped => {
                let c = clip.ok_or_else(|| {
                    GsgdError::InvalidParameter("clipped method needs a clip level".into())
                })?;
                let phi = PhiChoice::Clip { c };
                phi.validate()?;
                phi
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    #[default]
    None,
    /// Each coordinate uniform on `[-bound/sqrt(n), bound/sqrt(n)]`, so `|xi| <= bound`.
    Uniform { bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// One component per step, uniformly at random.
    #[default]
    Uniform,
    /// The averaged selection over all components.
    FullBatch,
}

/// Interpolation weight `tau_k` for Lion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LionTau {
    /// `tau_k = theta_k`
    #[default]
    Theta,
    /// `tau_k = min(1, factor * theta_k)`
    Scaled { factor: f64 },
    /// `tau_k = min(1, tau0 / (k + 1)^p)`
    Power { tau0: f64, p: f64 },
}

impl LionTau {
    fn at(&self, k: usize, theta: f64) -> f64 {
        match *self {
            LionTau::Theta => theta,
            LionTau::Scaled { factor } => (factor * theta).min(1.0),
            LionTau::Power { tau0, p } => (tau0 / (k as f64 + 1.0).powf(p)).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsgdConfig {
    pub method: Method,
    /// Weight of the raw sample in the `x` update (Nesterov-style).
    pub alpha: f64,
    pub clip: Option<f64>,
    pub lion_tau: LionTau,
    pub tie: TiePolicy,
    pub schedule: StepsizeSchedule,
    pub noise: NoiseModel,
    pub sampling: Sampling,
    pub seed: u64,
    pub horizon: usize,
    /// Diagnostics are probed every `probe_period` steps and at the end; 0 disables probes.
    pub probe_period: usize,
    /// Kink radius used by the stationarity probe.
    pub stationarity_radius: f64,
    /// `tau` in the Lyapunov value; defaults to the single-timescale ratio, else 1.
    pub lyapunov_tau: Option<f64>,
    pub x0: Option<RealVector>,
    pub m0: Option<RealVector>,
    pub record_trajectory: bool,
}

impl GsgdConfig {
    pub fn new(method: Method, schedule: StepsizeSchedule, horizon: usize) -> Self {
        GsgdConfig {
            method,
            alpha: 0.0,
            clip: None,
            lion_tau: LionTau::Theta,
            tie: TiePolicy::Zero,
            schedule,
            noise: NoiseModel::None,
            sampling: Sampling::Uniform,
            seed: 0,
            horizon,
            probe_period: 100,
            stationarity_radius: 0.0,
            lyapunov_tau: None,
            x0: None,
            m0: None,
            record_trajectory: false,
        }
    }

    pub fn phi(&self) -> Result<PhiChoice> {
        self.method.phi(self.clip)
    }

    pub fn lyapunov_tau(&self) -> f64 {
        self.lyapunov_tau.unwrap_or(match self.schedule.regime {
            Regime::Single { tau } => tau,
            _ => 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(GsgdError::InvalidParameter(s));
        self.schedule.validate_params()?;
        self.phi()?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if let NoiseModel::Uniform { bound } = self.noise {
            if !(bound >= 0.0 && bound.is_finite()) {
                return bad(format!("noise bound must be >= 0, got {bound}"));
            }
        }
        match self.lion_tau {
            LionTau::Scaled { factor } if !(factor > 0.0) => {
                return bad(format!("lion tau factor must be positive, got {factor}"));
            }
            LionTau::Power { tau0, p } if !(tau0 > 0.0 && p > 0.0) => {
                return bad(format!("lion tau rule needs tau0, p > 0, got {tau0}, {p}"));
            }
            _ => {}
        }
        if !(self.stationarity_radius >= 0.0) {
            return bad(format!(
                "stationarity radius must be >= 0, got {}",
                self.stationarity_radius
            ));
        }
        if let Some(t) = self.lyapunov_tau {
            if !(t > 0.0) {
                return bad(format!("lyapunov tau must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

/// Step sizes for one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub eta: f64,
    pub theta: f64,
    /// Lion's interpolation weight; ignored by the other methods.
    pub lion_tau: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub x: RealVector,
    pub m: RealVector,
    pub k: usize,
    pub rng: ChaCha8Rng,
}

impl OptimizerState {
    pub fn new(x: RealVector, m: RealVector, seed: u64) -> Result<Self> {
        check_dim(&m, x.len(), "momentum")?;
        check_finite(&x, "x0")?;
        check_finite(&m, "m0")?;
        Ok(OptimizerState {
            x,
            m,
            k: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

/// Zero-based component index, uniform over `0..n`.
pub fn sample_component<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    if n == 1 {
        0
    } else {
        rng.random_range(0..n)
    }
}

pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, model: &NoiseModel, n: usize) -> RealVector {
    match *model {
        NoiseModel::None => vec![0.0; n],
        NoiseModel::Uniform { bound } => {
            let half_width = bound / (n as f64).sqrt();
            if half_width == 0.0 {
                return vec![0.0; n];
            }
            (0..n)
                .map(|_| rng.random_range(-half_width..=half_width))
                .collect()
        }
    }
}

/// `m <- (1 - theta) m + theta g`
#[inline]
pub fn average_momentum(m: &mut [f64], g: &[f64], theta: f64) {
    for (mi, gi) in m.iter_mut().zip(g) {
        *mi = (1.0 - theta) * *mi + theta * gi;
    }
}

/// The framework's own momentum form `m - theta (m - g)`.
pub fn framework_momentum(m: &[f64], g: &[f64], theta: f64) -> RealVector {
    m.iter()
        .zip(g)
        .map(|(mi, gi)| mi - theta * (mi - gi))
        .collect()
}

/// `x <- x - eta (p + alpha g)`
#[inline]
fn move_x(x: &mut [f64], p: &[f64], g: &[f64], eta: f64, alpha: f64) {
    for ((xi, pi), gi) in x.iter_mut().zip(p).zip(g) {
        *xi -= eta * (pi + alpha * gi);
    }
}

pub fn step_heavy_ball(x: &mut [f64], m: &mut [f64], g: &[f64], s: StepSizes, alpha: f64) {
    average_momentum(m, g, s.theta);
    let p = m.to_vec();
    move_x(x, &p, g, s.eta, alpha);
}

pub fn step_signsgd<R: Rng + ?Sized>(
    x: &mut [f64],
    m: &mut [f64],
    g: &[f64],
    s: StepSizes,
    alpha: f64,
    tie: TiePolicy,
    rng: &mut R,
) -> Result<()> {
    average_momentum(m, g, s.theta);
    let p = sign_select(m, tie, rng)?;
    move_x(x, &p, g, s.eta, alpha);
    Ok(())
}

pub fn step_lion<R: Rng + ?Sized>(
    x: &mut [f64],
    m: &mut [f64],
    g: &[f64],
    s: StepSizes,
    alpha: f64,
    tie: TiePolicy,
    rng: &mut R,
) -> Result<()> {
    let mut v = m.to_vec();
    average_momentum(&mut v, g, s.lion_tau);
    let p = sign_select(&v, tie, rng)?;
    move_x(x, &p, g, s.eta, alpha);
    average_momentum(m, g, s.theta);
    Ok(())
}

pub fn step_normalized<R: Rng + ?Sized>(
    x: &mut [f64],
    m: &mut [f64],
    g: &[f64],
    s: StepSizes,
    alpha: f64,
    tie: TiePolicy,
    rng: &mut R,
) -> Result<()> {
    average_momentum(m, g, s.theta);
    let p = regu_select(m, tie, rng)?;
    move_x(x, &p, g, s.eta, alpha);
    Ok(())
}

pub fn step_clipped(
    x: &mut [f64],
    m: &mut [f64],
    g: &[f64],
    s: StepSizes,
    alpha: f64,
    clip: f64,
) -> Result<()> {
    average_momentum(m, g, s.theta);
    let p = clip_select(m, clip)?;
    move_x(x, &p, g, s.eta, alpha);
    Ok(())
}

/// One step of the generic scheme with an arbitrary `phi`.
#[allow(clippy::too_many_arguments)]
pub fn step_framework<R: Rng + ?Sized>(
    phi: &PhiChoice,
    x: &mut [f64],
    m: &mut [f64],
    g: &[f64],
    s: StepSizes,
    alpha: f64,
    tie: TiePolicy,
    rng: &mut R,
) -> Result<()> {
    average_momentum(m, g, s.theta);
    let p = phi.select(m, tie, rng)?;
    move_x(x, &p, g, s.eta, alpha);
    Ok(())
}

pub fn step_sizes(config: &GsgdConfig, k: usize) -> StepSizes {
    let eta = config.schedule.eta(k);
    let theta = config.schedule.theta(k);
    StepSizes {
        eta,
        theta,
        lion_tau: config.lion_tau.at(k, theta),
    }
}

/// Draw the sample `g_k` for the current state.
pub fn draw_sample(
    problem: &dyn FiniteSumProblem,
    state: &mut OptimizerState,
    config: &GsgdConfig,
) -> RealVector {
    let mut g = match config.sampling {
        Sampling::Uniform => {
            let i = sample_component(&mut state.rng, problem.num_components());
            problem.component_selection(i, &state.x)
        }
        Sampling::FullBatch => problem.full_selection(&state.x),
    };
    if config.noise != NoiseModel::None {
        let xi = draw_noise(&mut state.rng, &config.noise, g.len());
        axpy(1.0, &xi, &mut g);
    }
    g
}

/// Apply the configured method with a given sample.
pub fn apply_method(state: &mut OptimizerState, g: &[f64], config: &GsgdConfig) -> Result<()> {
    let s = step_sizes(config, state.k);
    let OptimizerState { x, m, rng, .. } = state;
    match config.method {
        Method::HeavyBall => {
            step_heavy_ball(x, m, g, s, config.alpha);
            Ok(())
        }
        Method::SignSgd => step_signsgd(x, m, g, s, config.alpha, config.tie, rng),
        Method::Lion => step_lion(x, m, g, s, config.alpha, config.tie, rng),
        Method::Normalized => step_normalized(x, m, g, s, config.alpha, config.tie, rng),
        Method::Clipped => {
            let c = config.clip.ok_or_else(|| {
                GsgdError::InvalidParameter("clipped method needs a clip level".into())
            })?;
            step_clipped(x, m, g, s, config.alpha, c)
        }
    }
}

/// Sample, update and advance `k`. On divergence the state is left at its last finite value.
pub fn step(
    problem: &dyn FiniteSumProblem,
    state: &mut OptimizerState,
    config: &GsgdConfig,
) -> Result<RealVector> {
    check_dim(&state.x, problem.dim(), "state")?;
    let (x_prev, m_prev) = (state.x.clone(), state.m.clone());
    let g = draw_sample(problem, state, config);
    apply_method(state, &g, config)?;
    if !is_finite(&state.x) || !is_finite(&state.m) || norm(&state.x) > DIVERGENCE_NORM {
        state.x = x_prev.clone();
        state.m = m_prev.clone();
        return Err(GsgdError::Divergence {
            k: state.k,
            x: x_prev,
            m: m_prev,
        });
    }
    state.k += 1;
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRow {
    pub k: usize,
    pub f: f64,
    pub m_norm: f64,
    pub eta: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub k: usize,
    pub stationarity: f64,
    pub stationarity_exact: bool,
    pub lyapunov: f64,
    /// `None` when the problem has no hull oracle.
    pub momentum_gap: Option<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged { k: usize },
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    /// One row per iterate `x_0, ..., x_K` (so `K + 1` rows).
    pub rows: Vec<IterRow>,
    pub probes: Vec<ProbeRow>,
    pub status: RunStatus,
    pub final_x: RealVector,
    pub final_m: RealVector,
    /// Iterates `x_0..x_K`, kept when `record_trajectory` is set.
    pub trajectory: Option<Vec<RealVector>>,
    /// Steps where `|m_k| > max(|m_0|, sup_j |g_j|)`; zero whenever `theta_k` lies in `(0, 1]`.
    pub momentum_bound_violations: usize,
    pub theta_clamped: usize,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn last_probe(&self) -> Option<&ProbeRow> {
        self.probes.last()
    }
}

struct Prober {
    tau: f64,
    phi: PhiChoice,
    radius: f64,
    /// largest `|x_{k+1} - x_k| / eta_k` seen so far
    step_bound: f64,
    eta_prefix: Vec<f64>,
}

impl Prober {
    /// `delta_k = M * sum_{i = k - w}^{k} eta_i` with `w = ceil(sqrt(k))`.
    fn delta(&self, k: usize) -> f64 {
        let w = (k as f64).sqrt().ceil() as usize;
        let lo = k.saturating_sub(w);
        let hi = (k + 1).min(self.eta_prefix.len() - 1);
        self.step_bound * (self.eta_prefix[hi] - self.eta_prefix[lo])
    }

    fn probe(
        &self,
        problem: &dyn FiniteSumProblem,
        k: usize,
        x: &[f64],
        m: &[f64],
    ) -> Result<ProbeRow> {
        let st = stationarity_measure(problem, x, self.radius)?;
        let lyapunov = lyapunov_h(problem, x, m, &self.phi, self.tau)?;
        let delta = self.delta(k);
        let gap = if problem.has_hull() {
            Some(momentum_gap(problem, x, m, delta)?)
        } else {
            None
        };
        Ok(ProbeRow {
            k,
            stationarity: st.value,
            stationarity_exact: st.exact,
            lyapunov,
            momentum_gap: gap,
            delta,
        })
    }
}

/// Run `config.horizon` steps from `x0` (default 0) and `m0` (default 0).
pub fn run(problem: &dyn FiniteSumProblem, config: &GsgdConfig) -> Result<RunRecord> {
    config.validate()?;
    let n = problem.dim();
    let x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; n]);
    let m0 = config.m0.clone().unwrap_or_else(|| vec![0.0; n]);
    check_point(problem, &x0)?;
    check_point(problem, &m0)?;
    let mut state = OptimizerState::new(x0, m0, config.seed)?;
    let horizon = config.horizon;

    let mut eta_prefix = Vec::with_capacity(horizon + 2);
    eta_prefix.push(0.0);
    for k in 0..=horizon {
        let last = *eta_prefix.last().expect("non-empty");
        eta_prefix.push(last + config.schedule.eta(k));
    }
    let mut prober = Prober {
        tau: config.lyapunov_tau(),
        phi: config.phi()?,
        radius: config.stationarity_radius,
        step_bound: 0.0,
        eta_prefix,
    };
    let period = config.probe_period;
    let wants_probe = |k: usize| period > 0 && (k.is_multiple_of(period) || k == horizon);

    let row = |k: usize, x: &[f64], m: &[f64]| IterRow {
        k,
        f: problem.full_objective(x),
        m_norm: norm(m),
        eta: config.schedule.eta(k),
        theta: config.schedule.theta(k),
    };

    let mut rows = Vec::with_capacity(horizon + 1);
    let mut probes = Vec::new();
    let mut trajectory = config.record_trajectory.then(|| vec![state.x.clone()]);
    rows.push(row(0, &state.x, &state.m));
    if wants_probe(0) {
        probes.push(prober.probe(problem, 0, &state.x, &state.m)?);
    }

    let m0_norm = norm(&state.m);
    let mut sample_bound = 0.0f64;
    let mut violations = 0;
    let mut theta_clamped = 0;
    let mut status = RunStatus::Completed;

    while state.k < horizon {
        let k = state.k;
        if config.schedule.theta_info(k).clamped {
            theta_clamped += 1;
        }
        let x_prev = state.x.clone();
        let g = match step(problem, &mut state, config) {
            Ok(g) => g,
            Err(GsgdError::Divergence { k, .. }) => {
                status = RunStatus::Diverged { k };
                break;
            }
            Err(e) => return Err(e),
        };
        prober.step_bound = prober
            .step_bound
            .max(dist(&state.x, &x_prev) / config.schedule.eta(k));
        sample_bound = sample_bound.max(norm(&g));
        let bound = m0_norm.max(sample_bound);
        if norm(&state.m) > bound * (1.0 + 1e-12) + 1e-300 {
            violations += 1;
        }

        rows.push(row(state.k, &state.x, &state.m));
        if let Some(t) = trajectory.as_mut() {
            t.push(state.x.clone());
        }
        if wants_probe(state.k) {
            probes.push(prober.probe(problem, state.k, &state.x, &state.m)?);
        }
    }

    Ok(RunRecord {
        rows,
        probes,
        status,
        final_x: state.x,
        final_m: state.m,
        trajectory,
        momentum_bound_violations: violations,
        theta_clamped,
    })
}
