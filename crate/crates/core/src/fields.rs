//! Update-direction maps `D_phi` and their potentials `phi`.
//!
//! Each map is exposed as a single-valued selection. Where the underlying set
//! is not a singleton (`sign` at a zero coordinate, `regu` at the origin) the
//! returned element is fixed by a [`TiePolicy`], so a selection is always a
//! deterministic function of `(input, policy, rng state)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{check_finite, dot, norm, norm1};
use crate::{GsgdError, RealVector, Result};

/// How to pick an element of a multi-valued map at a tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// `sign(0) = 0`, `regu(0) = 0`.
    #[default]
    Zero,
    /// Every tied coordinate resolves to `+1`.
    Positive,
    /// All tied coordinates share one common value (`+1`), so a tie at the
    /// origin keeps the output on the diagonal.
    Diagonal,
    /// Uniform draw from the admissible set, taken from the run RNG.
    SeededRandom,
}

/// The potential `phi` together with its map `D_phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiChoice {
    /// `phi(m) = |m|^2 / 2`, `D_phi(m) = {m}` (heavy ball).
    HalfSquare,
    /// `phi(m) = |m|_1`, `D_phi = sign` (signSGD, Lion).
    L1,
    /// `phi(m) = |m|`, `D_phi = regu` (normalized SGD).
    L2,
    /// `phi(m) = sum_i s(m_i)` with the Huber-type `s`, `D_phi = clip_C`.
    Clip { c: f64 },
}

impl PhiChoice {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PhiChoice::Clip { c } if !(c > 0.0 && c.is_finite()) => Err(
                GsgdError::InvalidParameter(format!("clip level must be positive, got {c}")),
            ),
            _ => Ok(()),
        }
    }

    /// Evaluate `phi(m)`.
    pub fn value(&self, m: &[f64]) -> f64 {
        phi_value(m, self)
    }

    /// Select an element of `D_phi(m)`.
    pub fn select<R: Rng + ?Sized>(
        &self,
        m: &[f64],
        tie: TiePolicy,
        rng: &mut R,
    ) -> Result<RealVector> {
        match *self {
            PhiChoice::HalfSquare => {
                check_finite(m, "momentum")?;
                Ok(m.to_vec())
            }
            PhiChoice::L1 => sign_select(m, tie, rng),
            PhiChoice::L2 => regu_select(m, tie, rng),
            PhiChoice::Clip { c } => clip_select(m, c),
        }
    }
}

/// Coordinate-wise sign with ties at zero resolved by `tie`.
pub fn sign_select<R: Rng + ?Sized>(m: &[f64], tie: TiePolicy, rng: &mut R) -> Result<RealVector> {
    check_finite(m, "sign argument")?;
    Ok(m.iter()
        .map(|&v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                match tie {
                    TiePolicy::Zero => 0.0,
                    TiePolicy::Positive | TiePolicy::Diagonal => 1.0,
                    TiePolicy::SeededRandom => rng.random_range(-1.0..=1.0),
                }
            }
        })
        .collect())
}

/// `m / |m|` for `m != 0`; at the origin an element of the closed unit ball.
pub fn regu_select<R: Rng + ?Sized>(m: &[f64], tie: TiePolicy, rng: &mut R) -> Result<RealVector> {
    check_finite(m, "regu argument")?;
    let r = norm(m);
    if r > 0.0 {
        return Ok(m.iter().map(|v| v / r).collect());
    }
    let n = m.len();
    Ok(match tie {
        TiePolicy::Zero => vec![0.0; n],
        TiePolicy::Positive | TiePolicy::Diagonal => vec![1.0 / (n as f64).sqrt(); n],
        TiePolicy::SeededRandom => {
            // Uniform direction scaled by a uniform radius; lands in the unit ball.
            let mut dir: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let len = norm(&dir);
            let radius: f64 = rng.random_range(0.0..=1.0);
            if len > 0.0 {
                dir.iter_mut().for_each(|v| *v *= radius / len);
            }
            dir
        }
    })
}

/// Coordinate-wise clamp to `[-c, c]`.
pub fn clip_select(m: &[f64], c: f64) -> Result<RealVector> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(GsgdError::InvalidParameter(format!(
            "clip level must be positive, got {c}"
        )));
    }
    check_finite(m, "clip argument")?;
    Ok(m.iter().map(|v| v.max(-c).min(c)).collect())
}

/// Scalar clip potential: `x^2/2` on `|x| <= c`, `c|x| - c^2/2` outside.
pub fn clip_potential(x: f64, c: f64) -> f64 {
    let a = x.abs();
    if a <= c {
        0.5 * x * x
    } else {
        c * a - 0.5 * c * c
    }
}

pub fn phi_value(m: &[f64], choice: &PhiChoice) -> f64 {
    match *choice {
        PhiChoice::HalfSquare => 0.5 * dot(m, m),
        PhiChoice::L1 => norm1(m),
        PhiChoice::L2 => norm(m),
        PhiChoice::Clip { c } => m.iter().map(|&v| clip_potential(v, c)).sum(),
    }
}
