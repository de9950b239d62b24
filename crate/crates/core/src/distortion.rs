//! Action-distortion family for the positioning dynamics.
//!
//! Every distortion maps (state, action, context) to the next state and
//! leaves the state fixed under a zero action. The per-episode context is
//! drawn once at reset and never observed by the agent.
//!
//! Each kind carries a path-efficiency constant: an upper bound L such that
//! replaying the accumulated action of any k-step chain lands within
//! L * (sum of step norms) of the chain's endpoint. The linear kinds are
//! exact (L = 0); the square-root kind admits no such constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{block_rotation, clip_interval, Matrix, Vector};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    Identity,
    Blend,
    Rot,
    Scale,
    Regrot,
    Sin,
    Sqrt,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 7] = [
        DistortionKind::Identity,
        DistortionKind::Blend,
        DistortionKind::Rot,
        DistortionKind::Scale,
        DistortionKind::Regrot,
        DistortionKind::Sin,
        DistortionKind::Sqrt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DistortionKind::Identity => "identity",
            DistortionKind::Blend => "blend",
            DistortionKind::Rot => "rot",
            DistortionKind::Scale => "scale",
            DistortionKind::Regrot => "regrot",
            DistortionKind::Sin => "sin",
            DistortionKind::Sqrt => "sqrt",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown distortion kind '{name}'")))
    }

    fn default_sigma(&self) -> f64 {
        match self {
            DistortionKind::Identity | DistortionKind::Scale => 0.0,
            DistortionKind::Blend => 0.2,
            DistortionKind::Rot => 0.5,
            DistortionKind::Regrot => 0.2,
            DistortionKind::Sin => 0.3,
            DistortionKind::Sqrt => 0.2,
        }
    }
}

/// Mean rotation angle per quadrant for the region-rotation kind.
pub const REGION_MEANS: [f64; 4] = [-0.3, 0.6, -0.3, 0.6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    /// Noise scale: entry/angle standard deviation, or the upper end of the
    /// uniform amplitude for the sinusoidal kind.
    pub sigma: f64,
    /// Action-norm bound; also the upper clip of the distance-scaling kind.
    pub lambda: f64,
    /// Lower clip C of the distance-scaling kind, 0 < C < lambda.
    pub scale_floor: f64,
    pub region_means: [f64; 4],
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, lambda: f64) -> Self {
        DistortionSpec {
            kind,
            sigma: kind.default_sigma(),
            lambda,
            scale_floor: lambda / 4.0,
            region_means: REGION_MEANS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive, got {}", self.lambda),
            });
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must be non-negative, got {}", self.sigma),
            });
        }
        if self.kind == DistortionKind::Scale
            && !(self.scale_floor > 0.0 && self.scale_floor < self.lambda)
        {
            return Err(Error::InvalidParameter {
                name: "scale_floor",
                reason: format!(
                    "must satisfy 0 < C < lambda, got C={} lambda={}",
                    self.scale_floor, self.lambda
                ),
            });
        }
        if self.region_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("region_means"));
        }
        Ok(())
    }
}

/// Latent per-episode context. The payload shape is fixed by the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    Empty,
    /// Entry noise for the blend and sqrt kinds.
    Matrix(Matrix),
    /// Rotation angle (rot) or sinusoidal amplitude (sin).
    Scalar(f64),
    /// One rotation angle per quadrant region.
    Angles(Vec<f64>),
}

/// Quadrant of the first two coordinates. Boundaries go to the region whose
/// comparison is non-strict, so every point lies in exactly one region.
pub fn region_index(s: &Vector) -> usize {
    match (s[0] >= 0.0, s[1] >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Draws the episode context for `spec` in dimension `d`.
pub fn sample_context(spec: &DistortionSpec, d: usize, rng: &mut RngStream) -> Result<Context> {
    spec.validate()?;
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "dimension must be positive".into(),
        });
    }
    Ok(match spec.kind {
        DistortionKind::Identity | DistortionKind::Scale => Context::Empty,
        DistortionKind::Blend | DistortionKind::Sqrt => {
            let entries: Vec<f64> = (0..d * d)
                .map(|_| rng.normal_scaled(0.0, spec.sigma))
                .collect();
            Context::Matrix(Matrix::from_entries(d, d, entries)?)
        }
        DistortionKind::Rot => Context::Scalar(rng.normal_scaled(0.0, spec.sigma)),
        DistortionKind::Sin => Context::Scalar(rng.uniform(0.0, spec.sigma)),
        DistortionKind::Regrot => {
            if d < 2 {
                return Err(Error::InvalidParameter {
                    name: "d",
                    reason: "region rotation needs d >= 2".into(),
                });
            }
            Context::Angles(
                spec.region_means
                    .iter()
                    .map(|mu| rng.normal_scaled(*mu, spec.sigma))
                    .collect(),
            )
        }
    })
}

fn context_shape_error(kind: DistortionKind) -> Error {
    Error::InvalidParameter {
        name: "context",
        reason: format!("payload does not match distortion kind '{}'", kind.name()),
    }
}

/// One dynamics step: the next state under `spec` from state `s` with action
/// `a`, context `w`, and episode target `s_w`. The target enters only through
/// the distance-scaling kind. No position clamping happens here.
pub fn apply(
    spec: &DistortionSpec,
    s: &Vector,
    a: &Vector,
    w: &Context,
    s_w: &Vector,
) -> Result<Vector> {
    let d = s.dim();
    if a.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.dim(),
        });
    }
    if s_w.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: s_w.dim(),
        });
    }
    match (spec.kind, w) {
        (DistortionKind::Identity, Context::Empty) => Ok(s.add(a)),
        (DistortionKind::Blend, Context::Matrix(m)) => {
            if m.rows() != d || m.cols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.rows(),
                });
            }
            Ok(s.add(a).add(&m.mul_vec(a)))
        }
        (DistortionKind::Rot, Context::Scalar(angle)) => {
            let rot = block_rotation(d, *angle)?;
            Ok(s.add(&rot.mul_vec(a)))
        }
        (DistortionKind::Scale, Context::Empty) => {
            let dist = s.distance(s_w);
            let factor = clip_interval(dist, spec.scale_floor, spec.lambda)?;
            Ok(s.add(&a.scale(factor)))
        }
        (DistortionKind::Regrot, Context::Angles(angles)) => {
            if d < 2 {
                return Err(Error::InvalidParameter {
                    name: "d",
                    reason: "region rotation needs d >= 2".into(),
                });
            }
            if angles.len() != 4 {
                return Err(context_shape_error(spec.kind));
            }
            let rot = block_rotation(d, angles[region_index(s)])?;
            Ok(s.add(&rot.mul_vec(a)))
        }
        (DistortionKind::Sin, Context::Scalar(amp)) => {
            let wave = Vector::from_raw(
                s.as_slice()
                    .iter()
                    .map(|x| x.sin() * x.cos())
                    .collect::<Vec<f64>>(),
            );
            Ok(s.add(a).add(&wave.scale(amp * a.norm())))
        }
        (DistortionKind::Sqrt, Context::Matrix(m)) => {
            if m.rows() != d || m.cols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.rows(),
                });
            }
            let b = a.scale(a.norm().sqrt());
            Ok(s.add(&b).add(&m.mul_vec(&b)))
        }
        (kind, _) => Err(context_shape_error(kind)),
    }
}

/// Path-efficiency constant of the distortion kind, infinity when no finite
/// constant exists.
pub fn lpe_constant(spec: &DistortionSpec, d: usize) -> f64 {
    match spec.kind {
        DistortionKind::Identity | DistortionKind::Blend | DistortionKind::Rot => 0.0,
        DistortionKind::Scale => 2.0 * spec.lambda,
        DistortionKind::Regrot => 2.0,
        DistortionKind::Sin => spec.sigma * (d as f64).sqrt(),
        DistortionKind::Sqrt => f64::INFINITY,
    }
}

const CHAIN_ATTEMPTS: usize = 10_000;

/// Monte-Carlo estimate of the worst observed path-efficiency ratio:
/// ‖f(s0, sum a_i, W) - s_k‖ / sum ‖a_i‖ over random in-box chains.
/// Chains whose intermediate states leave the box are resampled; chains with
/// path length below 1e-9 are skipped.
pub fn estimate_lpe_ratio(
    spec: &DistortionSpec,
    d: usize,
    n_chains: usize,
    chain_len: usize,
    box_half_width: f64,
    rng: &RngStream,
) -> Result<f64> {
    spec.validate()?;
    if chain_len == 0 || n_chains == 0 {
        return Err(Error::InvalidParameter {
            name: "chain",
            reason: "need at least one chain of length >= 1".into(),
        });
    }
    // Short steps keep rejection rates low without weakening the bound being
    // probed: the ratio is scale-free in the step norms for every kind.
    let step_radius = spec.lambda.min(box_half_width / chain_len as f64);
    let ratios = (0..n_chains)
        .into_par_iter()
        .map(|c| -> Result<f64> {
            let mut stream = rng.child_index(c as u64);
            for _ in 0..CHAIN_ATTEMPTS {
                let s0 = stream.uniform_in_box(d, box_half_width);
                let s_w = stream.uniform_in_box(d, box_half_width / 2.0);
                let ctx = sample_context(spec, d, &mut stream)?;
                let actions: Vec<Vector> = (0..chain_len)
                    .map(|_| stream.uniform_in_ball(d, step_radius))
                    .collect();
                let mut s = s0.clone();
                let mut ok = true;
                for a in &actions {
                    s = apply(spec, &s, a, &ctx, &s_w)?;
                    if !s.in_box(box_half_width) {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                let path: f64 = actions.iter().map(Vector::norm).sum();
                if path < 1e-9 {
                    return Ok(0.0);
                }
                let mut total = Vector::zeros(d);
                for a in &actions {
                    total = total.add(a);
                }
                let replay = apply(spec, &s0, &total, &ctx, &s_w)?;
                return Ok(replay.distance(&s) / path);
            }
            Err(Error::InvalidParameter {
                name: "chain",
                reason: "could not sample an in-box chain".into(),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}
