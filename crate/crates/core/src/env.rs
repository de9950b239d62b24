//! Episodic positioning environment.
//!
//! An episode fixes a latent context and a target, then steps
//! `s' = f(s, a, W)` clamped into the position box, with reward equal to the
//! negative distance of the landing point to the target. Episodes end inside
//! the theta-ball around the target or at the step cap.
//!
//! Observations never expose the context. The position observation requires a
//! fixed origin target so the policy can infer the displacement; the
//! difference observation works with random targets.

use serde::{Deserialize, Serialize};

use crate::distortion::{apply, sample_context, Context, DistortionKind, DistortionSpec};
use crate::error::{Error, Result};
use crate::math::Vector;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    /// Raw position; only valid with the fixed-origin target mode.
    Position,
    /// Position minus target.
    Difference,
}

impl ObservationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObservationKind::Position => "position",
            ObservationKind::Difference => "difference",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "position" => Ok(ObservationKind::Position),
            "difference" => Ok(ObservationKind::Difference),
            _ => Err(Error::InvalidConfig(format!(
                "unknown observation kind '{name}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    FixedOrigin,
    /// Uniform in the inner half of the position box.
    RandomPerEpisode,
}

impl TargetMode {
    pub fn name(&self) -> &'static str {
        match self {
            TargetMode::FixedOrigin => "fixed_origin",
            TargetMode::RandomPerEpisode => "random_per_episode",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fixed_origin" => Ok(TargetMode::FixedOrigin),
            "random_per_episode" => Ok(TargetMode::RandomPerEpisode),
            _ => Err(Error::InvalidConfig(format!("unknown target mode '{name}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub d: usize,
    /// Action-norm bound.
    pub lambda: f64,
    /// Termination radius around the target.
    pub theta: f64,
    pub max_steps: usize,
    pub gamma: f64,
    pub box_half_width: f64,
    pub observation: ObservationKind,
    pub target_mode: TargetMode,
    pub distortion: DistortionSpec,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be positive".into()));
        }
        if !(self.theta > 0.0 && self.theta < self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "theta must satisfy 0 < theta < lambda, got theta={} lambda={}",
                self.theta, self.lambda
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if !(self.box_half_width.is_finite() && self.box_half_width > self.theta) {
            return Err(Error::InvalidConfig(format!(
                "box_half_width must exceed theta, got {}",
                self.box_half_width
            )));
        }
        if self.observation == ObservationKind::Position
            && self.target_mode != TargetMode::FixedOrigin
        {
            return Err(Error::InvalidConfig(
                "position observation requires the fixed_origin target mode".into(),
            ));
        }
        if self.distortion.lambda != self.lambda {
            return Err(Error::InvalidConfig(format!(
                "distortion lambda {} differs from env lambda {}",
                self.distortion.lambda, self.lambda
            )));
        }
        self.distortion.validate()
    }
}

/// Full latent episode state. Cloning it is a snapshot; stepping a clone
/// replays identically because the dynamics are deterministic given the
/// context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub s: Vector,
    pub context: Context,
    pub s_w: Vector,
    pub t: usize,
    pub done: bool,
}

impl EpisodeState {
    pub fn distance_to_target(&self) -> f64 {
        self.s.distance(&self.s_w)
    }
}

/// One logged step. `obs` is the observation where `action` was taken; the
/// latent fields are diagnostics for replay and verification and must not
/// feed back into policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vector,
    pub action: Vector,
    pub reward: f64,
    pub done: bool,
    pub latent_s: Vector,
    pub latent_next_s: Vector,
    pub augmented: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode: usize,
    pub context: Context,
    pub target: Vector,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Whether the episode ended inside the theta-ball rather than timing out.
    pub fn reached_target(&self, theta: f64) -> bool {
        self.transitions
            .last()
            .map(|t| t.latent_next_s.distance(&self.target) <= theta)
            .unwrap_or(false)
    }

    /// Checks internal consistency: latent chain continuity and the reward
    /// definition. Used by tests and by file readers in diagnostic mode.
    pub fn validate_chain(&self) -> Result<()> {
        for (i, pair) in self.transitions.windows(2).enumerate() {
            if pair[0].latent_next_s != pair[1].latent_s {
                return Err(Error::InvalidConfig(format!(
                    "latent chain broken between steps {i} and {}",
                    i + 1
                )));
            }
        }
        for (i, tr) in self.transitions.iter().enumerate() {
            let want = -tr.latent_next_s.distance(&self.target);
            if (tr.reward - want).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "reward at step {i} is {} but the landing distance gives {want}",
                    tr.reward
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    /// Digest of the full configuration the file was written under.
    pub config_digest: String,
    /// Digest of only the collection-shaping keys (seed, env, policy,
    /// collect). Downstream readers check this one, so extraction and
    /// training knobs may vary freely over a fixed dataset.
    pub data_digest: String,
    pub seed: u64,
    pub d: usize,
    pub gamma: f64,
}

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}

const RESET_ATTEMPTS: usize = 100_000;

/// Starts a fresh episode: draws the context, the target (per target mode),
/// and a start position outside the theta-ball. Returns the state and the
/// first observation. Draw order is fixed, so a given stream always produces
/// the same episode.
pub fn reset(cfg: &EnvConfig, rng: &mut RngStream) -> Result<(EpisodeState, Vector)> {
    cfg.validate()?;
    let context = sample_context(&cfg.distortion, cfg.d, rng)?;
    let s_w = match cfg.target_mode {
        TargetMode::FixedOrigin => Vector::zeros(cfg.d),
        TargetMode::RandomPerEpisode => rng.uniform_in_box(cfg.d, cfg.box_half_width / 2.0),
    };
    let mut s = None;
    for _ in 0..RESET_ATTEMPTS {
        let cand = rng.uniform_in_box(cfg.d, cfg.box_half_width);
        if cand.distance(&s_w) > cfg.theta {
            s = Some(cand);
            break;
        }
    }
    let s = s.ok_or_else(|| {
        Error::InvalidConfig("could not sample a start outside the theta-ball".into())
    })?;
    let state = EpisodeState {
        s,
        context,
        s_w,
        t: 0,
        done: false,
    };
    let obs = observe(cfg, &state);
    Ok((state, obs))
}

/// Observation of the current state under the configured kind.
pub fn observe(cfg: &EnvConfig, state: &EpisodeState) -> Vector {
    match cfg.observation {
        ObservationKind::Position => state.s.clone(),
        ObservationKind::Difference => state.s.sub(&state.s_w),
    }
}

/// Displacement toward the target as reconstructible from the observation
/// alone. The position kind relies on the fixed origin target; the
/// difference kind is the negated observation by construction.
pub fn delta_from_obs(cfg: &EnvConfig, obs: &Vector) -> Vector {
    match cfg.observation {
        ObservationKind::Position => obs.scale(-1.0),
        ObservationKind::Difference => obs.scale(-1.0),
    }
}

/// Advances the episode by one action. The landing point is clamped into the
/// position box before the reward is computed.
pub fn step(cfg: &EnvConfig, state: &mut EpisodeState, action: &Vector) -> Result<(Transition, Vector)> {
    if state.done {
        return Err(Error::EpisodeFinished);
    }
    let norm = action.norm();
    if norm > cfg.lambda + 1e-9 {
        return Err(Error::OversizedAction {
            norm,
            lambda: cfg.lambda,
        });
    }
    let prev_obs = observe(cfg, state);
    let prev_s = state.s.clone();
    let landed = apply(&cfg.distortion, &state.s, action, &state.context, &state.s_w)?
        .clamp_box(cfg.box_half_width);
    let reward = -landed.distance(&state.s_w);
    state.s = landed.clone();
    state.t += 1;
    state.done = -reward <= cfg.theta || state.t >= cfg.max_steps;
    let transition = Transition {
        obs: prev_obs,
        action: action.clone(),
        reward,
        done: state.done,
        latent_s: prev_s,
        latent_next_s: landed,
        augmented: false,
    };
    let next_obs = observe(cfg, state);
    Ok((transition, next_obs))
}

/// Baseline configuration used by the diagnostics and as the CLI default:
/// unit action ball, 0.05 target radius, fixed-origin target with position
/// observations.
pub fn default_config(kind: DistortionKind, d: usize) -> EnvConfig {
    EnvConfig {
        d,
        lambda: 1.0,
        theta: 0.05,
        max_steps: 100,
        gamma: 0.9,
        box_half_width: 1.0,
        observation: ObservationKind::Position,
        target_mode: TargetMode::FixedOrigin,
        distortion: DistortionSpec::new(kind, 1.0),
    }
}
