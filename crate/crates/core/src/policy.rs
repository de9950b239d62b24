//! Logging policies and action perturbations.
//!
//! Policies consume the displacement toward the target as reconstructed from
//! the observation; they never see the latent context. The coordinate walk is
//! the main data-collection policy: it sweeps the axes one at a time with a
//! fixed step, closes each axis with the exact residual, and halves its step
//! size after every full sweep down to a floor.

use serde::{Deserialize, Serialize};

use crate::env::{delta_from_obs, reset, step, EnvConfig, Trajectory};
use crate::error::{Error, Result};
use crate::math::{clip_ball, Vector};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    CoordinateWalk,
    Direct,
    NoisyCoordinateWalk,
    UniformRandom,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::CoordinateWalk => "coordinate_walk",
            PolicyKind::Direct => "direct",
            PolicyKind::NoisyCoordinateWalk => "noisy_coordinate_walk",
            PolicyKind::UniformRandom => "uniform_random",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [
            PolicyKind::CoordinateWalk,
            PolicyKind::Direct,
            PolicyKind::NoisyCoordinateWalk,
            PolicyKind::UniformRandom,
        ]
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown policy kind '{name}'")))
    }

    /// Kinds that never draw from the stream. Only these are admissible in
    /// value rollouts.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, PolicyKind::CoordinateWalk | PolicyKind::Direct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Initial walk step size. Ignored by the direct and uniform kinds.
    pub l0: f64,
    /// Noise scale of the noisy walk. Ignored elsewhere.
    pub sigma: f64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, l0: f64) -> Self {
        PolicySpec {
            kind,
            l0,
            sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let needs_step = matches!(
            self.kind,
            PolicyKind::CoordinateWalk | PolicyKind::NoisyCoordinateWalk
        );
        if needs_step && !(self.l0.is_finite() && self.l0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "l0",
                reason: format!("walk step size must be positive, got {}", self.l0),
            });
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must be non-negative, got {}", self.sigma),
            });
        }
        Ok(())
    }
}

/// Mutable walk state: current step size and current axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordWalkState {
    pub l: f64,
    pub axis: usize,
}

const WALK_REDUCTION: f64 = 0.5;

/// Instantiated policy. `reset` restores the initial walk state; collection
/// calls it after every overridden action so the walk re-plans from scratch.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    lambda: f64,
    l_min: f64,
    walk: CoordWalkState,
}

impl Policy {
    /// `theta` sets the step-size floor at theta / 4 so the walk can always
    /// outresolve the termination radius.
    pub fn new(spec: &PolicySpec, lambda: f64, theta: f64) -> Result<Self> {
        spec.validate()?;
        if !(lambda > 0.0 && theta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda/theta",
                reason: "must be positive".into(),
            });
        }
        Ok(Policy {
            spec: spec.clone(),
            lambda,
            l_min: theta / 4.0,
            walk: CoordWalkState {
                l: spec.l0,
                axis: 0,
            },
        })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn walk_state(&self) -> &CoordWalkState {
        &self.walk
    }

    pub fn reset(&mut self) {
        self.walk = CoordWalkState {
            l: self.spec.l0,
            axis: 0,
        };
    }

    /// One action for the displacement `delta` (target minus position).
    /// Every returned action lies in the lambda-ball.
    pub fn act(&mut self, delta: &Vector, rng: &mut RngStream) -> Result<Vector> {
        let d = delta.dim();
        let raw = match self.spec.kind {
            PolicyKind::CoordinateWalk => self.walk_action(delta),
            PolicyKind::Direct => delta.clone(),
            PolicyKind::NoisyCoordinateWalk => {
                let base = self.walk_action(delta);
                let noise: Vec<f64> = (0..d)
                    .map(|_| rng.normal_scaled(0.0, self.spec.sigma))
                    .collect();
                base.add(&Vector::new(noise)?)
            }
            PolicyKind::UniformRandom => rng.uniform_in_ball(d, self.lambda),
        };
        clip_ball(&raw, self.lambda)
    }

    fn walk_action(&mut self, delta: &Vector) -> Vector {
        let d = delta.dim();
        let axis = self.walk.axis;
        let gap = delta[axis];
        let step = if gap.abs() > self.walk.l {
            // fixed step, axis keeps the turn
            self.walk.l * gap.signum()
        } else {
            // exact residual closes the axis; move on
            self.walk.axis += 1;
            if self.walk.axis == d {
                self.walk.axis = 0;
                self.walk.l = (self.walk.l * WALK_REDUCTION).max(self.l_min);
            }
            gap
        };
        let mut coords = vec![0.0; d];
        coords[axis] = step;
        Vector::from_raw(coords)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    GaussianNoise,
    RandomScale,
    Uniform,
}

/// Baseline action perturbations. All outputs are clipped into the
/// lambda-ball.
pub fn perturb_action(
    a: &Vector,
    kind: PerturbKind,
    sigma: f64,
    lambda: f64,
    rng: &mut RngStream,
) -> Result<Vector> {
    let d = a.dim();
    let raw = match kind {
        PerturbKind::GaussianNoise => {
            let noise: Vec<f64> = (0..d).map(|_| rng.normal_scaled(0.0, sigma)).collect();
            a.add(&Vector::new(noise)?)
        }
        PerturbKind::RandomScale => {
            let eta = rng.normal_scaled(0.0, sigma);
            a.scale(2.0 * eta.exp())
        }
        PerturbKind::Uniform => rng.uniform_in_ball(d, lambda),
    };
    clip_ball(&raw, lambda)
}

/// Rolls one plain episode. The per-episode stream is split into an "env"
/// child (reset draws) and a "policy" child (policy draws) so that other
/// consumers of the same episode stream cannot desynchronize the episode.
pub fn rollout_episode(
    cfg: &EnvConfig,
    policy: &mut Policy,
    episode_rng: &RngStream,
) -> Result<Trajectory> {
    let mut env_rng = episode_rng.child("env");
    let mut policy_rng = episode_rng.child("policy");
    let (mut state, mut obs) = reset(cfg, &mut env_rng)?;
    policy.reset();
    let mut transitions = Vec::new();
    while !state.done {
        let delta = delta_from_obs(cfg, &obs);
        let action = policy.act(&delta, &mut policy_rng)?;
        let (tr, next_obs) = step(cfg, &mut state, &action)?;
        transitions.push(tr);
        obs = next_obs;
    }
    Ok(Trajectory {
        episode: 0,
        context: state.context,
        target: state.s_w,
        transitions,
    })
}

/// Mean steps-to-termination of the coordinate walk for each step size,
/// paired across step sizes by reusing the same per-episode streams.
pub fn expertness_curve(
    cfg: &EnvConfig,
    l0_values: &[f64],
    n_episodes: usize,
    rng: &RngStream,
) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if n_episodes == 0 {
        return Err(Error::InvalidParameter {
            name: "n_episodes",
            reason: "need at least one episode".into(),
        });
    }
    let base = rng.child("expertness");
    let mut curve = Vec::with_capacity(l0_values.len());
    for &l0 in l0_values {
        let spec = PolicySpec::new(PolicyKind::CoordinateWalk, l0);
        let mut total = 0usize;
        for e in 0..n_episodes {
            let mut policy = Policy::new(&spec, cfg.lambda, cfg.theta)?;
            let traj = rollout_episode(cfg, &mut policy, &base.child_index(e as u64))?;
            total += traj.len();
        }
        curve.push((l0, total as f64 / n_episodes as f64));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{DistortionKind, DistortionSpec};
    use crate::env::{observe, EpisodeState, ObservationKind, TargetMode};
    use crate::distortion::Context;

    fn env(kind: DistortionKind, d: usize) -> EnvConfig {
        EnvConfig {
            d,
            lambda: 1.0,
            theta: 0.05,
            max_steps: 100,
            gamma: 0.99,
            box_half_width: 1.0,
            observation: ObservationKind::Position,
            target_mode: TargetMode::FixedOrigin,
            distortion: DistortionSpec::new(kind, 1.0),
        }
    }

    #[test]
    fn walk_sweeps_axes_with_residual_steps() {
        // identity dynamics from (0,0) toward (0.375, 0.125) with step 0.25:
        // fixed step on axis 0, residual closes it, residual closes axis 1.
        // Dyadic coordinates keep every subtraction exact.
        let spec = PolicySpec::new(PolicyKind::CoordinateWalk, 0.25);
        let mut policy = Policy::new(&spec, 1.0, 0.05).unwrap();
        let mut rng = RngStream::new(0);
        let mut pos = Vector::zeros(2);
        let target = Vector::new(vec![0.375, 0.125]).unwrap();
        let mut actions = Vec::new();
        for _ in 0..3 {
            let delta = target.sub(&pos);
            let a = policy.act(&delta, &mut rng).unwrap();
            pos = pos.add(&a);
            actions.push(a);
        }
        assert_eq!(actions[0].as_slice(), &[0.25, 0.0]);
        assert_eq!(actions[1].as_slice(), &[0.125, 0.0]);
        assert_eq!(actions[2].as_slice(), &[0.0, 0.125]);
        assert_eq!(pos, target);
    }

    #[test]
    fn walk_step_halves_after_full_sweep_with_floor() {
        let spec = PolicySpec::new(PolicyKind::CoordinateWalk, 0.2);
        let mut policy = Policy::new(&spec, 1.0, 0.05).unwrap();
        let mut rng = RngStream::new(0);
        let tiny = Vector::new(vec![0.01, 0.01]).unwrap();
        for _ in 0..2 {
            let _ = policy.act(&tiny, &mut rng).unwrap();
        }
        assert_eq!(policy.walk_state().l, 0.1);
        for _ in 0..20 {
            let _ = policy.act(&tiny, &mut rng).unwrap();
        }
        assert_eq!(policy.walk_state().l, 0.05 / 4.0, "floor is theta / 4");
    }

    #[test]
    fn reset_restores_initial_walk_state() {
        let spec = PolicySpec::new(PolicyKind::CoordinateWalk, 0.2);
        let mut policy = Policy::new(&spec, 1.0, 0.05).unwrap();
        let mut rng = RngStream::new(0);
        let delta = Vector::new(vec![0.01, 0.5]).unwrap();
        for _ in 0..3 {
            let _ = policy.act(&delta, &mut rng).unwrap();
        }
        assert_ne!(policy.walk_state().axis, 0);
        policy.reset();
        assert_eq!(policy.walk_state(), &CoordWalkState { l: 0.2, axis: 0 });
    }

    #[test]
    fn direct_policy_clips_to_ball() {
        let spec = PolicySpec::new(PolicyKind::Direct, 0.0);
        let mut policy = Policy::new(&spec, 1.0, 0.05).unwrap();
        let mut rng = RngStream::new(0);
        let delta = Vector::new(vec![3.0, 4.0]).unwrap();
        let a = policy.act(&delta, &mut rng).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12);
        let small = Vector::new(vec![0.1, 0.0]).unwrap();
        assert_eq!(policy.act(&small, &mut rng).unwrap(), small);
    }

    #[test]
    fn all_kinds_respect_action_bound() {
        let mut rng = RngStream::new(8);
        let kinds = [
            PolicyKind::CoordinateWalk,
            PolicyKind::Direct,
            PolicyKind::NoisyCoordinateWalk,
            PolicyKind::UniformRandom,
        ];
        for kind in kinds {
            let spec = PolicySpec {
                kind,
                l0: 0.3,
                sigma: 0.5,
            };
            let mut policy = Policy::new(&spec, 0.7, 0.05).unwrap();
            for _ in 0..2_500 {
                let delta = rng.uniform_in_box(3, 2.0);
                let a = policy.act(&delta, &mut rng).unwrap();
                assert!(a.norm() <= 0.7 + 1e-12, "kind {}", kind.name());
            }
        }
    }

    #[test]
    fn walk_reaches_target_under_identity() {
        let cfg = env(DistortionKind::Identity, 3);
        let spec = PolicySpec::new(PolicyKind::CoordinateWalk, 0.1);
        for seed in 0..20 {
            let mut policy = Policy::new(&spec, cfg.lambda, cfg.theta).unwrap();
            let traj =
                rollout_episode(&cfg, &mut policy, &RngStream::new(seed).child_index(0)).unwrap();
            assert!(traj.reached_target(cfg.theta), "seed {seed}");
        }
    }

    #[test]
    fn walk_reaches_target_under_blend_mostly() {
        for d in [2usize, 5] {
            let mut cfg = env(DistortionKind::Blend, d);
            // higher dimensions need more sweeps of the axes
            cfg.max_steps = 100 * d;
            let l0 = if d == 2 { 0.05 } else { 0.1 };
            let spec = PolicySpec::new(PolicyKind::CoordinateWalk, l0);
            let n = 200;
            let root = RngStream::new(90);
            let mut reached = 0;
            for e in 0..n {
                let mut policy = Policy::new(&spec, cfg.lambda, cfg.theta).unwrap();
                let traj = rollout_episode(&cfg, &mut policy, &root.child_index(e)).unwrap();
                if traj.reached_target(cfg.theta) {
                    reached += 1;
                }
            }
            assert!(
                reached as f64 >= 0.95 * n as f64,
                "d={d}: reached {reached}/{n}"
            );
        }
    }

    #[test]
    fn perturbations_stay_in_ball() {
        let mut rng = RngStream::new(3);
        let a = Vector::new(vec![0.5, -0.3]).unwrap();
        for kind in [
            PerturbKind::GaussianNoise,
            PerturbKind::RandomScale,
            PerturbKind::Uniform,
        ] {
            for _ in 0..2_000 {
                let p = perturb_action(&a, kind, 0.4, 1.0, &mut rng).unwrap();
                assert!(p.norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn random_scale_doubles_on_zero_noise() {
        let mut rng = RngStream::new(3);
        let a = Vector::new(vec![0.1, 0.0]).unwrap();
        // sigma = 0 makes eta = 0, so the factor is exactly 2 exp(0) = 2
        let p = perturb_action(&a, PerturbKind::RandomScale, 0.0, 1.0, &mut rng).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rollout_is_reproducible() {
        let cfg = env(DistortionKind::Blend, 3);
        let spec = PolicySpec::new(PolicyKind::CoordinateWalk, 0.1);
        let run = |seed| {
            let mut policy = Policy::new(&spec, cfg.lambda, cfg.theta).unwrap();
            rollout_episode(&cfg, &mut policy, &RngStream::new(seed).child_index(4)).unwrap()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11).transitions, run(12).transitions);
    }

    #[test]
    fn expertness_is_paired_and_finite() {
        let mut cfg = env(DistortionKind::Identity, 2);
        cfg.max_steps = 400;
        let rng = RngStream::new(5);
        let curve = expertness_curve(&cfg, &[0.05, 0.1], 30, &rng).unwrap();
        assert_eq!(curve.len(), 2);
        for (_, steps) in &curve {
            assert!(*steps > 0.0 && steps.is_finite());
        }
    }

    #[test]
    fn value_delta_matches_latent_for_both_observation_kinds() {
        // delta reconstructed from the observation equals s_w - s
        for (obs_kind, target_mode) in [
            (ObservationKind::Position, TargetMode::FixedOrigin),
            (ObservationKind::Difference, TargetMode::RandomPerEpisode),
        ] {
            let mut cfg = env(DistortionKind::Identity, 2);
            cfg.observation = obs_kind;
            cfg.target_mode = target_mode;
            let state = EpisodeState {
                s: Vector::new(vec![0.4, -0.2]).unwrap(),
                context: Context::Empty,
                s_w: if target_mode == TargetMode::FixedOrigin {
                    Vector::zeros(2)
                } else {
                    Vector::new(vec![0.1, 0.3]).unwrap()
                },
                t: 0,
                done: false,
            };
            let obs = observe(&cfg, &state);
            let delta = delta_from_obs(&cfg, &obs);
            assert_eq!(delta, state.s_w.sub(&state.s));
        }
    }
}
