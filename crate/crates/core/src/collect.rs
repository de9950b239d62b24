//! Online collection with in-stream action overrides.
//!
//! Each step the logging policy proposes an action; with probability p a
//! trained augmentor may replace it. Only real environment transitions enter
//! the dataset, with a flag on the overridden ones. After an override the
//! logging policy is reset so its internal plan restarts from the state the
//! override produced. The augmentor retrains on the data collected so far
//! whenever the episode count hits a training checkpoint.

use serde::{Deserialize, Serialize};

use crate::env::{delta_from_obs, reset, step, EnvConfig, EpisodeState, Trajectory};
use crate::error::{Error, Result};
use crate::math::{clip_ball, Vector};
use crate::policy::{Policy, PolicySpec};
use crate::rng::RngStream;
use crate::shortcut::ShortcutConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    /// Override probability per step.
    pub p: f64,
    /// Number of episodes to collect.
    pub n_episodes: usize,
    /// Cap on overrides within one episode.
    pub cap_per_trajectory: usize,
    /// Episode counts after which the augmentor retrains. Strictly
    /// increasing, each below n_episodes.
    pub train_after: Vec<usize>,
}

impl CollectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidConfig(format!(
                "override probability must lie in [0, 1], got {}",
                self.p
            )));
        }
        if self.n_episodes == 0 {
            return Err(Error::InvalidConfig("n_episodes must be positive".into()));
        }
        for w in self.train_after.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidConfig(
                    "train_after entries must be strictly increasing".into(),
                ));
            }
        }
        // checkpoints at or past n_episodes are legal and never fire
        if self.train_after.first() == Some(&0) {
            return Err(Error::InvalidConfig(
                "train_after entries must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Action-override model. Implementations read observations only; the
/// state-aware entry point exists for oracle augmentors that are explicitly
/// allowed to inspect the latent episode state.
pub trait Augmentor {
    fn is_trained(&self) -> bool;

    /// Proposes an action given the observation and the logged action the
    /// policy just produced. Untrained augmentors return the logged action.
    fn suggest(&self, obs: &Vector, logged: &Vector, rng: &mut RngStream) -> Result<Vector>;

    /// Oracle hook. The default ignores the latent state.
    fn suggest_with_state(
        &self,
        _state: &EpisodeState,
        obs: &Vector,
        logged: &Vector,
        rng: &mut RngStream,
    ) -> Result<Vector> {
        self.suggest(obs, logged, rng)
    }

    /// Retrains on everything collected so far.
    fn train(
        &mut self,
        data: &[Trajectory],
        shortcut_cfg: &ShortcutConfig,
        rng: &mut RngStream,
    ) -> Result<()>;
}

/// Augmentor that never overrides. Collection with it is plain logging.
pub struct NullAugmentor;

impl Augmentor for NullAugmentor {
    fn is_trained(&self) -> bool {
        false
    }

    fn suggest(&self, _obs: &Vector, logged: &Vector, _rng: &mut RngStream) -> Result<Vector> {
        Ok(logged.clone())
    }

    fn train(
        &mut self,
        _data: &[Trajectory],
        _shortcut_cfg: &ShortcutConfig,
        _rng: &mut RngStream,
    ) -> Result<()> {
        Ok(())
    }
}

/// Runs the override-collection loop for `cfg.n_episodes` episodes.
///
/// Stream layout per episode e: children "env", "policy", and "augment" of
/// episode stream e. The env and policy children are consumed exactly as in
/// a plain rollout, so runs with different augmentors (or p = 0) stay paired
/// on episode initializations.
pub fn collect(
    env_cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    augmentor: &mut dyn Augmentor,
    cfg: &CollectConfig,
    shortcut_cfg: &ShortcutConfig,
    rng: &RngStream,
) -> Result<Vec<Trajectory>> {
    env_cfg.validate()?;
    cfg.validate()?;
    shortcut_cfg.validate()?;
    let episode_base = rng.child("episode");
    let train_base = rng.child("train");
    let mut trajectories: Vec<Trajectory> = Vec::with_capacity(cfg.n_episodes);
    let mut policy = Policy::new(policy_spec, env_cfg.lambda, env_cfg.theta)?;
    for e in 0..cfg.n_episodes {
        let episode_rng = episode_base.child_index(e as u64);
        let mut env_rng = episode_rng.child("env");
        let mut policy_rng = episode_rng.child("policy");
        let mut augment_rng = episode_rng.child("augment");
        let (mut state, mut obs) = reset(env_cfg, &mut env_rng)?;
        policy.reset();
        let mut overrides = 0usize;
        let mut transitions = Vec::new();
        while !state.done {
            let delta = delta_from_obs(env_cfg, &obs);
            let logged = policy.act(&delta, &mut policy_rng)?;
            let mut action = logged.clone();
            let mut augmented = false;
            if cfg.p > 0.0 && augmentor.is_trained() && overrides < cfg.cap_per_trajectory {
                let u = augment_rng.next_f64();
                if u < cfg.p {
                    let suggestion =
                        augmentor.suggest_with_state(&state, &obs, &logged, &mut augment_rng)?;
                    let suggestion = clip_ball(&suggestion, env_cfg.lambda)?;
                    // an override only counts when the action actually changes
                    if suggestion != logged {
                        action = suggestion;
                        augmented = true;
                        overrides += 1;
                    }
                }
            }
            let (mut tr, next_obs) = step(env_cfg, &mut state, &action)?;
            tr.augmented = augmented;
            transitions.push(tr);
            if augmented {
                policy.reset();
            }
            obs = next_obs;
        }
        trajectories.push(Trajectory {
            episode: e,
            context: state.context,
            target: state.s_w,
            transitions,
        });
        let collected = e + 1;
        if let Some(checkpoint) = cfg.train_after.iter().position(|&c| c == collected) {
            let mut train_rng = train_base.child_index(checkpoint as u64);
            augmentor.train(&trajectories, shortcut_cfg, &mut train_rng)?;
        }
    }
    Ok(trajectories)
}
