//! Nearest-neighbor fitted-Q stand-in for a learned augmentor.
//!
//! Training pairs are (observation, action) features with scalar value
//! targets. Features are standardized per coordinate by the dataset standard
//! deviation. Targets start at r + gamma * (mean return-to-go of the states
//! nearest the landing observation) and are optionally refined by fitted
//! sweeps that bootstrap through a candidate-action maximum. Shortcut tuples
//! enter training exactly like real transitions, which is how multi-step
//! jumps obtain higher value targets than their single-step alternatives.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collect::Augmentor;
use crate::env::{EpisodeState, Trajectory};
use crate::error::{Error, Result};
use crate::math::Vector;
use crate::rng::RngStream;
use crate::shortcut::{returns, shortcut_tuples, ShortcutConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnQParams {
    /// Neighbors averaged per query.
    pub k: usize,
    /// Candidate actions per suggestion and per sweep bootstrap.
    pub m_candidates: usize,
    /// Fitted refinement sweeps after target initialization.
    pub sweeps: usize,
}

impl Default for KnnQParams {
    fn default() -> Self {
        KnnQParams {
            k: 8,
            m_candidates: 64,
            sweeps: 1,
        }
    }
}

impl KnnQParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "need at least one neighbor".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    /// Standardized concat(observation, action).
    pub feature: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnQModel {
    pub version: u32,
    pub k: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Per-coordinate standardization divisors, length obs_dim + act_dim.
    pub scale: Vec<f64>,
    pub pairs: Vec<TrainingPair>,
}

/// Mean value of the k nearest points, with points and values supplied by
/// index so callers avoid materializing feature copies. Distance ties break
/// toward the lower index, so queries are reproducible independent of
/// pivoting internals.
fn knn_mean_by<'a>(
    n: usize,
    point: impl Fn(usize) -> &'a [f64],
    value: impl Fn(usize) -> f64,
    query: &[f64],
    k: usize,
) -> f64 {
    let mut scored: Vec<(f64, usize)> = (0..n)
        .map(|idx| {
            let d2: f64 = point(idx)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, idx)
        })
        .collect();
    let k = k.min(scored.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
    }
    let head = &mut scored[..k];
    head.sort_unstable_by(cmp);
    head.iter().map(|(_, idx)| value(*idx)).sum::<f64>() / k as f64
}

fn knn_mean(points: &[Vec<f64>], values: &[f64], query: &[f64], k: usize) -> f64 {
    debug_assert_eq!(points.len(), values.len());
    knn_mean_by(points.len(), |i| &points[i], |i| values[i], query, k)
}

fn standardize(raw: &[f64], scale: &[f64]) -> Vec<f64> {
    raw.iter().zip(scale).map(|(x, s)| x / s).collect()
}

impl KnnQModel {
    /// Value estimate for an (observation, action) query.
    pub fn q_value(&self, obs: &Vector, action: &Vector) -> Result<f64> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if obs.dim() != self.obs_dim || action.dim() != self.act_dim {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim + self.act_dim,
                got: obs.dim() + action.dim(),
            });
        }
        let mut raw = Vec::with_capacity(self.obs_dim + self.act_dim);
        raw.extend_from_slice(obs.as_slice());
        raw.extend_from_slice(action.as_slice());
        let query = standardize(&raw, &self.scale);
        Ok(knn_mean_by(
            self.pairs.len(),
            |i| self.pairs[i].feature.as_slice(),
            |i| self.pairs[i].target,
            &query,
            self.k,
        ))
    }

    /// Best of `m` ball-sampled candidates plus the logged action; ties keep
    /// the logged action.
    pub fn suggest(
        &self,
        obs: &Vector,
        logged: &Vector,
        m: usize,
        rng: &mut RngStream,
    ) -> Result<Vector> {
        let mut best = logged.clone();
        let mut best_q = self.q_value(obs, logged)?;
        for _ in 0..m {
            let cand = rng.uniform_in_ball(self.act_dim, self.lambda);
            let q = self.q_value(obs, &cand)?;
            if q > best_q {
                best_q = q;
                best = cand;
            }
        }
        Ok(best)
    }
}

struct TrainRecord {
    feature_raw: Vec<f64>,
    reward: f64,
    next_obs_raw: Vec<f64>,
    terminal: bool,
}

fn concat(a: &Vector, b: &Vector) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.dim() + b.dim());
    out.extend_from_slice(a.as_slice());
    out.extend_from_slice(b.as_slice());
    out
}

/// Fits a model on logged transitions plus extracted shortcut tuples.
/// Deterministic given the stream: tuple extraction and candidate draws all
/// run on labeled children.
pub fn train_knn_q(
    data: &[Trajectory],
    shortcut_cfg: &ShortcutConfig,
    params: &KnnQParams,
    rng: &RngStream,
) -> Result<KnnQModel> {
    params.validate()?;
    shortcut_cfg.validate()?;
    if data.iter().all(|t| t.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let first = data
        .iter()
        .find(|t| !t.is_empty())
        .expect("non-empty trajectory exists");
    let obs_dim = first.transitions[0].obs.dim();
    let act_dim = first.transitions[0].action.dim();
    let gamma = shortcut_cfg.gamma;

    let mut records: Vec<TrainRecord> = Vec::new();
    let mut state_points_raw: Vec<Vec<f64>> = Vec::new();
    let mut state_values: Vec<f64> = Vec::new();
    let tuple_base = rng.child("tuples");
    for (t_idx, traj) in data.iter().enumerate() {
        if traj.is_empty() {
            continue;
        }
        let g = returns(traj, gamma);
        for (t, tr) in traj.transitions.iter().enumerate() {
            state_points_raw.push(tr.obs.as_slice().to_vec());
            state_values.push(g[t]);
            // both observation kinds are translations of the latent position,
            // so the landing observation is obs + (s' - s)
            let next_obs = tr.obs.add(&tr.latent_next_s.sub(&tr.latent_s));
            records.push(TrainRecord {
                feature_raw: concat(&tr.obs, &tr.action),
                reward: tr.reward,
                next_obs_raw: next_obs.as_slice().to_vec(),
                terminal: tr.done,
            });
        }
        let mut tuple_rng = tuple_base.child_index(t_idx as u64);
        for tuple in shortcut_tuples(traj, shortcut_cfg, &mut tuple_rng)? {
            records.push(TrainRecord {
                feature_raw: concat(&tuple.o_i, &tuple.a_hat),
                reward: tuple.r,
                // landing states of shortcuts are interior, never terminal
                next_obs_raw: tuple.o_j.as_slice().to_vec(),
                terminal: false,
            });
        }
    }

    let feat_dim = obs_dim + act_dim;
    let mut scale = vec![0.0; feat_dim];
    let n = records.len() as f64;
    let mut means = vec![0.0; feat_dim];
    for rec in &records {
        for (m, x) in means.iter_mut().zip(&rec.feature_raw) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    for rec in &records {
        for c in 0..feat_dim {
            let dx = rec.feature_raw[c] - means[c];
            scale[c] += dx * dx;
        }
    }
    for s in &mut scale {
        *s = (*s / n).sqrt().max(1e-9);
    }
    let obs_scale = &scale[..obs_dim];

    let state_points: Vec<Vec<f64>> = state_points_raw
        .iter()
        .map(|p| standardize(p, obs_scale))
        .collect();
    let features: Vec<Vec<f64>> = records
        .iter()
        .map(|r| standardize(&r.feature_raw, &scale))
        .collect();
    let next_obs_scaled: Vec<Vec<f64>> = records
        .iter()
        .map(|r| standardize(&r.next_obs_raw, obs_scale))
        .collect();

    // initialization: bootstrap through the state-value neighbors
    let mut targets: Vec<f64> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            if rec.terminal {
                rec.reward
            } else {
                let v = knn_mean(&state_points, &state_values, &next_obs_scaled[i], params.k);
                rec.reward + gamma * v
            }
        })
        .collect();

    let sweep_base = rng.child("sweep");
    for sweep in 0..params.sweeps {
        let stream = sweep_base.child_index(sweep as u64);
        let current = targets;
        targets = records
            .par_iter()
            .enumerate()
            .map(|(i, rec)| {
                if rec.terminal || params.m_candidates == 0 {
                    return if rec.terminal {
                        rec.reward
                    } else {
                        current[i]
                    };
                }
                let mut cand_rng = stream.child_index(i as u64);
                let mut best = f64::NEG_INFINITY;
                for _ in 0..params.m_candidates {
                    let a = cand_rng.uniform_in_ball(act_dim, shortcut_cfg.lambda);
                    let mut q_raw = rec.next_obs_raw.clone();
                    q_raw.extend_from_slice(a.as_slice());
                    let q = knn_mean(&features, &current, &standardize(&q_raw, &scale), params.k);
                    if q > best {
                        best = q;
                    }
                }
                rec.reward + gamma * best
            })
            .collect();
    }

    Ok(KnnQModel {
        version: MODEL_FORMAT_VERSION,
        k: params.k,
        gamma,
        lambda: shortcut_cfg.lambda,
        obs_dim,
        act_dim,
        scale,
        pairs: features
            .into_iter()
            .zip(targets)
            .map(|(feature, target)| TrainingPair { feature, target })
            .collect(),
    })
}

/// Augmentor backed by the nearest-neighbor model. Untrained it always
/// defers to the logged action.
pub struct KnnQAugmentor {
    pub params: KnnQParams,
    pub model: Option<KnnQModel>,
}

impl KnnQAugmentor {
    pub fn new(params: KnnQParams) -> Self {
        KnnQAugmentor {
            params,
            model: None,
        }
    }
}

impl Augmentor for KnnQAugmentor {
    fn is_trained(&self) -> bool {
        self.model.is_some()
    }

    fn suggest(&self, obs: &Vector, logged: &Vector, rng: &mut RngStream) -> Result<Vector> {
        match &self.model {
            None => Ok(logged.clone()),
            Some(model) => model.suggest(obs, logged, self.params.m_candidates, rng),
        }
    }

    fn suggest_with_state(
        &self,
        _state: &EpisodeState,
        obs: &Vector,
        logged: &Vector,
        rng: &mut RngStream,
    ) -> Result<Vector> {
        self.suggest(obs, logged, rng)
    }

    fn train(
        &mut self,
        data: &[Trajectory],
        shortcut_cfg: &ShortcutConfig,
        rng: &mut RngStream,
    ) -> Result<()> {
        self.model = Some(train_knn_q(data, shortcut_cfg, &self.params, rng)?);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::Context;
    use crate::env::Transition;

    fn one_step_trajectory(offset: f64) -> Trajectory {
        // a single step that lands exactly on the target
        let start = Vector::new(vec![offset, 0.3]).unwrap();
        Trajectory {
            episode: 0,
            context: Context::Empty,
            target: Vector::zeros(2),
            transitions: vec![Transition {
                obs: start.clone(),
                action: start.scale(-1.0),
                reward: 0.0,
                done: true,
                latent_s: start,
                latent_next_s: Vector::zeros(2),
                augmented: false,
            }],
        }
    }

    fn line_trajectory(rewards: &[f64], step: f64) -> Trajectory {
        let n = rewards.len();
        let transitions = (0..n)
            .map(|t| Transition {
                obs: Vector::new(vec![t as f64, 0.0]).unwrap(),
                action: Vector::new(vec![step, 0.0]).unwrap(),
                reward: rewards[t],
                done: t == n - 1,
                latent_s: Vector::new(vec![t as f64, 0.0]).unwrap(),
                latent_next_s: Vector::new(vec![t as f64 + 1.0, 0.0]).unwrap(),
                augmented: false,
            })
            .collect();
        Trajectory {
            episode: 0,
            context: Context::Empty,
            target: Vector::zeros(2),
            transitions,
        }
    }

    fn base_cfg() -> ShortcutConfig {
        ShortcutConfig::new(0.9, 10.0)
    }

    #[test]
    fn terminal_goal_transitions_pin_value_near_zero() {
        let data: Vec<Trajectory> = (0..12)
            .map(|i| one_step_trajectory(0.2 + 0.05 * i as f64))
            .collect();
        let params = KnnQParams {
            k: 3,
            m_candidates: 0,
            sweeps: 0,
        };
        let model = train_knn_q(&data, &base_cfg(), &params, &RngStream::new(1)).unwrap();
        for traj in &data {
            let tr = &traj.transitions[0];
            let q = model.q_value(&tr.obs, &tr.action).unwrap();
            assert!(q.abs() < 1e-9, "terminal targets bootstrap zero, got {q}");
        }
    }

    #[test]
    fn shortcut_tuples_earn_higher_value_than_logged_steps() {
        // a slow straight detour: the accumulated jump from step 0 lands one
        // step before the goal and must be valued above the logged crawl
        let data = vec![line_trajectory(&[-1.0, -1.0, -1.0, -1.0, 0.0], 0.5)];
        let params = KnnQParams {
            k: 1,
            m_candidates: 0,
            sweeps: 0,
        };
        let mut cfg = base_cfg();
        cfg.strategy = crate::shortcut::SamplingStrategy::Best;
        cfg.max_per_trajectory = 50;
        let model = train_knn_q(&data, &cfg, &params, &RngStream::new(4)).unwrap();
        let o0 = &data[0].transitions[0].obs;
        let logged = &data[0].transitions[0].action;
        let q_logged = model.q_value(o0, logged).unwrap();
        let jump = Vector::new(vec![2.0, 0.0]).unwrap();
        let q_jump = model.q_value(o0, &jump).unwrap();
        assert!(
            q_jump > q_logged + 0.5,
            "jump {q_jump} must beat crawl {q_logged}"
        );
    }

    #[test]
    fn suggestion_concentrates_on_planted_optimum_as_m_grows() {
        // plant a model whose value peaks in a small region around a*
        let a_star = vec![0.6, 0.0];
        let mut pairs = Vec::new();
        let mut grid = RngStream::new(9);
        for _ in 0..200 {
            let a = grid.uniform_in_ball(2, 1.0);
            let near = (a[0] - a_star[0]).hypot(a[1] - a_star[1]) < 0.25;
            pairs.push(TrainingPair {
                feature: vec![0.0, 0.0, a[0], a[1]],
                target: if near { 0.0 } else { -10.0 },
            });
        }
        let model = KnnQModel {
            version: MODEL_FORMAT_VERSION,
            k: 1,
            gamma: 0.9,
            lambda: 1.0,
            obs_dim: 2,
            act_dim: 2,
            scale: vec![1.0; 4],
            pairs,
        };
        let obs = Vector::zeros(2);
        let logged = Vector::new(vec![-0.9, 0.0]).unwrap();
        let hit_rate = |m: usize| {
            let mut hits = 0;
            for seed in 0..60u64 {
                let mut rng = RngStream::new(seed).child("suggest");
                let s = model.suggest(&obs, &logged, m, &mut rng).unwrap();
                if (s[0] - a_star[0]).hypot(s[1] - a_star[1]) < 0.3 {
                    hits += 1;
                }
            }
            hits as f64 / 60.0
        };
        let low = hit_rate(4);
        let high = hit_rate(128);
        assert!(high > low, "more candidates must find the peak more often");
        assert!(high > 0.9, "128 candidates nearly always land in the peak");
    }

    #[test]
    fn zero_candidates_keep_logged_action() {
        let data = vec![line_trajectory(&[-1.0, 0.0], 0.1)];
        let params = KnnQParams {
            k: 1,
            m_candidates: 0,
            sweeps: 0,
        };
        let model = train_knn_q(&data, &base_cfg(), &params, &RngStream::new(2)).unwrap();
        let logged = Vector::new(vec![0.3, -0.2]).unwrap();
        let got = model
            .suggest(&Vector::zeros(2), &logged, 0, &mut RngStream::new(5))
            .unwrap();
        assert_eq!(got, logged);
    }

    #[test]
    fn untrained_augmentor_defers() {
        let aug = KnnQAugmentor::new(KnnQParams::default());
        assert!(!aug.is_trained());
        let logged = Vector::new(vec![0.1, 0.2]).unwrap();
        let got = aug
            .suggest(&Vector::zeros(2), &logged, &mut RngStream::new(0))
            .unwrap();
        assert_eq!(got, logged);
    }

    #[test]
    fn training_is_deterministic() {
        let data = vec![
            line_trajectory(&[-2.0, -1.0, -0.5, 0.0], 0.25),
            line_trajectory(&[-1.5, -1.0, 0.0], 0.25),
        ];
        let params = KnnQParams {
            k: 2,
            m_candidates: 16,
            sweeps: 2,
        };
        let a = train_knn_q(&data, &base_cfg(), &params, &RngStream::new(3)).unwrap();
        let b = train_knn_q(&data, &base_cfg(), &params, &RngStream::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let err = train_knn_q(&[], &base_cfg(), &KnnQParams::default(), &RngStream::new(0));
        assert!(matches!(err, Err(Error::EmptyDataset)));
    }
}
