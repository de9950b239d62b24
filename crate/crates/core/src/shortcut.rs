//! Shortcut tuple extraction from logged trajectories.
//!
//! A shortcut replaces the sub-trajectory between two visited states with the
//! accumulated action between them. A pair (i, j) qualifies when
//! gamma * G[j] - G[i] + r[j-1] >= C * (path length from i to j) and the
//! accumulated action still fits the action-norm bound. At C = 0 the
//! inequality is exactly the advantage-style shortcut condition; raising C
//! demands that the replaced path was long relative to the gain, which only
//! shrinks the candidate set.

use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::math::Vector;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Mass proportional to r - min r over the candidate set.
    Weighted,
    /// Mass proportional to the inverse landing distance.
    InverseDistance,
    Uniform,
    /// Highest landing reward, earliest index on ties.
    Best,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 4] = [
        SamplingStrategy::Weighted,
        SamplingStrategy::InverseDistance,
        SamplingStrategy::Uniform,
        SamplingStrategy::Best,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SamplingStrategy::Weighted => "weighted",
            SamplingStrategy::InverseDistance => "inverse_distance",
            SamplingStrategy::Uniform => "uniform",
            SamplingStrategy::Best => "best",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sampling strategy '{name}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutConfig {
    /// Path-length threshold C. Zero accepts every advantage-consistent pair.
    pub c: f64,
    pub strategy: SamplingStrategy,
    /// Cap on tuples drawn per trajectory.
    pub max_per_trajectory: usize,
    pub gamma: f64,
    /// Action-norm bound for accumulated actions.
    pub lambda: f64,
}

impl ShortcutConfig {
    pub fn new(gamma: f64, lambda: f64) -> Self {
        ShortcutConfig {
            c: 0.0,
            strategy: SamplingStrategy::Weighted,
            max_per_trajectory: 20,
            gamma,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !self.c.is_finite() {
            return Err(Error::InvalidConfig("threshold c must be finite".into()));
        }
        Ok(())
    }
}

/// One extracted shortcut: jump from the state observed at `i` to the state
/// observed at `j` with the accumulated action, rewarded by the logged
/// landing reward r[j-1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutTuple {
    pub i: usize,
    pub j: usize,
    pub o_i: Vector,
    pub a_hat: Vector,
    pub r: f64,
    pub o_j: Vector,
}

/// Discounted returns-to-go per step, by backward recursion.
pub fn returns(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let n = traj.len();
    let mut g = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        acc = traj.transitions[t].reward + gamma * acc;
        g[t] = acc;
    }
    g
}

fn candidates_with_returns(
    traj: &Trajectory,
    i: usize,
    g: &[f64],
    cfg: &ShortcutConfig,
) -> Vec<ShortcutTuple> {
    let n = traj.len() - 1;
    let d = traj.transitions[i].action.dim();
    let mut out = Vec::new();
    let mut a_hat = Vector::zeros(d);
    let mut path = 0.0;
    for j in (i + 1)..=n {
        let step = &traj.transitions[j - 1];
        a_hat = a_hat.add(&step.action);
        path += step.action.norm();
        let lhs = cfg.gamma * g[j] - g[i] + step.reward;
        if lhs >= cfg.c * path && a_hat.norm() <= cfg.lambda {
            out.push(ShortcutTuple {
                i,
                j,
                o_i: traj.transitions[i].obs.clone(),
                a_hat: a_hat.clone(),
                r: step.reward,
                o_j: traj.transitions[j].obs.clone(),
            });
        }
    }
    out
}

/// All qualifying shortcuts that start at step `i`. Single pass over the
/// suffix with running accumulated action and path length.
pub fn candidate_set(traj: &Trajectory, i: usize, cfg: &ShortcutConfig) -> Result<Vec<ShortcutTuple>> {
    cfg.validate()?;
    if traj.len() < 2 || i >= traj.len() - 1 {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: traj.len().saturating_sub(1),
        });
    }
    let g = returns(traj, cfg.gamma);
    Ok(candidates_with_returns(traj, i, &g, cfg))
}

/// Draws one tuple from a candidate set under the configured strategy.
/// Returns None on an empty set.
pub fn sample_shortcut(
    candidates: &[ShortcutTuple],
    strategy: SamplingStrategy,
    rng: &mut RngStream,
) -> Option<ShortcutTuple> {
    if candidates.is_empty() {
        return None;
    }
    let idx = match strategy {
        SamplingStrategy::Weighted => {
            let min_r = candidates.iter().map(|t| t.r).fold(f64::INFINITY, f64::min);
            let masses: Vec<f64> = candidates.iter().map(|t| t.r - min_r).collect();
            pick_by_mass(&masses, rng)
        }
        SamplingStrategy::InverseDistance => {
            let masses: Vec<f64> = candidates
                .iter()
                .map(|t| 1.0 / (-t.r).max(1e-9))
                .collect();
            pick_by_mass(&masses, rng)
        }
        SamplingStrategy::Uniform => {
            let u = rng.next_f64();
            ((u * candidates.len() as f64) as usize).min(candidates.len() - 1)
        }
        SamplingStrategy::Best => {
            let mut best = 0;
            for (k, t) in candidates.iter().enumerate() {
                if t.r > candidates[best].r {
                    best = k;
                }
            }
            best
        }
    };
    Some(candidates[idx].clone())
}

/// Mass-proportional pick; an all-zero mass vector degrades to uniform.
fn pick_by_mass(masses: &[f64], rng: &mut RngStream) -> usize {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        let u = rng.next_f64();
        return ((u * masses.len() as f64) as usize).min(masses.len() - 1);
    }
    let cut = rng.next_f64() * total;
    let mut acc = 0.0;
    for (k, m) in masses.iter().enumerate() {
        acc += m;
        if acc > cut {
            return k;
        }
    }
    masses.len() - 1
}

/// Extracts up to the per-trajectory cap of shortcut tuples: source indices
/// are visited in a random order without replacement, and one tuple is drawn
/// from each non-empty candidate set.
pub fn shortcut_tuples(
    traj: &Trajectory,
    cfg: &ShortcutConfig,
    rng: &mut RngStream,
) -> Result<Vec<ShortcutTuple>> {
    cfg.validate()?;
    if traj.len() < 2 || cfg.max_per_trajectory == 0 {
        return Ok(Vec::new());
    }
    let g = returns(traj, cfg.gamma);
    let mut order: Vec<usize> = (0..traj.len() - 1).collect();
    for k in (1..order.len()).rev() {
        let swap = (rng.next_u64() % (k as u64 + 1)) as usize;
        order.swap(k, swap);
    }
    let mut out = Vec::new();
    for i in order {
        if out.len() >= cfg.max_per_trajectory {
            break;
        }
        let cands = candidates_with_returns(traj, i, &g, cfg);
        if let Some(tuple) = sample_shortcut(&cands, cfg.strategy, rng) {
            out.push(tuple);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::Context;
    use crate::env::Transition;

    /// Double-loop discounted return, the independent oracle for the
    /// backward recursion.
    fn returns_oracle(rewards: &[f64], gamma: f64) -> Vec<f64> {
        (0..rewards.len())
            .map(|i| {
                rewards[i..]
                    .iter()
                    .enumerate()
                    .map(|(k, r)| gamma.powi(k as i32) * r)
                    .sum()
            })
            .collect()
    }

    /// Synthetic straight-line trajectory with prescribed rewards. Actions
    /// are unit steps along axis 0 scaled by `step`; observations walk along
    /// axis 1 so each index is distinguishable.
    fn synthetic(rewards: &[f64], step: f64) -> Trajectory {
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

    fn cfg(gamma: f64, lambda: f64) -> ShortcutConfig {
        ShortcutConfig::new(gamma, lambda)
    }

    #[test]
    fn backward_returns_match_double_loop_oracle() {
        let mut rng = RngStream::new(17);
        for _ in 0..50 {
            let len = 1 + (rng.next_u64() % 40) as usize;
            let rewards: Vec<f64> = (0..len).map(|_| -rng.next_f64() * 3.0).collect();
            let traj = synthetic(&rewards, 0.01);
            let got = returns(&traj, 0.97);
            let want = returns_oracle(&rewards, 0.97);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn four_step_example_returns_and_candidates() {
        // rewards (-1, -1, -1, 0) at gamma = 0.5; the oracle gives
        // G = (-1.75, -1.5, -1, 0) and every pair qualifies at C = 0
        let rewards = [-1.0, -1.0, -1.0, 0.0];
        let traj = synthetic(&rewards, 0.1);
        let g = returns(&traj, 0.5);
        let oracle = returns_oracle(&rewards, 0.5);
        assert_eq!(oracle, vec![-1.75, -1.5, -1.0, 0.0]);
        for (a, b) in g.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        let cfg = cfg(0.5, 10.0);
        let mut pairs = Vec::new();
        for i in 0..3 {
            for t in candidate_set(&traj, i, &cfg).unwrap() {
                pairs.push((t.i, t.j));
            }
        }
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        // adjacent pairs sit exactly on the threshold at C = 0
        for i in 0..3 {
            let lhs = 0.5 * g[i + 1] - g[i] + rewards[i];
            assert!(lhs.abs() < 1e-12);
        }
    }

    #[test]
    fn accumulated_action_is_exact_componentwise_sum() {
        let rewards = [-3.0, -2.0, -1.0, 0.0];
        let traj = synthetic(&rewards, 0.125);
        let cfg = cfg(0.9, 10.0);
        for t in candidate_set(&traj, 0, &cfg).unwrap() {
            let mut want = Vector::zeros(2);
            for k in 0..t.j {
                want = want.add(&traj.transitions[k].action);
            }
            assert_eq!(t.a_hat, want, "bitwise equality under fixed order");
        }
    }

    #[test]
    fn action_bound_filters_long_jumps() {
        let rewards = [-3.0, -2.0, -1.0, 0.0];
        // steps of 0.5 accumulate past a 1.2 bound after two steps; the
        // dyadic discount keeps the adjacent boundary case exactly at zero
        let traj = synthetic(&rewards, 0.5);
        let cfg = cfg(0.5, 1.2);
        let js: Vec<usize> = candidate_set(&traj, 0, &cfg)
            .unwrap()
            .into_iter()
            .map(|t| t.j)
            .collect();
        assert_eq!(js, vec![1, 2], "j = 3 needs norm 1.5 > 1.2");
    }

    #[test]
    fn out_of_range_source_is_rejected() {
        let traj = synthetic(&[-1.0, 0.0], 0.1);
        let cfg = cfg(0.9, 10.0);
        assert!(candidate_set(&traj, 1, &cfg).is_err());
        let single = synthetic(&[0.0], 0.1);
        assert!(candidate_set(&single, 0, &cfg).is_err());
        assert_eq!(
            shortcut_tuples(&single, &cfg, &mut RngStream::new(0)).unwrap(),
            Vec::new()
        );
    }

    #[test]
    fn weighted_sampling_skips_zero_mass() {
        let traj = synthetic(&[-2.0, -1.0, 0.0], 0.1);
        let base = candidate_set(&traj, 0, &cfg(0.9, 10.0)).unwrap();
        let two: Vec<ShortcutTuple> = base
            .iter()
            .filter(|t| t.j <= 2)
            .cloned()
            .collect();
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].r, -2.0);
        assert_eq!(two[1].r, -1.0);
        let mut rng = RngStream::new(5);
        for _ in 0..200 {
            let pick = sample_shortcut(&two, SamplingStrategy::Weighted, &mut rng).unwrap();
            assert_eq!(pick.j, 2, "zero-mass first candidate never drawn");
        }
    }

    #[test]
    fn best_breaks_ties_toward_earliest() {
        let mut tuples = Vec::new();
        for (j, r) in [(1usize, -3.0), (2, -1.0), (3, -1.0)] {
            tuples.push(ShortcutTuple {
                i: 0,
                j,
                o_i: Vector::zeros(1),
                a_hat: Vector::zeros(1),
                r,
                o_j: Vector::zeros(1),
            });
        }
        let mut rng = RngStream::new(1);
        let pick = sample_shortcut(&tuples, SamplingStrategy::Best, &mut rng).unwrap();
        assert_eq!(pick.j, 2);
    }

    #[test]
    fn equal_rewards_fall_back_to_uniform() {
        let traj = synthetic(&[-1.0, -1.0, -1.0], 0.1);
        let cands = candidate_set(&traj, 0, &cfg(0.99, 10.0)).unwrap();
        assert!(cands.len() > 1);
        let mut rng = RngStream::new(2);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            let pick = sample_shortcut(&cands, SamplingStrategy::Weighted, &mut rng).unwrap();
            seen.insert(pick.j);
        }
        assert!(seen.len() > 1, "degenerate masses must still mix");
    }

    #[test]
    fn threshold_is_monotone_in_c() {
        let mut rng = RngStream::new(33);
        for _ in 0..30 {
            let len = 3 + (rng.next_u64() % 20) as usize;
            let rewards: Vec<f64> = (0..len).map(|_| -rng.next_f64() * 2.0).collect();
            let traj = synthetic(&rewards, 0.05);
            let mut previous: Option<Vec<(usize, usize)>> = None;
            for c in [0.0, 0.1, 1.0, 10.0] {
                let mut cfg = cfg(0.99, 100.0);
                cfg.c = c;
                let mut pairs = Vec::new();
                for i in 0..traj.len() - 1 {
                    for t in candidate_set(&traj, i, &cfg).unwrap() {
                        pairs.push((t.i, t.j));
                    }
                }
                if let Some(prev) = &previous {
                    for p in &pairs {
                        assert!(prev.contains(p), "candidate sets must shrink as C grows");
                    }
                }
                previous = Some(pairs);
            }
        }
    }

    #[test]
    fn cap_and_distinct_sources_hold() {
        let rewards: Vec<f64> = (0..30).map(|t| -(30 - t) as f64 / 10.0).collect();
        let traj = synthetic(&rewards, 0.01);
        let mut cfg = cfg(0.99, 100.0);
        cfg.max_per_trajectory = 5;
        let mut rng = RngStream::new(3);
        let tuples = shortcut_tuples(&traj, &cfg, &mut rng).unwrap();
        assert_eq!(tuples.len(), 5);
        let mut sources: Vec<usize> = tuples.iter().map(|t| t.i).collect();
        sources.sort_unstable();
        sources.dedup();
        assert_eq!(sources.len(), 5, "source indices drawn without replacement");
    }

    #[test]
    fn extraction_is_deterministic_per_seed() {
        let rewards: Vec<f64> = (0..15).map(|t| -(15 - t) as f64 / 5.0).collect();
        let traj = synthetic(&rewards, 0.02);
        let cfg = cfg(0.99, 100.0);
        let a = shortcut_tuples(&traj, &cfg, &mut RngStream::new(7)).unwrap();
        let b = shortcut_tuples(&traj, &cfg, &mut RngStream::new(7)).unwrap();
        assert_eq!(a, b);
    }
}
