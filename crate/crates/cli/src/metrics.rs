//! Dataset-level evaluation metrics.

use std::collections::HashSet;

use lift_core::env::{EnvConfig, Trajectory};
use lift_core::shortcut::returns;

const OCCUPANCY_RESOLUTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub episodes: usize,
    /// Mean discounted return from the episode start.
    pub mean_return: f64,
    pub mean_length: f64,
    /// Fraction of episodes that entered the theta-ball.
    pub success_rate: f64,
    /// Fraction of position-box cells at resolution 0.1 that any latent
    /// state visited.
    pub occupancy: f64,
    /// Fraction of logged actions that were augmentor overrides.
    pub override_rate: f64,
    /// Final distances to target, one per episode, sorted ascending.
    pub final_distances: Vec<f64>,
}

impl EvalMetrics {
    /// Nearest-rank quantile of the final distances, q in [0, 1].
    pub fn final_distance_quantile(&self, q: f64) -> f64 {
        if self.final_distances.is_empty() {
            return f64::NAN;
        }
        let n = self.final_distances.len();
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.final_distances[rank - 1]
    }

    pub fn summary_lines(&self) -> Vec<String> {
        vec![
            format!("episodes = {}", self.episodes),
            format!("mean_return = {:.6}", self.mean_return),
            format!("mean_length = {:.6}", self.mean_length),
            format!("success_rate = {:.6}", self.success_rate),
            format!("occupancy = {:.6}", self.occupancy),
            format!("override_rate = {:.6}", self.override_rate),
            format!(
                "final_distance_p50 = {:.6}",
                self.final_distance_quantile(0.5)
            ),
            format!(
                "final_distance_p90 = {:.6}",
                self.final_distance_quantile(0.9)
            ),
        ]
    }
}

fn cell_of(coords: &[f64], half: f64) -> Vec<i64> {
    coords
        .iter()
        .map(|&x| {
            let clamped = x.clamp(-half, half);
            ((clamped + half) / OCCUPANCY_RESOLUTION).floor() as i64
        })
        .collect()
}

pub fn evaluate(trajs: &[Trajectory], cfg: &EnvConfig) -> EvalMetrics {
    let episodes = trajs.len();
    let mut total_return = 0.0;
    let mut total_length = 0usize;
    let mut successes = 0usize;
    let mut overrides = 0usize;
    let mut cells: HashSet<Vec<i64>> = HashSet::new();
    let mut final_distances = Vec::with_capacity(episodes);
    for traj in trajs {
        total_return += returns(traj, cfg.gamma).first().copied().unwrap_or(0.0);
        total_length += traj.len();
        if traj.reached_target(cfg.theta) {
            successes += 1;
        }
        for tr in &traj.transitions {
            if tr.augmented {
                overrides += 1;
            }
            cells.insert(cell_of(tr.latent_s.as_slice(), cfg.box_half_width));
            cells.insert(cell_of(tr.latent_next_s.as_slice(), cfg.box_half_width));
        }
        let final_distance = traj
            .transitions
            .last()
            .map(|tr| tr.latent_next_s.distance(&traj.target))
            .unwrap_or(f64::NAN);
        final_distances.push(final_distance);
    }
    final_distances.sort_by(f64::total_cmp);
    let cells_per_dim = (2.0 * cfg.box_half_width / OCCUPANCY_RESOLUTION).ceil();
    let total_cells = cells_per_dim.powi(cfg.d as i32);
    EvalMetrics {
        episodes,
        mean_return: total_return / episodes.max(1) as f64,
        mean_length: total_length as f64 / episodes.max(1) as f64,
        success_rate: successes as f64 / episodes.max(1) as f64,
        occupancy: cells.len() as f64 / total_cells,
        override_rate: overrides as f64 / total_length.max(1) as f64,
        final_distances,
    }
}

/// Per-episode CSV with a header; floats use shortest round-trip formatting
/// so records of the same dataset are byte-identical across runs.
pub fn to_csv(trajs: &[Trajectory], cfg: &EnvConfig) -> String {
    let mut out = String::from("episode,length,return,final_distance,reached,overrides\n");
    for traj in trajs {
        let ret = returns(traj, cfg.gamma).first().copied().unwrap_or(0.0);
        let final_distance = traj
            .transitions
            .last()
            .map(|tr| tr.latent_next_s.distance(&traj.target))
            .unwrap_or(f64::NAN);
        let overrides = traj.transitions.iter().filter(|t| t.augmented).count();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            traj.episode,
            traj.len(),
            ret,
            final_distance,
            traj.reached_target(cfg.theta),
            overrides
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use lift_core::distortion::{Context, DistortionKind};
    use lift_core::env::{default_config, Transition};
    use lift_core::math::Vector;

    fn two_step(target_hit: bool) -> Trajectory {
        let s0 = Vector::new(vec![0.5, 0.0]).unwrap();
        let s1 = Vector::new(vec![0.25, 0.0]).unwrap();
        let s2 = if target_hit {
            Vector::new(vec![0.01, 0.0]).unwrap()
        } else {
            Vector::new(vec![0.2, 0.0]).unwrap()
        };
        Trajectory {
            episode: 0,
            context: Context::Empty,
            target: Vector::zeros(2),
            transitions: vec![
                Transition {
                    obs: s0.clone(),
                    action: s1.sub(&s0),
                    reward: -s1.norm(),
                    done: false,
                    latent_s: s0,
                    latent_next_s: s1.clone(),
                    augmented: false,
                },
                Transition {
                    obs: s1.clone(),
                    action: s2.sub(&s1),
                    reward: -s2.norm(),
                    done: true,
                    latent_s: s1,
                    latent_next_s: s2,
                    augmented: true,
                },
            ],
        }
    }

    #[test]
    fn metrics_aggregate_returns_lengths_and_successes() {
        let cfg = default_config(DistortionKind::Identity, 2);
        let trajs = vec![two_step(true), two_step(false)];
        let m = evaluate(&trajs, &cfg);
        assert_eq!(m.episodes, 2);
        assert_eq!(m.mean_length, 2.0);
        assert_eq!(m.success_rate, 0.5);
        assert_eq!(m.override_rate, 0.5);
        let expect = (-0.25 + 0.9 * -0.01 - 0.25 + 0.9 * -0.2) / 2.0;
        assert!((m.mean_return - expect).abs() < 1e-12);
        assert_eq!(m.final_distances, vec![0.01, 0.2]);
        assert_eq!(m.final_distance_quantile(0.5), 0.01);
        assert_eq!(m.final_distance_quantile(1.0), 0.2);
    }

    #[test]
    fn occupancy_counts_distinct_cells() {
        let cfg = default_config(DistortionKind::Identity, 2);
        let trajs = vec![two_step(true)];
        let m = evaluate(&trajs, &cfg);
        // states 0.5, 0.25, 0.01 on the x axis: cells 15, 12, 10 at y-cell 10
        let total = 20.0f64.powi(2);
        assert!((m.occupancy - 3.0 / total).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_episode() {
        let cfg = default_config(DistortionKind::Identity, 2);
        let csv = to_csv(&vec![two_step(true), two_step(false)], &cfg);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("episode,"));
        assert!(lines[1].ends_with(",1"), "{}", lines[1]);
    }
}
