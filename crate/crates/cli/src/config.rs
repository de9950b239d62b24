//! Flat key=value job configuration.
//!
//! One file drives a whole run: environment, policy, shortcut extraction,
//! collection, and model parameters, addressed by dotted keys. Parsing
//! starts from the defaults and applies overrides, so files only need the
//! keys they change. `to_text` emits every key in a fixed order with
//! shortest round-trip float formatting, which makes the digest of two
//! equal configurations identical and the parse of a serialization lossless.

use lift_core::collect::CollectConfig;
use lift_core::distortion::DistortionKind;
use lift_core::env::{default_config, EnvConfig, ObservationKind, TargetMode};
use lift_core::knn::KnnQParams;
use lift_core::policy::{PolicyKind, PolicySpec};
use lift_core::shortcut::{SamplingStrategy, ShortcutConfig};
use lift_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub policy: PolicySpec,
    pub shortcut: ShortcutConfig,
    pub collect: CollectConfig,
    pub knn: KnnQParams,
}

impl Default for JobConfig {
    fn default() -> Self {
        let env = default_config(DistortionKind::Blend, 2);
        let shortcut = ShortcutConfig::new(env.gamma, env.lambda);
        JobConfig {
            seed: 1,
            env,
            policy: PolicySpec::new(PolicyKind::CoordinateWalk, 0.05),
            shortcut,
            collect: CollectConfig {
                p: 0.6,
                n_episodes: 100,
                cap_per_trajectory: 20,
                train_after: vec![50],
            },
            knn: KnnQParams::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| {
        Error::InvalidConfig(format!("key '{key}': cannot parse '{value}'"))
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| parse_num(key, part))
        .collect()
}

fn fmt_list(list: &[usize]) -> String {
    list.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl JobConfig {
    /// Applies one dotted-key override. The shortcut and distortion sections
    /// never own `gamma` or `lambda`; those mirror the environment and are
    /// synchronized in [`JobConfig::finalize`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "env.d" => self.env.d = parse_num(key, v)?,
            "env.lambda" => self.env.lambda = parse_num(key, v)?,
            "env.theta" => self.env.theta = parse_num(key, v)?,
            "env.max_steps" => self.env.max_steps = parse_num(key, v)?,
            "env.gamma" => self.env.gamma = parse_num(key, v)?,
            "env.box_half_width" => self.env.box_half_width = parse_num(key, v)?,
            "env.observation" => self.env.observation = ObservationKind::parse(v)?,
            "env.target_mode" => self.env.target_mode = TargetMode::parse(v)?,
            "env.distortion.kind" => self.env.distortion.kind = DistortionKind::parse(v)?,
            "env.distortion.sigma" => self.env.distortion.sigma = parse_num(key, v)?,
            "env.distortion.scale_floor" => {
                self.env.distortion.scale_floor = parse_num(key, v)?
            }
            "policy.kind" => self.policy.kind = PolicyKind::parse(v)?,
            "policy.l0" => self.policy.l0 = parse_num(key, v)?,
            "policy.sigma" => self.policy.sigma = parse_num(key, v)?,
            "shortcut.c" => self.shortcut.c = parse_num(key, v)?,
            "shortcut.strategy" => self.shortcut.strategy = SamplingStrategy::parse(v)?,
            "shortcut.max_per_trajectory" => {
                self.shortcut.max_per_trajectory = parse_num(key, v)?
            }
            "collect.p" => self.collect.p = parse_num(key, v)?,
            "collect.n_episodes" => self.collect.n_episodes = parse_num(key, v)?,
            "collect.cap_per_trajectory" => {
                self.collect.cap_per_trajectory = parse_num(key, v)?
            }
            "collect.train_after" => self.collect.train_after = parse_list(key, v)?,
            "knn.k" => self.knn.k = parse_num(key, v)?,
            "knn.m_candidates" => self.knn.m_candidates = parse_num(key, v)?,
            "knn.sweeps" => self.knn.sweeps = parse_num(key, v)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = JobConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            cfg.set(key.trim(), value).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        cfg.finalize()?;
        Ok(cfg)
    }

    /// Propagates the mirrored fields and validates everything.
    pub fn finalize(&mut self) -> Result<()> {
        self.env.distortion.lambda = self.env.lambda;
        self.shortcut.gamma = self.env.gamma;
        self.shortcut.lambda = self.env.lambda;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.policy.validate()?;
        self.shortcut.validate()?;
        self.collect.validate()?;
        self.knn.validate()?;
        Ok(())
    }

    /// Canonical serialization: every key, fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        push("seed", self.seed.to_string());
        push("env.d", self.env.d.to_string());
        push("env.lambda", self.env.lambda.to_string());
        push("env.theta", self.env.theta.to_string());
        push("env.max_steps", self.env.max_steps.to_string());
        push("env.gamma", self.env.gamma.to_string());
        push("env.box_half_width", self.env.box_half_width.to_string());
        push("env.observation", self.env.observation.name().to_string());
        push("env.target_mode", self.env.target_mode.name().to_string());
        push(
            "env.distortion.kind",
            self.env.distortion.kind.name().to_string(),
        );
        push("env.distortion.sigma", self.env.distortion.sigma.to_string());
        push(
            "env.distortion.scale_floor",
            self.env.distortion.scale_floor.to_string(),
        );
        push("policy.kind", self.policy.kind.name().to_string());
        push("policy.l0", self.policy.l0.to_string());
        push("policy.sigma", self.policy.sigma.to_string());
        push("shortcut.c", self.shortcut.c.to_string());
        push("shortcut.strategy", self.shortcut.strategy.name().to_string());
        push(
            "shortcut.max_per_trajectory",
            self.shortcut.max_per_trajectory.to_string(),
        );
        push("collect.p", self.collect.p.to_string());
        push("collect.n_episodes", self.collect.n_episodes.to_string());
        push(
            "collect.cap_per_trajectory",
            self.collect.cap_per_trajectory.to_string(),
        );
        push("collect.train_after", fmt_list(&self.collect.train_after));
        push("knn.k", self.knn.k.to_string());
        push("knn.m_candidates", self.knn.m_candidates.to_string());
        push("knn.sweeps", self.knn.sweeps.to_string());
        out
    }

    /// FNV-1a hash of the canonical serialization, hex with a scheme prefix.
    pub fn digest(&self) -> String {
        fnv1a(self.to_text().bytes())
    }

    /// Digest restricted to the keys that shape collected data: seed, env,
    /// policy, collect. Shortcut and model knobs stay out so they can be
    /// swept over a fixed dataset without tripping provenance checks.
    pub fn data_digest(&self) -> String {
        let lines = self
            .to_text()
            .lines()
            .filter(|l| {
                l.starts_with("seed")
                    || l.starts_with("env.")
                    || l.starts_with("policy.")
                    || l.starts_with("collect.")
            })
            .fold(String::new(), |mut acc, l| {
                acc.push_str(l);
                acc.push('\n');
                acc
            });
        fnv1a(lines.bytes())
    }
}

fn fnv1a(bytes: impl Iterator<Item = u8>) -> String {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut hash = OFFSET;
    for byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    format!("fnv1a:{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_round_trips_exactly() {
        let mut cfg = JobConfig::default();
        cfg.set("env.gamma", "0.95").unwrap();
        cfg.set("env.theta", "0.0333333333333333314829616256247").unwrap();
        cfg.set("env.distortion.kind", "sin").unwrap();
        cfg.set("env.distortion.sigma", "0.30000000000000004").unwrap();
        cfg.set("collect.train_after", "10,20,40").unwrap();
        cfg.finalize().unwrap();
        let text = cfg.to_text();
        let back = JobConfig::from_text(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn digest_changes_with_any_key() {
        let base = JobConfig::default();
        let mut other = base.clone();
        other.set("knn.k", "9").unwrap();
        assert_ne!(base.digest(), other.digest());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected_with_line_numbers() {
        let err = JobConfig::from_text("seed = 4\nnope.key = 1\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("unknown key"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = JobConfig::from_text("env.gamma = high\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let cfg = JobConfig::from_text("# a comment\n\nseed = 9\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn mirrored_fields_follow_the_environment() {
        let cfg = JobConfig::from_text("env.lambda = 2\nenv.theta = 0.1\nenv.gamma = 0.8\n")
            .unwrap();
        assert_eq!(cfg.env.distortion.lambda, 2.0);
        assert_eq!(cfg.shortcut.lambda, 2.0);
        assert_eq!(cfg.shortcut.gamma, 0.8);
    }

    #[test]
    fn invalid_combinations_fail_finalize() {
        // theta above lambda
        let err = JobConfig::from_text("env.theta = 3\n").unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");
        // empty train_after is fine
        let cfg = JobConfig::from_text("collect.train_after =\n").unwrap();
        assert!(cfg.collect.train_after.is_empty());
    }
}
