//! Executable checks for the value-theoretic claims behind shortcut
//! augmentation.
//!
//! Every check reports samples, violations, and a first counterexample
//! instead of panicking, so callers can assemble suites and print verdicts.
//! Values are computed by replaying a deterministic policy from snapshot
//! states; that makes identities like "logged return equals rollout value"
//! exact when the corpus is filtered to trajectories where they must hold
//! (stateless policy, target reached, no box clamping).

use rayon::prelude::*;

use crate::collect::{collect, Augmentor, CollectConfig};
use crate::distortion::{apply, lpe_constant, sample_context, DistortionSpec};
use crate::env::{step, EnvConfig, EpisodeState, Trajectory};
use crate::error::{Error, Result};
use crate::math::{clip_ball, Vector};
use crate::policy::{rollout_episode, Policy, PolicyKind, PolicySpec};
use crate::rng::RngStream;
use crate::shortcut::{returns, ShortcutConfig};

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    /// False when the check had nothing to say (no qualifying inputs).
    pub applicable: bool,
    pub samples: usize,
    pub violations: usize,
    pub first_counterexample: Option<String>,
    pub stats: Vec<(String, f64)>,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        CheckReport {
            name: name.to_string(),
            pass: true,
            applicable: true,
            samples: 0,
            violations: 0,
            first_counterexample: None,
            stats: Vec::new(),
        }
    }

    pub fn summary_line(&self) -> String {
        let verdict = if !self.applicable {
            "SKIP"
        } else if self.pass {
            "PASS"
        } else {
            "FAIL"
        };
        let mut line = format!(
            "{verdict} {} ({} samples, {} violations)",
            self.name, self.samples, self.violations
        );
        for (k, v) in &self.stats {
            line.push_str(&format!(" {k}={v:.6}"));
        }
        if let Some(ce) = &self.first_counterexample {
            line.push_str(&format!(" first: {ce}"));
        }
        line
    }
}

/// Discounted value of a snapshot state under a deterministic policy,
/// truncated at `horizon` steps. The step counter restarts at zero, so the
/// value does not depend on how deep into its episode the snapshot was taken.
pub fn value_of(
    cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    state: &EpisodeState,
    horizon: usize,
) -> Result<f64> {
    value_rollout(cfg, policy_spec, state, horizon).map(|(v, _)| v)
}

/// Like [`value_of`] but also reports whether the rollout entered the
/// theta-ball, i.e. whether the value is exact rather than truncated.
pub fn value_rollout(
    cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    state: &EpisodeState,
    horizon: usize,
) -> Result<(f64, bool)> {
    if !policy_spec.kind.is_deterministic() {
        return Err(Error::InvalidParameter {
            name: "policy",
            reason: format!(
                "value rollouts need a deterministic policy, got {}",
                policy_spec.kind.name()
            ),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be positive".into(),
        });
    }
    if state.distance_to_target() <= cfg.theta {
        return Ok((0.0, true));
    }
    let mut local_cfg = cfg.clone();
    local_cfg.max_steps = horizon;
    let mut fresh = state.clone();
    fresh.t = 0;
    fresh.done = false;
    let mut policy = Policy::new(policy_spec, cfg.lambda, cfg.theta)?;
    // deterministic kinds never draw, any stream works
    let mut unused_rng = RngStream::new(0);
    let mut value = 0.0;
    let mut discount = 1.0;
    let mut obs = crate::env::observe(&local_cfg, &fresh);
    while !fresh.done {
        let delta = crate::env::delta_from_obs(&local_cfg, &obs);
        let action = policy.act(&delta, &mut unused_rng)?;
        let (tr, next_obs) = step(&local_cfg, &mut fresh, &action)?;
        value += discount * tr.reward;
        discount *= cfg.gamma;
        obs = next_obs;
    }
    Ok((value, fresh.distance_to_target() <= cfg.theta))
}

/// Snapshot of the episode at transition index `i` of a logged trajectory.
pub fn state_at(traj: &Trajectory, i: usize) -> Result<EpisodeState> {
    let tr = traj
        .transitions
        .get(i)
        .ok_or(Error::IndexOutOfRange {
            index: i,
            len: traj.len(),
        })?;
    Ok(EpisodeState {
        s: tr.latent_s.clone(),
        context: traj.context.clone(),
        s_w: traj.target.clone(),
        t: 0,
        done: false,
    })
}

/// Whether every logged landing equals the unclamped dynamics output, bit for
/// bit. Clamped trajectories break replay identities and are filtered out of
/// the exactness checks.
pub fn is_clamp_free(spec: &DistortionSpec, traj: &Trajectory) -> Result<bool> {
    for tr in &traj.transitions {
        let raw = apply(spec, &tr.latent_s, &tr.action, &traj.context, &traj.target)?;
        if raw != tr.latent_next_s {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn is_distance_improving(traj: &Trajectory, tol: f64) -> bool {
    traj.transitions.iter().all(|tr| {
        tr.latent_next_s.distance(&traj.target) <= tr.latent_s.distance(&traj.target) + tol
    })
}

/// Counts steps that move away from the target by more than `tol`.
pub fn check_distance_improving(trajs: &[Trajectory], tol: f64) -> CheckReport {
    let mut report = CheckReport::new("distance_improving");
    let mut improving_trajs = 0usize;
    for (t_idx, traj) in trajs.iter().enumerate() {
        let mut clean = true;
        for (i, tr) in traj.transitions.iter().enumerate() {
            report.samples += 1;
            let before = tr.latent_s.distance(&traj.target);
            let after = tr.latent_next_s.distance(&traj.target);
            if after > before + tol {
                clean = false;
                report.violations += 1;
                report.first_counterexample.get_or_insert_with(|| {
                    format!("trajectory {t_idx} step {i}: {before:.6} -> {after:.6}")
                });
            }
        }
        if clean && !traj.is_empty() {
            improving_trajs += 1;
        }
    }
    report.applicable = report.samples > 0;
    report.pass = report.applicable && report.violations == 0;
    report.stats.push((
        "improving_fraction".into(),
        improving_trajs as f64 / trajs.len().max(1) as f64,
    ));
    report
}

/// Lower bound on returns of distance-improving trajectories:
/// (1 - gamma) * G_i + dist_i >= 0 at every index. Trajectories that are not
/// distance-improving are skipped, since the bound only holds for them.
pub fn check_lemma_lower_bound(trajs: &[Trajectory], gamma: f64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("lemma_lower_bound");
    let mut skipped = 0usize;
    let mut min_slack = f64::INFINITY;
    for (t_idx, traj) in trajs.iter().enumerate() {
        if traj.is_empty() {
            continue;
        }
        if !is_distance_improving(traj, 1e-12) {
            skipped += 1;
            continue;
        }
        let g = returns(traj, gamma);
        for (i, tr) in traj.transitions.iter().enumerate() {
            report.samples += 1;
            let dist = tr.latent_s.distance(&traj.target);
            let slack = (1.0 - gamma) * g[i] + dist;
            min_slack = min_slack.min(slack);
            if slack < -tol {
                report.violations += 1;
                report.first_counterexample.get_or_insert_with(|| {
                    format!("trajectory {t_idx} index {i}: (1-gamma)G={:.6} dist={dist:.6}", (1.0 - gamma) * g[i])
                });
            }
        }
    }
    report.applicable = report.samples > 0;
    report.pass = !report.applicable || report.violations == 0;
    if min_slack.is_finite() {
        report.stats.push(("min_slack".into(), min_slack));
    }
    report.stats.push(("skipped_non_improving".into(), skipped as f64));
    report
}

struct SegmentOutcome {
    checked: usize,
    violations: usize,
    skipped: usize,
    min_slack: f64,
    first: Option<String>,
}

/// Shared segment walker: jumps (i, j) with accumulated in-ball actions.
/// `premise` decides whether a segment must be a shortcut; qualifying
/// segments are executed and checked against the value definition:
/// gamma * V(f(s_i, a_hat)) - V(s_i) + r_hat >= -tol.
fn run_segment_check(
    cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    trajs: &[Trajectory],
    max_segments: usize,
    tol: f64,
    premise: impl Fn(&Trajectory, &[f64], usize, usize, f64) -> bool + Sync,
) -> Result<SegmentOutcome> {
    let horizon = cfg.max_steps;
    let per_traj: Vec<SegmentOutcome> = trajs
        .par_iter()
        .enumerate()
        .map(|(t_idx, traj)| -> Result<SegmentOutcome> {
            let mut out = SegmentOutcome {
                checked: 0,
                violations: 0,
                skipped: 0,
                min_slack: f64::INFINITY,
                first: None,
            };
            if traj.len() < 2 {
                return Ok(out);
            }
            let g = returns(traj, cfg.gamma);
            let mut values = vec![None; traj.len()];
            for i in 0..traj.len() - 1 {
                let state_i = state_at(traj, i)?;
                let mut a_hat = Vector::zeros(cfg.d);
                let mut path = 0.0;
                for j in i + 1..traj.len() {
                    a_hat = a_hat.add(&traj.transitions[j - 1].action);
                    path += traj.transitions[j - 1].action.norm();
                    if a_hat.norm() > cfg.lambda {
                        continue;
                    }
                    if !premise(traj, &g, i, j, path) {
                        continue;
                    }
                    let v_i = match values[i] {
                        Some(v) => v,
                        None => {
                            let (v, reached) =
                                value_rollout(cfg, policy_spec, &state_i, horizon)?;
                            if !reached {
                                out.skipped += 1;
                                continue;
                            }
                            values[i] = Some(v);
                            v
                        }
                    };
                    let landed = apply(
                        &cfg.distortion,
                        &state_i.s,
                        &a_hat,
                        &traj.context,
                        &traj.target,
                    )?
                    .clamp_box(cfg.box_half_width);
                    let r_hat = -landed.distance(&traj.target);
                    let mut state_j = state_i.clone();
                    state_j.s = landed;
                    let (v_j, reached_j) = value_rollout(cfg, policy_spec, &state_j, horizon)?;
                    if !reached_j {
                        out.skipped += 1;
                        continue;
                    }
                    out.checked += 1;
                    let slack = cfg.gamma * v_j - v_i + r_hat;
                    out.min_slack = out.min_slack.min(slack);
                    if slack < -tol {
                        out.violations += 1;
                        out.first.get_or_insert_with(|| {
                            format!("trajectory {t_idx} segment ({i},{j}): slack {slack:.3e}")
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = SegmentOutcome {
        checked: 0,
        violations: 0,
        skipped: 0,
        min_slack: f64::INFINITY,
        first: None,
    };
    for out in per_traj {
        if total.checked >= max_segments {
            break;
        }
        total.checked += out.checked;
        total.violations += out.violations;
        total.skipped += out.skipped;
        total.min_slack = total.min_slack.min(out.min_slack);
        if total.first.is_none() {
            total.first = out.first;
        }
    }
    Ok(total)
}

/// Every accumulated jump of a distance-improving trajectory must satisfy
/// the shortcut definition when values are exact. Corpus responsibility is
/// the caller's: stateless policy, reached target, clamp-free.
pub fn check_shortcut_definition(
    cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    trajs: &[Trajectory],
    max_segments: usize,
    tol: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("shortcut_definition");
    let out = run_segment_check(cfg, policy_spec, trajs, max_segments, tol, |_, _, _, _, _| true)?;
    report.samples = out.checked;
    report.violations = out.violations;
    report.first_counterexample = out.first;
    report.applicable = out.checked > 0;
    report.pass = report.applicable && out.violations == 0;
    if out.min_slack.is_finite() {
        report.stats.push(("min_slack".into(), out.min_slack));
    }
    report.stats.push(("skipped".into(), out.skipped as f64));
    Ok(report)
}

/// Return-gap sufficient condition: whenever
/// gamma*G_j - G_i - dist_j >= (gamma*L_V + 1) * L_f * path
/// holds on logged returns, the executed jump must be a shortcut. Segments
/// failing the premise are not counted. Kinds with unbounded path error are
/// inapplicable.
pub fn check_theorem_condition(
    cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    trajs: &[Trajectory],
    l_v: f64,
    max_segments: usize,
    tol: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("theorem_condition");
    let l_f = lpe_constant(&cfg.distortion, cfg.d);
    if !l_f.is_finite() {
        report.applicable = false;
        report.pass = true;
        return Ok(report);
    }
    let mut candidates = 0usize;
    let counted = std::sync::atomic::AtomicUsize::new(0);
    for traj in trajs {
        candidates += traj.len().saturating_sub(1);
    }
    let out = run_segment_check(
        cfg,
        policy_spec,
        trajs,
        max_segments,
        tol,
        |traj, g, i, j, path| {
            counted.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            let dist_j = traj.transitions[j - 1].latent_next_s.distance(&traj.target);
            cfg.gamma * g[j] - g[i] - dist_j >= (cfg.gamma * l_v + 1.0) * l_f * path
        },
    )?;
    report.samples = out.checked;
    report.violations = out.violations;
    report.first_counterexample = out.first;
    report.applicable = out.checked > 0;
    report.pass = !report.applicable || out.violations == 0;
    if out.min_slack.is_finite() {
        report.stats.push(("min_slack".into(), out.min_slack));
    }
    let probed = counted.load(std::sync::atomic::Ordering::Relaxed);
    if probed > 0 {
        report.stats.push((
            "premise_rate".into(),
            out.checked as f64 / probed as f64,
        ));
    }
    report.stats.push(("candidate_sources".into(), candidates as f64));
    Ok(report)
}

/// Accumulated-action replay for kinds whose landing is exactly linear in
/// the action: f(s_i, sum a_k) must reproduce the logged s_j.
pub fn check_linear_replay(
    spec: &DistortionSpec,
    trajs: &[Trajectory],
    tol: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("linear_replay");
    let mut max_err = 0.0f64;
    for (t_idx, traj) in trajs.iter().enumerate() {
        if traj.len() < 2 {
            continue;
        }
        for i in 0..traj.len() - 1 {
            let mut a_hat = Vector::zeros(traj.target.dim());
            for j in i + 1..traj.len() {
                a_hat = a_hat.add(&traj.transitions[j - 1].action);
                let landed = apply(
                    spec,
                    &traj.transitions[i].latent_s,
                    &a_hat,
                    &traj.context,
                    &traj.target,
                )?;
                let expect = &traj.transitions[j - 1].latent_next_s;
                let err = landed.distance(expect);
                max_err = max_err.max(err);
                report.samples += 1;
                if err > tol {
                    report.violations += 1;
                    report.first_counterexample.get_or_insert_with(|| {
                        format!("trajectory {t_idx} segment ({i},{j}): error {err:.3e}")
                    });
                }
            }
        }
    }
    report.applicable = report.samples > 0;
    report.pass = report.applicable && report.violations == 0;
    report.stats.push(("max_error".into(), max_err));
    Ok(report)
}

/// Ratio |V(x) - V(y)| / ||x - y|| over random same-context state pairs.
/// With `bound` given, pairs exceeding bound + tol count as violations.
pub fn check_lipschitz(
    cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    n_pairs: usize,
    horizon: usize,
    bound: Option<f64>,
    tol: f64,
    rng: &RngStream,
) -> Result<CheckReport> {
    cfg.validate()?;
    let mut report = CheckReport::new("lipschitz_bound");
    let outcomes: Vec<(f64, Option<String>)> = (0..n_pairs)
        .into_par_iter()
        .map(|p| -> Result<(f64, Option<String>)> {
            let mut stream = rng.child_index(p as u64);
            let context = sample_context(&cfg.distortion, cfg.d, &mut stream)?;
            let s_w = Vector::zeros(cfg.d);
            let x = stream.uniform_in_box(cfg.d, cfg.box_half_width);
            let y = stream.uniform_in_box(cfg.d, cfg.box_half_width);
            let gap = x.distance(&y);
            if gap < 1e-6 {
                return Ok((0.0, None));
            }
            let mk = |s: Vector| EpisodeState {
                s,
                context: context.clone(),
                s_w: s_w.clone(),
                t: 0,
                done: false,
            };
            let vx = value_of(cfg, policy_spec, &mk(x.clone()), horizon)?;
            let vy = value_of(cfg, policy_spec, &mk(y.clone()), horizon)?;
            let ratio = (vx - vy).abs() / gap;
            let detail = format!("pair {p}: |{vx:.4} - {vy:.4}| / {gap:.4} = {ratio:.4}");
            Ok((ratio, Some(detail)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_ratio = 0.0f64;
    for (ratio, detail) in outcomes {
        report.samples += 1;
        max_ratio = max_ratio.max(ratio);
        if let Some(b) = bound {
            if ratio > b + tol {
                report.violations += 1;
                if let Some(d) = detail {
                    report.first_counterexample.get_or_insert(d);
                }
            }
        }
    }
    report.applicable = report.samples > 0;
    report.pass = !report.applicable || report.violations == 0;
    report.stats.push(("max_ratio".into(), max_ratio));
    if let Some(b) = bound {
        report.stats.push(("bound".into(), b));
    }
    Ok(report)
}

/// How state pairs are drawn for the contraction probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// Both states uniform in the box.
    Random,
    /// States an epsilon apart on opposite sides of the first quadrant
    /// boundary; the region-dependent kinds disagree exactly here.
    BoundaryStraddle,
    /// Both states strictly inside one shared quadrant.
    WithinRegion,
}

impl PairMode {
    pub fn name(&self) -> &'static str {
        match self {
            PairMode::Random => "random",
            PairMode::BoundaryStraddle => "boundary_straddle",
            PairMode::WithinRegion => "within_region",
        }
    }
}

/// Probes ||f(x, a) - f(y, a)|| <= ||x - y|| + tol with a shared on-policy
/// action, using the unclamped dynamics. Region-switching kinds expand
/// across boundaries and are isometric within a region, which this check
/// makes observable.
pub fn check_contraction(
    cfg: &EnvConfig,
    n_pairs: usize,
    mode: PairMode,
    tol: f64,
    rng: &RngStream,
) -> Result<CheckReport> {
    cfg.validate()?;
    if cfg.d < 2 && mode != PairMode::Random {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "region pair modes need at least two dimensions".into(),
        });
    }
    let half = cfg.box_half_width;
    let spec = PolicySpec::new(PolicyKind::CoordinateWalk, 0.05 * cfg.lambda);
    let rows: Vec<(f64, Option<String>)> = (0..n_pairs)
        .into_par_iter()
        .map(|p| -> Result<(f64, Option<String>)> {
            let mut stream = rng.child_index(p as u64);
            let context = sample_context(&cfg.distortion, cfg.d, &mut stream)?;
            let (x, y, s_w) = match mode {
                PairMode::Random => {
                    let x = stream.uniform_in_box(cfg.d, half);
                    let y = stream.uniform_in_box(cfg.d, half);
                    (x, y, stream.uniform_in_box(cfg.d, half / 2.0))
                }
                PairMode::BoundaryStraddle => {
                    let eps = stream.uniform(1e-4, 1e-2);
                    let shared = stream.uniform_in_box(cfg.d, half * 0.9);
                    let mut xv = shared.as_slice().to_vec();
                    let mut yv = xv.clone();
                    xv[0] = eps;
                    yv[0] = -eps;
                    // target displaced along the first axis so the walk's
                    // first step is identical on both sides of the boundary
                    let sign = if stream.next_f64() < 0.5 { 1.0 } else { -1.0 };
                    let mut wv = vec![0.0; cfg.d];
                    wv[0] = sign * stream.uniform(0.2, 0.5) * half;
                    (
                        Vector::new(xv).expect("finite"),
                        Vector::new(yv).expect("finite"),
                        Vector::new(wv).expect("finite"),
                    )
                }
                PairMode::WithinRegion => {
                    let sx = if stream.next_f64() < 0.5 { 1.0 } else { -1.0 };
                    let sy = if stream.next_f64() < 0.5 { 1.0 } else { -1.0 };
                    let mut draw = |sign: f64| sign * stream.uniform(0.05, 0.95) * half;
                    let mut xv = vec![0.0; cfg.d];
                    let mut yv = vec![0.0; cfg.d];
                    xv[0] = draw(sx);
                    xv[1] = draw(sy);
                    yv[0] = draw(sx);
                    yv[1] = draw(sy);
                    for k in 2..cfg.d {
                        xv[k] = stream.uniform(-half, half);
                        yv[k] = stream.uniform(-half, half);
                    }
                    let mut wv = vec![0.0; cfg.d];
                    wv[0] = -sx * 0.5 * half;
                    (
                        Vector::new(xv).expect("finite"),
                        Vector::new(yv).expect("finite"),
                        Vector::new(wv).expect("finite"),
                    )
                }
            };
            let mut policy = Policy::new(&spec, cfg.lambda, cfg.theta)?;
            let mut unused = RngStream::new(0);
            let action = policy.act(&s_w.sub(&x), &mut unused)?;
            let fx = apply(&cfg.distortion, &x, &action, &context, &s_w)?;
            let fy = apply(&cfg.distortion, &y, &action, &context, &s_w)?;
            let before = x.distance(&y);
            let after = fx.distance(&fy);
            let excess = after - before;
            let detail = if excess > tol {
                Some(format!(
                    "pair {p}: gap {before:.6} grew to {after:.6} under shared action"
                ))
            } else {
                None
            };
            Ok((excess, detail))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = CheckReport::new(&format!("contraction_{}", mode.name()));
    let mut max_excess = f64::NEG_INFINITY;
    for (excess, detail) in rows {
        report.samples += 1;
        max_excess = max_excess.max(excess);
        if excess > tol {
            report.violations += 1;
            if report.first_counterexample.is_none() {
                report.first_counterexample = detail;
            }
        }
    }
    report.applicable = report.samples > 0;
    report.pass = !report.applicable || report.violations == 0;
    if max_excess.is_finite() {
        report.stats.push(("max_excess".into(), max_excess));
    }
    Ok(report)
}

/// Cheating augmentor used to validate the collection loop: it reads the
/// latent state and proposes the clipped straight-line action, but only when
/// that action strictly beats the logged one at its true landing distance.
pub struct OracleDirectAugmentor {
    pub cfg: EnvConfig,
    /// Minimum landing-distance improvement required to override.
    pub tol: f64,
}

impl Augmentor for OracleDirectAugmentor {
    fn is_trained(&self) -> bool {
        true
    }

    /// Without state access there is nothing oracular to do.
    fn suggest(&self, _obs: &Vector, logged: &Vector, _rng: &mut RngStream) -> Result<Vector> {
        Ok(logged.clone())
    }

    fn suggest_with_state(
        &self,
        state: &EpisodeState,
        _obs: &Vector,
        logged: &Vector,
        _rng: &mut RngStream,
    ) -> Result<Vector> {
        let cand = clip_ball(&state.s_w.sub(&state.s), self.cfg.lambda)?;
        let land = |a: &Vector| -> Result<f64> {
            let s = apply(&self.cfg.distortion, &state.s, a, &state.context, &state.s_w)?
                .clamp_box(self.cfg.box_half_width);
            Ok(s.distance(&state.s_w))
        };
        if land(&cand)? + self.tol < land(logged)? {
            Ok(cand)
        } else {
            Ok(logged.clone())
        }
    }

    fn train(
        &mut self,
        _data: &[Trajectory],
        _cfg: &ShortcutConfig,
        _rng: &mut RngStream,
    ) -> Result<()> {
        Ok(())
    }
}

/// Paired collection with and without oracle overrides on the same episode
/// streams. Reports the mean discounted return of both arms.
pub fn check_augmented_improvement(
    cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    n_episodes: usize,
    p: f64,
    rng: &RngStream,
) -> Result<CheckReport> {
    let shortcut_cfg = ShortcutConfig::new(cfg.gamma, cfg.lambda);
    let collect_cfg = |p: f64| CollectConfig {
        p,
        n_episodes,
        cap_per_trajectory: 20,
        train_after: Vec::new(),
    };
    let mut null = crate::collect::NullAugmentor;
    let plain = collect(cfg, policy_spec, &mut null, &collect_cfg(0.0), &shortcut_cfg, rng)?;
    let mut oracle = OracleDirectAugmentor {
        cfg: cfg.clone(),
        tol: 1e-9,
    };
    let lifted = collect(cfg, policy_spec, &mut oracle, &collect_cfg(p), &shortcut_cfg, rng)?;
    let mean_return = |trajs: &[Trajectory]| -> f64 {
        let total: f64 = trajs
            .iter()
            .map(|t| returns(t, cfg.gamma).first().copied().unwrap_or(0.0))
            .sum();
        total / trajs.len().max(1) as f64
    };
    let plain_mean = mean_return(&plain);
    let lifted_mean = mean_return(&lifted);
    let margin = lifted_mean - plain_mean;
    let mut report = CheckReport::new("aug_improvement");
    report.samples = n_episodes;
    report.pass = margin > 0.0;
    if !report.pass {
        report.violations = 1;
        report.first_counterexample = Some(format!(
            "lifted mean {lifted_mean:.4} did not beat plain mean {plain_mean:.4}"
        ));
    }
    report.stats.push(("plain_mean_return".into(), plain_mean));
    report.stats.push(("lifted_mean_return".into(), lifted_mean));
    report.stats.push(("margin".into(), margin));
    Ok(report)
}

/// Rolls plain episodes and applies the exactness filters the identity
/// checks rely on: target reached, no clamping, distance-improving.
pub fn theory_corpus(
    cfg: &EnvConfig,
    policy_spec: &PolicySpec,
    n_episodes: usize,
    rng: &RngStream,
) -> Result<Vec<Trajectory>> {
    let base = rng.child("episode");
    let mut out = Vec::new();
    for e in 0..n_episodes {
        let mut policy = Policy::new(policy_spec, cfg.lambda, cfg.theta)?;
        let mut traj = rollout_episode(cfg, &mut policy, &base.child_index(e as u64))?;
        traj.episode = e;
        if traj.reached_target(cfg.theta)
            && is_clamp_free(&cfg.distortion, &traj)?
            && is_distance_improving(&traj, 1e-12)
        {
            out.push(traj);
        }
    }
    Ok(out)
}

/// The full diagnostic battery at moderate sample sizes. Checks appear in a
/// fixed order; the contraction pair is folded into one verdict that expects
/// boundary expansion and within-region isometry.
pub fn run_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let rng = RngStream::new(seed).child("suite");
    let mut blend = crate::env::default_config(crate::distortion::DistortionKind::Blend, 2);
    blend.distortion.sigma = 0.1;
    let direct = PolicySpec::new(PolicyKind::Direct, 0.05);
    let corpus = theory_corpus(&blend, &direct, 60, &rng.child("corpus"))?;

    let mut reports = Vec::new();
    reports.push(check_linear_replay(&blend.distortion, &corpus, 1e-9)?);
    reports.push(check_shortcut_definition(&blend, &direct, &corpus, 400, 1e-6)?);
    reports.push(check_lemma_lower_bound(&corpus, blend.gamma, 1e-9));
    reports.push(check_theorem_condition(
        &blend,
        &direct,
        &corpus,
        1.0 / (1.0 - blend.gamma),
        400,
        1e-6,
    )?);
    reports.push(check_distance_improving(&corpus, 1e-9));

    {
        use crate::distortion::{estimate_lpe_ratio, DistortionKind};
        let mut report = CheckReport::new("lpe_bounds");
        let kinds = [
            DistortionKind::Blend,
            DistortionKind::Rot,
            DistortionKind::Scale,
            DistortionKind::Regrot,
            DistortionKind::Sin,
        ];
        for kind in kinds {
            let spec = DistortionSpec::new(kind, 1.0);
            let d = 2;
            let bound = lpe_constant(&spec, d);
            let ratio = estimate_lpe_ratio(&spec, d, 200, 8, 1.0, &rng.child("lpe").child(kind.name()))?;
            report.samples += 1;
            report.stats.push((format!("{}_ratio", kind.name()), ratio));
            if ratio > bound + 1e-6 {
                report.violations += 1;
                report.first_counterexample.get_or_insert_with(|| {
                    format!("{}: ratio {ratio:.6} exceeds bound {bound:.6}", kind.name())
                });
            }
        }
        report.pass = report.violations == 0;
        reports.push(report);
    }

    {
        let ident = crate::env::default_config(crate::distortion::DistortionKind::Identity, 2);
        let bound = 1.0 / (1.0 - ident.gamma);
        reports.push(check_lipschitz(
            &ident,
            &direct,
            200,
            400,
            Some(bound),
            1e-6,
            &rng.child("lipschitz"),
        )?);
    }

    {
        let regrot = crate::env::default_config(crate::distortion::DistortionKind::Regrot, 2);
        let boundary = check_contraction(
            &regrot,
            500,
            PairMode::BoundaryStraddle,
            1e-9,
            &rng.child("contraction_boundary"),
        )?;
        let within = check_contraction(
            &regrot,
            500,
            PairMode::WithinRegion,
            1e-9,
            &rng.child("contraction_within"),
        )?;
        let mut report = CheckReport::new("contraction_regions");
        report.samples = boundary.samples + within.samples;
        report.pass = boundary.violations > 0 && within.violations == 0;
        if boundary.violations == 0 {
            report.violations += 1;
            report.first_counterexample =
                Some("no expansion found across region boundaries".into());
        }
        if within.violations > 0 {
            report.violations += 1;
            report.first_counterexample = within.first_counterexample.clone();
        }
        report
            .stats
            .push(("boundary_violations".into(), boundary.violations as f64));
        report
            .stats
            .push(("within_violations".into(), within.violations as f64));
        reports.push(report);
    }

    {
        let mut blend_walk = crate::env::default_config(crate::distortion::DistortionKind::Blend, 2);
        blend_walk.distortion.sigma = 0.1;
        blend_walk.max_steps = 200;
        let walk = PolicySpec::new(PolicyKind::CoordinateWalk, 0.025);
        reports.push(check_augmented_improvement(
            &blend_walk,
            &walk,
            60,
            0.6,
            &rng.child("improvement"),
        )?);
    }

    Ok(reports)
}
