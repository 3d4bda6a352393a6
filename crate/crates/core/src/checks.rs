//! Self-checks behind `cam check`: analytic gradients against central
//! finite differences, and closed-form values of the MI estimators and
//! the exploitability oracle.
//!
//! The score function is passed in as a closure so a deliberately broken
//! implementation can be shown to fail.

use std::fmt;

use rand::Rng;

use crate::envs::matrix::MatrixGameSpec;
use crate::error::Result;
use crate::eval::{epsilon_ne, exploitability_of, relative_change};
use crate::game::{AgentId, Observation, OpponentTag, Transition, TrajectoryBatch};
use crate::objectives::{
    augmented_gradient_exact, coupled_mutual_information, exact_objective, mi_gradient_exact,
    mutual_information_exact, mutual_information_sampled, policy_gradient_exact, ppo_surrogate,
    ExactSetting,
};
use crate::policy::PolicyParams;
use crate::rng::stream;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const LAMBDA: f64 = 0.1;
const PPO_CLIP: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn below(name: impl Into<String>, error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_error: error,
            tolerance,
            passed: error < tolerance,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    pub fn max_error(&self) -> f64 {
        self.results.iter().map(|r| r.max_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(
                f,
                "{} {:<40} max_error {:.3e} (tolerance {:.0e})",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.max_error,
                r.tolerance
            )?;
        }
        Ok(())
    }
}

/// `grad log pi(action | obs, id)` under test.
pub type ScoreFn<'a> = dyn Fn(&PolicyParams, &Observation, AgentId, &[bool], usize) -> Result<Vec<f64>> + 'a;

/// The five games used by the gradient checks, 2x2 up to 4x4.
pub fn gradient_games() -> Vec<(&'static str, MatrixGameSpec)> {
    vec![
        ("matching_pennies", MatrixGameSpec::matching_pennies()),
        ("skewed_2x2", MatrixGameSpec::skewed_2x2()),
        ("biased_rps", MatrixGameSpec::biased_rps()),
        ("heterogeneous_3x4", MatrixGameSpec::heterogeneous_3x4()),
        ("cyclic_4x4", MatrixGameSpec::cyclic_4x4()),
    ]
}

/// `max |a - b| / max(max |a|, max |b|)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale < 1e-10 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Central differences of `f` around `params`.
pub fn finite_difference(
    params: &PolicyParams,
    f: impl Fn(&PolicyParams) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut p = params.clone();
    let mut out = Vec::with_capacity(params.flat.len());
    for k in 0..params.flat.len() {
        let x = params.flat[k];
        p.flat[k] = x + FD_STEP;
        let up = f(&p)?;
        p.flat[k] = x - FD_STEP;
        let down = f(&p)?;
        p.flat[k] = x;
        out.push((up - down) / (2.0 * FD_STEP));
    }
    Ok(out)
}

/// Three weighted states over a tabular policy, so the state-marginalized
/// joint is genuinely coupled and the MI gradient is non-trivial. Seat I
/// keeps the game's payoffs as critic; seat II gets a random table, since
/// the zero-sum pair would make the shared objective vanish.
fn setting_for(spec: &MatrixGameSpec, seed: u64) -> (PolicyParams, ExactSetting) {
    let n = spec.n_actions_i().max(spec.n_actions_ii());
    let mut params = PolicyParams::tabular(3, 2, n);
    let mut rng = stream(seed, &[]);
    for v in &mut params.flat {
        *v = rng.gen_range(-1.5..1.5);
    }
    let q_ii = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let base = ExactSetting::matrix(spec, n, AgentId(0), AgentId(1));
    let q_i = base.q_i.clone();
    let mut setting = base.with_critics(q_i, q_ii);
    setting.states = [0.5, 0.3, 0.2]
        .iter()
        .enumerate()
        .map(|(k, w)| {
            (
                Observation {
                    index: k,
                    features: vec![1.0],
                },
                *w,
            )
        })
        .collect();
    (params, setting)
}

/// One transition per (state, seat, joint action), recorded at the current
/// parameters so every ratio is exactly 1.
fn ratio_one_batch(params: &PolicyParams, setting: &ExactSetting, seed: u64) -> Result<(TrajectoryBatch, Vec<f64>)> {
    let mut rng = stream(seed, &[1]);
    let n = params.n_actions;
    let mut batch = TrajectoryBatch::default();
    let mut adv = Vec::new();
    for (obs, _) in &setting.states {
        for (id_self, id_opp, m_self, m_opp) in [
            (setting.id_i, setting.id_ii, &setting.mask_i, &setting.mask_ii),
            (setting.id_ii, setting.id_i, &setting.mask_ii, &setting.mask_i),
        ] {
            for a in (0..n).filter(|&a| m_self[a]) {
                for b in (0..n).filter(|&b| m_opp[b]) {
                    batch.push_episode(vec![Transition {
                        state: obs.clone(),
                        opp_state: obs.clone(),
                        next_state: obs.clone(),
                        id_self,
                        id_opp,
                        action_self: a,
                        action_opp: b,
                        reward: 0.0,
                        done: true,
                        mask_self: m_self.clone(),
                        mask_opp: m_opp.clone(),
                        log_prob_self: params.log_prob(obs, id_self, m_self, a)?,
                        bucket: obs.index,
                        opponent: OpponentTag::SelfPlay,
                    }]);
                    adv.push(rng.gen_range(-1.0..1.0));
                }
            }
        }
    }
    Ok((batch, adv))
}

pub fn check_gradients() -> Result<CheckReport> {
    check_gradients_with(&|p, o, id, m, a| p.grad_log_prob(o, id, m, a))
}

/// Finite-difference checks of the score function, the exact policy,
/// MI and augmented gradients, and the PPO gradient at ratio 1.
pub fn check_gradients_with(score: &ScoreFn<'_>) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    for (g, (name, spec)) in gradient_games().into_iter().enumerate() {
        let (params, setting) = setting_for(&spec, 100 + g as u64);
        let tol = GRADIENT_TOLERANCE;

        let mut worst = 0.0f64;
        for (obs, _) in &setting.states {
            for (id, mask) in [(setting.id_i, &setting.mask_i), (setting.id_ii, &setting.mask_ii)] {
                for a in (0..params.n_actions).filter(|&a| mask[a]) {
                    let analytic = score(&params, obs, id, mask, a)?;
                    let fd = finite_difference(&params, |p| p.log_prob(obs, id, mask, a))?;
                    worst = worst.max(relative_error(&analytic, &fd));
                }
            }
        }
        report.results.push(CheckResult::below(format!("{name}: score function"), worst, tol));

        let analytic = policy_gradient_exact(&params, &setting)?.grad;
        let fd = finite_difference(&params, |p| exact_objective(p, &setting))?;
        report
            .results
            .push(CheckResult::below(format!("{name}: policy gradient"), relative_error(&analytic, &fd), tol));

        let analytic = mi_gradient_exact(&params, &setting)?.grad;
        let fd = finite_difference(&params, |p| coupled_mutual_information(p, &setting))?;
        report
            .results
            .push(CheckResult::below(format!("{name}: MI gradient"), relative_error(&analytic, &fd), tol));

        let analytic = augmented_gradient_exact(&params, &setting, LAMBDA)?.grad;
        let fd = finite_difference(&params, |p| {
            Ok(exact_objective(p, &setting)? + LAMBDA * coupled_mutual_information(p, &setting)?)
        })?;
        report.results.push(CheckResult::below(
            format!("{name}: augmented gradient"),
            relative_error(&analytic, &fd),
            tol,
        ));

        let (batch, adv) = ratio_one_batch(&params, &setting, 200 + g as u64)?;
        let analytic = ppo_surrogate(&batch, &adv, &params, PPO_CLIP)?.1.grad;
        let fd = finite_difference(&params, |p| Ok(-ppo_surrogate(&batch, &adv, p, PPO_CLIP)?.0))?;
        report.results.push(CheckResult::below(
            format!("{name}: PPO gradient at ratio 1"),
            relative_error(&analytic, &fd),
            tol,
        ));
    }
    Ok(report)
}

/// Closed-form values of the MI estimators and the exploitability oracle,
/// plus the reference arithmetic of the evaluation metrics.
pub fn check_oracles() -> Result<CheckReport> {
    let mut report = CheckReport::default();

    let mut rng = stream(7, &[]);
    let mut worst = 0.0f64;
    let obs = Observation {
        index: 0,
        features: vec![1.0],
    };
    let mask = [true; 4];
    for _ in 0..1000 {
        let mut p = PolicyParams::tabular(1, 2, 4);
        for v in &mut p.flat {
            *v = rng.gen_range(-3.0..3.0);
        }
        worst = worst.max(mutual_information_exact(&p, &obs, AgentId(0), AgentId(1), &mask, &mask)?.abs());
    }
    report
        .results
        .push(CheckResult::below("exact MI of factorized policy", worst, 1e-12));

    let samples: Vec<(usize, usize)> = (0..1000).map(|k| (k % 2, k % 2)).collect();
    let mi = mutual_information_sampled(&samples, &vec![0; samples.len()])?;
    report.results.push(CheckResult::below(
        "plug-in MI of correlated bits = ln 2",
        (mi - 2f64.ln()).abs(),
        1e-6,
    ));

    let samples: Vec<(usize, usize)> = (0..100_000)
        .map(|_| (rng.gen_range(0..3), rng.gen_range(0..3)))
        .collect();
    let mi = mutual_information_sampled(&samples, &vec![0; samples.len()])?;
    report
        .results
        .push(CheckResult::below("plug-in MI of independent draws", mi, 0.01 + f64::EPSILON));

    let rps = MatrixGameSpec::rock_paper_scissors();
    let u = [1.0 / 3.0; 3];
    report.results.push(CheckResult::below(
        "exploitability of uniform RPS",
        exploitability_of(&rps, &u, &u),
        1e-12,
    ));
    let mp = MatrixGameSpec::matching_pennies();
    report.results.push(CheckResult::below(
        "exploitability of matching pennies NE",
        exploitability_of(&mp, &[0.5, 0.5], &[0.5, 0.5]),
        1e-12,
    ));
    report.results.push(CheckResult::below(
        "exploitability of pure rock = 1",
        (exploitability_of(&rps, &[1.0, 0.0, 0.0], &u) - 1.0).abs(),
        1e-12,
    ));
    report.results.push(CheckResult::below(
        "epsilon_ne(0.576) = 0.076",
        (epsilon_ne(0.576) - 0.076).abs(),
        1e-12,
    ));
    report.results.push(CheckResult::below(
        "relative change 0.9210 -> 1.0585",
        (100.0 * relative_change(0.9210, 1.0585) - 14.93).abs(),
        0.005,
    ));
    Ok(report)
}
