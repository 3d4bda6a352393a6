//! Run configuration, read from TOML. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::objectives::ObjectiveConfig;
use crate::policy::{Arch, PolicyParams, ValueHead, DEFAULT_HIDDEN};
use crate::rng::StreamRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Tabular,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self::Mlp {
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl PolicyConfig {
    pub fn arch(&self, env: &EnvSpec) -> Arch {
        match *self {
            Self::Tabular => Arch::TabularSoftmax {
                n_states: env.n_states(),
            },
            Self::Mlp { hidden } => Arch::Mlp {
                input_dim: env.obs_dim(),
                hidden,
            },
        }
    }

    /// Fresh policy and matching zero-output value head.
    pub fn init(
        &self,
        env: &EnvSpec,
        n_ids: usize,
        rng: &mut StreamRng,
    ) -> Result<(PolicyParams, ValueHead)> {
        let n_actions = env.n_actions()?;
        let policy = match self.arch(env) {
            Arch::TabularSoftmax { n_states } => PolicyParams::tabular(n_states, n_ids, n_actions),
            Arch::Mlp { input_dim, hidden } => {
                PolicyParams::mlp(input_dim, hidden, n_ids, n_actions, rng)
            }
        };
        let value = ValueHead::for_policy(&policy, rng);
        Ok((policy, value))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub threshold: f64,
    pub patience: usize,
    /// Stop training once converged. When false the full generation
    /// budget is used and convergence is only reported.
    pub stop: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            threshold: 0.076,
            patience: 2,
            stop: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CamConfig {
    pub sweeps: usize,
    /// Episodes collected per specialist per sweep.
    pub episodes_per_sweep: usize,
    /// Evaluation games per opponent slot; environment default when unset.
    pub eval_games: Option<usize>,
    /// Let specialists face each other from the first sweep.
    pub include_specialists: bool,
    /// Objective for the specialist updates; the stage-one objective when unset.
    pub objective: Option<ObjectiveConfig>,
}

impl Default for CamConfig {
    fn default() -> Self {
        Self {
            sweeps: 10,
            episodes_per_sweep: 64,
            eval_games: None,
            include_specialists: true,
            objective: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    #[serde(default = "default_population")]
    pub population_size: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
    /// Episodes collected per id per generation.
    #[serde(default = "default_episodes")]
    pub episodes_per_generation: usize,
    #[serde(default = "default_exponent")]
    pub solver_exponent: f64,
    /// Evaluation games per generation pairing; environment default when unset.
    #[serde(default)]
    pub eval_games: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub cam: CamConfig,
}

fn default_population() -> usize {
    2
}

fn default_generations() -> usize {
    50
}

fn default_episodes() -> usize {
    64
}

fn default_exponent() -> f64 {
    1.0
}

impl RunConfig {
    pub fn new(env: EnvSpec) -> Self {
        Self {
            env,
            population_size: default_population(),
            generations: default_generations(),
            episodes_per_generation: default_episodes(),
            solver_exponent: default_exponent(),
            eval_games: None,
            master_seed: 0,
            convergence: ConvergenceConfig::default(),
            policy: PolicyConfig::default(),
            objective: ObjectiveConfig::default(),
            cam: CamConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.env.validate()?;
        if self.population_size < 2 {
            return bad("population_size must be >= 2".into());
        }
        if self.episodes_per_generation == 0 {
            return bad("episodes_per_generation must be >= 1".into());
        }
        if !(self.solver_exponent >= 0.0 && self.solver_exponent.is_finite()) {
            return bad("solver_exponent must be a non-negative number".into());
        }
        if self.eval_games == Some(0) || self.cam.eval_games == Some(0) {
            return bad("eval_games must be >= 1".into());
        }
        if !(self.convergence.threshold >= 0.0) || self.convergence.patience == 0 {
            return bad("convergence needs threshold >= 0 and patience >= 1".into());
        }
        if let PolicyConfig::Mlp { hidden: 0 } = self.policy {
            return bad("policy.hidden must be >= 1".into());
        }
        if self.cam.episodes_per_sweep == 0 {
            return bad("cam.episodes_per_sweep must be >= 1".into());
        }
        self.objective.validate()?;
        if let Some(o) = &self.cam.objective {
            o.validate()?;
        }
        Ok(())
    }

    pub fn eval_games(&self) -> usize {
        self.eval_games.unwrap_or(self.default_eval_games())
    }

    pub fn cam_eval_games(&self) -> usize {
        self.cam.eval_games.unwrap_or(self.default_eval_games())
    }

    fn default_eval_games(&self) -> usize {
        match self.env {
            EnvSpec::Matrix(_) => 200,
            EnvSpec::Duel(_) => 50,
        }
    }

    pub fn cam_objective(&self) -> &ObjectiveConfig {
        self.cam.objective.as_ref().unwrap_or(&self.objective)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
population_size = 2
generations = 1

[env]
kind = "matrix"
game = "biased_rps"

[policy]
kind = "tabular"
"#;

    #[test]
    fn parse_minimal_and_round_trip() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.generations, 1);
        assert_eq!(c.eval_games(), 200);
        assert_eq!(c.objective.learning_rate, 1e-4);
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml().unwrap(), text);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn unknown_keys_are_named() {
        for (bad, key) in [
            (format!("{MINIMAL}\n[objective]\nlearnin_rate = 0.1\n"), "learnin_rate"),
            (format!("bogus = 3\n{MINIMAL}"), "bogus"),
            (MINIMAL.replace("kind = \"tabular\"", "kind = \"mlp\"\nwidth = 3"), "width"),
        ] {
            let err = RunConfig::from_toml_str(&bad).unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn range_checks() {
        let bad = MINIMAL.replace("population_size = 2", "population_size = 1");
        assert!(RunConfig::from_toml_str(&bad).is_err());
        let bad = format!("{MINIMAL}\n[objective]\ngamma = 1.5\n");
        assert!(RunConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn duel_defaults() {
        let c = RunConfig::new(EnvSpec::duel());
        c.validate().unwrap();
        assert_eq!(c.eval_games(), 50);
        let back = RunConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
