//! JSON checkpoints. Floats are written in shortest round-trip form, so a
//! save/load cycle reproduces parameters bit for bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::policy::{PolicyParams, ValueHead};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mia,
    Cam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub stage: Stage,
    pub generation: usize,
    /// Agent a specialist belongs to; `None` for the shared policy.
    pub agent: Option<usize>,
    pub parent: Option<usize>,
    pub policy: PolicyParams,
    pub value: Option<ValueHead>,
    pub master_seed: u64,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        self.policy
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if let Some(v) = &self.value {
            v.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingCheckpoint(path.display().to_string()))?;
        Self::from_json(&text)
    }
}

pub fn generation_path(dir: &Path, generation: usize) -> PathBuf {
    dir.join(format!("gen_{generation}.ckpt"))
}

pub fn specialist_path(dir: &Path, agent: usize) -> PathBuf {
    dir.join(format!("specialist_{agent}.ckpt"))
}

/// Highest-numbered `gen_<n>.ckpt` in `dir`.
pub fn latest_generation(dir: &Path) -> Result<PathBuf> {
    let mut best: Option<(usize, PathBuf)> = None;
    let entries = std::fs::read_dir(dir)
        .map_err(|_| Error::MissingCheckpoint(dir.display().to_string()))?;
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(n) = name
            .strip_prefix("gen_")
            .and_then(|r| r.strip_suffix(".ckpt"))
            .and_then(|r| r.parse::<usize>().ok())
        else {
            continue;
        };
        if best.as_ref().map_or(true, |(b, _)| n > *b) {
            best = Some((n, path));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::MissingCheckpoint(format!("no gen_<n>.ckpt in {}", dir.display())))
}

/// Hex SHA-256 of a policy's canonical JSON form.
pub fn params_hash(params: &PolicyParams) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(params)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let digest = Sha256::digest(std::fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AgentId, Observation};
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = stream(21, &[]);
        let policy = PolicyParams::mlp(5, 7, 3, 4, &mut rng);
        let value = ValueHead::for_policy(&policy, &mut rng);
        let ck = Checkpoint {
            format_version: FORMAT_VERSION,
            stage: Stage::Mia,
            generation: 3,
            agent: None,
            parent: Some(2),
            policy,
            value: Some(value),
            master_seed: 9,
            config_hash: "abc".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = generation_path(dir.path(), 3);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let mask = [true; 4];
        for _ in 0..100 {
            let o = Observation {
                index: 0,
                features: (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            };
            let id = AgentId(rng.gen_range(0..3));
            let a = ck.policy.forward(&o, id, &mask).unwrap().probs;
            let b = back.policy.forward(&o, id, &mask).unwrap().probs;
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(latest_generation(dir.path()).unwrap(), path);
    }

    #[test]
    fn rejects_bad_checkpoints() {
        let mut p = PolicyParams::tabular(1, 2, 2);
        p.flat.pop();
        let ck = Checkpoint {
            format_version: FORMAT_VERSION,
            stage: Stage::Cam,
            generation: 0,
            agent: Some(1),
            parent: None,
            policy: p,
            value: None,
            master_seed: 0,
            config_hash: String::new(),
        };
        assert!(Checkpoint::from_json(&ck.to_json().unwrap()).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Checkpoint::load(&dir.path().join("nope.ckpt")),
            Err(Error::MissingCheckpoint(_))
        ));
        assert!(latest_generation(dir.path()).is_err());
    }
}
