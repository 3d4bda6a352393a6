use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cam_core::checkpoint::{
    file_hash, generation_path, latest_generation, specialist_path, Checkpoint, Stage,
    FORMAT_VERSION,
};
use cam_core::checks;
use cam_core::config::RunConfig;
use cam_core::eval;
use cam_core::game::AgentId;
use cam_core::policy::{Arch, PolicyParams};
use cam_core::population::{cam_specialize, mia_train, Player};

use crate::EvalArgs;

const CONFIG_FILE: &str = "config.toml";
const BASELINE_FILE: &str = "baseline.ckpt";
const METRICS_FILE: &str = "metrics.jsonl";

/// Bad configuration or inputs; maps to exit code 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Invalid>() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<cam_core::Error>() {
            use cam_core::Error as E;
            if matches!(core, E::Config(_) | E::Character(_) | E::BadId { .. } | E::BadGamma(_)) {
                return 2;
            }
        }
    }
    1
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let mut config = RunConfig::from_toml_str(&text)
        .map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.master_seed = s;
    }
    Ok(config)
}

fn prepare_out(out: &Path, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(CONFIG_FILE), config.to_toml()?)?;
    File::create(out.join(METRICS_FILE))?;
    Ok(())
}

fn append_json(path: &Path, value: &impl serde::Serialize) -> cam_core::Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

pub fn train_mia(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let config = load_config(config_path, seed)?;
    let hash = config.hash()?;
    prepare_out(out, &config)?;
    let metrics_path = out.join(METRICS_FILE);
    let run = mia_train(&config, &mut |p| {
        let g = p.store.latest().expect("generation 0 is stored first");
        Checkpoint {
            format_version: FORMAT_VERSION,
            stage: Stage::Mia,
            generation: g.index,
            agent: None,
            parent: g.parent,
            policy: g.policy.clone(),
            value: Some(g.value.clone()),
            master_seed: config.master_seed,
            config_hash: hash.clone(),
        }
        .save(&generation_path(out, g.index))?;
        fs::write(out.join(format!("payoff_gen{}.csv", g.index)), p.payoff.to_csv())?;
        if let Some(m) = p.metrics {
            append_json(&metrics_path, m)?;
        }
        Ok(())
    })?;
    let last = run.state.history.last();
    println!(
        "trained {} generations into {}",
        run.state.tau,
        out.display()
    );
    if let Some(m) = last {
        println!("win rate vs previous generation: {:.4}", m.win_rate_vs_prev);
        if let Some(x) = m.exploitability {
            println!("exploitability: {x:.4}");
        }
    }
    match run.state.converged_at {
        Some(t) => println!("converged at generation {t}"),
        None => println!("not converged"),
    }
    Ok(())
}

pub fn train_cam(
    mia_dir: &Path,
    config_path: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    games: Option<usize>,
) -> Result<()> {
    let default_config = mia_dir.join(CONFIG_FILE);
    let mut config = load_config(config_path.unwrap_or(&default_config), seed)?;
    if games.is_some() {
        config.cam.eval_games = games;
        config.validate().map_err(|e| Invalid(e.to_string()))?;
    }
    let baseline_path = latest_generation(mia_dir)?;
    let hash_before = file_hash(&baseline_path)?;
    let baseline = Checkpoint::load(&baseline_path)?;
    check_arch(&config, &baseline.policy)?;
    let hash = config.hash()?;
    prepare_out(out, &config)?;
    fs::copy(&baseline_path, out.join(BASELINE_FILE))?;
    let metrics_path = out.join(METRICS_FILE);
    let run = cam_specialize(&config, &baseline.policy, baseline.value.as_ref(), &mut |m| {
        append_json(&metrics_path, m)
    })?;
    for (k, (policy, value)) in run.specialists.iter().zip(&run.values).enumerate() {
        Checkpoint {
            format_version: FORMAT_VERSION,
            stage: Stage::Cam,
            generation: config.cam.sweeps,
            agent: Some(k),
            parent: Some(baseline.generation),
            policy: policy.clone(),
            value: Some(value.clone()),
            master_seed: config.master_seed,
            config_hash: hash.clone(),
        }
        .save(&specialist_path(out, k))?;
    }
    let hash_after = file_hash(&baseline_path)?;
    if hash_after != hash_before {
        bail!("baseline checkpoint {} changed during specialization", baseline_path.display());
    }
    println!("wrote {} specialists into {}", run.specialists.len(), out.display());
    println!(
        "baseline {} unchanged (sha256 {hash_after})",
        baseline_path.display()
    );
    if let Some(m) = run.history.last() {
        println!("mean win rate vs baseline: {:.4}", m.mean_win_rate_vs_baseline);
    }
    Ok(())
}

fn check_arch(config: &RunConfig, policy: &PolicyParams) -> Result<()> {
    let env = &config.env;
    let n_actions = env.n_actions()?;
    let ok = policy.n_actions == n_actions
        && match policy.arch {
            Arch::TabularSoftmax { n_states } => n_states == env.n_states(),
            Arch::Mlp { input_dim, .. } => input_dim == env.obs_dim(),
        };
    if !ok {
        return Err(Invalid(format!(
            "checkpoint architecture {:?} with {} actions does not fit the configured environment",
            policy.arch, policy.n_actions
        ))
        .into());
    }
    Ok(())
}

/// A labelled checkpoint; shared policies expand to one player per id.
struct Member {
    label: String,
    ckpt: Checkpoint,
    path: PathBuf,
}

fn load_members(inputs: &[PathBuf]) -> Result<Vec<Member>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut specialists = Vec::new();
            for k in 0.. {
                let p = specialist_path(input, k);
                if !p.exists() {
                    break;
                }
                specialists.push(p);
            }
            if specialists.is_empty() {
                let p = latest_generation(input)?;
                out.push(member(&p)?);
            } else {
                for p in specialists {
                    out.push(member(&p)?);
                }
            }
        } else {
            out.push(member(input)?);
        }
    }
    Ok(out)
}

fn member(path: &Path) -> Result<Member> {
    let ckpt = Checkpoint::load(path)?;
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint")
        .to_string();
    Ok(Member {
        label,
        ckpt,
        path: path.to_path_buf(),
    })
}

fn players(members: &[Member]) -> Vec<(String, Player<'_>)> {
    let mut out = Vec::new();
    for m in members {
        match m.ckpt.agent {
            Some(k) => out.push((
                m.label.clone(),
                Player {
                    policy: &m.ckpt.policy,
                    id: AgentId(k),
                },
            )),
            None => {
                for k in 0..m.ckpt.policy.n_ids {
                    out.push((
                        format!("{}/id{k}", m.label),
                        Player {
                            policy: &m.ckpt.policy,
                            id: AgentId(k),
                        },
                    ));
                }
            }
        }
    }
    out
}

fn run_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

fn eval_config(args: &EvalArgs) -> Result<RunConfig> {
    let path = match &args.config {
        Some(p) => p.clone(),
        None => run_dir(&args.inputs[0]).join(CONFIG_FILE),
    };
    load_config(&path, None)
}

fn check_members(config: &RunConfig, members: &[Member]) -> Result<()> {
    let Some(first) = members.first() else {
        return Err(Invalid("no checkpoints given".into()).into());
    };
    for m in members {
        check_arch(config, &m.ckpt.policy)?;
        if m.ckpt.policy.arch != first.ckpt.policy.arch {
            return Err(Invalid(format!(
                "{} and {} have incompatible architectures",
                first.path.display(),
                m.path.display()
            ))
            .into());
        }
    }
    Ok(())
}

pub fn eval_matrix(args: &EvalArgs) -> Result<()> {
    let config = eval_config(args)?;
    let members = load_members(&args.inputs)?;
    let others = load_members(&args.compare)?;
    check_members(&config, &members)?;
    if !others.is_empty() {
        check_members(&config, &others)?;
    }
    let pop_a = players(&members);
    let pop_b = players(&others);
    let games = args.games.unwrap_or(config.eval_games());
    let m = eval::win_rate_matrix(
        &config.env,
        &pop_a,
        (!pop_b.is_empty()).then_some(pop_b.as_slice()),
        games,
        args.seed,
    )?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("matrix.csv"), m.to_csv())?;
    for (label, row) in m.labels_a.iter().zip(&m.w) {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("{label}: {}", vals.join(" "));
    }
    println!("mean win rate: {:.4}", m.mean_off_diagonal());
    Ok(())
}

/// Opponent policy for the diversity protocol.
fn diversity_opponent(args: &EvalArgs, members: &[Member]) -> Result<Checkpoint> {
    if let Some(p) = &args.opponent {
        return Ok(Checkpoint::load(&latest_or_file(p)?)?);
    }
    let candidate = run_dir(&args.inputs[0]).join(BASELINE_FILE);
    if candidate.exists() {
        return Ok(Checkpoint::load(&candidate)?);
    }
    members
        .iter()
        .find(|m| m.ckpt.agent.is_none())
        .map(|m| m.ckpt.clone())
        .ok_or_else(|| Invalid("diversity needs --opponent or a shared-policy input".into()).into())
}

fn latest_or_file(p: &Path) -> Result<PathBuf> {
    if p.is_dir() {
        let b = p.join(BASELINE_FILE);
        if b.exists() {
            return Ok(b);
        }
        Ok(latest_generation(p)?)
    } else {
        Ok(p.to_path_buf())
    }
}

#[derive(serde::Serialize)]
struct DiversityOut {
    labels: Vec<String>,
    vectors: Vec<Vec<f64>>,
    pairwise_distances: Vec<(usize, usize, f64)>,
    expected_distance: f64,
    episodes_per_matchup: usize,
    compare: Option<Box<DiversityOut>>,
    relative_change: Option<f64>,
}

fn diversity_of(
    config: &RunConfig,
    members: &[Member],
    opponent: &PolicyParams,
    episodes: usize,
    seed: u64,
) -> Result<(DiversityOut, Vec<eval::ActionFrequencyVector>)> {
    let pop = players(members);
    let ps: Vec<Player<'_>> = pop.iter().map(|(_, p)| *p).collect();
    let vectors = eval::population_frequencies(&config.env, &ps, opponent, episodes, seed)?;
    let report = eval::diversity_score(&vectors)?;
    Ok((
        DiversityOut {
            labels: pop.iter().map(|(l, _)| l.clone()).collect(),
            vectors: vectors.iter().map(|v| v.freq.clone()).collect(),
            pairwise_distances: report.pairwise_distances,
            expected_distance: report.expected_distance,
            episodes_per_matchup: episodes,
            compare: None,
            relative_change: None,
        },
        vectors,
    ))
}

pub fn eval_diversity(args: &EvalArgs) -> Result<()> {
    let config = eval_config(args)?;
    let members = load_members(&args.inputs)?;
    check_members(&config, &members)?;
    let opponent = diversity_opponent(args, &members)?;
    check_arch(&config, &opponent.policy)?;
    let episodes = args.games.unwrap_or(100);
    let (mut out, vectors) = diversity_of(&config, &members, &opponent.policy, episodes, args.seed)?;
    let rows = eval::radial_export(&out.labels, &vectors, &config.env.category_names()?)?;
    println!("expected distance: {:.4}", out.expected_distance);
    if !args.compare.is_empty() {
        let others = load_members(&args.compare)?;
        check_members(&config, &others)?;
        let (other, _) = diversity_of(&config, &others, &opponent.policy, episodes, args.seed)?;
        println!("compared population: {:.4}", other.expected_distance);
        println!(
            "relative change: {}",
            eval::format_relative_change(out.expected_distance, other.expected_distance)
        );
        out.relative_change = Some(eval::relative_change(out.expected_distance, other.expected_distance));
        out.compare = Some(Box::new(other));
    }
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("diversity.json"), serde_json::to_string_pretty(&out)?)?;
    fs::write(args.out.join("radial.csv"), eval::radial_csv(&rows))?;
    Ok(())
}

pub fn eval_mi(args: &EvalArgs) -> Result<()> {
    let config = eval_config(args)?;
    let members = load_members(&args.inputs)?;
    check_members(&config, &members)?;
    let pop = players(&members);
    let ps: Vec<Player<'_>> = pop.iter().map(|(_, p)| *p).collect();
    let episodes = args.games.unwrap_or(config.eval_games());
    let report = eval::mi_report(&config.env, &ps, episodes, args.seed)?;
    fs::create_dir_all(&args.out)?;
    let labels: Vec<&String> = pop.iter().map(|(l, _)| l).collect();
    fs::write(
        args.out.join("mi.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "labels": labels,
            "pairs": report.pairs,
            "aggregate": report.aggregate,
            "episodes": episodes,
        }))?,
    )?;
    println!("aggregate MI: {:.6} nats", report.aggregate);
    Ok(())
}

pub fn check(gradients: bool) -> Result<()> {
    let report = if gradients {
        checks::check_gradients()?
    } else {
        checks::check_oracles()?
    };
    print!("{report}");
    if !report.passed() {
        bail!("{} check(s) failed", report.failures().count());
    }
    println!("all {} checks passed", report.results.len());
    Ok(())
}
