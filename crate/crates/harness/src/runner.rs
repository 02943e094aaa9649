//! Builds environments and agents from a config and runs seeds in parallel.

use std::path::{Path, PathBuf};

use flsvi_core::agent::{rollout, train_with_observer, AgentConfig, EpisodeValueStack, EpisodicEnv, PolicyTable, RegretOracle};
use flsvi_core::{
    EpisodeRecord, ExperimentRecord, FunctionClass, HorizonParams, LinearClass, Result as CoreResult, TabularClass,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{AgentKind, ClassKind, ExperimentConfig};
use crate::envs::{make_env, EnvInstance};
use crate::mdp::{ModelEnv, ModelOracle};
use crate::output::{fit_exponent, write_csv_file, write_json, ExperimentSummary, RunSummary};
use crate::HarnessError;

/// Called after planning each episode with the planned values and the
/// true model's oracle.
pub type Observer<'a> = dyn FnMut(usize, &EpisodeValueStack, &ModelOracle) -> CoreResult<()> + 'a;

pub fn agent_config(cfg: &ExperimentConfig, seed: u64) -> Result<AgentConfig, HarnessError> {
    let hp = HorizonParams::new(cfg.env.horizon(), cfg.agent.episodes, cfg.agent.delta)?;
    let mut agent = AgentConfig::new(hp, cfg.bonus_config(), seed);
    agent.bonus_enabled = cfg.agent.bonus_enabled;
    Ok(agent)
}

fn train_on<C: FunctionClass>(
    class: &C,
    inst: &EnvInstance,
    agent: &AgentConfig,
    observer: Option<&mut Observer<'_>>,
) -> Result<ExperimentRecord, HarnessError> {
    let mut env = ModelEnv::new(inst.mdp.clone())?;
    let oracle = ModelOracle::new(inst.mdp.clone());
    let record = match observer {
        Some(obs) => train_with_observer(class, &mut env, Some(&oracle), agent, |k, s| obs(k, s, &oracle))?,
        None => train_with_observer(class, &mut env, Some(&oracle), agent, |_, _| Ok(()))?,
    };
    Ok(record)
}

/// One seed of the configured agent.
pub fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    observer: Option<&mut Observer<'_>>,
) -> Result<ExperimentRecord, HarnessError> {
    let inst = make_env(&cfg.env)?;
    let mut record = match cfg.agent.kind {
        AgentKind::Random => random_baseline(&inst, cfg.agent.episodes, seed)?,
        AgentKind::Flsvi => {
            let agent = agent_config(cfg, seed)?;
            let m = &inst.mdp;
            match cfg.agent.class {
                ClassKind::Tabular => {
                    let class = TabularClass::new(m.states(), m.actions(), m.horizon())?;
                    train_on(&class, &inst, &agent, observer)?
                }
                ClassKind::Linear => {
                    let fm = inst.features.as_ref().ok_or_else(|| {
                        HarnessError::Config("agent.class = linear needs an environment with features".into())
                    })?;
                    let class = LinearClass::new(
                        m.states(),
                        m.actions(),
                        m.horizon(),
                        fm.features.clone(),
                        fm.param_bound,
                        fm.feature_bound,
                    )?;
                    train_on(&class, &inst, &agent, observer)?
                }
            }
        }
    };
    record.config_hash = cfg.hash();
    check_record(&record)?;
    Ok(record)
}

/// Instantaneous regret must be nonnegative up to rounding.
pub fn check_record(record: &ExperimentRecord) -> Result<(), HarnessError> {
    for e in &record.episodes {
        if let Some(r) = e.inst_regret {
            if r < -1e-10 {
                return Err(HarnessError::Invariant(format!(
                    "negative regret {r} in episode {}",
                    e.episode
                )));
            }
        }
    }
    Ok(())
}

pub fn random_policy<R: Rng>(horizon: usize, states: usize, actions: usize, rng: &mut R) -> PolicyTable {
    PolicyTable {
        actions: (0..horizon)
            .map(|_| (0..states).map(|_| rng.gen_range(0..actions)).collect())
            .collect(),
    }
}

/// Uniformly random deterministic policy per episode.
pub fn random_baseline(inst: &EnvInstance, episodes: usize, seed: u64) -> Result<ExperimentRecord, HarnessError> {
    let mut env = ModelEnv::new(inst.mdp.clone())?;
    let oracle = ModelOracle::new(inst.mdp.clone());
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(1);
    let mut record = ExperimentRecord::new(seed);
    let mut cum = 0.0;
    for k in 1..=episodes {
        let policy = random_policy(env.horizon(), env.num_states(), env.num_actions(), &mut policy_rng);
        let (s0, transitions) = rollout(&mut env, &policy, &mut env_rng, k)?;
        let r = oracle.regret(s0, &policy)?;
        cum += r;
        record.episodes.push(EpisodeRecord {
            episode: k,
            episode_return: transitions.iter().map(|t| t.reward).sum(),
            inst_regret: Some(r),
            cum_regret: Some(cum),
            mean_bonus: 0.0,
            subsample_distinct: 0,
            discarded: false,
        });
    }
    Ok(record)
}

pub fn csv_name(cfg: &ExperimentConfig, seed: u64) -> String {
    let label = cfg.run.label.as_deref().unwrap_or("run");
    format!("{label}_{}_seed{seed}.csv", cfg.short_hash())
}

pub fn summary_name(cfg: &ExperimentConfig) -> String {
    let label = cfg.run.label.as_deref().unwrap_or("run");
    format!("{label}_{}_summary.json", cfg.short_hash())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Io(e.to_string()))
}

/// Run every seed, write one CSV per seed and a JSON summary. Per-seed
/// failures are recorded in the summary rather than aborting the others.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, jobs: usize) -> Result<ExperimentSummary, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io(format!("{}: {e}", out_dir.display())))?;
    let runs: Vec<RunSummary> = pool(jobs)?.install(|| {
        cfg.run
            .seeds
            .par_iter()
            .map(|&seed| {
                let path: PathBuf = out_dir.join(csv_name(cfg, seed));
                match run_seed(cfg, seed, None).and_then(|r| write_csv_file(&r, &path).map(|_| r)) {
                    Ok(record) => RunSummary {
                        seed,
                        csv: Some(path.file_name().unwrap().to_string_lossy().into_owned()),
                        final_cum_regret: Some(record.final_cum_regret()),
                        exponent: fit_exponent(&record.cum_regret_curve()),
                        discards: Some(record.discard_count()),
                        error: None,
                    },
                    Err(e) => {
                        log::error!("seed {seed}: {e}");
                        RunSummary {
                            seed,
                            csv: None,
                            final_cum_regret: None,
                            exponent: None,
                            discards: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    });
    let summary = ExperimentSummary::from_runs(cfg.hash(), cfg.run.label.clone(), cfg.agent.episodes, runs);
    write_json(&summary, &out_dir.join(summary_name(cfg)))?;
    Ok(summary)
}

/// The same experiment at several practical β values.
pub fn sweep(
    cfg: &ExperimentConfig,
    betas: &[f64],
    out_dir: &Path,
    jobs: usize,
) -> Result<Vec<ExperimentSummary>, HarnessError> {
    betas
        .iter()
        .map(|&b| {
            let mut c = cfg.clone();
            c.beta.mode = flsvi_core::BetaMode::Practical;
            c.beta.value = Some(b);
            let base = cfg.run.label.as_deref().unwrap_or("run");
            c.run.label = Some(format!("{base}_beta{b}"));
            c.validate()?;
            run_experiment(&c, out_dir, jobs)
        })
        .collect()
}

/// Records for several seeds in parallel, in seed order.
pub fn run_seeds(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ExperimentRecord>, HarnessError> {
    pool(jobs)?.install(|| cfg.run.seeds.par_iter().map(|&s| run_seed(cfg, s, None)).collect())
}
