//! Optimistic least-squares value iteration: each episode refits `f_h` level
//! by level on the pooled replay data, adds the stable bonus, and acts
//! greedily on `Q_h = min(f_h + b_h, H)`.
//!
//! Levels are 0-based in this API (`h ∈ 0..H`); episodes are 1-based.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bonus::{bonus_from_anchor, compute_beta, subsample_anchor, AnchorSample, BonusConfig, BonusStats};
use crate::domain::{HorizonParams, PairMultiset, RegressionDataset, StateActionPair};
use crate::error::{Error, Result};
use crate::function_class::FunctionClass;
use crate::record::{EpisodeRecord, ExperimentRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Transitions of every finished episode, `H` per episode, in play order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    horizon: usize,
    transitions: Vec<Transition>,
}

impl ReplayBuffer {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            transitions: Vec::new(),
        }
    }

    pub fn push_episode(&mut self, episode: &[Transition]) -> Result<()> {
        if episode.len() != self.horizon {
            return Err(Error::DimensionMismatch {
                expected: self.horizon,
                actual: episode.len(),
            });
        }
        if let Some(t) = episode.iter().find(|t| !(0.0..=1.0).contains(&t.reward)) {
            return Err(Error::invalid("reward", format!("{} is outside [0, 1]", t.reward)));
        }
        self.transitions.extend_from_slice(episode);
        Ok(())
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn episodes(&self) -> usize {
        self.transitions.len() / self.horizon
    }

    /// `Z`: one copy per stored transition.
    pub fn pairs(&self) -> PairMultiset {
        self.transitions
            .iter()
            .map(|t| StateActionPair::new(t.state, t.action))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub horizon: HorizonParams,
    pub bonus: BonusConfig,
    pub seed: u64,
    /// With bonuses off the agent is plain fitted value iteration.
    pub bonus_enabled: bool,
}

impl AgentConfig {
    pub fn new(horizon: HorizonParams, bonus: BonusConfig, seed: u64) -> Self {
        Self {
            horizon,
            bonus,
            seed,
            bonus_enabled: true,
        }
    }
}

pub fn beta_for_episode<C: FunctionClass>(class: &C, cfg: &AgentConfig) -> Result<f64> {
    compute_beta(class, &cfg.horizon, &cfg.bonus.beta)
}

/// Dense per-level tables over all pairs, row-major in `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeValueStack {
    actions: usize,
    horizon: usize,
    fitted: Vec<Vec<f64>>,
    bonus: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    stats: Vec<BonusStats>,
}

impl EpisodeValueStack {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.q.first().map_or(0, |q| q.len() / self.actions)
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn q(&self, h: usize, z: StateActionPair) -> f64 {
        self.q[h][z.index(self.actions)]
    }

    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        &self.q[h][s * self.actions..(s + 1) * self.actions]
    }

    pub fn fitted(&self, h: usize, z: StateActionPair) -> f64 {
        self.fitted[h][z.index(self.actions)]
    }

    pub fn bonus(&self, h: usize, z: StateActionPair) -> f64 {
        self.bonus[h][z.index(self.actions)]
    }

    pub fn bonus_stats(&self, h: usize) -> BonusStats {
        self.stats[h]
    }

    /// `V_h(s) = max_a Q_h(s, a)`, with `V_H ≡ 0`.
    pub fn value(&self, h: usize, s: usize) -> f64 {
        if h >= self.horizon {
            return 0.0;
        }
        self.q_row(h, s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_bonus(&self) -> f64 {
        let n: usize = self.bonus.iter().map(Vec::len).sum();
        if n == 0 {
            return 0.0;
        }
        self.bonus.iter().flatten().sum::<f64>() / n as f64
    }

    pub fn policy(&self) -> PolicyTable {
        let states = self.num_states();
        PolicyTable {
            actions: (0..self.horizon)
                .map(|h| (0..states).map(|s| act(self, s, h)).collect())
                .collect(),
        }
    }
}

/// Greedy action, ties to the smallest index.
pub fn act(stack: &EpisodeValueStack, s: usize, h: usize) -> usize {
    argmax(stack.q_row(h, s))
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = a;
        }
    }
    best
}

/// A deterministic non-stationary policy, `actions[h][s]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub actions: Vec<Vec<usize>>,
}

impl PolicyTable {
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// An episodic environment the agent can only sample from.
pub trait EpisodicEnv {
    fn horizon(&self) -> usize;
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<usize>;
    /// Reward and next state for taking `action` in `state` at level `h`.
    fn step(&mut self, h: usize, state: usize, action: usize, rng: &mut dyn RngCore) -> Result<(f64, usize)>;
}

/// Regret of a policy from a realized initial state, computed from the true
/// model outside the agent.
pub trait RegretOracle {
    fn regret(&self, initial_state: usize, policy: &PolicyTable) -> Result<f64>;
}

/// Plan episode `k` from the episodes `1..k` stored in `buffer`.
pub fn plan_episode<C, R>(
    class: &C,
    buffer: &ReplayBuffer,
    cfg: &AgentConfig,
    k: usize,
    rng: &mut R,
) -> Result<EpisodeValueStack>
where
    C: FunctionClass,
    R: Rng + ?Sized,
{
    let beta = beta_for_episode(class, cfg)?;
    plan_with_beta(class, buffer, cfg, k, beta, rng)
}

fn plan_with_beta<C, R>(
    class: &C,
    buffer: &ReplayBuffer,
    cfg: &AgentConfig,
    k: usize,
    beta: f64,
    rng: &mut R,
) -> Result<EpisodeValueStack>
where
    C: FunctionClass,
    R: Rng + ?Sized,
{
    let horizon = cfg.horizon.horizon();
    if class.horizon() != horizon {
        return Err(Error::invalid(
            "horizon",
            format!("class horizon {} differs from agent horizon {horizon}", class.horizon()),
        ));
    }
    let pairs = class.all_pairs();
    let actions = class.num_actions();
    let cap = horizon as f64;
    let target_cap = 2.0 * horizon as f64 + 1.0;
    let zs = buffer.pairs();

    let mut cached: Option<AnchorSample> = None;
    let mut fitted = vec![Vec::new(); horizon];
    let mut bonus = vec![Vec::new(); horizon];
    let mut q: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut stats = vec![
        BonusStats {
            beta,
            anchor_total: 0,
            anchor_distinct: 0,
            discarded: false,
        };
        horizon
    ];

    for h in (0..horizon).rev() {
        let ctx = |e: Error| e.at_level(k, h + 1);
        let next_value = |s: usize| -> f64 {
            if h + 1 == horizon {
                0.0
            } else {
                q[h + 1][s * actions..(s + 1) * actions]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        };
        let mut data = RegressionDataset::with_capacity(buffer.transitions().len());
        for t in buffer.transitions() {
            if t.next_state >= class.num_states() {
                return Err(ctx(Error::invalid("next_state", format!("{} out of range", t.next_state))));
            }
            let target = (t.reward + next_value(t.next_state)).clamp(0.0, target_cap);
            data.push(StateActionPair::new(t.state, t.action), target).map_err(ctx)?;
        }
        let f = class.fit_erm(&data).map_err(ctx)?;
        let f_vals: Vec<f64> = pairs
            .iter()
            .map(|&z| class.evaluate(&f, z))
            .collect::<Result<_>>()
            .map_err(ctx)?;

        let b_vals = if cfg.bonus_enabled {
            let sample = match &cached {
                Some(s) => s.clone(),
                None => {
                    let s = subsample_anchor(class, &zs, &cfg.horizon, &cfg.bonus, rng).map_err(ctx)?;
                    if cfg.bonus.cache_subsample_per_episode {
                        cached = Some(s.clone());
                    }
                    s
                }
            };
            let b = bonus_from_anchor(class, &f, &sample, &cfg.horizon, beta).map_err(ctx)?;
            stats[h] = b.stats();
            pairs
                .iter()
                .map(|&z| b.value(z))
                .collect::<Result<Vec<f64>>>()
                .map_err(ctx)?
        } else {
            vec![0.0; pairs.len()]
        };

        q[h] = f_vals.iter().zip(&b_vals).map(|(f, b)| (f + b).min(cap)).collect();
        fitted[h] = f_vals;
        bonus[h] = b_vals;
    }

    Ok(EpisodeValueStack {
        actions,
        horizon,
        fitted,
        bonus,
        q,
        stats,
    })
}

/// Roll out one episode under `policy`.
pub fn rollout<E: EpisodicEnv + ?Sized>(
    env: &mut E,
    policy: &PolicyTable,
    rng: &mut dyn RngCore,
    k: usize,
) -> Result<(usize, Vec<Transition>)> {
    let env_err = |h: usize, e: Error| Error::Environment(format!("episode {k}, step {}: {e}", h + 1));
    let s0 = env.reset(rng).map_err(|e| env_err(0, e))?;
    let mut s = s0;
    let mut out = Vec::with_capacity(policy.horizon());
    for h in 0..policy.horizon() {
        let a = policy.action(h, s);
        let (r, next) = env.step(h, s, a, rng).map_err(|e| env_err(h, e))?;
        out.push(Transition {
            state: s,
            action: a,
            reward: r,
            next_state: next,
        });
        s = next;
    }
    Ok((s0, out))
}

pub fn train<C, E>(class: &C, env: &mut E, oracle: Option<&dyn RegretOracle>, cfg: &AgentConfig) -> Result<ExperimentRecord>
where
    C: FunctionClass,
    E: EpisodicEnv + ?Sized,
{
    train_with_observer(class, env, oracle, cfg, |_, _| Ok(()))
}

/// As [`train`], calling `observer(k, stack)` after planning each episode.
pub fn train_with_observer<C, E, O>(
    class: &C,
    env: &mut E,
    oracle: Option<&dyn RegretOracle>,
    cfg: &AgentConfig,
    mut observer: O,
) -> Result<ExperimentRecord>
where
    C: FunctionClass,
    E: EpisodicEnv + ?Sized,
    O: FnMut(usize, &EpisodeValueStack) -> Result<()>,
{
    let horizon = cfg.horizon.horizon();
    if env.horizon() != horizon || env.num_states() != class.num_states() || env.num_actions() != class.num_actions() {
        return Err(Error::invalid("env", "environment shape does not match the class and config"));
    }
    if cfg.horizon.episodes() == 0 {
        return Ok(ExperimentRecord::new(cfg.seed));
    }
    let beta = beta_for_episode(class, cfg)?;
    let mut agent_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut env_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    env_rng.set_stream(1);

    let mut buffer = ReplayBuffer::new(horizon);
    let mut record = ExperimentRecord::new(cfg.seed);
    let mut cum = 0.0;
    for k in 1..=cfg.horizon.episodes() {
        let stack = plan_with_beta(class, &buffer, cfg, k, beta, &mut agent_rng)?;
        observer(k, &stack)?;
        let policy = stack.policy();
        let (s0, episode) = rollout(env, &policy, &mut env_rng, k)?;
        let inst = oracle.map(|o| o.regret(s0, &policy)).transpose()?;
        if let Some(r) = inst {
            cum += r;
        }
        let levels = (0..horizon).map(|h| stack.bonus_stats(h));
        let (distinct, discarded) = levels.fold((0, false), |(d, x), s| (d.max(s.anchor_distinct), x || s.discarded));
        if discarded {
            log::debug!("episode {k}: bonus subsample discarded");
        }
        record.episodes.push(EpisodeRecord {
            episode: k,
            episode_return: episode.iter().map(|t| t.reward).sum(),
            inst_regret: inst,
            cum_regret: inst.map(|_| cum),
            mean_bonus: stack.mean_bonus(),
            subsample_distinct: distinct,
            discarded,
        });
        buffer.push_episode(&episode)?;
    }
    Ok(record)
}
