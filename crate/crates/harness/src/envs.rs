//! Environment families and their constructors.

use flsvi_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::mdp::TabularMdp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Dirichlet(1) transition rows, uniform rewards, uniform initial state.
    RandomTabular {
        seed: u64,
        states: usize,
        actions: usize,
        horizon: usize,
    },
    /// Combination lock: only the action `(s+1) mod A` advances, anything
    /// else resets to state 0; reward 1 in the absorbing last state.
    Chain {
        length: usize,
        #[serde(default)]
        horizon: Option<usize>,
        #[serde(default = "default_chain_actions")]
        actions: usize,
    },
    /// Low-rank MDP: `P(·|s,a) = Σ_i φ_i(s,a)·μ_i`, `r = φᵀθ_r`.
    LinearMdp {
        dim: usize,
        seed: u64,
        states: usize,
        actions: usize,
        horizon: usize,
    },
    /// Each row of the base mixed toward a fixed random distribution with
    /// weight `ζ/(H+1)`.
    Misspecified {
        base: Box<EnvSpec>,
        zeta: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_chain_actions() -> usize {
    2
}

/// Linear features for an MDP and the matching parameter bound.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub features: Vec<Vec<f64>>,
    pub param_bound: f64,
    pub feature_bound: f64,
}

#[derive(Clone, Debug)]
pub struct EnvInstance {
    pub mdp: TabularMdp,
    pub features: Option<FeatureMap>,
}

fn dirichlet(len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if len == 1 {
        return Ok(vec![1.0]);
    }
    let d = Dirichlet::new_with_size(1.0, len).map_err(|e| Error::invalid("dirichlet", e.to_string()))?;
    Ok(normalize(d.sample(rng)))
}

/// Renormalize so the row sums to one within rounding.
fn normalize(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    let drift: f64 = 1.0 - row.iter().sum::<f64>();
    if let Some(m) = row.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *m += drift;
    }
    row
}

fn positive(name: &'static str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::invalid(name, "must be positive"))
    } else {
        Ok(())
    }
}

impl EnvSpec {
    pub fn horizon(&self) -> usize {
        match self {
            EnvSpec::RandomTabular { horizon, .. } | EnvSpec::LinearMdp { horizon, .. } => *horizon,
            EnvSpec::Chain { length, horizon, .. } => horizon.unwrap_or(*length),
            EnvSpec::Misspecified { base, .. } => base.horizon(),
        }
    }
}

pub fn make_env(spec: &EnvSpec) -> Result<EnvInstance> {
    match spec {
        EnvSpec::RandomTabular {
            seed,
            states,
            actions,
            horizon,
        } => {
            positive("states", *states)?;
            positive("actions", *actions)?;
            positive("horizon", *horizon)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let n = states * actions;
            let transitions = (0..n).map(|_| dirichlet(*states, &mut rng)).collect::<Result<_>>()?;
            let rewards = (0..n).map(|_| rng.gen::<f64>()).collect();
            let initial = vec![1.0 / *states as f64; *states];
            let mdp = TabularMdp::new(*states, *actions, *horizon, transitions, rewards, normalize(initial))?;
            Ok(EnvInstance { mdp, features: None })
        }
        EnvSpec::Chain {
            length,
            horizon,
            actions,
        } => {
            if *length < 2 {
                return Err(Error::invalid("length", "a chain needs at least 2 states"));
            }
            positive("actions", *actions)?;
            let h = horizon.unwrap_or(*length);
            positive("horizon", h)?;
            let (n, a_n) = (*length, *actions);
            let goal = n - 1;
            let mut transitions = Vec::with_capacity(n * a_n);
            let mut rewards = Vec::with_capacity(n * a_n);
            for s in 0..n {
                for a in 0..a_n {
                    let next = if s == goal {
                        goal
                    } else if a == (s + 1) % a_n {
                        s + 1
                    } else {
                        0
                    };
                    let mut row = vec![0.0; n];
                    row[next] = 1.0;
                    transitions.push(row);
                    rewards.push(if s == goal { 1.0 } else { 0.0 });
                }
            }
            let mut initial = vec![0.0; n];
            initial[0] = 1.0;
            let mdp = TabularMdp::new(n, a_n, h, transitions, rewards, initial)?;
            Ok(EnvInstance { mdp, features: None })
        }
        EnvSpec::LinearMdp {
            dim,
            seed,
            states,
            actions,
            horizon,
        } => {
            positive("dim", *dim)?;
            positive("states", *states)?;
            positive("actions", *actions)?;
            positive("horizon", *horizon)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let n = states * actions;
            let features: Vec<Vec<f64>> = (0..n).map(|_| dirichlet(*dim, &mut rng)).collect::<Result<_>>()?;
            let measures: Vec<Vec<f64>> = (0..*dim).map(|_| dirichlet(*states, &mut rng)).collect::<Result<_>>()?;
            let theta_r: Vec<f64> = (0..*dim).map(|_| rng.gen::<f64>()).collect();
            let transitions = features
                .iter()
                .map(|phi| {
                    normalize(
                        (0..*states)
                            .map(|s2| phi.iter().zip(&measures).map(|(w, mu)| w * mu[s2]).sum())
                            .collect(),
                    )
                })
                .collect();
            let rewards = features
                .iter()
                .map(|phi| phi.iter().zip(&theta_r).map(|(w, t)| w * t).sum::<f64>().clamp(0.0, 1.0))
                .collect();
            let initial = normalize(vec![1.0 / *states as f64; *states]);
            let mdp = TabularMdp::new(*states, *actions, *horizon, transitions, rewards, initial)?;
            // θ = θ_r + Σ_i μ_i·V with 0 ≤ V ≤ H+1 has coordinates in [0, H+2]
            let param_bound = (*dim as f64).sqrt() * (*horizon as f64 + 2.0);
            Ok(EnvInstance {
                mdp,
                features: Some(FeatureMap {
                    features,
                    param_bound,
                    feature_bound: 1.0,
                }),
            })
        }
        EnvSpec::Misspecified { base, zeta, seed } => {
            if !(*zeta >= 0.0) {
                return Err(Error::invalid("zeta", "must be nonnegative"));
            }
            let inst = make_env(base)?;
            if *zeta == 0.0 {
                return Ok(inst);
            }
            let mdp = &inst.mdp;
            let t = (zeta / (mdp.horizon() as f64 + 1.0)).min(1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let u = dirichlet(mdp.states(), &mut rng)?;
            let mut transitions = Vec::with_capacity(mdp.states() * mdp.actions());
            let mut rewards = Vec::with_capacity(mdp.states() * mdp.actions());
            for s in 0..mdp.states() {
                for a in 0..mdp.actions() {
                    let row = mdp.transition(s, a).iter().zip(&u).map(|(p, q)| (1.0 - t) * p + t * q).collect();
                    transitions.push(normalize(row));
                    rewards.push(mdp.reward(s, a));
                }
            }
            let perturbed = TabularMdp::new(
                mdp.states(),
                mdp.actions(),
                mdp.horizon(),
                transitions,
                rewards,
                mdp.initial().to_vec(),
            )?;
            Ok(EnvInstance {
                mdp: perturbed,
                features: inst.features,
            })
        }
    }
}
