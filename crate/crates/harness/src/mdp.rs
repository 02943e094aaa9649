//! Tabular MDPs with known model: exact dynamic programming, policy
//! evaluation, and the sampling/regret interfaces the agent consumes.

use flsvi_core::agent::{EpisodicEnv, PolicyTable, RegretOracle};
use flsvi_core::{Error, Result};
use rand::distributions::{Distribution, WeightedIndex};
use rand::RngCore;

const ROW_TOLERANCE: f64 = 1e-12;

/// Deterministic rewards, stochastic transitions, stationary model.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    states: usize,
    actions: usize,
    horizon: usize,
    /// `transitions[s·A + a]` is the next-state distribution.
    transitions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    initial: Vec<f64>,
}

fn check_distribution(name: &'static str, row: &[f64], len: usize) -> Result<()> {
    if row.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            actual: row.len(),
        });
    }
    if row.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::invalid(name, "probabilities must be nonnegative"));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::invalid(name, format!("row sums to {total}")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        states: usize,
        actions: usize,
        horizon: usize,
        transitions: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::invalid("dimensions", "states, actions and horizon must be positive"));
        }
        let n = states * actions;
        if transitions.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: transitions.len(),
            });
        }
        for row in &transitions {
            check_distribution("transitions", row, states)?;
        }
        if rewards.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: rewards.len(),
            });
        }
        if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::invalid("rewards", format!("{r} is outside [0, 1]")));
        }
        check_distribution("initial", &initial, states)?;
        Ok(Self {
            states,
            actions,
            horizon,
            transitions,
            rewards,
            initial,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s * self.actions + a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.actions + a]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `r(s,a) + Σ_{s'} P(s'|s,a)·v(s')`.
    pub fn backup(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.reward(s, a) + self.transition(s, a).iter().zip(v).map(|(p, x)| p * x).sum::<f64>()
    }

    pub fn optimal_values(&self) -> OptimalValues {
        let (h_max, sn, an) = (self.horizon, self.states, self.actions);
        let mut q = vec![vec![0.0; sn * an]; h_max];
        let mut v = vec![vec![0.0; sn]; h_max + 1];
        for h in (0..h_max).rev() {
            for s in 0..sn {
                let mut best = f64::NEG_INFINITY;
                for a in 0..an {
                    let x = self.backup(s, a, &v[h + 1]);
                    q[h][s * an + a] = x;
                    best = best.max(x);
                }
                v[h][s] = best;
            }
        }
        OptimalValues { actions: an, q, v }
    }

    /// `V^π_h(s)` for `h ∈ 0..=H`, with `V^π_H ≡ 0`.
    pub fn evaluate_policy(&self, policy: &PolicyTable) -> Result<Vec<Vec<f64>>> {
        if policy.horizon() != self.horizon || policy.actions.iter().any(|row| row.len() != self.states) {
            return Err(Error::invalid("policy", "shape does not match the MDP"));
        }
        let mut v = vec![vec![0.0; self.states]; self.horizon + 1];
        for h in (0..self.horizon).rev() {
            for s in 0..self.states {
                let a = policy.action(h, s);
                if a >= self.actions {
                    return Err(Error::invalid("policy", format!("action {a} out of range")));
                }
                v[h][s] = self.backup(s, a, &v[h + 1]);
            }
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalValues {
    actions: usize,
    /// `q[h][s·A + a]`.
    pub q: Vec<Vec<f64>>,
    /// `v[h][s]`, `h ∈ 0..=H`.
    pub v: Vec<Vec<f64>>,
}

impl OptimalValues {
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[h][s * self.actions + a]
    }

    /// Greedy with respect to `Q*`, ties to the smallest action.
    pub fn greedy_policy(&self) -> PolicyTable {
        let states = self.v[0].len();
        PolicyTable {
            actions: self
                .q
                .iter()
                .map(|qh| {
                    (0..states)
                        .map(|s| {
                            let row = &qh[s * self.actions..(s + 1) * self.actions];
                            let mut best = 0;
                            for a in 1..row.len() {
                                if row[a] > row[best] {
                                    best = a;
                                }
                            }
                            best
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// A sampler over a [`TabularMdp`].
#[derive(Clone, Debug)]
pub struct ModelEnv {
    mdp: TabularMdp,
    rows: Vec<WeightedIndex<f64>>,
    initial: WeightedIndex<f64>,
}

impl ModelEnv {
    pub fn new(mdp: TabularMdp) -> Result<Self> {
        let weighted = |w: &[f64]| WeightedIndex::new(w).map_err(|e| Error::Environment(e.to_string()));
        let rows = mdp.transitions.iter().map(|r| weighted(r)).collect::<Result<_>>()?;
        let initial = weighted(&mdp.initial)?;
        Ok(Self { mdp, rows, initial })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl EpisodicEnv for ModelEnv {
    fn horizon(&self) -> usize {
        self.mdp.horizon
    }

    fn num_states(&self) -> usize {
        self.mdp.states
    }

    fn num_actions(&self) -> usize {
        self.mdp.actions
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(self.initial.sample(rng))
    }

    fn step(&mut self, h: usize, state: usize, action: usize, rng: &mut dyn RngCore) -> Result<(f64, usize)> {
        if h >= self.mdp.horizon || state >= self.mdp.states || action >= self.mdp.actions {
            return Err(Error::Environment(format!(
                "step (h={h}, s={state}, a={action}) outside the model"
            )));
        }
        let i = state * self.mdp.actions + action;
        Ok((self.mdp.rewards[i], self.rows[i].sample(rng)))
    }
}

/// Regret from exact values of the true model.
#[derive(Clone, Debug)]
pub struct ModelOracle {
    mdp: TabularMdp,
    optimal: OptimalValues,
}

impl ModelOracle {
    pub fn new(mdp: TabularMdp) -> Self {
        let optimal = mdp.optimal_values();
        Self { mdp, optimal }
    }

    pub fn optimal(&self) -> &OptimalValues {
        &self.optimal
    }
}

impl RegretOracle for ModelOracle {
    fn regret(&self, initial_state: usize, policy: &PolicyTable) -> Result<f64> {
        let v = self.mdp.evaluate_policy(policy)?;
        Ok(self.optimal.v[0][initial_state] - v[0][initial_state])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> TabularMdp {
        // state 0 -> 1 under action 1; reward only in state 1
        TabularMdp::new(
            2,
            2,
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = TabularMdp::new(1, 1, 1, vec![vec![0.9]], vec![0.0], vec![1.0]);
        assert!(bad.is_err());
        let bad = TabularMdp::new(1, 1, 1, vec![vec![1.0]], vec![1.5], vec![1.0]);
        assert!(bad.is_err());
    }

    #[test]
    fn one_step_is_max_reward() {
        let mdp = TabularMdp::new(
            2,
            2,
            1,
            vec![vec![0.5, 0.5]; 4],
            vec![0.1, 0.7, 0.4, 0.2],
            vec![0.5, 0.5],
        )
        .unwrap();
        let opt = mdp.optimal_values();
        assert_eq!(opt.v[0], vec![0.7, 0.4]);
    }

    #[test]
    fn reachability_decides_value() {
        let mdp = two_state();
        assert_eq!(mdp.optimal_values().v[0][0], 1.0);
        let short = TabularMdp::new(2, 2, 1, mdp.transitions.clone(), mdp.rewards.clone(), vec![1.0, 0.0]).unwrap();
        assert_eq!(short.optimal_values().v[0][0], 0.0);
    }

    #[test]
    fn greedy_optimal_policy_attains_optimum() {
        let mdp = two_state();
        let opt = mdp.optimal_values();
        let v = mdp.evaluate_policy(&opt.greedy_policy()).unwrap();
        assert_eq!(v, opt.v);
    }

    #[test]
    fn symmetric_mdp_policy_value_by_hand() {
        // From either state, action 0 stays and action 1 swaps; rewards
        // r(0,·) = 0.5, r(1,·) = 0.25. Policy: h=0 swap everywhere, h=1 stay.
        let mdp = TabularMdp::new(
            2,
            2,
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.5, 0.5, 0.25, 0.25],
            vec![1.0, 0.0],
        )
        .unwrap();
        let pi = PolicyTable {
            actions: vec![vec![1, 1], vec![0, 0]],
        };
        let v = mdp.evaluate_policy(&pi).unwrap();
        // V_1 = r; V_0(0) = 0.5 + V_1(1) = 0.75; V_0(1) = 0.25 + V_1(0) = 0.75
        assert_eq!(v[1], vec![0.5, 0.25]);
        assert_eq!(v[0], vec![0.75, 0.75]);
    }
}
