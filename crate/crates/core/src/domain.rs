//! Value objects shared by every other module: state-action pairs, weighted
//! pair multisets, regression datasets, confidence regions and the two
//! empirical norms (`‖f‖_D` over a dataset, `‖f - g‖_Z` over a multiset).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_class::FunctionClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateActionPair {
    pub state: usize,
    pub action: usize,
}

impl StateActionPair {
    pub const fn new(state: usize, action: usize) -> Self {
        Self { state, action }
    }

    /// Row-major index into an `S x A` table.
    pub fn index(self, num_actions: usize) -> usize {
        self.state * num_actions + self.action
    }
}

impl fmt::Display for StateActionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(s={}, a={})", self.state, self.action)
    }
}

/// Multiset of state-action pairs stored as `(pair, multiplicity)` entries.
///
/// Entry order is preserved; the same pair may occur in several entries until
/// [`PairMultiset::aggregated`] merges them. Order matters to the bucketed
/// sensitivity estimator, which processes copies in stored order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairMultiset {
    entries: Vec<(StateActionPair, u64)>,
}

impl PairMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    /// One entry of multiplicity 1 per pair, in iteration order.
    pub fn from_pairs<I: IntoIterator<Item = StateActionPair>>(pairs: I) -> Self {
        Self {
            entries: pairs.into_iter().map(|z| (z, 1)).collect(),
        }
    }

    pub fn from_entries<I: IntoIterator<Item = (StateActionPair, u64)>>(entries: I) -> Result<Self> {
        let mut out = Self::new();
        for (z, m) in entries {
            out.push(z, m)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, pair: StateActionPair, multiplicity: u64) -> Result<()> {
        if multiplicity == 0 {
            return Err(Error::invalid("multiplicity", "must be at least 1"));
        }
        self.entries.push((pair, multiplicity));
        Ok(())
    }

    pub fn entries(&self) -> &[(StateActionPair, u64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total size `Σ multiplicities`.
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, m)| m).sum()
    }

    pub fn distinct_count(&self) -> usize {
        let mut seen: Vec<StateActionPair> = self.entries.iter().map(|&(z, _)| z).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    pub fn multiplicity_of(&self, pair: StateActionPair) -> u64 {
        self.entries
            .iter()
            .filter(|&&(z, _)| z == pair)
            .map(|&(_, m)| m)
            .sum()
    }

    /// Every copy, one item per unit of multiplicity, in stored order.
    pub fn expand(&self) -> impl Iterator<Item = StateActionPair> + '_ {
        self.entries
            .iter()
            .flat_map(|&(z, m)| std::iter::repeat_n(z, m as usize))
    }

    /// Merge repeated pairs, keeping first-appearance order.
    pub fn aggregated(&self) -> PairMultiset {
        let mut slot: HashMap<StateActionPair, usize> = HashMap::new();
        let mut entries: Vec<(StateActionPair, u64)> = Vec::new();
        for &(z, m) in &self.entries {
            match slot.get(&z) {
                Some(&i) => entries[i].1 += m,
                None => {
                    slot.insert(z, entries.len());
                    entries.push((z, m));
                }
            }
        }
        PairMultiset { entries }
    }
}

impl FromIterator<StateActionPair> for PairMultiset {
    fn from_iter<I: IntoIterator<Item = StateActionPair>>(iter: I) -> Self {
        Self::from_pairs(iter)
    }
}

/// Regression triples `(s, a, q)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegressionDataset {
    triples: Vec<(StateActionPair, f64)>,
}

impl RegressionDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            triples: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, pair: StateActionPair, target: f64) -> Result<()> {
        if !target.is_finite() {
            return Err(Error::invalid("target", format!("non-finite target {target} at {pair}")));
        }
        self.triples.push((pair, target));
        Ok(())
    }

    pub fn triples(&self) -> &[(StateActionPair, f64)] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Targets must lie in `[0, 2H + 1]`; returns the first offending triple.
    pub fn check_target_range(&self, horizon: usize) -> Result<()> {
        let hi = 2.0 * horizon as f64 + 1.0;
        match self.triples.iter().find(|&&(_, q)| !(0.0..=hi).contains(&q)) {
            Some(&(z, q)) => Err(Error::invalid(
                "target",
                format!("target {q} at {z} outside [0, {hi}]"),
            )),
            None => Ok(()),
        }
    }
}

/// `{f : ‖f - center‖²_anchor ≤ sq_radius}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceRegion<F> {
    pub center: F,
    pub anchor: PairMultiset,
    sq_radius: f64,
}

impl<F> ConfidenceRegion<F> {
    pub fn new(center: F, anchor: PairMultiset, sq_radius: f64) -> Result<Self> {
        if !(sq_radius >= 0.0) {
            return Err(Error::invalid("sq_radius", format!("must be nonnegative, got {sq_radius}")));
        }
        Ok(Self {
            center,
            anchor,
            sq_radius,
        })
    }

    pub fn sq_radius(&self) -> f64 {
        self.sq_radius
    }

    pub fn contains<C>(&self, class: &C, f: &F) -> Result<bool>
    where
        C: FunctionClass<Function = F>,
    {
        Ok(sq_set_distance(class, f, &self.center, &self.anchor)? <= self.sq_radius)
    }
}

/// Horizon `H`, episode count `K`, and failure probability `δ`; `T = K·H`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonParams {
    horizon: usize,
    episodes: usize,
    delta: f64,
}

impl HorizonParams {
    pub fn new(horizon: usize, episodes: usize, delta: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        Ok(Self {
            horizon,
            episodes,
            delta,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn total_steps(&self) -> usize {
        self.horizon * self.episodes
    }
}

/// `‖f‖_D = (Σ_t (f(s_t, a_t) - q_t)²)^{1/2}`.
pub fn dataset_norm<C: FunctionClass>(class: &C, f: &C::Function, data: &RegressionDataset) -> Result<f64> {
    let mut acc = 0.0;
    for &(z, q) in data.triples() {
        let r = class.evaluate(f, z)? - q;
        acc += r * r;
    }
    Ok(acc.sqrt())
}

/// Squared multiplicity-weighted distance `Σ m·(f(z) - g(z))²`.
pub fn sq_set_distance<C: FunctionClass>(
    class: &C,
    f: &C::Function,
    g: &C::Function,
    zs: &PairMultiset,
) -> Result<f64> {
    let mut acc = 0.0;
    for &(z, m) in zs.entries() {
        let d = class.evaluate(f, z)? - class.evaluate(g, z)?;
        acc += m as f64 * d * d;
    }
    Ok(acc)
}

/// `‖f - g‖_Z`, multiplicity-aware.
pub fn set_norm<C: FunctionClass>(
    class: &C,
    f: &C::Function,
    g: &C::Function,
    zs: &PairMultiset,
) -> Result<f64> {
    Ok(sq_set_distance(class, f, g, zs)?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_class::{TabularClass, TabularFunction};

    fn z(s: usize, a: usize) -> StateActionPair {
        StateActionPair::new(s, a)
    }

    #[test]
    fn dataset_norm_exact_fit_is_zero() {
        let class = TabularClass::new(2, 2, 3).unwrap();
        let f = TabularFunction::from_values(&class, vec![1.0, 2.0, 0.5, 3.0]).unwrap();
        let mut d = RegressionDataset::new();
        d.push(z(0, 1), 2.0).unwrap();
        d.push(z(1, 0), 0.5).unwrap();
        assert_eq!(dataset_norm(&class, &f, &d).unwrap(), 0.0);
    }

    #[test]
    fn dataset_norm_direct_formula() {
        let class = TabularClass::new(1, 1, 3).unwrap();
        let f = class.zero();
        let mut d = RegressionDataset::new();
        d.push(z(0, 0), 2.0).unwrap();
        d.push(z(0, 0), 1.0).unwrap();
        assert!((dataset_norm(&class, &f, &d).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(dataset_norm(&class, &f, &RegressionDataset::new()).unwrap(), 0.0);
    }

    #[test]
    fn set_norm_counts_multiplicity() {
        let class = TabularClass::new(1, 1, 3).unwrap();
        let f = TabularFunction::from_values(&class, vec![3.0]).unwrap();
        let g = TabularFunction::from_values(&class, vec![1.0]).unwrap();
        let zs = PairMultiset::from_entries([(z(0, 0), 3)]).unwrap();
        assert!((set_norm(&class, &f, &g, &zs).unwrap() - 12f64.sqrt()).abs() < 1e-15);
        assert_eq!(set_norm(&class, &f, &f, &zs).unwrap(), 0.0);
    }

    #[test]
    fn invalid_pair_names_the_pair() {
        let class = TabularClass::new(2, 2, 3).unwrap();
        let mut d = RegressionDataset::new();
        d.push(z(5, 0), 1.0).unwrap();
        let err = dataset_norm(&class, &class.zero(), &d).unwrap_err();
        assert!(err.to_string().contains("(s=5, a=0)"), "{err}");
    }

    #[test]
    fn multiset_basics() {
        let mut zs = PairMultiset::new();
        zs.push(z(0, 0), 2).unwrap();
        zs.push(z(1, 0), 1).unwrap();
        zs.push(z(0, 0), 3).unwrap();
        assert!(zs.push(z(0, 0), 0).is_err());
        assert_eq!(zs.total(), 6);
        assert_eq!(zs.distinct_count(), 2);
        assert_eq!(zs.multiplicity_of(z(0, 0)), 5);
        let agg = zs.aggregated();
        assert_eq!(agg.entries(), &[(z(0, 0), 5), (z(1, 0), 1)]);
        let copies: Vec<_> = zs.expand().collect();
        assert_eq!(copies.len(), 6);
        assert_eq!(copies[2], z(1, 0));
    }

    #[test]
    fn region_rejects_negative_radius() {
        assert!(ConfidenceRegion::new(0usize, PairMultiset::new(), -1.0).is_err());
        assert!(ConfidenceRegion::new(0usize, PairMultiset::new(), f64::NAN).is_err());
    }

    #[test]
    fn horizon_params_validate() {
        let hp = HorizonParams::new(5, 20, 0.1).unwrap();
        assert_eq!(hp.total_steps(), 100);
        assert!(HorizonParams::new(5, 20, 1.0).is_err());
        assert!(HorizonParams::new(0, 20, 0.5).is_err());
    }

    #[test]
    fn target_range_check() {
        let mut d = RegressionDataset::new();
        d.push(z(0, 0), 11.0).unwrap();
        assert!(d.check_target_range(5).is_ok());
        d.push(z(0, 0), 11.1).unwrap();
        assert!(d.check_target_range(5).is_err());
        assert!(d.push(z(0, 0), f64::INFINITY).is_err());
    }
}
