use crate::domain::{ConfidenceRegion, PairMultiset, RegressionDataset, StateActionPair};
use crate::error::{Error, Result};

use super::{CoverKind, FunctionClass};

/// Largest class for which pairwise enumeration is attempted.
pub const ENUMERATION_LIMIT: usize = 4096;

/// An explicit list of value tables over a finite `S×A`. Members are referred
/// to by their index in the list.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteClass {
    states: usize,
    actions: usize,
    horizon: usize,
    tables: Vec<Vec<f64>>,
}

impl FiniteClass {
    pub fn new(states: usize, actions: usize, horizon: usize, tables: Vec<Vec<f64>>) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::invalid("dimensions", "states, actions and horizon must be positive"));
        }
        if tables.is_empty() {
            return Err(Error::invalid("tables", "a finite class needs at least one member"));
        }
        let n = states * actions;
        let cap = horizon as f64 + 1.0;
        let mut clipped = Vec::with_capacity(tables.len());
        for t in tables {
            if t.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: t.len(),
                });
            }
            clipped.push(t.into_iter().map(|v| v.clamp(0.0, cap)).collect());
        }
        Ok(Self {
            states,
            actions,
            horizon,
            tables: clipped,
        })
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn table(&self, member: usize) -> &[f64] {
        &self.tables[member]
    }

    fn slot(&self, z: StateActionPair) -> Result<usize> {
        self.check_pair(z)?;
        Ok(z.index(self.actions))
    }

    fn member(&self, f: usize) -> Result<&[f64]> {
        self.tables
            .get(f)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid("member", format!("index {f} out of {} members", self.tables.len())))
    }
}

#[derive(Clone, Debug)]
pub struct FiniteBucket {
    counts: Vec<u64>,
    support: Vec<usize>,
}

#[derive(Debug)]
pub struct FiniteRegion {
    members: Vec<usize>,
}

impl FunctionClass for FiniteClass {
    type Function = usize;
    type Bucket = FiniteBucket;
    type PreparedRegion = FiniteRegion;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_states(&self) -> usize {
        self.states
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn evaluate(&self, f: &usize, z: StateActionPair) -> Result<f64> {
        let i = self.slot(z)?;
        Ok(self.member(*f)?[i])
    }

    fn default_function(&self) -> usize {
        0
    }

    /// First minimizer in enumeration order.
    fn fit_erm(&self, data: &RegressionDataset) -> Result<usize> {
        let slots: Vec<(usize, f64)> = data
            .triples()
            .iter()
            .map(|&(z, q)| Ok((self.slot(z)?, q)))
            .collect::<Result<_>>()?;
        let mut best = (0, f64::INFINITY);
        for (idx, t) in self.tables.iter().enumerate() {
            let loss: f64 = slots.iter().map(|&(i, q)| (t[i] - q).powi(2)).sum();
            if loss < best.1 {
                best = (idx, loss);
            }
        }
        Ok(best.0)
    }

    fn prepare_region(&self, region: &ConfidenceRegion<usize>) -> Result<FiniteRegion> {
        let center = self.member(region.center)?;
        let anchor: Vec<(usize, f64)> = region
            .anchor
            .entries()
            .iter()
            .map(|&(z, m)| Ok((self.slot(z)?, m as f64)))
            .collect::<Result<_>>()?;
        let members = self
            .tables
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                let d: f64 = anchor.iter().map(|&(i, m)| m * (t[i] - center[i]).powi(2)).sum();
                d <= region.sq_radius()
            })
            .map(|(idx, _)| idx)
            .collect();
        Ok(FiniteRegion { members })
    }

    fn prepared_width(&self, region: &FiniteRegion, z: StateActionPair) -> Result<f64> {
        let i = self.slot(z)?;
        let (lo, hi) = region
            .members
            .iter()
            .map(|&m| self.tables[m][i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Ok(if region.members.is_empty() { 0.0 } else { hi - lo })
    }

    fn empty_bucket(&self) -> FiniteBucket {
        FiniteBucket {
            counts: vec![0; self.states * self.actions],
            support: Vec::new(),
        }
    }

    fn bucket_insert(&self, bucket: &mut FiniteBucket, z: StateActionPair) -> Result<()> {
        let i = self.slot(z)?;
        if bucket.counts[i] == 0 {
            bucket.support.push(i);
        }
        bucket.counts[i] += 1;
        Ok(())
    }

    /// Exhaustive search for a witness pair.
    fn independent_of_bucket(&self, z: StateActionPair, bucket: &FiniteBucket, eps: f64) -> Result<bool> {
        let iz = self.slot(z)?;
        let eps2 = eps * eps;
        for (a, fa) in self.tables.iter().enumerate() {
            for fb in &self.tables[a + 1..] {
                if (fa[iz] - fb[iz]).abs() <= eps {
                    continue;
                }
                let mut norm2 = 0.0;
                let mut close = true;
                for &i in &bucket.support {
                    norm2 += bucket.counts[i] as f64 * (fa[i] - fb[i]).powi(2);
                    if norm2 > eps2 {
                        close = false;
                        break;
                    }
                }
                if close {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    fn eluder_dim_bound(&self, _eps: f64) -> usize {
        (self.states * self.actions).max(1)
    }

    /// The class is its own cover at every radius; a single member covers
    /// everything once `eps` reaches the value-range span.
    fn log_cover_size(&self, eps: f64, which: CoverKind) -> f64 {
        match which {
            CoverKind::Function if eps >= self.value_cap() => 0.0,
            CoverKind::Function => (self.tables.len() as f64).ln(),
            CoverKind::StateAction => ((self.states * self.actions) as f64).ln(),
        }
    }

    fn round_to_function_cover(&self, f: &usize, _eps: f64) -> usize {
        *f
    }

    fn sensitivity_exact(&self, zs: &PairMultiset, lambda: f64, z: StateActionPair) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if self.tables.len() > ENUMERATION_LIMIT {
            return Err(Error::EnumerationLimit {
                size: self.tables.len(),
                limit: ENUMERATION_LIMIT,
            });
        }
        let iz = self.slot(z)?;
        let anchor: Vec<(usize, f64)> = zs
            .aggregated()
            .entries()
            .iter()
            .map(|&(p, m)| Ok((self.slot(p)?, m as f64)))
            .collect::<Result<_>>()?;
        let mut best: f64 = 0.0;
        for (a, fa) in self.tables.iter().enumerate() {
            for fb in &self.tables[a + 1..] {
                let norm2: f64 = anchor.iter().map(|&(i, m)| m * (fa[i] - fb[i]).powi(2)).sum();
                if norm2 >= lambda {
                    best = best.max((fa[iz] - fb[iz]).powi(2) / norm2);
                }
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(s: usize, a: usize) -> StateActionPair {
        StateActionPair::new(s, a)
    }

    fn class() -> FiniteClass {
        FiniteClass::new(
            1,
            2,
            2,
            vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![1.0, 0.0], vec![3.0, 3.0]],
        )
        .unwrap()
    }

    #[test]
    fn erm_first_minimizer() {
        let c = class();
        let mut d = RegressionDataset::new();
        d.push(z(0, 0), 1.0).unwrap();
        // members 1 and 2 tie at zero loss
        assert_eq!(c.fit_erm(&d).unwrap(), 1);
        assert_eq!(c.fit_erm(&RegressionDataset::new()).unwrap(), 0);
    }

    #[test]
    fn width_by_enumeration() {
        let c = class();
        let anchor = PairMultiset::from_pairs([z(0, 0)]);
        let region = ConfidenceRegion::new(1, anchor, 1.0).unwrap();
        // members within 1 of value 1 at (0,0): 0, 1, 2
        assert_eq!(c.width_at(&region, z(0, 1)).unwrap(), 2.0);
    }

    #[test]
    fn identical_members_are_never_independent() {
        let c = FiniteClass::new(1, 2, 2, vec![vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let zs = PairMultiset::from_pairs([z(0, 0)]);
        assert!(!c.independence_test(z(0, 1), &zs, 0.1).unwrap());
        assert!(!c.independence_test(z(0, 1), &PairMultiset::new(), 0.1).unwrap());
    }

    #[test]
    fn independence_by_witness() {
        let c = class();
        let zs = PairMultiset::from_pairs([z(0, 0)]);
        // members 1 and 2 agree at (0,0) and differ by 2 at (0,1)
        assert!(c.independence_test(z(0, 1), &zs, 1.0).unwrap());
        assert!(!c.independence_test(z(0, 1), &zs, 3.0).unwrap());
    }

    #[test]
    fn single_member_has_zero_sensitivity() {
        let c = FiniteClass::new(1, 1, 2, vec![vec![1.0]]).unwrap();
        let zs = PairMultiset::from_pairs([z(0, 0)]);
        assert_eq!(c.sensitivity_exact(&zs, 0.1, z(0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn enumeration_limit_is_reported() {
        let tables = vec![vec![0.0]; ENUMERATION_LIMIT + 1];
        let c = FiniteClass::new(1, 1, 1, tables).unwrap();
        let err = c
            .sensitivity_exact(&PairMultiset::from_pairs([z(0, 0)]), 1.0, z(0, 0))
            .unwrap_err();
        assert!(err.to_string().contains("estimator"));
    }
}
