use crate::domain::{ConfidenceRegion, PairMultiset, RegressionDataset, StateActionPair};
use crate::error::{Error, Result};

use super::{quantize, CoverKind, FunctionClass};

/// Every function `S×A → [0, H+1]` on finite state and action sets.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularClass {
    states: usize,
    actions: usize,
    horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularFunction {
    values: Vec<f64>,
}

impl TabularFunction {
    /// Row-major `S x A` values, clipped into the value range.
    pub fn from_values(class: &TabularClass, values: Vec<f64>) -> Result<Self> {
        let n = class.states * class.actions;
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: values.len(),
            });
        }
        let cap = class.value_cap();
        Ok(Self {
            values: values.into_iter().map(|v| v.clamp(0.0, cap)).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TabularClass {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::invalid("dimensions", "state and action counts must be positive"));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        Ok(Self {
            states,
            actions,
            horizon,
        })
    }

    pub fn zero(&self) -> TabularFunction {
        TabularFunction {
            values: vec![0.0; self.states * self.actions],
        }
    }

    fn slot(&self, z: StateActionPair) -> Result<usize> {
        self.check_pair(z)?;
        Ok(z.index(self.actions))
    }

    fn counts(&self, zs: &PairMultiset) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.states * self.actions];
        for &(z, m) in zs.entries() {
            counts[self.slot(z)?] += m;
        }
        Ok(counts)
    }
}

#[derive(Debug)]
pub struct TabularRegion {
    center: Vec<f64>,
    counts: Vec<u64>,
    sq_radius: f64,
}

impl FunctionClass for TabularClass {
    type Function = TabularFunction;
    type Bucket = Vec<u64>;
    type PreparedRegion = TabularRegion;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_states(&self) -> usize {
        self.states
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn evaluate(&self, f: &TabularFunction, z: StateActionPair) -> Result<f64> {
        Ok(f.values[self.slot(z)?])
    }

    fn default_function(&self) -> TabularFunction {
        self.zero()
    }

    /// Per-pair mean of the targets, clipped; unseen pairs stay at zero.
    fn fit_erm(&self, data: &RegressionDataset) -> Result<TabularFunction> {
        let n = self.states * self.actions;
        let mut sums = vec![0.0; n];
        let mut counts = vec![0u64; n];
        for &(z, q) in data.triples() {
            let i = self.slot(z)?;
            sums[i] += q;
            counts[i] += 1;
        }
        let cap = self.value_cap();
        let values = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64).clamp(0.0, cap) })
            .collect();
        Ok(TabularFunction { values })
    }

    fn prepare_region(&self, region: &ConfidenceRegion<TabularFunction>) -> Result<TabularRegion> {
        Ok(TabularRegion {
            center: region.center.values.clone(),
            counts: self.counts(&region.anchor)?,
            sq_radius: region.sq_radius(),
        })
    }

    /// The region constrains `z` only through its own anchor multiplicity `m`:
    /// `|f(z) - c(z)| ≤ sqrt(r/m)`, intersected with the value range.
    fn prepared_width(&self, region: &TabularRegion, z: StateActionPair) -> Result<f64> {
        let i = self.slot(z)?;
        let cap = self.value_cap();
        let m = region.counts[i];
        if m == 0 {
            return Ok(cap);
        }
        let rho = (region.sq_radius / m as f64).sqrt();
        let c = region.center[i];
        Ok(((c + rho).min(cap) - (c - rho).max(0.0)).max(0.0))
    }

    fn empty_bucket(&self) -> Vec<u64> {
        vec![0; self.states * self.actions]
    }

    fn bucket_insert(&self, bucket: &mut Vec<u64>, z: StateActionPair) -> Result<()> {
        bucket[self.slot(z)?] += 1;
        Ok(())
    }

    fn independent_of_bucket(&self, z: StateActionPair, bucket: &Vec<u64>, eps: f64) -> Result<bool> {
        Ok(bucket[self.slot(z)?] == 0 && eps < self.value_cap())
    }

    fn independence_is_membership(&self, eps: f64) -> bool {
        eps < self.value_cap()
    }

    fn eluder_dim_bound(&self, _eps: f64) -> usize {
        (self.states * self.actions).max(1)
    }

    fn log_cover_size(&self, eps: f64, which: CoverKind) -> f64 {
        let sa = (self.states * self.actions) as f64;
        match which {
            CoverKind::Function => sa * (1.0 + self.value_cap() / (2.0 * eps)).ln(),
            CoverKind::StateAction => sa.ln(),
        }
    }

    fn round_to_function_cover(&self, f: &TabularFunction, eps: f64) -> TabularFunction {
        let cap = self.value_cap();
        TabularFunction {
            values: f
                .values
                .iter()
                .map(|&v| quantize(v, 2.0 * eps).clamp(0.0, cap))
                .collect(),
        }
    }

    /// Closed form: differing only at `z` gives ratio `1/m` whenever
    /// `m·(H+1)² ≥ λ`; otherwise the rest of `Z` must make up the norm and the
    /// best ratio is `(H+1)²/λ`, feasible iff `|Z|·(H+1)² ≥ λ`.
    fn sensitivity_exact(&self, zs: &PairMultiset, lambda: f64, z: StateActionPair) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        self.check_pair(z)?;
        let cap2 = self.value_cap().powi(2);
        let m = zs.multiplicity_of(z) as f64;
        let total = zs.total() as f64;
        if total * cap2 < lambda {
            Ok(0.0)
        } else if m * cap2 >= lambda {
            Ok(1.0 / m)
        } else {
            Ok(cap2 / lambda)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(s: usize, a: usize) -> StateActionPair {
        StateActionPair::new(s, a)
    }

    #[test]
    fn evaluate_lookup() {
        let class = TabularClass::new(2, 2, 4).unwrap();
        let f = TabularFunction::from_values(&class, vec![0.0, 3.5, 1.0, 9.0]).unwrap();
        assert_eq!(class.evaluate(&f, z(0, 1)).unwrap(), 3.5);
        // clipped at H + 1
        assert_eq!(class.evaluate(&f, z(1, 1)).unwrap(), 5.0);
    }

    #[test]
    fn erm_is_mean_of_targets() {
        let class = TabularClass::new(2, 2, 4).unwrap();
        let mut d = RegressionDataset::new();
        d.push(z(1, 0), 1.0).unwrap();
        d.push(z(1, 0), 3.0).unwrap();
        let f = class.fit_erm(&d).unwrap();
        assert_eq!(f.values(), &[0.0, 0.0, 2.0, 0.0]);
        assert_eq!(class.fit_erm(&RegressionDataset::new()).unwrap(), class.zero());
    }

    #[test]
    fn width_closed_form() {
        let class = TabularClass::new(2, 1, 3).unwrap();
        let center = TabularFunction::from_values(&class, vec![2.0, 1.0]).unwrap();
        let anchor = PairMultiset::from_entries([(z(0, 0), 4)]).unwrap();
        let region = ConfidenceRegion::new(center.clone(), anchor.clone(), 1.0).unwrap();
        // rho = 0.5 around 2.0
        assert!((class.width_at(&region, z(0, 0)).unwrap() - 1.0).abs() < 1e-15);
        // unanchored pair spans the full range
        assert_eq!(class.width_at(&region, z(1, 0)).unwrap(), 4.0);
        let degenerate = ConfidenceRegion::new(center.clone(), anchor.clone(), 0.0).unwrap();
        assert_eq!(class.width_at(&degenerate, z(0, 0)).unwrap(), 0.0);
        // range clipping: rho = 3 around 2 -> [0, 4]
        let wide = ConfidenceRegion::new(center, anchor, 36.0).unwrap();
        assert_eq!(class.width_at(&wide, z(0, 0)).unwrap(), 4.0);
    }

    #[test]
    fn independence_rules() {
        let class = TabularClass::new(2, 2, 4).unwrap();
        let zs = PairMultiset::from_pairs([z(0, 0)]);
        assert!(class.independence_test(z(1, 1), &zs, 1.0).unwrap());
        assert!(!class.independence_test(z(0, 0), &zs, 1.0).unwrap());
        // eps at the range span: nothing can differ by more
        assert!(!class.independence_test(z(1, 1), &zs, 5.0).unwrap());
    }

    #[test]
    fn cover_sizes() {
        let class = TabularClass::new(2, 2, 3).unwrap();
        let eps = 4.0 / 2.0;
        assert!((class.log_cover_size(eps, CoverKind::Function) - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(class.log_cover_size(0.1, CoverKind::StateAction), 4f64.ln());
        assert!(class.log_cover_size(1e12, CoverKind::Function) < 1e-9);
    }

    #[test]
    fn rounding_to_grid() {
        let class = TabularClass::new(1, 2, 3).unwrap();
        let f = TabularFunction::from_values(&class, vec![1.3, 1.0]).unwrap();
        let r = class.round_to_function_cover(&f, 0.5);
        assert_eq!(r.values(), &[1.0, 1.0]);
        // grid points are fixed points
        assert_eq!(class.round_to_function_cover(&r, 0.5), r);
        // rounding up past H + 1 clips
        let top = TabularFunction::from_values(&class, vec![3.9, 4.0]).unwrap();
        let r = class.round_to_function_cover(&top, 0.75);
        assert!(r.values().iter().all(|&v| v <= 4.0));
        assert!((r.values()[0] - 3.9).abs() <= 0.75);
    }

    #[test]
    fn exact_sensitivity_closed_form() {
        let class = TabularClass::new(2, 2, 3).unwrap();
        let zs = PairMultiset::from_entries([(z(0, 0), 4)]).unwrap();
        assert!((class.sensitivity_exact(&zs, 1.0, z(0, 0)).unwrap() - 0.25).abs() < 1e-15);
        // 4·16 < 100: infeasible
        assert_eq!(class.sensitivity_exact(&zs, 100.0, z(0, 0)).unwrap(), 0.0);
        let zs = PairMultiset::from_entries([(z(0, 0), 1), (z(1, 0), 9)]).unwrap();
        // m·16 = 16 < 20 ≤ 160
        assert!((class.sensitivity_exact(&zs, 20.0, z(0, 0)).unwrap() - 16.0 / 20.0).abs() < 1e-15);
    }
}
