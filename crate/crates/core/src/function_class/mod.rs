//! The pluggable value-function class `F ⊆ {f : S×A → [0, H+1]}`.
//!
//! Each implementation provides evaluation, least-squares fitting, widths of
//! confidence regions, ε-independence tests, eluder-dimension bounds and
//! analytic cover sizes. Three implementations ship: [`TabularClass`] (all
//! bounded tables), [`LinearClass`] (clipped `θᵀφ(s,a)` with `‖θ‖ ≤ B`) and
//! [`FiniteClass`] (an explicit list of value tables).

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::domain::{ConfidenceRegion, PairMultiset, RegressionDataset, StateActionPair};
use crate::error::Result;

mod finite;
mod linear;
mod tabular;

pub use finite::FiniteClass;
pub use linear::{LinearClass, LinearFunction};
pub use tabular::{TabularClass, TabularFunction};

/// Which cover a log-size query refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverKind {
    Function,
    StateAction,
}

pub trait FunctionClass {
    type Function: Clone + Debug + PartialEq;
    /// Incremental state for repeated independence tests against a growing set.
    type Bucket: Clone + Debug;
    /// A confidence region preprocessed for fast width evaluation.
    type PreparedRegion: Debug;

    fn horizon(&self) -> usize;

    fn num_states(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// Upper end of the value range, `H + 1`.
    fn value_cap(&self) -> f64 {
        self.horizon() as f64 + 1.0
    }

    fn evaluate(&self, f: &Self::Function, z: StateActionPair) -> Result<f64>;

    /// Canonical member returned for an empty dataset.
    fn default_function(&self) -> Self::Function;

    /// A minimizer of `‖f‖²_D` over the class.
    fn fit_erm(&self, data: &RegressionDataset) -> Result<Self::Function>;

    fn prepare_region(&self, region: &ConfidenceRegion<Self::Function>) -> Result<Self::PreparedRegion>;

    fn prepared_width(&self, region: &Self::PreparedRegion, z: StateActionPair) -> Result<f64>;

    /// `max_{f, f' in region} f(z) - f'(z)`.
    fn width_at(&self, region: &ConfidenceRegion<Self::Function>, z: StateActionPair) -> Result<f64> {
        let prepared = self.prepare_region(region)?;
        self.prepared_width(&prepared, z)
    }

    fn empty_bucket(&self) -> Self::Bucket;

    fn bucket_insert(&self, bucket: &mut Self::Bucket, z: StateActionPair) -> Result<()>;

    fn independent_of_bucket(&self, z: StateActionPair, bucket: &Self::Bucket, eps: f64) -> Result<bool>;

    /// True iff some `f, f'` satisfy `‖f - f'‖_Z ≤ eps` and `|f(z) - f'(z)| > eps`.
    fn independence_test(&self, z: StateActionPair, zs: &PairMultiset, eps: f64) -> Result<bool> {
        let mut bucket = self.empty_bucket();
        for &(pair, m) in zs.entries() {
            for _ in 0..m {
                self.bucket_insert(&mut bucket, pair)?;
            }
        }
        self.independent_of_bucket(z, &bucket, eps)
    }

    /// Whether, at this `eps`, a pair is independent of a set exactly when the
    /// set does not contain it. Lets the sensitivity estimator skip bucket scans.
    fn independence_is_membership(&self, _eps: f64) -> bool {
        false
    }

    /// Upper bound on `dim_E(F, eps)`; never zero.
    fn eluder_dim_bound(&self, eps: f64) -> usize;

    /// Natural log of the analytic cover size at radius `eps`.
    fn log_cover_size(&self, eps: f64, which: CoverKind) -> f64;

    fn round_to_function_cover(&self, f: &Self::Function, eps: f64) -> Self::Function;

    fn round_to_sa_cover(&self, z: StateActionPair, _eps: f64) -> StateActionPair {
        z
    }

    /// The λ-sensitivity of `z` with respect to `zs`, computed exactly (or by
    /// the class's closed-form surrogate).
    fn sensitivity_exact(&self, zs: &PairMultiset, lambda: f64, z: StateActionPair) -> Result<f64>;

    fn check_pair(&self, z: StateActionPair) -> Result<()> {
        if z.state < self.num_states() && z.action < self.num_actions() {
            Ok(())
        } else {
            Err(crate::Error::InvalidPair {
                pair: z,
                states: self.num_states(),
                actions: self.num_actions(),
            })
        }
    }

    fn all_pairs(&self) -> Vec<StateActionPair> {
        let a = self.num_actions();
        (0..self.num_states() * a)
            .map(|i| StateActionPair::new(i / a, i % a))
            .collect()
    }
}

/// Nearest grid point `k·spacing`, ties toward the smaller value.
pub(crate) fn quantize(v: f64, spacing: f64) -> f64 {
    let q = v / spacing;
    (q - 0.5).ceil() * spacing
}

/// Length of a greedily built sequence whose every element is
/// `eps`-independent of its prefix. A lower bound on `dim_E(F, eps)`.
pub fn greedy_eluder_sequence<C: FunctionClass>(
    class: &C,
    candidates: &[StateActionPair],
    eps: f64,
) -> Result<usize> {
    let mut prefix = class.empty_bucket();
    let mut len = 0;
    for &z in candidates {
        if class.independent_of_bucket(z, &prefix, eps)? {
            class.bucket_insert(&mut prefix, z)?;
            len += 1;
        }
    }
    Ok(len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_ties_toward_smaller() {
        assert_eq!(quantize(1.3, 1.0), 1.0);
        assert_eq!(quantize(1.5, 1.0), 1.0);
        assert_eq!(quantize(1.6, 1.0), 2.0);
        assert_eq!(quantize(0.0, 0.25), 0.0);
        assert_eq!(quantize(0.75, 0.5), 0.5);
    }

    #[test]
    fn greedy_sequence_tabular() {
        let class = TabularClass::new(3, 2, 4).unwrap();
        let all = class.all_pairs();
        assert_eq!(greedy_eluder_sequence(&class, &all, 1.0).unwrap(), 6);
        assert_eq!(class.eluder_dim_bound(1.0), 6);
        let z = StateActionPair::new(1, 1);
        assert_eq!(greedy_eluder_sequence(&class, &[z, z], 1.0).unwrap(), 1);
        assert_eq!(greedy_eluder_sequence(&class, &[], 1.0).unwrap(), 0);
    }
}
