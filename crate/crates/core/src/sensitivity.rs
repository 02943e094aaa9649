//! λ-sensitivity of state-action pairs and the importance subsampler built on
//! it.
//!
//! Two sensitivity sources exist. [`exact_sensitivities`] asks the class for
//! the exact value (enumeration for finite classes, closed forms for tabular
//! and linear ones). [`estimate_sensitivity`] is the bucketed estimator, which
//! needs nothing beyond an independence oracle: at each dyadic level `α` the
//! copies of `Z` are dealt, in stored order, into `N_α` buckets; a copy lands
//! in the first bucket it is independent of, and the bucket index `j` yields
//! the score `2/j`. The estimate dominates the exact sensitivity and sums to
//! `O(dim_E · log · log)`.
//!
//! The level threshold `(H+1)²·2^{-α-1}` is on the squared scale, so the
//! independence oracle is queried at its square root.

use std::collections::HashMap;

use rand::Rng;

use crate::domain::{PairMultiset, StateActionPair};
use crate::error::{Error, Result};
use crate::function_class::{CoverKind, FunctionClass};

pub const DEFAULT_SAMPLING_CONSTANT: f64 = 72.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingParams {
    lambda: f64,
    eps: f64,
    delta: f64,
    constant: f64,
}

impl SamplingParams {
    pub fn new(lambda: f64, eps: f64, delta: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps", format!("must lie in (0, 1), got {eps}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        Ok(Self {
            lambda,
            eps,
            delta,
            constant: DEFAULT_SAMPLING_CONSTANT,
        })
    }

    /// Replace the multiplier in the sampling bound (72 by default).
    pub fn with_constant(mut self, constant: f64) -> Result<Self> {
        if !(constant > 0.0) {
            return Err(Error::invalid("constant", "must be positive"));
        }
        self.constant = constant;
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Cover radius `ε/72 · sqrt(λδ/|Z|)` for a multiset of total size `n`.
    pub fn cover_eps(&self, n: u64) -> f64 {
        self.eps / 72.0 * (self.lambda * self.delta / n.max(1) as f64).sqrt()
    }
}

/// Per-copy sensitivity estimates, aligned with [`PairMultiset::expand`].
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityEstimate {
    pub scores: Vec<f64>,
    /// Bucket count `N_α` per level.
    pub bucket_counts: Vec<usize>,
    /// `levels[α][i]` is the bucket index `j^α` of copy `i`, when recorded.
    pub levels: Option<Vec<Vec<usize>>>,
}

impl SensitivityEstimate {
    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }
}

/// Number of dyadic levels, `ceil(log2((H+1)²·n/λ))`.
pub fn level_count(horizon: usize, n: u64, lambda: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let cap2 = (horizon as f64 + 1.0).powi(2);
    (cap2 * n as f64 / lambda).log2().ceil().max(0.0) as usize
}

/// Squared-scale threshold `(H+1)²·2^{-α-1}` of level `α`.
pub fn level_threshold(horizon: usize, alpha: usize) -> f64 {
    (horizon as f64 + 1.0).powi(2) * 0.5f64.powi(alpha as i32 + 1)
}

pub fn estimate_sensitivity<C: FunctionClass>(class: &C, zs: &PairMultiset, lambda: f64) -> Result<SensitivityEstimate> {
    estimate(class, zs, lambda, false)
}

/// As [`estimate_sensitivity`], also recording every bucket assignment.
pub fn estimate_sensitivity_detailed<C: FunctionClass>(
    class: &C,
    zs: &PairMultiset,
    lambda: f64,
) -> Result<SensitivityEstimate> {
    estimate(class, zs, lambda, true)
}

fn estimate<C: FunctionClass>(class: &C, zs: &PairMultiset, lambda: f64, record: bool) -> Result<SensitivityEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
    }
    let copies: Vec<StateActionPair> = zs.expand().collect();
    let n = copies.len();
    if n == 0 {
        return Ok(SensitivityEstimate {
            scores: Vec::new(),
            bucket_counts: Vec::new(),
            levels: record.then(Vec::new),
        });
    }
    for &z in &copies {
        class.check_pair(z)?;
    }
    let levels = level_count(class.horizon(), n as u64, lambda);
    let mut scores = vec![1.0 / n as f64; n];
    let mut bucket_counts = Vec::with_capacity(levels);
    let mut recorded = record.then(|| Vec::with_capacity(levels));
    let mut assignment = vec![0usize; n];

    for alpha in 0..levels {
        let eps = level_threshold(class.horizon(), alpha).sqrt();
        let buckets = (n / class.eluder_dim_bound(eps)).max(1);
        bucket_counts.push(buckets);
        if class.independence_is_membership(eps) {
            assign_by_membership(&copies, buckets, &mut assignment);
        } else {
            assign_by_scan(class, &copies, buckets, eps, &mut assignment)?;
        }
        for (s, &j) in scores.iter_mut().zip(&assignment) {
            *s += 2.0 / j as f64;
        }
        if let Some(r) = recorded.as_mut() {
            r.push(assignment.clone());
        }
    }
    Ok(SensitivityEstimate {
        scores,
        bucket_counts,
        levels: recorded,
    })
}

/// When independence means "not yet in the bucket", the copies of a pair
/// occupy buckets `1, 2, …` in turn, so the `c`-th copy gets `min(c, N+1)`.
fn assign_by_membership(copies: &[StateActionPair], buckets: usize, out: &mut [usize]) {
    let mut seen: HashMap<StateActionPair, usize> = HashMap::new();
    for (slot, &z) in out.iter_mut().zip(copies) {
        let c = seen.entry(z).or_insert(0);
        if *c < buckets {
            *c += 1;
            *slot = *c;
        } else {
            *slot = buckets + 1;
        }
    }
}

/// Nonempty buckets always form a prefix: a copy dependent on an empty bucket
/// is dependent on every empty bucket.
fn assign_by_scan<C: FunctionClass>(
    class: &C,
    copies: &[StateActionPair],
    buckets: usize,
    eps: f64,
    out: &mut [usize],
) -> Result<()> {
    let empty = class.empty_bucket();
    let mut filled: Vec<C::Bucket> = Vec::new();
    for (slot, &z) in out.iter_mut().zip(copies) {
        let mut j = buckets + 1;
        for (idx, b) in filled.iter().enumerate() {
            if class.independent_of_bucket(z, b, eps)? {
                j = idx + 1;
                break;
            }
        }
        if j > buckets && filled.len() < buckets && class.independent_of_bucket(z, &empty, eps)? {
            filled.push(class.empty_bucket());
            j = filled.len();
        }
        if j <= buckets {
            class.bucket_insert(&mut filled[j - 1], z)?;
        }
        *slot = j;
    }
    Ok(())
}

/// Exact sensitivity of one pair.
pub fn sensitivity_exact<C: FunctionClass>(
    class: &C,
    zs: &PairMultiset,
    lambda: f64,
    z: StateActionPair,
) -> Result<f64> {
    class.sensitivity_exact(zs, lambda, z)
}

/// Exact sensitivities for every copy, aligned with [`PairMultiset::expand`].
pub fn exact_sensitivities<C: FunctionClass>(class: &C, zs: &PairMultiset, lambda: f64) -> Result<Vec<f64>> {
    let mut cache: HashMap<StateActionPair, f64> = HashMap::new();
    let mut out = Vec::with_capacity(zs.total() as usize);
    for z in zs.expand() {
        let s = match cache.get(&z) {
            Some(&s) => s,
            None => {
                let s = class.sensitivity_exact(zs, lambda, z)?;
                cache.insert(z, s);
                s
            }
        };
        out.push(s);
    }
    Ok(out)
}

/// Largest integer `n` with `1/n ≥ b`.
pub fn copies_for(b: f64) -> Result<u64> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::invalid("b", format!("must lie in (0, 1], got {b}")));
    }
    let mut n = (1.0 / b).floor().max(1.0);
    if (n + 1.0) * b <= 1.0 {
        n += 1.0;
    }
    Ok(n as u64)
}

/// Smallest `p ≥ b` with `1/p` an integer.
pub fn round_probability(b: f64) -> Result<f64> {
    Ok(1.0 / copies_for(b)? as f64)
}

/// Keep each copy `z` independently with probability `p_z`, at multiplicity
/// `1/p_z`. `sens` is aligned with [`PairMultiset::expand`]; scores are floored
/// at `1/|Z|` so a zero sensitivity still yields a valid probability.
pub fn sensitivity_sample<C, R>(
    class: &C,
    zs: &PairMultiset,
    params: &SamplingParams,
    sens: &[f64],
    rng: &mut R,
) -> Result<PairMultiset>
where
    C: FunctionClass,
    R: Rng + ?Sized,
{
    let n = zs.total();
    if sens.len() as u64 != n {
        return Err(Error::DimensionMismatch {
            expected: n as usize,
            actual: sens.len(),
        });
    }
    if n == 0 {
        return Ok(PairMultiset::new());
    }
    let log_cover = class.log_cover_size(params.cover_eps(n), CoverKind::Function);
    let factor = params.constant * (4f64.ln() + log_cover - params.delta.ln()) / (params.eps * params.eps);
    let floor = 1.0 / n as f64;

    let mut slot: HashMap<StateActionPair, usize> = HashMap::new();
    let mut entries: Vec<(StateActionPair, u64)> = Vec::new();
    for (z, &s) in zs.expand().zip(sens) {
        let b = (s.max(floor) * factor).min(1.0);
        let k = copies_for(b)?;
        if k > 1 && !rng.gen_bool(1.0 / k as f64) {
            continue;
        }
        match slot.get(&z) {
            Some(&i) => entries[i].1 += k,
            None => {
                slot.insert(z, entries.len());
                entries.push((z, k));
            }
        }
    }
    PairMultiset::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_class::{FiniteClass, TabularClass};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z(s: usize, a: usize) -> StateActionPair {
        StateActionPair::new(s, a)
    }

    #[test]
    fn round_probability_examples() {
        assert!((round_probability(0.3).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(round_probability(0.5).unwrap(), 0.5);
        assert_eq!(round_probability(1.0).unwrap(), 1.0);
        assert_eq!(copies_for(1.0 / 3.0).unwrap(), 3);
        assert!(round_probability(0.0).is_err());
        assert!(round_probability(-0.1).is_err());
        assert!(round_probability(1.5).is_err());
    }

    #[test]
    fn first_copy_gets_bucket_one_everywhere() {
        let class = TabularClass::new(2, 2, 3).unwrap();
        let zs = PairMultiset::from_pairs([z(0, 0), z(0, 0), z(1, 1)]);
        let est = estimate_sensitivity_detailed(&class, &zs, 0.5).unwrap();
        let levels = est.levels.unwrap();
        assert_eq!(levels.len(), level_count(3, 3, 0.5));
        for level in &levels {
            assert_eq!(level[0], 1);
            assert_eq!(level[2], 1);
        }
    }

    #[test]
    fn second_copy_lands_after_the_first() {
        let class = TabularClass::new(1, 1, 3).unwrap();
        let zs = PairMultiset::from_entries([(z(0, 0), 4)]).unwrap();
        let est = estimate_sensitivity_detailed(&class, &zs, 0.5).unwrap();
        // N = 4 / 1 = 4 buckets; copies go to buckets 1..4
        for level in est.levels.unwrap() {
            assert_eq!(level, vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn membership_shortcut_matches_scan() {
        let class = TabularClass::new(2, 2, 2).unwrap();
        let pairs: Vec<_> = [0usize, 1, 0, 3, 0, 0, 1, 2, 0, 0, 3, 1]
            .iter()
            .map(|&i| z(i / 2, i % 2))
            .collect();
        for buckets in [1, 2, 3, 5] {
            let mut fast = vec![0; pairs.len()];
            let mut slow = vec![0; pairs.len()];
            assign_by_membership(&pairs, buckets, &mut fast);
            assign_by_scan(&class, &pairs, buckets, 1.0, &mut slow).unwrap();
            assert_eq!(fast, slow, "N = {buckets}");
        }
    }

    #[test]
    fn estimates_respect_floor() {
        let class = FiniteClass::new(1, 2, 1, vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let zs = PairMultiset::from_pairs([z(0, 0), z(0, 1), z(0, 0)]);
        let est = estimate_sensitivity(&class, &zs, 0.1).unwrap();
        // identical members: never independent, every copy gets N + 1
        assert!(est.scores.iter().all(|&s| s >= 1.0 / 3.0));
    }

    #[test]
    fn empty_input_yields_empty_estimate() {
        let class = TabularClass::new(1, 1, 1).unwrap();
        let est = estimate_sensitivity(&class, &PairMultiset::new(), 1.0).unwrap();
        assert!(est.scores.is_empty());
    }

    #[test]
    fn certain_sampling_returns_input() {
        let class = TabularClass::new(2, 2, 3).unwrap();
        let zs = PairMultiset::from_pairs([z(0, 0), z(1, 0), z(0, 0)]);
        let params = SamplingParams::new(0.01, 0.5, 0.1).unwrap();
        let est = estimate_sensitivity(&class, &zs, params.lambda()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = sensitivity_sample(&class, &zs, &params, &est.scores, &mut rng).unwrap();
        assert_eq!(out, zs.aggregated());
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let class = TabularClass::new(2, 2, 3).unwrap();
        let zs = PairMultiset::from_entries([(z(0, 0), 30), (z(1, 1), 10)]).unwrap();
        let params = SamplingParams::new(0.01, 0.5, 0.1).unwrap().with_constant(0.01).unwrap();
        let sens = exact_sensitivities(&class, &zs, params.lambda()).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sensitivity_sample(&class, &zs, &params, &sens, &mut rng).unwrap()
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn sampler_checks_alignment() {
        let class = TabularClass::new(1, 1, 1).unwrap();
        let zs = PairMultiset::from_pairs([z(0, 0)]);
        let params = SamplingParams::new(0.01, 0.5, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sensitivity_sample(&class, &zs, &params, &[], &mut rng).is_err());
    }
}
