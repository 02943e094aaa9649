//! Monte Carlo and exhaustive checks of the sampling, sensitivity, bonus and
//! optimism guarantees.

use std::collections::BTreeMap;

use flsvi_core::bonus::{stable_bonus, BetaParams, BonusConfig, SensitivitySource};
use flsvi_core::domain::{sq_set_distance, ConfidenceRegion, HorizonParams, PairMultiset, StateActionPair};
use flsvi_core::sensitivity::{
    estimate_sensitivity, exact_sensitivities, sensitivity_sample, SamplingParams,
    DEFAULT_SAMPLING_CONSTANT,
};
use flsvi_core::{FiniteClass, FunctionClass, TabularClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::envs::EnvSpec;
use crate::runner::run_seed;
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
}

impl Report {
    fn new(name: &str, passed: bool, metrics: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            passed,
            metrics: metrics.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn line(&self) -> String {
        let m: Vec<String> = self.metrics.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, m.join(" "))
    }
}

/// `sqrt(q(1-q)/n)`.
pub fn binomial_se(q: f64, n: usize) -> f64 {
    (q * (1.0 - q) / n as f64).sqrt()
}

fn z(s: usize, a: usize) -> StateActionPair {
    StateActionPair::new(s, a)
}

fn random_pairs<R: Rng>(states: usize, actions: usize, n: usize, rng: &mut R) -> PairMultiset {
    (0..n)
        .map(|_| z(rng.gen_range(0..states), rng.gen_range(0..actions)))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct DominanceParams {
    pub instances: usize,
    pub max_functions: usize,
    pub max_pairs: usize,
    pub max_horizon: usize,
    pub seed: u64,
}

impl Default for DominanceParams {
    fn default() -> Self {
        Self {
            instances: 50,
            max_functions: 50,
            max_pairs: 40,
            max_horizon: 4,
            seed: 0,
        }
    }
}

/// Random finite classes of value-grid tables: the estimator must dominate
/// the exact sensitivity at every copy.
pub fn sensitivity_dominance(p: DominanceParams) -> Result<Report, HarnessError> {
    let results: Vec<(usize, usize)> = (0..p.instances)
        .into_par_iter()
        .map(|i| -> Result<(usize, usize), HarnessError> {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            rng.set_stream(i as u64);
            let states = rng.gen_range(1..=3);
            let actions = rng.gen_range(1..=3);
            let horizon = rng.gen_range(1..=p.max_horizon);
            let members = rng.gen_range(2..=p.max_functions);
            let levels = 2 * (horizon + 1);
            let tables = (0..members)
                .map(|_| {
                    (0..states * actions)
                        .map(|_| rng.gen_range(0..=levels) as f64 * 0.5)
                        .collect()
                })
                .collect();
            let class = FiniteClass::new(states, actions, horizon, tables)?;
            let n = rng.gen_range(1..=p.max_pairs);
            let zs = random_pairs(states, actions, n, &mut rng);
            let lambda = 10f64.powf(rng.gen_range(-3.0..0.0));
            let est = estimate_sensitivity(&class, &zs, lambda)?;
            let exact = exact_sensitivities(&class, &zs, lambda)?;
            let bad = est.scores.iter().zip(&exact).filter(|(e, x)| **e + 1e-12 < **x).count();
            Ok((bad, exact.len()))
        })
        .collect::<Result<_, _>>()?;
    let violations: usize = results.iter().map(|r| r.0).sum();
    let checked: usize = results.iter().map(|r| r.1).sum();
    Ok(Report::new(
        "sensitivity_dominance",
        violations == 0,
        &[
            ("instances", p.instances as f64),
            ("copies_checked", checked as f64),
            ("violations", violations as f64),
        ],
    ))
}

#[derive(Clone, Copy, Debug)]
pub struct SumBoundParams {
    pub instances: usize,
    pub min_pairs: usize,
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for SumBoundParams {
    fn default() -> Self {
        Self {
            instances: 50,
            min_pairs: 2,
            max_pairs: 40,
            seed: 0,
        }
    }
}

/// `Σ estimate ≤ 4·dim_E·log₂((H+1)²|Z|/λ)·ln|Z|` with `dim_E = |S||A|`.
pub fn sensitivity_sum_bound(p: SumBoundParams) -> Result<Report, HarnessError> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for i in 0..p.instances {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(i as u64);
        let states = rng.gen_range(1..=4);
        let actions = rng.gen_range(1..=3);
        let horizon = rng.gen_range(1..=4);
        let class = TabularClass::new(states, actions, horizon)?;
        let n = rng.gen_range(p.min_pairs..=p.max_pairs);
        let zs = random_pairs(states, actions, n, &mut rng);
        let lambda = 10f64.powf(rng.gen_range(-4.0..-1.0));
        let total = estimate_sensitivity(&class, &zs, lambda)?.total();
        let nf = n as f64;
        let log_term = ((horizon as f64 + 1.0).powi(2) * nf / lambda).log2();
        let bound = 4.0 * (states * actions) as f64 * log_term * nf.ln();
        worst = worst.max(total / bound);
        if total > bound {
            violations += 1;
        }
    }
    Ok(Report::new(
        "sensitivity_sum_bound",
        violations == 0,
        &[
            ("instances", p.instances as f64),
            ("violations", violations as f64),
            ("max_sum_over_bound", worst),
        ],
    ))
}

/// A small finite class and a large multiset over three of its pairs, sized
/// so that the sampling probabilities at the default constant are below one.
pub fn sampling_fixture() -> Result<(FiniteClass, PairMultiset), HarnessError> {
    let mut tables = Vec::new();
    for a in [0.0, 0.5, 1.0] {
        for b in [0.0, 1.0] {
            tables.push(vec![a, b, 1.0 - a / 2.0]);
        }
    }
    let class = FiniteClass::new(1, 3, 2, tables)?;
    let zs = PairMultiset::from_entries([(z(0, 0), 8000), (z(0, 1), 10000), (z(0, 2), 12000)])?;
    Ok((class, zs))
}

#[derive(Clone, Copy, Debug)]
pub struct SamplingCheckParams {
    pub seeds: usize,
    pub lambda: f64,
    pub eps: f64,
    pub delta: f64,
    pub constant: f64,
}

impl Default for SamplingCheckParams {
    fn default() -> Self {
        Self {
            seeds: 500,
            lambda: 1e-3,
            eps: 0.5,
            delta: 0.1,
            constant: DEFAULT_SAMPLING_CONSTANT,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SamplingReports {
    pub norm_preservation: Report,
    pub size_bounds: Report,
}

/// Norm sandwich across all member pairs and the size bounds of the sample.
pub fn sampling_suite<C: FunctionClass + Sync>(
    class: &C,
    functions: &[C::Function],
    zs: &PairMultiset,
    p: SamplingCheckParams,
) -> Result<SamplingReports, HarnessError>
where
    C::Function: Sync,
{
    let params = SamplingParams::new(p.lambda, p.eps, p.delta)?.with_constant(p.constant)?;
    let sens = exact_sensitivities(class, zs, p.lambda)?;
    let n = zs.total() as f64;
    let mut base = Vec::new();
    for (i, f) in functions.iter().enumerate() {
        for g in &functions[i + 1..] {
            base.push(sq_set_distance(class, f, g, zs)?);
        }
    }
    let outcomes: Vec<(bool, f64)> = (0..p.seeds)
        .into_par_iter()
        .map(|seed| -> Result<(bool, f64), HarnessError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
            let sample = sensitivity_sample(class, zs, &params, &sens, &mut rng)?;
            let mut ok = true;
            let mut idx = 0;
            for (i, f) in functions.iter().enumerate() {
                for g in &functions[i + 1..] {
                    let full = base[idx];
                    idx += 1;
                    let sub = sq_set_distance(class, f, g, &sample)?;
                    let lo = (1.0 - p.eps) * full - 2.0 * p.lambda;
                    let hi = (1.0 + p.eps) * full + 8.0 * n * p.lambda / p.delta;
                    ok &= lo <= sub && sub <= hi;
                }
            }
            Ok((ok, sample.total() as f64))
        })
        .collect::<Result<_, _>>()?;

    let seeds = p.seeds;
    let failures = outcomes.iter().filter(|o| !o.0).count();
    let fail_rate = failures as f64 / seeds as f64;
    let fail_allowed = p.delta / 2.0 + 3.0 * binomial_se(p.delta / 2.0, seeds);

    let sizes: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let mean = sizes.iter().sum::<f64>() / seeds as f64;
    let var = sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (seeds as f64 - 1.0).max(1.0);
    let se = (var / seeds as f64).sqrt();
    let over = sizes.iter().filter(|&&s| s > 4.0 * n / p.delta).count();
    let over_rate = over as f64 / seeds as f64;
    let over_allowed = p.delta / 4.0 + 3.0 * binomial_se(p.delta / 4.0, seeds);
    let mean_ok = (mean - n).abs() <= 4.0 * se || (se == 0.0 && mean == n);
    let mean_keep = sens
        .iter()
        .map(|&s| {
            let b = (s.max(1.0 / n) * sampling_factor(class, zs, &params)).min(1.0);
            flsvi_core::sensitivity::round_probability(b).unwrap_or(1.0)
        })
        .sum::<f64>()
        / n;

    Ok(SamplingReports {
        norm_preservation: Report::new(
            "norm_preservation",
            fail_rate <= fail_allowed,
            &[
                ("seeds", seeds as f64),
                ("failure_rate", fail_rate),
                ("allowed", fail_allowed),
                ("mean_keep_probability", mean_keep),
            ],
        ),
        size_bounds: Report::new(
            "size_bounds",
            over_rate <= over_allowed && mean_ok,
            &[
                ("seeds", seeds as f64),
                ("over_4n_over_delta_rate", over_rate),
                ("allowed", over_allowed),
                ("mean_size", mean),
                ("input_size", n),
                ("size_se", se),
            ],
        ),
    })
}

fn sampling_factor<C: FunctionClass>(class: &C, zs: &PairMultiset, params: &SamplingParams) -> f64 {
    let log_cover = class.log_cover_size(params.cover_eps(zs.total()), flsvi_core::CoverKind::Function);
    params.constant() * (4f64.ln() + log_cover - params.delta().ln()) / (params.eps() * params.eps())
}

pub fn sampling_default(seeds: usize) -> Result<SamplingReports, HarnessError> {
    let (class, zs) = sampling_fixture()?;
    let members: Vec<usize> = (0..class.len()).collect();
    sampling_suite(
        &class,
        &members,
        &zs,
        SamplingCheckParams {
            seeds,
            ..Default::default()
        },
    )
}

/// Offsets of the centre table on a grid, so that regions of different radii
/// contain visibly different members.
pub fn bonus_fixture() -> Result<(FiniteClass, PairMultiset), HarnessError> {
    let offsets = [-0.03, -0.01, 0.0, 0.01, 0.03];
    let mut tables = Vec::new();
    for a in offsets {
        for b in offsets {
            for c in offsets {
                for d in [-1.0, 0.0, 1.0] {
                    tables.push(vec![2.0 + a, 2.0 + b, 2.0 + c, 2.0 + d]);
                }
            }
        }
    }
    // the centre table sorts first and is member 0
    tables.sort_by(|x, y| {
        let nx: f64 = x.iter().map(|v: &f64| (v - 2.0).abs()).sum();
        let ny: f64 = y.iter().map(|v: &f64| (v - 2.0).abs()).sum();
        nx.total_cmp(&ny)
    });
    let class = FiniteClass::new(2, 2, 3, tables)?;
    let zs = PairMultiset::from_entries([(z(0, 0), 8000), (z(0, 1), 10000), (z(1, 0), 12000)])?;
    Ok((class, zs))
}

#[derive(Clone, Copy, Debug)]
pub struct BonusCheckParams {
    pub seeds: usize,
    pub beta: f64,
    pub delta: f64,
    pub episodes: usize,
}

impl Default for BonusCheckParams {
    fn default() -> Self {
        Self {
            seeds: 200,
            beta: 0.5,
            delta: 0.1,
            episodes: 10_000,
        }
    }
}

/// `w(F̲, z) ≤ ŵ(z) ≤ w(F̄, z)` with `F̲`, `F̄` the radius `β` and `9β+12`
/// regions around the reference function on the original multiset.
pub fn bonus_sandwich(p: BonusCheckParams) -> Result<Report, HarnessError> {
    let (class, zs) = bonus_fixture()?;
    let horizon = class.horizon();
    let hp = HorizonParams::new(horizon, p.episodes, p.delta)?;
    let t = hp.total_steps() as f64;
    let f_bar = 0usize;
    let mut cfg = BonusConfig::new(BetaParams::practical(p.beta));
    cfg.sensitivity_source = SensitivitySource::Exact;
    let lower = class.prepare_region(&ConfidenceRegion::new(f_bar, zs.clone(), p.beta)?)?;
    let upper = class.prepare_region(&ConfidenceRegion::new(f_bar, zs.clone(), 9.0 * p.beta + 12.0)?)?;
    let probes = class.all_pairs();
    let bounds: Vec<(f64, f64)> = probes
        .iter()
        .map(|&q| Ok((class.prepared_width(&lower, q)?, class.prepared_width(&upper, q)?)))
        .collect::<Result<_, flsvi_core::Error>>()?;

    let outcomes: Vec<(bool, f64, f64)> = (0..p.seeds)
        .into_par_iter()
        .map(|seed| -> Result<(bool, f64, f64), HarnessError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
            let b = stable_bonus(&class, &f_bar, &zs, &hp, &cfg, &mut rng)?;
            let mut ok = !b.stats().discarded;
            for (&q, &(lo, hi)) in probes.iter().zip(&bounds) {
                let w = b.value(q)?;
                ok &= lo <= w + 1e-12 && w <= hi + 1e-12;
            }
            Ok((ok, b.stats().anchor_total as f64, b.stats().anchor_distinct as f64))
        })
        .collect::<Result<_, _>>()?;
    let failures = outcomes.iter().filter(|o| !o.0).count();
    let rate = failures as f64 / p.seeds as f64;
    let q = p.delta / (16.0 * t);
    let allowed = q + 3.0 * binomial_se(q, p.seeds);
    let mean_size = outcomes.iter().map(|o| o.1).sum::<f64>() / p.seeds as f64;
    let lo_mean = bounds.iter().map(|b| b.0).sum::<f64>() / bounds.len() as f64;
    let hi_mean = bounds.iter().map(|b| b.1).sum::<f64>() / bounds.len() as f64;
    Ok(Report::new(
        "bonus_sandwich",
        rate <= allowed,
        &[
            ("seeds", p.seeds as f64),
            ("failure_rate", rate),
            ("allowed", allowed),
            ("mean_anchor_size", mean_size),
            ("input_size", zs.total() as f64),
            ("mean_lower_width", lo_mean),
            ("mean_upper_width", hi_mean),
        ],
    ))
}

#[derive(Clone, Debug)]
pub struct OptimismParams {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub tolerance: f64,
    pub required_fraction: f64,
}

/// Share of `(k, h, s, a)` with `Q_h^k ≥ Q_h^* - tol`, over all episodes and
/// seeds. Each seed draws its own random MDP (env seed = run seed) when the
/// config's environment is `random_tabular`.
pub fn optimism(p: &OptimismParams) -> Result<Report, HarnessError> {
    let per_seed: Vec<(usize, usize)> = p
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(usize, usize), HarnessError> {
            let mut cfg = p.config.clone();
            if let EnvSpec::RandomTabular { seed: env_seed, .. } = &mut cfg.env {
                *env_seed = seed;
            }
            let mut ok = 0usize;
            let mut total = 0usize;
            let mut obs = |_k: usize, stack: &flsvi_core::EpisodeValueStack, oracle: &crate::mdp::ModelOracle| {
                let opt = oracle.optimal();
                for h in 0..stack.horizon() {
                    for s in 0..stack.num_states() {
                        for a in 0..stack.num_actions() {
                            total += 1;
                            if stack.q(h, z(s, a)) >= opt.q(h, s, a) - p.tolerance {
                                ok += 1;
                            }
                        }
                    }
                }
                Ok(())
            };
            run_seed(&cfg, seed, Some(&mut obs))?;
            Ok((ok, total))
        })
        .collect::<Result<_, _>>()?;
    let ok: usize = per_seed.iter().map(|x| x.0).sum();
    let total: usize = per_seed.iter().map(|x| x.1).sum();
    let frac = ok as f64 / total.max(1) as f64;
    let worst = per_seed
        .iter()
        .map(|x| x.0 as f64 / x.1.max(1) as f64)
        .fold(1.0, f64::min);
    Ok(Report::new(
        "optimism",
        frac >= p.required_fraction,
        &[
            ("seeds", p.seeds.len() as f64),
            ("checked", total as f64),
            ("optimistic_fraction", frac),
            ("worst_seed_fraction", worst),
            ("required", p.required_fraction),
        ],
    ))
}
