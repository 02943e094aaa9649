//! Stable exploration bonus: subsample the replay pairs by sensitivity,
//! discard oversized samples, round onto covers, and return the width of the
//! resulting confidence region around the fitted function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ConfidenceRegion, HorizonParams, PairMultiset, StateActionPair};
use crate::error::{Error, Result};
use crate::function_class::{CoverKind, FunctionClass};
use crate::sensitivity::{
    estimate_sensitivity, exact_sensitivities, sensitivity_sample, SamplingParams, DEFAULT_SAMPLING_CONSTANT,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    Theory,
    Practical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub mode: BetaMode,
    pub c_prime: f64,
    pub beta_override: Option<f64>,
    /// Misspecification error ζ.
    pub zeta: f64,
    /// Multiplier on the `ζ·H·T` term in practical mode.
    pub practical_scale: f64,
}

impl BetaParams {
    pub fn theory(c_prime: f64) -> Self {
        Self {
            mode: BetaMode::Theory,
            c_prime,
            beta_override: None,
            zeta: 0.0,
            practical_scale: 1.0,
        }
    }

    pub fn practical(beta: f64) -> Self {
        Self {
            mode: BetaMode::Practical,
            c_prime: 1.0,
            beta_override: Some(beta),
            zeta: 0.0,
            practical_scale: 1.0,
        }
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self
    }

    pub fn with_practical_scale(mut self, scale: f64) -> Self {
        self.practical_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_prime > 0.0) {
            return Err(Error::invalid("c_prime", "must be positive"));
        }
        if !(self.zeta >= 0.0) {
            return Err(Error::invalid("zeta", "must be nonnegative"));
        }
        if !(self.practical_scale >= 0.0) {
            return Err(Error::invalid("practical_scale", "must be nonnegative"));
        }
        match (self.mode, self.beta_override) {
            (BetaMode::Practical, None) => Err(Error::invalid("beta_override", "practical mode requires a value")),
            (_, Some(b)) if !(b > 0.0) => Err(Error::invalid("beta_override", "must be positive")),
            _ => Ok(()),
        }
    }
}

/// Confidence level β. Theory mode evaluates
/// `c′·H²·ln²(T/δ)·dim_E(F, δ/T³)·ln(N(F, δ/T²)/δ)·ln(N(S×A, δ/T)·T/δ)`
/// plus `c′·ζ·H·T` when misspecified; practical mode uses the override plus
/// `ζ·H·T·practical_scale`.
pub fn compute_beta<C: FunctionClass>(class: &C, hp: &HorizonParams, bp: &BetaParams) -> Result<f64> {
    bp.validate()?;
    if hp.total_steps() == 0 {
        return Err(Error::invalid("episodes", "β needs at least one episode"));
    }
    let h = hp.horizon() as f64;
    let t = hp.total_steps() as f64;
    let delta = hp.delta();
    let misspec = bp.zeta * h * t;
    match bp.mode {
        BetaMode::Theory => {
            let log_t = (t / delta).ln();
            let dim = class.eluder_dim_bound(delta / t.powi(3)) as f64;
            let cover_f = class.log_cover_size(delta / (t * t), CoverKind::Function) - delta.ln();
            let cover_sa = class.log_cover_size(delta / t, CoverKind::StateAction) + log_t;
            Ok(bp.c_prime * (h * h * log_t * log_t * dim * cover_f * cover_sa + misspec))
        }
        BetaMode::Practical => {
            let base = bp.beta_override.expect("validated");
            Ok(base + if bp.zeta > 0.0 { misspec * bp.practical_scale } else { 0.0 })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivitySource {
    /// Bucketed estimator; needs only an independence oracle.
    Estimator,
    /// The class's exact sensitivity (enumeration or closed form).
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BonusConfig {
    pub beta: BetaParams,
    pub sampling_constant: f64,
    pub sensitivity_source: SensitivitySource,
    /// Distinct-count cap in practical mode; `None` disables it.
    pub practical_distinct_cap: Option<usize>,
    pub cache_subsample_per_episode: bool,
}

impl BonusConfig {
    pub fn new(beta: BetaParams) -> Self {
        Self {
            beta,
            sampling_constant: DEFAULT_SAMPLING_CONSTANT,
            sensitivity_source: SensitivitySource::Estimator,
            practical_distinct_cap: None,
            cache_subsample_per_episode: false,
        }
    }
}

/// The rounded, possibly discarded, subsample `Ẑ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSample {
    pub anchor: PairMultiset,
    /// Total multiplicity of the subsample before any discard.
    pub sampled_total: u64,
    /// Distinct pairs in the subsample before any discard.
    pub sampled_distinct: usize,
    pub discarded: bool,
}

/// `1/(8·sqrt(4T/δ))`.
pub fn rounding_radius(hp: &HorizonParams) -> f64 {
    1.0 / (8.0 * (4.0 * hp.total_steps() as f64 / hp.delta()).sqrt())
}

/// Theory-mode cap on the distinct pairs in a subsample,
/// `6912·dim_E(F, δ/(16T²))·ln(64H²T²/δ)·ln T·ln(4N(F, δ/(566T))/δ)`.
pub fn theory_distinct_cap<C: FunctionClass>(class: &C, hp: &HorizonParams) -> f64 {
    let h = hp.horizon() as f64;
    let t = hp.total_steps() as f64;
    let delta = hp.delta();
    let dim = class.eluder_dim_bound(delta / (16.0 * t * t)) as f64;
    let cover = 4f64.ln() + class.log_cover_size(delta / (566.0 * t), CoverKind::Function) - delta.ln();
    6912.0 * dim * (64.0 * h * h * t * t / delta).ln() * t.ln() * cover
}

/// Steps 1–3 of the bonus construction; independent of the reference function.
pub fn subsample_anchor<C, R>(
    class: &C,
    zs: &PairMultiset,
    hp: &HorizonParams,
    cfg: &BonusConfig,
    rng: &mut R,
) -> Result<AnchorSample>
where
    C: FunctionClass,
    R: Rng + ?Sized,
{
    let t = hp.total_steps() as f64;
    let delta = hp.delta();
    if zs.total() as f64 > t {
        return Err(Error::invalid("Z", format!("{} pairs exceed T = {t}", zs.total())));
    }
    let params = SamplingParams::new(delta / (16.0 * t), 0.5, delta)?.with_constant(cfg.sampling_constant)?;
    let sens = match cfg.sensitivity_source {
        SensitivitySource::Estimator => estimate_sensitivity(class, zs, params.lambda())?.scores,
        SensitivitySource::Exact => exact_sensitivities(class, zs, params.lambda())?,
    };
    let sampled = sensitivity_sample(class, zs, &params, &sens, rng)?;
    let sampled_total = sampled.total();
    let sampled_distinct = sampled.distinct_count();

    let cap = match cfg.beta.mode {
        BetaMode::Theory => Some(theory_distinct_cap(class, hp)),
        BetaMode::Practical => cfg.practical_distinct_cap.map(|c| c as f64),
    };
    let too_many = sampled_total as f64 >= 4.0 * t / delta;
    let too_spread = cap.is_some_and(|c| sampled_distinct as f64 > c);
    if too_many || too_spread {
        log::debug!(
            "discarding subsample: total {sampled_total}, distinct {sampled_distinct}, cap {cap:?}"
        );
        return Ok(AnchorSample {
            anchor: PairMultiset::new(),
            sampled_total,
            sampled_distinct,
            discarded: true,
        });
    }

    let eps = rounding_radius(hp);
    let rounded = PairMultiset::from_entries(
        sampled
            .entries()
            .iter()
            .map(|&(z, m)| (class.round_to_sa_cover(z, eps), m)),
    )?
    .aggregated();
    Ok(AnchorSample {
        anchor: rounded,
        sampled_total,
        sampled_distinct,
        discarded: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BonusStats {
    pub beta: f64,
    pub anchor_total: u64,
    pub anchor_distinct: usize,
    pub discarded: bool,
}

/// `ŵ(z) = w(F̂, z)` for `F̂ = {f : ‖f - f̂‖²_Ẑ ≤ 3β + 2}`.
#[derive(Debug)]
pub struct BonusFunction<'a, C: FunctionClass> {
    class: &'a C,
    region: ConfidenceRegion<C::Function>,
    prepared: C::PreparedRegion,
    stats: BonusStats,
}

impl<'a, C: FunctionClass> BonusFunction<'a, C> {
    pub fn value(&self, z: StateActionPair) -> Result<f64> {
        self.class.prepared_width(&self.prepared, z)
    }

    pub fn region(&self) -> &ConfidenceRegion<C::Function> {
        &self.region
    }

    pub fn stats(&self) -> BonusStats {
        self.stats
    }
}

/// Step 4: round the reference function and assemble the region.
pub fn bonus_from_anchor<'a, C: FunctionClass>(
    class: &'a C,
    f_bar: &C::Function,
    sample: &AnchorSample,
    hp: &HorizonParams,
    beta: f64,
) -> Result<BonusFunction<'a, C>> {
    let center = class.round_to_function_cover(f_bar, rounding_radius(hp));
    let region = ConfidenceRegion::new(center, sample.anchor.clone(), 3.0 * beta + 2.0)?;
    let prepared = class.prepare_region(&region)?;
    Ok(BonusFunction {
        class,
        stats: BonusStats {
            beta,
            anchor_total: sample.anchor.total(),
            anchor_distinct: sample.anchor.distinct_count(),
            discarded: sample.discarded,
        },
        region,
        prepared,
    })
}

pub fn stable_bonus<'a, C, R>(
    class: &'a C,
    f_bar: &C::Function,
    zs: &PairMultiset,
    hp: &HorizonParams,
    cfg: &BonusConfig,
    rng: &mut R,
) -> Result<BonusFunction<'a, C>>
where
    C: FunctionClass,
    R: Rng + ?Sized,
{
    let beta = compute_beta(class, hp, &cfg.beta)?;
    let sample = subsample_anchor(class, zs, hp, cfg, rng)?;
    bonus_from_anchor(class, f_bar, &sample, hp, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_class::{TabularClass, TabularFunction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z(s: usize, a: usize) -> StateActionPair {
        StateActionPair::new(s, a)
    }

    #[test]
    fn practical_requires_override() {
        let mut bp = BetaParams::practical(2.0);
        bp.beta_override = None;
        assert!(bp.validate().is_err());
        assert!(BetaParams::theory(1.0).with_zeta(-0.1).validate().is_err());
    }

    #[test]
    fn zero_zeta_leaves_beta_unchanged() {
        let class = TabularClass::new(2, 2, 5).unwrap();
        let hp = HorizonParams::new(5, 20, 0.1).unwrap();
        let base = compute_beta(&class, &hp, &BetaParams::theory(1.0)).unwrap();
        let z0 = compute_beta(&class, &hp, &BetaParams::theory(1.0).with_zeta(0.0)).unwrap();
        assert_eq!(base, z0);
        let p = compute_beta(&class, &hp, &BetaParams::practical(3.0).with_zeta(0.0)).unwrap();
        assert_eq!(p, 3.0);
    }

    #[test]
    fn empty_data_gives_full_width() {
        let class = TabularClass::new(2, 2, 3).unwrap();
        let hp = HorizonParams::new(3, 10, 0.1).unwrap();
        let cfg = BonusConfig::new(BetaParams::practical(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = stable_bonus(&class, &class.zero(), &PairMultiset::new(), &hp, &cfg, &mut rng).unwrap();
        for p in class.all_pairs() {
            assert_eq!(b.value(p).unwrap(), 4.0);
        }
    }

    #[test]
    fn theory_mode_caps_force_full_width() {
        // T = 1 makes the distinct cap vanish (ln T = 0), so any sample is discarded.
        let class = TabularClass::new(2, 2, 1).unwrap();
        let hp = HorizonParams::new(1, 1, 0.1).unwrap();
        let cfg = BonusConfig::new(BetaParams::theory(1.0));
        let zs = PairMultiset::from_pairs([z(0, 0)]);
        let f = TabularFunction::from_values(&class, vec![1.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = stable_bonus(&class, &f, &zs, &hp, &cfg, &mut rng).unwrap();
        assert!(b.stats().discarded);
        for p in class.all_pairs() {
            assert_eq!(b.value(p).unwrap(), 2.0);
        }
    }

    #[test]
    fn tabular_bonus_closed_form() {
        let class = TabularClass::new(2, 2, 5).unwrap();
        let hp = HorizonParams::new(5, 20, 0.1).unwrap();
        let beta = 2.0;
        let cfg = BonusConfig::new(BetaParams::practical(beta));
        let zs = PairMultiset::from_entries([(z(1, 0), 8)]).unwrap();
        let f = TabularFunction::from_values(&class, vec![3.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = stable_bonus(&class, &f, &zs, &hp, &cfg, &mut rng).unwrap();
        let m = b.stats().anchor_total as f64;
        assert_eq!(m, 8.0);
        let rho = ((3.0 * beta + 2.0) / m).sqrt();
        assert!((b.value(z(1, 0)).unwrap() - 2.0 * rho.min(6.0)).abs() < 1e-12);
    }

    #[test]
    fn oversized_input_is_rejected() {
        let class = TabularClass::new(1, 1, 1).unwrap();
        let hp = HorizonParams::new(1, 2, 0.1).unwrap();
        let cfg = BonusConfig::new(BetaParams::practical(1.0));
        let zs = PairMultiset::from_entries([(z(0, 0), 3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(subsample_anchor(&class, &zs, &hp, &cfg, &mut rng).is_err());
    }
}
