use nalgebra::{DMatrix, DVector};

use crate::domain::{ConfidenceRegion, PairMultiset, RegressionDataset, StateActionPair};
use crate::error::{Error, Result};

use super::{finite::ENUMERATION_LIMIT, quantize, CoverKind, FiniteClass, FunctionClass};

const DEFAULT_ELUDER_CONSTANT: f64 = 4.0;
const DEFAULT_RIDGE_FLOOR: f64 = 1e-6;
const TRACE_RIDGE: f64 = 1e-8;

/// `f_θ(s, a) = clip(θᵀφ(s, a), 0, H+1)` with `‖θ‖ ≤ B` and `‖φ‖ ≤ W`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClass {
    states: usize,
    actions: usize,
    horizon: usize,
    dim: usize,
    features: Vec<DVector<f64>>,
    param_bound: f64,
    feature_bound: f64,
    eluder_constant: f64,
    ridge_floor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFunction {
    theta: Vec<f64>,
}

impl LinearFunction {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

impl LinearClass {
    /// `features` is row-major over `S x A`, one `d`-vector per pair.
    pub fn new(
        states: usize,
        actions: usize,
        horizon: usize,
        features: Vec<Vec<f64>>,
        param_bound: f64,
        feature_bound: f64,
    ) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::invalid("dimensions", "states, actions and horizon must be positive"));
        }
        if features.len() != states * actions {
            return Err(Error::DimensionMismatch {
                expected: states * actions,
                actual: features.len(),
            });
        }
        if !(param_bound > 0.0) {
            return Err(Error::invalid("param_bound", "B must be positive"));
        }
        if !(feature_bound > 0.0) {
            return Err(Error::invalid("feature_bound", "W must be positive"));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::invalid("features", "feature dimension must be positive"));
        }
        let mut phis = Vec::with_capacity(features.len());
        for (i, phi) in features.into_iter().enumerate() {
            if phi.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: phi.len(),
                });
            }
            let v = DVector::from_vec(phi);
            if v.norm() > feature_bound * (1.0 + 1e-12) {
                return Err(Error::invalid(
                    "features",
                    format!("‖φ‖ = {} exceeds W = {feature_bound} at pair index {i}", v.norm()),
                ));
            }
            phis.push(v);
        }
        Ok(Self {
            states,
            actions,
            horizon,
            dim,
            features: phis,
            param_bound,
            feature_bound,
            eluder_constant: DEFAULT_ELUDER_CONSTANT,
            ridge_floor: DEFAULT_RIDGE_FLOOR,
        })
    }

    pub fn with_eluder_constant(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid("eluder_constant", "must be positive"));
        }
        self.eluder_constant = c;
        Ok(self)
    }

    pub fn with_ridge_floor(mut self, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::invalid("ridge_floor", "must be positive"));
        }
        self.ridge_floor = nu;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_bound(&self) -> f64 {
        self.param_bound
    }

    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    pub fn feature(&self, z: StateActionPair) -> Result<&DVector<f64>> {
        self.check_pair(z)?;
        Ok(&self.features[z.index(self.actions)])
    }

    /// Multiplicity-weighted Gram matrix `Σ m·φφᵀ`.
    pub fn gram(&self, zs: &PairMultiset) -> Result<DMatrix<f64>> {
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for &(z, m) in zs.entries() {
            let phi = self.feature(z)?;
            g.ger(m as f64, phi, phi, 1.0);
        }
        Ok(g)
    }

    fn trace_ridge(&self, g: &DMatrix<f64>) -> f64 {
        TRACE_RIDGE * g.trace() / self.dim as f64
    }

    /// `φᵀ(G + νI)⁻¹φ`.
    fn quadratic_form(&self, g: &DMatrix<f64>, nu: f64, phi: &DVector<f64>) -> f64 {
        let mut a = g.clone();
        for i in 0..self.dim {
            a[(i, i)] += nu;
        }
        match a.cholesky() {
            Some(ch) => phi.dot(&ch.solve(phi)),
            None => f64::INFINITY,
        }
    }

    /// Quantize a feature vector so that every `θ` in the ball moves its
    /// prediction by at most `eps / 2`.
    pub fn quantize_features(&self, phi: &[f64], eps: f64) -> Vec<f64> {
        let spacing = 2.0 * eps / (self.param_bound * (self.dim as f64).sqrt());
        phi.iter().map(|&x| quantize(x, spacing)).collect()
    }

    /// All grid parameters of the given spacing inside the ball, as an
    /// explicit finite class.
    pub fn grid_surrogate(&self, spacing: f64) -> Result<FiniteClass> {
        if !(spacing > 0.0) {
            return Err(Error::invalid("spacing", "must be positive"));
        }
        let steps = (self.param_bound / spacing).floor() as i64;
        let per_axis = (2 * steps + 1) as usize;
        let total = per_axis.checked_pow(self.dim as u32).unwrap_or(usize::MAX);
        if total > ENUMERATION_LIMIT * 64 {
            return Err(Error::EnumerationLimit {
                size: total,
                limit: ENUMERATION_LIMIT * 64,
            });
        }
        let mut tables = Vec::new();
        let mut idx = vec![-steps; self.dim];
        loop {
            let theta: Vec<f64> = idx.iter().map(|&k| k as f64 * spacing).collect();
            if theta.iter().map(|t| t * t).sum::<f64>().sqrt() <= self.param_bound + 1e-12 {
                let f = LinearFunction::new(theta);
                tables.push(self.all_pairs().iter().map(|&z| self.evaluate(&f, z)).collect::<Result<_>>()?);
            }
            let mut k = 0;
            loop {
                if k == self.dim {
                    return FiniteClass::new(self.states, self.actions, self.horizon, tables);
                }
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = -steps;
                k += 1;
            }
        }
    }
}

#[derive(Debug)]
pub struct LinearRegion {
    inverse: DMatrix<f64>,
    radius: f64,
}

#[derive(Clone, Debug)]
pub struct GramBucket {
    gram: DMatrix<f64>,
}

impl FunctionClass for LinearClass {
    type Function = LinearFunction;
    type Bucket = GramBucket;
    type PreparedRegion = LinearRegion;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_states(&self) -> usize {
        self.states
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn evaluate(&self, f: &LinearFunction, z: StateActionPair) -> Result<f64> {
        let phi = self.feature(z)?;
        if f.theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: f.theta.len(),
            });
        }
        let v: f64 = f.theta.iter().zip(phi.iter()).map(|(t, p)| t * p).sum();
        Ok(v.clamp(0.0, self.value_cap()))
    }

    fn default_function(&self) -> LinearFunction {
        LinearFunction::new(vec![0.0; self.dim])
    }

    /// Minimum-norm least-squares solution via the pseudo-inverse of the
    /// normal equations, then scaled back into the parameter ball.
    fn fit_erm(&self, data: &RegressionDataset) -> Result<LinearFunction> {
        if data.is_empty() {
            return Ok(self.default_function());
        }
        let mut g = DMatrix::zeros(self.dim, self.dim);
        let mut b = DVector::zeros(self.dim);
        for &(z, q) in data.triples() {
            let phi = self.feature(z)?;
            g.ger(1.0, phi, phi, 1.0);
            b.axpy(q, phi, 1.0);
        }
        let eig = g.clone().symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let tol = top * 1e-12 * self.dim as f64;
        let mut theta = DVector::zeros(self.dim);
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > tol {
                let v = eig.eigenvectors.column(i);
                theta.axpy(v.dot(&b) / lam, &v, 1.0);
            }
        }
        let residual = (&g * &theta - &b).norm();
        if residual > 1e-6 * (b.norm() + 1.0) {
            return Err(Error::IllConditioned { residual });
        }
        let norm = theta.norm();
        if norm > self.param_bound {
            theta *= self.param_bound / norm;
        }
        Ok(LinearFunction::new(theta.iter().copied().collect()))
    }

    fn prepare_region(&self, region: &ConfidenceRegion<LinearFunction>) -> Result<LinearRegion> {
        let mut a = self.gram(&region.anchor)?;
        let nu = self.trace_ridge(&a) + self.ridge_floor;
        for i in 0..self.dim {
            a[(i, i)] += nu;
        }
        let inverse = a
            .try_inverse()
            .ok_or(Error::IllConditioned { residual: f64::INFINITY })?;
        Ok(LinearRegion {
            inverse,
            radius: region.sq_radius().sqrt(),
        })
    }

    /// `2·sqrt(r)·‖φ‖_{(G+νI)⁻¹}`, capped at the value-range span.
    fn prepared_width(&self, region: &LinearRegion, z: StateActionPair) -> Result<f64> {
        let phi = self.feature(z)?;
        let q = phi.dot(&(&region.inverse * phi)).max(0.0);
        Ok((2.0 * region.radius * q.sqrt()).min(self.value_cap()))
    }

    fn empty_bucket(&self) -> GramBucket {
        GramBucket {
            gram: DMatrix::zeros(self.dim, self.dim),
        }
    }

    fn bucket_insert(&self, bucket: &mut GramBucket, z: StateActionPair) -> Result<()> {
        let phi = self.feature(z)?;
        bucket.gram.ger(1.0, phi, phi, 1.0);
        Ok(())
    }

    /// The ellipsoid `Δᵀ(G + νI)Δ ≤ eps²` with `ν = eps²/(4B²)` lies inside the
    /// feasible differences (`‖Δ‖_G ≤ eps`, `‖Δ‖ ≤ 2B`); independence holds if
    /// it already reaches past `eps` at `φ(z)`.
    fn independent_of_bucket(&self, z: StateActionPair, bucket: &GramBucket, eps: f64) -> Result<bool> {
        if eps >= self.value_cap() {
            return Ok(false);
        }
        let phi = self.feature(z)?;
        let nu = eps * eps / (4.0 * self.param_bound * self.param_bound) + self.trace_ridge(&bucket.gram);
        Ok(self.quadratic_form(&bucket.gram, nu, phi) > 1.0)
    }

    fn eluder_dim_bound(&self, eps: f64) -> usize {
        let v = (self.eluder_constant * self.dim as f64 * (std::f64::consts::E + 1.0 / eps).ln()).ceil();
        (v as usize).max(1)
    }

    fn log_cover_size(&self, eps: f64, which: CoverKind) -> f64 {
        let d = self.dim as f64;
        let bw = self.param_bound * self.feature_bound;
        match which {
            CoverKind::Function => d * (1.0 + 2.0 * bw / eps).ln(),
            CoverKind::StateAction => d * (1.0 + 4.0 * bw / eps).ln(),
        }
    }

    /// Coefficient grid of spacing `eps/(W·sqrt(d))`; falls back to rounding
    /// toward zero when nearest rounding would leave the ball.
    fn round_to_function_cover(&self, f: &LinearFunction, eps: f64) -> LinearFunction {
        let spacing = eps / (self.feature_bound * (self.dim as f64).sqrt());
        let nearest: Vec<f64> = f.theta.iter().map(|&t| quantize(t, spacing)).collect();
        let norm = nearest.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm <= self.param_bound {
            LinearFunction::new(nearest)
        } else {
            LinearFunction::new(f.theta.iter().map(|&t| (t / spacing).trunc() * spacing).collect())
        }
    }

    /// Leverage-score surrogate `min{1, φᵀ(G + λ/(4B²)·I)⁻¹φ}`.
    fn sensitivity_exact(&self, zs: &PairMultiset, lambda: f64, z: StateActionPair) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        let g = self.gram(zs)?;
        let phi = self.feature(z)?;
        let nu = lambda / (4.0 * self.param_bound * self.param_bound);
        Ok(self.quadratic_form(&g, nu, phi).min(1.0))
    }
}
