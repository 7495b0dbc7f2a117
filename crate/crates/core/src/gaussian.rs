//! Gaussian component algebra.
//!
//! Kalman and unscented predict/update on weighted Gaussian components,
//! Gaussian-mixture pruning and merging, and log-domain weight arithmetic.
//! Weights are always carried as natural logarithms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GaussianError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("innovation covariance is singular")]
    SingularUpdate,
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// A weighted Gaussian density `exp(log_weight) * N(x; mean, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub log_weight: f64,
    #[serde(with = "crate::serde_mat::vector")]
    pub mean: Vector,
    #[serde(with = "crate::serde_mat::rows")]
    pub cov: Matrix,
}

impl GaussianComponent {
    pub fn new(log_weight: f64, mean: Vector, cov: Matrix) -> Self {
        Self {
            log_weight,
            mean,
            cov,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    pub fn with_log_weight(mut self, log_weight: f64) -> Self {
        self.log_weight = log_weight;
        self
    }
}

/// An ordered list of weighted Gaussian components.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub components: Vec<GaussianComponent>,
}

impl Mixture {
    pub fn new(components: Vec<GaussianComponent>) -> Self {
        Self { components }
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    /// Log of the total mass; `-inf` for an empty mixture.
    pub fn log_mass(&self) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.log_weight))
    }

    /// Adds `delta` to every log-weight.
    pub fn scale_log(&mut self, delta: f64) {
        for c in &mut self.components {
            c.log_weight += delta;
        }
    }

    /// Weighted first and second moments `(mass, mean, cov)` of the mixture.
    pub fn moments(&self) -> Option<(f64, Vector, Matrix)> {
        moment_match(&self.components)
    }
}

/// Numerically stable `log(sum(exp(x)))`. Returns `-inf` for an empty input.
/// [`log_sum_exp`] summed in slice order, without the sort. For hot loops
/// whose input order is already fixed.
pub(crate) fn log_sum_exp_ordered(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    // sorting makes the result independent of input order
    let mut shifted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    shifted.sort_by(|a, b| a.total_cmp(b));
    max + shifted.iter().sum::<f64>().ln()
}

/// Symmetrizes `a` and checks positive definiteness, adding a single
/// jitter of `1e-12 * trace / n` on the diagonal if the first Cholesky
/// attempt fails.
pub fn condition_covariance(a: Matrix) -> Result<Matrix> {
    condition_with_factor(a).map(|(m, _)| m)
}

fn condition_with_factor(a: Matrix) -> Result<(Matrix, Cholesky<f64, Dyn>)> {
    let sym = (&a + a.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(GaussianError::NotPositiveDefinite);
    }
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Ok((sym, chol));
    }
    let n = sym.nrows().max(1) as f64;
    let jitter = 1e-12 * sym.trace() / n;
    if !(jitter > 0.0) {
        return Err(GaussianError::NotPositiveDefinite);
    }
    let mut jittered = sym;
    for i in 0..jittered.nrows() {
        jittered[(i, i)] += jitter;
    }
    match Cholesky::new(jittered.clone()) {
        Some(chol) => Ok((jittered, chol)),
        None => Err(GaussianError::NotPositiveDefinite),
    }
}

fn check_square(context: &'static str, m: &Matrix, n: usize) -> Result<()> {
    if m.nrows() != n {
        return Err(GaussianError::DimensionMismatch {
            context,
            expected: n,
            found: m.nrows(),
        });
    }
    if m.ncols() != n {
        return Err(GaussianError::DimensionMismatch {
            context,
            expected: n,
            found: m.ncols(),
        });
    }
    Ok(())
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `log N(x; mean, cov)`.
pub fn log_gaussian_density(x: &Vector, mean: &Vector, cov: &Matrix) -> Result<f64> {
    check_square("gaussian density", cov, mean.len())?;
    if x.len() != mean.len() {
        return Err(GaussianError::DimensionMismatch {
            context: "gaussian density",
            expected: mean.len(),
            found: x.len(),
        });
    }
    let (_, chol) = condition_with_factor(cov.clone())?;
    let diff = x - mean;
    let maha = diff.dot(&chol.solve(&diff));
    Ok(-0.5 * (mean.len() as f64 * LN_2PI + log_det(&chol) + maha))
}

/// Log-density of a possibly degenerate Gaussian, taken with respect to
/// Lebesgue measure on the support `mean + range(cov)`. Points off the
/// support have density zero (`-inf`).
pub fn log_degenerate_gaussian_density(x: &Vector, mean: &Vector, cov: &Matrix) -> Result<f64> {
    check_square("gaussian density", cov, mean.len())?;
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let largest = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(largest > 0.0) {
        return Err(GaussianError::NotPositiveDefinite);
    }
    let tol = 1e-10 * largest;
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return Err(GaussianError::NotPositiveDefinite);
    }
    let diff = x - mean;
    let scale = diff.norm().max(largest.sqrt());
    let (mut rank, mut log_pdet, mut maha, mut off_support) = (0usize, 0.0, 0.0, 0.0f64);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let proj = eig.eigenvectors.column(i).dot(&diff);
        if l > tol {
            rank += 1;
            log_pdet += l.ln();
            maha += proj * proj / l;
        } else {
            off_support = off_support.max(proj.abs());
        }
    }
    if off_support > 1e-9 * scale {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-0.5 * (rank as f64 * LN_2PI + log_pdet + maha))
}

/// Squared Mahalanobis distance of `x` from `mean` under `cov`.
pub fn mahalanobis_sq(x: &Vector, mean: &Vector, cov: &Matrix) -> Result<f64> {
    let (_, chol) = condition_with_factor(cov.clone())?;
    let diff = x - mean;
    Ok(diff.dot(&chol.solve(&diff)))
}

/// Linear-Gaussian prediction `x' = F x + w`, `w ~ N(0, Q)`.
pub fn kalman_predict(comp: &GaussianComponent, f: &Matrix, q: &Matrix) -> Result<GaussianComponent> {
    let n = comp.dim();
    check_square("kalman_predict transition", f, n)?;
    check_square("kalman_predict process noise", q, n)?;
    let mean = f * &comp.mean;
    let cov = condition_covariance(f * &comp.cov * f.transpose() + q)?;
    Ok(GaussianComponent::new(comp.log_weight, mean, cov))
}

/// Everything about a measurement update that does not depend on the
/// measured value. Built once per component and reused across all
/// measurements of a scan.
#[derive(Debug, Clone)]
pub struct UpdatePlan {
    predicted_measurement: Vector,
    innovation_chol: Cholesky<f64, Dyn>,
    /// `L^-1` for the factor `S = L L^T`.
    whitening: Matrix,
    log_norm: f64,
    gain: Matrix,
    posterior_cov: Matrix,
}

impl UpdatePlan {
    /// Mean of the predicted measurement.
    pub fn predicted_measurement(&self) -> &Vector {
        &self.predicted_measurement
    }

    /// Innovation covariance `S`.
    pub fn innovation_cov(&self) -> Matrix {
        let l = self.innovation_chol.l();
        &l * l.transpose()
    }

    /// `log N(innovation; 0, S)`.
    pub fn log_likelihood(&self, innovation: &Vector) -> f64 {
        self.log_likelihood_of(innovation.as_slice())
    }

    /// [`Self::log_likelihood`] on a plain slice; does not allocate.
    pub fn log_likelihood_of(&self, innovation: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.distance_sq_of(innovation)
    }

    /// Squared Mahalanobis norm of an innovation.
    pub fn innovation_distance_sq(&self, innovation: &Vector) -> f64 {
        self.distance_sq_of(innovation.as_slice())
    }

    pub fn distance_sq_of(&self, innovation: &[f64]) -> f64 {
        let w = &self.whitening;
        (0..innovation.len())
            .map(|i| {
                let s: f64 = (0..=i).map(|j| w[(i, j)] * innovation[j]).sum();
                s * s
            })
            .sum()
    }

    /// Posterior component for a given innovation; the weight is unchanged.
    pub fn posterior(&self, comp: &GaussianComponent, innovation: &Vector) -> GaussianComponent {
        GaussianComponent::new(
            comp.log_weight,
            &comp.mean + &self.gain * innovation,
            self.posterior_cov.clone(),
        )
    }
}

fn innovation_factor(s: Matrix) -> Result<(Cholesky<f64, Dyn>, Matrix)> {
    let chol = condition_with_factor(s)
        .map(|(_, c)| c)
        .map_err(|_| GaussianError::SingularUpdate)?;
    let n = chol.l_dirty().nrows();
    let mut whitening = Matrix::identity(n, n);
    if !chol.l().solve_lower_triangular_mut(&mut whitening) {
        return Err(GaussianError::SingularUpdate);
    }
    Ok((chol, whitening))
}

/// Prepares a linear-Gaussian update with measurement matrix `H` and noise `R`.
pub fn kalman_update_plan(comp: &GaussianComponent, h: &Matrix, r: &Matrix) -> Result<UpdatePlan> {
    let n = comp.dim();
    let m = h.nrows();
    if h.ncols() != n {
        return Err(GaussianError::DimensionMismatch {
            context: "kalman_update measurement matrix",
            expected: n,
            found: h.ncols(),
        });
    }
    check_square("kalman_update measurement noise", r, m)?;
    let pht = &comp.cov * h.transpose();
    let s = h * &pht + r;
    let (chol, whitening) = innovation_factor(s)?;
    // K = P H^T S^-1, solved through the factor
    let gain = chol.solve(&pht.transpose()).transpose();
    let i_kh = Matrix::identity(n, n) - &gain * h;
    let joseph = &i_kh * &comp.cov * i_kh.transpose() + &gain * r * gain.transpose();
    let posterior_cov = condition_covariance(joseph)?;
    Ok(UpdatePlan {
        predicted_measurement: h * &comp.mean,
        log_norm: -0.5 * (m as f64 * LN_2PI + log_det(&chol)),
        innovation_chol: chol,
        whitening,
        gain,
        posterior_cov,
    })
}

/// Linear-Gaussian measurement update. Returns the posterior component
/// (weight unchanged) and `log N(z; H mean, S)`.
pub fn kalman_update(
    comp: &GaussianComponent,
    z: &Vector,
    h: &Matrix,
    r: &Matrix,
) -> Result<(GaussianComponent, f64)> {
    let plan = kalman_update_plan(comp, h, r)?;
    if z.len() != h.nrows() {
        return Err(GaussianError::DimensionMismatch {
            context: "kalman_update measurement",
            expected: h.nrows(),
            found: z.len(),
        });
    }
    let innovation = z - plan.predicted_measurement();
    Ok((plan.posterior(comp, &innovation), plan.log_likelihood(&innovation)))
}

/// Scaling parameters of the unscented transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnscentedParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl UnscentedParams {
    /// `alpha = 1`, `beta = 2`, `kappa = 3 - n`.
    pub fn gaussian_optimal(n: usize) -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: 3.0 - n as f64,
        }
    }

    pub fn lambda(&self, n: usize) -> f64 {
        let n = n as f64;
        self.alpha * self.alpha * (n + self.kappa) - n
    }
}

/// Sigma points and their weights.
#[derive(Debug, Clone)]
pub struct SigmaPoints {
    pub points: Vec<Vector>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
}

/// Generates the `2n + 1` sigma points of `comp` from the Cholesky factor
/// of `(n + lambda) * cov`.
pub fn ut_points(comp: &GaussianComponent, params: &UnscentedParams) -> Result<SigmaPoints> {
    let n = comp.dim();
    let lambda = params.lambda(n);
    let spread = n as f64 + lambda;
    if !(params.alpha > 0.0) || !(spread > 0.0) {
        return Err(GaussianError::NotPositiveDefinite);
    }
    let (_, chol) = condition_with_factor(&comp.cov * spread)?;
    let l = chol.l();
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(comp.mean.clone());
    for i in 0..n {
        points.push(&comp.mean + l.column(i));
    }
    for i in 0..n {
        points.push(&comp.mean - l.column(i));
    }
    let w0 = lambda / spread;
    let wi = 0.5 / spread;
    let mut mean_weights = vec![wi; 2 * n + 1];
    mean_weights[0] = w0;
    let mut cov_weights = mean_weights.clone();
    cov_weights[0] = w0 + (1.0 - params.alpha * params.alpha + params.beta);
    Ok(SigmaPoints {
        points,
        mean_weights,
        cov_weights,
    })
}

/// A (possibly nonlinear) state map `x -> f(x)`.
pub trait StateMap {
    fn apply(&self, x: &Vector) -> Vector;
}

impl<F: Fn(&Vector) -> Vector> StateMap for F {
    fn apply(&self, x: &Vector) -> Vector {
        self(x)
    }
}

/// A (possibly nonlinear) measurement map with its own residual convention,
/// e.g. angle wrapping.
pub trait MeasurementMap {
    fn apply(&self, x: &Vector) -> Vector;

    fn residual(&self, z: &Vector, predicted: &Vector) -> Vector {
        z - predicted
    }
}

impl<F: Fn(&Vector) -> Vector> MeasurementMap for F {
    fn apply(&self, x: &Vector) -> Vector {
        self(x)
    }
}

/// Unscented prediction through `f`, plus additive noise `Q`.
pub fn ukf_predict<F: StateMap + ?Sized>(
    comp: &GaussianComponent,
    f: &F,
    q: &Matrix,
    params: &UnscentedParams,
) -> Result<GaussianComponent> {
    let n = comp.dim();
    check_square("ukf_predict process noise", q, n)?;
    let sigma = ut_points(comp, params)?;
    let propagated: Vec<Vector> = sigma.points.iter().map(|p| f.apply(p)).collect();
    if let Some(p) = propagated.iter().find(|p| p.len() != n) {
        return Err(GaussianError::DimensionMismatch {
            context: "ukf_predict state map",
            expected: n,
            found: p.len(),
        });
    }
    let mut mean = Vector::zeros(n);
    for (w, p) in sigma.mean_weights.iter().zip(&propagated) {
        mean.axpy(*w, p, 1.0);
    }
    let mut cov = q.clone();
    for (w, p) in sigma.cov_weights.iter().zip(&propagated) {
        let d = p - &mean;
        cov.ger(*w, &d, &d, 1.0);
    }
    Ok(GaussianComponent::new(comp.log_weight, mean, condition_covariance(cov)?))
}

/// Prepares an unscented measurement update through `h` with noise `R`.
/// The predicted measurement mean is accumulated from residuals about the
/// central sigma point so that wrapped coordinates average correctly.
pub fn ukf_update_plan<H: MeasurementMap + ?Sized>(
    comp: &GaussianComponent,
    h: &H,
    r: &Matrix,
    params: &UnscentedParams,
) -> Result<UpdatePlan> {
    let n = comp.dim();
    let m = r.nrows();
    check_square("ukf_update measurement noise", r, m)?;
    let sigma = ut_points(comp, params)?;
    let projected: Vec<Vector> = sigma.points.iter().map(|p| h.apply(p)).collect();
    if let Some(z) = projected.iter().find(|z| z.len() != m) {
        return Err(GaussianError::DimensionMismatch {
            context: "ukf_update measurement map",
            expected: m,
            found: z.len(),
        });
    }
    let anchor = projected[0].clone();
    let mut offset = Vector::zeros(m);
    for (w, z) in sigma.mean_weights.iter().zip(&projected) {
        offset.axpy(*w, &h.residual(z, &anchor), 1.0);
    }
    let z_mean = &anchor + offset;
    let mut s = r.clone();
    let mut cross = Matrix::zeros(n, m);
    for ((w, z), x) in sigma.cov_weights.iter().zip(&projected).zip(&sigma.points) {
        let dz = h.residual(z, &z_mean);
        let dx = x - &comp.mean;
        s.ger(*w, &dz, &dz, 1.0);
        cross.ger(*w, &dx, &dz, 1.0);
    }
    let (chol, whitening) = innovation_factor(s)?;
    let gain = chol.solve(&cross.transpose()).transpose();
    let posterior_cov = condition_covariance(&comp.cov - &gain * cross.transpose())?;
    Ok(UpdatePlan {
        // store the predicted measurement wrapped like any other value
        predicted_measurement: h.residual(&z_mean, &Vector::zeros(m)),
        log_norm: -0.5 * (m as f64 * LN_2PI + log_det(&chol)),
        innovation_chol: chol,
        whitening,
        gain,
        posterior_cov,
    })
}

/// Unscented measurement update. Returns the posterior component (weight
/// unchanged) and the log-likelihood under the predicted measurement
/// Gaussian.
pub fn ukf_update<H: MeasurementMap + ?Sized>(
    comp: &GaussianComponent,
    z: &Vector,
    h: &H,
    r: &Matrix,
    params: &UnscentedParams,
) -> Result<(GaussianComponent, f64)> {
    let plan = ukf_update_plan(comp, h, r, params)?;
    if z.len() != r.nrows() {
        return Err(GaussianError::DimensionMismatch {
            context: "ukf_update measurement",
            expected: r.nrows(),
            found: z.len(),
        });
    }
    let innovation = h.residual(z, plan.predicted_measurement());
    Ok((plan.posterior(comp, &innovation), plan.log_likelihood(&innovation)))
}

/// Moment-matches a set of weighted components into `(mass, mean, cov)`.
pub fn moment_match(components: &[GaussianComponent]) -> Option<(f64, Vector, Matrix)> {
    let log_mass = log_sum_exp(components.iter().map(|c| c.log_weight));
    if !log_mass.is_finite() {
        return None;
    }
    let n = components[0].dim();
    let mut mean = Vector::zeros(n);
    for c in components {
        mean.axpy((c.log_weight - log_mass).exp(), &c.mean, 1.0);
    }
    let mut cov = Matrix::zeros(n, n);
    for c in components {
        let w = (c.log_weight - log_mass).exp();
        let d = &c.mean - &mean;
        cov += &c.cov * w;
        cov.ger(w, &d, &d, 1.0);
    }
    Some((log_mass, mean, (&cov + cov.transpose()) * 0.5))
}

/// Thresholds for Gaussian-mixture reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureReduction {
    /// Components with weight below this fraction of the reference mass are dropped.
    pub prune_thresh: f64,
    /// Components within this Mahalanobis distance of the dominant one are merged.
    pub merge_thresh: f64,
    pub max_components: usize,
}

impl Default for MixtureReduction {
    fn default() -> Self {
        Self {
            prune_thresh: 1e-5,
            merge_thresh: 4.0,
            max_components: 10,
        }
    }
}

impl MixtureReduction {
    /// No pruning, no merging, no cap.
    pub fn exact() -> Self {
        Self {
            prune_thresh: 0.0,
            merge_thresh: 0.0,
            max_components: usize::MAX,
        }
    }
}

/// Prunes, merges and caps `components` without renormalizing. Pruning
/// compares each weight against `reference_log_mass`.
pub(crate) fn reduce_components(
    components: &[GaussianComponent],
    reference_log_mass: f64,
    reduction: &MixtureReduction,
) -> Vec<GaussianComponent> {
    let log_prune = reduction.prune_thresh.ln() + reference_log_mass;
    let mut remaining: Vec<GaussianComponent> = components
        .iter()
        .filter(|c| c.log_weight.is_finite() && c.log_weight >= log_prune)
        .cloned()
        .collect();
    let mut merged = Vec::with_capacity(remaining.len());
    if reduction.merge_thresh <= 0.0 {
        merged = remaining;
    } else {
        let gate_sq = reduction.merge_thresh * reduction.merge_thresh;
        while !remaining.is_empty() {
            // heaviest first, earliest index on ties
            let lead = remaining.iter().enumerate().fold(0, |best, (i, c)| {
                if c.log_weight > remaining[best].log_weight {
                    i
                } else {
                    best
                }
            });
            let lead_mean = remaining[lead].mean.clone();
            let lead_chol = Cholesky::new(remaining[lead].cov.clone());
            let mut group = Vec::new();
            let mut rest = Vec::new();
            for (i, c) in remaining.into_iter().enumerate() {
                let close = i == lead
                    || lead_chol.as_ref().is_some_and(|chol| {
                        let d = &c.mean - &lead_mean;
                        d.dot(&chol.solve(&d)) < gate_sq
                    });
                if close {
                    group.push(c);
                } else {
                    rest.push(c);
                }
            }
            remaining = rest;
            if group.len() == 1 {
                merged.extend(group);
            } else if let Some((log_mass, mean, cov)) = moment_match(&group) {
                merged.push(GaussianComponent::new(log_mass, mean, cov));
            }
        }
    }
    merged.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight));
    merged.truncate(reduction.max_components);
    merged
}

/// Drops components whose normalized weight is below `prune_thresh`,
/// greedily merges components within `merge_thresh` (Mahalanobis distance
/// under the dominant component's covariance) by moment matching, keeps at
/// most `max_comp` of the heaviest, and renormalizes to the input mass.
pub fn prune_merge(mix: &Mixture, prune_thresh: f64, merge_thresh: f64, max_comp: usize) -> Mixture {
    let reduction = MixtureReduction {
        prune_thresh,
        merge_thresh,
        max_components: max_comp,
    };
    let log_mass = mix.log_mass();
    if !log_mass.is_finite() {
        return Mixture::default();
    }
    let mut reduced = Mixture::new(reduce_components(&mix.components, log_mass, &reduction));
    let kept = reduced.log_mass();
    if kept.is_finite() {
        reduced.scale_log(log_mass - kept);
    }
    reduced
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use nalgebra::{dmatrix, dvector};

    fn comp(mean: Vector, cov: Matrix) -> GaussianComponent {
        GaussianComponent::new(0.0, mean, cov)
    }

    fn cv(t: f64) -> Matrix {
        dmatrix![1.0, t, 0.0, 0.0; 0.0, 1.0, 0.0, 0.0; 0.0, 0.0, 1.0, t; 0.0, 0.0, 0.0, 1.0]
    }

    fn log_normal_scalar(x: f64, mean: f64, var: f64) -> f64 {
        -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
    }

    #[test]
    fn predict_zero_mean_is_fixed_point() {
        let f = cv(5.0);
        let out = kalman_predict(&comp(Vector::zeros(4), Matrix::identity(4, 4)), &f, &Matrix::zeros(4, 4)).unwrap();
        assert_eq!(out.mean, Vector::zeros(4));
        assert!((out.cov - &f * f.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn predict_moves_mean_by_velocity() {
        let c = comp(dvector![1.0, 1.0, 0.0, 0.0], Matrix::identity(4, 4));
        let out = kalman_predict(&c, &cv(5.0), &Matrix::zeros(4, 4)).unwrap();
        assert_eq!(out.mean, dvector![6.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn predict_identity() {
        let c = GaussianComponent::new(-1.5, dvector![3.0, -2.0], dmatrix![2.0, 0.5; 0.5, 1.0]);
        let out = kalman_predict(&c, &Matrix::identity(2, 2), &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let c = comp(Vector::zeros(4), Matrix::identity(4, 4));
        let err = kalman_predict(&c, &Matrix::identity(3, 3), &Matrix::zeros(4, 4)).unwrap_err();
        assert!(matches!(err, GaussianError::DimensionMismatch { .. }));
    }

    #[test]
    fn update_scalar_closed_form() {
        let c = comp(dvector![0.0], dmatrix![1.0]);
        let (post, ll) = kalman_update(&c, &dvector![2.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-12);
        assert!((post.cov[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((ll - log_normal_scalar(2.0, 0.0, 2.0)).abs() < 1e-12);
        assert_eq!(post.log_weight, 0.0);
    }

    #[test]
    fn update_exact_measurement() {
        let cov = dmatrix![4.0, 1.0; 1.0, 3.0];
        let c = comp(dvector![10.0, -5.0], cov.clone());
        let r = Matrix::identity(2, 2) * 1e-12;
        let z = c.mean.clone();
        let (post, ll) = kalman_update(&c, &z, &Matrix::identity(2, 2), &r).unwrap();
        assert!((&post.mean - &z).abs().max() < 1e-9);
        let expected = log_gaussian_density(&Vector::zeros(2), &Vector::zeros(2), &(cov + r)).unwrap();
        assert!((ll - expected).abs() < 1e-9);
    }

    #[test]
    fn update_far_measurement_is_unlikely() {
        let c = comp(dvector![0.0, 0.0], Matrix::identity(2, 2));
        let r = Matrix::identity(2, 2);
        // 8.5 sigma under S = 2 I
        let z = dvector![8.5 * 2f64.sqrt(), 0.0];
        let (_, ll) = kalman_update(&c, &z, &Matrix::identity(2, 2), &r).unwrap();
        assert!(ll < -30.0, "{ll}");
    }

    #[test]
    fn update_singular_innovation() {
        let c = comp(dvector![0.0], dmatrix![0.0]);
        let err = kalman_update(&c, &dvector![1.0], &dmatrix![1.0], &dmatrix![0.0]).unwrap_err();
        assert_eq!(err, GaussianError::SingularUpdate);
    }

    #[test]
    fn sigma_points_one_dimensional() {
        let params = UnscentedParams { alpha: 1.0, beta: 2.0, kappa: 2.0 };
        let sp = ut_points(&comp(dvector![0.0], dmatrix![1.0]), &params).unwrap();
        let s3 = 3f64.sqrt();
        let pts: Vec<f64> = sp.points.iter().map(|p| p[0]).collect();
        assert!((pts[0]).abs() < 1e-15 && (pts[1] - s3).abs() < 1e-12 && (pts[2] + s3).abs() < 1e-12);
        assert!((sp.mean_weights[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((sp.mean_weights[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!((sp.mean_weights[2] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_points_reject_indefinite_covariance() {
        let c = comp(dvector![0.0, 0.0], dmatrix![1.0, 2.0; 2.0, 1.0]);
        assert!(ut_points(&c, &UnscentedParams::gaussian_optimal(2)).is_err());
    }

    #[test]
    fn ukf_identity_map() {
        let c = comp(dvector![1.0, 2.0, 3.0], dmatrix![2.0, 0.3, 0.0; 0.3, 1.0, 0.1; 0.0, 0.1, 0.5]);
        let params = UnscentedParams::gaussian_optimal(3);
        let out = ukf_predict(&c, &|x: &Vector| x.clone(), &Matrix::zeros(3, 3), &params).unwrap();
        assert!((&out.mean - &c.mean).abs().max() < 1e-9);
        assert!((&out.cov - &c.cov).abs().max() < 1e-9);
    }

    #[test]
    fn ukf_uninformative_measurement() {
        let c = comp(dvector![100.0, 3.0], dmatrix![50.0, 2.0; 2.0, 4.0]);
        let r = Matrix::identity(1, 1) * 1e12;
        let h = |x: &Vector| dvector![x[0]];
        let (post, _) = ukf_update(&c, &dvector![130.0], &h, &r, &UnscentedParams::gaussian_optimal(2)).unwrap();
        assert!(((&post.mean - &c.mean).abs().max() / 100.0) < 1e-6);
        assert!(((&post.cov - &c.cov).abs().max() / 50.0) < 1e-6);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
        assert!((log_sum_exp([-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn merge_duplicates() {
        let a = GaussianComponent::new(0.5f64.ln(), dvector![1.0, 2.0], Matrix::identity(2, 2));
        let mix = Mixture::new(vec![a.clone(), a.clone()]);
        let out = prune_merge(&mix, 1e-5, 4.0, 10);
        assert_eq!(out.len(), 1);
        assert!(out.components[0].log_weight.abs() < 1e-12);
        assert!((&out.components[0].mean - &a.mean).abs().max() < 1e-12);
        assert!((&out.components[0].cov - &a.cov).abs().max() < 1e-12);
    }

    #[test]
    fn prune_small_component() {
        let mix = Mixture::new(vec![
            GaussianComponent::new(0.999f64.ln(), dvector![0.0], dmatrix![1.0]),
            GaussianComponent::new(0.001f64.ln(), dvector![50.0], dmatrix![1.0]),
        ]);
        let out = prune_merge(&mix, 0.01, 4.0, 10);
        assert_eq!(out.len(), 1);
        assert!(out.components[0].log_weight.abs() < 1e-12);
        assert_eq!(out.components[0].mean[0], 0.0);
    }

    #[test]
    fn merge_moment_matches() {
        let mix = Mixture::new(vec![
            GaussianComponent::new(0.5f64.ln(), dvector![0.0], dmatrix![1.0]),
            GaussianComponent::new(0.5f64.ln(), dvector![2.0], dmatrix![1.0]),
        ]);
        let out = prune_merge(&mix, 1e-5, 4.0, 10);
        assert_eq!(out.len(), 1);
        assert!((out.components[0].mean[0] - 1.0).abs() < 1e-12);
        assert!((out.components[0].cov[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn prune_merge_empty_and_cap() {
        assert!(prune_merge(&Mixture::default(), 1e-5, 4.0, 10).is_empty());
        let mix = Mixture::new(
            (0..5)
                .map(|i| GaussianComponent::new(-(i as f64), dvector![100.0 * i as f64], dmatrix![1.0]))
                .collect(),
        );
        let out = prune_merge(&mix, 0.0, 4.0, 2);
        assert_eq!(out.len(), 2);
        assert!((out.log_mass() - mix.log_mass()).abs() < 1e-12);
        assert_eq!(out.components[0].mean[0], 0.0);
        assert_eq!(out.components[1].mean[0], 100.0);
    }
}
