//! Jump Markov system definition: motion models, Markov switching between
//! them, the sensor, and the labeled multi-Bernoulli birth model.

use crate::gaussian::{
    self, kalman_predict, kalman_update_plan, log_degenerate_gaussian_density, log_gaussian_density,
    ukf_predict, ukf_update_plan,
    GaussianComponent, GaussianError, Matrix, MeasurementMap, UnscentedParams, UpdatePlan, Vector,
};
use crate::serde_mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("model index {index} out of range for {count} motion models")]
    InvalidModelIndex { index: usize, count: usize },
    #[error("switching matrix row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("{name} = {value} is not a probability")]
    ProbabilityOutOfRange { name: String, value: f64 },
    #[error("{name}: expected dimension {expected}, found {found}")]
    Dimension {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("{0} is not a valid covariance")]
    NotPositiveDefinite(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Numerical(#[from] GaussianError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Constant-velocity transition for state `[x, vx, y, vy]`.
pub fn cv_matrix(period: f64) -> Matrix {
    let t = period;
    Matrix::from_row_slice(
        4,
        4,
        &[
            1.0, t, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, t, //
            0.0, 0.0, 0.0, 1.0,
        ],
    )
}

/// Coordinated-turn transition with turn rate `omega` (rad/s) for state
/// `[x, vx, y, vy]`. Falls back to the analytic limit, the
/// constant-velocity matrix, when `|omega * period| < 1e-9`.
pub fn ct_matrix(omega: f64, period: f64) -> Matrix {
    let t = period;
    if (omega * t).abs() < 1e-9 {
        return cv_matrix(t);
    }
    let (s, c) = (omega * t).sin_cos();
    Matrix::from_row_slice(
        4,
        4,
        &[
            1.0, s / omega, 0.0, (c - 1.0) / omega, //
            0.0, c, 0.0, -s, //
            0.0, -(c - 1.0) / omega, 1.0, s / omega, //
            0.0, s, 0.0, c,
        ],
    )
}

/// Coordinated turn with the turn rate carried in the state
/// `[x, vx, y, vy, omega]`; the turn rate itself is held constant.
pub fn ct_unknown_rate(state: &Vector, period: f64) -> Vector {
    let omega = state[4];
    let kinematic = ct_matrix(omega, period) * state.rows(0, 4);
    Vector::from_vec(vec![kinematic[0], kinematic[1], kinematic[2], kinematic[3], omega])
}

/// Piecewise-constant white acceleration noise for `[x, vx, y, vy]`.
pub fn cv_process_noise(sigma: f64, period: f64) -> Matrix {
    let t = period;
    let q = sigma * sigma;
    let (a, b, c) = (t.powi(4) / 4.0, t.powi(3) / 2.0, t * t);
    Matrix::from_row_slice(
        4,
        4,
        &[
            a, b, 0.0, 0.0, //
            b, c, 0.0, 0.0, //
            0.0, 0.0, a, b, //
            0.0, 0.0, b, c,
        ],
    ) * q
}

/// Process noise for `[x, vx, y, vy, omega]`: the kinematic block of
/// [`cv_process_noise`] plus `(turn_sigma * period)^2` on the turn rate.
pub fn turn_rate_process_noise(sigma: f64, turn_sigma: f64, period: f64) -> Matrix {
    let mut q = Matrix::zeros(5, 5);
    q.view_mut((0, 0), (4, 4)).copy_from(&cv_process_noise(sigma, period));
    q[(4, 4)] = (turn_sigma * period).powi(2);
    q
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transition {
    Linear {
        #[serde(with = "serde_mat::rows")]
        matrix: Matrix,
    },
    /// Coordinated turn with unknown rate; the last state element is the turn rate.
    CoordinatedTurn { period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub name: String,
    pub transition: Transition,
    #[serde(with = "serde_mat::rows")]
    pub process_noise: Matrix,
}

impl MotionModel {
    pub fn linear(name: impl Into<String>, matrix: Matrix, process_noise: Matrix) -> Self {
        Self {
            name: name.into(),
            transition: Transition::Linear { matrix },
            process_noise,
        }
    }

    pub fn coordinated_turn(name: impl Into<String>, period: f64, process_noise: Matrix) -> Self {
        Self {
            name: name.into(),
            transition: Transition::CoordinatedTurn { period },
            process_noise,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.process_noise.nrows()
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.transition, Transition::Linear { .. })
    }

    /// Noise-free state map.
    pub fn propagate(&self, x: &Vector) -> Vector {
        match &self.transition {
            Transition::Linear { matrix } => matrix * x,
            Transition::CoordinatedTurn { period } => ct_unknown_rate(x, *period),
        }
    }

    /// Predicts one Gaussian component under this model, using the
    /// unscented transform when the transition is nonlinear.
    pub fn predict(
        &self,
        comp: &GaussianComponent,
        params: &UnscentedParams,
    ) -> gaussian::Result<GaussianComponent> {
        match &self.transition {
            Transition::Linear { matrix } => kalman_predict(comp, matrix, &self.process_noise),
            Transition::CoordinatedTurn { period } => {
                let period = *period;
                ukf_predict(comp, &|x: &Vector| ct_unknown_rate(x, period), &self.process_noise, params)
            }
        }
    }

    /// `log N(x; f(x_prev), Q)`. `Q` may be rank deficient (white
    /// acceleration noise is), in which case the density lives on the
    /// support of `Q`.
    pub fn log_transition_density(&self, x: &Vector, x_prev: &Vector) -> gaussian::Result<f64> {
        log_degenerate_gaussian_density(x, &self.propagate(x_prev), &self.process_noise)
    }

    /// A factor `L` with `L L^T = Q`, valid for semidefinite `Q`.
    pub fn noise_factor(&self) -> Matrix {
        psd_factor(&self.process_noise)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.state_dim() != dim || self.process_noise.ncols() != dim {
            return Err(ModelError::Dimension {
                name: format!("process noise of {}", self.name),
                expected: dim,
                found: self.state_dim(),
            });
        }
        match &self.transition {
            Transition::Linear { matrix } if matrix.shape() != (dim, dim) => {
                return Err(ModelError::Dimension {
                    name: format!("transition of {}", self.name),
                    expected: dim,
                    found: matrix.nrows(),
                })
            }
            Transition::CoordinatedTurn { .. } if dim != 5 => {
                return Err(ModelError::Dimension {
                    name: format!("coordinated-turn state of {}", self.name),
                    expected: 5,
                    found: dim,
                })
            }
            _ => {}
        }
        check_psd(&self.process_noise, &format!("process noise of {}", self.name))
    }
}

/// `U sqrt(max(L, 0))` from the symmetric eigendecomposition of `m`.
pub fn psd_factor(m: &Matrix) -> Matrix {
    let eig = ((m + m.transpose()) * 0.5).symmetric_eigen();
    let mut factor = eig.eigenvectors;
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        factor.column_mut(i).scale_mut(s);
    }
    factor
}

fn check_psd(m: &Matrix, name: &str) -> Result<()> {
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    let symmetric = (m - m.transpose()).abs().max() <= 1e-9 * scale;
    let eig = ((m + m.transpose()) * 0.5).symmetric_eigen();
    if !symmetric || eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) || m.abs().max() == 0.0 {
        return Err(ModelError::NotPositiveDefinite(name.to_string()));
    }
    Ok(())
}

fn check_spd(m: &Matrix, name: &str) -> Result<()> {
    let symmetric = (m - m.transpose()).abs().max() <= 1e-9 * m.abs().max().max(1.0);
    if !symmetric || nalgebra::Cholesky::new(m.clone()).is_none() {
        return Err(ModelError::NotPositiveDefinite(name.to_string()));
    }
    Ok(())
}

fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(ModelError::ProbabilityOutOfRange {
            name: name.to_string(),
            value,
        });
    }
    Ok(())
}

/// Markov model-switching probabilities. Row = current model, column = next
/// model, so entry `(from, to)` is the probability of switching to `to`
/// given `from`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SwitchingMatrix {
    probs: Matrix,
}

impl SwitchingMatrix {
    pub fn new(probs: Matrix) -> Result<Self> {
        if probs.nrows() != probs.ncols() || probs.nrows() == 0 {
            return Err(ModelError::Dimension {
                name: "switching matrix".into(),
                expected: probs.nrows(),
                found: probs.ncols(),
            });
        }
        for (i, row) in probs.row_iter().enumerate() {
            for &p in row.iter() {
                check_probability(&format!("switching matrix row {i}"), p)?;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ModelError::NotStochastic { row: i, sum });
            }
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(serde_mat::from_rows(rows).map_err(ModelError::Invalid)?)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            probs: Matrix::identity(n, n),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    /// Probability of switching to model `to` from model `from`.
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.probs[(from, to)]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.probs
    }
}

impl TryFrom<Vec<Vec<f64>>> for SwitchingMatrix {
    type Error = ModelError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SwitchingMatrix> for Vec<Vec<f64>> {
    fn from(m: SwitchingMatrix) -> Self {
        m.probs.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Bearing/range measurement `(atan2(y - sy, x - sx), |p - s|)` from a
/// sensor at `position`; the state is laid out as `[x, vx, y, vy, ...]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingRange {
    pub position: [f64; 2],
}

impl MeasurementMap for BearingRange {
    fn apply(&self, x: &Vector) -> Vector {
        let dx = x[0] - self.position[0];
        let dy = x[2] - self.position[1];
        Vector::from_vec(vec![dy.atan2(dx), dx.hypot(dy)])
    }

    fn residual(&self, z: &Vector, predicted: &Vector) -> Vector {
        let mut d = z - predicted;
        d[0] = wrap_angle(d[0]);
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Likelihood {
    Linear {
        #[serde(with = "serde_mat::rows")]
        matrix: Matrix,
        #[serde(with = "serde_mat::rows")]
        noise: Matrix,
    },
    BearingRange {
        sensor: BearingRange,
        #[serde(with = "serde_mat::rows")]
        noise: Matrix,
    },
}

impl Likelihood {
    pub fn measurement_dim(&self) -> usize {
        self.noise().nrows()
    }

    pub fn noise(&self) -> &Matrix {
        match self {
            Likelihood::Linear { noise, .. } | Likelihood::BearingRange { noise, .. } => noise,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Likelihood::Linear { .. })
    }

    /// Noise-free measurement of state `x`.
    pub fn measure(&self, x: &Vector) -> Vector {
        match self {
            Likelihood::Linear { matrix, .. } => matrix * x,
            Likelihood::BearingRange { sensor, .. } => sensor.apply(x),
        }
    }

    /// `z - predicted`, with angular coordinates wrapped.
    pub fn residual(&self, z: &Vector, predicted: &Vector) -> Vector {
        match self {
            Likelihood::Linear { .. } => z - predicted,
            Likelihood::BearingRange { sensor, .. } => sensor.residual(z, predicted),
        }
    }

    /// [`Self::residual`] written into `out`.
    pub fn residual_into(&self, z: &Vector, predicted: &Vector, out: &mut [f64]) {
        for (o, (a, b)) in out.iter_mut().zip(z.iter().zip(predicted.iter())) {
            *o = a - b;
        }
        if let Likelihood::BearingRange { .. } = self {
            out[0] = wrap_angle(out[0]);
        }
    }

    pub fn update_plan(
        &self,
        comp: &GaussianComponent,
        params: &UnscentedParams,
    ) -> gaussian::Result<UpdatePlan> {
        match self {
            Likelihood::Linear { matrix, noise } => kalman_update_plan(comp, matrix, noise),
            Likelihood::BearingRange { sensor, noise } => ukf_update_plan(comp, sensor, noise, params),
        }
    }

    /// `log g(z | x)`.
    pub fn log_likelihood(&self, z: &Vector, x: &Vector) -> gaussian::Result<f64> {
        let zero = Vector::zeros(z.len());
        log_gaussian_density(&self.residual(z, &self.measure(x)), &zero, self.noise())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodSet {
    Shared(Likelihood),
    PerMode(Vec<Likelihood>),
}

/// Axis-aligned bounds per measurement coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRegion {
    pub bounds: Vec<[f64; 2]>,
}

impl ObservationRegion {
    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|[lo, hi]| hi - lo).product()
    }

    pub fn contains(&self, z: &Vector) -> bool {
        z.len() == self.bounds.len()
            && self
                .bounds
                .iter()
                .zip(z.iter())
                .all(|([lo, hi], v)| *v >= *lo && *v <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub likelihood: LikelihoodSet,
    pub detection_prob: f64,
    /// Mean number of clutter returns per scan, spread uniformly over the region.
    pub clutter_rate: f64,
    pub region: ObservationRegion,
}

impl SensorModel {
    pub fn likelihood_for(&self, mode: usize) -> &Likelihood {
        match &self.likelihood {
            LikelihoodSet::Shared(l) => l,
            LikelihoodSet::PerMode(ls) => &ls[mode],
        }
    }

    pub fn measurement_dim(&self) -> usize {
        self.region.bounds.len()
    }

    pub fn is_linear(&self) -> bool {
        match &self.likelihood {
            LikelihoodSet::Shared(l) => l.is_linear(),
            LikelihoodSet::PerMode(ls) => ls.iter().all(Likelihood::is_linear),
        }
    }

    /// Uniform clutter intensity inside the region (zero outside).
    pub fn clutter_intensity(&self, z: &Vector) -> f64 {
        if self.region.contains(z) {
            self.clutter_rate / self.region.volume()
        } else {
            0.0
        }
    }

    pub fn log_clutter_intensity(&self) -> f64 {
        (self.clutter_rate / self.region.volume()).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthSite {
    pub existence_prob: f64,
    #[serde(with = "serde_mat::vector")]
    pub mean: Vector,
    #[serde(with = "serde_mat::rows")]
    pub cov: Matrix,
    /// Probability of each motion model at birth.
    pub mode_prior: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BirthModel {
    pub sites: Vec<BirthSite>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JmsModel {
    pub models: Vec<MotionModel>,
    pub switching: SwitchingMatrix,
    pub sensor: SensorModel,
    pub birth: BirthModel,
    pub survival_prob: f64,
    pub sampling_interval: f64,
    /// Unscented-transform parameters; `None` selects the Gaussian-optimal
    /// choice for the state dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unscented: Option<UnscentedParams>,
}

impl JmsModel {
    pub fn mode_count(&self) -> usize {
        self.models.len()
    }

    pub fn state_dim(&self) -> usize {
        self.models.first().map_or(0, MotionModel::state_dim)
    }

    pub fn unscented_params(&self) -> UnscentedParams {
        self.unscented
            .unwrap_or_else(|| UnscentedParams::gaussian_optimal(self.state_dim()))
    }

    /// True when every motion model and the sensor are linear-Gaussian.
    pub fn is_linear(&self) -> bool {
        self.models.iter().all(MotionModel::is_linear) && self.sensor.is_linear()
    }

    pub fn model(&self, index: usize) -> Result<&MotionModel> {
        self.models.get(index).ok_or(ModelError::InvalidModelIndex {
            index,
            count: self.models.len(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.state_dim();
        if self.models.is_empty() {
            return Err(ModelError::Invalid("no motion models".into()));
        }
        for m in &self.models {
            m.validate(dim)?;
        }
        if self.switching.len() != self.models.len() {
            return Err(ModelError::Dimension {
                name: "switching matrix".into(),
                expected: self.models.len(),
                found: self.switching.len(),
            });
        }
        // re-check stochasticity in case the matrix was built by hand
        SwitchingMatrix::new(self.switching.matrix().clone())?;
        check_probability("survival_prob", self.survival_prob)?;
        check_probability("detection_prob", self.sensor.detection_prob)?;
        if !(self.sensor.clutter_rate >= 0.0) {
            return Err(ModelError::Invalid("clutter_rate must be nonnegative".into()));
        }
        if !(self.sampling_interval > 0.0) {
            return Err(ModelError::Invalid("sampling_interval must be positive".into()));
        }
        let mdim = self.sensor.measurement_dim();
        if self.sensor.region.bounds.iter().any(|[lo, hi]| !(hi > lo)) {
            return Err(ModelError::Invalid("observation region has empty extent".into()));
        }
        let likelihoods: Vec<&Likelihood> = match &self.sensor.likelihood {
            LikelihoodSet::Shared(l) => vec![l],
            LikelihoodSet::PerMode(ls) => {
                if ls.len() != self.models.len() {
                    return Err(ModelError::Dimension {
                        name: "per-mode likelihoods".into(),
                        expected: self.models.len(),
                        found: ls.len(),
                    });
                }
                ls.iter().collect()
            }
        };
        for l in likelihoods {
            if l.measurement_dim() != mdim {
                return Err(ModelError::Dimension {
                    name: "measurement noise".into(),
                    expected: mdim,
                    found: l.measurement_dim(),
                });
            }
            check_spd(l.noise(), "measurement noise")?;
            match l {
                Likelihood::Linear { matrix, .. } if matrix.shape() != (mdim, dim) => {
                    return Err(ModelError::Dimension {
                        name: "measurement matrix columns".into(),
                        expected: dim,
                        found: matrix.ncols(),
                    })
                }
                Likelihood::BearingRange { .. } if mdim != 2 || dim < 4 => {
                    return Err(ModelError::Invalid(
                        "bearing/range sensor needs a 2-d measurement and [x, vx, y, vy, ..] state".into(),
                    ))
                }
                _ => {}
            }
        }
        for (i, site) in self.birth.sites.iter().enumerate() {
            check_probability(&format!("birth site {i} existence_prob"), site.existence_prob)?;
            if site.mean.len() != dim {
                return Err(ModelError::Dimension {
                    name: format!("birth site {i} mean"),
                    expected: dim,
                    found: site.mean.len(),
                });
            }
            check_spd(&site.cov, &format!("birth site {i} covariance"))?;
            if site.mode_prior.len() != self.models.len() {
                return Err(ModelError::Dimension {
                    name: format!("birth site {i} mode prior"),
                    expected: self.models.len(),
                    found: site.mode_prior.len(),
                });
            }
            for &p in &site.mode_prior {
                check_probability(&format!("birth site {i} mode prior"), p)?;
            }
            let sum: f64 = site.mode_prior.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ModelError::Invalid(format!(
                    "birth site {i} mode prior sums to {sum}"
                )));
            }
        }
        Ok(())
    }
}

/// `phi(x | x_prev, mode) * P(mode | prev_mode)`.
pub fn joint_transition_density(
    x: &Vector,
    mode: usize,
    x_prev: &Vector,
    prev_mode: usize,
    model: &JmsModel,
) -> Result<f64> {
    let m = model.model(mode)?;
    model.model(prev_mode)?;
    let switch = model.switching.prob(mode, prev_mode);
    if switch == 0.0 {
        return Ok(0.0);
    }
    Ok(switch * m.log_transition_density(x, x_prev)?.exp())
}

fn diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_row_slice(values))
}

/// Constants of the three-model linear example: constant velocity and two
/// coordinated turns of opposite sign, observed in Cartesian position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearScenarioParams {
    pub sampling_interval: f64,
    /// Turn rate of the two turn models, rad/s; applied as `+rate` and `-rate`.
    pub turn_rate: f64,
    /// Acceleration noise std per model (constant velocity, right turn, left turn).
    pub sigma_v: [f64; 3],
    pub switching: Vec<Vec<f64>>,
    pub sigma_h: f64,
    pub detection_prob: f64,
    pub clutter_rate: f64,
    pub region_half_width: f64,
    pub birth_means: Vec<[f64; 4]>,
    pub birth_cov_diag: [f64; 4],
    pub birth_prob: f64,
    pub birth_mode: usize,
    pub survival_prob: f64,
}

impl Default for LinearScenarioParams {
    fn default() -> Self {
        Self {
            sampling_interval: 5.0,
            turn_rate: 5.0 * PI / 180.0,
            sigma_v: [5.0, 20.0, 20.0],
            switching: vec![
                vec![0.8, 0.1, 0.1],
                vec![0.2, 0.8, 0.0],
                vec![0.2, 0.0, 0.8],
            ],
            sigma_h: 40.0,
            detection_prob: 0.97,
            clutter_rate: 60.0,
            region_half_width: 60_000.0,
            birth_means: vec![
                [40_000.0, 0.0, -50_000.0, 0.0],
                [-50_000.0, 0.0, 40_000.0, 0.0],
                [-10_000.0, 0.0, 0.0, 0.0],
            ],
            birth_cov_diag: [1000.0, 300.0, 1000.0, 300.0],
            birth_prob: 0.2,
            birth_mode: 0,
            survival_prob: 0.99,
        }
    }
}

impl LinearScenarioParams {
    pub fn build(&self) -> Result<JmsModel> {
        let t = self.sampling_interval;
        let models = vec![
            MotionModel::linear("constant_velocity", cv_matrix(t), cv_process_noise(self.sigma_v[0], t)),
            MotionModel::linear(
                "right_turn",
                ct_matrix(self.turn_rate, t),
                cv_process_noise(self.sigma_v[1], t),
            ),
            MotionModel::linear(
                "left_turn",
                ct_matrix(-self.turn_rate, t),
                cv_process_noise(self.sigma_v[2], t),
            ),
        ];
        let mut h = Matrix::zeros(2, 4);
        h[(0, 0)] = 1.0;
        h[(1, 2)] = 1.0;
        let w = self.region_half_width;
        let sensor = SensorModel {
            likelihood: LikelihoodSet::Shared(Likelihood::Linear {
                matrix: h,
                noise: Matrix::identity(2, 2) * self.sigma_h.powi(2),
            }),
            detection_prob: self.detection_prob,
            clutter_rate: self.clutter_rate,
            region: ObservationRegion {
                bounds: vec![[-w, w], [-w, w]],
            },
        };
        let birth = BirthModel {
            sites: self
                .birth_means
                .iter()
                .map(|m| BirthSite {
                    existence_prob: self.birth_prob,
                    mean: Vector::from_row_slice(m),
                    cov: diag(&self.birth_cov_diag),
                    mode_prior: one_hot(self.birth_mode, 3),
                })
                .collect(),
        };
        let model = JmsModel {
            models,
            switching: SwitchingMatrix::from_rows(&self.switching)?,
            sensor,
            birth,
            survival_prob: self.survival_prob,
            sampling_interval: t,
            unscented: None,
        };
        model.validate()?;
        Ok(model)
    }
}

fn one_hot(index: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i == index { 1.0 } else { 0.0 }).collect()
}

/// Constants of the two-model nonlinear example: constant velocity and a
/// coordinated turn with unknown rate, observed by a bearing/range sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearScenarioParams {
    pub sampling_interval: f64,
    /// Acceleration noise std per model (constant velocity, coordinated turn).
    pub sigma_v: [f64; 2],
    /// Turn-rate noise std per model, rad/s^2; enters as `(sigma * T)^2`.
    pub sigma_turn: [f64; 2],
    pub switching: Vec<Vec<f64>>,
    pub sigma_bearing: f64,
    pub sigma_range: f64,
    pub detection_prob: f64,
    pub clutter_rate: f64,
    /// Half-width of the square surveillance area the sensor covers.
    pub region_half_width: f64,
    pub birth_means: Vec<[f64; 5]>,
    pub birth_cov_diag: [f64; 5],
    pub birth_prob: f64,
    pub birth_mode: usize,
    pub survival_prob: f64,
}

impl Default for NonlinearScenarioParams {
    fn default() -> Self {
        Self {
            sampling_interval: 5.0,
            sigma_v: [5.0, 20.0],
            sigma_turn: [PI / 900.0, PI / 900.0],
            switching: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            sigma_bearing: PI / 180.0,
            sigma_range: 20.0,
            detection_prob: 0.97,
            clutter_rate: 60.0,
            region_half_width: 60_000.0,
            birth_means: vec![
                [40_000.0, 0.0, -50_000.0, 0.0, 0.0],
                [-50_000.0, 0.0, 40_000.0, 0.0, 0.0],
                [-10_000.0, 0.0, 0.0, 0.0, 0.0],
            ],
            birth_cov_diag: [1000.0, 300.0, 1000.0, 300.0, 1e-4],
            birth_prob: 0.2,
            birth_mode: 0,
            survival_prob: 0.99,
        }
    }
}

impl NonlinearScenarioParams {
    pub fn build(&self) -> Result<JmsModel> {
        let t = self.sampling_interval;
        let mut cv5 = Matrix::identity(5, 5);
        cv5.view_mut((0, 0), (4, 4)).copy_from(&cv_matrix(t));
        let models = vec![
            MotionModel::linear(
                "constant_velocity",
                cv5,
                turn_rate_process_noise(self.sigma_v[0], self.sigma_turn[0], t),
            ),
            MotionModel::coordinated_turn(
                "coordinated_turn",
                t,
                turn_rate_process_noise(self.sigma_v[1], self.sigma_turn[1], t),
            ),
        ];
        let max_range = self.region_half_width * 2f64.sqrt();
        let sensor = SensorModel {
            likelihood: LikelihoodSet::Shared(Likelihood::BearingRange {
                sensor: BearingRange { position: [0.0, 0.0] },
                noise: diag(&[self.sigma_bearing.powi(2), self.sigma_range.powi(2)]),
            }),
            detection_prob: self.detection_prob,
            clutter_rate: self.clutter_rate,
            region: ObservationRegion {
                bounds: vec![[-PI, PI], [0.0, max_range]],
            },
        };
        let birth = BirthModel {
            sites: self
                .birth_means
                .iter()
                .map(|m| BirthSite {
                    existence_prob: self.birth_prob,
                    mean: Vector::from_row_slice(m),
                    cov: diag(&self.birth_cov_diag),
                    mode_prior: one_hot(self.birth_mode, 2),
                })
                .collect(),
        };
        let model = JmsModel {
            models,
            switching: SwitchingMatrix::from_rows(&self.switching)?,
            sensor,
            birth,
            survival_prob: self.survival_prob,
            sampling_interval: t,
            unscented: None,
        };
        model.validate()?;
        Ok(model)
    }
}

/// The three-model linear example with its published constants.
pub fn linear_scenario() -> JmsModel {
    LinearScenarioParams::default()
        .build()
        .expect("default linear scenario is valid")
}

/// The two-model nonlinear example with its published constants.
pub fn nonlinear_scenario() -> JmsModel {
    NonlinearScenarioParams::default()
        .build()
        .expect("default nonlinear scenario is valid")
}
