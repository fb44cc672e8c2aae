//! Gaussian landmark beliefs, the covariance-only Riccati map used by the
//! planner, and the EKF used by the simulator for range-only measurements.

use nalgebra::{DVector, Matrix2, Matrix2xX, Point2, RowVector2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AiaError, Result};
use crate::workspace::Pose;

/// Robot-landmark distances below this are clamped.
pub const MIN_DISTANCE: f64 = 1e-9;
const DEGENERATE_DET: f64 = 1e-300;

/// Omnidirectional range sensor with noise std-dev growing linearly in distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub range: f64,
    pub noise_slope: f64,
    pub noise_floor: f64,
}

impl SensorModel {
    pub fn new(range: f64, noise_slope: f64, noise_floor: f64) -> Result<Self> {
        let m = SensorModel {
            range,
            noise_slope,
            noise_floor,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(AiaError::validation("sensor.range", "must be positive and finite"));
        }
        if !(self.noise_slope.is_finite() && self.noise_slope >= 0.0) {
            return Err(AiaError::validation("sensor.noise_slope", "must be non-negative"));
        }
        if !(self.noise_floor.is_finite() && self.noise_floor > 0.0) {
            return Err(AiaError::validation("sensor.noise_floor", "must be positive"));
        }
        Ok(())
    }
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            range: 2.0,
            noise_slope: 0.25,
            noise_floor: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkBelief {
    pub landmark_id: usize,
    pub mean: Point2<f64>,
    pub cov: Matrix2<f64>,
}

impl LandmarkBelief {
    pub fn new(landmark_id: usize, mean: Point2<f64>, cov: Matrix2<f64>) -> Self {
        LandmarkBelief {
            landmark_id,
            mean,
            cov,
        }
    }

    pub fn det(&self) -> f64 {
        self.cov.determinant()
    }
}

/// Block-diagonal belief over all landmarks, one block per landmark id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalBelief {
    pub landmarks: Vec<LandmarkBelief>,
}

impl GlobalBelief {
    pub fn new(landmarks: Vec<LandmarkBelief>) -> Self {
        GlobalBelief { landmarks }
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    /// Determinant of the full block-diagonal covariance.
    pub fn det_product(&self) -> f64 {
        self.landmarks.iter().map(LandmarkBelief::det).product()
    }
}

pub fn det_per_landmark(belief: &GlobalBelief) -> Vec<f64> {
    belief.landmarks.iter().map(LandmarkBelief::det).collect()
}

/// Known exogenous inputs driving a mobile landmark.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSequence {
    /// Same input at every step.
    Constant(DVector<f64>),
    /// One input per step; querying past the end is an error.
    Steps(Vec<DVector<f64>>),
}

/// Linear landmark motion `x(t+1) = A x(t) + B a(t) + w(t)`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkDynamics {
    pub a: Matrix2<f64>,
    pub b: Matrix2xX<f64>,
    pub q: Matrix2<f64>,
    pub inputs: InputSequence,
}

impl LandmarkDynamics {
    pub fn stationary() -> Self {
        LandmarkDynamics {
            a: Matrix2::identity(),
            b: Matrix2xX::zeros(0),
            q: Matrix2::zeros(),
            inputs: InputSequence::Steps(Vec::new()),
        }
    }

    pub fn is_static(&self) -> bool {
        self.a == Matrix2::identity() && self.q == Matrix2::zeros() && self.b.iter().all(|&v| v == 0.0)
    }

    fn input_at(&self, landmark: usize, t: usize) -> Result<Option<&DVector<f64>>> {
        if self.b.ncols() == 0 {
            return Ok(None);
        }
        let a = match &self.inputs {
            InputSequence::Constant(a) => a,
            InputSequence::Steps(steps) => steps
                .get(t)
                .ok_or(AiaError::MissingLandmarkControl { landmark, t })?,
        };
        Ok(Some(a))
    }
}

impl Default for LandmarkDynamics {
    fn default() -> Self {
        LandmarkDynamics::stationary()
    }
}

/// Gradient of the range `‖x̂ − p‖` with respect to the landmark position,
/// or `None` when `x̂` is beyond sensing range.
pub fn measurement_jacobian(p: &Pose, x_hat: &Point2<f64>, model: &SensorModel) -> Option<RowVector2<f64>> {
    let diff = x_hat - p.position();
    let dist = diff.norm();
    if dist > model.range {
        return None;
    }
    if dist < MIN_DISTANCE {
        return Some(RowVector2::new(1.0, 0.0));
    }
    Some((diff / dist).transpose())
}

/// Measurement variance at a given distance; infinite beyond range.
pub fn measurement_noise_variance(model: &SensorModel, distance: f64) -> f64 {
    if distance > model.range {
        return f64::INFINITY;
    }
    let sigma = (model.noise_slope * distance).max(model.noise_floor);
    sigma * sigma
}

fn symmetrize(m: Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// One step of the covariance Riccati map: prediction through the landmark
/// dynamics, then a range measurement from `p` linearized at `belief.mean`.
///
/// `belief.mean` is the linearization point; for mobile landmarks the caller
/// passes the predicted mean at the measurement time. The mean itself is not
/// updated.
pub fn riccati_update(
    belief: &LandmarkBelief,
    p: &Pose,
    model: &SensorModel,
    dynamics: &LandmarkDynamics,
) -> Result<Matrix2<f64>> {
    let prior = if dynamics.is_static() {
        belief.cov
    } else {
        dynamics.a * belief.cov * dynamics.a.transpose() + dynamics.q
    };
    measurement_update_cov(&prior, &belief.mean, p, model)
}

/// Information-form measurement update of a covariance block.
pub fn measurement_update_cov(
    prior: &Matrix2<f64>,
    linearize_at: &Point2<f64>,
    p: &Pose,
    model: &SensorModel,
) -> Result<Matrix2<f64>> {
    if prior.determinant() < DEGENERATE_DET {
        return Err(AiaError::DegeneratePrior);
    }
    let Some(h) = measurement_jacobian(p, linearize_at, model) else {
        return Ok(*prior);
    };
    let dist = (linearize_at - p.position()).norm().max(MIN_DISTANCE);
    let r = measurement_noise_variance(model, dist);
    let info = prior.try_inverse().ok_or(AiaError::DegeneratePrior)? + h.transpose() * h / r;
    let post = info.try_inverse().ok_or(AiaError::NumericalFailure)?;
    Ok(symmetrize(post))
}

pub fn predict_mean(belief: &LandmarkBelief, dynamics: &LandmarkDynamics, t: usize) -> Result<Point2<f64>> {
    if dynamics.is_static() {
        return Ok(belief.mean);
    }
    let mut next: Vector2<f64> = dynamics.a * belief.mean.coords;
    if let Some(a) = dynamics.input_at(belief.landmark_id, t)? {
        next += &dynamics.b * a;
    }
    Ok(Point2::from(next))
}

/// Kalman prediction of both mean and covariance.
pub fn predict(belief: &LandmarkBelief, dynamics: &LandmarkDynamics, t: usize) -> Result<LandmarkBelief> {
    if dynamics.is_static() {
        return Ok(belief.clone());
    }
    let mean = predict_mean(belief, dynamics, t)?;
    let cov = symmetrize(dynamics.a * belief.cov * dynamics.a.transpose() + dynamics.q);
    Ok(LandmarkBelief::new(belief.landmark_id, mean, cov))
}

/// Advances a true landmark position one step, drawing process noise from `rng`.
pub fn propagate_truth<R: Rng + ?Sized>(
    x: &Point2<f64>,
    landmark: usize,
    dynamics: &LandmarkDynamics,
    t: usize,
    rng: &mut R,
) -> Result<Point2<f64>> {
    if dynamics.is_static() {
        return Ok(*x);
    }
    let mut next: Vector2<f64> = dynamics.a * x.coords;
    if let Some(a) = dynamics.input_at(landmark, t)? {
        next += &dynamics.b * a;
    }
    if let Some(l) = dynamics.q.cholesky() {
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        next += l.l() * z;
    }
    Ok(Point2::from(next))
}

/// Noisy range reading, or `None` when the landmark is out of range.
pub fn simulate_measurement<R: Rng + ?Sized>(
    p: &Pose,
    x_true: &Point2<f64>,
    model: &SensorModel,
    rng: &mut R,
) -> Option<f64> {
    let dist = (x_true - p.position()).norm();
    if dist > model.range {
        return None;
    }
    let sigma = measurement_noise_variance(model, dist).sqrt();
    let z: f64 = StandardNormal.sample(rng);
    Some(dist + sigma * z)
}

/// EKF correction with one range reading. Noise variance is taken at the
/// estimated distance; an estimate beyond range carries no information and
/// leaves the belief unchanged.
pub fn ekf_update(belief: &LandmarkBelief, p: &Pose, measurement: f64, model: &SensorModel) -> Result<LandmarkBelief> {
    let diff = belief.mean - p.position();
    let est = diff.norm();
    let Some(h) = measurement_jacobian(p, &belief.mean, model) else {
        return Ok(belief.clone());
    };
    let r = measurement_noise_variance(model, est.max(MIN_DISTANCE));
    let s = (h * belief.cov * h.transpose())[(0, 0)] + r;
    if !(s > 0.0) || !s.is_finite() {
        return Err(AiaError::NumericalFailure);
    }
    let k: Vector2<f64> = belief.cov * h.transpose() / s;
    let innovation = measurement - est;
    let mean = belief.mean + k * innovation;
    let cov = symmetrize((Matrix2::identity() - k * h) * belief.cov);
    Ok(LandmarkBelief::new(belief.landmark_id, mean, cov))
}

/// Symmetric within `tol` and eigenvalues ≥ `-tol`.
pub fn is_symmetric_psd(m: &Matrix2<f64>, tol: f64) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if (m - m.transpose()).norm() > tol {
        return false;
    }
    let s = symmetrize(*m);
    let tr = s.trace();
    let det = s.determinant();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    tr / 2.0 - disc >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor(range: f64) -> SensorModel {
        SensorModel::new(range, 0.25, 0.01).unwrap()
    }

    #[test]
    fn jacobian_examples() {
        let origin = Pose::new(0.0, 0.0, 0.0);
        let h = measurement_jacobian(&origin, &Point2::new(1.0, 0.0), &sensor(2.0)).unwrap();
        assert_eq!(h, RowVector2::new(1.0, 0.0));
        assert!(measurement_jacobian(&origin, &Point2::new(0.0, 3.0), &sensor(2.0)).is_none());
        let h = measurement_jacobian(&origin, &Point2::new(3.0, 4.0), &sensor(6.0)).unwrap();
        assert!((h[0] - 0.6).abs() < 1e-15 && (h[1] - 0.8).abs() < 1e-15);
        let h = measurement_jacobian(&origin, &Point2::new(0.0, 0.0), &sensor(2.0)).unwrap();
        assert_eq!(h, RowVector2::new(1.0, 0.0));
    }

    #[test]
    fn noise_variance_examples() {
        let m = sensor(2.0);
        assert!((measurement_noise_variance(&m, 1.0) - 0.0625).abs() < 1e-15);
        assert!(measurement_noise_variance(&m, 2.5).is_infinite());
        assert!((measurement_noise_variance(&m, 0.0) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn riccati_out_of_range_keeps_covariance() {
        let b = LandmarkBelief::new(0, Point2::new(5.0, 5.0), Matrix2::identity() * 0.04);
        let out = riccati_update(&b, &Pose::new(0.0, 0.0, 0.0), &sensor(2.0), &LandmarkDynamics::stationary()).unwrap();
        assert_eq!(out, b.cov);
    }

    #[test]
    fn riccati_directional_variance() {
        // distance 2 with slope 0.25 gives R = 0.25
        let b = LandmarkBelief::new(0, Point2::new(2.0, 0.0), Matrix2::identity());
        let out = riccati_update(&b, &Pose::new(0.0, 0.0, 0.0), &sensor(2.0), &LandmarkDynamics::stationary()).unwrap();
        assert!((out[(0, 0)] - 0.2).abs() < 1e-12);
        assert!((out[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(out[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn riccati_mobile_predict_only() {
        let dynamics = LandmarkDynamics {
            q: Matrix2::identity() * 0.01,
            ..LandmarkDynamics::stationary()
        };
        let b = LandmarkBelief::new(0, Point2::new(5.0, 5.0), Matrix2::identity() * 0.04);
        let out = riccati_update(&b, &Pose::new(0.0, 0.0, 0.0), &sensor(2.0), &dynamics).unwrap();
        assert!((out - Matrix2::identity() * 0.05).norm() < 1e-15);
    }

    #[test]
    fn riccati_rejects_degenerate_prior() {
        let b = LandmarkBelief::new(0, Point2::new(1.0, 0.0), Matrix2::zeros());
        let err = riccati_update(&b, &Pose::new(0.0, 0.0, 0.0), &sensor(2.0), &LandmarkDynamics::stationary());
        assert!(matches!(err, Err(AiaError::DegeneratePrior)));
    }

    #[test]
    fn predict_mean_examples() {
        let b = LandmarkBelief::new(0, Point2::new(1.0, 1.0), Matrix2::identity());
        assert_eq!(predict_mean(&b, &LandmarkDynamics::stationary(), 7).unwrap(), b.mean);

        let translate = LandmarkDynamics {
            a: Matrix2::identity(),
            b: Matrix2xX::from_column_slice(&[1.0, 0.0, 0.0, 1.0]),
            q: Matrix2::zeros(),
            inputs: InputSequence::Steps(vec![DVector::from_vec(vec![0.1, 0.0])]),
        };
        let m = predict_mean(&b, &translate, 0).unwrap();
        assert!((m - Point2::new(1.1, 1.0)).norm() < 1e-15);
        assert!(matches!(
            predict_mean(&b, &translate, 1),
            Err(AiaError::MissingLandmarkControl { t: 1, .. })
        ));

        let drift = LandmarkDynamics {
            a: Matrix2::new(1.0, 0.1, 0.0, 1.0),
            ..LandmarkDynamics::stationary()
        };
        let m = predict_mean(&b, &drift, 0).unwrap();
        assert!((m - Point2::new(1.1, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn ekf_scalar_analogue() {
        // prior variance 1 along H, R = 0.25, innovation 0.5
        let b = LandmarkBelief::new(0, Point2::new(2.0, 0.0), Matrix2::identity());
        let out = ekf_update(&b, &Pose::new(0.0, 0.0, 0.0), 2.5, &sensor(2.0)).unwrap();
        assert!((out.cov[(0, 0)] - 0.2).abs() < 1e-12);
        assert!((out.cov[(1, 1)] - 1.0).abs() < 1e-12);
        assert!((out.mean.x - 2.4).abs() < 1e-12);
        assert!(out.mean.y.abs() < 1e-12);
    }

    #[test]
    fn ekf_zero_innovation_keeps_mean() {
        let b = LandmarkBelief::new(3, Point2::new(0.6, 0.8), Matrix2::new(0.04, 0.01, 0.01, 0.03));
        let p = Pose::new(0.0, 0.0, 0.0);
        let out = ekf_update(&b, &p, 1.0, &sensor(2.0)).unwrap();
        assert!((out.mean - b.mean).norm() < 1e-15);
        let planned = riccati_update(&b, &p, &sensor(2.0), &LandmarkDynamics::stationary()).unwrap();
        assert!((out.cov - planned).norm() < 1e-12);
    }

    #[test]
    fn ekf_reaches_experimental_threshold() {
        let model = sensor(2.0);
        let truth = Point2::new(1.0, 1.0);
        let mut b = LandmarkBelief::new(0, Point2::new(1.0, 1.0), Matrix2::identity() * 0.04);
        let poses = [Pose::new(0.8, 1.0, 0.0), Pose::new(1.0, 0.8, 0.0)];
        let mut steps = 0;
        while b.det() > 1.8e-6 {
            let p = poses[steps % 2];
            let y = (truth - p.position()).norm();
            b = ekf_update(&b, &p, y, &model).unwrap();
            steps += 1;
            assert!(steps < 1000);
        }
    }

    #[test]
    fn determinants() {
        let ident = GlobalBelief::new(vec![
            LandmarkBelief::new(0, Point2::origin(), Matrix2::identity()),
            LandmarkBelief::new(1, Point2::origin(), Matrix2::identity()),
        ]);
        assert_eq!(det_per_landmark(&ident), vec![1.0, 1.0]);
        assert_eq!(ident.det_product(), 1.0);

        let half = GlobalBelief::new(vec![
            LandmarkBelief::new(0, Point2::origin(), Matrix2::identity() * 0.5),
            LandmarkBelief::new(1, Point2::origin(), Matrix2::identity() * 0.5),
        ]);
        assert_eq!(det_per_landmark(&half), vec![0.25, 0.25]);
        assert!((half.det_product() - 0.0625).abs() < 1e-16);

        let b = GlobalBelief::new(vec![LandmarkBelief::new(0, Point2::origin(), Matrix2::new(2.0, 1.0, 1.0, 2.0))]);
        assert!((det_per_landmark(&b)[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn psd_check() {
        assert!(is_symmetric_psd(&Matrix2::identity(), 1e-12));
        assert!(!is_symmetric_psd(&Matrix2::new(1.0, 2.0, 2.0, 1.0), 1e-12));
        assert!(!is_symmetric_psd(&Matrix2::new(1.0, 0.5, 0.0, 1.0), 1e-12));
    }
}
