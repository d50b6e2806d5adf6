//! Covariance-adaptive Kalman filter over `(x, y, w, h, vx, vy)`.
//!
//! Box center and size are filtered with a constant-velocity model. Size has
//! no velocity component, so long coasting never inflates or collapses a
//! box. The velocity entries of the mean are not estimated by the Kalman
//! gain: they are overwritten after every update with an exponentially
//! smoothed displacement rate (see [`smooth_velocity`]), and their
//! covariance is just the per-frame process noise.
//!
//! The measurement covariance is scaled by [`covariance_multiplier`], a
//! piecewise function of how much the detected box area differs from the
//! predicted one. Deformed detections (partial bodies in a crowd, merged
//! boxes) are therefore trusted less than the motion prediction.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::KalmanError;
use crate::geometry::BoundingBox;

type Vector6 = SVector<f64, 6>;
type Matrix6 = SMatrix<f64, 6, 6>;
type Matrix4 = SMatrix<f64, 4, 4>;
type Matrix4x6 = SMatrix<f64, 4, 6>;
type Matrix6x4 = SMatrix<f64, 6, 4>;

/// Measurement-covariance multipliers for the three deformation bands,
/// from most to least deformed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub coef1: f64,
    pub coef2: f64,
    pub coef3: f64,
}

impl CoefficientSet {
    pub const fn new(coef1: f64, coef2: f64, coef3: f64) -> Self {
        Self {
            coef1,
            coef2,
            coef3,
        }
    }

    /// `f(d) = 1` everywhere; turns the adaptive filter into a plain one.
    pub const UNIT: CoefficientSet = CoefficientSet::new(1.0, 1.0, 1.0);

    pub fn is_valid(&self) -> bool {
        self.coef1 >= self.coef2 && self.coef2 >= self.coef3 && self.coef3 >= 1.0
    }
}

/// Which coefficient set applies when a track is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackClass {
    /// Tentative and normal tracks.
    Normal,
    /// Predicted tracks being re-associated after coasting.
    Predicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Measurement std for `(x, y, w, h)` as a fraction of box height.
    pub measurement_std: [f64; 4],
    /// Per-frame process std for `(x, y, w, h, vx, vy)` as a fraction of box height.
    pub process_std: [f64; 6],
    /// Initial std for `(x, y, w, h, vx, vy)` as a fraction of box height.
    pub initial_std: [f64; 6],
    pub normal: CoefficientSet,
    pub predicted: CoefficientSet,
    /// Momentum of the velocity smoothing, in `[0, 1)`.
    pub beta: f64,
    /// Time between consecutive frames, in frames.
    pub frame_interval: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let pos = 1.0 / 20.0;
        let vel = 1.0 / 160.0;
        Self {
            measurement_std: [pos; 4],
            process_std: [pos, pos, pos, pos, vel, vel],
            initial_std: [2.0 * pos, 2.0 * pos, 0.1, 0.1, 10.0 * pos, 10.0 * pos],
            normal: CoefficientSet::new(15.0, 9.0, 6.0),
            predicted: CoefficientSet::new(9.0, 6.0, 3.0),
            beta: 0.9,
            frame_interval: 1.0,
        }
    }
}

impl NoiseConfig {
    pub fn coefficients(&self, class: TrackClass) -> &CoefficientSet {
        match class {
            TrackClass::Normal => &self.normal,
            TrackClass::Predicted => &self.predicted,
        }
    }
}

/// Filter state of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrackState {
    /// `(x, y, w, h, vx, vy)`; `(x, y)` is the box center.
    pub mean: Vector6,
    pub covariance: Matrix6,
    /// Momentum-smoothed velocity, px/frame.
    pub smoothed_velocity: [f64; 2],
    /// Box center after the most recent update.
    pub anchor: (f64, f64),
    /// Predict calls since the most recent update (or initialization).
    pub steps_since_update: u32,
}

fn height_scaled_diag<const N: usize>(factors: &[f64; N], h: f64) -> SVector<f64, N> {
    SVector::<f64, N>::from_iterator(factors.iter().map(|f| (f * h).powi(2)))
}

/// Starts a filter at a detection with zero velocity.
pub fn init_state(detection: &BoundingBox, noise: &NoiseConfig) -> KalmanTrackState {
    let (cx, cy) = detection.center();
    let h = detection.height();
    KalmanTrackState {
        mean: Vector6::new(cx, cy, detection.width(), h, 0.0, 0.0),
        covariance: Matrix6::from_diagonal(&height_scaled_diag(&noise.initial_std, h)),
        smoothed_velocity: [0.0, 0.0],
        anchor: (cx, cy),
        steps_since_update: 0,
    }
}

fn transition(dt: f64) -> Matrix6 {
    let mut f = Matrix6::identity();
    f[(0, 4)] = dt;
    f[(1, 5)] = dt;
    f
}

fn observation() -> Matrix4x6 {
    let mut h = Matrix4x6::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(m: &mut Matrix6) {
    let t = m.transpose();
    *m = (*m + t) * 0.5;
}

/// One constant-velocity step. Size is carried over unchanged.
pub fn predict(state: &KalmanTrackState, noise: &NoiseConfig) -> KalmanTrackState {
    let f = transition(noise.frame_interval);
    let q = Matrix6::from_diagonal(&height_scaled_diag(&noise.process_std, state.mean[3]));
    let mut covariance = f * state.covariance * f.transpose() + q;
    symmetrize(&mut covariance);
    KalmanTrackState {
        mean: f * state.mean,
        covariance,
        steps_since_update: state.steps_since_update + 1,
        ..state.clone()
    }
}

/// Detected area over predicted area.
pub fn deformation_ratio(predicted: &BoundingBox, detected: &BoundingBox) -> f64 {
    detected.area() / predicted.area()
}

/// Piecewise measurement-covariance multiplier of the deformation ratio.
///
/// | band of `d`                  | multiplier |
/// |------------------------------|------------|
/// | `(0, 0.6)` or `(1.4, inf)`   | `coef1`    |
/// | `[0.6, 0.7)` or `(1.3, 1.4]` | `coef2`    |
/// | `[0.7, 0.8)` or `(1.2, 1.3]` | `coef3`    |
/// | `[0.8, 1.2]`                 | `1`        |
///
/// Band edges belong to the band closer to 1 (the milder coefficient).
pub fn covariance_multiplier(
    d: f64,
    class: TrackClass,
    noise: &NoiseConfig,
) -> Result<f64, KalmanError> {
    if !(d > 0.0) {
        return Err(KalmanError::NonPositiveRatio(d));
    }
    let c = noise.coefficients(class);
    let m = if (0.8..=1.2).contains(&d) {
        1.0
    } else if (0.7..0.8).contains(&d) || (d > 1.2 && d <= 1.3) {
        c.coef3
    } else if (0.6..0.7).contains(&d) || (d > 1.3 && d <= 1.4) {
        c.coef2
    } else {
        c.coef1
    };
    Ok(m)
}

/// Momentum update of the velocity measurement:
/// `beta * prev + (1 - beta) * (det_center - prev_center) / dt`.
pub fn smooth_velocity(
    prev: [f64; 2],
    prev_center: (f64, f64),
    det_center: (f64, f64),
    beta: f64,
    dt: f64,
) -> [f64; 2] {
    let inst = [
        (det_center.0 - prev_center.0) / dt,
        (det_center.1 - prev_center.1) / dt,
    ];
    [
        beta * prev[0] + (1.0 - beta) * inst[0],
        beta * prev[1] + (1.0 - beta) * inst[1],
    ]
}

/// Kalman correction with measurement covariance `multiplier * R`.
///
/// `state` is expected to be the output of [`predict`] for this frame.
pub fn update(
    state: &KalmanTrackState,
    detected: &BoundingBox,
    multiplier: f64,
    noise: &NoiseConfig,
) -> Result<KalmanTrackState, KalmanError> {
    let h_mat = observation();
    let height = state.mean[3];
    let r = Matrix4::from_diagonal(&height_scaled_diag(&noise.measurement_std, height)) * multiplier;
    let p = &state.covariance;

    let s = h_mat * p * h_mat.transpose() + r;
    let s_inv = s.try_inverse().ok_or(KalmanError::SingularInnovation)?;
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Err(KalmanError::SingularInnovation);
    }
    let gain: Matrix6x4 = p * h_mat.transpose() * s_inv;

    let (cx, cy) = detected.center();
    let z = SVector::<f64, 4>::new(cx, cy, detected.width(), detected.height());
    let innovation = z - h_mat * state.mean;
    let mut mean = state.mean + gain * innovation;

    // Joseph form keeps the posterior PSD under rounding.
    let i_kh = Matrix6::identity() - gain * h_mat;
    let mut covariance = i_kh * p * i_kh.transpose() + gain * r * gain.transpose();

    let dt = noise.frame_interval * f64::from(state.steps_since_update.max(1));
    let velocity = smooth_velocity(
        state.smoothed_velocity,
        state.anchor,
        (cx, cy),
        noise.beta,
        dt,
    );
    mean[4] = velocity[0];
    mean[5] = velocity[1];

    let h_new = mean[3];
    for i in 4..6 {
        for j in 0..6 {
            covariance[(i, j)] = 0.0;
            covariance[(j, i)] = 0.0;
        }
        covariance[(i, i)] = (noise.process_std[i] * h_new).powi(2);
    }
    symmetrize(&mut covariance);

    BoundingBox::from_center(mean[0], mean[1], mean[2], mean[3])?;

    Ok(KalmanTrackState {
        mean,
        covariance,
        smoothed_velocity: velocity,
        anchor: (mean[0], mean[1]),
        steps_since_update: 0,
    })
}

impl KalmanTrackState {
    /// Box described by the current mean.
    pub fn to_box(&self) -> BoundingBox {
        let w = self.mean[2].max(f64::MIN_POSITIVE);
        let h = self.mean[3].max(f64::MIN_POSITIVE);
        BoundingBox::from_center(self.mean[0], self.mean[1], w, h)
            .expect("filter mean is finite")
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.mean[4], self.mean[5]]
    }

    /// Trace of the `(x, y)` covariance block.
    pub fn position_trace(&self) -> f64 {
        self.covariance[(0, 0)] + self.covariance[(1, 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bb(l: f64, t: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(l, t, w, h).unwrap()
    }

    fn assert_symmetric_psd_diag(p: &Matrix6) {
        for i in 0..6 {
            assert!(p[(i, i)] >= 0.0);
            for j in 0..6 {
                assert!((p[(i, j)] - p[(j, i)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn init_places_mean_at_center() {
        let noise = NoiseConfig::default();
        let s = init_state(&bb(0.0, 0.0, 10.0, 20.0), &noise);
        assert_eq!(s.mean.as_slice(), &[5.0, 10.0, 10.0, 20.0, 0.0, 0.0]);
        let s = init_state(&bb(100.0, 50.0, 30.0, 60.0), &noise);
        assert_eq!(s.mean.as_slice(), &[115.0, 80.0, 30.0, 60.0, 0.0, 0.0]);
        assert_symmetric_psd_diag(&s.covariance);
        assert!(s.covariance.symmetric_eigenvalues().iter().all(|&e| e >= 0.0));
        // position std 2h/20, size h/10, velocity 10h/20
        assert!((s.covariance[(0, 0)] - 36.0).abs() < 1e-9);
        assert!((s.covariance[(3, 3)] - 36.0).abs() < 1e-9);
        assert!((s.covariance[(4, 4)] - 900.0).abs() < 1e-9);
    }

    #[test]
    fn predict_constant_velocity_step() {
        let noise = NoiseConfig::default();
        let mut s = init_state(&bb(0.0, 0.0, 10.0, 20.0), &noise);
        s.mean[4] = 2.0;
        s.mean[5] = -1.0;
        let p = predict(&s, &noise);
        assert_eq!(p.mean.as_slice(), &[7.0, 9.0, 10.0, 20.0, 2.0, -1.0]);
    }

    #[test]
    fn stationary_predict_grows_covariance() {
        let noise = NoiseConfig::default();
        let s = init_state(&bb(0.0, 0.0, 10.0, 20.0), &noise);
        let p = predict(&s, &noise);
        assert_eq!(&p.mean.as_slice()[..4], &s.mean.as_slice()[..4]);
        assert!(p.covariance.trace() > s.covariance.trace());
    }

    #[test]
    fn two_predicts_match_doubled_interval() {
        // F(dt)^2 = F(2 dt) on the position rows: x + 2 vx dt.
        let noise = NoiseConfig::default();
        let mut s = init_state(&bb(3.0, 4.0, 10.0, 20.0), &noise);
        s.mean[4] = 1.5;
        s.mean[5] = -0.25;
        let twice = predict(&predict(&s, &noise), &noise);
        let doubled = predict(
            &s,
            &NoiseConfig {
                frame_interval: 2.0,
                ..noise.clone()
            },
        );
        for i in 0..2 {
            assert!((twice.mean[i] - doubled.mean[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn deformation_ratio_examples() {
        let p = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(deformation_ratio(&p, &bb(0.0, 0.0, 20.0, 10.0)), 2.0);
        assert_eq!(deformation_ratio(&p, &p), 1.0);
        assert!((deformation_ratio(&p, &bb(0.0, 0.0, 6.5, 10.0)) - 0.65).abs() < 1e-12);
    }

    #[test]
    fn multiplier_examples() {
        let n = NoiseConfig::default();
        let f = |d, c| covariance_multiplier(d, c, &n).unwrap();
        assert_eq!(f(1.35, TrackClass::Normal), 9.0);
        assert_eq!(f(0.5, TrackClass::Normal), 15.0);
        assert_eq!(f(1.0, TrackClass::Normal), 1.0);
        assert_eq!(f(1.0, TrackClass::Predicted), 1.0);
        assert_eq!(f(1.25, TrackClass::Predicted), 3.0);
        assert!(covariance_multiplier(0.0, TrackClass::Normal, &n).is_err());
        assert!(covariance_multiplier(-1.0, TrackClass::Normal, &n).is_err());
        assert!(covariance_multiplier(f64::NAN, TrackClass::Normal, &n).is_err());
        assert_eq!(f(10.0, TrackClass::Normal), 15.0);
    }

    /// Independent band table: `(lo, hi, lo_closed, hi_closed, band)` with band
    /// 0 = unit, 1..=3 = coef1..coef3.
    const BANDS: [(f64, f64, bool, bool, usize); 7] = [
        (0.0, 0.6, false, false, 1),
        (0.6, 0.7, true, false, 2),
        (0.7, 0.8, true, false, 3),
        (0.8, 1.2, true, true, 0),
        (1.2, 1.3, false, true, 3),
        (1.3, 1.4, false, true, 2),
        (1.4, f64::INFINITY, false, false, 1),
    ];

    fn table_oracle(d: f64, c: &CoefficientSet) -> f64 {
        for (lo, hi, lc, hc, band) in BANDS {
            let above = if lc { d >= lo } else { d > lo };
            let below = if hc { d <= hi } else { d < hi };
            if above && below {
                return [1.0, c.coef1, c.coef2, c.coef3][band];
            }
        }
        unreachable!("bands cover (0, inf)")
    }

    #[test]
    fn multiplier_matches_band_table() {
        let n = NoiseConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d: f64 = rng.random_range(0.01..2.5);
            for class in [TrackClass::Normal, TrackClass::Predicted] {
                assert_eq!(
                    covariance_multiplier(d, class, &n).unwrap(),
                    table_oracle(d, n.coefficients(class)),
                    "d = {d}"
                );
            }
        }
    }

    #[test]
    fn smooth_velocity_examples() {
        let v = smooth_velocity([1.0, 0.0], (0.0, 0.0), (3.0, 0.0), 0.9, 1.0);
        assert!((v[0] - 1.2).abs() < 1e-12 && v[1] == 0.0);
        let v = smooth_velocity([5.0, 5.0], (0.0, 0.0), (1.0, 1.0), 0.0, 1.0);
        assert_eq!(v, [1.0, 1.0]);

        let mut v = [0.0, 0.0];
        let mut p = (0.0, 0.0);
        for _ in 0..400 {
            let next = (p.0 + 2.0, p.1);
            v = smooth_velocity(v, p, next, 0.9, 1.0);
            p = next;
        }
        assert!((v[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_innovation_keeps_prediction() {
        let noise = NoiseConfig::default();
        let s = predict(&init_state(&bb(10.0, 10.0, 20.0, 40.0), &noise), &noise);
        let u = update(&s, &s.to_box(), 1.0, &noise).unwrap();
        assert!((u.mean[0] - s.mean[0]).abs() < 1e-9);
        assert!((u.mean[1] - s.mean[1]).abs() < 1e-9);
    }

    #[test]
    fn larger_multiplier_stays_closer_to_prediction() {
        let noise = NoiseConfig::default();
        let s = predict(&init_state(&bb(10.0, 10.0, 20.0, 40.0), &noise), &noise);
        let det = bb(18.0, 14.0, 20.0, 40.0);
        let u1 = update(&s, &det, 1.0, &noise).unwrap();
        let u15 = update(&s, &det, 15.0, &noise).unwrap();
        let dev = |u: &KalmanTrackState| (u.mean[0] - s.mean[0]).hypot(u.mean[1] - s.mean[1]);
        assert!(dev(&u15) < dev(&u1));

        // Closed form for the x gain: P/(P + m R), P and R diagonal.
        let p = s.covariance[(0, 0)];
        let r = (noise.measurement_std[0] * s.mean[3]).powi(2);
        let expect = |m: f64| s.mean[0] + p / (p + m * r) * 8.0;
        assert!((u1.mean[0] - expect(1.0)).abs() < 1e-9);
        assert!((u15.mean[0] - expect(15.0)).abs() < 1e-9);
    }

    #[test]
    fn update_contracts_position_covariance() {
        let noise = NoiseConfig::default();
        let s = predict(&init_state(&bb(10.0, 10.0, 20.0, 40.0), &noise), &noise);
        let u = update(&s, &bb(12.0, 9.0, 21.0, 38.0), 6.0, &noise).unwrap();
        assert!(u.position_trace() <= s.position_trace());
        assert_symmetric_psd_diag(&u.covariance);
        assert_eq!(u.steps_since_update, 0);
    }

    #[test]
    fn tracks_constant_velocity_target() {
        let noise = NoiseConfig::default();
        let truth = |k: f64| bb(100.0 + 2.0 * k, 200.0 - 1.0 * k, 40.0, 100.0);
        let mut s = init_state(&truth(0.0), &noise);
        let mut errs = Vec::new();
        for k in 1..=40 {
            s = predict(&s, &noise);
            s = update(&s, &truth(k as f64), 1.0, &noise).unwrap();
            errs.push(s.to_box().center_distance(&truth(k as f64)));
        }
        assert!(errs[9] < 0.5, "error after 10 frames {}", errs[9]);
        assert!(errs[39] < errs[9] && errs[39] < 0.05, "{errs:?}");
    }

    #[test]
    fn sizes_stay_positive_over_random_cycles() {
        let noise = NoiseConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = init_state(&bb(500.0, 300.0, 30.0, 80.0), &noise);
        for _ in 0..10_000 {
            s = predict(&s, &noise);
            let cur = s.to_box();
            let (cx, cy) = cur.center();
            let det = BoundingBox::from_center(
                cx + rng.random_range(-20.0..20.0),
                cy + rng.random_range(-20.0..20.0),
                rng.random_range(2.0..120.0),
                rng.random_range(2.0..200.0),
            )
            .unwrap();
            let m = rng.random_range(1.0..15.0);
            s = update(&s, &det, m, &noise).unwrap();
            assert!(s.mean[2] > 0.0 && s.mean[3] > 0.0);
        }
    }

    proptest! {
        #[test]
        fn deviation_non_increasing_in_multiplier(dx in -30.0..30.0f64, dy in -30.0..30.0f64, m1 in 1.0..15.0f64, m2 in 1.0..15.0f64) {
            let noise = NoiseConfig::default();
            let s = predict(&init_state(&bb(10.0, 10.0, 20.0, 40.0), &noise), &noise);
            let det = bb(10.0 + dx, 10.0 + dy, 20.0, 40.0);
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            let dev = |m| {
                let u = update(&s, &det, m, &noise).unwrap();
                (u.mean[0] - s.mean[0]).hypot(u.mean[1] - s.mean[1])
            };
            prop_assert!(dev(hi) <= dev(lo) + 1e-12);
        }

        #[test]
        fn smoothed_velocity_is_convex(px in -10.0..10.0f64, py in -10.0..10.0f64, ix in -10.0..10.0f64, iy in -10.0..10.0f64, beta in 0.0..0.999f64) {
            let v = smooth_velocity([px, py], (0.0, 0.0), (ix, iy), beta, 1.0);
            let n = |a: f64, b: f64| a.hypot(b);
            prop_assert!(n(v[0], v[1]) <= n(px, py).max(n(ix, iy)) + 1e-12);
        }
    }
}
