//! Reduced in-plane vehicle dynamics and control-variable recovery.
//!
//! In the climb plane the vehicle is a double integrator driven by the
//! acceleration pair `(ux, uz)` plus a constant gravity offset; the physical
//! inputs (net thrust magnitude and tip-path-plane pitch) are recovered in
//! closed form, and the full attitude (Euler angles) by a short Newton
//! polish on the thrust-direction equations.

use serde::{Deserialize, Serialize};

/// Mass, actuation and envelope limits shared by all merging vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Vehicle mass (kg).
    pub mass: f64,
    /// Maximum net thrust (N).
    pub max_thrust: f64,
    /// Maximum total speed (m/s).
    pub max_speed: f64,
    /// Maximum inertial rate of climb (m/s).
    pub max_roc: f64,
    /// Take-off safety speed reached during the vertical phase (m/s).
    pub toss_speed: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 240.0,
            max_thrust: 4800.0,
            max_speed: 40.0,
            max_roc: 9.0,
            toss_speed: 8.0,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.mass > 0.0)
            || !(self.max_speed > 0.0)
            || !(self.max_roc > 0.0)
            || !(self.toss_speed > 0.0)
        {
            return Err(DynamicsError::InvalidParams);
        }
        if self.max_thrust <= self.mass * self.gravity {
            return Err(DynamicsError::InsufficientThrust {
                max_thrust: self.max_thrust,
                weight: self.mass * self.gravity,
            });
        }
        Ok(())
    }

    /// Radius of the admissible acceleration disc for plane tilt `phi`:
    /// `sqrt(F_max^2 - (m g sin phi)^2) / m`.
    pub fn accel_radius(&self, phi: f64) -> f64 {
        let lateral = self.mass * self.gravity * phi.sin();
        ((self.max_thrust.powi(2) - lateral.powi(2)).max(0.0)).sqrt() / self.mass
    }
}

/// In-plane kinematic state `(x, z, vx, vz)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlaneState {
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
}

impl PlaneState {
    pub fn new(x: f64, z: f64, vx: f64, vz: f64) -> Self {
        Self { x, z, vx, vz }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vz)
    }
}

/// In-plane acceleration command `(ux, uz)` in m/s^2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlUV {
    pub ux: f64,
    pub uz: f64,
}

impl ControlUV {
    pub fn new(ux: f64, uz: f64) -> Self {
        Self { ux, uz }
    }

    pub fn norm(&self) -> f64 {
        self.ux.hypot(self.uz)
    }
}

/// Physical control set: net thrust, tip-path-plane pitch and the attitude
/// angles that realize the commanded in-plane acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalControl {
    /// Net thrust magnitude (N).
    pub thrust: f64,
    /// Tip-path-plane pitch: angle between the thrust vector and the plane
    /// z-axis (rad).
    pub pitch: f64,
    /// Euler angles `(alpha, beta, gamma)` in the inertial frame (rad).
    pub euler: (f64, f64, f64),
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum DynamicsError {
    #[error("vehicle parameters out of range")]
    InvalidParams,
    #[error("thrust {thrust} cannot offset the lateral gravity component {lateral}")]
    NegativeRadicand { thrust: f64, lateral: f64 },
    #[error("max thrust {max_thrust} N does not exceed weight {weight} N")]
    InsufficientThrust { max_thrust: f64, weight: f64 },
    #[error("acceleration distance {accel_distance} m exceeds transition height {transition} m")]
    TransitionTooLow { accel_distance: f64, transition: f64 },
    #[error("control ({ux}, {uz}) lies outside the thrust disc (radius {radius})")]
    InfeasibleControl { ux: f64, uz: f64, radius: f64 },
    #[error("Euler recovery did not converge, residual {residual}")]
    EulerRecoveryFailed { residual: f64 },
}

/// State derivative of the reduced dynamics: `(vx, vz, ux, uz - g cos phi)`.
pub fn state_derivative(s: &PlaneState, u: &ControlUV, phi: f64, gravity: f64) -> PlaneState {
    PlaneState {
        x: s.vx,
        z: s.vz,
        vx: u.ux,
        vz: u.uz - gravity * phi.cos(),
    }
}

/// Acceleration produced by thrust `f` at pitch `theta` after the lateral
/// gravity component is cancelled out of plane.
pub fn accel_from_physical(
    f: f64,
    theta: f64,
    params: &VehicleParams,
    phi: f64,
) -> Result<ControlUV, DynamicsError> {
    let lateral = params.mass * params.gravity * phi.sin();
    if f < lateral.abs() {
        return Err(DynamicsError::NegativeRadicand { thrust: f, lateral });
    }
    let in_plane = (f.powi(2) - lateral.powi(2)).max(0.0).sqrt() / params.mass;
    Ok(ControlUV {
        ux: in_plane * theta.sin(),
        uz: in_plane * theta.cos(),
    })
}

/// Thrust-direction components in the plane frame for Euler angles
/// `(alpha, beta, gamma)` of a frame tilted by `phi`.
///
/// Returns `(ax, ay, az)`: the unit thrust direction after both rotations.
fn thrust_direction(phi: f64, alpha: f64, beta: f64, gamma: f64) -> (f64, f64, f64) {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let c1 = ca * sb * sg - sa * cg;
    let c2 = cb * ca;
    let c3 = ca * sb * cg + sa * sg;
    (c3, cp * c1 - sp * c2, sp * c1 + cp * c2)
}

/// Residual of the three attitude equations for a candidate Euler triple.
fn euler_residual(
    phi: f64,
    angles: (f64, f64, f64),
    s_ratio: f64,
    theta: f64,
    grav_ratio: f64,
) -> [f64; 3] {
    let (ax, ay, az) = thrust_direction(phi, angles.0, angles.1, angles.2);
    [
        ay + grav_ratio,
        az - s_ratio * theta.cos(),
        ax - s_ratio * theta.sin(),
    ]
}

/// Recovers thrust, pitch and Euler angles from an in-plane acceleration.
///
/// Thrust and pitch are closed-form. The Euler triple starts from the
/// gamma = 0 branch (exact where it exists, and identical to `(0, pitch, 0)`
/// for an untilted plane) and is polished by a damped Newton iteration on
/// the direction equations; accepted below a 1e-10 residual.
pub fn recover_physical(
    u: &ControlUV,
    params: &VehicleParams,
    phi: f64,
) -> Result<PhysicalControl, DynamicsError> {
    let m = params.mass;
    let lateral = m * params.gravity * phi.sin();
    let thrust = ((m * u.ux).powi(2) + (m * u.uz).powi(2) + lateral.powi(2)).sqrt();
    if thrust > params.max_thrust * (1.0 + 1e-6) {
        return Err(DynamicsError::InfeasibleControl {
            ux: u.ux,
            uz: u.uz,
            radius: params.accel_radius(phi),
        });
    }
    let pitch = u.ux.atan2(u.uz);

    if thrust <= f64::EPSILON {
        // Zero thrust is only reachable for an untilted plane; direction is
        // arbitrary, pick the identity attitude.
        return Ok(PhysicalControl {
            thrust: 0.0,
            pitch,
            euler: (0.0, 0.0, 0.0),
        });
    }

    let s_ratio = (1.0 - (lateral / thrust).powi(2)).max(0.0).sqrt();
    let grav_ratio = lateral / thrust;

    // gamma = 0 branch: direction = (sin b cos a, -sin a, cos b cos a),
    // solved directly against the required plane-frame direction.
    let req_x = s_ratio * pitch.sin();
    let req_y = -grav_ratio;
    let req_z = s_ratio * pitch.cos();
    let (sp, cp) = phi.sin_cos();
    // Undo the plane tilt to get the inertial thrust direction.
    let c3 = req_x;
    let c1 = cp * req_y + sp * req_z;
    let c2 = -sp * req_y + cp * req_z;
    let alpha = (-c1).clamp(-1.0, 1.0).asin();
    let mut angles = if alpha.cos().abs() > 1e-9 {
        (alpha, c3.atan2(c2), 0.0)
    } else {
        (alpha, pitch, 0.0)
    };

    // Newton polish with step damping; the seed is already near-exact so
    // this converges in a couple of iterations.
    let mut res = euler_residual(phi, angles, s_ratio, pitch, grav_ratio);
    for _ in 0..50 {
        let norm = res.iter().map(|r| r.abs()).fold(0.0, f64::max);
        if norm < 1e-12 {
            break;
        }
        let h = 1e-7;
        let mut jac = [[0.0_f64; 3]; 3];
        for j in 0..3 {
            let mut bumped = angles;
            match j {
                0 => bumped.0 += h,
                1 => bumped.1 += h,
                _ => bumped.2 += h,
            }
            let rb = euler_residual(phi, bumped, s_ratio, pitch, grav_ratio);
            for i in 0..3 {
                jac[i][j] = (rb[i] - res[i]) / h;
            }
        }
        let Some(step) = solve3(&jac, &res) else { break };
        let mut damping = 1.0;
        loop {
            let cand = (
                angles.0 - damping * step[0],
                angles.1 - damping * step[1],
                angles.2 - damping * step[2],
            );
            let cand_res = euler_residual(phi, cand, s_ratio, pitch, grav_ratio);
            let cand_norm = cand_res.iter().map(|r| r.abs()).fold(0.0, f64::max);
            if cand_norm < norm || damping < 1e-4 {
                angles = cand;
                res = cand_res;
                break;
            }
            damping *= 0.5;
        }
    }

    let residual = res.iter().map(|r| r.abs()).fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(DynamicsError::EulerRecoveryFailed { residual });
    }
    Ok(PhysicalControl {
        thrust,
        pitch,
        euler: angles,
    })
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let x = [
        b[0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (b[1] * a[2][2] - a[1][2] * b[2])
            + a[0][2] * (b[1] * a[2][1] - a[1][1] * b[2]),
        a[0][0] * (b[1] * a[2][2] - a[1][2] * b[2]) - b[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * b[2] - b[1] * a[2][0]),
        a[0][0] * (a[1][1] * b[2] - b[1] * a[2][1]) - a[0][1] * (a[1][0] * b[2] - b[1] * a[2][0])
            + b[0] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]),
    ];
    Some([x[0] * inv_det, x[1] * inv_det, x[2] * inv_det])
}

/// Shortest vertical-phase duration: full thrust until the take-off safety
/// speed, then a constant-speed climb to the transition height.
pub fn vertical_takeoff_duration(
    params: &VehicleParams,
    transition_height: f64,
) -> Result<f64, DynamicsError> {
    let net = params.max_thrust - params.mass * params.gravity;
    if net <= 0.0 {
        return Err(DynamicsError::InsufficientThrust {
            max_thrust: params.max_thrust,
            weight: params.mass * params.gravity,
        });
    }
    let v = params.toss_speed;
    let accel_distance = params.mass * v * v / (2.0 * net);
    if accel_distance > transition_height {
        return Err(DynamicsError::TransitionTooLow {
            accel_distance,
            transition: transition_height,
        });
    }
    Ok(params.mass * v / net + transition_height / v - params.mass * v / (2.0 * net))
}

/// Altitude and vertical speed of the vertical phase at `dt` seconds after
/// lift-off, under the same profile as [`vertical_takeoff_duration`].
pub fn vertical_phase_state(params: &VehicleParams, dt: f64) -> (f64, f64) {
    let a = (params.max_thrust - params.mass * params.gravity) / params.mass;
    let t_accel = params.toss_speed / a;
    if dt <= 0.0 {
        (0.0, 0.0)
    } else if dt < t_accel {
        (0.5 * a * dt * dt, a * dt)
    } else {
        let d_accel = 0.5 * a * t_accel * t_accel;
        (d_accel + params.toss_speed * (dt - t_accel), params.toss_speed)
    }
}

/// Signed envelope margins for a state/control pair; positive entries are
/// violations, negative entries are slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeReport {
    /// `|v| - V_max` (m/s).
    pub speed_excess: f64,
    /// `vz cos phi - RoC_max` (m/s).
    pub roc_excess: f64,
    /// `|pitch| - pi` (rad); non-positive by construction of atan2.
    pub pitch_excess: f64,
    /// `|m u| - sqrt(F_max^2 - (m g sin phi)^2)`, scaled by 1/m (m/s^2).
    pub thrust_excess: f64,
}

impl EnvelopeReport {
    /// Largest violation, clamped at zero; feasible iff this is zero.
    pub fn max_violation(&self) -> f64 {
        self.speed_excess
            .max(self.roc_excess)
            .max(self.pitch_excess)
            .max(self.thrust_excess)
            .max(0.0)
    }

    pub fn is_feasible(&self) -> bool {
        self.max_violation() <= 0.0
    }
}

/// Evaluates every mechanical envelope for a state/control pair.
pub fn check_envelope(
    s: &PlaneState,
    u: &ControlUV,
    params: &VehicleParams,
    phi: f64,
) -> EnvelopeReport {
    EnvelopeReport {
        speed_excess: s.speed() - params.max_speed,
        roc_excess: s.vz * phi.cos() - params.max_roc,
        pitch_excess: u.ux.atan2(u.uz).abs() - std::f64::consts::PI,
        thrust_excess: u.norm() - params.accel_radius(phi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    const G: f64 = 9.81;

    #[test]
    fn derivative_hover_cancels_gravity() {
        let s = PlaneState::new(0.0, 0.0, 0.0, 8.0);
        let d = state_derivative(&s, &ControlUV::new(0.0, G), 0.0, G);
        assert_eq!((d.x, d.z), (0.0, 8.0));
        assert_relative_eq!(d.vx, 0.0);
        assert_relative_eq!(d.vz, 0.0);
    }

    #[test]
    fn derivative_lateral_push() {
        let s = PlaneState::new(1.0, 2.0, 5.0, 0.0);
        let d = state_derivative(&s, &ControlUV::new(20.0, 0.0), 0.0, G);
        assert_relative_eq!(d.x, 5.0);
        assert_relative_eq!(d.z, 0.0);
        assert_relative_eq!(d.vx, 20.0);
        assert_relative_eq!(d.vz, -9.81);
    }

    #[test]
    fn derivative_tilted_gravity() {
        let s = PlaneState::default();
        let d = state_derivative(&s, &ControlUV::default(), 60.0_f64.to_radians(), G);
        assert_relative_eq!(d.vz, -4.905, epsilon = 1e-12);
    }

    #[test]
    fn accel_hover() {
        let p = VehicleParams::default();
        let u = accel_from_physical(2354.4, 0.0, &p, 0.0).unwrap();
        assert_relative_eq!(u.ux, 0.0, epsilon = 1e-12);
        assert_relative_eq!(u.uz, 9.81, epsilon = 1e-12);
    }

    #[test]
    fn accel_full_lateral() {
        let p = VehicleParams::default();
        let u = accel_from_physical(4800.0, std::f64::consts::FRAC_PI_2, &p, 0.0).unwrap();
        assert_relative_eq!(u.ux, 20.0, epsilon = 1e-12);
        assert_relative_eq!(u.uz, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn accel_radicand_boundary() {
        let p = VehicleParams::default();
        let phi = 30.0_f64.to_radians();
        let f = p.mass * p.gravity * phi.sin();
        let u = accel_from_physical(f, 0.3, &p, phi).unwrap();
        assert_eq!((u.ux, u.uz), (0.0, 0.0));
        assert!(matches!(
            accel_from_physical(f - 1.0, 0.3, &p, phi),
            Err(DynamicsError::NegativeRadicand { .. })
        ));
    }

    #[test]
    fn recover_hover_identity_attitude() {
        let p = VehicleParams::default();
        let pc = recover_physical(&ControlUV::new(0.0, 9.81), &p, 0.0).unwrap();
        assert_relative_eq!(pc.thrust, 2354.4, epsilon = 1e-9);
        assert_relative_eq!(pc.pitch, 0.0);
        assert_eq!(pc.euler, (0.0, 0.0, 0.0));
    }

    #[test]
    fn recover_flat_plane_pitch_only() {
        // For an untilted plane the attitude (0, pitch, 0) solves the
        // direction equations exactly.
        let p = VehicleParams::default();
        for (ux, uz) in [(3.0, 11.0), (-6.0, 14.0), (19.0, 2.0), (-2.0, -4.0)] {
            let pc = recover_physical(&ControlUV::new(ux, uz), &p, 0.0).unwrap();
            assert_relative_eq!(pc.euler.0, 0.0, epsilon = 1e-12);
            assert_relative_eq!(pc.euler.2, 0.0, epsilon = 1e-12);
            assert_relative_eq!(pc.euler.1, pc.pitch, epsilon = 1e-12);
            let res = euler_residual(0.0, pc.euler, 1.0, pc.pitch, 0.0);
            for r in res {
                assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recover_tilted_residual_small() {
        let p = VehicleParams::default();
        let phi = 30.0_f64.to_radians();
        let pc = recover_physical(&ControlUV::new(5.0, 12.0), &p, phi).unwrap();
        let m = p.mass;
        let lateral = m * p.gravity * phi.sin();
        let expect_f = ((m * 5.0_f64).powi(2) + (m * 12.0_f64).powi(2) + lateral.powi(2)).sqrt();
        assert_relative_eq!(pc.thrust, expect_f, epsilon = 1e-9);
        let res = euler_residual(
            phi,
            pc.euler,
            (1.0 - (lateral / pc.thrust).powi(2)).sqrt(),
            pc.pitch,
            lateral / pc.thrust,
        );
        for r in res {
            assert!(r.abs() < 1e-10, "residual {r}");
        }
    }

    #[test]
    fn recover_rejects_out_of_disc() {
        let p = VehicleParams::default();
        assert!(matches!(
            recover_physical(&ControlUV::new(25.0, 0.0), &p, 0.0),
            Err(DynamicsError::InfeasibleControl { .. })
        ));
    }

    #[test]
    fn round_trip_physical_controls() {
        let p = VehicleParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for phi_deg in [0.0, 15.0, -15.0, 45.0, -45.0] {
            let phi = (phi_deg as f64).to_radians();
            let f_lo = p.mass * p.gravity * phi.sin().abs();
            for _ in 0..1000 {
                let f = rng.random_range((f_lo + 1e-6)..p.max_thrust);
                let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let u = accel_from_physical(f, theta, &p, phi).unwrap();
                let pc = recover_physical(&u, &p, phi).unwrap();
                assert_relative_eq!(pc.thrust, f, epsilon = 1e-9, max_relative = 1e-9);
                assert_relative_eq!(pc.pitch, theta, epsilon = 1e-9);
                // Forward substitution reproduces the acceleration.
                let back = accel_from_physical(pc.thrust, pc.pitch, &p, phi).unwrap();
                assert_relative_eq!(back.ux, u.ux, epsilon = 1e-9);
                assert_relative_eq!(back.uz, u.uz, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn thrust_disc_matches_recovered_thrust_bound() {
        // The acceleration-disc inequality holds exactly when the recovered
        // net thrust respects the physical maximum.
        let p = VehicleParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for phi_deg in [0.0, 15.0, -15.0, 45.0, -45.0] {
            let phi = (phi_deg as f64).to_radians();
            let radius = p.accel_radius(phi);
            let lateral = p.mass * p.gravity * phi.sin();
            for _ in 0..1000 {
                let ux = rng.random_range(-25.0..25.0);
                let uz = rng.random_range(-25.0..25.0);
                let in_disc = ux * ux + uz * uz <= radius * radius;
                let f = ((p.mass * ux).powi(2) + (p.mass * uz).powi(2) + lateral.powi(2)).sqrt();
                assert_eq!(in_disc, f <= p.max_thrust * (1.0 + 1e-12), "phi {phi_deg}");
            }
        }
    }

    #[test]
    fn recovered_attitude_reproduces_full_dynamics() {
        // Push the recovered thrust direction through the unreduced rigid
        // body acceleration and check it matches the plane dynamics.
        let p = VehicleParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for phi_deg in [0.0, 10.0, -25.0, 40.0] {
            let phi = (phi_deg as f64).to_radians();
            for _ in 0..200 {
                let radius = p.accel_radius(phi);
                let r = rng.random_range(0.05..0.98) * radius;
                let ang = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let u = ControlUV::new(r * ang.sin(), r * ang.cos());
                let pc = recover_physical(&u, &p, phi).unwrap();
                let (ax, ay, az) = thrust_direction(phi, pc.euler.0, pc.euler.1, pc.euler.2);
                let k = pc.thrust / p.mass;
                assert_relative_eq!(k * ax, u.ux, epsilon = 1e-8);
                assert_relative_eq!(k * ay + p.gravity * phi.sin(), 0.0, epsilon = 1e-8);
                assert_relative_eq!(k * az, u.uz, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn vertical_duration_closed_form() {
        let p = VehicleParams::default();
        let t = vertical_takeoff_duration(&p, 30.5).unwrap();
        assert_relative_eq!(t, 4.2050, epsilon = 1e-3);
        // Doubling the height adds exactly height / toss speed.
        let t2 = vertical_takeoff_duration(&p, 61.0).unwrap();
        assert_relative_eq!(t2 - t, 30.5 / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn vertical_duration_matches_integration() {
        let p = VehicleParams::default();
        let t_closed = vertical_takeoff_duration(&p, 30.5).unwrap();
        // Forward Euler at full thrust until the safety speed, then cruise.
        let dt = 1e-5;
        let a = (p.max_thrust - p.mass * p.gravity) / p.mass;
        let (mut z, mut v, mut t) = (0.0_f64, 0.0_f64, 0.0_f64);
        while z < 30.5 {
            let acc = if v < p.toss_speed { a } else { 0.0 };
            z += v * dt;
            v = (v + acc * dt).min(p.toss_speed);
            t += dt;
        }
        assert!((t - t_closed).abs() < 1e-3, "euler {t} vs closed {t_closed}");
        // Tighter check against the exact piecewise kinematics.
        let (z_exact, _) = vertical_phase_state(&p, t_closed);
        assert!((z_exact - 30.5).abs() < 1e-6);
    }

    #[test]
    fn vertical_duration_monotone_in_toss_speed() {
        let mut p = VehicleParams::default();
        let mut last = 0.0;
        for v in [8.0, 4.0, 2.0, 1.0, 0.5] {
            p.toss_speed = v;
            let t = vertical_takeoff_duration(&p, 30.5).unwrap();
            assert!(t > last, "duration should grow as the safety speed drops");
            last = t;
        }
        // Slower safety speed means longer take-off overall.
        p.toss_speed = 0.5;
        assert!(vertical_takeoff_duration(&p, 30.5).unwrap() > 60.0);
    }

    #[test]
    fn vertical_duration_errors() {
        let mut p = VehicleParams::default();
        p.max_thrust = 2000.0;
        assert!(matches!(
            vertical_takeoff_duration(&p, 30.5),
            Err(DynamicsError::InsufficientThrust { .. })
        ));
        let mut p = VehicleParams::default();
        p.toss_speed = 60.0;
        assert!(matches!(
            vertical_takeoff_duration(&p, 30.5),
            Err(DynamicsError::TransitionTooLow { .. })
        ));
    }

    #[test]
    fn envelope_reports() {
        let p = VehicleParams::default();
        let r = check_envelope(
            &PlaneState::new(0.0, 0.0, 30.0, 30.0),
            &ControlUV::default(),
            &p,
            0.0,
        );
        assert_relative_eq!(r.speed_excess, 1800.0_f64.sqrt() - 40.0, epsilon = 1e-12);
        assert!(r.speed_excess > 2.4 && r.speed_excess < 2.5);

        // RoC exactly at the limit is a boundary case, not a violation.
        let r = check_envelope(
            &PlaneState::new(0.0, 0.0, 0.0, 9.0),
            &ControlUV::new(0.0, 9.81),
            &p,
            0.0,
        );
        assert_relative_eq!(r.roc_excess, 0.0, epsilon = 1e-12);
        assert!(r.is_feasible());

        // Zero control leaves the whole disc as slack.
        let r = check_envelope(&PlaneState::default(), &ControlUV::default(), &p, 0.0);
        assert_relative_eq!(-r.thrust_excess, 20.0, epsilon = 1e-12);
    }
}
