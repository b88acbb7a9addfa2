//! Free-final-time trajectory optimization for climb-and-merge flights.
//!
//! Problems are transcribed by Hermite-Simpson collocation on a normalized
//! time grid (the flight duration is a decision variable) and solved by the
//! in-house SQP in [`nlp`]. Two problem classes exist: a minimum-time climb
//! used by the scheduler's reachability checks, and a control-cost-plus-time
//! merge problem whose terminal point rides along the corridor with the gap
//! leader. Accepted merge trajectories are re-simulated densely and checked
//! against every path constraint before they are flown.

pub mod nlp;
pub mod qp;
mod transcribe;

use std::time::Instant;

use crate::dynamics::{recover_physical, ControlUV, PlaneState, VehicleParams};
use crate::geometry::TmSection;
use serde::{Deserialize, Serialize};

pub use transcribe::Transcription;

/// Smallest admissible flight duration (s); keeps the time scaling of the
/// transcription away from zero.
pub const MIN_DURATION: f64 = 0.1;
/// Largest admissible flight duration (s).
pub const MAX_DURATION: f64 = 600.0;

/// Node count used by merge solves unless the spec overrides it.
pub const DEFAULT_NODES: usize = 40;
/// Node count used by the scheduler's reachability solves; the min-time
/// class runs under a much looser acceptance tolerance, so a coarser grid
/// is adequate and considerably faster.
pub const MIN_TIME_NODES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OcpKind {
    /// Minimize the flight duration.
    MinTime,
    /// Minimize quadratic control effort plus a time charge.
    MergeCost,
}

impl OcpKind {
    /// Largest scaled constraint violation accepted for this class.
    pub fn accept_tol(self) -> f64 {
        match self {
            OcpKind::MinTime => 1e-2,
            OcpKind::MergeCost => 1e-6,
        }
    }
}

/// Airspace and envelope bounds of one section/vehicle combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionLimits {
    pub merge_length: f64,
    /// Corridor center line height in plane coordinates (m).
    pub plane_height: f64,
    pub ols_angle: f64,
    pub tilt: f64,
    pub v_max: f64,
    pub roc_max: f64,
    /// Radius of the admissible acceleration disc (m/s^2).
    pub accel_radius: f64,
    pub gravity: f64,
}

impl SectionLimits {
    pub fn new(section: &TmSection, params: &VehicleParams) -> Self {
        Self {
            merge_length: section.merge_length,
            plane_height: section.corridor_plane_height(),
            ols_angle: section.ols_angle,
            tilt: section.frame.tilt,
            v_max: params.max_speed,
            roc_max: params.max_roc,
            accel_radius: params.accel_radius(section.frame.tilt),
            gravity: params.gravity,
        }
    }
}

/// Terminal boundary conditions. The target abscissa is affine in the
/// (free) completion time, which covers both fixed points and a merge slot
/// moving with the corridor flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSpec {
    /// x(t_f) must equal `x_const + x_rate * t_f`.
    pub x_const: f64,
    pub x_rate: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
}

impl TerminalSpec {
    /// Fixed terminal point with a required terminal velocity.
    pub fn fixed(x: f64, z: f64, vx: f64, vz: f64) -> Self {
        Self {
            x_const: x,
            x_rate: 0.0,
            z,
            vx,
            vz,
        }
    }

    /// Slot trailing a constant-speed leader by `gap`, on the corridor
    /// line, with the terminal velocity matched to the leader.
    pub fn moving_slot(leader_x_at_ref: f64, leader_vx: f64, t_ref: f64, gap: f64, z: f64) -> Self {
        Self {
            x_const: leader_x_at_ref - leader_vx * t_ref - gap,
            x_rate: leader_vx,
            z,
            vx: leader_vx,
            vz: 0.0,
        }
    }

    pub fn x_at(&self, t_f: f64) -> f64 {
        self.x_const + self.x_rate * t_f
    }
}

/// Motion model of a separation obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrackMotion {
    /// Constant-velocity motion from a reference state.
    Linear {
        x0: f64,
        z0: f64,
        vx: f64,
        vz: f64,
        t0: f64,
    },
    /// Stored flight samples, then constant velocity past the last sample.
    Sampled {
        times: Vec<f64>,
        xs: Vec<f64>,
        zs: Vec<f64>,
        tail_vx: f64,
        tail_vz: f64,
    },
}

/// A moving separation bubble the trajectory must stay out of.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleTrack {
    pub label: String,
    pub motion: TrackMotion,
    pub radius: f64,
    /// Members of the target merge pair: the terminal conditions already
    /// pin the vehicle one corridor headway from them, so their separation
    /// row at the final node is skipped (it would be a constant).
    pub pair_member: bool,
    /// Time the agent enters the section; separation is not evaluated
    /// before it (the vertiport's own exclusion volume covers that phase).
    pub active_from: Option<f64>,
}

impl ObstacleTrack {
    pub fn linear(
        label: impl Into<String>,
        x0: f64,
        z0: f64,
        vx: f64,
        vz: f64,
        t0: f64,
        radius: f64,
    ) -> Self {
        Self {
            label: label.into(),
            motion: TrackMotion::Linear { x0, z0, vx, vz, t0 },
            radius,
            pair_member: false,
            active_from: None,
        }
    }

    pub fn position(&self, t: f64) -> (f64, f64) {
        match &self.motion {
            TrackMotion::Linear { x0, z0, vx, vz, t0 } => (x0 + vx * (t - t0), z0 + vz * (t - t0)),
            TrackMotion::Sampled {
                times,
                xs,
                zs,
                tail_vx,
                tail_vz,
            } => {
                let n = times.len();
                if t <= times[0] {
                    return (xs[0], zs[0]);
                }
                if t >= times[n - 1] {
                    let dt = t - times[n - 1];
                    return (xs[n - 1] + tail_vx * dt, zs[n - 1] + tail_vz * dt);
                }
                let i = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i - 1,
                };
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                (
                    xs[i] + w * (xs[i + 1] - xs[i]),
                    zs[i] + w * (zs[i + 1] - zs[i]),
                )
            }
        }
    }

    pub fn velocity(&self, t: f64) -> (f64, f64) {
        match &self.motion {
            TrackMotion::Linear { vx, vz, .. } => (*vx, *vz),
            TrackMotion::Sampled {
                times,
                xs,
                zs,
                tail_vx,
                tail_vz,
            } => {
                let n = times.len();
                if t <= times[0] {
                    return (0.0, 0.0);
                }
                if t >= times[n - 1] {
                    return (*tail_vx, *tail_vz);
                }
                let i = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
                    Ok(i) => i.min(n - 2),
                    Err(i) => i - 1,
                };
                let dt = times[i + 1] - times[i];
                ((xs[i + 1] - xs[i]) / dt, (zs[i + 1] - zs[i]) / dt)
            }
        }
    }
}

/// Full problem statement for one climb-and-merge solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSpec {
    pub kind: OcpKind,
    pub initial: PlaneState,
    /// Climb start time: end of the vertical phase (s).
    pub t_start: f64,
    pub terminal: TerminalSpec,
    pub limits: SectionLimits,
    pub obstacles: Vec<ObstacleTrack>,
    /// Time-to-control-cost exchange rate for the merge objective.
    pub lambda: f64,
    /// Minimum corridor headway; obstacle radii may not exceed it.
    pub min_gap: f64,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum OcpError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("iteration limit before convergence, best violation {best_violation:.3e}")]
    MaxIterations { best_violation: f64 },
    #[error("no feasible trajectory found, best violation {best_violation:.3e}")]
    Infeasible { best_violation: f64 },
}

impl OcpError {
    pub fn best_violation(&self) -> Option<f64> {
        match self {
            OcpError::InvalidSpec(_) => None,
            OcpError::MaxIterations { best_violation } | OcpError::Infeasible { best_violation } => {
                Some(*best_violation)
            }
        }
    }
}

/// Collocation solution on the node grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSolution {
    pub times: Vec<f64>,
    pub states: Vec<PlaneState>,
    pub controls: Vec<ControlUV>,
    pub t_f: f64,
    pub objective: f64,
    /// Largest scaled constraint violation at the collocation points.
    pub max_violation: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub n_nodes: usize,
}

impl OcpSolution {
    /// State and control at `t`: cubic Hermite interpolation of the states,
    /// linear interpolation of the controls.
    pub fn sample(&self, t: f64, gravity: f64, tilt: f64) -> (PlaneState, ControlUV) {
        let n = self.times.len();
        if t <= self.times[0] {
            return (self.states[0], self.controls[0]);
        }
        if t >= self.times[n - 1] {
            return (self.states[n - 1], self.controls[n - 1]);
        }
        let i = match self.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return (self.states[i], self.controls[i]),
            Err(i) => i - 1,
        };
        let h = self.times[i + 1] - self.times[i];
        let w = (t - self.times[i]) / h;
        let (s0, s1) = (self.states[i], self.states[i + 1]);
        let (u0, u1) = (self.controls[i], self.controls[i + 1]);
        let u = ControlUV::new(u0.ux + w * (u1.ux - u0.ux), u0.uz + w * (u1.uz - u0.uz));
        let gc = gravity * tilt.cos();
        let hermite = |p0: f64, p1: f64, d0: f64, d1: f64| {
            let w2 = w * w;
            let w3 = w2 * w;
            p0 * (2.0 * w3 - 3.0 * w2 + 1.0)
                + d0 * h * (w3 - 2.0 * w2 + w)
                + p1 * (-2.0 * w3 + 3.0 * w2)
                + d1 * h * (w3 - w2)
        };
        let state = PlaneState {
            x: hermite(s0.x, s1.x, s0.vx, s1.vx),
            z: hermite(s0.z, s1.z, s0.vz, s1.vz),
            vx: hermite(s0.vx, s1.vx, u0.ux, u1.ux),
            vz: hermite(s0.vz, s1.vz, u0.uz - gc, u1.uz - gc),
        };
        (state, u)
    }
}

impl OcpSpec {
    pub fn validate(&self) -> Result<(), OcpError> {
        if self.n_nodes < 5 {
            return Err(OcpError::InvalidSpec(format!(
                "need at least 5 nodes, got {}",
                self.n_nodes
            )));
        }
        if self.lambda < 0.0 {
            return Err(OcpError::InvalidSpec("lambda must be non-negative".into()));
        }
        for o in &self.obstacles {
            if o.radius > self.min_gap + 1e-9 {
                return Err(OcpError::InvalidSpec(format!(
                    "obstacle {} radius {} exceeds the corridor headway {}",
                    o.label, o.radius, self.min_gap
                )));
            }
        }
        let l = &self.limits;
        let s = &self.initial;
        let inside = s.x >= -1e-9
            && s.x <= l.merge_length + 1e-9
            && s.z >= -1e-9
            && s.z <= l.plane_height + 1e-9
            && s.speed() <= l.v_max + 1e-9
            && s.vz * l.tilt.cos() <= l.roc_max + 1e-9;
        if !inside {
            return Err(OcpError::InvalidSpec(
                "initial state violates the section bounds".into(),
            ));
        }
        Ok(())
    }
}

/// Solves the spec: multi-start SQP, then (for merge solves) a dense
/// feasibility re-check with one mesh-refinement retry.
pub fn solve(spec: &OcpSpec) -> Result<OcpSolution, OcpError> {
    let started = Instant::now();
    spec.validate()?;
    let accept = spec.kind.accept_tol();
    let mut best_violation = f64::INFINITY;
    let mut any_converged = false;

    for variant in 0..3 {
        let (tr, guess) = Transcription::build(spec, spec.n_nodes, variant);
        let res = nlp::solve_sqp(&tr, guess, &solver_options(spec.kind));
        best_violation = best_violation.min(res.violation);
        any_converged |= res.converged;
        if res.violation <= accept {
            let mut sol = tr.extract(&res);
            sol.wall_time_s = started.elapsed().as_secs_f64();
            if spec.kind == OcpKind::MergeCost {
                let report = check_feasibility(&sol, spec, 0.05);
                if report.max_violation() > 1e-3 {
                    // One refinement doubling, warm-started by interpolation.
                    let (tr2, _) = Transcription::build(spec, spec.n_nodes * 2, variant);
                    let warm = tr2.embed_solution(&sol);
                    let res2 = nlp::solve_sqp(&tr2, warm, &solver_options(spec.kind));
                    if res2.violation <= accept {
                        let mut sol2 = tr2.extract(&res2);
                        sol2.wall_time_s = started.elapsed().as_secs_f64();
                        let report2 = check_feasibility(&sol2, spec, 0.05);
                        if report2.max_violation() <= 1e-3 {
                            return Ok(sol2);
                        }
                        best_violation = best_violation.min(report2.max_violation());
                    }
                    best_violation = best_violation.min(report.max_violation());
                    continue;
                }
            }
            return Ok(sol);
        }
    }

    if any_converged || best_violation <= 100.0 * accept {
        Err(OcpError::Infeasible { best_violation })
    } else {
        Err(OcpError::MaxIterations { best_violation })
    }
}

fn solver_options(kind: OcpKind) -> nlp::SolveOptions {
    match kind {
        OcpKind::MergeCost => nlp::SolveOptions {
            max_iter: 220,
            feas_tol: 1e-7,
            opt_tol: 1e-6,
            step_tol: 1e-10,
            trace: false,
        },
        OcpKind::MinTime => nlp::SolveOptions {
            max_iter: 160,
            feas_tol: 1e-6,
            opt_tol: 1e-5,
            step_tol: 1e-9,
            trace: false,
        },
    }
}

/// Dense re-simulation report. Violations are distance-like per family
/// (m, m/s, m/s^2); the obstacle defect is the squared-distance shortfall
/// normalized by the squared radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub range_violation: f64,
    pub wedge_violation: f64,
    pub speed_violation: f64,
    pub roc_violation: f64,
    pub thrust_violation: f64,
    /// `max (r^2 - d^2)/r^2` over tracks and time; `None` without obstacles.
    pub obstacle_violation: Option<f64>,
    /// `max (r - d)` over tracks and time (m); `None` without obstacles.
    pub clearance_deficit: Option<f64>,
    pub terminal_position_error: f64,
    pub terminal_speed_error: f64,
}

impl FeasibilityReport {
    /// Largest family violation (terminal errors are reported separately).
    pub fn max_violation(&self) -> f64 {
        self.range_violation
            .max(self.wedge_violation)
            .max(self.speed_violation)
            .max(self.roc_violation)
            .max(self.thrust_violation)
            .max(self.obstacle_violation.unwrap_or(0.0))
    }
}

/// Re-integrates the solution with RK4 at `dense_dt` using linearly
/// interpolated controls and audits every path constraint between nodes.
pub fn check_feasibility(sol: &OcpSolution, spec: &OcpSpec, dense_dt: f64) -> FeasibilityReport {
    dense_resimulate(sol, spec, dense_dt).0
}

/// Dense re-simulation that also returns the sampled path; the simulation
/// layer stores these samples as the flown trajectory.
pub fn dense_resimulate(
    sol: &OcpSolution,
    spec: &OcpSpec,
    dense_dt: f64,
) -> (FeasibilityReport, Vec<(f64, PlaneState, ControlUV)>) {
    let l = &spec.limits;
    let gc = l.gravity * l.tilt.cos();
    let control_at = |t: f64| -> ControlUV {
        let n = sol.times.len();
        if t <= sol.times[0] {
            return sol.controls[0];
        }
        if t >= sol.times[n - 1] {
            return sol.controls[n - 1];
        }
        let i = match sol.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return sol.controls[i],
            Err(i) => i - 1,
        };
        let w = (t - sol.times[i]) / (sol.times[i + 1] - sol.times[i]);
        ControlUV::new(
            sol.controls[i].ux + w * (sol.controls[i + 1].ux - sol.controls[i].ux),
            sol.controls[i].uz + w * (sol.controls[i + 1].uz - sol.controls[i].uz),
        )
    };

    let mut report = FeasibilityReport {
        range_violation: 0.0,
        wedge_violation: 0.0,
        speed_violation: 0.0,
        roc_violation: 0.0,
        thrust_violation: 0.0,
        obstacle_violation: if spec.obstacles.is_empty() { None } else { Some(0.0) },
        clearance_deficit: if spec.obstacles.is_empty() {
            None
        } else {
            Some(f64::NEG_INFINITY)
        },
        terminal_position_error: 0.0,
        terminal_speed_error: 0.0,
    };

    let audit = |t: f64, s: &PlaneState, u: &ControlUV, report: &mut FeasibilityReport| {
        report.range_violation = report
            .range_violation
            .max(-s.x)
            .max(s.x - l.merge_length)
            .max(-s.z)
            .max(s.z - l.plane_height);
        report.wedge_violation = report
            .wedge_violation
            .max(s.x * l.ols_angle.tan() - s.z * l.tilt.cos());
        report.speed_violation = report.speed_violation.max(s.speed() - l.v_max);
        report.roc_violation = report.roc_violation.max(s.vz * l.tilt.cos() - l.roc_max);
        report.thrust_violation = report.thrust_violation.max(u.norm() - l.accel_radius);
        for o in &spec.obstacles {
            if let Some(from) = o.active_from {
                if t < from {
                    continue;
                }
            }
            let (ox, oz) = o.position(t);
            let d2 = (s.x - ox).powi(2) + (s.z - oz).powi(2);
            let r2 = o.radius * o.radius;
            if let Some(v) = &mut report.obstacle_violation {
                *v = v.max((r2 - d2) / r2);
            }
            if let Some(c) = &mut report.clearance_deficit {
                *c = c.max(o.radius - d2.sqrt());
            }
        }
    };

    let deriv = |s: &PlaneState, u: &ControlUV| PlaneState {
        x: s.vx,
        z: s.vz,
        vx: u.ux,
        vz: u.uz - gc,
    };

    let mut samples = Vec::new();
    let mut s = sol.states[0];
    let mut t = sol.times[0];
    audit(t, &s, &sol.controls[0], &mut report);
    samples.push((t, s, sol.controls[0]));
    while t < sol.t_f - 1e-12 {
        let dt = dense_dt.min(sol.t_f - t);
        let u1 = control_at(t);
        let um = control_at(t + dt / 2.0);
        let u2 = control_at(t + dt);
        let k1 = deriv(&s, &u1);
        let half = |k: &PlaneState| PlaneState {
            x: s.x + 0.5 * dt * k.x,
            z: s.z + 0.5 * dt * k.z,
            vx: s.vx + 0.5 * dt * k.vx,
            vz: s.vz + 0.5 * dt * k.vz,
        };
        let k2 = deriv(&half(&k1), &um);
        let k3 = deriv(&half(&k2), &um);
        let s4 = PlaneState {
            x: s.x + dt * k3.x,
            z: s.z + dt * k3.z,
            vx: s.vx + dt * k3.vx,
            vz: s.vz + dt * k3.vz,
        };
        let k4 = deriv(&s4, &u2);
        s = PlaneState {
            x: s.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            z: s.z + dt / 6.0 * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
            vx: s.vx + dt / 6.0 * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx),
            vz: s.vz + dt / 6.0 * (k1.vz + 2.0 * k2.vz + 2.0 * k3.vz + k4.vz),
        };
        t += dt;
        let u_now = control_at(t);
        audit(t, &s, &u_now, &mut report);
        samples.push((t, s, u_now));
    }

    report.terminal_position_error = (s.x - spec.terminal.x_at(sol.t_f)).hypot(s.z - spec.terminal.z);
    report.terminal_speed_error = (s.vx - spec.terminal.vx).hypot(s.vz - spec.terminal.vz);
    (report, samples)
}

/// CSV export of a solution with physical controls and per-constraint
/// slack columns (positive slack = margin).
pub fn solution_csv(sol: &OcpSolution, spec: &OcpSpec, params: &VehicleParams) -> String {
    let l = &spec.limits;
    let mut out = String::from(
        "t,x,z,vx,vz,ux,uz,F,theta,slack_speed,slack_roc,slack_thrust,slack_wedge,slack_obstacle\n",
    );
    for i in 0..sol.times.len() {
        let t = sol.times[i];
        let s = &sol.states[i];
        let u = &sol.controls[i];
        let (f, theta) = match recover_physical(u, params, l.tilt) {
            Ok(pc) => (pc.thrust, pc.pitch),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let slack_obst = spec
            .obstacles
            .iter()
            .filter(|o| o.active_from.map_or(true, |from| t >= from))
            .map(|o| {
                let (ox, oz) = o.position(t);
                (s.x - ox).hypot(s.z - oz) - o.radius
            })
            .fold(f64::INFINITY, f64::min);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_sig(t),
            fmt_sig(s.x),
            fmt_sig(s.z),
            fmt_sig(s.vx),
            fmt_sig(s.vz),
            fmt_sig(u.ux),
            fmt_sig(u.uz),
            fmt_sig(f),
            fmt_sig(theta),
            fmt_sig(l.v_max - s.speed()),
            fmt_sig(l.roc_max - s.vz * l.tilt.cos()),
            fmt_sig(l.accel_radius - u.norm()),
            fmt_sig(s.z * l.tilt.cos() - s.x * l.ols_angle.tan()),
            fmt_sig(if slack_obst.is_finite() {
                slack_obst
            } else {
                f64::NAN
            }),
        ));
    }
    out
}

/// Formats with six significant digits.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (5 - mag).clamp(0, 12) as usize;
    format!("{v:.decimals$}")
}
