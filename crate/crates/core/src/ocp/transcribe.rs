//! Hermite-Simpson transcription of the climb-and-merge problem.
//!
//! Decision vector: states at `N` nodes (x, z, vx, vz), controls at `N`
//! nodes (ux, uz), and the flight duration. Time is normalized so the grid
//! is uniform in `tau in [0,1]` with `t = t_start + tau * duration`. For the
//! double-integrator plane dynamics the Hermite-Simpson defects reduce to a
//! trapezoid rule on accelerations and a corrected trapezoid on positions,
//! which is exact for piecewise-linear control input. Path constraints are
//! written in distance-like units (m, m/s, m/s^2) so one feasibility
//! tolerance is meaningful across families.

use nalgebra::{DMatrix, DVector};

use super::nlp::{NlpProblem, NlpResult};
use super::{ObstacleTrack, OcpKind, OcpSolution, OcpSpec, MAX_DURATION, MIN_DURATION};
use crate::dynamics::{ControlUV, PlaneState};

/// Extra margin (m) applied to the airspace box at segment midpoints: the
/// dense path can bulge slightly between collocation samples, and the
/// downstream re-check gates violations at the millimeter level.
const MID_GUARD: f64 = 0.005;

#[derive(Debug, Clone, Copy)]
enum At {
    Node(usize),
    Mid(usize),
}

#[derive(Debug, Clone, Copy)]
enum RowKind {
    XLo,
    XHi,
    ZLo,
    ZHi,
    Wedge,
    Speed,
    Roc,
    Thrust,
    Obstacle(usize),
}

#[derive(Debug, Clone, Copy)]
struct IneqRow {
    kind: RowKind,
    at: At,
}

/// Scalar quantity at a collocation point with its sparse derivative
/// stencil: at most four decision variables plus the duration. Each entry
/// stores the coefficient and the coefficient's own duration sensitivity
/// (stencil weights scale with the segment length).
#[derive(Debug, Clone, Copy, Default)]
struct Quant {
    val: f64,
    vars: [(usize, f64, f64); 4],
    nvars: usize,
    d_dur: f64,
}

impl Quant {
    fn var(index: usize, val: f64) -> Self {
        let mut q = Quant {
            val,
            ..Default::default()
        };
        q.push(index, 1.0, 0.0);
        q
    }

    fn push(&mut self, index: usize, coeff: f64, coeff_rate: f64) {
        self.vars[self.nvars] = (index, coeff, coeff_rate);
        self.nvars += 1;
    }

    /// Adds `w * dq/dz` into a dense Jacobian row.
    fn accumulate(&self, w: f64, row: &mut [f64], dur_index: usize) {
        for &(idx, c, _) in &self.vars[..self.nvars] {
            row[idx] += w * c;
        }
        row[dur_index] += w * self.d_dur;
    }

    /// Sparse gradient including the duration component.
    fn grad_entries(&self, dur_index: usize) -> ([(usize, f64); 5], usize) {
        let mut out = [(0usize, 0.0f64); 5];
        let mut n = 0;
        for &(idx, c, _) in &self.vars[..self.nvars] {
            out[n] = (idx, c);
            n += 1;
        }
        if self.d_dur != 0.0 {
            out[n] = (dur_index, self.d_dur);
            n += 1;
        }
        (out, n)
    }
}

struct PointQ {
    x: Quant,
    z: Quant,
    vx: Quant,
    vz: Quant,
    ux: Quant,
    uz: Quant,
    /// Absolute time at the point and its sensitivity to the duration.
    t: f64,
    t_ddur: f64,
}

pub struct Transcription<'a> {
    spec: &'a OcpSpec,
    n: usize,
    /// Inverse segment count: `h = duration * hw`.
    hw: f64,
    rows: Vec<IneqRow>,
    num_vars: usize,
    num_eq: usize,
    duration: f64,
}

impl<'a> Transcription<'a> {
    /// Builds a fixed-duration transcription and its initial iterate.
    /// The duration stays in the decision vector but is pinned by an
    /// equality row; an outer search drives it. `variant` selects a
    /// cold-start shape (0 = nominal, 1 = low pass under the corridor,
    /// 2 = stretched); a warm solution overrides the cold start.
    pub fn build(
        spec: &'a OcpSpec,
        n_nodes: usize,
        variant: usize,
        duration: f64,
        warm: Option<&OcpSolution>,
    ) -> (Self, DVector<f64>) {
        let n = n_nodes;
        let num_vars = 6 * n + 1;
        let num_eq = 4 * (n - 1) + 8 + 1;
        let mut tr = Transcription {
            spec,
            n,
            hw: 1.0 / (n as f64 - 1.0),
            rows: Vec::new(),
            num_vars,
            num_eq,
            duration,
        };
        let guess = match warm {
            Some(sol) => {
                let mut z = tr.embed_solution(sol);
                z[tr.dur_index()] = duration;
                z
            }
            None => tr.initial_guess(variant),
        };
        tr.assemble_rows(duration);
        (tr, guess)
    }

    /// Cold-start duration heuristic: cruise fraction of the top speed,
    /// floored by the climb-rate cap.
    pub fn heuristic_duration(spec: &OcpSpec) -> f64 {
        let s0 = spec.initial;
        let zt = spec.terminal.z;
        let climb_floor = (zt - s0.z).abs() / (0.9 * spec.limits.roc_max);
        let mut dur = 10.0_f64;
        for _ in 0..4 {
            let xt = spec.terminal.x_at(spec.t_start + dur);
            let dist = (xt - s0.x).hypot(zt - s0.z).max(1.0);
            dur = (dist / (0.6 * spec.limits.v_max))
                .max(climb_floor)
                .clamp(MIN_DURATION, MAX_DURATION);
        }
        dur
    }

    fn sx(&self, k: usize) -> usize {
        4 * k
    }
    fn su(&self, k: usize) -> usize {
        4 * self.n + 2 * k
    }
    fn dur_index(&self) -> usize {
        6 * self.n
    }

    fn assemble_rows(&mut self, guess_duration: f64) {
        let n = self.n;
        let mut rows = Vec::new();
        let path_kinds = [
            RowKind::XLo,
            RowKind::XHi,
            RowKind::ZLo,
            RowKind::ZHi,
            RowKind::Wedge,
            RowKind::Speed,
            RowKind::Roc,
        ];
        // State-path rows at interior nodes; the first and last node are
        // fully pinned by boundary equalities.
        for k in 1..n - 1 {
            for kind in path_kinds {
                rows.push(IneqRow {
                    kind,
                    at: At::Node(k),
                });
            }
        }
        for k in 0..n - 1 {
            for kind in path_kinds {
                rows.push(IneqRow {
                    kind,
                    at: At::Mid(k),
                });
            }
        }
        // The control disc is convex, so midpoints (averages) are covered
        // by the node rows.
        for k in 0..n {
            rows.push(IneqRow {
                kind: RowKind::Thrust,
                at: At::Node(k),
            });
        }
        for (oi, o) in self.spec.obstacles.iter().enumerate() {
            let start = self.spec.t_start;
            // Row masking by the nominal guess time: agents outside the
            // section are not separation constraints yet.
            let active = |tau: f64| {
                o.active_from
                    .map_or(true, |from| start + tau * guess_duration >= from - 1e-9)
            };
            for k in 1..n {
                if k == n - 1 && o.pair_member {
                    continue;
                }
                if active(k as f64 * self.hw) {
                    rows.push(IneqRow {
                        kind: RowKind::Obstacle(oi),
                        at: At::Node(k),
                    });
                }
            }
            for k in 0..n - 1 {
                if active((k as f64 + 0.5) * self.hw) {
                    rows.push(IneqRow {
                        kind: RowKind::Obstacle(oi),
                        at: At::Mid(k),
                    });
                }
            }
        }
        self.rows = rows;
    }

    fn point(&self, z: &DVector<f64>, at: At) -> PointQ {
        let dur = z[self.dur_index()];
        let start = self.spec.t_start;
        match at {
            At::Node(k) => {
                let s = self.sx(k);
                let u = self.su(k);
                PointQ {
                    x: Quant::var(s, z[s]),
                    z: Quant::var(s + 1, z[s + 1]),
                    vx: Quant::var(s + 2, z[s + 2]),
                    vz: Quant::var(s + 3, z[s + 3]),
                    ux: Quant::var(u, z[u]),
                    uz: Quant::var(u + 1, z[u + 1]),
                    t: start + k as f64 * self.hw * dur,
                    t_ddur: k as f64 * self.hw,
                }
            }
            At::Mid(k) => {
                let h = dur * self.hw;
                let (a, b) = (self.sx(k), self.sx(k + 1));
                let (ua, ub) = (self.su(k), self.su(k + 1));
                let mid_state = |pa: usize, pb: usize, da: usize, db: usize| {
                    // (p_a + p_b)/2 + h (d_a - d_b)/8 where d is the
                    // derivative of p (velocity for positions, acceleration
                    // for velocities; gravity cancels in the difference).
                    let diff = z[da] - z[db];
                    let mut q = Quant {
                        val: 0.5 * (z[pa] + z[pb]) + h * diff / 8.0,
                        ..Default::default()
                    };
                    q.push(pa, 0.5, 0.0);
                    q.push(pb, 0.5, 0.0);
                    q.push(da, h / 8.0, self.hw / 8.0);
                    q.push(db, -h / 8.0, -self.hw / 8.0);
                    q.d_dur = self.hw * diff / 8.0;
                    q
                };
                let mid_ctrl = |ca: usize, cb: usize| {
                    let mut q = Quant {
                        val: 0.5 * (z[ca] + z[cb]),
                        ..Default::default()
                    };
                    q.push(ca, 0.5, 0.0);
                    q.push(cb, 0.5, 0.0);
                    q
                };
                PointQ {
                    x: mid_state(a, b, a + 2, b + 2),
                    z: mid_state(a + 1, b + 1, a + 3, b + 3),
                    vx: mid_state(a + 2, b + 2, ua, ub),
                    vz: mid_state(a + 3, b + 3, ua + 1, ub + 1),
                    ux: mid_ctrl(ua, ub),
                    uz: mid_ctrl(ua + 1, ub + 1),
                    t: start + (k as f64 + 0.5) * self.hw * dur,
                    t_ddur: (k as f64 + 0.5) * self.hw,
                }
            }
        }
    }

    /// Row value; when `jac_row` is given, also its dense gradient.
    fn eval_row(&self, z: &DVector<f64>, row: &IneqRow, mut jac_row: Option<&mut [f64]>) -> f64 {
        let l = &self.spec.limits;
        let dur_index = self.dur_index();
        let p = self.point(z, row.at);
        let guard = match row.at {
            At::Mid(_) => MID_GUARD,
            At::Node(_) => 0.0,
        };
        match row.kind {
            RowKind::XLo => {
                if let Some(j) = jac_row.as_deref_mut() {
                    p.x.accumulate(1.0, j, dur_index);
                }
                p.x.val - guard
            }
            RowKind::XHi => {
                if let Some(j) = jac_row.as_deref_mut() {
                    p.x.accumulate(-1.0, j, dur_index);
                }
                l.merge_length - p.x.val - guard
            }
            RowKind::ZLo => {
                if let Some(j) = jac_row.as_deref_mut() {
                    p.z.accumulate(1.0, j, dur_index);
                }
                p.z.val - guard
            }
            RowKind::ZHi => {
                if let Some(j) = jac_row.as_deref_mut() {
                    p.z.accumulate(-1.0, j, dur_index);
                }
                l.plane_height - p.z.val - guard
            }
            RowKind::Wedge => {
                let (ct, tt) = (l.tilt.cos(), l.ols_angle.tan());
                if let Some(j) = jac_row.as_deref_mut() {
                    p.z.accumulate(ct, j, dur_index);
                    p.x.accumulate(-tt, j, dur_index);
                }
                p.z.val * ct - p.x.val * tt
            }
            RowKind::Speed => {
                // (V^2 - |v|^2) / (2V): linearized speed margin in m/s.
                let s = 1.0 / (2.0 * l.v_max);
                if let Some(j) = jac_row.as_deref_mut() {
                    p.vx.accumulate(-2.0 * p.vx.val * s, j, dur_index);
                    p.vz.accumulate(-2.0 * p.vz.val * s, j, dur_index);
                }
                (l.v_max * l.v_max - p.vx.val * p.vx.val - p.vz.val * p.vz.val) * s
            }
            RowKind::Roc => {
                let ct = l.tilt.cos();
                if let Some(j) = jac_row.as_deref_mut() {
                    p.vz.accumulate(-ct, j, dur_index);
                }
                l.roc_max - p.vz.val * ct
            }
            RowKind::Thrust => {
                let r = l.accel_radius;
                let s = 1.0 / (2.0 * r);
                if let Some(j) = jac_row.as_deref_mut() {
                    p.ux.accumulate(-2.0 * p.ux.val * s, j, dur_index);
                    p.uz.accumulate(-2.0 * p.uz.val * s, j, dur_index);
                }
                (r * r - p.ux.val * p.ux.val - p.uz.val * p.uz.val) * s
            }
            RowKind::Obstacle(oi) => {
                let o = &self.spec.obstacles[oi];
                let (ox, oz) = o.position(p.t);
                let (ovx, ovz) = o.velocity(p.t);
                let dx = p.x.val - ox;
                let dz = p.z.val - oz;
                let s = 1.0 / (2.0 * o.radius);
                if let Some(j) = jac_row.as_deref_mut() {
                    p.x.accumulate(2.0 * dx * s, j, dur_index);
                    p.z.accumulate(2.0 * dz * s, j, dur_index);
                    // Obstacle motion enters through the point's clock.
                    j[dur_index] += -2.0 * (dx * ovx + dz * ovz) * s * p.t_ddur;
                }
                (dx * dx + dz * dz - o.radius * o.radius) * s
            }
        }
    }

    /// Straight-path initial guess with a smooth ramp profile at the
    /// pinned duration.
    fn initial_guess(&self, variant: usize) -> DVector<f64> {
        let spec = self.spec;
        let n = self.n;
        let s0 = spec.initial;
        let zt = spec.terminal.z;
        let dur = self.duration;
        let xt = spec.terminal.x_at(spec.t_start + dur);

        let mut z = DVector::zeros(self.num_vars);
        z[self.dur_index()] = dur;
        let h = dur * self.hw;
        let smooth = |tau: f64| tau * tau * (3.0 - 2.0 * tau);
        let dsmooth = |tau: f64| 6.0 * tau * (1.0 - tau);

        // Lower the mid-path when the straight line crosses an obstacle, so
        // the first iterate already dives under the corridor flow.
        let mut bias = match variant {
            1 => spec.min_gap,
            _ => 0.0,
        };
        if variant == 0 && !spec.obstacles.is_empty() {
            let crosses = (0..n).any(|k| {
                let tau = k as f64 * self.hw;
                let t = spec.t_start + tau * dur;
                let px = s0.x + (xt - s0.x) * smooth(tau);
                let pz = s0.z + (zt - s0.z) * smooth(tau);
                spec.obstacles.iter().any(|o| {
                    if o.active_from.map_or(false, |from| t < from) {
                        return false;
                    }
                    let (ox, oz) = o.position(t);
                    (px - ox).hypot(pz - oz) < o.radius
                })
            });
            if crosses {
                bias = spec.min_gap;
            }
        }

        for k in 0..n {
            let tau = k as f64 * self.hw;
            let sk = self.sx(k);
            let dip = bias * (std::f64::consts::PI * tau).sin();
            z[sk] = s0.x + (xt - s0.x) * smooth(tau);
            z[sk + 1] = (s0.z + (zt - s0.z) * smooth(tau) - dip).max(0.0);
            z[sk + 2] = (xt - s0.x) * dsmooth(tau) / dur;
            z[sk + 3] = (zt - s0.z) * dsmooth(tau) / dur;
        }
        // Endpoint velocities from the boundary conditions.
        z[self.sx(0) + 2] = s0.vx;
        z[self.sx(0) + 3] = s0.vz;
        z[self.sx(n - 1) + 2] = spec.terminal.vx;
        z[self.sx(n - 1) + 3] = spec.terminal.vz;

        let gc = spec.limits.gravity * spec.limits.tilt.cos();
        for k in 0..n {
            let uk = self.su(k);
            let (vx0, vz0, vx1, vz1) = if k + 1 < n {
                (
                    z[self.sx(k) + 2],
                    z[self.sx(k) + 3],
                    z[self.sx(k + 1) + 2],
                    z[self.sx(k + 1) + 3],
                )
            } else {
                (
                    z[self.sx(k - 1) + 2],
                    z[self.sx(k - 1) + 3],
                    z[self.sx(k) + 2],
                    z[self.sx(k) + 3],
                )
            };
            z[uk] = (vx1 - vx0) / h;
            z[uk + 1] = (vz1 - vz0) / h + gc;
        }
        z
    }

    /// Interpolates an existing solution onto this grid; states and
    /// controls are copied per normalized-time sample so a solution from a
    /// neighboring duration still lines up.
    pub fn embed_solution(&self, sol: &OcpSolution) -> DVector<f64> {
        let n = self.n;
        let mut z = DVector::zeros(self.num_vars);
        let dur = sol.t_f - self.spec.t_start;
        z[self.dur_index()] = self.duration;
        let l = &self.spec.limits;
        for k in 0..n {
            let t = self.spec.t_start + k as f64 * self.hw * dur;
            let (s, u) = sol.sample(t, l.gravity, l.tilt);
            let sk = self.sx(k);
            z[sk] = s.x;
            z[sk + 1] = s.z;
            z[sk + 2] = s.vx;
            z[sk + 3] = s.vz;
            let uk = self.su(k);
            z[uk] = u.ux;
            z[uk + 1] = u.uz;
        }
        z
    }

    /// Packs an NLP result into a solution on the node grid.
    pub fn extract(&self, res: &NlpResult) -> OcpSolution {
        let z = &res.z;
        let dur = z[self.dur_index()];
        let t_f = self.spec.t_start + dur;
        let mut times = Vec::with_capacity(self.n);
        let mut states = Vec::with_capacity(self.n);
        let mut controls = Vec::with_capacity(self.n);
        for k in 0..self.n {
            times.push(self.spec.t_start + k as f64 * self.hw * dur);
            let sk = self.sx(k);
            states.push(PlaneState::new(z[sk], z[sk + 1], z[sk + 2], z[sk + 3]));
            let uk = self.su(k);
            controls.push(ControlUV::new(z[uk], z[uk + 1]));
        }
        OcpSolution {
            times,
            states,
            controls,
            t_f,
            objective: res.objective,
            max_violation: res.violation,
            iterations: res.iterations,
            wall_time_s: 0.0,
            n_nodes: self.n,
        }
    }

    pub fn obstacles(&self) -> &[ObstacleTrack] {
        &self.spec.obstacles
    }
}

impl NlpProblem for Transcription<'_> {
    fn num_vars(&self) -> usize {
        self.num_vars
    }

    fn num_eq(&self) -> usize {
        self.num_eq
    }

    fn num_ineq(&self) -> usize {
        self.rows.len()
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        let dur = z[self.dur_index()];
        match self.spec.kind {
            OcpKind::MinTime => dur,
            OcpKind::MergeCost => {
                let h = dur * self.hw;
                let lag = |ux: f64, uz: f64| 0.5 * (ux * ux + uz * uz) + self.spec.lambda;
                let mut total = 0.0;
                for k in 0..self.n - 1 {
                    let (ua, ub) = (self.su(k), self.su(k + 1));
                    let (mx, mz) = (0.5 * (z[ua] + z[ub]), 0.5 * (z[ua + 1] + z[ub + 1]));
                    total += h / 6.0
                        * (lag(z[ua], z[ua + 1]) + 4.0 * lag(mx, mz) + lag(z[ub], z[ub + 1]));
                }
                total
            }
        }
    }

    fn objective_grad(&self, z: &DVector<f64>, grad: &mut DVector<f64>) {
        grad.fill(0.0);
        let dur_index = self.dur_index();
        match self.spec.kind {
            OcpKind::MinTime => grad[dur_index] = 1.0,
            OcpKind::MergeCost => {
                let dur = z[dur_index];
                let h = dur * self.hw;
                let lag = |ux: f64, uz: f64| 0.5 * (ux * ux + uz * uz) + self.spec.lambda;
                for k in 0..self.n - 1 {
                    let (ua, ub) = (self.su(k), self.su(k + 1));
                    let (mx, mz) = (0.5 * (z[ua] + z[ub]), 0.5 * (z[ua + 1] + z[ub + 1]));
                    let seg = lag(z[ua], z[ua + 1]) + 4.0 * lag(mx, mz) + lag(z[ub], z[ub + 1]);
                    grad[dur_index] += self.hw / 6.0 * seg;
                    // d/du of the Simpson sum: endpoint plus half of four
                    // times the midpoint average.
                    grad[ua] += h / 6.0 * (z[ua] + 2.0 * mx);
                    grad[ub] += h / 6.0 * (z[ub] + 2.0 * mx);
                    grad[ua + 1] += h / 6.0 * (z[ua + 1] + 2.0 * mz);
                    grad[ub + 1] += h / 6.0 * (z[ub + 1] + 2.0 * mz);
                }
            }
        }
    }

    fn constraints(&self, z: &DVector<f64>, c_eq: &mut DVector<f64>, c_ineq: &mut DVector<f64>) {
        let dur = z[self.dur_index()];
        let h = dur * self.hw;
        let gc = self.spec.limits.gravity * self.spec.limits.tilt.cos();
        let mut r = 0;
        for k in 0..self.n - 1 {
            let (a, b) = (self.sx(k), self.sx(k + 1));
            let (ua, ub) = (self.su(k), self.su(k + 1));
            let (axk, azk) = (z[ua], z[ua + 1] - gc);
            let (axk1, azk1) = (z[ub], z[ub + 1] - gc);
            // Positions: corrected trapezoid; velocities: trapezoid.
            c_eq[r] = z[b] - z[a]
                - h / 2.0 * (z[a + 2] + z[b + 2])
                - h * h / 12.0 * (axk - axk1);
            c_eq[r + 1] = z[b + 1] - z[a + 1]
                - h / 2.0 * (z[a + 3] + z[b + 3])
                - h * h / 12.0 * (azk - azk1);
            c_eq[r + 2] = z[b + 2] - z[a + 2] - h / 2.0 * (axk + axk1);
            c_eq[r + 3] = z[b + 3] - z[a + 3] - h / 2.0 * (azk + azk1);
            r += 4;
        }
        let s0 = self.spec.initial;
        let first = self.sx(0);
        c_eq[r] = z[first] - s0.x;
        c_eq[r + 1] = z[first + 1] - s0.z;
        c_eq[r + 2] = z[first + 2] - s0.vx;
        c_eq[r + 3] = z[first + 3] - s0.vz;
        r += 4;
        let last = self.sx(self.n - 1);
        let term = &self.spec.terminal;
        let t_f = self.spec.t_start + dur;
        c_eq[r] = z[last] - term.x_at(t_f);
        c_eq[r + 1] = z[last + 1] - term.z;
        c_eq[r + 2] = z[last + 2] - term.vx;
        c_eq[r + 3] = z[last + 3] - term.vz;
        c_eq[r + 4] = z[self.dur_index()] - self.duration;

        for (i, row) in self.rows.iter().enumerate() {
            c_ineq[i] = self.eval_row(z, row, None);
        }
    }

    fn jacobians(&self, z: &DVector<f64>, j_eq: &mut DMatrix<f64>, j_ineq: &mut DMatrix<f64>) {
        j_eq.fill(0.0);
        j_ineq.fill(0.0);
        let dur_index = self.dur_index();
        let dur = z[dur_index];
        let h = dur * self.hw;
        let gc = self.spec.limits.gravity * self.spec.limits.tilt.cos();
        let mut r = 0;
        for k in 0..self.n - 1 {
            let (a, b) = (self.sx(k), self.sx(k + 1));
            let (ua, ub) = (self.su(k), self.su(k + 1));
            let (axk, azk) = (z[ua], z[ua + 1] - gc);
            let (axk1, azk1) = (z[ub], z[ub + 1] - gc);

            // Position defect rows (x then z).
            for (off, va, vb, uaj, ubj, adiff) in [
                (0usize, a, b, ua, ub, axk - axk1),
                (1usize, a + 1, b + 1, ua + 1, ub + 1, azk - azk1),
            ] {
                let row = r + off;
                j_eq[(row, vb)] = 1.0;
                j_eq[(row, va)] = -1.0;
                j_eq[(row, va + 2)] = -h / 2.0;
                j_eq[(row, vb + 2)] = -h / 2.0;
                j_eq[(row, uaj)] = -h * h / 12.0;
                j_eq[(row, ubj)] = h * h / 12.0;
                j_eq[(row, dur_index)] =
                    -self.hw / 2.0 * (z[va + 2] + z[vb + 2]) - 2.0 * h * self.hw / 12.0 * adiff;
            }
            // Velocity defect rows (vx then vz).
            for (off, va, vb, uaj, ubj, asum) in [
                (2usize, a + 2, b + 2, ua, ub, axk + axk1),
                (3usize, a + 3, b + 3, ua + 1, ub + 1, azk + azk1),
            ] {
                let row = r + off;
                j_eq[(row, vb)] = 1.0;
                j_eq[(row, va)] = -1.0;
                j_eq[(row, uaj)] = -h / 2.0;
                j_eq[(row, ubj)] = -h / 2.0;
                j_eq[(row, dur_index)] = -self.hw / 2.0 * asum;
            }
            r += 4;
        }
        let first = self.sx(0);
        for i in 0..4 {
            j_eq[(r + i, first + i)] = 1.0;
        }
        r += 4;
        let last = self.sx(self.n - 1);
        for i in 0..4 {
            j_eq[(r + i, last + i)] = 1.0;
        }
        j_eq[(r, dur_index)] = -self.spec.terminal.x_rate;
        j_eq[(r + 4, dur_index)] = 1.0;

        let mut row_buf = vec![0.0; self.num_vars];
        for (i, row) in self.rows.iter().enumerate() {
            row_buf.iter_mut().for_each(|v| *v = 0.0);
            self.eval_row(z, row, Some(&mut row_buf));
            for (cidx, v) in row_buf.iter().enumerate() {
                if *v != 0.0 {
                    j_ineq[(i, cidx)] = *v;
                }
            }
        }
    }

    fn lagrangian_hessian(
        &self,
        z: &DVector<f64>,
        lam_eq: &DVector<f64>,
        lam_ineq: &DVector<f64>,
        out: &mut DMatrix<f64>,
    ) -> bool {
        out.fill(0.0);
        let dur_index = self.dur_index();
        let dur = z[dur_index];
        let h = dur * self.hw;
        let hw = self.hw;

        // Objective curvature (merge cost only: Simpson rule on |u|^2/2).
        if self.spec.kind == OcpKind::MergeCost {
            for k in 0..self.n - 1 {
                let (ua, ub) = (self.su(k), self.su(k + 1));
                for off in 0..2 {
                    let (a, b) = (ua + off, ub + off);
                    out[(a, a)] += h / 3.0;
                    out[(b, b)] += h / 3.0;
                    out[(a, b)] += h / 6.0;
                    out[(b, a)] += h / 6.0;
                    let da = hw / 6.0 * (2.0 * z[a] + z[b]);
                    let db = hw / 6.0 * (z[a] + 2.0 * z[b]);
                    out[(dur_index, a)] += da;
                    out[(a, dur_index)] += da;
                    out[(dur_index, b)] += db;
                    out[(b, dur_index)] += db;
                }
            }
        }

        // Defect curvature: bilinear duration/control and duration/velocity
        // couplings, weighted by -lambda (L = f - lam'c).
        let mut r = 0;
        for k in 0..self.n - 1 {
            let (a, b) = (self.sx(k), self.sx(k + 1));
            let (ua, ub) = (self.su(k), self.su(k + 1));
            for off in 0..2 {
                // Position rows.
                let w = -lam_eq[r + off];
                if w != 0.0 {
                    let (va, vb) = (a + 2 + off, b + 2 + off);
                    let (ca, cb) = (ua + off, ub + off);
                    for (idx, second) in [
                        (va, -hw / 2.0),
                        (vb, -hw / 2.0),
                        (ca, -dur * hw * hw / 6.0),
                        (cb, dur * hw * hw / 6.0),
                    ] {
                        out[(dur_index, idx)] += w * second;
                        out[(idx, dur_index)] += w * second;
                    }
                    out[(dur_index, dur_index)] += w * (-hw * hw / 6.0 * (z[ca] - z[cb]));
                }
                // Velocity rows.
                let w = -lam_eq[r + 2 + off];
                if w != 0.0 {
                    let (ca, cb) = (ua + off, ub + off);
                    for idx in [ca, cb] {
                        out[(dur_index, idx)] += w * (-hw / 2.0);
                        out[(idx, dur_index)] += w * (-hw / 2.0);
                    }
                }
            }
            r += 4;
        }

        // Path-row curvature via the point stencils. Quant indices:
        // 0 x, 1 z, 2 vx, 3 vz, 4 ux, 5 uz, 6 t.
        let l = &self.spec.limits;
        for (i, row) in self.rows.iter().enumerate() {
            let w = -lam_ineq[i];
            if w == 0.0 {
                continue;
            }
            let p = self.point(z, row.at);
            let quants = [&p.x, &p.z, &p.vx, &p.vz, &p.ux, &p.uz];
            let mut core = [[0.0_f64; 7]; 7];
            let mut first = [0.0_f64; 7];
            match row.kind {
                RowKind::Speed => {
                    core[2][2] = -1.0 / l.v_max;
                    core[3][3] = -1.0 / l.v_max;
                    first[2] = -p.vx.val / l.v_max;
                    first[3] = -p.vz.val / l.v_max;
                }
                RowKind::Thrust => {
                    core[4][4] = -1.0 / l.accel_radius;
                    core[5][5] = -1.0 / l.accel_radius;
                    first[4] = -p.ux.val / l.accel_radius;
                    first[5] = -p.uz.val / l.accel_radius;
                }
                RowKind::Obstacle(oi) => {
                    // The separation constraint's own curvature is a Gram
                    // form (positive semidefinite), so its contribution to
                    // the Lagrangian model is concave; dropping it keeps the
                    // model convex where it matters (Gauss-Newton style)
                    // while the stencil couplings below stay exact.
                    let o = &self.spec.obstacles[oi];
                    let (ox, oz) = o.position(p.t);
                    let (ovx, ovz) = o.velocity(p.t);
                    let rr = o.radius;
                    let dx = p.x.val - ox;
                    let dz = p.z.val - oz;
                    first[0] = dx / rr;
                    first[1] = dz / rr;
                    first[6] = -(dx * ovx + dz * ovz) / rr;
                }
                RowKind::XLo => first[0] = 1.0,
                RowKind::XHi => first[0] = -1.0,
                RowKind::ZLo => first[1] = 1.0,
                RowKind::ZHi => first[1] = -1.0,
                RowKind::Wedge => {
                    first[1] = l.tilt.cos();
                    first[0] = -l.ols_angle.tan();
                }
                RowKind::Roc => first[3] = -l.tilt.cos(),
            }

            // grad(q_j) outer products through the second-derivative core.
            let t_grad: ([(usize, f64); 5], usize) =
                ([(dur_index, p.t_ddur), (0, 0.0), (0, 0.0), (0, 0.0), (0, 0.0)], 1);
            let grad_of = |j: usize| -> ([(usize, f64); 5], usize) {
                if j == 6 {
                    t_grad
                } else {
                    quants[j].grad_entries(dur_index)
                }
            };
            for a in 0..7 {
                for b in 0..7 {
                    let hab = core[a][b];
                    if hab == 0.0 {
                        continue;
                    }
                    let (ga, na) = grad_of(a);
                    let (gb, nb) = grad_of(b);
                    for &(ia, ca) in &ga[..na] {
                        for &(ib, cb) in &gb[..nb] {
                            out[(ia, ib)] += w * hab * ca * cb;
                        }
                    }
                }
            }
            // First-order terms through the stencil's duration coupling.
            for (j, q) in quants.iter().enumerate() {
                if first[j] == 0.0 {
                    continue;
                }
                for &(idx, _, rate) in &q.vars[..q.nvars] {
                    if rate != 0.0 {
                        out[(dur_index, idx)] += w * first[j] * rate;
                        out[(idx, dur_index)] += w * first[j] * rate;
                    }
                }
            }
        }
        true
    }
}
