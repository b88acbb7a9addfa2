//! Corridor traffic state in the merge plane.
//!
//! Corridor vehicles cruise at constant speed along the corridor center
//! line. The scheduler observes the zone upstream of the vertiport, extends
//! it with synthetic front/rear agents so the first and last gaps are
//! addressable, and enumerates consecutive vehicles as candidate merging
//! pairs, each carrying a moving merge slot that trails its leader by the
//! minimum corridor headway.

use crate::geometry::{PlanePoint, TmSection};
use serde::{Deserialize, Serialize};

/// Identity of a corridor participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentId {
    /// Corridor vehicle, numbered by entry order within its section.
    Corridor(u32),
    /// Merging vehicle (by request index) after it joins the corridor.
    Merged(u32),
    /// Synthetic agent bounding the front of the observed set.
    VirtualFront,
    /// Synthetic agent bounding the rear of the observed set.
    VirtualRear,
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgentId::Corridor(k) => write!(f, "h{k}"),
            AgentId::Merged(k) => write!(f, "M{k}"),
            AgentId::VirtualFront => write!(f, "I+"),
            AgentId::VirtualRear => write!(f, "I-"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleKind {
    Real,
    VirtualFront,
    VirtualRear,
}

/// One corridor participant at a snapshot time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorVehicle {
    pub id: AgentId,
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
    pub kind: VehicleKind,
}

impl CorridorVehicle {
    /// Position along the corridor at `dt` seconds past the snapshot.
    pub fn x_after(&self, dt: f64) -> f64 {
        self.x + self.vx * dt
    }
}

/// Ordered snapshot of the observation zone, front-most vehicle first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorState {
    /// Vehicles ordered by descending `x` (nearest to the section first).
    pub vehicles: Vec<CorridorVehicle>,
    /// Observation zone length upstream of the vertiport (m).
    pub zone_length: f64,
    /// Minimum headway between corridor vehicles (m).
    pub min_gap: f64,
    /// Slowest admissible cruise speed, used by the synthetic front agent.
    pub cruise_floor: f64,
    /// Corridor center-line height in plane coordinates (m).
    pub line_height: f64,
    /// Snapshot time (s).
    pub t: f64,
}

/// Candidate merge slot between two consecutive corridor vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergingPair {
    pub leader: CorridorVehicle,
    pub follower: CorridorVehicle,
    /// 1-based rank in the extended set, front-most pair first.
    pub index: usize,
    /// Snapshot time of the member states (s).
    pub t0: f64,
}

impl MergingPair {
    pub fn leader_x_at(&self, t: f64) -> f64 {
        self.leader.x_after(t - self.t0)
    }

    pub fn follower_x_at(&self, t: f64) -> f64 {
        self.follower.x_after(t - self.t0)
    }
}

/// Filters and orders the observation-zone members at time `t`: inside
/// `[-L_o, 0]` along the corridor and on the corridor center line.
pub fn observe(
    all_vehicles: &[CorridorVehicle],
    t: f64,
    section: &TmSection,
    zone_length: f64,
    min_gap: f64,
    cruise_floor: f64,
) -> CorridorState {
    let height = section.corridor_plane_height();
    let mut vehicles: Vec<CorridorVehicle> = all_vehicles
        .iter()
        .filter(|v| {
            -zone_length <= v.x && v.x <= 0.0 && (v.z - height).abs() <= 1e-6
        })
        .copied()
        .collect();
    vehicles.sort_by(|a, b| b.x.partial_cmp(&a.x).unwrap());
    CorridorState {
        vehicles,
        zone_length,
        min_gap,
        cruise_floor,
        line_height: height,
        t,
    }
}

/// One-time speed regulation at the zone entrance: caps the entering speed
/// so the projected gap to the predecessor is at least `min_gap` when the
/// predecessor leaves the section.
pub fn regulate_entry_speed(
    entering_vx: f64,
    predecessor: Option<&CorridorVehicle>,
    section: &TmSection,
    zone_length: f64,
    min_gap: f64,
) -> f64 {
    let Some(pred) = predecessor else {
        return entering_vx;
    };
    let lm = section.merge_length;
    let remaining = lm - pred.x;
    if remaining <= 1e-9 {
        // Predecessor is at the exit; no cap applies.
        return entering_vx;
    }
    let cap = pred.vx * (lm + zone_length - min_gap) / remaining;
    entering_vx.min(cap)
}

/// Extends the observed set with synthetic boundary agents.
///
/// A front agent is prepended, starting at the zone exit with the floor
/// cruise speed, whenever the lead vehicle has fallen at least two headways
/// behind the exit; a rear agent copying the last vehicle's velocity is
/// appended, starting at the zone entrance, whenever the last vehicle has
/// advanced at least two headways into the zone. An empty zone gets both.
pub fn extend(state: &CorridorState) -> CorridorState {
    let mut out = state.clone();
    let height_z = state.line_height;
    let two_gaps = 2.0 * state.min_gap;

    let add_front = match state.vehicles.first() {
        Some(first) => first.x <= -two_gaps,
        None => true,
    };
    let add_rear = match state.vehicles.last() {
        Some(last) => last.x >= -state.zone_length + two_gaps,
        None => true,
    };

    if add_front {
        out.vehicles.insert(
            0,
            CorridorVehicle {
                id: AgentId::VirtualFront,
                x: 0.0,
                z: height_z,
                vx: state.cruise_floor,
                vz: 0.0,
                kind: VehicleKind::VirtualFront,
            },
        );
    }
    if add_rear {
        let (vx, vz) = state
            .vehicles
            .last()
            .filter(|v| v.kind == VehicleKind::Real)
            .map(|v| (v.vx, v.vz))
            .unwrap_or((state.cruise_floor, 0.0));
        out.vehicles.push(CorridorVehicle {
            id: AgentId::VirtualRear,
            x: -state.zone_length,
            z: height_z,
            vx,
            vz,
            kind: VehicleKind::VirtualRear,
        });
    }
    out
}

/// All consecutive merging pairs of an extended snapshot.
pub fn pairs(extended: &CorridorState) -> Vec<MergingPair> {
    extended
        .vehicles
        .windows(2)
        .enumerate()
        .map(|(i, w)| MergingPair {
            leader: w[0],
            follower: w[1],
            index: i + 1,
            t0: extended.t,
        })
        .collect()
}

/// Moving merge slot of a pair at time `t`: trails the leader by the
/// minimum headway, on the corridor center line.
pub fn merging_point(pair: &MergingPair, t: f64, section: &TmSection, min_gap: f64) -> PlanePoint {
    PlanePoint::new(
        pair.leader_x_at(t) - min_gap,
        section.corridor_plane_height(),
    )
}

/// Constant-speed propagation of every vehicle by `dt` seconds.
pub fn advance(state: &CorridorState, dt: f64) -> CorridorState {
    let mut out = state.clone();
    for v in &mut out.vehicles {
        v.x += v.vx * dt;
    }
    out.t += dt;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use approx::assert_relative_eq;

    fn section() -> TmSection {
        TmSection::new(
            Frame::new([0.0, 0.0, 0.0], 30.5, 0.0, 0.0).unwrap(),
            1050.0,
            305.0,
            8.0,
            2.58_f64.to_radians(),
        )
        .unwrap()
    }

    fn vehicle(id: u32, x: f64, vx: f64) -> CorridorVehicle {
        CorridorVehicle {
            id: AgentId::Corridor(id),
            x,
            z: 274.5,
            vx,
            vz: 0.0,
            kind: VehicleKind::Real,
        }
    }

    #[test]
    fn observe_filters_and_orders() {
        let s = section();
        let mut vehicles: Vec<_> = [-500.0, -50.0, -320.0, -600.0, -200.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| vehicle(i as u32 + 1, x, 20.0))
            .collect();
        vehicles.push(vehicle(90, 10.0, 20.0)); // past the zone exit
        let mut off_height = vehicle(91, -100.0, 20.0);
        off_height.z = 200.0; // not on the corridor line
        vehicles.push(off_height);

        let state = observe(&vehicles, 0.0, &s, 600.0, 50.0, 17.0);
        let xs: Vec<f64> = state.vehicles.iter().map(|v| v.x).collect();
        assert_eq!(xs, vec![-50.0, -200.0, -320.0, -500.0, -600.0]);
    }

    #[test]
    fn regulation_caps_fast_entrants() {
        let s = section();
        let pred = vehicle(1, -500.0, 17.0);
        let v = regulate_entry_speed(23.0, Some(&pred), &s, 600.0, 50.0);
        assert_relative_eq!(v, 17.0 * 1600.0 / 1550.0, epsilon = 1e-12);
        assert!((v - 17.548).abs() < 1e-3);
    }

    #[test]
    fn regulation_pass_through_cases() {
        let s = section();
        // Own speed already below the cap.
        let pred = vehicle(1, -500.0, 23.0);
        assert_relative_eq!(
            regulate_entry_speed(17.0, Some(&pred), &s, 600.0, 50.0),
            17.0
        );
        // Predecessor at the section exit: cap vanishes.
        let pred = vehicle(1, 1050.0, 17.0);
        assert_relative_eq!(
            regulate_entry_speed(23.0, Some(&pred), &s, 600.0, 50.0),
            23.0
        );
        // No predecessor at all.
        assert_relative_eq!(regulate_entry_speed(23.0, None, &s, 600.0, 50.0), 23.0);
    }

    #[test]
    fn regulation_guarantees_exit_gap() {
        use rand::{Rng, SeedableRng};
        let s = section();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let pred = vehicle(1, rng.random_range(-599.0..1040.0), rng.random_range(17.0..23.0));
            let raw = rng.random_range(17.0..23.0);
            let v = regulate_entry_speed(raw, Some(&pred), &s, 600.0, 50.0);
            let t_exit = (1050.0 - pred.x) / pred.vx;
            let gap_at_exit = 1050.0 - (-600.0 + v * t_exit);
            assert!(
                gap_at_exit >= 50.0 - 1e-9,
                "gap {gap_at_exit} pred_x {} pred_v {} v {v}",
                pred.x,
                pred.vx
            );
        }
    }

    fn state_with(positions: &[(f64, f64)]) -> CorridorState {
        let vehicles = positions
            .iter()
            .enumerate()
            .map(|(i, &(x, vx))| vehicle(i as u32 + 1, x, vx))
            .collect();
        CorridorState {
            vehicles,
            zone_length: 600.0,
            min_gap: 50.0,
            cruise_floor: 17.0,
            line_height: 274.5,
            t: 0.0,
        }
    }

    #[test]
    fn extend_adds_both_agents() {
        let st = state_with(&[(-150.0, 20.0), (-450.0, 18.0)]);
        let ext = extend(&st);
        assert_eq!(ext.vehicles.len(), 4);
        assert_eq!(ext.vehicles[0].id, AgentId::VirtualFront);
        assert_eq!(ext.vehicles[0].x, 0.0);
        assert_eq!(ext.vehicles[0].vx, 17.0);
        let rear = ext.vehicles.last().unwrap();
        assert_eq!(rear.id, AgentId::VirtualRear);
        assert_eq!(rear.x, -600.0);
        assert_eq!(rear.vx, 18.0); // copies the last real vehicle
    }

    #[test]
    fn extend_skips_close_front() {
        let st = state_with(&[(-80.0, 20.0), (-450.0, 18.0)]);
        let ext = extend(&st);
        assert_eq!(ext.vehicles[0].id, AgentId::Corridor(1));
        assert_eq!(ext.vehicles.last().unwrap().id, AgentId::VirtualRear);
    }

    #[test]
    fn extend_empty_zone_gets_both() {
        let st = state_with(&[]);
        let ext = extend(&st);
        assert_eq!(ext.vehicles.len(), 2);
        assert_eq!(ext.vehicles[0].id, AgentId::VirtualFront);
        assert_eq!(ext.vehicles[1].id, AgentId::VirtualRear);
        assert_eq!(ext.vehicles[1].vx, 17.0);
    }

    #[test]
    fn extend_matches_case_table() {
        // Independent restatement of the four augmentation cases, checked
        // over randomized front/rear positions.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let front = rng.random_range(-300.0..0.0);
            let rear = rng.random_range(-600.0..front);
            let st = state_with(&[(front, 20.0), (rear, 19.0)]);
            let ext = extend(&st);
            let want_front = front <= -100.0;
            let want_rear = rear >= -500.0;
            assert_eq!(
                ext.vehicles.first().unwrap().kind == VehicleKind::VirtualFront,
                want_front
            );
            assert_eq!(
                ext.vehicles.last().unwrap().kind == VehicleKind::VirtualRear,
                want_rear
            );
            assert_eq!(
                ext.vehicles.len(),
                2 + usize::from(want_front) + usize::from(want_rear)
            );
        }
    }

    #[test]
    fn pair_counts() {
        let st = state_with(&[
            (-150.0, 20.0),
            (-220.0, 20.0),
            (-290.0, 20.0),
            (-380.0, 20.0),
            (-450.0, 20.0),
        ]);
        let ext = extend(&st);
        assert_eq!(ext.vehicles.len(), 7);
        assert_eq!(pairs(&ext).len(), 6);

        let one = extend(&state_with(&[(-150.0, 20.0)]));
        // Front agent joins (-150 <= -100); rear does not (-150 < -500 is false).
        assert_eq!(pairs(&one).len(), 1 + usize::from(one.vehicles.len() == 3));

        let none = extend(&state_with(&[]));
        assert_eq!(pairs(&none).len(), 1);
    }

    #[test]
    fn merging_point_trails_leader() {
        let s = section();
        let st = state_with(&[(700.0, 20.0), (400.0, 20.0)]);
        let pair = pairs(&st)[0];
        let p = merging_point(&pair, 0.0, &s, 50.0);
        assert_relative_eq!(p.x, 650.0);
        assert_relative_eq!(p.z, 274.5);
        // The slot advances with the leader.
        let later = merging_point(&pair, 2.0, &s, 50.0);
        assert_relative_eq!(later.x, 650.0 + 40.0);
        // Leader exactly one headway in: slot at the plane origin abscissa.
        let st2 = state_with(&[(50.0, 20.0), (-100.0, 20.0)]);
        let p2 = merging_point(&pairs(&st2)[0], 0.0, &s, 50.0);
        assert_relative_eq!(p2.x, 0.0);
    }

    #[test]
    fn advance_moves_linearly() {
        let st = state_with(&[(-600.0, 20.0)]);
        let moved = advance(&st, 82.5);
        assert_relative_eq!(moved.vehicles[0].x, 1050.0);
        assert_relative_eq!(moved.t, 82.5);
        let same = advance(&st, 0.0);
        assert_eq!(same, st);
    }

    #[test]
    fn advance_composes_additively() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let st = state_with(&[
                (rng.random_range(-600.0..0.0), rng.random_range(17.0..23.0)),
                (rng.random_range(-600.0..0.0), rng.random_range(17.0..23.0)),
            ]);
            let a = rng.random_range(0.0..40.0);
            let b = rng.random_range(0.0..40.0);
            let two_step = advance(&advance(&st, a), b);
            let one_step = advance(&st, a + b);
            for (u, v) in two_step.vehicles.iter().zip(&one_step.vehicles) {
                assert_relative_eq!(u.x, v.x, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn equal_speed_gap_constant() {
        let st = state_with(&[(-100.0, 20.0), (-250.0, 20.0)]);
        let pair = pairs(&st)[0];
        for t in [0.0, 10.0, 50.0] {
            assert_relative_eq!(pair.leader_x_at(t) - pair.follower_x_at(t), 150.0);
        }
    }
}
