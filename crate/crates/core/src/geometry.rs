//! Vertiport-anchored coordinate frames and take-off/merge airspace volumes.
//!
//! Every vertiport-corridor pair owns a dedicated climb volume ("TM section"):
//! the intersection of a quadrangular prism with the airspace above the
//! departure obstacle limitation surface. Trajectories are confined to the
//! central plane of that prism, so the engine works in 2D plane coordinates
//! `(x, z)` and maps to/from the inertial frame only at the edges.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Tolerance below which a point's lateral offset counts as "in plane".
pub const IN_PLANE_TOL: f64 = 1e-6;

/// Interpenetration depth (m) below which two section volumes still count
/// as disjoint; absorbs floating-point noise on shared boundary faces.
const CONTACT_TOL: f64 = 1e-9;

/// Climb-plane frame for one vertiport-corridor pair.
///
/// The plane origin sits at the transition point `D`, a height
/// `transition_height` above the vertiport. `heading` yaws the plane's
/// x-axis to the corridor direction; `tilt` then rotates about that axis so
/// the plane reaches a corridor that is laterally offset from the vertiport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Vertiport position in the inertial frame (m).
    pub origin: [f64; 3],
    /// Height of the transition point above the vertiport (m).
    pub transition_height: f64,
    /// Tilt angle about the corridor-aligned axis (rad), |tilt| < pi/2.
    pub tilt: f64,
    /// Corridor heading in the inertial x-y plane (rad), 0 = +x.
    pub heading: f64,
}

/// Point in the climb plane: `x` along the corridor direction, `z` normal to
/// it within the tilted plane, both measured from the transition point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub z: f64,
}

impl PlanePoint {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn distance(&self, other: &PlanePoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

/// Take-off and merging volume for one vertiport-corridor pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmSection {
    pub frame: Frame,
    /// Length of the merge region along the corridor (m).
    pub merge_length: f64,
    /// Corridor center height above the vertiport (m).
    pub corridor_height: f64,
    /// Corridor diameter; only used for volume disjointness checks (m).
    pub corridor_width: f64,
    /// Departure obstacle limitation surface angle (rad).
    pub ols_angle: f64,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("transition height must be positive, got {0}")]
    NonPositiveTransition(f64),
    #[error("tilt must satisfy |tilt| < pi/2, got {0} rad")]
    TiltOutOfRange(f64),
    #[error("corridor height {corridor} must exceed transition height {transition}")]
    CorridorBelowTransition { corridor: f64, transition: f64 },
    #[error("merge length must be positive, got {0}")]
    NonPositiveMergeLength(f64),
    #[error("OLS angle must be positive, got {0} rad")]
    NonPositiveOls(f64),
}

impl Frame {
    pub fn new(
        origin: [f64; 3],
        transition_height: f64,
        tilt: f64,
        heading: f64,
    ) -> Result<Self, GeometryError> {
        if !(transition_height > 0.0) {
            return Err(GeometryError::NonPositiveTransition(transition_height));
        }
        if !(tilt.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(GeometryError::TiltOutOfRange(tilt));
        }
        Ok(Self {
            origin,
            transition_height,
            tilt,
            heading,
        })
    }

    /// Transition point `D` in the inertial frame.
    pub fn transition_point(&self) -> Vector3<f64> {
        Vector3::new(
            self.origin[0],
            self.origin[1],
            self.origin[2] + self.transition_height,
        )
    }

    /// Rotation taking transition-centered inertial coordinates to plane
    /// coordinates. Orthonormal for any tilt/heading.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (s_t, c_t) = self.tilt.sin_cos();
        let tilt = Matrix3::new(1.0, 0.0, 0.0, 0.0, c_t, -s_t, 0.0, s_t, c_t);
        let (s_h, c_h) = self.heading.sin_cos();
        // Inverse yaw: maps the corridor direction onto +x before the tilt.
        let yaw_inv = Matrix3::new(c_h, s_h, 0.0, -s_h, c_h, 0.0, 0.0, 0.0, 1.0);
        tilt * yaw_inv
    }

    /// Projects an inertial point into the climb plane.
    ///
    /// Returns the in-plane coordinates and the lateral (out-of-plane)
    /// offset, which is ~0 for points on the plane itself.
    pub fn to_plane(&self, p: Vector3<f64>) -> (PlanePoint, f64) {
        let local = self.rotation() * (p - self.transition_point());
        (PlanePoint::new(local.x, local.z), local.y)
    }

    /// Maps an in-plane point back to the inertial frame.
    pub fn from_plane(&self, pp: PlanePoint) -> Vector3<f64> {
        self.rotation().transpose() * Vector3::new(pp.x, 0.0, pp.z) + self.transition_point()
    }

    /// Like [`Frame::from_plane`] but keeps a lateral offset component.
    pub fn from_plane_lateral(&self, pp: PlanePoint, lateral: f64) -> Vector3<f64> {
        self.rotation().transpose() * Vector3::new(pp.x, lateral, pp.z) + self.transition_point()
    }

    pub fn is_in_plane(&self, p: Vector3<f64>) -> bool {
        self.to_plane(p).1.abs() <= IN_PLANE_TOL
    }
}

impl TmSection {
    pub fn new(
        frame: Frame,
        merge_length: f64,
        corridor_height: f64,
        corridor_width: f64,
        ols_angle: f64,
    ) -> Result<Self, GeometryError> {
        if !(corridor_height > frame.transition_height) {
            return Err(GeometryError::CorridorBelowTransition {
                corridor: corridor_height,
                transition: frame.transition_height,
            });
        }
        if !(merge_length > 0.0) {
            return Err(GeometryError::NonPositiveMergeLength(merge_length));
        }
        if !(ols_angle > 0.0) {
            return Err(GeometryError::NonPositiveOls(ols_angle));
        }
        Ok(Self {
            frame,
            merge_length,
            corridor_height,
            corridor_width,
            ols_angle,
        })
    }

    /// Corridor center line height in plane coordinates:
    /// `(L_c - L_d) * sec(tilt)`.
    pub fn corridor_plane_height(&self) -> f64 {
        (self.corridor_height - self.frame.transition_height) / self.frame.tilt.cos()
    }

    /// Membership test for the climb region in plane coordinates:
    /// inside the `[0, L_m] x [0, H]` box and above the departure wedge.
    pub fn contains(&self, pp: PlanePoint) -> bool {
        let h = self.corridor_plane_height();
        0.0 <= pp.x
            && pp.x <= self.merge_length
            && 0.0 <= pp.z
            && pp.z <= h
            && pp.x * self.ols_angle.tan() <= pp.z * self.frame.tilt.cos()
    }

    /// Vertices of the in-plane climb region (convex polygon, CCW).
    ///
    /// The wedge cut removes the lower-right part of the box; the polygon is
    /// a triangle-ish quad or pentagon depending on where the wedge line
    /// exits the box.
    fn plane_polygon(&self) -> Vec<PlanePoint> {
        let h = self.corridor_plane_height();
        let lm = self.merge_length;
        // z >= x * slope with slope = tan(ols) / cos(tilt)
        let slope = self.ols_angle.tan() / self.frame.tilt.cos();
        let mut poly = vec![PlanePoint::new(0.0, 0.0)];
        if lm * slope <= h {
            poly.push(PlanePoint::new(lm, lm * slope));
            poly.push(PlanePoint::new(lm, h));
        } else {
            poly.push(PlanePoint::new(h / slope, h));
        }
        poly.push(PlanePoint::new(0.0, h));
        poly
    }

    /// Corner vertices of the section volume in inertial coordinates.
    pub fn volume_vertices(&self) -> Vec<Vector3<f64>> {
        let half = self.corridor_width / 2.0;
        self.plane_polygon()
            .into_iter()
            .flat_map(|pp| {
                [
                    self.frame.from_plane_lateral(pp, -half),
                    self.frame.from_plane_lateral(pp, half),
                ]
            })
            .collect()
    }

    /// True if the inertial point lies inside the section volume.
    pub fn volume_contains(&self, p: Vector3<f64>) -> bool {
        let (pp, lateral) = self.frame.to_plane(p);
        lateral.abs() <= self.corridor_width / 2.0 && self.contains(pp)
    }

    /// Edge directions of the volume (for separating-axis tests).
    fn edge_directions(&self) -> Vec<Vector3<f64>> {
        let poly = self.plane_polygon();
        let rot_t = self.frame.rotation().transpose();
        let mut dirs: Vec<Vector3<f64>> = poly
            .iter()
            .zip(poly.iter().cycle().skip(1))
            .map(|(a, b)| rot_t * Vector3::new(b.x - a.x, 0.0, b.z - a.z))
            .collect();
        dirs.push(rot_t * Vector3::new(0.0, 1.0, 0.0));
        dirs
    }

    /// Outward face normals of the volume.
    fn face_normals(&self) -> Vec<Vector3<f64>> {
        let poly = self.plane_polygon();
        let rot_t = self.frame.rotation().transpose();
        let mut normals: Vec<Vector3<f64>> = poly
            .iter()
            .zip(poly.iter().cycle().skip(1))
            .map(|(a, b)| {
                // In-plane edge (dx, dz): outward normal for a CCW polygon.
                rot_t * Vector3::new(b.z - a.z, 0.0, -(b.x - a.x))
            })
            .collect();
        normals.push(rot_t * Vector3::new(0.0, 1.0, 0.0));
        normals
    }
}

fn projection_interval(vertices: &[Vector3<f64>], axis: &Vector3<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vertices {
        let p = v.dot(axis);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (lo, hi)
}

/// Separating-axis test between two convex section volumes.
fn volumes_separated(a: &TmSection, b: &TmSection) -> bool {
    let va = a.volume_vertices();
    let vb = b.volume_vertices();
    let mut axes = a.face_normals();
    axes.extend(b.face_normals());
    for ea in a.edge_directions() {
        for eb in b.edge_directions() {
            let cross = ea.cross(&eb);
            if cross.norm() > 1e-9 {
                axes.push(cross);
            }
        }
    }
    axes.into_iter().any(|axis| {
        let n = axis.norm();
        if n < 1e-12 {
            return false;
        }
        let axis = axis / n;
        let (lo_a, hi_a) = projection_interval(&va, &axis);
        let (lo_b, hi_b) = projection_interval(&vb, &axis);
        hi_a <= lo_b + CONTACT_TOL || hi_b <= lo_a + CONTACT_TOL
    })
}

/// True when no two section volumes interpenetrate. Surface contact counts
/// as disjoint. Validates multi-vertiport layouts before a run.
pub fn sections_disjoint(sections: &[TmSection]) -> bool {
    for (i, a) in sections.iter().enumerate() {
        for b in &sections[i + 1..] {
            if !volumes_separated(a, b) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_frame(origin: [f64; 3], ld: f64) -> Frame {
        Frame::new(origin, ld, 0.0, 0.0).unwrap()
    }

    fn case_section() -> TmSection {
        TmSection::new(
            flat_frame([0.0, 0.0, 0.0], 30.5),
            1050.0,
            305.0,
            8.0,
            2.58_f64.to_radians(),
        )
        .unwrap()
    }

    #[test]
    fn to_plane_identity_rotation() {
        let f = flat_frame([0.0, 0.0, 0.0], 30.5);
        let (pp, lateral) = f.to_plane(Vector3::new(100.0, 0.0, 40.0));
        assert_relative_eq!(pp.x, 100.0, epsilon = 1e-12);
        assert_relative_eq!(pp.z, 9.5, epsilon = 1e-12);
        assert_relative_eq!(lateral, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn to_plane_tilted() {
        // Pure lateral unit offset under a 30 degree tilt splits into
        // cos/sin components. Transition point placed at the origin.
        let f = Frame::new([0.0, 0.0, -1.0], 1.0, 30.0_f64.to_radians(), 0.0).unwrap();
        let (pp, lateral) = f.to_plane(Vector3::new(0.0, 1.0, 0.0));
        assert_relative_eq!(lateral, 30.0_f64.to_radians().cos(), epsilon = 1e-12);
        assert_relative_eq!(pp.z, 0.5, epsilon = 1e-12);
        assert_relative_eq!(pp.x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn transition_point_maps_to_origin() {
        let f = flat_frame([700.0, 50.0, 0.0], 30.5);
        let (pp, lateral) = f.to_plane(Vector3::new(700.0, 50.0, 30.5));
        assert_relative_eq!(pp.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pp.z, 0.0, epsilon = 1e-12);
        assert_relative_eq!(lateral, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn from_plane_origin_is_transition_point() {
        let f = flat_frame([700.0, 50.0, 0.0], 30.5);
        let p = f.from_plane(PlanePoint::new(0.0, 0.0));
        assert_relative_eq!((p - f.transition_point()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn from_plane_inverts_to_plane_flat() {
        let f = flat_frame([0.0, 0.0, 0.0], 30.5);
        let p = f.from_plane(PlanePoint::new(100.0, 9.5));
        assert_relative_eq!(p.x, 100.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.z, 40.0, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_tilted() {
        let f = Frame::new([3.0, -2.0, 1.0], 30.5, 30.0_f64.to_radians(), 0.0).unwrap();
        let pp = PlanePoint::new(13.2, 77.9);
        let (back, lateral) = f.to_plane(f.from_plane(pp));
        assert_relative_eq!(back.x, pp.x, epsilon = 1e-12);
        assert_relative_eq!(back.z, pp.z, epsilon = 1e-12);
        assert_relative_eq!(lateral, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_is_orthonormal() {
        for tilt_deg in [-89.0, -45.0, -10.0, 0.0, 15.0, 60.0, 89.0] {
            for heading_deg in [0.0, 30.0, 180.0, -90.0] {
                let f = Frame::new(
                    [0.0, 0.0, 0.0],
                    1.0,
                    (tilt_deg as f64).to_radians(),
                    (heading_deg as f64).to_radians(),
                )
                .unwrap();
                let r = f.rotation();
                let err = (r * r.transpose() - Matrix3::identity()).abs().max();
                assert!(err < 1e-14, "tilt {tilt_deg} heading {heading_deg}: {err}");
            }
        }
    }

    #[test]
    fn round_trip_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let f = Frame::new(
                [
                    rng.random_range(-500.0..500.0),
                    rng.random_range(-500.0..500.0),
                    rng.random_range(-50.0..50.0),
                ],
                rng.random_range(1.0..100.0),
                rng.random_range(-1.2..1.2),
                rng.random_range(-3.0..3.0),
            )
            .unwrap();
            // Section-sized offsets around the frame origin.
            let p = f.transition_point()
                + Vector3::new(
                    rng.random_range(-1100.0..1100.0),
                    rng.random_range(-300.0..300.0),
                    rng.random_range(-300.0..300.0),
                );
            let (pp, lateral) = f.to_plane(p);
            let back = f.from_plane_lateral(pp, lateral);
            assert!((back - p).norm() < 1e-12, "round trip error {}", (back - p).norm());
        }
    }

    #[test]
    fn contains_wedge_threshold() {
        let s = case_section();
        // 500 * tan(2.58 deg) = 22.53 > 10, so the low point fails the wedge.
        assert!(!s.contains(PlanePoint::new(500.0, 10.0)));
        assert!(s.contains(PlanePoint::new(500.0, 30.0)));
        assert!(s.contains(PlanePoint::new(0.0, 0.0)));
    }

    #[test]
    fn contains_monotone_in_z() {
        let s = case_section();
        let h = s.corridor_plane_height();
        for xi in 0..40 {
            let x = xi as f64 * s.merge_length / 39.0;
            let mut inside = false;
            for zi in 0..200 {
                let z = zi as f64 * h / 199.0;
                let now = s.contains(PlanePoint::new(x, z));
                assert!(!inside || now, "left the region going up at x={x} z={z}");
                inside = inside || now;
            }
        }
    }

    #[test]
    fn identical_sections_overlap() {
        let s = case_section();
        assert!(!sections_disjoint(&[s, s]));
    }

    #[test]
    fn far_separated_sections_disjoint() {
        let a = case_section();
        let mut b = case_section();
        // Shifted beyond merge length + width along x.
        b.frame.origin[0] += a.merge_length + a.corridor_width + 10.0;
        assert!(sections_disjoint(&[a, b]));
    }

    #[test]
    fn laterally_offset_sections_disjoint() {
        let a = case_section();
        let mut b = case_section();
        b.frame.origin[1] += 50.0;
        assert!(sections_disjoint(&[a, b]));
        let mut c = case_section();
        c.frame.origin[1] += 4.0; // less than the 8 m width
        assert!(!sections_disjoint(&[a, c]));
    }

    #[test]
    fn opposite_facing_sections_match_grid_oracle() {
        let a = case_section();
        // Vertiport offset like the dense multi-pad layout, facing the
        // other way and tilted toward a laterally offset corridor.
        let frame = Frame::new(
            [800.0, 10.0, 20.0],
            30.5,
            -(20.0_f64 / 254.5).atan(),
            std::f64::consts::PI,
        )
        .unwrap();
        let b = TmSection::new(frame, 1050.0, 285.0, 8.0, 2.58_f64.to_radians()).unwrap();
        assert_eq!(sections_disjoint(&[a, b]), !grid_overlap(&a, &b));

        // Same layout but tilted into the first section's lane: must agree
        // with the oracle again (overlapping this time).
        let frame_in = Frame::new(
            [800.0, 10.0, 20.0],
            30.5,
            (10.0_f64 / 254.5).atan(),
            std::f64::consts::PI,
        )
        .unwrap();
        let c = TmSection::new(frame_in, 1050.0, 285.0, 8.0, 2.58_f64.to_radians()).unwrap();
        assert_eq!(sections_disjoint(&[a, c]), !grid_overlap(&a, &c));
    }

    /// Sampling oracle: walk a ~1 m grid over one volume and test membership
    /// in the other. Interior-only samples so surface contact stays disjoint.
    fn grid_overlap(a: &TmSection, b: &TmSection) -> bool {
        let h = a.corridor_plane_height();
        let nx = a.merge_length.ceil() as i64;
        let nz = h.ceil() as i64;
        let ny = a.corridor_width.ceil() as i64;
        for ix in 0..nx {
            let x = (ix as f64 + 0.5) * a.merge_length / nx as f64;
            for iz in 0..nz {
                let z = (iz as f64 + 0.5) * h / nz as f64;
                let pp = PlanePoint::new(x, z);
                if !a.contains(pp) {
                    continue;
                }
                for iy in 0..ny {
                    let y = -a.corridor_width / 2.0
                        + (iy as f64 + 0.5) * a.corridor_width / ny as f64;
                    if b.volume_contains(a.frame.from_plane_lateral(pp, y)) {
                        return true;
                    }
                }
            }
        }
        false
    }
}
