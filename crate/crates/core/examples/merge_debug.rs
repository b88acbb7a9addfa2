//! Scratch driver for the moving-slot merge dense check.

use uam_merge::dynamics::PlaneState;
use uam_merge::ocp::{self, ObstacleTrack, OcpKind, OcpSpec, SectionLimits, TerminalSpec};

fn main() {
    let spec = OcpSpec {
        kind: OcpKind::MergeCost,
        initial: PlaneState::new(0.0, 0.0, 0.0, 8.0),
        t_start: 0.0,
        terminal: TerminalSpec::moving_slot(0.0, 20.0, 0.0, 50.0, 274.5),
        limits: SectionLimits {
            merge_length: 1050.0,
            plane_height: 274.5,
            ols_angle: 2.58_f64.to_radians(),
            tilt: 0.0,
            v_max: 40.0,
            roc_max: 9.0,
            accel_radius: 20.0,
            gravity: 9.81,
        },
        obstacles: vec![
            {
                let mut o = ObstacleTrack::linear("leader", 0.0, 274.5, 20.0, 0.0, 0.0, 50.0);
                o.pair_member = true;
                o
            },
            {
                let mut o = ObstacleTrack::linear("follower", -160.0, 274.5, 18.0, 0.0, 0.0, 50.0);
                o.pair_member = true;
                o
            },
        ],
        lambda: 20.0,
        min_gap: 50.0,
        n_nodes: 40,
    };
    // Reproduce solve() without the dense gate to see what fails.
    use uam_merge::ocp::nlp::{self, NlpProblem};
    use uam_merge::ocp::Transcription;
    let (tr, guess) = Transcription::build(&spec, spec.n_nodes, 0);
    let opts = nlp::SolveOptions {
        max_iter: 220,
        feas_tol: 1e-7,
        opt_tol: 1e-6,
        step_tol: 1e-10,
        trace: true,
    };
    let res = nlp::solve_sqp(&tr, guess, &opts);
    eprintln!(
        "nlp converged {} iters {} viol {:.2e} obj {:.2}",
        res.converged, res.iterations, res.violation, res.objective
    );
    let _ = tr.num_vars();
    let sol = tr.extract(&res);
    eprintln!("t_f {:.3}", sol.t_f);
    let report = ocp::check_feasibility(&sol, &spec, 0.05);
    eprintln!("{report:#?}");
    eprintln!("max violation {:.4e}", report.max_violation());
}
