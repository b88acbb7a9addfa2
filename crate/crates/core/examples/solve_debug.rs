//! Scratch driver for watching solver convergence on the vertical benchmark.

use nalgebra::DVector;
use uam_merge::dynamics::PlaneState;
use uam_merge::ocp::nlp::NlpProblem;
use uam_merge::ocp::{nlp, OcpKind, OcpSpec, SectionLimits, TerminalSpec, Transcription};

fn main() {
    let spec = OcpSpec {
        kind: OcpKind::MinTime,
        initial: PlaneState::new(0.0, 0.0, 0.0, 8.0),
        t_start: 0.0,
        terminal: TerminalSpec::fixed(0.0, 274.5, 0.0, 0.0),
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
        obstacles: vec![],
        lambda: 20.0,
        min_gap: 50.0,
        n_nodes: 40,
    };
    let (tr, guess) = Transcription::build(&spec, spec.n_nodes, 0);
    let opts = nlp::SolveOptions {
        max_iter: 400,
        feas_tol: 1e-6,
        opt_tol: 1e-5,
        step_tol: 1e-9,
        trace: true,
    };
    let res = nlp::solve_sqp(&tr, guess, &opts);
    eprintln!(
        "converged {} iters {} viol {:.3e} stat {:.3e} objective {:.4}",
        res.converged, res.iterations, res.violation, res.stationarity, res.objective
    );
    let dur = res.z[tr.num_vars() - 1];
    eprintln!("duration {dur:.4} (analytic 30.9642)");
    let _ = DVector::<f64>::zeros(1);
}
