//! Inspect the KKT residual structure at the merge solver's final iterate.

use nalgebra::{DMatrix, DVector};
use uam_merge::dynamics::PlaneState;
use uam_merge::ocp::nlp::{self, NlpProblem};
use uam_merge::ocp::{ObstacleTrack, OcpKind, OcpSpec, SectionLimits, TerminalSpec, Transcription};

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
    let (tr, guess) = Transcription::build(&spec, spec.n_nodes, 0);
    let opts = nlp::SolveOptions {
        max_iter: 220,
        feas_tol: 1e-7,
        opt_tol: 1e-6,
        step_tol: 1e-10,
        trace: false,
    };
    let res = nlp::solve_sqp(&tr, guess, &opts);
    let z = &res.z;
    let n = tr.num_vars();
    let (me, mi) = (tr.num_eq(), tr.num_ineq());
    let mut grad = DVector::zeros(n);
    tr.objective_grad(z, &mut grad);
    let mut c_eq = DVector::zeros(me);
    let mut c_in = DVector::zeros(mi);
    tr.constraints(z, &mut c_eq, &mut c_in);
    let mut j_eq = DMatrix::zeros(me, n);
    let mut j_in = DMatrix::zeros(mi, n);
    tr.jacobians(z, &mut j_eq, &mut j_in);

    let active: Vec<usize> = (0..mi).filter(|&i| c_in[i] <= 1e-6).collect();
    eprintln!("active inequality rows: {}", active.len());
    let rows = me + active.len();
    let mut jac = DMatrix::zeros(rows, n);
    for r in 0..me {
        for c in 0..n {
            jac[(r, c)] = j_eq[(r, c)];
        }
    }
    for (k, &i) in active.iter().enumerate() {
        for c in 0..n {
            jac[(me + k, c)] = j_in[(i, c)];
        }
    }
    let mut jjt = &jac * jac.transpose();
    for d in 0..rows {
        jjt[(d, d)] += 1e-9;
    }
    let chol = jjt.cholesky().unwrap();
    let w = chol.solve(&(&jac * &grad));
    // Residual without clamping.
    let resid_free = &grad - jac.tr_mul(&w);
    eprintln!("unclamped residual inf-norm: {:.3e}", resid_free.amax());
    // Clamped.
    let mut w_cl = w.clone();
    let mut n_neg = 0;
    for (k, &_i) in active.iter().enumerate() {
        if w_cl[me + k] < 0.0 {
            w_cl[me + k] = 0.0;
            n_neg += 1;
        }
    }
    eprintln!("negative ineq multipliers clamped: {n_neg}");
    let resid = &grad - jac.tr_mul(&w_cl);
    eprintln!("clamped residual inf-norm: {:.3e}", resid.amax());
    // Largest components.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| resid[b].abs().partial_cmp(&resid[a].abs()).unwrap());
    for &i in idx.iter().take(8) {
        let kind = if i == 6 * 40 {
            "duration".to_string()
        } else if i < 4 * 40 {
            format!("state node {} comp {}", i / 4, i % 4)
        } else {
            format!("control node {} comp {}", (i - 160) / 2, (i - 160) % 2)
        };
        eprintln!("resid[{i}] = {:+.4e}  ({kind})", resid[i]);
    }

    // Merit landscape along QP steps for a ladder of shifts.
    use uam_merge::ocp::qp::{solve_qp, QpProblem};
    let mut hess = DMatrix::zeros(n, n);
    tr.lagrangian_hessian(z, &res.lambda_eq, &res.lambda_ineq, &mut hess);
    let mut normals = DMatrix::zeros(n, me + mi);
    let mut rhs = DVector::zeros(me + mi);
    for r in 0..me {
        for c in 0..n {
            normals[(c, r)] = j_eq[(r, c)];
        }
        rhs[r] = -c_eq[r];
    }
    for r in 0..mi {
        for c in 0..n {
            normals[(c, me + r)] = j_in[(r, c)];
        }
        rhs[me + r] = -c_in[r];
    }
    let mu = 50.0;
    let merit = |zz: &DVector<f64>| -> f64 {
        let mut ce = DVector::zeros(me);
        let mut ci = DVector::zeros(mi);
        tr.constraints(zz, &mut ce, &mut ci);
        let viol: f64 = ce.iter().map(|c| c.abs()).sum::<f64>()
            + ci.iter().map(|c| (-c).max(0.0)).sum::<f64>();
        tr.objective(zz) + mu * viol
    };
    let m0 = merit(z);
    for sigma in [1e-3, 1.0, 10.0, 100.0] {
        let mut b = hess.clone();
        for d in 0..n {
            b[(d, d)] += sigma;
        }
        match solve_qp(&QpProblem {
            hess: &b,
            grad: &grad,
            normals: &normals,
            rhs: &rhs,
            num_eq: me,
        }) {
            Ok(sol) => {
                let gp = grad.dot(&sol.x);
                eprint!("sigma {sigma:8.1e}: |p| {:9.3e} g'p {gp:+9.3e} dmerit:", sol.x.amax());
                for alpha in [1.0, 0.5, 0.25, 0.1, 0.01] {
                    let cand = z + &sol.x * alpha;
                    eprint!(" {:+9.2e}", merit(&cand) - m0);
                }
                eprintln!();
            }
            Err(e) => eprintln!("sigma {sigma:8.1e}: QP failed {e:?}"),
        }
    }
}
