//! Dense nonlinear programming: SQP with a quasi-Newton Hessian and an
//! augmented-Lagrangian fallback.
//!
//! The main driver linearizes the constraints, solves a convex QP for the
//! step, and globalizes with an l1 exact-penalty line search plus a
//! second-order correction. When the QP subproblem fails or progress
//! stalls, a few multiplier-penalty rounds (minimized by L-BFGS) pull the
//! iterate back toward feasibility before SQP resumes.

use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, QpError, QpProblem};

/// Dense NLP: minimize `f(z)` subject to `c_eq(z) = 0`, `c_ineq(z) >= 0`.
/// Constraint rows are expected to be scaled to comparable (distance-like)
/// units by the problem builder.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn objective(&self, z: &DVector<f64>) -> f64;
    fn objective_grad(&self, z: &DVector<f64>, grad: &mut DVector<f64>);
    fn constraints(&self, z: &DVector<f64>, c_eq: &mut DVector<f64>, c_ineq: &mut DVector<f64>);
    /// Dense Jacobians: `j_eq` is `num_eq x n`, `j_ineq` is `num_ineq x n`.
    fn jacobians(&self, z: &DVector<f64>, j_eq: &mut DMatrix<f64>, j_ineq: &mut DMatrix<f64>);
    /// Hessian of the Lagrangian `f - lam_eq'c_eq - lam_ineq'c_ineq`.
    /// Returns false when not available; the solver then builds a
    /// quasi-Newton model instead.
    fn lagrangian_hessian(
        &self,
        _z: &DVector<f64>,
        _lam_eq: &DVector<f64>,
        _lam_ineq: &DVector<f64>,
        _out: &mut DMatrix<f64>,
    ) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Infinity-norm bound on constraint violation at acceptance.
    pub feas_tol: f64,
    /// Stationarity tolerance, relative to multiplier size.
    pub opt_tol: f64,
    /// Step-size floor that counts as convergence when feasible.
    pub step_tol: f64,
    /// Print per-iteration diagnostics to stderr.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 160,
            feas_tol: 1e-7,
            opt_tol: 1e-6,
            step_tol: 1e-10,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NlpResult {
    pub z: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub lambda_ineq: DVector<f64>,
    pub objective: f64,
    /// Infinity norm of the constraint violation at `z`.
    pub violation: f64,
    pub stationarity: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    c_eq: DVector<f64>,
    c_ineq: DVector<f64>,
    j_eq: DMatrix<f64>,
    j_ineq: DMatrix<f64>,
}

impl Eval {
    fn new(p: &dyn NlpProblem, z: &DVector<f64>) -> Self {
        let (n, me, mi) = (p.num_vars(), p.num_eq(), p.num_ineq());
        let mut e = Eval {
            f: 0.0,
            grad: DVector::zeros(n),
            c_eq: DVector::zeros(me),
            c_ineq: DVector::zeros(mi),
            j_eq: DMatrix::zeros(me, n),
            j_ineq: DMatrix::zeros(mi, n),
        };
        e.f = p.objective(z);
        p.objective_grad(z, &mut e.grad);
        p.constraints(z, &mut e.c_eq, &mut e.c_ineq);
        p.jacobians(z, &mut e.j_eq, &mut e.j_ineq);
        e
    }

    fn violation(&self) -> f64 {
        let ve = self.c_eq.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let vi = self.c_ineq.iter().fold(0.0_f64, |a, c| a.max(-c.min(0.0)));
        ve.max(vi)
    }

    fn violation_l1(&self) -> f64 {
        let ve: f64 = self.c_eq.iter().map(|c| c.abs()).sum();
        let vi: f64 = self.c_ineq.iter().map(|c| (-c).max(0.0)).sum();
        ve + vi
    }
}

fn merit_value(p: &dyn NlpProblem, z: &DVector<f64>, mu: f64) -> (f64, f64) {
    let mut c_eq = DVector::zeros(p.num_eq());
    let mut c_ineq = DVector::zeros(p.num_ineq());
    p.constraints(z, &mut c_eq, &mut c_ineq);
    let viol: f64 = c_eq.iter().map(|c| c.abs()).sum::<f64>()
        + c_ineq.iter().map(|c| (-c).max(0.0)).sum::<f64>();
    (p.objective(z) + mu * viol, viol)
}

fn lagrangian_grad(e: &Eval, lam_eq: &DVector<f64>, lam_ineq: &DVector<f64>) -> DVector<f64> {
    &e.grad - e.j_eq.tr_mul(lam_eq) - e.j_ineq.tr_mul(lam_ineq)
}

/// Least-squares multipliers over the active set, independent of any model
/// regularization: certifies stationarity of a feasible iterate.
fn certify_kkt(
    p: &dyn NlpProblem,
    e: &Eval,
) -> Option<(f64, DVector<f64>, DVector<f64>)> {
    let n = p.num_vars();
    let me = p.num_eq();
    let mi = p.num_ineq();
    let active: Vec<usize> = (0..mi).filter(|&i| e.c_ineq[i] <= 1e-6).collect();
    let rows = me + active.len();
    if rows == 0 {
        return Some((e.grad.amax(), DVector::zeros(0), DVector::zeros(mi)));
    }
    let mut jac = DMatrix::zeros(rows, n);
    for r in 0..me {
        for c in 0..n {
            jac[(r, c)] = e.j_eq[(r, c)];
        }
    }
    for (k, &i) in active.iter().enumerate() {
        for c in 0..n {
            jac[(me + k, c)] = e.j_ineq[(i, c)];
        }
    }
    // Solve (J J') w = J g, clamp inequality multipliers to be dual
    // feasible and measure the remaining gradient residual.
    let mut jjt = &jac * jac.transpose();
    for d in 0..rows {
        jjt[(d, d)] += 1e-9;
    }
    let chol = jjt.cholesky()?;
    let w = chol.solve(&(&jac * &e.grad));
    let mut lam_eq = DVector::zeros(me);
    for r in 0..me {
        lam_eq[r] = w[r];
    }
    let mut lam_ineq = DVector::zeros(mi);
    for (k, &i) in active.iter().enumerate() {
        lam_ineq[i] = w[me + k].max(0.0);
    }
    let stat = lagrangian_grad(e, &lam_eq, &lam_ineq).amax();
    Some((stat, lam_eq, lam_ineq))
}

/// Solves the NLP from `z0`. Returns the best iterate found even when not
/// converged; the caller decides what a given violation level means.
pub fn solve_sqp(p: &dyn NlpProblem, z0: DVector<f64>, opts: &SolveOptions) -> NlpResult {
    let n = p.num_vars();
    let me = p.num_eq();
    let mi = p.num_ineq();

    let mut z = z0;
    let mut e = Eval::new(p, &z);
    let mut lam_eq = DVector::zeros(me);
    let mut lam_ineq = DVector::zeros(mi);
    let mut mu = 1.0_f64;
    let mut mu_oversized = 0;

    // Levenberg shift for the exact-Hessian model; quasi-Newton fallback.
    let mut sigma = 1e-6_f64;
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut bfgs = DMatrix::<f64>::identity(n, n);

    let mut best_z = z.clone();
    let mut best_viol = e.violation();
    let mut best_f = e.f;

    let mut stall_count = 0;
    let mut al_rounds_used = 0;
    let mut iterations = 0;
    let mut merit_history: std::collections::VecDeque<f64> = Default::default();
    let mut recent_f: std::collections::VecDeque<f64> = Default::default();

    'outer: for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let viol = e.violation();
        if viol < best_viol - 1e-12 || (viol <= best_viol + 1e-12 && e.f < best_f) {
            best_z = z.clone();
            best_viol = viol;
            best_f = e.f;
        }
        recent_f.push_back(e.f);
        if recent_f.len() > 12 {
            recent_f.pop_front();
        }
        if viol <= opts.feas_tol && recent_f.len() == 12 {
            let spread = recent_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - recent_f.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread <= 1e-7 * (1.0 + e.f.abs()) {
                break;
            }
        }

        // Constraint normals for the QP (columns).
        let m = me + mi;
        let mut normals = DMatrix::zeros(n, m);
        let mut rhs = DVector::zeros(m);
        for r in 0..me {
            for c in 0..n {
                normals[(c, r)] = e.j_eq[(r, c)];
            }
            rhs[r] = -e.c_eq[r];
        }
        for r in 0..mi {
            for c in 0..n {
                normals[(c, me + r)] = e.j_ineq[(r, c)];
            }
            rhs[me + r] = -e.c_ineq[r];
        }

        let exact = p.lagrangian_hessian(&z, &lam_eq, &lam_ineq, &mut hess);

        // Solve the QP, lifting the Levenberg shift until the model is
        // convex enough.
        let mut qp_sol = None;
        for _try in 0..14 {
            let b = if exact {
                let mut b = hess.clone();
                for d in 0..n {
                    b[(d, d)] += sigma;
                }
                b
            } else {
                bfgs.clone()
            };
            match solve_qp(&QpProblem {
                hess: &b,
                grad: &e.grad,
                normals: &normals,
                rhs: &rhs,
                num_eq: me,
            }) {
                Ok(sol) => {
                    qp_sol = Some(sol);
                    break;
                }
                Err(QpError::NotPositiveDefinite) if exact => {
                    sigma = (sigma * 10.0).max(1e-6);
                }
                Err(QpError::NotPositiveDefinite) => {
                    bfgs = DMatrix::identity(n, n);
                }
                Err(_) => break,
            }
        }
        let Some(qp) = qp_sol else {
            // Inconsistent linearization; pull toward feasibility.
            if al_rounds_used >= 4 {
                break;
            }
            al_rounds_used += 1;
            let pulled = augmented_lagrangian_pass(p, &z, &lam_eq, &lam_ineq, 60);
            z = pulled.0;
            lam_eq = pulled.1;
            lam_ineq = pulled.2;
            e = Eval::new(p, &z);
            bfgs = DMatrix::identity(n, n);
            continue;
        };
        let mut step = qp.x;
        // Physical cap on a single step; linearizations far outside the
        // section scale are meaningless.
        let cap = 60.0;
        let amax = step.amax();
        if amax > cap {
            step *= cap / amax;
        }
        let new_lam_eq = qp.multipliers.rows(0, me).into_owned();
        let new_lam_ineq = qp.multipliers.rows(me, mi).into_owned();
        // Convergence: feasible iterate whose stationarity is certified by
        // shift-independent least-squares multipliers.
        let step_norm = step.amax();
        if viol <= opts.feas_tol {
            if let Some((stat_ls, lam_eq_ls, lam_ineq_ls)) = certify_kkt(p, &e) {
                let lam_scale = 1.0 + lam_eq_ls.amax().max(lam_ineq_ls.amax());
                if stat_ls <= opts.opt_tol * lam_scale || step_norm <= opts.step_tol {
                    return NlpResult {
                        z,
                        lambda_eq: lam_eq_ls,
                        lambda_ineq: lam_ineq_ls,
                        objective: e.f,
                        violation: viol,
                        stationarity: stat_ls,
                        iterations,
                        converged: true,
                    };
                }
                if opts.trace {
                    eprintln!("  certify: stat {stat_ls:9.3e} scale {lam_scale:9.3e}");
                }
            }
        }
        if opts.trace {
            eprintln!(
                "sqp iter {iter}: f {:12.6} viol {:9.3e} step {:9.3e} mu {mu:9.3e} sigma {sigma:8.2e}",
                e.f,
                viol,
                step.amax()
            );
        }

        // Exact-penalty weight: large enough for descent, shrunk when it
        // stays oversized (an inflated weight strangles the step length).
        let lam_inf = new_lam_eq.amax().max(new_lam_ineq.amax());
        let mu_required = 1.2 * lam_inf + 1e-3;
        if mu < mu_required {
            // Growth-rate limited: inflated multipliers from a stiffened
            // model must not strangle later line searches.
            mu = mu_required.min(mu * 10.0);
            mu_oversized = 0;
        } else if mu > 4.0 * mu_required {
            mu_oversized += 1;
            if mu_oversized >= 3 {
                mu = 2.0 * mu_required;
                mu_oversized = 0;
            }
        } else {
            mu_oversized = 0;
        }

        let viol_l1 = e.violation_l1();
        let merit0 = e.f + mu * viol_l1;
        merit_history.push_back(merit0);
        if merit_history.len() > 5 {
            merit_history.pop_front();
        }
        let merit_ref = merit_history.iter().cloned().fold(merit0, f64::max);
        let dir_deriv = e.grad.dot(&step) - mu * viol_l1;

        // Backtracking on the merit function, with one second-order
        // correction attempt at the full step.
        let mut alpha = 1.0_f64;
        let mut accepted = false;
        let mut z_next = z.clone();
        let mut tried_soc = false;
        for _ in 0..30 {
            let cand = &z + &step * alpha;
            let (merit_c, _) = merit_value(p, &cand, mu);
            if merit_c <= merit_ref + 1e-4 * alpha * dir_deriv.min(0.0) {
                z_next = cand;
                accepted = true;
                break;
            }
            if !tried_soc && alpha == 1.0 && (me > 0 || mi > 0) {
                tried_soc = true;
                if let Some(corrected) = second_order_correction(p, &e, &z, &step) {
                    let (merit_soc, _) = merit_value(p, &corrected, mu);
                    if merit_soc <= merit_ref + 1e-4 * dir_deriv.min(0.0) {
                        z_next = corrected;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
            if alpha < 1e-8 {
                break;
            }
        }

        if !accepted {
            if exact {
                // Stiffen the model and retry before giving up on SQP.
                sigma = (sigma * 4.0).max(1e-3);
                stall_count += 1;
                if stall_count < 8 {
                    continue 'outer;
                }
            } else {
                stall_count += 1;
                bfgs *= 2.0;
                if stall_count < 2 {
                    continue 'outer;
                }
            }
            if al_rounds_used >= 4 {
                break;
            }
            al_rounds_used += 1;
            let pulled = augmented_lagrangian_pass(p, &z, &new_lam_eq, &new_lam_ineq, 80);
            z = pulled.0;
            lam_eq = pulled.1;
            lam_ineq = pulled.2;
            e = Eval::new(p, &z);
            bfgs = DMatrix::identity(n, n);
            stall_count = 0;
            continue;
        }
        stall_count = 0;
        if alpha >= 0.5 {
            sigma *= 0.5;
            if sigma < 1e-10 {
                sigma = 0.0;
            }
        }

        let e_next = Eval::new(p, &z_next);
        if !exact {
            // Damped quasi-Newton update on the Lagrangian gradient.
            let grad_l_old = lagrangian_grad(&e, &new_lam_eq, &new_lam_ineq);
            let grad_l_new = lagrangian_grad(&e_next, &new_lam_eq, &new_lam_ineq);
            let s = &z_next - &z;
            let y = &grad_l_new - &grad_l_old;
            if s.norm() > 1e-14 {
                let bs = &bfgs * &s;
                let sbs = s.dot(&bs);
                let mut sy = s.dot(&y);
                let mut y_eff = y;
                if sy < 0.2 * sbs {
                    let theta = 0.8 * sbs / (sbs - sy);
                    y_eff = &y_eff * theta + &bs * (1.0 - theta);
                    sy = s.dot(&y_eff);
                }
                if sy > 1e-12 && sbs > 1e-12 {
                    bfgs.ger(-1.0 / sbs, &bs, &bs, 1.0);
                    bfgs.ger(1.0 / sy, &y_eff, &y_eff, 1.0);
                }
            }
        }

        z = z_next;
        e = e_next;
        lam_eq = new_lam_eq;
        lam_ineq = new_lam_ineq;
    }

    // Not converged: report the best iterate seen.
    let e_best = Eval::new(p, &best_z);
    let stat = lagrangian_grad(&e_best, &lam_eq, &lam_ineq).amax();
    NlpResult {
        z: best_z,
        lambda_eq: lam_eq,
        lambda_ineq: lam_ineq,
        objective: e_best.f,
        violation: e_best.violation(),
        stationarity: stat,
        iterations,
        converged: false,
    }
}

/// Minimum-norm shift that cancels the constraint residual at the stepped
/// point: a Maratos-effect correction near curved constraints. Corrects the
/// equalities and any inequalities that the step left violated.
fn second_order_correction(
    p: &dyn NlpProblem,
    e: &Eval,
    z: &DVector<f64>,
    step: &DVector<f64>,
) -> Option<DVector<f64>> {
    let me = p.num_eq();
    let mi = p.num_ineq();
    let n = p.num_vars();
    let stepped = z + step;
    let mut c_eq = DVector::zeros(me);
    let mut c_ineq = DVector::zeros(mi);
    p.constraints(&stepped, &mut c_eq, &mut c_ineq);
    let violated: Vec<usize> = (0..mi).filter(|&i| c_ineq[i] < -1e-10).collect();
    let rows = me + violated.len();
    let mut jac = DMatrix::zeros(rows, n);
    let mut resid = DVector::zeros(rows);
    for r in 0..me {
        for c in 0..n {
            jac[(r, c)] = e.j_eq[(r, c)];
        }
        resid[r] = c_eq[r];
    }
    for (k, &i) in violated.iter().enumerate() {
        for c in 0..n {
            jac[(me + k, c)] = e.j_ineq[(i, c)];
        }
        resid[me + k] = c_ineq[i];
    }
    // d = -J'(JJ')^{-1} r, evaluated at the stepped point's residuals.
    let mut jjt = &jac * jac.transpose();
    for d in 0..rows {
        jjt[(d, d)] += 1e-10;
    }
    let chol = jjt.cholesky()?;
    let w = chol.solve(&resid);
    let d = -jac.tr_mul(&w);
    Some(stepped + d)
}

/// A few rounds of the multiplier-penalty method, each minimized by
/// memory-limited BFGS with backtracking. Used to restore feasibility when
/// the SQP linearization fails.
fn augmented_lagrangian_pass(
    p: &dyn NlpProblem,
    z0: &DVector<f64>,
    lam_eq0: &DVector<f64>,
    lam_ineq0: &DVector<f64>,
    inner_iters: usize,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let me = p.num_eq();
    let mi = p.num_ineq();
    let mut z = z0.clone();
    let mut lam_eq = lam_eq0.clone();
    let mut lam_ineq = lam_ineq0.map(|v| v.max(0.0));
    let mut rho = 10.0_f64;

    let mut c_eq = DVector::zeros(me);
    let mut c_ineq = DVector::zeros(mi);
    p.constraints(&z, &mut c_eq, &mut c_ineq);
    let mut prev_viol = c_eq.amax().max(
        c_ineq
            .iter()
            .fold(0.0_f64, |a, c| a.max(-c.min(0.0))),
    );

    for _round in 0..4 {
        z = lbfgs_min_al(p, z, &lam_eq, &lam_ineq, rho, inner_iters);
        p.constraints(&z, &mut c_eq, &mut c_ineq);
        // First-order multiplier updates.
        for i in 0..me {
            lam_eq[i] += rho * c_eq[i];
        }
        for i in 0..mi {
            lam_ineq[i] = (lam_ineq[i] - rho * c_ineq[i]).max(0.0);
        }
        let viol = c_eq.amax().max(
            c_ineq
                .iter()
                .fold(0.0_f64, |a, c| a.max(-c.min(0.0))),
        );
        if viol < 1e-8 {
            break;
        }
        if viol > 0.25 * prev_viol {
            rho *= 6.0;
        }
        prev_viol = viol;
    }
    (z, lam_eq, lam_ineq)
}

fn al_value_grad(
    p: &dyn NlpProblem,
    z: &DVector<f64>,
    lam_eq: &DVector<f64>,
    lam_ineq: &DVector<f64>,
    rho: f64,
    grad_out: Option<&mut DVector<f64>>,
) -> f64 {
    let me = p.num_eq();
    let mi = p.num_ineq();
    let n = p.num_vars();
    let mut c_eq = DVector::zeros(me);
    let mut c_ineq = DVector::zeros(mi);
    p.constraints(z, &mut c_eq, &mut c_ineq);
    let mut val = p.objective(z);
    for i in 0..me {
        val += lam_eq[i] * c_eq[i] + 0.5 * rho * c_eq[i] * c_eq[i];
    }
    for i in 0..mi {
        let t = (lam_ineq[i] - rho * c_ineq[i]).max(0.0);
        val += (t * t - lam_ineq[i] * lam_ineq[i]) / (2.0 * rho);
    }
    if let Some(g) = grad_out {
        let mut j_eq = DMatrix::zeros(me, n);
        let mut j_ineq = DMatrix::zeros(mi, n);
        p.jacobians(z, &mut j_eq, &mut j_ineq);
        p.objective_grad(z, g);
        for i in 0..me {
            let w = lam_eq[i] + rho * c_eq[i];
            for c in 0..n {
                g[c] += w * j_eq[(i, c)];
            }
        }
        for i in 0..mi {
            let t = (lam_ineq[i] - rho * c_ineq[i]).max(0.0);
            if t > 0.0 {
                for c in 0..n {
                    g[c] -= t * j_ineq[(i, c)];
                }
            }
        }
    }
    val
}

/// Two-loop L-BFGS minimization of the augmented Lagrangian.
fn lbfgs_min_al(
    p: &dyn NlpProblem,
    z0: DVector<f64>,
    lam_eq: &DVector<f64>,
    lam_ineq: &DVector<f64>,
    rho: f64,
    max_iters: usize,
) -> DVector<f64> {
    let n = p.num_vars();
    let mem = 8;
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut z = z0;
    let mut g = DVector::zeros(n);
    let mut val = al_value_grad(p, &z, lam_eq, lam_ineq, rho, Some(&mut g));

    for _ in 0..max_iters {
        if g.amax() < 1e-9 {
            break;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let rho_i = 1.0 / y_hist[i].dot(&s_hist[i]);
            alphas[i] = rho_i * s_hist[i].dot(&q);
            q.axpy(-alphas[i], &y_hist[i], 1.0);
        }
        if k > 0 {
            let last = k - 1;
            let gamma = s_hist[last].dot(&y_hist[last]) / y_hist[last].dot(&y_hist[last]);
            q *= gamma.max(1e-8);
        }
        for i in 0..k {
            let rho_i = 1.0 / y_hist[i].dot(&s_hist[i]);
            let beta = rho_i * y_hist[i].dot(&q);
            q.axpy(alphas[i] - beta, &s_hist[i], 1.0);
        }
        let dir = -q;
        let slope = g.dot(&dir);
        if slope >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            continue;
        }

        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &z + &dir * alpha;
            let mut g_cand = DVector::zeros(n);
            let v_cand = al_value_grad(p, &cand, lam_eq, lam_ineq, rho, Some(&mut g_cand));
            if v_cand <= val + 1e-4 * alpha * slope {
                let s = &cand - &z;
                let y = &g_cand - &g;
                if s.dot(&y) > 1e-12 {
                    s_hist.push(s);
                    y_hist.push(y);
                    if s_hist.len() > mem {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                }
                z = cand;
                g = g_cand;
                val = v_cand;
                improved = true;
                break;
            }
            alpha *= 0.4;
        }
        if !improved {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// min (x-2)^2 + (y-3)^2 s.t. x + y = 4, x >= 1.6 (active at optimum).
    struct Toy;

    impl NlpProblem for Toy {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_eq(&self) -> usize {
            1
        }
        fn num_ineq(&self) -> usize {
            1
        }
        fn objective(&self, z: &DVector<f64>) -> f64 {
            (z[0] - 2.0).powi(2) + (z[1] - 3.0).powi(2)
        }
        fn objective_grad(&self, z: &DVector<f64>, grad: &mut DVector<f64>) {
            grad[0] = 2.0 * (z[0] - 2.0);
            grad[1] = 2.0 * (z[1] - 3.0);
        }
        fn constraints(&self, z: &DVector<f64>, c_eq: &mut DVector<f64>, c_in: &mut DVector<f64>) {
            c_eq[0] = z[0] + z[1] - 4.0;
            c_in[0] = z[0] - 1.6;
        }
        fn jacobians(&self, _z: &DVector<f64>, j_eq: &mut DMatrix<f64>, j_in: &mut DMatrix<f64>) {
            j_eq[(0, 0)] = 1.0;
            j_eq[(0, 1)] = 1.0;
            j_in[(0, 0)] = 1.0;
            j_in[(0, 1)] = 0.0;
        }
    }

    #[test]
    fn toy_equality_and_active_bound() {
        // Unconstrained optimum (2,3); on x+y=4 the best is (1.5, 2.5),
        // which violates x >= 1.6, so the bound is active: (1.6, 2.4).
        let res = solve_sqp(&Toy, DVector::from_vec(vec![0.0, 0.0]), &SolveOptions::default());
        assert!(res.converged, "violation {}", res.violation);
        assert_relative_eq!(res.z[0], 1.6, epsilon = 1e-6);
        assert_relative_eq!(res.z[1], 2.4, epsilon = 1e-6);
        assert!(res.lambda_ineq[0] > 0.0);
    }

    /// Rosenbrock restricted to the unit disc: classic curved-constraint
    /// test with the optimum on the boundary.
    struct DiscRosenbrock;

    impl NlpProblem for DiscRosenbrock {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_eq(&self) -> usize {
            0
        }
        fn num_ineq(&self) -> usize {
            1
        }
        fn objective(&self, z: &DVector<f64>) -> f64 {
            (1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2)
        }
        fn objective_grad(&self, z: &DVector<f64>, grad: &mut DVector<f64>) {
            grad[0] = -2.0 * (1.0 - z[0]) - 400.0 * z[0] * (z[1] - z[0] * z[0]);
            grad[1] = 200.0 * (z[1] - z[0] * z[0]);
        }
        fn constraints(&self, z: &DVector<f64>, _c_eq: &mut DVector<f64>, c_in: &mut DVector<f64>) {
            c_in[0] = 1.0 - z[0] * z[0] - z[1] * z[1];
        }
        fn jacobians(&self, z: &DVector<f64>, _j_eq: &mut DMatrix<f64>, j_in: &mut DMatrix<f64>) {
            j_in[(0, 0)] = -2.0 * z[0];
            j_in[(0, 1)] = -2.0 * z[1];
        }
    }

    #[test]
    fn disc_rosenbrock_reaches_boundary_optimum() {
        let mut opts = SolveOptions::default();
        opts.max_iter = 400;
        let res = solve_sqp(&DiscRosenbrock, DVector::from_vec(vec![-0.5, 0.5]), &opts);
        assert!(res.violation < 1e-7);
        // Known solution of the disc-constrained Rosenbrock problem.
        assert_relative_eq!(res.z[0], 0.7864, epsilon = 2e-3);
        assert_relative_eq!(res.z[1], 0.6177, epsilon = 2e-3);
    }

    /// Infeasible linearization at the start: x^2 + y^2 <= 1 with x >= 2 is
    /// globally infeasible; the solver must stop with the best effort, not
    /// loop forever.
    struct Impossible;

    impl NlpProblem for Impossible {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_eq(&self) -> usize {
            0
        }
        fn num_ineq(&self) -> usize {
            2
        }
        fn objective(&self, z: &DVector<f64>) -> f64 {
            z[1]
        }
        fn objective_grad(&self, _z: &DVector<f64>, grad: &mut DVector<f64>) {
            grad[0] = 0.0;
            grad[1] = 1.0;
        }
        fn constraints(&self, z: &DVector<f64>, _c: &mut DVector<f64>, c_in: &mut DVector<f64>) {
            c_in[0] = 1.0 - z[0] * z[0] - z[1] * z[1];
            c_in[1] = z[0] - 2.0;
        }
        fn jacobians(&self, z: &DVector<f64>, _j: &mut DMatrix<f64>, j_in: &mut DMatrix<f64>) {
            j_in[(0, 0)] = -2.0 * z[0];
            j_in[(0, 1)] = -2.0 * z[1];
            j_in[(1, 0)] = 1.0;
            j_in[(1, 1)] = 0.0;
        }
    }

    #[test]
    fn impossible_problem_terminates() {
        let res = solve_sqp(
            &Impossible,
            DVector::from_vec(vec![0.0, 0.0]),
            &SolveOptions::default(),
        );
        assert!(!res.converged);
        assert!(res.violation > 0.5); // genuinely infeasible
    }
}
