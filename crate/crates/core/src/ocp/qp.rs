//! Dense convex quadratic programming by a dual active-set method.
//!
//! Solves `min 1/2 x'Bx + g'x` subject to `n_i'x >= b_i`, with the first
//! `num_eq` constraints treated as equalities. B must be positive definite.
//! The solver walks the dual: it starts at the unconstrained minimum and
//! activates violated constraints one at a time, maintaining a QR-like
//! factorization of the active normals in the metric of B.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum QpError {
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are inconsistent (blocked while activating constraint {constraint})")]
    Infeasible { constraint: usize },
    #[error("iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint; zero when inactive. Inequality
    /// multipliers are non-negative, equality multipliers are free.
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub objective: f64,
}

pub struct QpProblem<'a> {
    /// Positive definite Hessian (n x n).
    pub hess: &'a DMatrix<f64>,
    /// Linear term (n).
    pub grad: &'a DVector<f64>,
    /// Constraint normals as columns (n x m).
    pub normals: &'a DMatrix<f64>,
    /// Right-hand sides (m); constraint i is `normals_i' x >= rhs_i`.
    pub rhs: &'a DVector<f64>,
    /// The first `num_eq` constraints hold with equality.
    pub num_eq: usize,
}

const ACCURACY: f64 = 1e-11;

struct Workspace {
    n: usize,
    /// Inverse-transpose Cholesky factor, rotated as constraints activate.
    j: DMatrix<f64>,
    /// Upper-triangular factor of the active normals, column per member.
    r: DMatrix<f64>,
    active: Vec<usize>,
    /// Sign flip applied to equality normals activated from the far side.
    flipped: Vec<bool>,
    /// Multipliers of the active constraints, in activation order.
    u: Vec<f64>,
}

impl Workspace {
    fn q(&self) -> usize {
        self.active.len()
    }

    /// d = J' * normal; the step direction decomposes over d.
    fn project(&self, normal: &DVector<f64>) -> DVector<f64> {
        self.j.tr_mul(normal)
    }

    /// Primal step direction z = J2 * d2.
    fn primal_step(&self, d: &DVector<f64>) -> DVector<f64> {
        let q = self.q();
        let mut z = DVector::zeros(self.n);
        for col in q..self.n {
            let dk = d[col];
            if dk != 0.0 {
                for row in 0..self.n {
                    z[row] += self.j[(row, col)] * dk;
                }
            }
        }
        z
    }

    /// Dual step direction r = R^{-1} d1 (back substitution).
    fn dual_step(&self, d: &DVector<f64>) -> Vec<f64> {
        let q = self.q();
        let mut r = vec![0.0; q];
        for i in (0..q).rev() {
            let mut s = d[i];
            for k in (i + 1)..q {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        r
    }

    /// Activates a constraint whose projection is `d`; returns false when
    /// the new normal is linearly dependent on the active set.
    fn add_constraint(&mut self, d: &mut DVector<f64>, index: usize, flipped: bool) -> bool {
        let q = self.q();
        // Rotate d[q+1..n] into d[q], applying the same plane rotations to
        // the columns of J.
        for col in ((q + 1)..self.n).rev() {
            let a = d[col - 1];
            let b = d[col];
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[col - 1] = h;
            d[col] = 0.0;
            for row in 0..self.n {
                let t1 = self.j[(row, col - 1)];
                let t2 = self.j[(row, col)];
                self.j[(row, col - 1)] = c * t1 + s * t2;
                self.j[(row, col)] = -s * t1 + c * t2;
            }
        }
        if d[q].abs() <= ACCURACY * (1.0 + d.norm()) {
            return false;
        }
        for row in 0..=q {
            self.r[(row, q)] = d[row];
        }
        self.active.push(index);
        self.flipped.push(flipped);
        true
    }

    /// Removes the active constraint at position `pos`, restoring the
    /// triangular structure.
    fn drop_constraint(&mut self, pos: usize) {
        let q = self.q();
        self.active.remove(pos);
        self.flipped.remove(pos);
        self.u.remove(pos);
        // Shift columns of R left over the removed one.
        for col in pos..(q - 1) {
            for row in 0..q {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        // Re-triangularize: zero the subdiagonal entries that appeared.
        for col in pos..(q - 1) {
            let a = self.r[(col, col)];
            let b = self.r[(col + 1, col)];
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for k in col..(q - 1) {
                let t1 = self.r[(col, k)];
                let t2 = self.r[(col + 1, k)];
                self.r[(col, k)] = c * t1 + s * t2;
                self.r[(col + 1, k)] = -s * t1 + c * t2;
            }
            for row in 0..self.n {
                let t1 = self.j[(row, col)];
                let t2 = self.j[(row, col + 1)];
                self.j[(row, col)] = c * t1 + s * t2;
                self.j[(row, col + 1)] = -s * t1 + c * t2;
            }
        }
        for row in 0..q {
            self.r[(row, q - 1)] = 0.0;
        }
    }
}

/// Solves the QP; see the module docs for conventions.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    let n = p.grad.len();
    let m = p.normals.ncols();
    assert_eq!(p.hess.nrows(), n);
    assert_eq!(p.rhs.len(), m);

    let chol = p
        .hess
        .clone()
        .cholesky()
        .ok_or(QpError::NotPositiveDefinite)?;
    // x0 = -B^{-1} g, J0 = L^{-T}.
    let mut x = -p.grad.clone();
    chol.solve_mut(&mut x);
    let mut j = DMatrix::identity(n, n);
    let l = chol.l();
    // Solve L' J = I column by column (J = L^{-T}).
    for col in 0..n {
        for row in (0..n).rev() {
            let mut s = j[(row, col)];
            for k in (row + 1)..n {
                s -= l[(k, row)] * j[(k, col)];
            }
            j[(row, col)] = s / l[(row, row)];
        }
    }

    let mut ws = Workspace {
        n,
        j,
        r: DMatrix::zeros(n, n),
        active: Vec::new(),
        flipped: Vec::new(),
        u: Vec::new(),
    };

    let max_iter = 40 * (n + m);
    let mut iter = 0;
    // Constraints found linearly dependent on the active set while already
    // satisfied; they carry no multiplier and must not be re-picked.
    let mut dependent = vec![false; m];
    loop {
        iter += 1;
        if iter > max_iter {
            return Err(QpError::IterationLimit);
        }

        // Pick the next violated constraint: equalities first (either
        // side), then the most violated inequality.
        let mut chosen: Option<(usize, bool, f64)> = None;
        for i in 0..p.num_eq {
            if ws.active.contains(&i) || dependent[i] {
                continue;
            }
            let s = p.normals.column(i).dot(&x) - p.rhs[i];
            if s.abs() > ACCURACY * (1.0 + p.rhs[i].abs()) {
                chosen = Some((i, s > 0.0, if s > 0.0 { -s } else { s }));
            } else {
                // Activate satisfied equalities too so they stay pinned.
                chosen = Some((i, false, 0.0));
            }
            break;
        }
        if chosen.is_none() {
            let mut worst = -ACCURACY;
            for i in p.num_eq..m {
                if ws.active.contains(&i) {
                    continue;
                }
                let s = p.normals.column(i).dot(&x) - p.rhs[i];
                let scale = 1.0 + p.rhs[i].abs();
                if s / scale < worst {
                    worst = s / scale;
                    chosen = Some((i, false, s));
                }
            }
        }
        let Some((idx, flip, mut s_p)) = chosen else {
            break; // all satisfied: optimal
        };

        let sign = if flip { -1.0 } else { 1.0 };
        let normal = p.normals.column(idx).into_owned() * sign;
        s_p *= 1.0; // violation measured along the (possibly flipped) normal
        if flip {
            s_p = normal.dot(&x) - sign * p.rhs[idx];
        }

        let mut u_plus = 0.0;
        // Inner loop: take primal/dual steps until this constraint joins
        // the active set.
        loop {
            let mut d = ws.project(&normal);
            let z = ws.primal_step(&d);
            let r = ws.dual_step(&d);

            // Partial step bound from dual feasibility (inequalities only).
            let mut t1 = f64::INFINITY;
            let mut blocking = None;
            for (pos, &ci) in ws.active.iter().enumerate() {
                if ci < p.num_eq {
                    continue;
                }
                if r[pos] > ACCURACY {
                    let bound = ws.u[pos] / r[pos];
                    if bound < t1 {
                        t1 = bound;
                        blocking = Some(pos);
                    }
                }
            }

            let ztn = z.dot(&normal);
            let t2 = if ztn > ACCURACY {
                -s_p / ztn
            } else {
                f64::INFINITY
            };

            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible { constraint: idx });
            }

            if t2.is_infinite() {
                // Dual-only step: shed the blocking constraint.
                for (pos, uk) in ws.u.iter_mut().enumerate() {
                    *uk -= t * r[pos];
                }
                u_plus += t;
                ws.drop_constraint(blocking.expect("finite t1 implies a blocking constraint"));
                continue;
            }

            x.axpy(t, &z, 1.0);
            for (pos, uk) in ws.u.iter_mut().enumerate() {
                *uk -= t * r[pos];
            }
            u_plus += t;
            s_p = normal.dot(&x) - sign * p.rhs[idx];

            if (t - t2).abs() <= f64::EPSILON * t.max(1.0) {
                // Full step: the constraint becomes active.
                if ws.add_constraint(&mut d, idx, flip) {
                    ws.u.push(u_plus);
                } else {
                    // Linearly dependent: acceptable only if now satisfied.
                    if s_p.abs() > 1e-7 {
                        return Err(QpError::Infeasible { constraint: idx });
                    }
                    dependent[idx] = true;
                }
                break;
            }
            ws.drop_constraint(blocking.expect("partial step implies a blocking constraint"));
        }
    }

    let mut multipliers = DVector::zeros(m);
    for (pos, &ci) in ws.active.iter().enumerate() {
        multipliers[ci] = if ws.flipped[pos] { -ws.u[pos] } else { ws.u[pos] };
    }
    let objective = 0.5 * (p.hess * &x).dot(&x) + p.grad.dot(&x);
    Ok(QpSolution {
        x,
        multipliers,
        active: ws.active,
        objective,
    })
}
