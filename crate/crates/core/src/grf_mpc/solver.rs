//! Operator-splitting QP solver with an exact friction-pyramid projection and
//! an active-set polish that recovers the exact optimum once the contact
//! constraint pattern has been identified.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::qp::QpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    /// Bound on the natural KKT residual of the scaled problem.
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub relaxation: f64,
    /// Iterations between polish attempts.
    pub polish_every: usize,
    /// Record per-iteration residual and objective.
    pub record_history: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 2000,
            rho: 0.1,
            relaxation: 1.6,
            polish_every: 10,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub residual: f64,
    /// Best objective over the feasible iterates so far.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub polished: bool,
    pub history: Vec<IterationLog>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub stats: SolveStats,
    pub converged: bool,
}

/// Euclidean projection onto `{0 <= fz <= f_max, |fx| <= mu fz, |fy| <= mu fz}`.
pub fn project_friction_pyramid(f: &Vector3<f64>, mu: f64, f_max: f64) -> Vector3<f64> {
    let (a, b, c) = (f.x.abs(), f.y.abs(), f.z);
    if a <= mu * c && b <= mu * c && c >= 0.0 && c <= f_max {
        return *f;
    }
    // For a fixed normal force t the tangential parts clamp independently, so
    // the problem reduces to a convex piecewise quadratic in t with kinks at
    // a/mu and b/mu. Its stationary point lies in exactly one piece.
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let pieces = [
        (f64::NEG_INFINITY, lo / mu, lo + hi, 2.0),
        (lo / mu, hi / mu, hi, 1.0),
        (hi / mu, f64::INFINITY, 0.0, 0.0),
    ];
    let mut t = 0.0;
    for (start, end, sum, k) in pieces {
        let cand = (c + mu * sum) / (1.0 + k * mu * mu);
        if cand >= start && cand <= end {
            t = cand;
            break;
        }
        if cand < start {
            t = start;
            break;
        }
    }
    let t = t.clamp(0.0, f_max);
    Vector3::new(f.x.clamp(-mu * t, mu * t), f.y.clamp(-mu * t, mu * t), t)
}

fn project_all(x: &DVector<f64>, mu: f64, f_max: f64, out: &mut DVector<f64>) {
    for s in 0..x.len() / 3 {
        let p = project_friction_pyramid(&Vector3::new(x[3 * s], x[3 * s + 1], x[3 * s + 2]), mu, f_max);
        out.fixed_rows_mut::<3>(3 * s).copy_from(&p);
    }
}

/// `|| x - proj(x - (P x + q)) ||_inf`; zero exactly at the optimum.
pub fn natural_residual(p: &DMatrix<f64>, q: &DVector<f64>, x: &DVector<f64>, mu: f64, f_max: f64) -> f64 {
    let step = x - (p * x + q);
    let mut proj = DVector::zeros(x.len());
    project_all(&step, mu, f_max, &mut proj);
    (x - proj).amax()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct SlotActive {
    apex: bool,
    /// +fx, -fx, +fy, -fy faces and the normal-force cap.
    faces: [bool; 5],
}

fn classify(x: &DVector<f64>, mu: f64, f_max: f64) -> Vec<SlotActive> {
    (0..x.len() / 3)
        .map(|s| {
            let (fx, fy, fz) = (x[3 * s], x[3 * s + 1], x[3 * s + 2]);
            let eps = 1e-9 * (1.0 + fz.abs());
            if fz <= eps {
                return SlotActive { apex: true, faces: [false; 5] };
            }
            SlotActive {
                apex: false,
                faces: [
                    fx >= mu * fz - eps,
                    -fx >= mu * fz - eps,
                    fy >= mu * fz - eps,
                    -fy >= mu * fz - eps,
                    fz >= f_max - eps,
                ],
            }
        })
        .collect()
}

const FACE_ROWS: [(f64, f64, f64); 4] = [(1.0, 0.0, -1.0), (-1.0, 0.0, -1.0), (0.0, 1.0, -1.0), (0.0, -1.0, -1.0)];

/// Solves the equality-constrained problem for a guessed active set and checks
/// optimality. Adjusts the guess a few times before giving up.
fn polish(p: &DMatrix<f64>, q: &DVector<f64>, mu: f64, f_max: f64, guess: &DVector<f64>) -> Option<DVector<f64>> {
    let ns = q.len() / 3;
    let mut active = classify(guess, mu, f_max);
    for _ in 0..6 {
        let free: Vec<usize> = (0..ns).filter(|&s| !active[s].apex).collect();
        let nf = 3 * free.len();
        let mut pr = DMatrix::zeros(nf, nf);
        let mut qr = DVector::zeros(nf);
        for (bi, &si) in free.iter().enumerate() {
            qr.fixed_rows_mut::<3>(3 * bi).copy_from(&q.fixed_rows::<3>(3 * si));
            for (bj, &sj) in free.iter().enumerate() {
                pr.fixed_view_mut::<3, 3>(3 * bi, 3 * bj).copy_from(&p.fixed_view::<3, 3>(3 * si, 3 * sj));
            }
        }
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        for (bi, &si) in free.iter().enumerate() {
            for k in 0..5 {
                if active[si].faces[k] {
                    rows.push((bi, k, if k == 4 { f_max } else { 0.0 }));
                }
            }
        }
        let m = rows.len();
        let mut e = DMatrix::zeros(m, nf);
        let mut rhs = DVector::zeros(m);
        for (r, &(bi, k, b)) in rows.iter().enumerate() {
            if k == 4 {
                e[(r, 3 * bi + 2)] = 1.0;
            } else {
                let (cx, cy, cz) = FACE_ROWS[k];
                e[(r, 3 * bi)] = cx;
                e[(r, 3 * bi + 1)] = cy;
                e[(r, 3 * bi + 2)] = cz * mu;
            }
            rhs[r] = b;
        }

        let chol = pr.cholesky()?;
        let xu = -chol.solve(&qr);
        let (xr, lambda) = if m == 0 {
            (xu, DVector::zeros(0))
        } else {
            let y = chol.solve(&e.transpose());
            let s = &e * &y;
            let lambda = s.cholesky()?.solve(&(&e * &xu - &rhs));
            (&xu - &y * &lambda, lambda)
        };

        let mut x = DVector::zeros(q.len());
        for (bi, &si) in free.iter().enumerate() {
            x.fixed_rows_mut::<3>(3 * si).copy_from(&xr.fixed_rows::<3>(3 * bi));
        }
        let grad = p * &x + q;
        let scale = 1.0 + x.amax();
        let tol = 1e-9 * scale;
        let mut changed = false;

        for (r, &(bi, k, _)) in rows.iter().enumerate() {
            if lambda[r] < -1e-12 * scale {
                active[free[bi]].faces[k] = false;
                changed = true;
            }
        }
        for s in 0..ns {
            let (fx, fy, fz) = (x[3 * s], x[3 * s + 1], x[3 * s + 2]);
            if active[s].apex {
                let (gx, gy, gz) = (grad[3 * s], grad[3 * s + 1], grad[3 * s + 2]);
                if gz - mu * (gx.abs() + gy.abs()) < -1e-12 * scale {
                    active[s].apex = false;
                    changed = true;
                }
                continue;
            }
            if fz < -tol {
                active[s] = SlotActive { apex: true, faces: [false; 5] };
                changed = true;
                continue;
            }
            let viol = [fx - mu * fz, -fx - mu * fz, fy - mu * fz, -fy - mu * fz, fz - f_max];
            for k in 0..5 {
                if viol[k] > tol && !active[s].faces[k] {
                    active[s].faces[k] = true;
                    changed = true;
                }
            }
            if active[s].faces[0] && active[s].faces[1] || active[s].faces[2] && active[s].faces[3] {
                active[s] = SlotActive { apex: true, faces: [false; 5] };
            }
        }
        if !changed {
            return Some(x);
        }
    }
    None
}

/// Solves `min 0.5 x'Px + q'x` over the product of friction pyramids.
/// `warm` seeds the iterate; the returned point is always exactly feasible.
pub fn solve_qp(problem: &QpProblem, warm: Option<&DVector<f64>>, params: &SolverParams) -> QpSolution {
    let n = problem.dim();
    let (mu, f_max) = (problem.mu, problem.f_max);
    if n == 0 {
        return QpSolution {
            x: DVector::zeros(0),
            stats: SolveStats { objective: problem.constant, ..SolveStats::default() },
            converged: true,
        };
    }

    let dmax = problem.p.diagonal().amax().max(f64::MIN_POSITIVE);
    let scale = 1.0 / dmax;
    let p = &problem.p * scale;
    let q = &problem.q * scale;

    let mut z = DVector::zeros(n);
    match warm {
        Some(w) if w.len() == n => project_all(w, mu, f_max, &mut z),
        _ => {}
    }

    let finish = |x: DVector<f64>, iterations: usize, polished: bool, history: Vec<IterationLog>| {
        let mut xf = DVector::zeros(n);
        project_all(&x, mu, f_max, &mut xf);
        let kkt_residual = natural_residual(&p, &q, &xf, mu, f_max);
        let stats = SolveStats {
            iterations,
            kkt_residual,
            objective: problem.objective(&xf),
            polished,
            history,
        };
        let converged = kkt_residual <= params.tol;
        QpSolution { x: xf, stats, converged }
    };

    let mut history = Vec::new();
    let mut incumbent = f64::INFINITY;
    let mut record = |history: &mut Vec<IterationLog>, it: usize, x: &DVector<f64>, res: f64| {
        if params.record_history {
            incumbent = incumbent.min(problem.objective(x));
            history.push(IterationLog { iteration: it, residual: res, objective: incumbent });
        }
    };

    let try_polish = |guess: &DVector<f64>| -> Option<DVector<f64>> {
        let x = polish(&p, &q, mu, f_max, guess)?;
        (natural_residual(&p, &q, &x, mu, f_max) <= params.tol).then_some(x)
    };

    if warm.is_some() {
        if let Some(x) = try_polish(&z) {
            record(&mut history, 0, &x, 0.0);
            return finish(x, 0, true, history);
        }
    }

    let k = &p + DMatrix::identity(n, n) * params.rho;
    let chol = match k.cholesky() {
        Some(c) => c,
        None => return finish(z, 0, false, history),
    };
    let mut u = DVector::zeros(n);
    let mut x;
    let mut z_prev = z.clone();
    let mut proj_in = DVector::zeros(n);
    for it in 1..=params.max_iter.max(1) {
        let rhs = (&z - &u) * params.rho - &q;
        x = chol.solve(&rhs);
        let x_rel = &x * params.relaxation + &z * (1.0 - params.relaxation);
        proj_in.copy_from(&x_rel);
        proj_in += &u;
        std::mem::swap(&mut z_prev, &mut z);
        project_all(&proj_in, mu, f_max, &mut z);
        u += &x_rel - &z;

        let r_prim = (&x - &z).amax();
        let r_dual = params.rho * (&z - &z_prev).amax();
        record(&mut history, it, &z, r_prim.max(r_dual));

        if it % params.polish_every.max(1) == 0 || r_prim.max(r_dual) < params.tol {
            if let Some(xp) = try_polish(&z) {
                record(&mut history, it, &xp, 0.0);
                return finish(xp, it, true, history);
            }
            if natural_residual(&p, &q, &z, mu, f_max) <= params.tol {
                return finish(z, it, false, history);
            }
        }
        if it == params.max_iter {
            return finish(z, it, false, history);
        }
    }
    finish(z, params.max_iter, false, history)
}
