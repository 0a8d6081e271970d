#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Dense primal-dual interior-point solver for
/// `min 0.5 x'Px + q'x  s.t.  Gx <= h`, used as a reference for the
/// force-planner QP. Infeasible start from `x = 0`, unit slacks and duals.
pub fn interior_point_qp(p: &DMatrix<f64>, q: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    let m = h.len();
    let mut x = DVector::zeros(n);
    let mut s = DVector::from_element(m, 1.0);
    let mut z = DVector::from_element(m, 1.0);
    for _ in 0..200 {
        let mu = s.dot(&z) / m as f64;
        let r_d = p * &x + q + g.transpose() * &z;
        let r_p = g * &x + &s - h;
        if mu < 1e-14 && r_d.amax() < 1e-11 && r_p.amax() < 1e-11 {
            break;
        }
        let sigma = 0.1;
        let r_c = s.component_mul(&z) - DVector::from_element(m, sigma * mu);
        let w = z.component_div(&s);
        let mut lhs = p.clone();
        lhs += g.transpose() * DMatrix::from_diagonal(&w) * g;
        let rhs = -&r_d - g.transpose() * (w.component_mul(&r_p) - r_c.component_div(&s));
        let dx = lhs.lu().solve(&rhs).expect("reduced KKT system is nonsingular");
        let dz = w.component_mul(&(g * &dx + &r_p)) - r_c.component_div(&s);
        let ds = -(&r_c + s.component_mul(&dz)).component_div(&z);
        let mut alpha: f64 = 1.0;
        for i in 0..m {
            if ds[i] < 0.0 {
                alpha = alpha.min(-s[i] / ds[i]);
            }
            if dz[i] < 0.0 {
                alpha = alpha.min(-z[i] / dz[i]);
            }
        }
        let alpha = (0.99 * alpha).min(1.0);
        x += alpha * dx;
        s += alpha * ds;
        z += alpha * dz;
    }
    x
}
