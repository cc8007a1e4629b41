use crate::eq::kkt_matrix_dense;
use crate::{EqOCP, EqSolution, KktRhs, Matrix, OcpError, Vector};

/// Assembles the full KKT matrix and solves it with a pivoted LU factorization.
pub fn dense_kkt_oracle(p: &EqOCP, rhs: &KktRhs) -> Result<EqSolution, OcpError> {
    p.validate()?;
    let k = kkt_matrix_dense(p);
    let b = p.kkt_rhs_dense(rhs);
    let z = k.full_piv_lu().solve(&b).ok_or_else(|| OcpError::Singular("KKT matrix".into()))?;
    Ok(p.unpack_solution(&z, &rhs.x_init))
}

fn chol_solve(m: &Matrix, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, OcpError> {
    m.clone().cholesky().ok_or_else(|| OcpError::Singular(what.into()))
}

/// Textbook Riccati recursion on the cost-to-go `½ xᵀ P x + pᵀ x`, followed
/// by a forward simulation. Multipliers are the cost-to-go gradients.
pub fn riccati_oracle(p: &EqOCP, rhs: &KktRhs) -> Result<EqSolution, OcpError> {
    p.validate()?;
    let n = p.horizon();
    let mut pm = vec![Matrix::zeros(0, 0); n + 1];
    let mut pv = vec![Vector::zeros(0); n + 1];
    let mut gain = Vec::with_capacity(n);
    pm[n] = p.qn.clone();
    pv[n] = rhs.q[n].clone();
    for j in (0..n).rev() {
        let st = &p.stages[j];
        let pb = &pm[j + 1] * &st.b;
        let pa = &pm[j + 1] * &st.a;
        let rb = &st.r + st.b.transpose() * &pb;
        let sb = &st.s + st.b.transpose() * &pa;
        let qb = &st.q + st.a.transpose() * &pa;
        let pf = &pm[j + 1] * &rhs.f[j] + &pv[j + 1];
        let rl = &rhs.r[j] + st.b.transpose() * &pf;
        let ql = &rhs.q[j] + st.a.transpose() * &pf;
        let ch = chol_solve(&rb, "Riccati stage Hessian")?;
        let kmat = -ch.solve(&sb);
        let kvec = -ch.solve(&rl);
        let mut pj = &qb + sb.transpose() * &kmat;
        pj = (&pj + pj.transpose()) * 0.5;
        pm[j] = pj;
        pv[j] = &ql + sb.transpose() * &kvec;
        gain.push((kmat, kvec));
    }
    gain.reverse();
    let mut x = vec![rhs.x_init.clone()];
    let mut u = Vec::with_capacity(n);
    let mut lam = Vec::with_capacity(n);
    for j in 0..n {
        let st = &p.stages[j];
        let uj = &gain[j].0 * &x[j] + &gain[j].1;
        let xn = &st.a * &x[j] + &st.b * &uj + &rhs.f[j];
        lam.push(&pm[j + 1] * &xn + &pv[j + 1]);
        u.push(uj);
        x.push(xn);
    }
    Ok(EqSolution { u, x, lam })
}
