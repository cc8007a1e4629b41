use crate::{inf_norm, Matrix, OcpError, Vector};

/// Data of stage `j < N`: dynamics `(A, B, f)` and cost `(R, S, Q, r, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EqStage {
    pub a: Matrix,
    pub b: Matrix,
    pub f: Vector,
    pub r: Matrix,
    pub s: Matrix,
    pub q: Matrix,
    pub r_lin: Vector,
    pub q_lin: Vector,
}

/// Equality constrained optimal control problem with identity `E_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct EqOCP {
    pub nx: usize,
    pub nu: usize,
    pub stages: Vec<EqStage>,
    pub qn: Matrix,
    pub qn_lin: Vector,
    pub x_init: Vector,
}

/// Right-hand side of the KKT system. `q` has `N + 1` entries; `q[0]` is
/// carried along but never enters the system because `x^0` is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct KktRhs {
    pub r: Vec<Vector>,
    pub q: Vec<Vector>,
    pub f: Vec<Vector>,
    pub x_init: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EqSolution {
    pub u: Vec<Vector>,
    /// `N + 1` states, `x[0]` equal to the initial state.
    pub x: Vec<Vector>,
    pub lam: Vec<Vector>,
}

/// Infinity norms of the residual groups together with the largest term
/// magnitude that entered them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EqResidual {
    pub stat_u: f64,
    pub stat_x: f64,
    pub terminal: f64,
    pub dynamics: f64,
    pub init: f64,
    pub scale: f64,
}

impl EqResidual {
    pub fn max_abs(&self) -> f64 {
        self.stat_u.max(self.stat_x).max(self.terminal).max(self.dynamics).max(self.init)
    }

    pub fn relative(&self) -> f64 {
        self.max_abs() / self.scale.max(1.0)
    }
}

impl EqStage {
    pub fn zeros(nx: usize, nu: usize) -> Self {
        EqStage {
            a: Matrix::zeros(nx, nx),
            b: Matrix::zeros(nx, nu),
            f: Vector::zeros(nx),
            r: Matrix::zeros(nu, nu),
            s: Matrix::zeros(nu, nx),
            q: Matrix::zeros(nx, nx),
            r_lin: Vector::zeros(nu),
            q_lin: Vector::zeros(nx),
        }
    }

    /// Stage Hessian `[[R, S], [Sᵀ, Q]]`.
    pub fn hessian(&self) -> Matrix {
        let (nu, nx) = self.s.shape();
        let mut h = Matrix::zeros(nu + nx, nu + nx);
        h.view_mut((0, 0), (nu, nu)).copy_from(&self.r);
        h.view_mut((0, nu), (nu, nx)).copy_from(&self.s);
        h.view_mut((nu, 0), (nx, nu)).copy_from(&self.s.transpose());
        h.view_mut((nu, nu), (nx, nx)).copy_from(&self.q);
        h
    }
}

impl EqOCP {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Problem with identity costs, zero dynamics and zero data.
    pub fn identity(nx: usize, nu: usize, n: usize) -> Self {
        let mut st = EqStage::zeros(nx, nu);
        st.r = Matrix::identity(nu, nu);
        st.q = Matrix::identity(nx, nx);
        EqOCP {
            nx,
            nu,
            stages: vec![st; n],
            qn: Matrix::identity(nx, nx),
            qn_lin: Vector::zeros(nx),
            x_init: Vector::zeros(nx),
        }
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        let (nx, nu) = (self.nx, self.nu);
        if self.stages.is_empty() {
            return Err(OcpError::Shape("empty horizon".into()));
        }
        let bad = |what: &str, j: usize| Err(OcpError::Shape(format!("{what} of stage {j}")));
        for (j, s) in self.stages.iter().enumerate() {
            if s.a.shape() != (nx, nx) {
                return bad("A", j);
            }
            if s.b.shape() != (nx, nu) {
                return bad("B", j);
            }
            if s.r.shape() != (nu, nu) {
                return bad("R", j);
            }
            if s.s.shape() != (nu, nx) {
                return bad("S", j);
            }
            if s.q.shape() != (nx, nx) {
                return bad("Q", j);
            }
            if s.f.len() != nx || s.q_lin.len() != nx || s.r_lin.len() != nu {
                return bad("vector data", j);
            }
        }
        if self.qn.shape() != (nx, nx) || self.qn_lin.len() != nx || self.x_init.len() != nx {
            return Err(OcpError::Shape("terminal data or initial state".into()));
        }
        Ok(())
    }

    pub fn rhs(&self) -> KktRhs {
        let mut q: Vec<Vector> = self.stages.iter().map(|s| s.q_lin.clone()).collect();
        q.push(self.qn_lin.clone());
        KktRhs {
            r: self.stages.iter().map(|s| s.r_lin.clone()).collect(),
            q,
            f: self.stages.iter().map(|s| s.f.clone()).collect(),
            x_init: self.x_init.clone(),
        }
    }

    /// Replaces the linear terms, affine dynamics and initial state.
    pub fn set_rhs(&mut self, rhs: &KktRhs) {
        let n = self.horizon();
        for j in 0..n {
            self.stages[j].r_lin = rhs.r[j].clone();
            self.stages[j].q_lin = rhs.q[j].clone();
            self.stages[j].f = rhs.f[j].clone();
        }
        self.qn_lin = rhs.q[n].clone();
        self.x_init = rhs.x_init.clone();
    }

    /// Quadratic objective at a trajectory.
    pub fn objective(&self, sol: &EqSolution) -> f64 {
        let mut v = 0.0;
        for (j, s) in self.stages.iter().enumerate() {
            let (u, x) = (&sol.u[j], &sol.x[j]);
            v += 0.5 * u.dot(&(&s.r * u)) + u.dot(&(&s.s * x)) + 0.5 * x.dot(&(&s.q * x));
            v += s.r_lin.dot(u) + s.q_lin.dot(x);
        }
        let xn = &sol.x[self.horizon()];
        v + 0.5 * xn.dot(&(&self.qn * xn)) + self.qn_lin.dot(xn)
    }

    /// Dimension of the dense KKT system: all controls, states `x^1..x^N` and multipliers.
    pub fn kkt_dim(&self) -> usize {
        self.horizon() * (2 * self.nx + self.nu)
    }

    pub(crate) fn off_u(&self, j: usize) -> usize {
        j * (self.nx + self.nu)
    }

    /// Offset of `x^j` for `j >= 1`.
    pub(crate) fn off_x(&self, j: usize) -> usize {
        (j - 1) * (self.nx + self.nu) + self.nu
    }

    pub(crate) fn off_lam(&self, j: usize) -> usize {
        self.horizon() * (self.nx + self.nu) + j * self.nx
    }

    /// Stacks a solution in the ordering of [`kkt_matrix_dense`].
    pub fn pack_solution(&self, sol: &EqSolution) -> Vector {
        let mut z = Vector::zeros(self.kkt_dim());
        for j in 0..self.horizon() {
            z.rows_mut(self.off_u(j), self.nu).copy_from(&sol.u[j]);
            z.rows_mut(self.off_x(j + 1), self.nx).copy_from(&sol.x[j + 1]);
            z.rows_mut(self.off_lam(j), self.nx).copy_from(&sol.lam[j]);
        }
        z
    }

    pub fn unpack_solution(&self, z: &Vector, x_init: &Vector) -> EqSolution {
        let n = self.horizon();
        let mut x = vec![x_init.clone()];
        let mut u = Vec::with_capacity(n);
        let mut lam = Vec::with_capacity(n);
        for j in 0..n {
            u.push(z.rows(self.off_u(j), self.nu).into_owned());
            x.push(z.rows(self.off_x(j + 1), self.nx).into_owned());
            lam.push(z.rows(self.off_lam(j), self.nx).into_owned());
        }
        EqSolution { u, x, lam }
    }

    /// Right-hand side of the dense KKT system, with the initial state folded in.
    pub fn kkt_rhs_dense(&self, rhs: &KktRhs) -> Vector {
        let n = self.horizon();
        let mut b = Vector::zeros(self.kkt_dim());
        for j in 0..n {
            let st = &self.stages[j];
            let mut bu = -&rhs.r[j];
            let mut bl = -&rhs.f[j];
            if j == 0 {
                bu -= &st.s * &rhs.x_init;
                bl -= &st.a * &rhs.x_init;
            }
            b.rows_mut(self.off_u(j), self.nu).copy_from(&bu);
            b.rows_mut(self.off_x(j + 1), self.nx).copy_from(&(-&rhs.q[j + 1]));
            b.rows_mut(self.off_lam(j), self.nx).copy_from(&bl);
        }
        b
    }
}

/// Symmetric KKT matrix over `(u^0, x^1, u^1, …, x^N, λ^0, …, λ^{N−1})`.
pub fn kkt_matrix_dense(p: &EqOCP) -> Matrix {
    let (nx, nu, n) = (p.nx, p.nu, p.horizon());
    let mut k = Matrix::zeros(p.kkt_dim(), p.kkt_dim());
    for j in 0..n {
        let st = &p.stages[j];
        let (iu, il) = (p.off_u(j), p.off_lam(j));
        let ix1 = p.off_x(j + 1);
        k.view_mut((iu, iu), (nu, nu)).copy_from(&st.r);
        k.view_mut((il, iu), (nx, nu)).copy_from(&st.b);
        k.view_mut((iu, il), (nu, nx)).copy_from(&st.b.transpose());
        let minus_i = -Matrix::identity(nx, nx);
        k.view_mut((il, ix1), (nx, nx)).copy_from(&minus_i);
        k.view_mut((ix1, il), (nx, nx)).copy_from(&minus_i);
        if j > 0 {
            let ix = p.off_x(j);
            k.view_mut((ix, ix), (nx, nx)).copy_from(&st.q);
            k.view_mut((iu, ix), (nu, nx)).copy_from(&st.s);
            k.view_mut((ix, iu), (nx, nu)).copy_from(&st.s.transpose());
            k.view_mut((il, ix), (nx, nx)).copy_from(&st.a);
            k.view_mut((ix, il), (nx, nx)).copy_from(&st.a.transpose());
        }
    }
    let ixn = p.off_x(n);
    k.view_mut((ixn, ixn), (nx, nx)).copy_from(&p.qn);
    k
}

struct Acc {
    norm: f64,
    scale: f64,
}

impl Acc {
    fn new() -> Self {
        Acc { norm: 0.0, scale: 0.0 }
    }

    fn group(&mut self, terms: &[Vector]) {
        let mut sum = terms[0].clone();
        for t in &terms[1..] {
            sum += t;
        }
        self.norm = self.norm.max(inf_norm(&sum));
        for t in terms {
            self.scale = self.scale.max(inf_norm(t));
        }
    }
}

/// Residuals of the stationarity, dynamics and initial-state equations.
pub fn kkt_residual_eq(p: &EqOCP, rhs: &KktRhs, sol: &EqSolution) -> EqResidual {
    let n = p.horizon();
    let (mut su, mut sx, mut term, mut dy, mut init) = (Acc::new(), Acc::new(), Acc::new(), Acc::new(), Acc::new());
    for j in 0..n {
        let st = &p.stages[j];
        let (u, x, l) = (&sol.u[j], &sol.x[j], &sol.lam[j]);
        su.group(&[&st.r * u, &st.s * x, rhs.r[j].clone(), st.b.transpose() * l]);
        if j > 0 {
            sx.group(&[&st.q * x, st.s.transpose() * u, rhs.q[j].clone(), st.a.transpose() * l, -&sol.lam[j - 1]]);
        }
        dy.group(&[&st.a * x, &st.b * u, rhs.f[j].clone(), -&sol.x[j + 1]]);
    }
    term.group(&[&p.qn * &sol.x[n], rhs.q[n].clone(), -&sol.lam[n - 1]]);
    init.group(&[sol.x[0].clone(), -&rhs.x_init]);
    let scale = [&su, &sx, &term, &dy, &init].iter().fold(0.0_f64, |m, a| m.max(a.scale));
    EqResidual { stat_u: su.norm, stat_x: sx.norm, terminal: term.norm, dynamics: dy.norm, init: init.norm, scale }
}
