use crate::{inf_norm, EqOCP, EqStage, Matrix, OcpError, Vector};

/// Stage `j < N` of an inequality constrained problem: dynamics, cost and
/// the constraint `bl ≤ C x + D u ≤ bu`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpStage {
    pub a: Matrix,
    pub b: Matrix,
    pub f: Vector,
    pub r: Matrix,
    pub s: Matrix,
    pub q: Matrix,
    pub r_lin: Vector,
    pub q_lin: Vector,
    pub c: Matrix,
    pub d: Matrix,
    pub bl: Vector,
    pub bu: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Terminal {
    pub q: Matrix,
    pub q_lin: Vector,
    pub c: Matrix,
    pub bl: Vector,
    pub bu: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OCPProblem {
    pub nx: usize,
    pub nu: usize,
    pub stages: Vec<QpStage>,
    pub terminal: Terminal,
    pub x_init: Vector,
    /// `E_0 … E_N`; identity when absent.
    pub e: Option<Vec<Matrix>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Failed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QpResidual {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl QpResidual {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub u: Vec<Vector>,
    pub x: Vec<Vector>,
    pub lam: Vec<Vector>,
    /// Constraint multipliers, `N + 1` entries with the terminal one last.
    pub y: Vec<Vector>,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub residual: QpResidual,
}

impl OCPProblem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn ny(&self, j: usize) -> usize {
        if j < self.horizon() {
            self.stages[j].c.nrows()
        } else {
            self.terminal.c.nrows()
        }
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        let (nx, nu) = (self.nx, self.nu);
        if self.stages.is_empty() {
            return Err(OcpError::Shape("empty horizon".into()));
        }
        for (j, s) in self.stages.iter().enumerate() {
            let ny = s.c.nrows();
            let ok = s.a.shape() == (nx, nx)
                && s.b.shape() == (nx, nu)
                && s.r.shape() == (nu, nu)
                && s.s.shape() == (nu, nx)
                && s.q.shape() == (nx, nx)
                && s.f.len() == nx
                && s.r_lin.len() == nu
                && s.q_lin.len() == nx
                && s.c.ncols() == nx
                && s.d.shape() == (ny, nu)
                && s.bl.len() == ny
                && s.bu.len() == ny;
            if !ok {
                return Err(OcpError::Shape(format!("stage {j}")));
            }
            if s.bl.iter().zip(s.bu.iter()).any(|(l, u)| l > u) {
                return Err(OcpError::Config(format!("empty bound interval at stage {j}")));
            }
        }
        let t = &self.terminal;
        let ny = t.c.nrows();
        if t.q.shape() != (nx, nx) || t.q_lin.len() != nx || t.c.ncols() != nx || t.bl.len() != ny || t.bu.len() != ny {
            return Err(OcpError::Shape("terminal stage".into()));
        }
        if t.bl.iter().zip(t.bu.iter()).any(|(l, u)| l > u) {
            return Err(OcpError::Config("empty bound interval at terminal stage".into()));
        }
        if self.x_init.len() != nx {
            return Err(OcpError::Shape("initial state".into()));
        }
        if let Some(e) = &self.e {
            if e.len() != self.horizon() + 1 || e.iter().any(|m| m.shape() != (nx, nx)) {
                return Err(OcpError::Shape("E matrices".into()));
            }
        }
        Ok(())
    }

    /// Eliminates the `E_j` by left-multiplying each dynamics equation with
    /// `E_{j+1}^{-1}` and the initial condition with `E_0^{-1}`.
    pub fn normalize_e(&self) -> Result<OCPProblem, OcpError> {
        self.validate()?;
        let Some(e) = &self.e else { return Ok(self.clone()) };
        let mut out = self.clone();
        out.e = None;
        let lu0 = e[0].clone().lu();
        out.x_init = lu0.solve(&self.x_init).ok_or_else(|| OcpError::Singular("E_0".into()))?;
        for (j, st) in out.stages.iter_mut().enumerate() {
            let lu = e[j + 1].clone().lu();
            let err = || OcpError::Singular(format!("E_{}", j + 1));
            st.a = lu.solve(&st.a).ok_or_else(err)?;
            st.b = lu.solve(&st.b).ok_or_else(err)?;
            st.f = lu.solve(&st.f).ok_or_else(err)?;
        }
        Ok(out)
    }

    /// The problem without inequality constraints.
    pub fn eq_part(&self) -> Result<EqOCP, OcpError> {
        let p = self.normalize_e()?;
        Ok(EqOCP {
            nx: p.nx,
            nu: p.nu,
            stages: p
                .stages
                .iter()
                .map(|s| EqStage {
                    a: s.a.clone(),
                    b: s.b.clone(),
                    f: s.f.clone(),
                    r: s.r.clone(),
                    s: s.s.clone(),
                    q: s.q.clone(),
                    r_lin: s.r_lin.clone(),
                    q_lin: s.q_lin.clone(),
                })
                .collect(),
            qn: p.terminal.q.clone(),
            qn_lin: p.terminal.q_lin.clone(),
            x_init: p.x_init.clone(),
        })
    }

    pub fn objective(&self, u: &[Vector], x: &[Vector]) -> f64 {
        let mut v = 0.0;
        for (j, s) in self.stages.iter().enumerate() {
            let (uj, xj) = (&u[j], &x[j]);
            v += 0.5 * uj.dot(&(&s.r * uj)) + uj.dot(&(&s.s * xj)) + 0.5 * xj.dot(&(&s.q * xj));
            v += s.r_lin.dot(uj) + s.q_lin.dot(xj);
        }
        let xn = &x[self.horizon()];
        v + 0.5 * xn.dot(&(&self.terminal.q * xn)) + self.terminal.q_lin.dot(xn)
    }

    /// Constraint values `C x + D u` per stage, terminal last.
    pub fn constraint_values(&self, u: &[Vector], x: &[Vector]) -> Vec<Vector> {
        let n = self.horizon();
        let mut z: Vec<Vector> = self.stages.iter().enumerate().map(|(j, s)| &s.c * &x[j] + &s.d * &u[j]).collect();
        z.push(&self.terminal.c * &x[n]);
        z
    }

    pub fn bounds(&self, j: usize) -> (&Vector, &Vector) {
        if j < self.horizon() {
            (&self.stages[j].bl, &self.stages[j].bu)
        } else {
            (&self.terminal.bl, &self.terminal.bu)
        }
    }

    fn e(&self, j: usize) -> Option<&Matrix> {
        self.e.as_ref().map(|e| &e[j])
    }
}

fn apply_e(e: Option<&Matrix>, v: &Vector, transpose: bool) -> Vector {
    match (e, transpose) {
        (None, _) => v.clone(),
        (Some(m), false) => m * v,
        (Some(m), true) => m.tr_mul(v),
    }
}

/// Primal feasibility, stationarity and complementarity of a primal-dual
/// point, in the infinity norm. Complementarity uses `min(y⁺, bu − z)` and
/// `min(y⁻, z − bl)` per constraint.
pub fn kkt_residual_qp(p: &OCPProblem, sol: &Solution) -> QpResidual {
    let n = p.horizon();
    let mut primal = inf_norm(&(apply_e(p.e(0), &sol.x[0], false) - &p.x_init));
    let mut dual = 0.0_f64;
    for (j, st) in p.stages.iter().enumerate() {
        let (u, x, l, y) = (&sol.u[j], &sol.x[j], &sol.lam[j], &sol.y[j]);
        let dynres = &st.a * x + &st.b * u + &st.f - apply_e(p.e(j + 1), &sol.x[j + 1], false);
        primal = primal.max(inf_norm(&dynres));
        let gu = &st.r * u + &st.s * x + &st.r_lin + st.b.tr_mul(l) + st.d.tr_mul(y);
        dual = dual.max(inf_norm(&gu));
        if j > 0 {
            let gx = &st.q * x + st.s.tr_mul(u) + &st.q_lin + st.a.tr_mul(l) + st.c.tr_mul(y)
                - apply_e(p.e(j), &sol.lam[j - 1], true);
            dual = dual.max(inf_norm(&gx));
        }
    }
    let t = &p.terminal;
    let gn = &t.q * &sol.x[n] + &t.q_lin + t.c.tr_mul(&sol.y[n]) - apply_e(p.e(n), &sol.lam[n - 1], true);
    dual = dual.max(inf_norm(&gn));
    let z = p.constraint_values(&sol.u, &sol.x);
    let mut comp = 0.0_f64;
    for (j, zj) in z.iter().enumerate() {
        let (bl, bu) = p.bounds(j);
        for i in 0..zj.len() {
            primal = primal.max(bl[i] - zj[i]).max(zj[i] - bu[i]);
            let yi = sol.y[j][i];
            let c = if yi > 0.0 { yi.min(bu[i] - zj[i]) } else { (-yi).min(zj[i] - bl[i]) };
            comp = comp.max(c.abs());
        }
    }
    QpResidual { primal, dual, complementarity: comp }
}
