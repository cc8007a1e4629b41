use crate::CyqloneError;
use ocp_model::{EqOCP, EqStage, Matrix, Vector};

/// Split of the padded horizon into `p` block columns of `n` stages each.
///
/// Column `c` holds stages `n(c−1)+1 … nc` taken modulo the padded horizon,
/// so column 0 ends with stage 0, whose state slot carries the terminal state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Partition {
    pub horizon: usize,
    pub padded: usize,
    pub p: usize,
    pub n: usize,
}

impl Partition {
    pub fn new(horizon: usize, p: usize) -> Result<Self, CyqloneError> {
        if horizon == 0 {
            return Err(CyqloneError::Options("horizon must be positive".into()));
        }
        if p == 0 || !p.is_power_of_two() {
            return Err(CyqloneError::Options(format!("partition count {p} is not a power of two")));
        }
        let n = horizon.div_ceil(p);
        Ok(Partition { horizon, padded: n * p, p, n })
    }

    /// Stage at position `k` of column `c`.
    pub fn stage(&self, c: usize, k: usize) -> usize {
        (c * self.n + self.padded - self.n + 1 + k) % self.padded
    }

    /// Column and position of stage `j`.
    pub fn locate(&self, j: usize) -> (usize, usize) {
        let t = (j + self.padded + self.n - 1) % self.padded;
        (t / self.n, t % self.n)
    }

    pub fn nu2_table(&self) -> Vec<u32> {
        (0..self.p).map(|i| blocktri::nu2(i, self.p)).collect()
    }
}

/// Extends the horizon to the next multiple of `p` with decoupled stages:
/// identity costs, zero dynamics and zero data. Stage `N` inherits the
/// original terminal cost.
pub fn pad_problem(p: &EqOCP, parts: usize) -> Result<EqOCP, CyqloneError> {
    let part = Partition::new(p.horizon(), parts)?;
    if part.padded == p.horizon() {
        return Ok(p.clone());
    }
    let (nx, nu) = (p.nx, p.nu);
    let mut out = p.clone();
    let mut last = EqStage::zeros(nx, nu);
    last.r = Matrix::identity(nu, nu);
    last.q = p.qn.clone();
    last.q_lin = p.qn_lin.clone();
    out.stages.push(last);
    let mut pad = EqStage::zeros(nx, nu);
    pad.r = Matrix::identity(nu, nu);
    pad.q = Matrix::identity(nx, nx);
    while out.stages.len() < part.padded {
        out.stages.push(pad.clone());
    }
    out.qn = Matrix::identity(nx, nx);
    out.qn_lin = Vector::zeros(nx);
    Ok(out)
}
