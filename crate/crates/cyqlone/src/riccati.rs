//! Modified Riccati recursion over one group of `v` block columns, one
//! column per lane.
//!
//! Stage `j` of the padded problem owns the variables `(u^j, x̂^j)` where
//! `x̂^j = x^j` for `j ≥ 1` and `x̂^0` is the terminal state. Position `k` of
//! column `c` holds stage `partition.stage(c, k)`.
//!
//! Per position the `stack` block stores
//!
//! ```text
//! [ L_R   0  ]   rows 0..nu
//! [ L_S  L_Q ]   rows nu..nux
//! [ L_B  Acl ]   rows nux..nux+nx
//! ```
//!
//! where `L_H = [L_R 0; L_S L_Q]` is the Cholesky factor of the stage Hessian
//! plus the cost-to-go of the next stage in the column.

use crate::blocks::{zero_upper, Blocks};
use crate::partition::Partition;
use batla::kernels::{gemm, potrf, syrk, trmm, trsm, trsyrk, trtri};
use batla::{Mat, Side, Tri, TrsmMode};
use ocp_model::EqOCP;

#[derive(Clone, Debug)]
pub(crate) struct Group {
    pub v: usize,
    /// Column of lane 0.
    pub first: usize,
    /// Number of lanes holding real columns.
    pub active: usize,
    pub n: usize,
    pub nx: usize,
    pub nu: usize,
    pub h: Blocks,
    pub ba: Blocks,
    /// `[B A]ᵀ`, kept for the triangular product with the next cost-to-go factor.
    pub bat: Blocks,
    pub stack: Blocks,
    pub la: Blocks,
    /// `L_Q^{-T}` of position 0, upper triangular.
    pub t: Blocks,
    pub mfwd: Blocks,
    pub mbwd: Blocks,
    pub kc: Blocks,
    pub riccati_flops: u64,
    pub schur_flops: u64,
    pub failure: Option<(usize, usize)>,
}

/// Per-group right-hand side, already negated.
#[derive(Clone, Debug)]
pub(crate) struct GroupRhs {
    pub gux: Blocks,
    pub glam: Blocks,
    pub gmu: Blocks,
}

#[derive(Clone, Debug)]
pub(crate) struct GroupFwd {
    pub aux: Blocks,
    pub alam: Blocks,
    pub sf: Blocks,
    pub sb: Blocks,
}

#[derive(Clone, Debug)]
pub(crate) struct GroupSol {
    pub wux: Blocks,
    pub wlam: Blocks,
}

pub(crate) fn axpy(mut y: batla::MatMut<'_, f64>, x: batla::MatRef<'_, f64>, a: f64) {
    for c in 0..y.cols() {
        for r in 0..y.rows() {
            for l in 0..y.lanes() {
                let z = y.at(r, c, l) + a * x.at(r, c, l);
                y.set(r, c, l, z);
            }
        }
    }
}

/// Stage Hessian `[R S; Sᵀ Q]` and `[B A]` as seen by the recursion.
pub(crate) fn stage_blocks(p: &EqOCP, j: usize) -> (Mat<f64>, Mat<f64>) {
    let (nx, nu) = (p.nx, p.nu);
    let st = &p.stages[j];
    let nux = nx + nu;
    let mut h = Mat::zeros(nux, nux);
    let mut ba = Mat::zeros(nx, nux);
    for c in 0..nu {
        for r in 0..nu {
            h[(r, c)] = st.r[(r, c)];
        }
        for r in 0..nx {
            ba[(r, c)] = st.b[(r, c)];
        }
    }
    if j == 0 {
        for c in 0..nx {
            for r in 0..nx {
                h[(nu + r, nu + c)] = p.qn[(r, c)];
            }
        }
    } else {
        for c in 0..nx {
            for r in 0..nu {
                h[(r, nu + c)] = st.s[(r, c)];
                h[(nu + c, r)] = st.s[(r, c)];
            }
            for r in 0..nx {
                h[(nu + r, nu + c)] = st.q[(r, c)];
                ba[(r, nu + c)] = st.a[(r, c)];
            }
        }
    }
    (h, ba)
}

impl Group {
    pub fn new(p: &EqOCP, part: &Partition, g: usize, v: usize) -> Self {
        let (nx, nu, n) = (p.nx, p.nu, part.n);
        let nux = nx + nu;
        let first = g * v;
        let active = part.p.saturating_sub(first).min(v);
        let mut grp = Group {
            v,
            first,
            active,
            n,
            nx,
            nu,
            h: Blocks::new(n, nux, nux, v),
            ba: Blocks::new(n, nx, nux, v),
            bat: Blocks::new(n, nux, nx, v),
            stack: Blocks::new(n, nux + nx, nux, v),
            la: Blocks::new(1, nx, nx, v),
            t: Blocks::new(1, nx, nx, v),
            mfwd: Blocks::new(1, nx, nx, v),
            mbwd: Blocks::new(1, nx, nx, v),
            kc: Blocks::new(1, nx, nx, v),
            riccati_flops: 0,
            schur_flops: 0,
            failure: None,
        };
        grp.load(p, part);
        grp
    }

    /// Reloads the stage data of all lanes; dummy lanes get `H = I`, `BA = 0`.
    pub fn load(&mut self, p: &EqOCP, part: &Partition) {
        let nux = self.nx + self.nu;
        for lane in 0..self.v {
            for k in 0..self.n {
                if lane < self.active {
                    let (h, ba) = stage_blocks(p, part.stage(self.first + lane, k));
                    self.h.set_lane(k, lane, &h);
                    self.ba.set_lane(k, lane, &ba);
                    self.bat.set_lane(k, lane, &ba.transpose());
                } else {
                    self.h.set_lane(k, lane, &Mat::identity(nux));
                    self.ba.set_lane(k, lane, &Mat::zeros(self.nx, nux));
                    self.bat.set_lane(k, lane, &Mat::zeros(nux, self.nx));
                }
            }
        }
    }

    /// Modified Riccati recursion from the last position to the first.
    pub fn factor(&mut self) -> Result<(), (usize, usize)> {
        let (nx, nu, v) = (self.nx, self.nu, self.v);
        let nux = nx + nu;
        let mut vt = Blocks::new(1, nux, nx, v);
        for k in (0..self.n).rev() {
            let (cur, next) = self.stack.pair(k);
            let (mut top, mut bot) = cur.split_rows(nux);
            top.copy_from(self.h.at(k));
            match next {
                Some(nb) => {
                    let lq1 = nb.sub(nu, nu, nx, nx);
                    let acl1 = nb.sub(nux, nu, nx, nx);
                    trmm(vt.at_mut(0), self.bat.at(k), lq1, Side::Right, Tri::Lower, false, 1.0);
                    syrk(top.rb_mut(), vt.at(0), 1.0);
                    bot.fill(0.0);
                    gemm(bot.rb_mut(), acl1, false, self.ba.at(k), false, 1.0);
                }
                None => bot.copy_from(self.ba.at(k)),
            }
            potrf(top.rb_mut(), None).map_err(|f| (f.lane, k))?;
            zero_upper(top.rb_mut());
            let (mut lb, mut acl) = bot.split_cols(nu);
            let lh = top.rb();
            trsm(TrsmMode::RightLowerTrans, lh.sub(0, 0, nu, nu), lb.rb_mut()).map_err(|f| (f.lane, k))?;
            gemm(acl.rb_mut(), lb.rb(), false, lh.sub(nu, 0, nx, nu), true, -1.0);
        }
        self.finish_head().map_err(|lane| (lane, 0))
    }

    /// `L_A = Acl_0 L_Q0^{-T}` and `T = L_Q0^{-T}`.
    pub fn finish_head(&mut self) -> Result<(), usize> {
        let (nx, nu) = (self.nx, self.nu);
        let nux = nx + nu;
        let s0 = self.stack.at(0);
        let lq0 = s0.sub(nu, nu, nx, nx);
        let mut la = self.la.at_mut(0);
        la.copy_from(s0.sub(nux, nu, nx, nx));
        trsm(TrsmMode::RightLowerTrans, lq0, la).map_err(|f| f.lane)?;
        self.refresh_t()
    }

    pub fn refresh_t(&mut self) -> Result<(), usize> {
        let (nx, nu, v) = (self.nx, self.nu, self.v);
        let s0 = self.stack.at(0);
        let mut inv = Blocks::new(1, nx, nx, v);
        trtri(s0.sub(nu, nu, nx, nx), inv.at_mut(0)).map_err(|f| f.lane)?;
        self.t.at_mut(0).copy_from_transposed(inv.at(0));
        Ok(())
    }

    /// Schur contributions: `Mfwd = Σ L_B L_Bᵀ + L_A L_Aᵀ`, `Mbwd = T Tᵀ`
    /// and the coupling `Kc = −L_A Tᵀ` (lower triangles for the symmetric ones).
    pub fn compute_schur(&mut self) {
        let (nx, nu, nux) = (self.nx, self.nu, self.nx + self.nu);
        self.mbwd.at_mut(0).fill(0.0);
        trsyrk(self.t.at(0), self.mbwd.at_mut(0));
        trmm(self.kc.at_mut(0), self.la.at(0), self.t.at(0), Side::Right, Tri::Upper, true, -1.0);
        let mut mf = self.mfwd.at_mut(0);
        mf.fill(0.0);
        for k in 0..self.n {
            syrk(mf.rb_mut(), self.stack.at(k).sub(nux, 0, nx, nu), 1.0);
        }
        syrk(mf, self.la.at(0), 1.0);
    }

    pub fn lh(&self, k: usize) -> batla::MatRef<'_, f64> {
        let nux = self.nx + self.nu;
        self.stack.at(k).sub(0, 0, nux, nux)
    }

    pub fn lq(&self, k: usize) -> batla::MatRef<'_, f64> {
        self.stack.at(k).sub(self.nu, self.nu, self.nx, self.nx)
    }

    pub fn lb(&self, k: usize) -> batla::MatRef<'_, f64> {
        self.stack.at(k).sub(self.nx + self.nu, 0, self.nx, self.nu)
    }

    pub fn acl(&self, k: usize) -> batla::MatRef<'_, f64> {
        let nux = self.nx + self.nu;
        self.stack.at(k).sub(nux, self.nu, self.nx, self.nx)
    }

    /// Forward substitution within the columns and their Schur right-hand side
    /// contributions `s_f` (to row `c`) and `s_b` (to row `c − 1`).
    pub fn forward(&self, rhs: &GroupRhs) -> GroupFwd {
        let (n, nx, nu, v) = (self.n, self.nx, self.nu, self.v);
        let nux = nx + nu;
        let mut aux = Blocks::new(n, nux, 1, v);
        let mut alam = Blocks::new(n, nx, 1, v);
        let mut tmp = Blocks::new(1, nx, 1, v);
        aux.at_mut(n - 1).copy_from(rhs.gux.at(n - 1));
        trsm(TrsmMode::LeftLower, self.lh(n - 1), aux.at_mut(n - 1)).expect("nonsingular factor");
        for k in (1..n).rev() {
            let lq = self.lq(k);
            trmm(alam.at_mut(k), rhs.glam.at(k), lq, Side::Left, Tri::Lower, true, 1.0);
            axpy(alam.at_mut(k), aux.at(k).sub(nu, 0, nx, 1), 1.0);
            trmm(tmp.at_mut(0), alam.at(k), lq, Side::Left, Tri::Lower, false, 1.0);
            let mut a = aux.at_mut(k - 1);
            a.copy_from(rhs.gux.at(k - 1));
            gemm(a.rb_mut(), self.ba.at(k - 1), true, tmp.at(0), false, 1.0);
            trsm(TrsmMode::LeftLower, self.lh(k - 1), a).expect("nonsingular factor");
        }
        let mut sf = Blocks::new(1, nx, 1, v);
        let mut sb = Blocks::new(1, nx, 1, v);
        {
            let mut s = sf.at_mut(0);
            for k in 0..n {
                gemm(s.rb_mut(), self.lb(k), false, aux.at(k).sub(0, 0, nu, 1), false, 1.0);
            }
            for k in 1..n {
                gemm(s.rb_mut(), self.acl(k), false, rhs.glam.at(k), false, -1.0);
            }
            gemm(s, self.la.at(0), false, aux.at(0).sub(nu, 0, nx, 1), false, 1.0);
        }
        trmm(sb.at_mut(0), aux.at(0).sub(nu, 0, nx, 1), self.t.at(0), Side::Left, Tri::Upper, false, -1.0);
        GroupFwd { aux, alam, sf, sb }
    }

    /// Back substitution given the boundary multipliers `μ_c` and `μ_{c−1}`.
    pub fn backward(&self, fwd: &GroupFwd, mu: &Blocks, mu_prev: &Blocks) -> GroupSol {
        let (n, nx, nu, v) = (self.n, self.nx, self.nu, self.v);
        let nux = nx + nu;
        let mut wux = Blocks::new(n, nux, 1, v);
        let mut wlam = Blocks::new(n, nx, 1, v);
        let mut tmp = Blocks::new(1, nx, 1, v);
        let mut y = Blocks::new(1, nx, 1, v);
        let mu0 = mu.at(0);
        {
            let mut z = wux.at_mut(0);
            z.copy_from(fwd.aux.at(0));
            let (mut zu, mut zx) = z.rb_mut().split_rows(nu);
            gemm(zu.rb_mut(), self.lb(0), true, mu0, false, -1.0);
            gemm(zx.rb_mut(), self.la.at(0), true, mu0, false, -1.0);
            tmp.at_mut(0).copy_from(mu_prev.at(0));
            trsm(TrsmMode::LeftLower, self.lq(0), tmp.at_mut(0)).expect("nonsingular factor");
            axpy(zx, tmp.at(0), 1.0);
            trsm(TrsmMode::LeftLowerTrans, self.lh(0), z).expect("nonsingular factor");
        }
        for k in 1..n {
            y.at_mut(0).fill(0.0);
            gemm(y.at_mut(0), self.ba.at(k - 1), false, wux.at(k - 1), false, 1.0);
            let lq = self.lq(k);
            // d = L_Qᵀ y − a_λ
            trmm(tmp.at_mut(0), y.at(0), lq, Side::Left, Tri::Lower, true, 1.0);
            axpy(tmp.at_mut(0), fwd.alam.at(k), -1.0);
            let mut wl = wlam.at_mut(k);
            trmm(wl.rb_mut(), tmp.at(0), lq, Side::Left, Tri::Lower, false, 1.0);
            gemm(wl, self.acl(k), true, mu0, false, 1.0);
            let mut z = wux.at_mut(k);
            z.copy_from(fwd.aux.at(k));
            let (mut zu, zx) = z.rb_mut().split_rows(nu);
            gemm(zu.rb_mut(), self.lb(k), true, mu0, false, -1.0);
            axpy(zx, tmp.at(0), 1.0);
            trsm(TrsmMode::LeftLowerTrans, self.lh(k), z).expect("nonsingular factor");
        }
        GroupSol { wux, wlam }
    }
}
