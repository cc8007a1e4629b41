//! Factorization updates for low-rank changes of the stage Hessians,
//! `H_j ← H_j + [D_j C_j]ᵀ ΔΣ_j [D_j C_j]`.

use crate::blocks::Blocks;
use crate::factor::CyqloneFactor;
use crate::partition::Partition;
use crate::riccati::{axpy, Group};
use crate::schur_update::{update_cr, SchurPath, XiGroup};
use crate::CyqloneError;
use batla::kernels::gemm;
use batla::{flops, hyh_apply, hyh_transform, par, Mat};
use ocp_model::{EqOCP, Matrix, Vector};

/// Diagonal change `ΔΣ` of the penalty on the rows `C x + D u` of one stage.
/// For the terminal stage `d` is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct StageUpdate {
    pub c: Matrix,
    pub d: Matrix,
    pub delta: Vector,
}

impl StageUpdate {
    pub fn empty(nx: usize, nu: usize) -> Self {
        StageUpdate { c: Matrix::zeros(0, nx), d: Matrix::zeros(0, nu), delta: Vector::zeros(0) }
    }

    pub fn rank(&self) -> usize {
        self.delta.iter().filter(|d| **d != 0.0).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateReport {
    pub updated_columns: usize,
    pub refactored_columns: usize,
    pub schur: SchurPath,
    /// Largest accumulated rank over all columns.
    pub max_rank: usize,
}

/// Low-rank term `Υ diag(s) Υᵀ` of one internal stage, `Υ` of size `nux × m`.
#[derive(Clone, Debug)]
pub(crate) struct LowRank {
    pub y: Mat<f64>,
    pub s: Vec<f64>,
}

pub(crate) struct LaneXi {
    pub fwd: Mat<f64>,
    pub bwd: Mat<f64>,
    pub s: Vec<f64>,
}

pub(crate) enum GroupOutcome {
    Unchanged,
    Updated(Vec<LaneXi>),
    Refactored,
    Failed((usize, usize)),
}

struct Carry {
    ux: Blocks,
    lam: Blocks,
    s: Vec<f64>,
}

impl Group {
    fn lane_rank(&self, ups: &[Vec<Option<LowRank>>], lane: usize) -> usize {
        ups.iter().map(|row| row[lane].as_ref().map_or(0, |u| u.s.len())).sum()
    }

    fn refactor_outcome(&mut self) -> GroupOutcome {
        let (res, fr) = flops::measure(|| self.factor());
        self.riccati_flops = fr;
        if let Err(e) = res {
            self.failure = Some(e);
            return GroupOutcome::Failed(e);
        }
        let ((), fs) = flops::measure(|| self.compute_schur());
        self.schur_flops = fs;
        GroupOutcome::Refactored
    }

    /// Updates the column factors after the stage data has been modified.
    /// `ups[k][lane]` is the change at position `k`.
    pub(crate) fn update(&mut self, p: &EqOCP, part: &Partition, ups: &[Vec<Option<LowRank>>], max_rank: f64) -> GroupOutcome {
        let worst = (0..self.active).map(|l| self.lane_rank(ups, l)).max().unwrap_or(0);
        if worst == 0 {
            return GroupOutcome::Unchanged;
        }
        self.load(p, part);
        if worst as f64 >= max_rank {
            return self.refactor_outcome();
        }
        let backup = (self.stack.clone(), self.la.clone(), self.t.clone());
        let (res, fr) = flops::measure(|| self.update_hyh(ups));
        match res {
            Some(xi) => {
                self.riccati_flops = fr;
                let ((), fs) = flops::measure(|| self.compute_schur());
                self.schur_flops = fs;
                GroupOutcome::Updated(xi)
            }
            None => {
                (self.stack, self.la, self.t) = backup;
                self.refactor_outcome()
            }
        }
    }

    fn update_hyh(&mut self, ups: &[Vec<Option<LowRank>>]) -> Option<Vec<LaneXi>> {
        let (nx, nu, v, n) = (self.nx, self.nu, self.v, self.n);
        let nux = nx + nu;
        let mut carry: Option<Carry> = None;
        let mut xi = Vec::new();
        for k in (0..n).rev() {
            let mc = carry.as_ref().map_or(0, |c| c.s.len() / v);
            let mn = (0..v).map(|l| ups[k][l].as_ref().map_or(0, |u| u.s.len())).max().unwrap_or(0);
            let m = mc + mn;
            if m == 0 {
                continue;
            }
            let mut g = Blocks::new(1, nux + nx, m, v);
            let mut s = vec![1.0; m * v];
            if let Some(cr) = carry.take() {
                let mut gm = g.at_mut(0);
                gm.rb_mut().sub_mut(0, 0, nux, mc).copy_from(cr.ux.at(0));
                gm.sub_mut(nux, 0, nx, mc).copy_from(cr.lam.at(0));
                s[..mc * v].copy_from_slice(&cr.s);
            }
            for lane in 0..v {
                if let Some(u) = &ups[k][lane] {
                    let mut gm = g.at_mut(0);
                    for q in 0..u.s.len() {
                        for r in 0..nux {
                            gm.set(r, mc + q, lane, u.y[(r, q)]);
                        }
                        s[(mc + q) * v + lane] = u.s[q];
                    }
                }
            }
            hyh_transform(self.stack.at_mut(k).sub_mut(0, 0, nux + nx, nu), g.at_mut(0), None, &s).ok()?;
            // Acl += Φλ S Φxᵀ
            let mut ys = Blocks::new(1, nx, m, v);
            {
                let gx = g.at(0).sub(nu, 0, nx, m);
                let mut y = ys.at_mut(0);
                for q in 0..m {
                    for r in 0..nx {
                        for l in 0..v {
                            y.set(r, q, l, gx.at(r, q, l) * s[q * v + l]);
                        }
                    }
                }
            }
            gemm(self.stack.at_mut(k).sub_mut(nux, nu, nx, nx), g.at(0).sub(nux, 0, nx, m), false, ys.at(0), true, 1.0);
            if k > 0 {
                let mut ux = Blocks::new(1, nux, m, v);
                gemm(ux.at_mut(0), self.ba.at(k - 1), true, g.at(0).sub(nu, 0, nx, m), false, 1.0);
                let mut lam = Blocks::new(1, nx, m, v);
                lam.at_mut(0).copy_from(g.at(0).sub(nux, 0, nx, m));
                hyh_transform(self.stack.at_mut(k).sub_mut(nu, nu, nx, nx), g.at_mut(0).sub_mut(nu, 0, nx, m), None, &s)
                    .ok()?;
                carry = Some(Carry { ux, lam, s });
            } else {
                let h = hyh_transform(self.stack.at_mut(0).sub_mut(nu, nu, nx, nx), g.at_mut(0).sub_mut(nu, 0, nx, m), None, &s)
                    .ok()?;
                let mut tl = Blocks::new(1, 2 * nx, nx, v);
                let mut tg = Blocks::new(1, 2 * nx, m, v);
                tl.at_mut(0).sub_mut(0, 0, nx, nx).copy_from(self.la.at(0));
                axpy(tl.at_mut(0).sub_mut(nx, 0, nx, nx), self.t.at(0), -1.0);
                tg.at_mut(0).sub_mut(0, 0, nx, m).copy_from(g.at(0).sub(nux, 0, nx, m));
                hyh_apply(&h, tl.at_mut(0), tg.at_mut(0));
                self.la.at_mut(0).copy_from(tl.at(0).sub(0, 0, nx, nx));
                self.refresh_t().ok()?;
                for lane in 0..v {
                    let full = tg.lane(0, lane);
                    let keep: Vec<usize> = (0..m).filter(|&q| (0..2 * nx).any(|r| full[(r, q)] != 0.0)).collect();
                    xi.push(LaneXi {
                        fwd: Mat::from_fn(nx, keep.len(), |r, c| full[(r, keep[c])]),
                        bwd: Mat::from_fn(nx, keep.len(), |r, c| full[(nx + r, keep[c])]),
                        s: keep.iter().map(|&q| s[q * v + lane]).collect(),
                    });
                }
            }
        }
        Some(xi)
    }
}

fn low_rank(u: Option<&Matrix>, x: Option<&Matrix>, delta: &Vector, nx: usize, nu: usize) -> Option<LowRank> {
    let idx: Vec<usize> = (0..delta.len()).filter(|&i| delta[i] != 0.0).collect();
    if idx.is_empty() {
        return None;
    }
    let mut y = Mat::zeros(nx + nu, idx.len());
    for (q, &i) in idx.iter().enumerate() {
        let w = delta[i].abs().sqrt();
        if let Some(d) = u {
            for r in 0..nu {
                y[(r, q)] = d[(i, r)] * w;
            }
        }
        if let Some(c) = x {
            for r in 0..nx {
                y[(nu + r, q)] = c[(i, r)] * w;
            }
        }
    }
    Some(LowRank { y, s: idx.iter().map(|&i| delta[i].signum()).collect() })
}

fn join(a: Option<LowRank>, b: Option<LowRank>) -> Option<LowRank> {
    match (a, b) {
        (Some(a), Some(b)) => {
            let y = Mat::from_fn(a.y.rows(), a.y.cols() + b.y.cols(), |r, c| {
                if c < a.y.cols() {
                    a.y[(r, c)]
                } else {
                    b.y[(r, c - a.y.cols())]
                }
            });
            Some(LowRank { y, s: a.s.into_iter().chain(b.s).collect() })
        }
        (a, None) => a,
        (None, b) => b,
    }
}

impl CyqloneFactor {
    /// Absorbs the Hessian changes `[D_j C_j]ᵀ ΔΣ_j [D_j C_j]` for stages
    /// `0..=N` (the last entry is the terminal stage). Columns and Schur
    /// levels whose accumulated rank reaches `refactor_ratio * nx`, or whose
    /// hyperbolic transforms break down, are refactored instead.
    pub fn update(&mut self, mods: &[StageUpdate]) -> Result<UpdateReport, CyqloneError> {
        let (nx, nu) = (self.nx, self.nu);
        let part = self.partition;
        let nh = part.horizon;
        let np = part.padded;
        if mods.len() != nh + 1 {
            return Err(CyqloneError::Shape(format!("expected {} stage updates, got {}", nh + 1, mods.len())));
        }
        for (j, m) in mods.iter().enumerate() {
            let rows = m.delta.len();
            let d_ok = j == nh || (m.d.nrows() == rows && m.d.ncols() == nu);
            if m.c.nrows() != rows || m.c.ncols() != nx || !d_ok || m.delta.iter().any(|x| !x.is_finite()) {
                return Err(CyqloneError::Shape(format!("stage update {j} has inconsistent dimensions")));
            }
        }
        // modified Hessians, rebuilt from the base data and the accumulated
        // penalties so that a row switched off again cancels exactly
        for (j, m) in mods.iter().enumerate() {
            if m.rank() == 0 {
                continue;
            }
            let terminal = j == nh;
            let acc = &mut self.penalties[j];
            for (i, &dl) in m.delta.iter().enumerate() {
                if dl == 0.0 {
                    continue;
                }
                let mut key: Vec<f64> = if terminal { Vec::new() } else { m.d.row(i).iter().copied().collect() };
                key.extend(m.c.row(i).iter());
                match acc.iter_mut().find(|(k, _)| k.iter().zip(&key).all(|(a, b)| a.to_bits() == b.to_bits())) {
                    Some(entry) => entry.1 += dl,
                    None => acc.push((key, dl)),
                }
            }
            acc.retain(|(_, s)| *s != 0.0);
            if terminal {
                let mut q = if nh == np { self.base.qn.clone() } else { self.base.stages[nh].q.clone() };
                for (row, s) in acc.iter() {
                    let c = Vector::from_column_slice(row);
                    q += *s * &c * c.transpose();
                }
                if nh == np {
                    self.problem.qn = q;
                } else {
                    self.problem.stages[nh].q = q;
                }
            } else {
                let (b, st) = (&self.base.stages[j], &mut self.problem.stages[j]);
                (st.r, st.s, st.q) = (b.r.clone(), b.s.clone(), b.q.clone());
                for (row, s) in acc.iter() {
                    let d = Vector::from_column_slice(&row[..nu]);
                    let c = Vector::from_column_slice(&row[nu..]);
                    st.r += *s * &d * d.transpose();
                    st.s += *s * &d * c.transpose();
                    st.q += *s * &c * c.transpose();
                }
            }
        }
        // low-rank terms per internal stage
        let mut per_stage: Vec<Option<LowRank>> = vec![None; np];
        for (j, m) in mods.iter().enumerate().take(nh) {
            let x = if j == 0 { None } else { Some(&m.c) };
            per_stage[j] = low_rank(Some(&m.d), x, &m.delta, nx, nu);
        }
        let term = low_rank(None, Some(&mods[nh].c), &mods[nh].delta, nx, nu);
        let slot = nh % np;
        per_stage[slot] = join(per_stage[slot].take(), term);
        let max_rank_cols = (0..part.p)
            .map(|c| (0..part.n).map(|k| per_stage[part.stage(c, k)].as_ref().map_or(0, |u| u.s.len())).sum::<usize>())
            .max()
            .unwrap_or(0);

        let v = self.options.vlen;
        let threshold = self.options.refactor_ratio * nx as f64;
        let prob = &self.problem;
        let mut work: Vec<(&mut Group, Vec<Vec<Option<LowRank>>>, Option<GroupOutcome>)> = self
            .groups
            .iter_mut()
            .map(|g| {
                let ups = (0..part.n)
                    .map(|k| {
                        (0..v)
                            .map(|lane| if lane < g.active { per_stage[part.stage(g.first + lane, k)].clone() } else { None })
                            .collect()
                    })
                    .collect();
                (g, ups, None)
            })
            .collect();
        let t0 = std::time::Instant::now();
        par::for_each_round_robin(&mut work, self.options.workers, |_, (g, ups, out)| {
            *out = Some(g.update(prob, &part, ups, threshold));
        });
        self.stats.riccati_time = t0.elapsed();
        let outcomes: Vec<GroupOutcome> = work.into_iter().map(|(_, _, o)| o.unwrap()).collect();

        let mut report = UpdateReport { updated_columns: 0, refactored_columns: 0, schur: SchurPath::Unchanged, max_rank: max_rank_cols };
        let mut rebuild = false;
        let mut xi_groups = Vec::new();
        let pp = part.p;
        for (gi, o) in outcomes.into_iter().enumerate() {
            let g = &self.groups[gi];
            match o {
                GroupOutcome::Unchanged => {}
                GroupOutcome::Failed((lane, k)) => {
                    let c = g.first + lane;
                    return Err(CyqloneError::Riccati { column: c, stage: part.stage(c, k) });
                }
                GroupOutcome::Refactored => {
                    rebuild = true;
                    report.refactored_columns += g.active;
                }
                GroupOutcome::Updated(xi) => {
                    report.updated_columns += g.active;
                    for (lane, x) in xi.into_iter().enumerate().take(g.active) {
                        if x.s.is_empty() {
                            continue;
                        }
                        let c = g.first + lane;
                        if c == 0 {
                            xi_groups.push(XiGroup { rows: vec![0], g: vec![x.fwd], sigma: x.s.iter().map(|s| -s).collect() });
                            xi_groups.push(XiGroup { rows: vec![pp - 1], g: vec![x.bwd], sigma: x.s.iter().map(|s| -s).collect() });
                        } else {
                            xi_groups.push(XiGroup { rows: vec![c - 1, c], g: vec![x.bwd, x.fwd], sigma: x.s.iter().map(|s| -s).collect() });
                        }
                    }
                }
            }
        }
        self.collect_group_stats();
        let t1 = std::time::Instant::now();
        if rebuild {
            self.rebuild_schur()?;
            report.schur = SchurPath::Rebuilt;
        } else {
            report.schur = match update_cr(&mut self.schur, xi_groups, threshold) {
                Ok(path) => path,
                // accumulated level data lost definiteness; start over from the columns
                Err(_) => {
                    self.rebuild_schur()?;
                    SchurPath::Rebuilt
                }
            };
        }
        self.stats.schur_time = t1.elapsed();
        Ok(report)
    }
}
