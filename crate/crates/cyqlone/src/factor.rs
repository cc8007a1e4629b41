use crate::blocks::{symmetrize, Blocks};
use crate::partition::{pad_problem, Partition};
use crate::riccati::{Group, GroupRhs};
use crate::{CyqloneError, CyqloneOptions};
use batla::{flops, par, Mat};
use blocktri::{cr_factor, BlockTridiag, CrFactor, CrOptions, TailKind};
use ocp_model::{EqOCP, EqSolution, KktRhs, Vector};
use std::time::{Duration, Instant};

#[derive(Clone, Debug, Default)]
pub struct FactorStats {
    /// Wall time of the column recursions including their Schur contributions.
    pub riccati_time: Duration,
    /// Wall time of the Schur assembly.
    pub schur_time: Duration,
    /// Wall time of the cyclic reduction, tail included.
    pub cr_time: Duration,
    pub tail_time: Duration,
    /// Multiply-adds of each group's recursion.
    pub riccati_flops: Vec<u64>,
    /// Multiply-adds of each group's Schur contribution.
    pub schur_flops: Vec<u64>,
}

/// Factor of the permuted KKT matrix of a (padded) equality constrained OCP.
#[derive(Clone, Debug)]
pub struct CyqloneFactor {
    pub options: CyqloneOptions,
    pub partition: Partition,
    pub nx: usize,
    pub nu: usize,
    /// Padded problem whose Hessians the factor currently represents.
    pub problem: EqOCP,
    /// Padded problem before any update.
    pub(crate) base: EqOCP,
    /// Accumulated penalty per distinct row `[d c]` of stages `0..=N`.
    pub(crate) penalties: Vec<Vec<(Vec<f64>, f64)>>,
    pub(crate) groups: Vec<Group>,
    pub schur: CrFactor<f64>,
    pub stats: FactorStats,
}

/// Factor blocks of one block column, per position `k`.
#[derive(Clone, Debug)]
pub struct ColumnBlocks {
    pub column: usize,
    pub stages: Vec<usize>,
    pub l_r: Vec<Mat<f64>>,
    pub l_s: Vec<Mat<f64>>,
    pub l_q: Vec<Mat<f64>>,
    pub l_b: Vec<Mat<f64>>,
    pub a_cl: Vec<Mat<f64>>,
    pub l_a: Mat<f64>,
    pub t: Mat<f64>,
    /// Contribution to the diagonal block of row `c` (full symmetric).
    pub m_fwd: Mat<f64>,
    /// Contribution to the diagonal block of row `c − 1` (full symmetric).
    pub m_bwd: Mat<f64>,
    /// Coupling between rows `c` and `c − 1`.
    pub k: Mat<f64>,
}

fn column_from_group(g: &Group, part: &Partition, lane: usize) -> ColumnBlocks {
    let (nx, nu) = (g.nx, g.nu);
    let c = g.first + lane;
    let lm = |r: batla::MatRef<'_, f64>| Mat::from_fn(r.rows(), r.cols(), |i, j| r.at(i, j, lane));
    let mut out = ColumnBlocks {
        column: c,
        stages: (0..g.n).map(|k| part.stage(c, k)).collect(),
        l_r: Vec::new(),
        l_s: Vec::new(),
        l_q: Vec::new(),
        l_b: Vec::new(),
        a_cl: Vec::new(),
        l_a: g.la.lane(0, lane),
        t: g.t.lane(0, lane),
        m_fwd: g.mfwd.lane(0, lane),
        m_bwd: g.mbwd.lane(0, lane),
        k: g.kc.lane(0, lane),
    };
    symmetrize(&mut out.m_fwd);
    symmetrize(&mut out.m_bwd);
    for k in 0..g.n {
        let s = g.stack.at(k);
        out.l_r.push(lm(s.sub(0, 0, nu, nu)));
        out.l_s.push(lm(s.sub(nu, 0, nx, nu)));
        out.l_q.push(lm(s.sub(nu, nu, nx, nx)));
        out.l_b.push(lm(s.sub(nx + nu, 0, nx, nu)));
        out.a_cl.push(lm(s.sub(nx + nu, nu, nx, nx)));
    }
    out
}

/// Runs the modified Riccati recursion of column `c` of the padded problem on
/// its own, including its Schur contributions.
pub fn factor_block_column_riccati(p: &EqOCP, part: &Partition, c: usize) -> Result<ColumnBlocks, CyqloneError> {
    if c >= part.p {
        return Err(CyqloneError::Options(format!("column {c} out of range for {} columns", part.p)));
    }
    let padded = if p.horizon() == part.padded { p.clone() } else { pad_problem(p, part.p)? };
    let mut g = Group::new(&padded, part, 0, 1);
    g.first = c;
    g.active = 1;
    g.load(&padded, part);
    g.factor().map_err(|(_, k)| CyqloneError::Riccati { column: c, stage: part.stage(c, k) })?;
    g.compute_schur();
    Ok(column_from_group(&g, part, 0))
}

/// Assembles the block tridiagonal Schur complement from the column contributions.
pub fn compute_schur(cols: &[ColumnBlocks]) -> Result<BlockTridiag<f64>, CyqloneError> {
    let p = cols.len();
    if p == 0 {
        return Err(CyqloneError::Shape("no columns".into()));
    }
    let diag = (0..p)
        .map(|i| blocktri::dense::add(&cols[i].m_fwd, &cols[(i + 1) % p].m_bwd))
        .collect();
    let sub = (1..p).map(|c| cols[c].k.clone()).collect();
    Ok(BlockTridiag::new(diag, sub, false)?)
}

/// Cyclic reduction of the Schur complement.
pub fn factor_schur(m: &BlockTridiag<f64>, tail: TailKind, vlen: usize, workers: usize) -> Result<CrFactor<f64>, CyqloneError> {
    Ok(cr_factor(m, CrOptions { tail, vlen, workers })?)
}

fn riccati_error(g: &Group, part: &Partition, lane: usize, k: usize) -> CyqloneError {
    let c = g.first + lane;
    CyqloneError::Riccati { column: c, stage: part.stage(c, k) }
}

/// Factors the KKT system of `p`, padding the horizon to a multiple of the
/// partition count.
pub fn factor(p: &EqOCP, options: CyqloneOptions) -> Result<CyqloneFactor, CyqloneError> {
    options.validate()?;
    p.validate()?;
    let part = Partition::new(p.horizon(), options.partitions)?;
    let padded = pad_problem(p, options.partitions)?;
    let ngroups = part.p.div_ceil(options.vlen);
    let groups: Vec<Group> = (0..ngroups).map(|g| Group::new(&padded, &part, g, options.vlen)).collect();
    let mut f = CyqloneFactor {
        options,
        partition: part,
        nx: p.nx,
        nu: p.nu,
        base: padded.clone(),
        penalties: vec![Vec::new(); p.horizon() + 1],
        problem: padded,
        groups,
        schur: cr_factor(
            &BlockTridiag::new(vec![Mat::identity(p.nx)], vec![], false)?,
            CrOptions::default(),
        )?,
        stats: FactorStats::default(),
    };
    f.refactor_groups(None)?;
    f.rebuild_schur()?;
    Ok(f)
}

impl CyqloneFactor {
    /// Reloads and refactors the selected groups (all if `None`) in parallel.
    pub(crate) fn refactor_groups(&mut self, which: Option<&[bool]>) -> Result<(), CyqloneError> {
        let t0 = Instant::now();
        let part = self.partition;
        let prob = &self.problem;
        par::for_each_round_robin(&mut self.groups, self.options.workers, |i, g| {
            if which.is_some_and(|w| !w[i]) {
                return;
            }
            g.load(prob, &part);
            let (res, fr) = flops::measure(|| g.factor());
            g.riccati_flops = fr;
            g.failure = res.err();
            if g.failure.is_none() {
                let ((), fs) = flops::measure(|| g.compute_schur());
                g.schur_flops = fs;
            }
        });
        self.stats.riccati_time = t0.elapsed();
        self.collect_group_stats();
        for g in &self.groups {
            if let Some((lane, k)) = g.failure {
                return Err(riccati_error(g, &part, lane, k));
            }
        }
        Ok(())
    }

    pub(crate) fn collect_group_stats(&mut self) {
        self.stats.riccati_flops = self.groups.iter().map(|g| g.riccati_flops).collect();
        self.stats.schur_flops = self.groups.iter().map(|g| g.schur_flops).collect();
    }

    pub(crate) fn rebuild_schur(&mut self) -> Result<(), CyqloneError> {
        let t0 = Instant::now();
        let m = self.schur_system();
        self.stats.schur_time = t0.elapsed();
        let t1 = Instant::now();
        self.schur = factor_schur(&m, self.options.tail, self.options.vlen, self.options.workers)?;
        self.stats.cr_time = t1.elapsed();
        self.stats.tail_time = self.schur.tail_time;
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.partition.horizon
    }

    /// Factor blocks of column `c`.
    pub fn column_blocks(&self, c: usize) -> ColumnBlocks {
        let v = self.options.vlen;
        column_from_group(&self.groups[c / v], &self.partition, c % v)
    }

    /// Assembled Schur complement of the current factor.
    pub fn schur_system(&self) -> BlockTridiag<f64> {
        let cols: Vec<ColumnBlocks> = (0..self.partition.p).map(|c| self.column_blocks(c)).collect();
        compute_schur(&cols).expect("columns are consistent")
    }

    /// Multiply-adds along the longest chain of dependent tasks: the slowest
    /// group followed by the cyclic reduction.
    pub fn critical_path_flops(&self) -> u64 {
        let col = self.groups.iter().map(|g| g.riccati_flops + g.schur_flops).max().unwrap_or(0);
        col + self.schur.critical_path_flops()
    }

    /// Internal right-hand side per padded stage: `(r̃, q̂, f̃)` with the
    /// initial state folded into stage 0 and `q̂^0` the terminal gradient.
    fn padded_rhs(&self, rhs: &KktRhs) -> Result<(Vec<Vector>, Vec<Vector>, Vec<Vector>), CyqloneError> {
        let (nx, nu) = (self.nx, self.nu);
        let n = self.horizon();
        let np = self.partition.padded;
        let ok = rhs.r.len() == n
            && rhs.f.len() == n
            && rhs.q.len() == n + 1
            && rhs.x_init.len() == nx
            && rhs.r.iter().all(|v| v.len() == nu)
            && rhs.q.iter().chain(&rhs.f).all(|v| v.len() == nx);
        if !ok {
            return Err(CyqloneError::Shape(format!("right-hand side does not match horizon {n}, nx {nx}, nu {nu}")));
        }
        let mut r = vec![Vector::zeros(nu); np];
        let mut q = vec![Vector::zeros(nx); np];
        let mut f = vec![Vector::zeros(nx); np];
        for j in 0..n {
            r[j] = rhs.r[j].clone();
            f[j] = rhs.f[j].clone();
            if j > 0 {
                q[j] = rhs.q[j].clone();
            }
        }
        q[n % np] = rhs.q[n].clone();
        let s0 = &self.problem.stages[0];
        r[0] += &s0.s * &rhs.x_init;
        f[0] += &s0.a * &rhs.x_init;
        Ok((r, q, f))
    }

    /// Solves the KKT system for the given gradients, dynamics offsets and
    /// initial state.
    pub fn solve(&self, rhs: &KktRhs) -> Result<EqSolution, CyqloneError> {
        let (nx, nu) = (self.nx, self.nu);
        let nux = nx + nu;
        let part = self.partition;
        let (n, np, pp) = (part.n, part.padded, part.p);
        let v = self.options.vlen;
        let (r, q, f) = self.padded_rhs(rhs)?;

        let mut rhs_g: Vec<GroupRhs> = self
            .groups
            .iter()
            .map(|g| {
                let mut gr =
                    GroupRhs { gux: Blocks::new(n, nux, 1, v), glam: Blocks::new(n, nx, 1, v), gmu: Blocks::new(1, nx, 1, v) };
                for lane in 0..g.active {
                    let c = g.first + lane;
                    for k in 0..n {
                        let j = part.stage(c, k);
                        let mut gux = Mat::zeros(nux, 1);
                        for i in 0..nu {
                            gux[(i, 0)] = -r[j][i];
                        }
                        for i in 0..nx {
                            gux[(nu + i, 0)] = -q[j][i];
                        }
                        gr.gux.set_lane(k, lane, &gux);
                        if k > 0 {
                            let d = (j + np - 1) % np;
                            gr.glam.set_lane(k, lane, &Mat::from_fn(nx, 1, |i, _| -f[d][i]));
                        }
                    }
                    let jl = part.stage(c, n - 1);
                    gr.gmu.set_lane(0, lane, &Mat::from_fn(nx, 1, |i, _| -f[jl][i]));
                }
                gr
            })
            .collect();

        let mut fwd: Vec<Option<crate::riccati::GroupFwd>> = vec![None; self.groups.len()];
        {
            let groups = &self.groups;
            let mut items: Vec<(usize, &GroupRhs, &mut Option<crate::riccati::GroupFwd>)> =
                rhs_g.iter().zip(fwd.iter_mut()).enumerate().map(|(i, (r, o))| (i, r, o)).collect();
            par::for_each_round_robin(&mut items, self.options.workers, |_, (i, r, o)| {
                **o = Some(groups[*i].forward(r));
            });
        }
        let fwd: Vec<crate::riccati::GroupFwd> = fwd.into_iter().map(Option::unwrap).collect();

        let lane_of = |c: usize| (c / v, c % v);
        let mut b = Vec::with_capacity(pp);
        for i in 0..pp {
            let (g, l) = lane_of(i);
            let (g1, l1) = lane_of((i + 1) % pp);
            let sf = fwd[g].sf.lane(0, l);
            let sb = fwd[g1].sb.lane(0, l1);
            let gm = rhs_g[g].gmu.lane(0, l);
            b.push(Mat::from_fn(nx, 1, |r, _| sf[(r, 0)] + sb[(r, 0)] - gm[(r, 0)]));
        }
        let mu = self.schur.solve_blocks(b);
        rhs_g.clear();

        let mut sols: Vec<Option<crate::riccati::GroupSol>> = vec![None; self.groups.len()];
        {
            let groups = &self.groups;
            let fwd = &fwd;
            let mu = &mu;
            let mut items: Vec<(usize, &mut Option<crate::riccati::GroupSol>)> = sols.iter_mut().enumerate().collect();
            par::for_each_round_robin(&mut items, self.options.workers, |_, (gi, o)| {
                let g = &groups[*gi];
                let mut m = Blocks::new(1, nx, 1, v);
                let mut mp = Blocks::new(1, nx, 1, v);
                for lane in 0..g.active {
                    let c = g.first + lane;
                    m.set_lane(0, lane, &mu[c]);
                    mp.set_lane(0, lane, &mu[(c + pp - 1) % pp]);
                }
                **o = Some(g.backward(&fwd[*gi], &m, &mp));
            });
        }

        let mut u = vec![Vector::zeros(nu); np];
        let mut x = vec![Vector::zeros(nx); np];
        let mut lam = vec![Vector::zeros(nx); np];
        for (g, sol) in self.groups.iter().zip(sols) {
            let sol = sol.unwrap();
            for lane in 0..g.active {
                let c = g.first + lane;
                for k in 0..n {
                    let j = part.stage(c, k);
                    let w = sol.wux.lane(k, lane);
                    u[j] = Vector::from_fn(nu, |i, _| w[(i, 0)]);
                    x[j] = Vector::from_fn(nx, |i, _| w[(nu + i, 0)]);
                    if k > 0 {
                        let wl = sol.wlam.lane(k, lane);
                        lam[(j + np - 1) % np] = Vector::from_fn(nx, |i, _| wl[(i, 0)]);
                    }
                }
                lam[part.stage(c, n - 1)] = Vector::from_fn(nx, |i, _| mu[c][(i, 0)]);
            }
        }
        let nh = part.horizon;
        let mut xs = Vec::with_capacity(nh + 1);
        xs.push(rhs.x_init.clone());
        for j in 1..nh {
            xs.push(x[j].clone());
        }
        xs.push(x[nh % np].clone());
        Ok(EqSolution { u: u[..nh].to_vec(), x: xs, lam: lam[..nh].to_vec() })
    }
}

/// Dense factor `𝓛` with block signature `𝒟` such that `𝓛 𝒟 𝓛ᵀ` equals the
/// permuted KKT matrix of the padded problem.
#[derive(Clone, Debug)]
pub struct DenseFactor {
    pub l: Mat<f64>,
    pub signs: Vec<f64>,
    /// `perm[i]` is the index in the stage-major ordering `(u^j, x̂^j, λ^j)`
    /// of the variable in row `i`.
    pub perm: Vec<usize>,
}

impl CyqloneFactor {
    fn natural_offset(&self, j: usize) -> usize {
        j * (2 * self.nx + self.nu)
    }

    /// KKT matrix of the padded problem in the stage-major ordering
    /// `(u^j, x̂^j, λ^j)`, with `x̂^0` the terminal state.
    pub fn natural_kkt(&self) -> Mat<f64> {
        let (nx, nu) = (self.nx, self.nu);
        let np = self.partition.padded;
        let dim = np * (2 * nx + nu);
        let mut k = Mat::zeros(dim, dim);
        let mut put = |r0: usize, c0: usize, m: &Mat<f64>| {
            for c in 0..m.cols() {
                for r in 0..m.rows() {
                    k[(r0 + r, c0 + c)] += m[(r, c)];
                    if r0 != c0 {
                        k[(c0 + c, r0 + r)] += m[(r, c)];
                    }
                }
            }
        };
        for j in 0..np {
            let (h, ba) = crate::riccati::stage_blocks(&self.problem, j);
            let o = self.natural_offset(j);
            put(o, o, &h);
            put(o + nu + nx, o, &ba);
            let o1 = self.natural_offset((j + 1) % np);
            put(o + nu + nx, o1 + nu, &Mat::from_fn(nx, nx, |r, c| if r == c { -1.0 } else { 0.0 }));
        }
        k
    }

    /// Explicit factor in the Fig. 4 ordering: the Riccati block columns in
    /// column order, then the boundary multipliers in elimination order.
    /// Requires the single-block cyclic reduction tail.
    pub fn dense_factor(&self) -> Option<DenseFactor> {
        let lm = self.schur.permuted_dense_factor()?;
        let (nx, nu) = (self.nx, self.nu);
        let nux = nx + nu;
        let part = self.partition;
        let (n, np, pp) = (part.n, part.padded, part.p);
        let dim = np * (2 * nx + nu);
        let mut l = Mat::zeros(dim, dim);
        let mut signs = vec![1.0; dim];
        let mut perm = vec![0; dim];
        let col_size = n * nux + (n - 1) * nx;
        let riccati_dim = pp * col_size;
        let order = self.schur.elimination_order();
        let mut mu_pos = vec![0; pp];
        for (q, &i) in order.iter().enumerate() {
            mu_pos[i] = riccati_dim + q * nx;
        }
        let mut put = |r0: usize, c0: usize, m: &Mat<f64>, acc: bool| {
            for c in 0..m.cols() {
                for r in 0..m.rows() {
                    if acc {
                        l[(r0 + r, c0 + c)] += m[(r, c)];
                    } else {
                        l[(r0 + r, c0 + c)] = m[(r, c)];
                    }
                }
            }
        };
        let neg = |m: &Mat<f64>| Mat::from_fn(m.rows(), m.cols(), |r, c| -m[(r, c)]);
        let inv_t = |lq: &Mat<f64>| blocktri::dense::right_solve_t(lq, &Mat::identity(lq.rows()));
        for c in 0..pp {
            let cb = self.column_blocks(c);
            let g = &self.groups[c / self.options.vlen];
            let lane = c % self.options.vlen;
            let base = c * col_size;
            // position of (u,x)_k and λ_k within the column
            let ux_at = |k: usize| base + (n - 1 - k) * (nux + nx);
            let lam_at = |k: usize| ux_at(k) + nux;
            let (mu_c, mu_p) = (mu_pos[c], mu_pos[(c + pp - 1) % pp]);
            for k in 0..n {
                let j = part.stage(c, k);
                let lh = g.stack.lane(k, lane);
                let lh = Mat::from_fn(nux, nux, |r, cc| lh[(r, cc)]);
                put(ux_at(k), ux_at(k), &lh, false);
                for i in 0..nux {
                    perm[ux_at(k) + i] = self.natural_offset(j) + i;
                }
                let lqit = inv_t(&cb.l_q[k]);
                put(mu_c, ux_at(k), &cb.l_b[k], true);
                if k > 0 {
                    let la = lam_at(k);
                    for i in 0..nx {
                        perm[la + i] = self.natural_offset((j + np - 1) % np) + nux + i;
                        signs[la + i] = -1.0;
                    }
                    put(la, ux_at(k) + nu, &neg(&lqit), false);
                    put(la, la, &neg(&lqit), false);
                    let ba = g.ba.lane(k - 1, lane);
                    put(ux_at(k - 1), la, &ba.transpose().matmul(&cb.l_q[k]), false);
                    let al = cb.a_cl[k].matmul(&lqit);
                    put(mu_c, ux_at(k) + nu, &al, true);
                    put(mu_c, la, &al, true);
                } else {
                    put(mu_c, ux_at(0) + nu, &cb.l_a, true);
                    put(mu_p, ux_at(0) + nu, &neg(&lqit), true);
                }
            }
        }
        for (q, &i) in order.iter().enumerate() {
            let row = riccati_dim + q * nx;
            for r in 0..nx {
                perm[row + r] = self.natural_offset(part.stage(i, n - 1)) + nux + r;
                signs[row + r] = -1.0;
            }
        }
        put(riccati_dim, riccati_dim, &lm, false);
        Some(DenseFactor { l, signs, perm })
    }

    /// `natural_kkt` permuted into the ordering of [`Self::dense_factor`].
    pub fn permuted_kkt(&self, perm: &[usize]) -> Mat<f64> {
        let k = self.natural_kkt();
        Mat::from_fn(perm.len(), perm.len(), |r, c| k[(perm[r], perm[c])])
    }
}
