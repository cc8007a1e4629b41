//! Low-rank update of the cyclic reduction factor of the Schur complement.
//!
//! An update `M + G Σ Gᵀ` is carried as groups of columns supported on at
//! most two adjacent block rows. On each level, the groups touching an
//! eliminated row are merged and pushed through that row's factor column
//! `[L; U; Y]` by hyperbolic transforms; what comes out below the pivot is
//! supported on the two neighbouring even rows, which become adjacent rows of
//! the next level.

use batla::{hyh_transform, Mat};
use blocktri::dense::gemm_acc;
use blocktri::{BlockTriError, CrFactor, TailFactor};
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub(crate) struct XiGroup {
    /// Ascending active row indices, at most two and adjacent.
    pub rows: Vec<usize>,
    pub g: Vec<Mat<f64>>,
    pub sigma: Vec<f64>,
}

/// How the Schur factor absorbed an update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchurPath {
    Unchanged,
    /// Hyperbolic updates on every level.
    Updated,
    /// Updated down to `level`, refactored from there on.
    Refactored { level: usize },
    /// Assembled and factored from scratch.
    Rebuilt,
}

fn scaled(g: &Mat<f64>, sigma: &[f64]) -> Mat<f64> {
    Mat::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] * sigma[c])
}

fn apply_sym(m: &mut [Mat<f64>], k: &mut [Mat<f64>], grp: &XiGroup) {
    for (a, &i) in grp.rows.iter().enumerate() {
        let gs = scaled(&grp.g[a], &grp.sigma);
        gemm_acc(&mut m[i], &gs, false, &grp.g[a], true, 1.0);
    }
    if grp.rows.len() == 2 {
        let gs = scaled(&grp.g[1], &grp.sigma);
        gemm_acc(&mut k[grp.rows[0]], &gs, false, &grp.g[0], true, 1.0);
    }
}

fn hcat(blocks: &[&Mat<f64>]) -> Mat<f64> {
    let rows = blocks[0].rows();
    let cols: usize = blocks.iter().map(|b| b.cols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        for c in 0..b.cols() {
            for r in 0..rows {
                out[(r, c0 + c)] = b[(r, c)];
            }
        }
        c0 += b.cols();
    }
    out
}

fn rows_block(m: &Mat<f64>, r0: usize, n: usize) -> Mat<f64> {
    Mat::from_fn(n, m.cols(), |r, c| m[(r0 + r, c)])
}

fn set_rows(dst: &mut Mat<f64>, r0: usize, src: &Mat<f64>) {
    for c in 0..src.cols() {
        for r in 0..src.rows() {
            dst[(r0 + r, c)] = src[(r, c)];
        }
    }
}

/// Merges the groups touching odd row `j` into one spanning `j−1, j, j+1`
/// (the last only if `with_next`).
fn merge(list: &[XiGroup], j: usize, n: usize, with_next: bool) -> (Vec<Mat<f64>>, Vec<f64>) {
    let m: usize = list.iter().map(|g| g.sigma.len()).sum();
    let targets: Vec<usize> = if with_next { vec![j, j - 1, j + 1] } else { vec![j, j - 1] };
    let mut out = vec![Mat::zeros(n, m); targets.len()];
    let mut sigma = Vec::with_capacity(m);
    let mut c0 = 0;
    for grp in list {
        for (a, &row) in grp.rows.iter().enumerate() {
            let t = targets.iter().position(|&x| x == row).expect("group touches the pivot neighbourhood");
            for c in 0..grp.g[a].cols() {
                for r in 0..n {
                    out[t][(r, c0 + c)] = grp.g[a][(r, c)];
                }
            }
        }
        c0 += grp.sigma.len();
        sigma.extend_from_slice(&grp.sigma);
    }
    (out, sigma)
}

/// Applies `M ← M + Σ_g G_g Σ_g G_gᵀ`. A level whose merged rank reaches
/// `max_rank` is refactored together with everything below it, as is a level
/// where a hyperbolic transform breaks down.
pub(crate) fn update_cr(cr: &mut CrFactor<f64>, mut groups: Vec<XiGroup>, max_rank: f64) -> Result<SchurPath, BlockTriError> {
    groups.retain(|g| !g.sigma.is_empty());
    if groups.is_empty() {
        return Ok(SchurPath::Unchanged);
    }
    let n = cr.dim;
    for l in 0..cr.levels.len() {
        if groups.is_empty() {
            return Ok(SchurPath::Updated);
        }
        let lev = &mut cr.levels[l];
        for grp in &groups {
            apply_sym(&mut lev.m, &mut lev.k, grp);
        }
        let mut by_odd: BTreeMap<usize, Vec<XiGroup>> = BTreeMap::new();
        let mut next = Vec::new();
        for grp in groups {
            match grp.rows.iter().copied().find(|i| i % 2 == 1) {
                Some(j) => by_odd.entry(j).or_default().push(grp),
                None => next.push(XiGroup { rows: grp.rows.iter().map(|i| i / 2).collect(), ..grp }),
            }
        }
        let worst = by_odd.values().map(|v| v.iter().map(|g| g.sigma.len()).sum::<usize>()).max().unwrap_or(0);
        if worst as f64 >= max_rank {
            let (m, k) = (lev.m.clone(), lev.k.clone());
            cr.refactor_from_level(l, m, k)?;
            return Ok(SchurPath::Refactored { level: l });
        }
        let backup = (lev.l.clone(), lev.u.clone(), lev.y.clone());
        let mut failed = false;
        for (&j, list) in &by_odd {
            let t = j / 2;
            let with_next = lev.has_y(j);
            let (gs, sigma) = merge(list, j, n, with_next);
            let mut stack = if with_next { Mat::zeros(3 * n, n) } else { Mat::zeros(2 * n, n) };
            set_rows(&mut stack, 0, &lev.l[t]);
            set_rows(&mut stack, n, &lev.u[t]);
            let mut g = Mat::zeros(stack.rows(), sigma.len());
            set_rows(&mut g, 0, &gs[0]);
            set_rows(&mut g, n, &gs[1]);
            if with_next {
                set_rows(&mut stack, 2 * n, &lev.y[t]);
                set_rows(&mut g, 2 * n, &gs[2]);
            }
            if hyh_transform(stack.as_mut(), g.as_mut(), None, &sigma).is_err() {
                failed = true;
                break;
            }
            lev.l[t] = rows_block(&stack, 0, n);
            lev.u[t] = rows_block(&stack, n, n);
            let mut out = XiGroup { rows: vec![(j - 1) / 2], g: vec![rows_block(&g, n, n)], sigma };
            if with_next {
                lev.y[t] = rows_block(&stack, 2 * n, n);
                out.rows.push((j + 1) / 2);
                out.g.push(rows_block(&g, 2 * n, n));
            }
            next.push(out);
        }
        if failed {
            (lev.l, lev.u, lev.y) = backup;
            let (m, k) = (lev.m.clone(), lev.k.clone());
            cr.refactor_from_level(l, m, k)?;
            return Ok(SchurPath::Refactored { level: l });
        }
        groups = next;
    }
    if groups.is_empty() {
        return Ok(SchurPath::Updated);
    }
    let level = cr.levels.len();
    let (mut m, mut k) = (cr.tail_m.clone(), cr.tail_k.clone());
    for grp in &groups {
        apply_sym(&mut m, &mut k, grp);
    }
    if let TailFactor::Root(root) = &cr.tail {
        let refs: Vec<&Mat<f64>> = groups.iter().map(|g| &g.g[0]).collect();
        let mut g = hcat(&refs);
        let sigma: Vec<f64> = groups.iter().flat_map(|g| g.sigma.iter().copied()).collect();
        let mut l = root.clone();
        if (sigma.len() as f64) < max_rank && hyh_transform(l.as_mut(), g.as_mut(), None, &sigma).is_ok() {
            cr.tail = TailFactor::Root(l);
            cr.tail_m = m;
            cr.tail_k = k;
            return Ok(SchurPath::Updated);
        }
    }
    cr.refactor_from_level(level, m, k)?;
    Ok(SchurPath::Refactored { level })
}
