//! Exact minimization of the piecewise quadratic merit function
//! `ψ(τ) = ℓ^Σ(z + τ d)` along a search direction.
//!
//! With `ψ'(τ) = ητ + β + ⟨δ, [δτ − α]₊⟩`, every constraint side contributes
//! a kink at `t = α/δ`. After rebasing the terms with `δ < 0`, the derivative
//! reads `ψ'(τ) = η₀τ + β₀ + Σ_{t_i < τ} w_i (τ − t_i)` with `w = δ|δ|`, so a
//! breakpoint is fully described by `(t, w)`.

use crate::QpalmError;
use std::cmp::Ordering;

/// Bracket size below which the chunks are merged into one.
pub const MERGE_BELOW: usize = 512;
/// Bracket size below which the remaining breakpoints are sorted and scanned.
pub const SCAN_BELOW: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakpoint {
    pub t: f64,
    /// `δ|δ|`
    pub w: f64,
}

/// Curvature and slope at `τ = 0⁺` with every breakpoint `t ≤ 0` folded in,
/// plus the remaining positive breakpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSearchData {
    pub eta: f64,
    pub beta: f64,
    pub records: Vec<Breakpoint>,
}

/// Sums over the breakpoints of a bracket strictly below and equal to a pivot.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PartitionSums {
    pub n_less: usize,
    pub n_equal: usize,
    pub less_w: f64,
    pub less_tw: f64,
    pub equal_w: f64,
    pub equal_tw: f64,
}

impl PartitionSums {
    fn add(&mut self, o: &PartitionSums) {
        self.n_less += o.n_less;
        self.n_equal += o.n_equal;
        self.less_w += o.less_w;
        self.less_tw += o.less_tw;
        self.equal_w += o.equal_w;
        self.equal_tw += o.equal_tw;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchResult {
    pub tau: f64,
    /// Bisection steps, not counting the final scan.
    pub iterations: usize,
}

/// Reorders `recs` into `t < pivot`, `t == pivot`, `t > pivot`.
pub fn partition_breakpoints(recs: &mut [Breakpoint], pivot: f64) -> PartitionSums {
    let mut s = PartitionSums::default();
    let (mut lt, mut i, mut gt) = (0, 0, recs.len());
    while i < gt {
        let r = recs[i];
        match r.t.partial_cmp(&pivot).unwrap_or(Ordering::Greater) {
            Ordering::Less => {
                s.less_w += r.w;
                s.less_tw += r.t * r.w;
                recs.swap(lt, i);
                lt += 1;
                i += 1;
            }
            Ordering::Equal => {
                s.equal_w += r.w;
                s.equal_tw += r.t * r.w;
                i += 1;
            }
            Ordering::Greater => {
                gt -= 1;
                recs.swap(i, gt);
            }
        }
    }
    s.n_less = lt;
    s.n_equal = gt - lt;
    s
}

fn by_t(a: &Breakpoint, b: &Breakpoint) -> Ordering {
    a.t.partial_cmp(&b.t).unwrap_or(Ordering::Equal)
}

/// Lower end of the current bracket with the curvature and slope that hold
/// just above it.
#[derive(Clone, Copy, Debug)]
struct Bracket {
    lo: f64,
    hi: f64,
    eta: f64,
    beta: f64,
}

impl Bracket {
    /// Evaluates `ψ'` at `pivot` and shrinks the bracket. Returns the root if
    /// it is hit exactly.
    fn step(&mut self, pivot: f64, s: &PartitionSums) -> Option<f64> {
        let eta = self.eta + s.less_w;
        let beta = self.beta - s.less_tw;
        let d = eta * pivot + beta;
        if d == 0.0 {
            return Some(pivot);
        }
        if d < 0.0 {
            self.lo = pivot;
            self.eta = eta + s.equal_w;
            self.beta = beta - s.equal_tw;
        } else {
            self.hi = pivot;
        }
        None
    }

    /// Sorts the bracket's breakpoints and walks them in order.
    fn scan(&self, recs: &mut [Breakpoint]) -> f64 {
        recs.sort_unstable_by(by_t);
        let (mut eta, mut beta) = (self.eta, self.beta);
        for r in recs.iter() {
            if eta * r.t + beta >= 0.0 {
                break;
            }
            eta += r.w;
            beta -= r.t * r.w;
        }
        (-beta / eta).clamp(self.lo, self.hi)
    }
}

/// One worker's share of the breakpoints with its bracket fences.
struct Chunk {
    recs: Vec<Breakpoint>,
    lo: usize,
    hi: usize,
}

impl Chunk {
    fn bracket(&mut self) -> &mut [Breakpoint] {
        &mut self.recs[self.lo..self.hi]
    }

    fn len(&self) -> usize {
        self.hi - self.lo
    }
}

impl LineSearchData {
    /// Builds the data from the raw quantities of the derivative formula.
    /// Non-finite breakpoints (`δ = 0` or an infinite bound) contribute
    /// nothing and are dropped.
    pub fn from_alpha_delta(eta: f64, beta: f64, alpha: &[f64], delta: &[f64]) -> Self {
        let (mut eta, mut beta) = (eta, beta);
        let mut records = Vec::with_capacity(alpha.len());
        for (&a, &d) in alpha.iter().zip(delta) {
            let t = a / d;
            if !t.is_finite() {
                continue;
            }
            let w = d * d.abs();
            if d < 0.0 {
                eta -= w;
                beta += t * w;
            }
            records.push(Breakpoint { t, w });
        }
        Self::from_records(eta, beta, records)
    }

    /// Takes breakpoints in the rebased form, folding those at `t ≤ 0`.
    pub fn from_records(eta: f64, beta: f64, records: Vec<Breakpoint>) -> Self {
        let mut out = LineSearchData { eta, beta, records: Vec::with_capacity(records.len()) };
        for r in records {
            if !r.t.is_finite() || r.w == 0.0 {
                continue;
            }
            if r.t <= 0.0 {
                out.eta += r.w;
                out.beta -= r.t * r.w;
            } else {
                out.records.push(r);
            }
        }
        out
    }

    /// `ψ'(t)` for `t ≥ 0` by a full pass over the breakpoints.
    pub fn psi_prime_at(&self, t: f64) -> f64 {
        let (mut eta, mut beta) = (self.eta, self.beta);
        for r in self.records.iter().filter(|r| r.t < t) {
            eta += r.w;
            beta -= r.t * r.w;
        }
        eta * t + beta
    }

    /// Magnitude of the terms that make up `ψ'(τ)`, used to judge how close
    /// to zero a computed derivative can be.
    pub fn scale(&self, tau: f64) -> f64 {
        let kinks: f64 = self.records.iter().filter(|r| r.t < tau).map(|r| (r.w * (tau - r.t)).abs()).sum();
        1.0 + (self.eta * tau).abs() + self.beta.abs() + kinks
    }

    /// Finds the root of `ψ'` on `τ > 0` by bisection over the breakpoints.
    /// The first pivot is the largest breakpoint below one; later pivots are
    /// bracket medians. Chunks are partitioned by `workers` threads until the
    /// bracket is small.
    pub fn solve(&self, workers: usize) -> Result<LineSearchResult, QpalmError> {
        if !(self.beta < 0.0) {
            return Err(QpalmError::NotDescent { slope: self.beta });
        }
        if !(self.eta > 0.0) {
            return Err(QpalmError::NotConvex { curvature: self.eta });
        }
        let mut br = Bracket { lo: 0.0, hi: f64::INFINITY, eta: self.eta, beta: self.beta };
        let workers = workers.max(1);
        let n = self.records.len();
        let per = n.div_ceil(workers).max(1);
        let mut chunks: Vec<Chunk> = self.records.chunks(per).map(|c| Chunk { recs: c.to_vec(), lo: 0, hi: c.len() }).collect();
        if chunks.is_empty() {
            chunks.push(Chunk { recs: Vec::new(), lo: 0, hi: 0 });
        }
        let mut iterations = 0;
        let mut first = true;

        while chunks.len() > 1 {
            let total: usize = chunks.iter().map(Chunk::len).sum();
            if total < MERGE_BELOW {
                let recs: Vec<Breakpoint> = chunks.iter_mut().flat_map(|c| c.bracket().to_vec()).collect();
                let len = recs.len();
                chunks = vec![Chunk { recs, lo: 0, hi: len }];
                break;
            }
            let pivot = if first {
                first = false;
                chunks
                    .iter_mut()
                    .flat_map(|c| c.bracket().iter().map(|r| r.t).filter(|&t| t < 1.0).collect::<Vec<_>>())
                    .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))))
            } else {
                None
            };
            let pivot = pivot.unwrap_or_else(|| {
                let big = (0..chunks.len()).max_by_key(|&i| (chunks[i].len(), usize::MAX - i)).unwrap();
                let b = chunks[big].bracket();
                let mid = b.len() / 2;
                b.select_nth_unstable_by(mid, by_t).1.t
            });
            let mut sums: Vec<PartitionSums> = vec![PartitionSums::default(); chunks.len()];
            let mut work: Vec<(&mut Chunk, &mut PartitionSums)> = chunks.iter_mut().zip(sums.iter_mut()).collect();
            batla::par::for_each_round_robin(&mut work, workers, |_, (c, s)| **s = partition_breakpoints(c.bracket(), pivot));
            let mut total_sums = PartitionSums::default();
            for s in &sums {
                total_sums.add(s);
            }
            iterations += 1;
            if let Some(tau) = br.step(pivot, &total_sums) {
                return Ok(LineSearchResult { tau, iterations });
            }
            let below = br.lo == pivot;
            for (c, s) in chunks.iter_mut().zip(&sums) {
                if below {
                    c.lo += s.n_less + s.n_equal;
                } else {
                    c.hi = c.lo + s.n_less;
                }
            }
        }

        let c = &mut chunks[0];
        loop {
            let len = c.len();
            if len < SCAN_BELOW {
                let tau = br.scan(c.bracket());
                return Ok(LineSearchResult { tau, iterations });
            }
            let b = c.bracket();
            let pivot = if first {
                first = false;
                b.iter().map(|r| r.t).filter(|&t| t < 1.0).fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))))
            } else {
                None
            };
            let pivot = pivot.unwrap_or_else(|| b.select_nth_unstable_by(len / 2, by_t).1.t);
            let s = partition_breakpoints(c.bracket(), pivot);
            iterations += 1;
            if let Some(tau) = br.step(pivot, &s) {
                return Ok(LineSearchResult { tau, iterations });
            }
            if br.lo == pivot {
                c.lo += s.n_less + s.n_equal;
            } else {
                c.hi = c.lo + s.n_less;
            }
        }
    }
}

/// `ψ'(τ)` evaluated term by term from `η, β, α, δ`.
pub fn psi_prime_naive(eta: f64, beta: f64, alpha: &[f64], delta: &[f64], tau: f64) -> f64 {
    let mut v = eta * tau + beta;
    for (&a, &d) in alpha.iter().zip(delta) {
        let g = d * tau - a;
        if g > 0.0 {
            v += d * g;
        }
    }
    v
}

/// `ψ(τ) − ψ(0)` evaluated term by term.
pub fn psi_naive(eta: f64, beta: f64, alpha: &[f64], delta: &[f64], tau: f64) -> f64 {
    let mut v = 0.5 * eta * tau * tau + beta * tau;
    for (&a, &d) in alpha.iter().zip(delta) {
        let pos = |x: f64| if x > 0.0 { x * x } else { 0.0 };
        if a.is_finite() {
            v += 0.5 * (pos(d * tau - a) - pos(-a));
        }
    }
    v
}

/// Evaluates `ψ'` at a sequence of points, only touching the breakpoints
/// between the previous and the next point.
#[derive(Clone, Debug)]
pub struct IncrementalPsi {
    sorted: Vec<Breakpoint>,
    /// Number of breakpoints strictly below the current point.
    below: usize,
    eta: f64,
    beta: f64,
    /// Breakpoints visited over all moves.
    pub touched: usize,
}

impl IncrementalPsi {
    pub fn new(data: &LineSearchData) -> Self {
        let mut sorted = data.records.clone();
        sorted.sort_unstable_by(by_t);
        IncrementalPsi { sorted, below: 0, eta: data.eta, beta: data.beta, touched: 0 }
    }

    /// `ψ'(t)` for `t ≥ 0`.
    pub fn at(&mut self, t: f64) -> f64 {
        while self.below < self.sorted.len() && self.sorted[self.below].t < t {
            let r = self.sorted[self.below];
            self.eta += r.w;
            self.beta -= r.t * r.w;
            self.below += 1;
            self.touched += 1;
        }
        while self.below > 0 && self.sorted[self.below - 1].t >= t {
            self.below -= 1;
            let r = self.sorted[self.below];
            self.eta -= r.w;
            self.beta += r.t * r.w;
            self.touched += 1;
        }
        self.eta * t + self.beta
    }
}
