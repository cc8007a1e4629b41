//! Benchmark and checking harness for the linear and QP solvers.

use cyqlone::{factor, flops_critical_path, CyqloneOptions, TailKind};
use ocp_model::{from_json, kkt_residual_eq, mass_spring_with_state, random_ocp, sample_x_init, MassSpringConfig, OCPProblem, RandomDims, SolveStatus};
use qpalm::{alm_outer_loop, dense_qp_oracle, shift_solution, QPALMSettings};
use serde::Serialize;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Equality constrained part only, solved by a single factorization.
    CyqloneLinear,
    Cyqpalm,
    DenseOracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    Cr1,
    Pcr,
    Pcg,
}

impl From<Tail> for TailKind {
    fn from(t: Tail) -> Self {
        match t {
            Tail::Cr1 => TailKind::Cr1,
            Tail::Pcr => TailKind::Pcr,
            Tail::Pcg => TailKind::Pcg,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read problem: {0}")]
    Parse(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Output(_) => 1,
            CliError::Usage(_) | CliError::Parse(_) => 2,
        }
    }
}

/// Where the problems come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    MassSpring,
    /// Random boxes around a simulated trajectory, `n_x = 2M`, `n_u = M`.
    Random,
    Json(String),
}

impl Source {
    fn name(&self) -> String {
        match self {
            Source::MassSpring => "mass-spring".into(),
            Source::Random => "random".into(),
            Source::Json(path) => format!("json:{path}"),
        }
    }
}

/// One fully resolved benchmark configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub source: Source,
    pub solver: SolverKind,
    pub masses: usize,
    pub horizon: usize,
    pub partitions: usize,
    pub vlen: usize,
    pub workers: usize,
    pub tail: Tail,
    pub warm: bool,
    pub instances: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub updates: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            source: Source::MassSpring,
            solver: SolverKind::Cyqpalm,
            masses: 2,
            horizon: 8,
            partitions: 1,
            vlen: 1,
            workers: 1,
            tail: Tail::Cr1,
            warm: false,
            instances: 1,
            repetitions: 1,
            seed: 7,
            tol: 1e-8,
            max_iter: 100,
            updates: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !self.partitions.is_power_of_two() {
            return Err(CliError::Usage(format!("--partitions {} is not a power of two", self.partitions)));
        }
        if ![1, 2, 4, 8].contains(&self.vlen) {
            return Err(CliError::Usage(format!("--vlen {} is not one of 1, 2, 4, 8", self.vlen)));
        }
        if self.masses < 2 && !matches!(self.source, Source::Json(_)) {
            return Err(CliError::Usage("--masses must be at least 2".into()));
        }
        if self.horizon == 0 || self.workers == 0 || self.instances == 0 || self.repetitions == 0 || self.max_iter == 0 {
            return Err(CliError::Usage("horizon, workers, instances, repetitions and iteration limit must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(CliError::Usage("--tol must be positive".into()));
        }
        Ok(())
    }

    pub fn cyqlone_options(&self) -> CyqloneOptions {
        CyqloneOptions { partitions: self.partitions, vlen: self.vlen, workers: self.workers, tail: self.tail.into(), ..Default::default() }
    }

    pub fn qpalm_settings(&self) -> QPALMSettings {
        QPALMSettings {
            eps_primal: self.tol,
            eps_dual: self.tol,
            max_outer: self.max_iter,
            use_updates: self.updates,
            warm_start: self.warm,
            cyqlone: self.cyqlone_options(),
            ..Default::default()
        }
    }

    /// Problem number `instance` of this configuration.
    pub fn problem(&self, instance: usize) -> Result<OCPProblem, CliError> {
        match &self.source {
            Source::MassSpring => {
                let cfg = MassSpringConfig::new(self.masses, self.horizon, self.seed);
                mass_spring_with_state(&cfg, sample_x_init(&cfg, instance as u64)).map_err(|e| CliError::Usage(e.to_string()))
            }
            Source::Random => {
                let dims = RandomDims { nx: 2 * self.masses, nu: self.masses, n: self.horizon };
                Ok(random_ocp(dims, self.seed.wrapping_add(instance as u64), 100.0))
            }
            Source::Json(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{path}: {e}")))?;
                from_json(&text).map_err(|e| CliError::Parse(format!("{path}: {e}")))
            }
        }
    }
}

/// One row of output. Field names are the flattened configuration keys and
/// measured quantities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    #[serde(rename = "config.source")]
    pub source: String,
    #[serde(rename = "config.solver")]
    pub solver: SolverKind,
    #[serde(rename = "config.masses")]
    pub masses: usize,
    #[serde(rename = "config.horizon")]
    pub horizon: usize,
    #[serde(rename = "config.nx")]
    pub nx: usize,
    #[serde(rename = "config.nu")]
    pub nu: usize,
    #[serde(rename = "config.partitions")]
    pub partitions: usize,
    #[serde(rename = "config.vlen")]
    pub vlen: usize,
    #[serde(rename = "config.workers")]
    pub workers: usize,
    #[serde(rename = "config.tail")]
    pub tail: Tail,
    #[serde(rename = "config.warm")]
    pub warm: bool,
    #[serde(rename = "config.seed")]
    pub seed: u64,
    #[serde(rename = "config.tol")]
    pub tol: f64,
    #[serde(rename = "config.max_iter")]
    pub max_iter: usize,
    #[serde(rename = "config.updates")]
    pub updates: bool,
    #[serde(rename = "config.instance")]
    pub instance: usize,
    #[serde(rename = "config.repetition")]
    pub repetition: usize,
    pub status: String,
    pub error: String,
    pub objective: f64,
    #[serde(rename = "residual.primal")]
    pub res_primal: f64,
    #[serde(rename = "residual.dual")]
    pub res_dual: f64,
    #[serde(rename = "residual.complementarity")]
    pub res_comp: f64,
    #[serde(rename = "time.total")]
    pub t_total: f64,
    #[serde(rename = "time.riccati")]
    pub t_riccati: f64,
    #[serde(rename = "time.schur")]
    pub t_schur: f64,
    #[serde(rename = "time.cr")]
    pub t_cr: f64,
    #[serde(rename = "time.tail")]
    pub t_tail: f64,
    #[serde(rename = "time.per_iteration")]
    pub t_per_iter: f64,
    #[serde(rename = "iter.outer")]
    pub outer: usize,
    #[serde(rename = "iter.inner")]
    pub inner: usize,
    #[serde(rename = "iter.line_search")]
    pub line_search: usize,
    #[serde(rename = "iter.factorizations")]
    pub factorizations: usize,
    #[serde(rename = "iter.updates")]
    pub update_count: usize,
    #[serde(rename = "flops.riccati")]
    pub f_riccati: Option<f64>,
    #[serde(rename = "flops.schur")]
    pub f_schur: Option<f64>,
    #[serde(rename = "flops.cr")]
    pub f_cr: Option<f64>,
    #[serde(rename = "flops.critical_path")]
    pub f_total: Option<f64>,
    #[serde(rename = "flops.serial")]
    pub f_serial: Option<f64>,
    #[serde(rename = "flops.speedup")]
    pub f_speedup: Option<f64>,
}

impl BenchRecord {
    fn new(cfg: &BenchConfig, p: Option<&OCPProblem>, instance: usize, repetition: usize) -> Self {
        let (nx, nu, horizon) = p.map_or((0, 0, cfg.horizon), |p| (p.nx, p.nu, p.horizon()));
        let model = flops_critical_path(nx, nu, horizon, cfg.partitions).ok().filter(|_| p.is_some());
        BenchRecord {
            source: cfg.source.name(),
            solver: cfg.solver,
            masses: cfg.masses,
            horizon,
            nx,
            nu,
            partitions: cfg.partitions,
            vlen: cfg.vlen,
            workers: cfg.workers,
            tail: cfg.tail,
            warm: cfg.warm,
            seed: cfg.seed,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            updates: cfg.updates,
            instance,
            repetition,
            status: "failed".into(),
            error: String::new(),
            objective: f64::NAN,
            res_primal: f64::NAN,
            res_dual: f64::NAN,
            res_comp: f64::NAN,
            t_total: 0.0,
            t_riccati: 0.0,
            t_schur: 0.0,
            t_cr: 0.0,
            t_tail: 0.0,
            t_per_iter: 0.0,
            outer: 0,
            inner: 0,
            line_search: 0,
            factorizations: 0,
            update_count: 0,
            f_riccati: model.map(|m| m.riccati),
            f_schur: model.map(|m| m.schur),
            f_cr: model.map(|m| m.cr),
            f_total: model.map(|m| m.total),
            f_serial: model.map(|m| m.serial),
            f_speedup: model.map(|m| m.speedup),
        }
    }

    pub fn converged(&self) -> bool {
        self.status == "converged"
    }

    /// Largest residual, infinite when unknown.
    pub fn residual(&self) -> f64 {
        let r = self.res_primal.max(self.res_dual).max(self.res_comp);
        if r.is_nan() {
            f64::INFINITY
        } else {
            r
        }
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIterations => "max-iterations",
        SolveStatus::Failed => "failed",
    }
}

/// The next MPC problem: the first control of `u0` is applied and the
/// horizon is kept.
pub fn advance(p: &OCPProblem, u0: &ocp_model::Vector) -> Result<OCPProblem, CliError> {
    let mut next = p.normalize_e().map_err(|e| CliError::Usage(e.to_string()))?;
    let s = &next.stages[0];
    next.x_init = &s.a * &next.x_init + &s.b * u0 + &s.f;
    Ok(next)
}

fn solve_linear(cfg: &BenchConfig, p: &OCPProblem, rec: &mut BenchRecord) -> Result<(), String> {
    let eq = p.eq_part().map_err(|e| e.to_string())?;
    let rhs = eq.rhs();
    let t0 = Instant::now();
    let f = factor(&eq, cfg.cyqlone_options()).map_err(|e| e.to_string())?;
    let sol = f.solve(&rhs).map_err(|e| e.to_string())?;
    rec.t_total = secs(t0.elapsed());
    rec.t_riccati = secs(f.stats.riccati_time);
    rec.t_schur = secs(f.stats.schur_time);
    rec.t_cr = secs(f.stats.cr_time);
    rec.t_tail = secs(f.stats.tail_time);
    rec.t_per_iter = rec.t_total;
    rec.factorizations = 1;
    let res = kkt_residual_eq(&eq, &rhs, &sol);
    rec.res_primal = res.dynamics.max(res.init) / res.scale.max(1.0);
    rec.res_dual = res.stat_u.max(res.stat_x).max(res.terminal) / res.scale.max(1.0);
    rec.res_comp = 0.0;
    rec.objective = eq.objective(&sol);
    rec.status = if res.relative() <= cfg.tol.max(1e-9) { "converged" } else { "inaccurate" }.into();
    Ok(())
}

fn solve_qp(cfg: &BenchConfig, p: &OCPProblem, rec: &mut BenchRecord) -> Result<(), String> {
    let settings = cfg.qpalm_settings();
    let (problem, warm) = if cfg.warm {
        // the first solve only provides the initial guess and is not timed
        let first = alm_outer_loop(p, &settings, None).map_err(|e| e.to_string())?;
        let next = advance(p, &first.solution.u[0]).map_err(|e| e.to_string())?;
        (next, Some(shift_solution(&first.solution)))
    } else {
        (p.clone(), None)
    };
    let t0 = Instant::now();
    let rep = alm_outer_loop(&problem, &settings, warm.as_ref()).map_err(|e| e.to_string())?;
    rec.t_total = secs(t0.elapsed());
    let s = &rep.stats;
    rec.t_riccati = secs(s.riccati_time);
    rec.t_schur = secs(s.schur_time);
    rec.t_cr = secs(s.cr_time);
    rec.t_tail = secs(s.tail_time);
    rec.t_per_iter = rec.t_total / s.inner_iterations.max(1) as f64;
    rec.outer = s.outer_iterations;
    rec.inner = s.inner_iterations;
    rec.line_search = s.line_search_iterations;
    rec.factorizations = s.factorizations;
    rec.update_count = s.updates;
    let r = rep.solution.residual;
    (rec.res_primal, rec.res_dual, rec.res_comp) = (r.primal, r.dual, r.complementarity);
    rec.objective = problem.objective(&rep.solution.u, &rep.solution.x);
    rec.status = status_name(rep.solution.status).into();
    Ok(())
}

fn solve_dense(p: &OCPProblem, rec: &mut BenchRecord) -> Result<(), String> {
    let t0 = Instant::now();
    let d = dense_qp_oracle(p).map_err(|e| e.to_string())?;
    rec.t_total = secs(t0.elapsed());
    rec.inner = d.iterations;
    rec.t_per_iter = rec.t_total / d.iterations.max(1) as f64;
    let r = d.solution.residual;
    (rec.res_primal, rec.res_dual, rec.res_comp) = (r.primal, r.dual, r.complementarity);
    rec.objective = d.objective;
    rec.status = "converged".into();
    Ok(())
}

/// Runs every instance and repetition of one configuration. Solver failures
/// are recorded and do not stop the run; unreadable problems do.
pub fn run(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, CliError> {
    cfg.validate()?;
    let instances = if matches!(cfg.source, Source::Json(_)) { 1 } else { cfg.instances };
    let mut out = Vec::with_capacity(instances * cfg.repetitions);
    for instance in 0..instances {
        let p = cfg.problem(instance)?;
        for repetition in 0..cfg.repetitions {
            let mut rec = BenchRecord::new(cfg, Some(&p), instance, repetition);
            let res = match cfg.solver {
                SolverKind::CyqloneLinear => solve_linear(cfg, &p, &mut rec),
                SolverKind::Cyqpalm => solve_qp(cfg, &p, &mut rec),
                SolverKind::DenseOracle => solve_dense(&p, &mut rec),
            };
            if let Err(e) = res {
                rec.status = "failed".into();
                rec.error = e;
            }
            out.push(rec);
        }
    }
    Ok(out)
}

/// Grid over masses, horizons, partition counts and lane counts.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub masses: Vec<usize>,
    pub horizons: Vec<usize>,
    pub partitions: Vec<usize>,
    pub vlens: Vec<usize>,
}

pub fn sweep(base: &BenchConfig, grid: &SweepGrid) -> Result<Vec<BenchRecord>, CliError> {
    let mut out = Vec::new();
    for &masses in &grid.masses {
        for &horizon in &grid.horizons {
            for &partitions in &grid.partitions {
                for &vlen in &grid.vlens {
                    let cfg = BenchConfig { masses, horizon, partitions, vlen, ..base.clone() };
                    out.extend(run(&cfg)?);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_records<W: std::io::Write>(records: &[BenchRecord], format: Format, mut w: W) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut wr = csv::Writer::from_writer(w);
            for r in records {
                wr.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
            }
            wr.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, records).map_err(|e| CliError::Output(e.to_string()))?;
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Options shared by every subcommand. List-valued flags take comma
/// separated values; only `sweep` accepts more than one.
#[derive(Clone, Debug, clap::Args)]
pub struct CommonArgs {
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub masses: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub horizon: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub partitions: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub vlen: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = Tail::Cr1)]
    pub tail: Tail,
    #[arg(long, overrides_with = "cold")]
    pub warm: bool,
    #[arg(long, overrides_with = "warm")]
    pub cold: bool,
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long)]
    pub no_updates: bool,
    #[arg(long, value_enum, default_value_t = SolverKind::Cyqpalm)]
    pub solver: SolverKind,
    /// Load the problem from an ocp-v1 JSON file.
    #[arg(long, conflicts_with = "random")]
    pub problem: Option<String>,
    /// Random problems with boxes around a simulated trajectory.
    #[arg(long)]
    pub random: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

impl CommonArgs {
    fn base(&self) -> BenchConfig {
        let source = match (&self.problem, self.random) {
            (Some(path), _) => Source::Json(path.clone()),
            (None, true) => Source::Random,
            (None, false) => Source::MassSpring,
        };
        BenchConfig {
            source,
            solver: self.solver,
            masses: self.masses[0],
            horizon: self.horizon[0],
            partitions: self.partitions[0],
            vlen: self.vlen[0],
            workers: self.workers,
            tail: self.tail,
            warm: self.warm && !self.cold,
            instances: self.instances,
            repetitions: self.repetitions,
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
            updates: !self.no_updates,
        }
    }

    fn grid(&self) -> SweepGrid {
        SweepGrid { masses: self.masses.clone(), horizons: self.horizon.clone(), partitions: self.partitions.clone(), vlens: self.vlen.clone() }
    }

    /// The single configuration of `run` and `check`.
    pub fn single(&self) -> Result<BenchConfig, CliError> {
        let g = self.grid();
        if [g.masses.len(), g.horizons.len(), g.partitions.len(), g.vlens.len()].iter().any(|&l| l != 1) {
            return Err(CliError::Usage("lists of values are only accepted by sweep".into()));
        }
        Ok(self.base())
    }

    fn emit(&self, records: &[BenchRecord]) -> Result<(), CliError> {
        match &self.out {
            Some(path) => write_records(records, self.format, std::io::BufWriter::new(std::fs::File::create(path)?)),
            None => write_records(records, self.format, std::io::stdout().lock()),
        }
    }
}

#[derive(Debug, clap::Parser)]
#[command(name = "cyqlone", version, about = "Structured optimal control solvers: benchmarks and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Solve the configured instances and print one record per solve.
    Run(CommonArgs),
    /// Run the cartesian product of the listed masses, horizons, partition
    /// counts and lane counts.
    Sweep(CommonArgs),
    /// Solve and exit with 1 if any residual exceeds the tolerance.
    Check(CommonArgs),
    /// Write instance 0 of the configuration as ocp-v1 JSON.
    Generate(CommonArgs),
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let res = match &cli.command {
        Command::Run(a) => a.single().and_then(|c| run(&c)).and_then(|r| a.emit(&r).map(|_| 0)),
        Command::Sweep(a) => sweep(&a.base(), &a.grid()).and_then(|r| {
            a.emit(&r)?;
            Ok(if r.iter().any(|r| r.status == "failed") { 1 } else { 0 })
        }),
        Command::Check(a) => a.single().and_then(|c| {
            let recs = run(&c)?;
            for r in &recs {
                eprintln!(
                    "instance {} repetition {}: {} primal {:.3e} dual {:.3e} complementarity {:.3e}",
                    r.instance, r.repetition, r.status, r.res_primal, r.res_dual, r.res_comp
                );
                if !r.error.is_empty() {
                    eprintln!("  {}", r.error);
                }
            }
            a.emit(&recs)?;
            Ok(if recs.iter().all(|r| r.residual() <= c.tol && r.status != "failed") { 0 } else { 1 })
        }),
        Command::Generate(a) => a.single().and_then(|c| {
            c.validate()?;
            let json = ocp_model::to_json(&c.problem(0)?);
            match &a.out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(0)
        }),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
