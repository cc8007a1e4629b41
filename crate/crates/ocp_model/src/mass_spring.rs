use crate::{Matrix, OCPProblem, OcpError, QpStage, Terminal, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Chain of `masses` bodies between two walls, with `masses / 2` actuators.
#[derive(Clone, Debug, PartialEq)]
pub struct MassSpringConfig {
    pub masses: usize,
    pub horizon: usize,
    pub k: f64,
    pub m: f64,
    pub mu: f64,
    pub w: f64,
    pub seed: u64,
}

impl MassSpringConfig {
    pub fn new(masses: usize, horizon: usize, seed: u64) -> Self {
        MassSpringConfig { masses, horizon, k: 1.0, m: 1.0, mu: 0.0, w: 0.0, seed }
    }

    pub fn sample_time(&self) -> f64 {
        15.0 / self.horizon as f64
    }

    pub fn nu(&self) -> usize {
        self.masses / 2
    }
}

/// Spring coupling `V`: `−2k/m` on the diagonal, `k/m` beside it.
pub fn mass_spring_v(masses: usize, k: f64, m: f64) -> Matrix {
    Matrix::from_fn(masses, masses, |i, j| {
        if i == j {
            -2.0 * k / m
        } else if i.abs_diff(j) == 1 {
            k / m
        } else {
            0.0
        }
    })
}

/// Actuator matrix: the six-mass pattern repeated block-diagonally, cut off
/// at `masses` rows and `masses / 2` columns.
pub fn mass_spring_w(masses: usize, m: f64) -> Matrix {
    const PATTERN: [(usize, usize, f64); 6] =
        [(0, 0, 1.0), (1, 0, -1.0), (2, 1, 1.0), (3, 2, 1.0), (4, 1, -1.0), (5, 2, -1.0)];
    let nu = masses / 2;
    let mut w = Matrix::zeros(masses, nu);
    for blk in 0..masses.div_ceil(6) {
        for &(r, c, v) in &PATTERN {
            let (r, c) = (6 * blk + r, 3 * blk + c);
            if r < masses && c < nu {
                w[(r, c)] = v / m;
            }
        }
    }
    w
}

/// Zero-order hold: the exponential of `[[A_c, B_c, b_c], [0, 0, 0]]·Ts`
/// yields `A`, `B` and `b` in its first block row.
pub fn zoh_discretize(ac: &Matrix, bc: &Matrix, b: &Vector, ts: f64) -> (Matrix, Matrix, Vector) {
    let (nx, nu) = (ac.nrows(), bc.ncols());
    let dim = nx + nu + 1;
    let mut aug = Matrix::zeros(dim, dim);
    aug.view_mut((0, 0), (nx, nx)).copy_from(ac);
    aug.view_mut((0, nx), (nx, nu)).copy_from(bc);
    aug.view_mut((0, nx + nu), (nx, 1)).copy_from(b);
    let e = (aug * ts).exp();
    (
        e.view((0, 0), (nx, nx)).into_owned(),
        e.view((0, nx), (nx, nu)).into_owned(),
        e.view((0, nx + nu), (nx, 1)).column(0).into_owned(),
    )
}

/// Initial state of instance `index`: positions uniform in `[-3, 3]` around
/// the rest position, zero velocity. Instance streams are independent.
pub fn sample_x_init(cfg: &MassSpringConfig, index: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let rest = rest_positions(cfg);
    let mut x = Vector::zeros(2 * cfg.masses);
    for i in 0..cfg.masses {
        x[i] = rest[i] + rng.gen_range(-3.0..=3.0);
    }
    x
}

fn continuous(cfg: &MassSpringConfig) -> (Matrix, Matrix, Vector) {
    let mm = cfg.masses;
    let nu = cfg.nu();
    let mut ac = Matrix::zeros(2 * mm, 2 * mm);
    ac.view_mut((0, mm), (mm, mm)).fill_with_identity();
    ac.view_mut((mm, 0), (mm, mm)).copy_from(&mass_spring_v(mm, cfg.k, cfg.m));
    for i in 0..mm {
        ac[(mm + i, mm + i)] = -cfg.mu;
    }
    let mut bc = Matrix::zeros(2 * mm, nu);
    bc.view_mut((mm, 0), (mm, nu)).copy_from(&mass_spring_w(mm, cfg.m));
    let mut b = Vector::zeros(2 * mm);
    b[2 * mm - 1] = cfg.k * cfg.w / cfg.m;
    (ac, bc, b)
}

/// Equilibrium positions with zero input: `V p + b_v = 0`.
fn rest_positions(cfg: &MassSpringConfig) -> Vector {
    let (_, _, b) = continuous(cfg);
    let mm = cfg.masses;
    let bv = b.rows(mm, mm).into_owned();
    if bv.iter().all(|&v| v == 0.0) {
        return Vector::zeros(mm);
    }
    let v = mass_spring_v(mm, cfg.k, cfg.m);
    v.lu().solve(&(-bv)).unwrap_or_else(|| Vector::zeros(mm))
}

/// The mass–spring benchmark with initial state [`sample_x_init`]`(cfg, 0)`.
pub fn mass_spring_generate(cfg: &MassSpringConfig) -> Result<OCPProblem, OcpError> {
    if cfg.masses == 0 || cfg.masses % 2 != 0 {
        return Err(OcpError::Config(format!("mass count must be even and positive, got {}", cfg.masses)));
    }
    if cfg.horizon == 0 {
        return Err(OcpError::Config("horizon must be positive".into()));
    }
    let x_init = sample_x_init(cfg, 0);
    mass_spring_with_state(cfg, x_init)
}

/// The mass–spring benchmark from a given initial state.
pub fn mass_spring_with_state(cfg: &MassSpringConfig, x_init: Vector) -> Result<OCPProblem, OcpError> {
    let (mm, nu) = (cfg.masses, cfg.nu());
    let nx = 2 * mm;
    if x_init.len() != nx {
        return Err(OcpError::Shape("initial state".into()));
    }
    let (ac, bc, bcv) = continuous(cfg);
    let (a, b, f) = zoh_discretize(&ac, &bc, &bcv, cfg.sample_time());
    let mut xinf = Vector::zeros(nx);
    xinf.rows_mut(0, mm).copy_from(&rest_positions(cfg));
    let ny = mm + nu;
    let mut c = Matrix::zeros(ny, nx);
    c.view_mut((0, 0), (mm, mm)).fill_with_identity();
    let mut d = Matrix::zeros(ny, nu);
    d.view_mut((mm, 0), (nu, nu)).fill_with_identity();
    let mut bu = Vector::zeros(ny);
    for i in 0..ny {
        bu[i] = if i < mm { xinf[i] + 4.0 } else { 0.5 };
    }
    let mut bl = Vector::zeros(ny);
    for i in 0..ny {
        bl[i] = if i < mm { xinf[i] - 4.0 } else { -0.5 };
    }
    let q_lin = -&xinf;
    let stage = QpStage {
        a,
        b,
        f,
        r: Matrix::identity(nu, nu),
        s: Matrix::zeros(nu, nx),
        q: Matrix::identity(nx, nx),
        r_lin: Vector::zeros(nu),
        q_lin: q_lin.clone(),
        c: c.clone(),
        d,
        bl: bl.clone(),
        bu: bu.clone(),
    };
    let mut tbl = bl;
    let mut tbu = bu;
    for i in mm..ny {
        tbl[i] = f64::NEG_INFINITY;
        tbu[i] = f64::INFINITY;
    }
    Ok(OCPProblem {
        nx,
        nu,
        stages: vec![stage; cfg.horizon],
        terminal: Terminal { q: Matrix::identity(nx, nx), q_lin, c, bl: tbl, bu: tbu },
        x_init,
        e: None,
    })
}
