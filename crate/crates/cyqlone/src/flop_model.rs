use crate::CyqloneError;

/// Leading-order multiply-add counts on the critical path of the parallel
/// factorization, next to the serial Riccati recursion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlopModel {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    pub partitions: usize,
    /// Modified Riccati recursion of one column.
    pub riccati: f64,
    /// Schur contribution of one column.
    pub schur: f64,
    /// Cyclic reduction of the Schur complement.
    pub cr: f64,
    pub total: f64,
    pub serial: f64,
    /// `serial / total`.
    pub speedup: f64,
}

pub fn flops_critical_path(nx: usize, nu: usize, horizon: usize, partitions: usize) -> Result<FlopModel, CyqloneError> {
    if partitions == 0 || !partitions.is_power_of_two() || horizon == 0 || horizon % partitions != 0 {
        return Err(CyqloneError::Options(format!(
            "partition count {partitions} must be a power of two dividing the horizon {horizon}"
        )));
    }
    let (x, u) = (nx as f64, nu as f64);
    let ux = x + u;
    let n = (horizon / partitions) as f64;
    let riccati = n * (ux.powi(3) / 6.0 + x * u * u / 2.0 + x * x * u)
        + (n - 1.0) * (1.5 * ux * x * x + 0.5 * ux * ux * x)
        + x.powi(3) / 2.0;
    let schur = 4.0 / 3.0 * x.powi(3) + n * 0.5 * u * x * x;
    let cr = x.powi(3) / 6.0 + (partitions as f64).log2() * 5.0 / 3.0 * x.powi(3);
    let total = riccati + schur + cr;
    let serial = x.powi(3) / 6.0 + horizon as f64 * (0.5 * ux * x * x + 0.5 * ux * ux * x + ux.powi(3) / 6.0);
    Ok(FlopModel { nx, nu, horizon, partitions, riccati, schur, cr, total, serial, speedup: serial / total })
}
