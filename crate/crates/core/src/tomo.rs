//! Regularized travel-time tomography.
//!
//! Solves `(A^T A + eta * Sigma^{-1}) s = A^T t`, where `Sigma(i, j) =
//! exp(-D_ij / S)` is an exponential spatial covariance over cell centers,
//! and clamps the estimate to a positive floor.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldConfig, SensorArray, SlownessModel};
use crate::linalg::{conjugate_gradient, SquareMatrix};
use crate::raytrace::{assemble_event_matrix, RayMatrix, RayRow};
use crate::scalar::Real;
use crate::simulate::EventRecord;

/// Above this many cells the solve switches from Cholesky to CG.
pub const DIRECT_SOLVE_MAX_CELLS: usize = 2500;
const CG_TOLERANCE: f64 = 1e-10;
const COVARIANCE_JITTER: f64 = 1e-10;
/// Lower bound on an automatically chosen `eta`.
pub const ETA_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TomoPrior<T> {
    pub eta: T,
    pub smoothness_km: T,
    /// Slowness std used when `eta` is derived from the noise level.
    pub sigma_s: T,
    pub clamp_min: T,
}

impl<T: Real> TomoPrior<T> {
    /// Defaults for a field: `S` = two cell widths, `sigma_s` = 0.05 s/km,
    /// `eta` = 1e-3, floor 0.01 s/km.
    pub fn defaults_for(config: &FieldConfig<T>) -> Self {
        Self {
            eta: T::lit(1e-3),
            smoothness_km: T::lit(2.0) * config.cell_width(),
            sigma_s: T::lit(0.05),
            clamp_min: T::lit(0.01),
        }
    }

    /// Sets `eta = (sigma_eps / sigma_s)^2` with `sigma_eps = xi * mean(t)`.
    pub fn with_noise_level(mut self, xi: f64, input: &TomoInput<T>) -> Self {
        let n = input.times.len().max(1);
        let mean_t = input.times.iter().map(|t| t.to_f64_lossy()).sum::<f64>() / n as f64;
        let sigma_eps = xi * mean_t;
        let eta = (sigma_eps / self.sigma_s.to_f64_lossy()).powi(2);
        self.eta = T::lit(eta.max(ETA_FLOOR));
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v > T::zero() && v.is_finite();
        if !ok(self.eta) || !ok(self.smoothness_km) || !ok(self.clamp_min) {
            return Err(Error::InvalidParameter(
                "eta, smoothness length and clamp floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Stacked ray rows and measured arrival times from `L` events.
#[derive(Clone, Debug, PartialEq)]
pub struct TomoInput<T> {
    pub rows: Vec<RayRow<T>>,
    pub times: Vec<T>,
    pub config: FieldConfig<T>,
}

impl<T: Real> TomoInput<T> {
    pub fn new(config: FieldConfig<T>) -> Self {
        Self { rows: Vec::new(), times: Vec::new(), config }
    }

    /// Appends one event; rays of zero length (source on a sensor) are
    /// dropped together with their times.
    pub fn push_event(&mut self, matrix: &RayMatrix<T>, times: &[T]) -> Result<()> {
        if matrix.len() != times.len() {
            return Err(Error::Arity { expected: matrix.len(), actual: times.len() });
        }
        for (row, t) in matrix.rows.iter().zip(times) {
            if !row.is_empty() {
                self.rows.push(row.clone());
                self.times.push(*t);
            }
        }
        Ok(())
    }

    /// Traces every recorded event to the sensors.
    pub fn from_events(events: &[EventRecord<T>], sensors: &SensorArray<T>, config: &FieldConfig<T>) -> Result<Self> {
        let mut input = Self::new(*config);
        for e in events {
            let m = assemble_event_matrix(&e.source, sensors, config)?;
            input.push_event(&m, &e.times)?;
        }
        Ok(input)
    }

    fn normal_equations(&self) -> Result<(SquareMatrix<T>, Vec<T>)> {
        let n = self.config.cell_count();
        let mut ata = SquareMatrix::zeros(n);
        let mut atb = vec![T::zero(); n];
        for (row, t) in self.rows.iter().zip(&self.times) {
            for &(i, li) in &row.entries {
                if i >= n {
                    return Err(Error::ConfigMismatch(format!("ray touches cell {i} of {n}")));
                }
                atb[i] = atb[i] + li * *t;
                for &(j, lj) in &row.entries {
                    ata[(i, j)] = ata[(i, j)] + li * lj;
                }
            }
        }
        Ok((ata, atb))
    }

    fn apply_ata(&self, v: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for row in &self.rows {
            let av = row.dot(v);
            for &(i, li) in &row.entries {
                out[i] = out[i] + li * av;
            }
        }
    }
}

/// Which linear solver to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TomoSolver {
    /// Cholesky up to [`DIRECT_SOLVE_MAX_CELLS`], CG above.
    #[default]
    Auto,
    Direct,
    ConjugateGradient,
}

/// Distances between the centers of cells `i` and `j`.
fn center_distance<T: Real>(config: &FieldConfig<T>, i: usize, j: usize) -> T {
    config.cell_center(i).distance(&config.cell_center(j))
}

/// `Sigma + jitter * I` for the grid.
pub fn prior_covariance<T: Real>(config: &FieldConfig<T>, smoothness_km: T) -> SquareMatrix<T> {
    let n = config.cell_count();
    let mut sigma = SquareMatrix::from_fn(n, |i, j| (-center_distance(config, i, j) / smoothness_km).exp());
    sigma.add_diagonal(T::lit(COVARIANCE_JITTER));
    sigma
}

/// `Sigma^{-1}` for one `(grid, S)` pair, reusable across inversions.
#[derive(Clone, Debug)]
pub struct PriorPrecision<T> {
    config: FieldConfig<T>,
    smoothness_km: T,
    precision: SquareMatrix<T>,
}

impl<T: Real> PriorPrecision<T> {
    pub fn new(config: &FieldConfig<T>, smoothness_km: T) -> Result<Self> {
        let chol = prior_covariance(config, smoothness_km).cholesky().map_err(|e| {
            Error::Numerical(format!("prior covariance factorization failed: {e}"))
        })?;
        Ok(Self { config: *config, smoothness_km, precision: chol.inverse() })
    }

    pub fn matrix(&self) -> &SquareMatrix<T> {
        &self.precision
    }

    fn matches(&self, config: &FieldConfig<T>, smoothness_km: T) -> bool {
        self.config == *config && self.smoothness_km == smoothness_km
    }
}

/// Estimates the slowness model from stacked ray rows and times.
pub fn estimate_slowness<T: Real>(input: &TomoInput<T>, prior: &TomoPrior<T>) -> Result<SlownessModel<T>> {
    estimate_slowness_with(input, prior, TomoSolver::Auto, None)
}

/// [`estimate_slowness`] with an explicit solver and an optional cached
/// prior precision.
pub fn estimate_slowness_with<T: Real>(
    input: &TomoInput<T>,
    prior: &TomoPrior<T>,
    solver: TomoSolver,
    cached: Option<&PriorPrecision<T>>,
) -> Result<SlownessModel<T>> {
    prior.validate()?;
    if input.rows.is_empty() {
        return Err(Error::InvalidParameter("tomography needs at least one ray".into()));
    }
    if input.rows.len() != input.times.len() {
        return Err(Error::Arity { expected: input.rows.len(), actual: input.times.len() });
    }
    let n = input.config.cell_count();
    let direct = match solver {
        TomoSolver::Auto => n <= DIRECT_SOLVE_MAX_CELLS,
        TomoSolver::Direct => true,
        TomoSolver::ConjugateGradient => false,
    };
    let raw = if direct {
        solve_direct(input, prior, cached)?
    } else {
        solve_cg(input, prior)?
    };
    let values = raw.into_iter().map(|v| if v > prior.clamp_min { v } else { prior.clamp_min }).collect();
    SlownessModel::from_flat(input.config, values)
}

fn solve_direct<T: Real>(input: &TomoInput<T>, prior: &TomoPrior<T>, cached: Option<&PriorPrecision<T>>) -> Result<Vec<T>> {
    let owned;
    let precision = match cached {
        Some(p) if p.matches(&input.config, prior.smoothness_km) => p,
        Some(_) => {
            return Err(Error::ConfigMismatch("cached prior precision built for another grid".into()))
        }
        None => {
            owned = PriorPrecision::new(&input.config, prior.smoothness_km)?;
            &owned
        }
    };
    let (mut system, rhs) = input.normal_equations()?;
    system.add_scaled(prior.eta, precision.matrix());
    let chol = system.cholesky().map_err(|e| {
        Error::Numerical(format!(
            "regularized normal matrix is singular or indefinite (eta = {}): {e}",
            prior.eta
        ))
    })?;
    Ok(chol.solve(&rhs))
}

/// Iterative path for large grids: with `s = Sigma w` the system becomes
/// `(Sigma A^T A Sigma + eta Sigma) w = Sigma A^T t`, which needs only
/// products with `Sigma`, evaluated matrix-free.
fn solve_cg<T: Real>(input: &TomoInput<T>, prior: &TomoPrior<T>) -> Result<Vec<T>> {
    let cfg = input.config;
    let n = cfg.cell_count();
    let centers: Vec<_> = (0..n).map(|c| cfg.cell_center(c)).collect();
    let jitter = T::lit(COVARIANCE_JITTER);
    let sigma_mul = |v: &[T]| -> Vec<T> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let ci = centers[i];
                let s: T = centers
                    .iter()
                    .zip(v)
                    .map(|(cj, vj)| (-ci.distance(cj) / prior.smoothness_km).exp() * *vj)
                    .sum();
                s + jitter * v[i]
            })
            .collect()
    };
    let mut atb = vec![T::zero(); n];
    for (row, t) in input.rows.iter().zip(&input.times) {
        for &(i, li) in &row.entries {
            atb[i] = atb[i] + li * *t;
        }
    }
    let rhs = sigma_mul(&atb);
    let mut scratch = vec![T::zero(); n];
    let outcome = conjugate_gradient(
        |v, out| {
            let sv = sigma_mul(v);
            input.apply_ata(&sv, &mut scratch);
            let lhs = sigma_mul(&scratch);
            for i in 0..n {
                out[i] = lhs[i] + prior.eta * sv[i];
            }
        },
        &rhs,
        T::lit(CG_TOLERANCE),
        10 * n,
    )?;
    Ok(sigma_mul(&outcome.solution))
}
