//! Matrix-free conjugate gradients for symmetric positive definite operators.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// A deterministic linear map on fields over a fixed grid. Implementations
/// must be symmetric and positive semidefinite on their documented domain.
pub trait LinearOperator {
    fn grid(&self) -> &Grid;
    fn apply(&self, u: &Field) -> Result<Field>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// `||A x - b||_2 / ||b||_2` (plain Euclidean norms), 0 when b = 0.
    pub relative_residual: f64,
}

/// Solve `A x = b` to `||A x - b||_2 <= tol * ||b||_2`.
///
/// The initial guess is zero unless `warm_start` is given. Non-convergence
/// after `max_iter` iterations and loss of positive definiteness are reported
/// as errors, never silently.
pub fn cg_solve(
    a: &dyn LinearOperator,
    b: &Field,
    warm_start: Option<&Field>,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, CgReport)> {
    if b.grid() != a.grid() {
        return Err(Error::GridMismatch);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("cg tol must be > 0".into()));
    }
    let b_norm = b.norm2();
    if b_norm == 0.0 && warm_start.is_none() {
        return Ok((
            Field::zeros(b.grid()),
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let mut x = match warm_start {
        Some(x0) => {
            if x0.grid() != a.grid() {
                return Err(Error::GridMismatch);
            }
            x0.clone()
        }
        None => Field::zeros(b.grid()),
    };

    // r = b - A x
    let ax = a.apply(&x)?;
    let mut r: Vec<f64> = b
        .values()
        .iter()
        .zip(ax.values())
        .map(|(bi, axi)| bi - axi)
        .collect();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let threshold = if b_norm == 0.0 { tol } else { tol * b_norm };
    let rel = |rr: f64| {
        if b_norm == 0.0 {
            rr.sqrt()
        } else {
            rr.sqrt() / b_norm
        }
    };
    if rr.sqrt() <= threshold {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: rel(rr),
            },
        ));
    }

    let mut p = Field::from_values(b.grid(), r.clone())?;
    for iter in 1..=max_iter {
        let ap = a.apply(&p)?;
        let pap: f64 = p
            .values()
            .iter()
            .zip(ap.values())
            .map(|(a, b)| a * b)
            .sum();
        if !pap.is_finite() || !rr.is_finite() {
            return Err(Error::NonFinite { context: "cg iteration" });
        }
        if pap <= 0.0 {
            return Err(Error::CgIndefinite { iteration: iter });
        }
        let alpha = rr / pap;
        for (xi, pi) in x.values_mut().iter_mut().zip(p.values()) {
            *xi += alpha * pi;
        }
        for (ri, api) in r.iter_mut().zip(ap.values()) {
            *ri -= alpha * api;
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        if rr_new.sqrt() <= threshold {
            return Ok((
                x,
                CgReport {
                    iterations: iter,
                    relative_residual: rel(rr_new),
                },
            ));
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.values_mut().iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Err(Error::CgMaxIter {
        max_iter,
        residual: rel(rr),
    })
}

/// `shift * v - laplacian(v)`: the operator behind the linear schemes.
pub struct ShiftedLaplacian {
    grid: Grid,
    shift: f64,
}

impl ShiftedLaplacian {
    pub fn new(grid: Grid, shift: f64) -> Self {
        Self { grid, shift }
    }
}

impl LinearOperator for ShiftedLaplacian {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn apply(&self, u: &Field) -> Result<Field> {
        let lap = crate::grid::laplacian_apply(&self.grid, u)?;
        let values = u
            .values()
            .iter()
            .zip(lap.values())
            .map(|(ui, li)| self.shift * ui - li)
            .collect();
        Field::from_values(&self.grid, values)
    }
}

/// `diag .* v - laplacian(v)` with a per-cell diagonal: Newton Jacobians.
pub struct DiagPlusLaplacian {
    grid: Grid,
    diag: Vec<f64>,
}

impl DiagPlusLaplacian {
    pub fn new(grid: Grid, diag: Vec<f64>) -> Result<Self> {
        if diag.len() != grid.cells() {
            return Err(Error::ShapeMismatch {
                len: diag.len(),
                cells: grid.cells(),
            });
        }
        Ok(Self { grid, diag })
    }
}

impl LinearOperator for DiagPlusLaplacian {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn apply(&self, u: &Field) -> Result<Field> {
        let lap = crate::grid::laplacian_apply(&self.grid, u)?;
        let values = u
            .values()
            .iter()
            .zip(lap.values())
            .zip(&self.diag)
            .map(|((ui, li), di)| di * ui - li)
            .collect();
        Field::from_values(&self.grid, values)
    }
}
