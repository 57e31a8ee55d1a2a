//! Box-constrained minimization of a quadratic model over `K = {|u_i| <= 1}`.
//!
//! The solver is projected gradient with a backtracking line search. Every
//! iterate is feasible and the model value never increases, so callers get the
//! energy-decrease chain even when they stop the inner iteration early.

use crate::energy::{operator_norm_estimate, QuadraticModel};
use crate::error::{Error, Result};
use crate::grid::{inner_product, Field};

pub const DEFAULT_QP_TOL: f64 = 1e-8;
pub const ARMIJO_CONSTANT: f64 = 1e-4;
pub const BACKTRACK_FACTOR: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const FEASIBILITY_SLACK: f64 = 1e-12;

/// Default iteration cap: 10 times the number of cells.
pub fn default_qp_max_iter(cells: usize) -> usize {
    10 * cells
}

/// The feasible box; fixed at [-1, 1] throughout this crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxConstraint {
    pub lower: f64,
    pub upper: f64,
}

impl BoxConstraint {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "box requires lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// The unit box [-1, 1].
    pub fn unit() -> Self {
        Self {
            lower: -1.0,
            upper: 1.0,
        }
    }

    pub fn contains(&self, u: &Field, slack: f64) -> bool {
        u.values()
            .iter()
            .all(|&v| v >= self.lower - slack && v <= self.upper + slack)
    }
}

impl Default for BoxConstraint {
    fn default() -> Self {
        Self::unit()
    }
}

/// Per-cell clamp onto the box; idempotent.
pub fn project_to_box(u: &Field, bounds: &BoxConstraint) -> Field {
    let values = u
        .values()
        .iter()
        .map(|v| v.clamp(bounds.lower, bounds.upper))
        .collect();
    Field::from_values(u.grid(), values).expect("projection preserves shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Converged,
    MaxIter,
    /// The line search could make no further progress; the model is flat
    /// along the remaining directions (degenerate anchor).
    DegenerateFlat,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Converged => "converged",
            QpStatus::MaxIter => "max_iter",
            QpStatus::DegenerateFlat => "degenerate_flat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpReport {
    pub iterations: usize,
    pub final_model_value: f64,
    pub projected_gradient_norm: f64,
    pub status: QpStatus,
}

/// Minimize the model over the box, starting from a feasible point.
///
/// Terminates when `||x - project(x - grad)||_2 <= tol * (1 + ||grad at
/// start||_2)` or after `max_iter` accepted steps. The returned field always
/// satisfies `model.value(result) <= model.value(start)`.
pub fn solve_box_qp(
    model: &QuadraticModel,
    start: &Field,
    bounds: &BoxConstraint,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, QpReport)> {
    if !start.same_grid(model.anchor()) {
        return Err(Error::GridMismatch);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("qp tol must be > 0".into()));
    }
    if !bounds.contains(start, FEASIBILITY_SLACK) {
        return Err(Error::Infeasible {
            max_abs: start.max_abs(),
            bound: bounds.upper,
        });
    }

    let mut x = project_to_box(start, bounds);
    let mut grad = model.gradient(&x)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite { context: "qp gradient" });
    }
    let threshold = tol * (1.0 + grad.norm2());

    // alpha_0 = 1 / (power-method estimate of the Hessian norm)
    let lambda = operator_norm_estimate(&model.hessian(), 10)?;
    let mut alpha = 1.0 / lambda.max(f64::MIN_POSITIVE);

    let mut iterations = 0;
    let status;
    let pg_at_exit;
    loop {
        let pg = projected_gradient_norm(&x, &grad, bounds);
        if pg <= threshold {
            status = QpStatus::Converged;
            pg_at_exit = pg;
            break;
        }
        if iterations >= max_iter {
            status = QpStatus::MaxIter;
            pg_at_exit = pg;
            break;
        }

        // Backtracking: halve the step until the Armijo decrease holds. The
        // decrement of the quadratic along the step is evaluated in its exact
        // form <g, d> + 1/2 <H d, d>; forming model(x+d) - model(x) instead
        // would cancel to nothing near the minimizer and stall the iteration.
        // Every accepted step strictly decreases the model.
        let mut accepted = None;
        let mut a = alpha;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = project_step(&x, a, &grad, bounds);
            let step = diff(&candidate, &x);
            if step.max_abs() == 0.0 {
                break; // no representable movement at this step size
            }
            let slope = inner_product(&grad, &step)?;
            let curvature = inner_product(&model.hessian_apply(&step)?, &step)?;
            if slope + 0.5 * curvature <= ARMIJO_CONSTANT * slope {
                debug_assert!(slope <= 0.0);
                accepted = Some((candidate, a));
                break;
            }
            a *= BACKTRACK_FACTOR;
        }
        match accepted {
            Some((candidate, used_alpha)) => {
                x = candidate;
                alpha = used_alpha;
                grad = model.gradient(&x)?;
                if !grad.is_finite() {
                    return Err(Error::NonFinite { context: "qp gradient" });
                }
                iterations += 1;
            }
            None => {
                status = QpStatus::DegenerateFlat;
                pg_at_exit = pg;
                break;
            }
        }
    }
    let final_model_value = model.value(&x)?;
    Ok((
        x,
        QpReport {
            iterations,
            final_model_value,
            projected_gradient_norm: pg_at_exit,
            status,
        },
    ))
}

fn project_step(x: &Field, alpha: f64, grad: &Field, bounds: &BoxConstraint) -> Field {
    let values = x
        .values()
        .iter()
        .zip(grad.values())
        .map(|(xi, gi)| (xi - alpha * gi).clamp(bounds.lower, bounds.upper))
        .collect();
    Field::from_values(x.grid(), values).expect("projection preserves shape")
}

fn diff(a: &Field, b: &Field) -> Field {
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .collect();
    Field::from_values(a.grid(), values).expect("same grid")
}

fn projected_gradient_norm(x: &Field, grad: &Field, bounds: &BoxConstraint) -> f64 {
    x.values()
        .iter()
        .zip(grad.values())
        .map(|(xi, gi)| {
            let moved = (xi - gi).clamp(bounds.lower, bounds.upper);
            let d = xi - moved;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Max-norm violation of first-order optimality at a feasible point:
/// `|g_i|` at interior cells, `max(0, g_i)` at the upper bound,
/// `max(0, -g_i)` at the lower bound. Zero iff `u` is a constrained
/// stationary point of the model.
pub fn kkt_residual(model: &QuadraticModel, u: &Field, bounds: &BoxConstraint) -> Result<f64> {
    if !bounds.contains(u, FEASIBILITY_SLACK) {
        return Err(Error::Infeasible {
            max_abs: u.max_abs(),
            bound: bounds.upper,
        });
    }
    let grad = model.gradient(u)?;
    let mut worst = 0.0f64;
    for (&ui, &gi) in u.values().iter().zip(grad.values()) {
        let v = if ui >= bounds.upper - FEASIBILITY_SLACK {
            gi.max(0.0)
        } else if ui <= bounds.lower + FEASIBILITY_SLACK {
            (-gi).max(0.0)
        } else {
            gi.abs()
        };
        worst = worst.max(v);
    }
    Ok(worst)
}
