//! The double-well energy, the auxiliary variable `p = sqrt(F)`, and the
//! convex quadratic models obtained by linearizing `p` at a previous iterate.
//!
//! The potential term is assembled with nodal (cell-wise) quadrature, so the
//! pointwise inequalities between `p`, its linearization and the potential
//! lift to the discrete energies with no quadrature slack. Gradients are
//! reported with respect to the `h^d`-weighted inner product, which makes them
//! mesh-size independent as functions.

use crate::error::{Error, Result};
use crate::grid::{dirichlet_energy, inner_product, laplacian_apply, Field};
use crate::cg::LinearOperator;

/// Interface-width parameter of the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    epsilon: f64,
}

impl EnergyParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn inv_eps2(&self) -> f64 {
        1.0 / (self.epsilon * self.epsilon)
    }
}

/// Double-well potential `F(s) = 1/4 (s^2 - 1)^2`.
pub fn potential_f(s: f64) -> f64 {
    let t = s * s - 1.0;
    0.25 * t * t
}

/// Derivative of the double-well potential, `F'(s) = s (s^2 - 1)`.
pub fn potential_df(s: f64) -> f64 {
    s * (s * s - 1.0)
}

/// Auxiliary variable `p(s) = 1/2 (s^2 - 1)`; satisfies `p^2 = F` exactly.
pub fn potential_p(s: f64) -> f64 {
    0.5 * (s * s - 1.0)
}

/// Linearization of `p` at `anchor`: `anchor*s - anchor^2/2 - 1/2`.
///
/// Tangent to `p` at the anchor, and below it everywhere (`p` is convex).
pub fn p_linearized(s: f64, anchor: f64) -> f64 {
    anchor * s - 0.5 * anchor * anchor - 0.5
}

/// The energy `E(u) = dirichlet_energy(u) + h^d/eps^2 * sum_i F(u_i)`.
pub fn energy(u: &Field, params: &EnergyParams) -> Result<f64> {
    let grad = dirichlet_energy(u.grid(), u)?;
    let pot: f64 = u.values().iter().map(|&s| potential_f(s)).sum();
    Ok(grad + u.grid().cell_volume() * params.inv_eps2() * pot)
}

/// Convex quadratic model of the energy anchored at a previous iterate.
///
/// Without a time step this is the majorizer built from the linearized
/// auxiliary variable; with a time step `k` it gains the proximal term
/// `1/(2k) ||u - anchor||^2` and becomes the objective of one implicit
/// Allen-Cahn step.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    anchor: Field,
    params: EnergyParams,
    time_step: Option<f64>,
}

impl QuadraticModel {
    /// Model of the plain energy (no time-step term).
    pub fn majorizer(anchor: Field, params: EnergyParams) -> Result<Self> {
        Self::build(anchor, params, None)
    }

    /// Model with the proximal time-step term `1/(2k) ||u - anchor||^2`.
    pub fn proximal(anchor: Field, params: EnergyParams, time_step: f64) -> Result<Self> {
        if !(time_step > 0.0) || !time_step.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be > 0, got {time_step}"
            )));
        }
        Self::build(anchor, params, Some(time_step))
    }

    fn build(anchor: Field, params: EnergyParams, time_step: Option<f64>) -> Result<Self> {
        if !anchor.is_finite() {
            return Err(Error::NonFinite { context: "model anchor" });
        }
        let model = Self {
            anchor,
            params,
            time_step,
        };
        // Tangency at the anchor is structural; catch regressions early.
        debug_assert!({
            let at_anchor = model.value(&model.anchor).unwrap();
            let e = energy(&model.anchor, &model.params).unwrap();
            (at_anchor - e).abs() <= 1e-12 * (1.0 + e.abs())
        });
        Ok(model)
    }

    pub fn anchor(&self) -> &Field {
        &self.anchor
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn time_step(&self) -> Option<f64> {
        self.time_step
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.same_grid(&self.anchor) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Model value at `u`.
    pub fn value(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        let grad = dirichlet_energy(u.grid(), u)?;
        let mut pot = 0.0;
        for (&s, &a) in u.values().iter().zip(self.anchor.values()) {
            let pl = p_linearized(s, a);
            pot += pl * pl;
        }
        let vol = u.grid().cell_volume();
        let mut total = grad + vol * self.params.inv_eps2() * pot;
        if let Some(k) = self.time_step {
            let diff2: f64 = u
                .values()
                .iter()
                .zip(self.anchor.values())
                .map(|(&s, &a)| (s - a) * (s - a))
                .sum();
            total += vol / (2.0 * k) * diff2;
        }
        Ok(total)
    }

    /// Gradient of the model at `u` with respect to the weighted inner product:
    /// `-lap(u) + 2/eps^2 * anchor .* p_linearized(u; anchor) [+ (u - anchor)/k]`.
    pub fn gradient(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let lap = laplacian_apply(u.grid(), u)?;
        let c = 2.0 * self.params.inv_eps2();
        let inv_k = self.time_step.map(|k| 1.0 / k);
        let values = u
            .values()
            .iter()
            .zip(self.anchor.values())
            .zip(lap.values())
            .map(|((&s, &a), &l)| {
                let mut g = -l + c * a * p_linearized(s, a);
                if let Some(ik) = inv_k {
                    g += ik * (s - a);
                }
                g
            })
            .collect();
        Field::from_values(u.grid(), values)
    }

    /// Hessian action `-lap(v) + 2/eps^2 * anchor^2 .* v [+ v/k]`;
    /// independent of the evaluation point since the model is quadratic.
    pub fn hessian_apply(&self, v: &Field) -> Result<Field> {
        self.check(v)?;
        let lap = laplacian_apply(v.grid(), v)?;
        let c = 2.0 * self.params.inv_eps2();
        let inv_k = self.time_step.map(|k| 1.0 / k);
        let values = v
            .values()
            .iter()
            .zip(self.anchor.values())
            .zip(lap.values())
            .map(|((&s, &a), &l)| {
                let mut h = -l + c * a * a * s;
                if let Some(ik) = inv_k {
                    h += ik * s;
                }
                h
            })
            .collect();
        Field::from_values(v.grid(), values)
    }

    /// The Hessian as a linear operator (for conjugate gradients).
    pub fn hessian(&self) -> ModelHessian<'_> {
        ModelHessian { model: self }
    }
}

/// [`LinearOperator`] view of a model's Hessian.
pub struct ModelHessian<'a> {
    model: &'a QuadraticModel,
}

impl LinearOperator for ModelHessian<'_> {
    fn grid(&self) -> &crate::grid::Grid {
        self.model.anchor.grid()
    }

    fn apply(&self, u: &Field) -> Result<Field> {
        self.model.hessian_apply(u)
    }
}

/// Largest-eigenvalue estimate of a PSD operator by a fixed number of power
/// iterations from a deterministic pseudo-random start.
pub fn operator_norm_estimate(op: &dyn LinearOperator, iterations: usize) -> Result<f64> {
    let g = op.grid();
    let mut rng = crate::harness::SplitMix64::new(0x9e37_79b9_7f4a_7c15 ^ g.cells() as u64);
    let mut v = Field::from_values(g, (0..g.cells()).map(|_| rng.next_symmetric()).collect())?;
    let mut lambda = 1.0f64;
    for _ in 0..iterations {
        let n = v.norm2();
        if !(n > 0.0) || !n.is_finite() {
            return Ok(lambda.max(1.0));
        }
        for x in v.values_mut() {
            *x /= n;
        }
        let av = op.apply(&v)?;
        let num: f64 = v
            .values()
            .iter()
            .zip(av.values())
            .map(|(a, b)| a * b)
            .sum();
        lambda = num.max(0.0);
        v = av;
    }
    Ok(if lambda > 0.0 { lambda } else { 1.0 })
}

/// Directional derivative `<gradient, v>` convenience used by tests and checks.
pub fn directional_derivative(m: &QuadraticModel, u: &Field, v: &Field) -> Result<f64> {
    inner_product(&m.gradient(u)?, v)
}
