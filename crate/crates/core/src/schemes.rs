//! Time-stepping schemes for the Allen-Cahn gradient flow and the iterative
//! constrained minimization of the double-well energy.
//!
//! Every driver records an [`EnergyTrace`]: one row per step (including the
//! initial state) with the energy, the model value where one exists, the
//! max-norm of the state and the inner-solver diagnostics.

use std::io::Write;
use std::time::Instant;

use crate::cg::{cg_solve, DiagPlusLaplacian, ShiftedLaplacian};
use crate::energy::{energy, potential_df, EnergyParams, QuadraticModel};
use crate::error::{Error, Result};
use crate::grid::{axpy, l2_norm, laplacian_apply, Field};
use crate::qp::{default_qp_max_iter, solve_box_qp, BoxConstraint};

/// Relative energy-flatness threshold of the minimization stopping rule.
pub const ENERGY_FLAT_REL: f64 = 1e-12;
/// Euclidean iterate-flatness threshold of the minimization stopping rule.
pub const ITERATE_FLAT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Algorithm1,
    IeqConstrained,
    IeqUnconstrained,
    ConvexSplitting,
    FullyImplicit,
    SemiImplicitStabilized,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Algorithm1,
        SchemeKind::IeqConstrained,
        SchemeKind::IeqUnconstrained,
        SchemeKind::ConvexSplitting,
        SchemeKind::FullyImplicit,
        SchemeKind::SemiImplicitStabilized,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::Algorithm1 => "algorithm1",
            SchemeKind::IeqConstrained => "ieq_constrained",
            SchemeKind::IeqUnconstrained => "ieq_unconstrained",
            SchemeKind::ConvexSplitting => "convex_splitting",
            SchemeKind::FullyImplicit => "fully_implicit",
            SchemeKind::SemiImplicitStabilized => "semi_implicit_stabilized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Schemes whose iterates are constrained to the unit box.
    pub fn is_constrained(&self) -> bool {
        matches!(self, SchemeKind::Algorithm1 | SchemeKind::IeqConstrained)
    }
}

/// Parameters shared by all drivers. `time_step` is ignored by Algorithm 1
/// and `stabilization` only matters for the stabilized semi-implicit scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub epsilon: f64,
    pub time_step: f64,
    pub stabilization: f64,
    /// Outer steps (or outer minimization iterations for Algorithm 1).
    pub steps: usize,
    pub qp_tol: f64,
    /// `None` means 10x the number of cells.
    pub qp_max_iter: Option<usize>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub cg_tol: f64,
    /// `None` means 10x the number of cells.
    pub cg_max_iter: Option<usize>,
}

impl SchemeConfig {
    pub fn new(scheme: SchemeKind, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            scheme,
            epsilon,
            time_step: 0.1,
            stabilization: 1.0,
            steps: 100,
            qp_tol: 1e-8,
            qp_max_iter: None,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            cg_tol: 1e-12,
            cg_max_iter: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("k", self.time_step)?;
        positive("qp_tol", self.qp_tol)?;
        positive("newton_tol", self.newton_tol)?;
        positive("cg_tol", self.cg_tol)?;
        if !(self.stabilization >= 0.0) || !self.stabilization.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "stabilization must be >= 0, got {}",
                self.stabilization
            )));
        }
        Ok(())
    }

    pub fn params(&self) -> EnergyParams {
        EnergyParams::new(self.epsilon).expect("validated")
    }

    fn qp_cap(&self, cells: usize) -> usize {
        self.qp_max_iter.unwrap_or_else(|| default_qp_max_iter(cells))
    }

    fn cg_cap(&self, cells: usize) -> usize {
        self.cg_max_iter.unwrap_or(10 * cells)
    }
}

/// One record of an [`EnergyTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub energy: f64,
    pub model_value: Option<f64>,
    pub max_abs_u: f64,
    pub inner_iters: Option<usize>,
    pub inner_status: Option<&'static str>,
    pub wall_ms: f64,
    /// Dissipation-law diagnostic `(dE/k) / ||u_t||^2`; informational, not
    /// part of the CSV schema.
    pub rate_ratio: Option<f64>,
}

/// Per-step record of energies and solver diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    rows: Vec<TraceRow>,
}

impl EnergyTrace {
    pub const CSV_HEADER: &'static str =
        "step,energy,model_value,max_abs_u,inner_iters,inner_status,wall_ms";

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.energy).collect()
    }

    pub fn final_energy(&self) -> f64 {
        self.rows.last().map(|r| r.energy).unwrap_or(f64::NAN)
    }

    fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            let model = r.model_value.map(|v| format!("{v}")).unwrap_or_default();
            let iters = r.inner_iters.map(|v| v.to_string()).unwrap_or_default();
            let status = r.inner_status.unwrap_or("");
            writeln!(
                w,
                "{},{},{},{},{},{},{:.3}",
                r.step, r.energy, model, r.max_abs_u, iters, status, r.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("csv is utf8")
    }
}

/// Inner-solver diagnostics of a single scheme step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub inner_iterations: usize,
    pub inner_status: &'static str,
    /// Value of the model the step minimizes, where one exists.
    pub model_value: Option<f64>,
}

/// Iterative constrained minimization of the energy: each outer iteration
/// minimizes the quadratic majorizer anchored at the previous iterate over the
/// unit box, which can only lower the energy.
///
/// Stops after `cfg.steps` iterations or once the energy and the iterate are
/// both flat (the energy sequence is non-increasing and bounded, so flatness
/// is the natural certificate).
pub fn minimize_algorithm1(u0: &Field, cfg: &SchemeConfig) -> Result<(Field, EnergyTrace)> {
    minimize_algorithm1_observed(u0, cfg, |_, _| Ok(()))
}

pub fn minimize_algorithm1_observed(
    u0: &Field,
    cfg: &SchemeConfig,
    mut observe: impl FnMut(usize, &Field) -> Result<()>,
) -> Result<(Field, EnergyTrace)> {
    cfg.validate()?;
    let bounds = BoxConstraint::unit();
    if !u0.is_finite() {
        return Err(Error::NonFinite { context: "initial state" });
    }
    if !bounds.contains(u0, 1e-12) {
        return Err(Error::Infeasible {
            max_abs: u0.max_abs(),
            bound: bounds.upper,
        });
    }
    let params = cfg.params();
    let cells = u0.grid().cells();
    let mut u = crate::qp::project_to_box(u0, &bounds);
    let mut e = energy(&u, &params)?;

    let mut trace = EnergyTrace::default();
    trace.push(initial_row(e, &u));
    observe(0, &u)?;

    for step in 1..=cfg.steps {
        let clock = Instant::now();
        let model = QuadraticModel::majorizer(u.clone(), params)?;
        let (next, rep) = solve_box_qp(&model, &u, &bounds, cfg.qp_tol, cfg.qp_cap(cells))?;
        let e_next = energy(&next, &params)?;
        if !e_next.is_finite() {
            return Err(Error::NonFinite { context: "energy" });
        }
        trace.push(TraceRow {
            step,
            energy: e_next,
            model_value: Some(rep.final_model_value),
            max_abs_u: next.max_abs(),
            inner_iters: Some(rep.iterations),
            inner_status: Some(rep.status.as_str()),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            rate_ratio: None,
        });
        observe(step, &next)?;
        let energy_flat = (e - e_next).abs() <= ENERGY_FLAT_REL * (1.0 + e_next.abs());
        let iterate_flat = axpy(&next, -1.0, &u)?.norm2() <= ITERATE_FLAT_TOL;
        u = next;
        e = e_next;
        if energy_flat && iterate_flat {
            break;
        }
    }
    Ok((u, trace))
}

fn initial_row(e: f64, u: &Field) -> TraceRow {
    TraceRow {
        step: 0,
        energy: e,
        model_value: None,
        max_abs_u: u.max_abs(),
        inner_iters: None,
        inner_status: None,
        wall_ms: 0.0,
        rate_ratio: None,
    }
}

/// One constrained IEQ step: minimize the proximal quadratic model over the
/// unit box. Unconditionally energy stable in the original energy.
pub fn step_ieq_constrained(u_prev: &Field, cfg: &SchemeConfig) -> Result<(Field, StepReport)> {
    cfg.validate()?;
    let model = QuadraticModel::proximal(u_prev.clone(), cfg.params(), cfg.time_step)?;
    let cells = u_prev.grid().cells();
    let (u, rep) = solve_box_qp(
        &model,
        u_prev,
        &BoxConstraint::unit(),
        cfg.qp_tol,
        cfg.qp_cap(cells),
    )?;
    Ok((
        u,
        StepReport {
            inner_iterations: rep.iterations,
            inner_status: rep.status.as_str(),
            model_value: Some(rep.final_model_value),
        },
    ))
}

/// One unconstrained IEQ step: the linear system
/// `(1/k) u - lap(u) + 2/eps^2 prev^2 .* u = (1/k) prev + (prev^3 + prev)/eps^2`,
/// i.e. the unconstrained minimizer of the proximal model. The iterate may
/// leave the unit box; `max_abs` of the result is the bound diagnostic.
pub fn step_ieq_unconstrained(u_prev: &Field, cfg: &SchemeConfig) -> Result<(Field, StepReport)> {
    cfg.validate()?;
    if !u_prev.is_finite() {
        return Err(Error::NonFinite { context: "previous state" });
    }
    let params = cfg.params();
    let k = cfg.time_step;
    let inv_eps2 = 1.0 / (cfg.epsilon * cfg.epsilon);
    let model = QuadraticModel::proximal(u_prev.clone(), params, k)?;
    let rhs = Field::from_values(
        u_prev.grid(),
        u_prev
            .values()
            .iter()
            .map(|&a| a / k + (a * a * a + a) * inv_eps2)
            .collect(),
    )?;
    let cells = u_prev.grid().cells();
    let (u, rep) = cg_solve(
        &model.hessian(),
        &rhs,
        Some(u_prev),
        cfg.cg_tol,
        cfg.cg_cap(cells),
    )?;
    let model_value = model.value(&u)?;
    Ok((
        u,
        StepReport {
            inner_iterations: rep.iterations,
            inner_status: "converged",
            model_value: Some(model_value),
        },
    ))
}

/// Max-norm residual of the unconstrained IEQ equation at `u`; diagnostic for
/// plugging a solution back into the scheme.
pub fn ieq_unconstrained_residual(u: &Field, u_prev: &Field, cfg: &SchemeConfig) -> Result<f64> {
    let inv_eps2 = 1.0 / (cfg.epsilon * cfg.epsilon);
    let k = cfg.time_step;
    let lap = laplacian_apply(u.grid(), u)?;
    let mut worst = 0.0f64;
    for ((&un, &a), &l) in u.values().iter().zip(u_prev.values()).zip(lap.values()) {
        let r = (un - a) / k - l + 2.0 * inv_eps2 * a * a * un - inv_eps2 * (a * a * a + a);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// One convex-splitting step: `u^3` treated implicitly, `-u` explicitly.
/// Solved by Newton with an inner conjugate-gradient solve; unconditionally
/// energy stable.
pub fn step_convex_splitting(u_prev: &Field, cfg: &SchemeConfig) -> Result<(Field, StepReport)> {
    cfg.validate()?;
    let inv_eps2 = 1.0 / (cfg.epsilon * cfg.epsilon);
    let k = cfg.time_step;
    let residual = |u: &Field| -> Result<Field> {
        let lap = laplacian_apply(u.grid(), u)?;
        Field::from_values(
            u.grid(),
            u.values()
                .iter()
                .zip(u_prev.values())
                .zip(lap.values())
                .map(|((&un, &a), &l)| (un - a) / k - l + (un * un * un - a) * inv_eps2)
                .collect(),
        )
    };
    let jac_diag = |u: &Field| -> Vec<f64> {
        u.values()
            .iter()
            .map(|&un| 1.0 / k + 3.0 * un * un * inv_eps2)
            .collect()
    };
    newton_solve(u_prev, cfg, &residual, &jac_diag)
}

/// One fully implicit backward-Euler step. Conditionally stable only; Newton
/// may legitimately fail for large time steps, which is surfaced as an error.
pub fn step_fully_implicit(u_prev: &Field, cfg: &SchemeConfig) -> Result<(Field, StepReport)> {
    cfg.validate()?;
    let inv_eps2 = 1.0 / (cfg.epsilon * cfg.epsilon);
    let k = cfg.time_step;
    let residual = |u: &Field| -> Result<Field> {
        let lap = laplacian_apply(u.grid(), u)?;
        Field::from_values(
            u.grid(),
            u.values()
                .iter()
                .zip(u_prev.values())
                .zip(lap.values())
                .map(|((&un, &a), &l)| (un - a) / k - l + potential_df(un) * inv_eps2)
                .collect(),
        )
    };
    let jac_diag = |u: &Field| -> Vec<f64> {
        u.values()
            .iter()
            .map(|&un| 1.0 / k + (3.0 * un * un - 1.0) * inv_eps2)
            .collect()
    };
    newton_solve(u_prev, cfg, &residual, &jac_diag)
}

fn newton_solve(
    u_prev: &Field,
    cfg: &SchemeConfig,
    residual: &dyn Fn(&Field) -> Result<Field>,
    jac_diag: &dyn Fn(&Field) -> Vec<f64>,
) -> Result<(Field, StepReport)> {
    if !u_prev.is_finite() {
        return Err(Error::NonFinite { context: "previous state" });
    }
    let cells = u_prev.grid().cells();
    let mut u = u_prev.clone();
    let mut r = residual(&u)?;
    let mut r_norm = r.max_abs();
    let mut cg_total = 0;
    for iter in 0..cfg.newton_max_iter {
        if !r_norm.is_finite() {
            return Err(Error::NonFinite { context: "newton residual" });
        }
        if r_norm <= cfg.newton_tol {
            return Ok((
                u,
                StepReport {
                    inner_iterations: iter + cg_total,
                    inner_status: "converged",
                    model_value: None,
                },
            ));
        }
        let jac = DiagPlusLaplacian::new(u.grid().clone(), jac_diag(&u))?;
        let neg_r = Field::from_values(u.grid(), r.values().iter().map(|v| -v).collect())?;
        let (delta, cg_rep) = cg_solve(&jac, &neg_r, None, cfg.cg_tol, cfg.cg_cap(cells))?;
        cg_total += cg_rep.iterations;

        // step-halving on the max-norm residual
        let mut theta = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let trial = axpy(&u, theta, &delta)?;
            let r_trial = residual(&trial)?;
            let t_norm = r_trial.max_abs();
            if t_norm.is_finite() && t_norm < r_norm {
                u = trial;
                r = r_trial;
                r_norm = t_norm;
                accepted = true;
                break;
            }
            theta *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonStall { residual: r_norm });
        }
    }
    if r_norm <= cfg.newton_tol {
        return Ok((
            u,
            StepReport {
                inner_iterations: cfg.newton_max_iter + cg_total,
                inner_status: "converged",
                model_value: None,
            },
        ));
    }
    Err(Error::NewtonMaxIter {
        max_iter: cfg.newton_max_iter,
        residual: r_norm,
    })
}

/// One stabilized semi-implicit step: a single linear solve of
/// `(1/k + S/eps^2) u - lap(u) = (1/k + S/eps^2) prev - f(prev)/eps^2`.
pub fn step_semi_implicit_stabilized(
    u_prev: &Field,
    cfg: &SchemeConfig,
) -> Result<(Field, StepReport)> {
    cfg.validate()?;
    if !u_prev.is_finite() {
        return Err(Error::NonFinite { context: "previous state" });
    }
    let inv_eps2 = 1.0 / (cfg.epsilon * cfg.epsilon);
    let k = cfg.time_step;
    let shift = 1.0 / k + cfg.stabilization * inv_eps2;
    let op = ShiftedLaplacian::new(u_prev.grid().clone(), shift);
    let rhs = Field::from_values(
        u_prev.grid(),
        u_prev
            .values()
            .iter()
            .map(|&a| shift * a - potential_df(a) * inv_eps2)
            .collect(),
    )?;
    let cells = u_prev.grid().cells();
    let (u, rep) = cg_solve(&op, &rhs, Some(u_prev), cfg.cg_tol, cfg.cg_cap(cells))?;
    Ok((
        u,
        StepReport {
            inner_iterations: rep.iterations,
            inner_status: "converged",
            model_value: None,
        },
    ))
}

fn dispatch_step(u_prev: &Field, cfg: &SchemeConfig) -> Result<(Field, StepReport)> {
    match cfg.scheme {
        SchemeKind::IeqConstrained => step_ieq_constrained(u_prev, cfg),
        SchemeKind::IeqUnconstrained => step_ieq_unconstrained(u_prev, cfg),
        SchemeKind::ConvexSplitting => step_convex_splitting(u_prev, cfg),
        SchemeKind::FullyImplicit => step_fully_implicit(u_prev, cfg),
        SchemeKind::SemiImplicitStabilized => step_semi_implicit_stabilized(u_prev, cfg),
        SchemeKind::Algorithm1 => unreachable!("algorithm1 dispatches to minimize"),
    }
}

/// Apply the configured scheme `cfg.steps` times, recording the trace.
/// Dispatches to [`minimize_algorithm1`] when the scheme is Algorithm 1.
pub fn evolve(u0: &Field, cfg: &SchemeConfig) -> Result<(Field, EnergyTrace)> {
    evolve_observed(u0, cfg, |_, _| Ok(()))
}

/// [`evolve`] with a per-step observer (step index, state); the observer is
/// invoked for step 0 as well, mirroring the trace.
pub fn evolve_observed(
    u0: &Field,
    cfg: &SchemeConfig,
    mut observe: impl FnMut(usize, &Field) -> Result<()>,
) -> Result<(Field, EnergyTrace)> {
    cfg.validate()?;
    if !u0.is_finite() {
        return Err(Error::NonFinite { context: "initial state" });
    }
    let bounds = BoxConstraint::unit();
    let mut u = u0.clone();
    if cfg.scheme.is_constrained() && !bounds.contains(&u, 1e-12) {
        eprintln!(
            "warning: initial state has max|u| = {:.6} > 1; projecting onto the unit box for scheme {}",
            u.max_abs(),
            cfg.scheme.as_str()
        );
        u = crate::qp::project_to_box(&u, &bounds);
    }
    if cfg.scheme == SchemeKind::Algorithm1 {
        return minimize_algorithm1_observed(&u, cfg, observe);
    }

    let params = cfg.params();
    let mut e = energy(&u, &params)?;
    let mut trace = EnergyTrace::default();
    trace.push(initial_row(e, &u));
    observe(0, &u)?;

    for step in 1..=cfg.steps {
        let clock = Instant::now();
        let (next, rep) = dispatch_step(&u, cfg)?;
        let e_next = energy(&next, &params)?;
        if !e_next.is_finite() {
            return Err(Error::NonFinite { context: "energy" });
        }
        let rate_ratio = dissipation_ratio(&u, &next, e, e_next, cfg.time_step);
        trace.push(TraceRow {
            step,
            energy: e_next,
            model_value: rep.model_value,
            max_abs_u: next.max_abs(),
            inner_iters: Some(rep.inner_iterations),
            inner_status: Some(rep.inner_status),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            rate_ratio,
        });
        observe(step, &next)?;
        u = next;
        e = e_next;
    }
    Ok((u, trace))
}

/// `((E_prev - E_next)/k) / ||(u_next - u_prev)/k||^2` in the weighted L2
/// norm: the discrete counterpart of the continuous dissipation law, which
/// both sides approach as `k -> 0`.
pub fn dissipation_ratio(
    u_prev: &Field,
    u_next: &Field,
    e_prev: f64,
    e_next: f64,
    k: f64,
) -> Option<f64> {
    let diff = axpy(u_next, -1.0, u_prev).ok()?;
    let ut_norm2 = {
        let n = l2_norm(&diff) / k;
        n * n
    };
    if ut_norm2 <= 0.0 {
        return None;
    }
    Some(((e_prev - e_next) / k) / ut_norm2)
}

/// Minimize the energy majorizer *without* the box constraint (linear solves
/// instead of the constrained QP). The energy-decrease proof needs the
/// constraint; this exists to demonstrate what breaks without it and is not
/// used by any scheme.
pub fn algorithm1_unconstrained_demo(
    u0: &Field,
    cfg: &SchemeConfig,
) -> Result<(Field, Vec<f64>)> {
    cfg.validate()?;
    let params = cfg.params();
    let inv_eps2 = 1.0 / (cfg.epsilon * cfg.epsilon);
    let cells = u0.grid().cells();
    let mut u = u0.clone();
    let mut energies = vec![energy(&u, &params)?];
    for _ in 0..cfg.steps {
        let model = QuadraticModel::majorizer(u.clone(), params)?;
        // stationarity of the majorizer: (-lap + 2/eps^2 a^2) u = (a^3 + a)/eps^2
        let rhs = Field::from_values(
            u.grid(),
            u.values()
                .iter()
                .map(|&a| (a * a * a + a) * inv_eps2)
                .collect(),
        )?;
        match cg_solve(&model.hessian(), &rhs, Some(&u), 1e-8, cfg.cg_cap(cells)) {
            Ok((next, _)) => u = next,
            Err(_) => break, // the unconstrained model can be singular; stop the demo
        }
        energies.push(energy(&u, &params)?);
    }
    Ok((u, energies))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::harness::SplitMix64;

    fn unit_interval(n: usize) -> Grid {
        Grid::from_extent(&[n], &[1.0], &[0.0]).unwrap()
    }

    fn cfg(scheme: SchemeKind, epsilon: f64, k: f64) -> SchemeConfig {
        let mut c = SchemeConfig::new(scheme, epsilon).unwrap();
        c.time_step = k;
        c
    }

    fn random_in_k(g: &Grid, seed: u64) -> Field {
        let mut rng = SplitMix64::new(seed);
        Field::from_values(g, (0..g.cells()).map(|_| rng.next_symmetric()).collect()).unwrap()
    }

    /// Root of `f(x) = 0` by bisection; independent oracle for the scalar
    /// fixed points of the implicit schemes.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(f(lo) * f(hi) < 0.0, "bisection bracket must straddle the root");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn pure_phases_are_fixed_points_of_every_scheme() {
        let g = unit_interval(8);
        for kind in SchemeKind::ALL {
            for phase in [1.0, -1.0] {
                let u0 = Field::constant(&g, phase);
                let mut c = cfg(kind, 0.5, 0.7);
                c.steps = 2;
                let (u, trace) = evolve(&u0, &c).unwrap();
                assert!(
                    (u.max_abs() - 1.0).abs() < 1e-12,
                    "{} drifted from pure phase {phase}",
                    kind.as_str()
                );
                for row in trace.rows() {
                    assert!(row.energy.abs() <= 1e-12, "{}: energy {}", kind.as_str(), row.energy);
                }
            }
        }
    }

    #[test]
    fn ieq_constant_step_closed_form() {
        // (1/k + 2 a^2) u = a/k + (a^3 + a)/eps^2 with a = 0.5, k = eps = 1:
        // u = 1.125 / 1.5 = 0.75
        let g = unit_interval(4);
        let u_prev = Field::constant(&g, 0.5);
        let mut c = cfg(SchemeKind::IeqUnconstrained, 1.0, 1.0);
        c.cg_tol = 1e-13;
        let (u, _) = step_ieq_unconstrained(&u_prev, &c).unwrap();
        for &v in u.values() {
            assert!((v - 0.75).abs() < 1e-10, "unconstrained: {v}");
        }

        let mut cc = cfg(SchemeKind::IeqConstrained, 1.0, 1.0);
        cc.qp_tol = 1e-12;
        cc.qp_max_iter = Some(100_000);
        let (uc, rep) = step_ieq_constrained(&u_prev, &cc).unwrap();
        for &v in uc.values() {
            assert!((v - 0.75).abs() < 1e-8, "constrained: {v}");
        }
        assert_eq!(rep.inner_status, "converged");
    }

    #[test]
    fn ieq_unconstrained_residual_plugback() {
        let g = Grid::from_extent(&[8, 8], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let u_prev = random_in_k(&g, 3);
        for k in [0.01, 0.5] {
            let mut c = cfg(SchemeKind::IeqUnconstrained, 0.2, k);
            c.cg_tol = 1e-13;
            let (u, _) = step_ieq_unconstrained(&u_prev, &c).unwrap();
            let r = ieq_unconstrained_residual(&u, &u_prev, &c).unwrap();
            assert!(r <= 1e-8, "plug-back residual {r} for k={k}");
        }
    }

    #[test]
    fn ieq_constrained_matches_unconstrained_when_interior() {
        let g = unit_interval(16);
        let mut rng = SplitMix64::new(9);
        let u_prev = Field::from_values(
            &g,
            (0..16).map(|_| 0.5 * rng.next_symmetric()).collect(),
        )
        .unwrap();
        let mut c = cfg(SchemeKind::IeqUnconstrained, 0.5, 0.05);
        c.cg_tol = 1e-13;
        c.qp_tol = 1e-12;
        c.qp_max_iter = Some(200_000);
        let (free, _) = step_ieq_unconstrained(&u_prev, &c).unwrap();
        assert!(free.max_abs() <= 1.0 - 1e-9, "setup should stay interior");
        let (boxed, _) = step_ieq_constrained(&u_prev, &c).unwrap();
        let diff = axpy(&free, -1.0, &boxed).unwrap().max_abs();
        assert!(diff <= 1e-6, "interior agreement: {diff}");
    }

    #[test]
    fn convex_splitting_constant_step_matches_bisection() {
        // u + u^3 = 1 at a = 0.5, k = eps = 1
        let g = unit_interval(4);
        let u_prev = Field::constant(&g, 0.5);
        let c = cfg(SchemeKind::ConvexSplitting, 1.0, 1.0);
        let (u, rep) = step_convex_splitting(&u_prev, &c).unwrap();
        let root = bisect(|x| x * x * x + x - 1.0, 0.0, 1.0);
        assert!((root - 0.6823278).abs() < 1e-6);
        for &v in u.values() {
            assert!((v - root).abs() < 1e-6, "{v} vs bisection {root}");
        }
        assert_eq!(rep.inner_status, "converged");
    }

    #[test]
    fn fully_implicit_constant_step_matches_bisection() {
        // (u - 0.5) + u^3 - u = 0, i.e. u^3 = 0.5
        let g = unit_interval(4);
        let u_prev = Field::constant(&g, 0.5);
        let c = cfg(SchemeKind::FullyImplicit, 1.0, 1.0);
        let (u, _) = step_fully_implicit(&u_prev, &c).unwrap();
        let root = bisect(|x| (x - 0.5) + x * x * x - x, 0.0, 1.0);
        assert!((root - 0.5f64.cbrt()).abs() < 1e-10);
        for &v in u.values() {
            assert!((v - root).abs() < 1e-8, "{v} vs bisection {root}");
        }
        // solver contract: scheme residual at the returned field
        let lap = laplacian_apply(&g, &u).unwrap();
        for ((&un, &a), &l) in u.values().iter().zip(u_prev.values()).zip(lap.values()) {
            let r = (un - a) / 1.0 - l + potential_df(un);
            assert!(r.abs() <= c.newton_tol, "residual {r}");
        }
    }

    #[test]
    fn semi_implicit_constant_step_closed_form() {
        // u = (a (1/k + S/eps^2) - f(a)/eps^2) / (1/k + S/eps^2)
        //   = (0.5 * 3 + 0.375) / 3 = 0.625 for a = 0.5, k = eps = 1, S = 2
        let g = unit_interval(4);
        let u_prev = Field::constant(&g, 0.5);
        let mut c = cfg(SchemeKind::SemiImplicitStabilized, 1.0, 1.0);
        c.stabilization = 2.0;
        c.cg_tol = 1e-13;
        let (u, _) = step_semi_implicit_stabilized(&u_prev, &c).unwrap();
        for &v in u.values() {
            assert!((v - 0.625).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn convex_splitting_energy_stable_across_time_steps() {
        let g = Grid::from_extent(&[12, 12], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let u0 = random_in_k(&g, 17);
        for k in [0.01, 1.0, 100.0] {
            let mut c = cfg(SchemeKind::ConvexSplitting, 0.3, k);
            c.steps = 10;
            let (_, trace) = evolve(&u0, &c).unwrap();
            let e = trace.energies();
            for w in e.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()),
                    "k={k}: energy rose {} -> {}",
                    w[0],
                    w[1]
                );
            }
            assert!(trace.rows().iter().all(|r| r.energy.is_finite()));
        }
    }

    #[test]
    fn semi_implicit_energy_stable_with_default_stabilization() {
        let g = unit_interval(32);
        let u0 = Field::from_fn(&g, |x| ((x[0] - 0.5) / (0.25)).tanh());
        for k in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let mut c = cfg(SchemeKind::SemiImplicitStabilized, 0.5, k);
            c.steps = 10;
            let (_, trace) = evolve(&u0, &c).unwrap();
            let e = trace.energies();
            for w in e.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()),
                    "k={k}: energy rose {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn algorithm1_constant_half_reaches_pure_phase_in_one_iteration() {
        let g = unit_interval(8);
        let u0 = Field::constant(&g, 0.5);
        let mut c = cfg(SchemeKind::Algorithm1, 1.0, 1.0);
        c.steps = 10;
        c.qp_tol = 1e-10;
        c.qp_max_iter = Some(50_000);
        let (u, trace) = minimize_algorithm1(&u0, &c).unwrap();
        for &v in u.values() {
            assert!((v - 1.0).abs() < 1e-8);
        }
        // one iteration suffices: E(u^1) = 0
        assert!(trace.rows()[1].energy.abs() < 1e-14);
        assert!(trace.final_energy().abs() < 1e-14);
        // energy chain: 0 <= E_Q(u^1; u^0) <= E(u^0)
        let e0 = trace.rows()[0].energy;
        let m1 = trace.rows()[1].model_value.unwrap();
        assert!(m1 >= -1e-15 && m1 <= e0 + 1e-12 * (1.0 + e0.abs()));
        assert!((m1 - 0.015625).abs() < 1e-10, "E_Q(1; 0.5) = {m1}");
    }

    #[test]
    fn algorithm1_pure_phase_is_immediately_stationary() {
        let g = unit_interval(8);
        let u0 = Field::constant(&g, 1.0);
        let mut c = cfg(SchemeKind::Algorithm1, 0.2, 1.0);
        c.steps = 50;
        let (u, trace) = minimize_algorithm1(&u0, &c).unwrap();
        assert_eq!(u, u0);
        // stops at the first flat iteration, not after 50
        assert!(trace.len() <= 3, "trace length {}", trace.len());
        assert!(trace.energies().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn algorithm1_monotone_on_seeded_random_state() {
        let g = Grid::from_extent(&[16, 16], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let u0 = random_in_k(&g, 4242);
        let mut c = cfg(SchemeKind::Algorithm1, 0.1, 1.0);
        c.steps = 40;
        c.qp_max_iter = Some(300);
        let (u, trace) = minimize_algorithm1(&u0, &c).unwrap();
        let e = trace.energies();
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        }
        assert!(u.max_abs() <= 1.0);
        assert_eq!(trace.rows().len(), trace.rows().last().unwrap().step + 1);
    }

    #[test]
    fn algorithm1_rejects_infeasible_start() {
        let g = unit_interval(4);
        let u0 = Field::constant(&g, 1.5);
        let c = cfg(SchemeKind::Algorithm1, 1.0, 1.0);
        assert!(matches!(
            minimize_algorithm1(&u0, &c),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn evolve_zero_steps_records_only_initial_state() {
        let g = unit_interval(4);
        let u0 = Field::constant(&g, 0.3);
        let mut c = cfg(SchemeKind::IeqConstrained, 0.5, 1.0);
        c.steps = 0;
        let (u, trace) = evolve(&u0, &c).unwrap();
        assert_eq!(u, u0);
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.rows()[0].step, 0);
    }

    #[test]
    fn evolve_projects_and_warns_for_constrained_schemes() {
        let g = unit_interval(4);
        let u0 = Field::constant(&g, 1.5);
        let mut c = cfg(SchemeKind::IeqConstrained, 0.5, 1.0);
        c.steps = 1;
        let (u, trace) = evolve(&u0, &c).unwrap();
        assert!(u.max_abs() <= 1.0);
        assert!(trace.rows()[0].max_abs_u <= 1.0);
    }

    #[test]
    fn ieq_constrained_energy_chain_across_time_step_sweep() {
        let g = Grid::from_extent(&[12, 12], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let u0 = random_in_k(&g, 99);
        for k in [1e-3, 1.0, 100.0] {
            let mut c = cfg(SchemeKind::IeqConstrained, 0.2, k);
            c.steps = 8;
            c.qp_max_iter = Some(400);
            let (_, trace) = evolve(&u0, &c).unwrap();
            let rows = trace.rows();
            for i in 1..rows.len() {
                let e_prev = rows[i - 1].energy;
                let e = rows[i].energy;
                let jq = rows[i].model_value.unwrap();
                let slack = 1e-12 * (1.0 + e_prev.abs());
                assert!(e <= jq + slack, "k={k}: E > J_Q at step {i}");
                assert!(jq <= e_prev + slack, "k={k}: J_Q > E_prev at step {i}");
            }
        }
    }

    #[test]
    fn dissipation_ratio_near_one_for_small_steps() {
        let g = unit_interval(64);
        let eps = 0.1;
        let u0 = Field::from_fn(&g, |x| ((x[0] - 0.5) / (eps * std::f64::consts::SQRT_2)).tanh());
        let mut c = cfg(SchemeKind::FullyImplicit, eps, 1e-4 * eps * eps);
        c.steps = 5;
        let (_, trace) = evolve(&u0, &c).unwrap();
        for row in &trace.rows()[1..] {
            let ratio = row.rate_ratio.expect("rate recorded");
            assert!((ratio - 1.0).abs() <= 0.2, "dissipation ratio {ratio}");
        }
    }

    #[test]
    fn trace_csv_schema() {
        let g = unit_interval(4);
        let u0 = Field::constant(&g, 0.4);
        let mut c = cfg(SchemeKind::IeqConstrained, 0.5, 0.5);
        c.steps = 2;
        let (_, trace) = evolve(&u0, &c).unwrap();
        let csv = trace.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), EnergyTrace::CSV_HEADER);
        let row0: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row0[0], "0");
        assert!(!row0[1].is_empty());
        assert!(row0[2].is_empty(), "model_value empty at step 0");
        assert!(row0[4].is_empty() && row0[5].is_empty(), "inner fields empty at step 0");
        let row1: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row1[0], "1");
        assert!(!row1[2].is_empty());
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(SchemeConfig::new(SchemeKind::Algorithm1, -1.0).is_err());
        let mut c = cfg(SchemeKind::IeqConstrained, 0.5, 1.0);
        c.time_step = 0.0;
        assert!(c.validate().is_err());
        c.time_step = 1.0;
        c.stabilization = -2.0;
        assert!(c.validate().is_err());
    }
}
