//! Acceptance suite: one test per certification criterion, each printing a
//! pass line (run with `--nocapture` to see them). Tolerances are pinned in
//! the assertions; independent oracles (finite differences, exhaustive scans,
//! bisection, the analytic Laplacian eigenfunction) live in this file.

use std::time::Instant;

use dwmin::energy::{energy, p_linearized, potential_p, EnergyParams, QuadraticModel};
use dwmin::grid::{axpy, inner_product, laplacian_apply, Field, Grid};
use dwmin::harness::{make_initial, InitialCondition};
use dwmin::qp::{kkt_residual, solve_box_qp, BoxConstraint};
use dwmin::schemes::{
    evolve, ieq_unconstrained_residual, minimize_algorithm1, step_convex_splitting,
    step_ieq_unconstrained, step_semi_implicit_stabilized, SchemeConfig, SchemeKind,
};

fn square_grid(n: usize) -> Grid {
    Grid::from_extent(&[n, n], &[1.0, 1.0], &[0.0, 0.0]).unwrap()
}

fn random_in_k(grid: &Grid, seed: u64) -> Field {
    make_initial(&InitialCondition::UniformRandom, grid, seed).unwrap()
}

fn pass(criterion: &str, detail: String, clock: Instant) {
    println!(
        "[PASS] {criterion}: {detail} ({:.2} s)",
        clock.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_01_tangency() {
    let clock = Instant::now();
    let grid = square_grid(32);
    let mut worst = 0.0f64;
    for eps in [0.05, 1.0] {
        let params = EnergyParams::new(eps).unwrap();
        for seed in 0..50u64 {
            let anchor = random_in_k(&grid, 100 + seed);
            let e = energy(&anchor, &params).unwrap();
            let model = QuadraticModel::majorizer(anchor.clone(), params).unwrap();
            let v = model.value(&anchor).unwrap();
            let gap = (v - e).abs();
            worst = worst.max(gap / (1.0 + e.abs()));
            assert!(
                gap <= 1e-12 * (1.0 + e.abs()),
                "tangency violated: |{v} - {e}| = {gap:.3e} at eps={eps}, seed={seed}"
            );
        }
    }
    pass(
        "criterion 1 (tangency)",
        format!("100 anchors, worst relative gap {worst:.3e} <= 1e-12"),
        clock,
    );
}

#[test]
fn criterion_02_gradient_tangency_and_model_gradients() {
    let clock = Instant::now();
    let grid = square_grid(32);
    let params = EnergyParams::new(0.25).unwrap();
    let step = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let anchor = random_in_k(&grid, 300 + seed);
        let u = random_in_k(&grid, 400 + seed);
        let dir = random_in_k(&grid, 500 + seed);
        for k in [None, Some(0.01), Some(1.0)] {
            let model = match k {
                None => QuadraticModel::majorizer(anchor.clone(), params).unwrap(),
                Some(k) => QuadraticModel::proximal(anchor.clone(), params, k).unwrap(),
            };
            // analytic model gradient vs central differences of the model value
            let fd = (model.value(&axpy(&u, step, &dir).unwrap()).unwrap()
                - model.value(&axpy(&u, -step, &dir).unwrap()).unwrap())
                / (2.0 * step);
            let analytic = inner_product(&model.gradient(&u).unwrap(), &dir).unwrap();
            let rel = (fd - analytic).abs() / (1.0 + analytic.abs());
            worst = worst.max(rel);
            assert!(
                rel <= 1e-6,
                "model gradient: fd {fd} vs analytic {analytic} (rel {rel:.3e}, k={k:?})"
            );
            // gradient tangency: the model gradient at its anchor equals the
            // energy gradient there
            let fd_e = (energy(&axpy(&anchor, step, &dir).unwrap(), &params).unwrap()
                - energy(&axpy(&anchor, -step, &dir).unwrap(), &params).unwrap())
                / (2.0 * step);
            let analytic_e =
                inner_product(&model.gradient(&anchor).unwrap(), &dir).unwrap();
            let rel_e = (fd_e - analytic_e).abs() / (1.0 + analytic_e.abs());
            worst = worst.max(rel_e);
            assert!(
                rel_e <= 1e-6,
                "gradient tangency: fd {fd_e} vs analytic {analytic_e} (rel {rel_e:.3e})"
            );
        }
    }
    pass(
        "criterion 2 (gradient tangency + model gradients)",
        format!("20 (anchor, direction) pairs, worst relative gap {worst:.3e} <= 1e-6"),
        clock,
    );
}

#[test]
fn criterion_03_pointwise_inequalities() {
    let clock = Instant::now();
    let n = 401;
    let mut min_gap = f64::INFINITY;
    let mut max_sum = f64::NEG_INFINITY;
    for i in 0..n {
        let s = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let a = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
            let gap = potential_p(s) - p_linearized(s, a);
            let sum = potential_p(s) + p_linearized(s, a);
            min_gap = min_gap.min(gap);
            max_sum = max_sum.max(sum);
            assert!(gap >= -1e-12, "convexity gap {gap} at (s={s}, a={a})");
            assert!(sum <= 1e-12, "sign bound {sum} at (s={s}, a={a})");
        }
    }
    pass(
        "criterion 3 (pointwise inequalities)",
        format!("401x401 lattice, min gap {min_gap:.3e}, max sum {max_sum:.3e}"),
        clock,
    );
}

#[test]
fn criterion_04_majorization() {
    let clock = Instant::now();
    let grid = square_grid(32);
    let mut worst = f64::NEG_INFINITY;
    for eps in [0.05, 1.0] {
        let params = EnergyParams::new(eps).unwrap();
        for seed in 0..100u64 {
            let u = random_in_k(&grid, 1000 + seed);
            let anchor = random_in_k(&grid, 2000 + seed);
            let e = energy(&u, &params).unwrap();
            let model = QuadraticModel::majorizer(anchor.clone(), params).unwrap();
            let v = model.value(&u).unwrap();
            worst = worst.max((e - v) / (1.0 + v.abs()));
            assert!(
                e <= v + 1e-12 * (1.0 + v.abs()),
                "majorization violated: E={e} > E_Q={v} (eps={eps}, seed={seed})"
            );
            for k in [0.01, 1.0] {
                let prox = QuadraticModel::proximal(anchor.clone(), params, k).unwrap();
                let vk = prox.value(&u).unwrap();
                assert!(
                    e <= vk + 1e-12 * (1.0 + vk.abs()),
                    "majorization violated for J_Q: E={e} > {vk} (k={k})"
                );
            }
        }
    }
    pass(
        "criterion 4 (majorization)",
        format!("200 (u, anchor) pairs x k in {{-, 0.01, 1}}, worst relative excess {worst:.3e}"),
        clock,
    );
}

#[test]
fn criterion_05_algorithm1_energy_stability() {
    let clock = Instant::now();
    let grid = square_grid(64);
    let mut inequalities = 0usize;
    for eps in [0.05, 0.1, 0.5] {
        for seed in [1u64, 2, 3] {
            let u0 = random_in_k(&grid, seed);
            let mut cfg = SchemeConfig::new(SchemeKind::Algorithm1, eps).unwrap();
            cfg.steps = 200;
            cfg.qp_max_iter = Some(100);
            let (u, trace) = minimize_algorithm1(&u0, &cfg).unwrap();
            let energies = trace.energies();
            for w in energies.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()),
                    "energy rose {} -> {} (eps={eps}, seed={seed})",
                    w[0],
                    w[1]
                );
                inequalities += 1;
            }
            assert!(
                u.max_abs() <= 1.0,
                "terminal max|u| = {} > 1 (eps={eps}, seed={seed})",
                u.max_abs()
            );
        }
    }
    pass(
        "criterion 5 (Algorithm 1 energy stability)",
        format!("9 runs on 64x64, {inequalities} consecutive-step inequalities held, terminal states feasible"),
        clock,
    );
}

#[test]
fn criterion_06_constrained_ieq_unconditional_stability() {
    let clock = Instant::now();
    let grid = square_grid(64);
    let ic = InitialCondition::Disk {
        center: vec![0.5, 0.5],
        radius: 0.25,
        width: 0.1,
    };
    let u0 = make_initial(&ic, &grid, 0).unwrap();
    let mut inequalities = 0usize;
    for k in [1e-3, 1e-2, 1.0, 10.0, 100.0] {
        let mut cfg = SchemeConfig::new(SchemeKind::IeqConstrained, 0.1).unwrap();
        cfg.time_step = k;
        cfg.steps = 50;
        cfg.qp_max_iter = Some(300);
        let (_, trace) = evolve(&u0, &cfg).unwrap();
        let rows = trace.rows();
        assert_eq!(rows.len(), 51);
        for i in 1..rows.len() {
            let e_prev = rows[i - 1].energy;
            let e = rows[i].energy;
            let jq = rows[i].model_value.expect("J_Q recorded each step");
            let slack = 1e-12 * (1.0 + e_prev.abs());
            assert!(e <= jq + slack, "E(u^n)={e} > J_Q={jq} (k={k}, step {i})");
            assert!(
                jq <= e_prev + slack,
                "J_Q={jq} > E(u^(n-1))={e_prev} (k={k}, step {i})"
            );
            inequalities += 2;
        }
    }
    pass(
        "criterion 6 (constrained IEQ unconditional stability)",
        format!("k sweep over 5 decades, {inequalities} chain inequalities held"),
        clock,
    );
}

/// Independent objective for the exhaustive scan: the quadratic model written
/// out by hand for a 4-cell 1D grid.
fn scan_objective(u: &[f64; 4], anchor: &[f64; 4], eps: f64, k: Option<f64>, h: f64) -> f64 {
    let mut grad = 0.0;
    for i in 0..3 {
        let d = (u[i + 1] - u[i]) / h;
        grad += d * d;
    }
    let mut pot = 0.0;
    for i in 0..4 {
        let pl = anchor[i] * u[i] - 0.5 * anchor[i] * anchor[i] - 0.5;
        pot += pl * pl;
    }
    let mut v = 0.5 * grad * h + pot * h / (eps * eps);
    if let Some(k) = k {
        let mut d2 = 0.0;
        for i in 0..4 {
            d2 += (u[i] - anchor[i]) * (u[i] - anchor[i]);
        }
        v += d2 * h / (2.0 * k);
    }
    v
}

#[test]
fn criterion_07_qp_oracle_equivalence() {
    let clock = Instant::now();
    let grid = Grid::from_extent(&[4], &[1.0], &[0.0]).unwrap();
    let h = 0.25;
    let eps = 0.5;
    let params = EnergyParams::new(eps).unwrap();
    let anchors: [[f64; 4]; 3] = [[0.5; 4], [0.8, -0.8, 0.8, -0.8], [0.0; 4]];
    let mut worst_dev = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for anchor in &anchors {
        for k in [None, Some(1.0)] {
            // exhaustive scan, step 0.1 over [-1, 1]^4, keeping tied minima
            let lattice: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
            let mut best = f64::INFINITY;
            let mut argmins: Vec<[f64; 4]> = Vec::new();
            for &a0 in &lattice {
                for &a1 in &lattice {
                    for &a2 in &lattice {
                        for &a3 in &lattice {
                            let cand = [a0, a1, a2, a3];
                            let v = scan_objective(&cand, anchor, eps, k, h);
                            if v < best - 1e-12 * (1.0 + best.abs()) {
                                best = v;
                                argmins.clear();
                                argmins.push(cand);
                            } else if (v - best).abs() <= 1e-12 * (1.0 + best.abs()) {
                                argmins.push(cand);
                            }
                        }
                    }
                }
            }
            let anchor_field = Field::from_values(&grid, anchor.to_vec()).unwrap();
            let model = match k {
                None => QuadraticModel::majorizer(anchor_field.clone(), params).unwrap(),
                Some(k) => QuadraticModel::proximal(anchor_field.clone(), params, k).unwrap(),
            };
            let (x, _) =
                solve_box_qp(&model, &anchor_field, &BoxConstraint::unit(), 1e-11, 200_000)
                    .unwrap();
            let deviation = argmins
                .iter()
                .map(|m| {
                    m.iter()
                        .zip(x.values())
                        .map(|(mi, xi)| (mi - xi).abs())
                        .fold(0.0f64, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            worst_dev = worst_dev.max(deviation);
            assert!(
                deviation <= 0.1 + 1e-9,
                "solver {:?} deviates {deviation} from scan minimizer (anchor {anchor:?}, k={k:?})",
                x.values()
            );
            let kkt = kkt_residual(&model, &x, &BoxConstraint::unit()).unwrap();
            worst_kkt = worst_kkt.max(kkt);
            assert!(kkt <= 1e-8, "kkt residual {kkt:.3e} (anchor {anchor:?}, k={k:?})");
        }
    }
    pass(
        "criterion 7 (QP oracle equivalence)",
        format!("3 anchors x (with/without k): max deviation {worst_dev:.3}, max kkt {worst_kkt:.3e}"),
        clock,
    );
}

#[test]
fn criterion_08_constant_field_closed_forms() {
    let clock = Instant::now();
    let grid = Grid::from_extent(&[4], &[1.0], &[0.0]).unwrap();
    let half = Field::constant(&grid, 0.5);
    let params = EnergyParams::new(1.0).unwrap();

    // Algorithm 1 step: clamps to the pure phase
    let model = QuadraticModel::majorizer(half.clone(), params).unwrap();
    let (x, _) = solve_box_qp(&model, &half, &BoxConstraint::unit(), 1e-12, 200_000).unwrap();
    for &v in x.values() {
        assert!((v - 1.0).abs() <= 1e-8, "Algorithm 1 step gave {v}, expected 1");
    }

    let mut cfg = SchemeConfig::new(SchemeKind::IeqUnconstrained, 1.0).unwrap();
    cfg.time_step = 1.0;
    cfg.cg_tol = 1e-13;

    // IEQ step: (1/k + 2 a^2) u = a/k + (a^3 + a), so u = 1.125/1.5 = 0.75
    let (u_ieq, _) = step_ieq_unconstrained(&half, &cfg).unwrap();
    for &v in u_ieq.values() {
        assert!((v - 0.75).abs() <= 1e-8, "IEQ step gave {v}, expected 0.75");
    }

    // convex splitting: root of u^3 + u = 1 by bisection
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid * mid + mid - 1.0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    assert!((root - 0.6823278).abs() <= 1e-6, "bisection oracle sanity: {root}");
    let (u_cs, _) = step_convex_splitting(&half, &cfg).unwrap();
    for &v in u_cs.values() {
        assert!((v - root).abs() <= 1e-6, "convex splitting gave {v}, oracle {root}");
    }

    // stabilized semi-implicit: (0.5 * (1/k + S) + 0.375) / (1/k + S) = 0.625
    cfg.stabilization = 2.0;
    let (u_si, _) = step_semi_implicit_stabilized(&half, &cfg).unwrap();
    for &v in u_si.values() {
        assert!((v - 0.625).abs() <= 1e-10, "semi-implicit gave {v}, expected 0.625");
    }
    pass(
        "criterion 8 (constant-field closed forms)",
        format!(
            "minimize -> 1, IEQ -> 0.75, splitting -> {root:.7}, semi-implicit -> 0.625"
        ),
        clock,
    );
}

#[test]
fn criterion_09_ieq_scheme_equation_residual() {
    let clock = Instant::now();
    let grid = square_grid(32);
    let mut worst = 0.0f64;
    for seed in [11u64, 12, 13] {
        let u_prev = random_in_k(&grid, seed);
        for k in [0.01, 1.0] {
            let mut cfg = SchemeConfig::new(SchemeKind::IeqUnconstrained, 0.1).unwrap();
            cfg.time_step = k;
            cfg.cg_tol = 1e-13;
            let (u, _) = step_ieq_unconstrained(&u_prev, &cfg).unwrap();
            let r = ieq_unconstrained_residual(&u, &u_prev, &cfg).unwrap();
            worst = worst.max(r);
            assert!(r <= 1e-8, "scheme-equation residual {r:.3e} (k={k}, seed={seed})");
        }
    }
    pass(
        "criterion 9 (IEQ scheme-equation residual)",
        format!("max plug-back residual {worst:.3e} <= 1e-8"),
        clock,
    );
}

#[test]
fn criterion_10_laplacian_order_and_structure() {
    let clock = Instant::now();
    // analytic oracle: (cos(pi x))'' = -pi^2 cos(pi x), zero flux on [0, 1]
    let cos_err = |n: usize| -> f64 {
        let g = Grid::from_extent(&[n], &[1.0], &[0.0]).unwrap();
        let u = Field::from_fn(&g, |x| (std::f64::consts::PI * x[0]).cos());
        let lap = laplacian_apply(&g, &u).unwrap();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        lap.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v + pi2 * (std::f64::consts::PI * g.center(i, 0)).cos()).abs())
            .fold(0.0, f64::max)
    };
    let ratio = cos_err(64) / cos_err(128);
    assert!(
        (3.6..=4.4).contains(&ratio),
        "second-order convergence ratio {ratio} outside [3.6, 4.4]"
    );

    let grid = square_grid(32);
    for seed in 0..5u64 {
        let u = random_in_k(&grid, 600 + seed);
        let v = random_in_k(&grid, 700 + seed);
        let lu = laplacian_apply(&grid, &u).unwrap();
        let lv = laplacian_apply(&grid, &v).unwrap();
        let a = inner_product(&lu, &v).unwrap();
        let b = inner_product(&u, &lv).unwrap();
        assert!(
            (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
            "symmetry violated: {a} vs {b}"
        );
        let q = inner_product(&lu, &u).unwrap();
        assert!(q <= 1e-12, "negative semidefiniteness violated: {q}");
        let total = grid.cell_volume() * lu.values().iter().sum::<f64>();
        assert!(total.abs() <= 1e-12, "zero net Neumann flux violated: {total:.3e}");
    }
    pass(
        "criterion 10 (Laplacian order and structure)",
        format!("error ratio {ratio:.3}; symmetry, NSD, zero-sum within 1e-12"),
        clock,
    );
}

#[test]
fn criterion_11_dissipation_law_diagnostic() {
    let clock = Instant::now();
    let grid = Grid::from_extent(&[128], &[1.0], &[0.0]).unwrap();
    let eps = 0.1;
    let u0 = make_initial(&InitialCondition::Stripe { width: eps }, &grid, 0).unwrap();
    let mut cfg = SchemeConfig::new(SchemeKind::FullyImplicit, eps).unwrap();
    cfg.time_step = 1e-4 * eps * eps;
    cfg.steps = 10;
    let (_, trace) = evolve(&u0, &cfg).unwrap();
    let mut worst = 0.0f64;
    for row in &trace.rows()[1..] {
        let ratio = row.rate_ratio.expect("dissipation diagnostic recorded");
        worst = worst.max((ratio - 1.0).abs());
        assert!(
            (ratio - 1.0).abs() <= 0.2,
            "dissipation ratio {ratio:.4} off by more than 20% at step {}",
            row.step
        );
    }
    pass(
        "criterion 11 (dissipation-law diagnostic)",
        format!("10 steps, max deviation of (dE/k)/||u_t||^2 from 1: {:.2}%", worst * 100.0),
        clock,
    );
}
