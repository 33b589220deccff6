//! Integration tests of the time stepper: scalar sanities, reduction to
//! backward Euler, manufactured solutions, irreversibility, continuation.

use dnflow_core::graph::MonotoneGraph;
use dnflow_core::potential::Potential;
use dnflow_core::scenario::Scenario;
use dnflow_core::spatial::{Bc, DCoeff, EllipticOperator, Field, Grid};
use dnflow_core::stepper::{
    self, continuation_study, inner_solve, run, ContinuationRung, Forcing, SchemeConfig,
    SchemeSystem,
};

const PI: f64 = core::f64::consts::PI;

fn laplacian(grid: Grid) -> EllipticOperator {
    EllipticOperator::linear(grid, DCoeff::Scalar(1.0), 1.0).unwrap()
}

fn cubic_potential() -> Potential {
    // beta = r^3, lambda = 0 (convex quartic well)
    Potential::new(MonotoneGraph::power(3), 0.0, 0.0, 0.5).unwrap()
}

fn scenario(
    op: EllipticOperator,
    pot: Potential,
    alpha: MonotoneGraph,
    forcing: Forcing,
    scheme: SchemeConfig,
    initial: Field,
) -> Scenario {
    Scenario {
        operator: op,
        potential: pot,
        alpha,
        forcing,
        scheme,
        initial,
        holder_nu: None,
        fingerprint: String::new(),
    }
}

/// Forcing that freezes `u0` as an exact stationary point of the scheme:
/// `f = B u0 + beta_eps(u0) + eps u0 - lambda u0`.
fn freezing_forcing(op: &EllipticOperator, pot: &Potential, eps: f64, u0: &Field) -> Vec<f64> {
    let bu = op.apply_b(u0).unwrap();
    (0..u0.values.len())
        .map(|i| {
            bu.values[i] + pot.beta.yosida(eps, u0.values[i]).unwrap()
                + (eps - pot.lambda) * u0.values[i]
        })
        .collect()
}

#[test]
fn scalar_relaxation_two_thirds() {
    // single-degree-of-freedom sanity: constant fields make B vanish under
    // Neumann data, so the step solves (u - 1)/tau + u = 0 up to the tiny
    // regularizations
    let grid = Grid::line(3, 1.0, Bc::Neumann0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::quadratic();
    let alpha = MonotoneGraph::identity();
    let cfg = SchemeConfig {
        tau: 0.5,
        t_end: 0.5,
        eps: 1e-12,
        nu: 1e-12,
        ..Default::default()
    };
    let u0 = Field::constant(&grid, 1.0);
    let (u1, entry) = stepper::step(&u0, 1, &cfg, &op, &pot, &alpha, &Forcing::Zero).unwrap();
    for &v in &u1.values {
        assert!((v - 2.0 / 3.0).abs() < 1e-9, "got {v}");
    }
    assert!(entry.residual <= cfg.tol_newton);
}

#[test]
fn stationary_point_needs_no_corrections() {
    let grid = Grid::line(21, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::double_well();
    let alpha = MonotoneGraph::identity();
    let cfg = SchemeConfig {
        tau: 1e-2,
        t_end: 0.1,
        eps: 1e-8,
        nu: 1e-8,
        ..Default::default()
    };
    let u0 = Field::from_fn(&grid, |x, _| 0.4 * (PI * x).sin());
    let f = freezing_forcing(&op, &pot, cfg.eps, &u0);
    let (u1, entry) =
        stepper::step(&u0, 1, &cfg, &op, &pot, &alpha, &Forcing::Constant(f)).unwrap();
    assert_eq!(entry.newton_iters, 0, "already at the fixed point");
    for i in 0..u0.values.len() {
        assert!((u1.values[i] - u0.values[i]).abs() < 1e-12);
    }
}

#[test]
fn odd_nonlinearity_preserves_zero() {
    let grid = Grid::line(31, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::double_well();
    let alpha = MonotoneGraph::identity();
    let cfg = SchemeConfig {
        tau: 1e-3,
        t_end: 1e-2,
        ..Default::default()
    };
    let u0 = Field::zeros(&grid);
    let (u1, entry) = stepper::step(&u0, 1, &cfg, &op, &pot, &alpha, &Forcing::Zero).unwrap();
    assert_eq!(entry.newton_iters, 0);
    assert!(u1.values.iter().all(|&v| v == 0.0));
}

#[test]
fn reduces_to_backward_euler_for_identity_graphs() {
    // alpha = beta = id, lambda = 0: the step is a single linear solve
    // (c1 + c2) u + B u = c1 u_prev + f with c1 = 1/(tau (1+nu)),
    // c2 = 1/(1+eps) + eps
    let grid = Grid::line(41, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::quadratic();
    let alpha = MonotoneGraph::identity();
    let cfg = SchemeConfig {
        tau: 1e-2,
        t_end: 1e-2,
        eps: 1e-6,
        nu: 1e-6,
        tol_newton: 1e-12,
        ..Default::default()
    };
    let u0 = Field::from_fn(&grid, |x, _| (PI * x).sin());
    let f: Vec<f64> = (0..grid.nodes())
        .map(|i| 0.3 * (2.0 * PI * grid.position(i)[0]).cos())
        .collect();
    let (u1, _) =
        stepper::step(&u0, 1, &cfg, &op, &pot, &alpha, &Forcing::Constant(f.clone())).unwrap();

    // reference linear solve on the free nodes
    let c1 = 1.0 / (cfg.tau * (1.0 + cfg.nu));
    let c2 = 1.0 / (1.0 + cfg.eps) + cfg.eps;
    let weights = grid.weights();
    let free = grid.free_nodes();
    let (mut k, _) = op.stiffness_free(&vec![0.0; grid.nodes()]);
    let wd: Vec<f64> = free.iter().map(|&i| weights[i] * (c1 + c2)).collect();
    k.add_diag(&wd);
    let rhs: Vec<f64> = free
        .iter()
        .map(|&i| weights[i] * (c1 * u0.values[i] + f[i]))
        .collect();
    let sol = dnflow_core::linalg::cg(&k, &rhs, &vec![0.0; free.len()], 1e-14, 10_000);
    for (kf, &i) in free.iter().enumerate() {
        assert!(
            (u1.values[i] - sol.x[kf]).abs() < 1e-9,
            "node {i}: {} vs {}",
            u1.values[i],
            sol.x[kf]
        );
    }
}

#[test]
fn inner_solve_linear_in_one_iteration() {
    let grid = Grid::line(21, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::quadratic();
    let alpha = MonotoneGraph::identity();
    let u_prev = Field::from_fn(&grid, |x, _| x * (1.0 - x));
    let rhs: Vec<f64> = u_prev.values.clone();
    let sys = SchemeSystem {
        op: &op,
        pot: &pot,
        alpha: &alpha,
        tau: 1e-2,
        eps: 1e-8,
        nu: 1e-8,
        u_prev: &u_prev.values,
        rhs,
    };
    let (_, stats) = inner_solve(&sys, &u_prev, 1e-10, 20, 30).unwrap();
    assert_eq!(stats.iterations, 1, "linear system takes one Newton step");
}

#[test]
fn semismooth_kink_matches_bisection_oracle() {
    // single unknown (constant fields, B = 0): the residual has a kink at
    // rate 0 from the irreversible graph
    let grid = Grid::line(3, 1.0, Bc::Neumann0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::double_well();
    let alpha = MonotoneGraph::irreversible_quadratic();
    let tau = 0.1;
    let (eps, nu) = (1e-6, 1e-3);
    let u0 = 0.5;
    let f = -0.3;
    let rhs_val = pot.lambda * u0 + f;
    let sys = SchemeSystem {
        op: &op,
        pot: &pot,
        alpha: &alpha,
        tau,
        eps,
        nu,
        u_prev: &[u0, u0, u0],
        rhs: vec![rhs_val; 3],
    };
    let init = Field::constant(&grid, u0);
    let (sol, _) = inner_solve(&sys, &init, 1e-12, 50, 40).unwrap();

    // bisection oracle on the monotone scalar residual
    let residual = |v: f64| {
        alpha.yosida(nu, (v - u0) / tau).unwrap() + pot.beta.yosida(eps, v).unwrap() + eps * v
            - rhs_val
    };
    let (mut lo, mut hi) = (-5.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    for &v in &sol.values {
        assert!((v - oracle).abs() < 1e-9, "{v} vs oracle {oracle}");
    }
}

#[test]
fn inner_solve_exact_init_zero_iterations() {
    let grid = Grid::line(21, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::quadratic();
    let alpha = MonotoneGraph::identity();
    let u0 = Field::from_fn(&grid, |x, _| 0.2 * (PI * x).sin());
    let f = freezing_forcing(&op, &pot, 1e-8, &u0);
    let sys = SchemeSystem {
        op: &op,
        pot: &pot,
        alpha: &alpha,
        tau: 1e-2,
        eps: 1e-8,
        nu: 1e-8,
        u_prev: &u0.values,
        rhs: f,
    };
    let (_, stats) = inner_solve(&sys, &u0, 1e-9, 20, 30).unwrap();
    assert_eq!(stats.iterations, 0);
}

fn manufactured_scenario(n: usize, tau: f64, t_end: f64) -> (Scenario, Vec<f64>) {
    let grid = Grid::line(n, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = cubic_potential();
    let alpha = MonotoneGraph::identity();
    let exact = |x: f64, t: f64| (-t).exp() * (PI * x).sin();
    // f = u*_t - u*_xx + (u*)^3
    let n_steps = (t_end / tau).round() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    for i in 0..=n_steps {
        let t = i as f64 * tau;
        times.push(t);
        values.push(
            (0..grid.nodes())
                .map(|k| {
                    let x = grid.position(k)[0];
                    let u = exact(x, t);
                    (PI * PI - 1.0) * u + u * u * u
                })
                .collect::<Vec<f64>>(),
        );
    }
    let scheme = SchemeConfig {
        tau,
        t_end,
        eps: 1e-10,
        nu: 1e-10,
        tol_newton: 1e-11,
        ..Default::default()
    };
    let u0 = Field::from_fn(&grid, |x, _| exact(x, 0.0));
    let scn = scenario(op, pot, alpha, Forcing::Tabulated { times, values }, scheme, u0);
    let final_exact: Vec<f64> = (0..grid.nodes())
        .map(|k| exact(grid.position(k)[0], t_end))
        .collect();
    (scn, final_exact)
}

#[test]
fn manufactured_solution_error_bound() {
    let (scn, _) = manufactured_scenario(51, 2e-3, 0.1);
    let traj = run(&scn).unwrap();
    let grid = scn.grid();
    let exact = |x: f64, t: f64| (-t).exp() * (PI * x).sin();
    let mut max_err = 0.0_f64;
    for s in &traj.states {
        for k in 0..grid.nodes() {
            let x = grid.position(k)[0];
            max_err = max_err.max((s.values[k] - exact(x, s.time)).abs());
        }
    }
    let h = grid.h(0);
    let budget = 5.0 * (scn.scheme.tau + h * h);
    assert!(max_err <= budget, "error {max_err} exceeds {budget}");
}

#[test]
fn irreversible_graph_penalizes_negative_increments() {
    let grid = Grid::line(31, 1.0, Bc::Dirichlet0).unwrap();
    let mut cs = Vec::new();
    for nu in [1e-2, 1e-3] {
        let op = laplacian(grid);
        let pot = Potential::double_well();
        let alpha = MonotoneGraph::irreversible_quadratic();
        let scheme = SchemeConfig {
            tau: 1e-3,
            t_end: 0.05,
            eps: 1e-6,
            nu,
            ..Default::default()
        };
        let u0 = Field::from_fn(&grid, |x, _| 0.5 * (PI * x).sin());
        let f = vec![-0.5; grid.nodes()];
        let scn = scenario(op, pot, alpha, Forcing::Constant(f), scheme, u0);
        let traj = run(&scn).unwrap();
        let mut min_rate = f64::INFINITY;
        for w in traj.states.windows(2) {
            for i in 0..grid.nodes() {
                min_rate = min_rate.min((w[1].values[i] - w[0].values[i]) / scn.scheme.tau);
            }
        }
        assert!(min_rate < 0.0, "penalty must actually engage");
        cs.push(min_rate.abs() / nu);
    }
    let ratio = cs[0] / cs[1];
    assert!(
        (0.5..=2.0).contains(&ratio),
        "penalty constant unstable across the ladder: {cs:?}"
    );
}

#[test]
fn run_stays_at_stationary_start() {
    let grid = Grid::line(21, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::double_well();
    let alpha = MonotoneGraph::identity();
    let cfg = SchemeConfig {
        tau: 1e-2,
        t_end: 0.1,
        eps: 1e-8,
        nu: 1e-8,
        ..Default::default()
    };
    let u0 = Field::from_fn(&grid, |x, _| 0.3 * (PI * x).sin());
    let f = freezing_forcing(&op, &pot, cfg.eps, &u0);
    let scn = scenario(op, pot, alpha, Forcing::Constant(f.clone()), cfg, u0.clone());
    let traj = run(&scn).unwrap();
    for s in &traj.states {
        for i in 0..grid.nodes() {
            assert!((s.values[i] - u0.values[i]).abs() <= 10.0 * scn.scheme.tol_newton);
        }
    }
    // a trajectory parked at a stationary point is its own omega limit
    let g = Field { values: f, time: 0.0 };
    let rep = dnflow_core::stationary::omega_limit_detect(
        &traj,
        &scn.operator,
        &scn.potential,
        &scn.alpha,
        &scn.forcing,
        &g,
        1e-9,
        1e-6,
    )
    .unwrap()
    .expect("constant trajectory is settled");
    assert!(rep.residual <= 1e-6, "residual {}", rep.residual);
}

#[test]
fn tabulated_forcing_refuses_interpolation() {
    let f = Forcing::Tabulated {
        times: vec![0.0, 0.5, 1.0],
        values: vec![vec![1.0; 3]; 3],
    };
    assert!(f.at(0.5, 3).is_ok());
    assert!(f.at(0.25, 3).is_err());
}

#[test]
fn continuation_identical_rungs_vanish() {
    let (scn, _) = manufactured_scenario(21, 5e-3, 0.02);
    let rung = ContinuationRung {
        tau: 5e-3,
        eps: 1e-10,
        nu: 1e-10,
    };
    let rep = continuation_study(&scn, &[rung, rung]).unwrap();
    assert_eq!(rep.sup_diffs.len(), 1);
    assert!(rep.sup_diffs[0] == 0.0, "identical rungs must agree exactly");
}

#[test]
fn continuation_halving_differences_decrease() {
    let grid = Grid::line(25, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::double_well();
    let alpha = MonotoneGraph::identity();
    let scheme = SchemeConfig {
        tau: 8e-3,
        t_end: 0.08,
        eps: 1e-2,
        nu: 1e-2,
        ..Default::default()
    };
    let u0 = Field::from_fn(&grid, |x, _| 0.5 * (PI * x).sin());
    let scn = scenario(op, pot, alpha, Forcing::Zero, scheme, u0);
    let mut ladder = Vec::new();
    for k in 0..4 {
        let s = 0.5_f64.powi(k);
        ladder.push(ContinuationRung {
            tau: 8e-3 * s,
            eps: 1e-2 * s,
            nu: 1e-2 * s,
        });
    }
    let rep = continuation_study(&scn, &ladder).unwrap();
    assert_eq!(rep.sup_diffs.len(), 3);
    for w in rep.sup_diffs.windows(2) {
        assert!(w[1] < w[0], "differences must decrease: {:?}", rep.sup_diffs);
    }
}

#[test]
fn ladder_must_be_nonincreasing() {
    let (scn, _) = manufactured_scenario(21, 5e-3, 0.02);
    let bad = [
        ContinuationRung {
            tau: 5e-3,
            eps: 1e-8,
            nu: 1e-8,
        },
        ContinuationRung {
            tau: 1e-2,
            eps: 1e-8,
            nu: 1e-8,
        },
    ];
    assert!(continuation_study(&scn, &bad).is_err());
}

#[test]
fn trajectory_interpolant_views() {
    let grid = Grid::line(11, 1.0, Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::quadratic();
    let scn = scenario(
        op,
        pot,
        MonotoneGraph::identity(),
        Forcing::Zero,
        SchemeConfig {
            tau: 0.1,
            t_end: 0.4,
            ..Default::default()
        },
        Field::from_fn(&grid, |x, _| (PI * x).sin()),
    );
    let traj = run(&scn).unwrap();
    // backward constant picks the right-endpoint state of each subinterval
    assert_eq!(traj.backward_constant(0.25).values, traj.states[3].values);
    assert_eq!(traj.backward_constant(0.3).values, traj.states[3].values);
    assert_eq!(traj.backward_constant(0.0).values, traj.states[0].values);
    // linear interpolation halfway between two states
    let mid = traj.interpolate(0.15);
    for i in 0..grid.nodes() {
        let expect = 0.5 * (traj.states[1].values[i] + traj.states[2].values[i]);
        assert!((mid.values[i] - expect).abs() < 1e-14);
    }
    // beyond the horizon the views clamp to the final state
    assert_eq!(traj.interpolate(9.9).values, traj.final_state().values);
}

#[test]
fn two_dimensional_manufactured_heat() {
    // u*(x,y,t) = e^{-2 pi^2 t} sin(pi x) sin(pi y) solves u_t = lap u;
    // with beta = id the forcing u* compensates the potential term
    let grid = Grid::rect([21, 21], [1.0, 1.0], Bc::Dirichlet0).unwrap();
    let op = laplacian(grid);
    let pot = Potential::quadratic();
    let alpha = MonotoneGraph::identity();
    let tau = 5e-4;
    let t_end = 0.05;
    let steps = (t_end / tau) as usize;
    let exact = |x: f64, y: f64, t: f64| (-2.0 * PI * PI * t).exp() * (PI * x).sin() * (PI * y).sin();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for i in 0..=steps {
        let t = i as f64 * tau;
        times.push(t);
        values.push(
            (0..grid.nodes())
                .map(|k| {
                    let p = grid.position(k);
                    // f = u*_t - lap u* + u* = u*
                    exact(p[0], p[1], t)
                })
                .collect::<Vec<f64>>(),
        );
    }
    let scheme = SchemeConfig {
        tau,
        t_end,
        eps: 1e-10,
        nu: 1e-10,
        tol_newton: 1e-11,
        ..Default::default()
    };
    let u0 = Field::from_fn(&grid, |x, y| exact(x, y, 0.0));
    let scn = scenario(op, pot, alpha, Forcing::Tabulated { times, values }, scheme, u0);
    let traj = run(&scn).unwrap();
    let mut max_err = 0.0_f64;
    for s in &traj.states {
        for k in 0..grid.nodes() {
            let p = grid.position(k);
            max_err = max_err.max((s.values[k] - exact(p[0], p[1], s.time)).abs());
        }
    }
    let h = grid.h(0);
    // first order in tau plus second order in h
    let budget = 12.0 * (tau + h * h);
    assert!(max_err <= budget, "2d error {max_err} exceeds {budget}");
}
