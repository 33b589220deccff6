//! Stationary problem `B u + W'(u) = g`, omega-limit detection along
//! trajectories, decay-rate fitting, and the Lojasiewicz ratio probe.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::MonotoneGraph;
use crate::linalg::{cg, CgOutcome, SparseSym};
use crate::math;
use crate::potential::Potential;
use crate::spatial::{Bc, EllipticOperator, Field, Grid};
use crate::stepper::{inner_solve, Forcing, NodalSystem, Trajectory};

/// Solution of the (regularized ladder of the) stationary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryReport {
    pub u_inf: Field,
    /// residual of the unregularized equation with the minimal section
    pub residual: f64,
    pub eps_path: Vec<f64>,
    /// the residual was measured as a distance to the rate graph's value at
    /// zero (the weak inclusion variant; used when `alpha(0)` is not `{0}`)
    pub weak_inclusion: bool,
    /// sup of the rate norm over the detection tail (omega-limit detection)
    pub tail_rate: f64,
    /// `|f(T)|_H` for decaying forcing (informational)
    pub f_tail: Option<f64>,
}

struct StationarySystem<'a> {
    op: &'a EllipticOperator,
    pot: &'a Potential,
    eps: f64,
    g: &'a [f64],
}

impl<'a> NodalSystem for StationarySystem<'a> {
    fn grid(&self) -> &Grid {
        &self.op.grid
    }

    fn residual(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let grid = &self.op.grid;
        let bu = self.op.apply_b(&Field {
            values: v.to_vec(),
            time: 0.0,
        })?;
        for i in 0..v.len() {
            if grid.bc == Bc::Dirichlet0 && grid.is_boundary(i) {
                out[i] = 0.0;
                continue;
            }
            out[i] = bu.values[i] + self.pot.beta.yosida(self.eps, v[i])?
                + (self.eps - self.pot.lambda) * v[i]
                - self.g[i];
        }
        Ok(())
    }

    fn diag(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        for i in 0..v.len() {
            out[i] = self.pot.beta.yosida_deriv(self.eps, v[i])? + self.eps - self.pot.lambda;
        }
        Ok(())
    }

    fn stiffness(&self, v: &[f64]) -> (SparseSym, usize) {
        self.op.stiffness_free(v)
    }

    fn constant_stiffness(&self) -> bool {
        self.op.is_linear()
    }
}

/// Residual of the unregularized stationary equation using the minimal
/// section of `beta` (infinite when a node leaves the graph domain).
pub fn stationary_residual(
    op: &EllipticOperator,
    pot: &Potential,
    u: &Field,
    g: &[f64],
) -> Result<f64> {
    let grid = &op.grid;
    let bu = op.apply_b(u)?;
    let mut r = vec![0.0; u.values.len()];
    for i in 0..u.values.len() {
        if grid.bc == Bc::Dirichlet0 && grid.is_boundary(i) {
            continue;
        }
        let wp = match pot.w_prime_min(u.values[i]) {
            Ok(v) => v,
            Err(_) => return Ok(f64::INFINITY),
        };
        r[i] = bu.values[i] + wp - g[i];
    }
    Ok(grid.h_norm(&r))
}

/// Weak-inclusion residual: nodal distance of `g - B u - W'(u)` to the
/// value interval of the rate graph at zero.
pub fn weak_inclusion_residual(
    op: &EllipticOperator,
    pot: &Potential,
    alpha: &MonotoneGraph,
    u: &Field,
    g: &[f64],
) -> Result<f64> {
    let grid = &op.grid;
    let bu = op.apply_b(u)?;
    let alpha0 = alpha.eval(0.0)?;
    let mut r = vec![0.0; u.values.len()];
    for i in 0..u.values.len() {
        if grid.bc == Bc::Dirichlet0 && grid.is_boundary(i) {
            continue;
        }
        let wp = match pot.w_prime_min(u.values[i]) {
            Ok(v) => v,
            Err(_) => return Ok(f64::INFINITY),
        };
        r[i] = alpha0.dist(g[i] - bu.values[i] - wp);
    }
    Ok(grid.h_norm(&r))
}

/// Solve `B v + beta_eps(v) + eps v - lambda v = g` along a decreasing
/// `eps` ladder (warm-started, branch-following) and report the final
/// iterate with its unregularized residual.
#[allow(clippy::too_many_arguments)]
pub fn solve_stationary(
    op: &EllipticOperator,
    pot: &Potential,
    g: &Field,
    eps_ladder: &[f64],
    u_init: &Field,
    tol: f64,
    tol_newton: f64,
    max_newton: usize,
) -> Result<StationaryReport> {
    if eps_ladder.is_empty() {
        return Err(Error::Precondition(String::from("empty epsilon ladder")));
    }
    for w in eps_ladder.windows(2) {
        if w[1] > w[0] {
            return Err(Error::Precondition(String::from(
                "epsilon ladder must be decreasing",
            )));
        }
    }
    g.conforms(&op.grid)?;
    let mut u = u_init.clone();
    let mut prev_res = f64::INFINITY;
    let mut path = Vec::new();
    for &eps in eps_ladder {
        if !(eps > 0.0) {
            return Err(Error::Precondition(String::from(
                "epsilon ladder entries must be positive",
            )));
        }
        let sys = StationarySystem {
            op,
            pot,
            eps,
            g: &g.values,
        };
        let (next, _stats) = inner_solve(&sys, &u, tol_newton, max_newton, 40)?;
        u = next;
        path.push(eps);
        let res = stationary_residual(op, pot, &u, &g.values)?;
        // stagnation above tolerance ends the ladder early
        if res > tol && res > 0.999 * prev_res && path.len() > 1 {
            return Err(Error::NonconvergedLadder {
                residual: res,
                tolerance: tol,
            });
        }
        prev_res = res;
    }
    if prev_res > tol {
        return Err(Error::NonconvergedLadder {
            residual: prev_res,
            tolerance: tol,
        });
    }
    Ok(StationaryReport {
        u_inf: u,
        residual: prev_res,
        eps_path: path,
        weak_inclusion: false,
        tail_rate: 0.0,
        f_tail: None,
    })
}

/// Tail window of a ledger: the last quarter or the last 50 entries,
/// whichever is larger.
pub fn tail_start(n_entries: usize) -> usize {
    let quarter = n_entries - n_entries / 4;
    let fifty = n_entries.saturating_sub(50);
    quarter.min(fifty).min(n_entries.saturating_sub(1))
}

/// Detect whether the trajectory has settled (sup of the tail rate below
/// `tol_rate`) and, if so, measure the stationary residual of its final
/// state. When the rate graph is multivalued at zero the weak inclusion
/// variant is reported instead.
#[allow(clippy::too_many_arguments)]
pub fn omega_limit_detect(
    traj: &Trajectory,
    op: &EllipticOperator,
    pot: &Potential,
    alpha: &MonotoneGraph,
    forcing: &Forcing,
    g: &Field,
    tol_rate: f64,
    tol_res: f64,
) -> Result<Option<StationaryReport>> {
    if traj.ledger.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: traj.ledger.len(),
        });
    }
    let start = tail_start(traj.ledger.len());
    let tail_rate = traj.ledger[start..]
        .iter()
        .map(|e| e.du_norm)
        .fold(0.0_f64, f64::max);
    if tail_rate > tol_rate {
        return Ok(None);
    }
    let u = traj.final_state().clone();
    let alpha0 = alpha.eval(0.0)?;
    let weak = !alpha0.is_singleton();
    let residual = if weak {
        weak_inclusion_residual(op, pot, alpha, &u, &g.values)?
    } else {
        stationary_residual(op, pot, &u, &g.values)?
    };
    let f_tail = match forcing {
        Forcing::Decaying { .. } | Forcing::Tabulated { .. } => {
            let f_end = forcing.at(u.time, op.grid.nodes()).unwrap_or_default();
            Some(op.grid.h_norm(&f_end))
        }
        _ => None,
    };
    let _ = tol_res; // recorded by callers against `residual`
    Ok(Some(StationaryReport {
        u_inf: u,
        residual,
        eps_path: Vec::new(),
        weak_inclusion: weak,
        tail_rate,
        f_tail,
    }))
}

/// Fit family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMode {
    /// `d(t) = c t^{-mu}` (log-log least squares)
    Algebraic,
    /// `d(t) = c exp(-rate t)` (semilog least squares)
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub mode: DecayMode,
    pub c: f64,
    /// `mu` (algebraic) or the exponential rate
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least-squares decay fit on `(t, distance)` samples. `window` restricts
/// the fit; by default the first quarter of the samples (the transient
/// prefix) is excluded. Nonpositive distances are skipped.
pub fn fit_decay(
    series: &[(f64, f64)],
    mode: DecayMode,
    window: Option<(f64, f64)>,
) -> Result<DecayFit> {
    let (w_lo, w_hi) = window.unwrap_or_else(|| {
        let skip = series.len() / 4;
        let lo = series.get(skip).map(|s| s.0).unwrap_or(0.0);
        (lo, f64::INFINITY)
    });
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, d) in series {
        if t < w_lo || t > w_hi || !(d > 0.0) {
            continue;
        }
        match mode {
            DecayMode::Algebraic => {
                if t > 0.0 {
                    xs.push(math::ln(t));
                    ys.push(math::ln(d));
                }
            }
            DecayMode::Exponential => {
                xs.push(t);
                ys.push(math::ln(d));
            }
        }
    }
    let n = xs.len();
    if n < 10 {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for k in 0..n {
        let dx = xs[k] - mean_x;
        let dy = ys[k] - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData { needed: 10, got: 1 });
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(DecayFit {
        mode,
        c: math::exp(intercept),
        rate: -slope,
        r_squared,
        window: (w_lo, w_hi),
        samples: n,
    })
}

/// Distance series `(t_k, |u(t_k) - u_inf|_H)` of a trajectory.
pub fn distance_series(traj: &Trajectory, grid: &Grid, u_inf: &Field) -> Vec<(f64, f64)> {
    traj.states
        .iter()
        .map(|s| {
            let diff: Vec<f64> = s
                .values
                .iter()
                .zip(&u_inf.values)
                .map(|(a, b)| a - b)
                .collect();
            (s.time, grid.h_norm(&diff))
        })
        .collect()
}

/// Discrete dual (V*) norm: `||v||^2 = (v, w)_H` where
/// `(K + M) w = M v` with `K` the stiffness of the operator at zero and
/// `M` the node-mass matrix. Spectrally equivalent to the continuous dual
/// norm and dominated by the H norm.
pub fn dual_norm(op: &EllipticOperator, v: &[f64]) -> Result<f64> {
    let grid = &op.grid;
    let weights = grid.weights();
    let free = grid.free_nodes();
    let (mut k, _) = op.stiffness_free(&vec![0.0; grid.nodes()]);
    let wf: Vec<f64> = free.iter().map(|&i| weights[i]).collect();
    k.add_diag(&wf);
    let rhs: Vec<f64> = free.iter().map(|&i| weights[i] * v[i]).collect();
    let sol = cg(&k, &rhs, &vec![0.0; free.len()], 1e-13, 20 * free.len() + 200);
    if sol.outcome == CgOutcome::Indefinite {
        return Err(Error::Precondition(String::from(
            "dual-norm operator must be positive definite",
        )));
    }
    let mut acc = 0.0;
    for (kf, &i) in free.iter().enumerate() {
        acc += weights[i] * v[i] * sol.x[kf];
    }
    Ok(math::sqrt(acc.max(0.0)))
}

/// One gradient-inequality exponent probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaProbe {
    pub theta: f64,
    /// empirical constant: max of `|E - E_inf|^{1-theta} / ||residual||_V*`
    pub c_ell: f64,
    /// the ratio stays bounded along the tail (no blow-up toward
    /// equilibrium)
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LojProbe {
    /// smallest probed exponent with a bounded ratio, if any
    pub theta: Option<f64>,
    pub c_ell: f64,
    pub per_theta: Vec<ThetaProbe>,
    /// `(|E - E_inf|, dual residual)` samples along the tail
    pub samples: Vec<(f64, f64)>,
}

/// Probe the gradient inequality
/// `|E(u(t)) - E(u_inf)|^{1-theta} <= c ||B u + W'(u) - g||_{V*}`
/// along the trajectory tail for each exponent in `theta_grid`.
/// Requires the pure Laplacian (linear kind, identity coefficient).
///
/// `noise_floor` discards samples whose dual residual has fallen to the
/// inner-solver noise level (a few orders above `tol_newton`), where the
/// ratio no longer measures the approach scaling.
pub fn lojasiewicz_probe(
    traj: &Trajectory,
    u_inf: &Field,
    op: &EllipticOperator,
    pot: &Potential,
    g: &Field,
    theta_grid: &[f64],
    noise_floor: f64,
) -> Result<LojProbe> {
    if !op.is_identity_laplacian() {
        return Err(Error::Precondition(String::from(
            "the gradient-inequality probe supports only the identity-coefficient linear operator",
        )));
    }
    let grid = &op.grid;
    let e_inf = energy_shifted(op, pot, u_inf, &g.values)?;
    // the approach half of the trajectory: late enough for the
    // neighborhood condition, wide enough to see the scaling
    let start = traj.states.len() / 2;
    let mut samples = Vec::new();
    for s in &traj.states[start..] {
        let e = energy_shifted(op, pot, s, &g.values)?;
        let bu = op.apply_b(s)?;
        let mut res = vec![0.0; s.values.len()];
        let mut ok = true;
        for i in 0..s.values.len() {
            if grid.bc == Bc::Dirichlet0 && grid.is_boundary(i) {
                continue;
            }
            match pot.w_prime_min(s.values[i]) {
                Ok(wp) => res[i] = bu.values[i] + wp - g.values[i],
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || !e.is_finite() {
            continue;
        }
        let den = dual_norm(op, &res)?;
        if den <= noise_floor {
            continue;
        }
        samples.push(((e - e_inf).abs(), den));
    }
    let atol = 1e-14;
    let mut per_theta = Vec::new();
    for &theta in theta_grid {
        let mut ratios = Vec::new();
        for &(num, den) in &samples {
            if num < atol && den < atol {
                // equilibrium convention: 0/0 counts as a vanishing ratio
                ratios.push(0.0);
            } else if den < atol {
                ratios.push(f64::INFINITY);
            } else {
                ratios.push(math::powf(num, 1.0 - theta) / den);
            }
        }
        let c_ell = ratios.iter().copied().fold(0.0_f64, f64::max);
        // bounded: the late half does not exceed the early half (toward the
        // equilibrium the ratio must not blow up)
        let half = ratios.len() / 2;
        let early = ratios
            .iter()
            .take(half.max(1))
            .copied()
            .fold(0.0_f64, f64::max);
        let late = ratios.iter().skip(half).copied().fold(0.0_f64, f64::max);
        let bounded = c_ell.is_finite() && late <= early * 1.25 + atol;
        per_theta.push(ThetaProbe {
            theta,
            c_ell,
            bounded,
        });
    }
    let best = per_theta
        .iter()
        .filter(|p| p.bounded)
        .min_by(|a, b| a.theta.partial_cmp(&b.theta).unwrap());
    Ok(LojProbe {
        theta: best.map(|p| p.theta),
        c_ell: best.map(|p| p.c_ell).unwrap_or(f64::INFINITY),
        per_theta,
        samples,
    })
}

/// `E_g(v) = Phi(v) + int W(v) - (g, v)_H` (the forced energy).
pub fn energy_shifted(
    op: &EllipticOperator,
    pot: &Potential,
    u: &Field,
    g: &[f64],
) -> Result<f64> {
    let base = crate::diagnostics::energy(op, pot, u)?;
    Ok(base - op.grid.inner(g, &u.values))
}
