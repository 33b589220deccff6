//! Semi-implicit backward Euler scheme
//! `alpha_nu((u^i - u^{i-1})/tau) + B u^i + beta_eps(u^i) + eps u^i
//!  = lambda u^{i-1} + f^i`
//! with a globally convergent semismooth Newton inner solver, plus
//! continuation studies in `(tau, eps, nu)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::LedgerEntry;
use crate::error::{Error, Result};
use crate::graph::MonotoneGraph;
use crate::linalg::{cg, CgOutcome, SparseSym};
use crate::math;
use crate::potential::Potential;
use crate::scenario::Scenario;
use crate::spatial::{Bc, EllipticOperator, Field, Grid};

/// Time discretization and regularization knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub tau: f64,
    pub t_end: f64,
    /// Yosida parameter of the potential graph `beta`.
    pub eps: f64,
    /// Yosida parameter of the rate graph `alpha`.
    pub nu: f64,
    pub tol_newton: f64,
    pub max_newton: usize,
    pub max_backtrack: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            t_end: 1.0,
            eps: 1e-8,
            nu: 1e-8,
            tol_newton: 1e-10,
            max_newton: 50,
            max_backtrack: 40,
        }
    }
}

impl SchemeConfig {
    /// Number of steps; the horizon must be an integer multiple of `tau`.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.tau > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::Precondition(String::from(
                "tau and t_end must be positive",
            )));
        }
        let n = math::round(self.t_end / self.tau);
        if (n * self.tau - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) || n < 1.0 {
            return Err(Error::Precondition(format!(
                "t_end = {} is not an integer multiple of tau = {}",
                self.t_end, self.tau
            )));
        }
        Ok(n as usize)
    }
}

/// Right-hand side families.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    /// time-independent nodal profile (the f2 regime)
    Constant(Vec<f64>),
    /// `f(t) = profile * exp(-rate t)` (an f1-regime family)
    Decaying { profile: Vec<f64>, rate: f64 },
    /// explicit values at the time nodes; interpolation is refused
    Tabulated { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl Forcing {
    /// Sample at time `t`; `Tabulated` requires an exact time node.
    pub fn at(&self, t: f64, nodes: usize) -> Result<Vec<f64>> {
        match self {
            Forcing::Zero => Ok(vec![0.0; nodes]),
            Forcing::Constant(profile) => Ok(profile.clone()),
            Forcing::Decaying { profile, rate } => {
                let s = math::exp(-rate * t);
                Ok(profile.iter().map(|v| v * s).collect())
            }
            Forcing::Tabulated { times, values } => {
                let tol = 1e-9 * t.abs().max(1.0);
                for (k, &tk) in times.iter().enumerate() {
                    if (tk - t).abs() <= tol {
                        return Ok(values[k].clone());
                    }
                }
                Err(Error::Precondition(format!(
                    "tabulated forcing has no value at t = {t} (interpolation refused)"
                )))
            }
        }
    }

    /// Like [`at`](Self::at), but tabulated data may fall back to the value
    /// at `t_fallback` (used by the half-step rejection retry, which samples
    /// off the declared grid).
    fn at_or(&self, t: f64, t_fallback: f64, nodes: usize) -> Result<Vec<f64>> {
        match self.at(t, nodes) {
            Ok(v) => Ok(v),
            Err(_) if matches!(self, Forcing::Tabulated { .. }) => self.at(t_fallback, nodes),
            Err(e) => Err(e),
        }
    }

    pub fn is_time_constant(&self) -> bool {
        matches!(self, Forcing::Zero | Forcing::Constant(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Forcing::Zero)
    }
}

/// Newton iteration summary for one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    pub degenerate_cells: usize,
}

/// A nodal nonlinear system `R(v) = 0` with a pointwise + stiffness split
/// Jacobian, solved by [`inner_solve`].
pub trait NodalSystem {
    fn grid(&self) -> &Grid;
    /// Full-length residual; rows of Dirichlet-fixed nodes must be zero.
    fn residual(&self, v: &[f64], out: &mut [f64]) -> Result<()>;
    /// Pointwise part of the Jacobian diagonal (full length).
    fn diag(&self, v: &[f64], out: &mut [f64]) -> Result<()>;
    /// Energy Hessian on the free nodes plus degeneracy count.
    fn stiffness(&self, v: &[f64]) -> (SparseSym, usize);
    /// Whether the stiffness part is independent of `v` (cacheable).
    fn constant_stiffness(&self) -> bool {
        false
    }
}

/// Semismooth Newton with Armijo backtracking on the residual H-norm.
///
/// Solves the weighted symmetric system `(K + W diag) dx = -W R` by
/// preconditioned CG; a nonpositive-curvature breakdown (possible for the
/// stationary system, whose `-lambda` shift can make the Jacobian
/// indefinite away from minima) triggers an escalating diagonal shift.
pub fn inner_solve<S: NodalSystem>(
    sys: &S,
    u_init: &Field,
    tol: f64,
    max_iter: usize,
    max_backtrack: usize,
) -> Result<(Field, NewtonStats)> {
    let grid = *sys.grid();
    let n = grid.nodes();
    let weights = grid.weights();
    let free = grid.free_nodes();
    let nf = free.len();

    let mut v = u_init.values.clone();
    let mut r = vec![0.0; n];
    sys.residual(&v, &mut r)?;
    let mut rn = grid.h_norm(&r);
    let mut history = vec![rn];
    let mut degenerate = 0usize;
    let mut cached_k: Option<SparseSym> = None;
    let mut nonmonotone_budget = 5usize;

    for it in 0..max_iter {
        if rn <= tol {
            return Ok((
                Field {
                    values: v,
                    time: u_init.time,
                },
                NewtonStats {
                    iterations: it,
                    residual: rn,
                    history,
                    degenerate_cells: degenerate,
                },
            ));
        }
        let k = if sys.constant_stiffness() {
            if cached_k.is_none() {
                let (k0, dg) = sys.stiffness(&v);
                degenerate = degenerate.max(dg);
                cached_k = Some(k0);
            }
            cached_k.clone().unwrap()
        } else {
            let (k0, dg) = sys.stiffness(&v);
            degenerate = degenerate.max(dg);
            k0
        };
        let mut d = vec![0.0; n];
        sys.diag(&v, &mut d)?;
        let mut jw = k;
        let wd: Vec<f64> = free.iter().map(|&i| weights[i] * d[i]).collect();
        jw.add_diag(&wd);
        let rhs: Vec<f64> = free.iter().map(|&i| -weights[i] * r[i]).collect();

        // CG with escalating diagonal shift on indefiniteness
        let mut shift = 0.0;
        let diag_scale = jw
            .diag()
            .iter()
            .fold(0.0_f64, |acc, x| acc.max(x.abs()))
            .max(1e-300);
        let mut dx_free: Option<Vec<f64>> = None;
        for _ in 0..10 {
            let mut sys_mat = jw.clone();
            if shift > 0.0 {
                let sd: Vec<f64> = free.iter().map(|&i| shift * weights[i]).collect();
                sys_mat.add_diag(&sd);
            }
            let sol = cg(&sys_mat, &rhs, &vec![0.0; nf], 1e-13, 20 * nf + 200);
            match sol.outcome {
                CgOutcome::Indefinite => {
                    shift = if shift == 0.0 { 1e-10 * diag_scale } else { shift * 100.0 };
                    if shift > 1e12 * diag_scale {
                        break;
                    }
                }
                _ => {
                    dx_free = Some(sol.x);
                    break;
                }
            }
        }
        let dx_free = dx_free.ok_or(Error::NewtonDivergence {
            iterations: it,
            residual: rn,
            history: history.clone(),
        })?;
        let mut dx = vec![0.0; n];
        for (kf, &i) in free.iter().enumerate() {
            dx[i] = dx_free[kf];
        }

        // backtracking on |R|_H
        let mut s = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; n];
        let mut r_trial = vec![0.0; n];
        for _ in 0..max_backtrack {
            for i in 0..n {
                trial[i] = v[i] + s * dx[i];
            }
            if sys.residual(&trial, &mut r_trial).is_ok() {
                let rt = grid.h_norm(&r_trial);
                if rt.is_finite() && rt <= (1.0 - 1e-4 * s) * rn {
                    v.copy_from_slice(&trial);
                    r.copy_from_slice(&r_trial);
                    rn = rt;
                    accepted = true;
                    nonmonotone_budget = 5;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            // semismooth kinks with slopes of order 1/nu defeat monotone
            // line searches: the full step overshoots the kink, and the
            // steep-side Jacobian of the *next* iteration snaps onto the
            // root. Accept the full step nonmonotonically, a few times.
            if nonmonotone_budget > 0 {
                for i in 0..n {
                    trial[i] = v[i] + dx[i];
                }
                if sys.residual(&trial, &mut r_trial).is_ok() {
                    let rt = grid.h_norm(&r_trial);
                    if rt.is_finite() {
                        v.copy_from_slice(&trial);
                        r.copy_from_slice(&r_trial);
                        rn = rt;
                        accepted = true;
                        nonmonotone_budget -= 1;
                    }
                }
            }
        }
        history.push(rn);
        if !accepted {
            return Err(Error::NewtonDivergence {
                iterations: it + 1,
                residual: rn,
                history,
            });
        }
    }
    if rn <= tol {
        return Ok((
            Field {
                values: v,
                time: u_init.time,
            },
            NewtonStats {
                iterations: max_iter,
                residual: rn,
                history,
                degenerate_cells: degenerate,
            },
        ));
    }
    Err(Error::NewtonDivergence {
        iterations: max_iter,
        residual: rn,
        history,
    })
}

/// The per-step nonlinear system of the scheme.
pub struct SchemeSystem<'a> {
    pub op: &'a EllipticOperator,
    pub pot: &'a Potential,
    pub alpha: &'a MonotoneGraph,
    pub tau: f64,
    pub eps: f64,
    pub nu: f64,
    pub u_prev: &'a [f64],
    /// `lambda u^{i-1} + f^i`
    pub rhs: Vec<f64>,
}

impl<'a> NodalSystem for SchemeSystem<'a> {
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
            let rate = (v[i] - self.u_prev[i]) / self.tau;
            out[i] = self.alpha.yosida(self.nu, rate)?
                + bu.values[i]
                + self.pot.beta.yosida(self.eps, v[i])?
                + self.eps * v[i]
                - self.rhs[i];
        }
        Ok(())
    }

    fn diag(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        for i in 0..v.len() {
            let rate = (v[i] - self.u_prev[i]) / self.tau;
            out[i] = self.alpha.yosida_deriv(self.nu, rate)? / self.tau
                + self.pot.beta.yosida_deriv(self.eps, v[i])?
                + self.eps;
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

/// One scheme step from `u_prev` to `u^i` at `t = i tau`.
pub fn step(
    u_prev: &Field,
    i: usize,
    cfg: &SchemeConfig,
    op: &EllipticOperator,
    pot: &Potential,
    alpha: &MonotoneGraph,
    forcing: &Forcing,
) -> Result<(Field, LedgerEntry)> {
    let t = i as f64 * cfg.tau;
    let f_i = forcing.at(t, op.grid.nodes())?;
    step_with_forcing(u_prev, i, t, cfg.tau, cfg, op, pot, alpha, &f_i)
}

#[allow(clippy::too_many_arguments)]
fn step_with_forcing(
    u_prev: &Field,
    i: usize,
    t: f64,
    tau: f64,
    cfg: &SchemeConfig,
    op: &EllipticOperator,
    pot: &Potential,
    alpha: &MonotoneGraph,
    f_i: &[f64],
) -> Result<(Field, LedgerEntry)> {
    let rhs: Vec<f64> = u_prev
        .values
        .iter()
        .zip(f_i)
        .map(|(&u, &f)| pot.lambda * u + f)
        .collect();
    let sys = SchemeSystem {
        op,
        pot,
        alpha,
        tau,
        eps: cfg.eps,
        nu: cfg.nu,
        u_prev: &u_prev.values,
        rhs,
    };
    let (mut u_next, stats) = inner_solve(
        &sys,
        u_prev,
        cfg.tol_newton,
        cfg.max_newton,
        cfg.max_backtrack,
    )?;
    u_next.time = t;
    let entry = LedgerEntry::compute(op, pot, alpha, cfg, i, &u_next, Some(u_prev), &stats)?;
    Ok((u_next, entry))
}

/// Time-indexed states with the per-step diagnostics ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Field>,
    pub ledger: Vec<LedgerEntry>,
    pub tau: f64,
    pub fingerprint: String,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> &Field {
        self.states.last().expect("nonempty trajectory")
    }

    pub fn t_end(&self) -> f64 {
        self.tau * self.n_steps() as f64
    }

    /// Piecewise linear interpolant.
    pub fn interpolate(&self, t: f64) -> Field {
        let n = self.n_steps();
        let s = (t / self.tau).clamp(0.0, n as f64);
        let k = math::floor(s) as usize;
        if k >= n {
            return self.states[n].clone();
        }
        let a = s - k as f64;
        let lo = &self.states[k].values;
        let hi = &self.states[k + 1].values;
        Field {
            values: lo
                .iter()
                .zip(hi)
                .map(|(&x, &y)| (1.0 - a) * x + a * y)
                .collect(),
            time: t,
        }
    }

    /// Backward constant interpolant (`u(t) = u^i` on `((i-1)tau, i tau]`).
    pub fn backward_constant(&self, t: f64) -> &Field {
        if t <= 0.0 {
            return &self.states[0];
        }
        let k = (math::ceil(t / self.tau - 1e-12) as usize).min(self.n_steps());
        &self.states[k]
    }
}

/// A failed run carries the partial trajectory up to the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub partial: Trajectory,
    pub failed_step: usize,
    pub error: Error,
}

/// Run the scheme over the whole horizon. On a Newton divergence the step
/// is retried once as two half steps; a second failure aborts with the
/// partial trajectory.
pub fn run(scn: &Scenario) -> core::result::Result<Trajectory, RunFailure> {
    let cfg = &scn.scheme;
    let op = &scn.operator;
    let n = match cfg.n_steps() {
        Ok(n) => n,
        Err(e) => {
            return Err(RunFailure {
                partial: Trajectory {
                    states: vec![scn.initial.clone()],
                    ledger: Vec::new(),
                    tau: cfg.tau,
                    fingerprint: scn.fingerprint.clone(),
                },
                failed_step: 0,
                error: e,
            })
        }
    };
    let mut states = Vec::with_capacity(n + 1);
    let mut ledger = Vec::with_capacity(n + 1);
    let mut u0 = scn.initial.clone();
    u0.time = 0.0;
    let entry0 = LedgerEntry::initial(op, &scn.potential, &scn.alpha, cfg, &u0);
    match entry0 {
        Ok(e) => ledger.push(e),
        Err(e) => {
            return Err(RunFailure {
                partial: Trajectory {
                    states: vec![u0],
                    ledger,
                    tau: cfg.tau,
                    fingerprint: scn.fingerprint.clone(),
                },
                failed_step: 0,
                error: e,
            })
        }
    }
    states.push(u0);

    for i in 1..=n {
        let prev = states.last().unwrap();
        match step(prev, i, cfg, op, &scn.potential, &scn.alpha, &scn.forcing) {
            Ok((u, entry)) => {
                states.push(u);
                ledger.push(entry);
            }
            Err(Error::NewtonDivergence { .. }) => {
                // single rejection retry: two half steps to the same node
                match half_step_retry(prev, i, cfg, op, scn) {
                    Ok((u, entry)) => {
                        states.push(u);
                        ledger.push(entry);
                    }
                    Err(e) => {
                        return Err(RunFailure {
                            partial: Trajectory {
                                states,
                                ledger,
                                tau: cfg.tau,
                                fingerprint: scn.fingerprint.clone(),
                            },
                            failed_step: i,
                            error: e,
                        })
                    }
                }
            }
            Err(e) => {
                return Err(RunFailure {
                    partial: Trajectory {
                        states,
                        ledger,
                        tau: cfg.tau,
                        fingerprint: scn.fingerprint.clone(),
                    },
                    failed_step: i,
                    error: e,
                })
            }
        }
    }
    Ok(Trajectory {
        states,
        ledger,
        tau: cfg.tau,
        fingerprint: scn.fingerprint.clone(),
    })
}

fn half_step_retry(
    u_prev: &Field,
    i: usize,
    cfg: &SchemeConfig,
    op: &EllipticOperator,
    scn: &Scenario,
) -> Result<(Field, LedgerEntry)> {
    let t_mid = (i as f64 - 0.5) * cfg.tau;
    let t_end = i as f64 * cfg.tau;
    let nodes = op.grid.nodes();
    let f_mid = scn.forcing.at_or(t_mid, t_end, nodes)?;
    let f_end = scn.forcing.at(t_end, nodes)?;
    let half = 0.5 * cfg.tau;
    let (u_mid, _) = step_with_forcing(
        u_prev,
        i,
        t_mid,
        half,
        cfg,
        op,
        &scn.potential,
        &scn.alpha,
        &f_mid,
    )?;
    let (u_end, mut entry) = step_with_forcing(
        &u_mid,
        i,
        t_end,
        half,
        cfg,
        op,
        &scn.potential,
        &scn.alpha,
        &f_end,
    )?;
    // report the ledger against the full-step increment
    let stats = NewtonStats {
        iterations: entry.newton_iters,
        residual: entry.residual,
        history: vec![entry.residual],
        degenerate_cells: entry.degenerate_cells,
    };
    entry = LedgerEntry::compute(op, &scn.potential, &scn.alpha, cfg, i, &u_end, Some(u_prev), &stats)?;
    Ok((u_end, entry))
}

/// One rung of a continuation ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationRung {
    pub tau: f64,
    pub eps: f64,
    pub nu: f64,
}

/// Successive-difference report of a `(tau, eps, nu)` continuation study.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationReport {
    pub rungs: Vec<ContinuationRung>,
    /// `max_t |u_k(t) - u_{k+1}(t)|_H` over the common time grid
    pub sup_diffs: Vec<f64>,
    /// `Phi(u_k(T))` per rung
    pub final_phi: Vec<f64>,
    /// successive `|Phi_k(T) - Phi_{k+1}(T)|`
    pub final_phi_diffs: Vec<f64>,
    /// per-rung solution bounds (barrier containment evidence)
    pub min_u: Vec<f64>,
    pub max_u: Vec<f64>,
}

/// Validate a continuation ladder: nonincreasing parameters and step
/// sizes dividing the coarsest one (so a common time grid exists).
pub fn validate_ladder(ladder: &[ContinuationRung]) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::Precondition(String::from(
            "continuation ladder needs at least two rungs",
        )));
    }
    for w in ladder.windows(2) {
        if w[1].tau > w[0].tau || w[1].eps > w[0].eps || w[1].nu > w[0].nu {
            return Err(Error::Precondition(String::from(
                "ladder parameters must be nonincreasing",
            )));
        }
    }
    let tau0 = ladder[0].tau;
    for r in ladder {
        let ratio = tau0 / r.tau;
        if (ratio - math::round(ratio)).abs() > 1e-9 {
            return Err(Error::Precondition(format!(
                "rung tau = {} does not divide the coarsest tau = {tau0}",
                r.tau
            )));
        }
    }
    Ok(())
}

/// The scenario of one rung: the base with its scheme knobs replaced.
pub fn rung_scenario(scn: &Scenario, rung: &ContinuationRung) -> Scenario {
    let mut s = scn.clone();
    s.scheme.tau = rung.tau;
    s.scheme.eps = rung.eps;
    s.scheme.nu = rung.nu;
    s
}

/// Run the scenario at each rung of a nonincreasing `(tau, eps, nu)`
/// ladder and compare successive rungs on the coarsest time grid. Rung
/// runs are independent; callers may execute them concurrently and use
/// [`continuation_report`] on the collected trajectories.
pub fn continuation_study(
    scn: &Scenario,
    ladder: &[ContinuationRung],
) -> Result<ContinuationReport> {
    validate_ladder(ladder)?;
    let mut trajectories = Vec::with_capacity(ladder.len());
    for r in ladder {
        let traj = run(&rung_scenario(scn, r)).map_err(|f| f.error)?;
        trajectories.push(traj);
    }
    continuation_report(scn, ladder, &trajectories)
}

/// Successive-difference comparison of per-rung trajectories on the
/// coarsest rung's time grid.
pub fn continuation_report(
    scn: &Scenario,
    ladder: &[ContinuationRung],
    trajectories: &[Trajectory],
) -> Result<ContinuationReport> {
    let tau0 = ladder[0].tau;
    let n0 = trajectories[0].n_steps();
    let grid = &scn.operator.grid;
    let mut sup_diffs = Vec::new();
    for w in trajectories.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let stride_a = math::round(tau0 / a.tau) as usize;
        let stride_b = math::round(tau0 / b.tau) as usize;
        let mut sup = 0.0_f64;
        for k in 0..=n0 {
            let ua = &a.states[k * stride_a].values;
            let ub = &b.states[k * stride_b].values;
            let diff: Vec<f64> = ua.iter().zip(ub).map(|(x, y)| x - y).collect();
            sup = sup.max(grid.h_norm(&diff));
        }
        sup_diffs.push(sup);
    }
    let mut final_phi = Vec::new();
    let mut min_u = Vec::new();
    let mut max_u = Vec::new();
    for t in trajectories {
        final_phi.push(scn.operator.phi_energy(t.final_state())?);
        min_u.push(t.states.iter().map(|s| s.min()).fold(f64::INFINITY, f64::min));
        max_u.push(t.states.iter().map(|s| s.max()).fold(f64::NEG_INFINITY, f64::max));
    }
    let final_phi_diffs = final_phi.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    Ok(ContinuationReport {
        rungs: ladder.to_vec(),
        sup_diffs,
        final_phi,
        final_phi_diffs,
        min_u,
        max_u,
    })
}
