//! Lambda-convex potentials `W(r) = beta_hat(r) - lambda r^2/2 + c_W`.
//!
//! A [`Potential`] couples a monotone graph `beta` (whose convex primitive
//! is `beta_hat`) with the quadratic concave correction and the metadata the
//! diagnostics need: a coercivity constant `eta`, optional barrier
//! singularity strength per side, optional super-quadratic growth, and an
//! optional analyticity/sign window.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Domain, GraphValue, MonotoneGraph, Piece, PieceFn, SlopeFloor};
use crate::math;

/// Barrier growth declaration on one side: the minimal section dominates
/// `c / (barrier - r)^kappa` on `(r1, barrier)` (mirrored on the left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularSide {
    pub kappa: f64,
    pub c: f64,
    pub r1: f64,
}

/// Super-quadratic growth alternative: `W(r) >= eta1 r^q - c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGrowth {
    pub eta1: f64,
    pub q: f64,
}

/// Sign/analyticity window `(iota_lo, iota_hi)` with margin `M`:
/// `W'(r) + M < 0` left of the window and `W'(r) - M > 0` right of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticWindow {
    pub iota_lo: f64,
    pub iota_hi: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub beta: MonotoneGraph,
    pub lambda: f64,
    pub c_w: f64,
    pub eta: f64,
    pub singular_upper: Option<SingularSide>,
    pub singular_lower: Option<SingularSide>,
    pub q_growth: Option<QGrowth>,
    pub analytic_window: Option<AnalyticWindow>,
}

/// Coercivity sample report for one regularization level.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsCoercivity {
    pub eps: f64,
    /// min of `W_eps'(r) r - (eta/2) r^2` over large-|r| samples
    pub slope_margin: f64,
    /// integration-constant shift needed for `W_eps(r) >= eta r^2/4`
    pub value_shift: f64,
}

/// Report of the sampled coercivity inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityReport {
    pub pass: bool,
    /// min of `W'(r) r - eta r^2` over samples with `|r| >= radius`;
    /// `NaN` when not applicable (bounded domain)
    pub slope_margin: f64,
    pub slope_applicable: bool,
    /// smallest constant to add to `c_W` so that `W(r) >= eta r^2 / 2`
    /// holds at every sample (the integration constant is free)
    pub value_shift: f64,
    pub radius: f64,
    pub eps_checks: Vec<EpsCoercivity>,
}

impl Potential {
    pub fn new(beta: MonotoneGraph, lambda: f64, c_w: f64, eta: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::Construction(String::from("lambda must be >= 0")));
        }
        if eta <= 0.0 {
            return Err(Error::Construction(String::from("eta must be > 0")));
        }
        Ok(Self {
            beta,
            lambda,
            c_w,
            eta,
            singular_upper: None,
            singular_lower: None,
            q_growth: None,
            analytic_window: None,
        })
    }

    pub fn with_singularity(mut self, lower: Option<SingularSide>, upper: Option<SingularSide>) -> Self {
        self.singular_lower = lower;
        self.singular_upper = upper;
        self
    }

    pub fn with_q_growth(mut self, q: QGrowth) -> Self {
        self.q_growth = Some(q);
        self
    }

    pub fn with_analytic_window(mut self, w: AnalyticWindow) -> Self {
        self.analytic_window = Some(w);
        self
    }

    /// Domain of the graph part (the interval `I`).
    pub fn domain(&self) -> Domain {
        self.beta.domain()
    }

    pub fn has_singularity(&self) -> bool {
        self.singular_upper.is_some() || self.singular_lower.is_some()
    }

    /// `W(r)`; explicit `+inf` outside the domain of `beta_hat`.
    pub fn w_eval(&self, r: f64) -> Result<f64> {
        let bh = self.beta.primitive(r)?;
        if bh == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        Ok(bh - 0.5 * self.lambda * r * r + self.c_w)
    }

    /// Multifunction `W'(r) = beta(r) - lambda r`.
    pub fn w_prime(&self, r: f64) -> Result<GraphValue> {
        let v = self.beta.eval(r)?;
        Ok(GraphValue {
            lo: v.lo - self.lambda * r,
            hi: v.hi - self.lambda * r,
        })
    }

    /// Minimal-section stationary selection `beta^0(r) - lambda r`.
    pub fn w_prime_min(&self, r: f64) -> Result<f64> {
        Ok(self.beta.minimal_section(r)? - self.lambda * r)
    }

    /// Regularized potential `W_eps(r) = beta_hat_eps(r) - lambda r^2/2 + c_W`.
    pub fn w_eps_eval(&self, eps: f64, r: f64) -> Result<f64> {
        let bh = self.beta.moreau_primitive(eps, r)?;
        Ok(bh - 0.5 * self.lambda * r * r + self.c_w)
    }

    /// `W_eps'(r) = beta_eps(r) - lambda r` (single valued, globally defined).
    pub fn w_eps_prime(&self, eps: f64, r: f64) -> Result<f64> {
        Ok(self.beta.yosida(eps, r)? - self.lambda * r)
    }

    /// Sampled coercivity validation.
    ///
    /// The slope inequality `W'(r) r >= eta r^2` is asserted for samples with
    /// `|r| >=` a radius (it is vacuous when the domain is bounded); the
    /// value inequality `W(r) >= eta r^2/2` is reported as the smallest
    /// integration-constant shift that would realize it, since `c_W` is
    /// free. The same pair is evaluated for `W_eps` at each requested `eps`
    /// (with `eta/2` and `eta/4` on the right-hand sides).
    pub fn validate_coercivity(&self, n_samples: usize, eps_list: &[f64]) -> CoercivityReport {
        let dom = self.domain();
        let slope_applicable = !dom.is_bounded();
        let sf = self.beta.slope_floor();
        let radius = 1.0_f64.max(2.0 * sf.s_plus).max(2.0 * sf.s_minus.abs());
        let samples = sample_grid(dom, n_samples.max(16));

        let mut slope_margin = f64::INFINITY;
        let mut value_shift = 0.0_f64;
        for &r in &samples {
            if let Ok(w) = self.w_eval(r) {
                if w.is_finite() {
                    value_shift = value_shift.max(0.5 * self.eta * r * r - w);
                }
            }
            if slope_applicable && r.abs() >= radius {
                if let Ok(wp) = self.w_prime(r) {
                    // worst selection of the multifunction
                    let v = if r >= 0.0 { wp.lo } else { wp.hi };
                    slope_margin = slope_margin.min(v * r - self.eta * r * r);
                }
            }
        }
        if !slope_applicable {
            slope_margin = f64::NAN;
        }

        let mut eps_checks = Vec::new();
        for &eps in eps_list {
            let mut sm = f64::INFINITY;
            let mut vs = 0.0_f64;
            // W_eps lives on the whole line; sample a line grid
            for &r in &sample_grid(Domain::all(), n_samples.max(16)) {
                if r.abs() >= radius {
                    if let Ok(wp) = self.w_eps_prime(eps, r) {
                        sm = sm.min(wp * r - 0.5 * self.eta * r * r);
                    }
                }
                if let Ok(w) = self.w_eps_eval(eps, r) {
                    vs = vs.max(0.25 * self.eta * r * r - w);
                }
            }
            eps_checks.push(EpsCoercivity {
                eps,
                slope_margin: sm,
                value_shift: vs,
            });
        }

        let tol = 1e-9;
        let slope_pass = !slope_applicable || slope_margin >= -tol;
        let eps_pass = eps_checks
            .iter()
            .all(|c| !slope_applicable || c.slope_margin >= -tol);
        CoercivityReport {
            pass: slope_pass && eps_pass,
            slope_margin,
            slope_applicable,
            value_shift,
            radius,
            eps_checks,
        }
    }

    /// Compatibility `2 kappa nu >= d` between the declared barrier strength
    /// and the Hoelder exponent.
    pub fn validate_separation_compatibility(&self, holder_nu: f64, dim: usize) -> Result<bool> {
        if !self.has_singularity() {
            return Err(Error::MissingMetadata(
                "potential declares no barrier singularity",
            ));
        }
        let kappa = self
            .singular_upper
            .map(|s| s.kappa)
            .into_iter()
            .chain(self.singular_lower.map(|s| s.kappa))
            .fold(f64::INFINITY, f64::min);
        Ok(2.0 * kappa * holder_nu >= dim as f64)
    }

    /// Sampled check of the declared barrier growth (minimal section above
    /// `c/(barrier - r)^kappa` on the declared strip).
    pub fn validate_singularity(&self, n_samples: usize) -> Result<bool> {
        if !self.has_singularity() {
            return Err(Error::MissingMetadata(
                "potential declares no barrier singularity",
            ));
        }
        let dom = self.domain();
        let n = n_samples.max(8);
        if let Some(s) = self.singular_upper {
            let hi = dom.hi;
            for k in 0..n {
                // geometric approach to the barrier
                let d = (hi - s.r1) * math::powf(0.5, 1.0 + 14.0 * k as f64 / n as f64);
                let r = hi - d;
                let need = s.c / math::powf(hi - r, s.kappa);
                if self.beta.minimal_section(r)? < need * (1.0 - 1e-9) {
                    return Ok(false);
                }
            }
        }
        if let Some(s) = self.singular_lower {
            let lo = dom.lo;
            for k in 0..n {
                let d = (s.r1 - lo) * math::powf(0.5, 1.0 + 14.0 * k as f64 / n as f64);
                let r = lo + d;
                let need = s.c / math::powf(r - lo, s.kappa);
                if -self.beta.minimal_section(r)? < need * (1.0 - 1e-9) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Sampled check of the sign window (H7-style): `W'(r) + M < 0` for
    /// `r <= iota_lo` and `W'(r) - M > 0` for `r >= iota_hi`.
    pub fn validate_sign_window(&self, n_samples: usize) -> Result<bool> {
        let w = self
            .analytic_window
            .ok_or(Error::MissingMetadata("potential declares no sign window"))?;
        let dom = self.domain();
        let n = n_samples.max(8);
        let left_cap = dom.lo.max(w.iota_lo - 10.0);
        for k in 0..=n {
            let r = left_cap + (w.iota_lo - left_cap) * k as f64 / n as f64;
            if !dom.contains(r) {
                continue;
            }
            // worst (largest) selection on the left side
            if self.w_prime(r)?.hi + w.margin >= 0.0 {
                return Ok(false);
            }
        }
        let right_cap = dom.hi.min(w.iota_hi + 10.0);
        for k in 0..=n {
            let r = w.iota_hi + (right_cap - w.iota_hi) * k as f64 / n as f64;
            if !dom.contains(r) {
                continue;
            }
            if self.w_prime(r)?.lo - w.margin <= 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    // ---- built-in catalog -------------------------------------------------

    /// `W(r) = (r^2 - 1)^2 / 4`: cubic graph, `lambda = 1`, `c_W = 1/4`.
    /// The cubic carries the flat window `[-1, 1]` (quotients reach 3
    /// outside), which sets the large-|r| radius of the coercivity check.
    pub fn double_well() -> Self {
        let beta = MonotoneGraph::from_parts(
            Domain::all(),
            vec![Piece {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                f: PieceFn::OddPower { c: 1.0, k: 3 },
            }],
            vec![],
            SlopeFloor {
                sigma: 1.5,
                s_minus: -1.0,
                s_plus: 1.0,
            },
            None,
        )
        .expect("builtin");
        Self::new(beta, 1.0, 0.25, 0.5).expect("builtin")
    }

    /// `W(r) = r^2/2`: identity graph, `lambda = 0`.
    pub fn quadratic() -> Self {
        Self::new(MonotoneGraph::identity(), 0.0, 0.0, 1.0).expect("builtin")
    }

    /// `W(r) = (1-r)ln(1-r) + (1+r)ln(1+r)` on `(-1,1)`. Carries no power
    /// singularity metadata: the barrier blow-up is only logarithmic, so
    /// separation analysis refuses it.
    pub fn logarithmic() -> Self {
        Self::new(MonotoneGraph::log_barrier(), 0.0, 0.0, 1.0).expect("builtin")
    }

    /// Barrier potential on `(-rbar, rbar)` with
    /// `beta^0(r) = c sign(r) ((1-|r|/rbar)^{-kappa} - 1)`.
    pub fn singular_power(rbar: f64, kappa: f64, c: f64) -> Self {
        let beta = MonotoneGraph::singular_power(rbar, kappa, c);
        let eta = 1.0_f64.min(0.5 * c * kappa / rbar);
        let side = |sign: f64| SingularSide {
            kappa,
            // beta^0 >= c_eff/(rbar - |r|)^kappa on the outer half strip
            c: c * math::powf(rbar, kappa) * (1.0 - math::powf(0.5, kappa)),
            r1: sign * 0.5 * rbar,
        };
        Self::new(beta, 0.0, 0.0, eta)
            .expect("builtin")
            .with_singularity(Some(side(-1.0)), Some(side(1.0)))
    }

    /// Obstacle potential `W(r) = r^2/2 + I_{(-inf, 0]}(r)`.
    pub fn half_line_obstacle() -> Self {
        Self::new(MonotoneGraph::half_line_obstacle(), 0.0, 0.0, 1.0).expect("builtin")
    }
}

/// Deterministic sample grid: log-spaced approaches to finite barriers,
/// log-spaced magnitudes toward infinite ends, and a linear backbone.
pub fn sample_grid(dom: Domain, n: usize) -> Vec<f64> {
    let mut pts = Vec::with_capacity(n + 8);
    let lo = if dom.lo.is_finite() { dom.lo } else { -10.0 };
    let hi = if dom.hi.is_finite() { dom.hi } else { 10.0 };
    let span = hi - lo;
    let backbone = n / 2;
    for k in 0..=backbone {
        let r = lo + span * k as f64 / backbone as f64;
        if dom.contains(r) {
            pts.push(r);
        }
    }
    let cluster = n / 4;
    for k in 1..=cluster {
        let d = span * math::powf(10.0, -8.0 * k as f64 / cluster as f64);
        let hi_pt = hi - d;
        if dom.contains(hi_pt) {
            pts.push(hi_pt);
        }
        let lo_pt = lo + d;
        if dom.contains(lo_pt) {
            pts.push(lo_pt);
        }
    }
    if dom.contains(0.0) {
        pts.push(0.0);
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a}");
    }

    #[test]
    fn double_well_values() {
        let p = Potential::double_well();
        close(p.w_eval(1.0).unwrap(), 0.0, 1e-10);
        close(p.w_eval(0.0).unwrap(), 0.25, 1e-12);
        close(p.w_eval(-1.0).unwrap(), 0.0, 1e-10);
    }

    #[test]
    fn logarithmic_at_zero() {
        let p = Potential::logarithmic();
        close(p.w_eval(0.0).unwrap(), 0.0, 1e-12);
        // closed form (1-r)ln(1-r) + (1+r)ln(1+r) at r = 0.5
        let exact = 0.5 * math::ln(0.5) + 1.5 * math::ln(1.5);
        close(p.w_eval(0.5).unwrap(), exact, 1e-9);
    }

    #[test]
    fn w_prime_double_well() {
        let p = Potential::double_well();
        let v = p.w_prime(1.0).unwrap();
        close(v.lo, 0.0, 1e-12);
        close(v.hi, 0.0, 1e-12);
        let v = p.w_prime(0.5).unwrap();
        close(v.lo, -0.375, 1e-12);
    }

    #[test]
    fn w_prime_singular_barrier_blowup() {
        let p = Potential::singular_power(1.0, 2.0, 1.0);
        let v = p.w_prime(0.9).unwrap().lo;
        assert!(v >= 1.0 / (0.1 * 0.1) - 1.0, "got {v}");
    }

    #[test]
    fn coercivity_double_well_passes() {
        let p = Potential::double_well();
        let rep = p.validate_coercivity(512, &[1e-1, 1e-2]);
        assert!(rep.pass, "margin {}", rep.slope_margin);
        assert!(rep.slope_applicable);
        assert_eq!(rep.radius, 2.0);
        // the wells sit below eta r^2/2; the shift records that
        assert!(rep.value_shift > 0.0);
    }

    #[test]
    fn coercivity_concave_fails() {
        // beta = id, lambda = 2: W'(r) r = -r^2 < 0
        let p = Potential::new(MonotoneGraph::identity(), 2.0, 0.0, 0.5).unwrap();
        let rep = p.validate_coercivity(256, &[]);
        assert!(!rep.pass);
        assert!(rep.slope_margin < 0.0);
    }

    #[test]
    fn coercivity_bounded_domain_vacuous() {
        let p = Potential::logarithmic();
        let rep = p.validate_coercivity(256, &[1e-1]);
        assert!(rep.pass);
        assert!(!rep.slope_applicable);
        assert!(rep.slope_margin.is_nan());
    }

    #[test]
    fn separation_compatibility_arithmetic() {
        let p = Potential::singular_power(1.0, 2.0, 1.0);
        assert!(p.validate_separation_compatibility(0.5, 1).unwrap());
        let weak = Potential::singular_power(1.0, 1.0, 1.0);
        assert!(!weak.validate_separation_compatibility(0.4, 2).unwrap());
        let log = Potential::logarithmic();
        assert!(matches!(
            log.validate_separation_compatibility(0.5, 1),
            Err(Error::MissingMetadata(_))
        ));
    }

    #[test]
    fn singularity_samples_pass() {
        let p = Potential::singular_power(1.0, 2.0, 1.0);
        assert!(p.validate_singularity(64).unwrap());
    }

    #[test]
    fn lambda_convexity_sampled() {
        // r -> W(r) + lambda r^2/2 is convex (it is beta_hat + c_W)
        let p = Potential::double_well();
        let g = |r: f64| p.w_eval(r).unwrap() + 0.5 * p.lambda * r * r;
        let mut r = -2.0;
        while r < 2.0 {
            let m = g(r + 0.25);
            assert!(m <= 0.5 * (g(r) + g(r + 0.5)) + 1e-9);
            r += 0.125;
        }
    }

    #[test]
    fn double_well_argmin() {
        let p = Potential::double_well();
        let mut best = (f64::INFINITY, 0.0);
        let mut r = -2.0;
        while r <= 2.0 {
            let w = p.w_eval(r).unwrap();
            if w < best.0 {
                best = (w, r);
            }
            r += 0.0625;
        }
        assert!((best.1.abs() - 1.0).abs() < 1e-9);
        close(p.w_eval(1.0).unwrap(), 0.0, 1e-10);
        close(p.w_eval(-1.0).unwrap(), 0.0, 1e-10);
    }

    #[test]
    fn w_prime_matches_w_eval_derivative() {
        let p = Potential::double_well();
        let h = 1e-5;
        for &r in &[-1.5, -0.3, 0.7, 1.2] {
            let num = (p.w_eval(r + h).unwrap() - p.w_eval(r - h).unwrap()) / (2.0 * h);
            let exact = p.w_prime(r).unwrap().lo;
            close(num, exact, 1e-7 + h * h * 100.0);
        }
    }

    #[test]
    fn sign_window_double_well() {
        let p = Potential::double_well().with_analytic_window(AnalyticWindow {
            iota_lo: -1.5,
            iota_hi: 1.5,
            margin: 0.5,
        });
        // W'(r) = r^3 - r: at +-1.5 it is +-1.875, margin 0.5 fits
        assert!(p.validate_sign_window(64).unwrap());
        let tight = Potential::double_well().with_analytic_window(AnalyticWindow {
            iota_lo: -1.0,
            iota_hi: 1.0,
            margin: 0.5,
        });
        assert!(!tight.validate_sign_window(64).unwrap());
    }
}
