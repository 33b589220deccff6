//! Maximal monotone graphs on the real line.
//!
//! A [`MonotoneGraph`] is a nondecreasing multifunction normalized so that
//! `0` is in its domain and `0` is one of its values there. It is stored as
//! ordered smooth pieces covering the interior of the domain plus a finite
//! list of jump points carrying closed value intervals (vertical segments,
//! possibly rays to infinity). On top of that representation the module
//! provides the calculus the time stepper needs: minimal section, resolvent
//! `(Id + nu*g)^{-1}`, Yosida approximation, slope certificates, and the
//! convex primitive.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::quad;

/// Relative slack granted to sampled slope certificates.
pub const CERT_SLACK: f64 = 1e-6;
/// Absolute floor for slope certificates; rescues graphs with `sigma = 0`
/// from sign noise of order `tol_root / (nu * h)` in the quotients.
pub const CERT_ABS_FLOOR: f64 = 1e-8;
/// Default cap for the Yosida threshold `nu_bar`.
pub const NU_BAR_CAP: f64 = 1e-1;

const MAX_ROOT_ITER: usize = 240;

/// A closed value interval of the multifunction at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphValue {
    pub lo: f64,
    pub hi: f64,
}

impl GraphValue {
    pub fn singleton(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    /// Element of least absolute value.
    pub fn min_abs(&self) -> f64 {
        if self.lo <= 0.0 && 0.0 <= self.hi {
            0.0
        } else if self.lo > 0.0 {
            self.lo
        } else {
            self.hi
        }
    }

    /// Distance from `v` to the interval.
    pub fn dist(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }
}

/// Domain interval with endpoint tags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Domain {
    pub fn all() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_closed: false,
            hi_closed: false,
        }
    }

    /// Membership in the domain itself (open endpoints excluded).
    pub fn contains(&self, r: f64) -> bool {
        let above = if self.lo_closed { r >= self.lo } else { r > self.lo };
        let below = if self.hi_closed { r <= self.hi } else { r < self.hi };
        above && below
    }

    /// Membership in the closure.
    pub fn contains_closure(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Smooth monotone scalar functions the pieces are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PieceFn {
    /// Constant value.
    Constant(f64),
    /// `a*r + b` with `a >= 0`.
    Affine { a: f64, b: f64 },
    /// `c * r^k` with odd `k` and `c >= 0`.
    OddPower { c: f64, k: u32 },
    /// `a*r + c*sign(r)*|r|^p` with `a, c >= 0`, `p >= 1`.
    LinearPlusPower { a: f64, c: f64, p: f64 },
    /// `ln((1+r)/(1-r))` on `(-1, 1)`.
    LogRatio,
    /// `r / (1 - r^2)` on `(-1, 1)`.
    RationalBarrier,
    /// `c * sign(r) * ((1 - |r|/rbar)^{-kappa} - 1)` on `(-rbar, rbar)`.
    SingularPower { rbar: f64, kappa: f64, c: f64 },
}

impl PieceFn {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            PieceFn::Constant(v) => v,
            PieceFn::Affine { a, b } => a * r + b,
            PieceFn::OddPower { c, k } => c * math::powi(r, k),
            PieceFn::LinearPlusPower { a, c, p } => {
                a * r + c * r.signum() * math::powf(r.abs(), p)
            }
            PieceFn::LogRatio => {
                if r <= -1.0 {
                    f64::NEG_INFINITY
                } else if r >= 1.0 {
                    f64::INFINITY
                } else {
                    math::ln((1.0 + r) / (1.0 - r))
                }
            }
            PieceFn::RationalBarrier => {
                let d = 1.0 - r * r;
                if d <= 0.0 {
                    r.signum() * f64::INFINITY
                } else {
                    r / d
                }
            }
            PieceFn::SingularPower { rbar, kappa, c } => {
                let q = 1.0 - r.abs() / rbar;
                if q <= 0.0 {
                    r.signum() * f64::INFINITY
                } else {
                    c * r.signum() * (math::powf(q, -kappa) - 1.0)
                }
            }
        }
    }

    /// Derivative (one-sided at kinks of `LinearPlusPower` with `p < 1`,
    /// which we exclude by construction).
    pub fn deriv(&self, r: f64) -> f64 {
        match *self {
            PieceFn::Constant(_) => 0.0,
            PieceFn::Affine { a, .. } => a,
            PieceFn::OddPower { c, k } => c * k as f64 * math::powi(r, k - 1),
            PieceFn::LinearPlusPower { a, c, p } => a + c * p * math::powf(r.abs(), p - 1.0),
            PieceFn::LogRatio => {
                let d = 1.0 - r * r;
                if d <= 0.0 {
                    f64::INFINITY
                } else {
                    2.0 / d
                }
            }
            PieceFn::RationalBarrier => {
                let d = 1.0 - r * r;
                if d <= 0.0 {
                    f64::INFINITY
                } else {
                    (1.0 + r * r) / (d * d)
                }
            }
            PieceFn::SingularPower { rbar, kappa, c } => {
                let q = 1.0 - r.abs() / rbar;
                if q <= 0.0 {
                    f64::INFINITY
                } else {
                    c * kappa / rbar * math::powf(q, -kappa - 1.0)
                }
            }
        }
    }

    /// Power of the blow-up at a domain barrier the function touches
    /// (`0` means logarithmic); `None` if the function is regular there.
    fn barrier_order(&self, at: f64) -> Option<f64> {
        match *self {
            PieceFn::LogRatio if at.abs() == 1.0 => Some(0.0),
            PieceFn::RationalBarrier if at.abs() == 1.0 => Some(1.0),
            PieceFn::SingularPower { rbar, kappa, .. } if at.abs() == rbar => Some(kappa),
            _ => None,
        }
    }
}

/// One smooth span of the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub f: PieceFn,
}

/// A multivalued point: the declared closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub at: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Slope floor data of (the analogue of) a dissipation graph: difference
/// quotients outside the flat window `[s_minus, s_plus]` are `>= 2*sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFloor {
    pub sigma: f64,
    pub s_minus: f64,
    pub s_plus: f64,
}

impl SlopeFloor {
    pub fn origin(sigma: f64) -> Self {
        Self {
            sigma,
            s_minus: 0.0,
            s_plus: 0.0,
        }
    }
}

/// Optional two-sided power growth bounds:
/// `sigma*|r| + kappa_inf*|r|^p_inf <= |g(r)| <= sigma_prime*|r| + ell_inf*|r|^q_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBounds {
    pub sigma_prime: f64,
    pub kappa_inf: f64,
    pub ell_inf: f64,
    pub p_inf: f64,
    pub q_inf: f64,
}

/// A maximal monotone graph on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneGraph {
    domain: Domain,
    pieces: Vec<Piece>,
    jumps: Vec<Jump>,
    slope: SlopeFloor,
    growth: Option<GrowthBounds>,
    /// Largest Yosida parameter for which the slope certificate window
    /// construction is guaranteed; capped at [`NU_BAR_CAP`].
    nu_bar: f64,
}

/// Which half line an indicator graph constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfLine {
    /// `I_{[0, +inf)}`: values forced nonnegative.
    NonNegative,
    /// `I_{(-inf, 0]}`: values forced nonpositive.
    NonPositive,
}

/// Report of a sampled Yosida slope certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeCertificate {
    pub min_slope: f64,
    pub pass: bool,
    /// Whether the requested `nu` respects the graph's `nu_bar` threshold.
    pub nu_ok: bool,
    /// Whether the window avoids the doubled flat window `[2 s_-, 2 s_+]`.
    pub window_ok: bool,
    pub sigma: f64,
    pub samples: usize,
}

impl MonotoneGraph {
    /// Assemble and validate a graph from its raw parts.
    pub fn from_parts(
        domain: Domain,
        pieces: Vec<Piece>,
        jumps: Vec<Jump>,
        slope: SlopeFloor,
        growth: Option<GrowthBounds>,
    ) -> Result<Self> {
        let mut g = Self {
            domain,
            pieces,
            jumps,
            slope,
            growth,
            nu_bar: NU_BAR_CAP,
        };
        g.jumps
            .sort_by(|a, b| a.at.partial_cmp(&b.at).expect("finite jump points"));
        g.validate()?;
        g.nu_bar = g.compute_nu_bar();
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.lo < d.hi) {
            return Err(Error::Construction(String::from("empty domain")));
        }
        if !d.contains(0.0) {
            return Err(Error::Construction(String::from("0 must lie in the domain")));
        }
        if self.pieces.is_empty() {
            return Err(Error::Construction(String::from("no pieces declared")));
        }
        // contiguous coverage of the interior
        if self.pieces[0].lo != d.lo || self.pieces[self.pieces.len() - 1].hi != d.hi {
            return Err(Error::Construction(String::from(
                "pieces must cover the domain",
            )));
        }
        for w in self.pieces.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(Error::Construction(String::from(
                    "pieces must be contiguous",
                )));
            }
        }
        for p in &self.pieces {
            if !(p.lo < p.hi) {
                return Err(Error::Construction(String::from("degenerate piece")));
            }
            // sampled monotonicity of the piece itself
            let (a, b) = clip_span(p.lo, p.hi, 16.0);
            let n = 64;
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=n {
                let r = a + (b - a) * k as f64 / n as f64;
                let v = p.f.eval(r);
                if v.is_nan() {
                    return Err(Error::Construction(format!("piece not defined at {r}")));
                }
                if v < prev - 1e-12 * (1.0 + prev.abs()) {
                    return Err(Error::Construction(format!("piece decreasing near {r}")));
                }
                prev = v;
            }
        }
        for j in &self.jumps {
            if !d.contains_closure(j.at) {
                return Err(Error::Construction(format!("jump at {} outside domain", j.at)));
            }
            if !(j.lo <= j.hi) {
                return Err(Error::Construction(format!("empty jump interval at {}", j.at)));
            }
            // nesting: declared interval sits between the adjacent piece limits
            let (left, right) = self.piece_limits(j.at);
            if let Some(l) = left {
                if j.lo < l - 1e-9 * (1.0 + l.abs()) {
                    return Err(Error::Construction(format!(
                        "jump at {} dips below the left piece limit",
                        j.at
                    )));
                }
            }
            if let Some(r) = right {
                if j.hi > r + 1e-9 * (1.0 + r.abs()) {
                    return Err(Error::Construction(format!(
                        "jump at {} exceeds the right piece limit",
                        j.at
                    )));
                }
            }
        }
        // overall monotonicity across junctions without declared jumps
        for w in self.pieces.windows(2) {
            let x = w[0].hi;
            if self.jump_at(x).is_none() {
                let lv = w[0].f.eval(x);
                let rv = w[1].f.eval(x);
                if (lv - rv).abs() > 1e-9 * (1.0 + lv.abs().max(rv.abs())) {
                    return Err(Error::Construction(format!(
                        "pieces disagree at {x} without a declared jump"
                    )));
                }
            }
        }
        // normalization 0 in g(0)
        let v0 = self.eval_completion(0.0);
        if v0.dist(0.0) > 1e-12 {
            return Err(Error::Construction(String::from("graph must contain (0, 0)")));
        }
        if self.slope.sigma < 0.0 || self.slope.s_minus > 0.0 || self.slope.s_plus < 0.0 {
            return Err(Error::Construction(String::from(
                "slope floor requires sigma >= 0 and s_minus <= 0 <= s_plus",
            )));
        }
        self.check_slope_floor()?;
        Ok(())
    }

    /// Sampled check of the declared floor: quotients outside the flat
    /// window must reach `2*sigma` (up to certificate slack).
    fn check_slope_floor(&self) -> Result<()> {
        if self.slope.sigma == 0.0 {
            return Ok(());
        }
        let need = 2.0 * self.slope.sigma * (1.0 - CERT_SLACK);
        let reach = 4.0_f64.max(2.0 * self.slope.s_plus.abs()).max(2.0 * self.slope.s_minus.abs());
        let (a, b) = clip_span(self.domain.lo, self.domain.hi, reach);
        let n = 256;
        let h = (b - a) / n as f64;
        for k in 0..n {
            let r0 = a + h * k as f64;
            let r1 = r0 + h;
            // only quotients fully outside the window are constrained
            if r1 <= self.slope.s_minus || r0 >= self.slope.s_plus {
                let q = (self.upper_value(r1) - self.lower_value(r0)) / h;
                if q < need - CERT_ABS_FLOOR {
                    return Err(Error::Construction(format!(
                        "declared sigma = {} not met near r = {r0} (quotient {q})",
                        self.slope.sigma
                    )));
                }
            }
        }
        Ok(())
    }

    fn compute_nu_bar(&self) -> f64 {
        let mut bar: f64 = NU_BAR_CAP;
        for (w, upper) in [(self.slope.s_minus, false), (self.slope.s_plus, true)] {
            if w == 0.0 || !self.domain.contains_closure(w) {
                continue;
            }
            let v = self.eval_completion(w);
            let edge = if upper { v.hi } else { v.lo };
            // (Id + nu g)(w) must stay within [2 s_-, 2 s_+]
            if edge.is_finite() && edge != 0.0 {
                let ratio = w / edge;
                if ratio > 0.0 {
                    bar = bar.min(ratio);
                }
            }
        }
        bar
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn slope_floor(&self) -> SlopeFloor {
        self.slope
    }

    pub fn sigma(&self) -> f64 {
        self.slope.sigma
    }

    pub fn growth(&self) -> Option<GrowthBounds> {
        self.growth
    }

    pub fn nu_bar(&self) -> f64 {
        self.nu_bar
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Generalized slope of the graph at `r` (infinite on jumps); used by
    /// precision-aware identity checks.
    pub fn local_slope(&self, r: f64) -> f64 {
        if self.jump_at(r).is_some() {
            return f64::INFINITY;
        }
        for p in &self.pieces {
            if r >= p.lo && r <= p.hi {
                return p.f.deriv(r);
            }
        }
        0.0
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Attach growth bounds (validated at scenario level).
    pub fn with_growth(mut self, growth: GrowthBounds) -> Self {
        self.growth = Some(growth);
        self
    }

    fn jump_at(&self, r: f64) -> Option<&Jump> {
        self.jumps.iter().find(|j| j.at == r)
    }

    /// One-sided piece limits at `r` (None when no piece on that side).
    fn piece_limits(&self, r: f64) -> (Option<f64>, Option<f64>) {
        let mut left = None;
        let mut right = None;
        for p in &self.pieces {
            if p.hi == r {
                left = Some(p.f.eval(r));
            }
            if p.lo == r {
                right = Some(p.f.eval(r));
            }
            if p.lo < r && r < p.hi {
                let v = p.f.eval(r);
                return (Some(v), Some(v));
            }
        }
        (left, right)
    }

    /// Multifunction value at `r`: declared jumps verbatim, otherwise the
    /// singleton piece value.
    pub fn eval(&self, r: f64) -> Result<GraphValue> {
        if !self.domain.contains_closure(r) {
            return Err(Error::Domain {
                value: r,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        if let Some(j) = self.jump_at(r) {
            return Ok(GraphValue { lo: j.lo, hi: j.hi });
        }
        let (l, rv) = self.piece_limits(r);
        match (l, rv) {
            (Some(a), Some(b)) if a == b => Ok(GraphValue::singleton(a)),
            (Some(a), Some(b)) => Ok(GraphValue {
                lo: a.min(b),
                hi: a.max(b),
            }),
            (Some(a), None) => Ok(GraphValue::singleton(a)),
            (None, Some(b)) => Ok(GraphValue::singleton(b)),
            (None, None) => Err(Error::Domain {
                value: r,
                lo: self.domain.lo,
                hi: self.domain.hi,
            }),
        }
    }

    /// Maximal completion of the value at `r`: the declared jump widened to
    /// the adjacent piece limits. This is what the resolvent inverts, so the
    /// resolvent is total even when a declared jump undershoots the limits.
    fn eval_completion(&self, r: f64) -> GraphValue {
        let (l, rv) = self.piece_limits(r);
        let (mut lo, mut hi) = match (l, rv) {
            (Some(a), Some(b)) => (a.min(b), a.max(b)),
            (Some(a), None) => (a, a),
            (None, Some(b)) => (b, b),
            (None, None) => (f64::INFINITY, f64::NEG_INFINITY),
        };
        if let Some(j) = self.jump_at(r) {
            lo = lo.min(j.lo);
            hi = hi.max(j.hi);
        }
        GraphValue { lo, hi }
    }

    fn lower_value(&self, r: f64) -> f64 {
        self.eval_completion(r).lo
    }

    fn upper_value(&self, r: f64) -> f64 {
        self.eval_completion(r).hi
    }

    /// Minimal section: the element of least absolute value at `r`.
    pub fn minimal_section(&self, r: f64) -> Result<f64> {
        if !self.domain.contains(r) {
            return Err(Error::Domain {
                value: r,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        Ok(self.eval(r)?.min_abs())
    }

    /// Resolvent `(Id + nu g)^{-1}(s)`: the unique `r` with
    /// `s in r + nu*g(r)`. Always lands in the closure of the domain.
    pub fn resolvent(&self, nu: f64, s: f64) -> Result<f64> {
        debug_assert!(nu > 0.0);
        // fast path for a single affine piece on the whole line
        if self.jumps.is_empty() && self.pieces.len() == 1 && !self.domain.is_bounded() {
            if let PieceFn::Affine { a, b } = self.pieces[0].f {
                return Ok((s - nu * b) / (1.0 + nu * a));
            }
        }
        // jump points absorb a whole range of s
        for j in &self.jumps {
            let v = self.eval_completion(j.at);
            let lo = j.at + nu * v.lo;
            let hi = j.at + nu * v.hi;
            if s >= lo && s <= hi {
                return Ok(j.at);
            }
        }
        // saturation at finite closed endpoints without declared rays
        // (resolvent of the maximal completion: projection behavior)
        if self.domain.lo.is_finite() {
            let base = self.lower_value(self.domain.lo);
            if base.is_finite() && s < self.domain.lo + nu * base {
                return Ok(self.domain.lo);
            }
        }
        if self.domain.hi.is_finite() {
            let top = self.upper_value(self.domain.hi);
            if top.is_finite() && s > self.domain.hi + nu * top {
                return Ok(self.domain.hi);
            }
        }
        // the root lies strictly inside one piece
        for p in &self.pieces {
            let f_lo = p.lo + nu * p.f.eval(p.lo);
            let f_hi = p.hi + nu * p.f.eval(p.hi);
            let f_lo = if f_lo.is_nan() { f64::NEG_INFINITY } else { f_lo };
            let f_hi = if f_hi.is_nan() { f64::INFINITY } else { f_hi };
            if s >= f_lo && s <= f_hi {
                return self.root_in_piece(p, nu, s);
            }
        }
        Err(Error::Convergence {
            iterations: 0,
            gap: f64::INFINITY,
        })
    }

    /// Safeguarded bisection/Newton for `r + nu f(r) = s` inside a piece.
    /// The bracket endpoints may carry infinite residuals (open barrier
    /// ends); only their signs matter, and iterates stay strictly interior.
    fn root_in_piece(&self, p: &Piece, nu: f64, s: f64) -> Result<f64> {
        let res = |r: f64| r + nu * p.f.eval(r) - s;
        let mut lo;
        if p.lo.is_finite() {
            lo = p.lo;
        } else {
            lo = s.min(0.0) - 1.0;
            let mut guard = 0;
            while res(lo) > 0.0 {
                lo = 2.0 * lo - 1.0;
                guard += 1;
                if guard > 80 {
                    return Err(Error::Convergence {
                        iterations: guard,
                        gap: res(lo).abs(),
                    });
                }
            }
        }
        let mut hi;
        if p.hi.is_finite() {
            hi = p.hi;
        } else {
            hi = s.max(0.0) + 1.0;
            let mut guard = 0;
            while res(hi) < 0.0 {
                hi = 2.0 * hi + 1.0;
                guard += 1;
                if guard > 80 {
                    return Err(Error::Convergence {
                        iterations: guard,
                        gap: res(hi).abs(),
                    });
                }
            }
        }
        let mut r = 0.5 * (lo + hi);
        let mut fr = res(r);
        if fr.is_nan() {
            return Err(Error::Convergence {
                iterations: 0,
                gap: f64::NAN,
            });
        }
        for _ in 0..MAX_ROOT_ITER {
            let scale = 1.0_f64.max(s.abs()).max(r.abs());
            let scale_r = lo.abs().max(hi.abs()).max(1e-12);
            if fr.abs() <= 1e-15 * scale || (hi - lo) <= f64::EPSILON * scale_r {
                return Ok(r);
            }
            if fr > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let width = hi - lo;
            // Newton step where the piece is differentiable, kept in bracket
            let slope = 1.0 + nu * p.f.deriv(r);
            let mut next = if slope.is_finite() && slope > 0.0 {
                r - fr / slope
            } else {
                f64::NAN
            };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let mut f_next = res(next);
            if f_next.is_nan() {
                next = 0.5 * (lo + hi);
                f_next = res(next);
            }
            if f_next > 0.0 {
                hi = next;
            } else {
                lo = next;
            }
            r = next;
            fr = f_next;
            // a stalled Newton crawl (steep barrier branches) must not defeat
            // the bracket: force a bisection whenever halving failed
            if hi - lo > 0.5 * width {
                let mid = 0.5 * (lo + hi);
                let fm = res(mid);
                if fm.is_finite() {
                    if fm > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if fm.abs() < fr.abs() {
                        r = mid;
                        fr = fm;
                    }
                }
            }
        }
        Err(Error::Convergence {
            iterations: MAX_ROOT_ITER,
            gap: fr.abs(),
        })
    }

    /// Yosida approximation `g_nu(s) = (s - resolvent(s)) / nu`.
    ///
    /// On smooth stretches this equals the piece value at the resolvent,
    /// which is what gets returned: the difference quotient form loses
    /// `log10(1/nu)` digits to cancellation for small `nu`. On jumps and
    /// saturated endpoints the quotient is exact and is used directly.
    pub fn yosida(&self, nu: f64, s: f64) -> Result<f64> {
        let r = self.resolvent(nu, s)?;
        for j in &self.jumps {
            if r == j.at {
                return Ok((s - r) / nu);
            }
        }
        if r == self.domain.lo || r == self.domain.hi {
            return Ok((s - r) / nu);
        }
        for p in &self.pieces {
            if r >= p.lo && r <= p.hi {
                // crossover: below slope 1/nu the piece value carries the
                // smaller rounding error, above it the quotient does
                let slope = p.f.deriv(r);
                if slope.is_finite() && slope <= 1.0 / nu {
                    let v = p.f.eval(r);
                    if v.is_finite() {
                        return Ok(v);
                    }
                }
            }
        }
        Ok((s - r) / nu)
    }

    /// Generalized derivative of the Yosida approximation at `s`:
    /// `g'(r) / (1 + nu g'(r))` on smooth stretches, `1/nu` where the
    /// resolvent sits on a jump or a saturated endpoint.
    pub fn yosida_deriv(&self, nu: f64, s: f64) -> Result<f64> {
        let r = self.resolvent(nu, s)?;
        // on a jump-absorbed range (or saturated endpoint) the resolvent is
        // locally constant
        for j in &self.jumps {
            if r == j.at {
                return Ok(1.0 / nu);
            }
        }
        if r == self.domain.lo || r == self.domain.hi {
            return Ok(1.0 / nu);
        }
        for p in &self.pieces {
            if r >= p.lo && r <= p.hi {
                let d = p.f.deriv(r);
                if !d.is_finite() {
                    return Ok(1.0 / nu);
                }
                return Ok(d / (1.0 + nu * d));
            }
        }
        Ok(1.0 / nu)
    }

    /// Sampled slope certificate: difference quotients of the Yosida
    /// approximation over `window`, compared against `sigma`.
    pub fn yosida_slope_certificate(
        &self,
        nu: f64,
        window: (f64, f64),
        n_samples: usize,
    ) -> SlopeCertificate {
        let sigma = self.slope.sigma;
        let (a, b) = window;
        let doubled = (2.0 * self.slope.s_minus, 2.0 * self.slope.s_plus);
        let window_ok = b <= doubled.0 || a >= doubled.1;
        let n = n_samples.max(2);
        let h = (b - a) / (n - 1) as f64;
        let mut min_slope = f64::INFINITY;
        let mut prev = match self.yosida(nu, a) {
            Ok(v) => v,
            Err(_) => f64::NAN,
        };
        for k in 1..n {
            let s = a + h * k as f64;
            let y = match self.yosida(nu, s) {
                Ok(v) => v,
                Err(_) => f64::NAN,
            };
            let q = (y - prev) / h;
            if q.is_nan() {
                min_slope = f64::NAN;
                break;
            }
            min_slope = min_slope.min(q);
            prev = y;
        }
        let pass = window_ok
            && min_slope.is_finite()
            && min_slope >= sigma * (1.0 - CERT_SLACK) - CERT_ABS_FLOOR;
        SlopeCertificate {
            min_slope,
            pass,
            nu_ok: nu <= self.nu_bar,
            window_ok,
            sigma,
            samples: n,
        }
    }

    /// Convex primitive `g_hat(r) = int_0^r g^0(t) dt`, `g_hat(0) = 0`;
    /// explicit `+inf` outside the effective domain of the primitive.
    pub fn primitive(&self, r: f64) -> Result<f64> {
        self.primitive_tol(r, 1e-12)
    }

    /// `primitive` with an explicit quadrature tolerance.
    pub fn primitive_tol(&self, r: f64, tol: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        if !self.domain.contains_closure(r) {
            return Ok(f64::INFINITY);
        }
        // non-integrable blow-up at a barrier endpoint
        if r == self.domain.lo || r == self.domain.hi {
            for p in &self.pieces {
                if (p.lo == r || p.hi == r) && matches!(p.f.barrier_order(r), Some(k) if k >= 1.0) {
                    return Ok(f64::INFINITY);
                }
            }
        }
        let (a, b) = if r > 0.0 { (0.0, r) } else { (r, 0.0) };
        let mut total = 0.0;
        for p in &self.pieces {
            let lo = p.lo.max(a);
            let hi = p.hi.min(b);
            if lo < hi {
                total += quad::integrate(|t| p.f.eval(t), lo, hi, tol)?;
            }
        }
        // a closed endpoint inside the integration range contributes via its
        // minimal section only on a null set; jumps need no extra handling
        if r < 0.0 {
            total = -total;
        }
        Ok(total)
    }

    /// Moreau primitive of the Yosida approximation:
    /// `g_hat_eps(r) = g_hat(j_eps(r)) + (r - j_eps(r))^2 / (2 eps)`,
    /// evaluated as `g_hat(j) + eps * g_eps(r)^2 / 2` to dodge the
    /// cancellation in `r - j`.
    pub fn moreau_primitive(&self, eps: f64, r: f64) -> Result<f64> {
        let j = self.resolvent(eps, r)?;
        let base = self.primitive(j)?;
        let y = self.yosida(eps, r)?;
        Ok(base + 0.5 * eps * y * y)
    }

    // ---- built-in catalog -------------------------------------------------

    /// `g(r) = r`.
    pub fn identity() -> Self {
        Self::linear(1.0)
    }

    /// `g(r) = a r`, `a > 0`.
    pub fn linear(a: f64) -> Self {
        Self::from_parts(
            Domain::all(),
            vec![Piece {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                f: PieceFn::Affine { a, b: 0.0 },
            }],
            vec![],
            SlopeFloor::origin(0.5 * a),
            None,
        )
        .expect("builtin")
    }

    /// `g(r) = r^k` for odd `k >= 3` (slope floor degenerates to 0).
    pub fn power(k: u32) -> Self {
        assert!(k % 2 == 1, "power graphs require odd exponents");
        if k == 1 {
            return Self::identity();
        }
        Self::from_parts(
            Domain::all(),
            vec![Piece {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                f: PieceFn::OddPower { c: 1.0, k },
            }],
            vec![],
            SlopeFloor::origin(0.0),
            None,
        )
        .expect("builtin")
    }

    /// `g(r) = a r + c sign(r) |r|^p`; carries `(p, p)` growth bounds.
    pub fn linear_plus_power(a: f64, c: f64, p: f64) -> Self {
        Self::from_parts(
            Domain::all(),
            vec![Piece {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                f: PieceFn::LinearPlusPower { a, c, p },
            }],
            vec![],
            SlopeFloor::origin(0.5 * a),
            Some(GrowthBounds {
                sigma_prime: a,
                kappa_inf: c,
                ell_inf: c,
                p_inf: p,
                q_inf: p,
            }),
        )
        .expect("builtin")
    }

    /// Subdifferential of the half-line indicator.
    pub fn indicator_halfline(side: HalfLine) -> Self {
        match side {
            HalfLine::NonNegative => Self::from_parts(
                Domain {
                    lo: 0.0,
                    hi: f64::INFINITY,
                    lo_closed: true,
                    hi_closed: false,
                },
                vec![Piece {
                    lo: 0.0,
                    hi: f64::INFINITY,
                    f: PieceFn::Constant(0.0),
                }],
                vec![Jump {
                    at: 0.0,
                    lo: f64::NEG_INFINITY,
                    hi: 0.0,
                }],
                SlopeFloor::origin(0.0),
                None,
            )
            .expect("builtin"),
            HalfLine::NonPositive => Self::from_parts(
                Domain {
                    lo: f64::NEG_INFINITY,
                    hi: 0.0,
                    lo_closed: false,
                    hi_closed: true,
                },
                vec![Piece {
                    lo: f64::NEG_INFINITY,
                    hi: 0.0,
                    f: PieceFn::Constant(0.0),
                }],
                vec![Jump {
                    at: 0.0,
                    lo: 0.0,
                    hi: f64::INFINITY,
                }],
                SlopeFloor::origin(0.0),
                None,
            )
            .expect("builtin"),
        }
    }

    /// Subdifferential of `r^2 + I_{[0,+inf)}`: the dissipation graph of an
    /// irreversible evolution (`u_t >= 0` in the vanishing-Yosida limit).
    pub fn irreversible_quadratic() -> Self {
        Self::from_parts(
            Domain {
                lo: 0.0,
                hi: f64::INFINITY,
                lo_closed: true,
                hi_closed: false,
            },
            vec![Piece {
                lo: 0.0,
                hi: f64::INFINITY,
                f: PieceFn::Affine { a: 2.0, b: 0.0 },
            }],
            vec![Jump {
                at: 0.0,
                lo: f64::NEG_INFINITY,
                hi: 0.0,
            }],
            SlopeFloor::origin(1.0),
            None,
        )
        .expect("builtin")
    }

    /// Subdifferential of `r^2/2 + I_{(-inf,0]}`: obstacle graph with a
    /// quadratic well on the admissible side.
    pub fn half_line_obstacle() -> Self {
        Self::from_parts(
            Domain {
                lo: f64::NEG_INFINITY,
                hi: 0.0,
                lo_closed: false,
                hi_closed: true,
            },
            vec![Piece {
                lo: f64::NEG_INFINITY,
                hi: 0.0,
                f: PieceFn::Affine { a: 1.0, b: 0.0 },
            }],
            vec![Jump {
                at: 0.0,
                lo: 0.0,
                hi: f64::INFINITY,
            }],
            SlopeFloor::origin(0.5),
            None,
        )
        .expect("builtin")
    }

    /// Barrier graph `c sign(r) ((1 - |r|/rbar)^{-kappa} - 1)` on `(-rbar, rbar)`.
    pub fn singular_power(rbar: f64, kappa: f64, c: f64) -> Self {
        Self::from_parts(
            Domain::open(-rbar, rbar),
            vec![Piece {
                lo: -rbar,
                hi: rbar,
                f: PieceFn::SingularPower { rbar, kappa, c },
            }],
            vec![],
            SlopeFloor::origin(0.5 * c * kappa / rbar),
            None,
        )
        .expect("builtin")
    }

    /// `ln((1+r)/(1-r))` on `(-1, 1)` (the logarithmic potential's graph).
    pub fn log_barrier() -> Self {
        Self::from_parts(
            Domain::open(-1.0, 1.0),
            vec![Piece {
                lo: -1.0,
                hi: 1.0,
                f: PieceFn::LogRatio,
            }],
            vec![],
            SlopeFloor::origin(1.0),
            None,
        )
        .expect("builtin")
    }

    /// `r / (1 - r^2)` on `(-1, 1)`.
    pub fn rational_barrier() -> Self {
        Self::from_parts(
            Domain::open(-1.0, 1.0),
            vec![Piece {
                lo: -1.0,
                hi: 1.0,
                f: PieceFn::RationalBarrier,
            }],
            vec![],
            SlopeFloor::origin(0.5),
            None,
        )
        .expect("builtin")
    }

    /// Flat on `[s_minus, s_plus]`, slope `a` outside (continuous).
    pub fn flat_window(s_minus: f64, s_plus: f64, a: f64) -> Self {
        Self::from_parts(
            Domain::all(),
            vec![
                Piece {
                    lo: f64::NEG_INFINITY,
                    hi: s_minus,
                    f: PieceFn::Affine {
                        a,
                        b: -a * s_minus,
                    },
                },
                Piece {
                    lo: s_minus,
                    hi: s_plus,
                    f: PieceFn::Constant(0.0),
                },
                Piece {
                    lo: s_plus,
                    hi: f64::INFINITY,
                    f: PieceFn::Affine { a, b: -a * s_plus },
                },
            ],
            vec![],
            SlopeFloor {
                sigma: 0.5 * a,
                s_minus,
                s_plus,
            },
            None,
        )
        .expect("builtin")
    }
}

/// Pointwise constant for the sampled coercivity certificate of a
/// dissipation graph: `g^0(r) r >= sigma r^2 - c0` with
/// `c0 = sigma * (2 max(s_plus, -s_minus))^2` (zero for a flat window at 0).
pub fn coercivity_offset(slope: &SlopeFloor) -> f64 {
    let w = slope.s_plus.max(-slope.s_minus);
    slope.sigma * (2.0 * w) * (2.0 * w)
}

fn clip_span(lo: f64, hi: f64, reach: f64) -> (f64, f64) {
    let a = if lo.is_finite() { lo } else { -reach };
    let b = if hi.is_finite() { hi } else { reach };
    // stay strictly inside open barrier endpoints
    let pad = 1e-9 * (b - a).min(1.0);
    (a + pad, b - pad)
}
