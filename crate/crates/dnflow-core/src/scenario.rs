//! Validated problem bundles: grid + operator + potential + rate graph +
//! forcing + scheme + initial datum, with machine-checked structural
//! hypotheses. Each check carries the tag of the hypothesis family it
//! belongs to (H1..H7, S0, f1, f2, Thm2.8, scheme).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::graph::{coercivity_offset, MonotoneGraph};
use crate::potential::Potential;
use crate::spatial::{Bc, EllipticOperator, Field};
use crate::stepper::{Forcing, SchemeConfig};

/// A fully resolved problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub operator: EllipticOperator,
    pub potential: Potential,
    pub alpha: MonotoneGraph,
    pub forcing: Forcing,
    pub scheme: SchemeConfig,
    pub initial: Field,
    /// Hoelder exponent of the discrete regularity surrogate (a modeling
    /// input; the discretization does not derive it)
    pub holder_nu: Option<f64>,
    /// content hash of the originating configuration, carried into outputs
    pub fingerprint: String,
}

impl Scenario {
    pub fn grid(&self) -> &crate::spatial::Grid {
        &self.operator.grid
    }
}

/// Which optional analyses the run will perform (they add hypotheses).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnalysisToggles {
    pub separation: bool,
    pub lojasiewicz: bool,
    pub algebraic_decay: bool,
    pub dependence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Warn,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    /// hypothesis family: "H1".."H7", "S0", "f1", "f2", "Thm2.8", "scheme"
    pub tag: &'static str,
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckItem {
    fn new(tag: &'static str, name: &'static str, status: CheckStatus, detail: String) -> Self {
        Self {
            tag,
            name,
            status,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub items: Vec<CheckItem>,
}

impl ValidationReport {
    pub fn hard_pass(&self) -> bool {
        self.items.iter().all(|i| i.status != CheckStatus::Fail)
    }

    pub fn failing_tags(&self) -> Vec<&'static str> {
        self.items
            .iter()
            .filter(|i| i.status == CheckStatus::Fail)
            .map(|i| i.tag)
            .collect()
    }

    fn push(&mut self, item: CheckItem) {
        self.items.push(item);
    }
}

/// Validate a scenario against the structural hypotheses it relies on.
/// Fail items block runs; Warn items note soft gaps (e.g. optional
/// analyses that extra hypotheses would unlock).
pub fn validate_scenario(scn: &Scenario, toggles: &AnalysisToggles) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let grid = scn.grid();
    let pot = &scn.potential;
    let alpha = &scn.alpha;

    // H1: potential structure and coercivity
    {
        let coer = pot.validate_coercivity(512, &[1e-1, 1e-2]);
        let status = if coer.pass { CheckStatus::Pass } else { CheckStatus::Fail };
        rep.push(CheckItem::new(
            "H1",
            "potential_coercivity",
            status,
            format!(
                "lambda = {}, eta = {}, slope margin {:?} at radius {}, value shift {:.3e}",
                pot.lambda, pot.eta, coer.slope_margin, coer.radius, coer.value_shift
            ),
        ));
    }

    // H2: rate graph slope floor and the integrated coercivity certificate
    {
        let sf = alpha.slope_floor();
        if sf.sigma <= 0.0 {
            rep.push(CheckItem::new(
                "H2",
                "rate_graph_slope_floor",
                CheckStatus::Fail,
                format!("requires sigma > 0, got {}", sf.sigma),
            ));
        } else {
            let c0 = coercivity_offset(&sf);
            let mut worst = f64::INFINITY;
            let mut ok = true;
            let reach = 8.0_f64.max(4.0 * sf.s_plus.max(-sf.s_minus)).max(1.0);
            let dom = alpha.domain();
            let n = 256;
            for k in 0..=n {
                let r = -reach + 2.0 * reach * k as f64 / n as f64;
                if !dom.contains(r) {
                    continue;
                }
                if let Ok(m) = alpha.minimal_section(r) {
                    let margin = m * r - sf.sigma * r * r + c0;
                    worst = worst.min(margin);
                    if margin < -1e-9 * (1.0 + r * r) {
                        ok = false;
                    }
                }
            }
            rep.push(CheckItem::new(
                "H2",
                "rate_graph_coercivity_certificate",
                if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                format!(
                    "sigma = {}, window [{}, {}], pointwise offset {:.3e}, worst margin {:.3e}",
                    sf.sigma, sf.s_minus, sf.s_plus, c0, worst
                ),
            ));
        }
    }

    // H3: energy density growth (p > 6/5 or the super-quadratic alternative)
    {
        let p = scn.operator.p_exponent();
        let alt = pot.q_growth;
        let ok = p > 6.0 / 5.0 || alt.map(|q| q.q > 2.0).unwrap_or(false);
        rep.push(CheckItem::new(
            "H3",
            "growth_alternative",
            if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            format!(
                "p = {p}, kappa = ({}, {}, {}), q-growth declared: {}",
                scn.operator.growth.kappa1,
                scn.operator.growth.kappa2,
                scn.operator.growth.kappa3,
                alt.is_some()
            ),
        ));
    }

    // H4: initial datum in the effective domain, forcing sampling
    {
        let mut detail = String::new();
        let mut status = CheckStatus::Pass;
        if scn.initial.values.len() != grid.nodes() {
            status = CheckStatus::Fail;
            detail = format!(
                "initial datum has {} nodes, grid has {}",
                scn.initial.values.len(),
                grid.nodes()
            );
        } else {
            if grid.bc == Bc::Dirichlet0 {
                for i in 0..grid.nodes() {
                    if grid.is_boundary(i) && scn.initial.values[i].abs() > 1e-12 {
                        status = CheckStatus::Fail;
                        detail = format!("initial datum violates the Dirichlet trace at node {i}");
                        break;
                    }
                }
            }
            let dom = pot.domain();
            if status == CheckStatus::Pass {
                for (i, &v) in scn.initial.values.iter().enumerate() {
                    let inside = if dom.is_bounded() {
                        v > dom.lo && v < dom.hi
                    } else {
                        dom.contains(v)
                    };
                    if !inside {
                        status = CheckStatus::Fail;
                        detail = format!("initial value {v} at node {i} leaves the potential domain");
                        break;
                    }
                }
            }
            if status == CheckStatus::Pass {
                match scn.operator.apply_b(&scn.initial) {
                    Ok(b) => {
                        if !b.values.iter().all(|v| v.is_finite()) {
                            status = CheckStatus::Fail;
                            detail = String::from("B u0 is not finite");
                        } else {
                            detail = format!("|B u0| = {:.3e}", grid.h_norm(&b.values));
                        }
                    }
                    Err(e) => {
                        status = CheckStatus::Fail;
                        detail = format!("B u0 failed: {e}");
                    }
                }
            }
        }
        rep.push(CheckItem::new("H4", "initial_datum", status, detail));

        // tabulated forcing must cover every time node exactly
        if let (Ok(n), Forcing::Tabulated { .. }) = (scn.scheme.n_steps(), &scn.forcing) {
            let mut missing = None;
            for i in 1..=n {
                let t = i as f64 * scn.scheme.tau;
                if scn.forcing.at(t, grid.nodes()).is_err() {
                    missing = Some(t);
                    break;
                }
            }
            rep.push(CheckItem::new(
                "H4",
                "forcing_time_nodes",
                if missing.is_none() { CheckStatus::Pass } else { CheckStatus::Fail },
                match missing {
                    None => String::from("tabulated forcing covers every time node"),
                    Some(t) => format!("tabulated forcing misses t = {t} (interpolation refused)"),
                },
            ));
        }
    }

    // S0: flat window degenerated to the origin (regime flag)
    {
        let sf = alpha.slope_floor();
        let s0 = sf.s_minus == 0.0 && sf.s_plus == 0.0;
        let status = if s0 {
            CheckStatus::Pass
        } else if toggles.dependence {
            CheckStatus::Fail
        } else {
            CheckStatus::NotApplicable
        };
        rep.push(CheckItem::new(
            "S0",
            "flat_window_at_origin",
            status,
            if s0 {
                String::from("s_minus = s_plus = 0: dissipation floor has no offset")
            } else {
                format!(
                    "window [{}, {}]: offset c1 = {:.3e} admitted, uniqueness analysis unavailable",
                    sf.s_minus,
                    sf.s_plus,
                    coercivity_offset(&sf) * grid.measure()
                )
            },
        ));
    }

    // f1/f2: forcing regime and tail decay
    {
        let (tag, name, status, detail): (&'static str, &'static str, _, String) = match &scn.forcing {
            Forcing::Zero => (
                "f2",
                "forcing_regime",
                CheckStatus::Pass,
                String::from("zero forcing (both regimes hold)"),
            ),
            Forcing::Constant(_) => (
                "f2",
                "forcing_regime",
                CheckStatus::Pass,
                String::from("time-independent forcing"),
            ),
            Forcing::Decaying { rate, .. } => {
                // exponential tails satisfy any polynomial-weight bound
                let ok = *rate > 0.0;
                (
                    "f1",
                    "forcing_tail_decay",
                    if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                    format!("exponential decay rate {rate}: weighted tail integral bounded"),
                )
            }
            Forcing::Tabulated { times, values } => {
                // the weighted tail integral t^{1+xi} int_t^inf |f|^2 stays
                // bounded for some xi > 0 iff |f(t)| decays faster than 1/t;
                // fit the algebraic decay exponent over the upper half
                let nodes = grid.nodes();
                let horizon = times.last().copied().unwrap_or(0.0);
                let cut = 0.5 * horizon;
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                let mut tail_max = 0.0_f64;
                for (k, &t) in times.iter().enumerate() {
                    if t >= cut && t > 0.0 {
                        let norm = grid.h_norm(&values[k][..nodes.min(values[k].len())]);
                        tail_max = tail_max.max(norm);
                        if norm > 1e-300 {
                            xs.push(crate::math::ln(t));
                            ys.push(crate::math::ln(norm));
                        }
                    }
                }
                if tail_max <= 1e-14 {
                    (
                        "f1",
                        "forcing_tail_decay",
                        CheckStatus::Pass,
                        String::from("forcing vanishes on the tail"),
                    )
                } else if horizon < 2.0 || xs.len() < 4 {
                    (
                        "f1",
                        "forcing_tail_decay",
                        CheckStatus::Warn,
                        format!("horizon {horizon} too short to witness the tail condition"),
                    )
                } else {
                    let n = xs.len() as f64;
                    let mx = xs.iter().sum::<f64>() / n;
                    let my = ys.iter().sum::<f64>() / n;
                    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
                    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
                    let p = -sxy / sxx.max(1e-300);
                    (
                        "f1",
                        "forcing_tail_decay",
                        if p > 1.001 { CheckStatus::Pass } else { CheckStatus::Fail },
                        format!("fitted tail decay exponent {p:.3} (needs > 1)"),
                    )
                }
            }
        };
        rep.push(CheckItem::new(tag, name, status, detail));
    }

    // H5: separation compatibility (only when the monitor is requested)
    if toggles.separation {
        match (&scn.holder_nu, pot.has_singularity()) {
            (None, _) => rep.push(CheckItem::new(
                "H5",
                "separation_compatibility",
                CheckStatus::Fail,
                String::from("separation monitor requires a Hoelder exponent"),
            )),
            (Some(_), false) => rep.push(CheckItem::new(
                "H5",
                "separation_compatibility",
                CheckStatus::Fail,
                String::from(
                    "potential declares no power singularity at its barriers \
                     (logarithmic-type blow-up is too weak)",
                ),
            )),
            (Some(nu), true) => {
                let compatible = pot
                    .validate_separation_compatibility(*nu, grid.dim)
                    .unwrap_or(false);
                let sampled = pot.validate_singularity(64).unwrap_or(false);
                let ok = compatible && sampled;
                rep.push(CheckItem::new(
                    "H5",
                    "separation_compatibility",
                    if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                    format!(
                        "2 kappa nu >= d: {compatible}; sampled barrier growth: {sampled}"
                    ),
                ));
            }
        }
    }

    // H6: linear symmetric operator (dependence / gradient-inequality)
    if toggles.dependence || toggles.lojasiewicz {
        let ok = scn.operator.is_linear();
        let loj_ok = !toggles.lojasiewicz || scn.operator.is_identity_laplacian();
        rep.push(CheckItem::new(
            "H6",
            "linear_symmetric_operator",
            if ok && loj_ok { CheckStatus::Pass } else { CheckStatus::Fail },
            if ok && loj_ok {
                String::from("linear divergence-form operator")
            } else if !ok {
                String::from("requested analysis requires the linear operator kind")
            } else {
                String::from("gradient-inequality probe requires the identity coefficient")
            },
        ));
        if toggles.dependence && !scn.potential.beta.jumps().is_empty() {
            rep.push(CheckItem::new(
                "H6",
                "potential_locally_lipschitz",
                CheckStatus::Fail,
                String::from("vertical segments in the potential graph break local Lipschitz continuity"),
            ));
        }
    }

    // H7: sign/analyticity window
    if toggles.lojasiewicz || toggles.algebraic_decay {
        match pot.analytic_window {
            None => rep.push(CheckItem::new(
                "H7",
                "sign_window",
                CheckStatus::Fail,
                String::from("no analyticity/sign window declared"),
            )),
            Some(w) => {
                let sampled = pot.validate_sign_window(128).unwrap_or(false);
                // constant forcing must fit under the margin
                let f_ok = match &scn.forcing {
                    Forcing::Constant(profile) => {
                        profile.iter().all(|v| v.abs() <= w.margin + 1e-12)
                    }
                    _ => true,
                };
                rep.push(CheckItem::new(
                    "H7",
                    "sign_window",
                    if sampled && f_ok { CheckStatus::Pass } else { CheckStatus::Fail },
                    format!(
                        "window ({}, {}), margin {}: sampled sign condition {sampled}, forcing bounded by margin {f_ok}",
                        w.iota_lo, w.iota_hi, w.margin
                    ),
                ));
            }
        }
    }

    // Thm2.8 extras: two-sided growth of the rate graph, exponent ordering,
    // and the chi constraint
    if toggles.algebraic_decay {
        match alpha.growth() {
            None => rep.push(CheckItem::new(
                "Thm2.8",
                "rate_graph_growth",
                CheckStatus::Fail,
                String::from("no two-sided power growth declared for the rate graph"),
            )),
            Some(g) => {
                let mut status = CheckStatus::Pass;
                let mut notes: Vec<String> = Vec::new();
                if !(1.0 <= g.p_inf && g.p_inf <= g.q_inf) {
                    status = CheckStatus::Fail;
                    notes.push(format!(
                        "requires 1 <= p_inf <= q_inf, got ({}, {})",
                        g.p_inf, g.q_inf
                    ));
                }
                let chi_ok = match grid.dim {
                    1 => g.q_inf <= g.p_inf + 1.0,
                    _ => g.q_inf < g.p_inf + 1.0,
                };
                if !chi_ok {
                    status = CheckStatus::Fail;
                    notes.push(format!(
                        "no admissible chi with chi q_inf <= p_inf + 1 in dimension {}",
                        grid.dim
                    ));
                }
                if alpha.domain().lo.is_finite() || alpha.domain().hi.is_finite() {
                    status = CheckStatus::Fail;
                    notes.push(String::from("rate graph domain must be the whole line"));
                }
                let sf = alpha.slope_floor();
                let mut worst = f64::INFINITY;
                for k in 1..=64 {
                    let r = -8.0 + 16.0 * k as f64 / 64.0;
                    if r == 0.0 {
                        continue;
                    }
                    if let Ok(m) = alpha.minimal_section(r) {
                        let lower = sf.sigma * r.abs() + g.kappa_inf * crate::math::powf(r.abs(), g.p_inf);
                        let upper = g.sigma_prime * r.abs() + g.ell_inf * crate::math::powf(r.abs(), g.q_inf);
                        worst = worst.min(m.abs() - lower).min(upper - m.abs());
                    }
                }
                if worst < -1e-9 {
                    status = CheckStatus::Fail;
                    notes.push(format!("sampled two-sided growth bound violated by {worst:.3e}"));
                }
                rep.push(CheckItem::new(
                    "Thm2.8",
                    "rate_graph_growth",
                    status,
                    if notes.is_empty() {
                        format!(
                            "(sigma', kappa, ell, p, q) = ({}, {}, {}, {}, {})",
                            g.sigma_prime, g.kappa_inf, g.ell_inf, g.p_inf, g.q_inf
                        )
                    } else {
                        notes.join("; ")
                    },
                ));
            }
        }
        // omega-limit strong form needs alpha(0) = {0}
        let alpha0 = alpha.eval(0.0).ok();
        let singleton = alpha0.map(|v| v.is_singleton()).unwrap_or(false);
        rep.push(CheckItem::new(
            "Thm2.8",
            "rate_graph_single_valued_at_zero",
            if singleton { CheckStatus::Pass } else { CheckStatus::Warn },
            if singleton {
                String::from("alpha(0) = {0}: strong stationary form applies")
            } else {
                String::from("alpha(0) is an interval: only the weak inclusion variant applies")
            },
        ));
    }

    // scheme: step count, Yosida thresholds
    {
        let mut status = CheckStatus::Pass;
        let mut notes: Vec<String> = Vec::new();
        match scn.scheme.n_steps() {
            Ok(n) => notes.push(format!("N = {n}")),
            Err(e) => {
                status = CheckStatus::Fail;
                notes.push(format!("{e}"));
            }
        }
        if !(scn.scheme.eps > 0.0 && scn.scheme.nu > 0.0) {
            status = CheckStatus::Fail;
            notes.push(String::from("eps and nu must be positive"));
        }
        if scn.scheme.nu > alpha.nu_bar() {
            status = CheckStatus::Fail;
            notes.push(format!(
                "nu = {} exceeds the slope-certificate threshold nu_bar = {}",
                scn.scheme.nu,
                alpha.nu_bar()
            ));
        }
        rep.push(CheckItem::new(
            "scheme",
            "discretization",
            status,
            notes.join("; "),
        ));
    }

    rep
}

/// Map a construction error (from assembling graphs, potentials, or
/// operators out of a configuration) to the hypothesis tag it violates.
pub fn construction_tag(err: &Error) -> &'static str {
    match err {
        Error::Construction(msg) => {
            if msg.contains("lambda") || msg.contains("eta") {
                "H1"
            } else if msg.contains("sigma") {
                "H2"
            } else {
                "H1"
            }
        }
        Error::Precondition(msg) => {
            if msg.contains("ellipticity") || msg.contains("D(x)") {
                "H6"
            } else if msg.contains("p-Laplacian") {
                "H3"
            } else {
                "scheme"
            }
        }
        _ => "scheme",
    }
}
