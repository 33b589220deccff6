//! TOML configuration schema and its resolution into a validated core
//! scenario.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use dnflow_core::graph::{Domain, GrowthBounds, HalfLine, Jump, MonotoneGraph, Piece, PieceFn, SlopeFloor};
use dnflow_core::potential::{AnalyticWindow, Potential, QGrowth};
use dnflow_core::scenario::{AnalysisToggles, Scenario};
use dnflow_core::spatial::{Bc, DCoeff, EllipticOperator, Field, FieldExpr, Grid};
use dnflow_core::stepper::{ContinuationRung, Forcing, SchemeConfig};

use crate::output::read_nodal_csv;
use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridSection,
    pub operator: OperatorSection,
    pub potential: PotentialSection,
    pub alpha: GraphSection,
    #[serde(default)]
    pub forcing: ForcingSection,
    pub scheme: SchemeSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub stationary: StationarySection,
    #[serde(default)]
    pub continuation: ContinuationSection,
    #[serde(default)]
    pub depend: DependSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: Vec<usize>,
    pub length: Vec<f64>,
    pub bc: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub kind: String,
    #[serde(default)]
    pub d: Option<toml::Value>,
    #[serde(default)]
    pub d_file: Option<String>,
    #[serde(default = "default_one")]
    pub a: f64,
    #[serde(default)]
    pub p: Option<f64>,
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: String,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub rbar: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub c_w: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub q_growth: Option<QGrowthSection>,
    #[serde(default)]
    pub analytic_window: Option<WindowSection>,
    #[serde(default)]
    pub beta: Option<GraphSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QGrowthSection {
    pub eta1: f64,
    pub q: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub lo: f64,
    pub hi: f64,
    pub margin: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub kind: String,
    #[serde(default)]
    pub slope: Option<f64>,
    #[serde(default)]
    pub k: Option<u32>,
    #[serde(default)]
    pub side: Option<String>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub rbar: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub s_minus: Option<f64>,
    #[serde(default)]
    pub s_plus: Option<f64>,
    // piecewise declarations
    #[serde(default)]
    pub domain: Option<[f64; 2]>,
    #[serde(default)]
    pub domain_closed: Option<[bool; 2]>,
    #[serde(default)]
    pub segments: Option<Vec<SegmentSection>>,
    #[serde(default)]
    pub jumps: Option<Vec<JumpSection>>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub growth: Option<GrowthSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    pub from: f64,
    pub to: f64,
    #[serde(rename = "fn")]
    pub func: String,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub k: Option<u32>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub rbar: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSection {
    pub at: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSection {
    pub sigma_prime: f64,
    pub kappa_inf: f64,
    pub ell_inf: f64,
    pub p_inf: f64,
    pub q_inf: f64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    #[serde(default = "default_zero_kind")]
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub profile: Option<ExprSection>,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub file: Option<String>,
}

fn default_zero_kind() -> String {
    "zero".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprSection {
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub mode: Option<Vec<u32>>,
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub file: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub tau: f64,
    pub t_end: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_eps")]
    pub nu: f64,
    #[serde(default = "default_tol_newton")]
    pub tol_newton: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
}

fn default_eps() -> f64 {
    1e-8
}
fn default_tol_newton() -> f64 {
    1e-10
}
fn default_max_newton() -> usize {
    50
}

pub type InitialSection = ExprSection;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default)]
    pub separation: bool,
    #[serde(default)]
    pub holder_nu: Option<f64>,
    #[serde(default)]
    pub omega: bool,
    #[serde(default = "default_omega_rate")]
    pub omega_tol_rate: f64,
    #[serde(default = "default_omega_res")]
    pub omega_tol_res: f64,
    #[serde(default)]
    pub lojasiewicz: bool,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: Vec<f64>,
    #[serde(default = "default_decay")]
    pub decay: String,
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default = "default_regime")]
    pub bounds_regime: String,
    #[serde(default = "default_drift_tol")]
    pub drift_tol: f64,
    #[serde(default = "default_true")]
    pub energy_check: bool,
}

fn default_omega_rate() -> f64 {
    1e-8
}
fn default_omega_res() -> f64 {
    1e-4
}
fn default_theta_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.45]
}
fn default_decay() -> String {
    "none".to_string()
}
fn default_regime() -> String {
    "auto".to_string()
}
fn default_drift_tol() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySection {
    #[serde(default = "default_ladder")]
    pub eps_ladder: Vec<f64>,
    #[serde(default = "default_stat_tol")]
    pub tol: f64,
}

impl Default for StationarySection {
    fn default() -> Self {
        Self {
            eps_ladder: default_ladder(),
            tol: default_stat_tol(),
        }
    }
}

fn default_ladder() -> Vec<f64> {
    vec![1e-2, 1e-4, 1e-6, 1e-8]
}
fn default_stat_tol() -> f64 {
    1e-6
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSection {
    #[serde(default)]
    pub halvings: Option<usize>,
    #[serde(default)]
    pub ladder: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DependSection {
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub profile: Option<ExprSection>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
}

fn default_checkpoint() -> usize {
    100
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            t_end: 1.0,
            eps: default_eps(),
            nu: default_eps(),
            tol_newton: default_tol_newton(),
            max_newton: default_max_newton(),
        }
    }
}

/// Everything a command needs: the resolved scenario plus run options.
pub struct Resolved {
    pub scenario: Scenario,
    pub toggles: AnalysisToggles,
    pub diagnostics: DiagnosticsSection,
    pub stationary: StationarySection,
    pub continuation: ContinuationSection,
    pub depend: DependSection,
    pub output_dir: Option<String>,
    pub checkpoint_every: usize,
}

/// Parse the configuration text and resolve it against the filesystem
/// (`base` anchors relative file references).
pub fn parse_config(text: &str, base: &Path) -> Result<Resolved, CliError> {
    let cfg: ConfigFile = toml::from_str(text)
        .map_err(|e| CliError::validation("parse", e.to_string(), vec![]))?;
    resolve(cfg, text, base)
}

fn resolve(cfg: ConfigFile, text: &str, base: &Path) -> Result<Resolved, CliError> {
    let grid = build_grid(&cfg.grid)?;
    let operator = build_operator(&cfg.operator, grid, base)?;
    let potential = build_potential(&cfg.potential)?;
    let alpha = build_graph(&cfg.alpha)?;
    let initial = build_field(&cfg.initial, &grid, base)?;
    let scheme = SchemeConfig {
        tau: cfg.scheme.tau,
        t_end: cfg.scheme.t_end,
        eps: cfg.scheme.eps,
        nu: cfg.scheme.nu,
        tol_newton: cfg.scheme.tol_newton,
        max_newton: cfg.scheme.max_newton,
        max_backtrack: 40,
    };
    let forcing = build_forcing(&cfg.forcing, &grid, base)?;

    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let fingerprint = hex_string(&hasher.finalize());

    let toggles = AnalysisToggles {
        separation: cfg.diagnostics.separation,
        lojasiewicz: cfg.diagnostics.lojasiewicz,
        algebraic_decay: cfg.diagnostics.decay == "algebraic",
        dependence: false,
    };
    let scenario = Scenario {
        operator,
        potential,
        alpha,
        forcing,
        scheme,
        initial,
        holder_nu: cfg.diagnostics.holder_nu,
        fingerprint,
    };
    Ok(Resolved {
        scenario,
        toggles,
        diagnostics: cfg.diagnostics,
        stationary: cfg.stationary,
        continuation: cfg.continuation,
        depend: cfg.depend,
        output_dir: cfg.output.dir,
        checkpoint_every: cfg.output.checkpoint_every.max(1),
    })
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn build_grid(g: &GridSection) -> Result<Grid, CliError> {
    let bc = match g.bc.as_str() {
        "dirichlet" => Bc::Dirichlet0,
        "neumann" => Bc::Neumann0,
        other => {
            return Err(CliError::validation(
                "parse",
                format!("[grid] bc must be \"dirichlet\" or \"neumann\", got {other:?}"),
                vec![],
            ))
        }
    };
    let mut n = [3usize; 2];
    let mut len = [1.0f64; 2];
    for ax in 0..g.dim.min(2) {
        n[ax] = *g.n.get(ax).ok_or_else(|| {
            CliError::validation("parse", "[grid] n must list one entry per axis", vec![])
        })?;
        len[ax] = *g.length.get(ax).ok_or_else(|| {
            CliError::validation("parse", "[grid] length must list one entry per axis", vec![])
        })?;
    }
    Grid::new(g.dim, n, len, bc).map_err(CliError::from_core)
}

fn build_operator(o: &OperatorSection, grid: Grid, base: &Path) -> Result<EllipticOperator, CliError> {
    match o.kind.as_str() {
        "linear" => {
            let d = if let Some(file) = &o.d_file {
                let rows = read_nodal_csv(&resolve_path(base, file))?;
                if rows.len() != grid.nodes() {
                    return Err(CliError::validation(
                        "parse",
                        format!(
                            "[operator] d_file has {} rows, grid has {} nodes",
                            rows.len(),
                            grid.nodes()
                        ),
                        vec!["H6".into()],
                    ));
                }
                if grid.dim == 1 {
                    DCoeff::NodalScalar(rows.iter().map(|r| *r.last().unwrap()).collect())
                } else {
                    let mut m = Vec::with_capacity(rows.len());
                    for r in &rows {
                        if r.len() < 3 {
                            return Err(CliError::validation(
                                "parse",
                                "[operator] 2d d_file rows need dxx,dxy,dyy",
                                vec!["H6".into()],
                            ));
                        }
                        m.push([r[r.len() - 3], r[r.len() - 2], r[r.len() - 1]]);
                    }
                    DCoeff::NodalMatrix(m)
                }
            } else {
                match &o.d {
                    None => DCoeff::Scalar(1.0),
                    Some(toml::Value::Float(v)) => DCoeff::Scalar(*v),
                    Some(toml::Value::Integer(v)) => DCoeff::Scalar(*v as f64),
                    Some(toml::Value::Array(arr)) if arr.len() == 3 => {
                        let mut m = [0.0; 3];
                        for (k, v) in arr.iter().enumerate() {
                            m[k] = v.as_float().or(v.as_integer().map(|i| i as f64)).ok_or_else(
                                || CliError::validation("parse", "[operator] d entries must be numbers", vec![]),
                            )?;
                        }
                        DCoeff::Matrix(m)
                    }
                    Some(_) => {
                        return Err(CliError::validation(
                            "parse",
                            "[operator] d must be a number or [dxx, dxy, dyy]",
                            vec![],
                        ))
                    }
                }
            };
            EllipticOperator::linear(grid, d, o.a).map_err(CliError::from_core)
        }
        "p_laplace" => {
            let p = o.p.ok_or_else(|| {
                CliError::validation("parse", "[operator] p_laplace requires p", vec!["H3".into()])
            })?;
            EllipticOperator::p_laplace(grid, p).map_err(CliError::from_core)
        }
        other => Err(CliError::validation(
            "parse",
            format!("[operator] unknown kind {other:?}"),
            vec![],
        )),
    }
}

fn build_potential(p: &PotentialSection) -> Result<Potential, CliError> {
    let mut pot = match p.kind.as_str() {
        "double_well" => Potential::double_well(),
        "quadratic" => Potential::quadratic(),
        "logarithmic" => Potential::logarithmic(),
        "singular_power" => {
            let kappa = p.kappa.ok_or_else(|| {
                CliError::validation("parse", "[potential] singular_power requires kappa", vec![])
            })?;
            Potential::singular_power(p.rbar.unwrap_or(1.0), kappa, p.c.unwrap_or(1.0))
        }
        "half_line_obstacle" => Potential::half_line_obstacle(),
        "custom" => {
            let beta_spec = p.beta.as_ref().ok_or_else(|| {
                CliError::validation("parse", "[potential] custom requires [potential.beta]", vec![])
            })?;
            let beta = build_graph(beta_spec)?;
            let lambda = p.lambda.unwrap_or(0.0);
            let eta = p.eta.unwrap_or(0.5);
            Potential::new(beta, lambda, p.c_w.unwrap_or(0.0), eta).map_err(|e| {
                CliError::validation("construction", e.to_string(), vec!["H1".into()])
            })?
        }
        other => {
            return Err(CliError::validation(
                "parse",
                format!("[potential] unknown kind {other:?}"),
                vec![],
            ))
        }
    };
    // numeric overrides (lambda < 0 etc. are re-validated)
    if p.kind != "custom" {
        let lambda = p.lambda.unwrap_or(pot.lambda);
        let c_w = p.c_w.unwrap_or(pot.c_w);
        let eta = p.eta.unwrap_or(pot.eta);
        let rebuilt = Potential::new(pot.beta.clone(), lambda, c_w, eta)
            .map_err(|e| CliError::validation("construction", e.to_string(), vec!["H1".into()]))?;
        pot = rebuilt
            .with_singularity(pot.singular_lower, pot.singular_upper);
    }
    if let Some(q) = &p.q_growth {
        pot = pot.with_q_growth(QGrowth { eta1: q.eta1, q: q.q });
    }
    if let Some(w) = &p.analytic_window {
        pot = pot.with_analytic_window(AnalyticWindow {
            iota_lo: w.lo,
            iota_hi: w.hi,
            margin: w.margin,
        });
    }
    Ok(pot)
}

fn build_graph(g: &GraphSection) -> Result<MonotoneGraph, CliError> {
    let graph = match g.kind.as_str() {
        "identity" => MonotoneGraph::identity(),
        "linear" => MonotoneGraph::linear(g.slope.unwrap_or(1.0)),
        "power" => {
            let k = g.k.ok_or_else(|| {
                CliError::validation("parse", "[alpha] power requires odd k", vec![])
            })?;
            if k % 2 == 0 {
                return Err(CliError::validation(
                    "parse",
                    "[alpha] power requires an odd exponent",
                    vec!["H2".into()],
                ));
            }
            MonotoneGraph::power(k)
        }
        "indicator_halfline" => {
            let side = match g.side.as_deref() {
                Some("nonnegative") | Some("right") => HalfLine::NonNegative,
                Some("nonpositive") | Some("left") => HalfLine::NonPositive,
                other => {
                    return Err(CliError::validation(
                        "parse",
                        format!("[alpha] indicator_halfline side must be nonnegative/nonpositive, got {other:?}"),
                        vec![],
                    ))
                }
            };
            MonotoneGraph::indicator_halfline(side)
        }
        "irreversible" => MonotoneGraph::irreversible_quadratic(),
        "half_line_obstacle" => MonotoneGraph::half_line_obstacle(),
        "linear_plus_power" => MonotoneGraph::linear_plus_power(
            g.a.unwrap_or(1.0),
            g.c.unwrap_or(1.0),
            g.p.unwrap_or(3.0),
        ),
        "singular_power" => MonotoneGraph::singular_power(
            g.rbar.unwrap_or(1.0),
            g.kappa.unwrap_or(2.0),
            g.c.unwrap_or(1.0),
        ),
        "log_barrier" => MonotoneGraph::log_barrier(),
        "rational_barrier" => MonotoneGraph::rational_barrier(),
        "flat_window" => MonotoneGraph::flat_window(
            g.s_minus.unwrap_or(0.0),
            g.s_plus.unwrap_or(0.0),
            g.slope.unwrap_or(1.0),
        ),
        "piecewise" => build_piecewise(g)?,
        other => {
            return Err(CliError::validation(
                "parse",
                format!("unknown graph kind {other:?}"),
                vec![],
            ))
        }
    };
    if let Some(gr) = &g.growth {
        Ok(graph.with_growth(GrowthBounds {
            sigma_prime: gr.sigma_prime,
            kappa_inf: gr.kappa_inf,
            ell_inf: gr.ell_inf,
            p_inf: gr.p_inf,
            q_inf: gr.q_inf,
        }))
    } else {
        Ok(graph)
    }
}

fn build_piecewise(g: &GraphSection) -> Result<MonotoneGraph, CliError> {
    let dom = g.domain.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]);
    let closed = g.domain_closed.unwrap_or([false, false]);
    let segments = g.segments.as_ref().ok_or_else(|| {
        CliError::validation("parse", "piecewise graphs require segments", vec![])
    })?;
    let mut pieces = Vec::new();
    for s in segments {
        let f = match s.func.as_str() {
            "constant" => PieceFn::Constant(s.c.unwrap_or(0.0)),
            "affine" => PieceFn::Affine {
                a: s.a.unwrap_or(1.0),
                b: s.b.unwrap_or(0.0),
            },
            "power" => PieceFn::OddPower {
                c: s.c.unwrap_or(1.0),
                k: s.k.unwrap_or(3),
            },
            "linear_plus_power" => PieceFn::LinearPlusPower {
                a: s.a.unwrap_or(1.0),
                c: s.c.unwrap_or(1.0),
                p: s.p.unwrap_or(3.0),
            },
            "log_ratio" => PieceFn::LogRatio,
            "rational_barrier" => PieceFn::RationalBarrier,
            "singular_power" => PieceFn::SingularPower {
                rbar: s.rbar.unwrap_or(1.0),
                kappa: s.kappa.unwrap_or(2.0),
                c: s.c.unwrap_or(1.0),
            },
            other => {
                return Err(CliError::validation(
                    "parse",
                    format!("unknown segment fn {other:?}"),
                    vec![],
                ))
            }
        };
        pieces.push(Piece {
            lo: s.from,
            hi: s.to,
            f,
        });
    }
    let jumps = g
        .jumps
        .as_ref()
        .map(|js| {
            js.iter()
                .map(|j| Jump {
                    at: j.at,
                    lo: j.lo,
                    hi: j.hi,
                })
                .collect()
        })
        .unwrap_or_default();
    let window = g.window.unwrap_or([0.0, 0.0]);
    MonotoneGraph::from_parts(
        Domain {
            lo: dom[0],
            hi: dom[1],
            lo_closed: closed[0],
            hi_closed: closed[1],
        },
        pieces,
        jumps,
        SlopeFloor {
            sigma: g.sigma.unwrap_or(0.0),
            s_minus: window[0],
            s_plus: window[1],
        },
        None,
    )
    .map_err(CliError::from_core)
}

pub fn build_expr(e: &ExprSection, grid: &Grid, base: &Path) -> Result<FieldExpr, CliError> {
    let expr = match e.kind.as_str() {
        "constant" => FieldExpr::Constant(e.value.unwrap_or(0.0)),
        "sine" => {
            let mode = e.mode.clone().unwrap_or_else(|| vec![1]);
            FieldExpr::Sine {
                amplitude: e.amplitude.unwrap_or(1.0),
                mode: [
                    *mode.first().unwrap_or(&1),
                    *mode.get(1).unwrap_or(&1),
                ],
            }
        }
        "polynomial" => FieldExpr::Polynomial {
            coeffs: e.coeffs.clone().unwrap_or_default(),
        },
        "gaussian" => {
            let center = e.center.clone().unwrap_or_else(|| vec![0.5, 0.5]);
            FieldExpr::Gaussian {
                amplitude: e.amplitude.unwrap_or(1.0),
                center: [
                    *center.first().unwrap_or(&0.5),
                    *center.get(1).unwrap_or(&0.5),
                ],
                width: e.width.unwrap_or(0.1),
            }
        }
        "file" => {
            let file = e.file.as_ref().ok_or_else(|| {
                CliError::validation("parse", "file expressions require a path", vec![])
            })?;
            let rows = read_nodal_csv(&resolve_path(base, file))?;
            let values: Vec<f64> = rows.iter().map(|r| *r.last().unwrap()).collect();
            if values.len() != grid.nodes() {
                return Err(CliError::validation(
                    "parse",
                    format!("nodal file has {} rows, grid has {} nodes", values.len(), grid.nodes()),
                    vec!["H4".into()],
                ));
            }
            FieldExpr::Nodal(values)
        }
        other => {
            return Err(CliError::validation(
                "parse",
                format!("unknown expression kind {other:?}"),
                vec![],
            ))
        }
    };
    Ok(expr)
}

fn build_field(e: &ExprSection, grid: &Grid, base: &Path) -> Result<Field, CliError> {
    build_expr(e, grid, base)?
        .eval(grid)
        .map_err(CliError::from_core)
}

fn build_forcing(f: &ForcingSection, grid: &Grid, base: &Path) -> Result<Forcing, CliError> {
    match f.kind.as_str() {
        "zero" => Ok(Forcing::Zero),
        "constant" | "decaying" => {
            let profile = if let Some(expr) = &f.profile {
                build_field(expr, grid, base)?.values
            } else {
                vec![f.value.unwrap_or(0.0); grid.nodes()]
            };
            let profile = if let (Some(v), Some(_)) = (f.value, f.profile.as_ref()) {
                profile.iter().map(|p| p * v).collect()
            } else {
                profile
            };
            if f.kind == "constant" {
                Ok(Forcing::Constant(profile))
            } else {
                let rate = f.rate.ok_or_else(|| {
                    CliError::validation("parse", "[forcing] decaying requires rate", vec!["f1".into()])
                })?;
                Ok(Forcing::Decaying { profile, rate })
            }
        }
        "tabulated" => {
            let file = f.file.as_ref().ok_or_else(|| {
                CliError::validation("parse", "[forcing] tabulated requires file", vec![])
            })?;
            let rows = read_nodal_csv(&resolve_path(base, file))?;
            let mut times = Vec::with_capacity(rows.len());
            let mut values = Vec::with_capacity(rows.len());
            for r in &rows {
                if r.len() != grid.nodes() + 1 {
                    return Err(CliError::validation(
                        "parse",
                        format!(
                            "[forcing] tabulated rows need 1 + {} columns, got {}",
                            grid.nodes(),
                            r.len()
                        ),
                        vec![],
                    ));
                }
                times.push(r[0]);
                values.push(r[1..].to_vec());
            }
            Ok(Forcing::Tabulated { times, values })
        }
        other => Err(CliError::validation(
            "parse",
            format!("[forcing] unknown kind {other:?}"),
            vec![],
        )),
    }
}

pub fn resolve_path(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Continuation ladder: explicit rungs or halvings of the scheme values.
pub fn continuation_ladder(res: &Resolved) -> Vec<ContinuationRung> {
    if let Some(l) = &res.continuation.ladder {
        return l
            .iter()
            .map(|r| ContinuationRung {
                tau: r[0],
                eps: r[1],
                nu: r[2],
            })
            .collect();
    }
    let halvings = res.continuation.halvings.unwrap_or(3);
    let s = &res.scenario.scheme;
    (0..=halvings)
        .map(|k| {
            let f = 0.5f64.powi(k as i32);
            ContinuationRung {
                tau: s.tau * f,
                eps: s.eps * f,
                nu: s.nu * f,
            }
        })
        .collect()
}
