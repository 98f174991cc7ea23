//! Command-line interface: solve single instances, evaluate the torus
//! oracle, run epsilon sweeps, and re-analyze saved duals.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure,
//! 3 oracle regime violation, 4 a sweep criterion failed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dual_solver::{
    dual_objective, primal_objective, solve_dual, strong_duality_gap, RotInstance, SolverParams,
};
use crate::error::{Result, RotError};
use crate::measures::{
    cosine_perturbed_torus_measure, uniform_grid_measure, CostKernel, DiscreteMeasure, Domain,
};
use crate::numerics::fnv1a64;
use crate::plan::{density, section};
use crate::rate_harness::{
    collect, gap_fit, log_spaced_epsilons, map_rate_fit, max_xi_fit, ratio_sandwich_report,
    sparsity_fit, strong_convexity_report, volume_fit, RateFit, SweepConfig, SweepData,
    SweepInstance,
};
use crate::torus_oracle::{c_eps_closed_form, c_eps_quadrature};

// ---------------------------------------------------------------------------
// configuration file

fn d_one() -> usize {
    1
}
fn d_p() -> f64 {
    2.0
}
fn d_eps() -> f64 {
    1e-3
}
fn d_amplitude() -> f64 {
    0.2
}
fn d_tol_residual() -> f64 {
    1e-10
}
fn d_max_outer() -> usize {
    10_000
}
fn d_newton_tol() -> f64 {
    1e-14
}
fn d_newton_max() -> usize {
    100
}
fn d_eps_max() -> f64 {
    1e-2
}
fn d_eps_min() -> f64 {
    1e-4
}
fn d_eps_count() -> usize {
    7
}
fn d_radius_scale() -> f64 {
    1.0
}
fn d_interior_margin() -> f64 {
    0.25
}
fn d_true() -> bool {
    true
}
fn d_threshold() -> f64 {
    0.5
}
fn d_spread() -> f64 {
    10.0
}
fn d_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    /// "torus-self", "torus-cosine", or "csv".
    pub kind: String,
    #[serde(default = "d_one")]
    pub d: usize,
    /// Per-axis resolution for solve/analyze (sweeps pick their own).
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "d_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub lambda_csv: Option<PathBuf>,
    #[serde(default)]
    pub lambda_meta: Option<PathBuf>,
    #[serde(default)]
    pub mu_csv: Option<PathBuf>,
    #[serde(default)]
    pub mu_meta: Option<PathBuf>,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            kind: "torus-self".into(),
            d: 1,
            m: None,
            amplitude: d_amplitude(),
            lambda_csv: None,
            lambda_meta: None,
            mu_csv: None,
            mu_meta: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_eps")]
    pub epsilon: f64,
    #[serde(default = "d_tol_residual")]
    pub tol_residual: f64,
    #[serde(default = "d_max_outer")]
    pub max_outer_iters: usize,
    #[serde(default = "d_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "d_newton_max")]
    pub newton_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            p: d_p(),
            epsilon: d_eps(),
            tol_residual: d_tol_residual(),
            max_outer_iters: d_max_outer(),
            newton_tol: d_newton_tol(),
            newton_max_iters: d_newton_max(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "d_eps_max")]
    pub eps_max: f64,
    #[serde(default = "d_eps_min")]
    pub eps_min: f64,
    #[serde(default = "d_eps_count")]
    pub eps_count: usize,
    /// Quantities to fit; empty means every one applicable to the instance.
    #[serde(default)]
    pub sweeps: Vec<String>,
    #[serde(default = "d_radius_scale")]
    pub radius_scale: f64,
    #[serde(default = "d_interior_margin")]
    pub interior_margin: f64,
    #[serde(default = "d_true")]
    pub warm_start: bool,
    #[serde(default = "d_threshold")]
    pub strong_convexity_threshold: f64,
    #[serde(default = "d_spread")]
    pub max_ratio_spread: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            eps_max: d_eps_max(),
            eps_min: d_eps_min(),
            eps_count: d_eps_count(),
            sweeps: Vec::new(),
            radius_scale: d_radius_scale(),
            interior_margin: d_interior_margin(),
            warm_start: true,
            strong_convexity_threshold: d_threshold(),
            max_ratio_spread: d_spread(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "d_dir")]
    pub dir: PathBuf,
    #[serde(default = "d_true")]
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: d_dir(),
            svg: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub instance: InstanceConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text)
                .map_err(|e| RotError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text)
                .map_err(|e| RotError::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Stable hash of the effective configuration, for artifact headers.
    /// Output settings are excluded: where artifacts land does not change
    /// what they contain.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(&(&self.instance, &self.solver, &self.sweep))
            .unwrap_or_default();
        format!("{:016x}", fnv1a64(canon.as_bytes()))
    }
}

// ---------------------------------------------------------------------------
// measure CSV + sidecar metadata

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureMeta {
    /// "torus" or "box".
    pub kind: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub cell_volume: Option<f64>,
    #[serde(default)]
    pub grid_shape: Option<Vec<usize>>,
}

/// Write a measure as `x_1,..,x_d,weight` CSV plus a JSON sidecar with the
/// domain, cell volume, and grid shape.
pub fn write_measure_csv(csv_path: &Path, meta_path: &Path, m: &DiscreteMeasure) -> Result<()> {
    let d = m.dim();
    let mut out = String::new();
    for a in 1..=d {
        out.push_str(&format!("x_{a},"));
    }
    out.push_str("weight\n");
    for i in 0..m.n() {
        for x in m.point(i) {
            out.push_str(&format!("{x:.17e},"));
        }
        out.push_str(&format!("{:.17e}\n", m.weights[i]));
    }
    fs::write(csv_path, out)?;
    let meta = match &m.domain {
        Domain::Torus { dim } => MeasureMeta {
            kind: "torus".into(),
            dim: Some(*dim),
            bounds: None,
            cell_volume: m.cell_volume,
            grid_shape: m.grid_shape.clone(),
        },
        Domain::Box { bounds } => MeasureMeta {
            kind: "box".into(),
            dim: None,
            bounds: Some(bounds.clone()),
            cell_volume: m.cell_volume,
            grid_shape: m.grid_shape.clone(),
        },
    };
    fs::write(meta_path, serde_json::to_string_pretty(&meta).unwrap())?;
    Ok(())
}

/// Read a measure written by `write_measure_csv`.
pub fn read_measure_csv(csv_path: &Path, meta_path: &Path) -> Result<DiscreteMeasure> {
    let meta: MeasureMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)
        .map_err(|e| RotError::InvalidData(format!("{}: {e}", meta_path.display())))?;
    let domain = match meta.kind.as_str() {
        "torus" => Domain::torus(meta.dim.ok_or_else(|| {
            RotError::InvalidData("torus metadata needs a dim field".into())
        })?)?,
        "box" => Domain::new_box(meta.bounds.clone().ok_or_else(|| {
            RotError::InvalidData("box metadata needs a bounds field".into())
        })?)?,
        other => {
            return Err(RotError::InvalidData(format!(
                "unknown domain kind {other:?} in {}",
                meta_path.display()
            )))
        }
    };
    let d = domain.dim();
    let text = fs::read_to_string(csv_path)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| RotError::InvalidData(format!("{}: empty file", csv_path.display())))?;
    let expected_header = {
        let mut h: Vec<String> = (1..=d).map(|a| format!("x_{a}")).collect();
        h.push("weight".into());
        h.join(",")
    };
    if header.trim() != expected_header {
        return Err(RotError::InvalidData(format!(
            "{}: expected header {expected_header:?}, got {header:?}",
            csv_path.display()
        )));
    }
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(RotError::InvalidData(format!(
                "{}: line {} has {} fields, expected {}",
                csv_path.display(),
                ln + 2,
                fields.len(),
                d + 1
            )));
        }
        for f in &fields[..d] {
            points.push(parse_f64(f, csv_path, ln + 2)?);
        }
        weights.push(parse_f64(fields[d], csv_path, ln + 2)?);
    }
    let mut m = DiscreteMeasure::new(domain, points, weights)?;
    m.cell_volume = meta.cell_volume;
    m.grid_shape = meta.grid_shape;
    Ok(m)
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        RotError::InvalidData(format!("{}: line {line}: bad number {s:?}", path.display()))
    })
}

// ---------------------------------------------------------------------------
// instance construction

fn build_measures(cfg: &RunConfig) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let inst = &cfg.instance;
    match inst.kind.as_str() {
        "torus-self" => {
            let m = inst.m.ok_or_else(|| {
                RotError::Config("instance.m is required for torus-self solves".into())
            })?;
            let dom = Domain::torus(inst.d)?;
            let grid = uniform_grid_measure(&dom, &vec![m; inst.d])?;
            Ok((grid.clone(), grid))
        }
        "torus-cosine" => {
            if inst.d != 1 {
                return Err(RotError::Config("torus-cosine is 1-dimensional".into()));
            }
            let m = inst.m.ok_or_else(|| {
                RotError::Config("instance.m is required for torus-cosine solves".into())
            })?;
            let lambda = cosine_perturbed_torus_measure(m, inst.amplitude)?;
            let mu = uniform_grid_measure(&Domain::torus(1)?, &[m])?;
            Ok((lambda, mu))
        }
        "csv" => {
            let need = |field: &Option<PathBuf>, name: &str| {
                field.clone().ok_or_else(|| {
                    RotError::Config(format!("instance.{name} is required for kind = csv"))
                })
            };
            let lambda = read_measure_csv(
                &need(&inst.lambda_csv, "lambda_csv")?,
                &need(&inst.lambda_meta, "lambda_meta")?,
            )?;
            let mu = read_measure_csv(
                &need(&inst.mu_csv, "mu_csv")?,
                &need(&inst.mu_meta, "mu_meta")?,
            )?;
            if lambda.dim() != inst.d || mu.dim() != inst.d {
                return Err(RotError::Config(format!(
                    "csv measures have dimension {} / {}, config says {}",
                    lambda.dim(),
                    mu.dim(),
                    inst.d
                )));
            }
            Ok((lambda, mu))
        }
        other => Err(RotError::Config(format!(
            "unknown instance kind {other:?} (expected torus-self, torus-cosine, or csv)"
        ))),
    }
}

fn build_instance(cfg: &RunConfig) -> Result<RotInstance> {
    let (lambda, mu) = build_measures(cfg)?;
    let kernel = CostKernel::for_domain(lambda.domain.clone());
    RotInstance::new(lambda, mu, kernel)
}

fn build_params(cfg: &RunConfig) -> Result<SolverParams> {
    let s = &cfg.solver;
    let mut params = SolverParams::new(s.epsilon, s.p)?;
    params.tol_residual = s.tol_residual;
    params.max_outer_iters = s.max_outer_iters;
    params.newton_tol = s.newton_tol;
    params.newton_max_iters = s.newton_max_iters;
    Ok(params)
}

// ---------------------------------------------------------------------------
// artifact writing

fn header_block(cfg: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# tool_version = {}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("# config_hash = {}\n", cfg.hash()));
    out.push_str(&format!("# d = {}\n", cfg.instance.d));
    out.push_str(&format!("# p = {:.17e}\n", cfg.solver.p));
    for (k, v) in extra {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out
}

fn write_duals_csv(
    path: &Path,
    cfg: &RunConfig,
    inst: &RotInstance,
    duals: &crate::dual_solver::DualPotentials,
) -> Result<()> {
    let d = inst.lambda.dim();
    let mut out = header_block(
        cfg,
        &[
            ("epsilon", format!("{:.17e}", cfg.solver.epsilon)),
            ("m", cfg.instance.m.unwrap_or(0).to_string()),
        ],
    );
    out.push_str("marginal,");
    for a in 1..=d {
        out.push_str(&format!("x_{a},"));
    }
    out.push_str("value\n");
    for (name, measure, vals) in [
        ("f", &inst.lambda, &duals.f),
        ("g", &inst.mu, &duals.g),
    ] {
        for i in 0..measure.n() {
            out.push_str(name);
            for x in measure.point(i) {
                out.push_str(&format!(",{x:.17e}"));
            }
            out.push_str(&format!(",{:.17e}\n", vals[i]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parse a duals.csv back into (headers, f-values, g-values with points).
pub fn read_duals_csv(path: &Path) -> Result<(BTreeMap<String, String>, Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut headers = BTreeMap::new();
    let mut f = Vec::new();
    let mut g = Vec::new();
    let mut saw_header_row = false;
    for (ln, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                headers.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header_row {
            if !line.starts_with("marginal,") {
                return Err(RotError::InvalidData(format!(
                    "{}: expected a marginal,x_*,value header row",
                    path.display()
                )));
            }
            saw_header_row = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(RotError::InvalidData(format!(
                "{}: line {}: too few fields",
                path.display(),
                ln + 1
            )));
        }
        let value = parse_f64(fields[fields.len() - 1], path, ln + 1)?;
        match fields[0] {
            "f" => f.push(value),
            "g" => g.push(value),
            other => {
                return Err(RotError::InvalidData(format!(
                    "{}: line {}: unknown marginal {other:?}",
                    path.display(),
                    ln + 1
                )))
            }
        }
    }
    if f.is_empty() || g.is_empty() {
        return Err(RotError::InvalidData(format!(
            "{}: missing f or g rows",
            path.display()
        )));
    }
    Ok((headers, f, g))
}

fn write_convergence_csv(path: &Path, cfg: &RunConfig, rows: &[(f64, f64, usize, f64, f64, f64, f64)]) -> Result<()> {
    let mut out = header_block(cfg, &[]);
    out.push_str("epsilon,p,iters,final_residual_rel,primal,dual,gap\n");
    for (eps, p, iters, res, primal, dual, gap) in rows {
        out.push_str(&format!(
            "{eps:.17e},{p:.17e},{iters},{res:.17e},{primal:.17e},{dual:.17e},{gap:.17e}\n"
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_sections_csv(
    path: &Path,
    cfg: &RunConfig,
    inst: &RotInstance,
    sections: &[crate::plan::Section],
) -> Result<()> {
    let d = inst.lambda.dim();
    let mut out = header_block(
        cfg,
        &[("epsilon", format!("{:.17e}", cfg.solver.epsilon))],
    );
    out.push_str("index,");
    for a in 1..=d {
        out.push_str(&format!("x_{a},"));
    }
    out.push_str("size,diameter,volume,outer_ratio,inner_ratio");
    for a in 1..=d {
        out.push_str(&format!(",barycenter_{a}"));
    }
    out.push('\n');
    for s in sections {
        out.push_str(&s.center_index.to_string());
        for x in inst.lambda.point(s.center_index) {
            out.push_str(&format!(",{x:.17e}"));
        }
        out.push_str(&format!(
            ",{},{:.17e},{:.17e},{:.17e},{:.17e}",
            s.member_indices.len(),
            s.diameter,
            s.volume_estimate,
            s.outer_ratio,
            s.inner_ratio
        ));
        for b in &s.barycenter {
            out.push_str(&format!(",{b:.17e}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn fit_to_json(fit: &RateFit) -> serde_json::Value {
    serde_json::json!({
        "quantity": fit.quantity,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "expected_slope": fit.expected_slope,
        "tolerance": fit.tolerance,
        "one_sided": fit.one_sided,
        "pass": fit.pass,
        "mode": fit.mode,
        "pairs": fit.pairs,
    })
}

fn write_fit_csv(path: &Path, cfg: &RunConfig, fit: &RateFit, data: &SweepData) -> Result<()> {
    let mut out = header_block(cfg, &[("quantity", fit.quantity.clone())]);
    out.push_str("epsilon,value,h,n,iters,residual_rel\n");
    for (eps, value) in &fit.pairs {
        let pt = data
            .points
            .iter()
            .find(|p| p.epsilon == *eps)
            .expect("fit pair epsilon comes from the sweep");
        out.push_str(&format!(
            "{eps:.17e},{value:.17e},{:.17e},{},{},{:.17e}\n",
            pt.h, pt.n, pt.iters, pt.residual_rel
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// SVG log-log plots

fn fmt_tick(decade: i32) -> String {
    format!("1e{decade}")
}

/// Self-contained SVG log-log scatter of a fit with its OLS line.
pub fn loglog_svg(fit: &RateFit) -> String {
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let xs: Vec<f64> = fit.pairs.iter().map(|(e, _)| e.log10()).collect();
    let ys: Vec<f64> = fit.pairs.iter().map(|(_, v)| v.log10()).collect();
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    let (ymin, ymax) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(*y), b.max(*y)));
    let pad = |lo: f64, hi: f64| {
        let s = (hi - lo).max(1e-6) * 0.08;
        (lo - s, hi + s)
    };
    let (xmin, xmax) = pad(xmin, xmax);
    let (ymin, ymax) = pad(ymin, ymax);
    let px = |x: f64| ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - ymin) / (ymax - ymin) * (h - mb - mt);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - ml - mr,
        h - mb - mt
    ));
    // decade gridlines
    for dec in (xmin.floor() as i32)..=(xmax.ceil() as i32) {
        let x = dec as f64;
        if x < xmin || x > xmax {
            continue;
        }
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{mt}\" x2=\"{0}\" y2=\"{1}\" stroke=\"#ddd\"/>\n",
            px(x),
            h - mb
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            px(x),
            h - mb + 18.0,
            fmt_tick(dec)
        ));
    }
    for dec in (ymin.floor() as i32)..=(ymax.ceil() as i32) {
        let y = dec as f64;
        if y < ymin || y > ymax {
            continue;
        }
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#ddd\"/>\n",
            py(y),
            w - mr
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            ml - 6.0,
            py(y) + 4.0,
            fmt_tick(dec)
        ));
    }
    // OLS line (fit is in natural logs; convert to log10 coordinates)
    if fit.slope.is_finite() {
        let ln10 = std::f64::consts::LN_10;
        let yat = |x10: f64| (fit.intercept + fit.slope * x10 * ln10) / ln10;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#c33\" stroke-width=\"1.5\"/>\n",
            px(xmin),
            py(yat(xmin)),
            px(xmax),
            py(yat(xmax))
        ));
    }
    for (x, y) in xs.iter().zip(&ys) {
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"#36c\"/>\n",
            px(*x),
            py(*y)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{}: slope {:.4} \
         (expected {:.4} ± {:.2}, {})</text>\n",
        0.5 * w,
        mt - 14.0,
        fit.quantity,
        fit.slope,
        fit.expected_slope,
        fit.tolerance,
        if fit.pass { "pass" } else { "FAIL" }
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epsilon</text>\n",
        0.5 * w,
        h - 12.0
    ));
    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Parser, Debug)]
#[command(
    name = "rot",
    version,
    about = "Lp-entropy regularized optimal transport: solver, torus oracle, and rate sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one instance and write duals, convergence, and section tables.
    Solve(SolveArgs),
    /// Evaluate the torus self-transport oracle (closed form and quadrature).
    Oracle(OracleArgs),
    /// Run an epsilon sweep and fit the scaling rates.
    Sweep(SweepArgs),
    /// Recompute section tables from saved duals.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug, Default)]
struct CommonOverrides {
    /// TOML or JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance kind: torus-self, torus-cosine, or csv.
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    /// Per-axis grid resolution.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonOverrides,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Comma-separated epsilon values.
    #[arg(long, value_delimiter = ',', required = true)]
    eps: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonOverrides,
    /// Comma-separated quantities (default: all applicable).
    #[arg(long, value_delimiter = ',')]
    sweeps: Option<Vec<String>>,
    #[arg(long)]
    eps_max: Option<f64>,
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    eps_count: Option<usize>,
    /// Disable warm starts between epsilons.
    #[arg(long)]
    cold_start: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonOverrides,
    /// duals.csv produced by `rot solve`.
    #[arg(long, required = true)]
    duals: PathBuf,
    /// Dump full membership of the section at this lambda index.
    #[arg(long)]
    detail_x: Option<usize>,
}

fn apply_overrides(cfg: &mut RunConfig, ov: &CommonOverrides) {
    if let Some(kind) = &ov.instance {
        cfg.instance.kind = kind.clone();
    }
    if let Some(d) = ov.d {
        cfg.instance.d = d;
    }
    if let Some(m) = ov.m {
        cfg.instance.m = Some(m);
    }
    if let Some(p) = ov.p {
        cfg.solver.p = p;
    }
    if let Some(eps) = ov.eps {
        cfg.solver.epsilon = eps;
    }
    if let Some(out) = &ov.out {
        cfg.output.dir = out.clone();
    }
}

fn load_config(ov: &CommonOverrides) -> Result<RunConfig> {
    let mut cfg = match &ov.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, ov);
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// command implementations

fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let cfg = load_config(&args.common)?;
    let inst = build_instance(&cfg)?;
    let params = build_params(&cfg)?;
    let (duals, report) = solve_dual(&inst, &params, None)?;
    let plan = density(&duals, &inst, &params);
    let primal = primal_objective(&plan, &inst, &params);
    let dual = dual_objective(&duals, &inst, &params);
    let gap = strong_duality_gap(primal, dual, &params);

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    write_duals_csv(&dir.join("duals.csv"), &cfg, &inst, &duals)?;
    write_convergence_csv(
        &dir.join("convergence.csv"),
        &cfg,
        &[(
            params.epsilon,
            params.p,
            report.iters,
            report.final_residual_rel,
            primal,
            dual,
            gap,
        )],
    )?;
    let sections: Result<Vec<_>> = (0..inst.n0())
        .map(|i| section(i, &plan, &duals, &inst, &params))
        .collect();
    write_sections_csv(&dir.join("sections.csv"), &cfg, &inst, &sections?)?;
    println!(
        "solved n = {} x {} in {} iterations; residual {:.3e} (rel), primal {:.9e}, \
         dual {:.9e}, gap {:.3e}",
        inst.n0(),
        inst.n1(),
        report.iters,
        report.final_residual_rel,
        primal,
        dual,
        gap
    );
    println!("artifacts written to {}", dir.display());
    Ok(0)
}

fn cmd_oracle(args: &OracleArgs) -> Result<i32> {
    let mut rows = Vec::new();
    let mut regime_violation = false;
    println!("d = {}, p = {}", args.d, args.p);
    println!("{:>12}  {:>22}  {:>22}  {:>10}  {:>10}", "epsilon", "C_eps(closed)", "C_eps(quadrature)", "rel_diff", "R_eps");
    for &eps in &args.eps {
        match (
            c_eps_closed_form(args.d, args.p, eps),
            c_eps_quadrature(args.d, args.p, eps),
        ) {
            (Ok(a), Ok(b)) => {
                let rel = ((a.c_eps - b.c_eps) / a.c_eps).abs();
                println!(
                    "{eps:>12.4e}  {:>22.15e}  {:>22.15e}  {rel:>10.3e}  {:>10.6}",
                    a.c_eps, b.c_eps, a.r_eps
                );
                rows.push((eps, a.c_eps, b.c_eps, rel, a.r_eps));
            }
            (Err(e), _) | (_, Err(e)) => {
                println!("{eps:>12.4e}  out of regime: {e}");
                regime_violation = true;
            }
        }
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let mut out = String::new();
        out.push_str(&format!("# tool_version = {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("# d = {}\n# p = {:.17e}\n", args.d, args.p));
        out.push_str("epsilon,c_eps_closed,c_eps_quadrature,rel_diff,r_eps\n");
        for (eps, a, b, rel, r) in &rows {
            out.push_str(&format!(
                "{eps:.17e},{a:.17e},{b:.17e},{rel:.17e},{r:.17e}\n"
            ));
        }
        fs::write(dir.join("oracle.csv"), out)?;
    }
    Ok(if regime_violation { 3 } else { 0 })
}

const ALL_SWEEPS: [&str; 7] = [
    "sparsity",
    "max_xi",
    "volume",
    "map_rate",
    "gap",
    "strong_convexity",
    "ratio_sandwich",
];

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.eps_max {
        cfg.sweep.eps_max = v;
    }
    if let Some(v) = args.eps_min {
        cfg.sweep.eps_min = v;
    }
    if let Some(v) = args.eps_count {
        cfg.sweep.eps_count = v;
    }
    if let Some(s) = &args.sweeps {
        cfg.sweep.sweeps = s.clone();
    }
    if args.cold_start {
        cfg.sweep.warm_start = false;
    }

    let instance = match cfg.instance.kind.as_str() {
        "torus-self" => SweepInstance::TorusSelfTransport,
        "torus-cosine" => SweepInstance::TorusCosinePerturbed {
            amplitude: cfg.instance.amplitude,
        },
        "csv" => {
            let (lambda, mu) = build_measures(&cfg)?;
            SweepInstance::Custom { lambda, mu }
        }
        other => return Err(RotError::Config(format!("unknown instance kind {other:?}"))),
    };
    let gap_available = matches!(instance, SweepInstance::TorusSelfTransport);
    let requested: Vec<String> = if cfg.sweep.sweeps.is_empty() {
        ALL_SWEEPS
            .iter()
            .filter(|s| gap_available || **s != "gap")
            .map(|s| s.to_string())
            .collect()
    } else {
        for s in &cfg.sweep.sweeps {
            if !ALL_SWEEPS.contains(&s.as_str()) {
                return Err(RotError::Config(format!(
                    "unknown sweep quantity {s:?} (known: {})",
                    ALL_SWEEPS.join(", ")
                )));
            }
        }
        cfg.sweep.sweeps.clone()
    };

    let epsilons = log_spaced_epsilons(cfg.sweep.eps_max, cfg.sweep.eps_min, cfg.sweep.eps_count)?;
    let mut sweep_cfg = SweepConfig::new(cfg.instance.d, cfg.solver.p, epsilons, instance)?;
    sweep_cfg.radius_scale = cfg.sweep.radius_scale;
    sweep_cfg.interior_margin = cfg.sweep.interior_margin;
    sweep_cfg.warm_start = cfg.sweep.warm_start;
    sweep_cfg.tol_residual = cfg.solver.tol_residual;

    let data = collect(&sweep_cfg)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;

    // per-epsilon convergence table
    let conv_rows: Vec<_> = data
        .points
        .iter()
        .map(|pt| (pt.epsilon, cfg.solver.p, pt.iters, pt.residual_rel, pt.primal, pt.dual, pt.gap))
        .collect();
    write_convergence_csv(&dir.join("sweep_convergence.csv"), &cfg, &conv_rows)?;

    let mut summary = serde_json::Map::new();
    summary.insert("config_hash".into(), cfg.hash().into());
    summary.insert("d".into(), cfg.instance.d.into());
    summary.insert("p".into(), cfg.solver.p.into());
    summary.insert(
        "epsilons".into(),
        serde_json::to_value(&data.config.epsilons).unwrap(),
    );
    let mut fits = serde_json::Map::new();
    let mut all_pass = true;
    for name in &requested {
        match name.as_str() {
            "strong_convexity" => {
                let rep = strong_convexity_report(&data, cfg.sweep.strong_convexity_threshold)?;
                println!(
                    "strong_convexity: worst lambda_min {:.4} (threshold {:.2}) -> {}",
                    rep.worst,
                    rep.threshold,
                    if rep.pass { "pass" } else { "FAIL" }
                );
                all_pass &= rep.pass;
                let mut out = header_block(&cfg, &[("quantity", "strong_convexity".into())]);
                out.push_str("epsilon,value,h,n,iters,residual_rel\n");
                for ((eps, v), pt) in rep.per_eps.iter().zip(&data.points) {
                    out.push_str(&format!(
                        "{eps:.17e},{v:.17e},{:.17e},{},{},{:.17e}\n",
                        pt.h, pt.n, pt.iters, pt.residual_rel
                    ));
                }
                fs::write(dir.join("sweep_strong_convexity.csv"), out)?;
                fits.insert(
                    "strong_convexity".into(),
                    serde_json::json!({
                        "worst": rep.worst,
                        "threshold": rep.threshold,
                        "pass": rep.pass,
                        "per_eps": rep.per_eps,
                    }),
                );
            }
            "ratio_sandwich" => {
                let rep = ratio_sandwich_report(&data, cfg.sweep.max_ratio_spread);
                println!(
                    "ratio_sandwich: inner {:.4}, outer {:.4}, spread {:.3} (max {:.1}) -> {}",
                    rep.min_inner,
                    rep.max_outer,
                    rep.spread,
                    cfg.sweep.max_ratio_spread,
                    if rep.pass { "pass" } else { "FAIL" }
                );
                all_pass &= rep.pass;
                let mut out = header_block(&cfg, &[("quantity", "ratio_sandwich".into())]);
                out.push_str("epsilon,inner_ratio,outer_ratio,h,n,iters,residual_rel\n");
                for ((eps, inner, outer), pt) in rep.per_eps.iter().zip(&data.points) {
                    out.push_str(&format!(
                        "{eps:.17e},{inner:.17e},{outer:.17e},{:.17e},{},{},{:.17e}\n",
                        pt.h, pt.n, pt.iters, pt.residual_rel
                    ));
                }
                fs::write(dir.join("sweep_ratio_sandwich.csv"), out)?;
                fits.insert(
                    "ratio_sandwich".into(),
                    serde_json::json!({
                        "min_inner": rep.min_inner,
                        "max_outer": rep.max_outer,
                        "spread": rep.spread,
                        "eps0_proxy": rep.eps0_proxy,
                        "pass": rep.pass,
                        "per_eps": rep.per_eps,
                    }),
                );
            }
            other => {
                let fit = match other {
                    "sparsity" => sparsity_fit(&data)?,
                    "max_xi" => max_xi_fit(&data)?,
                    "volume" => volume_fit(&data)?,
                    "map_rate" => map_rate_fit(&data)?,
                    "gap" => gap_fit(&data)?,
                    _ => unreachable!("validated above"),
                };
                println!(
                    "{}: slope {:.4} (expected {:.4} ± {:.2}, {}, r² {:.5}) -> {}",
                    fit.quantity,
                    fit.slope,
                    fit.expected_slope,
                    fit.tolerance,
                    fit.mode,
                    fit.r_squared,
                    if fit.pass { "pass" } else { "FAIL" }
                );
                all_pass &= fit.pass;
                write_fit_csv(
                    &dir.join(format!("sweep_{}.csv", fit.quantity)),
                    &cfg,
                    &fit,
                    &data,
                )?;
                if cfg.output.svg && !fit.pairs.is_empty() {
                    fs::write(dir.join(format!("sweep_{}.svg", fit.quantity)), loglog_svg(&fit))?;
                }
                fits.insert(fit.quantity.clone(), fit_to_json(&fit));
            }
        }
    }
    summary.insert("fits".into(), serde_json::Value::Object(fits));
    summary.insert("pass".into(), all_pass.into());
    let mut file = fs::File::create(dir.join("summary.json"))?;
    writeln!(
        file,
        "{}",
        serde_json::to_string_pretty(&serde_json::Value::Object(summary)).unwrap()
    )?;
    println!(
        "sweep {}; artifacts written to {}",
        if all_pass { "passed" } else { "FAILED" },
        dir.display()
    );
    Ok(if all_pass { 0 } else { 4 })
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    let cfg = load_config(&args.common)?;
    let (headers, f, g) = read_duals_csv(&args.duals)?;
    let inst = build_instance(&cfg)?;
    let params = build_params(&cfg)?;
    // verify the artifact matches the configured instance
    let check = |key: &str, expected: &str| -> Result<()> {
        match headers.get(key) {
            Some(v) if v == expected => Ok(()),
            Some(v) => Err(RotError::Config(format!(
                "duals file has {key} = {v}, config expects {expected}"
            ))),
            None => Err(RotError::Config(format!("duals file is missing {key}"))),
        }
    };
    check("d", &cfg.instance.d.to_string())?;
    check("p", &format!("{:.17e}", cfg.solver.p))?;
    check("epsilon", &format!("{:.17e}", cfg.solver.epsilon))?;
    if f.len() != inst.n0() || g.len() != inst.n1() {
        return Err(RotError::Config(format!(
            "duals file has {} f and {} g values, instance needs {} and {}",
            f.len(),
            g.len(),
            inst.n0(),
            inst.n1()
        )));
    }
    let duals = crate::dual_solver::DualPotentials {
        f,
        g,
        gauge: crate::dual_solver::Gauge::None,
    };
    let plan = density(&duals, &inst, &params);
    let primal = primal_objective(&plan, &inst, &params);
    let dual = dual_objective(&duals, &inst, &params);
    let gap = strong_duality_gap(primal, dual, &params);
    let (rf, rg) = crate::dual_solver::schrodinger_residual(&duals, &inst, &params);
    let res = rf
        .iter()
        .chain(rg.iter())
        .fold(0.0f64, |m, r| m.max(r.abs()));

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let sections: Result<Vec<_>> = (0..inst.n0())
        .map(|i| section(i, &plan, &duals, &inst, &params))
        .collect();
    let sections = sections?;
    write_sections_csv(&dir.join("sections.csv"), &cfg, &inst, &sections)?;
    write_convergence_csv(
        &dir.join("analyze_convergence.csv"),
        &cfg,
        &[(params.epsilon, params.p, 0, res / params.kappa, primal, dual, gap)],
    )?;
    // round-trip re-emission of the duals (bit-identical formatting)
    write_duals_csv(&dir.join("duals_roundtrip.csv"), &cfg, &inst, &duals)?;
    if let Some(i) = args.detail_x {
        if i >= inst.n0() {
            return Err(RotError::Config(format!(
                "detail index {i} out of range (n0 = {})",
                inst.n0()
            )));
        }
        let s = &sections[i];
        let mut out = header_block(&cfg, &[("center_index", i.to_string())]);
        out.push_str("member_index,");
        for a in 1..=inst.mu.dim() {
            out.push_str(&format!("y_{a},"));
        }
        out.push_str("rho\n");
        for &j in &s.member_indices {
            out.push_str(&j.to_string());
            for y in inst.mu.point(j) {
                out.push_str(&format!(",{y:.17e}"));
            }
            out.push_str(&format!(",{:.17e}\n", plan.rho(i, j)));
        }
        fs::write(dir.join("section_detail.csv"), out)?;
    }
    println!(
        "analyzed {}: residual {:.3e} (rel), primal {:.9e}, dual {:.9e}, gap {:.3e}",
        args.duals.display(),
        res / params.kappa,
        primal,
        dual,
        gap
    );
    println!("artifacts written to {}", dir.display());
    Ok(0)
}

fn exit_code_for(e: &RotError) -> i32 {
    match e {
        RotError::NonConvergence { .. } | RotError::RootNonConvergence { .. } => 2,
        RotError::OutOfRegime(_) => 3,
        _ => 1,
    }
}

/// Parse argv and run; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { 0 } else { 1 };
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_hash_stability() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.instance.kind, "torus-self");
        assert_eq!(cfg.solver.p, 2.0);
        assert_eq!(cfg.hash(), RunConfig::default().hash());
        let mut other = RunConfig::default();
        other.solver.epsilon = 2e-3;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn toml_config_parses() {
        let text = r#"
            [instance]
            kind = "torus-cosine"
            d = 1
            m = 64
            amplitude = 0.1

            [solver]
            p = 1.5
            epsilon = 5e-3

            [sweep]
            eps_max = 1e-2
            eps_min = 1e-3
            eps_count = 4
            sweeps = ["sparsity"]
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.instance.kind, "torus-cosine");
        assert_eq!(cfg.instance.m, Some(64));
        assert_eq!(cfg.solver.p, 1.5);
        assert_eq!(cfg.sweep.sweeps, vec!["sparsity"]);
        // unknown fields rejected
        assert!(toml::from_str::<RunConfig>("[solver]\nbogus = 1\n").is_err());
    }

    #[test]
    fn measure_csv_roundtrip() {
        let dirt = tempfile::tempdir().unwrap();
        let dom = Domain::torus(2).unwrap();
        let m = uniform_grid_measure(&dom, &[3, 4]).unwrap();
        let csv = dirt.path().join("m.csv");
        let meta = dirt.path().join("m.meta.json");
        write_measure_csv(&csv, &meta, &m).unwrap();
        let back = read_measure_csv(&csv, &meta).unwrap();
        assert_eq!(back.n(), 12);
        assert_eq!(back.points_flat(), m.points_flat());
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.cell_volume, m.cell_volume);
        assert_eq!(back.grid_shape, m.grid_shape);
    }

    #[test]
    fn svg_is_well_formed() {
        let fit = RateFit {
            quantity: "sparsity".into(),
            pairs: vec![(1e-2, 0.1), (1e-3, 0.046), (1e-4, 0.021)],
            slope: 0.333,
            intercept: 0.5,
            r_squared: 0.999,
            expected_slope: 1.0 / 3.0,
            tolerance: 0.05,
            one_sided: false,
            pass: true,
            mode: "two-sided".into(),
        };
        let svg = loglog_svg(&fit);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
