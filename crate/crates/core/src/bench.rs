//! Monte Carlo benchmark: simulate a truth, run selection methods on every
//! replicate and aggregate Risk, Oracle Risk, Oracle Ratio and the selected
//! dimensions.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! name = "f1"
//! truth = "f1"        # f1 | f2 | f3 | custom
//! scale = 0.5         # c, multiplies the built-in kernel
//! nu = 0.001
//! horizon = 500000    # T
//! support = 1000      # A
//! gamma_size = 15
//! replicates = 20
//! methods = [1, 2, 4]
//! seed = 7
//!
//! # optional: every combination becomes its own scenario
//! [grid]
//! nu = [0.001, 0.005]
//! scale = [0.25, 1.0]
//! horizon = [100000, 500000]
//! ```
//!
//! A custom truth sets `truth = "custom"` and gives `custom_breaks` and
//! `custom_values` for a step kernel.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::ModelFit;
use crate::select::{run_method_observed, CurvePoint, MethodConfig};
use crate::simulate::{expected_count, simulate, SimConfig};
use crate::step::StepFunction;
use crate::truth::{l2_distance_sq, GaussianMixture, GroundTruth, Intensity, Kernel, KernelRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthId {
    F1,
    F2,
    F3,
    Custom,
}

impl std::str::FromStr for TruthId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(TruthId::F1),
            "f2" => Ok(TruthId::F2),
            "f3" => Ok(TruthId::F3),
            "custom" => Ok(TruthId::Custom),
            other => Err(Error::invalid(format!("unknown truth '{other}'"))),
        }
    }
}

/// Gaussian components `(weight, mean, sd)` of f3.
pub const F3_COMPONENTS: [(f64, f64, f64); 2] = [(0.5, 250.0, 40.0), (0.5, 600.0, 80.0)];

/// Built-in kernels on `(0, 1000]`, each with `∫|h| = 0.8` before scaling by `c`:
///
/// * f1 = `0.004 · 1_(200, 400]`;
/// * f2 = `0.006 · 1_(200, 800/3] − 0.006 · 1_(2000/3, 2200/3]`;
/// * f3 = `0.8 · (½ N(250, 40²) + ½ N(600, 80²))` truncated to `(0, 1000]`.
pub fn builtin_kernel(id: TruthId, scale: f64) -> Result<Kernel> {
    if !(scale > 0.0) {
        return Err(Error::invalid("truth scale c must be positive"));
    }
    Ok(match id {
        TruthId::F1 => StepFunction::from_pieces(1000.0, &[(200.0, 400.0, 0.004 * scale)])?.into(),
        TruthId::F2 => StepFunction::from_pieces(
            1000.0,
            &[
                (200.0, 800.0 / 3.0, 0.006 * scale),
                (2000.0 / 3.0, 2200.0 / 3.0, -0.006 * scale),
            ],
        )?
        .into(),
        TruthId::F3 => Kernel::Smooth(GaussianMixture::new(
            1000.0,
            F3_COMPONENTS.to_vec(),
            0.8 * scale,
        )?),
        TruthId::Custom => {
            return Err(Error::invalid(
                "custom truths need explicit breaks and values",
            ))
        }
    })
}

/// Built-in truth `(ν, c · f)`; refuses non-stationary combinations.
pub fn builtin_truth(id: TruthId, nu: f64, scale: f64) -> Result<GroundTruth> {
    let t = GroundTruth::new(nu, builtin_kernel(id, scale)?)?;
    t.ensure_stationary()?;
    Ok(t)
}

/// `‖s − s̃‖² = (ν − ν̃)² + ∫(h − h̃)²`.
pub fn l2_risk(estimate: &impl Intensity, truth: &GroundTruth) -> Result<f64> {
    l2_distance_sq(estimate, truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub truth: TruthId,
    #[serde(default = "one")]
    pub scale: f64,
    pub nu: f64,
    pub horizon: f64,
    #[serde(default = "default_support")]
    pub support: f64,
    #[serde(default = "default_gamma")]
    pub gamma_size: usize,
    /// Largest Regular partition; defaults to 25 for f2 and 15 otherwise.
    #[serde(default)]
    pub regular_max: Option<usize>,
    #[serde(default = "default_reps")]
    pub replicates: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<u8>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default)]
    pub regression_range: Option<(usize, usize)>,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub custom_breaks: Option<Vec<f64>>,
    #[serde(default)]
    pub custom_values: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_support() -> f64 {
    1000.0
}
fn default_gamma() -> usize {
    15
}
fn default_reps() -> usize {
    20
}
fn all_methods() -> Vec<u8> {
    (1..=8).collect()
}

impl Scenario {
    pub fn new(truth: TruthId, scale: f64, nu: f64, horizon: f64) -> Self {
        Self {
            name: String::new(),
            truth,
            scale,
            nu,
            horizon,
            support: default_support(),
            gamma_size: default_gamma(),
            regular_max: None,
            replicates: default_reps(),
            methods: all_methods(),
            seed: 0,
            burn_in: None,
            regression_range: None,
            intercept: true,
            custom_breaks: None,
            custom_values: None,
        }
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        match self.truth {
            TruthId::Custom => {
                let (Some(b), Some(v)) = (&self.custom_breaks, &self.custom_values) else {
                    return Err(Error::Config(
                        "custom truth needs custom_breaks and custom_values".into(),
                    ));
                };
                let h = StepFunction::new(b.clone(), v.clone())?.scaled(self.scale);
                let t = GroundTruth::new(self.nu, h)?;
                t.ensure_stationary()?;
                Ok(t)
            }
            id => {
                if (self.support - 1000.0).abs() > 1e-9 {
                    return Err(Error::Config(
                        "built-in truths live on (0, 1000]; set support = 1000".into(),
                    ));
                }
                builtin_truth(id, self.nu, self.scale)
            }
        }
    }

    pub fn method_config(&self) -> MethodConfig {
        MethodConfig {
            gamma_size: self.gamma_size,
            regular_max: self.regular_max.unwrap_or(match self.truth {
                TruthId::F2 => 25,
                _ => 15,
            }),
            regression_range: self.regression_range,
            intercept: self.intercept,
            force_large_gamma: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ground_truth()?;
        if !(self.horizon > 4.0 * self.support) {
            return Err(Error::Config("horizon must exceed 4A".into()));
        }
        if self.horizon < 100.0 * self.support {
            warn!(
                "scenario '{}': T = {} is below 100 A; memory effects may dominate",
                self.name, self.horizon
            );
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        for &m in &self.methods {
            if !(1..=8).contains(&m) {
                return Err(Error::Config(format!("method {m} is not in 1..=8")));
            }
        }
        Ok(())
    }

    fn label(&self) -> String {
        if self.name.is_empty() {
            format!(
                "{:?}_c{}_nu{}_T{}",
                self.truth, self.scale, self.nu, self.horizon
            )
            .to_lowercase()
        } else {
            self.name.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub nu: Vec<f64>,
    #[serde(default)]
    pub scale: Vec<f64>,
    #[serde(default)]
    pub horizon: Vec<f64>,
}

/// Parses a scenario file into one scenario per grid point.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let config = |e: toml::de::Error| Error::Config(e.to_string());
    let mut table: toml::Table = text.parse().map_err(config)?;
    let grid: Option<Grid> = table
        .remove("grid")
        .map(|g| g.try_into())
        .transpose()
        .map_err(config)?;
    let base: Scenario = toml::Value::Table(table).try_into().map_err(config)?;
    let Some(grid) = grid else {
        let mut s = base;
        s.name = s.label();
        return Ok(vec![s]);
    };
    let pick = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let mut out = Vec::new();
    for &nu in &pick(&grid.nu, base.nu) {
        for &scale in &pick(&grid.scale, base.scale) {
            for &horizon in &pick(&grid.horizon, base.horizon) {
                let mut s = base.clone();
                s.nu = nu;
                s.scale = scale;
                s.horizon = horizon;
                s.name = format!("{}_c{}_nu{}_T{}", base.label(), scale, nu, horizon);
                out.push(s);
            }
        }
    }
    Ok(out)
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenarios(&text)
}

/// Per-cell prefix integrals of the truth kernel on the regular partitions
/// used by a scenario, for O(|m|) risk evaluation of every fitted model.
struct RiskTable {
    nu: f64,
    h_sq: f64,
    /// `prefix[n][k] = ∫_0^{x_k} h` on the regular partition with `n` cells.
    prefix: Vec<Vec<f64>>,
}

impl RiskTable {
    fn new(truth: &GroundTruth, max_cells: usize) -> Self {
        let k = truth.kernel();
        let a = k.support();
        let prefix = (0..=max_cells)
            .map(|n| {
                if n == 0 {
                    return Vec::new();
                }
                let mut p = vec![0.0; n + 1];
                for c in 0..n {
                    let lo = a * c as f64 / n as f64;
                    let hi = a * (c + 1) as f64 / n as f64;
                    p[c + 1] = p[c] + k.integral_over(lo, hi);
                }
                p
            })
            .collect();
        Self {
            nu: truth.nu(),
            h_sq: k.sq_integral_over(0.0, a),
            prefix,
        }
    }

    /// `‖s − ŝ_m‖²` from the normalized coefficients of a fit.
    fn risk(&self, m: &ModelFit<'_>) -> f64 {
        let part = m.gram.partition();
        let prefix = &self.prefix[part.len()];
        let br = part.breaks();
        let mut r = (self.nu - m.theta[0]).powi(2) + self.h_sq;
        for (cells, &theta) in m.cells.iter().zip(&m.theta[1..]) {
            let len = br[cells.end] - br[cells.start];
            let int_h = prefix[cells.end] - prefix[cells.start];
            r += theta * theta - 2.0 * theta * int_h / len.sqrt();
        }
        r.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRisk {
    pub method: u8,
    pub completed: usize,
    pub failures: usize,
    /// Mean of `‖s − s̃‖²`.
    pub risk: f64,
    pub risk_std_err: f64,
    /// `min_m mean ‖s − ŝ_m‖²` over the family the method selects from.
    pub oracle_risk: f64,
    pub oracle_ratio: f64,
    /// `Risk / c²` for f1 scenarios.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescaled_risk: Option<f64>,
    /// Selected `|m̂| + 1` → count.
    pub histogram: BTreeMap<usize, usize>,
}

impl MethodRisk {
    /// Most frequent dimension; ties go to the smallest.
    pub fn modal_dimension(&self) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for (&d, &c) in &self.histogram {
            if best.map_or(true, |(_, bc)| c > bc) {
                best = Some((d, c));
            }
        }
        best.map(|b| b.0)
    }

    /// Fraction of completed replicates selecting dimension `d`.
    pub fn share(&self, d: usize) -> f64 {
        self.histogram.get(&d).copied().unwrap_or(0) as f64 / self.completed.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: u8,
    pub replicate: usize,
    pub point: CurvePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub scenario: Scenario,
    pub expected_count: Option<f64>,
    /// Mean of `N[0, T]` over replicates.
    pub mean_count: f64,
    pub simulation_failures: usize,
    pub methods: Vec<MethodRisk>,
    #[serde(skip)]
    pub curves: Vec<CurveRow>,
}

impl RiskReport {
    pub fn method(&self, id: u8) -> Option<&MethodRisk> {
        self.methods.iter().find(|m| m.method == id)
    }
}

struct MethodOutcome {
    risk: f64,
    dimension: usize,
    per_model: Vec<f64>,
    curve: Vec<CurvePoint>,
}

struct ReplicateOutcome {
    count: usize,
    methods: Vec<Result<MethodOutcome>>,
}

/// Runs every replicate of `scn`. Replicate `r` uses stream `r` of the seed,
/// so reports are reproducible regardless of thread count.
pub fn run_scenario(scn: &Scenario) -> Result<RiskReport> {
    scn.validate()?;
    let truth = scn.ground_truth()?;
    let cfg = scn.method_config();
    let table = RiskTable::new(&truth, cfg.regular_max.max(cfg.gamma_size));
    let mut sim = SimConfig::new(scn.horizon, scn.support, scn.seed);
    if let Some(b) = scn.burn_in {
        sim = sim.with_burn_in(b);
    }
    info!("scenario {}: {} replicates", scn.name, scn.replicates);

    let outcomes: Vec<Result<ReplicateOutcome>> = (0..scn.replicates)
        .into_par_iter()
        .map(|r| {
            let events = simulate(&truth, &sim.with_stream(r as u64))?;
            let count = events.count_closed(0.0, scn.horizon);
            let methods = scn
                .methods
                .iter()
                .map(|&id| {
                    let (report, per_model) =
                        run_method_observed(id, &events, scn.support, &cfg, |m| table.risk(m))?;
                    Ok(MethodOutcome {
                        risk: l2_risk(&report.chosen, &truth)?,
                        dimension: report.dimension(),
                        per_model,
                        curve: report.curve,
                    })
                })
                .collect();
            Ok(ReplicateOutcome { count, methods })
        })
        .collect();

    let mut simulation_failures = 0;
    let mut counts = Vec::new();
    let mut curves = Vec::new();
    let mut acc: Vec<MethodAcc> = scn.methods.iter().map(|&id| MethodAcc::new(id)).collect();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                warn!(
                    "scenario {} replicate {r}: simulation failed: {e}",
                    scn.name
                );
                simulation_failures += 1;
                acc.iter_mut().for_each(|a| a.failures += 1);
                continue;
            }
        };
        counts.push(outcome.count as f64);
        for (a, m) in acc.iter_mut().zip(outcome.methods) {
            match m {
                Ok(m) => {
                    curves.extend(m.curve.iter().map(|&point| CurveRow {
                        method: a.id,
                        replicate: r,
                        point,
                    }));
                    a.push(m);
                }
                Err(e) => {
                    warn!("scenario {} replicate {r} method {}: {e}", scn.name, a.id);
                    a.failures += 1;
                }
            }
        }
    }
    let mean_count = counts.iter().sum::<f64>() / counts.len().max(1) as f64;
    let rescale = (scn.truth == TruthId::F1).then(|| scn.scale * scn.scale);
    Ok(RiskReport {
        scenario: scn.clone(),
        expected_count: expected_count(&truth, scn.horizon).ok(),
        mean_count,
        simulation_failures,
        methods: acc.into_iter().map(|a| a.finish(rescale)).collect(),
        curves,
    })
}

struct MethodAcc {
    id: u8,
    risks: Vec<f64>,
    failures: usize,
    per_model: Vec<f64>,
    histogram: BTreeMap<usize, usize>,
}

impl MethodAcc {
    fn new(id: u8) -> Self {
        Self {
            id,
            risks: Vec::new(),
            failures: 0,
            per_model: Vec::new(),
            histogram: BTreeMap::new(),
        }
    }

    fn push(&mut self, m: MethodOutcome) {
        self.risks.push(m.risk);
        *self.histogram.entry(m.dimension).or_default() += 1;
        if self.per_model.is_empty() {
            self.per_model = m.per_model;
        } else {
            self.per_model
                .iter_mut()
                .zip(&m.per_model)
                .for_each(|(a, b)| *a += b);
        }
    }

    fn finish(self, rescale: Option<f64>) -> MethodRisk {
        let n = self.risks.len();
        let (risk, risk_std_err) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = self.risks.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                self.risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            (mean, (var / n as f64).sqrt())
        };
        let oracle_risk = self
            .per_model
            .iter()
            .map(|s| s / n as f64)
            .fold(f64::INFINITY, f64::min);
        let oracle_risk = if n == 0 { f64::NAN } else { oracle_risk };
        MethodRisk {
            method: self.id,
            completed: n,
            failures: self.failures,
            risk,
            risk_std_err,
            oracle_risk,
            oracle_ratio: risk / oracle_risk,
            rescaled_risk: rescale.map(|c2| risk / c2),
            histogram: self.histogram,
        }
    }
}

/// Writes `risk_report.json`, `contrast_curves.csv` and
/// `dimension_histogram.csv` into `dir`.
pub fn write_outputs(reports: &[RiskReport], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| Error::Io { path: p, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;

    let json_path = dir.join("risk_report.json");
    let json = serde_json::to_string_pretty(reports).map_err(|e| Error::Numeric(e.to_string()))?;
    std::fs::write(&json_path, json + "\n").map_err(io(&json_path))?;

    let curve_path = dir.join("contrast_curves.csv");
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(&curve_path).map_err(io(&curve_path))?);
    let mut body = String::from("scenario,method,replicate,dimension,contrast,penalty,penalized\n");
    for rep in reports {
        for row in &rep.curves {
            body += &format!(
                "{},{},{},{},{:e},{:e},{:e}\n",
                rep.scenario.name,
                row.method,
                row.replicate,
                row.point.dimension,
                row.point.contrast,
                row.point.penalty,
                row.point.penalized
            );
        }
    }
    out.write_all(body.as_bytes()).map_err(io(&curve_path))?;

    let hist_path = dir.join("dimension_histogram.csv");
    let mut body = String::from("scenario,method,dimension,count\n");
    for rep in reports {
        for m in &rep.methods {
            for (d, c) in &m.histogram {
                body += &format!("{},{},{},{}\n", rep.scenario.name, m.method, d, c);
            }
        }
    }
    std::fs::write(&hist_path, body).map_err(io(&hist_path))?;
    Ok(())
}

/// `∫ h` over the kernel, for reports.
pub fn kernel_mass(truth: &GroundTruth) -> f64 {
    match truth.kernel() {
        KernelRef::Step(s) => s.integral(),
        KernelRef::Smooth(m) => m.integral(),
    }
}
