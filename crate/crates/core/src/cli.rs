//! Command-line front end: run configuration, commands and exit codes.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! seed = 7
//! pulses = 2000000
//! orders = ["2", "3", "4"]
//!
//! [source]
//! kind = "coherent"      # coherent | thermal | pdc
//! mean = 2.885
//!
//! [cascade]
//! stages = 3
//! efficiency = 0.5
//!
//! [output]
//! path = "coherent.tdc"
//! ```
//!
//! Orders are written `"n"` for `g(n)` and `"n:m"` for the two-bank `g(n,m)`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::cascade::{BankInput, CascadeSpec, ClickModel, Detector, ORACLE_MAX_MODES};
use crate::detection::{simulate_run, ClickRun, RunOptions, TmdLayout, DEFAULT_DETECTORS};
use crate::estimator::{
    estimate_cross_g, estimate_g, expected_g, expected_heralded_g2, expected_linear_g, heralded_g2,
    nonclassicality_gamma, CorrelationResult, HeraldPolicy, Order,
};
use crate::report::{order_key, Report, ReportRow};
use crate::selftest;
use crate::sources::{Marginal, SourceModel};
use crate::tdc_io::{
    bin_timestamps, parse_tdc_file, timestamps_from_clicks, write_binary, write_text, RunHeader,
};

pub const EXIT_SELFTEST_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;

/// Artifact defaults, none of them taken from the experiment.
pub const DEFAULT_PULSES: u64 = 1_000_000;
pub const DEFAULT_EFFICIENCY: f64 = 0.5;
pub const DEFAULT_STAGES: u32 = 3;
pub const DEFAULT_SWEEP_MEANS: [f64; 5] = [0.1, 0.2, 0.5, 1.0, 2.0];

const CONFIG_HELP: &str = "\
Config file keys (TOML):
  seed                      required unless --seed is given
  pulses                    default 1000000 (assumed, not an experimental value)
  orders                    list of \"n\" or \"n:m\"; default g(2)..g(min(2^N, 8)),
                            or 0:2, 1:1, 1:2, 2:2 for two-bank sources
  [source]  kind            coherent | thermal | pdc
            mean            mean photon number (per beam for pdc)
            modes           thermal modes, default 1
            marginal        pdc marginal: poissonian (default) | thermal
  [cascade] stages          N, 2^N bins per bank; default 3
            efficiency      per-bin efficiency; default 0.5 (assumed, not an experimental value)
            efficiencies    per-bin list, overrides efficiency
            dark_click      per-bin dark click probability; default 0 (assumed, not an experimental value)
            transmittances  per-stage lists; default balanced 50:50
  [layout]  detectors       physical detectors per bank; default 2
            bin_spacing_ns  default 2 x dead_time_ns
            dead_time_ns    default 50 (assumed, not an experimental value)
            bank_delay_ns   default 400
            tdc_tick_ps     default 81
            trigger_window_ns  default 2 (assumed, not an experimental value)
            pulse_period_ns default 50000 (assumed, not an experimental value)
            censor          apply dead time; default true
  [output]  path, binary    TDC file written by simulate
  [sweep]   means           default [0.1, 0.2, 0.5, 1.0, 2.0] (assumed, not an experimental value)
            herald_bin      herald on one bank-0 bin; default: any click

Exit codes: 0 success, 1 selftest failure, 2 config error, 3 data error.";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0} acceptance criteria failed")]
    SelftestFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::SelftestFailed(_) => EXIT_SELFTEST_FAILED,
        }
    }
}

fn config_err(path: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {e}"))
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Coherent,
    Thermal,
    Pdc,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub mean: f64,
    pub modes: Option<u32>,
    pub marginal: Option<Marginal>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeConfig {
    pub stages: Option<u32>,
    pub efficiency: Option<f64>,
    pub efficiencies: Option<Vec<f64>>,
    pub dark_click: Option<f64>,
    pub transmittances: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub detectors: Option<usize>,
    pub bin_spacing_ns: Option<f64>,
    pub dead_time_ns: Option<f64>,
    pub bank_delay_ns: Option<f64>,
    pub tdc_tick_ps: Option<f64>,
    pub trigger_window_ns: Option<f64>,
    pub pulse_period_ns: Option<f64>,
    pub censor: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub binary: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub means: Option<Vec<f64>>,
    pub herald_bin: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub pulses: Option<u64>,
    #[serde(default)]
    pub orders: Vec<String>,
    pub source: SourceConfig,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

pub fn parse_orders(list: &[String]) -> Result<Vec<Order>, CliError> {
    list.iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<Order>().map_err(|e| config_err("orders", e)))
        .collect()
}

/// A validated configuration, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub source: SourceModel,
    pub cascade: CascadeSpec,
    pub layout: TmdLayout,
    pub pulses: u64,
    pub seed: u64,
    pub censor: bool,
    pub orders: Vec<Order>,
}

impl Experiment {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        let seed = cfg.seed.ok_or_else(|| config_err("seed", "missing; a seed is required"))?;
        let pulses = cfg.pulses.unwrap_or(DEFAULT_PULSES);
        if pulses == 0 {
            return Err(config_err("pulses", "must be positive"));
        }
        let src = &cfg.source;
        let source = match src.kind {
            SourceKind::Coherent => SourceModel::Coherent { mean: src.mean },
            SourceKind::Thermal => SourceModel::Thermal { mean: src.mean, modes: src.modes.unwrap_or(1) },
            SourceKind::Pdc => SourceModel::TwoModePdc {
                marginal_mean: src.mean,
                marginal: src.marginal.unwrap_or(Marginal::Poissonian),
            },
        };
        source.validate().map_err(|e| config_err("source", e))?;
        if src.kind != SourceKind::Thermal && src.modes.is_some() {
            return Err(config_err("source.modes", "only valid for thermal sources"));
        }
        if src.kind != SourceKind::Pdc && src.marginal.is_some() {
            return Err(config_err("source.marginal", "only valid for pdc sources"));
        }

        let c = &cfg.cascade;
        let stages = c.stages.unwrap_or(DEFAULT_STAGES);
        let modes = 1usize.checked_shl(stages).filter(|_| stages <= crate::cascade::MAX_STAGES);
        let Some(modes) = modes else {
            return Err(config_err("cascade.stages", format!("must be at most {}", crate::cascade::MAX_STAGES)));
        };
        let dark = c.dark_click.unwrap_or(0.0);
        let efficiencies = match (&c.efficiencies, c.efficiency) {
            (Some(_), Some(_)) => {
                return Err(config_err("cascade.efficiencies", "give either efficiency or efficiencies"))
            }
            (Some(list), None) => list.clone(),
            (None, e) => vec![e.unwrap_or(DEFAULT_EFFICIENCY); modes],
        };
        let detectors = efficiencies.iter().map(|&e| Detector::new(e, dark)).collect();
        let transmittances = c
            .transmittances
            .clone()
            .unwrap_or_else(|| (0..stages).map(|k| vec![0.5; 1 << k]).collect());
        let cascade = CascadeSpec::new(transmittances, detectors).map_err(|e| config_err("cascade", e))?;
        if cascade.stages() != stages {
            return Err(config_err("cascade.transmittances", format!("has {} stages, expected {stages}", cascade.stages())));
        }

        let l = &cfg.layout;
        let banks = if source.is_two_mode() { 2 } else { 1 };
        let mut layout = TmdLayout::with_defaults(banks, stages, l.detectors.unwrap_or(DEFAULT_DETECTORS))
            .map_err(|e| config_err("layout.detectors", e))?;
        if let Some(v) = l.dead_time_ns {
            layout.dead_time_ns = v;
            layout.bin_spacing_ns = 2.0 * v;
        }
        if let Some(v) = l.bin_spacing_ns {
            layout.bin_spacing_ns = v;
        }
        if let Some(v) = l.bank_delay_ns {
            layout.bank_delay_ns = v;
        }
        if let Some(v) = l.tdc_tick_ps {
            layout.tdc_tick_ps = v;
        }
        if let Some(v) = l.trigger_window_ns {
            layout.trigger_window_ns = v;
        }
        if let Some(v) = l.pulse_period_ns {
            layout.pulse_period_ns = v;
        }
        layout.validate().map_err(|e| config_err("layout", e))?;
        crate::tdc_io::BinMap::new(&layout).map_err(|e| config_err("layout", e))?;

        let mut orders = parse_orders(&cfg.orders)?;
        if orders.is_empty() {
            orders = default_orders(banks, modes);
        }
        for o in &orders {
            check_order(*o, banks, modes).map_err(|e| config_err("orders", e))?;
        }
        Ok(Self { source, cascade, layout, pulses, seed, censor: l.censor.unwrap_or(true), orders })
    }

    pub fn banks(&self) -> usize {
        self.layout.banks
    }

    /// Runs the simulator in memory.
    pub fn simulate(&self) -> Result<ClickRun, CliError> {
        let sampler = self.source.sampler().map_err(|e| config_err("source", e))?;
        let cascades = vec![self.cascade.clone(); self.banks()];
        let options = RunOptions { pulses: self.pulses, seed: self.seed, censor: self.censor };
        simulate_run(&sampler, &cascades, &self.layout, options).map_err(data_err)
    }

    /// File header with the layout and the source description.
    pub fn header(&self) -> RunHeader {
        let mut h = RunHeader::for_layout(&self.layout, self.pulses);
        let (kind, mean) = match self.source {
            SourceModel::Coherent { mean } => ("coherent", mean),
            SourceModel::Thermal { mean, .. } => ("thermal", mean),
            SourceModel::TwoModePdc { marginal_mean, .. } => ("pdc", marginal_mean),
        };
        h.set("source_kind", kind);
        h.set("source_mean", mean);
        match self.source {
            SourceModel::Thermal { modes, .. } => h.set("source_modes", modes),
            SourceModel::TwoModePdc { marginal, .. } => h.set(
                "source_marginal",
                match marginal {
                    Marginal::Poissonian => "poissonian",
                    Marginal::Thermal => "thermal",
                },
            ),
            SourceModel::Coherent { .. } => {}
        }
        h.set("seed", self.seed);
        h
    }

    /// Exact click-level model of this configuration, if small enough.
    pub fn click_model(&self) -> Option<ClickModel> {
        if self.cascade.modes() > ORACLE_MAX_MODES {
            return None;
        }
        let dist = self.source.distribution().ok()?;
        if self.source.is_two_mode() {
            ClickModel::two_bank(&self.cascade, &self.cascade, BankInput::Paired(dist)).ok()
        } else {
            ClickModel::single(&self.cascade, &dist).ok()
        }
    }
}

pub fn default_orders(banks: usize, modes: usize) -> Vec<Order> {
    if banks == 2 {
        vec![Order::Cross(0, 2), Order::Cross(1, 1), Order::Cross(1, 2), Order::Cross(2, 2)]
    } else {
        (2..=modes.min(8)).map(Order::Single).collect()
    }
}

fn check_order(order: Order, banks: usize, modes: usize) -> Result<(), String> {
    let (n, m) = match order {
        Order::Single(n) => (n, 0),
        Order::Cross(n, m) => (n, m),
    };
    if n + m == 0 {
        return Err(format!("{order} selects no bins"));
    }
    if matches!(order, Order::Cross(..)) && banks < 2 {
        return Err(format!("{order} needs a two-bank source"));
    }
    if n > modes || m > modes {
        return Err(format!("{order} exceeds the {modes} modes per bank"));
    }
    Ok(())
}

/// Source description stored in a file header, if any.
pub fn source_from_header(h: &RunHeader) -> Option<SourceModel> {
    let mean: f64 = h.get("source_mean")?.parse().ok()?;
    let model = match h.get("source_kind")? {
        "coherent" => SourceModel::Coherent { mean },
        "thermal" => SourceModel::Thermal { mean, modes: h.get("source_modes").and_then(|m| m.parse().ok()).unwrap_or(1) },
        "pdc" => SourceModel::TwoModePdc {
            marginal_mean: mean,
            marginal: match h.get("source_marginal") {
                Some("thermal") => Marginal::Thermal,
                _ => Marginal::Poissonian,
            },
        },
        _ => return None,
    };
    model.validate().ok().map(|_| model)
}

fn theory(source: &SourceModel, order: Order) -> Option<f64> {
    match order {
        Order::Single(n) => source.analytic_g(n).ok(),
        Order::Cross(n, m) => source.analytic_cross_g(n, m).ok(),
    }
}

pub fn estimate_order(run: &ClickRun, order: Order) -> Result<CorrelationResult, CliError> {
    match order {
        Order::Single(n) => estimate_g(run, n),
        Order::Cross(n, m) => estimate_cross_g(run, n, m),
    }
    .map_err(data_err)
}

fn gamma_of(rows: &[ReportRow]) -> Option<crate::estimator::GammaEstimate> {
    let find = |o: Order| rows.iter().find(|r| r.result.order == o).map(|r| &r.result);
    let (g12, g22, g02) = (find(Order::Cross(1, 2))?, find(Order::Cross(2, 2))?, find(Order::Cross(0, 2))?);
    nonclassicality_gamma(g12, g22, g02).ok()
}

/// Simulates and serializes one run.
pub fn simulate_to_bytes(exp: &Experiment, binary: bool) -> Result<(Vec<u8>, ClickRun), CliError> {
    let run = exp.simulate()?;
    let records = timestamps_from_clicks(&run, &exp.layout).map_err(data_err)?;
    let header = exp.header();
    let bytes = if binary { write_binary(&header, &records) } else { write_text(&header, &records) }
        .map_err(data_err)?;
    Ok((bytes, run))
}

/// Summary printed after `simulate`: per-bin click rates.
pub fn simulate_summary(exp: &Experiment, run: &ClickRun, events: usize) -> Report {
    let mut meta = vec![
        ("pulses".to_string(), run.pulses.to_string()),
        ("seed".to_string(), exp.seed.to_string()),
        ("events".to_string(), events.to_string()),
    ];
    for bank in 0..run.banks {
        let rates: Vec<String> = run.click_rates(bank).iter().map(|r| format!("{r:.6}")).collect();
        meta.push((format!("click_rate.bank{bank}"), rates.join(",")));
    }
    Report { title: "simulate".into(), meta, ..Default::default() }
}

/// Parses a TDC file, bins it and estimates `orders` (default orders when
/// `None`).
pub fn estimate_report(bytes: &[u8], orders: Option<&[Order]>) -> Result<Report, CliError> {
    let (header, records) = parse_tdc_file(bytes).map_err(data_err)?;
    let layout = header.layout().map_err(data_err)?;
    let pulses = header.pulses().map_err(data_err)?;
    let (run, diag) = bin_timestamps(&records, &layout, pulses).map_err(data_err)?;
    let orders = match orders {
        Some(o) if !o.is_empty() => o.to_vec(),
        _ => default_orders(layout.banks, layout.modes()),
    };
    let source = source_from_header(&header);
    let mut rows = Vec::with_capacity(orders.len());
    for order in orders {
        let result = estimate_order(&run, order)?;
        rows.push(ReportRow { result, theory: source.as_ref().and_then(|s| theory(s, order)), expected: None });
    }
    let mut meta = vec![
        ("pulses".to_string(), pulses.to_string()),
        ("banks".to_string(), layout.banks.to_string()),
        ("modes".to_string(), layout.modes().to_string()),
        ("events.accepted".to_string(), diag.accepted.to_string()),
        ("events.rejected".to_string(), diag.rejected.to_string()),
    ];
    if let Some(kind) = header.get("source_kind") {
        meta.push(("source".into(), format!("{kind} mean={}", header.get("source_mean").unwrap_or("?"))));
    }
    let gamma = gamma_of(&rows);
    Ok(Report { title: "estimate".into(), meta, rows, gamma, heralded: None })
}

/// Exact values for a configuration: ideal-detector theory, the exact
/// click-estimator expectation and the linear-detector expectation.
pub fn oracle_report(exp: &Experiment) -> Result<Report, CliError> {
    let model = exp.click_model();
    let dist = exp.source.distribution().map_err(|e| config_err("source", e))?;
    let mut rows = Vec::new();
    let mut meta = vec![("modes".to_string(), exp.cascade.modes().to_string())];
    if model.is_none() {
        meta.push(("expected".into(), format!("unavailable above {ORACLE_MAX_MODES} modes")));
    }
    for &order in &exp.orders {
        let expected = model.as_ref().and_then(|m| expected_g(m, order).ok());
        let linear = match order {
            Order::Single(n) if model.is_some() => expected_linear_g(&exp.cascade, &dist, n).ok(),
            _ => None,
        };
        if let Some(l) = linear {
            meta.push((format!("{}.linear", order_key(order)), format!("{l:e}")));
        }
        let th = theory(&exp.source, order);
        rows.push(ReportRow {
            result: CorrelationResult {
                order,
                mean_g: expected.or(th).unwrap_or(f64::NAN),
                std_g: None,
                stderr: None,
                subset_count: 0,
                undefined: 0,
                per_subset: vec![],
            },
            theory: th,
            expected,
        });
    }
    Ok(Report { title: "oracle".into(), meta, rows, gamma: None, heralded: None })
}

/// One point of a PDC sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mean: f64,
    pub rows: Vec<ReportRow>,
    pub gamma: Option<crate::estimator::GammaEstimate>,
    pub gamma_theory: Option<f64>,
    pub gamma_expected: Option<f64>,
    pub heralded: Option<ReportRow>,
}

pub fn sweep(exp: &Experiment, means: &[f64], herald: HeraldPolicy) -> Result<Vec<SweepPoint>, CliError> {
    if means.is_empty() {
        return Err(config_err("sweep.means", "empty grid"));
    }
    if !exp.source.is_two_mode() {
        return Err(config_err("source.kind", "sweep needs a pdc source"));
    }
    let orders = [Order::Cross(0, 2), Order::Cross(1, 1), Order::Cross(1, 2), Order::Cross(2, 2)];
    let mut points = Vec::with_capacity(means.len());
    for (i, &mean) in means.iter().enumerate() {
        let mut point_exp = exp.clone();
        if let SourceModel::TwoModePdc { marginal_mean, .. } = &mut point_exp.source {
            *marginal_mean = mean;
        }
        point_exp.source.validate().map_err(|e| config_err("sweep.means", e))?;
        point_exp.seed = exp.seed.wrapping_add(i as u64);
        let run = point_exp.simulate()?;
        let model = point_exp.click_model();
        let mut rows = Vec::new();
        for order in orders {
            rows.push(ReportRow {
                result: estimate_order(&run, order)?,
                theory: theory(&point_exp.source, order),
                expected: model.as_ref().and_then(|m| expected_g(m, order).ok()),
            });
        }
        let expected_of = |o: Order| rows.iter().find(|r| r.result.order == o).and_then(|r| r.expected);
        let gamma_expected = match (expected_of(orders[2]), expected_of(orders[3]), expected_of(orders[0])) {
            (Some(a), Some(b), Some(c)) => Some(a / (b * c).sqrt()),
            _ => None,
        };
        let heralded = match heralded_g2(&run, herald) {
            Ok(result) => Some(ReportRow {
                result,
                theory: None,
                expected: model.as_ref().and_then(|m| expected_heralded_g2(m, herald).ok()),
            }),
            Err(_) => None,
        };
        points.push(SweepPoint {
            mean,
            gamma: gamma_of(&rows),
            gamma_theory: point_exp.source.analytic_gamma().ok(),
            gamma_expected,
            rows,
            heralded,
        });
    }
    Ok(points)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |v| format!("{v:.6}"))
}

/// Whitespace-separated table, one line per grid point.
pub fn sweep_table(points: &[SweepPoint]) -> String {
    let mut cols = vec!["mu".to_string()];
    for o in ["g0_2", "g1_1", "g1_2", "g2_2", "gamma", "heralded_g2"] {
        for suffix in ["est", "err", "expected", "theory"] {
            cols.push(format!("{o}.{suffix}"));
        }
    }
    let mut out = cols.join(" ");
    out.push('\n');
    for p in points {
        let mut cells = vec![format!("{}", p.mean)];
        for r in &p.rows {
            cells.push(fmt_opt(Some(r.result.mean_g)));
            cells.push(fmt_opt(r.result.std_g));
            cells.push(fmt_opt(r.expected));
            cells.push(fmt_opt(r.theory));
        }
        cells.push(fmt_opt(p.gamma.map(|g| g.value)));
        cells.push(fmt_opt(p.gamma.map(|g| g.uncertainty)));
        cells.push(fmt_opt(p.gamma_expected));
        cells.push(fmt_opt(p.gamma_theory));
        match &p.heralded {
            Some(h) => {
                cells.push(fmt_opt(Some(h.result.mean_g)));
                cells.push(fmt_opt(h.result.std_g));
                cells.push(fmt_opt(h.expected));
            }
            None => cells.extend(["nan".to_string(), "nan".into(), "nan".into()]),
        }
        cells.push("nan".into());
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

fn sweep_kv(points: &[SweepPoint]) -> String {
    let mut out = String::new();
    for (i, p) in points.iter().enumerate() {
        out.push_str(&format!("point.{i}.mu={:e}\n", p.mean));
        let report = Report {
            rows: p.rows.clone(),
            gamma: p.gamma,
            heralded: p.heralded.clone(),
            ..Default::default()
        };
        for line in report.to_kv().lines() {
            out.push_str(&format!("point.{i}.{line}\n"));
        }
        out.push_str(&format!("point.{i}.gamma.theory={}\n", p.gamma_theory.map_or("none".into(), |v| format!("{v:e}"))));
        out.push_str(&format!("point.{i}.gamma.expected={}\n", p.gamma_expected.map_or("none".into(), |v| format!("{v:e}"))));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Kv,
}

#[derive(Debug, Parser)]
#[command(name = "tmdcorr", version, about = "Correlation functions from time-multiplexed click detection", after_help = CONFIG_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `pulses`
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Comma-separated orders, e.g. `2,3,1:2`
    #[arg(long)]
    pub orders: Option<String>,
    /// Output path; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a run and write a TDC file
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the binary format
        #[arg(long)]
        binary: bool,
    },
    /// Estimate correlations from a TDC file
    Estimate {
        /// TDC file (text or binary)
        input: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// PDC sweep over mean photon numbers
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated grid, overrides `sweep.means`
        #[arg(long)]
        means: Option<String>,
    },
    /// Print exact and analytic values for a configuration
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the acceptance criteria
    Selftest {
        /// Comma-separated criterion numbers; all when absent
        #[arg(long)]
        only: Option<String>,
    },
}

fn load_experiment(common: &CommonArgs) -> Result<(RunConfig, Experiment), CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.pulses.is_some() {
        cfg.pulses = common.pulses;
    }
    if let Some(o) = &common.orders {
        cfg.orders = vec![o.clone()];
    }
    let exp = Experiment::from_config(&cfg)?;
    Ok((cfg, exp))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| data_err(format!("{}: {e}", p.display()))),
        None => out.write_all(bytes).map_err(data_err),
    }
}

fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Text => report.to_text(),
        Format::Kv => report.to_kv(),
    }
}

fn parse_list<T: std::str::FromStr>(field: &str, s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse().map_err(|_| config_err(field, format!("invalid entry '{x}'"))))
        .collect()
}

/// Executes one command, writing its primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, binary } => {
            let (cfg, exp) = load_experiment(&common)?;
            let path = common
                .out
                .clone()
                .or(cfg.output.path.clone())
                .ok_or_else(|| config_err("output.path", "missing; give --out or output.path"))?;
            let (bytes, run) = simulate_to_bytes(&exp, binary || cfg.output.binary)?;
            std::fs::write(&path, &bytes).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
            let events: usize = run.records.iter().map(|r| (r.clicks[0].count_ones() + r.clicks[1].count_ones()) as usize).sum();
            let summary = simulate_summary(&exp, &run, events);
            out.write_all(render(&summary, common.format).as_bytes()).map_err(data_err)
        }
        Command::Estimate { input, common } => {
            let bytes = std::fs::read(&input).map_err(|e| data_err(format!("{}: {e}", input.display())))?;
            let orders = match &common.orders {
                Some(o) => Some(parse_orders(&[o.clone()])?),
                None => None,
            };
            let report = estimate_report(&bytes, orders.as_deref())?;
            emit(out, common.out.as_deref(), render(&report, common.format).as_bytes())
        }
        Command::Sweep { common, means } => {
            let (cfg, exp) = load_experiment(&common)?;
            let grid = match means {
                Some(s) => parse_list("--means", &s)?,
                None => cfg.sweep.means.clone().unwrap_or_else(|| DEFAULT_SWEEP_MEANS.to_vec()),
            };
            let herald = cfg.sweep.herald_bin.map_or(HeraldPolicy::AnyClick, HeraldPolicy::Bin);
            let points = sweep(&exp, &grid, herald)?;
            let text = match common.format {
                Format::Text => sweep_table(&points),
                Format::Kv => sweep_kv(&points),
            };
            emit(out, common.out.as_deref(), text.as_bytes())
        }
        Command::Oracle { common } => {
            let (_, exp) = load_experiment(&common)?;
            let report = oracle_report(&exp)?;
            emit(out, common.out.as_deref(), render(&report, common.format).as_bytes())
        }
        Command::Selftest { only } => {
            let ids: Vec<u32> = match only {
                Some(s) => parse_list("--only", &s)?,
                None => selftest::CRITERIA.to_vec(),
            };
            let mut failed = 0;
            for id in ids {
                let c = selftest::run_criterion(id).ok_or_else(|| config_err("--only", format!("no criterion {id}")))?;
                out.write_all(c.render().as_bytes()).map_err(data_err)?;
                out.flush().map_err(data_err)?;
                if !c.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                Err(CliError::SelftestFailed(failed))
            } else {
                Ok(())
            }
        }
    }
}
