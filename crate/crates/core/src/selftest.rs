//! Acceptance criteria, runnable from the CLI (`tmdcorr selftest`) and from
//! the `acceptance` test target.
//!
//! Every criterion runs at a fixed seed chosen once, never tuned to the
//! outcome. A criterion passes only if all of its checks pass.

use std::fmt::Write;
use std::time::Instant;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::cascade::{CascadeSpec, Detector};
use crate::cli::{estimate_order, estimate_report, simulate_to_bytes, Experiment};
use crate::detection::{simulate_run, ClickRun, RunOptions, TmdLayout};
use crate::estimator::{
    estimate_cross_g, estimate_g, expected_estimator_g, expected_g, expected_heralded_g2, expected_linear_g,
    heralded_g2, nonclassicality_gamma, HeraldPolicy, Order,
};
use crate::sources::{Marginal, SourceModel};
use crate::tdc_io::{bin_timestamps, binary_len, parse_tdc_file, timestamps_from_clicks, write_binary, write_text};

pub const CRITERIA: [u32; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Per-bin click probability of the coherent reference run.
pub const COHERENT_CLICK_PROBABILITY: f64 = 0.165;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub seconds: f64,
    pub passed: bool,
}

impl Criterion {
    /// One status line, then indented checks and notes.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let status = if self.passed { "PASS" } else { "FAIL" };
        writeln!(out, "[{status}] AC{} {} ({:.1} s)", self.id, self.title, self.seconds).unwrap();
        for c in &self.checks {
            writeln!(out, "    {} {}", if c.passed { "ok  " } else { "FAIL" }, c.label).unwrap();
        }
        for n in &self.notes {
            writeln!(out, "    note {n}").unwrap();
        }
        out
    }
}

#[derive(Default)]
struct Outcome {
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Outcome {
    fn check(&mut self, passed: bool, label: impl Into<String>) {
        self.checks.push(Check { label: label.into(), passed });
    }

    fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    fn fail(&mut self, what: &str, e: impl std::fmt::Display) {
        self.check(false, format!("{what}: {e}"));
    }
}

pub fn run_criterion(id: u32) -> Option<Criterion> {
    let (title, f): (&'static str, fn(&mut Outcome)) = match id {
        1 => ("coherent g(2)..g(8), balanced N=3, 2e6 pulses", coherent_orders),
        2 => ("coherent pairwise g(2) matrix", coherent_pairs),
        3 => ("single-mode thermal factorial law, 1e7 pulses", thermal_factorial),
        4 => ("Monte Carlo agrees with exact click oracle, N=2", oracle_equivalence),
        5 => ("loss independence of the linear-detector estimator", loss_independence),
        6 => ("PDC nonclassicality and cross-correlation oracles", pdc_nonclassicality),
        7 => ("heralded g(2) versus mean photon number", heralded),
        8 => ("dead-time design point", dead_time),
        9 => ("TDC file round trips and determinism", io_integrity),
        _ => return None,
    };
    let start = Instant::now();
    let mut outcome = Outcome::default();
    f(&mut outcome);
    let passed = !outcome.checks.is_empty() && outcome.checks.iter().all(|c| c.passed);
    Some(Criterion {
        id,
        title,
        checks: outcome.checks,
        notes: outcome.notes,
        seconds: start.elapsed().as_secs_f64(),
        passed,
    })
}

pub fn run_all() -> Vec<Criterion> {
    CRITERIA.iter().filter_map(|&id| run_criterion(id)).collect()
}

fn experiment(source: SourceModel, stages: u32, efficiency: f64, pulses: u64, seed: u64) -> Experiment {
    let banks = if source.is_two_mode() { 2 } else { 1 };
    Experiment {
        source,
        cascade: CascadeSpec::balanced(stages, efficiency, 0.0).expect("valid cascade"),
        layout: TmdLayout::with_defaults(banks, stages, 2).expect("valid layout"),
        pulses,
        seed,
        censor: true,
        orders: vec![],
    }
}

/// Mean photon number giving per-bin click probability `p` on `2^N`
/// balanced bins of efficiency `eta`.
pub fn coherent_mean_for_click_probability(p: f64, stages: u32, eta: f64) -> f64 {
    -((1u64 << stages) as f64) * (1.0 - p).ln() / eta
}

fn coherent_reference() -> Experiment {
    let mean = coherent_mean_for_click_probability(COHERENT_CLICK_PROBABILITY, 3, 0.5);
    experiment(SourceModel::Coherent { mean }, 3, 0.5, 2_000_000, 1001)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "---".into(), |v| format!("{v:.4}"))
}

fn coherent_orders(o: &mut Outcome) {
    let exp = coherent_reference();
    let run = match exp.simulate() {
        Ok(r) => r,
        Err(e) => return o.fail("simulate", e),
    };
    let rates = run.click_rates(0);
    let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
    o.check(
        (mean_rate - COHERENT_CLICK_PROBABILITY).abs() < 0.002,
        format!("mean per-bin click rate {mean_rate:.4} (target 0.165 +/- 0.002)"),
    );
    for n in 2..=8 {
        let tol = match n {
            2..=4 => 0.01,
            5..=6 => 0.05,
            _ => 0.15,
        };
        match estimate_g(&run, n) {
            Ok(r) => {
                let coincidences: u64 = r.per_subset.iter().map(|s| s.coincidences).sum();
                o.check(
                    (r.mean_g - 1.0).abs() <= tol,
                    format!(
                        "g({n}) = {:.4}, std {}, stderr {} (target 1 +/- {tol}); {} coincidences over {} subsets",
                        r.mean_g,
                        fmt(r.std_g),
                        fmt(r.stderr),
                        coincidences,
                        r.subset_count
                    ),
                );
            }
            Err(e) => o.fail(&format!("g({n})"), e),
        }
    }
}

fn coherent_pairs(o: &mut Outcome) {
    let run = match coherent_reference().simulate() {
        Ok(r) => r,
        Err(e) => return o.fail("simulate", e),
    };
    let r = match estimate_g(&run, 2) {
        Ok(r) => r,
        Err(e) => return o.fail("g(2)", e),
    };
    o.check(r.per_subset.len() == 28, format!("{} pairwise values (target 28)", r.per_subset.len()));
    let worst = r
        .per_subset
        .iter()
        .map(|s| s.g.map_or(f64::INFINITY, |g| (g - 1.0).abs()))
        .fold(0.0, f64::max);
    o.check(worst <= 0.03, format!("largest |g - 1| over pairs {worst:.4} (target <= 0.03)"));
    let std = r.std_g.unwrap_or(f64::NAN);
    o.check((r.mean_g - 1.0).abs() <= 0.01, format!("mean {:.4} (target 1 +/- 0.01)", r.mean_g));
    o.check(
        (0.007 / 3.0..=0.007 * 3.0).contains(&std),
        format!("std {std:.4} (same magnitude as 0.007: within a factor 3)"),
    );
    o.note(format!("g(2) = {:.4} +/- {:.4}", r.mean_g, std));
    for line in crate::report::pair_matrix(&r).lines() {
        o.note(line.to_string());
    }
}

/// Thermal mean chosen so that `eta * mean / 2^N = 0.02`.
pub const THERMAL_REFERENCE_MEAN: f64 = 0.32;

fn thermal_factorial(o: &mut Outcome) {
    let source = SourceModel::Thermal { mean: THERMAL_REFERENCE_MEAN, modes: 1 };
    let exp = experiment(source.clone(), 3, 0.5, 10_000_000, 3001);
    let run = match exp.simulate() {
        Ok(r) => r,
        Err(e) => return o.fail("simulate", e),
    };
    let model = exp.click_model();
    let targets = [(2, 2.0, 0.05), (3, 6.0, 0.4), (4, 24.0, 4.0), (5, 120.0, 60.0), (6, 720.0, 360.0)];
    for (n, target, tol) in targets {
        let expected = model.as_ref().and_then(|m| expected_g(m, Order::Single(n)).ok());
        match estimate_g(&run, n) {
            Ok(r) => o.check(
                (r.mean_g - target).abs() <= tol,
                format!(
                    "g({n}) = {:.4}, std {}, stderr {} (target {target} +/- {tol}; exact click expectation {})",
                    r.mean_g,
                    fmt(r.std_g),
                    fmt(r.stderr),
                    fmt(expected)
                ),
            ),
            Err(e) => o.fail(&format!("g({n})"), e),
        }
    }
    o.note("g(5) and g(6) bounds are sanity checks only (within 50%)");
}

fn within_sigma(o: &mut Outcome, label: &str, estimate: Result<crate::estimator::CorrelationResult, String>, expected: Option<f64>, k: f64) {
    match (estimate, expected) {
        (Ok(r), Some(e)) => {
            let sigma = r.stderr.unwrap_or(f64::NAN);
            let z = (r.mean_g - e) / sigma;
            o.check(
                z.abs() <= k,
                format!("{label}: {:.4} vs exact {e:.4}, stderr {sigma:.4}, z = {z:+.2} (|z| <= {k})", r.mean_g),
            );
        }
        (Err(e), _) => o.fail(label, e),
        (_, None) => o.fail(label, "no oracle value"),
    }
}

fn oracle_equivalence(o: &mut Outcome) {
    let cases = [
        (SourceModel::Coherent { mean: 0.4 }, 4001),
        (SourceModel::Thermal { mean: 0.2, modes: 1 }, 4002),
        (SourceModel::TwoModePdc { marginal_mean: 0.3, marginal: Marginal::Poissonian }, 4003),
    ];
    for (source, seed) in cases {
        let exp = experiment(source.clone(), 2, 0.5, 1_000_000, seed);
        let run = match exp.simulate() {
            Ok(r) => r,
            Err(e) => return o.fail("simulate", e),
        };
        let Some(model) = exp.click_model() else {
            return o.fail("oracle", "model unavailable");
        };
        let orders: Vec<Order> = if source.is_two_mode() {
            vec![Order::Single(2), Order::Cross(0, 2), Order::Cross(1, 1), Order::Cross(1, 2), Order::Cross(2, 2)]
        } else {
            vec![Order::Single(2), Order::Single(3)]
        };
        for order in orders {
            let est = estimate_order(&run, order).map_err(|e| e.to_string());
            let label = format!("{source:?} {order}");
            within_sigma(o, &label, est, expected_g(&model, order).ok(), 3.0);
        }
    }
    o.note("sigma is the delete-one-block jackknife error of the subset mean (20 blocks)");
}

fn unbalanced_cascades(eta: f64) -> Vec<CascadeSpec> {
    let sets: [Vec<Vec<f64>>; 3] = [
        vec![vec![0.3], vec![0.6, 0.45], vec![0.2, 0.7, 0.5, 0.35]],
        vec![vec![0.55], vec![0.1, 0.9], vec![0.4, 0.4, 0.65, 0.8]],
        vec![vec![0.8], vec![0.25, 0.5], vec![0.75, 0.15, 0.3, 0.6]],
    ];
    sets.into_iter()
        .map(|t| {
            let detectors = (0..8).map(|j| Detector::new(eta * (1.0 - 0.05 * j as f64), 0.0)).collect();
            CascadeSpec::new(t, detectors).expect("valid cascade")
        })
        .collect()
}

fn loss_independence(o: &mut Outcome) {
    // Truncated far beyond the working tolerance so that the truncated state
    // and the untruncated closed form agree to machine precision.
    let sources = [
        (SourceModel::Coherent { mean: 1.0 }, 40),
        (SourceModel::Thermal { mean: 0.3, modes: 1 }, 40),
    ];
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (source, k_max) in &sources {
        let dist = match source.pmf(*k_max) {
            Ok(d) => d,
            Err(e) => return o.fail("distribution", e),
        };
        for eta in [0.1, 0.3, 0.6, 1.0] {
            for spec in unbalanced_cascades(eta) {
                for n in [2, 3] {
                    let analytic = source.analytic_g(n).unwrap();
                    match expected_linear_g(&spec, &dist, n) {
                        Ok(v) => worst = worst.max((v - analytic).abs()),
                        Err(e) => return o.fail("linear oracle", e),
                    }
                    cases += 1;
                }
            }
        }
    }
    o.check(
        worst <= 1e-10,
        format!("linear detectors: max |expected - analytic| = {worst:.2e} over {cases} cases (target <= 1e-10)"),
    );
    let spec = CascadeSpec::balanced(3, 0.5, 0.0).unwrap();
    for n in [2, 3] {
        let mut gaps = Vec::new();
        for mean in [0.4, 0.2, 0.1, 0.05] {
            let source = SourceModel::Thermal { mean, modes: 1 };
            let dist = source.distribution().unwrap();
            match expected_estimator_g(&spec, &dist, n) {
                Ok(v) => gaps.push(((v - source.analytic_g(n).unwrap()).abs(), mean)),
                Err(e) => return o.fail("click oracle", e),
            }
        }
        let decreasing = gaps.windows(2).all(|w| w[1].0 < w[0].0);
        let listing: Vec<String> = gaps.iter().map(|(g, m)| format!("mu={m}: {g:.4}")).collect();
        o.check(decreasing, format!("click detectors g({n}): |expected - analytic| {} strictly decreasing", listing.join(", ")));
    }
}

fn pdc_nonclassicality(o: &mut Outcome) {
    for (i, mean) in [0.1, 0.2, 0.5, 1.0].into_iter().enumerate() {
        let source = SourceModel::TwoModePdc { marginal_mean: mean, marginal: Marginal::Poissonian };
        let exp = experiment(source.clone(), 3, 1.0, 5_000_000, 6001 + i as u64);
        let run = match exp.simulate() {
            Ok(r) => r,
            Err(e) => return o.fail("simulate", e),
        };
        let Some(model) = exp.click_model() else {
            return o.fail("oracle", "model unavailable");
        };
        let mut results = Vec::new();
        for order in [Order::Cross(0, 2), Order::Cross(1, 1), Order::Cross(1, 2), Order::Cross(2, 2)] {
            let est = estimate_order(&run, order).map_err(|e| e.to_string());
            if let Ok(r) = &est {
                results.push(r.clone());
            }
            within_sigma(o, &format!("mu={mean} {order}"), est, expected_g(&model, order).ok(), 3.0);
        }
        if results.len() == 4 {
            match nonclassicality_gamma(&results[2], &results[3], &results[0]) {
                Ok(g) => o.check(
                    g.value - 1.0 > g.uncertainty,
                    format!(
                        "mu={mean} gamma = {:.4} +/- {:.4} (ideal {:.4}); requires gamma - 1 > uncertainty",
                        g.value,
                        g.uncertainty,
                        source.analytic_gamma().unwrap_or(f64::NAN)
                    ),
                ),
                Err(e) => o.fail("gamma", e),
            }
        }
    }
    o.note("reference range of measured gamma: 1.19 to 1.60 (not a bound; the two-mode Poisson model stays below sqrt(2))");
}

fn heralded(o: &mut Outcome) {
    let mut values = Vec::new();
    for (i, (mean, pulses)) in [(0.01, 10_000_000), (0.1, 2_000_000), (0.3, 2_000_000), (1.0, 2_000_000)]
        .into_iter()
        .enumerate()
    {
        let source = SourceModel::TwoModePdc { marginal_mean: mean, marginal: Marginal::Poissonian };
        let exp = experiment(source, 3, 0.5, pulses, 7001 + i as u64);
        let run = match exp.simulate() {
            Ok(r) => r,
            Err(e) => return o.fail("simulate", e),
        };
        let Some(model) = exp.click_model() else {
            return o.fail("oracle", "model unavailable");
        };
        let est = heralded_g2(&run, HeraldPolicy::AnyClick).map_err(|e| e.to_string());
        if let Ok(r) = &est {
            values.push((mean, r.mean_g));
        }
        let expected = expected_heralded_g2(&model, HeraldPolicy::AnyClick).ok();
        within_sigma(o, &format!("mu={mean} heralded g(2)"), est, expected, 3.0);
    }
    if let Some(&(_, low)) = values.first() {
        o.check(low < 0.05, format!("heralded g(2) at mu=0.01 is {low:.4} (target < 0.05)"));
    }
    let increasing = values.len() == 4 && values.windows(2).all(|w| w[1].1 > w[0].1);
    o.check(increasing, format!("strictly increasing in mu: {values:?}"));
}

/// Chi-square test of homogeneity between two histograms, pooling sparse
/// categories. Returns `(statistic, dof, p_value)`.
pub fn homogeneity_test(a: &[u64], b: &[u64]) -> (f64, f64, f64) {
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let total = (x + y) as f64;
        let (ea, eb) = (total * na / (na + nb), total * nb / (na + nb));
        if ea.min(eb) < 5.0 {
            pooled.0 += x as f64;
            pooled.1 += y as f64;
        } else {
            cells.push((x as f64, y as f64));
        }
    }
    if pooled.0 + pooled.1 > 0.0 {
        cells.push(pooled);
    }
    let mut stat = 0.0;
    for (x, y) in &cells {
        let total = x + y;
        let (ea, eb) = (total * na / (na + nb), total * nb / (na + nb));
        if ea > 0.0 {
            stat += (x - ea).powi(2) / ea;
        }
        if eb > 0.0 {
            stat += (y - eb).powi(2) / eb;
        }
    }
    let dof = (cells.len().max(2) - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    (stat, dof, p)
}

/// Pulses where two adjacent slots of the same physical detector both
/// clicked.
pub fn adjacent_same_detector_pairs(run: &ClickRun, layout: &TmdLayout) -> u64 {
    let b = layout.detectors_per_bank;
    let adjacent: u64 = (0..layout.modes() - b).fold(0, |m, j| m | 1 << j);
    run.records
        .iter()
        .map(|r| (r.clicks[0] & (r.clicks[0] >> b) & adjacent).count_ones() as u64)
        .sum()
}

fn dead_time(o: &mut Outcome) {
    let mean = coherent_mean_for_click_probability(COHERENT_CLICK_PROBABILITY, 3, 0.5);
    let source = SourceModel::Coherent { mean };
    let sampler = source.sampler().unwrap();
    let spec = vec![CascadeSpec::balanced(3, 0.5, 0.0).unwrap()];
    let layout = TmdLayout::with_defaults(1, 3, 2).unwrap();
    o.note(format!(
        "design point: bin_spacing {} ns, dead_time {} ns",
        layout.bin_spacing_ns, layout.dead_time_ns
    ));
    let sim = |layout: &TmdLayout, seed: u64, censor: bool| {
        simulate_run(&sampler, &spec, layout, RunOptions { pulses: 1_000_000, seed, censor })
    };
    match (sim(&layout, 8001, true), sim(&layout, 8001, false), sim(&layout, 8002, false)) {
        (Ok(censored), Ok(raw), Ok(other)) => {
            o.check(censored == raw, "same seed: censored and uncensored runs identical");
            let (stat, dof, p) = homogeneity_test(&censored.pattern_histogram(0), &other.pattern_histogram(0));
            o.check(
                p > 0.0027,
                format!("independent seeds: pattern chi2 = {stat:.1} on {dof} dof, p = {p:.3} (target p > 0.0027)"),
            );
        }
        (a, b, c) => return o.fail("simulate", format!("{:?}", a.and(b).and(c).err())),
    }
    let mut tight = layout.clone();
    tight.bin_spacing_ns = 0.4 * tight.dead_time_ns;
    match (sim(&tight, 8003, true), sim(&tight, 8003, false)) {
        (Ok(censored), Ok(raw)) => {
            let kept = adjacent_same_detector_pairs(&censored, &tight);
            let all = adjacent_same_detector_pairs(&raw, &tight);
            o.check(
                (kept as f64) + 3.0 * (all as f64).sqrt() < all as f64,
                format!("bin_spacing = 0.4 dead_time: adjacent same-detector coincidences {kept} censored vs {all} uncensored"),
            );
        }
        (a, b) => o.fail("simulate", format!("{:?}", a.and(b).err())),
    }
}

fn io_integrity(o: &mut Outcome) {
    let mut exp = coherent_reference();
    exp.pulses = 800_000;
    exp.seed = 9001;
    let run = match exp.simulate() {
        Ok(r) => r,
        Err(e) => return o.fail("simulate", e),
    };
    let records = match timestamps_from_clicks(&run, &exp.layout) {
        Ok(r) => r,
        Err(e) => return o.fail("timestamps", e),
    };
    o.check(records.len() >= 1_000_000, format!("{} events (target >= 1e6)", records.len()));
    let header = exp.header();
    for binary in [false, true] {
        let name = if binary { "binary" } else { "text" };
        let bytes = if binary { write_binary(&header, &records) } else { write_text(&header, &records) };
        let bytes = match bytes {
            Ok(b) => b,
            Err(e) => return o.fail(name, e),
        };
        match parse_tdc_file(&bytes) {
            Ok((h, r)) => {
                o.check(h == header && r == records, format!("{name}: parse(write(x)) == x"));
                let again = if binary { write_binary(&h, &r) } else { write_text(&h, &r) };
                o.check(again.as_ref() == Ok(&bytes), format!("{name}: rewrite is byte-identical ({} bytes)", bytes.len()));
            }
            Err(e) => o.fail(name, e),
        }
        if binary {
            o.check(
                bytes.len() == binary_len(&header, records.len()),
                format!("binary size {} == 8 + header + 13 x events", bytes.len()),
            );
        }
    }

    // File boundary: write, read back from disk, bin, estimate.
    let dir = std::env::temp_dir().join(format!("tmdcorr-selftest-{}", std::process::id()));
    let boundary = (|| -> Result<(), String> {
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        for source in [
            exp.source.clone(),
            SourceModel::TwoModePdc { marginal_mean: 0.5, marginal: Marginal::Poissonian },
        ] {
            let mut e = exp.clone();
            if source.is_two_mode() {
                e = experiment(source.clone(), 3, 0.7, 300_000, 9002);
            }
            let (bytes, in_memory) = simulate_to_bytes(&e, source.is_two_mode()).map_err(|e| e.to_string())?;
            let path = dir.join("run.tdc");
            std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
            let from_disk = std::fs::read(&path).map_err(|e| e.to_string())?;
            let (h, r) = parse_tdc_file(&from_disk).map_err(|e| e.to_string())?;
            let layout = h.layout().map_err(|e| e.to_string())?;
            let (binned, diag) = bin_timestamps(&r, &layout, h.pulses().map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            o.check(
                binned == in_memory && diag.rejected == 0,
                format!("{source:?}: binned file equals in-memory run ({} rejected)", diag.rejected),
            );
            let orders = crate::cli::default_orders(e.banks(), e.cascade.modes());
            let report = estimate_report(&from_disk, Some(&orders)).map_err(|e| e.to_string())?;
            let same = orders.iter().zip(&report.rows).all(|(&order, row)| {
                let direct = match order {
                    Order::Single(n) => estimate_g(&in_memory, n),
                    Order::Cross(n, m) => estimate_cross_g(&in_memory, n, m),
                };
                direct.as_ref() == Ok(&row.result)
            });
            o.check(same, format!("{source:?}: file-boundary estimates equal in-memory estimates exactly"));
        }
        Ok(())
    })();
    let _ = std::fs::remove_dir_all(&dir);
    if let Err(e) = boundary {
        o.fail("file boundary", e);
    }

    let reports = || -> Result<(Vec<u8>, String, String), String> {
        let mut e = coherent_reference();
        e.pulses = 200_000;
        e.seed = 9003;
        let (bytes, _) = simulate_to_bytes(&e, false).map_err(|e| e.to_string())?;
        let report = estimate_report(&bytes, None).map_err(|e| e.to_string())?;
        Ok((bytes, report.to_text(), report.to_kv()))
    };
    match (reports(), reports()) {
        (Ok(a), Ok(b)) => o.check(a == b, "fixed seed: TDC file, text report and kv report byte-identical"),
        (Err(e), _) | (_, Err(e)) => o.fail("report determinism", e),
    }
}
