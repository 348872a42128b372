//! Normalized correlation functions from click records.
//!
//! For every selection `c` of `n` bins the ratio
//! `P(all bins in c click) / prod_j P(bin j clicks)` approximates `g^(n)`:
//! the path transmittances and detector efficiencies enter numerator and
//! denominator as the same product and cancel. The estimate reported is the
//! mean over all `C(2^N, n)` selections and the error bar is the standard
//! deviation across them. Two-bank orders `(n, m)` select `n` bins of bank 0
//! and `m` bins of bank 1.
//!
//! Counting is exact integer accumulation in [`JACKKNIFE_BLOCKS`] contiguous
//! pulse blocks; the blocks also give a delete-one-block jackknife standard
//! error for every subset ratio and for the subset mean.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::cascade::{bits, BankInput, CascadeError, CascadeSpec, ClickModel};
use crate::detection::{ClickRecord, ClickRun};
use crate::sources::PhotonNumberDistribution;

pub const JACKKNIFE_BLOCKS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("order {order} exceeds the {modes} modes available")]
    OrderTooLarge { order: usize, modes: usize },
    #[error("correlation order must select at least one bin")]
    EmptyOrder,
    #[error("run contains no pulses")]
    NoPulses,
    #[error("cross-correlation needs a two-bank run")]
    MissingBank,
    #[error("all {0} subsets are undefined (a bin never clicked)")]
    NoDefinedSubsets(usize),
    #[error("herald condition never met")]
    NoHeralds,
    #[error("herald bin {bin} outside the {modes} bins of bank 0")]
    InvalidHeraldBin { bin: usize, modes: usize },
    #[error("nonclassicality witness needs positive correlations, got {0}")]
    NonPositive(f64),
    #[error(transparent)]
    Oracle(#[from] CascadeError),
}

/// Correlation order: `n` bins of one bank, or `n` bins of bank 0 together
/// with `m` bins of bank 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Single(usize),
    Cross(usize, usize),
}

impl Order {
    fn split(self) -> (usize, usize) {
        match self {
            Order::Single(n) => (n, 0),
            Order::Cross(n, m) => (n, m),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Single(n) => write!(f, "g({n})"),
            Order::Cross(n, m) => write!(f, "g({n},{m})"),
        }
    }
}

impl std::str::FromStr for Order {
    type Err = String;

    /// `"3"` is `g^(3)`, `"1:2"` is `g^(1,2)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("invalid order '{s}'"));
        match s.split_once(':') {
            Some((a, b)) => Ok(Order::Cross(parse(a)?, parse(b)?)),
            None => Ok(Order::Single(parse(s)?)),
        }
    }
}

/// Binomial coefficients up to `C(64, 64)`.
fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128) as u64
}

/// All `n`-element subsets of `0..mode_count`, sorted, in lexicographic order.
pub fn enumerate_subsets(mode_count: usize, n: usize) -> Result<Vec<Vec<usize>>, EstimatorError> {
    if n > mode_count {
        return Err(EstimatorError::OrderTooLarge { order: n, modes: mode_count });
    }
    let mut out = Vec::with_capacity(binomial(mode_count, n) as usize);
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // rightmost position that can still advance
        let Some(i) = (0..n).rev().find(|&i| current[i] < mode_count - n + i) else {
            break;
        };
        current[i] += 1;
        for k in i + 1..n {
            current[k] = current[k - 1] + 1;
        }
    }
    Ok(out)
}

fn mask_of(bins: &[usize]) -> u64 {
    bins.iter().fold(0, |m, &b| m | 1 << b)
}

/// Maps an `n`-subset (as a bit mask) to its lexicographic index via the
/// combinatorial number system.
struct SubsetIndex {
    n: usize,
    subsets: Vec<Vec<usize>>,
    lex_of_colex: Vec<u32>,
}

impl SubsetIndex {
    fn new(modes: usize, n: usize) -> Result<Self, EstimatorError> {
        let subsets = enumerate_subsets(modes, n)?;
        let mut lex_of_colex = vec![0u32; subsets.len()];
        for (lex, s) in subsets.iter().enumerate() {
            lex_of_colex[colex_rank(s.iter().copied())] = lex as u32;
        }
        Ok(Self { n, subsets, lex_of_colex })
    }

    fn len(&self) -> usize {
        self.subsets.len()
    }

    /// Calls `f` with the index of every `n`-subset of the set bits of `mask`.
    fn for_each_contained<F: FnMut(usize)>(&self, mask: u64, mut f: F) {
        let n = self.n;
        if n == 0 {
            f(0);
            return;
        }
        let positions: Vec<usize> = bits(mask).collect();
        let k = positions.len();
        if k < n {
            return;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let rank = colex_rank(idx.iter().map(|&i| positions[i]));
            f(self.lex_of_colex[rank] as usize);
            let Some(i) = (0..n).rev().find(|&i| idx[i] < k - n + i) else {
                return;
            };
            idx[i] += 1;
            for j in i + 1..n {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
}

fn colex_rank<I: Iterator<Item = usize>>(sorted_bins: I) -> usize {
    sorted_bins
        .enumerate()
        .map(|(i, b)| binomial(b, i + 1) as usize)
        .sum()
}

/// Which pulses enter a heralded measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeraldPolicy {
    /// Any click in bank 0.
    AnyClick,
    /// A click in this bin of bank 0.
    Bin(usize),
}

impl HeraldPolicy {
    fn accepts(self, record: &ClickRecord) -> bool {
        match self {
            HeraldPolicy::AnyClick => record.clicks[0] != 0,
            HeraldPolicy::Bin(j) => record.clicks[0] >> j & 1 == 1,
        }
    }
}

/// One subset's coincidence ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetEstimate {
    pub bins_a: Vec<usize>,
    pub bins_b: Vec<usize>,
    pub coincidences: u64,
    /// Click counts of `bins_a` followed by `bins_b`.
    pub singles: Vec<u64>,
    pub pulses: u64,
    /// `None` when a bin never clicked.
    pub g: Option<f64>,
    /// Delete-one-block jackknife standard error.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub order: Order,
    /// Mean of the defined subset ratios.
    pub mean_g: f64,
    /// Standard deviation across subsets; absent with fewer than two.
    pub std_g: Option<f64>,
    /// Jackknife standard error of `mean_g`.
    pub stderr: Option<f64>,
    pub subset_count: usize,
    /// Subsets excluded because one of their bins never clicked.
    pub undefined: usize,
    pub per_subset: Vec<SubsetEstimate>,
}

struct Selection {
    a: SubsetIndex,
    b: SubsetIndex,
    modes_a: usize,
    modes_b: usize,
}

impl Selection {
    fn new(run: &ClickRun, n: usize, m: usize) -> Result<Self, EstimatorError> {
        if n + m == 0 {
            return Err(EstimatorError::EmptyOrder);
        }
        let modes_b = if run.banks == 2 { run.modes } else { 0 };
        if m > 0 && run.banks < 2 {
            return Err(EstimatorError::MissingBank);
        }
        Ok(Self {
            a: SubsetIndex::new(run.modes, n)?,
            b: SubsetIndex::new(modes_b, m)?,
            modes_a: run.modes,
            modes_b,
        })
    }

    fn len(&self) -> usize {
        self.a.len() * self.b.len()
    }
}

/// Integer accumulators per jackknife block.
#[derive(Debug, Clone)]
struct Tally {
    subsets: usize,
    bins: usize,
    coincidences: Vec<u64>,
    singles: Vec<u64>,
    pulses: Vec<u64>,
}

impl Tally {
    fn new(subsets: usize, bins: usize) -> Self {
        Self {
            subsets,
            bins,
            coincidences: vec![0; JACKKNIFE_BLOCKS * subsets],
            singles: vec![0; JACKKNIFE_BLOCKS * bins],
            pulses: vec![0; JACKKNIFE_BLOCKS],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.coincidences.iter_mut().zip(other.coincidences) {
            *a += b;
        }
        for (a, b) in self.singles.iter_mut().zip(other.singles) {
            *a += b;
        }
        for (a, b) in self.pulses.iter_mut().zip(other.pulses) {
            *a += b;
        }
        self
    }

    fn add(&mut self, sel: &Selection, block: usize, record: &ClickRecord) {
        let mask_a = record.clicks[0];
        let mask_b = if sel.modes_b > 0 { record.clicks[1] } else { 0 };
        let singles = &mut self.singles[block * self.bins..(block + 1) * self.bins];
        for j in bits(mask_a) {
            singles[j] += 1;
        }
        for j in bits(mask_b) {
            singles[sel.modes_a + j] += 1;
        }
        let coincidences = &mut self.coincidences[block * self.subsets..(block + 1) * self.subsets];
        let width_b = sel.b.len();
        sel.a.for_each_contained(mask_a, |ia| {
            sel.b.for_each_contained(mask_b, |ib| coincidences[ia * width_b + ib] += 1);
        });
    }
}

fn block_of(pulse_index: u64, pulses: u64) -> usize {
    ((pulse_index as u128 * JACKKNIFE_BLOCKS as u128) / pulses as u128) as usize
}

/// Number of pulse indices in `0..pulses` that fall into each block.
fn block_sizes(pulses: u64) -> Vec<u64> {
    let b = JACKKNIFE_BLOCKS as u128;
    let p = pulses as u128;
    // first index of block k is ceil(k * p / b)
    let start = |k: u128| (k * p).div_ceil(b) as u64;
    (0..JACKKNIFE_BLOCKS as u128).map(|k| start(k + 1) - start(k)).collect()
}

fn tally<'a, I>(run: &ClickRun, sel: &Selection, records: I, block_pulses: Option<Vec<u64>>) -> Tally
where
    I: IndexedParallelIterator<Item = &'a ClickRecord>,
{
    let bins = sel.modes_a + sel.modes_b;
    let subsets = sel.len();
    let mut t = records
        .fold(
            || Tally::new(subsets, bins),
            |mut t, r| {
                t.add(sel, block_of(r.pulse_index, run.pulses), r);
                t
            },
        )
        .reduce(|| Tally::new(subsets, bins), Tally::merge);
    t.pulses = block_pulses.unwrap_or_else(|| block_sizes(run.pulses));
    t
}

fn ratio(coincidences: u64, singles: &[u64], pulses: u64) -> Option<f64> {
    if pulses == 0 || singles.contains(&0) {
        return None;
    }
    let p = pulses as f64;
    let denominator: f64 = singles.iter().map(|&s| s as f64 / p).product();
    Some((coincidences as f64 / p) / denominator)
}

fn finalize(order: Order, sel: &Selection, t: &Tally) -> Result<CorrelationResult, EstimatorError> {
    let blocks = JACKKNIFE_BLOCKS;
    let total_pulses: u64 = t.pulses.iter().sum();
    if total_pulses == 0 {
        return Err(EstimatorError::NoPulses);
    }
    let mut singles_total = vec![0u64; t.bins];
    for b in 0..blocks {
        for j in 0..t.bins {
            singles_total[j] += t.singles[b * t.bins + j];
        }
    }
    let width_b = sel.b.len();
    let mut per_subset = Vec::with_capacity(t.subsets);
    // leave-one-block-out ratios, per subset, for the jackknife
    let mut loo: Vec<Vec<Option<f64>>> = Vec::with_capacity(t.subsets);
    for s in 0..t.subsets {
        let bins_a = sel.a.subsets[s / width_b].clone();
        let bins_b = sel.b.subsets[s % width_b].clone();
        let members: Vec<usize> = bins_a
            .iter()
            .copied()
            .chain(bins_b.iter().map(|j| sel.modes_a + j))
            .collect();
        let coincidences: u64 = (0..blocks).map(|b| t.coincidences[b * t.subsets + s]).sum();
        let singles: Vec<u64> = members.iter().map(|&j| singles_total[j]).collect();
        let g = ratio(coincidences, &singles, total_pulses);
        let leave_out: Vec<Option<f64>> = (0..blocks)
            .map(|b| {
                let c = coincidences - t.coincidences[b * t.subsets + s];
                let s_loo: Vec<u64> = members
                    .iter()
                    .map(|&j| singles_total[j] - t.singles[b * t.bins + j])
                    .collect();
                ratio(c, &s_loo, total_pulses - t.pulses[b])
            })
            .collect();
        let stderr = jackknife(&leave_out);
        per_subset.push(SubsetEstimate {
            bins_a,
            bins_b,
            coincidences,
            singles,
            pulses: total_pulses,
            g,
            stderr,
        });
        loo.push(leave_out);
    }
    let defined: Vec<usize> = (0..t.subsets).filter(|&s| per_subset[s].g.is_some()).collect();
    if defined.is_empty() {
        return Err(EstimatorError::NoDefinedSubsets(t.subsets));
    }
    let values: Vec<f64> = defined.iter().map(|&s| per_subset[s].g.unwrap()).collect();
    let mean_g = mean(&values);
    let std_g = sample_std(&values);
    let mean_loo: Vec<Option<f64>> = (0..blocks)
        .map(|b| {
            let vals: Option<Vec<f64>> = defined.iter().map(|&s| loo[s][b]).collect();
            vals.map(|v| mean(&v))
        })
        .collect();
    Ok(CorrelationResult {
        order,
        mean_g,
        std_g,
        stderr: jackknife(&mean_loo),
        subset_count: t.subsets,
        undefined: t.subsets - defined.len(),
        per_subset,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

fn jackknife(leave_out: &[Option<f64>]) -> Option<f64> {
    let values: Vec<f64> = leave_out.iter().copied().collect::<Option<_>>()?;
    let k = values.len() as f64;
    let m = mean(&values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some(((k - 1.0) / k * ss).sqrt())
}

fn estimate(run: &ClickRun, order: Order) -> Result<CorrelationResult, EstimatorError> {
    if run.pulses == 0 {
        return Err(EstimatorError::NoPulses);
    }
    let (n, m) = order.split();
    let sel = Selection::new(run, n, m)?;
    let t = tally(run, &sel, run.records.par_iter(), None);
    finalize(order, &sel, &t)
}

/// `g^(n)` of bank 0, averaged over all `C(modes, n)` bin selections.
pub fn estimate_g(run: &ClickRun, n: usize) -> Result<CorrelationResult, EstimatorError> {
    estimate(run, Order::Single(n))
}

/// `g^(n)` of one bank of a run.
pub fn estimate_g_bank(run: &ClickRun, bank: usize, n: usize) -> Result<CorrelationResult, EstimatorError> {
    match bank {
        0 => estimate_g(run, n),
        _ => {
            let mut r = estimate(run, Order::Cross(0, n))?;
            r.order = Order::Single(n);
            Ok(r)
        }
    }
}

/// Two-bank `g^(n,m)`: coincidences of `n` bins of bank 0 with `m` bins of
/// bank 1, normalized by all `n + m` singles.
pub fn estimate_cross_g(run: &ClickRun, n: usize, m: usize) -> Result<CorrelationResult, EstimatorError> {
    estimate(run, Order::Cross(n, m))
}

/// `g^(2)` of bank 1 restricted to pulses that satisfy the herald condition
/// on bank 0.
pub fn heralded_g2(run: &ClickRun, policy: HeraldPolicy) -> Result<CorrelationResult, EstimatorError> {
    if run.banks < 2 {
        return Err(EstimatorError::MissingBank);
    }
    if let HeraldPolicy::Bin(bin) = policy {
        if bin >= run.modes {
            return Err(EstimatorError::InvalidHeraldBin { bin, modes: run.modes });
        }
    }
    let heralded: Vec<ClickRecord> = run.records.iter().filter(|r| policy.accepts(r)).copied().collect();
    if heralded.is_empty() {
        return Err(EstimatorError::NoHeralds);
    }
    let mut block_pulses = vec![0u64; JACKKNIFE_BLOCKS];
    for r in &heralded {
        block_pulses[block_of(r.pulse_index, run.pulses)] += 1;
    }
    let sel = Selection::new(run, 0, 2)?;
    let t = tally(run, &sel, heralded.par_iter(), Some(block_pulses));
    let mut result = finalize(Order::Cross(0, 2), &sel, &t)?;
    result.order = Order::Single(2);
    Ok(result)
}

/// Nonclassicality witness with its first-order propagated uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEstimate {
    pub value: f64,
    pub uncertainty: f64,
}

/// `gamma = g^(1,2) / sqrt(g^(2,2) g^(0,2))`; `gamma > 1` is impossible for
/// classical light. The uncertainty propagates the across-subset standard
/// deviations of the three inputs.
pub fn nonclassicality_gamma(
    g12: &CorrelationResult,
    g22: &CorrelationResult,
    g02: &CorrelationResult,
) -> Result<GammaEstimate, EstimatorError> {
    for r in [g12, g22, g02] {
        if !(r.mean_g > 0.0) {
            return Err(EstimatorError::NonPositive(r.mean_g));
        }
    }
    Ok(gamma_with_uncertainty(
        (g12.mean_g, g12.std_g.unwrap_or(0.0)),
        (g22.mean_g, g22.std_g.unwrap_or(0.0)),
        (g02.mean_g, g02.std_g.unwrap_or(0.0)),
    ))
}

/// `gamma` from `(value, sigma)` pairs.
pub fn gamma_with_uncertainty(g12: (f64, f64), g22: (f64, f64), g02: (f64, f64)) -> GammaEstimate {
    let value = g12.0 / (g22.0 * g02.0).sqrt();
    let rel = ((g12.1 / g12.0).powi(2) + 0.25 * (g22.1 / g22.0).powi(2) + 0.25 * (g02.1 / g02.0).powi(2)).sqrt();
    GammaEstimate { value, uncertainty: value * rel }
}

/// Exact asymptotic value of every subset ratio, in the estimator's subset
/// order.
pub fn expected_subset_g(model: &ClickModel, order: Order) -> Result<Vec<f64>, EstimatorError> {
    let (n, m) = order.split();
    if n + m == 0 {
        return Err(EstimatorError::EmptyOrder);
    }
    if m > 0 && model.banks() < 2 {
        return Err(EstimatorError::MissingBank);
    }
    let modes_b = if model.banks() == 2 { model.modes(1) } else { 0 };
    let subsets_a = enumerate_subsets(model.modes(0), n)?;
    let subsets_b = enumerate_subsets(modes_b, m)?;
    let singles_a: Vec<f64> = (0..model.modes(0)).map(|j| model.all_clicked(1 << j, 0)).collect();
    let singles_b: Vec<f64> = (0..modes_b).map(|j| model.all_clicked(0, 1 << j)).collect();
    let mut out = Vec::with_capacity(subsets_a.len() * subsets_b.len());
    for a in &subsets_a {
        for b in &subsets_b {
            let joint = model.all_clicked(mask_of(a), mask_of(b));
            let denominator: f64 =
                a.iter().map(|&j| singles_a[j]).chain(b.iter().map(|&j| singles_b[j])).product();
            out.push(joint / denominator);
        }
    }
    Ok(out)
}

/// Subset-averaged exact expectation of the click estimator.
pub fn expected_g(model: &ClickModel, order: Order) -> Result<f64, EstimatorError> {
    let values = expected_subset_g(model, order)?;
    Ok(mean(&values))
}

/// Exact expected `g^(n)` estimate of a single cascade fed by `dist`.
pub fn expected_estimator_g(
    spec: &CascadeSpec,
    dist: &PhotonNumberDistribution,
    n: usize,
) -> Result<f64, EstimatorError> {
    expected_g(&ClickModel::single(spec, dist)?, Order::Single(n))
}

/// Exact expected `g^(n,m)` estimate of two cascades fed by `input`.
pub fn expected_estimator_cross_g(
    a: &CascadeSpec,
    b: &CascadeSpec,
    input: BankInput,
    n: usize,
    m: usize,
) -> Result<f64, EstimatorError> {
    expected_g(&ClickModel::two_bank(a, b, input)?, Order::Cross(n, m))
}

/// Exact expected heralded `g^(2)` of bank 1.
pub fn expected_heralded_g2(model: &ClickModel, policy: HeraldPolicy) -> Result<f64, EstimatorError> {
    if model.banks() < 2 {
        return Err(EstimatorError::MissingBank);
    }
    let herald_mask = match policy {
        HeraldPolicy::AnyClick => (1u64 << model.modes(0)) - 1,
        HeraldPolicy::Bin(j) => {
            if j >= model.modes(0) {
                return Err(EstimatorError::InvalidHeraldBin { bin: j, modes: model.modes(0) });
            }
            1 << j
        }
    };
    // P(S clicks and herald) = P(S clicks) - P(S clicks, herald set silent)
    let with_herald = |mask_b: u64| match policy {
        HeraldPolicy::AnyClick => {
            model.all_clicked(0, mask_b) - model.all_clicked_with_dark(0, mask_b, herald_mask, 0)
        }
        HeraldPolicy::Bin(_) => model.all_clicked(herald_mask, mask_b),
    };
    let heralds = with_herald(0);
    if !(heralds > 0.0) {
        return Err(EstimatorError::NoHeralds);
    }
    let modes = model.modes(1);
    let singles: Vec<f64> = (0..modes).map(|j| with_herald(1 << j) / heralds).collect();
    let values: Vec<f64> = enumerate_subsets(modes, 2)?
        .iter()
        .map(|s| (with_herald(mask_of(s)) / heralds) / (singles[s[0]] * singles[s[1]]))
        .collect();
    Ok(mean(&values))
}

/// Expected estimator for ideal linear detectors, where the click
/// probability is replaced by `eta_j * E[count_j]`. Moments of the routed
/// photon numbers are summed explicitly over every multinomial outcome of
/// the selected bins.
pub fn expected_linear_g(
    spec: &CascadeSpec,
    dist: &PhotonNumberDistribution,
    n: usize,
) -> Result<f64, EstimatorError> {
    if n == 0 {
        return Err(EstimatorError::EmptyOrder);
    }
    let paths = spec.path_probabilities();
    let etas: Vec<f64> = spec.detectors().iter().map(|d| d.efficiency).collect();
    let log_fact: Vec<f64> = {
        let mut v = vec![0.0; dist.k_max() + 2];
        for k in 1..v.len() {
            v[k] = v[k - 1] + (k as f64).ln();
        }
        v
    };
    // E[prod_{j in S} c_j] under Multinomial(k; p) summed over p_k.
    let moment = |subset: &[usize]| -> f64 {
        let cell: Vec<f64> = subset.iter().map(|&j| paths[j]).collect();
        let rest = (1.0 - cell.iter().sum::<f64>()).max(0.0);
        let mut total = 0.0;
        for (k, pk) in dist.probs().iter().enumerate() {
            if *pk == 0.0 || k < subset.len() {
                continue;
            }
            total += pk * composition_moment(k, &cell, rest, &log_fact);
        }
        total
    };
    let singles: Vec<f64> = (0..spec.modes()).map(|j| etas[j] * moment(&[j])).collect();
    let values: Vec<f64> = enumerate_subsets(spec.modes(), n)?
        .iter()
        .map(|s| {
            let eta: f64 = s.iter().map(|&j| etas[j]).product();
            let denominator: f64 = s.iter().map(|&j| singles[j]).product();
            eta * moment(s) / denominator
        })
        .collect();
    Ok(mean(&values))
}

/// `sum over (c_1..c_r, rest) of Multinomial(k) * prod c_i`.
fn composition_moment(k: usize, cell: &[f64], rest: f64, log_fact: &[f64]) -> f64 {
    fn rec(i: usize, left: usize, log_w: f64, prod: f64, cell: &[f64], rest: f64, log_fact: &[f64]) -> f64 {
        if i == cell.len() {
            if left > 0 && rest == 0.0 {
                return 0.0;
            }
            let lw = log_w + if left > 0 { left as f64 * rest.ln() } else { 0.0 } - log_fact[left];
            return prod * lw.exp();
        }
        let ln_p = cell[i].ln();
        (1..=left)
            .map(|c| rec(i + 1, left - c, log_w + c as f64 * ln_p - log_fact[c], prod * c as f64, cell, rest, log_fact))
            .sum()
    }
    rec(0, k, log_fact[k], 1.0, cell, rest, log_fact)
}

/// Falling-factorial shortcut for the linear expectation: the path and
/// efficiency products cancel, leaving `<n^(k)> / <n>^k`.
pub fn linear_limit_g(dist: &PhotonNumberDistribution, n: usize) -> f64 {
    dist.factorial_moment(n) / dist.mean().powi(n as i32)
}
