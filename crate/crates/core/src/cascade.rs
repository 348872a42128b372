//! Beamsplitter cascade feeding `2^N` click detectors.
//!
//! Stage `k` holds `2^(k-1)` splitters. Splitter `j` of stage `k` takes mode
//! `j` of stage `k-1` and sends it to mode `2j` with probability `t` and to
//! mode `2j+1` with probability `1-t` (0-based indices). The vacuum port
//! never carries photons, so every output mode is reached along exactly one
//! root-to-leaf path and the whole cascade acts on photon numbers as a
//! multinomial router with the path products as cell probabilities.
//!
//! Detector loss is a further virtual splitter in front of each detector, so
//! a bin with `c` photons stays dark with probability `(1-d)(1-eta)^c`.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::sources::PhotonNumberDistribution;

/// Largest number of output modes per bank handled by the exact oracle.
pub const ORACLE_MAX_MODES: usize = 8;

/// Bins are stored as bits of a `u64` mask.
pub const MAX_STAGES: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("cascade needs between 1 and {MAX_STAGES} stages, got {0}")]
    InvalidStages(u32),
    #[error("stage {stage} must have {expected} splitters, got {found}")]
    SplitterCount { stage: usize, expected: usize, found: usize },
    #[error("transmittance of splitter {splitter} at stage {stage} must lie in (0, 1), got {value}")]
    InvalidTransmittance { stage: usize, splitter: usize, value: f64 },
    #[error("cascade with {modes} output modes needs {modes} detectors, got {found}")]
    DetectorCount { modes: usize, found: usize },
    #[error("detector {index}: efficiency must lie in [0, 1] and dark-click probability in [0, 1), got ({efficiency}, {dark_click})")]
    InvalidDetector { index: usize, efficiency: f64, dark_click: f64 },
    #[error("exact oracle supports at most {ORACLE_MAX_MODES} modes per bank, cascade has {0}")]
    OracleTooLarge(usize),
}

/// Click detector behind one output mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detector {
    pub efficiency: f64,
    /// Probability of a dark click per pulse.
    pub dark_click: f64,
}

impl Detector {
    pub fn new(efficiency: f64, dark_click: f64) -> Self {
        Self { efficiency, dark_click }
    }

    /// Probability that this detector stays dark with `photons` incident.
    pub fn no_click_probability(&self, photons: u32) -> f64 {
        (1.0 - self.dark_click) * (1.0 - self.efficiency).powi(photons as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSpec {
    stages: u32,
    /// `transmittances[k][j]` for stage `k+1`, splitter `j`.
    transmittances: Vec<Vec<f64>>,
    detectors: Vec<Detector>,
}

impl CascadeSpec {
    pub fn new(transmittances: Vec<Vec<f64>>, detectors: Vec<Detector>) -> Result<Self, CascadeError> {
        let stages = transmittances.len() as u32;
        if stages == 0 || stages > MAX_STAGES {
            return Err(CascadeError::InvalidStages(stages));
        }
        for (k, stage) in transmittances.iter().enumerate() {
            let expected = 1usize << k;
            if stage.len() != expected {
                return Err(CascadeError::SplitterCount { stage: k + 1, expected, found: stage.len() });
            }
            for (j, &t) in stage.iter().enumerate() {
                if !(t > 0.0 && t < 1.0) {
                    return Err(CascadeError::InvalidTransmittance { stage: k + 1, splitter: j, value: t });
                }
            }
        }
        let modes = 1usize << stages;
        if detectors.len() != modes {
            return Err(CascadeError::DetectorCount { modes, found: detectors.len() });
        }
        for (index, d) in detectors.iter().enumerate() {
            let ok = (0.0..=1.0).contains(&d.efficiency) && (0.0..1.0).contains(&d.dark_click);
            if !ok {
                return Err(CascadeError::InvalidDetector {
                    index,
                    efficiency: d.efficiency,
                    dark_click: d.dark_click,
                });
            }
        }
        Ok(Self { stages, transmittances, detectors })
    }

    /// 50:50 splitters everywhere, identical detectors.
    pub fn balanced(stages: u32, efficiency: f64, dark_click: f64) -> Result<Self, CascadeError> {
        if stages == 0 || stages > MAX_STAGES {
            return Err(CascadeError::InvalidStages(stages));
        }
        let transmittances = (0..stages).map(|k| vec![0.5; 1 << k]).collect();
        let detectors = vec![Detector::new(efficiency, dark_click); 1 << stages];
        Self::new(transmittances, detectors)
    }

    pub fn stages(&self) -> u32 {
        self.stages
    }

    pub fn modes(&self) -> usize {
        1 << self.stages
    }

    pub fn transmittances(&self) -> &[Vec<f64>] {
        &self.transmittances
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    /// Same splitters, different detectors.
    pub fn with_detectors(&self, detectors: Vec<Detector>) -> Result<Self, CascadeError> {
        Self::new(self.transmittances.clone(), detectors)
    }

    /// Probability that a photon entering the cascade leaves in each mode:
    /// the product of `|S|^2` along the mode's unique path.
    pub fn path_probabilities(&self) -> Vec<f64> {
        let n = self.stages as usize;
        (0..self.modes())
            .map(|mode| {
                (1..=n)
                    .map(|k| {
                        let splitter = mode >> (n - k + 1);
                        let t = self.transmittances[k - 1][splitter];
                        if (mode >> (n - k)) & 1 == 0 {
                            t
                        } else {
                            1.0 - t
                        }
                    })
                    .product()
            })
            .collect()
    }

    /// Distributes `photons` over the output modes, writing into `counts`.
    /// Each splitter draws a binomial, so the result is multinomial with the
    /// path probabilities and conserves the photon number exactly.
    pub fn route_photons_into<R: Rng + ?Sized>(&self, photons: u32, rng: &mut R, counts: &mut [u32]) {
        let modes = self.modes();
        assert_eq!(counts.len(), modes);
        counts.fill(0);
        counts[0] = photons;
        if photons == 0 {
            return;
        }
        // Level k occupies counts[j * 2^(N-k)] for j in 0..2^k; split in place.
        let n = self.stages as usize;
        for k in 0..n {
            let stride = 1 << (n - k);
            for (j, &t) in self.transmittances[k].iter().enumerate() {
                let idx = j * stride;
                let incoming = counts[idx];
                if incoming == 0 {
                    continue;
                }
                let transmitted = split(incoming, t, rng);
                counts[idx] = transmitted;
                counts[idx + stride / 2] = incoming - transmitted;
            }
        }
    }

    pub fn route_photons<R: Rng + ?Sized>(&self, photons: u32, rng: &mut R) -> Vec<u32> {
        let mut counts = vec![0; self.modes()];
        self.route_photons_into(photons, rng, &mut counts);
        counts
    }

    /// Probability that no detector in `mask` clicks, given `photons` enter.
    pub fn no_click_given(&self, mask: u64, photons: u32, paths: &[f64]) -> f64 {
        let (dark, remaining) = self.no_click_factors(mask, paths);
        dark * remaining.powi(photons as i32)
    }

    /// For the detectors in `mask`: product of `(1-d_j)` and the probability
    /// `1 - sum_j eta_j p_j` that a photon is not registered by any of them.
    pub(crate) fn no_click_factors(&self, mask: u64, paths: &[f64]) -> (f64, f64) {
        let mut dark = 1.0;
        let mut captured = 0.0;
        for j in bits(mask) {
            dark *= 1.0 - self.detectors[j].dark_click;
            captured += self.detectors[j].efficiency * paths[j];
        }
        (dark, (1.0 - captured).max(0.0))
    }

    pub(crate) fn check_oracle_size(&self) -> Result<(), CascadeError> {
        if self.modes() > ORACLE_MAX_MODES {
            Err(CascadeError::OracleTooLarge(self.modes()))
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for CascadeSpec {
    /// Per-mode path probabilities and detector parameters.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cascade: {} stages, {} modes", self.stages, self.modes())?;
        for (k, stage) in self.transmittances.iter().enumerate() {
            let ts: Vec<String> = stage.iter().map(|t| format!("{t:.4}")).collect();
            writeln!(f, "  stage {}: t = [{}]", k + 1, ts.join(", "))?;
        }
        writeln!(f, "  mode  path_prob  efficiency  dark_click")?;
        for (j, (p, d)) in self.path_probabilities().iter().zip(&self.detectors).enumerate() {
            writeln!(f, "  {:>4}  {:>9.6}  {:>10.4}  {:>10.3e}", j + 1, p, d.efficiency, d.dark_click)?;
        }
        Ok(())
    }
}

fn split<R: Rng + ?Sized>(photons: u32, t: f64, rng: &mut R) -> u32 {
    if photons < 16 {
        (0..photons).filter(|_| rng.random::<f64>() < t).count() as u32
    } else {
        Binomial::new(photons as u64, t)
            .expect("transmittance validated in (0,1)")
            .sample(rng) as u32
    }
}

/// Indices of the set bits of `mask`, ascending.
pub fn bits(mask: u64) -> impl Iterator<Item = usize> {
    let mut rest = mask;
    std::iter::from_fn(move || {
        if rest == 0 {
            None
        } else {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(j)
        }
    })
}

/// Photon numbers entering the banks of an exact click model.
#[derive(Debug, Clone)]
pub enum BankInput {
    Single(PhotonNumberDistribution),
    /// Identical photon number in both banks each pulse.
    Paired(PhotonNumberDistribution),
    Independent(PhotonNumberDistribution, PhotonNumberDistribution),
}

/// Exact click statistics of one or two cascades fed by Fock-diagonal light.
///
/// Everything derives from the no-click function `f(U)`, the probability that
/// no detector in the set `U` fires. For photon number `k` this is
/// `prod (1-d_j) * (1 - sum_{j in U} eta_j p_j)^k`, averaged over the
/// photon-number distribution.
#[derive(Debug, Clone)]
pub struct ClickModel {
    cascades: Vec<CascadeSpec>,
    paths: Vec<Vec<f64>>,
    input: BankInput,
}

impl ClickModel {
    pub fn single(spec: &CascadeSpec, dist: &PhotonNumberDistribution) -> Result<Self, CascadeError> {
        spec.check_oracle_size()?;
        Ok(Self {
            cascades: vec![spec.clone()],
            paths: vec![spec.path_probabilities()],
            input: BankInput::Single(dist.clone()),
        })
    }

    pub fn two_bank(a: &CascadeSpec, b: &CascadeSpec, input: BankInput) -> Result<Self, CascadeError> {
        a.check_oracle_size()?;
        b.check_oracle_size()?;
        assert!(!matches!(input, BankInput::Single(_)), "two-bank model needs a two-beam input");
        Ok(Self {
            cascades: vec![a.clone(), b.clone()],
            paths: vec![a.path_probabilities(), b.path_probabilities()],
            input,
        })
    }

    pub fn banks(&self) -> usize {
        self.cascades.len()
    }

    pub fn modes(&self, bank: usize) -> usize {
        self.cascades[bank].modes()
    }

    pub fn cascade(&self, bank: usize) -> &CascadeSpec {
        &self.cascades[bank]
    }

    /// Probability that no detector of bank 0 in `mask_a` and no detector of
    /// bank 1 in `mask_b` clicks.
    pub fn no_click(&self, mask_a: u64, mask_b: u64) -> f64 {
        let (dark_a, r_a) = self.cascades[0].no_click_factors(mask_a, &self.paths[0]);
        match &self.input {
            BankInput::Single(dist) => dark_a * dist.generating_function(r_a),
            BankInput::Paired(dist) => {
                let (dark_b, r_b) = self.cascades[1].no_click_factors(mask_b, &self.paths[1]);
                dark_a * dark_b * dist.generating_function(r_a * r_b)
            }
            BankInput::Independent(da, db) => {
                let (dark_b, r_b) = self.cascades[1].no_click_factors(mask_b, &self.paths[1]);
                dark_a * da.generating_function(r_a) * dark_b * db.generating_function(r_b)
            }
        }
    }

    /// Probability that every detector in `mask_a` (bank 0) and `mask_b`
    /// (bank 1) clicks, by inclusion-exclusion over the no-click function.
    pub fn all_clicked(&self, mask_a: u64, mask_b: u64) -> f64 {
        let mut total = 0.0;
        for_each_submask(mask_a, |sub_a| {
            for_each_submask(mask_b, |sub_b| {
                let sign = if (sub_a.count_ones() + sub_b.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * self.no_click(sub_a, sub_b);
            });
        });
        total.max(0.0)
    }

    /// Probability that all of `mask_a`/`mask_b` click while none of the
    /// detectors in `dark_a`/`dark_b` fire.
    pub fn all_clicked_with_dark(&self, mask_a: u64, mask_b: u64, dark_a: u64, dark_b: u64) -> f64 {
        let mut total = 0.0;
        for_each_submask(mask_a, |sub_a| {
            for_each_submask(mask_b, |sub_b| {
                let sign = if (sub_a.count_ones() + sub_b.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * self.no_click(sub_a | dark_a, sub_b | dark_b);
            });
        });
        total.max(0.0)
    }
}

/// Calls `f` on every submask of `mask`, including 0 and `mask` itself.
pub fn for_each_submask<F: FnMut(u64)>(mask: u64, mut f: F) {
    let mut sub = mask;
    loop {
        f(sub);
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
}

/// Dense probability table over every click pattern of a small cascade.
/// Pattern bit `j` (bank 0) or bit `modes_a + j` (bank 1) set means that
/// detector clicked.
#[derive(Debug, Clone)]
pub struct ClickDistribution {
    modes: Vec<usize>,
    patterns: Vec<f64>,
}

impl ClickDistribution {
    pub fn from_model(model: &ClickModel) -> Self {
        let modes: Vec<usize> = (0..model.banks()).map(|b| model.modes(b)).collect();
        let total_bits: usize = modes.iter().sum();
        let size = 1usize << total_bits;
        let low = (1u64 << modes[0]) - 1;
        // f(U) for every set U of silent detectors ...
        let mut table: Vec<f64> = (0..size as u64)
            .map(|u| model.no_click(u & low, u >> modes[0]))
            .collect();
        // ... then the superset Moebius transform gives P(silent set == U).
        for bit in 0..total_bits {
            let b = 1usize << bit;
            for u in 0..size {
                if u & b == 0 {
                    table[u] -= table[u | b];
                }
            }
        }
        let full = size - 1;
        let patterns = (0..size).map(|clicked| table[full ^ clicked].max(0.0)).collect();
        Self { modes, patterns }
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn patterns(&self) -> &[f64] {
        &self.patterns
    }

    /// Probability of exactly this click pattern.
    pub fn probability(&self, pattern: u64) -> f64 {
        self.patterns[pattern as usize]
    }

    /// Sum of pattern probabilities over patterns containing `mask`.
    pub fn containing(&self, mask: u64) -> f64 {
        self.patterns
            .iter()
            .enumerate()
            .filter(|(p, _)| (*p as u64) & mask == mask)
            .map(|(_, v)| v)
            .sum()
    }

    /// Marginal click probability of bit `j`.
    pub fn marginal(&self, j: usize) -> f64 {
        self.containing(1 << j)
    }
}

/// Exact distribution over all `2^(2^N)` click patterns of one cascade.
pub fn exact_click_distribution(
    spec: &CascadeSpec,
    dist: &PhotonNumberDistribution,
) -> Result<ClickDistribution, CascadeError> {
    Ok(ClickDistribution::from_model(&ClickModel::single(spec, dist)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_n2() -> CascadeSpec {
        CascadeSpec::new(
            vec![vec![0.7], vec![0.6, 0.5]],
            vec![Detector::new(1.0, 0.0); 4],
        )
        .unwrap()
    }

    #[test]
    fn balanced_path_probabilities() {
        let one = CascadeSpec::balanced(1, 1.0, 0.0).unwrap();
        assert_eq!(one.path_probabilities(), vec![0.5, 0.5]);
        let three = CascadeSpec::balanced(3, 0.5, 0.0).unwrap();
        assert!(three.path_probabilities().iter().all(|p| (p - 0.125).abs() < 1e-15));
    }

    #[test]
    fn unbalanced_path_products() {
        let p = spec_n2().path_probabilities();
        let expected = [0.7 * 0.6, 0.7 * 0.4, 0.3 * 0.5, 0.3 * 0.5];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.42).abs() < 1e-12 && (p[1] - 0.28).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(matches!(
            CascadeSpec::new(vec![vec![0.5], vec![0.5]], vec![Detector::new(1.0, 0.0); 4]),
            Err(CascadeError::SplitterCount { stage: 2, expected: 2, found: 1 })
        ));
        assert!(matches!(
            CascadeSpec::new(vec![vec![1.0]], vec![Detector::new(1.0, 0.0); 2]),
            Err(CascadeError::InvalidTransmittance { .. })
        ));
        assert!(matches!(
            CascadeSpec::new(vec![vec![0.5]], vec![Detector::new(1.0, 0.0); 3]),
            Err(CascadeError::DetectorCount { .. })
        ));
        assert!(matches!(
            CascadeSpec::balanced(1, 1.5, 0.0),
            Err(CascadeError::InvalidDetector { .. })
        ));
        assert!(matches!(CascadeSpec::balanced(0, 0.5, 0.0), Err(CascadeError::InvalidStages(0))));
        assert!(matches!(CascadeSpec::balanced(7, 0.5, 0.0), Err(CascadeError::InvalidStages(7))));
    }

    #[test]
    fn routing_edge_cases() {
        let spec = CascadeSpec::balanced(3, 0.5, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!(spec.route_photons(0, &mut rng).iter().all(|&c| c == 0));
        let mut hits = [0u32; 8];
        let trials = 80_000;
        for _ in 0..trials {
            let counts = spec.route_photons(1, &mut rng);
            assert_eq!(counts.iter().sum::<u32>(), 1);
            hits[counts.iter().position(|&c| c == 1).unwrap()] += 1;
        }
        // 1/8 each; binomial sd = sqrt(80000 * 1/8 * 7/8) ~ 93.5
        for h in hits {
            assert!((h as f64 - 10_000.0).abs() < 4.0 * 93.6, "{hits:?}");
        }
    }

    #[test]
    fn routing_a_million_photons() {
        let spec = CascadeSpec::balanced(2, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let counts = spec.route_photons(1_000_000, &mut rng);
        assert_eq!(counts.iter().sum::<u32>(), 1_000_000);
        for c in counts {
            assert!((c as f64 - 250_000.0).abs() < 1500.0, "{c}");
        }
    }

    #[test]
    fn vacuum_never_clicks() {
        let spec = CascadeSpec::balanced(2, 0.5, 0.0).unwrap();
        let d = exact_click_distribution(&spec, &PhotonNumberDistribution::vacuum()).unwrap();
        assert!((d.probability(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_photon_clicks_once() {
        let spec = CascadeSpec::balanced(1, 1.0, 0.0).unwrap();
        let d = exact_click_distribution(&spec, &PhotonNumberDistribution::fock(1)).unwrap();
        assert!((d.probability(0b01) - 0.5).abs() < 1e-12);
        assert!((d.probability(0b10) - 0.5).abs() < 1e-12);
        assert!(d.probability(0b11).abs() < 1e-12);
        assert!(d.probability(0).abs() < 1e-12);
    }

    #[test]
    fn poisson_thinning_marginal() {
        let spec = CascadeSpec::balanced(2, 0.5, 0.0).unwrap();
        let dist = PhotonNumberDistribution::poisson(0.4, 40).unwrap();
        let d = exact_click_distribution(&spec, &dist).unwrap();
        let expected = 1.0 - (-0.05f64).exp();
        for j in 0..4 {
            assert!((d.marginal(j) - expected).abs() < 1e-10);
        }
        assert!((expected - 0.04877).abs() < 1e-5);
    }

    #[test]
    fn oracle_refuses_large_cascades() {
        let spec = CascadeSpec::balanced(4, 0.5, 0.0).unwrap();
        assert!(matches!(
            exact_click_distribution(&spec, &PhotonNumberDistribution::vacuum()),
            Err(CascadeError::OracleTooLarge(16))
        ));
    }

    /// Enumerates every multinomial routing outcome and every click outcome
    /// explicitly, independently of the no-click transform.
    fn enumerate_patterns(spec: &CascadeSpec, dist: &PhotonNumberDistribution) -> Vec<f64> {
        let paths = spec.path_probabilities();
        let modes = spec.modes();
        let mut out = vec![0.0; 1 << modes];
        fn rec(
            j: usize,
            left: u32,
            weight: f64,
            counts: &mut Vec<u32>,
            paths: &[f64],
            spec: &CascadeSpec,
            out: &mut [f64],
        ) {
            let modes = paths.len();
            if j == modes - 1 {
                counts[j] = left;
                let w = weight * paths[j].powi(left as i32) / factorial(left);
                for pattern in 0..(1usize << modes) {
                    let mut p = w;
                    for (m, c) in counts.iter().enumerate() {
                        let silent = spec.detectors()[m].no_click_probability(*c);
                        p *= if pattern >> m & 1 == 1 { 1.0 - silent } else { silent };
                    }
                    out[pattern] += p;
                }
                return;
            }
            for c in 0..=left {
                counts[j] = c;
                let w = weight * paths[j].powi(c as i32) / factorial(c);
                rec(j + 1, left - c, w, counts, paths, spec, out);
            }
        }
        for (k, pk) in dist.probs().iter().enumerate() {
            let mut counts = vec![0; modes];
            rec(0, k as u32, pk * factorial(k as u32), &mut counts, &paths, spec, &mut out);
        }
        out
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    #[test]
    fn transform_matches_explicit_enumeration() {
        let spec = CascadeSpec::new(
            vec![vec![0.7], vec![0.6, 0.35]],
            vec![
                Detector::new(0.9, 0.01),
                Detector::new(0.4, 0.0),
                Detector::new(0.55, 0.02),
                Detector::new(0.2, 0.0),
            ],
        )
        .unwrap();
        // thermal-like weights truncated at 18 photons and renormalized
        let raw: Vec<f64> = (0..=18).map(|k| 0.8f64.powi(k) / 1.8f64.powi(k + 1)).collect();
        let total: f64 = raw.iter().sum();
        let dist = PhotonNumberDistribution::from_probs(raw.iter().map(|p| p / total).collect()).unwrap();
        let exact = exact_click_distribution(&spec, &dist).unwrap();
        let brute = enumerate_patterns(&spec, &dist);
        for (a, b) in exact.patterns().iter().zip(&brute) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!((exact.patterns().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pattern_sums_match_inclusion_exclusion() {
        let spec = CascadeSpec::balanced(3, 0.5, 0.001).unwrap();
        let dist = PhotonNumberDistribution::bose_einstein(0.6, 80).unwrap();
        let model = ClickModel::single(&spec, &dist).unwrap();
        let exact = ClickDistribution::from_model(&model);
        for mask in [0b1u64, 0b11, 0b1010_0101, 0b111, 0xff] {
            assert!((exact.containing(mask) - model.all_clicked(mask, 0)).abs() < 1e-10);
        }
    }

    #[test]
    fn two_bank_distribution_is_normalized() {
        let a = CascadeSpec::balanced(2, 0.7, 0.0).unwrap();
        let b = CascadeSpec::balanced(3, 0.4, 0.001).unwrap();
        let dist = PhotonNumberDistribution::poisson(0.5, 40).unwrap();
        let model = ClickModel::two_bank(&a, &b, BankInput::Paired(dist)).unwrap();
        let d = ClickDistribution::from_model(&model);
        assert_eq!(d.patterns().len(), 1 << 12);
        assert!((d.patterns().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // bank-0 bit 1 and bank-1 bit 2
        let mask = (1u64 << 1) | (1u64 << (4 + 2));
        assert!((d.containing(mask) - model.all_clicked(1 << 1, 1 << 2)).abs() < 1e-10);
    }

    #[test]
    fn display_lists_every_mode() {
        let text = spec_n2().to_string();
        assert!(text.contains("0.420000"));
        assert_eq!(text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 4);
    }

    fn arb_spec(max_stages: u32) -> impl Strategy<Value = CascadeSpec> {
        (1..=max_stages).prop_flat_map(|n| {
            let splitters = (1u32 << n) - 1;
            let modes = 1usize << n;
            (
                prop::collection::vec(0.05f64..0.95, splitters as usize),
                prop::collection::vec((0.05f64..1.0, 0.0f64..0.05), modes),
            )
                .prop_map(move |(ts, ds)| {
                    let mut it = ts.into_iter();
                    let transmittances = (0..n).map(|k| (0..1 << k).map(|_| it.next().unwrap()).collect()).collect();
                    let detectors = ds.into_iter().map(|(e, d)| Detector::new(e, d)).collect();
                    CascadeSpec::new(transmittances, detectors).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn paths_sum_to_one(spec in arb_spec(6)) {
            let p = spec.path_probabilities();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn routing_conserves_photons(spec in arb_spec(5), k in 0u32..200, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let counts = spec.route_photons(k, &mut rng);
            prop_assert_eq!(counts.iter().sum::<u32>(), k);
        }

        #[test]
        fn poisson_marginals_thin(spec in arb_spec(3), mu in 0.05f64..3.0) {
            let dist = PhotonNumberDistribution::poisson(mu, 60).unwrap();
            let exact = exact_click_distribution(&spec, &dist).unwrap();
            let paths = spec.path_probabilities();
            for (j, d) in spec.detectors().iter().enumerate() {
                let expected = 1.0 - (1.0 - d.dark_click) * (-d.efficiency * paths[j] * mu).exp();
                prop_assert!((exact.marginal(j) - expected).abs() < 1e-10);
            }
        }

        /// Folding detector loss into an extra splitter towards a discarded
        /// mode leaves the click statistics unchanged.
        #[test]
        fn loss_is_a_virtual_splitter(spec in arb_spec(2), mu in 0.05f64..2.0) {
            let dist = PhotonNumberDistribution::poisson(mu, 60).unwrap();
            let direct = exact_click_distribution(&spec, &dist).unwrap();
            // N+1 stages: each original mode j feeds splitter j of the last
            // stage with t = eta_j; the reflected mode gets a blind detector.
            let mut transmittances = spec.transmittances().to_vec();
            let etas: Vec<f64> = spec.detectors().iter().map(|d| d.efficiency.clamp(1e-9, 1.0 - 1e-9)).collect();
            transmittances.push(etas.clone());
            let mut detectors = Vec::new();
            for d in spec.detectors() {
                detectors.push(Detector::new(1.0, d.dark_click));
                detectors.push(Detector::new(0.0, 0.0));
            }
            let folded_spec = CascadeSpec::new(transmittances, detectors).unwrap();
            let folded = exact_click_distribution(&folded_spec, &dist).unwrap();
            let modes = spec.modes();
            for pattern in 0..(1u64 << modes) {
                // original mode j sits at folded bit 2j
                let mut spread = 0u64;
                for j in bits(pattern) {
                    spread |= 1 << (2 * j);
                }
                let reference = direct.probability(pattern);
                let clamped_shift = spec.detectors().iter().any(|d| d.efficiency >= 1.0 - 1e-9);
                let tol = if clamped_shift { 1e-8 } else { 1e-10 };
                prop_assert!((folded.probability(spread) - reference).abs() < tol);
            }
        }
    }
}
