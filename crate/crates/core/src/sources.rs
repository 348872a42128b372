//! Photon-number statistics of pulsed light sources.
//!
//! Every source is reduced to a truncated photon-number distribution `p_k`.
//! Normally ordered moments `<a^†n a^n>` of a Fock-diagonal state are the
//! factorial moments `sum_k p_k k(k-1)...(k-n+1)`, so all closed-form
//! correlation values used as references downstream are computed from the
//! truncated distribution directly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest truncated tail mass accepted when building a distribution.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Upper bound for the automatically selected truncation point.
pub const MAX_AUTO_KMAX: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("mean photon number must be positive and finite, got {0}")]
    InvalidMean(f64),
    #[error("thermal source needs at least one mode")]
    InvalidModes,
    #[error("k_max must be at least 1")]
    ZeroKmax,
    #[error("k_max too small: truncated tail mass {tail:.3e} at k_max = {k_max} exceeds {TAIL_TOLERANCE:e}")]
    KmaxTooSmall { k_max: usize, tail: f64 },
    #[error("invalid photon-number distribution: {0}")]
    InvalidProbabilities(String),
    #[error("correlation order must be at least 1")]
    InvalidOrder,
    #[error("cross-correlations are only defined for two-mode sources")]
    NotTwoMode,
}

/// Falling factorial `k (k-1) ... (k-n+1)`; zero when `n > k`.
pub fn falling_factorial(k: usize, n: usize) -> f64 {
    if n > k {
        return 0.0;
    }
    (0..n).fold(1.0, |acc, i| acc * (k - i) as f64)
}

/// Truncated probability vector over photon number `k = 0..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
}

impl PhotonNumberDistribution {
    /// Wraps an explicit probability vector. Entries must be non-negative and
    /// sum to one within `1e-9`; the vector is renormalized exactly.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self, SourceError> {
        if probs.is_empty() {
            return Err(SourceError::InvalidProbabilities("empty vector".into()));
        }
        if let Some(k) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(SourceError::InvalidProbabilities(format!(
                "p_{k} = {} is not a probability",
                probs[k]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SourceError::InvalidProbabilities(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self::renormalized(probs))
    }

    fn renormalized(mut probs: Vec<f64>) -> Self {
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self { probs }
    }

    pub fn vacuum() -> Self {
        Self { probs: vec![1.0, 0.0] }
    }

    /// Deterministic `n`-photon state.
    pub fn fock(n: usize) -> Self {
        let mut probs = vec![0.0; n.max(1) + 1];
        probs[n] = 1.0;
        Self { probs }
    }

    /// Poisson statistics of a coherent state.
    pub fn poisson(mean: f64, k_max: usize) -> Result<Self, SourceError> {
        check_mean(mean)?;
        let raw = poisson_terms(mean, k_max);
        Self::from_truncated(raw, k_max, None)
    }

    /// Bose-Einstein statistics of a single thermal mode.
    pub fn bose_einstein(mean: f64, k_max: usize) -> Result<Self, SourceError> {
        check_mean(mean)?;
        let raw = bose_einstein_terms(mean, k_max);
        let tail = (mean / (1.0 + mean)).powi(k_max as i32 + 1);
        Self::from_truncated(raw, k_max, Some(tail))
    }

    /// `modes` equally populated thermal modes: the `modes`-fold convolution
    /// of Bose-Einstein distributions with mean `mean / modes` each.
    pub fn multimode_thermal(mean: f64, modes: u32, k_max: usize) -> Result<Self, SourceError> {
        check_mean(mean)?;
        if modes == 0 {
            return Err(SourceError::InvalidModes);
        }
        if modes == 1 {
            return Self::bose_einstein(mean, k_max);
        }
        let raw = multimode_thermal_terms(mean, modes, k_max);
        Self::from_truncated(raw, k_max, None)
    }

    fn from_truncated(raw: Vec<f64>, k_max: usize, tail: Option<f64>) -> Result<Self, SourceError> {
        if k_max == 0 {
            return Err(SourceError::ZeroKmax);
        }
        let tail = tail.unwrap_or_else(|| (1.0 - raw.iter().sum::<f64>()).max(0.0));
        if tail >= TAIL_TOLERANCE {
            return Err(SourceError::KmaxTooSmall { k_max, tail });
        }
        Ok(Self::renormalized(raw))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.factorial_moment(1)
    }

    /// Normally ordered moment `<a^†n a^n> = sum_k p_k k!/(k-n)!`.
    pub fn factorial_moment(&self, n: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| p * falling_factorial(k, n))
            .sum()
    }

    /// Probability generating function `E[z^k]`.
    pub fn generating_function(&self, z: f64) -> f64 {
        // Horner from the top keeps small-probability tails accurate.
        self.probs.iter().rev().fold(0.0, |acc, p| acc * z + p)
    }

    /// Reweights `p_k` by `weight(k)` and renormalizes, e.g. conditioning on
    /// a herald click.
    pub fn conditioned<F: Fn(usize) -> f64>(&self, weight: F) -> Option<Self> {
        let probs: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| p * weight(k))
            .collect();
        let total: f64 = probs.iter().sum();
        (total > 0.0).then(|| Self::renormalized(probs))
    }
}

fn check_mean(mean: f64) -> Result<(), SourceError> {
    if mean.is_finite() && mean > 0.0 {
        Ok(())
    } else {
        Err(SourceError::InvalidMean(mean))
    }
}

fn poisson_terms(mean: f64, k_max: usize) -> Vec<f64> {
    let log_mean = mean.ln();
    let mut log_fact = 0.0;
    (0..=k_max)
        .map(|k| {
            if k > 0 {
                log_fact += (k as f64).ln();
            }
            (k as f64 * log_mean - mean - log_fact).exp()
        })
        .collect()
}

fn bose_einstein_terms(mean: f64, k_max: usize) -> Vec<f64> {
    let ratio = mean / (1.0 + mean);
    let p0 = 1.0 / (1.0 + mean);
    (0..=k_max).map(|k| p0 * ratio.powi(k as i32)).collect()
}

fn multimode_thermal_terms(mean: f64, modes: u32, k_max: usize) -> Vec<f64> {
    let single = bose_einstein_terms(mean / modes as f64, k_max);
    let mut acc = single.clone();
    for _ in 1..modes {
        acc = (0..=k_max)
            .map(|k| (0..=k).map(|i| acc[i] * single[k - i]).sum())
            .collect();
    }
    acc
}

/// Marginal photon-number family of a two-mode source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginal {
    Poissonian,
    Thermal,
}

/// A pulsed light source described by its photon-number statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    Coherent { mean: f64 },
    Thermal { mean: f64, modes: u32 },
    /// Twin beams with identical photon numbers in both arms every pulse.
    TwoModePdc { marginal_mean: f64, marginal: Marginal },
}

impl SourceModel {
    pub fn validate(&self) -> Result<(), SourceError> {
        match *self {
            SourceModel::Coherent { mean } => check_mean(mean),
            SourceModel::Thermal { mean, modes } => {
                check_mean(mean)?;
                if modes == 0 {
                    return Err(SourceError::InvalidModes);
                }
                Ok(())
            }
            SourceModel::TwoModePdc { marginal_mean, .. } => check_mean(marginal_mean),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SourceModel::Coherent { mean } | SourceModel::Thermal { mean, .. } => mean,
            SourceModel::TwoModePdc { marginal_mean, .. } => marginal_mean,
        }
    }

    pub fn is_two_mode(&self) -> bool {
        matches!(self, SourceModel::TwoModePdc { .. })
    }

    /// Marginal photon-number distribution truncated at `k_max`.
    pub fn pmf(&self, k_max: usize) -> Result<PhotonNumberDistribution, SourceError> {
        self.validate()?;
        if k_max == 0 {
            return Err(SourceError::ZeroKmax);
        }
        match *self {
            SourceModel::Coherent { mean } => PhotonNumberDistribution::poisson(mean, k_max),
            SourceModel::Thermal { mean, modes } => {
                PhotonNumberDistribution::multimode_thermal(mean, modes, k_max)
            }
            SourceModel::TwoModePdc { marginal_mean, marginal: Marginal::Poissonian } => {
                PhotonNumberDistribution::poisson(marginal_mean, k_max)
            }
            SourceModel::TwoModePdc { marginal_mean, marginal: Marginal::Thermal } => {
                PhotonNumberDistribution::bose_einstein(marginal_mean, k_max)
            }
        }
    }

    /// Smallest truncation with tail mass below [`TAIL_TOLERANCE`], capped at
    /// [`MAX_AUTO_KMAX`].
    pub fn auto_k_max(&self) -> Result<usize, SourceError> {
        self.validate()?;
        let raw = match *self {
            SourceModel::Coherent { mean } => poisson_terms(mean, MAX_AUTO_KMAX),
            SourceModel::Thermal { mean, modes } => {
                multimode_thermal_terms(mean, modes, MAX_AUTO_KMAX)
            }
            SourceModel::TwoModePdc { marginal_mean, marginal } => match marginal {
                Marginal::Poissonian => poisson_terms(marginal_mean, MAX_AUTO_KMAX),
                Marginal::Thermal => bose_einstein_terms(marginal_mean, MAX_AUTO_KMAX),
            },
        };
        let mut cumulative = 0.0;
        for (k, p) in raw.iter().enumerate() {
            cumulative += p;
            if k >= 1 && 1.0 - cumulative < TAIL_TOLERANCE {
                // Confirm with the exact constructor, which may use a closed-form tail.
                if self.pmf(k).is_ok() {
                    return Ok(k);
                }
            }
        }
        Err(SourceError::KmaxTooSmall {
            k_max: MAX_AUTO_KMAX,
            tail: (1.0 - cumulative).max(0.0),
        })
    }

    /// Marginal distribution at the automatically selected truncation.
    pub fn distribution(&self) -> Result<PhotonNumberDistribution, SourceError> {
        self.pmf(self.auto_k_max()?)
    }

    /// Closed-form factorial moment `<a^†r a^r>` of the (marginal)
    /// photon-number distribution, without truncation.
    pub fn analytic_factorial_moment(&self, r: usize) -> f64 {
        match *self {
            SourceModel::Coherent { mean } => mean.powi(r as i32),
            SourceModel::Thermal { mean, modes } => {
                let m = modes as f64;
                (0..r).map(|i| (m + i as f64) * mean / m).product()
            }
            SourceModel::TwoModePdc { marginal_mean, marginal: Marginal::Poissonian } => {
                marginal_mean.powi(r as i32)
            }
            SourceModel::TwoModePdc { marginal_mean, marginal: Marginal::Thermal } => {
                (1..=r).map(|i| i as f64 * marginal_mean).product()
            }
        }
    }

    /// `g^(n) = <a^†n a^n> / <a^† a>^n` of the marginal.
    pub fn analytic_g(&self, n: usize) -> Result<f64, SourceError> {
        self.validate()?;
        if n == 0 {
            return Err(SourceError::InvalidOrder);
        }
        Ok(self.analytic_factorial_moment(n) / self.mean().powi(n as i32))
    }

    /// Two-mode `g^(n,m)` using perfect photon-number correlation. The
    /// product of falling factorials is expanded as
    /// `k^(n) k^(m) = sum_j C(n,j) C(m,j) j! k^(n+m-j)`.
    pub fn analytic_cross_g(&self, n: usize, m: usize) -> Result<f64, SourceError> {
        self.validate()?;
        if !self.is_two_mode() {
            return Err(SourceError::NotTwoMode);
        }
        if n + m == 0 {
            return Err(SourceError::InvalidOrder);
        }
        let choose = |a: usize, b: usize| -> f64 {
            (0..b).map(|i| (a - i) as f64 / (i + 1) as f64).product()
        };
        let numerator: f64 = (0..=n.min(m))
            .map(|j| {
                choose(n, j) * choose(m, j) * (1..=j).map(|i| i as f64).product::<f64>()
                    * self.analytic_factorial_moment(n + m - j)
            })
            .sum();
        Ok(numerator / self.mean().powi((n + m) as i32))
    }

    /// Nonclassicality witness `g^(1,2) / sqrt(g^(2,2) g^(0,2))`.
    pub fn analytic_gamma(&self) -> Result<f64, SourceError> {
        let g12 = self.analytic_cross_g(1, 2)?;
        let g22 = self.analytic_cross_g(2, 2)?;
        let g02 = self.analytic_cross_g(0, 2)?;
        Ok(g12 / (g22 * g02).sqrt())
    }

    pub fn sampler(&self) -> Result<PulseSampler, SourceError> {
        let dist = self.distribution()?;
        Ok(if self.is_two_mode() {
            PulseSampler::paired(&dist)
        } else {
            PulseSampler::single(&dist)
        })
    }

    /// Draws one pulse. Builds the sampling table on every call; use
    /// [`SourceModel::sampler`] for repeated draws.
    pub fn sample_pulse<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PulsePhotons, SourceError> {
        Ok(self.sampler()?.sample(rng))
    }
}

/// Photon numbers delivered to the detection banks in one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulsePhotons {
    Single(u32),
    Pair(u32, u32),
}

/// Inverse-CDF sampler over a truncated distribution.
#[derive(Debug, Clone)]
pub struct PhotonSampler {
    cdf: Vec<f64>,
}

impl PhotonSampler {
    pub fn new(dist: &PhotonNumberDistribution) -> Self {
        let mut acc = 0.0;
        let cdf = dist
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        // Linear scan: low-intensity sources almost always stop at k = 0.
        self.cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cdf.len() - 1) as u32
    }
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Single(PhotonSampler),
    Paired(PhotonSampler),
    Independent(PhotonSampler, PhotonSampler),
}

/// Per-pulse photon-number generator feeding one or two detection banks.
#[derive(Debug, Clone)]
pub struct PulseSampler {
    kind: SamplerKind,
}

impl PulseSampler {
    pub fn single(dist: &PhotonNumberDistribution) -> Self {
        Self { kind: SamplerKind::Single(PhotonSampler::new(dist)) }
    }

    /// Both banks receive the same photon number.
    pub fn paired(dist: &PhotonNumberDistribution) -> Self {
        Self { kind: SamplerKind::Paired(PhotonSampler::new(dist)) }
    }

    /// Statistically independent beams on the two banks.
    pub fn independent(a: &PhotonNumberDistribution, b: &PhotonNumberDistribution) -> Self {
        Self {
            kind: SamplerKind::Independent(PhotonSampler::new(a), PhotonSampler::new(b)),
        }
    }

    pub fn banks(&self) -> usize {
        match self.kind {
            SamplerKind::Single(_) => 1,
            _ => 2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PulsePhotons {
        match &self.kind {
            SamplerKind::Single(s) => PulsePhotons::Single(s.sample(rng)),
            SamplerKind::Paired(s) => {
                let k = s.sample(rng);
                PulsePhotons::Pair(k, k)
            }
            SamplerKind::Independent(a, b) => PulsePhotons::Pair(a.sample(rng), b.sample(rng)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_poisson(mean: f64, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        (-mean).exp() * mean.powi(k as i32) / fact
    }

    fn brute_geometric(mean: f64, k: usize) -> f64 {
        // sum over the geometric series definition, no closed-form tail
        let mut p = 1.0 / (1.0 + mean);
        for _ in 0..k {
            p *= mean / (1.0 + mean);
        }
        p
    }

    #[test]
    fn single_mode_thermal_is_geometric() {
        let d = SourceModel::Thermal { mean: 1.0, modes: 1 }.pmf(40).unwrap();
        assert!((d.probs()[0] - 0.5).abs() < 1e-12);
        assert!((d.probs()[1] - 0.25).abs() < 1e-12);
        for k in 0..=40 {
            assert!((d.probs()[k] - 0.5f64.powi(k as i32 + 1)).abs() < 1e-12);
            assert!((d.probs()[k] - brute_geometric(1.0, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_mode_thermal_matches_double_sum() {
        let d = SourceModel::Thermal { mean: 1.0, modes: 2 }.pmf(60).unwrap();
        assert!((d.probs()[0] - 4.0 / 9.0).abs() < 1e-12);
        for k in 0..=20 {
            let brute: f64 = (0..=k)
                .map(|i| brute_geometric(0.5, i) * brute_geometric(0.5, k - i))
                .sum();
            assert!((d.probs()[k] - brute).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn multimode_thermal_matches_negative_binomial() {
        let (mean, modes) = (2.0, 4u32);
        let d = PhotonNumberDistribution::multimode_thermal(mean, modes, 120).unwrap();
        let x = mean / modes as f64;
        for k in 0..30usize {
            let binom: f64 = (1..=k).map(|i| (i + modes as usize - 1) as f64 / i as f64).product();
            let nb = binom * x.powi(k as i32) / (1.0 + x).powi(k as i32 + modes as i32);
            assert!((d.probs()[k] - nb).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn tiny_coherent_mean_is_vacuum_dominated() {
        let d = SourceModel::Coherent { mean: 1e-9 }.distribution().unwrap();
        assert!(d.probs()[0] > 1.0 - 1e-8);
        let sampler = PhotonSampler::new(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100_000).all(|_| sampler.sample(&mut rng) == 0));
    }

    #[test]
    fn zero_mean_is_rejected() {
        assert_eq!(
            SourceModel::Coherent { mean: 0.0 }.validate(),
            Err(SourceError::InvalidMean(0.0))
        );
        assert!(SourceModel::Thermal { mean: 1.0, modes: 0 }.validate().is_err());
    }

    #[test]
    fn short_truncation_is_refused() {
        let err = SourceModel::Coherent { mean: 5.0 }.pmf(10).unwrap_err();
        assert!(matches!(err, SourceError::KmaxTooSmall { k_max: 10, .. }));
        assert!(err.to_string().contains("k_max too small"));
        assert!(SourceModel::Thermal { mean: 1.0, modes: 1 }.pmf(20).is_err());
    }

    #[test]
    fn auto_truncation_is_minimal() {
        for source in [
            SourceModel::Coherent { mean: 2.885 },
            SourceModel::Thermal { mean: 0.32, modes: 1 },
            SourceModel::Thermal { mean: 3.0, modes: 3 },
        ] {
            let k = source.auto_k_max().unwrap();
            assert!(source.pmf(k).is_ok());
            assert!(source.pmf(k - 1).is_err());
        }
        assert!(SourceModel::Thermal { mean: 100.0, modes: 1 }.auto_k_max().is_err());
    }

    #[test]
    fn factorial_moments_match_brute_force() {
        let poisson = PhotonNumberDistribution::poisson(1.0, 60).unwrap();
        let brute: f64 = (0..=60).map(|k| brute_poisson(1.0, k) * (k * k.saturating_sub(1)) as f64).sum();
        assert!((poisson.factorial_moment(2) - 1.0).abs() < 1e-12);
        assert!((poisson.factorial_moment(2) - brute).abs() < 1e-12);

        let be = PhotonNumberDistribution::bose_einstein(1.0, 80).unwrap();
        let brute: f64 = (0..=80)
            .map(|k| brute_geometric(1.0, k) * falling_factorial(k, 3))
            .sum();
        assert!((be.factorial_moment(3) - 6.0).abs() < 1e-9);
        assert!((be.factorial_moment(3) - brute).abs() < 1e-9);
        assert!((be.factorial_moment(1) - be.mean()).abs() < 1e-15);
    }

    #[test]
    fn analytic_g_reference_values() {
        let coherent = SourceModel::Coherent { mean: 1.3 };
        assert!((coherent.analytic_g(4).unwrap() - 1.0).abs() < 1e-9);
        let thermal = SourceModel::Thermal { mean: 0.7, modes: 1 };
        assert!((thermal.analytic_g(3).unwrap() - 6.0).abs() < 1e-6);
        let two_modes = SourceModel::Thermal { mean: 0.7, modes: 2 };
        assert!((two_modes.analytic_g(2).unwrap() - 1.5).abs() < 1e-9);
        assert_eq!(coherent.analytic_g(1).unwrap(), 1.0);
        assert_eq!(thermal.analytic_g(0), Err(SourceError::InvalidOrder));
    }

    #[test]
    fn coherent_and_thermal_factorial_law() {
        let coherent = SourceModel::Coherent { mean: 2.0 };
        let thermal = SourceModel::Thermal { mean: 0.5, modes: 1 };
        let mut fact = 1.0;
        for n in 1..=8 {
            fact *= n as f64;
            assert!((coherent.analytic_g(n).unwrap() - 1.0).abs() < 1e-9);
            if n <= 6 {
                assert!((thermal.analytic_g(n).unwrap() - fact).abs() < 1e-6 * fact);
            }
        }
    }

    fn brute_cross(mean: f64, n: usize, m: usize) -> f64 {
        let num: f64 = (0..=60)
            .map(|k| brute_poisson(mean, k) * falling_factorial(k, n) * falling_factorial(k, m))
            .sum();
        num / mean.powi((n + m) as i32)
    }

    #[test]
    fn pdc_cross_correlations() {
        let pdc = SourceModel::TwoModePdc { marginal_mean: 0.5, marginal: Marginal::Poissonian };
        assert!((pdc.analytic_cross_g(0, 2).unwrap() - 1.0).abs() < 1e-10);
        assert!((pdc.analytic_cross_g(1, 1).unwrap() - 3.0).abs() < 1e-10);
        assert!((pdc.analytic_cross_g(2, 2).unwrap() - 17.0).abs() < 1e-10);
        for (n, m) in [(0, 2), (1, 1), (1, 2), (2, 2), (3, 1)] {
            let v = pdc.analytic_cross_g(n, m).unwrap();
            assert!((v - brute_cross(0.5, n, m)).abs() < 1e-9 * v);
        }
        // closed forms: 1 + 2/mu and 1 + 4/mu + 2/mu^2
        assert!((pdc.analytic_cross_g(1, 2).unwrap() - 5.0).abs() < 1e-10);
        assert!((pdc.analytic_gamma().unwrap() - 5.0 / 17f64.sqrt()).abs() < 1e-10);
        assert_eq!(
            SourceModel::Coherent { mean: 1.0 }.analytic_cross_g(1, 1),
            Err(SourceError::NotTwoMode)
        );
    }

    #[test]
    fn pdc_gamma_at_low_intensity() {
        let mu = 0.2;
        let pdc = SourceModel::TwoModePdc { marginal_mean: mu, marginal: Marginal::Poissonian };
        let gamma = pdc.analytic_gamma().unwrap();
        let brute = brute_cross(mu, 1, 2) / (brute_cross(mu, 2, 2) * brute_cross(mu, 0, 2)).sqrt();
        assert!(gamma > 1.0 && gamma < 1.415);
        assert!((gamma - brute).abs() < 1e-9);
        let closed = (1.0 + 2.0 / mu) / (1.0 + 4.0 / mu + 2.0 / (mu * mu)).sqrt();
        assert!((gamma - closed).abs() < 1e-9);
    }

    #[test]
    fn pdc_gamma_tends_to_one_at_high_intensity() {
        let pdc = SourceModel::TwoModePdc { marginal_mean: 100.0, marginal: Marginal::Poissonian };
        let gamma = pdc.analytic_gamma().unwrap();
        assert!(gamma > 1.0 && gamma < 1.0001);
    }

    #[test]
    fn thermal_sample_mean() {
        let sampler = SourceModel::Thermal { mean: 1.0, modes: 1 }.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000;
        let total: u64 = (0..draws)
            .map(|_| match sampler.sample(&mut rng) {
                PulsePhotons::Single(k) => k as u64,
                PulsePhotons::Pair(..) => unreachable!(),
            })
            .sum();
        let mean = total as f64 / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "sample mean {mean}");
    }

    #[test]
    fn pdc_pulses_are_perfectly_correlated() {
        let pdc = SourceModel::TwoModePdc { marginal_mean: 0.3, marginal: Marginal::Poissonian };
        let sampler = pdc.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            match sampler.sample(&mut rng) {
                PulsePhotons::Pair(a, b) => assert_eq!(a, b),
                PulsePhotons::Single(_) => panic!("two-mode source emitted a single beam"),
            }
        }
        assert!(matches!(pdc.sample_pulse(&mut rng).unwrap(), PulsePhotons::Pair(a, b) if a == b));
    }

    proptest! {
        #[test]
        fn distributions_are_normalized(mean in 0.01f64..5.0, modes in 1u32..6) {
            for source in [
                SourceModel::Coherent { mean },
                SourceModel::Thermal { mean, modes },
                SourceModel::TwoModePdc { marginal_mean: mean, marginal: Marginal::Thermal },
            ] {
                let d = source.distribution().unwrap();
                let total: f64 = d.probs().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
                prop_assert!((source.analytic_g(1).unwrap() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn thermal_g_decreases_with_mode_count(mean in 0.05f64..3.0, n in 2usize..5) {
            let mut previous = f64::INFINITY;
            for modes in 1..=12u32 {
                let g = SourceModel::Thermal { mean, modes }.analytic_g(n).unwrap();
                prop_assert!(g < previous);
                prop_assert!(g > 1.0);
                previous = g;
            }
            let many = SourceModel::Thermal { mean, modes: 200 }.analytic_g(n).unwrap();
            prop_assert!(many - 1.0 < 0.05 * (n * n) as f64);
        }

        #[test]
        fn pdc_gamma_violates_classical_bound(mu in 0.01f64..100.0, step in 1.01f64..2.0) {
            let gamma = |m: f64| SourceModel::TwoModePdc { marginal_mean: m, marginal: Marginal::Poissonian }
                .analytic_gamma()
                .unwrap();
            let here = gamma(mu);
            prop_assert!(here > 1.0);
            prop_assert!(here < 2f64.sqrt());
            if mu * step <= 100.0 {
                prop_assert!(gamma(mu * step) < here);
            }
        }

        #[test]
        fn moments_match_direct_sum(mean in 0.05f64..4.0, n in 1usize..6) {
            let d = SourceModel::Thermal { mean, modes: 1 }.pmf(200).unwrap();
            let direct: f64 = d.probs().iter().enumerate()
                .map(|(k, p)| p * (0..n).map(|i| k as f64 - i as f64).product::<f64>().max(0.0))
                .sum();
            let closed = (1..=n).map(|i| i as f64).product::<f64>() * mean.powi(n as i32);
            prop_assert!((d.factorial_moment(n) - direct).abs() < 1e-9 * direct.max(1.0));
            prop_assert!((d.factorial_moment(n) - closed).abs() < 1e-6 * closed.max(1.0));
        }
    }
}
