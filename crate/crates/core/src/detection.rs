//! Click detection on the time-multiplexed bins and the per-pulse pipeline.
//!
//! The `2^N` output bins of a bank are read by `B` physical detectors, each
//! seeing `T = 2^N / B` time slots. Bin `j` belongs to detector `j mod B`,
//! slot `j div B`; slot `s` arrives `s * bin_spacing` after the trigger.
//! A detector that fired stays blind for `dead_time` (non-paralyzable).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cascade::{bits, CascadeSpec};
use crate::sources::{PulsePhotons, PulseSampler};

/// Pulses simulated per independent random stream.
pub const CHUNK_PULSES: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("layout: {0}")]
    InvalidLayout(String),
    #[error("pulse count must be at least 1")]
    NoPulses,
    #[error("source feeds {source_banks} bank(s) but {cascades} cascade(s) and a {layout}-bank layout were given")]
    BankMismatch { source_banks: usize, cascades: usize, layout: usize },
    #[error("cascade has {cascade} modes but layout expects {layout}")]
    ModeMismatch { cascade: usize, layout: usize },
}

/// Timing structure of the time-multiplexing detector.
#[derive(Debug, Clone, PartialEq)]
pub struct TmdLayout {
    pub banks: usize,
    pub detectors_per_bank: usize,
    pub bins_per_detector: usize,
    pub bin_spacing_ns: f64,
    pub dead_time_ns: f64,
    /// Offset of bank 1 relative to bank 0.
    pub bank_delay_ns: f64,
    pub tdc_tick_ps: f64,
    /// Half-width of the acceptance window around each bin center.
    pub trigger_window_ns: f64,
    pub pulse_period_ns: f64,
}

/// Defaults that are artifact choices: 50 ns dead time, 2 ns trigger window,
/// 20 kHz repetition. Tick (81 ps), bank delay (400 ns) and the
/// spacing-to-dead-time ratio of 2 follow the experiment.
pub const DEFAULT_DEAD_TIME_NS: f64 = 50.0;
pub const DEFAULT_BANK_DELAY_NS: f64 = 400.0;
pub const DEFAULT_TDC_TICK_PS: f64 = 81.0;
pub const DEFAULT_TRIGGER_WINDOW_NS: f64 = 2.0;
pub const DEFAULT_PULSE_PERIOD_NS: f64 = 50_000.0;
pub const DEFAULT_DETECTORS: usize = 2;

impl TmdLayout {
    /// Default layout for a cascade of `stages` stages read by `detectors`
    /// physical detectors per bank.
    pub fn with_defaults(banks: usize, stages: u32, detectors: usize) -> Result<Self, DetectionError> {
        let modes = 1usize << stages;
        if detectors == 0 || modes % detectors != 0 {
            return Err(DetectionError::InvalidLayout(format!(
                "{detectors} detectors cannot share {modes} bins evenly"
            )));
        }
        let layout = Self {
            banks,
            detectors_per_bank: detectors,
            bins_per_detector: modes / detectors,
            bin_spacing_ns: 2.0 * DEFAULT_DEAD_TIME_NS,
            dead_time_ns: DEFAULT_DEAD_TIME_NS,
            bank_delay_ns: DEFAULT_BANK_DELAY_NS,
            tdc_tick_ps: DEFAULT_TDC_TICK_PS,
            trigger_window_ns: DEFAULT_TRIGGER_WINDOW_NS,
            pulse_period_ns: DEFAULT_PULSE_PERIOD_NS,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn modes(&self) -> usize {
        self.detectors_per_bank * self.bins_per_detector
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        let fail = |msg: String| Err(DetectionError::InvalidLayout(msg));
        if !(self.banks == 1 || self.banks == 2) {
            return fail(format!("banks must be 1 or 2, got {}", self.banks));
        }
        let modes = self.modes();
        if modes < 2 || !modes.is_power_of_two() || modes > 64 {
            return fail(format!("detectors x slots = {modes} is not a supported 2^N"));
        }
        for (name, v) in [
            ("bin_spacing_ns", self.bin_spacing_ns),
            ("dead_time_ns", self.dead_time_ns),
            ("tdc_tick_ps", self.tdc_tick_ps),
            ("pulse_period_ns", self.pulse_period_ns),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.trigger_window_ns >= 0.0 && self.trigger_window_ns < self.bin_spacing_ns / 2.0) {
            return fail(format!(
                "trigger_window_ns = {} must lie in [0, bin_spacing_ns / 2)",
                self.trigger_window_ns
            ));
        }
        if !(self.bank_delay_ns.is_finite() && self.bank_delay_ns >= 0.0) {
            return fail(format!("bank_delay_ns must be non-negative, got {}", self.bank_delay_ns));
        }
        let last = (self.bins_per_detector - 1) as f64 * self.bin_spacing_ns
            + (self.banks - 1) as f64 * self.bank_delay_ns
            + self.trigger_window_ns;
        if last >= self.pulse_period_ns {
            return fail(format!(
                "latest bin ends at {last} ns, beyond the pulse period {} ns",
                self.pulse_period_ns
            ));
        }
        Ok(())
    }

    /// Physical detector and time slot of bin `j`.
    pub fn locate(&self, bin: usize) -> (usize, usize) {
        (bin % self.detectors_per_bank, bin / self.detectors_per_bank)
    }

    pub fn bin_of(&self, detector: usize, slot: usize) -> usize {
        slot * self.detectors_per_bank + detector
    }

    /// Arrival time of bin `j` of `bank` after the trigger.
    pub fn bin_time_ns(&self, bank: usize, bin: usize) -> f64 {
        let (_, slot) = self.locate(bin);
        slot as f64 * self.bin_spacing_ns + bank as f64 * self.bank_delay_ns
    }

    /// True when no click can ever fall into a dead window.
    pub fn is_censoring_free(&self) -> bool {
        self.bin_spacing_ns >= self.dead_time_ns
    }
}

/// Clicked bins of one pulse. Bit `j` of `clicks[bank]` is bin `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClickRecord {
    pub pulse_index: u64,
    pub clicks: [u64; 2],
}

impl ClickRecord {
    pub fn bins(&self, bank: usize) -> impl Iterator<Item = usize> {
        bits(self.clicks[bank])
    }

    pub fn is_empty(&self) -> bool {
        self.clicks == [0, 0]
    }
}

/// Click records of a run. Only pulses with at least one click are stored;
/// `pulses` counts every pulse, empty or not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickRun {
    pub banks: usize,
    pub modes: usize,
    pub pulses: u64,
    pub records: Vec<ClickRecord>,
}

impl ClickRun {
    /// Per-bin click counts of one bank.
    pub fn singles(&self, bank: usize) -> Vec<u64> {
        let mut counts = vec![0u64; self.modes];
        for r in &self.records {
            for j in r.bins(bank) {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Per-bin click frequencies of one bank.
    pub fn click_rates(&self, bank: usize) -> Vec<f64> {
        self.singles(bank)
            .into_iter()
            .map(|c| c as f64 / self.pulses as f64)
            .collect()
    }

    /// Histogram of exact click patterns of one bank over all pulses.
    pub fn pattern_histogram(&self, bank: usize) -> Vec<u64> {
        let mut hist = vec![0u64; 1 << self.modes.min(16)];
        let mut nonempty = 0;
        for r in &self.records {
            let p = r.clicks[bank] as usize;
            if p != 0 {
                hist[p] += 1;
                nonempty += 1;
            }
        }
        hist[0] = self.pulses - nonempty;
        hist
    }
}

/// Binary response of the detectors to routed photon numbers: bin `j`
/// clicks with probability `1 - (1-d_j)(1-eta_j)^count_j`.
pub fn clicks_from_counts<R: Rng + ?Sized>(counts: &[u32], spec: &CascadeSpec, rng: &mut R) -> u64 {
    let mut mask = 0u64;
    for (j, (&c, det)) in counts.iter().zip(spec.detectors()).enumerate() {
        if c == 0 && det.dark_click == 0.0 {
            continue;
        }
        let silent = det.no_click_probability(c);
        if rng.random::<f64>() >= silent {
            mask |= 1 << j;
        }
    }
    mask
}

/// Removes clicks that fall into the dead time of an earlier kept click on
/// the same physical detector.
pub fn apply_dead_time(clicks: u64, layout: &TmdLayout) -> u64 {
    if layout.is_censoring_free() {
        return clicks;
    }
    let mut kept = 0u64;
    for detector in 0..layout.detectors_per_bank {
        let mut last_kept: Option<f64> = None;
        for slot in 0..layout.bins_per_detector {
            let bin = layout.bin_of(detector, slot);
            if clicks >> bin & 1 == 0 {
                continue;
            }
            let t = slot as f64 * layout.bin_spacing_ns;
            if let Some(t0) = last_kept {
                if t - t0 < layout.dead_time_ns {
                    continue;
                }
            }
            kept |= 1 << bin;
            last_kept = Some(t);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub pulses: u64,
    pub seed: u64,
    /// Apply dead-time censoring.
    pub censor: bool,
}

impl RunOptions {
    pub fn new(pulses: u64, seed: u64) -> Self {
        Self { pulses, seed, censor: true }
    }
}

/// Random stream for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs the full pulse pipeline: sample photons, route each bank through its
/// cascade, click, censor, record.
///
/// Pulses are processed in chunks of [`CHUNK_PULSES`] with one random stream
/// per chunk, so the output depends only on the seed, not on thread count.
pub fn simulate_run(
    sampler: &PulseSampler,
    cascades: &[CascadeSpec],
    layout: &TmdLayout,
    options: RunOptions,
) -> Result<ClickRun, DetectionError> {
    if options.pulses == 0 {
        return Err(DetectionError::NoPulses);
    }
    layout.validate()?;
    if sampler.banks() != cascades.len() || layout.banks != cascades.len() {
        return Err(DetectionError::BankMismatch {
            source_banks: sampler.banks(),
            cascades: cascades.len(),
            layout: layout.banks,
        });
    }
    for c in cascades {
        if c.modes() != layout.modes() {
            return Err(DetectionError::ModeMismatch { cascade: c.modes(), layout: layout.modes() });
        }
    }
    let chunks = options.pulses.div_ceil(CHUNK_PULSES);
    let parts: Vec<Vec<ClickRecord>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK_PULSES;
            let end = (start + CHUNK_PULSES).min(options.pulses);
            simulate_chunk(sampler, cascades, layout, options, start..end, &mut chunk_rng(options.seed, chunk))
        })
        .collect();
    Ok(ClickRun {
        banks: cascades.len(),
        modes: layout.modes(),
        pulses: options.pulses,
        records: parts.concat(),
    })
}

fn simulate_chunk(
    sampler: &PulseSampler,
    cascades: &[CascadeSpec],
    layout: &TmdLayout,
    options: RunOptions,
    pulses: std::ops::Range<u64>,
    rng: &mut ChaCha8Rng,
) -> Vec<ClickRecord> {
    let modes = layout.modes();
    let mut counts = vec![0u32; modes];
    let has_dark: Vec<bool> = cascades
        .iter()
        .map(|c| c.detectors().iter().any(|d| d.dark_click > 0.0))
        .collect();
    let mut out = Vec::new();
    for pulse_index in pulses {
        let photons = match sampler.sample(rng) {
            PulsePhotons::Single(k) => [k, 0],
            PulsePhotons::Pair(a, b) => [a, b],
        };
        let mut clicks = [0u64; 2];
        for (bank, spec) in cascades.iter().enumerate() {
            let k = photons[bank];
            if k == 0 && !has_dark[bank] {
                continue;
            }
            spec.route_photons_into(k, rng, &mut counts);
            let mut mask = clicks_from_counts(&counts, spec, rng);
            if options.censor {
                mask = apply_dead_time(mask, layout);
            }
            clicks[bank] = mask;
        }
        if clicks != [0, 0] {
            out.push(ClickRecord { pulse_index, clicks });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::Detector;
    use proptest::prelude::*;

    fn layout(detectors: usize, spacing: f64, dead: f64) -> TmdLayout {
        let mut l = TmdLayout::with_defaults(1, 3, detectors).unwrap();
        l.bin_spacing_ns = spacing;
        l.dead_time_ns = dead;
        l.trigger_window_ns = spacing / 4.0;
        l.validate().unwrap();
        l
    }

    #[test]
    fn zero_counts_never_click() {
        let spec = CascadeSpec::balanced(2, 0.5, 0.0).unwrap();
        let mut rng = chunk_rng(1, 0);
        assert_eq!(clicks_from_counts(&[0, 0, 0, 0], &spec, &mut rng), 0);
    }

    #[test]
    fn perfect_detector_always_clicks() {
        let spec = CascadeSpec::balanced(2, 1.0, 0.0).unwrap();
        let mut rng = chunk_rng(1, 0);
        for _ in 0..1000 {
            assert_eq!(clicks_from_counts(&[0, 1, 0, 0], &spec, &mut rng), 0b10);
        }
    }

    #[test]
    fn three_photons_at_half_efficiency() {
        let spec = CascadeSpec::balanced(1, 0.5, 0.0).unwrap();
        let mut rng = chunk_rng(2, 0);
        let trials = 1_000_000;
        let hits = (0..trials)
            .filter(|_| clicks_from_counts(&[3, 0], &spec, &mut rng) == 1)
            .count();
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.875).abs() < 0.001, "{freq}");
    }

    #[test]
    fn dark_clicks_fire_without_light() {
        let spec = CascadeSpec::new(vec![vec![0.5]], vec![Detector::new(0.5, 0.2), Detector::new(0.5, 0.0)]).unwrap();
        let mut rng = chunk_rng(3, 0);
        let trials = 200_000;
        let hits = (0..trials).filter(|_| clicks_from_counts(&[0, 0], &spec, &mut rng) == 1).count();
        // sd = sqrt(0.2 * 0.8 / 2e5) ~ 9e-4
        assert!((hits as f64 / trials as f64 - 0.2).abs() < 0.004);
    }

    #[test]
    fn design_point_never_censors() {
        let l = layout(2, 100.0, 50.0);
        for mask in 0..256u64 {
            assert_eq!(apply_dead_time(mask, &l), mask);
        }
    }

    #[test]
    fn short_spacing_censors_consecutive_slots() {
        let l = layout(2, 25.0, 50.0);
        // detector 0 owns bins 0, 2, 4, 6 at slots 0..3
        assert_eq!(apply_dead_time(0b0000_0101, &l), 0b0000_0001);
        // 50 ns later the detector is live again
        assert_eq!(apply_dead_time(0b0001_0001, &l), 0b0001_0001);
        // non-paralyzable: slot 2 is measured from the kept slot 0
        assert_eq!(apply_dead_time(0b0001_0101, &l), 0b0001_0001);
    }

    #[test]
    fn dead_time_is_per_detector() {
        let l = layout(2, 25.0, 50.0);
        // bins 0 and 1 share slot 0 on different detectors
        assert_eq!(apply_dead_time(0b11, &l), 0b11);
    }

    #[test]
    fn layout_validation() {
        let mut l = TmdLayout::with_defaults(2, 3, 2).unwrap();
        assert_eq!(l.bins_per_detector, 4);
        assert_eq!(l.bin_spacing_ns, 2.0 * l.dead_time_ns);
        l.trigger_window_ns = 60.0;
        assert!(l.validate().is_err());
        assert!(TmdLayout::with_defaults(1, 3, 3).is_err());
        let mut l = TmdLayout::with_defaults(2, 3, 2).unwrap();
        l.pulse_period_ns = 500.0;
        assert!(l.validate().is_err());
    }

    #[test]
    fn bank_and_pulse_checks() {
        let spec = CascadeSpec::balanced(3, 0.5, 0.0).unwrap();
        let l = TmdLayout::with_defaults(1, 3, 2).unwrap();
        let sampler = PulseSampler::single(&crate::sources::PhotonNumberDistribution::vacuum());
        assert_eq!(
            simulate_run(&sampler, &[spec.clone()], &l, RunOptions::new(0, 1)),
            Err(DetectionError::NoPulses)
        );
        assert!(matches!(
            simulate_run(&sampler, &[spec.clone(), spec], &l, RunOptions::new(10, 1)),
            Err(DetectionError::BankMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn censoring_is_idempotent(mask in 0u64..256, detectors in prop::sample::select(vec![1usize, 2, 4, 8]), ratio in 0.1f64..3.0) {
            let l = layout(detectors, 20.0, 20.0 / ratio);
            let once = apply_dead_time(mask, &l);
            prop_assert_eq!(apply_dead_time(once, &l), once);
            prop_assert_eq!(once & !mask, 0);
        }
    }
}
