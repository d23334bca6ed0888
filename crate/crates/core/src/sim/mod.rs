//! Monte Carlo model of the pulsed pair source and its two-detector
//! coincidence chain.
//!
//! Each pump pulse emits a Poisson number of pairs with mean
//! `μ = κ·P_avg²`. Every photon of a pair reaches its detector
//! independently with the arm's lumped efficiency, and pulse-synchronous
//! background photons (Raman scattering, leakage) are added per arm. A
//! detector registers at most one click per pulse. Click times carry
//! Gaussian detector jitter and optionally pass through a non-paralyzable
//! dead time before the time-interval analyzer builds its histogram.

mod events;
mod histogram;
mod record;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::error::argument;
use crate::{Error, Result};

pub use events::{merge_streams, read_events_jsonl, split_streams, write_events_jsonl, Channel, DetectionEvent};
pub use histogram::{
    build_histogram, extract_rates, histogram_from_streams, PeakRates, TiaHistogram, TiaPairing, TiaSettings,
};
pub use record::{CountRecord, RawCounts, RecordFile};

/// Fewest pulses a run may contain.
pub const MIN_PULSES: u64 = 1000;

/// Conversion from Gaussian FWHM to standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Background photon model per arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackgroundModel {
    /// Rates proportional to average pump power (counts/s/mW at the
    /// detector).
    LinearInPower { signal_rate_per_mw: f64, idler_rate_per_mw: f64 },
    /// Background held at a fixed fraction `B/N` of each arm's total
    /// singles rate, independent of power.
    ConstantFraction { signal_fraction: f64, idler_fraction: f64 },
}

impl Default for BackgroundModel {
    fn default() -> Self {
        BackgroundModel::LinearInPower { signal_rate_per_mw: 2.0e4, idler_rate_per_mw: 1.4e5 }
    }
}

impl BackgroundModel {
    pub fn none() -> Self {
        BackgroundModel::LinearInPower { signal_rate_per_mw: 0.0, idler_rate_per_mw: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub rep_rate_hz: f64,
    pub pump_avg_power_mw: f64,
    pub pulse_fwhm_s: f64,
    /// `κ` in pairs/pulse/mW², so that `μ = κ·P_avg²`.
    pub pair_yield_coeff: f64,
    pub signal_lumped_eff: f64,
    pub idler_lumped_eff: f64,
    pub background: BackgroundModel,
    pub detector_jitter_fwhm_s: f64,
    /// Non-paralyzable dead time per detector; zero disables it.
    pub dead_time_s: f64,
    pub rng_seed: u64,
    pub tia: TiaSettings,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            rep_rate_hz: 80e6,
            pump_avg_power_mw: 0.54,
            pulse_fwhm_s: 4e-12,
            pair_yield_coeff: 0.65,
            signal_lumped_eff: 0.207,
            idler_lumped_eff: 0.113,
            background: BackgroundModel::default(),
            detector_jitter_fwhm_s: 350e-12,
            dead_time_s: 0.0,
            rng_seed: 1,
            tia: TiaSettings::default(),
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz > 0.0) {
            return Err(argument(format!("repetition rate must be positive, got {}", self.rep_rate_hz)));
        }
        for (name, v) in [("signal_lumped_eff", self.signal_lumped_eff), ("idler_lumped_eff", self.idler_lumped_eff)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(argument(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let non_negative = [
            ("pump_avg_power_mw", self.pump_avg_power_mw),
            ("pair_yield_coeff", self.pair_yield_coeff),
            ("detector_jitter_fwhm_s", self.detector_jitter_fwhm_s),
            ("dead_time_s", self.dead_time_s),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(argument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.pulse_fwhm_s > 0.0 && self.pulse_fwhm_s <= 1.0 / self.rep_rate_hz) {
            return Err(argument(format!(
                "pulse width must lie in (0, 1/rep_rate], got {} s",
                self.pulse_fwhm_s
            )));
        }
        match self.background {
            BackgroundModel::LinearInPower { signal_rate_per_mw, idler_rate_per_mw } => {
                if !(signal_rate_per_mw >= 0.0 && idler_rate_per_mw >= 0.0) {
                    return Err(argument("background rates must be non-negative"));
                }
            }
            BackgroundModel::ConstantFraction { signal_fraction, idler_fraction } => {
                if !((0.0..1.0).contains(&signal_fraction) && (0.0..1.0).contains(&idler_fraction)) {
                    return Err(argument("background fractions must lie in [0, 1)"));
                }
            }
        }
        self.tia.validate(self.rep_rate_hz)
    }

    /// Mean number of pairs created per pulse, `κ·P_avg²`.
    pub fn mean_pairs_per_pulse(&self) -> f64 {
        self.pair_yield_coeff * self.pump_avg_power_mw * self.pump_avg_power_mw
    }

    /// `μ ≥ 1`: most pulses carry several pairs.
    pub fn is_multi_pair_regime(&self) -> bool {
        self.mean_pairs_per_pulse() >= 1.0
    }

    /// Pulse peak power `P_avg / (f·τ)` in watts.
    pub fn peak_power_w(&self) -> f64 {
        self.pump_avg_power_mw * 1e-3 / (self.rep_rate_hz * self.pulse_fwhm_s)
    }

    /// Mean pairs per pulse after changing the pulse width at fixed average
    /// power: pair yield follows the square of peak power, so per pulse it
    /// scales as `τ / τ'`.
    pub fn duty_cycle_scaling(&self, new_pulse_fwhm_s: f64) -> Result<f64> {
        if !(new_pulse_fwhm_s > 0.0) {
            return Err(argument(format!("pulse width must be positive, got {new_pulse_fwhm_s}")));
        }
        Ok(self.mean_pairs_per_pulse() * self.pulse_fwhm_s / new_pulse_fwhm_s)
    }

    /// Copy of this configuration with a different pulse width; the pair
    /// yield is rescaled accordingly and backgrounds are left alone.
    pub fn with_pulse_width(&self, new_pulse_fwhm_s: f64) -> Result<SourceConfig> {
        let mu = self.duty_cycle_scaling(new_pulse_fwhm_s)?;
        let p2 = self.pump_avg_power_mw * self.pump_avg_power_mw;
        Ok(SourceConfig {
            pulse_fwhm_s: new_pulse_fwhm_s,
            pair_yield_coeff: if p2 > 0.0 { mu / p2 } else { self.pair_yield_coeff },
            ..self.clone()
        })
    }

    /// Expected pair-induced singles rate per arm (counts/s), including
    /// the one-click-per-pulse saturation.
    pub fn pair_singles_rates(&self) -> (f64, f64) {
        let mu = self.mean_pairs_per_pulse();
        let f = self.rep_rate_hz;
        (
            -f * (-mu * self.signal_lumped_eff).exp_m1(),
            -f * (-mu * self.idler_lumped_eff).exp_m1(),
        )
    }

    /// Background count rates `(B_s, B_i)` in counts/s.
    pub fn background_rates(&self) -> (f64, f64) {
        match self.background {
            BackgroundModel::LinearInPower { signal_rate_per_mw, idler_rate_per_mw } => (
                signal_rate_per_mw * self.pump_avg_power_mw,
                idler_rate_per_mw * self.pump_avg_power_mw,
            ),
            BackgroundModel::ConstantFraction { signal_fraction, idler_fraction } => {
                let (ns, ni) = self.pair_singles_rates();
                (
                    signal_fraction / (1.0 - signal_fraction) * ns,
                    idler_fraction / (1.0 - idler_fraction) * ni,
                )
            }
        }
    }
}

/// `μ = κ·P_avg²`.
pub fn mean_pairs_per_pulse(config: &SourceConfig) -> f64 {
    config.mean_pairs_per_pulse()
}

/// A registered detector click.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Click {
    pub t_ns: f64,
    pub pulse: u64,
}

/// Quantities known only to the simulator, for checking the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pulses: u64,
    pub pairs_created: u64,
    pub signal_clicks: u64,
    pub idler_clicks: u64,
    /// Pulses on which both detectors registered a click.
    pub same_pulse_coincidences: u64,
    /// `(k, count)`: signal click on pulse `j` with idler click on `j + k`.
    pub pulse_offset_coincidences: Vec<(i64, u64)>,
}

impl GroundTruth {
    /// Mean of the nonzero-offset tallies.
    pub fn mean_offset_coincidences(&self) -> f64 {
        let n = self.pulse_offset_coincidences.len();
        if n == 0 {
            return 0.0;
        }
        self.pulse_offset_coincidences.iter().map(|&(_, c)| c as f64).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub record: CountRecord,
    pub histogram: TiaHistogram,
    pub peaks: PeakRates,
    pub truth: GroundTruth,
    pub signal: Vec<Click>,
    pub idler: Vec<Click>,
}

impl SimulationRun {
    /// Both channels merged into one time-ordered detection stream.
    pub fn events(&self) -> Vec<DetectionEvent> {
        let s: Vec<f64> = self.signal.iter().map(|c| c.t_ns).collect();
        let i: Vec<f64> = self.idler.iter().map(|c| c.t_ns).collect();
        merge_streams(&s, &i)
    }
}

/// Draws from a Poisson distribution with mean `mu` conditioned on a
/// nonzero outcome, by inversion.
fn zero_truncated_poisson<R: Rng>(rng: &mut R, mu: f64) -> u64 {
    let target = -rng.random::<f64>() * (-mu).exp_m1();
    let mut p = mu * (-mu).exp();
    let mut cum = p;
    let mut k = 1u64;
    while cum < target && k < 10_000 {
        k += 1;
        p *= mu / k as f64;
        cum += p;
    }
    k
}

fn detect<R: Rng>(rng: &mut R, photons: u64, efficiency: f64, background: bool) -> bool {
    if background {
        return true;
    }
    if photons == 0 || efficiency <= 0.0 {
        return false;
    }
    let miss = (1.0 - efficiency).powi(photons.min(i32::MAX as u64) as i32);
    rng.random::<f64>() >= miss
}

fn apply_dead_time(clicks: &mut Vec<Click>, dead_time_ns: f64) {
    if dead_time_ns <= 0.0 {
        return;
    }
    let mut last = f64::NEG_INFINITY;
    clicks.retain(|c| {
        if c.t_ns - last >= dead_time_ns {
            last = c.t_ns;
            true
        } else {
            false
        }
    });
}

/// Number of signal clicks on pulse `j` with an idler click on `j + offset`.
fn offset_coincidences(signal: &[Click], idler: &[Click], offset: i64) -> u64 {
    let mut count = 0;
    let mut k = 0;
    for s in signal {
        let target = s.pulse as i64 + offset;
        while k < idler.len() && (idler[k].pulse as i64) < target {
            k += 1;
        }
        if k < idler.len() && idler[k].pulse as i64 == target {
            count += 1;
        }
    }
    count
}

/// Runs the source for `duration_s` seconds of pump pulses.
pub fn simulate_run(config: &SourceConfig, duration_s: f64) -> Result<SimulationRun> {
    if config.rep_rate_hz == 0.0 {
        return Err(argument("repetition rate must be nonzero"));
    }
    config.validate()?;
    if !(duration_s > 0.0) {
        return Err(argument(format!("duration must be positive, got {duration_s} s")));
    }
    let pulses = (duration_s * config.rep_rate_hz).round() as u64;
    if pulses < MIN_PULSES {
        return Err(argument(format!(
            "duration {duration_s} s covers {pulses} pulses; at least {MIN_PULSES} are required"
        )));
    }

    let f = config.rep_rate_hz;
    let period_ns = 1e9 / f;
    let mu = config.mean_pairs_per_pulse();
    let (bg_s, bg_i) = config.background_rates();
    let p_bs = -(-bg_s / f).exp_m1();
    let p_bi = -(-bg_i / f).exp_m1();
    let p_pair = -(-mu).exp_m1();
    let p_active = 1.0 - (1.0 - p_pair) * (1.0 - p_bs) * (1.0 - p_bi);

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let sigma_ns = config.detector_jitter_fwhm_s * 1e9 / FWHM_PER_SIGMA;
    let jitter = Normal::new(0.0, sigma_ns).map_err(|e| argument(e.to_string()))?;

    let mut signal = Vec::new();
    let mut idler = Vec::new();
    let mut pairs_created = 0u64;

    if p_active > 0.0 {
        let skip = Geometric::new(p_active).map_err(|e| Error::Argument(e.to_string()))?;
        let pair_given_active = p_pair / p_active;
        let bs_given_no_pair = p_bs / (1.0 - (1.0 - p_bs) * (1.0 - p_bi));
        let mut pulse = 0u64;
        loop {
            pulse = pulse.saturating_add(skip.sample(&mut rng));
            if pulse >= pulses {
                break;
            }
            let (n, bs, bi) = if rng.random::<f64>() < pair_given_active {
                let n = zero_truncated_poisson(&mut rng, mu);
                (n, rng.random::<f64>() < p_bs, rng.random::<f64>() < p_bi)
            } else {
                // no pair, at least one background photon
                let bs = rng.random::<f64>() < bs_given_no_pair;
                let bi = if bs { rng.random::<f64>() < p_bi } else { true };
                (0, bs, bi)
            };
            pairs_created += n;
            let t0 = (pulse + 1) as f64 * period_ns;
            if detect(&mut rng, n, config.signal_lumped_eff, bs) {
                signal.push(Click { t_ns: t0 + jitter.sample(&mut rng), pulse });
            }
            if detect(&mut rng, n, config.idler_lumped_eff, bi) {
                idler.push(Click { t_ns: t0 + jitter.sample(&mut rng), pulse });
            }
            pulse += 1;
        }
    }

    for clicks in [&mut signal, &mut idler] {
        clicks.sort_by(|a, b| a.t_ns.total_cmp(&b.t_ns));
        apply_dead_time(clicks, config.dead_time_s * 1e9);
    }

    let s_times: Vec<f64> = signal.iter().map(|c| c.t_ns).collect();
    let i_times: Vec<f64> = idler.iter().map(|c| c.t_ns).collect();
    let histogram = histogram_from_streams(&s_times, &i_times, f, &config.tia, duration_s)?;
    let peaks = extract_rates(&histogram, f, config.tia.coincidence_window_s, Some(config.tia.satellites_per_side))?;

    let mut by_pulse_s = signal.clone();
    let mut by_pulse_i = idler.clone();
    by_pulse_s.sort_by_key(|c| c.pulse);
    by_pulse_i.sort_by_key(|c| c.pulse);
    let k_max = config.tia.satellites_per_side as i64;
    let truth = GroundTruth {
        pulses,
        pairs_created,
        signal_clicks: signal.len() as u64,
        idler_clicks: idler.len() as u64,
        same_pulse_coincidences: offset_coincidences(&by_pulse_s, &by_pulse_i, 0),
        pulse_offset_coincidences: (-k_max..=k_max)
            .filter(|&k| k != 0)
            .map(|k| (k, offset_coincidences(&by_pulse_s, &by_pulse_i, k)))
            .collect(),
    };

    let record = CountRecord {
        pump_power_mw: Some(config.pump_avg_power_mw),
        duration_s,
        n_s: signal.len() as f64 / duration_s,
        n_i: idler.len() as f64 / duration_s,
        c_raw: peaks.c_raw,
        c_b: peaks.c_b,
        raw_counts: Some(RawCounts {
            signal: signal.len() as u64,
            idler: idler.len() as u64,
            central: peaks.central_counts,
            satellite_sum: peaks.satellite_counts.iter().map(|&(_, c)| c).sum(),
            satellite_windows: peaks.satellite_counts.len() as u32,
        }),
    };

    Ok(SimulationRun { record, histogram, peaks, truth, signal, idler })
}

/// Runs one simulation per power with seeds `base_seed + index`, in
/// parallel; results come back in ladder order.
pub fn simulate_ladder(config: &SourceConfig, powers_mw: &[f64], duration_s: f64) -> Result<Vec<SimulationRun>> {
    use rayon::prelude::*;
    powers_mw
        .par_iter()
        .enumerate()
        .map(|(idx, &p)| {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(argument(format!("invalid pump power {p} mW")));
            }
            let cfg = SourceConfig {
                pump_avg_power_mw: p,
                rng_seed: config.rng_seed.wrapping_add(idx as u64),
                ..config.clone()
            };
            simulate_run(&cfg, duration_s)
        })
        .collect()
}
