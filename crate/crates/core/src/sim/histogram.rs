use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::events::{split_streams, DetectionEvent};
use crate::error::argument;
use crate::Result;

/// How stops are matched to each start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiaPairing {
    /// Every stop inside the histogram span is recorded against the start
    /// (time-tagger correlation).
    AllStops,
    /// Only the first stop after the start is recorded, with the stop line
    /// delayed by half the span so negative intervals are visible. A stop in
    /// an earlier pulse masks later ones.
    FirstStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiaSettings {
    pub bin_width_s: f64,
    /// Full width of the integration window around each peak.
    pub coincidence_window_s: f64,
    /// Satellite peaks shown (and averaged) on each side of the central peak.
    pub satellites_per_side: usize,
    pub pairing: TiaPairing,
}

impl Default for TiaSettings {
    fn default() -> Self {
        Self {
            bin_width_s: 25e-12,
            coincidence_window_s: 2e-9,
            satellites_per_side: 4,
            pairing: TiaPairing::AllStops,
        }
    }
}

impl TiaSettings {
    pub fn validate(&self, rep_rate_hz: f64) -> Result<()> {
        let period = 1.0 / rep_rate_hz;
        if !(self.bin_width_s > 0.0 && self.bin_width_s <= period / 10.0) {
            return Err(argument(format!(
                "TIA bin width must lie in (0, period/10], got {} s",
                self.bin_width_s
            )));
        }
        if !(self.coincidence_window_s > 0.0 && self.coincidence_window_s <= period / 2.0) {
            return Err(argument(format!(
                "coincidence window must lie in (0, period/2], got {} s",
                self.coincidence_window_s
            )));
        }
        if self.satellites_per_side < 2 {
            return Err(argument("at least 2 satellite peaks per side are required"));
        }
        Ok(())
    }

    /// Half-span of the histogram: `satellites + 1/2` pulse periods.
    pub fn half_span_s(&self, rep_rate_hz: f64) -> f64 {
        (self.satellites_per_side as f64 + 0.5) / rep_rate_hz
    }
}

/// Start(signal)–stop(idler) interval histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiaHistogram {
    pub bin_width_s: f64,
    /// Lower edge of bin 0.
    pub origin_s: f64,
    pub bins: Vec<u64>,
    /// Acquisition time the counts were collected over.
    pub duration_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct HistogramRow {
    bin_center_ns: f64,
    counts: u64,
}

impl TiaHistogram {
    pub fn bin_center_s(&self, i: usize) -> f64 {
        self.origin_s + (i as f64 + 0.5) * self.bin_width_s
    }

    pub fn span_s(&self) -> (f64, f64) {
        (self.origin_s, self.origin_s + self.bins.len() as f64 * self.bin_width_s)
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Counts in bins whose centres lie in `[lo, hi)`.
    pub fn counts_between(&self, lo_s: f64, hi_s: f64) -> u64 {
        self.bins
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let c = self.bin_center_s(*i);
                c >= lo_s && c < hi_s
            })
            .map(|(_, &n)| n)
            .sum()
    }

    /// Count-weighted mean interval of the bins within `half_width_s` of
    /// `center_s`.
    pub fn centroid_s(&self, center_s: f64, half_width_s: f64) -> Option<f64> {
        let (mut w, mut sum) = (0.0, 0.0);
        for (i, &n) in self.bins.iter().enumerate() {
            let c = self.bin_center_s(i);
            if (c - center_s).abs() < half_width_s {
                w += n as f64;
                sum += n as f64 * c;
            }
        }
        (w > 0.0).then(|| sum / w)
    }

    /// Full width at half maximum of the peak nearest `center_s`, searching
    /// `± half_width_s`, with linear interpolation between bins.
    pub fn peak_fwhm_s(&self, center_s: f64, half_width_s: f64) -> Option<f64> {
        let idx: Vec<usize> = (0..self.bins.len())
            .filter(|&i| (self.bin_center_s(i) - center_s).abs() < half_width_s)
            .collect();
        let &peak = idx.iter().max_by_key(|&&i| self.bins[i])?;
        let max = self.bins[peak] as f64;
        if max == 0.0 {
            return None;
        }
        let half = 0.5 * max;
        let (first, last) = (*idx.first()?, *idx.last()?);
        let mut left = None;
        let mut i = peak;
        while i > first {
            let (hi, lo) = (self.bins[i] as f64, self.bins[i - 1] as f64);
            if lo < half {
                let frac = (hi - half) / (hi - lo);
                left = Some(self.bin_center_s(i) - frac * self.bin_width_s);
                break;
            }
            i -= 1;
        }
        let mut right = None;
        let mut i = peak;
        while i < last {
            let (hi, lo) = (self.bins[i] as f64, self.bins[i + 1] as f64);
            if lo < half {
                let frac = (hi - half) / (hi - lo);
                right = Some(self.bin_center_s(i) + frac * self.bin_width_s);
                break;
            }
            i += 1;
        }
        Some(right? - left?)
    }

    /// Writes `bin_center_ns,counts` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, &counts) in self.bins.iter().enumerate() {
            w.serialize(HistogramRow { bin_center_ns: self.bin_center_s(i) * 1e9, counts })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a histogram CSV. Bin width and origin are recovered from the
    /// first two bin centres; the duration is supplied by the caller.
    pub fn read_csv<R: Read>(reader: R, duration_s: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<HistogramRow>, _>>()?;
        if rows.len() < 2 {
            return Err(argument("histogram CSV needs at least two bins"));
        }
        let bin_width_s = (rows[1].bin_center_ns - rows[0].bin_center_ns) * 1e-9;
        if !(bin_width_s > 0.0) {
            return Err(argument("histogram bin centres must increase"));
        }
        Ok(Self {
            bin_width_s,
            origin_s: rows[0].bin_center_ns * 1e-9 - 0.5 * bin_width_s,
            bins: rows.iter().map(|r| r.counts).collect(),
            duration_s,
        })
    }
}

/// Histogram of idler-minus-signal intervals from two time-ordered streams
/// (times in ns).
pub fn histogram_from_streams(
    starts_ns: &[f64],
    stops_ns: &[f64],
    rep_rate_hz: f64,
    settings: &TiaSettings,
    duration_s: f64,
) -> Result<TiaHistogram> {
    settings.validate(rep_rate_hz)?;
    let half_ns = settings.half_span_s(rep_rate_hz) * 1e9;
    let width_ns = settings.bin_width_s * 1e9;
    let n_bins = (2.0 * half_ns / width_ns).ceil() as usize;
    let mut bins = vec![0u64; n_bins];
    let mut record = |dt: f64| {
        let idx = ((dt + half_ns) / width_ns).floor();
        if idx >= 0.0 && (idx as usize) < n_bins {
            bins[idx as usize] += 1;
        }
    };

    let mut first = 0usize;
    for &start in starts_ns {
        while first < stops_ns.len() && stops_ns[first] < start - half_ns {
            first += 1;
        }
        match settings.pairing {
            TiaPairing::AllStops => {
                for &stop in &stops_ns[first..] {
                    if stop >= start + half_ns {
                        break;
                    }
                    record(stop - start);
                }
            }
            TiaPairing::FirstStop => {
                if let Some(&stop) = stops_ns.get(first) {
                    if stop < start + half_ns {
                        record(stop - start);
                    }
                }
            }
        }
    }

    Ok(TiaHistogram {
        bin_width_s: settings.bin_width_s,
        origin_s: -half_ns * 1e-9,
        bins,
        duration_s,
    })
}

/// Histogram from a merged event stream, with signal as start and idler as
/// stop. An empty stream gives an empty (all-zero) histogram.
pub fn build_histogram(
    events: &[DetectionEvent],
    rep_rate_hz: f64,
    bin_width_s: f64,
    duration_s: f64,
) -> Result<TiaHistogram> {
    let settings = TiaSettings { bin_width_s, ..TiaSettings::default() };
    let (s, i) = split_streams(events);
    histogram_from_streams(&s, &i, rep_rate_hz, &settings, duration_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRates {
    /// Central-peak rate (counts/s).
    pub c_raw: f64,
    /// Mean satellite-peak rate (counts/s).
    pub c_b: f64,
    pub central_counts: u64,
    /// `(k, counts)` for the satellite centred on `k / rep_rate`.
    pub satellite_counts: Vec<(i64, u64)>,
}

/// Integrates the central peak and the satellites over windows of full
/// width `window_s`. All satellites that fit inside the histogram are used
/// unless `max_satellites_per_side` limits them.
pub fn extract_rates(
    hist: &TiaHistogram,
    rep_rate_hz: f64,
    window_s: f64,
    max_satellites_per_side: Option<usize>,
) -> Result<PeakRates> {
    let period = 1.0 / rep_rate_hz;
    if !(window_s > 0.0 && window_s <= period / 2.0) {
        return Err(argument(format!(
            "coincidence window {window_s} s must be positive and at most half the pulse period"
        )));
    }
    if !(hist.duration_s > 0.0) {
        return Err(argument("histogram duration must be positive"));
    }
    let (lo, hi) = hist.span_s();
    let half = 0.5 * window_s;
    let eps = 1e-6 * hist.bin_width_s;
    let fits = |center: f64| center - half >= lo - eps && center + half <= hi + eps;
    if !fits(0.0) {
        return Err(argument("histogram does not cover the central peak window"));
    }
    let limit = max_satellites_per_side.map_or(i64::MAX, |n| n as i64);
    let mut per_side = 0i64;
    while per_side < limit && fits((per_side + 1) as f64 * period) && fits(-((per_side + 1) as f64) * period) {
        per_side += 1;
    }
    if per_side < 2 {
        return Err(argument("need at least two satellite peaks on each side of the central peak"));
    }
    let window = |center: f64| hist.counts_between(center - half, center + half);
    let central_counts = window(0.0);
    let satellite_counts: Vec<(i64, u64)> = (-per_side..=per_side)
        .filter(|&k| k != 0)
        .map(|k| (k, window(k as f64 * period)))
        .collect();
    let mean_sat = satellite_counts.iter().map(|&(_, c)| c as f64).sum::<f64>() / satellite_counts.len() as f64;
    Ok(PeakRates {
        c_raw: central_counts as f64 / hist.duration_s,
        c_b: mean_sat / hist.duration_s,
        central_counts,
        satellite_counts,
    })
}
